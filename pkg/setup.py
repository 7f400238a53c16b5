from setuptools import setup, find_packages
import os

# Function to read the README file.
def read(fname):
    return open(os.path.join(os.path.dirname(__file__), fname)).read()

setup(
    name="rkcq-scatter",
    version="0.2.1",
    author="rkcq-scatter developers",
    description="Runge-Kutta convolution quadrature with a 2D Galerkin BEM for sound-soft wave scattering",
    long_description=read('README.md') if os.path.exists('README.md') else "Runge-Kutta convolution quadrature for time-domain boundary integral equations.",
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests*", "*.tests", "*.tests.*", "tests", "examples*"]),
    classifiers=[
        "Development Status :: 3 - Alpha",
        "Intended Audience :: Science/Research",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.21",  # arrays, FFTs, dense linear algebra
        "scipy>=1.9",  # Bessel functions, LU and generalized eigensolvers, quad
        "pydantic>=2.0,<3.0",  # run configuration validation
        "pandas>=1.5",  # CSV result files
        "matplotlib>=3.5",  # convergence plots
        "mpmath>=1.2",  # high-precision Radau IIA construction
    ],
    extras_require={
        "dev": [
            "pytest>=7.0",
            "pytest-cov>=4.0",
            "pytest-mock>=3.10",
            "flake8>=3.9",
        ],
    },
    entry_points={
        "console_scripts": [
            "rkcq-scatter=rkcq_scatter.cli:main",
        ],
    },
)
