"""
Test package for rkcq-scatter.
"""
