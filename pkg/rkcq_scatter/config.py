"""
Run configuration for the experiment driver.

Configs are flat ``key = value`` text files; ``#`` starts a comment. Lists are
comma separated, vertex lists are ``x y; x y; ...`` and complex numbers use
Python syntax (``2+1j``). Every key is validated by :class:`RunConfig` before
any computation starts, and unknown keys are rejected.
"""
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .bem2d import L_SHAPE_VERTICES, UNIT_SQUARE_VERTICES, BoundarySpace, mesh_polygon
from .butcher import ButcherTableau, available_tableaux, get_tableau
from .exceptions import ConfigurationError
from .kernels import FrequencyPoint
from .timedomain import METHODS, IncidentWave

GEOMETRIES = {"lshape": L_SHAPE_VERTICES, "square": UNIT_SQUARE_VERTICES}


def parse_key_values(text: str) -> Dict[str, str]:
    """Split config text into raw string values; duplicate keys are an error."""
    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError(f"Line {number}: expected 'key = value', got '{raw.strip()}'")
        if key in values:
            raise ConfigurationError(f"Line {number}: key '{key}' given twice")
        values[key] = value.strip()
    return values


def _split(value: Any, sep: str = ",") -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(sep) if item.strip()]
    return value


class RunConfig(BaseModel):
    """All parameters of a run, with the defaults of the L-shape experiment."""
    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True, validate_assignment=True)

    # geometry and discretization
    geometry: Literal["lshape", "square", "custom"] = "lshape"
    vertices: Optional[List[Tuple[float, float]]] = None
    target_h: float = Field(default=0.125, gt=0, description="Maximal panel length.")
    grading: float = Field(default=2.0, ge=1.0, description="Power-rule grading exponent toward corners.")
    panels_per_side: int = Field(default=4, ge=1, description="Minimum graded panels per corner side.")
    degree: int = Field(default=5, ge=0, le=12, description="Polynomial degree of the trace space.")

    # time stepping
    tableau: str = "radau-iia-3"
    methods: List[str] = Field(default_factory=lambda: list(METHODS))
    final_time: float = Field(default=12.0, gt=0)
    ladder: List[int] = Field(default_factory=lambda: [48, 96, 192, 384, 768])
    radius: Optional[float] = Field(default=None, description="Contour radius; None selects it from N.")
    oversampling: int = Field(default=1, ge=1)
    threads: int = Field(default=1, ge=1)

    # incident wave
    direction: Tuple[float, float] = (float(np.sqrt(0.5)), float(np.sqrt(0.5)))
    tau0: float = 4.0
    alpha: float = Field(default=0.05, gt=0)

    # error reporting
    normalize_errors: bool = False
    floor_factor: float = Field(default=10.0, ge=0)

    # sector scan
    sigma0: float = Field(default=1.0, gt=0, description="Sector abscissa; must be positive.")
    delta: float = Field(default=0.2, ge=0, lt=float(np.pi / 2))
    s_moduli: List[float] = Field(default_factory=lambda: [4.0, 8.0, 16.0, 32.0, 64.0],
                                  description="Real parts of the scan points; |s| on the real axis.")
    n_angles: int = Field(default=1, ge=1)
    scan_indirect: bool = False

    # manufactured solution
    source_point: Tuple[float, float] = (2.0, 2.0)
    manufactured_s: complex = 2 + 1j
    refinements: int = Field(default=2, ge=0)

    out_dir: str = "results"

    @field_validator("vertices", mode="before")
    @classmethod
    def parse_vertices(cls, v):
        if isinstance(v, str):
            return [tuple(float(x) for x in pair.split()) for pair in v.split(";") if pair.strip()]
        return v

    @field_validator("methods", "ladder", "s_moduli", "direction", "source_point", mode="before")
    @classmethod
    def parse_lists(cls, v):
        return _split(v)

    @field_validator("radius", mode="before")
    @classmethod
    def parse_radius(cls, v):
        if isinstance(v, str) and v.strip().lower() == "auto":
            return None
        return v

    @field_validator("manufactured_s", mode="before")
    @classmethod
    def parse_complex(cls, v):
        try:
            return complex(v.replace(" ", "")) if isinstance(v, str) else complex(v)
        except (TypeError, ValueError):
            raise ValueError(f"'{v}' is not a complex number")

    @field_validator("tableau")
    @classmethod
    def check_tableau(cls, v: str) -> str:
        v = v.strip().lower()
        if v not in available_tableaux():
            raise ValueError(f"unknown tableau '{v}', available: {', '.join(available_tableaux())}")
        return v

    @field_validator("methods")
    @classmethod
    def check_methods(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError("at least one method is required")
        for method in v:
            if method not in METHODS:
                raise ValueError(f"unknown method '{method}', expected one of {METHODS}")
        return v

    @field_validator("ladder")
    @classmethod
    def check_ladder(cls, v: List[int]) -> List[int]:
        if not v or any(n < 1 for n in v):
            raise ValueError("ladder must be a non-empty list of positive step counts")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("ladder must be strictly increasing")
        return v

    @field_validator("radius")
    @classmethod
    def check_radius(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not 0.0 < v < 1.0:
            raise ValueError(f"radius must lie in (0, 1), got {v}")
        return v

    @field_validator("direction")
    @classmethod
    def check_direction(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        if abs(np.hypot(*v) - 1.0) > 1e-12:
            raise ValueError(f"direction must be a unit vector, got {v}")
        return v

    @field_validator("s_moduli")
    @classmethod
    def check_moduli(cls, v: List[float]) -> List[float]:
        if not v or any(m <= 0 for m in v):
            raise ValueError("s_moduli must be a non-empty list of positive numbers")
        return v

    @field_validator("manufactured_s")
    @classmethod
    def check_frequency(cls, v: complex) -> complex:
        if v.real <= 0:
            raise ValueError(f"manufactured_s must satisfy Re s > 0, got {v}")
        return v

    @model_validator(mode="after")
    def check_geometry(self) -> "RunConfig":
        if self.geometry == "custom" and not self.vertices:
            raise ValueError("geometry 'custom' requires a vertex list")
        if self.geometry != "custom" and self.vertices:
            raise ValueError(f"vertices given but geometry is '{self.geometry}'; use geometry = custom")
        return self

    @model_validator(mode="after")
    def check_scan_abscissa(self) -> "RunConfig":
        low = [m for m in self.s_moduli if m <= self.sigma0]
        if low:
            raise ValueError(f"s_moduli {low} do not exceed the sector abscissa sigma0={self.sigma0}")
        return self

    # -- construction ------------------------------------------------------

    @classmethod
    def from_text(cls, text: str, **overrides) -> "RunConfig":
        values: Dict[str, Any] = parse_key_values(text)
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**values)
        except ValidationError as exc:
            raise ConfigurationError("Invalid run configuration", exc)

    @classmethod
    def from_file(cls, path: Union[str, Path], **overrides) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigurationError(f"Cannot read config file '{path}'", exc)
        return cls.from_text(text, **overrides)

    def resolved_vertices(self) -> List[Tuple[float, float]]:
        if self.geometry == "custom":
            return list(self.vertices)
        return [tuple(v) for v in GEOMETRIES[self.geometry]]

    def build_space(self, refinement: int = 0) -> BoundarySpace:
        boundary = mesh_polygon(self.resolved_vertices(), self.target_h / 2 ** refinement,
                                self.grading, self.panels_per_side)
        return BoundarySpace(boundary, self.degree)

    def build_tableau(self) -> ButcherTableau:
        return get_tableau(self.tableau)

    def build_wave(self) -> IncidentWave:
        return IncidentWave(tuple(self.direction), self.tau0, self.alpha)

    def scan_frequencies(self) -> List[complex]:
        """
        s = m (1 + i tan theta) for every m in ``s_moduli``. The angles are the
        midpoints of ``n_angles`` equal pieces of (-(pi/2 - delta), pi/2 - delta),
        so every point lies strictly inside the sector and theta = 0 when
        ``n_angles`` is odd.
        """
        opening = np.pi / 2 - self.delta
        angles = -opening + (np.arange(self.n_angles) + 0.5) * 2.0 * opening / self.n_angles
        points = [complex(m * (1.0 + 1j * np.tan(theta))) for m in self.s_moduli for theta in angles]
        outside = [s for s in points if not FrequencyPoint(s, self.sigma0, self.delta).in_sector()]
        if outside:
            raise ConfigurationError(f"Scan points {outside} lie outside the sector "
                                     f"(sigma0={self.sigma0}, delta={self.delta})")
        return points

    # -- echo --------------------------------------------------------------

    def to_text(self) -> str:
        """Every key with its resolved value, in the format :meth:`from_text` reads."""
        def fmt(value) -> str:
            if value is None:
                return "auto"
            if isinstance(value, bool):
                return "true" if value else "false"
            if isinstance(value, complex):
                return repr(value).strip("()")
            if isinstance(value, float):
                return repr(value)
            if isinstance(value, (list, tuple)):
                if value and isinstance(value[0], (list, tuple)):
                    return "; ".join(" ".join(repr(float(x)) for x in pair) for pair in value)
                return ",".join(fmt(x) for x in value)
            return str(value)

        lines = [f"{name} = {fmt(getattr(self, name))}" for name in type(self).model_fields
                 if not (name == "vertices" and self.vertices is None)]
        return "\n".join(lines) + "\n"

    def write_resolved(self, directory: Union[str, Path]) -> Path:
        path = Path(directory) / "resolved-config.txt"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text())
        return path


__all__ = ["RunConfig", "parse_key_values", "GEOMETRIES"]
