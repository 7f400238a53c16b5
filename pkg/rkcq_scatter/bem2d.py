"""
Galerkin boundary elements on polygons for -Delta + s^2.

The trace space is discontinuous piecewise polynomial: on panel p the basis is
P_l(2t - 1), l = 0..degree, with t in [0, 1] the panel parameter. Operators:

* V(s), the single layer, kernel Phi(x - y; s),
* K(s), the double layer, kernel d/dnu(y) Phi(x - y; s),
* M, the mass matrix, and S, the panelwise arclength stiffness.

Sign conventions (normal nu points out of the bounded domain Omega^-):

    side       DtN(s)                  DtI(s)
    interior   V^-1 ( 1/2 M + K) g     DtN^- g - s g
    exterior   V^-1 (-1/2 M + K) g     DtN^+ g + s g

so that DtN^- - DtN^+ = V^-1 M and DtI^- - DtI^+ = V^-1 M - 2s.
"""
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import legendre
from scipy import linalg

from . import get_rkcq_logger
from .cq import Symbol
from .exceptions import (
    AssemblyError,
    ContractError,
    DomainError,
    GeometryError,
    LinearAlgebraError,
    MatrixIntegrityError,
)
from .kernels import INV_2PI, _k0_k1, fundamental_solution, fundamental_solution_gradient_2d

logger = get_rkcq_logger(__name__)

L_SHAPE_VERTICES = ((0.5, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.5), (0.5, 0.5))
UNIT_SQUARE_VERTICES = ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))

SIDES = ("interior", "exterior")


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Panel:
    """A straight boundary segment traversed from ``start`` to ``end``."""
    start: Tuple[float, float]
    end: Tuple[float, float]
    corner_at_start: bool = False
    corner_at_end: bool = False

    @property
    def length(self) -> float:
        return float(np.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1]))

    @property
    def tangent(self) -> np.ndarray:
        return (np.asarray(self.end) - np.asarray(self.start)) / self.length

    @property
    def normal(self) -> np.ndarray:
        """Tangent rotated clockwise; outward for counterclockwise polygons."""
        t = self.tangent
        return np.array([t[1], -t[0]])


def _cross(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _segments_intersect(a, b, c, d, tol: float = 1e-14) -> bool:
    d1 = _cross(b - a, c - a)
    d2 = _cross(b - a, d - a)
    d3 = _cross(d - c, a - c)
    d4 = _cross(d - c, b - c)
    if ((d1 > tol and d2 < -tol) or (d1 < -tol and d2 > tol)) and \
       ((d3 > tol and d4 < -tol) or (d3 < -tol and d4 > tol)):
        return True

    def on_segment(p, q, r):
        return (min(p[0], q[0]) - tol <= r[0] <= max(p[0], q[0]) + tol and
                min(p[1], q[1]) - tol <= r[1] <= max(p[1], q[1]) + tol)

    return ((abs(d1) <= tol and on_segment(a, b, c)) or (abs(d2) <= tol and on_segment(a, b, d)) or
            (abs(d3) <= tol and on_segment(c, d, a)) or (abs(d4) <= tol and on_segment(c, d, b)))


@dataclass(frozen=True, eq=False)
class PolygonBoundary:
    """
    A closed polygonal boundary split into panels, counterclockwise, so
    that panel normals point out of the enclosed domain.
    """
    vertices: np.ndarray
    panels: Tuple[Panel, ...]
    panels_per_edge: Tuple[int, ...]
    target_h: float
    grading: float
    min_panels_per_side: int

    @property
    def n_panels(self) -> int:
        return len(self.panels)

    @cached_property
    def starts(self) -> np.ndarray:
        return np.array([p.start for p in self.panels], dtype=float)

    @cached_property
    def ends(self) -> np.ndarray:
        return np.array([p.end for p in self.panels], dtype=float)

    @cached_property
    def edges(self) -> np.ndarray:
        return self.ends - self.starts

    @cached_property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.edges, axis=1)

    @cached_property
    def normals(self) -> np.ndarray:
        t = self.edges / self.lengths[:, None]
        return np.stack([t[:, 1], -t[:, 0]], axis=1)

    @property
    def perimeter(self) -> float:
        return float(self.lengths.sum())

    @property
    def max_h(self) -> float:
        return float(self.lengths.max())

    def validate(self) -> None:
        """Closed chain, consistent normals, counterclockwise orientation."""
        P = self.n_panels
        gaps = np.linalg.norm(self.ends - self.starts[np.r_[1:P, 0]], axis=1)
        if np.max(gaps) > 1e-12:
            raise GeometryError("Panel chain is not closed")
        t = self.edges / self.lengths[:, None]
        if np.max(np.abs(np.sum(t * self.normals, axis=1))) > 1e-12:
            raise GeometryError("Panel normals are not orthogonal to their tangents")
        if _signed_area(self.vertices) <= 0:
            raise GeometryError("Boundary is not oriented counterclockwise")

    def to_text(self) -> str:
        verts = "; ".join(f"{x:.17g} {y:.17g}" for x, y in self.vertices)
        return "\n".join([
            f"vertices = {verts}",
            f"target_h = {self.target_h:.17g}",
            f"grading = {self.grading:.17g}",
            f"min_panels_per_side = {self.min_panels_per_side}",
            f"panels_per_edge = {','.join(str(n) for n in self.panels_per_edge)}",
        ])

    @classmethod
    def from_text(cls, text: str) -> "PolygonBoundary":
        values = _parse_key_values(text)
        try:
            vertices = [tuple(float(v) for v in pair.split()) for pair in values["vertices"].split(";")]
            boundary = mesh_polygon(vertices, float(values["target_h"]), float(values["grading"]),
                                    int(values["min_panels_per_side"]))
        except KeyError as exc:
            raise GeometryError(f"Mesh description is missing key {exc}")
        expected = values.get("panels_per_edge")
        if expected is not None:
            counts = tuple(int(n) for n in expected.split(","))
            if counts != boundary.panels_per_edge:
                raise GeometryError(
                    f"Remeshing produced panels per edge {boundary.panels_per_edge}, description says {counts}"
                )
        return boundary


def _parse_key_values(text: str) -> Dict[str, str]:
    values = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise GeometryError(f"Malformed line '{raw}'")
        values[key.strip()] = value.strip()
    return values


def _signed_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _edge_fractions(length: float, target_h: float, grading: float, min_per_side: int) -> np.ndarray:
    """Panel endpoints on one edge as fractions of its length, 0 and 1 included."""
    if grading == 1.0:
        n = max(1, int(np.ceil(length / target_h - 1e-12)))
        return np.linspace(0.0, 1.0, n + 1)
    half = 0.5 * length
    n = max(1, min_per_side)
    while half * (1.0 - ((n - 1) / n) ** grading) > target_h * (1.0 + 1e-12):
        n += 1
    side = 0.5 * (np.arange(n + 1) / n) ** grading
    return np.concatenate([side, 1.0 - side[-2::-1]])


def mesh_polygon(vertices: Sequence[Sequence[float]], target_h: float, grading: float = 1.0,
                 min_panels_per_side: int = 4) -> PolygonBoundary:
    """
    Split every polygon edge into panels no longer than ``target_h``.

    With ``grading`` > 1 each edge is treated as two halves whose panel
    endpoints lie at distances (L/2)(i/n)^grading from the nearer corner,
    with at least ``min_panels_per_side`` panels per half.
    """
    verts = np.asarray(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
        raise GeometryError(f"A polygon needs at least three 2D vertices, got shape {verts.shape}")
    if not target_h > 0:
        raise GeometryError(f"target_h must be positive, got {target_h}")
    if grading < 1.0:
        raise GeometryError(f"Grading exponent must be at least 1, got {grading}")

    n = verts.shape[0]
    edges = np.roll(verts, -1, axis=0) - verts
    lengths = np.linalg.norm(edges, axis=1)
    if np.any(lengths <= 1e-14):
        raise GeometryError("Polygon has repeated consecutive vertices")
    for i in range(n):
        e_in, e_out = edges[i - 1], edges[i]
        if abs(_cross(e_in, e_out)) <= 1e-14 * lengths[i - 1] * lengths[i]:
            raise GeometryError(f"Edges meeting at vertex {i} are collinear")
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(verts[i], verts[(i + 1) % n], verts[j], verts[(j + 1) % n]):
                raise GeometryError(f"Polygon edges {i} and {j} intersect")

    area = _signed_area(verts)
    if area < 0:
        logger.warning("Polygon vertices are clockwise; reversing to counterclockwise order")
        verts = verts[::-1].copy()
        edges = np.roll(verts, -1, axis=0) - verts
        lengths = np.linalg.norm(edges, axis=1)

    panels: List[Panel] = []
    counts = []
    for i in range(n):
        fractions = _edge_fractions(lengths[i], target_h, grading, min_panels_per_side)
        points = verts[i][None, :] + fractions[:, None] * edges[i][None, :]
        points[-1] = verts[(i + 1) % n]
        counts.append(len(fractions) - 1)
        for j in range(len(fractions) - 1):
            panels.append(Panel(tuple(points[j]), tuple(points[j + 1]),
                                corner_at_start=(j == 0), corner_at_end=(j == len(fractions) - 2)))

    verts.setflags(write=False)
    boundary = PolygonBoundary(verts, tuple(panels), tuple(counts), float(target_h),
                               float(grading), int(min_panels_per_side))
    boundary.validate()
    logger.info("Meshed polygon with %d vertices into %d panels (max h %.4g, perimeter %.6g)",
                n, boundary.n_panels, boundary.max_h, boundary.perimeter)
    return boundary


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureSettings:
    """Orders are offsets added to the polynomial degree."""
    far_offset: int = 6
    distant_offset: int = 3
    distant_factor: float = 4.0
    near_factor: float = 1.0
    max_subdivisions: int = 16
    singular_offset: int = 10
    grading_ratio: float = 0.15
    grading_levels: int = 18
    symmetry_tol: float = 1e-10


def gauss01(order: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def composite_gauss01(order: int, pieces: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = gauss01(order)
    offsets = np.arange(pieces)[:, None] / pieces
    return (offsets + x[None, :] / pieces).reshape(-1), np.tile(w / pieces, pieces)


def graded_gauss01(order: int, ratio: float, levels: int) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss on [0, 1] geometrically refined towards 0."""
    x, w = gauss01(order)
    bounds = np.concatenate([ratio ** np.arange(levels + 1), [0.0]])
    nodes, weights = [], []
    for hi, lo in zip(bounds[:-1], bounds[1:]):
        nodes.append(lo + (hi - lo) * x)
        weights.append((hi - lo) * w)
    return np.concatenate(nodes[::-1]), np.concatenate(weights[::-1])


def legendre_basis(t: np.ndarray, degree: int) -> np.ndarray:
    """P_l(2t - 1) for l = 0..degree, stacked on a new last axis."""
    return legendre.legvander(2.0 * np.asarray(t) - 1.0, degree)


class _PairGroup(NamedTuple):
    kind: str
    I: np.ndarray
    J: np.ndarray
    t: np.ndarray
    tau: np.ndarray
    w: np.ndarray


class _SelfRule(NamedTuple):
    z: np.ndarray
    w: np.ndarray
    table: np.ndarray


@dataclass(frozen=True, eq=False)
class _PairPlan:
    groups: Tuple[_PairGroup, ...]
    self_rule: _SelfRule
    collinear: np.ndarray


def _segment_distances(starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Pairwise distances between non-crossing segments via endpoint-to-segment distances."""
    def point_to_segments(points):
        d = ends - starts
        rel = points[:, None, :] - starts[None, :, :]
        lam = np.clip(np.sum(rel * d[None], axis=2) / np.sum(d * d, axis=1)[None], 0.0, 1.0)
        return np.linalg.norm(rel - lam[..., None] * d[None], axis=2)

    from_starts = point_to_segments(starts)
    from_ends = point_to_segments(ends)
    one_way = np.minimum(from_starts, from_ends)
    return np.minimum(one_way, one_way.T)


def _build_pair_plan(boundary: PolygonBoundary, degree: int, settings: QuadratureSettings) -> _PairPlan:
    P = boundary.n_panels
    h = boundary.lengths
    dist = _segment_distances(boundary.starts, boundary.ends)
    idx = np.arange(P)
    I, J = np.meshgrid(idx, idx, indexing="ij")
    self_mask = I == J
    adjacent = (J == (I + 1) % P) | (J == (I - 1) % P)
    adjacent &= ~self_mask
    regular = ~self_mask & ~adjacent
    hmax = np.maximum(h[:, None], h[None, :])
    distant = regular & (dist >= settings.distant_factor * hmax)
    far = regular & ~distant & (dist >= settings.near_factor * hmax)
    near = regular & ~distant & ~far
    if np.any(dist[regular] <= 0):
        raise GeometryError("Non-adjacent panels touch")

    groups: List[_PairGroup] = []

    def tensor_group(kind, mask, order, pieces=1):
        if not np.any(mask):
            return
        x, w = composite_gauss01(order, pieces)
        t = np.repeat(x, x.size)[None, :]
        tau = np.tile(x, x.size)[None, :]
        ww = np.outer(w, w).reshape(1, -1)
        groups.append(_PairGroup(kind, I[mask], J[mask], t, tau, ww))

    tensor_group("distant", distant, degree + settings.distant_offset)
    tensor_group("far", far, degree + settings.far_offset)
    if np.any(near):
        pieces = np.minimum(settings.max_subdivisions,
                            np.ceil(2.0 * hmax / np.where(near, dist, 1.0))).astype(int)
        for S in np.unique(pieces[near]):
            tensor_group(f"near-{S}", near & (pieces == S), degree + settings.far_offset, int(S))

    # Duffy rule with the shared vertex at local (0, 0)
    order = degree + settings.singular_offset
    rho, w_rho = graded_gauss01(order, settings.grading_ratio, settings.grading_levels // 2)
    v, w_v = gauss01(order)
    R, Vv = np.meshgrid(rho, v, indexing="ij")
    W = (np.outer(w_rho, w_v) * R).reshape(-1)
    R, Vv = R.reshape(-1), Vv.reshape(-1)
    t_loc = np.concatenate([R, R * Vv])
    tau_loc = np.concatenate([R * Vv, R])
    w_loc = np.concatenate([W, W])
    Ia, Ja = I[adjacent], J[adjacent]
    # shared vertex is the end of the test panel when the trial panel follows it
    test_flip = (Ja == (Ia + 1) % P)[:, None]
    t = np.where(test_flip, 1.0 - t_loc[None, :], t_loc[None, :])
    tau = np.where(test_flip, tau_loc[None, :], 1.0 - tau_loc[None, :])
    groups.append(_PairGroup("adjacent", Ia, Ja, t, tau, w_loc[None, :]))

    # relative-coordinate rule for coincident panels
    z, w_z = graded_gauss01(order, settings.grading_ratio, settings.grading_levels)
    u, w_u = gauss01(degree + 1)
    tau_in = (1.0 - z)[:, None] * u[None, :]
    w_in = (1.0 - z)[:, None] * w_u[None, :]
    P_shift = legendre_basis(tau_in + z[:, None], degree)
    P_base = legendre_basis(tau_in, degree)
    table = (np.einsum("zu,zua,zub->zab", w_in, P_shift, P_base)
             + np.einsum("zu,zua,zub->zab", w_in, P_base, P_shift))
    self_rule = _SelfRule(z, w_z, table)

    # (x - y) . nu(y) vanishes identically when the test panel lies on the trial panel's line
    tol = 1e-13 * np.max(h)
    rel_start = boundary.starts[:, None, :] - boundary.starts[None, :, :]
    rel_end = boundary.ends[:, None, :] - boundary.starts[None, :, :]
    nu = boundary.normals[None, :, :]
    collinear = (np.abs(np.sum(rel_start * nu, axis=2)) <= tol) & (np.abs(np.sum(rel_end * nu, axis=2)) <= tol)

    logger.debug("Pair plan: %d distant, %d far, %d near, %d adjacent, %d self",
                 distant.sum(), far.sum(), near.sum(), adjacent.sum(), P)
    return _PairPlan(tuple(groups), self_rule, collinear)


# ---------------------------------------------------------------------------
# Spaces and matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GalerkinMatrix:
    """An assembled Galerkin matrix; ``tag`` is one of V, K, M, S."""
    tag: str
    entries: np.ndarray
    s: Optional[complex] = None

    def __post_init__(self):
        self.entries.setflags(write=False)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.entries.shape

    def symmetry_defect(self) -> float:
        norm = np.linalg.norm(self.entries)
        return float(np.linalg.norm(self.entries - self.entries.T) / norm) if norm else 0.0

    def __matmul__(self, other):
        return self.entries @ other


@dataclass(frozen=True, eq=False)
class BoundarySpace:
    """Discontinuous piecewise polynomials of a fixed degree on a polygon boundary."""
    boundary: PolygonBoundary
    degree: int
    quadrature: QuadratureSettings = field(default_factory=QuadratureSettings)
    cache_size: int = 8

    def __post_init__(self):
        if self.degree < 0:
            raise ContractError(f"Polynomial degree must be nonnegative, got {self.degree}")

    @property
    def local_dofs(self) -> int:
        return self.degree + 1

    @property
    def n_dofs(self) -> int:
        return self.boundary.n_panels * self.local_dofs

    def dof(self, panel: int, mode: int) -> int:
        return panel * self.local_dofs + mode

    def panel_dofs(self, panel: int) -> np.ndarray:
        return np.arange(self.dof(panel, 0), self.dof(panel, self.degree) + 1)

    @cached_property
    def pair_plan(self) -> _PairPlan:
        return _build_pair_plan(self.boundary, self.degree, self.quadrature)

    @cached_property
    def operators(self) -> "OperatorCache":
        return OperatorCache(self, self.cache_size)

    @cached_property
    def continuous_basis(self) -> np.ndarray:
        """
        (n_dofs, P * degree) coefficients of a basis of the continuous
        piecewise polynomials in the space: one hat function per vertex of
        the panel chain, then the bubbles P_l - P_(l-2), l >= 2, per panel.
        Degree 0 only holds the constants.
        """
        P, d = self.boundary.n_panels, self.degree
        if d == 0:
            return np.ones((self.n_dofs, 1))
        C = np.zeros((self.n_dofs, P * d))
        for j in range(P):
            # vertex j: start of panel j, end of panel j - 1
            before = (j - 1) % P
            C[self.dof(j, 0), j] += 0.5
            C[self.dof(j, 1), j] -= 0.5
            C[self.dof(before, 0), j] += 0.5
            C[self.dof(before, 1), j] += 0.5
        column = P
        for p in range(P):
            for l in range(2, d + 1):
                C[self.dof(p, l), column] = 1.0
                C[self.dof(p, l - 2), column] = -1.0
                column += 1
        C.setflags(write=False)
        return C

    def quadrature_points(self, order: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Gauss points (P, n, 2), panel parameters (n,) and weights (n,) per panel."""
        t, w = gauss01(order or self.degree + 10)
        points = self.boundary.starts[:, None, :] + t[None, :, None] * self.boundary.edges[:, None, :]
        return points, t, w

    def project_values(self, values: np.ndarray, t: np.ndarray, w: np.ndarray) -> np.ndarray:
        """
        L2-projection coefficients from values (P, n, ...) at the points of
        :meth:`quadrature_points`. The mass matrix is diagonal, so this is
        the exact solve of M x = (g, phi_i).
        """
        basis = legendre_basis(t, self.degree)
        scale = 2.0 * np.arange(self.local_dofs) + 1.0
        coeffs = np.einsum("n,na,pn...->pa...", w, basis, values) * scale.reshape((1, -1) + (1,) * (values.ndim - 2))
        return coeffs.reshape((self.n_dofs,) + values.shape[2:])

    def evaluate(self, coeffs: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Values (P, len(t)) of a coefficient vector at panel parameters t."""
        basis = legendre_basis(t, self.degree)
        return np.einsum("pa,na->pn", np.asarray(coeffs).reshape(self.boundary.n_panels, self.local_dofs), basis)

    def to_text(self) -> str:
        return self.boundary.to_text() + f"\ndegree = {self.degree}\n"

    @classmethod
    def from_text(cls, text: str) -> "BoundarySpace":
        values = _parse_key_values(text)
        if "degree" not in values:
            raise GeometryError("Space description is missing key 'degree'")
        return cls(PolygonBoundary.from_text(text), int(values["degree"]))


def assemble_mass(space: BoundarySpace) -> GalerkinMatrix:
    """Diagonal: h / (2l + 1) for mode l on a panel of length h."""
    diag = space.boundary.lengths[:, None] / (2.0 * np.arange(space.local_dofs) + 1.0)[None, :]
    return GalerkinMatrix("M", np.diag(diag.reshape(-1)))


@lru_cache(maxsize=None)
def _reference_stiffness(degree: int) -> np.ndarray:
    x, w = legendre.leggauss(degree + 1)
    derivs = np.stack([legendre.legval(x, legendre.legder(np.eye(degree + 1)[l])) for l in range(degree + 1)], axis=1)
    # d/dt P_l(2t - 1) = 2 P_l'(x), dt = dx / 2
    return 2.0 * np.einsum("n,na,nb->ab", w, derivs, derivs)


def assemble_stiffness(space: BoundarySpace) -> GalerkinMatrix:
    """Broken arclength stiffness, no coupling between panels."""
    ref = _reference_stiffness(space.degree)
    blocks = ref[None, :, :] / space.boundary.lengths[:, None, None]
    return GalerkinMatrix("S", linalg.block_diag(*blocks))


def _integrate_group(boundary: PolygonBoundary, group: _PairGroup, s: complex, degree: int,
                     single: bool, double: bool) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
    F = group.I.size
    t = np.broadcast_to(group.t, (F, group.t.shape[1]))
    tau = np.broadcast_to(group.tau, (F, group.tau.shape[1]))
    x = boundary.starts[group.I][:, None, :] + t[..., None] * boundary.edges[group.I][:, None, :]
    y = boundary.starts[group.J][:, None, :] + tau[..., None] * boundary.edges[group.J][:, None, :]
    diff = x - y
    r = np.linalg.norm(diff, axis=2)
    k0, k1 = _k0_k1(s * r)
    test = legendre_basis(t, degree)
    trial = legendre_basis(tau, degree)
    w = np.broadcast_to(group.w, (F, group.w.shape[1])) * (boundary.lengths[group.I] * boundary.lengths[group.J])[:, None]
    V = K = None
    if single:
        V = np.einsum("fq,fqa,fqb->fab", w * INV_2PI * k0, test, trial)
    if double:
        projection = np.einsum("fqd,fd->fq", diff, boundary.normals[group.J])
        K = np.einsum("fq,fqa,fqb->fab", w * (s * INV_2PI) * k1 * projection / r, test, trial)
    return V, K


def _assemble_blocks(space: BoundarySpace, s: complex, single: bool = True,
                     double: bool = True) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
    if not complex(s).real > 0:
        raise DomainError(f"Layer operators require Re s > 0, got s={s}")
    boundary, degree = space.boundary, space.degree
    P, n_loc = boundary.n_panels, space.local_dofs
    plan = space.pair_plan
    Vb = np.zeros((P, P, n_loc, n_loc), dtype=complex) if single else None
    Kb = np.zeros((P, P, n_loc, n_loc), dtype=complex) if double else None

    for group in plan.groups:
        V, K = _integrate_group(boundary, group, s, degree, single, double)
        if single:
            Vb[group.I, group.J] = V
        if double:
            Kb[group.I, group.J] = K

    if single:
        rule = plan.self_rule
        h = boundary.lengths
        k0, _ = _k0_k1(s * h[:, None] * rule.z[None, :])
        Vb[np.arange(P), np.arange(P)] = (h ** 2)[:, None, None] * np.einsum(
            "pz,z,zab->pab", INV_2PI * k0, rule.w, rule.table)
    if double:
        Kb[plan.collinear] = 0.0

    for name, blocks in (("single layer", Vb), ("double layer", Kb)):
        if blocks is None:
            continue
        bad = ~np.all(np.isfinite(blocks), axis=(2, 3))
        if np.any(bad):
            p, q = np.argwhere(bad)[0]
            raise AssemblyError(f"Non-finite {name} quadrature at s={s:.6g}", (int(p), int(q)))

    def to_matrix(blocks):
        return None if blocks is None else blocks.transpose(0, 2, 1, 3).reshape(P * n_loc, P * n_loc)

    return to_matrix(Vb), to_matrix(Kb)


def _symmetrize(space: BoundarySpace, V: np.ndarray, s: complex) -> np.ndarray:
    norm = np.linalg.norm(V)
    defect = V - V.T
    relative = np.linalg.norm(defect) / norm
    if relative > space.quadrature.symmetry_tol:
        n_loc = space.local_dofs
        P = space.boundary.n_panels
        per_block = np.linalg.norm(defect.reshape(P, n_loc, P, n_loc), axis=(1, 3))
        p, q = np.unravel_index(np.argmax(per_block), per_block.shape)
        raise AssemblyError(
            f"Single layer asymmetry {relative:.2e} exceeds {space.quadrature.symmetry_tol:.0e} at s={s:.6g}",
            (int(p), int(q)),
        )
    return 0.5 * (V + V.T)


def assemble_single_layer(space: BoundarySpace, s: complex) -> GalerkinMatrix:
    """V(s) with entries int int Phi(x - y; s) phi_j(y) phi_i(x), symmetrized."""
    V, _ = _assemble_blocks(space, s, single=True, double=False)
    return GalerkinMatrix("V", _symmetrize(space, V, s), complex(s))


def assemble_double_layer(space: BoundarySpace, s: complex) -> GalerkinMatrix:
    """K(s) with kernel d/dnu(y) Phi(x - y; s); coincident and collinear blocks are zero."""
    _, K = _assemble_blocks(space, s, single=False, double=True)
    return GalerkinMatrix("K", K, complex(s))


class FrequencyOperators(NamedTuple):
    single_layer: GalerkinMatrix
    double_layer: GalerkinMatrix
    lu: Tuple[np.ndarray, np.ndarray]


class OperatorCache:
    """
    Per-space store of assembled operators and single-layer factorizations.

    Frequencies are kept in a bounded LRU; entries are immutable, so the cache
    can be shared between threads evaluating different frequencies.
    """

    def __init__(self, space: BoundarySpace, maxsize: int = 8):
        self.space = space
        self._at = lru_cache(maxsize=maxsize)(self._build)

    @cached_property
    def mass(self) -> GalerkinMatrix:
        return assemble_mass(self.space)

    @cached_property
    def stiffness(self) -> GalerkinMatrix:
        return assemble_stiffness(self.space)

    @cached_property
    def energy(self) -> GalerkinMatrix:
        """V(1), the energy-norm matrix."""
        return self.at(1.0).single_layer

    def at(self, s: complex) -> FrequencyOperators:
        return self._at(complex(s))

    def _build(self, s: complex) -> FrequencyOperators:
        V, K = _assemble_blocks(self.space, s)
        V = GalerkinMatrix("V", _symmetrize(self.space, V, s), s)
        K = GalerkinMatrix("K", K, s)
        lu, piv = linalg.lu_factor(V.entries, check_finite=False)
        pivots = np.abs(np.diag(lu))
        ratio = pivots.min() / pivots.max()
        if not np.isfinite(ratio) or ratio < 1e3 * np.finfo(float).eps:
            raise LinearAlgebraError(f"Single layer factorization broke down at s={s:.6g}",
                                     condition=1.0 / max(ratio, np.finfo(float).tiny))
        logger.debug("Assembled operators at s=%s (%d dofs)", s, self.space.n_dofs)
        return FrequencyOperators(V, K, (lu, piv))

    def solve_single_layer(self, s: complex, rhs: np.ndarray) -> np.ndarray:
        ops = self.at(s)
        x = linalg.lu_solve(ops.lu, rhs, check_finite=False)
        V = ops.single_layer.entries
        residual = np.linalg.norm(V @ x - rhs)
        # normwise backward error
        scale = np.linalg.norm(V) * np.linalg.norm(x) + np.linalg.norm(rhs)
        if scale > 0 and residual > 1e-10 * scale:
            lu = ops.lu[0]
            pivots = np.abs(np.diag(lu))
            raise LinearAlgebraError(
                f"Single layer solve residual {residual / scale:.2e} at s={s:.6g}",
                condition=float(pivots.max() / pivots.min()),
            )
        return x

    def clear(self) -> None:
        self._at.cache_clear()


def l2_project(space: BoundarySpace, g: Callable, quad_order: Optional[int] = None,
               with_normals: bool = False) -> np.ndarray:
    """
    Coefficients of the L2-orthogonal projection of g onto the space.

    ``g`` maps points of shape (..., 2) to values of shape (...) (or (..., T)
    for several functions at once). With ``with_normals`` it is called as
    g(points, normals) with normals broadcast to the points' shape.
    """
    points, t, w = space.quadrature_points(quad_order)
    if with_normals:
        normals = np.broadcast_to(space.boundary.normals[:, None, :], points.shape)
        values = np.asarray(g(points, normals))
    else:
        values = np.asarray(g(points))
    if values.shape[:2] != points.shape[:2]:
        raise ContractError(f"Boundary function returned shape {values.shape}, expected {points.shape[:2]} + (...)")
    return space.project_values(values, t, w)


def _check_side(side: str) -> str:
    if side not in SIDES:
        raise ContractError(f"side must be one of {SIDES}, got '{side}'")
    return side


def dtn_apply(space: BoundarySpace, s: complex, g_coeffs: np.ndarray, side: str = "interior") -> np.ndarray:
    """Solve V(s) lambda = (+-1/2 M + K(s)) g; + on the interior side."""
    _check_side(side)
    ops = space.operators.at(s)
    half_mass = 0.5 * space.operators.mass.entries
    identity_part = half_mass if side == "interior" else -half_mass
    g = np.asarray(g_coeffs)
    rhs = identity_part @ g + ops.double_layer.entries @ g
    return space.operators.solve_single_layer(s, rhs)


def dti_apply(space: BoundarySpace, s: complex, g_coeffs: np.ndarray, side: str = "interior") -> np.ndarray:
    """DtN(s) g - s g on the interior side, DtN(s) g + s g on the exterior side."""
    sign = -1.0 if _check_side(side) == "interior" else 1.0
    return dtn_apply(space, s, g_coeffs, side) + sign * s * np.asarray(g_coeffs)


def dtn_jump_apply(space: BoundarySpace, s: complex, g_coeffs: np.ndarray) -> np.ndarray:
    """(DtN^- - DtN^+) g, which equals V(s)^-1 M g."""
    return dtn_apply(space, s, g_coeffs, "interior") - dtn_apply(space, s, g_coeffs, "exterior")


def indirect_apply(space: BoundarySpace, s: complex, phi_coeffs: np.ndarray) -> np.ndarray:
    """V(s)^-1 M phi - 2 s phi, the operator of the indirect formulation."""
    phi = np.asarray(phi_coeffs)
    return space.operators.solve_single_layer(s, space.operators.mass.entries @ phi) - 2.0 * s * phi


def dtn_symbol(space: BoundarySpace, side: str = "interior") -> Symbol:
    _check_side(side)
    return Symbol(f"DtN-{side}", space.n_dofs, lambda s: (lambda x: dtn_apply(space, s, x, side)))


def dti_symbol(space: BoundarySpace, side: str = "interior") -> Symbol:
    _check_side(side)
    return Symbol(f"DtI-{side}", space.n_dofs, lambda s: (lambda x: dti_apply(space, s, x, side)))


class ManufacturedResult(NamedTuple):
    n_dofs: int
    max_h: float
    absolute_error: float
    relative_error: float


def manufactured_dtn_error(space: BoundarySpace, s: complex,
                           source_point: Sequence[float] = (2.0, 2.0)) -> ManufacturedResult:
    """
    Energy error of the interior DtN map on g = Phi(. - x0; s), x0 outside
    the domain, against the projected analytic normal derivative.
    """
    x0 = np.asarray(source_point, dtype=float)
    g = l2_project(space, lambda x: fundamental_solution(x - x0, s))
    exact = l2_project(
        space,
        lambda x, nu: np.sum(fundamental_solution_gradient_2d(x - x0, s) * nu, axis=-1),
        with_normals=True,
    )
    error = exact - dtn_apply(space, s, g, "interior")
    absolute = energy_norm(space, error)
    reference = energy_norm(space, exact)
    return ManufacturedResult(space.n_dofs, space.boundary.max_h, absolute, absolute / reference)


def energy_norm(space: BoundarySpace, e_coeffs: np.ndarray, V1: Optional[GalerkinMatrix] = None) -> float:
    """sqrt(e^H V(1) e)."""
    V = (V1 if V1 is not None else space.operators.energy).entries
    e = np.asarray(e_coeffs)
    if e.shape != (V.shape[0],):
        raise ContractError(f"Coefficient vector has shape {e.shape}, expected ({V.shape[0]},)")
    form = complex(np.vdot(e, V @ e))
    scale = float(np.linalg.norm(V) * np.vdot(e, e).real) if np.any(e) else 0.0
    if scale == 0.0:
        return 0.0
    if abs(form.imag) > 1e-10 * max(abs(form), 1e-300) and abs(form.imag) > 1e-14 * scale:
        raise MatrixIntegrityError(f"Energy form has imaginary part {form.imag:.3e} (value {form.real:.3e})")
    if form.real < -1e-12 * scale:
        raise MatrixIntegrityError(f"Energy form is negative: {form.real:.3e}")
    return float(np.sqrt(max(form.real, 0.0)))


def operator_norm(space: BoundarySpace, apply: Callable[[np.ndarray], np.ndarray],
                  norm_out: np.ndarray, norm_in: np.ndarray,
                  basis: Optional[np.ndarray] = None) -> float:
    """
    sqrt(lambda_max(B^H N_out B, N_in)), with B the matrix of ``apply``
    built column by column.

    With ``basis`` the maximum runs over inputs ``basis @ y`` only: B is
    applied to the basis columns and N_in becomes basis^T N_in basis.
    """
    N_out = np.asarray(getattr(norm_out, "entries", norm_out))
    N_in = np.asarray(getattr(norm_in, "entries", norm_in))
    if basis is None:
        basis = np.eye(N_in.shape[0])
    basis = np.asarray(basis)
    if basis.shape[0] != N_in.shape[0]:
        raise ContractError(f"Basis has {basis.shape[0]} rows, input norm has size {N_in.shape[0]}")
    N_in = basis.T @ N_in @ basis
    n = basis.shape[1]
    B = np.empty((N_out.shape[0], n), dtype=complex)
    for j in range(n):
        B[:, j] = apply(np.array(basis[:, j]))
    H = B.conj().T @ N_out @ B
    H = 0.5 * (H + H.conj().T)
    try:
        top = linalg.eigh(H, N_in.astype(complex), eigvals_only=True, subset_by_index=[n - 1, n - 1])
    except linalg.LinAlgError as exc:
        raise LinearAlgebraError("Generalized eigenvalue problem for the operator norm failed", original_exception=exc)
    return float(np.sqrt(max(top[0], 0.0)))


__all__ = [
    "Panel",
    "PolygonBoundary",
    "BoundarySpace",
    "GalerkinMatrix",
    "OperatorCache",
    "QuadratureSettings",
    "L_SHAPE_VERTICES",
    "UNIT_SQUARE_VERTICES",
    "mesh_polygon",
    "legendre_basis",
    "assemble_single_layer",
    "assemble_double_layer",
    "assemble_mass",
    "assemble_stiffness",
    "l2_project",
    "dtn_apply",
    "dti_apply",
    "dtn_jump_apply",
    "indirect_apply",
    "dtn_symbol",
    "dti_symbol",
    "ManufacturedResult",
    "manufactured_dtn_error",
    "energy_norm",
    "operator_norm",
]
