"""
Time-domain scattering schemes for the interior Dirichlet-to-Neumann map.

The incident field is a plane pulse u(x, t) = psi(t - d.x) travelling in
direction d, with profile psi(tau) = cos(pi tau / 2) exp(-(tau - tau0)^2 / alpha).
It solves the wave equation everywhere, so its Dirichlet trace g and normal
derivative lambda = -psi'(t - d.x) (d . nu) on the boundary are an exact
data/solution pair for the interior DtN map.

Two CQ schemes approximate lambda:

* standard:       CQ[DtN^-] applied to g,
* differentiated: CQ[s^-1 DtN^-] applied to the time derivative of g.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from . import get_rkcq_logger
from .bem2d import BoundarySpace, dtn_apply, dti_apply, energy_norm
from .butcher import ButcherTableau
from .cq import Radius, RateFit, StageGrid, Symbol, apply_symbol, convergence_rate
from .exceptions import CausalityError, ConfigurationError, ContractError

logger = get_rkcq_logger(__name__)

METHODS = ("standard", "differentiated")
CAUSALITY_TOL = 1e-10
CAUSALITY_ORDERS = 9


@dataclass(frozen=True, eq=False)
class IncidentWave:
    """Plane pulse psi(t - d.x) with a Gaussian-modulated cosine profile."""
    direction: Tuple[float, float] = (np.sqrt(0.5), np.sqrt(0.5))
    tau0: float = 4.0
    alpha: float = 0.05

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (2,) or abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ConfigurationError(f"Wave direction must be a unit 2-vector, got {self.direction}")
        if not self.alpha > 0:
            raise ConfigurationError(f"Profile width alpha must be positive, got {self.alpha}")
        object.__setattr__(self, "direction", tuple(float(x) for x in d))

    def _envelope_polynomials(self, order: int) -> List[Polynomial]:
        # d^n/du^n exp(q(u)) = H_n(u) exp(q(u)), q(u) = i pi (u + tau0)/2 - u^2/alpha
        dq = Polynomial([0.5j * np.pi, -2.0 / self.alpha])
        polys = [Polynomial([1.0 + 0j])]
        for _ in range(order):
            polys.append(polys[-1].deriv() + dq * polys[-1])
        return polys

    def profile(self, tau, order: int = 0) -> np.ndarray:
        """psi^(order)(tau) = Re(H_order(u) exp(q(u))), u = tau - tau0."""
        if order < 0:
            raise ContractError(f"Derivative order must be nonnegative, got {order}")
        u = np.asarray(tau, dtype=float) - self.tau0
        H = self._envelope_polynomials(order)[-1]
        return np.real(H(u) * np.exp(0.5j * np.pi * (u + self.tau0) - u * u / self.alpha))

    def phase(self, points, t) -> np.ndarray:
        """t - d.x, broadcasting a trailing time axis when t is an array."""
        points = np.asarray(points, dtype=float)
        projection = points @ np.asarray(self.direction)
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return t - projection
        return t.reshape((1,) * projection.ndim + (-1,)) - projection[..., None]

    def value(self, points, t, order: int = 0) -> np.ndarray:
        """d^order/dt^order u(x, t)."""
        return self.profile(self.phase(points, t), order)

    def normal_derivative(self, points, normals, t) -> np.ndarray:
        """grad u . nu = -psi'(t - d.x) (d . nu)."""
        d_dot_nu = np.asarray(normals, dtype=float) @ np.asarray(self.direction)
        slope = self.profile(self.phase(points, t), 1)
        if slope.ndim > d_dot_nu.ndim:
            d_dot_nu = d_dot_nu[..., None]
        return -slope * d_dot_nu

    def check_causality(self, points, orders: int = CAUSALITY_ORDERS, tol: float = CAUSALITY_TOL) -> float:
        """
        Largest |psi^(n)(-d.x)|, n <= orders, over the given points at t = 0.
        Raises CausalityError above ``tol``: the pulse must not have reached
        the scatterer when the simulation starts.
        """
        tau = self.phase(np.asarray(points, dtype=float).reshape(-1, 2), 0.0)
        worst = max(float(np.max(np.abs(self.profile(tau, n)))) for n in range(orders + 1))
        if worst > tol:
            raise CausalityError(
                f"Incident wave already reaches the boundary at t=0 (derivative magnitude {worst:.3e} > {tol:.0e}); "
                f"increase tau0 or decrease alpha"
            )
        return worst


def _boundary_points(space: BoundarySpace) -> np.ndarray:
    points, _, _ = space.quadrature_points()
    return np.concatenate([points.reshape(-1, 2), np.asarray(space.boundary.vertices)])


def trace_samples(wave: IncidentWave, space: BoundarySpace, grid: StageGrid,
                  derivative_order: int = 0) -> np.ndarray:
    """
    Coefficients of the L2-projected trace of d^order/dt^order u at every
    stage time, shape (N, m, n_dofs).
    """
    if derivative_order not in (0, 1):
        raise ContractError(f"derivative_order must be 0 or 1, got {derivative_order}")
    wave.check_causality(_boundary_points(space))
    points, t, w = space.quadrature_points()
    times = grid.stage_times.reshape(-1)
    values = wave.value(points, times, derivative_order)
    coeffs = space.project_values(values, t, w)
    return coeffs.T.reshape(grid.N, grid.stages, space.n_dofs)


def reference_solution(wave: IncidentWave, space: BoundarySpace, times) -> np.ndarray:
    """L2-projected exact normal derivative at the given times, shape (len(times), n_dofs)."""
    points, t, w = space.quadrature_points()
    normals = np.broadcast_to(space.boundary.normals[:, None, :], points.shape)
    values = wave.normal_derivative(points, normals, np.atleast_1d(times))
    return space.project_values(values, t, w).T


@dataclass
class SchemeRun:
    """Output and error history of one scheme on one grid."""
    method: str
    tableau_name: str
    grid: StageGrid
    space: BoundarySpace = field(repr=False)
    outputs: np.ndarray = field(repr=False)
    reference: np.ndarray = field(repr=False)
    errors: np.ndarray = field(repr=False)
    reference_scale: float = 1.0
    normalized: bool = False

    @property
    def max_error(self) -> float:
        return float(np.max(self.errors))

    @property
    def output_times(self) -> np.ndarray:
        return self.grid.output_times


def _stacked_symbol(space: BoundarySpace, methods: Sequence[str]) -> Symbol:
    """One symbol acting blockwise, so all schemes share each factorization of V(s)."""
    n = space.n_dofs

    def evaluate(s):
        def act(x):
            x = np.asarray(x)
            blocks = x.reshape((len(methods), n) + x.shape[1:])
            out = []
            for method, block in zip(methods, blocks):
                y = dtn_apply(space, s, block, "interior")
                out.append(y / s if method == "differentiated" else y)
            return np.concatenate(out, axis=0)
        return act

    return Symbol("+".join(methods), n * len(methods), evaluate)


def solve_schemes(methods: Sequence[str], tableau: ButcherTableau, grid: StageGrid,
                  space: BoundarySpace, wave: IncidentWave, radius: Radius = "auto",
                  oversampling: int = 1, threads: int = 1,
                  normalize: bool = False) -> Dict[str, SchemeRun]:
    """Run several schemes on the same grid with one pass over the frequencies."""
    methods = list(dict.fromkeys(methods))
    for method in methods:
        if method not in METHODS:
            raise ConfigurationError(f"Unknown method '{method}', expected one of {METHODS}")
    n = space.n_dofs
    data = {
        "standard": lambda: trace_samples(wave, space, grid, 0),
        "differentiated": lambda: trace_samples(wave, space, grid, 1),
    }
    samples = np.concatenate([data[method]() for method in methods], axis=2)
    outputs = apply_symbol(_stacked_symbol(space, methods), tableau, grid, samples,
                           radius=radius, oversampling=oversampling, threads=threads)

    reference = reference_solution(wave, space, grid.output_times)
    V1 = space.operators.energy
    reference_norms = np.array([energy_norm(space, r, V1) for r in reference])
    scale = float(reference_norms.max()) if normalize and reference_norms.max() > 0 else 1.0

    runs = {}
    for i, method in enumerate(methods):
        approx = outputs[:, i * n:(i + 1) * n]
        errors = np.array([energy_norm(space, e, V1) for e in reference - approx]) / scale
        runs[method] = SchemeRun(method, tableau.name, grid, space, approx, reference, errors,
                                 float(reference_norms.max()), normalize)
        logger.info("%s %s N=%d: max energy error %.3e", method, tableau.name, grid.N, runs[method].max_error)
    return runs


def solve_standard(tableau: ButcherTableau, grid: StageGrid, space: BoundarySpace,
                   wave: IncidentWave, **options) -> SchemeRun:
    """CQ[DtN^-(s)] applied to the Dirichlet trace g."""
    return solve_schemes(["standard"], tableau, grid, space, wave, **options)["standard"]


def solve_differentiated(tableau: ButcherTableau, grid: StageGrid, space: BoundarySpace,
                         wave: IncidentWave, **options) -> SchemeRun:
    """CQ[s^-1 DtN^-(s)] applied to the time derivative of g."""
    return solve_schemes(["differentiated"], tableau, grid, space, wave, **options)["differentiated"]


@dataclass
class DecompositionReport:
    """Per-step defect of CQ[s^-1 DtN] g' = CQ[s^-1 DtI] g' + g'(t_n)."""
    residuals: np.ndarray
    scale: float
    tolerance: float

    @property
    def max_relative(self) -> float:
        if self.scale == 0:
            return float(np.max(self.residuals)) if self.residuals.size else 0.0
        return float(np.max(self.residuals)) / self.scale

    @property
    def passed(self) -> bool:
        return self.max_relative <= self.tolerance


def scheme_decomposition_check(tableau: ButcherTableau, grid: StageGrid, space: BoundarySpace,
                               wave: IncidentWave, samples: Optional[np.ndarray] = None,
                               tolerance: float = 1e-10, radius: Optional[float] = None,
                               oversampling: int = 1, threads: int = 1) -> DecompositionReport:
    """
    Check that s^-1 DtN = s^-1 DtI + I survives discretization: the identity
    part is reproduced exactly by CQ, so both sides agree up to roundoff.
    ``samples`` overrides the wave's derivative data.

    The difference of the two sides has no memory, so contour aliasing
    cancels in it. The default radius e^(-1/N) keeps the FFT roundoff
    amplification radius^-N below e.
    """
    n = space.n_dofs
    if radius is None:
        radius = float(np.exp(-1.0 / grid.N))
    if samples is None:
        samples = trace_samples(wave, space, grid, 1)
    samples = np.asarray(samples)

    def evaluate(s):
        def act(x):
            x = np.asarray(x)
            blocks = x.reshape((2, n) + x.shape[1:])
            return np.concatenate([
                dtn_apply(space, s, blocks[0], "interior") / s,
                dti_apply(space, s, blocks[1], "interior") / s,
            ], axis=0)
        return act

    paired = Symbol("DtN/s+DtI/s", 2 * n, evaluate)
    out = apply_symbol(paired, tableau, grid, np.concatenate([samples, samples], axis=2),
                       radius=radius, oversampling=oversampling, threads=threads)
    nodal = samples[:, -1, :]
    residuals = np.linalg.norm(out[:, :n] - out[:, n:] - nodal, axis=1)
    scale = float(np.max(np.linalg.norm(nodal, axis=1))) if nodal.size else 0.0
    report = DecompositionReport(residuals, scale, tolerance)
    logger.info("Decomposition check %s N=%d: max relative defect %.3e", tableau.name, grid.N, report.max_relative)
    return report


def floor_filtered_rate(steps: Sequence[float], errors: Sequence[float], floor: float,
                        window: int = 3) -> Optional[RateFit]:
    """
    Rate fit over the ``window`` finest consecutive pairs whose errors both
    lie above ``floor``. None when no pair survives.
    """
    steps = np.asarray(steps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if steps.shape != errors.shape:
        raise ContractError("steps and errors must have the same length")
    valid = errors > floor
    pairs = [i for i in range(len(errors) - 1) if valid[i] and valid[i + 1]]
    if not pairs:
        logger.warning("No ladder pair lies above the error floor %.3e", floor)
        return None
    chosen = pairs[-window:]
    points = sorted(set(chosen) | {i + 1 for i in chosen})
    return convergence_rate(list(zip(steps[points], errors[points])))


__all__ = [
    "IncidentWave",
    "SchemeRun",
    "DecompositionReport",
    "METHODS",
    "trace_samples",
    "reference_solution",
    "solve_schemes",
    "solve_standard",
    "solve_differentiated",
    "scheme_decomposition_check",
    "floor_filtered_rate",
]
