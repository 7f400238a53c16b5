"""
Runge-Kutta convolution quadrature.

A convolution whose kernel is known through its Laplace transform K(s) is
discretized by replacing s with Delta(zeta)/k, where Delta is the generating
matrix of a stiffly accurate Runge-Kutta method. Two evaluation paths are
provided:

* :func:`weights` + :func:`apply_convolution` computes the weight matrices
  W_0..W_N explicitly and forms the discrete convolution. Cheap symbols only.
* :func:`apply_symbol` transforms the data instead, so that K(s) is only ever
  applied to vectors. This is the path for symbols that involve linear solves.

Both evaluate K on the scaled circle zeta_l = radius * exp(2 pi i l / L),
L = oversampling * (N + 1), and invert with an FFT.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import integrate

from . import get_rkcq_logger
from .butcher import DEFAULT_CONDITION_LIMIT, ButcherTableau, delta_eigen
from .exceptions import (
    ContractError,
    DiagonalizationError,
    DomainError,
    RKCQError,
    SymbolEvaluationError,
    TableauError,
)

logger = get_rkcq_logger(__name__)

Action = Callable[[np.ndarray], np.ndarray]
Radius = Union[float, str, None]


@dataclass(frozen=True, eq=False)
class Symbol:
    """
    An analytic operator family s -> K(s) acting on complex D-vectors.

    ``evaluate(s)`` returns the action of K(s); the action accepts arrays of
    shape (D,) or (D, r) and acts on the first axis. ``conjugate_symmetric``
    declares K(conj s) = conj K(s), which real time-domain data exploit.
    """
    name: str
    dim: int
    evaluate: Callable[[complex], Action]
    sigma0: float = 0.0
    conjugate_symmetric: bool = True

    def action(self, s: complex) -> Action:
        if not complex(s).real > 0:
            raise DomainError(f"Symbol '{self.name}' evaluated at s={s:.6g} outside Re s > 0")
        return self.evaluate(s)

    def matrix(self, s: complex) -> np.ndarray:
        """Dense D x D matrix of K(s), built column by column."""
        return np.asarray(self.action(s)(np.eye(self.dim, dtype=complex)), dtype=complex).reshape(self.dim, self.dim)

    @classmethod
    def scalar(cls, name: str, fn: Callable[[complex], complex], dim: int = 1,
               conjugate_symmetric: bool = True) -> "Symbol":
        """K(s) = fn(s) * I on C^dim."""
        return cls(name, dim, lambda s: (lambda x: fn(s) * x), conjugate_symmetric=conjugate_symmetric)

    @classmethod
    def diagonal(cls, name: str, fns: Sequence[Callable[[complex], complex]]) -> "Symbol":
        """Componentwise scalar symbols K(s) = diag(fn_1(s), ..., fn_D(s))."""
        fns = tuple(fns)

        def evaluate(s):
            scale = np.array([fn(s) for fn in fns])

            def act(x):
                x = np.asarray(x)
                return scale.reshape((-1,) + (1,) * (x.ndim - 1)) * x
            return act
        return cls(name, len(fns), evaluate)

    @classmethod
    def power(cls, mu: float) -> "Symbol":
        return cls.scalar(f"s^{mu:g}", lambda s: s ** mu)

    def times(self, other: "Symbol") -> "Symbol":
        """Product K_self(s) K_other(s)."""
        if other.dim != self.dim:
            raise ContractError(f"Cannot multiply symbols of dimension {self.dim} and {other.dim}")

        def evaluate(s):
            left, right = self.evaluate(s), other.evaluate(s)
            return lambda x: left(right(x))
        return Symbol(f"{self.name}*{other.name}", self.dim, evaluate,
                      max(self.sigma0, other.sigma0),
                      self.conjugate_symmetric and other.conjugate_symmetric)

    def divided_by_s(self) -> "Symbol":
        """s^-1 K(s)."""
        def evaluate(s):
            act = self.evaluate(s)
            return lambda x: act(x) / s
        return Symbol(f"{self.name}/s", self.dim, evaluate, self.sigma0, self.conjugate_symmetric)


@dataclass(frozen=True, eq=False)
class StageGrid:
    """Uniform time grid t_j = j k, j = 0..N-1, with stage times t_j + c_l k."""
    k: float
    N: int
    c: np.ndarray

    def __post_init__(self):
        if not self.k > 0:
            raise ContractError(f"Time step must be positive, got k={self.k}")
        if int(self.N) != self.N or self.N < 1:
            raise ContractError(f"Step count must be a positive integer, got N={self.N}")
        c = np.array(self.c, dtype=float).reshape(-1)
        if np.any(np.diff(c) < 0):
            raise ContractError("Stage abscissae must be nondecreasing")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "N", int(self.N))

    @classmethod
    def from_final_time(cls, T: float, N: int, c) -> "StageGrid":
        return cls(T / N, N, c)

    @property
    def T(self) -> float:
        return self.N * self.k

    @property
    def stages(self) -> int:
        return self.c.size

    @property
    def step_times(self) -> np.ndarray:
        return self.k * np.arange(self.N)

    @property
    def stage_times(self) -> np.ndarray:
        """(N, m) array of t_j + c_l k."""
        return self.step_times[:, None] + self.k * self.c[None, :]

    @property
    def output_times(self) -> np.ndarray:
        """t_1..t_N, where the CQ outputs live."""
        return self.k * np.arange(1, self.N + 1)


@dataclass
class WeightSequence:
    """
    CQ weights W_0..W_N as an (N+1, mD, mD) array, indexed stage-major:
    row a*D + d is stage a, component d.
    """
    tableau_name: str
    symbol_name: str
    k: float
    radius: float
    stages: int
    dim: int
    entries: np.ndarray

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def last_stage_rows(self) -> np.ndarray:
        """(N+1, D, mD): the rows selected by b^T A^-1 for stiffly accurate methods."""
        D = self.dim
        return self.entries[:, (self.stages - 1) * D:self.stages * D, :]

    def to_frame(self) -> pd.DataFrame:
        n, rows, cols = np.indices(self.entries.shape)
        values = self.entries.reshape(-1)
        return pd.DataFrame({
            "n": n.reshape(-1),
            "block_row": rows.reshape(-1),
            "block_col": cols.reshape(-1),
            "re": values.real,
            "im": values.imag,
        })

    def to_csv(self, path) -> None:
        """Write ``n,block_row,block_col,re,im`` rows."""
        self.to_frame().to_csv(path, index=False, float_format="%.16e", lineterminator="\n")


def contour_radius(N: int, oversampling: int = 1, radius: Radius = "auto") -> float:
    """
    Radius of the scaled circle. ``auto`` gives eps^(1 / ((oversampling+1)(N+1))),
    which is eps^(1/(2(N+1))) without oversampling.
    """
    if radius is None or (isinstance(radius, str) and radius.lower() == "auto"):
        return float(np.finfo(float).eps ** (1.0 / ((oversampling + 1) * (N + 1))))
    radius = float(radius)
    if not 0.0 < radius < 1.0:
        raise DomainError(f"Contour radius must lie in (0, 1), got {radius}")
    return radius


def _frequency_count(N: int, oversampling: int) -> int:
    if int(oversampling) != oversampling or oversampling < 1:
        raise ContractError(f"Oversampling must be a positive integer, got {oversampling}")
    return int(oversampling) * (N + 1)


def _diagonalize(tableau: ButcherTableau, zeta: complex, k: float, condition_limit: float):
    eigenvalues, P, _ = delta_eigen(tableau, zeta, condition_limit)
    frequencies = eigenvalues / k
    if np.any(frequencies.real <= 0):
        raise DomainError(
            f"Delta(zeta)/k has an eigenvalue outside Re s > 0 at zeta={zeta:.6g}"
        )
    return frequencies, P, np.linalg.inv(P)


def _apply_at(sym: Symbol, s: complex, x: np.ndarray) -> np.ndarray:
    try:
        return np.asarray(sym.action(s)(x))
    except SymbolEvaluationError:
        raise
    except DiagonalizationError:
        raise
    except Exception as exc:
        raise SymbolEvaluationError(s, exc)


def _map_frequencies(fn, indices: Sequence[int], threads: int) -> List:
    if threads <= 1 or len(indices) < 2:
        return [fn(l) for l in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, indices))


def _require_stiffly_accurate(tableau: ButcherTableau) -> None:
    if not tableau.is_stiffly_accurate:
        raise TableauError(
            f"Tableau '{tableau.name}' is not stiffly accurate; the last stage is not the step value"
        )


def weights(sym: Symbol, tableau: ButcherTableau, grid: StageGrid, radius: Radius = "auto",
            oversampling: int = 1, threads: int = 1,
            condition_limit: float = DEFAULT_CONDITION_LIMIT) -> WeightSequence:
    """
    Weight matrices W_n of K(Delta(zeta)/k) = sum_n W_n zeta^n, n = 0..N.

    W_n = radius^-n / L * sum_l K(Delta(zeta_l)/k) omega^(-l n). For
    conjugate-symmetric symbols only half of the circle is evaluated and the
    weights come out real.
    """
    m, D, N, k = tableau.stages, sym.dim, grid.N, grid.k
    L = _frequency_count(N, oversampling)
    rho = contour_radius(N, oversampling, radius)
    symmetric = sym.conjugate_symmetric
    count = L // 2 + 1 if symmetric else L

    def block_matrix(l: int) -> np.ndarray:
        zeta = rho * np.exp(2j * np.pi * l / L)
        frequencies, P, P_inv = _diagonalize(tableau, zeta, k, condition_limit)
        per_stage = np.stack([
            _apply_at(sym, s, np.eye(D, dtype=complex)).reshape(D, D) for s in frequencies
        ])
        return np.einsum("ai,ib,ide->adbe", P, P_inv, per_stage).reshape(m * D, m * D)

    samples = _map_frequencies(block_matrix, range(count), threads)
    K = np.empty((L, m * D, m * D), dtype=complex)
    K[:count] = samples
    if symmetric:
        for l in range(count, L):
            K[l] = np.conj(K[L - l])

    W = np.fft.fft(K, axis=0)[:N + 1] / L
    W *= (rho ** -np.arange(N + 1))[:, None, None]
    if symmetric:
        W = W.real
    logger.debug("Computed %d weights for %s with %s (radius %.6f, L=%d)",
                 N + 1, sym.name, tableau.name, rho, L)
    return WeightSequence(tableau.name, sym.name, k, rho, m, D, W)


def _stage_samples(samples, m: int, dim: Optional[int]) -> Tuple[np.ndarray, bool]:
    """Normalize to (n, m, D); report whether the caller used the scalar (n, m) form."""
    samples = np.asarray(samples)
    if samples.ndim == 2:
        samples = samples[:, :, None]
        scalar_form = True
    elif samples.ndim == 3:
        scalar_form = False
    else:
        raise ContractError(f"Stage samples must have shape (n, m) or (n, m, D), got {samples.shape}")
    if samples.shape[1] != m:
        raise ContractError(f"Stage samples carry {samples.shape[1]} stages, tableau has {m}")
    if dim is not None and samples.shape[2] != dim:
        raise ContractError(f"Stage samples have dimension {samples.shape[2]}, symbol has {dim}")
    return samples, scalar_form


def apply_convolution(w: WeightSequence, tableau: ButcherTableau, samples) -> np.ndarray:
    """
    u(t_{n+1}) = sum_{j<=n} [last stage rows of W_{n-j}] g_j.

    ``samples`` has shape (n, m, D), or (n, m) for scalar symbols, with
    n <= number of weights. Returns (n, D), or (n,) in the scalar form.
    """
    _require_stiffly_accurate(tableau)
    if tableau.stages != w.stages:
        raise ContractError(f"Weights are for {w.stages} stages, tableau '{tableau.name}' has {tableau.stages}")
    g, scalar_form = _stage_samples(samples, w.stages, w.dim)
    n = g.shape[0]
    if n > w.size:
        raise ContractError(f"{n} sample steps but only {w.size} weights")
    flat = g.reshape(n, -1)
    last = w.last_stage_rows
    dtype = np.result_type(last.dtype, flat.dtype)
    out = np.zeros((n, w.dim), dtype=dtype)
    for j in range(n):
        out[j:] += np.einsum("nde,e->nd", last[:n - j], flat[j])
    return out[:, 0] if scalar_form else out


def apply_symbol(sym: Symbol, tableau: ButcherTableau, grid: StageGrid, samples,
                 radius: Radius = "auto", oversampling: int = 1, threads: int = 1,
                 exploit_symmetry: bool = True,
                 condition_limit: float = DEFAULT_CONDITION_LIMIT) -> np.ndarray:
    """
    All-frequencies-at-once CQ application.

    Scale the samples by radius^j, transform in the step index, apply
    K(lambda_i / k) to the eigen-components of Delta at every frequency,
    transform back, unscale and keep the last stage. Output at t_1..t_N with
    shape (N, D), or (N,) for samples given as (N, m).

    With real samples and a conjugate-symmetric symbol only half of the
    frequencies are evaluated and the output is real.
    """
    _require_stiffly_accurate(tableau)
    m, N, k = tableau.stages, grid.N, grid.k
    if grid.stages != m:
        raise ContractError(f"Grid has {grid.stages} stages, tableau '{tableau.name}' has {m}")
    g, scalar_form = _stage_samples(samples, m, sym.dim)
    if g.shape[0] != N:
        raise ContractError(f"Expected samples for {N} steps, got {g.shape[0]}")
    D = g.shape[2]

    L = _frequency_count(N, oversampling)
    rho = contour_radius(N, oversampling, radius)
    real_data = not np.iscomplexobj(g) or not np.any(g.imag)
    symmetric = exploit_symmetry and sym.conjugate_symmetric and real_data
    count = L // 2 + 1 if symmetric else L

    scaled = np.zeros((L, m, D), dtype=complex)
    scaled[:N] = g * (rho ** np.arange(N))[:, None, None]
    transformed = np.fft.ifft(scaled, axis=0)

    def last_stage(l: int) -> np.ndarray:
        zeta = rho * np.exp(2j * np.pi * l / L)
        frequencies, P, P_inv = _diagonalize(tableau, zeta, k, condition_limit)
        components = P_inv @ transformed[l]
        result = np.zeros(D, dtype=complex)
        for i, s in enumerate(frequencies):
            weight = P[m - 1, i]
            if weight == 0:
                continue
            result += weight * _apply_at(sym, s, components[i]).reshape(D)
        return result

    values = _map_frequencies(last_stage, range(count), threads)
    U = np.empty((L, D), dtype=complex)
    U[:count] = values
    if symmetric:
        U[count:] = np.conj(U[1:L - count + 1][::-1])

    out = np.fft.fft(U, axis=0)[:N] * (rho ** -np.arange(N))[:, None]
    if symmetric:
        out = out.real
    logger.debug("Applied %s with %s on %d steps (%d of %d frequencies evaluated)",
                 sym.name, tableau.name, N, count, L)
    return out[:, 0] if scalar_form else out


@dataclass
class RateFit:
    """Observed convergence rates of an error ladder."""
    steps: np.ndarray
    errors: np.ndarray
    pair_rates: np.ndarray
    slope: float

    def rows(self) -> List[Tuple[float, float, Optional[float]]]:
        rates = [None] + [float(r) for r in self.pair_rates]
        return [(float(k), float(e), r) for k, e, r in zip(self.steps, self.errors, rates)]


def convergence_rate(errors: Sequence[Tuple[float, float]]) -> RateFit:
    """
    Pairwise rates log(e_i/e_{i+1}) / log(k_i/k_{i+1}) and the least-squares
    slope of log e against log k.
    """
    data = np.asarray(list(errors), dtype=float)
    if data.ndim != 2 or data.shape[0] < 2 or data.shape[1] != 2:
        raise ContractError("At least two (k, error) points are needed to fit a rate")
    ks, es = data[:, 0], data[:, 1]
    if np.any(np.diff(ks) >= 0):
        raise ContractError("Step sizes must be strictly decreasing")
    if np.any(es <= 0) or not np.all(np.isfinite(es)):
        raise ContractError("Errors must be positive and finite")
    log_k, log_e = np.log(ks), np.log(es)
    pair_rates = np.diff(log_e) / np.diff(log_k)
    slope = float(np.polyfit(log_k, log_e, 1)[0])
    return RateFit(ks, es, pair_rates, slope)


def _sine_power_data(power: int, mu: int) -> Tuple[Callable, Callable]:
    """(input g, exact response K(d/dt) g) for g(t) = sin(t)^power and K(s) = s^mu."""
    g = lambda t: np.sin(t) ** power
    if mu == 0:
        return g, g
    if mu == 1:
        return g, lambda t: power * np.sin(t) ** (power - 1) * np.cos(t)
    if mu == 2:
        return g, lambda t: (power * (power - 1) * np.sin(t) ** (power - 2) * np.cos(t) ** 2
                             - power * np.sin(t) ** power)
    if mu == -1:
        def integral(t):
            t = np.asarray(t, dtype=float)
            pieces = [integrate.quad(g, a, b, epsabs=1e-15, epsrel=1e-14, limit=200)[0]
                      for a, b in zip(np.concatenate([[0.0], t[:-1]]), t)]
            return np.cumsum(pieces)
        return g, integral
    raise ContractError(f"Scalar harness supports mu in (-1, 0, 1, 2), got {mu}")


def scalar_convergence(mu: int, tableau: ButcherTableau, ladder: Sequence[int],
                       final_time: float = 4.0, power: int = 4, oversampling: int = 3,
                       radius: Radius = "auto") -> List[Tuple[float, float]]:
    """
    Max-norm errors of CQ for K(s) = s^mu applied to g(t) = sin(t)^power on
    [0, final_time], one (k, error) pair per step count in ``ladder``.

    ``power`` is the order to which g vanishes at t = 0.
    """
    if power < max(2, mu):
        raise ContractError(f"sin^{power} is not smooth enough for mu={mu}")
    g, exact = _sine_power_data(power, mu)
    symbol = Symbol.power(mu)
    results = []
    for N in ladder:
        grid = StageGrid.from_final_time(final_time, N, tableau.c)
        approx = apply_symbol(symbol, tableau, grid, g(grid.stage_times),
                              radius=radius, oversampling=oversampling)
        error = float(np.max(np.abs(approx - exact(grid.output_times))))
        results.append((grid.k, error))
        logger.debug("mu=%d %s N=%d error %.3e", mu, tableau.name, N, error)
    return results


__all__ = [
    "Symbol",
    "StageGrid",
    "WeightSequence",
    "RateFit",
    "contour_radius",
    "weights",
    "apply_convolution",
    "apply_symbol",
    "convergence_rate",
    "scalar_convergence",
]
