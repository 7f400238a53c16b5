"""
Implicit Runge-Kutta tableaux for convolution quadrature.

Provides the Radau IIA family (1, 2, 3 and 5 stages) and two Lobatto IIIC
methods, a validator that checks the properties convolution quadrature relies
on (invertible A, stiff accuracy, c_m = 1, order and stage order, strict
contractivity on the imaginary axis), the stability function R(z) and the
generating matrix Delta(zeta) together with its eigen-splitting.
"""
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Callable, Dict, List, NamedTuple, Tuple

import mpmath
import numpy as np
from numpy.polynomial import Polynomial

from . import get_rkcq_logger
from .exceptions import (
    ContractError,
    DiagonalizationError,
    DomainError,
    NotImplementedFeatureError,
    SingularityError,
    TableauError,
)

logger = get_rkcq_logger(__name__)

TABLEAU_TOL = 1e-13
ORDER_TOL = 1e-12
DEFAULT_CONDITION_LIMIT = 1e8


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    """
    Coefficients (A, b, c) of an m-stage Runge-Kutta method.

    The stored orders are metadata; :func:`validate` verifies them.
    """
    name: str
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    classical_order: int
    stage_order: int

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float).reshape(-1)
        c = np.array(self.c, dtype=float).reshape(-1)
        m = b.size
        if A.shape != (m, m) or c.size != m or m == 0:
            raise TableauError(
                f"Tableau '{self.name}' has inconsistent shapes: A{A.shape}, b({b.size}), c({c.size})"
            )
        for arr in (A, b, c):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def stages(self) -> int:
        return self.b.size

    @property
    def p(self) -> int:
        return self.classical_order

    @property
    def q(self) -> int:
        return self.stage_order

    @property
    def is_stiffly_accurate(self) -> bool:
        return bool(np.max(np.abs(self.b - self.A[-1])) <= TABLEAU_TOL)

    @cached_property
    def A_inv(self) -> np.ndarray:
        try:
            inv = np.linalg.inv(self.A)
        except np.linalg.LinAlgError as exc:
            raise SingularityError(f"Coefficient matrix of '{self.name}' is singular", exc)
        inv.setflags(write=False)
        return inv

    def describe(self) -> str:
        """Human-readable listing of the coefficients."""
        lines = [f"{self.name}: m={self.stages}, p={self.p}, q={self.q}"]
        for i in range(self.stages):
            row = " ".join(f"{a: .16f}" for a in self.A[i])
            lines.append(f"  {self.c[i]:.16f} | {row}")
        lines.append("  " + " " * 18 + "| " + " ".join(f"{x: .16f}" for x in self.b))
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def _radau_polynomial_mp(m: int) -> List[mpmath.mpf]:
    """Monic coefficients (highest first) of d^{m-1}/dx^{m-1}[x^{m-1}(x-1)^m]."""
    # ascending coefficients of x^{m-1}(x-1)^m
    coeffs = [mpmath.mpf(0)] * (2 * m)
    for j in range(m + 1):
        coeffs[m - 1 + j] = mpmath.binomial(m, j) * (-1) ** (m - j)
    for _ in range(m - 1):
        coeffs = [coeffs[i] * i for i in range(1, len(coeffs))]
    lead = coeffs[-1]
    return [x / lead for x in reversed(coeffs)]


@lru_cache(maxsize=None)
def _collocation_tableau_mp(m: int, dps: int = 40) -> Tuple[Tuple[Tuple[float, ...], ...], Tuple[float, ...], Tuple[float, ...]]:
    """Radau IIA coefficients computed in extended precision, rounded to float."""
    with mpmath.workdps(dps):
        monic = _radau_polynomial_mp(m)
        companion = mpmath.zeros(m, m)
        for i in range(1, m):
            companion[i, i - 1] = 1
        for i in range(m):
            companion[i, m - 1] = -monic[m - i]
        eigenvalues = mpmath.eig(companion, left=False, right=False)
        nodes = sorted(mpmath.re(ev) for ev in eigenvalues)
        nodes[-1] = mpmath.mpf(1)

        vandermonde = mpmath.matrix(m, m)
        integrated = mpmath.matrix(m, m)
        for i, ci in enumerate(nodes):
            for k in range(m):
                vandermonde[i, k] = ci ** k
                integrated[i, k] = ci ** (k + 1) / (k + 1)
        A = integrated * mpmath.inverse(vandermonde)

        A_f = tuple(tuple(float(A[i, j]) for j in range(m)) for i in range(m))
        b_f = A_f[-1]
        c_f = tuple(float(ci) for ci in nodes)
    return A_f, b_f, c_f


@lru_cache(maxsize=None)
def radau_iia(m: int) -> ButcherTableau:
    """
    The m-stage Radau IIA method (order 2m-1, stage order m).

    One, two and three stages use closed-form coefficients; five stages are
    built from the right Radau nodes in extended precision.
    """
    if m < 1:
        raise ContractError(f"Stage count must be at least 1, got {m}")
    name = f"radau-iia-{m}"
    if m == 1:
        return ButcherTableau(name, [[1.0]], [1.0], [1.0], 1, 1)
    if m == 2:
        return ButcherTableau(
            name,
            [[5.0 / 12.0, -1.0 / 12.0], [3.0 / 4.0, 1.0 / 4.0]],
            [3.0 / 4.0, 1.0 / 4.0],
            [1.0 / 3.0, 1.0],
            3, 2,
        )
    if m == 3:
        r6 = np.sqrt(6.0)
        A = [
            [(88.0 - 7.0 * r6) / 360.0, (296.0 - 169.0 * r6) / 1800.0, (-2.0 + 3.0 * r6) / 225.0],
            [(296.0 + 169.0 * r6) / 1800.0, (88.0 + 7.0 * r6) / 360.0, (-2.0 - 3.0 * r6) / 225.0],
            [(16.0 - r6) / 36.0, (16.0 + r6) / 36.0, 1.0 / 9.0],
        ]
        return ButcherTableau(name, A, A[2], [(4.0 - r6) / 10.0, (4.0 + r6) / 10.0, 1.0], 5, 3)
    if m == 5:
        A, b, c = _collocation_tableau_mp(m)
        return ButcherTableau(name, A, b, c, 2 * m - 1, m)
    raise NotImplementedFeatureError(
        name, f"Radau IIA with {m} stages is not implemented (supported: 1, 2, 3, 5)"
    )


@lru_cache(maxsize=None)
def lobatto_iiic(m: int) -> ButcherTableau:
    """The m-stage Lobatto IIIC method (order 2m-2, stage order m-1)."""
    name = f"lobatto-iiic-{m}"
    if m == 2:
        return ButcherTableau(name, [[0.5, -0.5], [0.5, 0.5]], [0.5, 0.5], [0.0, 1.0], 2, 1)
    if m == 3:
        A = [
            [1.0 / 6.0, -1.0 / 3.0, 1.0 / 6.0],
            [1.0 / 6.0, 5.0 / 12.0, -1.0 / 12.0],
            [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
        ]
        return ButcherTableau(name, A, A[2], [0.0, 0.5, 1.0], 4, 2)
    raise NotImplementedFeatureError(
        name, f"Lobatto IIIC with {m} stages is not implemented (supported: 2, 3)"
    )


_REGISTRY: Dict[str, Callable[[], ButcherTableau]] = {
    "radau-iia-1": lambda: radau_iia(1),
    "radau-iia-2": lambda: radau_iia(2),
    "radau-iia-3": lambda: radau_iia(3),
    "radau-iia-5": lambda: radau_iia(5),
    "lobatto-iiic-2": lambda: lobatto_iiic(2),
    "lobatto-iiic-3": lambda: lobatto_iiic(3),
}


def available_tableaux() -> List[str]:
    return list(_REGISTRY)


def get_tableau(tableau_id: str) -> ButcherTableau:
    """Look a tableau up by its string id, e.g. ``"radau-iia-3"``."""
    try:
        factory = _REGISTRY[tableau_id.strip().lower()]
    except KeyError:
        raise TableauError(
            f"Unknown tableau id '{tableau_id}'. Available: {', '.join(available_tableaux())}"
        )
    return factory()


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    """Pass/fail outcome of every tableau check."""
    tableau_name: str
    classical_order: int
    stage_order: int
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]

    def __getitem__(self, name: str) -> CheckResult:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def to_text(self) -> str:
        lines = [f"Tableau {self.tableau_name} (p={self.classical_order}, q={self.stage_order})"]
        for check in self.checks:
            status = "PASS" if check.passed else "FAIL"
            lines.append(f"  [{status}] {check.name}: {check.detail}")
        lines.append("Result: " + ("all checks passed" if self.passed else f"{len(self.failures())} check(s) failed"))
        return "\n".join(lines)


Tree = Tuple["Tree", ...]


@lru_cache(maxsize=None)
def _forests(order: int) -> Tuple[Tuple[Tree, ...], ...]:
    """All multisets of rooted trees with ``order`` nodes in total, canonically sorted."""
    if order == 0:
        return ((),)
    found = set()
    for first in range(1, order + 1):
        for tree in rooted_trees(first):
            for rest in _forests(order - first):
                found.add(tuple(sorted((tree,) + rest)))
    return tuple(sorted(found))


@lru_cache(maxsize=None)
def rooted_trees(order: int) -> Tuple[Tree, ...]:
    """Rooted trees with exactly ``order`` nodes; a tree is the sorted tuple of its subtrees."""
    if order < 1:
        return ()
    return _forests(order - 1)


def tree_order(tree: Tree) -> int:
    return 1 + sum(tree_order(child) for child in tree)


def tree_density(tree: Tree) -> int:
    """gamma(t): order(t) times the densities of the subtrees."""
    result = tree_order(tree)
    for child in tree:
        result *= tree_density(child)
    return result


def _check_order_conditions(t: ButcherTableau) -> CheckResult:
    memo: Dict[Tree, np.ndarray] = {}

    def stage_weights(tree: Tree) -> np.ndarray:
        if tree not in memo:
            g = np.ones(t.stages)
            for child in tree:
                g = g * (t.A @ stage_weights(child))
            memo[tree] = g
        return memo[tree]

    worst, worst_tree, count = 0.0, None, 0
    for order in range(1, t.p + 1):
        for tree in rooted_trees(order):
            residual = abs(float(t.b @ stage_weights(tree)) - 1.0 / tree_density(tree))
            count += 1
            if residual > worst:
                worst, worst_tree = residual, tree
    passed = worst <= ORDER_TOL
    detail = f"{count} trees up to order {t.p}, max residual {worst:.2e}"
    if not passed:
        detail += f" (worst tree of order {tree_order(worst_tree)})"
    return CheckResult("order conditions", passed, detail)


def _check_stage_order(t: ButcherTableau) -> CheckResult:
    worst = 0.0
    for k in range(1, t.q + 1):
        lhs = t.A @ t.c ** (k - 1)
        worst = max(worst, float(np.max(np.abs(lhs - t.c ** k / k))))
    return CheckResult("stage order C(q)", worst <= ORDER_TOL, f"q={t.q}, max residual {worst:.2e}")


def imaginary_axis_defect(t: ButcherTableau) -> Polynomial:
    """
    E(y) = |Q(iy)|^2 - |P(iy)|^2 with R = P/Q; |R(iy)| < 1 exactly where E(y) > 0.

    Rounding residue in coefficients that cancel analytically is zeroed.
    """
    m = t.stages
    ones = np.ones((m, 1))
    q_coef = np.poly(t.A)
    p_coef = np.poly(t.A - ones @ t.b.reshape(1, -1))
    powers = 1j ** np.arange(m + 1)
    Q = Polynomial(q_coef * powers)
    P = Polynomial(p_coef * powers)
    QQ = Q * Polynomial(np.conj(Q.coef))
    PP = P * Polynomial(np.conj(P.coef))
    scale = max(np.max(np.abs(QQ.coef)), np.max(np.abs(PP.coef)))
    n = max(QQ.coef.size, PP.coef.size)
    coef = np.zeros(n)
    coef[:QQ.coef.size] += QQ.coef.real
    coef[:PP.coef.size] -= PP.coef.real
    coef[np.abs(coef) < 1e-12 * scale] = 0.0
    return Polynomial(coef)


def _check_contractivity(t: ButcherTableau, samples: np.ndarray) -> CheckResult:
    defect = imaginary_axis_defect(t)(samples)
    bad = samples[defect <= 0.0]
    if bad.size:
        return CheckResult(
            "contractivity |R(iy)|<1", False,
            f"{bad.size} of {samples.size} samples fail, first at y={bad[0]:.3e}",
        )
    largest = max(abs(stability_function(t, 1j * y)) for y in samples[::10])
    return CheckResult(
        "contractivity |R(iy)|<1", True,
        f"{samples.size} samples in [{samples[0]:.0e}, {samples[-1]:.0e}], max sampled |R| {largest:.6f}",
    )


def validate(t: ButcherTableau, contractivity_samples: int = 400) -> ValidationReport:
    """
    Check the properties convolution quadrature needs from a Runge-Kutta method.

    Never raises; a check that cannot be evaluated is reported as failed.
    """
    report = ValidationReport(t.name, t.p, t.q)
    samples = np.logspace(-3.0, 6.0, contractivity_samples)

    def run(name: str, check: Callable[[], CheckResult]):
        try:
            report.checks.append(check())
        except Exception as exc:  # report carries the failure
            report.checks.append(CheckResult(name, False, f"could not evaluate: {exc}"))

    def invertibility() -> CheckResult:
        cond = float(np.linalg.cond(t.A))
        ok = bool(np.isfinite(cond) and cond < 1e12)
        return CheckResult("A invertible", ok, f"cond(A)={cond:.3e}")

    def row_sums() -> CheckResult:
        err = float(np.max(np.abs(t.A.sum(axis=1) - t.c)))
        return CheckResult("row sums", err <= TABLEAU_TOL, f"max |sum_j a_ij - c_i| = {err:.2e}")

    def stiff_accuracy() -> CheckResult:
        err = float(np.max(np.abs(t.b - t.A[-1])))
        return CheckResult("stiff accuracy", err <= TABLEAU_TOL, f"max |b - A[m-1,:]| = {err:.2e}")

    def last_node() -> CheckResult:
        err = abs(float(t.c[-1]) - 1.0)
        return CheckResult("c_m = 1", err <= TABLEAU_TOL, f"c_m = {t.c[-1]:.16f}")

    run("A invertible", invertibility)
    run("row sums", row_sums)
    run("stiff accuracy", stiff_accuracy)
    run("c_m = 1", last_node)
    run("order conditions", lambda: _check_order_conditions(t))
    run("stage order C(q)", lambda: _check_stage_order(t))
    run("contractivity |R(iy)|<1", lambda: _check_contractivity(t, samples))

    logger.debug("Validated %s: %s", t.name, "pass" if report.passed else "fail")
    return report


# ---------------------------------------------------------------------------
# R(z), Delta(zeta)
# ---------------------------------------------------------------------------

def stability_function(t: ButcherTableau, z: complex) -> complex:
    """R(z) = 1 + z b^T (I - zA)^{-1} 1."""
    m = t.stages
    M = np.eye(m) - z * t.A
    if np.linalg.cond(M) > 1.0 / np.finfo(float).eps:
        raise SingularityError(f"I - zA is singular at z={z:.6g} for '{t.name}'")
    return complex(1.0 + z * (t.b @ np.linalg.solve(M, np.ones(m, dtype=complex))))


def delta(t: ButcherTableau, zeta: complex) -> np.ndarray:
    """
    Delta(zeta) = (A + zeta/(1-zeta) 1 b^T)^{-1}.

    Stiffly accurate methods use the closed form A^{-1}(I - zeta 1 e_m^T).
    """
    if abs(zeta) >= 1.0:
        raise DomainError(f"Delta(zeta) requires |zeta| < 1, got |zeta|={abs(zeta):.6g}")
    if t.is_stiffly_accurate:
        D = t.A_inv.astype(complex)
        D[:, -1] -= zeta * t.A_inv.sum(axis=1)
        return D
    m = t.stages
    return np.linalg.inv(t.A + zeta / (1.0 - zeta) * np.outer(np.ones(m), t.b))


class DeltaEigen(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    condition: float


def delta_eigen(t: ButcherTableau, zeta: complex,
                condition_limit: float = DEFAULT_CONDITION_LIMIT) -> DeltaEigen:
    """Eigen-splitting Delta(zeta) = P diag(lambda) P^{-1}, with cond_2(P)."""
    D = delta(t, zeta)
    eigenvalues, eigenvectors = np.linalg.eig(D)
    condition = float(np.linalg.cond(eigenvectors))
    if not np.isfinite(condition) or condition > condition_limit:
        raise DiagonalizationError(zeta, condition, condition_limit)
    return DeltaEigen(eigenvalues, eigenvectors, condition)


__all__ = [
    "ButcherTableau",
    "CheckResult",
    "ValidationReport",
    "DeltaEigen",
    "radau_iia",
    "lobatto_iiic",
    "get_tableau",
    "available_tableaux",
    "validate",
    "rooted_trees",
    "tree_order",
    "tree_density",
    "imaginary_axis_defect",
    "stability_function",
    "delta",
    "delta_eigen",
]
