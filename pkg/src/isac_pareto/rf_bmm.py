"""RF precoder solver by majorization-minimization with bisected duals.

Each iteration linearizes the quadratic objective and constraints around the
current unit-modulus iterate (the trace-scaled identity majorizer keeps the
surrogates tight at the anchor and dominating everywhere on the circle
manifold), then solves the surrogate program exactly: the Lagrangian is
linear in the precoder, so the primal minimizer is a closed-form phase
projection, and each dual multiplier is driven to complementary slackness by
scalar bisection with a doubling upper bracket.

SINR surrogates are handled in noise-normalized units and the power
surrogate in budget-normalized units so the multiplier windows are
dimensionless.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from .numerics import phase_project
from .quadratics import QuadraticForms

__all__ = [
    "DualState",
    "MajorizerSet",
    "BmmResult",
    "InfeasibleStart",
    "DualDivergence",
    "majorize",
    "primal_step",
    "dual_bisection",
    "bmm_solve",
]

MAX_DUAL_SWEEPS = 50
MAX_BRACKET_DOUBLINGS = 64
MAX_BISECT_STEPS = 200


class InfeasibleStart(ValueError):
    """The starting point violates the constraints it must be feasible for."""


class DualDivergence(RuntimeError):
    """A dual bracket grew past 2^64: the surrogate constraint is unattainable."""


@dataclass
class DualState:
    """Multipliers for the active SINR constraints and the power constraint."""

    lam: np.ndarray
    vartheta: float = 0.0
    lagrangian_trace: List[float] = field(default_factory=list)

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        if np.any(self.lam < 0) or self.vartheta < 0:
            raise ValueError("dual multipliers must be nonnegative")

    @classmethod
    def zeros(cls, n_active: int) -> "DualState":
        return cls(lam=np.zeros(n_active), vartheta=0.0)


@dataclass(frozen=True)
class MajorizerSet:
    """Linear-plus-constant surrogates anchored at one unit-modulus point.

    Every surrogate evaluates as 2*Re(d^H u) + k. The objective surrogate is
    in raw units; constraint surrogates are normalized (noise / budget).
    """

    anchor: np.ndarray
    u_obj: np.ndarray
    k_obj: float
    u_g: np.ndarray       # (n_active, D)
    k_g: np.ndarray       # (n_active,)
    u_p: np.ndarray
    k_p: float

    def surrogate_objective(self, d: np.ndarray) -> float:
        return 2.0 * float(np.real(np.vdot(self.u_obj, d))) + self.k_obj

    def surrogate_sinr(self, d: np.ndarray, k: int) -> float:
        return 2.0 * float(np.real(np.vdot(self.u_g[k], d))) + self.k_g[k]

    def surrogate_power(self, d: np.ndarray) -> float:
        return 2.0 * float(np.real(np.vdot(self.u_p, d))) + self.k_p


@dataclass
class BmmResult:
    d: np.ndarray
    objective_trace: List[float]
    duals: DualState
    iterations: int
    converged: bool


def _require_unit_modulus(d: np.ndarray, what: str) -> np.ndarray:
    d = np.asarray(d, dtype=np.complex128)
    if np.max(np.abs(np.abs(d) - 1.0)) > 1e-9:
        raise ValueError(f"{what} must have unit-modulus entries")
    return d


def majorize(q: QuadraticForms, d_anchor: np.ndarray) -> MajorizerSet:
    """Touching, dominating linear surrogates of the objective and constraints.

    For a quadratic x^H Q x (+ linear + const) the surrogate at anchor x0 is
    2*Re(x^H [(Q - tI) x0 (- p)]) - x0^H Q x0 + 2*t*D (+ const) with
    t = tr(Q), which is exact at x0 and an upper bound whenever |x_l| = 1.
    """
    d0 = _require_unit_modulus(d_anchor, "majorizer anchor")
    dim = q.d_dim

    xi_d0 = q.xi_dot(d0)
    quad0 = float(np.real(np.vdot(d0, xi_d0)))  # d0^H Xi d0 = ||F0 Fbb||^2
    u_obj = xi_d0 - q.c_r * d0 - q.a_r
    k_obj = -quad0 + 2.0 * dim * q.c_r + q.e_r

    n_act = q.active.size
    u_g = np.zeros((n_act, dim), dtype=np.complex128)
    k_g = np.zeros(n_act)
    for k, m in enumerate(q.active):
        delta_d0 = q.delta_dot(d0, m) / q.noise
        c_hat = q.c_m[m] / q.noise
        u_g[k] = delta_d0 - c_hat * d0
        k_g[k] = -float(np.real(np.vdot(d0, delta_d0))) + 2.0 * dim * c_hat + 1.0

    c_p_hat = q.c_p / q.p_max
    u_p = xi_d0 / q.p_max - c_p_hat * d0
    k_p = -quad0 / q.p_max + 2.0 * dim * c_p_hat - 1.0

    return MajorizerSet(anchor=d0, u_obj=u_obj, k_obj=k_obj,
                        u_g=u_g, k_g=k_g, u_p=u_p, k_p=k_p)


def primal_step(q: QuadraticForms, d_anchor: np.ndarray, duals: DualState) -> np.ndarray:
    """Closed-form minimizer of the surrogate Lagrangian on the circle manifold."""
    ms = majorize(q, d_anchor)
    return _primal_from(ms, duals.lam, duals.vartheta)


def _fast_unit(v: np.ndarray) -> np.ndarray:
    """Single-pass unit normalization for interior probe points; returned
    iterates go through phase_project for the exact-projection contract."""
    v = np.where(v == 0, 1.0 + 0.0j, v)
    return v / np.abs(v)


def _combined(ms: MajorizerSet, lam: np.ndarray, vartheta: float) -> np.ndarray:
    v = ms.u_obj + ms.u_p * vartheta
    if lam.size:
        v = v + lam @ ms.u_g
    return v


def _primal_from(ms: MajorizerSet, lam: np.ndarray, vartheta: float) -> np.ndarray:
    return phase_project(-_combined(ms, lam, vartheta))


def _lagrangian_at_minimizer(ms: MajorizerSet, lam: np.ndarray, vartheta: float) -> float:
    d = _fast_unit(-_combined(ms, lam, vartheta))
    value = ms.surrogate_objective(d) + vartheta * ms.surrogate_power(d)
    for k in range(lam.size):
        value += lam[k] * ms.surrogate_sinr(d, k)
    return value


def _solve_multiplier(constraint_at, tol: float) -> float:
    """Smallest multiplier driving the surrogate constraint into (-tol, 0].

    constraint_at(x) evaluates the surrogate constraint at the primal
    minimizer with this multiplier set to x and the rest held fixed.
    """
    if constraint_at(0.0) <= 0.0:
        return 0.0
    upper = 1.0
    if constraint_at(upper) > 0.0:
        doublings = 0
        while constraint_at(upper) >= 0.0:
            upper *= 2.0
            doublings += 1
            if doublings > MAX_BRACKET_DOUBLINGS:
                raise DualDivergence(
                    "dual bracket exceeded 2^64; surrogate constraint unattainable"
                )
        lower = upper / 2.0
    else:
        lower = 0.0
    x = 0.5 * (lower + upper)
    for _ in range(MAX_BISECT_STEPS):
        value = constraint_at(x)
        if -tol < value <= 0.0:
            return x
        if value >= 0.0:
            lower = x
        else:
            upper = x
        x = 0.5 * (lower + upper)
    return upper  # feasible side if the tolerance window was never hit


def dual_bisection(
    q: QuadraticForms,
    d_anchor: np.ndarray,
    duals_in: DualState,
    tol: float = 1e-6,
) -> DualState:
    """Coordinate ascent on the surrogate dual: each multiplier is either
    slack (set to zero) or bisected until its constraint sits in (-tol, 0].

    Sweeps repeat until the Lagrangian value at the primal minimizer is
    stable to relative tolerance tol, with a hard cap of 50 sweeps.
    """
    ms = majorize(q, d_anchor)
    return _dual_bisection_on(ms, duals_in, tol)


def _dual_bisection_on(ms: MajorizerSet, duals_in: DualState, tol: float) -> DualState:
    lam = duals_in.lam.copy()
    vth = duals_in.vartheta
    trace: List[float] = []

    for _ in range(MAX_DUAL_SWEEPS):
        for k in range(lam.size):
            # other multipliers frozen: the probe direction is u_g[k] alone
            others = lam.copy()
            others[k] = 0.0
            v_base = _combined(ms, others, vth)
            u_k = ms.u_g[k]
            k_k = ms.k_g[k]

            def sinr_at(x):
                d = _fast_unit(-(v_base + x * u_k))
                return 2.0 * float(np.real(np.vdot(u_k, d))) + k_k

            lam[k] = _solve_multiplier(sinr_at, tol)

        v_base = _combined(ms, lam, 0.0)
        u_p, k_p = ms.u_p, ms.k_p

        def power_at(x):
            d = _fast_unit(-(v_base + x * u_p))
            return 2.0 * float(np.real(np.vdot(u_p, d))) + k_p

        vth = _solve_multiplier(power_at, tol)
        value = _lagrangian_at_minimizer(ms, lam, vth)
        trace.append(value)
        if len(trace) >= 2 and abs(trace[-1] - trace[-2]) <= tol * max(abs(trace[-1]), 1e-30):
            break
    return DualState(lam=lam, vartheta=vth, lagrangian_trace=trace)


def _worst_violation(q: QuadraticForms, d: np.ndarray) -> float:
    """Worst relative constraint violation (SINR shortfall or power excess)."""
    shortfall, power_excess = q.constraint_margins(d)
    worst = power_excess
    if shortfall.size:
        worst = max(worst, float(shortfall.max()))
    return worst


def bmm_solve(
    q: QuadraticForms,
    d_init: np.ndarray,
    tol_inner: float = 1e-6,
    tol_outer: float = 1e-6,
    max_iter: int = 500,
) -> BmmResult:
    """Full majorize / dual-bisect / phase-project loop from a feasible start.

    Iterates keep the original problem feasible (surrogate feasibility
    implies it), and a monotonicity guard stops the loop if numerical noise
    would ever let the true objective tick upward, so the returned trace is
    nonincreasing by construction.
    """
    d = _require_unit_modulus(d_init, "starting point")
    if _worst_violation(q, d) > tol_inner:
        raise InfeasibleStart(
            f"starting point violates constraints by {_worst_violation(q, d):.3e} "
            "(normalized)"
        )
    duals = DualState.zeros(q.active.size)
    trace = [q.objective(d)]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        ms = majorize(q, d)
        duals = _dual_bisection_on(ms, duals, tol_inner)
        candidate = _primal_from(ms, duals.lam, duals.vartheta)
        cand_obj = q.objective(candidate)
        if cand_obj > trace[-1] or _worst_violation(q, candidate) > tol_inner:
            converged = True  # stalled at numerical resolution
            break
        d = candidate
        trace.append(cand_obj)
        denom = max(abs(trace[-1]), 1e-30)
        if abs(trace[-1] - trace[-2]) / denom <= tol_outer:
            converged = True
            break
    return BmmResult(d=d, objective_trace=trace, duals=duals,
                     iterations=iterations, converged=converged)
