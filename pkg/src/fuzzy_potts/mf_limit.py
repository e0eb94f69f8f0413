"""Infinite-volume objects of the mean-field (fuzzy) Potts model.

Everything here is closed form or a one-dimensional root find: the critical
inverse temperature, the order parameter u, the limiting single-site kernel
with its jump set, the limiting empirical distributions, and the inequalities
showing that the jumps are never at typical densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import bisect

from .model import ModelError, ModelParams, validate

JUMP_RTOL = 1e-12


class JumpError(ModelError):
    """Raised when a kernel is evaluated exactly on one of its discontinuities."""


def beta_c(r: float) -> float:
    """Critical inverse temperature of the r-state mean-field Potts model (real r >= 2)."""
    if r < 2:
        raise ModelError(f"beta_c needs r >= 2, got r={r}")
    if r == 2:
        return 2.0
    return 2 * (r - 1) / (r - 2) * math.log(r - 1)


def beta_c_prime(q: float) -> float:
    return 2 * ((q - 2) - math.log(q - 1)) / (q - 2) ** 2


def beta_c_second(q: float) -> float:
    """Second derivative of beta_c, in the closed form whose sign is read off directly."""
    return (-2 * q * (q - 2) + 4 * (q - 1) * math.log(q - 1)) / ((q - 2) ** 3 * (q - 1))


def _mean_field_rhs(u: float, beta: float, r: int) -> float:
    x = math.exp(-beta * u)
    return (1 - x) / (1 + (r - 1) * x)


def solve_u(beta: float, r: int, tol: float = 1e-14, step: float = 1e-3) -> float:
    """Largest solution in (0, 1] of u = (1 - e^{-beta u}) / (1 + (r - 1) e^{-beta u}).

    Scans down from u = 1 for the first sign change, then bisects.  For r = 2 at
    beta = 2 the only solution is u = 0, which is returned.
    """
    if r < 2:
        raise ModelError(f"solve_u needs r >= 2, got r={r}")
    bc = beta_c(r)
    if beta < bc * (1 - 1e-15):
        raise ModelError(f"u is defined for beta >= beta_c({r}) = {bc}, got beta={beta}")

    def h(u):
        return u - _mean_field_rhs(u, beta, r)

    hi = 1.0
    u = 1.0 - step
    while u > 0:
        if h(u) <= 0:
            if h(u) == 0:
                return u
            return bisect(h, u, hi, xtol=tol, rtol=4 * np.finfo(float).eps)
        hi = u
        u -= step
    # the largest root lies below the scan step (r = 2 just above beta = 2)
    lo = 1e-300
    if h(lo) >= 0:
        return 0.0
    return bisect(h, lo, hi, xtol=tol * 1e-3, rtol=4 * np.finfo(float).eps)


def _log_c_low(beta_tilde: float, r: int) -> float:
    return beta_tilde / r + math.log(r)


def _log_c_high(beta_tilde: float, r: int) -> float:
    u = solve_u(beta_tilde, r)
    return beta_tilde / r + np.logaddexp(beta_tilde * (r - 1) * u / r,
                                         math.log(r - 1) - beta_tilde * u / r)


def _at_jump(beta_tilde: float, r: int) -> bool:
    return r >= 3 and abs(beta_tilde - beta_c(r)) <= JUMP_RTOL * beta_c(r)


def log_big_c(beta_tilde: float, r: int, side: str | None = None) -> float:
    """log C(beta_tilde, r).  ``side`` ('left'/'right') selects a one-sided value
    at the jump; without it, evaluating on the jump raises JumpError."""
    if r < 1:
        raise ModelError(f"need r >= 1, got r={r}")
    if r == 1:
        return beta_tilde
    bc = beta_c(r)
    if _at_jump(beta_tilde, r):
        if side == "left":
            return _log_c_low(bc, r)
        if side == "right":
            return _log_c_high(bc, r)
        raise JumpError(f"C(., {r}) jumps at beta_tilde = beta_c({r}) = {bc}")
    if beta_tilde < bc:
        return _log_c_low(beta_tilde, r)
    return _log_c_high(beta_tilde, r)


def big_c(beta_tilde: float, r: int, side: str | None = None) -> float:
    """Limit of r * A(beta_tilde, r, M) as M grows."""
    return math.exp(log_big_c(beta_tilde, r, side))


def big_c_two_sided(beta_tilde: float, r: int) -> tuple[float, float]:
    """(left, right) values of C; equal away from the jump at beta_c(r), r >= 3.

    For r = 2 both branches are evaluated at beta_tilde = 2 (they agree).
    """
    if r >= 2 and (_at_jump(beta_tilde, r) or (r == 2 and beta_tilde == 2.0)):
        bc = beta_c(r)
        return math.exp(_log_c_low(bc, r)), math.exp(_log_c_high(bc, r))
    v = big_c(beta_tilde, r)
    return v, v


def big_c_jump_closed_form(r: int) -> tuple[float, float]:
    """Closed-form one-sided values of C at beta_c(r) for r >= 3."""
    base = (r - 1) ** (2 * (r - 1) / (r * (r - 2)))
    return base * r, base * r * (r - 1) ** ((r - 2) / r)


def _check_density(params: ModelParams, n: Sequence[float]) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    if n.shape != (params.s,):
        raise ModelError(f"expected {params.s} class densities, got {n.shape}")
    if np.any(n < -1e-12) or abs(n.sum() - 1) > 1e-9:
        raise ModelError(f"densities must form a probability vector, got {n.tolist()}")
    return np.clip(n, 0.0, None)


def limiting_fuzzy_kernel(params: ModelParams, n: Sequence[float],
                          sides: Sequence[str | None] | None = None) -> np.ndarray:
    """N -> infinity limit of the fuzzy single-site kernel at class densities ``n``.

    Raises JumpError if some class with r_k >= 3 sits exactly at
    beta_c(r_k)/beta, unless ``sides`` gives a side for that class.
    """
    n = _check_density(params, n)
    sides = [None] * params.s if sides is None else list(sides)
    logc = np.array([log_big_c(params.beta * nk, r, side)
                     for nk, r, side in zip(n, params.partition, sides)])
    p = np.exp(logc - logc.max())
    return p / p.sum()


@dataclass(frozen=True)
class JumpPoint:
    class_index: int
    location: float
    left_C: float
    right_C: float

    def to_dict(self) -> dict:
        return {"class_index": self.class_index, "location": self.location,
                "left_C": self.left_C, "right_C": self.right_C}


def discontinuity_set(params: ModelParams) -> list[JumpPoint]:
    """Jumps of the limiting kernel: n_k = beta_c(r_k)/beta for r_k >= 3 when that is <= 1."""
    validate(params)
    out = []
    if params.beta <= 0:
        return out
    for k, r in enumerate(params.partition, start=1):
        if r < 3:
            continue
        loc = beta_c(r) / params.beta
        if loc <= 1:
            left, right = big_c_jump_closed_form(r)
            out.append(JumpPoint(k, loc, left, right))
    return out


@dataclass(frozen=True)
class LimitAtoms:
    """Atoms of a limiting empirical distribution.

    At the critical point the weights depend on an unknown lambda_0 in (0, 1):
    ``weights`` then holds weights within each group and ``groups`` tags each
    atom with 'lambda0' or '1-lambda0'.
    """

    weights: tuple[float, ...]
    locations: tuple[tuple[float, ...], ...]
    groups: tuple[str, ...] | None = field(default=None)

    def to_dict(self) -> dict:
        d = {"weights": list(self.weights), "locations": [list(v) for v in self.locations]}
        if self.groups is not None:
            d["groups"] = list(self.groups)
        return d


def ellis_wang_atoms(q: int, beta: float) -> LimitAtoms:
    """Atoms of the limiting empirical spin distribution of the q-state model."""
    if q < 2:
        raise ModelError(f"need q >= 2, got q={q}")
    bc = beta_c(q)
    uniform = tuple([1.0 / q] * q)
    if beta < bc:
        return LimitAtoms((1.0,), (uniform,))
    u = solve_u(beta, q)
    ordered = tuple(tuple(u * (i == nu) + (1 - u) / q for i in range(q)) for nu in range(q))
    if beta > bc or q == 2:
        return LimitAtoms(tuple([1.0 / q] * q), ordered)
    return LimitAtoms((1.0,) + tuple([1.0 / q] * q), (uniform,) + ordered,
                      ("lambda0",) + ("1-lambda0",) * q)


def n_plus(beta: float, q: int, r: int) -> float:
    u = solve_u(beta, q)
    return u + (1 - u) / q * r


def n_minus(beta: float, q: int, r: int) -> float:
    u = solve_u(beta, q)
    return (1 - u) / q * r


def fuzzy_atoms(params: ModelParams) -> LimitAtoms:
    """Atoms of the limiting empirical fuzzy-class distribution."""
    validate(params)
    q, rs = params.q, params.partition
    bc = beta_c(q)
    flat = tuple(r / q for r in rs)
    if params.beta < bc:
        return LimitAtoms((1.0,), (flat,))
    u = solve_u(params.beta, q)
    locs = tuple(tuple(u * (j == l) + (1 - u) / q * rj for j, rj in enumerate(rs))
                 for l in range(len(rs)))
    weights = tuple(r / q for r in rs)
    if params.beta > bc:
        return LimitAtoms(weights, locs)
    return LimitAtoms((1.0,) + weights, (flat,) + locs, ("lambda0",) + ("1-lambda0",) * len(rs))


@dataclass(frozen=True)
class TypicalityRecord:
    case: str
    lhs: float
    rhs: float
    holds: bool
    upper: float | None = None

    def to_dict(self) -> dict:
        return {"case": self.case, "lhs": self.lhs, "rhs": self.rhs,
                "upper": self.upper, "holds": self.holds}


def typicality_check(q: int, r: int, beta: float) -> TypicalityRecord:
    """Check that the typical density of an r-state class avoids the jump at beta_c(r)/beta.

    High temperature (beta <= beta_c(q)): r/q < beta_c(r)/beta.
    Low temperature (beta >= beta_c(q)): n^- < beta_c(r)/beta < n^+, reported as
    lhs < rhs < upper.  At beta = beta_c(q) both must hold (case 'both').
    """
    if not q > r >= 2:
        raise ModelError(f"need q > r >= 2, got q={q}, r={r}")
    if beta <= 0:
        raise ModelError("beta must be positive")
    bc_q = beta_c(q)
    jump = beta_c(r) / beta
    high = beta <= bc_q
    low = beta >= bc_q
    if high and not low:
        lhs = r / q
        return TypicalityRecord("high", lhs, jump, lhs < jump)
    lo, hi = n_minus(beta, q, r), n_plus(beta, q, r)
    holds = lo < jump < hi
    if high:
        return TypicalityRecord("both", lo, jump, holds and r / q < jump, hi)
    return TypicalityRecord("low", lo, jump, holds, hi)


def typicality_grid(qs=range(3, 9), n_beta: int = 50) -> list[dict]:
    """typicality_check over r in 2..q-1 and a log-spaced beta grid on [0.1, 3 beta_c(q)]."""
    rows = []
    for q in qs:
        betas = np.geomspace(0.1, 3 * beta_c(q), n_beta)
        for r in range(2, q):
            for beta in betas:
                rec = typicality_check(q, r, float(beta))
                rows.append({"q": q, "r": r, "beta": float(beta), **rec.to_dict()})
    return rows


def auxiliary_inequalities(q_max: float = 100.0, step: float = 0.01) -> dict:
    """Grid checks of the elementary facts about beta_c used for typicality.

    On q in (2, q_max]: beta_c(q) < q; beta_c''(q) < 0; beta_c(q)/q decreasing;
    the tangent bound beta_c(r) <= beta_c(q) + beta_c'(q)(r - q) and the strict
    slope bound beta_c'(q) > beta_c(q)/(q(q-1)) at integers 2 <= r < q; and
    beta_c(q)/beta_c(q-1) < q for q >= 3.
    """
    n = int(round((q_max - 2) / step))
    qs = 2 + step * np.arange(1, n + 1)
    bc = np.array([beta_c(q) for q in qs])
    second = np.array([beta_c_second(q) for q in qs])
    prime = np.array([beta_c_prime(q) for q in qs])

    ratio_over_q = bc / qs
    tangent_ok = True
    worst_tangent = -math.inf
    for q, b, bp in zip(qs, bc, prime):
        for r in range(2, math.ceil(q)):
            if r >= q:
                break
            gap = beta_c(r) - (b + bp * (r - q))
            worst_tangent = max(worst_tangent, gap)
            if gap > 1e-12:
                tangent_ok = False
    q3 = qs[qs >= 3]
    ratio = np.array([beta_c(q) / beta_c(q - 1) for q in q3])
    checks = {
        "beta_c_below_q": bool(np.all(bc < qs)),
        "beta_c_concave": bool(np.all(second < 0)),
        "beta_c_over_q_decreasing": bool(np.all(np.diff(ratio_over_q) < 0)),
        "tangent_bound": tangent_ok,
        "slope_bound": bool(np.all(prime > bc / (qs * (qs - 1)))),
        "successive_ratio_below_q": bool(np.all(ratio < q3)),
    }
    return {"checks": checks, "passed": all(checks.values()), "grid_points": int(n),
            "max_tangent_excess": float(worst_tangent)}
