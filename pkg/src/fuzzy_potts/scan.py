"""Grid scans of the limiting fuzzy kernel and numerical jump detection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mf_limit import JumpError, limiting_fuzzy_kernel
from .model import ModelError, ModelParams, validate


def scan_path(params: ModelParams, t: float, axis: int = 1) -> np.ndarray:
    """Class densities with n_axis = t and the rest shared in proportion to r_l."""
    rs = np.asarray(params.partition, dtype=float)
    others = rs.copy()
    others[axis - 1] = 0.0
    n = (1.0 - t) * others / others.sum()
    n[axis - 1] = t
    return n


def _kernel_on_path(params: ModelParams, t: float, axis: int) -> tuple[np.ndarray, bool]:
    n = scan_path(params, t, axis)
    try:
        return limiting_fuzzy_kernel(params, n), False
    except JumpError:
        sides = ["left"] * params.s
        return limiting_fuzzy_kernel(params, n, sides=sides), True


@dataclass(frozen=True)
class DetectedJump:
    """A discontinuity of the kernel along the scan path.

    ``left`` and ``right`` are kernel values at the ends of the final bracket
    [t_left, t_right], which approximate the one-sided limits.
    """

    location: float
    t_left: float
    t_right: float
    left: tuple[float, ...]
    right: tuple[float, ...]
    grid_index: int

    def to_dict(self) -> dict:
        return {"location": self.location, "t_left": self.t_left, "t_right": self.t_right,
                "left": list(self.left), "right": list(self.right), "grid_index": self.grid_index}


@dataclass
class ScanResult:
    ts: np.ndarray
    densities: np.ndarray
    probs: np.ndarray
    jump_flag: np.ndarray
    jumps: list[DetectedJump]


def _refine(params, axis, a, b, qa, qb, width):
    """Shrink [a, b] onto the half with the larger kernel change until narrower than width."""
    while b - a > width:
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        qm, _ = _kernel_on_path(params, m, axis)
        if np.max(np.abs(qm - qa)) >= np.max(np.abs(qb - qm)):
            b, qb = m, qm
        else:
            a, qa = m, qm
    return a, b, qa, qb


def scan_kernel(params: ModelParams, grid: int = 2000, axis: int = 1,
                candidate_factor: float = 3.0, max_candidates: int = 200,
                width: float = 1e-13) -> ScanResult:
    """Evaluate the limiting kernel along n_axis in [0, 1] and locate its jumps.

    Intervals whose kernel change exceeds ``candidate_factor`` times the median
    change (every interval, on grids with at most ``max_candidates`` cells) are
    bisected down to ``width``.  A continuous kernel leaves a change of order
    width/cell times the original one; an interval is a jump if the surviving
    change is a thousand times larger than that and above 1e-10.
    """
    validate(params)
    if grid < 2:
        raise ModelError("grid needs at least 2 points")
    if not 1 <= axis <= params.s:
        raise ModelError(f"axis must be in 1..{params.s}")
    ts = np.linspace(0.0, 1.0, grid)
    probs = np.empty((grid, params.s))
    on_jump = np.zeros(grid, dtype=bool)
    for i, t in enumerate(ts):
        probs[i], on_jump[i] = _kernel_on_path(params, t, axis)
    diffs = np.max(np.abs(np.diff(probs, axis=0)), axis=1)
    if diffs.size <= max_candidates:
        candidates = np.arange(diffs.size)
    else:
        floor = candidate_factor * float(np.median(diffs)) + 1e-12
        candidates = np.flatnonzero(diffs > floor)
        candidates = candidates[np.argsort(-diffs[candidates])][:max_candidates]
    cell = ts[1] - ts[0]

    jumps = []
    flag = np.zeros(grid, dtype=bool)
    for i in sorted(candidates):
        a, b, qa, qb = _refine(params, axis, ts[i], ts[i + 1], probs[i], probs[i + 1], width)
        if np.max(np.abs(qb - qa)) > max(1e-10, 1e3 * diffs[i] * (b - a) / cell):
            jumps.append(DetectedJump(float(0.5 * (a + b)), float(a), float(b),
                                      tuple(map(float, qa)), tuple(map(float, qb)), int(i)))
            flag[i + 1] = True
    flag |= on_jump
    densities = np.stack([scan_path(params, t, axis) for t in ts])
    return ScanResult(ts, densities, probs, flag, jumps)
