"""Verification suites shared by the CLI and the acceptance tests."""

from __future__ import annotations

import math
import random

import numpy as np

from .mf_exact import brute_force_kernel, canonical_conditioning, compositions, fuzzy_kernel, legal_partitions
from .mf_limit import (auxiliary_inequalities, beta_c, discontinuity_set, limiting_fuzzy_kernel,
                       typicality_grid)
from .model import ModelParams
from .scan import scan_kernel

ORACLE_GRIDS = {
    "tiny": {"N": range(3, 6), "q": (3,), "beta": (0.0, 1.0)},
    "small": {"N": range(3, 9), "q": (3, 4), "beta": (0.0, 0.5, 1.0, 2.0)},
}


def oracle_cases(grid: str = "small"):
    cfg = ORACLE_GRIDS[grid]
    for n_sites in cfg["N"]:
        for q in cfg["q"]:
            for partition in legal_partitions(q):
                for beta in cfg["beta"]:
                    for counts in compositions(n_sites - 1, len(partition)):
                        yield ModelParams(q, beta, partition), counts


def oracle_check(grid: str = "small", tol: float = 1e-12) -> dict:
    """Compare fuzzy_kernel with brute_force_kernel on every case of the grid."""
    rows = []
    for params, counts in oracle_cases(grid):
        err = float(np.max(np.abs(fuzzy_kernel(params, counts) - brute_force_kernel(params, counts))))
        rows.append({**params.to_dict(), "N": sum(counts) + 1, "counts": list(counts),
                     "max_abs_error": err, "passed": err < tol})
    return {"suite": "oracle", "grid": grid, "tolerance": tol, "cases": len(rows),
            "max_abs_error": max(r["max_abs_error"] for r in rows),
            "passed": all(r["passed"] for r in rows), "rows": rows}


def exchangeability_check(grid: str = "small", permutations: int = 5, seed: int = 0) -> dict:
    """Brute-force conditionals must be bitwise equal across permuted conditionings."""
    rng = random.Random(seed)
    failures = []
    cases = 0
    for params, counts in oracle_cases(grid):
        eta = canonical_conditioning(counts)
        ref = brute_force_kernel(params, counts, eta)
        for _ in range(permutations):
            perm = eta[:]
            rng.shuffle(perm)
            if not np.array_equal(brute_force_kernel(params, counts, perm), ref):
                failures.append({**params.to_dict(), "counts": list(counts), "eta": perm})
        cases += 1
    return {"suite": "exchangeability", "cases": cases, "permutations": permutations,
            "passed": not failures, "failures": failures}


def typicality_suite() -> dict:
    rows = typicality_grid()
    bad = [r for r in rows if not r["holds"]]
    return {"suite": "typicality", "points": len(rows), "passed": not bad, "failures": bad}


def inequalities_suite(step: float = 0.01) -> dict:
    return {"suite": "inequalities", **auxiliary_inequalities(step=step)}


def jump_suite(grid: int = 10_000) -> dict:
    """Scan-based jump reproduction plus a set-level check of discontinuity_set."""
    checks = {}
    details = {}

    p = ModelParams(4, 3.0, (3, 1))
    res = scan_kernel(p, grid)
    expected = beta_c(3) / 3.0
    cell = 1.0 / (grid - 1)
    ok = len(res.jumps) == 1 and bool(abs(res.jumps[0].location - expected) <= cell)
    one_sided_err = math.inf
    if res.jumps:
        n = (expected, 1 - expected)
        left = limiting_fuzzy_kernel(p, n, sides=["left", None])
        right = limiting_fuzzy_kernel(p, n, sides=["right", None])
        jp = res.jumps[0]
        one_sided_err = float(max(np.max(np.abs(np.asarray(jp.left) - left)),
                                  np.max(np.abs(np.asarray(jp.right) - right))))
    checks["one_jump_at_expected_location"] = ok
    checks["one_sided_values_match"] = bool(one_sided_err < 1e-10)
    details["detected"] = [j.to_dict() for j in res.jumps]
    details["expected_location"] = expected
    details["one_sided_max_error"] = one_sided_err

    for label, params in (("no_jump_partition_2_1_1", ModelParams(4, 3.0, (2, 1, 1))),
                          ("no_jump_beta_below_critical", ModelParams(4, 2.0, (3, 1)))):
        found = 0
        for axis in range(1, params.s + 1):
            found += len(scan_kernel(params, grid, axis=axis).jumps)
        checks[label] = found == 0

    set_ok = True
    for q in range(3, 8):
        for partition in legal_partitions(q):
            big = [r for r in partition if r >= 3]
            for beta in np.linspace(0.0, 12.0, 49):
                params = ModelParams(q, float(beta), partition)
                expect_empty = not big or beta < beta_c(min(big))
                if (len(discontinuity_set(params)) == 0) != expect_empty:
                    set_ok = False
    checks["discontinuity_set_matches_theorem"] = set_ok
    return {"suite": "jumps", "checks": checks, "passed": all(checks.values()), **details}


SUITES = {
    "typicality": typicality_suite,
    "inequalities": inequalities_suite,
    "jumps": jump_suite,
    "oracle": oracle_check,
    "exchangeability": exchangeability_check,
}
