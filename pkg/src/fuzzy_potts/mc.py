"""Heat-bath Monte Carlo for the finite-N mean-field Potts model.

A site resampled while the other sites have occupation counts M_i takes
state i with probability proportional to exp((beta/N) * M_i), matching the
beta/N-per-unordered-pair weighting used in :mod:`fuzzy_potts.mf_exact`.
Spins are stored 0-based.

Randomness comes from numpy's Philox generator; replicas get independent
streams spawned from one SeedSequence, so results depend only on the seed
and the replica count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .mf_exact import canonical_conditioning, _check_counts
from .mf_limit import beta_c
from .model import ModelError, ModelParams, check_partition

RNG_NAME = "numpy.random.Philox+SeedSequence.spawn"


def default_threads() -> int:
    env = os.environ.get("FUZZY_POTTS_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@njit(cache=True, nogil=True)
def _update_site(spins, counts, x, lo, hi, u, coupling, weights):
    old = spins[x]
    counts[old] -= 1
    top = counts[lo]
    for i in range(lo + 1, hi):
        if counts[i] > top:
            top = counts[i]
    total = 0.0
    for i in range(lo, hi):
        weights[i] = math.exp(coupling * (counts[i] - top))
        total += weights[i]
    target = u * total
    new = hi - 1
    acc = 0.0
    for i in range(lo, hi):
        acc += weights[i]
        if target < acc:
            new = i
            break
    spins[x] = new
    counts[new] += 1


@njit(cache=True, nogil=True)
def _sweep(spins, counts, lo, hi, uniforms, coupling):
    weights = np.empty(counts.shape[0])
    for x in range(spins.shape[0]):
        _update_site(spins, counts, x, lo[x], hi[x], uniforms[x], coupling, weights)


@njit(cache=True, nogil=True)
def _run_occupation(spins, counts, lo, hi, uniforms, coupling, burn_in, out):
    n = spins.shape[0]
    for t in range(uniforms.shape[0] // n):
        _sweep(spins, counts, lo, hi, uniforms[t * n:(t + 1) * n], coupling)
        if t >= burn_in:
            for i in range(counts.shape[0]):
                out[t - burn_in, i] = counts[i] / n


@njit(cache=True, nogil=True)
def _run_conditional(spins, counts, lo, hi, uniforms, coupling, labels, frozen, burn_in, out):
    n = spins.shape[0]
    for t in range(uniforms.shape[0] // n):
        _sweep(spins, counts, lo, hi, uniforms[t * n:(t + 1) * n], coupling)
        for x in range(1, n):
            if labels[spins[x]] != frozen[x]:
                return -1
        if t >= burn_in:
            out[t - burn_in] = labels[spins[0]]
    return 0


@dataclass
class ChainState:
    """Spins (0-based states) and their maintained occupation counts."""

    spins: np.ndarray
    counts: np.ndarray
    step: int = 0

    @classmethod
    def from_spins(cls, spins: Sequence[int], q: int) -> "ChainState":
        spins = np.asarray(spins, dtype=np.int64).copy()
        return cls(spins, np.bincount(spins, minlength=q).astype(np.int64))

    def check(self) -> None:
        if not np.array_equal(self.counts, np.bincount(self.spins, minlength=self.counts.size)):
            raise ModelError("occupation counts out of sync with spins")


def heat_bath_sweep(state: ChainState, params: ModelParams, rng: np.random.Generator) -> ChainState:
    """One systematic-scan sweep of N single-site heat-bath updates (in place)."""
    n = state.spins.size
    lo = np.zeros(n, dtype=np.int64)
    hi = np.full(n, params.q, dtype=np.int64)
    _sweep(state.spins, state.counts, lo, hi, rng.random(n), params.beta / n)
    state.step += 1
    return state


def update_site(state: ChainState, x: int, params: ModelParams, u: float) -> ChainState:
    """Resample site x alone with uniform variate u (in place)."""
    n = state.spins.size
    _update_site(state.spins, state.counts, x, 0, params.q, u, params.beta / n,
                 np.empty(params.q))
    return state


def _initial_spins(q: int, n: int, replica: int, rng: np.random.Generator) -> np.ndarray:
    # even replicas start disordered, odd replicas start fully aligned on a rotating state
    if replica % 2 == 0:
        return rng.integers(0, q, size=n)
    return np.full(n, (replica // 2) % q, dtype=np.int64)


def _occupation_replica(q, beta, n, sweeps, burn_in, replica, seq):
    rng = make_rng(seq)
    state = ChainState.from_spins(_initial_spins(q, n, replica, rng), q)
    out = np.empty((sweeps, q))
    lo = np.zeros(n, dtype=np.int64)
    hi = np.full(n, q, dtype=np.int64)
    uniforms = rng.random((burn_in + sweeps) * n)
    _run_occupation(state.spins, state.counts, lo, hi, uniforms, beta / n, burn_in, out)
    state.check()
    return out


def estimate_occupation(params: ModelParams, N: int, sweeps: int, burn_in: int,
                        replicas: int, seed: int, threads: int | None = None) -> np.ndarray:
    """Occupation fractions counts/N after every post-burn-in sweep, pooled over replicas.

    Returns an array of shape (replicas * sweeps, q), replica-major.
    Replicas alternate disordered and aligned starts so that every phase is
    reached above the transition.
    """
    if N < 10:
        raise ModelError(f"need N >= 10, got N={N}")
    if sweeps < 1 or burn_in < 0 or replicas < 1:
        raise ModelError("need sweeps >= 1, burn_in >= 0, replicas >= 1")
    seqs = np.random.SeedSequence(seed).spawn(replicas)
    threads = threads or default_threads()
    jobs = [(params.q, params.beta, N, sweeps, burn_in, k, seqs[k]) for k in range(replicas)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(lambda job: _occupation_replica(*job), jobs))
    return np.concatenate(results)


def project_occupation(samples: np.ndarray, partition: Sequence[int]) -> np.ndarray:
    """Sum Potts occupation fractions within each fuzzy class."""
    edges = np.cumsum((0,) + tuple(partition))
    return np.stack([samples[:, a:b].sum(axis=1) for a, b in zip(edges[:-1], edges[1:])], axis=1)


@dataclass(frozen=True)
class KernelEstimate:
    probs: np.ndarray
    stderr: np.ndarray
    samples: int


def estimate_kernel(params: ModelParams, counts: Sequence[int], sweeps: int, seed: int,
                    burn_in: int = 100) -> KernelEstimate:
    """Monte Carlo estimate of site 1's fuzzy-class law given the other sites' class counts.

    Sites 2..N keep their fuzzy classes; their Potts states move only inside
    their block while site 1 moves freely.  A class whose conditional Potts
    model sits above its critical point starts aligned, otherwise disordered.
    ``stderr`` is the binomial standard error, ignoring autocorrelation.
    """
    check_partition(params.q, params.partition)
    counts = _check_counts(counts, params.s)
    n = sum(counts) + 1
    q, rs = params.q, params.partition
    rng = make_rng(seed)
    edges = np.cumsum((0,) + rs)
    labels = np.repeat(np.arange(params.s), rs).astype(np.int64)

    frozen = np.empty(n, dtype=np.int64)
    frozen[0] = -1
    frozen[1:] = np.asarray(canonical_conditioning(counts)) - 1
    lo = np.zeros(n, dtype=np.int64)
    hi = np.full(n, q, dtype=np.int64)
    lo[1:] = edges[frozen[1:]]
    hi[1:] = edges[frozen[1:] + 1]

    spins = np.empty(n, dtype=np.int64)
    spins[0] = rng.integers(0, q)
    for k, (r, m) in enumerate(zip(rs, counts)):
        sites = np.flatnonzero(frozen == k)
        aligned = r >= 2 and params.beta * m / n >= beta_c(r)
        spins[sites] = edges[k] if aligned or r == 1 else rng.integers(edges[k], edges[k + 1], size=m)
    state = ChainState.from_spins(spins, q)

    out = np.empty(sweeps, dtype=np.int64)
    uniforms = rng.random((burn_in + sweeps) * n)
    status = _run_conditional(state.spins, state.counts, lo, hi, uniforms, params.beta / n,
                              labels, frozen, burn_in, out)
    if status != 0:
        raise ModelError("conditional simulation changed a frozen fuzzy class")
    state.check()
    probs = np.bincount(out, minlength=params.s) / sweeps
    return KernelEstimate(probs, np.sqrt(probs * (1 - probs) / sweeps), sweeps)
