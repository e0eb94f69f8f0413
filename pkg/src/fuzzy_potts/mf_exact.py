"""Exact finite-N conditional kernels of the mean-field Potts and fuzzy Potts models.

The N-site measure weights a configuration by exp((beta/N) * #{x < y: same spin}),
i.e. beta/N per unordered pair.  With that normalisation a single site sees
beta/N per agreeing neighbour and the infinite-volume transition sits at
beta_c(q) = 2(q-1)/(q-2) log(q-1).
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .model import ModelError, ModelParams, check_partition

MAX_OCCUPATION = 5000
MAX_CONFIGS = 10_000_000


def _check_counts(counts: Sequence[int], length: int) -> tuple[int, ...]:
    counts = tuple(int(m) for m in counts)
    if len(counts) != length:
        raise ModelError(f"expected {length} counts, got {len(counts)}")
    if any(m < 0 for m in counts):
        raise ModelError(f"counts must be nonnegative, got {counts}")
    if sum(counts) < 1:
        raise ModelError("counts must sum to N - 1 >= 1")
    return counts


def _normalise_log(logw: np.ndarray) -> np.ndarray:
    p = np.exp(logw - logw.max())
    return p / p.sum()


def potts_kernel(params: ModelParams, counts: Sequence[int]) -> np.ndarray:
    """Law of one site's Potts spin given the occupation counts of the other N - 1 sites.

    Only ``params.q`` and ``params.beta`` are used, so q = 2 is allowed.
    """
    counts = _check_counts(counts, params.q)
    n_sites = sum(counts) + 1
    n = np.asarray(counts, dtype=float) / (n_sites - 1)
    return _normalise_log(params.beta * (1 - 1 / n_sites) * n)


def compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """All occupation vectors of ``parts`` nonnegative integers summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in compositions(total - first, parts - 1):
            yield (first,) + rest


@dataclass(frozen=True)
class WeightSum:
    log_z: float
    a: float

    @property
    def z(self) -> float:
        return math.exp(self.log_z)


def _log_convolve(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """log of the discrete convolution of exp(f) and exp(g), truncated to len(f)."""
    m = len(f)
    idx = np.arange(m)
    diff = idx[:, None] - idx[None, :]
    table = np.where(diff >= 0, f[None, :] + g[np.clip(diff, 0, None)], -np.inf)
    return logsumexp(table, axis=1)


def partition_weight_sum(beta_tilde: float, r: int, M: int,
                         cap: int = MAX_OCCUPATION) -> WeightSum:
    """Partition sum of the r-state M-site model and A = E[exp((beta_tilde/M) M_1)].

    The sum over occupation vectors (M_1, ..., M_r) factorises into a
    convolution of per-state terms, which is carried out in log space.
    ``A`` is defined as 1 when M = 0.
    """
    if r < 1 or M < 0:
        raise ModelError(f"need r >= 1 and M >= 0, got r={r}, M={M}")
    if M > cap:
        raise ModelError(f"M={M} exceeds the occupation cap {cap}")
    if M == 0:
        return WeightSum(0.0, 1.0)
    c = beta_tilde / M
    m = np.arange(M + 1, dtype=float)
    f = -gammaln(m + 1) + c * m * (m - 1) / 2
    rest = np.full(M + 1, -np.inf)
    rest[0] = 0.0
    for _ in range(r - 1):
        rest = _log_convolve(rest, f)
    head = f + rest[::-1]
    log_z = gammaln(M + 1) + logsumexp(head)
    log_num = gammaln(M + 1) + logsumexp(head + c * m)
    return WeightSum(float(log_z), float(math.exp(log_num - log_z)))


def partition_weight_sum_enumerated(beta_tilde: float, r: int, M: int) -> WeightSum:
    """Same quantity as :func:`partition_weight_sum` by listing every occupation vector."""
    if M == 0:
        return WeightSum(0.0, 1.0)
    c = beta_tilde / M
    logw, shift = [], []
    for occ in compositions(M, r):
        lw = math.lgamma(M + 1) - sum(math.lgamma(k + 1) for k in occ)
        lw += c * sum(k * (k - 1) for k in occ) / 2
        logw.append(lw)
        shift.append(c * occ[0])
    logw = np.asarray(logw)
    log_z = logsumexp(logw)
    return WeightSum(float(log_z), float(math.exp(logsumexp(logw + np.asarray(shift)) - log_z)))


def fuzzy_kernel(params: ModelParams, counts: Sequence[int],
                 cap: int = MAX_OCCUPATION) -> np.ndarray:
    """Law of one site's fuzzy class given the class counts of the other N - 1 sites.

    Class k gets weight r_k * A(beta * N_k / N, r_k, N_k).  Only the partition
    sum is checked, so the all-ones partition (plain Potts) is accepted.
    """
    check_partition(params.q, params.partition)
    counts = _check_counts(counts, params.s)
    n_sites = sum(counts) + 1
    logw = np.array([
        math.log(r) + math.log(partition_weight_sum(params.beta * m / n_sites, r, m, cap).a)
        for r, m in zip(params.partition, counts)
    ])
    return _normalise_log(logw)


@functools.lru_cache(maxsize=64)
def _brute_force_table(q: int, n_sites: int, partition: tuple[int, ...]) -> np.ndarray:
    """Integer table hist[fuzzy_code, E]: number of Potts configurations with
    that fuzzy image and E agreeing unordered pairs.

    The fuzzy code reads site 1 as the most significant base-s digit.
    Integer counts make the conditionals exactly invariant under permuting
    the conditioning.
    """
    s = len(partition)
    labels = np.repeat(np.arange(s), partition)
    configs = np.indices((q,) * n_sites, dtype=np.int64).reshape(n_sites, -1)
    occ = np.stack([(configs == i).sum(axis=0) for i in range(q)])
    energy = (occ * (occ - 1) // 2).sum(axis=0)
    fuzzy = labels[configs]
    code = np.zeros(configs.shape[1], dtype=np.int64)
    for x in range(n_sites):
        code = code * s + fuzzy[x]
    e_max = n_sites * (n_sites - 1) // 2
    hist = np.bincount(code * (e_max + 1) + energy, minlength=s ** n_sites * (e_max + 1))
    return hist.reshape(s ** n_sites, e_max + 1)


def canonical_conditioning(counts: Sequence[int]) -> list[int]:
    """The sorted 1-based fuzzy configuration of sites 2..N with the given class counts."""
    return [l for l, m in enumerate(counts, start=1) for _ in range(m)]


def brute_force_kernel(params: ModelParams, counts: Sequence[int],
                       eta: Sequence[int] | None = None,
                       cap: int = MAX_CONFIGS) -> np.ndarray:
    """Conditional law of site 1's fuzzy class by enumerating all q^N Potts configurations.

    ``eta`` is the fuzzy configuration (1-based classes) of sites 2..N; it must
    have the given class counts.  Defaults to the sorted configuration.
    """
    check_partition(params.q, params.partition)
    counts = _check_counts(counts, params.s)
    s = params.s
    n_sites = sum(counts) + 1
    if params.q ** n_sites > cap:
        raise ModelError(f"q^N = {params.q}^{n_sites} exceeds the enumeration cap {cap}")
    if eta is None:
        eta = canonical_conditioning(counts)
    eta = [int(v) for v in eta]
    if len(eta) != n_sites - 1 or any(not 1 <= v <= s for v in eta):
        raise ModelError(f"conditioning must list N - 1 = {n_sites - 1} classes in 1..{s}")
    if tuple(eta.count(l) for l in range(1, s + 1)) != counts:
        raise ModelError(f"no configuration: conditioning {eta} does not have counts {counts}")

    hist = _brute_force_table(params.q, n_sites, params.partition)
    tail = 0
    for v in eta:
        tail = tail * s + (v - 1)
    e = np.arange(hist.shape[1], dtype=float)
    w = np.exp(params.beta / n_sites * (e - e[-1]))
    rows = [hist[k * s ** (n_sites - 1) + tail].astype(float) for k in range(s)]
    weights = np.array([float(np.dot(row, w)) for row in rows])
    if weights.sum() == 0:
        raise ModelError("no Potts configuration is consistent with the conditioning")
    return weights / weights.sum()


def legal_partitions(q: int) -> list[tuple[int, ...]]:
    """Every ordered spin partition of q with 1 < s < q."""
    out = []
    for s in range(2, q):
        for cut in itertools.combinations(range(1, q), s - 1):
            bounds = (0,) + cut + (q,)
            out.append(tuple(bounds[i + 1] - bounds[i] for i in range(s)))
    return out
