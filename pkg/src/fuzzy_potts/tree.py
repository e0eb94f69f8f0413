"""Potts and fuzzy Potts chains on rooted trees.

Trees use the Potts coupling 2*beta per edge, so the recurring edge weight is
``exp(2*beta)``.  Node ids are integers; the root has parent ``None``.
Potts states inside matrices are 0-based array indices; values returned by
:func:`sample_chain` and :func:`chain_distribution` keys are 1-based.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .model import ModelError, ModelParams, check_partition, validate

ROW_TOL = 1e-12
MAX_TREE_NODES = 10_000_000


@dataclass(frozen=True)
class RootedTree:
    """Finite rooted tree stored as a parent array."""

    parent: tuple[int | None, ...]

    def __post_init__(self):
        roots = [x for x, p in enumerate(self.parent) if p is None]
        if len(roots) != 1:
            raise ModelError(f"tree needs exactly one root, found {len(roots)}")
        n = len(self.parent)
        for x, p in enumerate(self.parent):
            if p is not None and not 0 <= p < n:
                raise ModelError(f"node {x} has parent {p} outside 0..{n - 1}")
        # acyclicity: every node must reach the root
        if len(self.bfs_order()) != n:
            raise ModelError("parent array contains a cycle")

    @property
    def root(self) -> int:
        return self.parent.index(None)

    @property
    def size(self) -> int:
        return len(self.parent)

    def children(self, x: int) -> list[int]:
        return self._children()[x]

    def _children(self) -> list[list[int]]:
        cached = self.__dict__.get("_children_cache")
        if cached is None:
            cached = [[] for _ in self.parent]
            for y, p in enumerate(self.parent):
                if p is not None:
                    cached[p].append(y)
            object.__setattr__(self, "_children_cache", cached)
        return cached

    def bfs_order(self) -> list[int]:
        """Root first, then generation by generation."""
        kids = self._children()
        order = [self.parent.index(None)]
        i = 0
        while i < len(order):
            order.extend(kids[order[i]])
            i += 1
        return order

    def depth(self) -> dict[int, int]:
        d = {}
        for x in self.bfs_order():
            p = self.parent[x]
            d[x] = 0 if p is None else d[p] + 1
        return d

    def leaves(self) -> list[int]:
        kids = self._children()
        return [x for x in range(self.size) if not kids[x]]

    def truncate(self, n: int) -> "RootedTree":
        """The subtree of nodes within distance n of the root, relabelled in BFS order."""
        depth = self.depth()
        keep = [x for x in self.bfs_order() if depth[x] <= n]
        index = {x: i for i, x in enumerate(keep)}
        return RootedTree(tuple(None if self.parent[x] is None else index[self.parent[x]] for x in keep))

    def to_dict(self) -> dict:
        return {"nodes": self.size, "parent": list(self.parent)}

    @classmethod
    def from_dict(cls, data: dict) -> "RootedTree":
        parent = tuple(data["parent"])
        if "nodes" in data and data["nodes"] != len(parent):
            raise ModelError(f"'nodes'={data['nodes']} but parent list has {len(parent)} entries")
        return cls(parent)

    @classmethod
    def from_json(cls, path: str | Path) -> "RootedTree":
        return cls.from_dict(json.loads(Path(path).read_text()))


def regular_tree(d: int, depth: int, root_degree: int | None = None,
                 max_nodes: int = MAX_TREE_NODES) -> RootedTree:
    """Tree where the root has ``root_degree`` (default d) children and every
    other internal node has d children, truncated at ``depth``.

    Pass ``root_degree=d + 1`` for the regular tree of degree d in the usual
    sense (all internal vertices of degree d + 1).
    """
    if d < 2 or depth < 1:
        raise ModelError(f"need d >= 2 and depth >= 1, got d={d}, depth={depth}")
    k = d if root_degree is None else root_degree
    count = 1 + k * sum(d ** i for i in range(depth))
    if count > max_nodes:
        raise ModelError(f"tree would have {count} nodes, cap is {max_nodes}")
    parent: list[int | None] = [None]
    layer = [0]
    for level in range(depth):
        nxt = []
        for x in layer:
            for _ in range(k if level == 0 else d):
                parent.append(x)
                nxt.append(len(parent) - 1)
        layer = nxt
    return RootedTree(tuple(parent))


def _check_stochastic(P: np.ndarray, name: str = "matrix") -> np.ndarray:
    if np.any(P < 0) or np.max(np.abs(P.sum(axis=1) - 1.0)) > ROW_TOL:
        raise ModelError(f"{name} is not row-stochastic")
    return P


def free_potts_matrix(params: ModelParams, weight: Fraction | None = None):
    """Free boundary Potts chain: stay with weight e^{2 beta}, move with weight 1.

    With ``weight`` (an exact value of e^{2 beta}) the matrix is returned as
    nested lists of Fractions instead of a float array.
    """
    q = params.q
    if weight is not None:
        z = weight + q - 1
        return [[weight / z if i == j else 1 / z for j in range(q)] for i in range(q)]
    e = math.exp(2 * params.beta)
    P = np.full((q, q), 1.0 / (e + q - 1))
    np.fill_diagonal(P, e / (e + q - 1))
    return P


def free_fuzzy_matrix(params: ModelParams, weight: Fraction | None = None):
    """Fuzzy image of the free chain: (s x s matrix, initial law (r_l / q)).

    ``weight`` works as in :func:`free_potts_matrix`.
    """
    check_partition(params.q, params.partition)
    q, rs = params.q, params.partition
    if weight is not None:
        z = weight + q - 1
        P = [[(weight + r - 1) / z if k == l else Fraction(r) / z for l, r in enumerate(rs)]
             for k in range(len(rs))]
        return P, [Fraction(r, q) for r in rs]
    e = math.exp(2 * params.beta)
    r = np.asarray(rs, dtype=float)
    P = np.tile(r / (e + q - 1), (len(rs), 1))
    P[np.diag_indices(len(rs))] = (e + r - 1) / (e + q - 1)
    return P, r / q


def _edge_factor(b: float, e: float, q: int) -> float:
    # b = inf is the spin-1 wired boundary; the factor tends to e
    if math.isinf(b):
        return e
    return (e * b + q - 1) / (e + b + q - 2)


def b_recursion_finite(tree: RootedTree, params: ModelParams) -> dict[int, float]:
    """Spin-1/spin-2 odds b_x at each node under the wired subtree measure.

    Leaves form the wired (all spin 1) boundary layer and carry b = inf;
    every internal node is the product of its children's edge factors.
    Only q and beta are used.
    """
    if tree.size == 0:
        raise ModelError("empty tree")
    e = math.exp(2 * params.beta)
    b: dict[int, float] = {}
    for x in reversed(tree.bfs_order()):
        kids = tree.children(x)
        if not kids:
            b[x] = math.inf
            continue
        val = 1.0
        for y in kids:
            val *= _edge_factor(b[y], e, params.q)
        b[x] = val
    return b


def recursion_residual(tree: RootedTree, b: Mapping[int, float], params: ModelParams) -> float:
    """Largest relative mismatch between b_x and the product over its children."""
    e = math.exp(2 * params.beta)
    worst = 0.0
    for x in range(tree.size):
        kids = tree.children(x)
        if not kids:
            continue
        rhs = math.prod(_edge_factor(b[y], e, params.q) for y in kids)
        worst = max(worst, abs(b[x] - rhs) / rhs)
    return worst


def wired_fixed_point(d: int, q: int, beta: float, tol: float = 1e-10,
                      max_iter: int = 1_000_000) -> float:
    """Largest fixed point of b -> f(b)^d on [1, e^{2 beta d}], iterating down from the top."""
    if d < 1 or tol <= 0:
        raise ModelError(f"need d >= 1 and tol > 0, got d={d}, tol={tol}")
    e = math.exp(2 * beta)
    b = e ** d
    for _ in range(max_iter):
        nxt = ((e * b + q - 1) / (e + b + q - 2)) ** d
        if abs(b - nxt) < tol * max(1.0, b):
            return max(nxt, 1.0)
        b = nxt
    raise ModelError(f"fixed point iteration did not converge in {max_iter} steps "
                     f"(d={d}, q={q}, beta={beta})")


def fixed_point_b(d: int, params: ModelParams, tol: float = 1e-10) -> float:
    """Wired fixed point for a tree in which every vertex has d children."""
    return wired_fixed_point(d, params.q, params.beta, tol)


def wired_chain_matrices(tree: RootedTree, b: Mapping[int, float], params: ModelParams):
    """Initial law at the root and per-node transition matrices of the wired chain.

    Returns ``(init, {node: P})`` with one q x q matrix for every non-root node.
    Nodes with b = inf (the wired boundary) are forced to spin 1.
    """
    q = params.q
    e = math.exp(2 * params.beta)
    missing = [x for x in range(tree.size) if x not in b]
    if missing:
        raise ModelError(f"no b value for nodes {missing[:5]}")

    br = b[tree.root]
    init = np.zeros(q)
    if math.isinf(br):
        init[0] = 1.0
    else:
        init[:] = 1.0 / (br + q - 1)
        init[0] = br / (br + q - 1)

    mats = {}
    for x in range(tree.size):
        if x == tree.root:
            continue
        bx = b[x]
        P = np.zeros((q, q))
        if math.isinf(bx):
            P[:, 0] = 1.0
        else:
            z1 = bx * e + q - 1
            z2 = bx + e + q - 2
            P[0, :] = 1.0 / z1
            P[0, 0] = bx * e / z1
            P[1:, :] = 1.0 / z2
            P[1:, 0] = bx / z2
            idx = np.arange(1, q)
            P[idx, idx] = e / z2
        mats[x] = _check_stochastic(P, f"P^{x}")
    return init, mats


def _matrix_for(matrices, x):
    if isinstance(matrices, Mapping):
        return matrices[x]
    return matrices


def sample_chain(tree: RootedTree, matrices, init: Sequence[float], seed: int,
                 size: int | None = None):
    """Exact sample of a tree-indexed chain, generated root first in BFS order.

    ``matrices`` is one matrix (homogeneous chain) or a ``{node: matrix}``
    mapping.  Returns ``{node: state}`` with 1-based states, or, when ``size``
    is given, an int array of shape (size, tree.size) indexed by node id.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    n = 1 if size is None else size
    init = np.asarray(init, dtype=float)
    out = np.empty((n, tree.size), dtype=np.int64)
    order = tree.bfs_order()
    root = order[0]
    out[:, root] = _draw(np.broadcast_to(np.cumsum(init), (n, init.size)), rng)
    for x in order[1:]:
        P = np.asarray(_matrix_for(matrices, x), dtype=float)
        cum = np.cumsum(P, axis=1)[out[:, tree.parent[x]]]
        out[:, x] = _draw(cum, rng)
    out += 1
    if size is None:
        return {x: int(out[0, x]) for x in range(tree.size)}
    return out


def _draw(cum: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(cum.shape[0]) * cum[:, -1]
    return np.minimum((cum <= u[:, None]).sum(axis=1), cum.shape[1] - 1)


def chain_distribution(tree: RootedTree, matrices, init) -> dict[tuple[int, ...], object]:
    """Exact law of a tree-indexed chain by enumerating every configuration.

    Keys are tuples of 1-based states indexed by node id.  Arithmetic follows
    the entries' type, so Fraction inputs give an exact rational law.
    """
    k = len(init)
    order = tree.bfs_order()
    root = order[0]
    out = {}
    for config in itertools.product(range(k), repeat=tree.size):
        p = init[config[root]]
        for x in order[1:]:
            p = p * _matrix_for(matrices, x)[config[tree.parent[x]]][config[x]]
        out[tuple(c + 1 for c in config)] = p
    return out


def chain_distribution_array(tree: RootedTree, matrices, init) -> np.ndarray:
    """Vectorised float version of :func:`chain_distribution`.

    Returns an array of shape (k,) * tree.size; axis x is node x's 0-based state.
    """
    init = np.asarray(init, dtype=float)
    k = init.size
    n = tree.size
    configs = np.indices((k,) * n, dtype=np.int8).reshape(n, -1)
    p = init[configs[tree.root]].copy()
    for x in tree.bfs_order()[1:]:
        P = np.asarray(_matrix_for(matrices, x), dtype=float)
        p *= P[configs[tree.parent[x]], configs[x]]
    return p.reshape((k,) * n)


def pushforward(dist: np.ndarray, params: ModelParams) -> np.ndarray:
    """Push a joint Potts law of shape (q,)*n through the fuzzy map to shape (s,)*n."""
    labels = np.asarray(params.fuzzy_map.labels()) - 1
    out = dist
    for axis in range(dist.ndim):
        moved = np.moveaxis(out, axis, 0)
        summed = np.zeros((params.s,) + moved.shape[1:])
        np.add.at(summed, labels, moved)
        out = np.moveaxis(summed, 0, axis)
    return out


@dataclass(frozen=True)
class GapRecord:
    wired_ratio: float
    free_ratio: float
    a: float
    gap: float

    def to_dict(self) -> dict:
        return {"wired_ratio": self.wired_ratio, "free_ratio": self.free_ratio,
                "a": self.a, "gap": self.gap}


def _first_class_size(params: ModelParams) -> int:
    r1 = params.partition[0]
    if r1 < 2:
        raise ModelError(f"the first fuzzy class needs r_1 >= 2, got r_1={r1}")
    return r1


def wired_gap(b1: float, b2: float, params: ModelParams, extra_children: int = 0) -> GapRecord:
    """Difference at the root between the wired-side and free-side conditionals
    of Y(root) = 1, when two children with odds b1, b2 both show fuzzy class 1.

    Each extra child (fuzzy class 1 with grandchildren outside class 1)
    multiplies both odds ratios by (e^{2 beta} + r_1 - 1) / r_1.
    """
    validate(params)
    r1 = _first_class_size(params)
    if b1 < 1 or b2 < 1:
        raise ModelError(f"b values must be >= 1, got b1={b1}, b2={b2}")
    if extra_children < 0:
        raise ModelError("extra_children must be >= 0")
    e = math.exp(2 * params.beta)
    q = params.q
    a = (b1 * b2 + r1 - 1) / ((b1 + r1 - 1) * (b2 + r1 - 1))

    def ratio(w):
        return (w * (e * e + r1 - 1) + (1 - w) * (2 * e + r1 - 2)) / (q - r1)

    extra = ((e + r1 - 1) / r1) ** extra_children
    wired = ratio(a) * extra
    free = ratio(1 / r1) * extra
    gap = wired / (1 + wired) - free / (1 + free)
    return GapRecord(wired, free, a, gap)


def ratio_product_form(b1: float, b2: float, params: ModelParams) -> float:
    """Wired odds ratio written as products over the two children."""
    r1 = params.partition[0]
    e = math.exp(2 * params.beta)
    num = (b1 * e + r1 - 1) * (b2 * e + r1 - 1) + (r1 - 1) * (b1 + e + r1 - 2) * (b2 + e + r1 - 2)
    return num / ((params.q - r1) * (b1 + r1 - 1) * (b2 + r1 - 1))


def ratio_root_form(b1: float, b2: float, params: ModelParams) -> float:
    """Wired odds ratio summed over the three Potts spins, with the root's own
    odds b_root taken from the recursion rather than eliminated."""
    r1 = params.partition[0]
    q = params.q
    e = math.exp(2 * params.beta)
    b_root = _edge_factor(b1, e, q) * _edge_factor(b2, e, q)
    num = (b_root / (b_root + q - 1)
           * math.prod((b * e + r1 - 1) / (b * e + q - 1) for b in (b1, b2))
           + (r1 - 1) / (b_root + q - 1)
           * math.prod((b + e + r1 - 2) / (b + e + q - 2) for b in (b1, b2)))
    den = (q - r1) / (b_root + q - 1) * math.prod((b + r1 - 1) / (b + e + q - 2) for b in (b1, b2))
    return num / den


def verify_ratio_identity(b1: float, b2: float, params: ModelParams, rtol: float = 1e-10) -> bool:
    """True iff the product form and the a-form of the wired odds ratio agree."""
    lhs = ratio_product_form(b1, b2, params)
    rhs = wired_gap(b1, b2, params).wired_ratio
    return abs(lhs - rhs) <= rtol * abs(rhs)


def has_nontrivial_fixed_point(d: int, q: int, beta: float, grid: int = 4000) -> bool:
    """True iff b -> f(b)^d has a fixed point above 1.

    The map is increasing and maps [1, e^{2 beta d}] into itself, so a fixed
    point above 1 exists iff f(b)^d >= b somewhere on (1, e^{2 beta d}].  That
    is checked on a geometric grid of b - 1 reaching down to 1e-12, which
    stays sharp where the iteration itself converges too slowly to decide.
    """
    e = math.exp(2 * beta)
    top = e ** d
    if top <= 1.0:
        return False
    eps = np.geomspace(1e-12, top - 1.0, grid)
    # f(1 + eps) = 1 + (e - 1) eps / (e + q - 1 + eps), written to avoid cancellation
    step = (e - 1) * eps / (e + q - 1 + eps)
    return bool(np.any(np.expm1(d * np.log1p(step)) >= eps))


def tree_critical_beta(d: int, q: int, tol: float = 1e-6, beta_max: float = 20.0) -> float:
    """Smallest beta at which the wired fixed point on the d-ary tree exceeds 1.

    Bisection on beta; the returned value is the upper end of a bracket
    narrower than ``tol``.
    """
    if d < 2:
        raise ModelError(f"need d >= 2, got d={d}")
    lo, hi = 0.0, beta_max
    if not has_nontrivial_fixed_point(d, q, hi):
        raise ModelError(f"no transition below beta_max={beta_max} for d={d}, q={q}")
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if has_nontrivial_fixed_point(d, q, mid):
            hi = mid
        else:
            lo = mid
    return hi
