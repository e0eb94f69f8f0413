"""Parameter records and the fuzzy projection shared by the tree and mean-field code.

Potts states and fuzzy classes are 1-based at every public interface.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence


class ModelError(ValueError):
    """Raised when parameters or inputs violate a model invariant."""


@dataclass(frozen=True)
class ModelParams:
    """Number of Potts states, inverse temperature and spin partition.

    Construction does not validate; call :func:`validate` where the full
    invariants (sum r_i = q, 1 < s < q) are required.
    """

    q: int
    beta: float
    partition: tuple[int, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "partition", tuple(int(r) for r in self.partition))

    @property
    def s(self) -> int:
        return len(self.partition)

    @property
    def fuzzy_map(self) -> "FuzzyMap":
        return FuzzyMap.from_partition(self.partition)

    def to_dict(self) -> dict:
        return {"q": self.q, "beta": self.beta, "partition": list(self.partition)}

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        try:
            return cls(q=int(data["q"]), beta=float(data["beta"]), partition=tuple(data["partition"]))
        except KeyError as exc:
            raise ModelError(f"config is missing key {exc.args[0]!r}") from None

    @classmethod
    def from_json(cls, path: str | Path) -> "ModelParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


def check_partition(q: int, partition: Sequence[int]) -> None:
    """Check only that the partition has positive entries summing to q."""
    if any(r < 1 for r in partition):
        raise ModelError(f"every r_i must be >= 1, got {tuple(partition)}")
    if sum(partition) != q:
        raise ModelError(f"partition {tuple(partition)} sums to {sum(partition)}, not q={q}")


def validate(params: ModelParams) -> ModelParams:
    """Return ``params`` unchanged if all invariants hold, otherwise raise ModelError."""
    if params.q < 3:
        raise ModelError(f"q must be >= 3, got q={params.q}")
    if not params.beta >= 0:
        raise ModelError(f"beta must be >= 0, got beta={params.beta}")
    check_partition(params.q, params.partition)
    if not 1 < params.s < params.q:
        raise ModelError(f"need 1 < s < q, got s={params.s}, q={params.q}")
    return params


@dataclass(frozen=True)
class FuzzyMap:
    """Consecutive half-open ranges [start, stop) of Potts states, one per fuzzy class."""

    boundaries: tuple[tuple[int, int], ...]

    @classmethod
    def from_partition(cls, partition: Sequence[int]) -> "FuzzyMap":
        bounds = []
        start = 1
        for r in partition:
            bounds.append((start, start + r))
            start += r
        return cls(tuple(bounds))

    @property
    def q(self) -> int:
        return self.boundaries[-1][1] - 1

    @property
    def s(self) -> int:
        return len(self.boundaries)

    def block(self, cls_index: int) -> range:
        start, stop = self.boundaries[cls_index - 1]
        return range(start, stop)

    def labels(self) -> list[int]:
        """Fuzzy class of every Potts state, as a 0-based lookup list of 1-based classes."""
        out = []
        for l, (start, stop) in enumerate(self.boundaries, start=1):
            out.extend([l] * (stop - start))
        return out


def fuzzy_project(potts_state: int, fmap: FuzzyMap) -> int:
    """Fuzzy class (1..s) of a Potts state (1..q)."""
    if not 1 <= potts_state <= fmap.q:
        raise ModelError(f"Potts state {potts_state} outside 1..{fmap.q}")
    for l, (start, stop) in enumerate(fmap.boundaries, start=1):
        if start <= potts_state < stop:
            return l
    raise AssertionError("unreachable: boundaries cover 1..q")
