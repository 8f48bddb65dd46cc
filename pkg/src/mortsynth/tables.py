"""Named N-dimensional contingency tables.

Tables are dense, immutable, and nonnegative.  Dimension order is
canonicalized alphabetically by name at construction so that two tables over
the same dimensions always store their cells in the same memory layout,
whatever order the caller declared.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    ConstraintMismatchError,
    DegenerateTableError,
    InvalidSpecError,
)

KINDS = ("count", "probability", "rate")

# Absolute slack for the probability-total invariant.
_PROB_TOL = 1e-9


@dataclass(frozen=True)
class DimensionSpec:
    """A named categorical dimension with an ordered list of levels."""

    name: str
    levels: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.name:
            raise InvalidSpecError("dimension name must be nonempty")
        levels = tuple(str(v) for v in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise InvalidSpecError(f"dimension {self.name!r} has no levels")
        if len(set(levels)) != len(levels):
            raise InvalidSpecError(f"dimension {self.name!r} has duplicate levels")

    def index(self, level: str) -> int:
        try:
            return self.levels.index(level)
        except ValueError:
            raise ConstraintMismatchError(
                f"level {level!r} not in dimension {self.name!r}"
            ) from None

    def __len__(self) -> int:
        return len(self.levels)


def canonical_dims(dims: Iterable[DimensionSpec]) -> tuple[DimensionSpec, ...]:
    """Sort dimension specs alphabetically by name, rejecting duplicates."""
    out = tuple(sorted(dims, key=lambda d: d.name))
    names = [d.name for d in out]
    if len(set(names)) != len(names):
        raise InvalidSpecError(f"duplicate dimension names: {names}")
    return out


class ContingencyTable:
    """Dense nonnegative array with named, leveled dimensions.

    Parameters
    ----------
    dims:
        Dimension specs in any order; storage is canonicalized alphabetically.
    values:
        Array shaped to the given dim order; reordered internally as needed.
    kind:
        One of ``count``, ``probability``, ``rate``.
    declared_total:
        For ``probability`` tables whose values intentionally sum to
        something other than 1 (e.g. shares read from a rounded source before
        normalization), the expected total.  ``None`` means the table must
        sum to 1.
    """

    __slots__ = ("_dims", "_values", "_kind", "_declared_total")

    def __init__(
        self,
        dims: Sequence[DimensionSpec],
        values: np.ndarray,
        kind: str = "count",
        declared_total: float | None = None,
    ) -> None:
        if kind not in KINDS:
            raise InvalidSpecError(f"kind must be one of {KINDS}, got {kind!r}")
        if not dims:
            raise InvalidSpecError("a table needs at least one dimension")
        given = tuple(dims)
        canon = canonical_dims(given)
        arr = np.asarray(values, dtype=float)
        expected_shape = tuple(len(d) for d in given)
        if arr.shape != expected_shape:
            raise InvalidSpecError(
                f"values shape {arr.shape} does not match dims {expected_shape}"
            )
        if given != canon:
            perm = [given.index(d) for d in canon]
            arr = np.transpose(arr, perm)
        arr = np.ascontiguousarray(arr)
        if not np.all(np.isfinite(arr)):
            raise InvalidSpecError("table values must be finite")
        if np.any(arr < 0):
            raise InvalidSpecError("table values must be nonnegative")
        if kind == "probability":
            target = 1.0 if declared_total is None else float(declared_total)
            if abs(float(arr.sum()) - target) > _PROB_TOL * max(1.0, abs(target)):
                raise InvalidSpecError(
                    f"probability table sums to {arr.sum()!r}, expected {target!r}"
                )
        arr.flags.writeable = False
        self._dims = canon
        self._values = arr
        self._kind = kind
        self._declared_total = declared_total

    # -- basic accessors ---------------------------------------------------

    @property
    def dims(self) -> tuple[DimensionSpec, ...]:
        return self._dims

    @property
    def dim_names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self._dims)

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def kind(self) -> str:
        return self._kind

    @property
    def declared_total(self) -> float | None:
        return self._declared_total

    @property
    def shape(self) -> tuple[int, ...]:
        return self._values.shape

    @property
    def n_cells(self) -> int:
        return int(self._values.size)

    def total(self) -> float:
        return float(self._values.sum())

    def dim(self, name: str) -> DimensionSpec:
        for d in self._dims:
            if d.name == name:
                return d
        raise ConstraintMismatchError(f"unknown dimension {name!r}")

    def value_at(self, coords: Mapping[str, str]) -> float:
        """Look up one cell by a mapping of dimension name to level label."""
        idx = tuple(self.dim(n).index(coords[n]) for n in self.dim_names)
        return float(self._values[idx])

    def cells(self) -> Iterator[tuple[dict[str, str], float]]:
        """Iterate cells as (coords, value) in canonical C order."""
        flat = self._values.ravel()
        for pos, multi in enumerate(np.ndindex(self.shape)):
            coords = {
                d.name: d.levels[i] for d, i in zip(self._dims, multi)
            }
            yield coords, float(flat[pos])

    # -- derived tables ----------------------------------------------------

    def with_values(self, values: np.ndarray, kind: str | None = None,
                    declared_total: float | None = None) -> "ContingencyTable":
        return ContingencyTable(self._dims, values, kind or self._kind,
                                declared_total)

    def marginalize(self, keep: Iterable[str]) -> "ContingencyTable":
        """Sum out every dimension not in ``keep``.

        Result totals match this table's total exactly (up to float
        associativity).  Keeping every dimension returns an equal table.
        """
        keep_set = set(keep)
        if not keep_set:
            raise ConstraintMismatchError("must keep at least one dimension")
        unknown = keep_set - set(self.dim_names)
        if unknown:
            raise ConstraintMismatchError(
                f"unknown dimension(s) {sorted(unknown)}; table has {self.dim_names}"
            )
        drop_axes = tuple(
            i for i, d in enumerate(self._dims) if d.name not in keep_set
        )
        if not drop_axes:
            return self
        summed = self._values.sum(axis=drop_axes)
        kept = tuple(d for d in self._dims if d.name in keep_set)
        return ContingencyTable(kept, summed, self._kind, self._declared_total)

    def rescale(self, new_total: float) -> "ContingencyTable":
        """Scale every cell so the table totals ``new_total``.

        Rescaling a probability table away from its total yields counts.
        """
        old = self.total()
        if old <= 0:
            raise DegenerateTableError("cannot rescale a zero-total table")
        if not new_total > 0:
            raise InvalidSpecError(f"new total must be positive, got {new_total!r}")
        if new_total == old:
            return self
        kind = self._kind
        declared = self._declared_total
        if kind == "probability":
            expected = 1.0 if declared is None else declared
            if abs(new_total - expected) > _PROB_TOL:
                kind, declared = "count", None
            else:
                declared = None if new_total == 1.0 else new_total
        return ContingencyTable(
            self._dims, self._values * (new_total / old), kind, declared
        )

    def normalized(self) -> "ContingencyTable":
        """Return this table rescaled to total 1 with kind ``probability``."""
        old = self.total()
        if old <= 0:
            raise DegenerateTableError("cannot normalize a zero-total table")
        return ContingencyTable(self._dims, self._values / old, "probability")

    # -- alignment helpers -------------------------------------------------

    def aligned_values(self, dim_names: Sequence[str]) -> np.ndarray:
        """View of the values broadcastable against ``dim_names`` axes.

        ``dim_names`` must be a superset of this table's dimensions; missing
        dimensions appear as length-1 axes.
        """
        missing = set(self.dim_names) - set(dim_names)
        if missing:
            raise ConstraintMismatchError(
                f"target dims {tuple(dim_names)} lack {sorted(missing)}"
            )
        shape = []
        src_axes = []
        for name in dim_names:
            if name in self.dim_names:
                shape.append(len(self.dim(name)))
                src_axes.append(self.dim_names.index(name))
            else:
                shape.append(1)
        arr = np.transpose(self._values, src_axes)
        return arr.reshape(shape)

    def broadcast_to(self, dims: Sequence[DimensionSpec]) -> "ContingencyTable":
        """Replicate this table's cells across additional dimensions."""
        target = canonical_dims(dims)
        for d in self._dims:
            if d not in target:
                raise ConstraintMismatchError(
                    f"target dims must contain {d.name!r} with identical levels"
                )
        names = tuple(d.name for d in target)
        shape = tuple(len(d) for d in target)
        arr = np.broadcast_to(self.aligned_values(names), shape)
        return ContingencyTable(target, arr.copy(), self._kind)

    # -- dunder ------------------------------------------------------------

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ContingencyTable):
            return NotImplemented
        return (
            self._dims == other._dims
            and self._kind == other._kind
            and np.array_equal(self._values, other._values)
        )

    def __repr__(self) -> str:
        dims = ", ".join(f"{d.name}[{len(d)}]" for d in self._dims)
        return f"ContingencyTable({dims}, kind={self._kind}, total={self.total():.6g})"


@dataclass(frozen=True)
class MarginalConstraint:
    """A target marginal over a named subset of dimensions."""

    over: tuple[str, ...]
    target: ContingencyTable

    def __post_init__(self) -> None:
        over = tuple(sorted(self.over))
        object.__setattr__(self, "over", over)
        if not over:
            raise InvalidSpecError("a constraint must cover at least one dimension")
        if set(over) != set(self.target.dim_names):
            raise ConstraintMismatchError(
                f"constraint over {over} but target has dims {self.target.dim_names}"
            )
        if self.target.total() <= 0:
            raise DegenerateTableError("constraint target must have positive total")

    def check_against(self, table: ContingencyTable) -> None:
        """Verify that every covered dimension exists with identical levels."""
        for name in self.over:
            joint_dim = table.dim(name)
            if joint_dim.levels != self.target.dim(name).levels:
                raise ConstraintMismatchError(
                    f"levels of dimension {name!r} differ between table and target"
                )

    def current_marginal(self, table: ContingencyTable) -> ContingencyTable:
        self.check_against(table)
        return table.marginalize(self.over)


def uniform_table(
    dims: Sequence[DimensionSpec], total: float, kind: str = "count"
) -> ContingencyTable:
    """Constant table whose cells sum to ``total``; the default fitting seed."""
    if not dims:
        raise InvalidSpecError("uniform_table needs at least one dimension")
    if not total > 0:
        raise InvalidSpecError(f"total must be positive, got {total!r}")
    canon = canonical_dims(dims)
    shape = tuple(len(d) for d in canon)
    n = int(np.prod(shape))
    values = np.full(shape, total / n)
    return ContingencyTable(canon, values, kind)
