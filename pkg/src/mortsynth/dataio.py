"""Reading and writing tables, models, manifests, and reports.

Tables travel as long-format CSV (one column per dimension, final column
``value``) next to a JSON sidecar (``<name>.meta.json``) declaring kind,
units, and dimension level order.  Values are written with ``repr`` so a
write/read cycle reproduces every float bit-for-bit.  All writes go
through a temp-file-then-rename step, so readers never observe partial
files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import InvalidSpecError, TableParseError
from .gam import GamModel, model_from_dict, model_to_dict
from .tables import ContingencyTable, DimensionSpec

_UNITS = ("percent", "fraction", "count", "rate")
_KINDS = ("count", "probability", "rate")
# Which units may encode which table kind.
_UNIT_FOR_KIND = {
    "count": ("count",),
    "probability": ("percent", "fraction"),
    "rate": ("rate", "percent"),
}


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def sha256_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _meta_path(csv_path: Path) -> Path:
    return csv_path.with_name(csv_path.stem + ".meta.json")


def read_table(
    path: str | Path,
    expected_dims: Sequence[DimensionSpec] | None = None,
    conditioning_marginal: ContingencyTable | None = None,
    *,
    raw: bool = False,
) -> ContingencyTable:
    """Load a long-format table plus its metadata sidecar.

    Percent values are divided by 100.  A sidecar may declare the table
    ``conditional_on`` one of its dimensions (each slice along that
    dimension sums to one); such tables are converted to joint form by
    multiplying with ``conditioning_marginal``, which must then be given.
    Every cell of the declared grid must appear exactly once.

    With ``raw=True`` a conditional table is returned as stored, without
    the slice-sum check or joint conversion — validation code uses this
    to inspect possibly-broken inputs instead of refusing them.
    """
    csv_path = Path(path)
    meta_path = _meta_path(csv_path)
    if not csv_path.exists():
        raise TableParseError(f"table file not found: {csv_path}")
    if not meta_path.exists():
        raise TableParseError(f"metadata sidecar not found: {meta_path}")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise TableParseError(f"{meta_path}: invalid JSON ({exc})") from exc

    kind = meta.get("kind")
    units = meta.get("units")
    if kind not in _KINDS:
        raise TableParseError(f"{meta_path}: kind must be one of {_KINDS}, got {kind!r}")
    if units not in _UNITS:
        raise TableParseError(
            f"{meta_path}: units must be one of {_UNITS}, got {units!r}"
        )
    if units not in _UNIT_FOR_KIND[kind]:
        raise TableParseError(
            f"{meta_path}: units {units!r} cannot encode a {kind!r} table"
        )
    dim_meta = meta.get("dimensions")
    if not dim_meta:
        raise TableParseError(f"{meta_path}: missing dimensions")
    dims = tuple(
        DimensionSpec(d["name"], tuple(d["levels"])) for d in dim_meta
    )
    names = [d.name for d in dims]
    level_index = {d.name: {lev: i for i, lev in enumerate(d.levels)} for d in dims}
    shape = tuple(len(d) for d in dims)

    values = np.full(shape, np.nan)
    with open(csv_path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise TableParseError(f"{csv_path}: empty file") from None
        if header != names + ["value"]:
            raise TableParseError(
                f"{csv_path}: header {header!r} does not match declared "
                f"columns {names + ['value']!r}"
            )
        n_rows = 0
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names) + 1:
                raise TableParseError(
                    f"{csv_path}:{row_no}: expected {len(names) + 1} fields, "
                    f"got {len(row)}"
                )
            idx = []
            for name, label in zip(names, row[:-1]):
                try:
                    idx.append(level_index[name][label])
                except KeyError:
                    raise TableParseError(
                        f"{csv_path}:{row_no}: unknown {name} level {label!r}"
                    ) from None
            try:
                v = float(row[-1])
            except ValueError:
                raise TableParseError(
                    f"{csv_path}:{row_no}: value {row[-1]!r} is not a number"
                ) from None
            if not np.isfinite(v) or v < 0:
                raise TableParseError(
                    f"{csv_path}:{row_no}: value must be finite and nonnegative"
                )
            pos = tuple(idx)
            if not np.isnan(values[pos]):
                raise TableParseError(
                    f"{csv_path}:{row_no}: duplicate cell {row[:-1]!r}"
                )
            values[pos] = v
            n_rows += 1
    if n_rows == 0:
        raise TableParseError(f"{csv_path}: no data rows")
    if np.isnan(values).any():
        missing = int(np.isnan(values).sum())
        raise TableParseError(
            f"{csv_path}: {missing} declared cells are missing (no zero-fill)"
        )
    if units == "percent":
        values = values / 100.0

    conditional_on = meta.get("conditional_on")
    declared_total = meta.get("declared_total")
    if conditional_on is not None and raw:
        conditional_on = None
    if conditional_on is not None:
        if conditional_on not in names:
            raise TableParseError(
                f"{meta_path}: conditional_on {conditional_on!r} is not a "
                "dimension of this table"
            )
        if conditioning_marginal is None:
            raise TableParseError(
                f"{csv_path} is conditional on {conditional_on!r}: a marginal "
                "table for that dimension is required to form the joint"
            )
        if conditioning_marginal.dim_names != (conditional_on,):
            raise TableParseError(
                "conditioning marginal must be one-dimensional over "
                f"{conditional_on!r}"
            )
        cdim = dims[names.index(conditional_on)]
        if conditioning_marginal.dims[0].levels != cdim.levels:
            raise TableParseError(
                f"conditioning marginal levels do not match {conditional_on!r}"
            )
        axis = names.index(conditional_on)
        slice_sums = values.sum(
            axis=tuple(i for i in range(values.ndim) if i != axis)
        )
        if not np.allclose(slice_sums, 1.0, atol=1e-6):
            raise TableParseError(
                f"{csv_path}: slices along {conditional_on!r} must each sum "
                f"to 1 after unit conversion; got {slice_sums}"
            )
        weight_shape = [1] * values.ndim
        weight_shape[axis] = len(cdim)
        weights = conditioning_marginal.values.reshape(weight_shape)
        values = values * (weights / conditioning_marginal.total())
        declared_total = 1.0

    if declared_total is None and kind == "probability":
        declared_total = float(values.sum())
    table = ContingencyTable(dims, values, kind, declared_total=declared_total)
    if expected_dims is not None:
        want = {d.name: d.levels for d in expected_dims}
        have = {d.name: d.levels for d in table.dims}
        if want != have:
            raise TableParseError(
                f"{csv_path}: dimensions {sorted(have)} with their levels do "
                f"not match the expected layout {sorted(want)}"
            )
    return table


def write_table(
    table: ContingencyTable,
    path: str | Path,
    description: str | None = None,
    *,
    units: str | None = None,
    conditional_on: str | None = None,
) -> None:
    """Write a table and sidecar; values use ``repr`` for lossless reads.

    ``units`` defaults to the natural encoding of the table kind.  When
    set to ``"percent"`` the stored values are taken to already be on the
    percent scale, and the sidecar omits the declared total so readers
    recompute it after dividing by 100.
    """
    csv_path = Path(path)
    if units is None:
        units = {"count": "count", "probability": "fraction", "rate": "rate"}[
            table.kind
        ]
    if units not in _UNIT_FOR_KIND[table.kind]:
        raise InvalidSpecError(
            f"units {units!r} cannot encode a {table.kind!r} table"
        )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(table.dim_names) + ["value"])
    for coords, value in table.cells():
        writer.writerow(list(coords.values()) + [repr(float(value))])
    _atomic_write_text(csv_path, buf.getvalue())

    meta = {
        "kind": table.kind,
        "units": units,
        "dimensions": [
            {"name": d.name, "levels": list(d.levels)} for d in table.dims
        ],
    }
    if table.kind == "probability" and units != "percent" and conditional_on is None:
        meta["declared_total"] = table.declared_total
    if conditional_on is not None:
        if conditional_on not in table.dim_names:
            raise InvalidSpecError(
                f"conditional_on {conditional_on!r} is not a dimension"
            )
        meta["conditional_on"] = conditional_on
    if description:
        meta["description"] = description
    _atomic_write_text(
        _meta_path(csv_path), json.dumps(meta, indent=2, sort_keys=True) + "\n"
    )


def write_model(model: GamModel, path: str | Path) -> None:
    """Serialize a fitted transfer model to JSON (bit-exact round-trip)."""
    _atomic_write_text(
        Path(path), json.dumps(model_to_dict(model), indent=2, sort_keys=True) + "\n"
    )


def read_model(path: str | Path) -> GamModel:
    p = Path(path)
    if not p.exists():
        raise TableParseError(f"model file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise TableParseError(f"{p}: invalid JSON ({exc})") from exc
    return model_from_dict(data)


def write_json(data: Mapping, path: str | Path) -> None:
    """Deterministic JSON emission: sorted keys, no timestamps."""
    _atomic_write_text(Path(path), json.dumps(data, indent=2, sort_keys=True) + "\n")


def read_json(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise TableParseError(f"file not found: {p}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise TableParseError(f"{p}: invalid JSON ({exc})") from exc


def build_manifest(
    config_echo: Mapping,
    input_paths: Sequence[str | Path],
    seed: int,
    extra: Mapping | None = None,
) -> dict:
    """Reproducibility record: config echo, input digests, version, seed."""
    from . import __version__

    manifest = {
        "tool": "mortsynth",
        "version": __version__,
        "seed": int(seed),
        "config": dict(config_echo),
        "input_digests": {
            str(p): sha256_digest(p) for p in sorted(str(q) for q in input_paths)
        },
    }
    if extra:
        manifest.update(extra)
    return manifest


def write_ci_rows(
    dims: Sequence[DimensionSpec],
    columns: Mapping[str, np.ndarray],
    path: str | Path,
) -> None:
    """One row per cell (canonical order) with the given named columns.

    Used for simulation summaries where a cell carries several statistics
    rather than the single ``value`` of an ordinary table file.
    """
    shape = tuple(len(d) for d in dims)
    n = int(np.prod(shape)) if shape else 1
    for name, col in columns.items():
        if col.shape != (n,):
            raise InvalidSpecError(
                f"column {name!r} must be flat with one entry per cell"
            )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([d.name for d in dims] + list(columns))
    level_grids = [d.levels for d in dims]
    for flat in range(n):
        coords = np.unravel_index(flat, shape) if shape else ()
        labels = [level_grids[i][c] for i, c in enumerate(coords)]
        writer.writerow(
            labels + [repr(float(columns[name][flat])) for name in columns]
        )
    _atomic_write_text(Path(path), buf.getvalue())


def load_config(path: str | Path) -> dict:
    """Parse a run configuration (TOML: flat keys grouped in sections)."""
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib

    p = Path(path)
    if not p.exists():
        raise TableParseError(f"config file not found: {p}")
    try:
        with open(p, "rb") as f:
            return tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise TableParseError(f"{p}: invalid config ({exc})") from exc
