"""Dataset and result files.

Every CSV written here is comma-separated with a single header row, preceded
by ``#`` comment lines that carry the originating config and seed.  Floats
are written with 17 significant digits so arrays round-trip exactly.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

# raw GLA-style inputs: ward income in GBP/a and floor space in m^2
INCOME_SHARE = 0.21
ORIGIN_UNIT = 1e8
DEST_UNIT = 1e5


class DataError(ValueError):
    pass


def provenance_lines(provenance):
    if not provenance:
        return []
    return [f"# {k}: {json.dumps(v, sort_keys=True, default=str)}" for k, v in provenance.items()]


def write_table(path, header, rows, provenance=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size and rows.shape[1] != len(header):
        raise ValueError(f"{len(header)} header names for {rows.shape[1]} columns")
    with path.open("w") as fh:
        for line in provenance_lines(provenance):
            fh.write(line + "\n")
        fh.write(",".join(header) + "\n")
        if rows.size:
            np.savetxt(fh, rows, delimiter=",", fmt="%.17g")
    return path


def read_provenance(path):
    out = {}
    with Path(path).open() as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, val = line[1:].strip().partition(": ")
            out[key] = json.loads(val)
    return out


def read_table(path):
    """Returns ``(header, array)`` for a file written by :func:`write_table`."""
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#") and ln.strip()]
    if not lines:
        raise DataError(f"{path}: no header row")
    header = lines[0].strip().split(",")
    body = np.loadtxt(lines[1:], delimiter=",", ndmin=2) if len(lines) > 1 else np.empty((0, len(header)))
    return header, body


# -- tolerant numeric readers for external inputs -------------------------------


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_numeric_csv(path):
    """Numeric matrix from a CSV that may carry a header row and/or a
    non-numeric label column."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if rows and not all(_is_number(c) for c in rows[0] if c.strip()):
        rows = rows[1:]
    out = []
    for k, r in enumerate(rows):
        cells = [c for c in r if c.strip() != ""]
        while cells and not _is_number(cells[0]):
            cells = cells[1:]
        if not all(_is_number(c) for c in cells):
            raise DataError(f"{path}: non-numeric entry in data row {k}")
        out.append([float(c) for c in cells])
    if not out:
        raise DataError(f"{path}: no data rows")
    width = {len(r) for r in out}
    if len(width) != 1:
        raise DataError(f"{path}: ragged rows with lengths {sorted(width)}")
    return np.array(out)


def _drop_index_column(a):
    if a.shape[1] > 1 and np.array_equal(a[:, 0], np.arange(a.shape[0])):
        return a[:, 1:]
    return a


def read_vector(path):
    a = read_numeric_csv(path)
    if a.shape[1] == 2:
        a = _drop_index_column(a)
    if a.shape[1] != 1 and a.shape[0] == 1:
        return a[0]
    if a.shape[1] != 1:
        raise DataError(f"{path}: expected a single column, got {a.shape[1]}")
    return a[:, 0]


def _check_positive(name, a, path):
    bad = np.argwhere(~(a > 0))
    if bad.size:
        raise DataError(f"{path}: {name} must be strictly positive; first offending entry at {tuple(bad[0])} = {a[tuple(bad[0])]}")


def convenience_from_distances(D):
    """``c_ij = exp(-d_ij / max d)`` for non-negative travel costs."""
    D = np.asarray(D, dtype=float)
    if np.any(D < 0) or not np.all(np.isfinite(D)):
        raise DataError("distances must be finite and non-negative")
    scale = D.max() if D.size else 0.0
    if scale <= 0:
        raise DataError("distance matrix is all zero; no scale to normalise by")
    return np.exp(-D / scale)


def min_mode_distance(transit, driving):
    transit, driving = np.asarray(transit, dtype=float), np.asarray(driving, dtype=float)
    if transit.shape != driving.shape:
        raise DataError(f"shape mismatch: {transit.shape} vs {driving.shape}")
    return np.minimum(transit, driving)


def load_hw_dataset(origin_zones, destination_zones, network, raw_units=False, network_is_distance=False, time_series=None):
    """Reads ``(O, W, C)`` and optionally an ``(L, M)`` series of observed
    destination sizes.  Without a series the destination sizes are the single
    observed frame.

    ``raw_units`` rescales ward income (times 0.21, in 1e8 per year) and floor
    space (in 1e5 m^2).  ``network_is_distance`` maps travel costs to
    convenience factors.
    """
    O = read_vector(origin_zones)
    W = read_vector(destination_zones)
    C = read_numeric_csv(network)
    if C.shape[1] == W.size + 1:
        C = _drop_index_column(C)
    if C.shape != (O.size, W.size):
        raise DataError(
            f"{network}: network has {C.shape[0]} rows x {C.shape[1]} columns, "
            f"expected {O.size} rows (origin zones) x {W.size} columns (destination zones)"
        )
    if raw_units:
        O = O * INCOME_SHARE / ORIGIN_UNIT
        W = W / DEST_UNIT
    _check_positive("origin sizes", O, origin_zones)
    _check_positive("destination sizes", W, destination_zones)
    if network_is_distance:
        C = convenience_from_distances(C)
    elif np.any(C <= 0) or np.any(C > 1):
        bad = np.argwhere((C <= 0) | (C > 1))[0]
        raise DataError(f"{network}: convenience factors must lie in (0, 1]; row {bad[0]}, column {bad[1]} = {C[tuple(bad)]}")
    if time_series is None:
        series = W[None, :]
    else:
        series = read_numeric_csv(time_series)
        if series.shape[1] == W.size + 1:
            series = _drop_index_column(series)
        if series.shape[1] != W.size:
            raise DataError(f"{time_series}: {series.shape[1]} columns, expected {W.size}")
        if raw_units:
            series = series / DEST_UNIT
        _check_positive("time series", series, time_series)
    return O, W, C, series


def write_hw_dataset(out_dir, O, W, C, series=None, provenance=None):
    out_dir = Path(out_dir)
    paths = {
        "origin_zones": write_table(out_dir / "origin_sizes.csv", ["O"], np.asarray(O)[:, None], provenance),
        "destination_zones": write_table(out_dir / "dest_sizes.csv", ["W"], np.asarray(W)[:, None], provenance),
        "network": write_table(out_dir / "network.csv", [f"c{j}" for j in range(len(W))], C, provenance),
    }
    if series is not None:
        paths["time_series"] = write_table(out_dir / "time_series.csv", [f"W{j}" for j in range(len(W))], series, provenance)
    return paths


def write_series(path, series, provenance=None):
    series = np.asarray(series, dtype=float)
    t = np.arange(len(series))[:, None]
    return write_table(path, ["t", "S", "I", "R"], np.hstack([t, series]), provenance)


def read_series(path):
    header, a = read_table(path)
    if header[:4] == ["t", "S", "I", "R"]:
        return a[:, 1:4]
    a = read_numeric_csv(path)
    if a.shape[1] == 4:
        a = a[:, 1:]
    if a.shape[1] != 3:
        raise DataError(f"{path}: expected S, I, R columns")
    return a


def write_samples(path, samples, provenance=None):
    header = ["seed", "epoch", "step", *samples.names, "J"]
    rows = np.column_stack([samples.seed, samples.epoch, samples.step, samples.estimates, samples.loss])
    return write_table(path, header, rows, provenance)


def read_samples(path):
    from .trainer import SampleSet

    header, a = read_table(path)
    if header[:3] != ["seed", "epoch", "step"] or header[-1] != "J":
        raise DataError(f"{path}: not a sample file (header {header})")
    return SampleSet(
        names=header[3:-1],
        seed=a[:, 0].astype(np.int64),
        epoch=a[:, 1].astype(np.int64),
        step=a[:, 2].astype(np.int64),
        estimates=a[:, 3:-1],
        loss=a[:, -1],
    )


def write_density(path, md, provenance=None):
    return write_table(path, [md.name, "density"], np.column_stack([md.grid, md.density]), provenance)


def write_json(path, payload, provenance=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(payload)
    if provenance:
        doc["provenance"] = provenance
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=float) + "\n")
    return path
