"""Plain-text serialization of images, sinograms, histories and scans.

CSV files are the source of truth and round-trip exactly: floats are written
with ``repr``, the shortest string that parses back to the same double.
Graymaps are 16-bit and meant for eyeballing only.
"""

from __future__ import annotations

import configparser
import csv
import json
import math
from pathlib import Path

import numpy as np

from .forward import ProjectionGeometry, Sinogram

HISTORY_COLUMNS = ("k", "objective", "r", "s", "beta", "mb_proportion", "delta_a", "delta_f")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_rows(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _read_rows(path, header):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != tuple(header):
        raise ValueError(f"{path}: expected header {','.join(header)}")
    return rows[1:]


def write_image_csv(path, values, M: int) -> Path:
    """``M`` lines of ``M`` comma-separated values, top row first."""
    img = np.asarray(values, float).reshape(M, M)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in img:
            w.writerow([repr(float(v)) for v in row])
    return path


def read_image_csv(path) -> np.ndarray:
    """Flat image in pixel order; raises if the file is not square."""
    with Path(path).open(newline="") as fh:
        rows = [[float(v) for v in r] for r in csv.reader(fh) if r]
    M = len(rows)
    if M == 0 or any(len(r) != M for r in rows):
        raise ValueError(f"{path}: image CSV must be square")
    return np.array(rows).ravel()


def write_pgm(path, values, M: int, vmin: float | None = None, vmax: float | None = None) -> Path:
    """Binary 16-bit graymap, linearly mapping ``[vmin, vmax]`` to ``[0, 65535]``."""
    img = np.asarray(values, float).reshape(M, M)
    lo = float(img.min()) if vmin is None else vmin
    hi = float(img.max()) if vmax is None else vmax
    scale = 65535.0 / (hi - lo) if hi > lo else 0.0
    q = np.clip(np.rint((img - lo) * scale), 0, 65535).astype(">u2")
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(f"P5\n{M} {M}\n65535\n".encode("ascii"))
        fh.write(q.tobytes())
    return path


def read_pgm(path, vmin: float = 0.0, vmax: float = 1.0) -> np.ndarray:
    """Inverse of :func:`write_pgm` up to 16-bit quantization."""
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end].decode("ascii"))
        pos = end
    if fields[0] != "P5" or fields[3] != "65535":
        raise ValueError(f"{path}: not a 16-bit binary graymap")
    w, h = int(fields[1]), int(fields[2])
    q = np.frombuffer(data[pos + 1:], dtype=">u2", count=w * h).astype(float)
    return vmin + q * (vmax - vmin) / 65535.0


def write_sinogram_csv(path, d: Sinogram) -> Path:
    g = d.geometry
    return _write_rows(path, ("s", "omega", "value"), zip(g.s, g.omega, d.values))


def read_sinogram_csv(path) -> Sinogram:
    """Rebuild the angle-major geometry from the ``s,omega,value`` rows."""
    rows = np.array(_read_rows(path, ("s", "omega", "value")), dtype=float).reshape(-1, 3)
    s, w, v = rows.T
    angles = np.unique(w)
    n_det = len(s) // max(len(angles), 1)
    if n_det * len(angles) != len(s):
        raise ValueError(f"{path}: rows do not form an angle-major grid")
    geom = ProjectionGeometry(w[::n_det], s[:n_det])
    if not (np.array_equal(geom.s, s) and np.array_equal(geom.omega, w)):
        raise ValueError(f"{path}: rows do not form an angle-major grid")
    return Sinogram(geom, v)


def write_history_csv(path, history) -> Path:
    rows = ([getattr(h, c) for c in HISTORY_COLUMNS] for h in history)
    return _write_rows(path, HISTORY_COLUMNS, rows)


def write_scan_csv(path, offsets, values) -> Path:
    return _write_rows(path, ("offset", "value"), zip(offsets, values))


def read_scan_csv(path) -> tuple[np.ndarray, np.ndarray]:
    rows = np.array(_read_rows(path, ("offset", "value")), dtype=float).reshape(-1, 2)
    return rows[:, 0], rows[:, 1]


def write_boundary_csv(path, sets) -> Path:
    """``set_index,x,y`` rows; ``sets`` holds point arrays, outermost first."""
    rows = ((k, x, y) for k, pts in enumerate(sets) for x, y in np.asarray(pts))
    return _write_rows(path, ("set_index", "x", "y"), rows)


def read_boundary_csv(path) -> list[np.ndarray]:
    rows = _read_rows(path, ("set_index", "x", "y"))
    out: dict[int, list] = {}
    for k, x, y in rows:
        out.setdefault(int(k), []).append((float(x), float(y)))
    return [np.array(out[k]) for k in sorted(out)]


def write_report_csv(path, records, columns) -> Path:
    """Generic table; non-numeric cells are written verbatim."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for rec in records:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in (rec[c] for c in columns)])
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer, np.floating, np.bool_)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, Path):
        return str(x)
    return x


def write_manifest(path, payload: dict) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


def read_config(path, schema: dict[str, dict[str, type]]) -> dict[str, dict]:
    """Parse a sectioned ``key = value`` file against ``schema``.

    ``schema`` maps section names to ``{key: type}``.  Unknown sections or
    keys raise :class:`ConfigError`; values are converted with the given type
    (``bool`` accepts the usual yes/no spellings, ``tuple`` a comma list of
    floats).
    """
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with Path(path).open() as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out: dict[str, dict] = {}
    for section in cp.sections():
        if section not in schema:
            raise ConfigError(f"unknown section [{section}]; known: {sorted(schema)}")
        keys = schema[section]
        out[section] = {}
        for key, raw in cp.items(section):
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            out[section][key] = _convert(raw, keys[key], f"[{section}] {key}")
    return out


def _convert(raw: str, kind: type, where: str):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "yes", "true", "on"):
                return True
            if low in ("0", "no", "false", "off"):
                return False
            raise ValueError(raw)
        if kind is tuple:
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if kind is float:
            return float(raw)
        if kind is int:
            return int(raw)
        return kind(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind.__name__}") from exc
