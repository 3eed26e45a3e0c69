"""File formats: gridded fields and series, chains, tabular results and the basis cache"""
import hashlib
import json
import logging
import os
from pathlib import Path
import numpy as np
import pandas as pd
from models.basis import BasisKind, BasisSet
from models.fields import FieldVector, GriddedSeries
from models.grid import Grid
from utils.constants import BASIS_CACHE_VERSION
from utils.errors import (
    CellCountError, FieldFormatError, GridMismatchError, NonFiniteValueError, StaleCacheError,
)
from utils.helpers import format_float

logger = logging.getLogger(__name__)


def provenance_line(config):
    """One header line carrying the fully resolved configuration"""
    return "#config " + json.dumps(config or {}, sort_keys=True, default=str)


def _parse_header(path, lines, kind_tag):
    grid = None
    role, model_id = None, ""
    times = None
    body_start = 0
    for number, raw in enumerate(lines):
        line = raw.strip()
        if not line:
            continue
        if not line.startswith("#"):
            body_start = number
            break
        parts = line[1:].split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "grid":
            if len(parts) != 3:
                raise FieldFormatError(f"{path}: malformed grid header {line!r}")
            try:
                grid = Grid(int(parts[1]), int(parts[2]))
            except ValueError as e:
                raise FieldFormatError(f"{path}: malformed grid header {line!r}") from e
        elif tag == kind_tag:
            if len(parts) < 2:
                raise FieldFormatError(f"{path}: {kind_tag} header needs a role")
            role = parts[1]
            model_id = " ".join(parts[2:])
        elif tag == "times":
            try:
                times = np.array([float(t) for t in parts[1:]])
            except ValueError as e:
                raise FieldFormatError(f"{path}: malformed times header") from e
        elif tag == "config":
            continue
        else:
            raise FieldFormatError(f"{path}: unknown header tag #{tag}")
    else:
        body_start = len(lines)
    if grid is None:
        raise FieldFormatError(f"{path}: missing #grid header")
    if role is None:
        raise FieldFormatError(f"{path}: missing #{kind_tag} header")
    return grid, role, model_id, times, body_start


def _parse_numbers(path, tokens):
    try:
        values = np.array([float(t) for t in tokens], dtype=float)
    except ValueError as e:
        raise FieldFormatError(f"{path}: non-numeric value ({e})") from e
    if not np.all(np.isfinite(values)):
        raise NonFiniteValueError(f"{path}: non-finite values are not supported")
    return values


def _check_grid(path, found, expected):
    if expected is not None and found != expected:
        raise GridMismatchError(f"{path}: grid {found.descriptor} disagrees with manifest grid {expected.descriptor}")


def load_gridded_field(path, grid=None):
    """Parse a field file; `grid` (if given) must match the file's grid descriptor"""
    lines = Path(path).read_text().splitlines()
    file_grid, role, model_id, _, body_start = _parse_header(path, lines, "field")
    _check_grid(path, file_grid, grid)
    tokens = [t for line in lines[body_start:] for t in line.split() if not line.lstrip().startswith("#")]
    if len(tokens) != file_grid.n_grid:
        raise CellCountError(file_grid.n_grid, len(tokens), path)
    return FieldVector(file_grid, _parse_numbers(path, tokens), role, model_id)


def write_gridded_field(path, field, config=None):
    lines = [f"#grid {field.grid.n_lat} {field.grid.n_lon}", f"#field {field.role} {field.model_id}".rstrip()]
    if config is not None:
        lines.append(provenance_line(config))
    lines.extend(format_float(v) for v in field.values)
    _write_text(path, "\n".join(lines) + "\n")


def load_gridded_series(path, grid=None):
    lines = Path(path).read_text().splitlines()
    file_grid, role, model_id, times, body_start = _parse_header(path, lines, "series")
    _check_grid(path, file_grid, grid)
    if times is None:
        raise FieldFormatError(f"{path}: missing #times header")
    rows = [line.split() for line in lines[body_start:] if line.strip() and not line.lstrip().startswith("#")]
    if len(rows) != times.size:
        raise FieldFormatError(f"{path}: {len(rows)} rows for {times.size} time stamps")
    for row in rows:
        if len(row) != file_grid.n_grid:
            raise CellCountError(file_grid.n_grid, len(row), path)
    values = _parse_numbers(path, [t for row in rows for t in row]).reshape(len(rows), file_grid.n_grid)
    return GriddedSeries(file_grid, times, values, role, model_id)


def write_gridded_series(path, series, config=None):
    lines = [
        f"#grid {series.grid.n_lat} {series.grid.n_lon}",
        f"#series {series.role} {series.model_id}".rstrip(),
        "#times " + " ".join(format_float(t) for t in series.times),
    ]
    if config is not None:
        lines.append(provenance_line(config))
    lines.extend(" ".join(format_float(v) for v in row) for row in series.values)
    _write_text(path, "\n".join(lines) + "\n")


def write_table(path, rows, config=None, columns=None):
    """Delimited table with a provenance header; floats keep 17 significant digits"""
    frame = pd.DataFrame(list(rows), columns=columns)
    with open(path, "w", newline="") as handle:
        handle.write(provenance_line(config) + "\n")
        frame.to_csv(handle, index=False, float_format="%.17g", na_rep="nan", lineterminator="\n")
    return frame


def read_table(path):
    return pd.read_csv(path, comment="#", float_precision="round_trip")


def write_chain(path, samples, config=None):
    columns = {"beta": samples.beta}
    for i in range(samples.kappa):
        columns[f"lambda_{i + 1}"] = samples.lambdas[:, i]
    frame = pd.DataFrame(columns)
    with open(path, "w", newline="") as handle:
        handle.write(provenance_line(config) + "\n")
        frame.to_csv(handle, index=False, float_format="%.17g", lineterminator="\n")


def write_json(path, payload, config=None):
    document = dict(payload)
    document["config"] = config or {}
    _write_text(path, json.dumps(document, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def _write_text(path, text):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as handle:
        handle.write(text)


def basis_cache_key(grid, kernel):
    signature = f"v{BASIS_CACHE_VERSION}:{grid.n_lat}x{grid.n_lon}:{kernel}"
    return hashlib.sha256(signature.encode()).hexdigest()[:16]


def _content_hash(vectors, eigenvalues):
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(vectors).tobytes())
    digest.update(np.ascontiguousarray(eigenvalues).tobytes())
    return digest.hexdigest()


def basis_cache_path(cache_dir, grid, kernel):
    return Path(cache_dir) / f"laplace_{grid.n_lat}x{grid.n_lon}_{kernel}_{basis_cache_key(grid, kernel)}.npz"


def save_basis_cache(cache_dir, basis):
    """Store grid descriptor, column-major eigenvectors and eigenvalues with a content hash"""
    path = basis_cache_path(cache_dir, basis.grid, basis.kernel)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp.npz")
    np.savez(
        tmp,
        grid=np.array(basis.grid.descriptor),
        kernel=np.array(basis.kernel),
        key=np.array(basis_cache_key(basis.grid, basis.kernel)),
        vectors=np.asfortranarray(basis.vectors),
        eigenvalues=basis.eigenvalues,
        content_hash=np.array(_content_hash(basis.vectors, basis.eigenvalues)),
    )
    os.replace(tmp, path)
    logger.info(f"✅ Saved basis cache {path}")
    return path


def load_basis_cache(cache_dir, grid, kernel):
    """Return the cached basis, None when absent; raise StaleCacheError when it does not verify"""
    path = basis_cache_path(cache_dir, grid, kernel)
    if not path.exists():
        return None
    try:
        with np.load(path, allow_pickle=False) as data:
            descriptor = tuple(int(v) for v in data["grid"])
            key = str(data["key"])
            stored_kernel = str(data["kernel"])
            vectors = np.array(data["vectors"])
            eigenvalues = np.array(data["eigenvalues"])
            content_hash = str(data["content_hash"])
    except (OSError, KeyError, ValueError) as e:
        raise StaleCacheError(f"{path}: unreadable basis cache ({e})") from e
    if descriptor != grid.descriptor or stored_kernel != kernel or key != basis_cache_key(grid, kernel):
        raise StaleCacheError(f"{path}: cache key does not match grid {grid.descriptor} / kernel {kernel}")
    if _content_hash(vectors, eigenvalues) != content_hash:
        raise StaleCacheError(f"{path}: content hash mismatch")
    return BasisSet(grid, BasisKind.LAPLACIAN, vectors, eigenvalues, kernel)
