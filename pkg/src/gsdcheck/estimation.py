"""Grid maximum-likelihood estimation of GSD parameters.

Log-probabilities of every score are precomputed on a fixed grid of
399 ``psi`` values (1.01 .. 4.99, step 0.01) by 400 ``rho`` values
(0.0025 .. 1, step 0.0025).  Fitting a sample is an exhaustive scan of
that grid for the cell maximising the multinomial log-likelihood
``sum_j k_j log p_j`` (the multinomial coefficient is constant across
cells and is omitted).

Grid file layout (all little-endian)::

    magic          8 bytes   b"GSDGRID\\0"
    format_version uint32
    n_psi          uint32
    n_rho          uint32
    n_categories   uint32
    float_env      32 bytes  ASCII, NUL padded
    psi_values     n_psi float64
    rho_values     n_rho float64
    log_pmf        n_psi * n_rho * n_categories float64, row-major
    checksum       32 bytes  SHA-256 of everything above
"""

from __future__ import annotations

import hashlib
import struct
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gsd import N_CATEGORIES, GsdParams, as_counts, gsd_log_pmf_array

FORMAT_VERSION = 1
MAGIC = b"GSDGRID\0"
FLOAT_ENV = b"ieee754-binary64-le"
_HEADER = struct.Struct("<8sIIII32s")
_DIGEST_SIZE = 32

N_PSI = 399
N_RHO = 400

# stands in for log(0) during scans: k * _LOG_ZERO stays finite for any
# realistic k and sits far below every attainable finite log-likelihood
_LOG_ZERO = -1e250


class GridFileError(Exception):
    """Grid cache file is missing, corrupted or of another format version."""


class GridVersionError(GridFileError):
    pass


def grid_axes() -> tuple[np.ndarray, np.ndarray]:
    psi = np.round(1.01 + 0.01 * np.arange(N_PSI), 2)
    rho = np.round(0.0025 * np.arange(1, N_RHO + 1), 4)
    return psi, rho


@dataclass(frozen=True, eq=False)
class ParamGrid:
    psi_values: np.ndarray
    rho_values: np.ndarray
    log_pmf: np.ndarray  # (n_psi, n_rho, 5)
    format_version: int = FORMAT_VERSION
    # per-category columns over the flattened cells, contiguous for fast scans
    _columns: np.ndarray = field(init=False, repr=False)
    _scan_columns: np.ndarray = field(init=False, repr=False)
    _pmf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        expected = (len(self.psi_values), len(self.rho_values), N_CATEGORIES)
        if self.log_pmf.shape != expected:
            raise ValueError(f"log_pmf has shape {self.log_pmf.shape}, expected {expected}")
        flat = self.log_pmf.reshape(-1, N_CATEGORIES)
        object.__setattr__(self, "_columns", np.ascontiguousarray(flat.T))
        scan = np.where(np.isneginf(self._columns), _LOG_ZERO, self._columns)
        object.__setattr__(self, "_scan_columns", scan)
        object.__setattr__(self, "_pmf", np.exp(flat))
        for arr in (self.psi_values, self.rho_values, self.log_pmf, self._columns, self._scan_columns, self._pmf):
            arr.flags.writeable = False

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.psi_values), len(self.rho_values)

    @property
    def n_cells(self) -> int:
        return self.shape[0] * self.shape[1]

    def cell_index(self, psi: float, rho: float) -> int:
        """Flat index of the grid cell nearest to ``(psi, rho)``."""
        i = int(np.argmin(np.abs(self.psi_values - psi)))
        j = int(np.argmin(np.abs(self.rho_values - rho)))
        return i * len(self.rho_values) + j

    def params(self, cell: int) -> GsdParams:
        i, j = divmod(int(cell), len(self.rho_values))
        return GsdParams(float(self.psi_values[i]), float(self.rho_values[j]))

    def pmf(self, cell: int) -> np.ndarray:
        return self._pmf[int(cell)]

    def log_pmf_row(self, cell: int) -> np.ndarray:
        return self._columns[:, int(cell)]

    def __eq__(self, other):
        if not isinstance(other, ParamGrid):
            return NotImplemented
        return (
            self.format_version == other.format_version
            and np.array_equal(self.psi_values, other.psi_values)
            and np.array_equal(self.rho_values, other.rho_values)
            and np.array_equal(self.log_pmf, other.log_pmf)
        )

    __hash__ = None


def build_grid() -> ParamGrid:
    psi, rho = grid_axes()
    log_pmf = gsd_log_pmf_array(psi[:, None], rho[None, :])
    return ParamGrid(psi, rho, np.ascontiguousarray(log_pmf))


def grid_to_bytes(grid: ParamGrid) -> bytes:
    n_psi, n_rho = grid.shape
    header = _HEADER.pack(MAGIC, grid.format_version, n_psi, n_rho, N_CATEGORIES, FLOAT_ENV)
    body = b"".join(
        np.ascontiguousarray(a, dtype="<f8").tobytes()
        for a in (grid.psi_values, grid.rho_values, grid.log_pmf)
    )
    payload = header + body
    return payload + hashlib.sha256(payload).digest()


def grid_from_bytes(data: bytes) -> ParamGrid:
    if len(data) < _HEADER.size + _DIGEST_SIZE:
        raise GridFileError("grid file is truncated")
    magic, version, n_psi, n_rho, n_cat, _env = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise GridFileError("not a GSD grid file (bad magic bytes)")
    if version != FORMAT_VERSION:
        raise GridVersionError(
            f"grid file format version {version} does not match supported version {FORMAT_VERSION}"
        )
    if n_cat != N_CATEGORIES:
        raise GridFileError(f"grid has {n_cat} categories, expected {N_CATEGORIES}")
    n_values = n_psi + n_rho + n_psi * n_rho * n_cat
    expected_len = _HEADER.size + 8 * n_values + _DIGEST_SIZE
    if len(data) != expected_len:
        raise GridFileError(f"grid file has {len(data)} bytes, expected {expected_len}")
    payload, digest = data[:-_DIGEST_SIZE], data[-_DIGEST_SIZE:]
    if hashlib.sha256(payload).digest() != digest:
        raise GridFileError("grid file checksum mismatch")
    values = np.frombuffer(payload, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    psi = values[:n_psi].copy()
    rho = values[n_psi : n_psi + n_rho].copy()
    log_pmf = values[n_psi + n_rho :].reshape(n_psi, n_rho, n_cat).copy()
    return ParamGrid(psi, rho, log_pmf, format_version=version)


def save_grid(grid: ParamGrid, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(grid_to_bytes(grid))
    tmp.replace(path)


def load_grid(path) -> ParamGrid:
    path = Path(path)
    if not path.is_file():
        raise GridFileError(f"grid file not found: {path}")
    return grid_from_bytes(path.read_bytes())


def grid_checksum(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_or_build_grid(path=None) -> ParamGrid:
    """Load the cached grid at ``path``, building and saving it if absent."""
    if path is None:
        return build_grid()
    path = Path(path)
    if path.exists():
        return load_grid(path)
    grid = build_grid()
    save_grid(grid, path)
    return grid


def log_likelihood(counts, cell: int, grid: ParamGrid) -> float:
    """Multinomial log-likelihood (without the coefficient) at one grid cell."""
    k = as_counts(counts)
    row = grid.log_pmf_row(cell)
    total = 0.0
    for kj, lj in zip(k, row):
        if kj > 0:
            total += kj * lj
    return float(total)


def _scan(k: np.ndarray, columns: np.ndarray) -> np.ndarray:
    """Log-likelihood of each row of ``k`` at every column of ``columns``.

    ``columns`` must have ``-inf`` replaced by ``_LOG_ZERO``.  Summation
    order is fixed (category 1 first) and elementwise, so a row's values
    do not depend on how rows are batched.
    """
    k = k.astype(np.float64)
    ll = k[:, 0:1] * columns[0]
    tmp = np.empty_like(ll)
    for j in range(1, N_CATEGORIES):
        np.multiply(k[:, j : j + 1], columns[j], out=tmp)
        ll += tmp
    return ll


@dataclass(frozen=True)
class FitResult:
    params: GsdParams
    cell: int
    log_likelihood: float
    expected_counts: np.ndarray


def _coarse_to_fine(k: np.ndarray, grid: ParamGrid, step: int = 10, radius: int = 10) -> int:
    n_psi, n_rho = grid.shape
    cube = grid._scan_columns.reshape(N_CATEGORIES, n_psi, n_rho)
    coarse = cube[:, step // 2 :: step, step - 1 :: step]
    ll = _scan(k[None, :], coarse.reshape(N_CATEGORIES, -1))[0]
    ci, cj = divmod(int(np.argmax(ll)), coarse.shape[2])
    i0, j0 = step // 2 + ci * step, step - 1 + cj * step
    ilo, ihi = max(0, i0 - radius), min(n_psi, i0 + radius + 1)
    jlo, jhi = max(0, j0 - radius), min(n_rho, j0 + radius + 1)
    window = cube[:, ilo:ihi, jlo:jhi]
    ll = _scan(k[None, :], window.reshape(N_CATEGORIES, -1))[0]
    wi, wj = divmod(int(np.argmax(ll)), jhi - jlo)
    return (ilo + wi) * n_rho + (jlo + wj)


def best_cells(counts: np.ndarray, grid: ParamGrid, chunk: int = 4) -> np.ndarray:
    """Argmax cell for each row of a ``(m, 5)`` count array (full scan).

    Exact ties go to the smallest psi, then the smallest rho: that is the
    first maximum in the row-major cell order.
    """
    counts = np.atleast_2d(np.asarray(counts, dtype=np.int64))
    out = np.empty(len(counts), dtype=np.int64)
    for start in range(0, len(counts), chunk):
        block = counts[start : start + chunk]
        out[start : start + chunk] = np.argmax(_scan(block, grid._scan_columns), axis=1)
    return out


def _result(k: np.ndarray, cell: int, grid: ParamGrid) -> FitResult:
    n = int(k.sum())
    return FitResult(
        params=grid.params(cell),
        cell=int(cell),
        log_likelihood=log_likelihood(k, cell, grid),
        expected_counts=n * grid.pmf(cell),
    )


def fit_mle(counts, grid: ParamGrid, method: str = "full") -> FitResult:
    """Grid MLE of (psi, rho) for one score histogram.

    ``method="full"`` scans all cells.  ``method="coarse"`` scans every
    10th cell along each axis and then the +-10 cell neighbourhood of the
    coarse optimum; it is faster but not guaranteed to find the global
    maximum.
    """
    k = as_counts(counts)
    if k.sum() < 1:
        raise ValueError("cannot fit an empty sample")
    if method == "full":
        cell = int(best_cells(k[None, :], grid)[0])
    elif method == "coarse":
        cell = _coarse_to_fine(k, grid)
    else:
        raise ValueError(f"unknown fit method {method!r}")
    return _result(k, cell, grid)


def g_from_cell(k: np.ndarray, cell: int, grid: ParamGrid) -> float:
    """G statistic of ``k`` against its fitted cell, from grid log-probs."""
    n = k.sum()
    row = grid.log_pmf_row(cell)
    log_n = np.log(n)
    g = 0.0
    for kj, lj in zip(k, row):
        if kj > 0:
            g += kj * (np.log(kj) - log_n - lj)
    return max(0.0, 2.0 * float(g))


class FitCache:
    """Thread-safe memo of grid fits keyed by the exact count vector.

    Each entry stores the argmax cell and the G statistic of the counts
    against their own fitted expected frequencies, which is all a
    bootstrap replicate needs.  The cache is bounded (least recently
    inserted entries are dropped first) and never changes results.
    """

    def __init__(self, grid: ParamGrid, maxsize: int = 1_000_000):
        self.grid = grid
        self.maxsize = maxsize
        self._data: OrderedDict[tuple, tuple[int, float]] = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._data)

    def lookup(self, counts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Cells and G statistics for each row of a ``(m, 5)`` count array."""
        counts = np.atleast_2d(np.asarray(counts, dtype=np.int64))
        keys = [tuple(int(v) for v in row) for row in counts]
        cells = np.empty(len(keys), dtype=np.int64)
        gs = np.empty(len(keys))
        missing = []
        with self._lock:
            for i, key in enumerate(keys):
                hit = self._data.get(key)
                if hit is None:
                    missing.append(i)
                else:
                    cells[i], gs[i] = hit
            self.hits += len(keys) - len(missing)
            self.misses += len(missing)
        if missing:
            found = best_cells(counts[missing], self.grid)
            new = {}
            for i, cell in zip(missing, found):
                cells[i] = cell
                gs[i] = g_from_cell(counts[i], int(cell), self.grid)
                new[keys[i]] = (int(cell), float(gs[i]))
            with self._lock:
                self._data.update(new)
                while len(self._data) > self.maxsize:
                    self._data.popitem(last=False)
        return cells, gs

    def fit(self, counts) -> FitResult:
        k = as_counts(counts)
        if k.sum() < 1:
            raise ValueError("cannot fit an empty sample")
        cells, _ = self.lookup(k[None, :])
        return _result(k, int(cells[0]), self.grid)
