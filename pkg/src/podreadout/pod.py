"""Snapshot matrix assembly, SVD-based basis extraction, and error estimators.

The snapshot matrix stacks unit-normalized flattened fields as columns.
Its left singular vectors are the spatial bases; the tail of the singular
spectrum drives both the truncation estimator and the basis count choice.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import FieldError, SnapshotFormatError
from .io_util import atomic_write_bytes

BASIS_MAGIC = b"PODB"
BASIS_VERSION = 1


@dataclass(frozen=True)
class SnapshotMatrix:
    """Column stack of m unit-norm snapshots of length n (m < n)."""

    data: np.ndarray
    labels: tuple

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2:
            raise FieldError(f"snapshot matrix must be 2D, got shape {d.shape}")
        n, m = d.shape
        if m >= n:
            raise FieldError(f"need more grid points than snapshots, got n={n}, m={m}")
        if len(self.labels) != m:
            raise FieldError(f"{len(self.labels)} labels for {m} snapshots")
        norms = np.linalg.norm(d, axis=0)
        if np.abs(norms - 1.0).max() > 1e-12:
            bad = int(np.argmax(np.abs(norms - 1.0)))
            raise FieldError(f"column {bad} has norm {norms[bad]!r}, expected 1")
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class PodBasisSet:
    """Thin SVD of a snapshot matrix plus the selected basis count n_b.

    u has orthonormal columns (the spatial bases), sigma is non-increasing,
    v holds the right singular vectors as columns.  n_b defaults to m and
    is narrowed by select_nb.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    n_b: int

    @property
    def n(self) -> int:
        return self.u.shape[0]

    @property
    def m(self) -> int:
        return self.u.shape[1]

    def with_nb(self, n_b: int) -> "PodBasisSet":
        if not (1 <= n_b <= self.m):
            raise FieldError(f"n_b={n_b} outside [1, {self.m}]")
        return replace(self, n_b=n_b)


def build_snapshot_matrix(fields, labels) -> SnapshotMatrix:
    """Flatten fields row-major, normalize each to unit L2, keep order."""
    fields = list(fields)
    labels = list(labels)
    if not fields:
        raise FieldError("no snapshots given")
    if len(labels) != len(fields):
        raise FieldError(f"{len(labels)} labels for {len(fields)} snapshots")
    shape = (fields[0].nx, fields[0].ny)
    cols = []
    for k, f in enumerate(fields):
        if (f.nx, f.ny) != shape:
            raise FieldError(
                f"snapshot {k} is {f.nx}x{f.ny}, expected {shape[0]}x{shape[1]}"
            )
        if not np.all(np.isfinite(f.values)):
            raise FieldError(f"snapshot {k}: non-finite value")
        nrm = np.linalg.norm(f.values)
        if nrm == 0.0:
            raise FieldError(f"snapshot {k}: zero norm, cannot normalize")
        cols.append(f.values / nrm)
    if len(set(labels)) != len(labels):
        warnings.warn("duplicate snapshot labels", stacklevel=2)
    return SnapshotMatrix(data=np.column_stack(cols), labels=tuple(labels))


def pod_decompose(s: SnapshotMatrix) -> PodBasisSet:
    """Thin SVD with a fixed sign convention.

    Each left singular vector is flipped so its largest-magnitude entry is
    positive (ties broken by lowest index); the matching right vector flips
    with it, so u @ diag(sigma) @ v.T still reproduces the snapshots.
    """
    try:
        u, sigma, vt = np.linalg.svd(s.data, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise FieldError(f"SVD failed on {s.n}x{s.m} snapshot matrix: {exc}") from exc
    v = vt.T
    for i in range(u.shape[1]):
        lead = u[np.argmax(np.abs(u[:, i])), i]
        if lead < 0.0:
            u[:, i] = -u[:, i]
            v[:, i] = -v[:, i]
    return PodBasisSet(u=u, sigma=sigma, v=v, n_b=s.m)


def proj_error_estimator(sigma, m: int, n_b: int) -> float:
    """sqrt of the mean discarded energy: sqrt(sum_{i>n_b} sigma_i^2 / m)."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (m,):
        raise FieldError(f"expected {m} singular values, got {sigma.shape}")
    if not (1 <= n_b <= m):
        raise FieldError(f"n_b={n_b} outside [1, {m}]")
    return float(np.sqrt(np.sum(sigma[n_b:] ** 2) / m))


def select_nb(sigma, m: int, threshold: float) -> int:
    """Smallest n_b whose estimator falls to the threshold (m if none)."""
    if threshold <= 0:
        raise FieldError("threshold must be positive")
    for n_b in range(1, m + 1):
        if proj_error_estimator(sigma, m, n_b) <= threshold:
            return n_b
    return m


def exact_projection_error(x, basis: PodBasisSet, n_b: int | None = None) -> float:
    """L2 residual of x after orthogonal projection onto the first n_b bases."""
    x = np.asarray(x, dtype=np.float64)
    if n_b is None:
        n_b = basis.n_b
    if x.shape != (basis.n,):
        raise FieldError(f"vector length {x.shape} does not match basis length {basis.n}")
    if not (1 <= n_b <= basis.m):
        raise FieldError(f"n_b={n_b} outside [1, {basis.m}]")
    un = basis.u[:, :n_b]
    return float(np.linalg.norm(x - un @ (un.T @ x)))


def save_basis(basis: PodBasisSet, path) -> None:
    """Persist: magic, version, n, m, n_b, sigma, u column-major, v column-major."""
    header = BASIS_MAGIC + struct.pack(
        "<IIII", BASIS_VERSION, basis.n, basis.m, basis.n_b
    )
    body = (
        basis.sigma.astype("<f8").tobytes()
        + np.asfortranarray(basis.u).astype("<f8").tobytes(order="F")
        + np.asfortranarray(basis.v).astype("<f8").tobytes(order="F")
    )
    atomic_write_bytes(path, header + body)


def load_basis(path) -> PodBasisSet:
    data = Path(path).read_bytes()
    if len(data) < 20:
        raise SnapshotFormatError(f"truncated basis header: {len(data)} bytes")
    if data[:4] != BASIS_MAGIC:
        raise SnapshotFormatError(f"bad magic {data[:4]!r}, expected {BASIS_MAGIC!r}")
    version, n, m, n_b = struct.unpack("<IIII", data[4:20])
    if version != BASIS_VERSION:
        raise SnapshotFormatError(f"unsupported basis version {version}")
    expected = 20 + 8 * (m + n * m + m * m)
    if len(data) != expected:
        raise SnapshotFormatError(f"truncated basis payload: {len(data)} != {expected}")
    raw = np.frombuffer(data, dtype="<f8", offset=20)
    sigma = raw[:m].copy()
    u = raw[m:m + n * m].reshape((n, m), order="F").copy()
    v = raw[m + n * m:].reshape((m, m), order="F").copy()
    return PodBasisSet(u=u, sigma=sigma, v=v, n_b=int(n_b))
