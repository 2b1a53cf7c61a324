"""Tensor-train compression of basis vectors and the bond-dimension search.

A length-2^n vector is factored into n cores of shape (left, 2, right) by a
left-to-right sweep of truncated SVDs.  Core k carries bit k of the flat
index with bit 1 least significant, which matches the row-major x-fastest
grid flattening: the x bits occupy the first cores, the y bits the last.

The encoding-error estimator weighs per-basis overlap defects by the mean
squared snapshot amplitudes sigma_i^2 / m; the search doubles one bond at a
time (powers of two only, as the qubit register forces) until the estimate
clears the requested threshold.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BondSearchError, FieldError, SnapshotFormatError
from .io_util import atomic_write_bytes
from .pod import PodBasisSet

MPS_MAGIC = b"PODM"
MPS_VERSION = 1

_RANK_CUTOFF = 1e-14  # relative threshold below which singular values count as zero


def _n_qubits(length: int) -> int:
    n = length.bit_length() - 1
    if length < 2 or (1 << n) != length:
        raise FieldError(f"length {length} is not a power of two >= 2")
    return n


def to_lsb_flat(x: np.ndarray, n: int) -> np.ndarray:
    """Reorder so that a C-order (2,)*n reshape has bit 1 on the first axis."""
    return np.ascontiguousarray(x.reshape((2,) * n, order="F")).reshape(-1)


def from_lsb_flat(y: np.ndarray, n: int) -> np.ndarray:
    return y.reshape((2,) * n).reshape(-1, order="F")


@dataclass
class MpsVector:
    """Tensor-train form of a unit vector plus its dense contraction.

    cores[k] has shape (left_k, 2, right_k) with left_0 = right_{n-1} = 1.
    chi_max is the declared cap the cores were truncated under; actual
    bonds may be smaller.  dense caches the unit-norm contraction, which
    every estimator and the readout simulator share at desk scale.
    """

    n_qubits: int
    cores: list
    chi_max: int
    dense: np.ndarray | None = None

    @property
    def bond_dims(self) -> tuple:
        return tuple(core.shape[2] for core in self.cores[:-1])


def tt_svd(x, chi_max: int) -> MpsVector:
    """Left-to-right truncated-SVD sweep; contraction is renormalized.

    Sign-canonical: each core column keeps its largest-magnitude entry
    positive, with the compensating flip pushed into the carry matrix, so
    the contraction always reproduces x/||x|| (up to truncation loss) with
    no global sign flip.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise FieldError(f"expected a vector, got shape {x.shape}")
    n = _n_qubits(x.size)
    if chi_max < 1:
        raise FieldError("chi_max must be at least 1")
    norm_x = np.linalg.norm(x)
    if norm_x == 0.0:
        raise FieldError("cannot compress the zero vector")

    carry = to_lsb_flat(x / norm_x, n)
    left = 1
    cores = []
    for _ in range(n - 1):
        mat = carry.reshape(left * 2, -1)
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        keep = max(1, int(np.sum(s > s[0] * _RANK_CUTOFF)))
        keep = min(keep, chi_max)
        u = u[:, :keep]
        s = s[:keep]
        vt = vt[:keep]
        flips = np.sign(u[np.argmax(np.abs(u), axis=0), np.arange(keep)])
        flips[flips == 0.0] = 1.0
        u = u * flips
        vt = vt * flips[:, None]
        cores.append(u.reshape(left, 2, keep))
        carry = s[:, None] * vt
        left = keep
    last = carry.reshape(left, 2, 1)
    last = last / np.linalg.norm(last)  # earlier cores are left-orthogonal
    cores.append(last)

    m = MpsVector(n_qubits=n, cores=cores, chi_max=chi_max)
    m.dense = _contract_cores(cores, n)
    return m


def _contract_cores(cores, n: int) -> np.ndarray:
    t = cores[0].reshape(2, -1)
    for core in cores[1:]:
        t = np.tensordot(t, core, axes=([t.ndim - 1], [0]))
    flat = t.reshape(-1)
    flat = flat / np.linalg.norm(flat)
    return from_lsb_flat(flat, n)


def contract(m: MpsVector) -> np.ndarray:
    """Dense unit-norm contraction (cached on the MpsVector)."""
    if m.dense is None:
        m.dense = _contract_cores(m.cores, m.n_qubits)
    return m.dense


def validate_mps(m: MpsVector) -> None:
    """Check bond wiring, the chi cap, and the per-cut dimension bound."""
    n = m.n_qubits
    if len(m.cores) != n:
        raise FieldError(f"{len(m.cores)} cores for {n} qubits")
    if m.cores[0].shape[0] != 1 or m.cores[-1].shape[2] != 1:
        raise FieldError("chain must start and end with bond dimension 1")
    for k in range(n - 1):
        r = m.cores[k].shape[2]
        if r != m.cores[k + 1].shape[0]:
            raise FieldError(f"bond mismatch between cores {k} and {k + 1}")
        if r > m.chi_max:
            raise FieldError(f"bond {k} exceeds declared chi_max {m.chi_max}")
        if r > min(2 ** (k + 1), 2 ** (n - k - 1)):
            raise FieldError(f"bond {k} exceeds the cut dimension bound")
    if abs(np.linalg.norm(contract(m)) - 1.0) > 1e-10:
        raise FieldError("contraction is not unit norm")


@dataclass(frozen=True)
class BondPlan:
    """Chosen per-basis bond caps (powers of two) and the final estimate."""

    chis: tuple
    estimated_error: float

    def __post_init__(self):
        for chi in self.chis:
            if chi < 1 or (chi & (chi - 1)) != 0:
                raise FieldError(f"bond dimension {chi} is not a power of two")


def enc_error_estimator(basis: PodBasisSet, approximants) -> float:
    """Weighted overlap-defect norm over the selected bases.

    sqrt( sum_i | s_i - sum_j s_j <approx_i, u_j> |^2 ) with
    s_i = sigma_i^2 / m, i and j running over the first n_b bases.
    """
    n_b = len(approximants)
    if n_b == 0 or n_b > basis.m:
        raise FieldError(f"{n_b} approximants for a basis set of size {basis.m}")
    dense = np.stack([contract(a) for a in approximants])
    if dense.shape[1] != basis.n:
        raise FieldError(
            f"approximant length {dense.shape[1]} does not match basis length {basis.n}"
        )
    s = basis.sigma[:n_b] ** 2 / basis.m
    overlaps = dense @ basis.u[:, :n_b]  # overlaps[i, j] = <approx_i, u_j>
    defect = s - overlaps @ s
    return float(np.sqrt(np.sum(defect**2)))


def search_bond_plan(basis: PodBasisSet, threshold: float, chi_cap: int):
    """Greedy power-of-two ascent of the per-basis bond caps.

    All bonds start at 1.  Each round recompresses one candidate basis at a
    doubled cap and keeps the doubling that lowers the estimator the most
    (ties go to the lowest basis index), stopping when the estimate clears
    the threshold.  Raises BondSearchError with the best estimate reached
    if every basis is already at chi_cap.
    """
    if threshold <= 0:
        raise FieldError("threshold must be positive")
    n = _n_qubits(basis.n)
    if chi_cap < 1 or (chi_cap & (chi_cap - 1)) != 0:
        raise FieldError(f"chi_cap {chi_cap} is not a power of two")
    if chi_cap > 2 ** (n // 2):
        raise FieldError(f"chi_cap {chi_cap} exceeds the maximal cut bond 2^{n // 2}")

    n_b = basis.n_b
    cache = {}

    def compress(i, chi):
        key = (i, chi)
        if key not in cache:
            cache[key] = tt_svd(basis.u[:, i], chi)
        return cache[key]

    chis = [1] * n_b
    approx = [compress(i, 1) for i in range(n_b)]
    est = enc_error_estimator(basis, approx)
    while est > threshold:
        best = None
        for i in range(n_b):
            if chis[i] >= chi_cap:
                continue
            trial = compress(i, chis[i] * 2)
            candidate = list(approx)
            candidate[i] = trial
            e = enc_error_estimator(basis, candidate)
            if best is None or e < best[0]:
                best = (e, i, trial)
        if best is None:
            raise BondSearchError(
                f"encoding threshold {threshold:g} unreachable at chi_cap {chi_cap} "
                f"(best estimator {est:.3e})",
                best_estimator=est,
                plan=tuple(chis),
            )
        est, i, trial = best
        chis[i] *= 2
        approx[i] = trial
    return BondPlan(chis=tuple(chis), estimated_error=est), approx


def save_mps(m: MpsVector, path) -> None:
    """Persist: magic, version, n_qubits, core count, then per-core payloads."""
    parts = [MPS_MAGIC, struct.pack("<III", MPS_VERSION, m.n_qubits, len(m.cores))]
    for core in m.cores:
        left, _, right = core.shape
        parts.append(struct.pack("<II", left, right))
        parts.append(core.astype("<f8").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def load_mps(path) -> MpsVector:
    data = Path(path).read_bytes()
    if len(data) < 16:
        raise SnapshotFormatError(f"truncated MPS header: {len(data)} bytes")
    if data[:4] != MPS_MAGIC:
        raise SnapshotFormatError(f"bad magic {data[:4]!r}, expected {MPS_MAGIC!r}")
    version, n_qubits, n_cores = struct.unpack("<III", data[4:16])
    if version != MPS_VERSION:
        raise SnapshotFormatError(f"unsupported MPS version {version}")
    pos = 16
    cores = []
    for k in range(n_cores):
        if pos + 8 > len(data):
            raise SnapshotFormatError(f"truncated MPS at core {k} header")
        left, right = struct.unpack("<II", data[pos:pos + 8])
        pos += 8
        nbytes = left * 2 * right * 8
        if pos + nbytes > len(data):
            raise SnapshotFormatError(f"truncated MPS at core {k} payload")
        core = np.frombuffer(data[pos:pos + nbytes], dtype="<f8").reshape(left, 2, right)
        cores.append(core.copy())
        pos += nbytes
    if pos != len(data):
        raise SnapshotFormatError(f"{len(data) - pos} trailing bytes in MPS file")
    chi_max = max((c.shape[2] for c in cores[:-1]), default=1)
    return MpsVector(n_qubits=n_qubits, cores=cores, chi_max=max(chi_max, 1))
