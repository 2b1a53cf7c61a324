"""Staircase layout of MPS cores and a closed-form elementary-gate cost model.

Each core becomes one unitary block on ceil(log2(chi_core)) + 1 contiguous
qubits, chi_core being the larger of its two bonds.  Costs count CNOTs per
block from a quantum-Shannon-style bound, with the known tight value for
two-qubit blocks, and fold single-qubit layers at three per CNOT.  Absolute
depths are model-defined; only the scaling in the register size is meant to
be compared against anything external.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FieldError, NumericalError
from .mps import MpsVector
from .pod import build_snapshot_matrix, pod_decompose, select_nb


@dataclass(frozen=True)
class CircuitCost:
    n_qubits: int
    per_core_qubit_counts: tuple
    two_qubit_gate_count: int
    depth: int


def staircase_layout(m: MpsVector):
    """One (core_index, qubit_tuple) block per core, staircase-ordered.

    Qubit k carries bit k of the flat grid index (x bits low, then y bits).
    Block k is anchored at qubit k and shifted left at the register end so
    it stays inside the chain; consecutive blocks overlap on the qubits
    that carry the shared bond.
    """
    n = m.n_qubits
    layout = []
    for k, core in enumerate(m.cores):
        chi_core = max(core.shape[0], core.shape[2])
        width = _block_width(chi_core)
        start = min(k, n - width)
        layout.append((k, tuple(range(start, start + width))))
    return layout


def _block_width(chi_core: int) -> int:
    return int(math.ceil(math.log2(chi_core))) + 1 if chi_core > 1 else 1


def block_two_qubit_count(width: int) -> int:
    """CNOTs to synthesize one width-qubit unitary under the model."""
    if width < 1:
        raise FieldError(f"block width {width} invalid")
    if width == 1:
        return 0
    if width == 2:
        return 3  # tight two-qubit bound; the generic formula would give 9
    return math.ceil(0.75 * (4**width - 2**width))


def block_depth(width: int) -> int:
    # 3 single-qubit layers fold around every CNOT; a lone qubit still
    # needs its 3 Euler layers
    g = block_two_qubit_count(width)
    return 4 * g if width >= 2 else 3


def cost_model(layout, core_chis=None) -> CircuitCost:
    """Deterministic cost of a staircase layout; blocks run serially."""
    if not layout:
        raise FieldError("empty layout")
    widths = [len(qubits) for _, qubits in layout]
    if core_chis is not None:
        if len(core_chis) != len(layout):
            raise FieldError(f"{len(core_chis)} chi values for {len(layout)} blocks")
        for w, chi in zip(widths, core_chis):
            if w != _block_width(chi):
                raise FieldError(f"block width {w} inconsistent with chi {chi}")
    n_qubits = 1 + max(q for _, qubits in layout for q in qubits)
    two = sum(block_two_qubit_count(w) for w in widths)
    depth = sum(block_depth(w) for w in widths)
    return CircuitCost(
        n_qubits=n_qubits,
        per_core_qubit_counts=tuple(widths),
        two_qubit_gate_count=two,
        depth=depth,
    )


def circuit_cost(m: MpsVector) -> CircuitCost:
    return cost_model(staircase_layout(m))


def depth_vs_gridsize_study(
    make_ensemble,
    thresholds,
    grid_sizes,
    chi_cap=None,
    csv_path=None,
):
    """Depth of the costliest selected basis across grid sizes.

    make_ensemble(nx, ny) must return (ux_fields, uy_fields, labels).  For
    each total size N in grid_sizes (a square of a power of two), the full
    offline pipeline runs at the given (projection, encoding) thresholds.
    The reported depth is the per-shot preparation cost upper bound, i.e.
    the largest block-model depth over the n_b selected bases; that basis
    is the one carrying the largest bond dimension and is normally the
    n_b-th, though on coarse grids the greedy plan can leave the last basis
    cheaper than an earlier one.  Returns a list of row dicts; optionally
    writes them as CSV.
    """
    from .mps import search_bond_plan  # local import keeps module load light

    proj_thr, enc_thr = thresholds
    rows = []
    for size in grid_sizes:
        side = math.isqrt(size)
        if side * side != size or side & (side - 1):
            raise FieldError(f"grid size {size} is not the square of a power of two")
        try:
            ux_fields, uy_fields, labels = make_ensemble(side, side)
            for component, fields in (("ux", ux_fields), ("uy", uy_fields)):
                s = build_snapshot_matrix(fields, labels)
                basis = pod_decompose(s)
                n_b = select_nb(basis.sigma, s.m, proj_thr)
                basis = basis.with_nb(n_b)
                n = size.bit_length() - 1
                cap = chi_cap if chi_cap is not None else 2 ** (n // 2)
                plan, approx = search_bond_plan(basis, enc_thr, cap)
                cost = max(
                    (circuit_cost(m) for m in approx), key=lambda c: c.depth
                )
                rows.append(
                    {
                        "N": size,
                        "component": component,
                        "n_b": n_b,
                        "chi_list": ";".join(str(c) for c in plan.chis),
                        "two_qubit_gates": cost.two_qubit_gate_count,
                        "depth": cost.depth,
                    }
                )
        except NumericalError as exc:
            raise NumericalError(f"grid size {size}: {exc}") from exc
    if csv_path is not None:
        header = "N,component,n_b,chi_list,two_qubit_gates,depth"
        lines = [header] + [
            f"{r['N']},{r['component']},{r['n_b']},{r['chi_list']},"
            f"{r['two_qubit_gates']},{r['depth']}"
            for r in rows
        ]
        with open(csv_path, "w", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
    return rows


def affine_fit_r2(xs, ys) -> float:
    """R^2 of the least-squares line through (xs, ys)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    coef = np.polyfit(xs, ys, 1)
    pred = np.polyval(coef, xs)
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0
    return 1.0 - ss_res / ss_tot
