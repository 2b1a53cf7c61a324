"""End-to-end orchestration: offline artifacts, shot sweeps, parameter studies.

All CSV output is deterministic for a given config: fixed row order, fixed
17-significant-digit float formatting, randomness derived only from the
config's seeds and the cell coordinates.  Wall-clock timing goes to the log,
never into the CSVs; the wall_ms column exists for schema compatibility and
is always 0.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import circuit, flow, mps, pod, readout
from .config import CASE_THRESHOLDS, ExperimentConfig, config_hash
from .errors import ConfigError, FieldError, NumericalError
from .io_util import atomic_write_text, sha256_file

log = logging.getLogger("podreadout")

COMPONENTS = ("ux", "uy")

SWEEP_HEADER = (
    "config_hash,method,component,N,n_shot_total,n_b,seed,epsilon,"
    "e_proj,e_enc,e_sam_bound,kept_modes,wall_ms"
)
MEDIAN_HEADER = "config_hash,method,component,n_shot_total,median_epsilon"
PARAM_HEADER = (
    "config_hash,component,parameter,in_ensemble,n_b_case1,e_proj_case1,"
    "n_b_case2,e_proj_case2"
)


def fmt(x: float) -> str:
    return f"{x:.17g}"


def write_csv(path, header: str, rows) -> None:
    atomic_write_text(path, "\n".join([header, *rows]) + "\n")


class FieldCache:
    """Memoizes cavity solves and transient snapshots across pipeline stages."""

    def __init__(self):
        self._cavity = {}
        self._transient = {}

    def cavity(self, re, nx, ny, tol, max_iters, lid_speed):
        key = (float(re), nx, ny, float(tol), max_iters, float(lid_speed))
        if key not in self._cavity:
            log.info("cavity solve Re=%g on %dx%d", re, nx, ny)
            self._cavity[key] = flow.solve_cavity(
                re, nx, ny, tol=tol, max_iters=max_iters, lid_speed=lid_speed
            )
        return self._cavity[key]

    def transient(self, step, period, nx, ny, seed):
        key = (int(step), int(period), nx, ny, int(seed))
        if key not in self._transient:
            self._transient[key] = flow.transient_pair(step, period, nx, ny, seed)
        return self._transient[key]


def ensemble_fields(cfg: ExperimentConfig, cache: FieldCache):
    """Training snapshots for both components, with their parameter labels."""
    if cfg.problem == "cavity":
        pairs = [
            cache.cavity(re, cfg.nx, cfg.ny, cfg.solver_tol, cfg.max_iters, cfg.lid_speed)
            for re in cfg.reynolds
        ]
        labels = tuple(cfg.reynolds)
    elif cfg.problem == "transient":
        steps = range(cfg.window[0], cfg.window[1] + 1)
        pairs = [
            cache.transient(t, cfg.period, cfg.nx, cfg.ny, cfg.transient_seed)
            for t in steps
        ]
        labels = tuple(steps)
    else:
        ux_all = flow.read_snapshot_file(cfg.snapshot_ux)
        uy_all = flow.read_snapshot_file(cfg.snapshot_uy)
        if len(ux_all) != len(uy_all):
            raise ConfigError(
                f"ingested components disagree: {len(ux_all)} vs {len(uy_all)} snapshots"
            )
        if cfg.target_index >= len(ux_all):
            raise ConfigError(
                f"target_index {cfg.target_index} outside the {len(ux_all)} snapshots"
            )
        pairs = [
            (ux_all[k], uy_all[k])
            for k in range(len(ux_all))
            if k != cfg.target_index
        ]
        labels = tuple(k for k in range(len(ux_all)) if k != cfg.target_index)
    return [p[0] for p in pairs], [p[1] for p in pairs], labels


def target_fields(cfg: ExperimentConfig, cache: FieldCache):
    if cfg.problem == "cavity":
        return cache.cavity(
            cfg.target_reynolds, cfg.nx, cfg.ny, cfg.solver_tol, cfg.max_iters,
            cfg.lid_speed,
        )
    if cfg.problem == "transient":
        return cache.transient(
            cfg.target_step, cfg.period, cfg.nx, cfg.ny, cfg.transient_seed
        )
    ux_all = flow.read_snapshot_file(cfg.snapshot_ux)
    uy_all = flow.read_snapshot_file(cfg.snapshot_uy)
    return ux_all[cfg.target_index], uy_all[cfg.target_index]


def unit_vector(field: flow.Field2D) -> np.ndarray:
    nrm = np.linalg.norm(field.values)
    if nrm == 0.0:
        raise FieldError("zero-norm field cannot be normalized")
    return field.values / nrm


@dataclass
class OfflineComponent:
    basis: pod.PodBasisSet
    plan: mps.BondPlan
    approximants: list
    e_proj_est: float
    e_enc_est: float


@dataclass
class OfflineResult:
    components: dict
    manifest: dict
    reused: bool


def _component_files(comp: str, n_b: int):
    yield f"{comp}_basis.podb"
    for i in range(n_b):
        yield f"{comp}_mps_{i:02d}.podm"


def _try_reuse(cfg, out_dir, manifest_path):
    if not os.path.exists(manifest_path):
        return None
    try:
        manifest = json.loads(open(manifest_path).read())
    except (OSError, json.JSONDecodeError):
        return None
    if manifest.get("config_hash") != config_hash(cfg):
        return None
    components = {}
    for comp in COMPONENTS:
        entry = manifest.get("components", {}).get(comp)
        if entry is None:
            return None
        for name, digest in entry["files"].items():
            path = os.path.join(out_dir, name)
            if not os.path.exists(path) or sha256_file(path) != digest:
                return None
        basis = pod.load_basis(os.path.join(out_dir, f"{comp}_basis.podb"))
        approximants = [
            mps.load_mps(os.path.join(out_dir, f"{comp}_mps_{i:02d}.podm"))
            for i in range(entry["n_b"])
        ]
        components[comp] = OfflineComponent(
            basis=basis,
            plan=mps.BondPlan(tuple(entry["chis"]), entry["e_enc_est"]),
            approximants=approximants,
            e_proj_est=entry["e_proj_est"],
            e_enc_est=entry["e_enc_est"],
        )
    return OfflineResult(components=components, manifest=manifest, reused=True)


def run_offline(cfg: ExperimentConfig, cache: FieldCache | None = None) -> OfflineResult:
    """Build (or reload) bases and compressed approximants for both components.

    Artifacts land in cfg.out_dir together with manifest.json recording the
    selected basis counts, bond plans, estimator values and content hashes.
    A rerun whose config hash and file hashes match loads everything back
    instead of recomputing.
    """
    cache = cache or FieldCache()
    out_dir = cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    manifest_path = os.path.join(out_dir, "manifest.json")
    reused = _try_reuse(cfg, out_dir, manifest_path)
    if reused is not None:
        log.info("offline artifacts reused from %s", out_dir)
        return reused

    proj_thr, enc_thr = cfg.thresholds
    ux_fields, uy_fields, labels = ensemble_fields(cfg, cache)
    flow.check_ensemble_finite(ux_fields)
    flow.check_ensemble_finite(uy_fields)

    components = {}
    manifest = {
        "config_hash": config_hash(cfg),
        "case": cfg.case,
        "thresholds": [proj_thr, enc_thr],
        "components": {},
    }
    for comp, fields in (("ux", ux_fields), ("uy", uy_fields)):
        try:
            s = pod.build_snapshot_matrix(fields, labels)
            basis = pod.pod_decompose(s)
            n_b = pod.select_nb(basis.sigma, s.m, proj_thr)
            basis = basis.with_nb(n_b)
            e_proj_est = pod.proj_error_estimator(basis.sigma, s.m, n_b)
            plan, approximants = mps.search_bond_plan(basis, enc_thr, cfg.chi_cap)
        except NumericalError as exc:
            raise NumericalError(f"offline stage, component {comp}: {exc}") from exc
        components[comp] = OfflineComponent(
            basis=basis,
            plan=plan,
            approximants=approximants,
            e_proj_est=e_proj_est,
            e_enc_est=plan.estimated_error,
        )
        pod.save_basis(basis, os.path.join(out_dir, f"{comp}_basis.podb"))
        for i, m in enumerate(approximants):
            mps.save_mps(m, os.path.join(out_dir, f"{comp}_mps_{i:02d}.podm"))
        files = {
            name: sha256_file(os.path.join(out_dir, name))
            for name in _component_files(comp, n_b)
        }
        manifest["components"][comp] = {
            "n_b": n_b,
            "chis": list(plan.chis),
            "e_proj_est": e_proj_est,
            "e_enc_est": plan.estimated_error,
            "files": files,
        }
    atomic_write_text(
        manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    return OfflineResult(components=components, manifest=manifest, reused=False)


def _cell_seed(seed: int, comp_idx: int, method_idx: int, n_shot: int) -> int:
    ss = np.random.SeedSequence([int(seed), comp_idx, method_idx, int(n_shot)])
    return int(ss.generate_state(1)[0])


def podr_shots(n_shot: int, n_b: int) -> int:
    """Round a budget down to the nearest positive multiple of n_b."""
    down = (n_shot // n_b) * n_b
    return down if down >= n_b else n_b


def harmonized_shots(requested: int, n_bs) -> int:
    """Largest shared budget <= requested divisible by every basis count."""
    l = 1
    for nb in n_bs:
        l = math.lcm(l, int(nb))
    return max((requested // l) * l, l)


def run_cell(cfg, offline, targets, comp, method, n_shot, seed):
    comp_idx = COMPONENTS.index(comp)
    method_idx = ("PODR", "RSR", "FSR").index(method)
    cell = _cell_seed(seed, comp_idx, method_idx, n_shot)
    x = targets[comp]
    art = offline.components[comp]
    if method == "PODR":
        shots = podr_shots(n_shot, art.basis.n_b)
        if shots != n_shot:
            log.info(
                "PODR budget %d rounded down to %d (n_b=%d, %s)",
                n_shot, shots, art.basis.n_b, comp,
            )
        return readout.podr_readout(
            x, art.basis, art.approximants, shots, cell, beta=cfg.beta
        )
    if method == "RSR":
        return readout.rsr_readout(x, n_shot, cell, sign_oracle=cfg.sign_oracle)
    return readout.fsr_readout(x, n_shot, cfg.fsr_cutoff, cell)


def run_shot_sweep(cfg: ExperimentConfig, offline: OfflineResult,
                   cache: FieldCache | None = None):
    """Full factorial (method x shot budget x seed x component) readout sweep.

    Writes sweep.csv (one row per cell) and sweep_medians.csv (per-method
    median curves) into cfg.out_dir; returns the raw rows as dicts.
    """
    cache = cache or FieldCache()
    tx, ty = target_fields(cfg, cache)
    targets = {"ux": unit_vector(tx), "uy": unit_vector(ty)}
    h = config_hash(cfg)

    cells = [
        (comp, method, int(n_shot), int(seed))
        for comp in COMPONENTS
        for method in cfg.methods
        for n_shot in cfg.shot_grid
        for seed in cfg.seeds
    ]

    def work(cell):
        comp, method, n_shot, seed = cell
        return cell, run_cell(cfg, offline, targets, comp, method, n_shot, seed)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = dict(pool.map(work, cells))
    else:
        results = dict(map(work, cells))

    rows = []
    lines = []
    for cell in cells:  # fixed order regardless of scheduling
        comp, method, n_shot, seed = cell
        rep = results[cell]
        if rep.budget is not None:
            e_proj, e_enc, e_sam = (
                fmt(rep.budget.e_proj), fmt(rep.budget.e_enc), fmt(rep.budget.e_sam_bound),
            )
        else:
            e_proj = e_enc = e_sam = ""
        kept = str(rep.kept_modes) if rep.kept_modes is not None else ""
        n_b = str(rep.n_b) if rep.n_b is not None else "0"
        lines.append(
            f"{h},{method},{comp},{cfg.grid_points},{rep.n_shot_total},{n_b},"
            f"{seed},{fmt(rep.epsilon)},{e_proj},{e_enc},{e_sam},{kept},0"
        )
        rows.append(
            {
                "method": method,
                "component": comp,
                "n_shot_requested": n_shot,
                "n_shot_total": rep.n_shot_total,
                "seed": seed,
                "epsilon": rep.epsilon,
                "report": rep,
            }
        )
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_csv(os.path.join(cfg.out_dir, "sweep.csv"), SWEEP_HEADER, lines)

    median_lines = []
    for comp in COMPONENTS:
        for method in cfg.methods:
            for n_shot in cfg.shot_grid:
                eps = [
                    r["epsilon"]
                    for r in rows
                    if r["component"] == comp and r["method"] == method
                    and r["n_shot_requested"] == n_shot
                ]
                median_lines.append(
                    f"{h},{method},{comp},{n_shot},{fmt(float(np.median(eps)))}"
                )
    write_csv(
        os.path.join(cfg.out_dir, "sweep_medians.csv"), MEDIAN_HEADER, median_lines
    )
    return rows


def default_param_sweep(cfg: ExperimentConfig):
    if cfg.param_sweep is not None:
        return cfg.param_sweep
    if cfg.problem == "cavity":
        lo = min(cfg.reynolds)
        step = min(
            (b - a for a, b in zip(sorted(cfg.reynolds), sorted(cfg.reynolds)[1:])),
            default=lo,
        )
        half = step / 2.0
        vals = []
        for re in sorted(cfg.reynolds):
            vals.extend([re - half, re, re + half])
        # keep values in the solver's range, dedupe, preserve order
        seen = []
        for v in vals:
            if 1.0 <= v <= 5000.0 and v not in seen:
                seen.append(v)
        return tuple(seen)
    if cfg.problem == "transient":
        return tuple(range(cfg.window[0], cfg.window[1] + cfg.period + 1))
    raise ConfigError("param studies need an explicit param_sweep for ingested data")


def run_param_study(cfg: ExperimentConfig, cache: FieldCache | None = None):
    """Exact projection error across a parameter sweep at both case settings."""
    cache = cache or FieldCache()
    ux_fields, uy_fields, labels = ensemble_fields(cfg, cache)
    sweep = default_param_sweep(cfg)
    h = config_hash(cfg)

    rows = []
    lines = []
    bases = {}
    nbs = {}
    for comp, fields in (("ux", ux_fields), ("uy", uy_fields)):
        s = pod.build_snapshot_matrix(fields, labels)
        basis = pod.pod_decompose(s)
        bases[comp] = basis
        nbs[comp] = {
            case: pod.select_nb(basis.sigma, s.m, thr[0])
            for case, thr in CASE_THRESHOLDS.items()
        }
    for param in sweep:
        if cfg.problem == "cavity":
            fx, fy = cache.cavity(
                param, cfg.nx, cfg.ny, cfg.solver_tol, cfg.max_iters, cfg.lid_speed
            )
        else:
            fx, fy = cache.transient(
                int(param), cfg.period, cfg.nx, cfg.ny, cfg.transient_seed
            )
        in_ensemble = param in labels
        for comp, f in (("ux", fx), ("uy", fy)):
            x = unit_vector(f)
            basis = bases[comp]
            e1 = pod.exact_projection_error(x, basis, nbs[comp]["case1"])
            e2 = pod.exact_projection_error(x, basis, nbs[comp]["case2"])
            rows.append(
                {
                    "component": comp,
                    "parameter": param,
                    "in_ensemble": in_ensemble,
                    "n_b_case1": nbs[comp]["case1"],
                    "e_proj_case1": e1,
                    "n_b_case2": nbs[comp]["case2"],
                    "e_proj_case2": e2,
                }
            )
            lines.append(
                f"{h},{comp},{fmt(float(param))},{int(in_ensemble)},"
                f"{nbs[comp]['case1']},{fmt(e1)},{nbs[comp]['case2']},{fmt(e2)}"
            )
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_csv(os.path.join(cfg.out_dir, "param_study.csv"), PARAM_HEADER, lines)
    return rows


def run_depth_study(cfg: ExperimentConfig, cache: FieldCache | None = None,
                    grid_sizes=None):
    """Depth scaling study at the case-2 thresholds over cfg.grid_sizes."""
    cache = cache or FieldCache()
    sizes = tuple(grid_sizes) if grid_sizes is not None else cfg.grid_sizes

    def make_ensemble(nx, ny):
        if cfg.problem == "cavity":
            pairs = [
                cache.cavity(re, nx, ny, cfg.solver_tol, cfg.max_iters, cfg.lid_speed)
                for re in cfg.reynolds
            ]
            labels = tuple(cfg.reynolds)
        else:
            steps = range(cfg.window[0], cfg.window[1] + 1)
            pairs = [
                cache.transient(t, cfg.period, nx, ny, cfg.transient_seed)
                for t in steps
            ]
            labels = tuple(steps)
        return [p[0] for p in pairs], [p[1] for p in pairs], labels

    os.makedirs(cfg.out_dir, exist_ok=True)
    return circuit.depth_vs_gridsize_study(
        make_ensemble,
        CASE_THRESHOLDS["case2"],
        sizes,
        chi_cap=cfg.chi_cap,
        csv_path=os.path.join(cfg.out_dir, "depth_study.csv"),
    )
