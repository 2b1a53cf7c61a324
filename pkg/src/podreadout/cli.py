"""Command-line front end.

Subcommands: solve, offline, readout, sweep, param-study, depth-study,
visualize, ingest.  Exit codes: 0 success, 2 config or input-format error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys

from . import flow, pipeline, visualize
from .config import ConfigError, load_config
from .errors import NumericalError, SnapshotFormatError

log = logging.getLogger("podreadout")


def _build_parser():
    p = argparse.ArgumentParser(prog="podr", description=__doc__)
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--out", help="override the config output directory")
    p.add_argument("--seed", type=int, help="replace the config seed list with one seed")
    p.add_argument("--threads", type=int, help="worker threads for sweep cells")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("solve", help="generate and persist the snapshot ensemble")
    sub.add_parser("offline", help="build POD bases and compressed encodings")
    r = sub.add_parser("readout", help="single readout per method at one budget")
    r.add_argument("--shots", type=int, default=None)
    sub.add_parser("sweep", help="full method x shots x seeds sweep")
    sub.add_parser("param-study", help="projection error across the parameter sweep")
    d = sub.add_parser("depth-study", help="circuit depth vs grid size")
    d.add_argument("--sizes", help="comma-separated grid sizes (total points)")
    vz = sub.add_parser("visualize", help="export solution panels per method")
    vz.add_argument("--shots", type=int, default=10_000)
    ing = sub.add_parser("ingest", help="convert CSV snapshots or validate a file")
    ing.add_argument("inputs", nargs="+", help="CSV snapshot files or one .pods file")
    ing.add_argument("--to", help="output .pods path for CSV conversion")
    return p


def _load(args):
    if not args.config:
        raise ConfigError("this command needs --config")
    cfg = load_config(args.config)
    overrides = {}
    if args.out:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    if args.threads is not None:
        overrides["threads"] = args.threads
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _cmd_solve(args):
    cfg = _load(args)
    cache = pipeline.FieldCache()
    ux, uy, labels = pipeline.ensemble_fields(cfg, cache)
    tx, ty = pipeline.target_fields(cfg, cache)
    os.makedirs(cfg.out_dir, exist_ok=True)
    for name, fields in (
        ("ensemble_ux", ux), ("ensemble_uy", uy), ("target_ux", [tx]), ("target_uy", [ty]),
    ):
        flow.write_snapshot_file(fields, os.path.join(cfg.out_dir, f"{name}.pods"))
    print(f"wrote {len(ux)} ensemble snapshots per component "
          f"(labels {labels[0]}..{labels[-1]}) and the target to {cfg.out_dir}")
    return 0


def _cmd_offline(args):
    cfg = _load(args)
    result = pipeline.run_offline(cfg)
    for comp, art in result.components.items():
        print(
            f"{comp}: n_b={art.basis.n_b} chis={list(art.plan.chis)} "
            f"e_proj_est={art.e_proj_est:.3e} e_enc_est={art.e_enc_est:.3e}"
            + (" (reused)" if result.reused else "")
        )
    return 0


def _cmd_readout(args):
    cfg = _load(args)
    shots = args.shots if args.shots is not None else cfg.shot_grid[0]
    cfg = dataclasses.replace(cfg, shot_grid=(shots,), seeds=(cfg.seeds[0],))
    cache = pipeline.FieldCache()
    offline = pipeline.run_offline(cfg, cache)
    rows = pipeline.run_shot_sweep(cfg, offline, cache)
    for r in rows:
        label = visualize.METHOD_LABELS.get(r["method"], r["method"])
        print(f"{label:16s} {r['component']}: epsilon={r['epsilon']:.4e} "
              f"(shots={r['n_shot_total']})")
    return 0


def _cmd_sweep(args):
    cfg = _load(args)
    cache = pipeline.FieldCache()
    offline = pipeline.run_offline(cfg, cache)
    rows = pipeline.run_shot_sweep(cfg, offline, cache)
    print(f"{len(rows)} sweep cells -> {os.path.join(cfg.out_dir, 'sweep.csv')}")
    return 0


def _cmd_param_study(args):
    cfg = _load(args)
    rows = pipeline.run_param_study(cfg)
    print(f"{len(rows)} rows -> {os.path.join(cfg.out_dir, 'param_study.csv')}")
    return 0


def _cmd_depth_study(args):
    cfg = _load(args)
    sizes = None
    if args.sizes:
        sizes = tuple(int(s) for s in args.sizes.split(","))
    rows = pipeline.run_depth_study(cfg, grid_sizes=sizes)
    for r in rows:
        print(f"N={r['N']:>6} {r['component']}: n_b={r['n_b']} depth={r['depth']}")
    return 0


def _cmd_visualize(args):
    cfg = _load(args)
    cache = pipeline.FieldCache()
    offline = pipeline.run_offline(cfg, cache)
    shots = visualize.visual_shot_budget(cfg, offline, args.shots)
    if shots != args.shots:
        log.info("shared budget adjusted from %d to %d", args.shots, shots)
    truth = pipeline.target_fields(cfg, cache)
    targets = {
        "ux": pipeline.unit_vector(truth[0]),
        "uy": pipeline.unit_vector(truth[1]),
    }
    seed = cfg.seeds[0]
    reports = {}
    for method in cfg.methods:
        reports[method] = {
            comp: pipeline.run_cell(cfg, offline, targets, comp, method, shots, seed)
            for comp in ("ux", "uy")
        }
    written = visualize.emit_visual_comparison(cfg, reports, truth)
    print(f"wrote {len(written)} panel files under {cfg.out_dir}")
    return 0


def _cmd_ingest(args):
    inputs = args.inputs
    if len(inputs) == 1 and inputs[0].endswith(".pods") and not args.to:
        fields = flow.read_snapshot_file(inputs[0])
        print(f"{inputs[0]}: {len(fields)} snapshots on "
              f"{fields[0].nx}x{fields[0].ny}")
        return 0
    if not args.to:
        raise ConfigError("CSV ingestion needs --to OUTPUT.pods")
    fields = [flow.read_snapshot_csv(p) for p in inputs]
    flow.write_snapshot_file(fields, args.to)
    print(f"wrote {len(fields)} snapshots to {args.to}")
    return 0


_COMMANDS = {
    "solve": _cmd_solve,
    "offline": _cmd_offline,
    "readout": _cmd_readout,
    "sweep": _cmd_sweep,
    "param-study": _cmd_param_study,
    "depth-study": _cmd_depth_study,
    "visualize": _cmd_visualize,
    "ingest": _cmd_ingest,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, SnapshotFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
