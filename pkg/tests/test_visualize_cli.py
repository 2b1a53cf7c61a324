import json
import os

import numpy as np
import pytest

from podreadout.cli import main
from podreadout.config import ExperimentConfig
from podreadout.flow import Field2D, read_snapshot_csv, read_snapshot_file, transient_pair
from podreadout.pipeline import FieldCache, run_offline, target_fields, unit_vector
from podreadout.visualize import (
    emit_visual_comparison,
    stream_function,
    svg_heatmap,
    visual_shot_budget,
    write_grid_csv,
)


class TestStreamFunction:
    def test_uniform_flow_gives_linear_psi(self):
        nx, ny = 8, 16
        u = Field2D(nx, ny, np.ones(nx * ny))
        psi = stream_function(u)
        ys = np.linspace(0.0, 1.0, ny)
        for j in range(ny):
            assert psi.grid()[j] == pytest.approx(ys[j], abs=1e-14)

    def test_solid_rotation_quadratic_psi(self):
        nx = ny = 33
        ys = np.linspace(0.0, 1.0, ny)
        u = Field2D.from_grid(np.tile(-ys[:, None], (1, nx)))
        psi = stream_function(u)
        h = 1.0 / (ny - 1)
        expected = -(ys**2) / 2.0
        err = np.abs(psi.grid()[:, 0] - expected).max()
        assert err <= h**2  # trapezoid is exact on linear integrands

    def test_cavity_psi_derivative_recovers_ux(self, cavity_ensemble):
        # finite-difference oracle on the same grid
        ux = cavity_ensemble["ux"][0]
        psi = stream_function(ux).grid()
        g = ux.grid()
        ny = ux.ny
        dy = 1.0 / (ny - 1)
        dpsi_dy = (psi[2:, :] - psi[:-2, :]) / (2.0 * dy)
        err = np.abs(dpsi_dy - g[1:-1, :]).max()
        d2u = np.abs(np.diff(g, n=2, axis=0)).max() / dy**2
        assert err <= 5.0 * dy**2 * d2u


@pytest.fixture(scope="module")
def tiny_setup(tmp_path_factory):
    out = tmp_path_factory.mktemp("vis")
    cfg = ExperimentConfig(
        problem="transient", nx=32, ny=16, window=(0, 15), period=8,
        target_step=20, chi_cap=8, out_dir=str(out), seeds=(0,),
        shot_grid=(1000,),
    )
    cache = FieldCache()
    offline = run_offline(cfg, cache)
    return cfg, cache, offline


class TestPanels:

    def test_emit_and_reread_bitwise(self, tiny_setup):
        from podreadout.pipeline import run_cell

        cfg, cache, offline = tiny_setup
        truth = target_fields(cfg, cache)
        targets = {"ux": unit_vector(truth[0]), "uy": unit_vector(truth[1])}
        shots = visual_shot_budget(cfg, offline, 1000)
        reports = {
            m: {c: run_cell(cfg, offline, targets, c, m, shots, 0)
                for c in ("ux", "uy")}
            for m in cfg.methods
        }
        written = emit_visual_comparison(cfg, reports, truth)
        csvs = [p for p in written if p.endswith(".csv")]
        svgs = [p for p in written if p.endswith(".svg")]
        assert len(csvs) == len(svgs) == 4 * 3  # methods + truth, three panels
        for p in csvs:
            f = read_snapshot_csv(p)
            assert (f.nx, f.ny) == (32, 16)
        # written CSV grids parse back bitwise
        truth_ux = next(p for p in csvs if p.endswith("truth_ux.csv"))
        back = read_snapshot_csv(truth_ux)
        assert back.values.tobytes() == targets["ux"].tobytes()
        for p in svgs:
            assert open(p).readline().startswith("<svg")

    def test_podr_psi_close_to_truth_at_converged_budget(self, tiny_setup):
        from podreadout.pipeline import run_cell

        cfg, cache, offline = tiny_setup
        truth = target_fields(cfg, cache)
        targets = {"ux": unit_vector(truth[0]), "uy": unit_vector(truth[1])}
        shots = visual_shot_budget(cfg, offline, 10**6)
        rep = run_cell(cfg, offline, targets, "ux", "PODR", shots, 0)
        psi_hat = stream_function(Field2D(cfg.nx, cfg.ny, rep.reconstruction)).grid()
        psi_true = stream_function(Field2D(cfg.nx, cfg.ny, targets["ux"])).grid()
        bound = 2.0 * rep.epsilon * np.abs(targets["ux"]).max() * 1.0
        assert np.abs(psi_hat - psi_true).max() <= max(bound, 1e-12)


class TestSvg:
    def test_svg_contains_rects(self, tmp_path):
        f = Field2D(4, 4, np.linspace(-1, 1, 16))
        p = tmp_path / "x.svg"
        svg_heatmap(f, p, title="demo")
        text = p.read_text()
        assert text.count("<rect") == 16
        assert "demo" in text

    def test_grid_csv_roundtrip(self, tmp_path):
        f = Field2D(4, 2, np.random.default_rng(0).normal(size=8))
        p = tmp_path / "g.csv"
        write_grid_csv(f, p)
        assert read_snapshot_csv(p).values.tobytes() == f.values.tobytes()


def write_config(tmp_path, **overrides):
    doc = dict(
        problem="transient", nx=32, ny=16, window=[0, 12], period=8,
        target_step=16, chi_cap=8, out_dir=str(tmp_path / "out"),
        shot_grid=[500, 1000], seeds=[0, 1],
    )
    doc.update(overrides)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    return p


class TestCli:
    def test_offline_then_sweep(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path)
        assert main(["--config", str(cfg_path), "offline"]) == 0
        out = capsys.readouterr().out
        assert "n_b=" in out
        assert main(["--config", str(cfg_path), "sweep"]) == 0
        assert os.path.exists(tmp_path / "out" / "sweep.csv")

    def test_solve_writes_snapshot_files(self, tmp_path):
        cfg_path = write_config(tmp_path)
        assert main(["--config", str(cfg_path), "solve"]) == 0
        ens = read_snapshot_file(tmp_path / "out" / "ensemble_ux.pods")
        assert len(ens) == 13

    def test_readout_and_visualize(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path)
        assert main(["--config", str(cfg_path), "readout", "--shots", "1000"]) == 0
        out = capsys.readouterr().out
        assert "PODR" in out and "FSR (idealized)" in out
        assert main(["--config", str(cfg_path), "visualize", "--shots", "1000"]) == 0
        assert os.path.exists(tmp_path / "out" / "visual" / "PODR_psi.svg")

    def test_param_study_command(self, tmp_path):
        cfg_path = write_config(tmp_path)
        assert main(["--config", str(cfg_path), "param-study"]) == 0
        assert os.path.exists(tmp_path / "out" / "param_study.csv")

    def test_depth_study_command(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path)
        assert main(["--config", str(cfg_path), "depth-study",
                     "--sizes", "256,1024"]) == 0
        assert os.path.exists(tmp_path / "out" / "depth_study.csv")

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"problem": "cavity"}))
        assert main(["--config", str(bad), "offline"]) == 2
        assert main(["offline"]) == 2  # missing --config

    def test_numerical_failure_exit_code(self, tmp_path):
        cfg_path = write_config(tmp_path, chi_cap=1, case="case2")
        assert main(["--config", str(cfg_path), "offline"]) == 3

    def test_ingest_roundtrip(self, tmp_path, capsys):
        grids = []
        for k in range(3):
            ux, _ = transient_pair(k, 8, 16, 8, seed=2)
            path = tmp_path / f"snap{k}.csv"
            rows = [",".join(f"{v:.17g}" for v in row) for row in ux.grid()]
            path.write_text("\n".join(rows) + "\n")
            grids.append(ux)
        out_pods = tmp_path / "joined.pods"
        assert main(["ingest", *[str(tmp_path / f"snap{k}.csv") for k in range(3)],
                     "--to", str(out_pods)]) == 0
        back = read_snapshot_file(out_pods)
        assert len(back) == 3
        assert np.allclose(back[0].values, grids[0].values)
        assert main(["ingest", str(out_pods)]) == 0
        assert "3 snapshots" in capsys.readouterr().out

    def test_ingest_bad_file_exit_code(self, tmp_path):
        p = tmp_path / "x.pods"
        p.write_bytes(b"JUNKJUNK")
        assert main(["ingest", str(p)]) == 2

    def test_out_and_seed_overrides(self, tmp_path):
        cfg_path = write_config(tmp_path)
        alt = tmp_path / "alt"
        assert main(["--config", str(cfg_path), "--out", str(alt), "--seed", "5",
                     "sweep"]) == 0
        assert os.path.exists(alt / "sweep.csv")
        lines = open(alt / "sweep.csv").read().splitlines()[1:]
        assert all(line.split(",")[6] == "5" for line in lines)
