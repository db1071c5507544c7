import json
import os

import numpy as np
import pytest

from slidingbasis.cli import main, read_bc_csv, read_loads_csv, run
from slidingbasis.domains import box_tet_mesh, save_tet_mesh

from test_io_config import ROCKET_TOML, write_rocket_config


def run_lines(path, drop_seconds=False):
    lines = path.read_text().splitlines()
    if not drop_seconds:
        return lines
    header = lines[0].split(",")
    keep = [i for i, name in enumerate(header) if name != "seconds"]
    return [",".join(np.array(line.split(","))[keep]) for line in lines]


def test_malformed_config_exits_without_artifacts(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("mode = [unclosed")
    out = tmp_path / "out"
    rc = main(["rocket", "--config", str(bad), "--out", str(out)])
    assert rc == 2
    assert not out.exists()


def test_rocket_run_writes_all_artifacts(tmp_path):
    cfg = write_rocket_config(tmp_path)
    out = tmp_path / "out"
    rc = main(["rocket", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    expected = [
        "burn_rate.vtk", "burn_rate.csv", "burn_rate_masked.vtk", "burn_rate_masked.csv",
        "profile_target.csv", "profile_achieved.csv", "stations.csv",
        "trace.csv", "weights.txt", "summary.json", "config_snapshot.json",
    ]
    for name in expected:
        assert (out / name).exists(), name
    summary = json.loads((out / "summary.json").read_text())
    assert summary["app"] == "rocket"
    assert summary["mode"] == "sliding"
    assert summary["evaluations"] > 0


def test_rocket_run_deterministic_and_snapshot_rerunnable(tmp_path):
    cfg = write_rocket_config(tmp_path)
    out1, out2, out3 = (tmp_path / n for n in ("a", "b", "c"))
    assert main(["rocket", "--config", str(cfg), "--out", str(out1)]) == 0
    assert main(["rocket", "--config", str(cfg), "--out", str(out2)]) == 0
    deterministic = [
        "burn_rate.csv", "burn_rate_masked.csv", "profile_target.csv",
        "profile_achieved.csv", "stations.csv", "weights.txt",
    ]
    for name in deterministic:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name
    assert run_lines(out1 / "trace.csv", drop_seconds=True) == run_lines(
        out2 / "trace.csv", drop_seconds=True
    )
    # the snapshot is a complete config: re-running it reproduces the run
    assert main(["rocket", "--config", str(out1 / "config_snapshot.json"), "--out", str(out3)]) == 0
    for name in deterministic:
        assert (out1 / name).read_bytes() == (out3 / name).read_bytes(), name


def test_compare_runs_sliding_and_fixed(tmp_path):
    cfg = write_rocket_config(tmp_path)
    out = tmp_path / "cmp"
    rc = main(["compare", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    lines = (out / "comparison.csv").read_text().splitlines()
    assert lines[0].startswith("mode,total_basis")
    rows = {line.split(",")[0]: line.split(",") for line in lines[1:]}
    assert set(rows) == {"sliding", "fixed"}
    assert rows["sliding"][1] == rows["fixed"][1]  # same explored basis count
    sliding_summary = json.loads((out / "sliding" / "summary.json").read_text())
    fixed_summary = json.loads((out / "fixed" / "summary.json").read_text())
    assert fixed_summary["total_basis"] == sliding_summary["total_basis"]


def test_basis_and_simulate_subcommands(tmp_path):
    cfg = write_rocket_config(tmp_path)
    out = tmp_path / "basis_out"
    cache = tmp_path / "cache.npz"
    rc = main(["basis", "--config", str(cfg), "--out", str(out), "--k", "5",
               "--cache", str(cache)])
    assert rc == 0
    lines = (out / "eigenvalues.csv").read_text().splitlines()
    assert len(lines) == 6
    assert float(lines[1].split(",")[1]) == pytest.approx(0.0, abs=1e-10)
    assert (out / "eigenvector_000.vtk").exists()
    assert cache.exists()

    sim_out = tmp_path / "sim_out"
    rc = main(["simulate", "--config", str(cfg), "--out", str(sim_out)])
    assert rc == 0
    assert (sim_out / "profile.csv").exists()
    assert (sim_out / "arrival_time.vtk").exists()


def write_topopt_inputs(tmp_path):
    mesh = box_tet_mesh(3, 2, 2, 1.5, 0.5, 0.5)
    save_tet_mesh(mesh, tmp_path / "m.node", tmp_path / "m.ele")
    root = np.nonzero(np.abs(mesh.vertices[:, 0]) < 1e-12)[0]
    tip = np.nonzero(np.abs(mesh.vertices[:, 0] - 1.5) < 1e-12)[0]
    with open(tmp_path / "bc.csv", "w") as fh:
        fh.write("node\n")
        for n in root:
            fh.write(f"{n}\n")
    with open(tmp_path / "loads.csv", "w") as fh:
        fh.write("node,fx,fy,fz\n")
        for n in tip:
            fh.write(f"{n},0,0,{-500.0 / len(tip)}\n")
    cfg = tmp_path / "topo.toml"
    cfg.write_text(
        'mode = "sliding"\nseed = 1\noutput_dir = "out"\n'
        '[domain]\nnodes = "m.node"\nelements = "m.ele"\n'
        "[sliding]\nn_opt = 4\nn_s = 3\ns_max = 1\ninner_max_iter = 15\n"
        '[topopt]\nm_frac = 0.5\nnu = 0.3\nbc = "bc.csv"\nloads = "loads.csv"\n'
        "[topopt.materials]\ndensities = [0.0, 0.1, 1.0]\nmoduli = [0.0, 2e9, 3e9]\n"
    )
    return cfg


def test_topopt_cli_run(tmp_path):
    cfg = write_topopt_inputs(tmp_path)
    out = tmp_path / "out"
    rc = main(["topopt", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    for name in ("density.vtk", "density.csv", "material_id.vtk", "density_snapped.csv",
                 "trace.csv", "weights.txt", "summary.json", "config_snapshot.json"):
        assert (out / name).exists(), name
    summary = json.loads((out / "summary.json").read_text())
    assert summary["app"] == "topopt"
    assert summary["mass_fraction"] <= summary["m_frac_limit"] + 1e-6


def test_conventional_mode_per_element_baseline(tmp_path):
    cfg = tmp_path / "tiny.toml"
    cfg.write_text(
        ROCKET_TOML.replace("n_r = 16", "n_r = 8")
        .replace("n_z = 8", "n_z = 4")
        .replace("inner_max_iter = 6", "inner_max_iter = 3")
    )
    out = tmp_path / "conv"
    rc = main(["rocket", "--config", str(cfg), "--out", str(out), "--mode", "conventional"])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["mode"] == "conventional"
    assert summary["total_basis"] == 8 * 4  # one variable per element


def test_bc_and_loads_readers(tmp_path):
    bc = tmp_path / "bc.csv"
    bc.write_text("node\n0\n2\n")
    assert read_bc_csv(bc).tolist() == [0, 1, 2, 6, 7, 8]
    loads = tmp_path / "loads.csv"
    loads.write_text("node,fx,fy,fz\n1,1.0,0,-2.0\n")
    vec = read_loads_csv(loads, 3)
    assert vec.tolist() == [0, 0, 0, 1.0, 0, -2.0, 0, 0, 0]
