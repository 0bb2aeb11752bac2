"""Smoke tests for the python bindings: build a state, evolve it, query the
velocity laws, run the statistics, and exercise one end-to-end config run."""

import json
import math
import os
import subprocess

import numpy as np
import pytest

import pilotwave as pw


@pytest.fixture(scope="module")
def grid():
    return pw.Grid(num_particles=1, points_per_axis=256, box=(-10.0, 10.0))


def test_version():
    assert pw.version() == "0.1.0"


def test_gaussian_state_is_normalized(grid):
    psi = pw.init_state(pw.gaussian_product([([0.0], [0.0], 1.0)]), grid)
    assert abs(psi.norm_sq() - 1.0) < 1e-10
    amp = psi.amplitudes()
    assert amp.shape == (256, 1)
    rho = (np.abs(amp[:, 0]) ** 2).sum() * grid.cell_volume
    assert abs(rho - 1.0) < 1e-10


def test_plane_wave_velocity(grid):
    k = 2.0 * math.pi * 6 / 20.0
    psi = pw.init_state(pw.plane_wave([[k]]), grid)
    v = pw.velocity_full(psi, [0.42])
    assert abs(v[0] - k) < 1e-9


def test_free_packet_spreads(grid):
    psi = pw.init_state(pw.gaussian_product([([0.0], [0.0], 1.0)]), grid)
    evolved = pw.evolve(psi, 1e-3, 1000)
    assert abs(evolved.time - 1.0) < 1e-12
    x = grid.axis_coords
    rho = np.abs(evolved.amplitudes()[:, 0]) ** 2
    rho /= rho.sum()
    width = math.sqrt(float((rho * x**2).sum() - (rho * x).sum() ** 2))
    assert abs(width - math.sqrt(1.25)) < 1e-4


def test_trajectory_matches_scaling(grid):
    psi = pw.init_state(pw.gaussian_product([([0.0], [0.0], 1.0)]), grid)
    out = pw.integrate(psi, "full", [], [1.0], T=1.0, stride=0.01, pde_substeps=10)
    assert out["abort"] == "none"
    assert abs(out["configs"][-1][0] - math.sqrt(1.25)) < 1e-3


def test_reduced_density_and_symmetrized():
    g = pw.Grid(num_particles=2, points_per_axis=64, box=(-10.0, 10.0))
    recipe = pw.gaussian_product([([-2.0], [0.5], 1.0), ([2.0], [-0.5], 1.2)])
    psi = pw.init_state(recipe, g)
    red = pw.reduced_density(psi, [1])
    assert red.shape == (64,)
    assert abs(red.sum() * (20.0 / 64) - 1.0) < 1e-8
    sym = pw.symmetrized_density(psi)
    assert sym.shape == (64 * 64,)


def test_ks_and_chi2():
    rng = np.random.default_rng(7)
    a = rng.normal(size=5000).tolist()
    b = rng.normal(size=5000).tolist()
    d, p = pw.ks_two_sample(a, b)
    assert p > 0.01
    chi2, dof, p2 = pw.chi_square_binned([480, 520], [0.5, 0.5])
    assert dof == 1
    assert p2 > 0.01


def test_node_error_is_raised():
    g = pw.Grid(num_particles=1, points_per_axis=128, box=(-10.0, 10.0))
    psi = pw.init_state(pw.gaussian_product([([0.0], [0.0], 0.6)]), g)
    with pytest.raises(ArithmeticError):
        pw.velocity_full(psi, [9.5])


def test_dump_and_load(tmp_path):
    g = pw.Grid(num_particles=1, points_per_axis=64, box=(-10.0, 10.0))
    psi = pw.init_state(pw.gaussian_product([([0.5], [0.3], 1.0)]), g)
    path = str(tmp_path / "state.bin")
    pw.dump_state(psi, path)

    with open(path, "rb") as f:
        header = json.loads(f.readline())
        payload = np.fromfile(f, dtype=np.complex64)
    assert header["points_per_axis"] == 64
    assert payload.shape == (64,)
    norm = (np.abs(payload) ** 2).sum() * (20.0 / 64)
    assert abs(norm - 1.0) < 1e-5

    loaded = pw.load_state(path)
    assert abs(loaded.norm_sq() - 1.0) < 1e-5


def test_end_to_end_config(tmp_path):
    config = {
        "grid": {"num_particles": 1, "points_per_axis": 128, "box": [-10, 10]},
        "state": {
            "kind": "gaussian_product",
            "packets": [{"center": 0.0, "momentum": 0.5, "width": 1.0}],
        },
        "evolution": {"dt": 0.001, "stride": 0.01},
        "experiment": {
            "kind": "equivariance",
            "law": {"kind": "full"},
            "T": 0.1,
            "samples": 400,
            "num_seeds": 1,
            "min_passing_seeds": 1,
            "bins": 16,
        },
        "seed": 21,
        "output_dir": str(tmp_path / "run"),
    }
    result = pw.run_config_text(json.dumps(config))
    assert result["pass"] is True
    with open(result["report_path"]) as f:
        report = json.load(f)
    assert report["pass"] is True


def test_cli_binary_if_available(tmp_path):
    cli = os.environ.get("PILOTWAVE_CLI")
    if not cli:
        pytest.skip("PILOTWAVE_CLI not set")
    proc = subprocess.run([cli, "verify", "--list"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "unitarity" in proc.stdout
