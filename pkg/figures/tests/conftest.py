"""Builds a small but complete results tree through the simulation CLI.

Every run uses few spins and a short time grid so the whole tree costs
about a minute; figures only need structurally faithful inputs, not
converged physics.  The tree layout matches the one the recipe registry
documents.
"""

from __future__ import annotations

import subprocess
import sys

import pytest

B_CHAOTIC = 0.7
B_CRITICAL = 4 * 0.66**2 / 0.5
B_NORMAL = 4 * B_CRITICAL


def _model(n_spins: int, n_max: int, b_khz: float) -> str:
    # smoke-scale cutoffs sit near the strict default tail contract
    return (f"[model]\nn_spins = {n_spins}\ng_khz = 0.66\n"
            f"delta_khz = 0.5\nb_khz = {b_khz:.6f}\nn_max = {n_max}\n"
            "tail_threshold = 1e-6\n")


def _time(t_end: float, n_points: int) -> str:
    return f"[time]\nt_start = 0.0\nt_end = {t_end}\nn_points = {n_points}\n"


def _fotoc(n_spins: int, n_max: int) -> str:
    return (_model(n_spins, n_max, B_CHAOTIC) + _time(2.2, 67)
            + "[fotoc]\ngenerator = X\nt_star_level_per_spin = 0.075\n")


def _renyi(b_khz: float, extra: str = "") -> str:
    return (_model(6, 70, b_khz) + _time(12.0, 25)
            + "[renyi]\naxis = optimize\n" + extra)


def _decayed(b_khz: float) -> str:
    return (_renyi(b_khz)
            + "[decoherence]\ngamma_per_s = 60.0\nenhancement = 16.0\n")


RUN_SPECS: tuple[tuple[str, str, str], ...] = (
    ("spectrum_chaotic", "spectrum",
     _model(8, 70, B_CHAOTIC)
     + "[spectrum]\nmin_levels = 8\ncompute_references = true\n"),
    ("spectrum_normal", "spectrum",
     _model(8, 70, B_NORMAL) + "[spectrum]\nmin_levels = 8\n"),
    ("lyapunov_map", "lyapunov-map",
     _model(6, 1, B_CHAOTIC)
     + "[lyapunov]\nb_khz_values = 0.87, 1.74, 3.49, 6.97\n"
       "n_samples = 6\nt_end = 30.0\nenergy_bins = 5\n"),
    ("fotoc_a", "fotoc", _fotoc(4, 60)),
    ("fotoc_b", "fotoc", _fotoc(6, 70)),
    ("fotoc_c", "fotoc", _fotoc(8, 85)),
    ("fotoc_d", "fotoc", _fotoc(10, 100)),
    ("twa", "twa",
     _model(200, 1, B_CHAOTIC) + _time(2.5, 26)
     + "[twa]\nn_traj = 300\n"),
    ("renyi_b02", "renyi", _renyi(0.2 * B_CRITICAL,
                                  "subsystems = 1-5\n")),
    ("renyi_b05", "renyi", _renyi(0.5 * B_CRITICAL)),
    ("renyi_b15", "renyi", _renyi(1.5 * B_CRITICAL)),
    ("renyi_b4", "renyi", _renyi(4.0 * B_CRITICAL)),
    ("renyi_b02_dec", "renyi", _decayed(0.2 * B_CRITICAL)),
    ("renyi_b05_dec", "renyi", _decayed(0.5 * B_CRITICAL)),
    ("renyi_b15_dec", "renyi", _decayed(1.5 * B_CRITICAL)),
    ("renyi_b4_dec", "renyi", _decayed(4.0 * B_CRITICAL)),
    ("thermalize", "thermalize",
     _model(6, 70, B_CHAOTIC)
     + "[thermalize]\nwindow_start = 6.0\nwindow_end = 12.0\n"
       "n_window_points = 41\nsubsystems = 1-5\n"),
)


@pytest.fixture(scope="session")
def results_tree(tmp_path_factory):
    root = tmp_path_factory.mktemp("results")
    cfg_dir = tmp_path_factory.mktemp("configs")
    for name, experiment, text in RUN_SPECS:
        cfg = cfg_dir / f"{name}.ini"
        cfg.write_text(text)
        proc = subprocess.run(
            [sys.executable, "-m", "dickesim", experiment,
             "--config", str(cfg), "--out", str(root / name)],
            capture_output=True, text=True)
        if proc.returncode != 0:
            raise RuntimeError(
                f"building run {name!r} failed (exit {proc.returncode}):\n"
                f"{proc.stdout}\n{proc.stderr}")
    return root
