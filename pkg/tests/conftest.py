"""Shared fixtures for the test suite.

The acceptance tests lean on a handful of expensive artifacts: dense
eigensystems up to dimension ~8200, echo-fidelity series on a common time
grid, a large phase-space ensemble, and per-field entropy series.  Each is
built once per session here and shared across the criteria that consume it,
so the suite pays for every diagonalization exactly once.  Fixtures are lazy;
running a single unit-test module never triggers them.

Fock cutoffs follow the convergence ledger: populations at the top of the
boson ladder are checked per call and the largest observed tail is kept with
the artifact, with thresholds loosened only where a dimension ceiling forces
an imperfect cutoff (N = 40 and 80) and the derived quantities were shown to
be stable against the cutoff.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from dickesim.classical import critical_point_image, lambda_c_nonlinear, lyapunov_max
from dickesim.model import ModelParams, critical_state, generator_x
from dickesim.mqc import optimize_axis, renyi_spin_phonon
from dickesim.propagate import diagonalize_model, evolve_batch, fotoc_series
from dickesim.twa import WignerRecipe, evolve_ensemble

G_KHZ = 0.66
DELTA_KHZ = 0.5
B_KHZ = 0.7            # B/B_c = 0.2009 with B_c = 4 g^2 / delta = 3.4848 kHz
B_CRITICAL_KHZ = 4.0 * G_KHZ**2 / DELTA_KHZ

# grid shared by every echo-fidelity series: covers onset, exponential rise
# and a long stretch of plateau for every N in the Ehrenfest scan
FOTOC_T_GRID = np.linspace(0.0, 2.2, 177)

# cutoffs and matching tail allowances; 198 and 100 sit at the dimension
# ceiling for N = 40 and 80, the rest reach clean convergence
FOCK_CUTOFF = {10: 100, 20: 200, 40: 198, 80: 100}
TAIL_ALLOWANCE = {10: 1e-8, 20: 1e-8, 40: 1e-2, 80: 5e-2}


def chaotic_params(n_spins: int, n_max: int | None = None) -> ModelParams:
    return ModelParams(n_spins=n_spins, g_khz=G_KHZ, delta_khz=DELTA_KHZ,
                       b_khz=B_KHZ, n_max=n_max or FOCK_CUTOFF[n_spins])


@pytest.fixture(scope="session")
def eig10():
    return diagonalize_model(chaotic_params(10))


@pytest.fixture(scope="session")
def eig20():
    return diagonalize_model(chaotic_params(20))


@pytest.fixture(scope="session")
def eig40():
    return diagonalize_model(chaotic_params(40))


@pytest.fixture(scope="session")
def fotoc_x_series(eig10, eig20, eig40):
    """Quadrature echo series keyed by N, including a locally built N = 80.

    The N = 80 eigensystem feeds nothing else, so it is released here instead
    of living as a session fixture next to the other ~500 MB systems.
    """
    series = {}
    for eig in (eig10, eig20, eig40):
        series[eig.params.n_spins] = _fotoc_x(eig)
    eig80 = diagonalize_model(chaotic_params(80))
    series[80] = _fotoc_x(eig80)
    del eig80
    return series


def _fotoc_x(eig):
    p = eig.params
    return fotoc_series(eig, critical_state(p), generator_x(p),
                        dphi=0.01 / p.n_spins, t_grid=FOTOC_T_GRID,
                        params=p, tail_threshold=TAIL_ALLOWANCE[p.n_spins])


@pytest.fixture(scope="session")
def twa_moments():
    """Phase-space ensemble at N = 1000, R = 10^4, critical initial state."""
    p = ModelParams(n_spins=1000, g_khz=G_KHZ, delta_khz=DELTA_KHZ,
                    b_khz=B_KHZ, n_max=1)
    return evolve_ensemble(p, WignerRecipe(), n_traj=10_000,
                           t_eval=np.linspace(0.0, 2.5, 51), seed=11)


@pytest.fixture(scope="session")
def lambda_l():
    """Tangent-space exponent at the unstable critical point (rescaled flow)."""
    p = ModelParams(n_spins=2, g_khz=G_KHZ, delta_khz=DELTA_KHZ,
                    b_khz=B_KHZ, n_max=1)
    x0 = critical_point_image(rescaled=True)
    return lyapunov_max(x0, p, t_end=60.0, rescaled=True)


@pytest.fixture(scope="session")
def lambda_c(lambda_l):
    """Divergence exponent of the quadratic observable at the same point."""
    p = ModelParams(n_spins=2, g_khz=G_KHZ, delta_khz=DELTA_KHZ,
                    b_khz=B_KHZ, n_max=1)
    x0 = critical_point_image(rescaled=True)
    return lambda_c_nonlinear(x0, p, observable="n")


# entropy-series window shared by the thermalization, entropy-correspondence
# and decoherence criteria
ENTROPY_T_GRID = np.linspace(0.0, 12.0, 97)
ENTROPY_WINDOW = (4.0, 12.0)

# per-field cases at N = 40: label, b_khz, n_max, tail allowance
ENTROPY_CASES = [
    ("0.2", B_KHZ, 198, 1e-2),
    ("0.5", 0.5 * B_CRITICAL_KHZ, 198, 1e-2),
    ("1.5", 1.5 * B_CRITICAL_KHZ, 120, 1e-6),
    ("4", 4.0 * B_CRITICAL_KHZ, 80, 1e-6),
]


@pytest.fixture(scope="session")
def entropy_series(eig40):
    """Exact and coherence-estimator entropies vs time for four field values.

    Keeps only small per-time arrays; the three eigensystems built here are
    released before returning.  For fields below critical the measurable
    estimator uses the per-time capture-maximizing spin axis, the one that
    retains the largest share of the purity in the zero-coherence block;
    above critical the state stays nearly polarized and the fixed x axis is
    the natural quantization direction.
    """
    out = {}
    for label, b, n_max, tail_allow in ENTROPY_CASES:
        p = chaotic_params(40, n_max).with_updates(b_khz=b)
        eig = eig40 if label == "0.2" else diagonalize_model(p)
        t0 = time.perf_counter()
        states = evolve_batch(eig, critical_state(p), ENTROPY_T_GRID)
        tails = (np.abs(states.reshape(p.fock_dim, p.spin_dim, -1)[-2:]) ** 2
                 ).sum(axis=(0, 1))
        below = b < B_CRITICAL_KHZ
        s2 = np.empty(len(ENTROPY_T_GRID))
        s_f = np.empty_like(s2)
        i0_sum = np.empty_like(s2)
        for i in range(len(ENTROPY_T_GRID)):
            psi = np.ascontiguousarray(states[:, i])
            if below:
                ax = optimize_axis(psi, p, strategy="max_capture")
                est = renyi_spin_phonon(psi, p, ax.theta, ax.phi)
                s_f[i] = est.s_f_spin_boson
                i0_sum[i] = (est.decomposition.i0_kept
                             + est.decomposition.i0_traced)
            else:
                est = renyi_spin_phonon(psi, p, theta=0.5 * np.pi, phi=0.0)
                s_f[i] = est.s_f_spin
                i0_sum[i] = est.decomposition.i0_traced
            s2[i] = est.s2_exact
        out[label] = {
            "b_khz": b,
            "below": below,
            "t_ms": ENTROPY_T_GRID.copy(),
            "s2": s2,
            "s_f": s_f,
            "i0_sum": i0_sum,
            "max_tail": float(tails.max()),
            "seconds": time.perf_counter() - t0,
        }
        assert out[label]["max_tail"] < tail_allow, (label, out[label]["max_tail"])
        del eig, states
    return out


# ---------------------------------------------------------------------------
# acceptance reporting: one visible line per criterion at the end of the run

ACCEPTANCE_RECORDS: list[tuple[str, bool, str]] = []


def record_acceptance(tag: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_RECORDS.append((tag, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RECORDS:
        return
    terminalreporter.section("acceptance criteria")
    for tag, passed, detail in ACCEPTANCE_RECORDS:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {tag}: {detail}")
