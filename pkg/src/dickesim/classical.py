"""Mean-field limit: flow, tangent dynamics, chaos diagnostics.

Phase-space coordinates follow x = (S_x, S_y, S_z, alpha_R, alpha_I) where
alpha = <a>.  Heisenberg equations of the spin-boson Hamiltonian give

    dS_x/dt = -(4 w_g / sqrt(N)) alpha_R S_y
    dS_y/dt = +(4 w_g / sqrt(N)) alpha_R S_x - w_B S_z
    dS_z/dt =  w_B S_y
    d alpha_R/dt = +sigma w_delta alpha_I
    d alpha_I/dt = -sigma (w_delta alpha_R + (2 w_g / sqrt(N)) S_z)

with sigma = +1 the derived convention; sigma = -1 corresponds to conjugating
alpha and leaves every Lyapunov exponent unchanged.  |S| and the mean-field
energy are conserved along the flow.

For large N the rescaled variables s = 2S/N (unit sphere) and
beta = alpha/sqrt(N) obey an N-independent flow; both parameterizations are
implemented and agree on exponents.

The spin-coherent state polarized along -x with the boson in vacuum maps to
the fixed point (-N/2, 0, 0, 0, 0); below the critical field it is unstable
and its tangent eigenvalue is the largest Lyapunov exponent probed by
scrambling dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .model import ModelParams

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12


def critical_point_image(params: ModelParams | None = None,
                         rescaled: bool = False) -> np.ndarray:
    """Phase-space image of the -x polarized, boson-vacuum product state."""
    if rescaled:
        return np.array([-1.0, 0.0, 0.0, 0.0, 0.0])
    if params is None:
        raise ValueError("bare coordinates need params for the spin length")
    return np.array([-0.5 * params.n_spins, 0.0, 0.0, 0.0, 0.0])


def _rates(params: ModelParams, rescaled: bool):
    """(spin-drive, boson-drive, delta, B) prefactors for either scaling."""
    if rescaled:
        return (4.0 * params.omega_g, params.omega_g,
                params.omega_delta, params.omega_b)
    root_n = np.sqrt(params.n_spins)
    return (4.0 * params.omega_g / root_n, 2.0 * params.omega_g / root_n,
            params.omega_delta, params.omega_b)


def mean_field_rhs(x: np.ndarray, params: ModelParams, sign: int = +1,
                   rescaled: bool = False) -> np.ndarray:
    """Flow F(x); x may be a single point (5,) or a batch (..., 5)."""
    cs, cb, delta, b = _rates(params, rescaled)
    x = np.asarray(x, dtype=float)
    sx, sy, sz, ar, ai = (x[..., i] for i in range(5))
    out = np.empty_like(x)
    out[..., 0] = -cs * ar * sy
    out[..., 1] = cs * ar * sx - b * sz
    out[..., 2] = b * sy
    out[..., 3] = sign * delta * ai
    out[..., 4] = -sign * (delta * ar + cb * sz)
    return out


def jacobian(x: np.ndarray, params: ModelParams, sign: int = +1,
             rescaled: bool = False) -> np.ndarray:
    """Analytic d F_i / d x_j at a single phase-space point."""
    cs, cb, delta, b = _rates(params, rescaled)
    sx, sy, sz, ar, ai = np.asarray(x, dtype=float)
    m = np.zeros((5, 5))
    m[0, 1] = -cs * ar
    m[0, 3] = -cs * sy
    m[1, 0] = cs * ar
    m[1, 2] = -b
    m[1, 3] = cs * sx
    m[2, 1] = b
    m[3, 4] = sign * delta
    m[4, 2] = -sign * cb
    m[4, 3] = -sign * delta
    return m


def tangent_rhs(x: np.ndarray, v: np.ndarray, params: ModelParams,
                sign: int = +1, rescaled: bool = False) -> np.ndarray:
    """M(x) v without forming the matrix; batched like mean_field_rhs."""
    cs, cb, delta, b = _rates(params, rescaled)
    sx, sy, sz, ar, ai = (x[..., i] for i in range(5))
    vx, vy, vz, vr, vi = (v[..., i] for i in range(5))
    out = np.empty_like(v)
    out[..., 0] = -cs * (ar * vy + sy * vr)
    out[..., 1] = cs * (ar * vx + sx * vr) - b * vz
    out[..., 2] = b * vy
    out[..., 3] = sign * delta * vi
    out[..., 4] = -sign * (cb * vz + delta * vr)
    return out


def energy(x: np.ndarray, params: ModelParams,
           rescaled: bool = False) -> np.ndarray:
    """Mean-field energy; in rescaled coordinates this is E/N."""
    x = np.asarray(x, dtype=float)
    sx, sz = x[..., 0], x[..., 2]
    ar, ai = x[..., 3], x[..., 4]
    if rescaled:
        return (2.0 * params.omega_g * ar * sz
                + params.omega_delta * (ar**2 + ai**2)
                + 0.5 * params.omega_b * sx)
    return (4.0 * params.omega_g / np.sqrt(params.n_spins) * ar * sz
            + params.omega_delta * (ar**2 + ai**2)
            + params.omega_b * sx)


def normalized_energy(x: np.ndarray, params: ModelParams,
                      rescaled: bool = False) -> np.ndarray:
    """E / |E_c| with E_c the critical (fixed-point) energy."""
    e = energy(x, params, rescaled)
    scale = 0.5 * params.omega_b if rescaled \
        else 0.5 * params.omega_b * params.n_spins
    return e / scale


def spin_norm(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.sqrt((x[..., :3] ** 2).sum(axis=-1))


def integrate(x0: np.ndarray, params: ModelParams, t_eval: np.ndarray,
              sign: int = +1, rescaled: bool = False,
              rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
              method: str = "DOP853") -> np.ndarray:
    """Trajectories at the requested times, shape (n_times, ..., 5).

    Batches integrate as one flattened system, so the adaptive step is set
    by the stiffest member; results stay deterministic for a given input.
    """
    x0 = np.asarray(x0, dtype=float)
    t_eval = np.asarray(t_eval, dtype=float)
    shape = x0.shape

    def rhs(t, y):
        return mean_field_rhs(y.reshape(shape), params, sign, rescaled).ravel()

    sol = solve_ivp(rhs, (t_eval[0], t_eval[-1]), x0.ravel(), t_eval=t_eval,
                    rtol=rtol, atol=atol, method=method, dense_output=False)
    if not sol.success:
        raise RuntimeError(f"integration failed: {sol.message}")
    return sol.y.T.reshape(len(t_eval), *shape)


def _integrate_segment(y0: np.ndarray, params: ModelParams, t0: float,
                       t1: float, sign: int, rescaled: bool, rtol: float,
                       atol: float, with_tangent: bool,
                       method: str = "DOP853") -> np.ndarray:
    """One adaptive hop from t0 to t1 for (K, 5) or (K, 10) states."""
    shape = y0.shape

    if with_tangent:
        def rhs(t, y):
            z = y.reshape(shape)
            x, v = z[..., :5], z[..., 5:]
            return np.concatenate(
                [mean_field_rhs(x, params, sign, rescaled),
                 tangent_rhs(x, v, params, sign, rescaled)], axis=-1).ravel()
    else:
        def rhs(t, y):
            return mean_field_rhs(y.reshape(shape), params, sign,
                                  rescaled).ravel()

    sol = solve_ivp(rhs, (t0, t1), y0.ravel(), rtol=rtol, atol=atol,
                    method=method)
    if not sol.success:
        raise RuntimeError(f"integration failed: {sol.message}")
    return sol.y[:, -1].reshape(shape)


@dataclass
class LyapunovResult:
    """Largest exponent from tangent-space growth with renormalization."""

    rate: np.ndarray
    converged: np.ndarray
    drift: np.ndarray
    history_t: np.ndarray
    history_rate: np.ndarray
    t_end: float

    def scalar(self) -> float:
        return float(np.asarray(self.rate).reshape(-1)[0])


def lyapunov_max(x0: np.ndarray, params: ModelParams, t_end: float = 200.0,
                 renorm_interval: float = 0.1, sign: int = +1,
                 rescaled: bool = False, rtol: float = DEFAULT_RTOL,
                 atol: float = DEFAULT_ATOL, tangent0: np.ndarray | None = None,
                 drift_tol: float = 0.02, zero_floor: float = 0.02,
                 seed: int = 12345) -> LyapunovResult:
    """Benettin single-vector exponent for one point or a (K, 5) batch.

    The tangent vector co-integrates with the flow and is renormalized every
    renorm_interval ms, accumulating log growth.  Convergence requires the
    running estimate to drift less than drift_tol (relative) over the final
    third of the horizon; estimates below zero_floor (rad/ms) count as
    converged-to-regular.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    k = x0.shape[0]
    rng = np.random.default_rng(seed)
    if tangent0 is None:
        v = rng.standard_normal((k, 5))
    else:
        v = np.broadcast_to(np.asarray(tangent0, dtype=float), (k, 5)).copy()
    v /= np.linalg.norm(v, axis=1, keepdims=True)

    n_seg = int(round(t_end / renorm_interval))
    if n_seg < 9:
        raise ValueError("horizon too short for the drift diagnostic")
    log_sum = np.zeros(k)
    stride = max(1, n_seg // 300)
    hist_t, hist_rate = [], []
    y = np.concatenate([x0, v], axis=1)
    for j in range(n_seg):
        t0 = j * renorm_interval
        y = _integrate_segment(y, params, t0, t0 + renorm_interval, sign,
                               rescaled, rtol, atol, with_tangent=True)
        norms = np.linalg.norm(y[:, 5:], axis=1)
        log_sum += np.log(norms)
        y[:, 5:] /= norms[:, None]
        if (j + 1) % stride == 0 or j == n_seg - 1:
            hist_t.append((j + 1) * renorm_interval)
            hist_rate.append(log_sum / ((j + 1) * renorm_interval))

    hist_t = np.asarray(hist_t)
    hist_rate = np.asarray(hist_rate)  # (n_hist, K)
    rate = hist_rate[-1]
    tail = hist_rate[hist_t >= (2.0 / 3.0) * t_end]
    drift = (tail.max(axis=0) - tail.min(axis=0)) / np.maximum(np.abs(rate), 1e-12)
    converged = (drift < drift_tol) | (np.abs(rate) < zero_floor)
    return LyapunovResult(rate=rate, converged=converged, drift=drift,
                          history_t=hist_t, history_rate=hist_rate,
                          t_end=t_end)


_OBSERVABLES = {
    "n": lambda x: x[..., 3] ** 2 + x[..., 4] ** 2,
    "alpha_r": lambda x: x[..., 3],
}


@dataclass
class TwinDivergence:
    rate: float
    observable: str
    segment_rates: np.ndarray
    d0: float


def lambda_c_nonlinear(x0: np.ndarray, params: ModelParams,
                       observable: str = "n", d0: float = 1e-8,
                       segment: float = 1.0, n_segments: int = 30,
                       discard: int = 3, sign: int = +1,
                       rescaled: bool = False, rtol: float = DEFAULT_RTOL,
                       atol: float = DEFAULT_ATOL,
                       seed: int = 2024) -> TwinDivergence:
    """Divergence exponent measured in a nonlinear observable.

    Two copies separated by d0 evolve side by side; each segment records the
    log growth of |obs(x2) - obs(x1)| and then re-seeds the separation back
    to d0 along its current direction.  For the quadratic observable
    n = |alpha|^2 around the critical fixed point the rate doubles the
    linear tangent exponent.
    """
    try:
        obs = _OBSERVABLES[observable]
    except KeyError:
        raise ValueError(f"unknown observable {observable!r}") from None
    rng = np.random.default_rng(seed)
    x1 = np.asarray(x0, dtype=float).copy()
    u = rng.standard_normal(5)
    u /= np.linalg.norm(u)
    x2 = x1 + d0 * u

    rates = []
    for j in range(n_segments):
        y_start = abs(obs(x2) - obs(x1))
        pair = np.stack([x1, x2])
        pair = _integrate_segment(pair, params, j * segment, (j + 1) * segment,
                                  sign, rescaled, rtol, atol,
                                  with_tangent=False)
        x1, x2 = pair[0], pair[1]
        y_end = abs(obs(x2) - obs(x1))
        if y_start > 0 and y_end > 0:
            rates.append(np.log(y_end / y_start) / segment)
        delta = x2 - x1
        dist = np.linalg.norm(delta)
        if dist > 0:
            x2 = x1 + (d0 / dist) * delta
    rates = np.asarray(rates)
    used = rates[discard:] if rates.size > discard else rates
    return TwinDivergence(rate=float(used.mean()), observable=observable,
                          segment_rates=rates, d0=d0)


# ---------------------------------------------------------------------------
# chaos map over field strength and energy


@dataclass
class ScanCell:
    b_khz: float
    sqrt_bc_over_b: float
    e_lo: float
    e_hi: float
    lambda_max: float
    n_samples: int
    n_converged: int


def sample_phase_points(n_samples: int, r_max: float,
                        rng: np.random.Generator) -> np.ndarray:
    """Rescaled random product-state images: spin uniform on the unit sphere,
    beta uniform on a disk of radius r_max."""
    z = rng.uniform(-1.0, 1.0, n_samples)
    az = rng.uniform(0.0, 2.0 * np.pi, n_samples)
    st = np.sqrt(1.0 - z**2)
    r = r_max * np.sqrt(rng.uniform(0.0, 1.0, n_samples))
    ab = rng.uniform(0.0, 2.0 * np.pi, n_samples)
    return np.column_stack([st * np.cos(az), st * np.sin(az), z,
                            r * np.cos(ab), r * np.sin(ab)])


def phase_diagram_scan(g_khz: float, delta_khz: float, b_khz_values,
                       n_samples: int = 100, r_max: float = 1.5,
                       t_end: float = 100.0, renorm_interval: float = 0.1,
                       energy_edges: np.ndarray | None = None,
                       rtol: float = 1e-8, atol: float = 1e-10,
                       sign: int = +1, seed: int = 7,
                       drift_tol: float = 0.05) -> list[ScanCell]:
    """Max tangent exponent binned over normalized energy, per field value.

    Samples are the classical images of random product states; the flow is
    integrated in rescaled variables, so no spin number enters.  Cells
    without converged samples carry lambda_max = nan.  Chaotic orbits keep a
    slowly wandering running estimate, so the scan accepts a looser relative
    drift than the single-point default.
    """
    if energy_edges is None:
        energy_edges = np.linspace(-2.0, 2.0, 17)
    energy_edges = np.asarray(energy_edges, dtype=float)
    rng = np.random.default_rng(seed)
    cells: list[ScanCell] = []
    for b_khz in b_khz_values:
        params = ModelParams(n_spins=2, g_khz=g_khz, delta_khz=delta_khz,
                             b_khz=b_khz, n_max=1)
        pts = sample_phase_points(n_samples, r_max, rng)
        e_norm = normalized_energy(pts, params, rescaled=True)
        res = lyapunov_max(pts, params, t_end=t_end,
                           renorm_interval=renorm_interval, sign=sign,
                           rescaled=True, rtol=rtol, atol=atol,
                           seed=seed + 1, drift_tol=drift_tol)
        ratio = np.sqrt(params.b_critical_khz / b_khz)
        for lo, hi in zip(energy_edges[:-1], energy_edges[1:]):
            mask = (e_norm >= lo) & (e_norm < hi)
            conv = mask & res.converged
            lam = float(res.rate[conv].max()) if conv.any() else float("nan")
            cells.append(ScanCell(b_khz=float(b_khz),
                                  sqrt_bc_over_b=float(ratio),
                                  e_lo=float(lo), e_hi=float(hi),
                                  lambda_max=lam,
                                  n_samples=int(mask.sum()),
                                  n_converged=int(conv.sum())))
    return cells
