"""Truncated-Wigner ensembles for the mean-field flow.

Initial product states map to Gaussian phase-space clouds: boson quadratures
(alpha_R, alpha_I) are Normal(Re alpha_0, 1/4) and Normal(Im alpha_0, 1/4)
(variance 1/4 each), the spin component along the polarization axis is pinned
at sign*N/2 and the two transverse components are Normal(0, N/4).  Every
trajectory then follows the classical flow, and quantum variances are read
off as ensemble statistics:  var[X](0) = 1/4 reproduces the vacuum value by
construction.

Above ~10^3 spins the rescaled coordinates (s, beta) keep numbers O(1); the
observables X = sqrt(N) beta_R, S_y = (N/2) s_y, n = N |beta|^2 are always
reported in bare units so exponents can be compared across N directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import classical
from .model import ModelParams, axis_vector
from .propagate import ExponentFit, FitWindowPolicy, extract_lambda_q

RESCALE_THRESHOLD = 1000

CONSERVATION_TOL_PER_10MS = 1e-6


def use_rescaled(params: ModelParams) -> bool:
    return params.n_spins > RESCALE_THRESHOLD


@dataclass
class WignerRecipe:
    """Initial product state: spin coherent along (theta, phi) with the given
    polarization sign, boson coherent with amplitude alpha0 (vacuum default)."""

    theta: float = 0.5 * np.pi
    phi: float = 0.0
    sign: int = -1
    alpha0: complex = 0.0 + 0.0j

    def __post_init__(self):
        if self.sign not in (+1, -1):
            raise ValueError("sign must be +1 or -1")


def sample_initial(params: ModelParams, recipe: WignerRecipe, n_traj: int,
                   seed: int, rescaled: bool | None = None) -> np.ndarray:
    """Phase-space samples, shape (n_traj, 5), bare or rescaled coordinates."""
    if rescaled is None:
        rescaled = use_rescaled(params)
    rng = np.random.default_rng(seed)
    n = params.n_spins
    e3 = axis_vector(recipe.theta, recipe.phi)
    # orthonormal transverse frame
    helper = np.array([0.0, 0.0, 1.0]) if abs(e3[2]) < 0.9 \
        else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(helper, e3)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(e3, e1)

    t1 = rng.normal(0.0, 0.5 * np.sqrt(n), n_traj)
    t2 = rng.normal(0.0, 0.5 * np.sqrt(n), n_traj)
    spins = recipe.sign * 0.5 * n * e3[None, :] \
        + t1[:, None] * e1[None, :] + t2[:, None] * e2[None, :]
    ar = rng.normal(recipe.alpha0.real, 0.5, n_traj)
    ai = rng.normal(recipe.alpha0.imag, 0.5, n_traj)
    pts = np.column_stack([spins, ar, ai])
    if rescaled:
        pts[:, :3] *= 2.0 / n
        pts[:, 3:] /= np.sqrt(n)
    return pts


def _observables(params: ModelParams, rescaled: bool):
    n = params.n_spins
    if rescaled:
        return {
            "X": lambda x: np.sqrt(n) * x[..., 3],
            "Sy": lambda x: 0.5 * n * x[..., 1],
            "n": lambda x: n * (x[..., 3] ** 2 + x[..., 4] ** 2),
        }
    return {
        "X": lambda x: x[..., 3],
        "Sy": lambda x: x[..., 1],
        "n": lambda x: x[..., 3] ** 2 + x[..., 4] ** 2,
    }


def _jackknife_var_stderr(values: np.ndarray) -> np.ndarray:
    """Leave-one-out standard error of the sample variance, per time row.

    values has shape (n_times, n_traj).  Uses the closed form for the
    leave-one-out sum of squares, so no explicit resampling loop.
    """
    nt, r = values.shape
    if r < 3:
        return np.full(nt, np.nan)
    mean = values.mean(axis=1, keepdims=True)
    dev = values - mean
    s2 = (dev**2).sum(axis=1)
    loo_s2 = s2[:, None] - dev**2 * (r / (r - 1.0))
    loo_var = loo_s2 / (r - 2.0)
    center = loo_var.mean(axis=1, keepdims=True)
    return np.sqrt((r - 1.0) / r * ((loo_var - center) ** 2).sum(axis=1))


@dataclass
class EnsembleMoments:
    t_ms: np.ndarray
    n_traj: int
    rescaled: bool
    means: dict = field(default_factory=dict)
    variances: dict = field(default_factory=dict)
    var_stderr: dict = field(default_factory=dict)
    max_energy_drift: float = 0.0
    max_spin_drift: float = 0.0


def evolve_ensemble(params: ModelParams, recipe: WignerRecipe, n_traj: int,
                    t_eval: np.ndarray, seed: int,
                    rescaled: bool | None = None, sign: int = +1,
                    rtol: float = classical.DEFAULT_RTOL,
                    atol: float = classical.DEFAULT_ATOL) -> EnsembleMoments:
    """Sample, integrate, and reduce an ensemble to moment time series.

    Per-trajectory energy and spin-norm conservation is enforced; a breach
    invalidates the run (raises RuntimeError) rather than degrading stats.
    """
    if rescaled is None:
        rescaled = use_rescaled(params)
    t_eval = np.asarray(t_eval, dtype=float)
    x0 = sample_initial(params, recipe, n_traj, seed, rescaled)
    traj = classical.integrate(x0, params, t_eval, sign=sign,
                               rescaled=rescaled, rtol=rtol, atol=atol)

    span = max(t_eval[-1] - t_eval[0], 1e-9)
    tol = CONSERVATION_TOL_PER_10MS * max(1.0, span / 10.0)
    e = classical.energy(traj, params, rescaled)
    e_char = float(np.mean(np.abs(e[0]))) + 1e-12
    e_scale = np.maximum(np.abs(e[0]), e_char)
    e_drift = float((np.abs(e - e[0]) / e_scale).max())
    s = classical.spin_norm(traj)
    s_drift = float((np.abs(s - s[0]) / s[0]).max())
    if e_drift > tol or s_drift > tol:
        raise RuntimeError(
            f"conservation breach: energy drift {e_drift:.2e}, "
            f"spin-norm drift {s_drift:.2e} exceed {tol:.2e}")

    out = EnsembleMoments(t_ms=t_eval, n_traj=n_traj, rescaled=rescaled,
                          max_energy_drift=e_drift, max_spin_drift=s_drift)
    for name, fn in _observables(params, rescaled).items():
        vals = fn(traj)  # (nt, R)
        out.means[name] = vals.mean(axis=1)
        out.variances[name] = vals.var(axis=1, ddof=1)
        out.var_stderr[name] = _jackknife_var_stderr(vals)
    return out


def extract_exponents(moments: EnsembleMoments,
                      policy: FitWindowPolicy = FitWindowPolicy()) -> dict[str, ExponentFit]:
    """Exponential rates of the variance series that admit a growth window."""
    from .propagate import NoExponentialWindow
    fits: dict[str, ExponentFit] = {}
    for name, series in moments.variances.items():
        try:
            fits[name] = extract_lambda_q(moments.t_ms, series, policy)
        except NoExponentialWindow:
            continue
    return fits
