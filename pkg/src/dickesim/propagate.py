"""Exact unitary dynamics and echo-fidelity diagnostics.

Everything runs through one dense eigendecomposition per parameter set.  The
Hamiltonian is real symmetric in the product basis, so the eigenbasis is kept
in float64 and complex phases are applied to expansion coefficients; on a
single core this is several times faster than complex diagonalization and
halves the memory.

The echo fidelity for a Hermitian generator G and perturbation angle dphi is

    F_G(t) = |<psi0| e^{+iHt} e^{i dphi G} e^{-iHt} |psi0>|^2 ,

evaluated literally as forward evolution, factor-space rotation, backward
evolution, overlap.  For dphi * ||G|| << 1,  1 - F ~= dphi^2 var[G](t), and
4 var[G] is the quantum Fisher information of the pure evolved state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.stats

from .model import Generator, ModelParams, check_fock_tail

HERMITICITY_TOL = 1e-12


class NoExponentialWindow(RuntimeError):
    """The series never develops the requested exponential-growth window."""


@dataclass
class EigenSystem:
    """Spectral decomposition H = V diag(E) V^dag with a fixed phase gauge."""

    energies: np.ndarray
    vectors: np.ndarray
    params: ModelParams | None = None

    @property
    def dim(self) -> int:
        return self.energies.size

    def coefficients(self, state: np.ndarray) -> np.ndarray:
        """Expansion coefficients V^dag |psi>."""
        return _left_apply(self.vectors.conj().T if np.iscomplexobj(self.vectors)
                           else self.vectors.T, state)

    def from_coefficients(self, coeffs: np.ndarray) -> np.ndarray:
        return _left_apply(self.vectors, coeffs)

    def reconstruct(self) -> np.ndarray:
        v = self.vectors
        return (v * self.energies) @ (v.conj().T if np.iscomplexobj(v) else v.T)


def _left_apply(mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """mat @ vec without promoting a real mat to complex."""
    if np.iscomplexobj(vec) and not np.iscomplexobj(mat):
        return mat @ vec.real + 1j * (mat @ vec.imag)
    return mat @ vec


def diagonalize(h: np.ndarray, params: ModelParams | None = None,
                overwrite: bool = False) -> EigenSystem:
    """Dense eigendecomposition with Hermiticity check and sign gauge.

    The gauge makes each eigenvector's largest-magnitude component real
    positive, so repeated runs produce identical vectors.
    """
    h = np.asarray(h)
    deviation = np.abs(h - h.conj().T).max()
    if deviation > HERMITICITY_TOL:
        raise ValueError(f"matrix is not Hermitian: max deviation {deviation:.3e}")
    if np.iscomplexobj(h) and np.abs(h.imag).max() <= HERMITICITY_TOL:
        h = np.ascontiguousarray(h.real)
        overwrite = True
    energies, vectors = scipy.linalg.eigh(h, overwrite_a=overwrite,
                                          check_finite=False)
    idx = np.argmax(np.abs(vectors), axis=0)
    lead = vectors[idx, np.arange(vectors.shape[1])]
    if np.iscomplexobj(vectors):
        vectors *= np.where(np.abs(lead) > 0, np.conj(lead) / np.abs(lead), 1.0)
    else:
        vectors *= np.where(lead < 0, -1.0, 1.0)
    return EigenSystem(energies=energies, vectors=vectors, params=params)


def diagonalize_model(params: ModelParams) -> EigenSystem:
    from .model import build_hamiltonian
    return diagonalize(build_hamiltonian(params), params, overwrite=True)


def evolve(eig: EigenSystem, state: np.ndarray, t: float) -> np.ndarray:
    """e^{-iHt} |psi> for a single time (ms)."""
    c = eig.coefficients(state)
    return eig.from_coefficients(np.exp(-1j * eig.energies * t) * c)


def evolve_batch(eig: EigenSystem, state: np.ndarray,
                 t_grid: np.ndarray) -> np.ndarray:
    """Evolved states at every grid time, shape (dim, n_times)."""
    c = eig.coefficients(state)
    phases = np.exp(-1j * np.outer(eig.energies, np.asarray(t_grid)))
    coeffs = c[:, None] * phases
    v = eig.vectors
    if np.iscomplexobj(v):
        return v @ coeffs
    return v @ coeffs.real + 1j * (v @ coeffs.imag)


def expectation_series(eig: EigenSystem, state: np.ndarray, gen: Generator,
                       t_grid: np.ndarray, params: ModelParams | None = None):
    """(<G>(t), var[G](t)) along the evolution."""
    p = params or eig.params
    if p is None:
        raise ValueError("need ModelParams to reshape states")
    states = evolve_batch(eig, state, t_grid)
    means = np.empty(len(t_grid))
    variances = np.empty(len(t_grid))
    for i in range(len(t_grid)):
        tensor = states[:, i].reshape(p.fock_dim, p.spin_dim)
        m1, m2 = gen.moments(tensor)
        means[i] = m1
        variances[i] = m2 - m1 * m1
    return means, variances


@dataclass
class FotocSeries:
    """Echo-fidelity time series and the matching generator variance."""

    t_ms: np.ndarray
    fidelity: np.ndarray
    one_minus_f: np.ndarray
    var_g: np.ndarray
    mean_g: np.ndarray
    generator: str
    dphi: float
    max_fock_tail: float = 0.0

    @property
    def growth(self) -> np.ndarray:
        """(1 - F) / dphi^2, the variance proxy."""
        return self.one_minus_f / self.dphi**2

    @property
    def qfi(self) -> np.ndarray:
        """Quantum Fisher information 4 var[G] of the pure evolved state."""
        return 4.0 * self.var_g


def fotoc_series(eig: EigenSystem, state: np.ndarray, gen: Generator,
                 dphi: float, t_grid: np.ndarray,
                 params: ModelParams | None = None,
                 tail_threshold: float | None = 1e-8) -> FotocSeries:
    """Echo fidelity F_G(t, dphi) plus var[G](t) on a shared time grid.

    tail_threshold, when set, applies the evolved-state Fock-tail check and
    raises CutoffError on breach.
    """
    p = params or eig.params
    if p is None:
        raise ValueError("need ModelParams to reshape states")
    t_grid = np.asarray(t_grid, dtype=float)
    c0 = eig.coefficients(state)
    phases = np.exp(-1j * np.outer(eig.energies, t_grid))
    states = eig.vectors @ (c0[:, None] * phases) if np.iscomplexobj(eig.vectors) \
        else _real_matmul(eig.vectors, c0[:, None] * phases)

    means = np.empty(len(t_grid))
    variances = np.empty(len(t_grid))
    rotated = np.empty_like(states)
    for i in range(len(t_grid)):
        tensor = states[:, i].reshape(p.fock_dim, p.spin_dim)
        m1, m2 = gen.moments(tensor)
        means[i] = m1
        variances[i] = m2 - m1 * m1
        rotated[:, i] = gen.rotate(tensor, dphi).ravel()

    max_tail = 0.0
    if tail_threshold is not None:
        max_tail = check_fock_tail(states.T, p, threshold=tail_threshold)

    # backward evolution folded into the overlap: <psi0| V e^{+iEt} V^T |rot>
    v = eig.vectors
    w = v.conj().T @ rotated if np.iscomplexobj(v) else _real_matmul(v.T, rotated)
    overlaps = np.einsum("k,kt,kt->t", np.conj(c0), np.conj(phases), w)
    fid = np.abs(overlaps) ** 2
    return FotocSeries(t_ms=t_grid, fidelity=fid, one_minus_f=1.0 - fid,
                       var_g=variances, mean_g=means, generator=gen.label,
                       dphi=dphi, max_fock_tail=max_tail)


def _real_matmul(mat: np.ndarray, arr: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(arr):
        return mat @ arr.real + 1j * (mat @ arr.imag)
    return mat @ arr


@dataclass(frozen=True)
class FitWindowPolicy:
    """Growth-window selection for exponent fits.

    The window opens where the series exceeds onset_factor times its initial
    value and closes where it reaches saturation_fraction of its first
    maximum.  A fit is attempted only when the series grows by at least
    min_decades between onset and that maximum.
    """

    onset_factor: float = 10.0
    saturation_fraction: float = 0.1
    min_decades: float = 1.5
    min_points: int = 2


@dataclass
class ExponentFit:
    rate: float
    ci95: float | None
    intercept: float
    window: tuple[float, float]
    indices: tuple[int, int]
    n_points: int
    r_squared: float


def _first_local_max(y: np.ndarray, start: int = 0,
                     min_height: float = 0.0) -> int | None:
    for j in range(max(start, 1), len(y) - 1):
        if (y[j] >= y[j - 1] and y[j] >= y[j + 1] and y[j] > 0
                and y[j] >= min_height):
            return j
    return None


def _growth_window(t: np.ndarray, y: np.ndarray, policy: FitWindowPolicy):
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("series must be non-negative")
    base = y[0]
    if base <= 0:
        positive = np.nonzero(y > 0)[0]
        if positive.size == 0:
            raise NoExponentialWindow("series is identically zero")
        base = y[positive[0]]
    onset_level = policy.onset_factor * base

    # oscillations modulate the exponential rise, so small wiggle maxima do
    # not count as the turnover; only a maximum comparable to the global one
    floor = max(onset_level, 0.5 * float(y.max()))
    jmax = _first_local_max(y, min_height=floor)
    saturated = jmax is not None
    if jmax is None:
        jmax = len(y) - 1
    peak = y[jmax]
    if peak <= 0 or onset_level <= 0:
        raise NoExponentialWindow("no positive growth on the grid")
    decades = np.log10(peak / onset_level)
    if decades < policy.min_decades:
        raise NoExponentialWindow(
            f"only {decades:.2f} decades between onset and first maximum "
            f"(need {policy.min_decades})")
    above = np.nonzero(y[:jmax + 1] >= onset_level)[0]
    i0 = int(above[0])
    sat = np.nonzero(y[:jmax + 1] >= policy.saturation_fraction * peak)[0]
    i1 = int(sat[0]) if sat.size else jmax
    if i1 <= i0:
        i1 = min(i0 + 1, jmax)
    return i0, i1, jmax, saturated


def extract_lambda_q(t: np.ndarray, y: np.ndarray,
                     policy: FitWindowPolicy = FitWindowPolicy()) -> ExponentFit:
    """Exponential rate of a growth series (1-F, variance, ...).

    Fits log(y) linearly in t on the growth window.  Raises
    NoExponentialWindow when the policy finds no usable window.  The 95% CI
    is reported only for windows with >= 4 points.
    """
    t = np.asarray(t, dtype=float)
    i0, i1, _, _ = _growth_window(t, y, policy)
    n = i1 - i0 + 1
    if n < policy.min_points:
        raise NoExponentialWindow(f"window has {n} points")
    ts = t[i0:i1 + 1]
    ys = np.log(np.asarray(y, dtype=float)[i0:i1 + 1])
    if n == 2:
        rate = (ys[1] - ys[0]) / (ts[1] - ts[0])
        return ExponentFit(rate=rate, ci95=None, intercept=ys[0] - rate * ts[0],
                           window=(ts[0], ts[-1]), indices=(i0, i1),
                           n_points=n, r_squared=1.0)
    res = scipy.stats.linregress(ts, ys)
    ci = None
    if n >= 4:
        ci = float(scipy.stats.t.ppf(0.975, n - 2) * res.stderr)
    return ExponentFit(rate=float(res.slope), ci95=ci,
                       intercept=float(res.intercept),
                       window=(float(ts[0]), float(ts[-1])),
                       indices=(i0, i1), n_points=n,
                       r_squared=float(res.rvalue**2))


@dataclass
class ScramblingTime:
    t_star: float
    index: int
    saturated: bool


def scrambling_time(t: np.ndarray, y: np.ndarray,
                    level_fraction: float = 0.5,
                    level: float | None = None) -> ScramblingTime:
    """Interpolated time at which the series first reaches a fixed fraction
    of its saturation plateau.

    The plateau is the median of the series from its first genuine turnover
    (a local maximum at least half the global maximum) to the end of the
    grid.  A fixed-fraction crossing shifts smoothly when the waveform
    changes, unlike the location of any particular oscillation peak riding
    the plateau, and for an exponential rise it carries the same dependence
    on the saturation level.  Returns the end of the grid with
    saturated=False when the series never turns over.

    When `level` is given it replaces the measured plateau fraction as the
    crossing target.  A truncated simulation can clip the plateau of an
    unbounded observable while leaving the rise intact, so callers that know
    the physical saturation scale (for the quadrature variance it grows
    proportionally to the spin number) pass it here and the crossing stays
    comparable across system sizes.  saturated=False then means the series
    never reaches the level.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if level is None:
        floor = 0.5 * float(y.max())
        j = _first_local_max(y, min_height=floor)
        if j is None:
            return ScramblingTime(t_star=float(t[-1]), index=len(t) - 1,
                                  saturated=False)
        level = level_fraction * float(np.median(y[j:]))
    elif not np.any(y >= level):
        return ScramblingTime(t_star=float(t[-1]), index=len(t) - 1,
                              saturated=False)
    k = int(np.nonzero(y >= level)[0][0])
    if k == 0:
        return ScramblingTime(t_star=float(t[0]), index=0, saturated=True)
    lo, hi = float(y[k - 1]), float(y[k])
    if lo > 0.0 and hi > lo:
        frac = (np.log(level) - np.log(lo)) / (np.log(hi) - np.log(lo))
    elif hi > lo:
        frac = (level - lo) / (hi - lo)
    else:
        frac = 1.0
    t_star = float(t[k - 1] + frac * (t[k] - t[k - 1]))
    return ScramblingTime(t_star=t_star, index=k, saturated=True)


def ehrenfest_fit(n_values, t_stars, lambda_q: float):
    """One-parameter fit t* = a0 + log(N)/lambda_q.

    Returns (a0, r_squared) with a0 the least-squares offset for the fixed
    rate lambda_q.
    """
    n_values = np.asarray(n_values, dtype=float)
    t_stars = np.asarray(t_stars, dtype=float)
    pred = np.log(n_values) / lambda_q
    a0 = float(np.mean(t_stars - pred))
    resid = t_stars - (a0 + pred)
    ss_tot = float(np.sum((t_stars - t_stars.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
    return a0, r2
