"""Spectral statistics and long-time ensembles.

Level statistics are resolved per conserved-parity sector and split at the
critical energy E_c = -w_B N/2, where the excited-state structure changes.
Only cutoff-converged eigenstates enter (tail population below threshold in
the top Fock rows).  Spacing distributions are compared against the Wigner
surmise P(s) = (pi s / 2) exp(-pi s^2 / 4) and the Poisson law exp(-s) by
Kolmogorov-Smirnov distance; the gap ratio <r> needs no unfolding and is
benchmarked against references computed from synthetic ensembles, never
hard-coded constants.

Long-time behavior is characterized by the diagonal ensemble of an initial
state, a temperature-matched thermal ensemble (beta solved so <H>_beta equals
the state's energy, including the negative-beta branch), and finite-window
time averages of observable distributions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize
import scipy.stats

from .mqc import partial_trace_spins, renyi2
from .model import ModelParams, parity_matrix, spin_matrices
from .propagate import EigenSystem, evolve_batch


def wigner_pdf(s):
    s = np.asarray(s, dtype=float)
    return 0.5 * np.pi * s * np.exp(-0.25 * np.pi * s**2)


def wigner_cdf(s):
    s = np.asarray(s, dtype=float)
    return 1.0 - np.exp(-0.25 * np.pi * s**2)


def poisson_pdf(s):
    return np.exp(-np.asarray(s, dtype=float))


def poisson_cdf(s):
    return 1.0 - np.exp(-np.asarray(s, dtype=float))


def _apply_parity(columns: np.ndarray, params: ModelParams) -> np.ndarray:
    """Pi @ columns through the factor structure, no full-space matrix."""
    sx, _, _ = spin_matrices(params.n_spins)
    w, v = np.linalg.eigh(sx)
    signs = np.where(np.round(w + 0.5 * params.n_spins).astype(int) % 2,
                     -1.0, 1.0)
    pi_spin = (v.real * signs) @ v.real.T
    fock_signs = np.where(np.arange(params.fock_dim) % 2, -1.0, 1.0)
    vec = columns.reshape(params.fock_dim, params.spin_dim, -1)
    transformed = np.einsum("ms,nsk->nmk", pi_spin, vec)
    transformed *= fock_signs[:, None, None]
    return transformed.reshape(columns.shape)


def parity_expectations(eig: EigenSystem, params: ModelParams) -> np.ndarray:
    """<v_k| Pi |v_k> per eigenstate, applied through the factor structure."""
    transformed = _apply_parity(eig.vectors, params)
    return np.einsum("dk,dk->k", eig.vectors.conj(), transformed).real


def resolved_parities(eig: EigenSystem, params: ModelParams,
                      ladder_tol: float = 1e-6) -> np.ndarray:
    """Parity labels with degenerate multiplets rotated onto the +-1 ladder.

    Below the critical energy, opposite-parity levels pair up into doublets
    split only at machine precision, so the eigensolver hands back arbitrary
    mixtures with <Pi> anywhere in (-1, 1).  Each cluster of nearly equal
    energies containing off-ladder states is re-diagonalized in the parity
    operator restricted to its span, which is exact because Pi commutes with
    the Hamiltonian on that subspace.
    """
    par = parity_expectations(eig, params)
    off = np.abs(np.abs(par) - 1.0) > ladder_tol
    if not off.any():
        return par
    e = eig.energies
    scale = max(np.abs(e).max(), 1.0)
    boundaries = np.nonzero(np.diff(e) > 1e-10 * scale)[0]
    starts = np.concatenate([[0], boundaries + 1])
    ends = np.concatenate([boundaries + 1, [e.size]])
    out = par.copy()
    for lo, hi in zip(starts, ends):
        if hi - lo < 2 or not off[lo:hi].any():
            continue
        block = eig.vectors[:, lo:hi]
        small = block.T @ _apply_parity(block, params)
        out[lo:hi] = np.linalg.eigvalsh(0.5 * (small + small.T))
    residual = np.abs(np.abs(out) - 1.0).max()
    if residual > ladder_tol:
        raise RuntimeError(
            f"parity labels off the +-1 ladder by {residual:.2e} even after "
            "degenerate-cluster resolution")
    return out


def converged_mask(eig: EigenSystem, params: ModelParams,
                   tail_threshold: float = 1e-6, rows: int = 2) -> np.ndarray:
    """Eigenstates whose top Fock rows hold less than tail_threshold weight."""
    vec = eig.vectors.reshape(params.fock_dim, params.spin_dim, eig.dim)
    tail = (np.abs(vec[-rows:]) ** 2).sum(axis=(0, 1))
    return tail < tail_threshold


def gap_ratios(levels: np.ndarray) -> np.ndarray:
    d = np.diff(np.sort(levels))
    lo = np.minimum(d[:-1], d[1:])
    hi = np.maximum(d[:-1], d[1:])
    good = hi > 0
    return lo[good] / hi[good]


@dataclass
class WindowStats:
    window: str
    parity: str
    n_levels: int
    ok: bool
    mean_r: float
    ks_wigner: float
    ks_poisson: float
    spacings: np.ndarray


def _unfolded_spacings(levels: np.ndarray, degree: int) -> np.ndarray:
    counts = np.arange(1, len(levels) + 1, dtype=float) - 0.5
    coeff = np.polyfit(levels, counts, degree)
    unfolded = np.polyval(coeff, levels)
    s = np.diff(unfolded)
    s = s[s > 0]
    return s / s.mean()


def level_statistics(eig: EigenSystem, params: ModelParams,
                     resolve_parity: bool = True, unfold_degree: int = 7,
                     trim_fraction: float = 0.05,
                     tail_threshold: float = 1e-6,
                     min_levels: int = 50) -> list[WindowStats]:
    """Spacing statistics per energy window (and parity sector).

    Windows split at the critical energy.  Windows with fewer than
    min_levels converged levels are returned flagged not-ok with nan
    statistics rather than dropped, so callers see what was skipped.
    """
    keep = converged_mask(eig, params, tail_threshold)
    energies = eig.energies[keep]
    if resolve_parity:
        par = resolved_parities(eig, params)[keep]
        sectors = [("+", par > 0), ("-", par < 0)]
    else:
        sectors = [("all", np.ones(energies.size, dtype=bool))]

    e_c = params.critical_energy
    windows = [("below", energies < e_c), ("above", energies >= e_c)]
    out: list[WindowStats] = []
    for wname, wmask in windows:
        for pname, pmask in sectors:
            lv = np.sort(energies[wmask & pmask])
            n = lv.size
            if n < max(min_levels, unfold_degree + 3):
                out.append(WindowStats(window=wname, parity=pname, n_levels=n,
                                       ok=False, mean_r=np.nan,
                                       ks_wigner=np.nan, ks_poisson=np.nan,
                                       spacings=np.empty(0)))
                continue
            k = int(np.floor(trim_fraction * n))
            trimmed = lv[k:n - k] if k > 0 else lv
            s = _unfolded_spacings(trimmed, unfold_degree)
            r = gap_ratios(trimmed)
            ks_w = scipy.stats.kstest(s, wigner_cdf).statistic
            ks_p = scipy.stats.kstest(s, poisson_cdf).statistic
            out.append(WindowStats(window=wname, parity=pname,
                                   n_levels=int(trimmed.size), ok=True,
                                   mean_r=float(r.mean()),
                                   ks_wigner=float(ks_w),
                                   ks_poisson=float(ks_p), spacings=s))
    return out


def goe_reference_mean_r(n_matrices: int = 200, dim: int = 500,
                         seed: int = 99) -> float:
    """<r> of the Gaussian orthogonal ensemble, from synthetic matrices.

    Uses the central half of each spectrum to stay in the bulk.
    """
    rng = np.random.default_rng(seed)
    vals = []
    lo, hi = dim // 4, 3 * dim // 4
    for _ in range(n_matrices):
        a = rng.standard_normal((dim, dim))
        lv = np.linalg.eigvalsh(a + a.T)[lo:hi]
        vals.append(gap_ratios(lv))
    return float(np.concatenate(vals).mean())


def poisson_reference_mean_r(n_spectra: int = 200, n_levels: int = 500,
                             seed: int = 100) -> float:
    """<r> of uncorrelated spectra (iid levels, sorted)."""
    rng = np.random.default_rng(seed)
    vals = [gap_ratios(np.sort(rng.uniform(0.0, 1.0, n_levels)))
            for _ in range(n_spectra)]
    return float(np.concatenate(vals).mean())


# ---------------------------------------------------------------------------
# ensembles


def weighted_spin_rho(eig: EigenSystem, weights: np.ndarray,
                      params: ModelParams) -> np.ndarray:
    """Boson-traced spin density matrix of sum_k w_k |E_k><E_k|.

    Accumulates Fock-row by Fock-row so no full-size copy of the eigenvector
    matrix is made.
    """
    vec = eig.vectors.reshape(params.fock_dim, params.spin_dim, eig.dim)
    rho = np.zeros((params.spin_dim, params.spin_dim))
    for n in range(params.fock_dim):
        block = vec[n]
        rho += (block * weights) @ block.T
    return rho


def weighted_distributions(eig: EigenSystem, weights: np.ndarray,
                           params: ModelParams):
    """(P(m), P(n)) marginals of the weighted eigenstate mixture."""
    vec = eig.vectors.reshape(params.fock_dim, params.spin_dim, eig.dim)
    probs = vec**2 if not np.iscomplexobj(vec) else np.abs(vec) ** 2
    p_nm = probs @ weights
    return p_nm.sum(axis=0), p_nm.sum(axis=1)


@dataclass
class ThermalEnsemble:
    beta: float
    weights: np.ndarray
    target_energy: float
    residual: float
    negative_branch: bool


def thermal_weights(energies: np.ndarray, beta: float) -> np.ndarray:
    ref = energies.min() if beta >= 0 else energies.max()
    w = np.exp(-beta * (energies - ref))
    return w / w.sum()


def thermal_ensemble(eig: EigenSystem, target_energy: float,
                     beta_limit: float = 1e4) -> ThermalEnsemble:
    """Canonical ensemble whose mean energy matches the target.

    <H>_beta is monotone decreasing in beta, so the root is bracketed and
    solved with Brent's method.  Targets above the infinite-temperature mean
    land on the negative-beta branch, reported explicitly.
    """
    e = eig.energies
    if not (e.min() < target_energy < e.max()):
        raise ValueError(
            f"target energy {target_energy:.6g} outside the spectrum "
            f"({e.min():.6g}, {e.max():.6g})")

    def mean_energy(beta):
        return float(thermal_weights(e, beta) @ e)

    def objective(beta):
        return mean_energy(beta) - target_energy

    negative = target_energy > mean_energy(0.0)
    lo, hi = (0.0, 1e-6) if not negative else (-1e-6, 0.0)
    # expand the nonzero end until the sign flips
    for _ in range(200):
        if not negative:
            if objective(hi) < 0.0:
                break
            hi *= 2.0
            if hi > beta_limit:
                raise RuntimeError("thermal bracket exceeded beta_limit")
        else:
            if objective(lo) > 0.0:
                break
            lo *= 2.0
            if lo < -beta_limit:
                raise RuntimeError("thermal bracket exceeded beta_limit")
    beta = scipy.optimize.brentq(objective, lo, hi, xtol=1e-14, rtol=1e-14)
    w = thermal_weights(e, beta)
    return ThermalEnsemble(beta=float(beta), weights=w,
                           target_energy=float(target_energy),
                           residual=float(abs(w @ e - target_energy)),
                           negative_branch=bool(negative))


def diagonal_ensemble(eig: EigenSystem, state: np.ndarray) -> np.ndarray:
    """Dephased long-time weights |<E_k|psi>|^2."""
    c = eig.coefficients(state)
    return np.abs(c) ** 2


def ensemble_subsystem_renyi(eig: EigenSystem, weights: np.ndarray,
                             params: ModelParams, l_a_values) -> dict[int, float]:
    """Renyi-2 entropy of L_A ions in the weighted eigenstate mixture."""
    rho_spin = weighted_spin_rho(eig, weights, params)
    return {int(l): renyi2(partial_trace_spins(rho_spin, params.n_spins, int(l)))
            for l in l_a_values}


def time_averaged_distributions(eig: EigenSystem, state: np.ndarray,
                                params: ModelParams, window: tuple[float, float],
                                n_times: int = 121):
    """(P(m), P(n)) averaged over a uniform time grid inside the window."""
    grid = np.linspace(window[0], window[1], n_times)
    states = evolve_batch(eig, state, grid)
    probs = (np.abs(states) ** 2).reshape(params.fock_dim, params.spin_dim,
                                          n_times)
    p_nm = probs.mean(axis=2)
    return p_nm.sum(axis=0), p_nm.sum(axis=1)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())
