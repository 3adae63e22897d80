"""Multiple-quantum coherences and entropy estimators built from them.

For a generator G with integer-spaced spectrum, a density matrix splits into
coherence blocks rho_M connecting eigenvalue manifolds offset by M, with
intensities I_M = Tr[rho_{-M} rho_M] = ||rho_M||_F^2.  The intensities are
the Fourier coefficients of the rotation overlap F_G(phi), which is how an
interferometric experiment reads them out.

For a pure bipartite state written as an amplitude matrix c[n, m] (boson row,
spin column in the rotated frame) the boson purity obeys the exact identity

    Tr[rho_ph^2] = I_0^{S_r} + I_0^{n} - D + C

with D the sum of squared joint populations and C the doubly-off-diagonal
cross term.  Dropping D and C gives the measurable entropy estimators
S_F^{S_r} = -log I_0^{S_r} and S_F^{S_r,n} = -log(I_0^{S_r} + I_0^{n}).
The same algebra applies verbatim to a spin subsystem of L_A ions after a
Clebsch-Gordan split of the collective spin, giving a subsystem-entropy
estimator from zero-offset intensities alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln

from .model import Generator, ModelParams, spin_rotation, state_tensor
from .propagate import EigenSystem, evolve

INTEGER_LADDER_TOL = 1e-9


class UnsupportedGeneratorError(ValueError):
    """Generator spectrum is not an integer ladder; no coherence blocks."""


@dataclass
class MqcSpectrum:
    offsets: np.ndarray
    intensities: np.ndarray
    generator: str
    method: str

    def intensity(self, m: int) -> float:
        idx = np.nonzero(self.offsets == m)[0]
        return float(self.intensities[idx[0]]) if idx.size else 0.0

    @property
    def i0(self) -> float:
        return self.intensity(0)

    @property
    def total(self) -> float:
        return float(self.intensities.sum())


def _integer_ladder(evals: np.ndarray) -> np.ndarray:
    shifted = evals - evals.min()
    ints = np.round(shifted).astype(int)
    if np.abs(shifted - ints).max() > INTEGER_LADDER_TOL:
        raise UnsupportedGeneratorError(
            "generator eigenvalues are not integer-spaced; "
            "coherence blocks are undefined")
    return ints


def block_decompose(rho: np.ndarray, gen: Generator,
                    params: ModelParams) -> MqcSpectrum:
    """Coherence-block intensities of a density matrix, any purity.

    Transforms rho into the generator eigenbasis and accumulates squared
    Frobenius norms per eigenvalue offset.  Dense in the full space; meant
    for moderate dimensions and as the reference implementation.
    """
    if rho.shape != (params.dim, params.dim):
        raise ValueError(f"rho has shape {rho.shape}, expected square dim {params.dim}")
    ladder = _integer_ladder(gen.eigenvalues)
    w, v = np.linalg.eigh(gen.mat)
    u = np.kron(v, np.eye(params.spin_dim)) if gen.space == "boson" \
        else np.kron(np.eye(params.fock_dim), v)
    rot = u.conj().T @ rho @ u
    labels = np.kron(ladder, np.ones(params.spin_dim, dtype=int)) if gen.space == "boson" \
        else np.kron(np.ones(params.fock_dim, dtype=int), ladder)
    diff = labels[:, None] - labels[None, :]
    m_max = int(ladder.max())
    offsets = np.arange(-m_max, m_max + 1)
    weights = np.abs(rot) ** 2
    intensities = np.array([weights[diff == m].sum() for m in offsets])
    return MqcSpectrum(offsets=offsets, intensities=intensities,
                       generator=gen.label, method="blocks")


def rotated_tensor(state: np.ndarray, params: ModelParams, theta: float,
                   phi: float) -> np.ndarray:
    """Amplitude matrix in the frame whose z axis is the (theta, phi) axis."""
    tensor = state_tensor(state, params)
    r = spin_rotation(params.n_spins, theta, phi)
    return tensor @ np.conj(r)


def mqc_pure_spin(state: np.ndarray, params: ModelParams, theta: float,
                  phi: float) -> MqcSpectrum:
    """Spin-axis intensities of a pure state via marginal autocorrelation.

    For a pure state the M-block Frobenius norm reduces to
    sum_m q(m) q(m+M) with q the spin-population marginal along the axis.
    """
    q = (np.abs(rotated_tensor(state, params, theta, phi)) ** 2).sum(axis=0)
    intensities = np.correlate(q, q, mode="full")
    offsets = np.arange(-params.n_spins, params.n_spins + 1)
    return MqcSpectrum(offsets=offsets, intensities=intensities,
                       generator=f"Sr({theta:.4f},{phi:.4f})", method="pure-marginal")


def mqc_pure_boson(state: np.ndarray, params: ModelParams) -> MqcSpectrum:
    """Boson-number intensities of a pure state via marginal autocorrelation."""
    p = (np.abs(state_tensor(state, params)) ** 2).sum(axis=1)
    intensities = np.correlate(p, p, mode="full")
    offsets = np.arange(-params.n_max, params.n_max + 1)
    return MqcSpectrum(offsets=offsets, intensities=intensities,
                       generator="n", method="pure-marginal")


def occupied_support(populations: np.ndarray, floor: float = 1e-12) -> int:
    """Largest index whose population exceeds the floor."""
    idx = np.nonzero(populations > floor)[0]
    return int(idx[-1]) if idx.size else 0


def intensities_via_fourier(state: np.ndarray, eig: EigenSystem,
                            gen: Generator, t: float, n_angles: int,
                            params: ModelParams | None = None) -> MqcSpectrum:
    """Intensities reconstructed from rotation overlaps, the readout protocol.

    Evolves to time t, sweeps phi over n_angles equally spaced rotation
    angles, records F_G(t, phi) = |<psi_t| e^{-i phi G} |psi_t>|^2 and
    inverts the finite Fourier series.  Refuses angle grids that alias:
    n_angles must be at least 2*M_max + 1 with M_max the largest offset the
    state can support.
    """
    p = params or eig.params
    if p is None:
        raise ValueError("need ModelParams to reshape states")
    ladder = _integer_ladder(gen.eigenvalues)
    psi_t = evolve(eig, state, t)
    tensor = psi_t.reshape(p.fock_dim, p.spin_dim)

    if gen.space == "boson":
        pops = (np.abs(tensor) ** 2).sum(axis=1)
    else:
        w, v = np.linalg.eigh(gen.mat)
        pops = (np.abs(tensor @ np.conj(v)) ** 2).sum(axis=0)
    m_max = occupied_support(pops) if gen.space == "boson" else int(ladder.max())
    needed = 2 * m_max + 1
    if n_angles < needed:
        raise ValueError(
            f"n_angles={n_angles} aliases offsets up to {m_max}; "
            f"need at least {needed}")

    angles = 2.0 * np.pi * np.arange(n_angles) / n_angles
    f = np.empty(n_angles)
    for k, ang in enumerate(angles):
        overlap = np.vdot(psi_t, gen.rotate(tensor, -ang).ravel())
        f[k] = np.abs(overlap) ** 2
    offsets = np.arange(-m_max, m_max + 1)
    phase = np.exp(1j * np.outer(offsets, angles))
    intensities = (phase @ f).real / n_angles
    imag_leak = np.abs((phase @ f).imag).max() / n_angles
    if imag_leak > 1e-8:
        raise RuntimeError(f"Fourier inversion left imaginary leakage {imag_leak:.2e}")
    return MqcSpectrum(offsets=offsets, intensities=intensities,
                       generator=gen.label, method="fourier")


# ---------------------------------------------------------------------------
# purity decomposition for pure global states


@dataclass
class PurityDecomposition:
    """Exact split of a reduced purity into measurable and dropped pieces.

    purity = i0_kept + i0_traced - d_diag + c_off holds exactly for pure
    global states; residual records the numerical identity error.
    """

    purity: float
    i0_kept: float
    i0_traced: float
    d_diag: float
    c_off: float

    @property
    def residual(self) -> float:
        return self.purity - (self.i0_kept + self.i0_traced
                              - self.d_diag + self.c_off)


def _pure_purity_split(x: np.ndarray) -> PurityDecomposition:
    """Core identity on an amplitude matrix x[kept_index, traced_index].

    i0_kept sums squared populations of the kept marginal (zero-offset block
    of a generator diagonal in the kept index), i0_traced the same for the
    traced marginal.  c_off is accumulated directly from the doubly
    off-diagonal terms, not as a residual, so the identity is testable.
    """
    probs = np.abs(x) ** 2
    kept_marginal = probs.sum(axis=1)
    traced_marginal = probs.sum(axis=0)
    svals = np.linalg.svd(x, compute_uv=False)
    purity = float(np.sum(svals**4))
    i0_kept = float(np.sum(kept_marginal**2))
    i0_traced = float(np.sum(traced_marginal**2))
    d_diag = float(np.sum(probs**2))
    overlap = x.conj().T @ x
    pair = probs.T @ probs
    cross = np.abs(overlap) ** 2 - pair
    c_off = float(cross.sum() - np.trace(cross))
    return PurityDecomposition(purity=purity, i0_kept=i0_kept,
                               i0_traced=i0_traced, d_diag=d_diag,
                               c_off=c_off)


def purity_decomposition(state: np.ndarray, params: ModelParams,
                         theta: float, phi: float) -> PurityDecomposition:
    """Boson-mode purity split for a pure global state and spin axis.

    i0_kept is the boson-number zero block I_0^n, i0_traced the spin zero
    block I_0^{S_r} along the chosen axis.
    """
    _assert_pure_shape(state, params)
    return _pure_purity_split(rotated_tensor(state, params, theta, phi))


def _assert_pure_shape(state: np.ndarray, params: ModelParams):
    if state.ndim != 1:
        raise ValueError("purity decomposition is derived for pure states; "
                         "pass a state vector")
    norm = np.linalg.norm(state)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"state norm {norm} is not 1")


@dataclass
class RenyiEstimate:
    s2_exact: float
    s_f_spin: float
    s_f_spin_boson: float
    theta: float
    phi: float
    decomposition: PurityDecomposition


def renyi_spin_phonon(state: np.ndarray, params: ModelParams,
                      theta: float | None = None, phi: float | None = None,
                      strategy: str = "max_variance") -> RenyiEstimate:
    """Exact boson Renyi-2 entropy next to its two coherence estimators.

    With no axis supplied, the axis is optimized with the given strategy.
    """
    if theta is None or phi is None:
        choice = optimize_axis(state, params, strategy=strategy)
        theta, phi = choice.theta, choice.phi
    dec = purity_decomposition(state, params, theta, phi)
    return RenyiEstimate(
        s2_exact=-np.log(dec.purity),
        s_f_spin=-np.log(dec.i0_traced),
        s_f_spin_boson=-np.log(dec.i0_traced + dec.i0_kept),
        theta=theta, phi=phi, decomposition=dec)


# ---------------------------------------------------------------------------
# rotation-axis selection


@dataclass
class AxisChoice:
    theta: float
    phi: float
    strategy: str
    score: float


def spin_moments(state: np.ndarray, params: ModelParams):
    """First moments <S_i> and the symmetrized covariance of (Sx, Sy, Sz)."""
    from .model import spin_matrices
    tensor = state_tensor(state, params)
    mats = spin_matrices(params.n_spins)
    applied = [tensor @ m.T for m in mats]
    means = np.array([np.vdot(tensor, ap).real for ap in applied])
    cov = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            cov[i, j] = np.vdot(applied[i], applied[j]).real
    cov -= np.outer(means, means)
    return means, cov


def _axis_grid(n_theta: int, n_phi: int):
    thetas = np.linspace(0.0, np.pi, n_theta)
    phis = np.linspace(0.0, 2.0 * np.pi, n_phi, endpoint=False)
    return thetas, phis


@lru_cache(maxsize=48)
def _rotation_stack(n_spins: int, n_theta: int, n_phi: int) -> np.ndarray:
    """All grid rotations for an (n_spins+1)-dim ladder, theta-major order."""
    thetas, phis = _axis_grid(n_theta, n_phi)
    dim = n_spins + 1
    stack = np.empty((n_theta * n_phi, dim, dim), dtype=complex)
    k = 0
    for th in thetas:
        for ph in phis:
            stack[k] = spin_rotation(n_spins, th, ph)
            k += 1
    stack.setflags(write=False)
    return stack


def _axis_marginals(gram: np.ndarray, rots: np.ndarray) -> np.ndarray:
    """Ladder populations along every axis, out[axis, m].

    gram is the Hermitian matrix x.T @ x.conj() of an amplitude matrix
    whose rotated column marginal is diag(R^dag gram R); the rotation of
    the row index never enters a row-summed marginal.
    """
    return np.einsum("ajm,ajm->am", rots.conj(), gram @ rots).real


def _polish_axis(captured, grid_scores: np.ndarray, thetas: np.ndarray,
                 phis: np.ndarray, refine: bool, n_seeds: int = 3):
    """Best axis for a capture functional: grid argmax, then simplex polish.

    The captured-intensity landscape of a scrambled state has angular
    features of width ~ 1/sqrt(spins), comparable to the grid pitch, so
    the top grid points only seed a local Nelder-Mead search.  Returns
    ((theta, phi), captured value).
    """
    n_phi = len(phis)
    order = np.argsort(grid_scores)[::-1][:n_seeds]
    best = (float(thetas[order[0] // n_phi]), float(phis[order[0] % n_phi]))
    best_val = float(grid_scores[order[0]])
    if not refine:
        return best, best_val
    for flat in order:
        x0 = np.array([thetas[flat // n_phi], phis[flat % n_phi]])
        res = minimize(lambda x: -captured(x), x0, method="Nelder-Mead",
                       options={"xatol": 5e-4, "fatol": 1e-13,
                                "maxiter": 120})
        if -res.fun > best_val:
            best_val = float(-res.fun)
            best = (float(res.x[0]), float(res.x[1]))
    return best, best_val


def optimize_axis(state: np.ndarray, params: ModelParams,
                  strategy: str = "max_variance", n_theta: int = 24,
                  n_phi: int = 48, refine: bool = True) -> AxisChoice:
    """Pick the spin rotation axis on a (theta, phi) grid.

    max_variance maximizes var(S_r), evaluated through the 3x3 spin
    covariance so the cost per grid point is constant; it is the
    measurement-side proxy (no access to the traced-out mode).
    max_capture maximizes the retained zero-order intensity I_0(S_r),
    i.e. the purity fraction the estimator keeps; equivalently it
    minimizes the dropped diagonal and coherence terms.  It needs the
    ladder populations but never the exact entropy, so it remains an
    experimentally implementable rule; with refine the grid optimum
    seeds a local simplex search (the landscape has features on the
    1/sqrt(N) scale the grid barely resolves).  Its score is the total
    captured intensity I_0(S_r) + I_0(n).
    min_residual minimizes |S_F^{S_r,n} - S2_exact| on the grid; it peeks
    at the exact entropy, so it is only available simulation-side.  Ties
    break toward the lexicographically first (theta, phi) grid point.
    """
    thetas, phis = _axis_grid(n_theta, n_phi)
    if strategy == "max_capture":
        tensor = state_tensor(state, params)
        i0_kept = float(np.sum((np.abs(tensor) ** 2).sum(axis=1) ** 2))
        gram = tensor.T @ tensor.conj()
        rots = _rotation_stack(params.n_spins, n_theta, n_phi)
        scores = (_axis_marginals(gram, rots) ** 2).sum(axis=1)

        def captured(x):
            rot = spin_rotation(params.n_spins, x[0], x[1])
            pops = np.einsum("jm,jk,km->m", rot.conj(), gram, rot).real
            return float((pops**2).sum())

        (theta, phi), cap = _polish_axis(captured, scores, thetas, phis,
                                         refine)
        return AxisChoice(theta=theta, phi=phi, strategy=strategy,
                          score=cap + i0_kept)
    if strategy == "max_variance":
        _, cov = spin_moments(state, params)
        st, ct = np.sin(thetas), np.cos(thetas)
        axes = np.empty((n_theta, n_phi, 3))
        axes[..., 0] = st[:, None] * np.cos(phis)[None, :]
        axes[..., 1] = st[:, None] * np.sin(phis)[None, :]
        axes[..., 2] = ct[:, None]
        score = np.einsum("tpi,ij,tpj->tp", axes, cov, axes)
        flat = int(np.argmax(score))
        i, j = divmod(flat, n_phi)
        return AxisChoice(theta=float(thetas[i]), phi=float(phis[j]),
                          strategy=strategy, score=float(score[i, j]))
    if strategy == "min_residual":
        tensor = state_tensor(state, params)
        svals = np.linalg.svd(tensor, compute_uv=False)
        s2_exact = -np.log(float(np.sum(svals**4)))
        i0_kept = float(np.sum((np.abs(tensor) ** 2).sum(axis=1) ** 2))
        rots = _rotation_stack(params.n_spins, n_theta, n_phi)
        marg = _axis_marginals(tensor.T @ tensor.conj(), rots)
        i0_traced = (marg**2).sum(axis=1)
        err = np.abs(-np.log(i0_traced + i0_kept) - s2_exact)
        flat = int(np.argmin(err))
        i, j = divmod(flat, n_phi)
        return AxisChoice(theta=float(thetas[i]), phi=float(phis[j]),
                          strategy=strategy, score=float(err[flat]))
    raise ValueError(f"unknown strategy {strategy!r}")


# ---------------------------------------------------------------------------
# collective-spin subsystems via the stretched Clebsch-Gordan split


@lru_cache(maxsize=256)
def clebsch_stretched(n_spins: int, l_a: int) -> np.ndarray:
    """<L_A/2, m_A; L_B/2, m_B | N/2, m_A + m_B> for the maximal spins.

    Closed binomial form sqrt(C(a+b, a) C(N-a-b, L_A-a) / C(N, L_A)) with
    a, b the ladder indices on A and B, evaluated in log space so it stays
    finite for any N.
    """
    if not (1 <= l_a <= n_spins - 1):
        raise ValueError(f"l_a must be in [1, {n_spins - 1}], got {l_a}")
    l_b = n_spins - l_a
    a = np.arange(l_a + 1)[:, None]
    b = np.arange(l_b + 1)[None, :]

    def log_c(n, k):
        return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)

    log_cg2 = log_c(a + b, a) + log_c(n_spins - a - b, l_a - a) \
        - log_c(n_spins, l_a)
    return np.exp(0.5 * log_cg2)


def spin_reduced_matrix(state: np.ndarray, params: ModelParams) -> np.ndarray:
    """Spin density matrix after tracing the boson mode, (N+1)x(N+1)."""
    x = state_tensor(state, params)
    return x.T @ x.conj()


def partial_trace_spins(spin_rho: np.ndarray, n_spins: int,
                        l_a: int) -> np.ndarray:
    """Reduce a symmetric-sector spin density matrix to L_A ions.

    Valid for any (mixed) spin state supported on the S = N/2 sector; the
    result lives in the symmetric sector of the subsystem, dimension L_A+1.
    """
    if spin_rho.shape != (n_spins + 1, n_spins + 1):
        raise ValueError("spin_rho must be the (N+1)-dim symmetric-sector matrix")
    cg = clebsch_stretched(n_spins, l_a)
    rho_a = np.zeros((l_a + 1, l_a + 1), dtype=complex)
    for b in range(n_spins - l_a + 1):
        block = spin_rho[b:b + l_a + 1, b:b + l_a + 1]
        rho_a += np.outer(cg[:, b], cg[:, b]) * block
    return rho_a


def reduced_spin_state(state: np.ndarray, params: ModelParams,
                       l_a: int) -> np.ndarray:
    """rho_A for a pure global state, tracing boson and the other N-L_A ions."""
    return partial_trace_spins(spin_reduced_matrix(state, params),
                               params.n_spins, l_a)


def renyi2(rho: np.ndarray) -> float:
    return -np.log(float(np.trace(rho @ rho).real))


@dataclass
class SubsystemEstimate:
    l_a: int
    s2_exact: float
    estimator: float
    i0_subsystem: float
    i0_complement: float
    d_diag: float
    c_off: float
    theta: float
    phi: float


def _cg_split(tensor: np.ndarray, params: ModelParams,
              l_a: int) -> np.ndarray:
    """Amplitude tensor psi3[n, m_A, m_B] of the L_A / (N - L_A) ion split."""
    cg = clebsch_stretched(params.n_spins, l_a)
    l_b = params.n_spins - l_a
    psi3 = np.zeros((params.fock_dim, l_a + 1, l_b + 1), dtype=complex)
    for a in range(l_a + 1):
        psi3[:, a, :] = cg[a, :] * tensor[:, a:a + l_b + 1]
    return psi3


def subsystem_fotoc_renyi(state: np.ndarray, params: ModelParams, l_a: int,
                          theta: float, phi: float) -> SubsystemEstimate:
    """Zero-offset intensity estimator for the entropy of L_A ions.

    The state is rotated so the axis is the local quantization direction,
    split by Clebsch-Gordan into |n> x |m_A> x |m_B>, and fed through the
    purity identity with A as the kept index and (n, m_B) jointly traced.
    I_0 of rotations on A plus I_0 of joint rotations on the complement
    approximates Tr[rho_A^2]; D and C quantify the dropped terms.
    """
    psi3 = _cg_split(rotated_tensor(state, params, theta, phi), params, l_a)
    x = psi3.transpose(1, 0, 2).reshape(l_a + 1, -1)  # rows m_A, cols (n, m_B)
    dec = _pure_purity_split(x)
    return SubsystemEstimate(
        l_a=l_a,
        s2_exact=-np.log(dec.purity),
        estimator=-np.log(dec.i0_kept + dec.i0_traced),
        i0_subsystem=dec.i0_kept,
        i0_complement=dec.i0_traced,
        d_diag=dec.d_diag,
        c_off=dec.c_off,
        theta=theta, phi=phi)


def optimize_subsystem_axis(state: np.ndarray, params: ModelParams,
                            l_a: int, n_theta: int = 12,
                            n_phi: int = 24) -> AxisChoice:
    """Axis minimizing |subsystem estimator - exact S2| on a grid.

    Same rule as optimize_axis(strategy="min_residual") applied to the
    L_A-ion bipartition.  A collective rotation splits into independent
    ladder rotations on the two sides, and each side's rotation drops out
    of the other side's population marginal, so the scan only needs the
    one-sided gram matrices instead of a full purity split per axis.  The
    default grid is coarser than the global one because the complement
    marginal still carries a factor of the Fock dimension per axis.
    """
    l_b = params.n_spins - l_a
    psi3 = _cg_split(state_tensor(state, params), params, l_a)
    x = psi3.transpose(1, 0, 2).reshape(l_a + 1, -1)
    svals = np.linalg.svd(x, compute_uv=False)
    s2_exact = -np.log(float(np.sum(svals**4)))

    thetas, phis = _axis_grid(n_theta, n_phi)
    rots_a = _rotation_stack(l_a, n_theta, n_phi)
    rots_b = _rotation_stack(l_b, n_theta, n_phi)
    gram_a = np.einsum("nab,ncb->ac", psi3, psi3.conj())
    marg_a = _axis_marginals(gram_a, rots_a)
    i0_sub = (marg_a**2).sum(axis=1)

    # complement marginal P(n, m_B) = column norms of psi3[n] @ conj(R_B)
    gram_b = np.einsum("nab,nac->nbc", psi3, psi3.conj())
    n_axes = len(rots_b)
    i0_comp = np.empty(n_axes)
    chunk = max(1, int(4e7 / (params.fock_dim * (l_b + 1) ** 2 * 16)))
    for s in range(0, n_axes, chunk):
        rb = rots_b[s:s + chunk]
        w = np.matmul(gram_b[None], rb[:, None])
        pr = np.einsum("anxm,axm->anm", w, rb.conj()).real
        i0_comp[s:s + chunk] = (pr**2).sum(axis=(1, 2))

    err = np.abs(-np.log(i0_sub + i0_comp) - s2_exact)
    flat = int(np.argmin(err))
    i, j = divmod(flat, n_phi)
    return AxisChoice(theta=float(thetas[i]), phi=float(phis[j]),
                      strategy="min_residual", score=float(err[flat]))


@dataclass
class SubsystemAxesEstimate:
    l_a: int
    s2_exact: float
    estimator: float
    i0_subsystem: float
    i0_complement: float
    theta_a: float
    phi_a: float
    theta_b: float
    phi_b: float


def optimize_subsystem_axes(state: np.ndarray, params: ModelParams,
                            l_a: int, n_theta: int = 12, n_phi: int = 24,
                            refine: bool = True) -> SubsystemAxesEstimate:
    """Subsystem estimator with independently optimized side axes.

    The subsystem population marginal depends only on the axis measured
    on the L_A ions and the complement marginal only on the axis measured
    on the remaining ions, so the captured intensity splits into two
    separate two-angle maximizations; each side gets its own grid scan
    plus an optional simplex polish.  This is the capture-maximizing
    analogue of optimize_subsystem_axis, which ties both sides to one
    shared axis.
    """
    l_b = params.n_spins - l_a
    psi3 = _cg_split(state_tensor(state, params), params, l_a)
    x = psi3.transpose(1, 0, 2).reshape(l_a + 1, -1)
    svals = np.linalg.svd(x, compute_uv=False)
    s2_exact = -np.log(float(np.sum(svals**4)))
    gram_a = np.einsum("nab,ncb->ac", psi3, psi3.conj())
    gram_b = np.einsum("nab,nac->nbc", psi3, psi3.conj())
    thetas, phis = _axis_grid(n_theta, n_phi)

    def captured_a(angles):
        rot = spin_rotation(l_a, angles[0], angles[1])
        pops = np.einsum("jm,jk,km->m", rot.conj(), gram_a, rot).real
        return float((pops**2).sum())

    def captured_b(angles):
        rot = spin_rotation(l_b, angles[0], angles[1])
        pops = np.einsum("nxm,xm->nm", gram_b @ rot, rot.conj()).real
        return float((pops**2).sum())

    rots_a = _rotation_stack(l_a, n_theta, n_phi)
    scores_a = (_axis_marginals(gram_a, rots_a) ** 2).sum(axis=1)
    axis_a, cap_a = _polish_axis(captured_a, scores_a, thetas, phis, refine)

    rots_b = _rotation_stack(l_b, n_theta, n_phi)
    scores_b = np.empty(len(rots_b))
    chunk = max(1, int(4e7 / (params.fock_dim * (l_b + 1) ** 2 * 16)))
    for s in range(0, len(rots_b), chunk):
        rb = rots_b[s:s + chunk]
        w = np.matmul(gram_b[None], rb[:, None])
        pr = np.einsum("anxm,axm->anm", w, rb.conj()).real
        scores_b[s:s + chunk] = (pr**2).sum(axis=(1, 2))
    axis_b, cap_b = _polish_axis(captured_b, scores_b, thetas, phis, refine)

    return SubsystemAxesEstimate(
        l_a=l_a, s2_exact=s2_exact, estimator=-np.log(cap_a + cap_b),
        i0_subsystem=cap_a, i0_complement=cap_b,
        theta_a=axis_a[0], phi_a=axis_a[1],
        theta_b=axis_b[0], phi_b=axis_b[1])
