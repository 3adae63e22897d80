"""Collective spin-boson model: parameters, basis, operators, product states.

A symmetric ensemble of N two-level systems (collective spin S = N/2) couples
to a single bosonic mode,

    H = (2 g / sqrt(N)) (a + a^dag) S_z + delta a^dag a + B S_x .

Coupling strengths are configured in kHz as quoted by experiments; internally
every frequency is an angular frequency in rad/ms (omega = 2*pi*f_khz) and
time is measured in ms with hbar = 1.

The full Hilbert space is the product of a truncated Fock space (n = 0..n_max)
and the symmetric spin sector (m = -N/2..N/2).  Basis states are flattened as

    k = n * (N + 1) + (m + N/2)

so the boson index is the slow one.  In this basis H is real symmetric, which
the spectral routines exploit.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

KHZ_TO_RAD_PER_MS = 2.0 * np.pi


@dataclass(frozen=True)
class ModelParams:
    """Model definition: spin number, couplings in kHz, boson cutoff.

    Attributes
    ----------
    n_spins : int
        Number of two-level systems N; the collective spin is S = N/2.
    g_khz, delta_khz, b_khz : float
        Spin-boson coupling g, boson detuning delta and transverse field B,
        all as linear frequencies in kHz.
    n_max : int
        Largest Fock state kept; boson dimension is n_max + 1.
    """

    n_spins: int
    g_khz: float
    delta_khz: float
    b_khz: float
    n_max: int

    def __post_init__(self):
        if self.n_spins < 1:
            raise ValueError(f"n_spins must be >= 1, got {self.n_spins}")
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")
        for name in ("g_khz", "delta_khz", "b_khz"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")

    # angular frequencies, rad/ms
    @property
    def omega_g(self) -> float:
        return KHZ_TO_RAD_PER_MS * self.g_khz

    @property
    def omega_delta(self) -> float:
        return KHZ_TO_RAD_PER_MS * self.delta_khz

    @property
    def omega_b(self) -> float:
        return KHZ_TO_RAD_PER_MS * self.b_khz

    @property
    def b_critical_khz(self) -> float:
        """Critical transverse field B_c = 4 g^2 / delta in kHz."""
        if self.delta_khz <= 0:
            raise ValueError("b_critical_khz requires delta_khz > 0")
        return 4.0 * self.g_khz**2 / self.delta_khz

    @property
    def critical_energy(self) -> float:
        """Energy -omega_B N / 2 (rad/ms) separating the excited-state phases.

        Equals <H> in the spin-coherent state polarized along -x with the
        boson mode in vacuum.
        """
        return -0.5 * self.omega_b * self.n_spins

    @property
    def spin_dim(self) -> int:
        return self.n_spins + 1

    @property
    def fock_dim(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return self.fock_dim * self.spin_dim

    @property
    def m_values(self) -> np.ndarray:
        """Spin projections m = -N/2..N/2, ascending, aligned with the basis."""
        return np.arange(self.spin_dim) - 0.5 * self.n_spins

    def basis_index(self, n: int, m: float) -> int:
        """Flattened index of |n> x |S=N/2, m>."""
        i = int(round(m + 0.5 * self.n_spins))
        if not (0 <= n <= self.n_max and 0 <= i <= self.n_spins):
            raise ValueError(f"(n={n}, m={m}) outside the basis")
        return n * self.spin_dim + i

    def with_updates(self, **kw) -> "ModelParams":
        d = dict(
            n_spins=self.n_spins, g_khz=self.g_khz, delta_khz=self.delta_khz,
            b_khz=self.b_khz, n_max=self.n_max,
        )
        d.update(kw)
        return ModelParams(**d)


@lru_cache(maxsize=64)
def spin_matrices(n_spins: int):
    """Collective spin matrices (sx, sy, sz) on the S = N/2 sector.

    Basis ordering is m ascending.  sx and sz are real, sy is imaginary;
    all are returned complex for uniform arithmetic.
    """
    m = np.arange(n_spins + 1) - 0.5 * n_spins
    s = 0.5 * n_spins
    # <m+1| S_+ |m> = sqrt(S(S+1) - m(m+1))
    up = np.sqrt(s * (s + 1.0) - m[:-1] * (m[:-1] + 1.0))
    sp = np.zeros((n_spins + 1, n_spins + 1), dtype=complex)
    sp[np.arange(1, n_spins + 1), np.arange(n_spins)] = up
    sm = sp.conj().T
    sx = 0.5 * (sp + sm)
    sy = -0.5j * (sp - sm)
    sz = np.diag(m.astype(complex))
    return sx, sy, sz


@lru_cache(maxsize=64)
def boson_matrices(n_max: int):
    """Annihilation operator a and number operator on the truncated Fock space."""
    a = np.zeros((n_max + 1, n_max + 1), dtype=complex)
    a[np.arange(n_max), np.arange(1, n_max + 1)] = np.sqrt(np.arange(1, n_max + 1))
    num = np.diag(np.arange(n_max + 1, dtype=float).astype(complex))
    return a, num


def build_operators(params: ModelParams) -> dict:
    """Full-space operators as dense complex matrices, keyed by name.

    Keys: sx, sy, sz, a, adag, n, x (boson quadrature (a + a^dag)/2).
    Intended for tests and small systems; production paths act on the
    factor spaces directly.
    """
    sx, sy, sz = spin_matrices(params.n_spins)
    a, num = boson_matrices(params.n_max)
    fock_eye = np.eye(params.fock_dim)
    spin_eye = np.eye(params.spin_dim)
    ops = {
        "sx": np.kron(fock_eye, sx),
        "sy": np.kron(fock_eye, sy),
        "sz": np.kron(fock_eye, sz),
        "a": np.kron(a, spin_eye),
        "adag": np.kron(a.conj().T, spin_eye),
        "n": np.kron(num, spin_eye),
    }
    ops["x"] = 0.5 * (ops["a"] + ops["adag"])
    return ops


def build_hamiltonian(params: ModelParams) -> np.ndarray:
    """Dense Hamiltonian, real float64, in the flattened product basis."""
    sx, _, sz = spin_matrices(params.n_spins)
    a, num = boson_matrices(params.n_max)
    coupling = 2.0 * params.omega_g / np.sqrt(params.n_spins)
    h = coupling * np.kron((a + a.conj().T).real, sz.real)
    h += params.omega_delta * np.kron(num.real, np.eye(params.spin_dim))
    h += params.omega_b * np.kron(np.eye(params.fock_dim), sx.real)
    return h


@lru_cache(maxsize=128)
def _sy_factor_eigh(n_spins: int):
    _, sy, _ = spin_matrices(n_spins)
    return np.linalg.eigh(sy)


def spin_rotation(n_spins: int, theta: float, phi: float) -> np.ndarray:
    """Unitary R = exp(-i phi S_z) exp(-i theta S_y) on the spin factor.

    R maps the z axis onto (sin(theta)cos(phi), sin(theta)sin(phi),
    cos(theta)): R S_z R^dag = S_r for that axis, so R applied to an S_z
    eigenstate yields the S_r eigenstate with the same eigenvalue.
    """
    w, v = _sy_factor_eigh(n_spins)
    ry = (v * np.exp(-1j * theta * w)) @ v.conj().T
    m = np.arange(n_spins + 1) - 0.5 * n_spins
    return np.exp(-1j * phi * m)[:, None] * ry


def axis_vector(theta: float, phi: float) -> np.ndarray:
    return np.array([
        np.sin(theta) * np.cos(phi),
        np.sin(theta) * np.sin(phi),
        np.cos(theta),
    ])


def spin_coherent_vector(n_spins: int, theta: float, phi: float,
                         sign: int = 1) -> np.ndarray:
    """Spin-factor coherent state: S_r eigenstate with eigenvalue sign*N/2."""
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    e = np.zeros(n_spins + 1, dtype=complex)
    e[-1 if sign > 0 else 0] = 1.0
    return spin_rotation(n_spins, theta, phi) @ e


def coherent_spin_state(params: ModelParams, theta: float, phi: float,
                        sign: int = 1, n_fock: int = 0) -> np.ndarray:
    """Product state |n_fock> x |spin coherent along (theta, phi), sign>."""
    if not (0 <= n_fock <= params.n_max):
        raise ValueError(f"n_fock={n_fock} outside the Fock cutoff")
    psi = np.zeros(params.dim, dtype=complex)
    spin = spin_coherent_vector(params.n_spins, theta, phi, sign)
    psi[n_fock * params.spin_dim:(n_fock + 1) * params.spin_dim] = spin
    return psi


def critical_state(params: ModelParams) -> np.ndarray:
    """Spin polarized along -x, boson vacuum; <H> equals critical_energy."""
    return coherent_spin_state(params, theta=0.5 * np.pi, phi=0.0,
                               sign=-1, n_fock=0)


def state_tensor(state: np.ndarray, params: ModelParams) -> np.ndarray:
    """View the flat state as a (fock_dim, spin_dim) amplitude matrix."""
    if state.shape != (params.dim,):
        raise ValueError(f"state has shape {state.shape}, expected ({params.dim},)")
    return state.reshape(params.fock_dim, params.spin_dim)


def fock_populations(state: np.ndarray, params: ModelParams) -> np.ndarray:
    t = state_tensor(state, params)
    return np.abs(t) ** 2 @ np.ones(params.spin_dim)


def spin_populations(state: np.ndarray, params: ModelParams) -> np.ndarray:
    t = state_tensor(state, params)
    return np.ones(params.fock_dim) @ np.abs(t) ** 2


def fock_tail(state: np.ndarray, params: ModelParams, rows: int = 2) -> float:
    """Population in the top `rows` Fock levels; cutoff health indicator."""
    return float(fock_populations(state, params)[-rows:].sum())


class CutoffError(RuntimeError):
    """Evolved state leaks into the top Fock rows beyond tolerance."""


def check_fock_tail(states, params: ModelParams, threshold: float = 1e-8,
                    rows: int = 2) -> float:
    """Max tail population over one or many states; raises CutoffError above threshold."""
    arr = np.atleast_2d(np.asarray(states))
    pops = np.abs(arr.reshape(arr.shape[0], params.fock_dim, params.spin_dim)) ** 2
    tail = float(pops[:, -rows:, :].sum(axis=(1, 2)).max())
    if tail > threshold:
        raise CutoffError(
            f"Fock tail population {tail:.3e} exceeds {threshold:.1e} at "
            f"n_max={params.n_max}; raise the cutoff")
    return tail


class Generator:
    """Hermitian rotation generator acting on one factor of the product space.

    Echo rotations exp(i phi G) and moments of G are evaluated through the
    eigendecomposition of the small factor matrix, never a full-space
    exponential.
    """

    def __init__(self, label: str, space: str, mat: np.ndarray):
        if space not in ("boson", "spin"):
            raise ValueError("space must be 'boson' or 'spin'")
        if not np.allclose(mat, mat.conj().T, atol=1e-12):
            raise ValueError(f"generator {label} is not Hermitian")
        self.label = label
        self.space = space
        self.mat = np.asarray(mat, dtype=complex)
        self._evals, self._evecs = np.linalg.eigh(self.mat)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._evals

    def apply(self, tensor: np.ndarray) -> np.ndarray:
        """G |psi> on the (fock_dim, spin_dim) amplitude matrix."""
        if self.space == "boson":
            return self.mat @ tensor
        return tensor @ self.mat.T

    def rotate(self, tensor: np.ndarray, angle: float) -> np.ndarray:
        """exp(i angle G) |psi> on the amplitude matrix."""
        w, v = self._evals, self._evecs
        ph = np.exp(1j * angle * w)
        if self.space == "boson":
            return v @ (ph[:, None] * (v.conj().T @ tensor))
        # right-multiplication by exp(i angle G)^T
        return ((v * ph) @ (v.conj().T @ tensor.T)).T

    def moments(self, tensor: np.ndarray):
        """(<G>, <G^2>) in the pure state given by the amplitude matrix."""
        gt = self.apply(tensor)
        m1 = np.vdot(tensor, gt).real
        m2 = np.vdot(gt, gt).real
        return m1, m2

    def variance(self, tensor: np.ndarray) -> float:
        m1, m2 = self.moments(tensor)
        return m2 - m1 * m1

    def full_matrix(self, params: ModelParams) -> np.ndarray:
        """Dense full-space matrix, for tests and small systems."""
        if self.space == "boson":
            if self.mat.shape[0] != params.fock_dim:
                raise ValueError("generator dimension does not match params")
            return np.kron(self.mat, np.eye(params.spin_dim))
        if self.mat.shape[0] != params.spin_dim:
            raise ValueError("generator dimension does not match params")
        return np.kron(np.eye(params.fock_dim), self.mat)


def generator_x(params: ModelParams) -> Generator:
    """Boson quadrature X = (a + a^dag)/2."""
    a, _ = boson_matrices(params.n_max)
    return Generator("X", "boson", 0.5 * (a + a.conj().T))


def generator_n(params: ModelParams) -> Generator:
    """Boson number operator."""
    _, num = boson_matrices(params.n_max)
    return Generator("n", "boson", num)


def generator_spin(params: ModelParams, component: str) -> Generator:
    sx, sy, sz = spin_matrices(params.n_spins)
    try:
        mat = {"sx": sx, "sy": sy, "sz": sz}[component]
    except KeyError:
        raise ValueError(f"unknown spin component {component!r}") from None
    return Generator(f"S{component[-1]}", "spin", mat)


def generator_sr(params: ModelParams, theta: float, phi: float) -> Generator:
    """Collective spin projection onto the (theta, phi) axis."""
    sx, sy, sz = spin_matrices(params.n_spins)
    ex, ey, ez = axis_vector(theta, phi)
    return Generator(f"Sr({theta:.4f},{phi:.4f})", "spin",
                     ex * sx + ey * sy + ez * sz)


def make_generator(params: ModelParams, name: str, theta: float | None = None,
                   phi: float | None = None) -> Generator:
    """Generator by config name: X, n, Sx, Sy, Sz, or Sr (needs theta, phi)."""
    key = name.strip()
    if key == "X":
        return generator_x(params)
    if key == "n":
        return generator_n(params)
    if key in ("Sx", "Sy", "Sz"):
        return generator_spin(params, "s" + key[-1].lower())
    if key == "Sr":
        if theta is None or phi is None:
            raise ValueError("generator Sr requires theta and phi")
        return generator_sr(params, theta, phi)
    raise ValueError(f"unknown generator {name!r}; "
                     "choose from X, n, Sx, Sy, Sz, Sr")


def parity_matrix(params: ModelParams) -> np.ndarray:
    """Conserved parity exp[i pi (n + S_x + N/2)], real symmetric involution.

    In the S_x eigenbasis the coupling term (a + a^dag) S_z shifts the Fock
    index and the S_x quantum number by one each, so n + m_x changes by an
    even amount, while the field term is diagonal; (-1)^(n + m_x + N/2)
    therefore commutes with H.
    """
    sx, _, _ = spin_matrices(params.n_spins)
    w, v = np.linalg.eigh(sx)
    signs = np.where(np.round(w + 0.5 * params.n_spins).astype(int) % 2, -1.0, 1.0)
    pi_spin = (v.real * signs) @ v.real.T
    pi_fock = np.where(np.arange(params.fock_dim) % 2, -1.0, 1.0)
    return np.kron(np.diag(pi_fock), pi_spin)
