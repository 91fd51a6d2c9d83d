"""Stationary second-order elimination of a dissipative environment.

For a coupling H_TE = g sum_k T_k (x) E_k and an environment generator L_E
with unique steady state rho_E:

    Q_k solves  L_E(Q_k) = -(E_k rho_E - Tr(E_k rho_E) rho_E),  Tr Q_k = 0
    X_kj = g^2 Tr(Q_j E_k^dag + E_j Q_k^dag)

and the induced generator on the target is sum_jk X_kj (T_j rho T_k - {T_k T_j, rho}/2).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateKernelError,
    DegenerateSteadyStateError,
    DimensionMismatchError,
    NonHermitianError,
    NumericalFailureError,
    RegimeWarning,
)
from .floquet import PeriodicPerturbation, floquet_reduce
from .lindblad import DissipationChannel
from .linalg import (
    HERM_TOL,
    SpectralSplit,
    build_dissipator,
    build_dissipator_pair,
    commutator_superop,
    dag,
    herm_defect,
    shifted_solve,
    spectral_split,
    unvec,
    vec,
)


@dataclass(frozen=True)
class EnvModel:
    d_E: int
    H_E: np.ndarray
    channels: tuple = ()

    def __post_init__(self):
        H = np.asarray(self.H_E, dtype=complex)
        object.__setattr__(self, "H_E", H)
        object.__setattr__(self, "channels", tuple(self.channels))
        if H.shape != (self.d_E, self.d_E):
            raise DimensionMismatchError(f"H_E has shape {H.shape}, expected {(self.d_E, self.d_E)}")
        if herm_defect(H) > HERM_TOL * max(1.0, float(np.max(np.abs(H)))):
            raise NonHermitianError("H_E is not Hermitian")
        for ch in self.channels:
            if ch.L.shape != (self.d_E, self.d_E):
                raise DimensionMismatchError("channel dimension differs from d_E")

    def liouvillian(self, which=None, include_hamiltonian: bool = True) -> np.ndarray:
        """Generator restricted to the channel indices ``which`` (all when None)."""
        S = commutator_superop(self.H_E) if include_hamiltonian else np.zeros((self.d_E**2,) * 2, dtype=complex)
        idx = range(len(self.channels)) if which is None else which
        for k in idx:
            ch = self.channels[k]
            S = S + ch.rate * build_dissipator(ch.L)
        return S

    def scaled(self, alpha: float, scale_hamiltonian: bool = True) -> "EnvModel":
        H = alpha * self.H_E if scale_hamiltonian else self.H_E
        return EnvModel(self.d_E, H, tuple(DissipationChannel(c.L, alpha * c.rate) for c in self.channels))


@dataclass(frozen=True)
class CouplingSet:
    """H_TE = g sum_k T_k (x) E_k with Hermitian factors."""

    terms: tuple
    g: float

    def __post_init__(self):
        terms = tuple((np.asarray(T, dtype=complex), np.asarray(E, dtype=complex)) for T, E in self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms:
            raise ValueError("coupling needs at least one term")
        if self.g < 0:
            raise ValueError("g must be >= 0")
        dT, dE = terms[0][0].shape[0], terms[0][1].shape[0]
        for T, E in terms:
            if T.shape != (dT, dT) or E.shape != (dE, dE):
                raise DimensionMismatchError("inconsistent coupling operator dimensions")
            if herm_defect(T) > HERM_TOL or herm_defect(E) > HERM_TOL:
                raise NonHermitianError("coupling factors must be Hermitian")

    @property
    def d_T(self) -> int:
        return self.terms[0][0].shape[0]

    @property
    def d_E(self) -> int:
        return self.terms[0][1].shape[0]

    def hamiltonian(self) -> np.ndarray:
        return self.g * sum(np.kron(T, E) for T, E in self.terms)


def env_steady_state(env: EnvModel, split: SpectralSplit | None = None) -> np.ndarray:
    L = env.liouvillian()
    if split is None:
        split = spectral_split(L)
    if split.kernel_dim != 1:
        raise DegenerateSteadyStateError(
            f"environment kernel has dimension {split.kernel_dim}; use degenerate_reduce"
        )
    rho = split.kernel_basis[0]
    rho = rho / np.trace(rho)
    rho = (rho + dag(rho)) / 2
    resid = float(np.linalg.norm(L @ vec(rho)))
    if resid > 1e-11 * max(1.0, float(np.linalg.norm(L))):
        raise NumericalFailureError(f"steady-state residual {resid:.3e}")
    if np.linalg.eigvalsh(rho)[0] < -1e-10:
        raise NumericalFailureError("steady state is not positive semidefinite")
    return rho


@dataclass(frozen=True)
class XMatrix:
    """Induced-dissipation matrix X and channel decomposition X = Lambda Lambda^dag.

    The induced generator is sum_jk X_kj (T_j rho T_k^dag - {T_k^dag T_j, rho}/2),
    equivalently sum_m D_{L_m} with L_m = sum_j conj(Lambda_jm) T_j.
    """

    entries: np.ndarray
    Lambda: np.ndarray
    T_ops: tuple = field(repr=False)
    Q: tuple = field(repr=False, default=())

    @property
    def induced_channels(self) -> list:
        return [sum(np.conj(self.Lambda[j, m]) * T for j, T in enumerate(self.T_ops)) for m in range(self.Lambda.shape[1])]

    def superoperator(self) -> np.ndarray:
        d = self.T_ops[0].shape[0]
        S = np.zeros((d * d, d * d), dtype=complex)
        for k, Tk in enumerate(self.T_ops):
            for j, Tj in enumerate(self.T_ops):
                if self.entries[k, j] != 0:
                    S += self.entries[k, j] * build_dissipator_pair(Tj, Tk)
        return S


def psd_factor(X, clip: float = 1e-10):
    """Lambda with X = Lambda Lambda^dag after clipping tiny negative eigenvalues."""
    X = (X + dag(X)) / 2
    w, U = np.linalg.eigh(X)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if w.size and w[0] < -clip * scale:
        raise NumericalFailureError(f"X has eigenvalue {w[0]:.3e} below -{clip}*|X|")
    w = np.where(w < 0, 0.0, w)
    keep = w > 0
    return U[:, keep] * np.sqrt(w[keep])


def second_order_eliminate(env: EnvModel, coupling: CouplingSet, warn_ratio: float = 5.0) -> XMatrix:
    if coupling.d_E != env.d_E:
        raise DimensionMismatchError("coupling and environment dimensions differ")
    L = env.liouvillian()
    split = spectral_split(L)
    rho = env_steady_state(env, split)
    T_ops = tuple(T for T, _ in coupling.terms)
    K = len(coupling.terms)
    if coupling.g == 0:
        return XMatrix(np.zeros((K, K), dtype=complex), np.zeros((K, 0), dtype=complex), T_ops)
    if split.gap / coupling.g < warn_ratio:
        warnings.warn(f"gap/g = {split.gap / coupling.g:.3g} below {warn_ratio}", RegimeWarning, stacklevel=2)
    Qs = []
    for _, E in coupling.terms:
        B = E @ rho - np.trace(E @ rho) * rho
        Q = unvec(shifted_solve(L, 0.0, -vec(B), split.R), env.d_E)
        Qs.append(Q)
    E_ops = [E for _, E in coupling.terms]
    X = np.empty((K, K), dtype=complex)
    for k in range(K):
        for j in range(K):
            X[k, j] = np.trace(Qs[j] @ dag(E_ops[k]) + E_ops[j] @ dag(Qs[k]))
    X = coupling.g**2 * X
    X = (X + dag(X)) / 2
    return XMatrix(entries=X, Lambda=psd_factor(X), T_ops=T_ops, Q=tuple(Qs))


@dataclass(frozen=True)
class DegenerateReduction:
    """Reduced generators on slow coordinates (rho_a)_a with full state sum_a rho_a (x) P_a."""

    slow_basis: tuple
    L_s1: np.ndarray
    L_s2: np.ndarray
    d_T: int
    K0: np.ndarray = field(repr=False)
    Kdual: np.ndarray = field(repr=False)

    @property
    def generator(self) -> np.ndarray:
        return self.L_s1 + self.L_s2

    def trace_defect(self) -> float:
        m = len(self.slow_basis)
        row = np.concatenate([np.trace(P) * np.conj(vec(np.eye(self.d_T))) for P in self.slow_basis])
        return float(np.max(np.abs(row @ self.generator))) if m else 0.0

    def block(self, S, a: int, b: int) -> np.ndarray:
        """Sub-matrix mapping slow component b to component a."""
        n = self.d_T**2
        return np.asarray(S)[a * n:(a + 1) * n, b * n:(b + 1) * n]


def degenerate_reduce(
    env: EnvModel,
    fast_channels,
    slow_channels,
    coupling: CouplingSet,
    slow_basis=None,
    hamiltonian_fast: bool = True,
) -> DegenerateReduction:
    """First- and second-order reduction around a fast generator with a multi-dimensional kernel.

    ``slow_basis`` optionally fixes the fast-kernel operators P_a (e.g. |g><g|, |e><e|).
    """
    d_T, d_E = coupling.d_T, env.d_E
    L_F = env.liouvillian(fast_channels, include_hamiltonian=hamiltonian_fast)
    split_E = spectral_split(L_F)
    if slow_basis is None:
        P = list(split_E.kernel_basis)
    else:
        P = [np.asarray(A, dtype=complex) for A in slow_basis]
        if len(P) != split_E.kernel_dim:
            raise DegenerateKernelError(f"slow basis has {len(P)} elements, kernel has {split_E.kernel_dim}")
        for A in P:
            if np.linalg.norm(L_F @ vec(A)) > 1e-10 * max(1.0, np.linalg.norm(L_F)):
                raise DegenerateKernelError("slow basis element is not in the fast kernel")
    V = np.stack([vec(A) for A in P], axis=1)
    G = dag(split_E.left) @ V
    if np.linalg.cond(G) > 1e8:
        raise DegenerateKernelError("fast-kernel biorthonormalization failed")
    W = split_E.left @ dag(np.linalg.inv(G))
    duals = [unvec(W[:, a], d_E) for a in range(len(P))]

    d = d_T * d_E
    L0 = _lift_env(env, fast_channels, hamiltonian_fast, d_T)
    L1 = _lift_env(env, slow_channels, not hamiltonian_fast, d_T) + commutator_superop(coupling.hamiltonian())
    m = len(P)
    nT = d_T * d_T
    K0 = np.zeros((d * d, m * nT), dtype=complex)
    Kdual = np.zeros((m * nT, d * d), dtype=complex)
    for a in range(m):
        for j in range(d_T):
            for i in range(d_T):
                Eij = np.zeros((d_T, d_T))
                Eij[i, j] = 1.0
                col = a * nT + i + d_T * j
                K0[:, col] = vec(np.kron(Eij, P[a]))
                Kdual[col, :] = np.conj(vec(np.kron(Eij, duals[a])))
    R = K0 @ Kdual
    split = SpectralSplit([], [], R, split_E.gap, split_E.eigenvalues)
    pert = PeriodicPerturbation(base_freq=1.0, modes=((0, L1),), strength=1.0)
    red = floquet_reduce(L0, pert, split, order=2, K0=K0, Kdual=Kdual)
    return DegenerateReduction(slow_basis=tuple(P), L_s1=red.L_s1, L_s2=red.L_s2, d_T=d_T, K0=K0, Kdual=Kdual)


def _lift_env(env: EnvModel, which, with_hamiltonian: bool, d_T: int) -> np.ndarray:
    """id_T (x) (selected environment generator) on the joint space."""
    idT = np.eye(d_T)
    H = np.kron(idT, env.H_E) if with_hamiltonian else np.zeros((d_T * env.d_E,) * 2)
    S = commutator_superop(H)
    for k in which:
        ch = env.channels[k]
        S = S + ch.rate * build_dissipator(np.kron(idT, ch.L))
    return S


def offdiag_decay_eigenvalues(kappa1: float, n_th: float, L: float) -> tuple:
    """Eigenvalues r_+, r_- governing target coherences under fast dephasing of the environment."""
    a = kappa1 * (n_th + 0.5)
    root = np.sqrt(complex(a * a - L * L, kappa1 * L))
    return complex(-a + root), complex(-a - root)


def offdiag_block(kappa1: float, n_th: float, L: float) -> np.ndarray:
    """2x2 generator of (rho_g, rho_e) coherence elements with [T_z, .] eigenvalue L/g."""
    km, kp = kappa1 * (1 + n_th), kappa1 * n_th
    return np.array([[-kp + 1j * L, km], [kp, -km - 1j * L]], dtype=complex)
