"""Time-periodic adiabatic elimination up to second order.

The perturbation is eps * L1(t) with L1(t) = sum_n exp(i n w t) L1_n.  With the
gauge choice of zero-average corrections at each order the reduced generator is

    K0 Ls1 = R avg(L1) K0
    K0 Ls2 = R avg(L1 K1 - K1 Ls1)

with the first-order embedding modes

    R K1_n       = R L1_n K0 / (i n w)                 (n != 0)
    R K1_0       = 0
    (1 - R) K1_n = -(L0 - i n w)^-1 (1 - R) L1_n K0.

All stored reduced quantities carry their power of eps, so ``L_s1`` is
eps * Ls1 and ``L_s2`` is eps^2 * Ls2.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import BasisMismatchError, DimensionMismatchError, RegimeError, RegimeWarning
from .linalg import (
    SpectralSplit,
    choi_matrix,
    commutator_superop,
    dag,
    decompose_generator,
    shifted_solve,
    superop_dim,
    unvec,
    vec,
)


def hermitian_flip(S) -> np.ndarray:
    """Matrix of X -> S(X^dag)^dag."""
    d = superop_dim(S)
    P = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            P[i + d * j, j + d * i] = 1.0
    return P @ np.conj(S) @ P


@dataclass(frozen=True)
class PeriodicPerturbation:
    """eps * sum_n exp(i n w t) L1_n with L1_{-n} the Hermitian flip of L1_n."""

    base_freq: float
    modes: tuple
    strength: float

    def __post_init__(self):
        if not self.base_freq > 0:
            raise ValueError("base_freq must be positive")
        if self.strength < 0:
            raise ValueError("strength must be >= 0")
        modes = {int(n): np.asarray(S, dtype=complex) for n, S in self.modes}
        for n, S in list(modes.items()):
            flipped = hermitian_flip(S)
            if -n in modes:
                scale = max(1.0, float(np.max(np.abs(S))))
                if np.max(np.abs(modes[-n] - flipped)) > 1e-10 * scale:
                    raise ValueError(f"modes {n} and {-n} do not preserve Hermiticity")
            else:
                modes[-n] = flipped
        object.__setattr__(self, "modes", tuple(sorted(modes.items())))

    def mode_dict(self) -> dict:
        return dict(self.modes)

    def at(self, t: float) -> np.ndarray:
        return sum(np.exp(1j * n * self.base_freq * t) * S for n, S in self.modes)


@dataclass(frozen=True)
class FloquetReduction:
    """Reduced slow generator and first-order embedding.

    ``K0`` maps slow coordinates into the full space and ``Kdual`` is its left
    inverse with ``K0 @ Kdual = R``.  When the slow space is the operator space
    of a d_T-dimensional target, ``d_slow`` is d_T.
    """

    L_s1: np.ndarray
    L_s2: np.ndarray
    K0: np.ndarray = field(repr=False)
    Kdual: np.ndarray = field(repr=False)
    K1_modes: dict = field(repr=False)
    eps: float
    base_freq: float
    gap: float
    validity_ratio: float
    d_slow: int | None = None

    @property
    def generator(self) -> np.ndarray:
        return self.L_s1 + self.L_s2

    @property
    def diagnostics(self) -> dict:
        return {"gap": self.gap, "eps": self.eps, "validity_ratio": self.validity_ratio}

    def K1_at(self, t: float) -> np.ndarray:
        return sum(np.exp(1j * n * self.base_freq * t) * K for n, K in self.K1_modes.items())

    def reparameterized(self, S) -> "FloquetReduction":
        """Same reduction in slow coordinates rho_s = S rho_s'."""
        S = np.asarray(S, dtype=complex)
        Si = np.linalg.inv(S)
        return FloquetReduction(
            L_s1=Si @ self.L_s1 @ S,
            L_s2=Si @ self.L_s2 @ S,
            K0=self.K0 @ S,
            Kdual=Si @ self.Kdual,
            K1_modes={n: K @ S for n, K in self.K1_modes.items()},
            eps=self.eps,
            base_freq=self.base_freq,
            gap=self.gap,
            validity_ratio=self.validity_ratio,
            d_slow=None,
        )


def _check_validity(eps, norms, gap) -> float:
    ratio = eps * sum(norms) / gap if gap > 0 else np.inf
    if ratio >= 1:
        raise RegimeError(f"perturbation too strong for elimination: eps*|L1|/gap = {ratio:.3g}")
    if ratio > 0.2:
        warnings.warn(f"eps*|L1|/gap = {ratio:.3g} exceeds 0.2", RegimeWarning, stacklevel=3)
    return float(ratio)


def floquet_reduce(
    L0,
    pert: PeriodicPerturbation,
    split: SpectralSplit,
    order: int = 2,
    K0=None,
    Kdual=None,
    d_slow: int | None = None,
) -> FloquetReduction:
    """Generic reduction on the full superoperator space.

    By default the slow coordinates are the kernel basis of ``split``; a custom
    parameterization may be passed as (K0, Kdual) with K0 @ Kdual = R.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    L0 = np.asarray(L0, dtype=complex)
    n_full = L0.shape[0]
    R = split.R
    if K0 is None:
        K0, Kdual = split.right, dag(split.left)
    K0 = np.asarray(K0, dtype=complex)
    Kdual = np.asarray(Kdual, dtype=complex)
    m = K0.shape[1]
    if K0.shape[0] != n_full or Kdual.shape != (m, n_full):
        raise DimensionMismatchError("K0/Kdual shapes inconsistent with L0")
    if np.linalg.norm(K0 @ Kdual - R) > 1e-8 * max(1.0, np.linalg.norm(R)):
        raise DimensionMismatchError("K0 @ Kdual does not reproduce the kernel projector")
    modes = pert.mode_dict()
    eps = pert.strength
    w = pert.base_freq
    ratio = _check_validity(eps, [np.linalg.norm(S, 2) for S in modes.values()], split.gap)
    P = np.eye(n_full) - R

    L1_0 = modes.get(0, np.zeros_like(L0))
    Ls1 = Kdual @ L1_0 @ K0
    K1 = {}
    for n, S in modes.items():
        SK = S @ K0
        comp = shifted_solve(L0, 1j * n * w, -(P @ SK), R)
        if n != 0:
            comp = comp + R @ SK / (1j * n * w)
        K1[n] = comp
    Ls2 = np.zeros((m, m), dtype=complex)
    if order == 2:
        avg = sum(S @ K1[-n] for n, S in modes.items() if -n in K1)
        avg = avg - K1.get(0, np.zeros_like(K0)) @ Ls1
        Ls2 = Kdual @ avg
    return FloquetReduction(
        L_s1=eps * Ls1,
        L_s2=eps**2 * Ls2,
        K0=K0,
        Kdual=Kdual,
        K1_modes={n: eps * K for n, K in sorted(K1.items())},
        eps=float(eps),
        base_freq=float(w),
        gap=float(split.gap),
        validity_ratio=ratio,
        d_slow=d_slow,
    )


def product_embedding(rho_E, d_T: int):
    """K0: rho_s -> rho_s (x) rho_E and its left inverse, the partial trace."""
    rho_E = np.asarray(rho_E, dtype=complex)
    d_E = rho_E.shape[0]
    d = d_T * d_E
    K0 = np.zeros((d * d, d_T * d_T), dtype=complex)
    Kdual = np.zeros((d_T * d_T, d * d), dtype=complex)
    idE = np.eye(d_E)
    for j in range(d_T):
        for i in range(d_T):
            Eij = np.zeros((d_T, d_T))
            Eij[i, j] = 1.0
            k = i + d_T * j
            K0[:, k] = vec(np.kron(Eij, rho_E))
            Kdual[k, :] = np.conj(vec(np.kron(Eij, idE)))
    return K0, Kdual


def _env_complement_solve(L_E, R_E, rho_E, shift, B):
    """Z with (L_E - shift) Z = -(B - Tr(B) rho_E)."""
    Y = vec(B - np.trace(B) * rho_E)
    return unvec(shifted_solve(L_E, shift, -Y, R_E), rho_E.shape[0])


def floquet_reduce_bipartite(
    L_E,
    env_split: SpectralSplit,
    coupling_modes: dict,
    base_freq: float,
    eps: float,
    d_T: int,
    order: int = 2,
) -> FloquetReduction:
    """Reduction for L0 = id_T (x) L_E and Hamiltonian coupling, solved on the environment space.

    ``coupling_modes`` maps n to a list of (T, E) pairs with the perturbation
    eps * L1(t) = -i eps [sum_n exp(i n w t) sum_k T_k (x) E_k, .].  A missing
    mode -n is taken as the adjoint of mode n.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    L_E = np.asarray(L_E, dtype=complex)
    if env_split.kernel_dim != 1:
        raise DimensionMismatchError("bipartite path needs a unique environment steady state")
    rho_E = env_split.kernel_basis[0]
    rho_E = rho_E / np.trace(rho_E)
    d_E = rho_E.shape[0]
    R_E = env_split.R
    w = base_freq
    modes = {int(n): [(np.asarray(T, dtype=complex), np.asarray(E, dtype=complex)) for T, E in terms]
             for n, terms in coupling_modes.items()}
    for n in list(modes):
        if -n not in modes:
            modes[-n] = [(dag(T), dag(E)) for T, E in modes[n]]
    modes = dict(sorted(modes.items()))
    if 0 in modes:
        H0 = sum(np.kron(T, E) for T, E in modes[0])
        if np.max(np.abs(H0 - dag(H0))) > 1e-10 * max(1.0, np.max(np.abs(H0))):
            raise ValueError("static coupling is not Hermitian")

    norms = [2 * np.linalg.norm(sum(np.kron(T, E) for T, E in terms), 2) for terms in modes.values()]
    ratio = _check_validity(eps, norms, env_split.gap)

    # per (n, k): environment factors of K1_n acting on T rho_s and rho_s T
    solved = {}
    for n, terms in modes.items():
        shift = 1j * n * w
        out = []
        for T, E in terms:
            Bl, Br = E @ rho_E, rho_E @ E
            Zl = _env_complement_solve(L_E, R_E, rho_E, shift, Bl)
            Zr = _env_complement_solve(L_E, R_E, rho_E, shift, Br)
            if n != 0:
                Zl = Zl + np.trace(Bl) * rho_E / shift
                Zr = Zr + np.trace(Br) * rho_E / shift
            out.append((T, Zl, Zr))
        solved[n] = out

    def K1_apply(n, rho_s):
        # K1_n(rho_s) with L1_n = -i[H_n, .]
        return -1j * sum(np.kron(T @ rho_s, Zl) - np.kron(rho_s @ T, Zr) for T, Zl, Zr in solved[n])

    def ptrace_E(X):
        return np.einsum("aibi->ab", X.reshape(d_T, d_E, d_T, d_E))

    K0, Kdual = product_embedding(rho_E, d_T)
    nT = d_T * d_T
    Ls1 = np.zeros((nT, nT), dtype=complex)
    Ls2 = np.zeros((nT, nT), dtype=complex)
    K1 = {n: np.zeros(((d_T * d_E) ** 2, nT), dtype=complex) for n in modes}
    for j in range(d_T):
        for i in range(d_T):
            rho_s = np.zeros((d_T, d_T), dtype=complex)
            rho_s[i, j] = 1.0
            col = i + d_T * j
            if 0 in modes:
                H0 = sum(np.trace(E @ rho_E) * T for T, E in modes[0])
                Ls1[:, col] = vec(-1j * (H0 @ rho_s - rho_s @ H0))
            K1_cols = {n: K1_apply(n, rho_s) for n in modes}
            for n in modes:
                K1[n][:, col] = vec(K1_cols[n])
            if order == 2:
                acc = np.zeros((d_T, d_T), dtype=complex)
                for n, terms in modes.items():
                    if -n not in K1_cols:
                        continue
                    X = K1_cols[-n]
                    Hn = sum(np.kron(T, E) for T, E in terms)
                    acc += ptrace_E(-1j * (Hn @ X - X @ Hn))
                Ls2[:, col] = vec(acc)
    return FloquetReduction(
        L_s1=eps * Ls1,
        L_s2=eps**2 * Ls2,
        K0=K0,
        Kdual=Kdual,
        K1_modes={n: eps * K for n, K in sorted(K1.items())},
        eps=float(eps),
        base_freq=float(w),
        gap=float(env_split.gap),
        validity_ratio=ratio,
        d_slow=d_T,
    )


def coupling_perturbation(coupling_modes: dict, d_T: int, d_E: int, base_freq: float, eps: float) -> PeriodicPerturbation:
    """Full-space superoperator modes of -i[H(t), .] for a bipartite coupling."""
    modes = {}
    for n, terms in coupling_modes.items():
        H = sum(np.kron(np.asarray(T, dtype=complex), np.asarray(E, dtype=complex)) for T, E in terms)
        modes[int(n)] = commutator_superop(H)
    return PeriodicPerturbation(base_freq=base_freq, modes=tuple(modes.items()), strength=eps)


@dataclass(frozen=True)
class RateReport:
    rates: dict
    cross_terms: float
    hamiltonian_first: dict
    hamiltonian_second: dict
    residual: float


def _traceless(A):
    d = A.shape[0]
    return A - np.trace(A) / d * np.eye(d)


def _coords(ops, basis):
    return np.stack([[np.vdot(F, _traceless(A)) for F in basis] for A in ops], axis=1)


def extract_rates(
    red: FloquetReduction,
    basis: dict,
    hamiltonian_basis: dict | None = None,
    tol: float = 1e-8,
) -> RateReport:
    """Rates of the given dissipators in the second-order generator.

    ``basis`` maps labels to target operators (e.g. T_z, T_-, T_+); the
    dissipative part of ``red.L_s2`` is written as sum_ab K_ab D-pair(B_a, B_b)
    and the diagonal of K is returned.  Hamiltonian coefficients of the first and
    second order parts are fitted on ``hamiltonian_basis`` when given.
    """
    if red.d_slow is None:
        raise DimensionMismatchError("rate extraction needs a reduction on the target operator space")
    dec2 = decompose_generator(red.L_s2)
    labels = list(basis)
    M = _coords([np.asarray(basis[k], dtype=complex) for k in labels], dec2.basis)
    Mp = np.linalg.pinv(M)
    K = Mp @ dec2.kossakowski @ dag(Mp)
    scale = max(np.linalg.norm(dec2.kossakowski), 1e-300)
    residual = float(np.linalg.norm(M @ K @ dag(M) - dec2.kossakowski))
    if residual > tol * scale and residual > 1e-14:
        raise BasisMismatchError(f"dissipative part not expressible in basis (residual {residual:.3e})", residual)
    rates = {k: float(K[i, i].real) for i, k in enumerate(labels)}
    cross = float(np.linalg.norm(K - np.diag(np.diag(K))))
    h1, h2 = {}, {}
    if hamiltonian_basis:
        dec1 = decompose_generator(red.L_s1)
        h1 = _fit_hamiltonian(dec1.hamiltonian, hamiltonian_basis, dec1.basis, tol)
        h2 = _fit_hamiltonian(dec2.hamiltonian, hamiltonian_basis, dec2.basis, tol)
    return RateReport(rates=rates, cross_terms=cross, hamiltonian_first=h1, hamiltonian_second=h2, residual=residual)


def _fit_hamiltonian(H, hbasis: dict, F, tol) -> dict:
    labels = list(hbasis)
    A = _coords([np.asarray(hbasis[k], dtype=complex) for k in labels], F)
    b = np.array([np.vdot(f, _traceless(H)) for f in F])
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = float(np.linalg.norm(A @ coef - b))
    if resid > max(tol * np.linalg.norm(b), 1e-13):
        raise BasisMismatchError(f"Hamiltonian not expressible in basis (residual {resid:.3e})", resid)
    return {k: float(coef[i].real) for i, k in enumerate(labels)}


@dataclass(frozen=True)
class CPReport:
    kossakowski_min_eig: float
    kossakowski_norm: float
    first_order_dissipative_norm: float
    trace_defect: float
    choi_min_eig: float


def cp_structure_check(red: FloquetReduction, n_phases: int = 8) -> CPReport:
    """Lindblad-structure diagnostics of a reduction on a target operator space."""
    if red.d_slow is None:
        raise DimensionMismatchError("structure check needs a reduction on the target operator space")
    d_T = red.d_slow
    dec2 = decompose_generator(red.L_s2)
    dec1 = decompose_generator(red.L_s1)
    ev = np.linalg.eigvalsh(dec2.kossakowski) if dec2.kossakowski.size else np.zeros(1)
    n_full = red.K0.shape[0]
    d = int(round(np.sqrt(n_full)))
    trace_row = np.conj(vec(np.eye(d)))
    trace_row_T = np.conj(vec(np.eye(d_T)))
    T = 2 * np.pi / red.base_freq
    tr_def, choi_min = 0.0, np.inf
    for k in range(n_phases):
        t = k * T / n_phases
        K = red.K0 + red.K1_at(t) if red.K1_modes else red.K0
        tr_def = max(tr_def, float(np.max(np.abs(trace_row @ K - trace_row_T))))
        C = choi_matrix(K, d_T, d)
        choi_min = min(choi_min, float(np.linalg.eigvalsh((C + dag(C)) / 2)[0]))
    return CPReport(
        kossakowski_min_eig=float(ev[0]),
        kossakowski_norm=float(np.linalg.norm(dec2.kossakowski)),
        first_order_dissipative_norm=float(np.linalg.norm(dec1.kossakowski)),
        trace_defect=tr_def,
        choi_min_eig=choi_min,
    )
