"""Driven two-level environment: models, propagator and induced-rate formulas.

Frame and sign conventions:

* two-level basis (|e>, |g>), sigma_+ = |e><g|;
* Lambda sigma_ax = w2 sigma_x + Delta sigma_z with Lambda = sqrt(Delta^2 + w2^2),
  cos(alpha) = w2 / Lambda and sin(alpha) = Delta / Lambda;
* sigma_a+ = |+a><-a| raises to the +1 eigenvector of sigma_ax, sigma_a- = sigma_a+^dag;
* T_pm = T_x pm i T_y on the target, eps = g / w1.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from .errors import InvalidSpectrumError, QuadratureError, RegimeWarning
from .floquet import FloquetReduction, extract_rates, floquet_reduce_bipartite
from .lindblad import DissipationChannel, LindbladModel, PeriodicHamiltonian
from .linalg import I2, SM, SP, SX, SY, SZ, commutator_superop, build_dissipator, dag, shifted_solve, spectral_split, unvec, vec


@dataclass(frozen=True)
class QddStrongParams:
    g: float
    w1: float
    w2: float
    delta: float
    kappa_minus: float
    kappa_plus: float

    def __post_init__(self):
        if not self.g >= 0:
            raise ValueError("g must be >= 0")
        if not self.w1 > 0:
            raise ValueError("w1 must be > 0")
        if not self.w2 >= 0:
            raise ValueError("w2 must be >= 0")
        if self.kappa_minus < 0 or self.kappa_plus < 0:
            raise ValueError("kappa_minus and kappa_plus must be >= 0")
        if not self.kappa_minus + self.kappa_plus > 0:
            raise ValueError("kappa_minus + kappa_plus must be > 0")

    @property
    def Lam(self) -> float:
        return float(np.hypot(self.delta, self.w2))

    @property
    def cos_alpha(self) -> float:
        return self.w2 / self.Lam if self.Lam > 0 else 1.0

    @property
    def sin_alpha(self) -> float:
        return self.delta / self.Lam if self.Lam > 0 else 0.0

    @property
    def k_sum(self) -> float:
        return self.kappa_minus + self.kappa_plus

    @property
    def k_diff(self) -> float:
        return self.kappa_minus - self.kappa_plus

    @property
    def eps(self) -> float:
        return self.g / self.w1

    @classmethod
    def thermal(cls, g, w1, w2, delta, kappa1, n_th) -> "QddStrongParams":
        tp = ThermalParams(kappa1, n_th)
        return cls(g, w1, w2, delta, tp.kappa_minus, tp.kappa_plus)


@dataclass(frozen=True)
class QddUltraParams:
    g: float
    w1: float
    w2: float
    delta: float
    kappa_ax: float
    kappa_am: float
    kappa_ap: float

    def __post_init__(self):
        if min(self.kappa_ax, self.kappa_am, self.kappa_ap) < 0:
            raise ValueError("rates must be >= 0")
        if not self.kappa_am + self.kappa_ap > 0:
            raise ValueError("kappa_am + kappa_ap must be > 0")
        if not self.w1 > 0:
            raise ValueError("w1 must be > 0")

    @property
    def Lam(self) -> float:
        return float(np.hypot(self.delta, self.w2))

    @property
    def sin_alpha(self) -> float:
        return self.delta / self.Lam if self.Lam > 0 else 0.0

    @property
    def cos_alpha(self) -> float:
        return self.w2 / self.Lam if self.Lam > 0 else 1.0

    @property
    def k_sum(self) -> float:
        return self.kappa_am + self.kappa_ap

    @property
    def k_diff(self) -> float:
        return self.kappa_am - self.kappa_ap

    @property
    def x_inf(self) -> float:
        return -self.k_diff / self.k_sum

    @property
    def eps(self) -> float:
        return self.g / self.w1


@dataclass(frozen=True)
class ThermalParams:
    kappa1: float
    n_th: float

    def __post_init__(self):
        if self.kappa1 < 0 or self.n_th < 0:
            raise ValueError("kappa1 and n_th must be >= 0")

    @property
    def kappa_minus(self) -> float:
        return self.kappa1 * (1 + self.n_th)

    @property
    def kappa_plus(self) -> float:
        return self.kappa1 * self.n_th


@dataclass(frozen=True)
class BathSpec:
    gamma: float
    omega_E: float
    G: Callable[[float], float] = field(repr=False)

    def density(self, nu: float) -> float:
        val = float(self.G(nu))
        if not val >= 0:
            raise InvalidSpectrumError(f"spectral density G({nu}) = {val} is negative")
        return val


@dataclass(frozen=True)
class TargetOps:
    """Target coupling operators; T_pm = T_x pm i T_y."""

    Tx: np.ndarray
    Ty: np.ndarray
    Tz: np.ndarray

    @classmethod
    def qubit(cls) -> "TargetOps":
        return cls(SX / 2, SY / 2, SZ / 2)

    @classmethod
    def spin(cls, j: float) -> "TargetOps":
        m = np.arange(j, -j - 1, -1)
        d = m.size
        Jp = np.zeros((d, d), dtype=complex)
        for k in range(1, d):
            Jp[k - 1, k] = np.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
        return cls((Jp + dag(Jp)) / 2, (Jp - dag(Jp)) / 2j, np.diag(m).astype(complex))

    @property
    def dim(self) -> int:
        return self.Tz.shape[0]

    @property
    def Tp(self) -> np.ndarray:
        return self.Tx + 1j * self.Ty

    @property
    def Tm(self) -> np.ndarray:
        return self.Tx - 1j * self.Ty

    def rate_basis(self) -> dict:
        return {"z": self.Tz, "-": self.Tm, "+": self.Tp}

    def hamiltonian_basis(self) -> dict:
        Tp, Tm = self.Tp, self.Tm
        return {"z1": self.Tz, "z2": self.Tz @ self.Tz, "c": Tp @ Tm - Tm @ Tp, "a": Tp @ Tm + Tm @ Tp}


def sigma_ax(sin_a: float, cos_a: float) -> np.ndarray:
    return cos_a * SX + sin_a * SZ


def sigma_a_ladder(sin_a: float, cos_a: float) -> tuple:
    """(sigma_a-, sigma_a+) in the eigenbasis of sigma_ax."""
    w, U = np.linalg.eigh(sigma_ax(sin_a, cos_a))
    minus, plus = U[:, 0], U[:, 1]
    sp = np.outer(plus, minus.conj())
    return dag(sp), sp


def strong_env_liouvillian(p: QddStrongParams) -> np.ndarray:
    H = (p.w2 * SX + p.delta * SZ) / 2
    return commutator_superop(H) + p.kappa_minus * build_dissipator(SM) + p.kappa_plus * build_dissipator(SP)


def ultra_env_liouvillian(p: QddUltraParams) -> np.ndarray:
    H = (p.w2 * SX + p.delta * SZ) / 2
    am, ap = sigma_a_ladder(p.sin_alpha, p.cos_alpha)
    return (
        commutator_superop(H)
        + p.kappa_ax * build_dissipator(sigma_ax(p.sin_alpha, p.cos_alpha))
        + p.kappa_am * build_dissipator(am)
        + p.kappa_ap * build_dissipator(ap)
    )


def coupling_modes(target: TargetOps, scale: float = 1.0) -> dict:
    """Fourier modes of T_z sigma_z + e^{i w1 t} T_- sigma_+ + e^{-i w1 t} T_+ sigma_-."""
    return {0: [(scale * target.Tz, SZ)], 1: [(scale * target.Tm, SP)], -1: [(scale * target.Tp, SM)]}


def _env_channels_strong(p: QddStrongParams, d_T: int):
    idT = np.eye(d_T)
    return (DissipationChannel(np.kron(idT, SM), p.kappa_minus), DissipationChannel(np.kron(idT, SP), p.kappa_plus))


def _env_channels_ultra(p: QddUltraParams, d_T: int):
    idT = np.eye(d_T)
    am, ap = sigma_a_ladder(p.sin_alpha, p.cos_alpha)
    return (
        DissipationChannel(np.kron(idT, sigma_ax(p.sin_alpha, p.cos_alpha)), p.kappa_ax),
        DissipationChannel(np.kron(idT, am), p.kappa_am),
        DissipationChannel(np.kron(idT, ap), p.kappa_ap),
    )


def _joint_model(p, target: TargetOps, channels) -> LindbladModel:
    d_T = target.dim
    H_static = np.kron(np.eye(d_T), (p.w2 * SX + p.delta * SZ) / 2) + p.g * np.kron(target.Tz, SZ)
    periodic = PeriodicHamiltonian(base_freq=p.w1, modes=((1, p.g * np.kron(target.Tm, SP)),))
    return LindbladModel(d_T=d_T, d_E=2, H_static=H_static, H_periodic=periodic, channels=channels)


def strong_model(p: QddStrongParams, target: TargetOps | None = None) -> LindbladModel:
    """Rotating-frame joint model with drive-independent sigma_pm channels."""
    target = target or TargetOps.qubit()
    return _joint_model(p, target, _env_channels_strong(p, target.dim))


def ultra_model(p: QddUltraParams, target: TargetOps | None = None) -> LindbladModel:
    """Rotating-frame joint model with drive-corrected channels."""
    target = target or TargetOps.qubit()
    return _joint_model(p, target, _env_channels_ultra(p, target.dim))


def _reduce(L_E, p, target: TargetOps, order: int) -> FloquetReduction:
    split = spectral_split(L_E)
    return floquet_reduce_bipartite(L_E, split, coupling_modes(target, p.w1), p.w1, p.eps, target.dim, order)


def strong_reduction(p: QddStrongParams, target: TargetOps | None = None, order: int = 2) -> FloquetReduction:
    return _reduce(strong_env_liouvillian(p), p, target or TargetOps.qubit(), order)


def ultra_reduction(p: QddUltraParams, target: TargetOps | None = None, order: int = 2) -> FloquetReduction:
    return _reduce(ultra_env_liouvillian(p), p, target or TargetOps.qubit(), order)


def reduction_rates(red: FloquetReduction, target: TargetOps | None = None, hamiltonian: bool = False):
    target = target or TargetOps.qubit()
    hb = independent_basis(target.hamiltonian_basis()) if hamiltonian else None
    return extract_rates(red, target.rate_basis(), hb)


def independent_basis(basis: dict, tol: float = 1e-10) -> dict:
    """Keep elements whose traceless parts are independent of the earlier ones."""
    kept, cols = {}, []
    for k, A in basis.items():
        A = np.asarray(A, dtype=complex)
        v = (A - np.trace(A) / A.shape[0] * np.eye(A.shape[0])).ravel()
        if np.linalg.norm(v) <= tol * max(1.0, np.linalg.norm(A)):
            continue
        M = np.stack(cols + [v], axis=1)
        if np.linalg.matrix_rank(M, tol=tol * np.linalg.norm(M, 2)) == len(cols) + 1:
            cols.append(v)
            kept[k] = A
    return kept


# steady states -------------------------------------------------------------


def steady_state_strong(p: QddStrongParams) -> tuple:
    """(xi, z) with rho_E = (1 + xi sigma_+ + conj(xi) sigma_- + z sigma_z) / 2."""
    L, s, c = p.Lam, p.sin_alpha, p.cos_alpha
    ks, kd = p.k_sum, p.k_diff
    den = ks**2 + 2 * L**2 * (1 + s**2)
    xi = -2 * L * c * (kd / ks) * (2 * L * s + 1j * ks) / den
    z = -(kd / ks) * (4 * L**2 * s**2 + ks**2) / den
    return complex(xi), float(z)


def steady_state_matrix(xi: complex, z: float) -> np.ndarray:
    return (I2 + xi * SP + np.conj(xi) * SM + z * SZ) / 2


# propagator and averages ---------------------------------------------------


def drive_hamiltonian(p: QddStrongParams, t: float) -> np.ndarray:
    """Lab-frame environment drive Hamiltonian."""
    return (p.delta + p.w1) / 2 * SZ + p.w2 / 2 * (np.cos(p.w1 * t) * SX + np.sin(p.w1 * t) * SY)


def drive_propagator(p: QddStrongParams, t: float) -> np.ndarray:
    sa = sigma_ax(p.sin_alpha, p.cos_alpha)
    return sla.expm(-0.5j * p.w1 * t * SZ) @ sla.expm(-0.5j * p.Lam * t * sa)


def reference_drive(omega: float) -> QddStrongParams:
    """Parameters reproducing H = w sigma_z / 2 + w/4 (cos(wt) sigma_x + sin(wt) sigma_y)."""
    return QddStrongParams(g=0.0, w1=omega, w2=omega / 2, delta=0.0, kappa_minus=1.0, kappa_plus=0.0)


def decoupling_average(
    p: QddStrongParams,
    a: str,
    n_periods: int = 1,
    tol: float = 1e-12,
    max_level: int = 18,
) -> np.ndarray:
    """(1/T) int_0^T U^dag sigma_a U dt over T = n_periods * 2 pi / w1 by Romberg quadrature."""
    if n_periods < 1:
        raise ValueError("n_periods must be >= 1")
    sig = {"x": SX, "y": SY, "z": SZ}[a]
    T = n_periods * 2 * np.pi / p.w1
    sa = sigma_ax(p.sin_alpha, p.cos_alpha)
    wz, Vz = np.linalg.eigh(SZ)
    wa, Va = np.linalg.eigh(sa)

    def f(ts):
        out = np.empty((ts.size, 2, 2), dtype=complex)
        for k, t in enumerate(ts):
            U = (Vz * np.exp(-0.5j * p.w1 * t * wz)) @ dag(Vz) @ (Va * np.exp(-0.5j * p.Lam * t * wa)) @ dag(Va)
            out[k] = dag(U) @ sig @ U
        return out

    n = 8
    ts = np.linspace(0, T, n + 1)
    vals = f(ts)
    trap = [(vals[0] + vals[-1]) / 2 + vals[1:-1].sum(axis=0)]
    trap[0] = trap[0] * (T / n)
    rows = [[trap[0]]]
    for level in range(1, max_level):
        n *= 2
        mid = f(np.linspace(0, T, n + 1)[1::2])
        new = rows[-1][0] / 2 + (T / n) * mid.sum(axis=0)
        row = [new]
        for k in range(1, level + 1):
            row.append(row[k - 1] + (row[k - 1] - rows[-1][k - 1]) / (4**k - 1))
        diff = np.linalg.norm(row[-1] - rows[-1][-1], 2) / T
        rows.append(row)
        if diff < tol:
            return row[-1] / T
    raise QuadratureError(f"quadrature not converged (last change {diff:.3e})")


# induced rates -------------------------------------------------------------


def ksz_closed_form(p: QddStrongParams) -> float:
    g, D, w2, km, kp = p.g, p.delta, p.w2, p.kappa_minus, p.kappa_plus
    ks = km + kp
    a = 4 * D**2 + ks**2
    num = 2 * g**2 * a * (4 * kp * km * (16 * D**2 * w2**2 + a**2) + 4 * ks**2 * w2**2 * (2 * km**2 + 2 * kp**2 + w2**2))
    return float(num / (ks**3 * (a + 2 * w2**2) ** 3))


def strong_rates_exact(p: QddStrongParams) -> dict:
    """Induced rates from the environment linear solves about the steady state."""
    L = strong_env_liouvillian(p)
    split = spectral_split(L)
    rho = split.kernel_basis[0]
    rho = rho / np.trace(rho)

    def solve(S, shift):
        Y = vec((S - np.trace(S @ rho) * I2) @ rho)
        return unvec(shifted_solve(L, shift, Y, split.R), 2)

    Xz = solve(SZ, 0.0)
    Xm = solve(SM, -1j * p.w1)
    Xp = solve(SP, 1j * p.w1)
    g2 = p.g**2
    return {
        "kappa_sz": float(-2 * g2 * np.trace(SZ @ Xz).real),
        "kappa_s_minus": float(-2 * g2 * np.trace(SM @ Xp).real),
        "kappa_s_plus": float(-2 * g2 * np.trace(SP @ Xm).real),
    }


def _regime_check(w2, others, name):
    if not w2 > max(others):
        warnings.warn(f"{name}: w2 = {w2} not above {max(others)}", RegimeWarning, stacklevel=3)


def strong_rates_asymptotic(p: QddStrongParams) -> dict:
    _regime_check(p.w2, (p.k_sum, abs(p.delta), p.w1), "strong asymptotics")
    g2, ks = p.g**2, p.k_sum
    kz = ks * g2 / p.w2**2 + 4 * (p.delta**2 / p.w2**2) * g2 / ks
    kpm = ks * g2 / (ks**2 + 4 * p.w1**2)
    return {"kappa_sz": float(kz), "kappa_s_pm": float(kpm)}


def ultra_rates_asymptotic(p: QddUltraParams) -> dict:
    _regime_check(p.w2, (p.k_sum, abs(p.delta), p.w1), "ultra-strong asymptotics")
    g2, ks, kd, kx = p.g**2, p.k_sum, p.k_diff, p.kappa_ax
    pol = 1 - kd**2 / ks**2
    r = p.delta**2 / p.w2**2
    kz = (ks + 4 * kx) * g2 / p.w2**2 + 2 * r * g2 * pol / ks
    kpm = ks * g2 * (1 - r) * pol / (2 * (ks**2 + p.w1**2)) + g2 * (4 * kx + ks) / (4 * p.w2**2)
    return {"kappa_sz": float(kz), "kappa_s_pm": float(kpm)}


def ksz_omega2_zero(tp: ThermalParams, g: float) -> float:
    n = tp.n_th
    return 8 * g**2 * n * (n + 1) / (tp.kappa1 * (8 * n**3 + 12 * n**2 + 6 * n + 1))


def om2_zero_rates(p: QddStrongParams) -> dict:
    den = p.k_sum**2 + 4 * (p.w1 + p.delta) ** 2
    return {
        "kappa_s_minus": float(4 * p.kappa_minus * p.g**2 / den),
        "kappa_s_plus": float(4 * p.kappa_plus * p.g**2 / den),
    }


def first_order_frequency_strong(p: QddStrongParams) -> float:
    """Coefficient of -i[T_z, .] in the first-order reduced generator."""
    return p.g * steady_state_strong(p)[1]


def first_order_frequency_ultra(p: QddUltraParams) -> float:
    return p.g * p.x_inf * p.sin_alpha


def omega_sz2_exact(p: QddStrongParams) -> float:
    """Coefficient of -i[T_z^2, .] in the second-order reduced generator."""
    D, w2, ks = p.delta, p.w2, p.k_sum
    return -16 * D * p.k_diff * w2**2 * p.g**2 / (ks * (4 * D**2 + ks**2 + 2 * w2**2) ** 2)


# bath-derived rates --------------------------------------------------------


def bath_dissipators_flat(b: BathSpec, w1: float) -> dict:
    om = b.omega_E + w1
    return {"kappa_minus": 2 * b.gamma**2 * b.density(om), "kappa_plus": 2 * b.gamma**2 * b.density(-om)}


def bath_dissipators_ultrastrong(b: BathSpec, p: QddStrongParams) -> dict:
    om = b.omega_E + p.w1
    L, s, c = p.Lam, p.sin_alpha, p.cos_alpha
    G = b.density
    h = b.gamma**2 / 2
    return {
        "kappa_ax": h * (G(om) + G(-om)) * c**2,
        "kappa_am": h * (G(om + L) * (1 + s) ** 2 + G(-om + L) * (1 - s) ** 2),
        "kappa_ap": h * (G(-om - L) * (1 + s) ** 2 + G(om - L) * (1 - s) ** 2),
    }


def rwa_averaged_dissipator(kappa_minus: float, kappa_plus: float, sin_a: float, cos_a: float, Lam: float, n_nodes: int = 64) -> np.ndarray:
    """Average of kappa_- D_{s-(t)} + kappa_+ D_{s+(t)} over one rotation about sigma_ax."""
    sa = sigma_ax(sin_a, cos_a)
    T = 2 * np.pi / Lam
    S = np.zeros((4, 4), dtype=complex)
    for t in np.arange(n_nodes) * T / n_nodes:
        U = sla.expm(0.5j * Lam * t * sa)
        S += kappa_minus * build_dissipator(U @ SM @ dag(U)) + kappa_plus * build_dissipator(U @ SP @ dag(U))
    return S / n_nodes


# optimum-shape classification -------------------------------------------

N_TH_THRESHOLD = np.sqrt(3) / 3 - 0.5


class Shape(str, enum.Enum):
    LOCAL_MAX = "LOCAL_MAX"
    MONOTONE_DECREASING = "MONOTONE_DECREASING"


@dataclass(frozen=True)
class ShapeResult:
    shape: Shape
    w2_max: float | None
    kappa_max: float | None
    bound: float | None


def detuning_bound(n_th: float) -> float:
    """Upper bound on Delta^2 / kappa1^2 for an interior maximum above the threshold."""
    q = 12 * n_th**2 + 12 * n_th - 1
    if q <= 0:
        return np.inf
    r = np.sqrt(q)
    return (2 * n_th + 1) ** 2 * (2 * np.sqrt(3) * (2 * n_th + 1) + r) / (4 * r)


def _stationary_quadratic(p: QddStrongParams) -> tuple:
    """Coefficients (A, B, C) of A u^2 + B u + C, proportional to d kappa_sz / d(w2^2)."""
    D, km, kp = p.delta, p.kappa_minus, p.kappa_plus
    ks = km + kp
    a = 4 * D**2 + ks**2
    c0 = 4 * kp * km * a**2
    c1 = 64 * kp * km * D**2 + 8 * ks**2 * (km**2 + kp**2)
    return -8 * ks**2, 8 * ks**2 * a - 4 * c1, c1 * a - 6 * c0


def dksz_dw2(p: QddStrongParams) -> float:
    """Analytic derivative of the closed-form kappa_sz with respect to w2."""
    A, B, C = _stationary_quadratic(p)
    u = p.w2**2
    ks = p.k_sum
    a = 4 * p.delta**2 + ks**2
    pref = 2 * p.g**2 * a / ks**3
    return float(pref * (A * u * u + B * u + C) / (a + 2 * u) ** 4 * 2 * p.w2)


def thm3_classify(tp: ThermalParams, delta: float, g: float = 1.0) -> ShapeResult:
    if not tp.kappa1 > 0:
        raise ValueError("kappa1 must be > 0")
    n = tp.n_th
    bound = None
    if n < N_TH_THRESHOLD:
        shape = Shape.LOCAL_MAX
    else:
        bound = detuning_bound(n)
        shape = Shape.LOCAL_MAX if delta**2 / tp.kappa1**2 < bound else Shape.MONOTONE_DECREASING
    if shape is Shape.MONOTONE_DECREASING:
        return ShapeResult(shape, None, None, bound)
    base = QddStrongParams(g, 1.0, 0.0, delta, tp.kappa_minus, tp.kappa_plus)
    A, B, C = _stationary_quadratic(base)
    roots = np.roots([A, B, C])
    u = max(r.real for r in roots if abs(r.imag) <= 1e-12 * max(1.0, abs(r)) and r.real > 0)
    # polish on the analytic derivative in w2
    w = np.sqrt(u)

    def deriv(x):
        return dksz_dw2(QddStrongParams(g, 1.0, x, delta, tp.kappa_minus, tp.kappa_plus))

    lo, hi = w * (1 - 1e-6), w * (1 + 1e-6)
    if deriv(lo) > 0 > deriv(hi):
        w = brentq(deriv, lo, hi, xtol=1e-15 * w, rtol=1e-15, maxiter=200)
    kmax = ksz_closed_form(QddStrongParams(g, 1.0, w, delta, tp.kappa_minus, tp.kappa_plus))
    return ShapeResult(shape, float(w), float(kmax), bound)


def ksz_local_maxima(base: QddStrongParams, w2_grid) -> list:
    """Interior local maxima of kappa_sz along a w2 grid, refined on the analytic derivative.

    Returns (grid index, refined w2) pairs.
    """
    ws = np.asarray(w2_grid, dtype=float)
    vals = np.array([ksz_closed_form(replace(base, w2=w)) for w in ws])
    out = []
    for i in range(1, ws.size - 1):
        if vals[i] > vals[i - 1] and vals[i] >= vals[i + 1]:
            def deriv(x):
                return dksz_dw2(replace(base, w2=x))

            lo, hi = ws[i - 1], ws[i + 1]
            w = ws[i]
            if deriv(lo) > 0 > deriv(hi):
                w = brentq(deriv, lo, hi, xtol=1e-15 * max(1.0, hi), rtol=1e-15, maxiter=200)
            out.append((i, float(w)))
    return out
