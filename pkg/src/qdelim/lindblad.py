"""Full-model assembly, time integration and one-period propagators."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from .errors import DimensionMismatchError, FitQualityError, NonHermitianError, NumericalFailureError, StiffnessError
from .linalg import (
    HERM_TOL,
    MAX_JOINT_DIM,
    build_dissipator,
    commutator_superop,
    dag,
    herm_defect,
    superop_dim,
    unvec,
    vec,
)


@dataclass(frozen=True)
class PeriodicHamiltonian:
    """H(t) = sum_n exp(i n w t) H_n; mode -n defaults to H_n^dag when absent."""

    base_freq: float
    modes: tuple

    def __post_init__(self):
        if not self.base_freq > 0:
            raise ValueError("base_freq must be positive")
        object.__setattr__(self, "modes", tuple((int(n), np.asarray(H, dtype=complex)) for n, H in self.modes))
        given = dict(self.modes)
        if len(given) != len(self.modes):
            raise ValueError("duplicate mode index")
        if 0 in given:
            raise ValueError("static part belongs in H_static, not mode 0")
        for n, H in given.items():
            if -n in given:
                scale = max(1.0, float(np.max(np.abs(H))))
                if np.max(np.abs(given[-n] - dag(H))) > HERM_TOL * scale:
                    raise NonHermitianError(f"modes {n} and {-n} are not adjoint")

    def full_modes(self) -> dict:
        out = dict(self.modes)
        for n, H in self.modes:
            out.setdefault(-n, dag(H))
        return dict(sorted(out.items()))

    def at(self, t: float) -> np.ndarray:
        return sum(np.exp(1j * n * self.base_freq * t) * H for n, H in self.full_modes().items())

    @property
    def period(self) -> float:
        return 2 * np.pi / self.base_freq


@dataclass(frozen=True)
class DissipationChannel:
    L: np.ndarray
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "L", np.asarray(self.L, dtype=complex))
        if not self.rate >= 0:
            raise ValueError(f"channel rate must be >= 0, got {self.rate}")


@dataclass(frozen=True)
class LindbladModel:
    """Target (x) environment model with static, periodic and dissipative parts."""

    d_T: int
    d_E: int
    H_static: np.ndarray
    H_periodic: PeriodicHamiltonian | None = None
    channels: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "H_static", np.asarray(self.H_static, dtype=complex))
        object.__setattr__(self, "channels", tuple(self.channels))
        d = self.dim
        if d > MAX_JOINT_DIM:
            raise DimensionMismatchError(f"joint dimension {d} exceeds dense limit {MAX_JOINT_DIM}")
        if self.H_static.shape != (d, d):
            raise DimensionMismatchError(f"H_static has shape {self.H_static.shape}, expected {(d, d)}")
        if herm_defect(self.H_static) > HERM_TOL * max(1.0, float(np.max(np.abs(self.H_static)))):
            raise NonHermitianError("H_static is not Hermitian")
        for ch in self.channels:
            if ch.L.shape != (d, d):
                raise DimensionMismatchError(f"channel operator has shape {ch.L.shape}, expected {(d, d)}")
        if self.H_periodic is not None:
            for _, H in self.H_periodic.modes:
                if H.shape != (d, d):
                    raise DimensionMismatchError(f"periodic mode has shape {H.shape}, expected {(d, d)}")

    @property
    def dim(self) -> int:
        return self.d_T * self.d_E

    def dissipator(self) -> np.ndarray:
        d = self.dim
        out = np.zeros((d * d, d * d), dtype=complex)
        for ch in self.channels:
            out += ch.rate * build_dissipator(ch.L)
        return out

    def liouvillian_modes(self) -> dict:
        """Fourier modes of the generator; key 0 holds the static part."""
        modes = {0: commutator_superop(self.H_static) + self.dissipator()}
        if self.H_periodic is not None:
            for n, H in self.H_periodic.full_modes().items():
                modes[n] = commutator_superop(H)
        return modes


def liouvillian_at(model: LindbladModel, t: float) -> np.ndarray:
    H = model.H_static
    if model.H_periodic is not None:
        H = H + model.H_periodic.at(t)
    scale = max(1.0, float(np.max(np.abs(H))))
    if herm_defect(H) > HERM_TOL * scale:
        raise NonHermitianError(f"instantaneous Hamiltonian not Hermitian at t={t}")
    return commutator_superop(H) + model.dissipator()


class _Generator:
    """Callable L(t) assembled from precomputed Fourier modes."""

    def __init__(self, model: LindbladModel):
        self.modes = model.liouvillian_modes()
        self.omega = model.H_periodic.base_freq if model.H_periodic is not None else 0.0
        self.static = self.modes[0]
        self.periodic = [(n, S) for n, S in self.modes.items() if n != 0]

    def __call__(self, t: float) -> np.ndarray:
        out = self.static.copy()
        for n, S in self.periodic:
            out += np.exp(1j * n * self.omega * t) * S
        return out


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray = field(repr=False)

    def defects(self) -> dict:
        tr = np.abs(np.trace(self.states, axis1=1, axis2=2) - 1)
        herm = np.max(np.abs(self.states - np.conj(np.transpose(self.states, (0, 2, 1)))), axis=(1, 2))
        hermitized = (self.states + np.conj(np.transpose(self.states, (0, 2, 1)))) / 2
        min_eig = np.linalg.eigvalsh(hermitized)[:, 0]
        return {"trace": float(tr.max()), "hermiticity": float(herm.max()), "min_eigenvalue": float(min_eig.min())}

    def check(self, tol: float = 1e-8, pos_tol: float = 1e-7) -> None:
        d = self.defects()
        if d["trace"] > tol or d["hermiticity"] > tol or d["min_eigenvalue"] < -pos_tol:
            raise NumericalFailureError(f"trajectory invariants violated: {d}")

    def expect(self, observable) -> np.ndarray:
        O = np.asarray(observable)
        return np.einsum("ij,tji->t", O, self.states)


def integrate(
    model: LindbladModel,
    rho0,
    t_final: float,
    rel_tol: float = 1e-8,
    n_out: int = 201,
    t_eval=None,
    method: str = "RK45",
    check: bool = True,
) -> Trajectory:
    """Adaptive embedded Runge-Kutta integration of the master equation."""
    rho0 = np.asarray(rho0, dtype=complex)
    d = model.dim
    if rho0.shape != (d, d):
        raise DimensionMismatchError(f"rho0 has shape {rho0.shape}, expected {(d, d)}")
    if not t_final > 0:
        raise ValueError("t_final must be positive")
    gen = _Generator(model)
    if t_eval is None:
        t_eval = np.linspace(0.0, t_final, n_out)
    sol = solve_ivp(
        lambda t, y: gen(t) @ y,
        (0.0, t_final),
        vec(rho0),
        method=method,
        t_eval=t_eval,
        rtol=rel_tol,
        atol=rel_tol * 1e-2,
    )
    if sol.status != 0:
        steps = np.diff(sol.t)
        smallest = float(steps.min()) if steps.size else float("nan")
        reached = float(sol.t[-1]) if sol.t.size else 0.0
        raise StiffnessError(f"integration failed at t={reached:.6g} (smallest step {smallest:.3e}): {sol.message}")
    states = np.stack([unvec(sol.y[:, k], d) for k in range(sol.y.shape[1])])
    traj = Trajectory(times=sol.t, states=states)
    if check:
        traj.check()
    return traj


_SQ3 = np.sqrt(3.0)
_CF4_NODES = (0.5 - _SQ3 / 6, 0.5 + _SQ3 / 6)
_CF4_A = (0.25 + _SQ3 / 6, 0.25 - _SQ3 / 6)


def _cf4_propagator(gen: _Generator, t0: float, T: float, steps: int) -> np.ndarray:
    """Fourth-order commutator-free exponential integrator for dPhi/dt = L(t) Phi."""
    n = gen.static.shape[0]
    phi = np.eye(n, dtype=complex)
    h = T / steps
    a1, a2 = _CF4_A
    for k in range(steps):
        t = t0 + k * h
        A1 = gen(t + _CF4_NODES[0] * h)
        A2 = gen(t + _CF4_NODES[1] * h)
        phi = sla.expm(h * (a1 * A1 + a2 * A2)) @ phi
        phi = sla.expm(h * (a2 * A1 + a1 * A2)) @ phi
    return phi


def monodromy(
    model: LindbladModel,
    omega: float | None = None,
    tol: float = 1e-12,
    min_steps: int | None = None,
    max_steps: int = 2**16,
) -> np.ndarray:
    """One-period propagator of the (periodic) generator, Richardson-checked.

    Static models need an explicit ``omega`` and return ``expm(L * 2 pi / omega)``.
    """
    if model.H_periodic is None:
        if omega is None:
            raise ValueError("static model needs an explicit omega")
        return sla.expm(model.liouvillian_modes()[0] * 2 * np.pi / omega)
    if omega is not None and not np.isclose(omega, model.H_periodic.base_freq):
        raise ValueError("omega disagrees with the model's base frequency")
    gen = _Generator(model)
    T = model.H_periodic.period
    if min_steps is None:
        min_steps = 64
        stiff = float(np.linalg.norm(gen.static, 2)) / max(1e-300, _dissipation_scale(model))
        if stiff > 1e3:
            min_steps = 4096
    steps = min_steps
    prev = _cf4_propagator(gen, 0.0, T, steps)
    while True:
        steps *= 2
        cur = _cf4_propagator(gen, 0.0, T, steps)
        err = float(np.linalg.norm(cur - prev, 2)) / 15.0
        if err <= tol * max(1.0, float(np.linalg.norm(cur, 2))):
            return cur + (cur - prev) / 15.0
        if steps >= max_steps:
            raise StiffnessError(f"monodromy not converged with {steps} steps (error estimate {err:.3e})")
        prev = cur


def _dissipation_scale(model: LindbladModel) -> float:
    return sum(ch.rate * float(np.linalg.norm(ch.L, 2)) ** 2 for ch in model.channels)


def stroboscopic_trajectory(model: LindbladModel, rho0, n_periods: int, phi=None) -> Trajectory:
    """States at integer multiples of the drive period, propagated by the monodromy."""
    if phi is None:
        phi = monodromy(model)
    d = model.dim
    T = model.H_periodic.period
    v = vec(np.asarray(rho0, dtype=complex))
    states = [unvec(v, d)]
    for _ in range(n_periods):
        v = phi @ v
        states.append(unvec(v, d))
    return Trajectory(times=T * np.arange(n_periods + 1), states=np.stack(states))


def floquet_exponents(phi, period: float, count: int | None = None) -> np.ndarray:
    """log(mu)/period for monodromy eigenvalues mu, slowest (largest |mu|) first."""
    mu = np.linalg.eigvals(phi)
    order = np.argsort(-np.abs(mu))
    mu = mu[order]
    if count is not None:
        mu = mu[:count]
    return np.log(mu) / period


@dataclass(frozen=True)
class DecayFit:
    rate: float
    intercept: float
    r_squared: float
    residual: float
    n_points: int


def fit_decay_rate(traj: Trajectory, observable, t_start: float = 0.0, t_end: float | None = None) -> DecayFit:
    """Least-squares slope of log|<observable>| (the envelope) over a time window."""
    t = np.asarray(traj.times)
    y = np.abs(traj.expect(observable))
    mask = t >= t_start
    if t_end is not None:
        mask &= t <= t_end
    t, y = t[mask], y[mask]
    if t.size < 10:
        raise FitQualityError(f"need at least 10 samples in the window, got {t.size}")
    if np.any(y <= 0):
        raise FitQualityError("observable vanishes inside the fit window")
    logy = np.log(y)
    slope, intercept = np.polyfit(t, logy, 1)
    pred = intercept + slope * t
    ss_res = float(np.sum((logy - pred) ** 2))
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    if slope >= 0:
        raise FitQualityError(f"signal does not decay (slope {slope:.3e}, R^2 {r2:.3f})", r2)
    if r2 < 0.9:
        raise FitQualityError(f"oscillation-dominated signal: R^2 = {r2:.3f}, slope {slope:.3e}", r2)
    return DecayFit(
        rate=float(-slope),
        intercept=float(intercept),
        r_squared=r2,
        residual=float(np.sqrt(ss_res / t.size)),
        n_points=int(t.size),
    )
