"""Tunable two-level environments: closed-form induced dissipation and property harnesses."""
from __future__ import annotations

import enum
import itertools
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lindblad import DissipationChannel
from .floquet import CPReport, cp_structure_check, floquet_reduce_bipartite
from .linalg import SM, SP, SX, SY, SZ, build_dissipator, commutator_superop, random_hermitian, random_operator, spectral_split
from .stationary import CouplingSet, EnvModel, second_order_eliminate
from .tls import ThermalParams

RATE_NAMES = ("kappa_x", "kappa_y", "kappa_z", "kappa1", "n_th")


@dataclass(frozen=True)
class TunableEnvChannels:
    """Hermitian rates kappa_x,y,z plus thermal relaxation, each within (lo, hi) bounds.

    Missing bounds default to the single point given by the current value.
    """

    kappa_x: float
    kappa_y: float
    kappa_z: float
    thermal: ThermalParams
    bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        b = {k: tuple(float(x) for x in v) for k, v in self.bounds.items()}
        for k in b:
            if k not in RATE_NAMES:
                raise ValueError(f"unknown bound '{k}'")
        for k in RATE_NAMES:
            v = self.value(k)
            if v < 0:
                raise ValueError(f"{k} must be >= 0")
            lo, hi = b.setdefault(k, (v, v))
            if not 0 <= lo <= hi:
                raise ValueError(f"bounds for {k} are not ordered non-negative reals")
            if not lo - 1e-12 * max(1.0, hi) <= v <= hi + 1e-12 * max(1.0, hi):
                raise ValueError(f"{k} = {v} outside bounds [{lo}, {hi}]")
        object.__setattr__(self, "bounds", b)

    def value(self, name: str) -> float:
        if name in ("kappa1", "n_th"):
            return float(getattr(self.thermal, name))
        return float(getattr(self, name))

    @classmethod
    def from_values(cls, values: dict, bounds: dict | None = None) -> "TunableEnvChannels":
        return cls(
            values["kappa_x"], values["kappa_y"], values["kappa_z"],
            ThermalParams(values["kappa1"], values["n_th"]), bounds or {},
        )

    def with_values(self, **kw) -> "TunableEnvChannels":
        vals = {k: self.value(k) for k in RATE_NAMES}
        vals.update(kw)
        return TunableEnvChannels.from_values(vals, self.bounds)

    def env(self, delta: float = 0.0) -> EnvModel:
        th = self.thermal
        chans = (
            DissipationChannel(SX, self.kappa_x),
            DissipationChannel(SY, self.kappa_y),
            DissipationChannel(SZ, self.kappa_z),
            DissipationChannel(SM, th.kappa_minus),
            DissipationChannel(SP, th.kappa_plus),
        )
        return EnvModel(2, delta * SZ / 2, chans)

    @property
    def z_bar(self) -> float:
        k1, n = self.thermal.kappa1, self.thermal.n_th
        den = (1 + 2 * n) * k1 + 2 * (self.kappa_x + self.kappa_y)
        return -k1 / den if den > 0 else 0.0


@dataclass(frozen=True)
class DispersiveScenario:
    channels: TunableEnvChannels

    @property
    def c_minus(self) -> float:
        ch = self.channels
        return (1 + ch.thermal.n_th) * ch.thermal.kappa1 + ch.kappa_x + ch.kappa_y

    @property
    def c_plus(self) -> float:
        ch = self.channels
        return ch.thermal.n_th * ch.thermal.kappa1 + ch.kappa_x + ch.kappa_y

    @property
    def n_eff(self) -> float:
        ch = self.channels
        if ch.thermal.kappa1 == 0:
            return np.inf
        return ch.thermal.n_th + (ch.kappa_x + ch.kappa_y) / ch.thermal.kappa1


@dataclass(frozen=True)
class ResonantScenario:
    channels: TunableEnvChannels
    delta: float = 0.0

    @property
    def _thermal_part(self) -> float:
        th = self.channels.thermal
        return (1 + 2 * th.n_th) * th.kappa1 / 4

    @property
    def c_x(self) -> float:
        ch = self.channels
        return ch.kappa_y + ch.kappa_z + self._thermal_part

    @property
    def c_y(self) -> float:
        ch = self.channels
        return ch.kappa_x + ch.kappa_z + self._thermal_part

    @property
    def z_bar(self) -> float:
        return self.channels.z_bar


def dispersive_X(s: DispersiveScenario) -> float:
    """Induced rate on D_{T_z} per unit g^2: 4 c+ c- / (c+ + c-)^3."""
    cp, cm = s.c_plus, s.c_minus
    if not cp + cm > 0:
        raise ValueError("c_plus + c_minus must be > 0")
    return 4 * cp * cm / (cp + cm) ** 3


def resonant_X(s: ResonantScenario) -> np.ndarray:
    """2x2 induced-dissipation matrix over (T_x, T_y) per unit g^2."""
    cx, cy, z = s.c_x, s.c_y, s.z_bar
    den = s.delta**2 / 4 + cx * cy
    if not den > 0:
        raise ValueError("delta^2/4 + c_x c_y must be > 0")
    off = 1j * z * (cx + cy) / 2
    return np.array([[cy, off], [-off, cx]], dtype=complex) / den


def dispersive_instance(s: DispersiveScenario, g: float = 1.0, T_z=None) -> tuple:
    T_z = SZ / 2 if T_z is None else T_z
    return s.channels.env(0.0), CouplingSet(((T_z, SZ),), g)


def resonant_instance(s: ResonantScenario, g: float = 1.0, T_x=None, T_y=None) -> tuple:
    T_x = SX / 2 if T_x is None else T_x
    T_y = SY / 2 if T_y is None else T_y
    return s.channels.env(s.delta), CouplingSet(((T_x, SX), (T_y, SY)), g)


def random_channels(rng: np.random.Generator, hi: float = 5.0) -> TunableEnvChannels:
    kx, ky, kz, k1 = rng.uniform(0, hi, 4)
    return TunableEnvChannels(kx, ky, kz, ThermalParams(k1, rng.uniform(0, 2)))


# property harnesses --------------------------------------------------------


@dataclass(frozen=True)
class Prop1Report:
    alpha: float
    scale_hamiltonian: bool
    X: np.ndarray
    X_scaled: np.ndarray
    deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.deviation <= self.tolerance


def prop1_scaling_check(env: EnvModel, coupling: CouplingSet, alpha: float, scale_hamiltonian: bool = True) -> Prop1Report:
    """Compare X(alpha env) with X(env)/alpha.

    With H_E scaled too the identity is exact; with H_E fixed the tolerance is 2 |H_E| / gap.
    """
    if not alpha > 1:
        raise ValueError("alpha must be > 1")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        X = second_order_eliminate(env, coupling).entries
        Xs = second_order_eliminate(env.scaled(alpha, scale_hamiltonian), coupling).entries
    norm = float(np.linalg.norm(X))
    dev = float(np.linalg.norm(alpha * Xs - X)) / norm if norm > 0 else float(np.linalg.norm(Xs))
    if scale_hamiltonian:
        tol = 1e-12
    else:
        gap = spectral_split(env.liouvillian()).gap
        tol = max(1e-12, 2 * float(np.linalg.norm(env.H_E, 2)) / gap)
    return Prop1Report(alpha, scale_hamiltonian, X, Xs, dev, tol)


@dataclass(frozen=True)
class Prop2Violation:
    point: int
    channel: int
    term: int
    increase: float
    rates: tuple


@dataclass(frozen=True)
class Prop2Report:
    n_points: int
    n_checks: int
    violations: tuple

    @property
    def passed(self) -> bool:
        return not self.violations


def hermitian_channel_instance(rng: np.random.Generator, d_E: int = 2, n_channels: int = 3, n_terms: int = 2, d_T: int = 2, gap_ratio: float = 10.0):
    """Random (EnvModel, CouplingSet) with H_E = 0, Hermitian channels and gap/g = gap_ratio."""
    chans = tuple(DissipationChannel(random_hermitian(d_E, rng), rng.uniform(0.2, 3.0)) for _ in range(n_channels))
    env = EnvModel(d_E, np.zeros((d_E, d_E)), chans)
    gap = spectral_split(env.liouvillian()).gap
    terms = tuple((random_hermitian(d_T, rng), random_hermitian(d_E, rng)) for _ in range(n_terms))
    return env, CouplingSet(terms, gap / gap_ratio)


def prop2_monotonicity_check(
    rng: np.random.Generator,
    n_points: int = 50,
    d_E: int = 2,
    gap_ratio: float = 10.0,
    step: float = 1e-4,
    tol: float = 1e-10,
) -> Prop2Report:
    """Finite-difference check that each X_kk is non-increasing in each Hermitian channel rate."""
    if gap_ratio < 10:
        raise ValueError("gap_ratio must be >= 10")
    violations = []
    checks = 0
    for p in range(n_points):
        env, coupling = hermitian_channel_instance(rng, d_E=d_E, gap_ratio=gap_ratio)
        base = np.real(np.diag(second_order_eliminate(env, coupling).entries))
        for c, ch in enumerate(env.channels):
            chans = list(env.channels)
            chans[c] = DissipationChannel(ch.L, ch.rate * (1 + step))
            bumped = np.real(np.diag(second_order_eliminate(EnvModel(env.d_E, env.H_E, chans), coupling).entries))
            for k, (b0, b1) in enumerate(zip(base, bumped)):
                checks += 1
                if b1 - b0 > tol * max(abs(b0), 1e-300):
                    violations.append(Prop2Violation(p, c, k, float(b1 - b0), tuple(x.rate for x in env.channels)))
    return Prop2Report(n_points, checks, tuple(violations))


class LimitClass(str, enum.Enum):
    VANISHING = "VANISHING"
    FINITE = "FINITE"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class Prop3Report:
    deltas: np.ndarray
    norms: np.ndarray
    slope: float
    classification: LimitClass

    def rows(self) -> list:
        return [{"delta": float(d), "norm_X": float(n)} for d, n in zip(self.deltas, self.norms)]


def prop3_limit_scan(
    env: EnvModel,
    b_channels,
    coupling: CouplingSet,
    deltas,
    tail: int = 3,
    zero_tol: float = 1e-13,
) -> Prop3Report:
    """Scale the channels in ``b_channels`` by 1/delta and classify the trend of |X| as delta -> 0."""
    deltas = np.asarray(deltas, dtype=float)
    if deltas.size < 2 or np.any(deltas <= 0) or np.any(np.diff(deltas) >= 0):
        raise ValueError("deltas must be a strictly decreasing positive grid")
    b = set(b_channels)
    norms = []
    for d in deltas:
        chans = tuple(
            DissipationChannel(ch.L, ch.rate / d) if i in b else ch for i, ch in enumerate(env.channels)
        )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            X = second_order_eliminate(EnvModel(env.d_E, env.H_E, chans), coupling).entries
        norms.append(float(np.linalg.norm(X, 2)))
    norms = np.array(norms)
    ref = max(float(np.max(norms)), coupling.g**2)
    if np.all(norms <= zero_tol * ref):
        return Prop3Report(deltas, norms, np.nan, LimitClass.VANISHING)
    k = min(tail, deltas.size)
    ld, ln = np.log(deltas[-k:]), np.log(np.maximum(norms[-k:], 1e-300))
    slope = float(np.polyfit(ld, ln, 1)[0])
    spread = float(np.max(norms[-k:]) / np.min(norms[-k:]) - 1) if np.min(norms[-k:]) > 0 else np.inf
    if abs(slope - 1) <= 0.2:
        cls = LimitClass.VANISHING
    elif slope < 0.5 and spread <= 0.2:
        cls = LimitClass.FINITE
    else:
        cls = LimitClass.INCONCLUSIVE
    return Prop3Report(deltas, norms, slope, cls)


def prop3_documented_cases(deltas=None) -> dict:
    """The three two-level cases: name -> (report, expected class)."""
    deltas = np.logspace(-1, -4, 7) if deltas is None else deltas
    out = {}
    # rank-deficient steady state: only kappa1 at zero temperature plus kappa_z in D_b
    ch = TunableEnvChannels(0.0, 0.0, 1.0, ThermalParams(1.0, 0.0))
    env, cp = dispersive_instance(DispersiveScenario(ch), g=0.05)
    out["kz_dispersive"] = (prop3_limit_scan(env, [2], cp, deltas), LimitClass.VANISHING)
    ch = TunableEnvChannels(1.0, 0.0, 0.0, ThermalParams(1.0, 0.2))
    env, cp = dispersive_instance(DispersiveScenario(ch), g=0.05)
    out["kx_dispersive"] = (prop3_limit_scan(env, [0], cp, deltas), LimitClass.VANISHING)
    ch = TunableEnvChannels(1.0, 0.0, 0.5, ThermalParams(1.0, 0.2))
    env, cp = resonant_instance(ResonantScenario(ch, 0.3), g=0.05)
    out["kx_resonant"] = (prop3_limit_scan(env, [0], cp, deltas), LimitClass.FINITE)
    return out


def random_bipartite_reduction(rng: np.random.Generator, d_T: int, d_E: int = 2, target_ratio: float = 0.05):
    """Random environment and periodic coupling; eps chosen so eps |L1| / gap = target_ratio."""
    H_E = random_hermitian(d_E, rng)
    L_E = commutator_superop(H_E)
    for _ in range(rng.integers(2, 4)):
        L_E = L_E + rng.uniform(0.5, 2.0) * build_dissipator(random_operator(d_E, rng))
    split = spectral_split(L_E)
    modes = {0: [(random_hermitian(d_T, rng), random_hermitian(d_E, rng))],
             1: [(random_operator(d_T, rng), random_operator(d_E, rng))]}
    norms = 2 * np.linalg.norm(np.kron(*modes[0][0]), 2) + 4 * np.linalg.norm(np.kron(*modes[1][0]), 2)
    eps = target_ratio * split.gap / norms
    return floquet_reduce_bipartite(L_E, split, modes, rng.uniform(0.5, 3.0), eps, d_T)


def thm4_structure_check(rng: np.random.Generator, d_T: int) -> CPReport:
    return cp_structure_check(random_bipartite_reduction(rng, d_T))


def thm4_passed(rep: CPReport) -> bool:
    scale = max(rep.kossakowski_norm, 1e-300)
    return rep.kossakowski_min_eig > -1e-10 * scale and rep.first_order_dissipative_norm < 1e-10


# frontier scan -------------------------------------------------------------


OBJECTIVES = ("trace", "max_eig", "channel")


def objective_value(ch: TunableEnvChannels, scenario: str, objective: str = "trace", delta: float = 0.0, channel: int = 0) -> float:
    if scenario == "dispersive":
        X = np.array([[dispersive_X(DispersiveScenario(ch))]])
    elif scenario == "resonant":
        X = resonant_X(ResonantScenario(ch, delta))
    else:
        raise ValueError(f"unknown scenario '{scenario}'")
    if objective == "trace":
        return float(np.trace(X).real)
    if objective == "max_eig":
        return float(np.linalg.eigvalsh(X)[-1])
    if objective == "channel":
        return float(X[channel, channel].real)
    raise ValueError(f"unknown objective '{objective}'")


@dataclass(frozen=True)
class FrontierResult:
    names: tuple
    points: np.ndarray
    values: np.ndarray
    argmin: dict
    argmax: dict
    min_at_bound: dict
    max_at_bound: dict

    @property
    def min_value(self) -> float:
        return float(np.min(self.values))

    @property
    def max_value(self) -> float:
        return float(np.max(self.values))


def _axis(lo: float, hi: float, n: int) -> np.ndarray:
    return np.array([lo]) if lo == hi else np.linspace(lo, hi, n)


def _eval_point(args) -> float:
    vals, scenario, objective, delta, channel = args
    ch = TunableEnvChannels.from_values(dict(zip(RATE_NAMES, vals)))
    try:
        return objective_value(ch, scenario, objective, delta, channel)
    except ValueError:
        return np.nan


def rate_frontier_scan(
    bounds: TunableEnvChannels,
    scenario: str,
    objective: str = "trace",
    resolution: int = 5,
    delta: float = 0.0,
    channel: int = 0,
    workers: int = 1,
) -> FrontierResult:
    """Grid scan of the objective over the admissible rates."""
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    axes = [_axis(*bounds.bounds[k], resolution) for k in RATE_NAMES]
    pts = np.array(list(itertools.product(*axes)), dtype=float)
    jobs = [(tuple(p), scenario, objective, delta, channel) for p in pts]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            vals = np.array(list(ex.map(_eval_point, jobs, chunksize=max(1, len(jobs) // (4 * workers)))))
    else:
        vals = np.array([_eval_point(j) for j in jobs])
    if np.all(np.isnan(vals)):
        raise ValueError("objective undefined on the whole grid")
    imin, imax = int(np.nanargmin(vals)), int(np.nanargmax(vals))

    def flags(i):
        return {k: bool(pts[i, j] in (bounds.bounds[k][0], bounds.bounds[k][1])) for j, k in enumerate(RATE_NAMES)}

    return FrontierResult(
        names=RATE_NAMES,
        points=pts,
        values=vals,
        argmin=dict(zip(RATE_NAMES, map(float, pts[imin]))),
        argmax=dict(zip(RATE_NAMES, map(float, pts[imax]))),
        min_at_bound=flags(imin),
        max_at_bound=flags(imax),
    )
