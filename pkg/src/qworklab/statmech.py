"""Thermal ensembles and Jarzynski estimators.

Classical work uses a symplectic leapfrog with the drive held at half steps;
Bohmian work uses a Gibbs mixture of oscillator eigenstates, each sampled in
quantum equilibrium and evolved under the same protocol.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bohmdyn import integrate_trajectories, sample_quantum_equilibrium
from .field1d import Grid1D, PotentialSpec, Ramp, ho_eigenstates
from .workfun import run_work_records

GIBBS_TAIL = 1e-10


class StatMechError(ValueError):
    pass


@dataclass(frozen=True)
class CanonicalSpec:
    beta: float
    omega: float = 1.0
    mass: float = 1.0
    center: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise StatMechError("beta must be positive")


@dataclass(frozen=True)
class ProtocolSpec:
    """Drive of a harmonic trap: ``drag`` moves the centre, ``stiffness`` ramps omega.

    ``schedule`` is the driven parameter; ``t_span`` may exceed the ramp
    window, in which case the parameter is held at its final value.
    """

    kind: str
    schedule: Ramp
    t_span: float
    omega: float = 1.0
    mass: float = 1.0
    hbar: float = 1.0
    speed: str = "moderate"

    def __post_init__(self):
        if self.kind not in ("drag", "stiffness", "static"):
            raise StatMechError(f"unknown protocol kind {self.kind!r}")
        if self.speed not in ("quasi-static", "moderate", "fast"):
            raise StatMechError(f"unknown speed class {self.speed!r}")
        if not self.t_span > 0:
            raise StatMechError("t_span must be positive")

    @classmethod
    def drag(cls, distance: float, duration: float, omega: float = 1.0, t_span: float | None = None,
             shape: str = "linear", speed: str = "moderate", mass: float = 1.0) -> ProtocolSpec:
        return cls("drag", Ramp(0.0, distance, duration, shape=shape), t_span or duration, omega, mass, speed=speed)

    @classmethod
    def stiffness(cls, omega1: float, omega2: float, duration: float, t_span: float | None = None,
                  shape: str = "linear", speed: str = "moderate", mass: float = 1.0) -> ProtocolSpec:
        return cls("stiffness", Ramp(omega1, omega2, duration, shape=shape), t_span or duration, omega1, mass,
                   speed=speed)

    @classmethod
    def static(cls, omega: float = 1.0, t_span: float = 1.0, mass: float = 1.0) -> ProtocolSpec:
        return cls("static", Ramp.constant(omega), t_span, omega, mass, speed="quasi-static")

    @property
    def omega_initial(self) -> float:
        return float(self.schedule.value(0.0)) if self.kind != "drag" else self.omega

    @property
    def omega_final(self) -> float:
        return float(self.schedule.value(self.t_span)) if self.kind != "drag" else self.omega

    def trap(self, t):
        """(omega, centre) at time t."""
        if self.kind == "drag":
            return self.omega, self.schedule.value(t)
        return self.schedule.value(t), 0.0

    def hamiltonian(self, x, p, t):
        w, c = self.trap(t)
        return p * p / (2 * self.mass) + 0.5 * self.mass * w * w * (x - c) ** 2

    def dH_dlambda(self, x, t):
        """Derivative of H with respect to the driven parameter."""
        w, c = self.trap(t)
        if self.kind == "drag":
            return -self.mass * w * w * (x - c)
        return self.mass * w * (x - c) ** 2

    def potential(self) -> PotentialSpec:
        if self.kind == "drag":
            return PotentialSpec.harmonic(self.omega, self.schedule, mass=self.mass, hbar=self.hbar)
        if self.kind == "static":
            return PotentialSpec.harmonic(self.omega, mass=self.mass, hbar=self.hbar)
        return PotentialSpec.stiffness_ramp(self.schedule, mass=self.mass, hbar=self.hbar)

    def describe(self) -> dict:
        s = self.schedule
        return {"kind": self.kind, "start": s.start, "end": s.end, "duration": s.duration,
                "shape": s.shape, "t_span": self.t_span, "omega": self.omega, "speed": self.speed}


def classical_gibbs_sample(spec: CanonicalSpec, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    sx = 1.0 / math.sqrt(spec.beta * spec.mass * spec.omega**2)
    sp = math.sqrt(spec.mass / spec.beta)
    return spec.center + sx * rng.standard_normal(n), sp * rng.standard_normal(n)


@dataclass
class ClassicalWorkResult:
    work: np.ndarray
    delta_H: np.ndarray
    x_final: np.ndarray
    p_final: np.ndarray

    @property
    def bookkeeping_residual(self) -> np.ndarray:
        return self.work - self.delta_H


def classical_work(protocol: ProtocolSpec, x0, p0, dt: float) -> ClassicalWorkResult:
    """Work ``integral lambda_dot dH/dlambda dt`` along leapfrog trajectories.

    The parameter is held at ``lambda(t + dt/2)`` during each leapfrog step and
    updated between steps; the work increment of an update is the exact
    change of H at the current phase point, the midpoint rule for
    ``lambda_dot dH/dlambda dt``.
    """
    x = np.array(x0, dtype=float)
    p = np.array(p0, dtype=float)
    n_steps = max(1, math.ceil(protocol.t_span / dt - 1e-9))
    dt = protocol.t_span / n_steps
    m = protocol.mass
    H0 = protocol.hamiltonian(x, p, 0.0)
    work = np.zeros_like(x)
    t_prev_param = 0.0
    for k in range(n_steps):
        t_mid = (k + 0.5) * dt
        work += protocol.hamiltonian(x, p, t_mid) - protocol.hamiltonian(x, p, t_prev_param)
        w, c = protocol.trap(t_mid)
        k2 = m * w * w
        p -= 0.5 * dt * k2 * (x - c)
        x += dt * p / m
        p -= 0.5 * dt * k2 * (x - c)
        t_prev_param = t_mid
    work += protocol.hamiltonian(x, p, protocol.t_span) - protocol.hamiltonian(x, p, t_prev_param)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
        raise StatMechError("non-finite classical trajectory")
    return ClassicalWorkResult(work, protocol.hamiltonian(x, p, protocol.t_span) - H0, x, p)


def jackknife_mean(values) -> tuple[float, float]:
    """Mean and delete-one jackknife standard error."""
    y = np.asarray(values, dtype=float)
    n = y.size
    if n < 2:
        raise StatMechError("jackknife needs at least two samples")
    total = math.fsum(y)
    loo = (total - y) / (n - 1)
    mean_loo = loo.mean()
    se = math.sqrt((n - 1) / n * math.fsum((loo - mean_loo) ** 2))
    return total / n, se


def free_energy_diff(kind: str, beta: float, omega1: float, omega2: float, hbar: float = 1.0) -> float:
    if not (beta > 0 and omega1 > 0 and omega2 > 0):
        raise StatMechError("beta and frequencies must be positive")
    if kind == "classical-HO":
        return math.log(omega2 / omega1) / beta
    if kind == "quantum-HO":
        a1, a2 = beta * hbar * omega1 / 2, beta * hbar * omega2 / 2
        # log(sinh(a2)/sinh(a1)) written to stay finite for large arguments
        log_ratio = (a2 - a1) + math.log1p(-math.exp(-2 * a2)) - math.log1p(-math.exp(-2 * a1))
        return log_ratio / beta
    raise StatMechError(f"unknown free-energy kind {kind!r}")


@dataclass
class JarzynskiReport:
    estimate: float
    exact: float
    stderr: float
    n: int
    protocol: dict
    work_kind: str
    mean_work: float
    delta_F: float
    samples: list[tuple] = field(default_factory=list, repr=False)

    @property
    def gap(self) -> float:
        return self.estimate - self.exact

    @property
    def gap_sigmas(self) -> float:
        if self.stderr == 0:
            return 0.0 if self.gap == 0 else math.inf
        return abs(self.gap) / self.stderr

    def to_dict(self) -> dict:
        return {"estimate": self.estimate, "exact": self.exact, "stderr": self.stderr, "n": self.n,
                "protocol": self.protocol, "work_kind": self.work_kind, "mean_work": self.mean_work,
                "delta_F": self.delta_F, "gap": self.gap, "gap_sigmas": self.gap_sigmas}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "traj_id", "W", "exp_minus_beta_W"])
        for level, tid, work, ew in self.samples:
            w.writerow([level, tid, f"{work:.16e}", f"{ew:.16e}"])
        return buf.getvalue()


def classical_jarzynski(spec: CanonicalSpec, protocol: ProtocolSpec, n: int, seed, dt: float = 0.01
                        ) -> JarzynskiReport:
    if n < 1000:
        raise StatMechError("classical Jarzynski estimate needs n >= 1000")
    x0, p0 = classical_gibbs_sample(
        CanonicalSpec(spec.beta, protocol.omega_initial, protocol.mass, float(protocol.trap(0.0)[1])), n, seed)
    res = classical_work(protocol, x0, p0, dt)
    ew = np.exp(-spec.beta * res.work)
    est, se = jackknife_mean(ew)
    dF = free_energy_diff("classical-HO", spec.beta, protocol.omega_initial, protocol.omega_final)
    samples = [(0, i, float(w), float(e)) for i, (w, e) in enumerate(zip(res.work, ew))]
    return JarzynskiReport(est, math.exp(-spec.beta * dF), se, n, protocol.describe(), "classical",
                           float(np.mean(res.work)), dF, samples)


def quantum_gibbs_mixture(beta: float, omega: float, n_max: int | None = None, hbar: float = 1.0) -> np.ndarray:
    """Gibbs weights over oscillator levels ``0..n_max``.

    With ``n_max=None`` the smallest truncation whose discarded tail is below
    ``GIBBS_TAIL`` is used.
    """
    if not (beta > 0 and omega > 0):
        raise StatMechError("beta and omega must be positive")
    x = beta * hbar * omega
    needed = max(0, math.ceil(-math.log(GIBBS_TAIL) / x) - 1)
    if n_max is None:
        n_max = needed
    tail = math.exp(-x * (n_max + 1))
    if tail >= GIBBS_TAIL:
        raise StatMechError(f"n_max={n_max} leaves Gibbs tail {tail:.2e} >= {GIBBS_TAIL:g}")
    logw = -x * np.arange(n_max + 1)
    w = np.exp(logw - logw.max())
    return w / math.fsum(w)


def thermal_energy(beta: float, omega: float, hbar: float = 1.0) -> float:
    """``(hbar w / 2) coth(beta hbar w / 2)``."""
    a = beta * hbar * omega / 2
    return hbar * omega / 2 / math.tanh(a)


def bohmian_level_works(beta: float, omega: float, protocol: ProtocolSpec, n_traj: int, seed,
                        grid: Grid1D | None = None, dt: float = 0.01, n_max: int | None = None):
    """Per-level Bohmian work samples for a Gibbs mixture of oscillator eigenstates.

    Returns ``(weights, works)`` where ``works[n]`` maps ``"W_E"``/``"W_M"`` to
    arrays over the ``n_traj`` quantum-equilibrium trajectories of level ``n``.
    Each level draws from its own RNG stream spawned from ``seed``.
    """
    if abs(protocol.omega_initial - omega) > 1e-12:
        raise StatMechError("protocol must start from the Gibbs-state frequency")
    hbar, m = protocol.hbar, protocol.mass
    weights = quantum_gibbs_mixture(beta, omega, n_max, hbar)
    levels = len(weights)
    if grid is None:
        grid = default_oscillator_grid(levels - 1, min(protocol.omega_initial, protocol.omega_final), m, hbar)
    states, _ = ho_eigenstates(grid, m, omega, levels - 1, hbar)
    V = protocol.potential()
    streams = np.random.SeedSequence(seed).spawn(levels)
    works = []
    for n, psi in enumerate(states):
        x0 = np.sort(sample_quantum_equilibrium(psi, n_traj, streams[n]))
        run = integrate_trajectories(psi, V, x0, protocol.t_span, dt)
        recs = run_work_records(run)
        works.append({"W_E": np.array([r.W_E for r in recs]), "W_M": np.array([r.W_M for r in recs])})
    return weights, works


def jarzynski_from_levels(beta: float, protocol: ProtocolSpec, weights, works, work_kind: str) -> JarzynskiReport:
    """Combine per-level exponential averages with Gibbs weights.

    The standard error adds per-level jackknife errors in quadrature.
    """
    if work_kind not in ("W_E", "W_M"):
        raise StatMechError("work_kind must be 'W_E' or 'W_M'")
    means, ses, mean_work, samples = [], [], 0.0, []
    for n, (p, wk) in enumerate(zip(weights, works)):
        w = wk[work_kind]
        ew = np.exp(-beta * w)
        mu, se = jackknife_mean(ew)
        means.append(mu)
        ses.append(se)
        mean_work += p * float(np.mean(w))
        samples.extend((n, j, float(wj), float(ej)) for j, (wj, ej) in enumerate(zip(w, ew)))
    weights = np.asarray(weights)
    estimate = math.fsum(weights * np.array(means))
    stderr = math.sqrt(math.fsum((weights * np.array(ses)) ** 2))
    dF = free_energy_diff("quantum-HO", beta, protocol.omega_initial, protocol.omega_final, protocol.hbar)
    n_total = sum(len(wk[work_kind]) for wk in works)
    return JarzynskiReport(estimate, math.exp(-beta * dF), stderr, n_total, protocol.describe(),
                           work_kind, mean_work, dF, samples)


def bohmian_jarzynski(beta: float, omega: float, protocol: ProtocolSpec, n_traj: int, seed,
                      work_kind: str = "W_E", grid: Grid1D | None = None, dt: float = 0.01,
                      n_max: int | None = None) -> JarzynskiReport:
    """Exponentiated Bohmian work over a quantum Gibbs mixture, against exp(-beta dF)."""
    if work_kind not in ("W_E", "W_M"):
        raise StatMechError("work_kind must be 'W_E' or 'W_M'")
    weights, works = bohmian_level_works(beta, omega, protocol, n_traj, seed, grid, dt, n_max)
    return jarzynski_from_levels(beta, protocol, weights, works, work_kind)


def default_oscillator_grid(n_max: int, omega_min: float, mass: float = 1.0, hbar: float = 1.0,
                            n_points: int = 1024) -> Grid1D:
    """Grid wide enough for level ``n_max`` at the softest trap frequency."""
    a = math.sqrt(hbar / (mass * omega_min))
    half = max(20.0 * a, a * (math.sqrt(2 * n_max + 1) + 12.0))
    return Grid1D.symmetric(half, n_points)
