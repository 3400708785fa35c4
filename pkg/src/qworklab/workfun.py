"""Work functionals along Bohmian trajectories.

Mechanical work integrates total force times velocity along the path;
energetic work is the change of the local energy ``K + V + Q`` between the
endpoints. The two differ by the changes of the classical and quantum
potentials along the same path.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .bohmdyn import Trajectory, TrajectoryRun, bohm_fields
from .field1d import PotentialSpec, Wavefunction

MASKED_FRACTION_LIMIT = 0.01


class WorkError(RuntimeError):
    pass


def fsum_mean(values, weights=None) -> float:
    """Weighted mean with compensated summation."""
    values = np.asarray(values, dtype=float)
    if weights is None:
        return math.fsum(values) / values.size
    weights = np.asarray(weights, dtype=float)
    return math.fsum(values * weights) / math.fsum(weights)


@dataclass(frozen=True)
class WorkRecord:
    W_M: float
    W_E: float
    delta_K: float
    delta_V: float
    delta_Q: float
    traj_id: int = 0
    W_E_integral: float = float("nan")

    @property
    def decomposition_residual(self) -> float:
        """``W_E - (W_M + dV + dQ)``."""
        return self.W_E - (self.W_M + self.delta_V + self.delta_Q)

    @property
    def work_energy_residual(self) -> float:
        """``W_M - dK``."""
        return self.W_M - self.delta_K


def _check_uniform(traj: Trajectory) -> float:
    dt = np.diff(traj.times)
    if dt.size == 0:
        raise WorkError("trajectory has a single sample")
    if np.max(np.abs(dt - dt[0])) > 1e-9 * abs(dt[0]):
        raise WorkError("trajectory is not sampled on a uniform time step")
    return float(dt[0])


def mechanical_work(traj: Trajectory) -> float:
    """Simpson integral of ``F * v`` over the recorded samples."""
    _check_uniform(traj)
    if traj.masked_samples > MASKED_FRACTION_LIMIT * len(traj.times):
        raise WorkError("too many node-masked force samples for a reliable work integral")
    return float(simpson(traj.force_samples * traj.velocities, x=traj.times))


def energetic_work(traj: Trajectory) -> float:
    """Endpoint change of the local energy along the path."""
    return float(traj.Elocal_samples[-1] - traj.Elocal_samples[0])


def energetic_work_integral(traj: Trajectory) -> float:
    """Time integral of ``P + dV/dt + dQ/dt`` along the path.

    With ``F = -d(V + Q)/dx`` the power cancels the convective parts of the
    total derivatives, leaving the partial time derivatives of V and Q at the
    particle position. Agreement with :func:`energetic_work` checks the
    chain-rule identity numerically.
    """
    _check_uniform(traj)
    return float(simpson(traj.dVdt_samples + traj.dQdt_samples, x=traj.times))


def work_decomposition(traj: Trajectory, with_integral: bool = False) -> WorkRecord:
    dK = float(traj.kinetic[-1] - traj.kinetic[0])
    dV = float(traj.V_samples[-1] - traj.V_samples[0])
    dQ = float(traj.Q_samples[-1] - traj.Q_samples[0])
    return WorkRecord(
        W_M=mechanical_work(traj),
        W_E=energetic_work(traj),
        delta_K=dK,
        delta_V=dV,
        delta_Q=dQ,
        traj_id=traj.traj_id,
        W_E_integral=energetic_work_integral(traj) if with_integral else float("nan"),
    )


def run_work_records(run: TrajectoryRun, with_integral: bool = False) -> list[WorkRecord]:
    """Vectorized :func:`work_decomposition` over every trajectory of a run."""
    s = run.samples
    if s is None:
        raise WorkError("run was integrated without field recording")
    t = run.times
    K = 0.5 * run.mass * s["v"] ** 2
    WM = simpson(s["F"] * s["v"], x=t, axis=0)
    WE = s["E"][-1] - s["E"][0]
    WEi = simpson(s["dVdt"] + s["dQdt"], x=t, axis=0) if with_integral else np.full(run.n_traj, np.nan)
    dK = K[-1] - K[0]
    dV = s["V"][-1] - s["V"][0]
    dQ = s["Q"][-1] - s["Q"][0]
    return [WorkRecord(float(WM[j]), float(WE[j]), float(dK[j]), float(dV[j]), float(dQ[j]), j, float(WEi[j]))
            for j in range(run.n_traj)]


def expected_power(psi: Wavefunction, V: PotentialSpec) -> float:
    """``integral |psi|^2 F v dx`` over valid (non-node) points."""
    f = bohm_fields(psi, V)
    dens = f.density * f.force * f.velocity
    return float(np.sum(dens[f.mask]) * psi.grid.dx)


def ensemble_kinetic_energy(psi: Wavefunction, V: PotentialSpec) -> float:
    """Bohmian ensemble kinetic energy ``integral |psi|^2 m v^2 / 2 dx``.

    Unlike the operator expectation of p^2/2m this changes under free
    evolution, as quantum potential energy is converted into motion.
    """
    f = bohm_fields(psi, V)
    dens = 0.5 * f.mass * f.density * f.velocity**2
    return float(np.sum(dens[f.mask]) * psi.grid.dx)


def power_terms(psi: Wavefunction, V: PotentialSpec) -> tuple[float, float]:
    """Instantaneous ensemble powers ``<-dV/dx v>`` and ``<dQ/dx v>``."""
    f = bohm_fields(psi, V)
    w = (f.density * f.velocity)[f.mask]
    dx = psi.grid.dx
    return float(np.sum(-f.dV[f.mask] * w) * dx), float(np.sum(f.dQ[f.mask] * w) * dx)


def power_split(psi_series: list[Wavefunction], V: PotentialSpec) -> tuple[float, float]:
    """Time integrals of the classical and quantum ensemble powers.

    ``classical - quantum`` is the expected mechanical work over the series.
    """
    if len(psi_series) < 2:
        raise WorkError("power split needs at least two snapshots")
    times = np.array([p.time for p in psi_series])
    dt = np.diff(times)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * abs(dt[0]):
        raise WorkError("snapshots must be uniformly spaced in time")
    terms = np.array([power_terms(p, V) for p in psi_series])
    return float(simpson(terms[:, 0], x=times)), float(simpson(terms[:, 1], x=times))


def expected_mechanical_work(psi_series: list[Wavefunction], V: PotentialSpec) -> float:
    """``<W_M>`` via the expected power density route."""
    times = np.array([p.time for p in psi_series])
    return float(simpson([expected_power(p, V) for p in psi_series], x=times))


@dataclass
class EnsembleWork:
    mean_W_M: float
    mean_W_E: float
    weights: np.ndarray
    per_traj: list[WorkRecord]

    @property
    def n(self) -> int:
        return len(self.per_traj)

    def _column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.per_traj])

    def stderr(self, name: str) -> float:
        """Standard error of a weighted mean, Kish effective sample size."""
        x = self._column(name)
        w = self.weights
        mean = fsum_mean(x, w)
        var = fsum_mean((x - mean) ** 2, w)
        n_eff = w.sum() ** 2 / np.sum(w**2)
        return float(math.sqrt(var / max(n_eff - 1.0, 1.0)))

    @property
    def stderr_W_M(self) -> float:
        return self.stderr("W_M")

    @property
    def stderr_W_E(self) -> float:
        return self.stderr("W_E")

    @property
    def mean_gap(self) -> float:
        """``<W_E> - <W_M> = <dV + dQ>``."""
        return self.mean_W_E - self.mean_W_M

    def exp_average(self, beta: float, kind: str = "W_E") -> float:
        return fsum_mean(np.exp(-beta * self._column(kind)), self.weights)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["traj_id", "W_M", "W_E", "dK", "dV", "dQ"])
        for r in self.per_traj:
            w.writerow([r.traj_id] + [f"{v:.16e}" for v in (r.W_M, r.W_E, r.delta_K, r.delta_V, r.delta_Q)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "n": self.n,
            "mean_W_M": self.mean_W_M,
            "mean_W_E": self.mean_W_E,
            "stderr_W_M": self.stderr_W_M,
            "stderr_W_E": self.stderr_W_E,
            "mean_gap": self.mean_gap,
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2)


def ensemble_work(records: list[WorkRecord], weights=None) -> EnsembleWork:
    n = len(records)
    if n == 0:
        raise WorkError("empty ensemble")
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise WorkError(f"got {w.size} weights for {n} records")
    if abs(w.sum() - 1.0) > 1e-10 or np.any(w < 0):
        raise WorkError("weights must be non-negative and sum to 1")
    wm = fsum_mean([r.W_M for r in records], w)
    we = fsum_mean([r.W_E for r in records], w)
    return EnsembleWork(wm, we, w, list(records))
