"""Bohmian layer over :mod:`qworklab.field1d`.

Fields are built from spectral derivatives of psi (never of the unwrapped
phase or of the kinked amplitude |psi| at nodes). Trajectories follow the
guidance velocity with RK4, co-evolving psi in half steps so the RK4 midpoint
stages see the mid-step wavefunction.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

import numpy as np

from .field1d import FieldError, Grid1D, PotentialSpec, Propagator, Wavefunction, step_count

log = logging.getLogger(__name__)

NODE_EPS = 1e-8
EDGE_CELLS = 5


class TrajectoryEscape(FieldError):
    pass


@dataclass(frozen=True, eq=False)
class BohmFields:
    """Pointwise Bohmian quantities on the grid.

    Masked (near-node) entries of ``grad_s``, ``Q``, ``dQ``, ``force`` and
    ``E_local`` hold the value of the nearest valid cell.
    """

    x: np.ndarray
    R: np.ndarray
    grad_s: np.ndarray
    Q: np.ndarray
    dQ: np.ndarray
    force: np.ndarray
    E_local: np.ndarray
    V: np.ndarray
    dV: np.ndarray
    mask: np.ndarray
    mass: float
    time: float

    @property
    def velocity(self) -> np.ndarray:
        return self.grad_s / self.mass

    @property
    def density(self) -> np.ndarray:
        return self.R**2

    def qhj_residual(self) -> np.ndarray:
        """``E_local - (grad_s^2/2m + V + Q)`` on valid points."""
        r = self.E_local - (self.grad_s**2 / (2 * self.mass) + self.V + self.Q)
        return r[self.mask]


def _fill_masked(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    if mask.all():
        return values
    idx = np.arange(values.shape[-1])
    valid = idx[mask]
    pos = np.clip(np.searchsorted(valid, idx), 1, len(valid) - 1)
    left, right = valid[pos - 1], valid[pos]
    nearest = np.where(np.abs(idx - left) <= np.abs(right - idx), left, right)
    return values[..., nearest]


def _raw_fields(amp: np.ndarray, grid: Grid1D, V: PotentialSpec, t: float, node_eps: float = NODE_EPS):
    hbar, m = V.hbar, V.mass
    fk = np.fft.fft(amp)
    d1 = np.fft.ifft(1j * grid.k_odd * fk)
    d2 = np.fft.ifft(-(grid.k**2) * fk)
    d3 = np.fft.ifft(-1j * grid.k_odd**3 * fk)
    rho = np.abs(amp) ** 2
    peak = rho.max()
    mask = rho >= node_eps * peak
    if not (peak > 0 and mask.any()):
        raise FieldError("all grid points are masked as nodes")
    rho_safe = np.where(mask, rho, 1.0)
    R = np.sqrt(rho)
    R_safe = np.sqrt(rho_safe)

    psi_c = amp.conj()
    j = (psi_c * d1).imag
    drho = 2.0 * (psi_c * d1).real
    a = (psi_c * d2).real
    da = (d1.conj() * d2 + psi_c * d3).real
    dj = (psi_c * d2).imag

    u = j / rho_safe
    grad_s = hbar * u
    # R'' of |psi| by the chain rule: R' = rho'/(2R), R'' = (a + |psi'|^2 - R'^2) / R
    dR = drho / (2 * R_safe)
    d2R = (a + np.abs(d1) ** 2 - dR**2) / R_safe
    Q = -(hbar**2 / (2 * m)) * d2R / R_safe
    du = dj / rho_safe - j * drho / rho_safe**2
    dQ = -(hbar**2 / (2 * m)) * (da / rho_safe - a * drho / rho_safe**2 + 2 * u * du)

    Vx = V(grid.x, t)
    dV = V.gradient(grid.x, t)
    E_local = -(hbar**2 / (2 * m)) * a / rho_safe + Vx
    force = -(dV + dQ)

    stacked = np.stack([grad_s, Q, dQ, force, E_local])
    stacked = _fill_masked(stacked, mask)
    return R, stacked, Vx, dV, mask


def bohm_fields(psi: Wavefunction, V: PotentialSpec, node_eps: float = NODE_EPS) -> BohmFields:
    R, (grad_s, Q, dQ, force, E_local), Vx, dV, mask = _raw_fields(
        psi.amplitudes, psi.grid, V, psi.time, node_eps)
    return BohmFields(psi.grid.x, R, grad_s, Q, dQ, force, E_local, Vx, dV, mask, V.mass, psi.time)


def ehrenfest_quantum_force(psi: Wavefunction, V: PotentialSpec) -> float:
    """``integral |psi|^2 dQ/dx dx`` over valid points."""
    f = bohm_fields(psi, V)
    return float(np.sum((f.density * f.dQ)[f.mask]) * psi.grid.dx)


def sample_quantum_equilibrium(psi: Wavefunction, n: int, seed) -> np.ndarray:
    """Draw ``n`` positions from |psi|^2 by inverse CDF, linear within cells.

    Cell ``i`` covers ``[x_i - dx/2, x_i + dx/2)`` and carries mass
    ``|psi_i|^2 dx`` (the same quadrature that normalizes psi).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    cdf_x, cdf = density_cdf(psi)
    u = rng.random(n)
    return np.interp(u, cdf, cdf_x)


def density_cdf(psi: Wavefunction):
    """Piecewise-linear CDF of the cell-constant |psi|^2 histogram (nodes, values)."""
    g = psi.grid
    w = psi.density * g.dx
    cdf = np.concatenate([[0.0], np.cumsum(w)])
    cdf /= cdf[-1]
    edges = g.x_min - 0.5 * g.dx + g.dx * np.arange(g.n_points + 1)
    return edges, cdf


def ks_statistic(samples: np.ndarray, psi: Wavefunction) -> float:
    """Kolmogorov-Smirnov distance between samples and the |psi|^2 CDF."""
    xs = np.sort(np.asarray(samples, dtype=float))
    n = xs.size
    edges, cdf = density_cdf(psi)
    f = np.interp(xs, edges, cdf)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_bound(n: int, dx: float = 0.0, sigma: float = 1.0) -> float:
    return 1.63 / np.sqrt(n) + 2 * dx / sigma


def _cubic_stencil(x: np.ndarray, grid: Grid1D):
    s = (x - grid.x_min) / grid.dx
    i = np.floor(s).astype(int)
    t = s - i
    n = grid.n_points
    idx = np.stack([(i - 1) % n, i % n, (i + 1) % n, (i + 2) % n])
    w = np.stack([
        -t * (t - 1) * (t - 2) / 6,
        (t + 1) * (t - 1) * (t - 2) / 2,
        -(t + 1) * t * (t - 2) / 2,
        (t + 1) * t * (t - 1) / 6,
    ])
    return idx, w


def interpolate(values: np.ndarray, x: np.ndarray, grid: Grid1D) -> np.ndarray:
    """4-point Lagrange (cubic) interpolation of grid fields at positions ``x``.

    ``values`` may be one field ``(n,)`` or a stack ``(k, n)``.
    """
    idx, w = _cubic_stencil(x, grid)
    return np.sum(values[..., idx] * w, axis=-2)


@dataclass(eq=False)
class Trajectory:
    """A Bohmian path with the fields sampled along it at every full step."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    V_samples: np.ndarray
    Q_samples: np.ndarray
    Elocal_samples: np.ndarray
    force_samples: np.ndarray
    dVdt_samples: np.ndarray
    dQdt_samples: np.ndarray
    mass: float = 1.0
    traj_id: int = 0
    masked_samples: int = 0

    @property
    def kinetic(self) -> np.ndarray:
        return 0.5 * self.mass * self.velocities**2

    def newton_residual(self) -> np.ndarray:
        """``m dv/dt - F`` at interior samples (central differences)."""
        dt = np.diff(self.times)
        dvdt = (self.velocities[2:] - self.velocities[:-2]) / (dt[1:] + dt[:-1])
        return self.mass * dvdt - self.force_samples[1:-1]


TRAJECTORY_COLUMNS = ["traj_id", "t", "x", "v", "V", "Q", "E_local"]


def trajectories_to_csv(trajs: list[Trajectory], stride: int = 1) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    for tr in trajs:
        for k in range(0, len(tr.times), stride):
            w.writerow([tr.traj_id] + [f"{v:.16e}" for v in (
                tr.times[k], tr.positions[k], tr.velocities[k], tr.V_samples[k],
                tr.Q_samples[k], tr.Elocal_samples[k])])
    return buf.getvalue()


class _FieldSnapshot:
    """Grid fields at one instant, stacked for a single interpolation pass."""

    __slots__ = ("t", "grid", "V", "stack", "mask", "amp")

    def __init__(self, amp, grid, V, t):
        R, stacked, Vx, dV, mask = _raw_fields(amp, grid, V, t)
        # rows: velocity, Q, force, E_local
        self.stack = np.stack([stacked[0] / V.mass, stacked[1], stacked[3], stacked[4]])
        self.mask = mask
        self.t = t
        self.grid = grid
        self.V = V
        self.amp = amp

    def velocity(self, x):
        return interpolate(self.stack[0], x, self.grid)

    def sample(self, x):
        return interpolate(self.stack, x, self.grid)

    def masked_hits(self, x) -> int:
        idx, _ = _cubic_stencil(x, self.grid)
        return int(np.count_nonzero(~self.mask[idx[1]] | ~self.mask[idx[2]]))


def _check_interior(x: np.ndarray, grid: Grid1D, t: float) -> None:
    lo = grid.x_min + EDGE_CELLS * grid.dx
    hi = grid.x_min + (grid.n_points - 1 - EDGE_CELLS) * grid.dx
    bad = (x < lo) | (x > hi) | ~np.isfinite(x)
    if bad.any():
        k = int(np.argmax(bad))
        raise TrajectoryEscape(
            f"trajectory {k} left the trusted interior at t={t:.6g} (x={x[k]:.6g}, "
            f"interior [{lo:.6g}, {hi:.6g}])")


@dataclass(eq=False)
class TrajectoryRun:
    """Output of :func:`integrate_trajectories`, stored as ``(n_samples, n_traj)`` arrays."""

    times: np.ndarray
    positions: np.ndarray
    psi_final: Wavefunction
    snapshots: list[Wavefunction]
    masked_events: int
    mass: float
    samples: dict[str, np.ndarray] | None = None

    @property
    def n_traj(self) -> int:
        return self.positions.shape[1]

    def trajectory(self, j: int) -> Trajectory:
        if self.samples is None:
            raise ValueError("run was integrated without field recording")
        s = self.samples
        return Trajectory(
            times=self.times, positions=self.positions[:, j], velocities=s["v"][:, j],
            V_samples=s["V"][:, j], Q_samples=s["Q"][:, j], Elocal_samples=s["E"][:, j],
            force_samples=s["F"][:, j], dVdt_samples=s["dVdt"][:, j], dQdt_samples=s["dQdt"][:, j],
            mass=self.mass, traj_id=j)

    @property
    def trajectories(self) -> list[Trajectory]:
        return [self.trajectory(j) for j in range(self.n_traj)]


def integrate_trajectories(psi0: Wavefunction, V: PotentialSpec, x0s, t_final: float, dt: float,
                           snapshot_every: int | None = None, record_fields: bool = True) -> TrajectoryRun:
    """Co-evolve psi and Bohmian trajectories from ``psi0.time`` to ``t_final``.

    psi advances in two split steps of ``dt/2`` per RK4 step. Fields are
    sampled along each path at every full step; the partial time derivative
    of Q is taken from the half-step fields by central differences (one-sided
    second order at the ends). With ``record_fields=False`` only positions
    are kept.
    """
    grid = psi0.grid
    x = np.array(x0s, dtype=float).ravel()
    n_steps, dt = step_count(t_final - psi0.time, dt)
    _check_interior(x, grid, psi0.time)

    prop = Propagator(grid, V)
    h = 0.5 * dt
    t0 = psi0.time
    amp = psi0.amplitudes
    cur = _FieldSnapshot(amp, grid, V, t0)

    n_traj = x.size
    pos = np.empty((n_steps + 1, n_traj))
    pos[0] = x
    if record_fields:
        samp = np.empty((n_steps + 1, 4, n_traj))
        Vs = np.empty((n_steps + 1, n_traj))
        dVdt = np.empty((n_steps + 1, n_traj))
        q_fwd = np.empty((n_steps + 1, n_traj))   # Q(t_k + dt/2) at x_k
        q_bwd = np.empty((n_steps + 1, n_traj))   # Q(t_k - dt/2) at x_k
        samp[0] = cur.sample(x)
        Vs[0] = V(x, t0)
        dVdt[0] = V.time_derivative(x, t0)
    v_cur = cur.velocity(x)
    masked = cur.masked_hits(x)
    snapshots = [psi0] if snapshot_every else []

    for k in range(n_steps):
        t = t0 + k * dt
        amp_h = prop.step_array(amp, t, h)
        mid = _FieldSnapshot(amp_h, grid, V, t + h)
        amp = prop.step_array(amp_h, t + h, h)
        nxt = _FieldSnapshot(amp, grid, V, t + dt)

        k1 = v_cur
        k2 = mid.velocity(x + h * k1)
        k3 = mid.velocity(x + h * k2)
        k4 = nxt.velocity(x + dt * k3)
        x_old = x
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        _check_interior(x, grid, t + dt)
        pos[k + 1] = x
        masked += nxt.masked_hits(x)
        if record_fields:
            q_fwd[k] = interpolate(mid.stack[1], x_old, grid)
            q_bwd[k + 1] = interpolate(mid.stack[1], x, grid)
            samp[k + 1] = nxt.sample(x)
            v_cur = samp[k + 1, 0]
            Vs[k + 1] = V(x, t + dt)
            dVdt[k + 1] = V.time_derivative(x, t + dt)
            if k == 0:
                q_first_at_x0 = interpolate(nxt.stack[1], x_old, grid)
            if k == n_steps - 1:
                q_prev_at_xn = interpolate(cur.stack[1], x, grid)
        else:
            v_cur = nxt.velocity(x)
        if snapshot_every and (k + 1) % snapshot_every == 0:
            snapshots.append(Wavefunction(grid, amp, t + dt))
        cur = nxt

    if masked:
        log.info("%d trajectory samples touched node-masked cells", masked)

    times = t0 + dt * np.arange(n_steps + 1)
    samples = None
    if record_fields:
        Q = samp[:, 1]
        dQdt = np.empty_like(Q)
        dQdt[1:-1] = (q_fwd[1:-1] - q_bwd[1:-1]) / dt
        dQdt[0] = (-3 * Q[0] + 4 * q_fwd[0] - q_first_at_x0) / dt
        dQdt[-1] = (3 * Q[-1] - 4 * q_bwd[-1] + q_prev_at_xn) / dt
        samples = {"v": samp[:, 0], "Q": Q, "F": samp[:, 2], "E": samp[:, 3],
                   "V": Vs, "dVdt": dVdt, "dQdt": dQdt}
    return TrajectoryRun(times, pos, Wavefunction(grid, amp, times[-1]), snapshots, masked,
                         V.mass, samples)


def equivariance_check(trajectories, psi_t: Wavefunction, index: int = -1) -> float:
    """KS distance between trajectory positions at sample ``index`` and |psi_t|^2.

    ``trajectories`` is a :class:`TrajectoryRun`, a list of :class:`Trajectory`
    or a plain array of positions.
    """
    if isinstance(trajectories, TrajectoryRun):
        xs = trajectories.positions[index]
    elif isinstance(trajectories, np.ndarray):
        xs = trajectories
    else:
        xs = np.array([tr.positions[index] for tr in trajectories])
    if xs.size < 1000:
        raise ValueError("equivariance check needs at least 1000 trajectories")
    return ks_statistic(xs, psi_t)
