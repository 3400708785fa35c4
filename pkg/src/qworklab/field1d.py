"""Single-particle Schrodinger dynamics on a periodic 1-D grid.

The kinetic term is applied exactly in Fourier space and the potential
pointwise (Strang splitting). Units default to hbar = m = 1.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np


class FieldError(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid1D:
    """Periodic grid on ``[x_min, x_min + n_points * dx)``."""

    n_points: int
    x_min: float
    dx: float

    def __post_init__(self):
        n = self.n_points
        if n < 64 or n & (n - 1):
            raise FieldError(f"n_points must be a power of two >= 64, got {n}")
        if not self.dx > 0:
            raise FieldError("dx must be positive")

    @classmethod
    def symmetric(cls, half_width: float, n_points: int = 1024, center: float = 0.0) -> Grid1D:
        dx = 2.0 * half_width / n_points
        return cls(n_points, center - half_width, dx)

    @property
    def length(self) -> float:
        return self.n_points * self.dx

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @cached_property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    @cached_property
    def k_odd(self) -> np.ndarray:
        # Nyquist mode has no well-defined odd derivative
        k = self.k.copy()
        k[self.n_points // 2] = 0.0
        return k


def spectral_derivatives(f: np.ndarray, grid: Grid1D, orders=(1, 2)) -> list[np.ndarray]:
    fk = np.fft.fft(f, axis=-1)
    out = []
    for order in orders:
        kk = grid.k_odd if order % 2 else grid.k
        out.append(np.fft.ifft((1j * kk) ** order * fk, axis=-1))
    return out


@dataclass(frozen=True)
class Ramp:
    """Scalar drive schedule ``start -> end`` over ``[t0, t0 + duration]``.

    ``shape`` is ``"linear"`` (constant rate) or ``"smooth"`` (cubic
    smoothstep, zero rate at both ends). Outside the window the value is held.
    """

    start: float
    end: float | None = None
    duration: float = 0.0
    t0: float = 0.0
    shape: str = "linear"

    def __post_init__(self):
        if self.shape not in ("linear", "smooth"):
            raise FieldError(f"unknown ramp shape {self.shape!r}")
        if self.end is None:
            object.__setattr__(self, "end", self.start)

    @classmethod
    def constant(cls, value: float) -> Ramp:
        return cls(value, value, 0.0)

    @property
    def is_static(self) -> bool:
        return self.end == self.start or self.duration <= 0

    def _s(self, t):
        if self.duration <= 0:
            return np.zeros_like(np.asarray(t, dtype=float)), np.zeros_like(np.asarray(t, dtype=float))
        u = np.clip((np.asarray(t, dtype=float) - self.t0) / self.duration, 0.0, 1.0)
        inside = (u > 0) & (u < 1)
        if self.shape == "linear":
            return u, np.where(inside, 1.0 / self.duration, 0.0)
        return u * u * (3 - 2 * u), np.where(inside, 6 * u * (1 - u) / self.duration, 0.0)

    def value(self, t):
        s, _ = self._s(t)
        return self.start + (self.end - self.start) * s

    def rate(self, t):
        _, ds = self._s(t)
        return (self.end - self.start) * ds

    def reversed(self, t_final: float) -> Ramp:
        """Schedule traversed backwards: ``value'(t) = value(t_final - t)``."""
        if self.duration <= 0:
            return self
        return Ramp(self.end, self.start, self.duration, t_final - self.t0 - self.duration, self.shape)


@dataclass(frozen=True)
class PotentialSpec:
    """Parametric potential ``V(x, t)`` together with the particle mass and hbar.

    kinds
    -----
    free        V = 0
    harmonic    V = m w^2 (x - center(t))^2 / 2   (center may be driven)
    stiffness   V = m w(t)^2 (x - center)^2 / 2  (w driven)
    barrier     V = height * exp(-(x - center)^2 / (2 width^2))
    """

    kind: str = "free"
    mass: float = 1.0
    hbar: float = 1.0
    omega: Ramp = field(default_factory=lambda: Ramp.constant(1.0))
    center: Ramp = field(default_factory=lambda: Ramp.constant(0.0))
    height: float = 0.0
    width: float = 1.0

    KINDS = ("free", "harmonic", "stiffness", "barrier")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise FieldError(f"unknown potential kind {self.kind!r}")
        if not (self.mass > 0 and self.hbar > 0):
            raise FieldError("mass and hbar must be positive")

    @classmethod
    def free(cls, mass: float = 1.0, hbar: float = 1.0) -> PotentialSpec:
        return cls("free", mass, hbar)

    @classmethod
    def harmonic(cls, omega: float = 1.0, center: Ramp | float = 0.0, mass: float = 1.0, hbar: float = 1.0):
        if not isinstance(center, Ramp):
            center = Ramp.constant(center)
        return cls("harmonic", mass, hbar, omega=Ramp.constant(omega), center=center)

    @classmethod
    def stiffness_ramp(cls, omega: Ramp, center: float = 0.0, mass: float = 1.0, hbar: float = 1.0):
        return cls("stiffness", mass, hbar, omega=omega, center=Ramp.constant(center))

    @classmethod
    def barrier(cls, height: float, width: float, center: float = 0.0, mass: float = 1.0, hbar: float = 1.0):
        return cls("barrier", mass, hbar, center=Ramp.constant(center), height=height, width=width)

    @property
    def is_static(self) -> bool:
        if self.kind == "free":
            return True
        return self.omega.is_static and self.center.is_static

    def reversed(self, t_final: float) -> PotentialSpec:
        return replace(self, omega=self.omega.reversed(t_final), center=self.center.reversed(t_final))

    def __call__(self, x, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "free":
            return np.zeros_like(x)
        c = self.center.value(t)
        if self.kind == "barrier":
            return self.height * np.exp(-((x - c) ** 2) / (2 * self.width**2))
        w = self.omega.value(t)
        return 0.5 * self.mass * w * w * (x - c) ** 2

    def gradient(self, x, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "free":
            return np.zeros_like(x)
        c = self.center.value(t)
        if self.kind == "barrier":
            return -(x - c) / self.width**2 * self(x, t)
        w = self.omega.value(t)
        return self.mass * w * w * (x - c)

    def time_derivative(self, x, t: float) -> np.ndarray:
        """Partial derivative of V with respect to t at fixed x."""
        x = np.asarray(x, dtype=float)
        if self.kind in ("free", "barrier"):
            return np.zeros_like(x)
        c, cdot = self.center.value(t), self.center.rate(t)
        w, wdot = self.omega.value(t), self.omega.rate(t)
        return self.mass * (w * wdot * (x - c) ** 2 - w * w * (x - c) * cdot)


@dataclass(frozen=True, eq=False)
class Wavefunction:
    grid: Grid1D
    amplitudes: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != (self.grid.n_points,):
            raise FieldError("amplitude array does not match grid")
        object.__setattr__(self, "amplitudes", a)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm2(self) -> float:
        return float(np.sum(self.density) * self.grid.dx)

    def normalized(self) -> Wavefunction:
        return replace(self, amplitudes=self.amplitudes / math.sqrt(self.norm2()))

    def overlap(self, other: Wavefunction) -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes) * self.grid.dx)

    def mean_x(self) -> float:
        return float(np.sum(self.grid.x * self.density) * self.grid.dx)

    def width(self) -> float:
        """Standard deviation of |psi|^2."""
        d = self.density * self.grid.dx
        m = np.sum(self.grid.x * d)
        return float(np.sqrt(np.sum((self.grid.x - m) ** 2 * d)))

    def edge_amplitude(self, cells: int = 1) -> float:
        a = np.abs(self.amplitudes)
        return float(max(a[:cells].max(), a[-cells:].max()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "re", "im", "density"])
        for x, z, d in zip(self.grid.x, self.amplitudes, self.density):
            w.writerow([f"{x:.16e}", f"{z.real:.16e}", f"{z.imag:.16e}", f"{d:.16e}"])
        return buf.getvalue()


def gaussian_packet(grid: Grid1D, sigma0: float, x0: float = 0.0, k0: float = 0.0) -> Wavefunction:
    """Minimum-uncertainty packet whose |psi|^2 has standard deviation ``sigma0``."""
    x = grid.x
    amp = (2 * np.pi * sigma0**2) ** -0.25 * np.exp(-((x - x0) ** 2) / (4 * sigma0**2) + 1j * k0 * x)
    return Wavefunction(grid, amp).normalized()


def free_gaussian_width(sigma0: float, t, mass: float = 1.0, hbar: float = 1.0):
    return sigma0 * np.sqrt(1.0 + (hbar * np.asarray(t) / (2 * mass * sigma0**2)) ** 2)


class Propagator:
    """Strang split-step propagator with cached kinetic phases.

    The potential is sampled at the midpoint of each step, which keeps the
    scheme second order for driven protocols.
    """

    def __init__(self, grid: Grid1D, V: PotentialSpec):
        self.grid = grid
        self.V = V
        self._kin: dict[float, np.ndarray] = {}
        self._static_half: dict[float, np.ndarray] = {}

    def kinetic_phase(self, dt: float) -> np.ndarray:
        ph = self._kin.get(dt)
        if ph is None:
            k = self.grid.k
            ph = np.exp(-1j * self.V.hbar * k * k * dt / (2 * self.V.mass))
            self._kin[dt] = ph
        return ph

    def potential_half_phase(self, t_mid: float, dt: float) -> np.ndarray:
        if self.V.is_static:
            ph = self._static_half.get(dt)
            if ph is None:
                ph = np.exp(-0.5j * self.V(self.grid.x, 0.0) * dt / self.V.hbar)
                self._static_half[dt] = ph
            return ph
        return np.exp(-0.5j * self.V(self.grid.x, t_mid) * dt / self.V.hbar)

    def step_array(self, amp: np.ndarray, t: float, dt: float) -> np.ndarray:
        half = self.potential_half_phase(t + 0.5 * dt, dt)
        out = half * np.fft.ifft(self.kinetic_phase(dt) * np.fft.fft(half * amp, axis=-1), axis=-1)
        if not np.all(np.isfinite(out)):
            raise FieldError("non-finite amplitudes after split step; check grid and dt")
        return out

    def step(self, psi: Wavefunction, dt: float) -> Wavefunction:
        if not dt > 0:
            raise FieldError("dt must be positive")
        return Wavefunction(psi.grid, self.step_array(psi.amplitudes, psi.time, dt), psi.time + dt)

    def evolve(self, psi: Wavefunction, t_final: float, dt: float, record_every: int | None = None):
        """Evolve to ``t_final`` in ``ceil((t_final - t) / dt)`` equal steps.

        With ``record_every`` the step count is rounded up to a multiple of it.

        Returns the final wavefunction, or the list of snapshots (including the
        initial one) when ``record_every`` is given.
        """
        n_steps, dt = step_count(t_final - psi.time, dt)
        if record_every and n_steps % record_every:
            # round up so the last snapshot lands on t_final
            n_steps += record_every - n_steps % record_every
            dt = (t_final - psi.time) / n_steps
        amp, t0 = psi.amplitudes, psi.time
        snaps = [psi] if record_every else None
        for i in range(n_steps):
            amp = self.step_array(amp, t0 + i * dt, dt)
            if record_every and (i + 1) % record_every == 0:
                snaps.append(Wavefunction(psi.grid, amp, t0 + (i + 1) * dt))
        if record_every:
            return snaps
        return Wavefunction(psi.grid, amp, t0 + n_steps * dt)


def step_count(span: float, dt: float) -> tuple[int, float]:
    """Number of equal steps covering ``span`` with step at most ``dt`` (plus that step)."""
    if not dt > 0:
        raise FieldError("dt must be positive")
    if span < 0:
        raise FieldError("cannot evolve backwards in time")
    n = max(1, math.ceil(span / dt - 1e-9))
    return n, span / n


def split_step(psi: Wavefunction, V: PotentialSpec, dt: float) -> Wavefunction:
    return Propagator(psi.grid, V).step(psi, dt)


def apply_hamiltonian(psi: Wavefunction, V: PotentialSpec) -> np.ndarray:
    amp = psi.amplitudes
    k = psi.grid.k
    kin = np.fft.ifft(V.hbar**2 * k * k / (2 * V.mass) * np.fft.fft(amp))
    return kin + V(psi.grid.x, psi.time) * amp


def hamiltonian_expectation(psi: Wavefunction, V: PotentialSpec) -> float:
    val = np.vdot(psi.amplitudes, apply_hamiltonian(psi, V)) * psi.grid.dx / psi.norm2()
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise FieldError(f"Hamiltonian expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def kinetic_expectation(psi: Wavefunction, V: PotentialSpec) -> float:
    fk = np.fft.fft(psi.amplitudes)
    k = psi.grid.k
    return float(np.sum(np.abs(fk) ** 2 * V.hbar**2 * k * k / (2 * V.mass)) / np.sum(np.abs(fk) ** 2))


def hermite_functions(x: np.ndarray, n_max: int) -> np.ndarray:
    """Normalized Hermite functions h_0..h_{n_max} of a dimensionless coordinate."""
    out = np.empty((n_max + 1, x.size))
    out[0] = np.pi**-0.25 * np.exp(-0.5 * x * x)
    if n_max >= 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(2, n_max + 1):
        out[n] = np.sqrt(2.0 / n) * x * out[n - 1] - np.sqrt((n - 1) / n) * out[n - 2]
    return out


def ho_eigenstates(grid: Grid1D, mass: float = 1.0, omega: float = 1.0, n_max: int = 0,
                   hbar: float = 1.0, center: float = 0.0, tol: float = 1e-8):
    """Harmonic-oscillator eigenstates ``0..n_max`` sampled on ``grid``.

    Returns ``(states, energies)``. Raises :class:`FieldError` when the grid
    cannot represent the requested states to ``tol`` (norm/orthogonality).
    """
    a = math.sqrt(hbar / (mass * omega))
    h = hermite_functions((grid.x - center) / a, n_max) / math.sqrt(a)
    gram = h @ h.T * grid.dx
    err = np.max(np.abs(gram - np.eye(n_max + 1)))
    if err > tol:
        raise FieldError(f"grid under-resolves HO eigenstates up to n={n_max} (Gram error {err:.2e})")
    states = [Wavefunction(grid, h[n].astype(complex)) for n in range(n_max + 1)]
    energies = hbar * omega * (np.arange(n_max + 1) + 0.5)
    return states, energies
