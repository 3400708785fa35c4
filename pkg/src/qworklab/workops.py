"""Work operators for driven finite-dimensional processes.

Two notions of expected work are built here: the unitary-condition operator
``U^dag H' U - H`` and the two-point-measurement (TPM) operator, which is
diagonal in the initial energy basis. Work values follow the final-minus-initial
sign convention.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .qcore import (
    DensityState,
    Operator,
    QCoreError,
    Spectrum,
    dephase,
    expectation,
    is_hermitian,
    is_unitary,
    operator_to_dict,
    spectral,
)


# outcomes whose total probability is at roundoff level are dropped
ZERO_PROB = 1e-14


class WorkOpsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ProcessSpec:
    """Initial Hamiltonian, driving unitary and final Hamiltonian."""

    H_initial: Operator
    U: Operator
    H_final: Operator

    def __post_init__(self):
        dims = {self.H_initial.dim, self.U.dim, self.H_final.dim}
        if len(dims) != 1:
            raise WorkOpsError(f"dimension mismatch in process: {sorted(dims)}")
        if not is_hermitian(self.H_initial.entries, self.H_initial.tol):
            raise WorkOpsError("initial Hamiltonian is not Hermitian")
        if not is_hermitian(self.H_final.entries, self.H_final.tol):
            raise WorkOpsError("final Hamiltonian is not Hermitian")
        if not is_unitary(self.U.entries, self.U.tol):
            raise WorkOpsError("process unitary is not unitary")

    @property
    def dim(self) -> int:
        return self.U.dim

    def spectra(self) -> tuple[Spectrum, Spectrum]:
        return spectral(self.H_initial), spectral(self.H_final)

    def transition_probabilities(self) -> np.ndarray:
        """``p[i, f] = |<f|U|i>|^2`` in the spectral bases of H and H'."""
        s_i, s_f = self.spectra()
        amp = s_f.eigenvectors.conj().T @ self.U.entries @ s_i.eigenvectors
        return (np.abs(amp) ** 2).T


@dataclass(frozen=True)
class WorkDistribution:
    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.shape != p.shape or v.ndim != 1:
            raise WorkOpsError("values and probs must be 1-D arrays of equal length")
        if np.any(np.diff(v) <= 0):
            raise WorkOpsError("work values must be strictly ascending")
        if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-10:
            raise WorkOpsError("work probabilities are not a distribution")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    def as_dict(self) -> dict[float, float]:
        return dict(zip(self.values.tolist(), self.probs.tolist()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["value", "prob"])
        for v, p in zip(self.values, self.probs):
            w.writerow([f"{v:.16e}", f"{p:.16e}"])
        return buf.getvalue()


def unitary_work_operator(p: ProcessSpec) -> Operator:
    u = p.U.entries
    w = u.conj().T @ p.H_final.entries @ u - p.H_initial.entries
    w = (w + w.conj().T) / 2
    return Operator.observable(w)


def tpm_work_operator(p: ProcessSpec) -> Operator:
    """Sum over (i, f) of (E_f - E_i) p_{i,f} |i><i|."""
    s_i, s_f = p.spectra()
    probs = p.transition_probabilities()
    gaps = s_f.eigenvalues[None, :] - s_i.eigenvalues[:, None]
    diag = np.sum(gaps * probs, axis=1)
    vecs = s_i.eigenvectors
    w = (vecs * diag) @ vecs.conj().T
    return Operator.observable((w + w.conj().T) / 2)


def grouping_tolerance(p: ProcessSpec) -> float:
    s_i, s_f = p.spectra()
    scale = max(np.max(np.abs(s_i.eigenvalues)), np.max(np.abs(s_f.eigenvalues)))
    return 1e-9 * scale


def group_values(values, weights, tol: float) -> WorkDistribution:
    """Merge work values closer than ``tol`` (chained), summing their weights.

    Groups with total weight below ``ZERO_PROB`` are not reported.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(values, kind="stable")
    v, w = values[order], weights[order]
    out_v: list[float] = []
    out_w: list[float] = []
    start = 0
    for k in range(1, len(v) + 1):
        if k == len(v) or v[k] - v[k - 1] > tol:
            block_w = w[start:k]
            total = block_w.sum()
            if total > 0:
                centre = float(np.dot(v[start:k], block_w) / total)
            else:
                centre = float(v[start:k].mean())
            if total > ZERO_PROB:
                out_v.append(centre)
                out_w.append(float(total))
            start = k
    if not out_w:
        raise WorkOpsError("all work outcomes have zero probability")
    probs = np.array(out_w)
    return WorkDistribution(np.array(out_v), probs / probs.sum())


def tpm_distribution(p: ProcessSpec, rho: DensityState, tol: float | None = None) -> WorkDistribution:
    if rho.dim != p.dim:
        raise WorkOpsError(f"dimension mismatch: state {rho.dim} vs process {p.dim}")
    s_i, s_f = p.spectra()
    vecs = s_i.eigenvectors
    pops = np.einsum("ji,jk,ki->i", vecs.conj(), rho.matrix, vecs).real
    probs = p.transition_probabilities()
    gaps = s_f.eigenvalues[None, :] - s_i.eigenvalues[:, None]
    joint = pops[:, None] * probs
    if tol is None:
        tol = grouping_tolerance(p)
    return group_values(gaps.ravel(), joint.ravel(), tol)


def expected_work(dist: WorkDistribution) -> float:
    return float(np.dot(dist.values, dist.probs))


def dephased_unitary_work(p: ProcessSpec, rho: DensityState) -> float:
    """Unitary-condition expected work after erasing energy coherences of ``rho``."""
    s_i, _ = p.spectra()
    return expectation(dephase(rho, s_i), unitary_work_operator(p))


def counterexample_process(eps: float, eps_prime: float) -> ProcessSpec:
    """Two-level process H = eps|1><1| -> H' = eps'|1><1| with U = |0><+| + |1><-|."""
    plus = np.array([1.0, 1.0]) / np.sqrt(2)
    minus = np.array([1.0, -1.0]) / np.sqrt(2)
    e0, e1 = np.eye(2)
    u = np.outer(e0, plus) + np.outer(e1, minus)
    h = eps * np.outer(e1, e1)
    hp = eps_prime * np.outer(e1, e1)
    return ProcessSpec(Operator.observable(h), Operator.unitary_op(u), Operator.observable(hp))


@dataclass
class CounterexampleReport:
    eps: float
    eps_prime: float
    W_unitary: np.ndarray
    W_tpm: np.ndarray
    difference: np.ndarray
    offdiag_magnitude: float
    diagonals_agree: bool

    @property
    def expected_offdiag(self) -> float:
        return abs(self.eps_prime) / 2

    @property
    def operators_identical(self) -> bool:
        return bool(np.max(np.abs(self.difference)) < 1e-12)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "eps_prime": self.eps_prime,
            "W_unitary": operator_to_dict(self.W_unitary),
            "W_tpm": operator_to_dict(self.W_tpm),
            "difference": operator_to_dict(self.difference),
            "offdiag_magnitude": self.offdiag_magnitude,
            "expected_offdiag": self.expected_offdiag,
            "diagonals_agree": self.diagonals_agree,
            "operators_identical": self.operators_identical,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def ngt_counterexample(eps: float, eps_prime: float) -> CounterexampleReport:
    p = counterexample_process(eps, eps_prime)
    wu = unitary_work_operator(p).entries
    wt = tpm_work_operator(p).entries
    diff = wu - wt
    off = diff - np.diag(np.diag(diff))
    return CounterexampleReport(
        eps=float(eps),
        eps_prime=float(eps_prime),
        W_unitary=np.array(wu),
        W_tpm=np.array(wt),
        difference=diff,
        offdiag_magnitude=float(np.max(np.abs(off))),
        diagonals_agree=bool(np.max(np.abs(np.diag(diff))) < 1e-12 * max(1.0, abs(eps), abs(eps_prime))),
    )


def tpm_jarzynski(p: ProcessSpec, beta: float) -> tuple[float, float]:
    """TPM average of exp(-beta W) over a Gibbs initial state, and Z'/Z.

    Energies are shifted by the common ground energy before exponentiating;
    the shift cancels in both quantities.
    """
    if not beta > 0:
        raise WorkOpsError("beta must be positive")
    s_i, s_f = p.spectra()
    e_i, e_f = s_i.eigenvalues, s_f.eigenvalues
    shift = min(e_i.min(), e_f.min())
    bi = np.exp(-beta * (e_i - shift))
    bf = np.exp(-beta * (e_f - shift))
    z, zp = bi.sum(), bf.sum()
    probs = p.transition_probabilities()
    work = e_f[None, :] - e_i[:, None]
    estimate = float(np.sum((bi / z)[:, None] * probs * np.exp(-beta * work)))
    return estimate, float(zp / z)


def random_process(dim: int, seed, energy_scale: float = 1.0) -> ProcessSpec:
    """Random Hermitian initial/final Hamiltonians and a random unitary.

    Both Hamiltonians are rescaled to spectral radius ``energy_scale`` so
    that Boltzmann factors stay comparable across dimensions.
    """
    from .qcore import random_hermitian, random_unitary

    ss = np.random.SeedSequence(seed).spawn(3)
    seeds = [int(s.generate_state(1)[0]) for s in ss]

    def ham(s):
        h = random_hermitian(dim, s).entries
        return Operator.observable(h * (energy_scale / np.max(np.abs(np.linalg.eigvalsh(h)))))

    return ProcessSpec(ham(seeds[0]), random_unitary(dim, seeds[1]), ham(seeds[2]))


__all__ = [
    "ProcessSpec",
    "WorkDistribution",
    "WorkOpsError",
    "QCoreError",
    "unitary_work_operator",
    "tpm_work_operator",
    "tpm_distribution",
    "expected_work",
    "dephased_unitary_work",
    "counterexample_process",
    "ngt_counterexample",
    "tpm_jarzynski",
    "group_values",
    "random_process",
]
