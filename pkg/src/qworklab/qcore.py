"""Finite-dimensional states, observables, unitaries and the energy-basis dephasing channel."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

VALIDITY_TOL = 1e-12
RECONSTRUCTION_TOL = 1e-10
IMAG_RESIDUE_TOL = 1e-10


class QCoreError(ValueError):
    pass


def _as_square(entries) -> np.ndarray:
    a = np.array(entries, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise QCoreError(f"expected a non-empty square matrix, got shape {a.shape}")
    a.setflags(write=False)
    return a


def is_hermitian(a: np.ndarray, tol: float = VALIDITY_TOL) -> bool:
    return bool(np.max(np.abs(a - a.conj().T)) <= tol)


def is_unitary(a: np.ndarray, tol: float = VALIDITY_TOL) -> bool:
    eye = np.eye(a.shape[0])
    return bool(np.max(np.abs(a.conj().T @ a - eye)) <= tol)


@dataclass(frozen=True, eq=False)
class Operator:
    """A dim x dim complex matrix, optionally flagged Hermitian or unitary.

    Flags are checked at construction; an operator flagged Hermitian that is
    not Hermitian to ``tol`` raises :class:`QCoreError`.
    """

    entries: np.ndarray
    hermitian: bool = False
    unitary: bool = False
    tol: float = VALIDITY_TOL

    def __post_init__(self):
        object.__setattr__(self, "entries", _as_square(self.entries))
        if self.hermitian and not is_hermitian(self.entries, self.tol):
            raise QCoreError("operator flagged Hermitian is not Hermitian")
        if self.unitary and not is_unitary(self.entries, self.tol):
            raise QCoreError("operator flagged unitary is not unitary")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def observable(cls, entries, tol: float = VALIDITY_TOL) -> Operator:
        return cls(entries, hermitian=True, tol=tol)

    @classmethod
    def unitary_op(cls, entries, tol: float = VALIDITY_TOL) -> Operator:
        return cls(entries, unitary=True, tol=tol)

    @classmethod
    def identity(cls, dim: int) -> Operator:
        return cls(np.eye(dim), hermitian=True, unitary=True)

    def dagger(self) -> Operator:
        return Operator(self.entries.conj().T, hermitian=self.hermitian, unitary=self.unitary, tol=self.tol)

    def __matmul__(self, other: Operator) -> Operator:
        return Operator(self.entries @ other.entries)

    def __sub__(self, other: Operator) -> Operator:
        return Operator(self.entries - other.entries,
                        hermitian=self.hermitian and other.hermitian, tol=max(self.tol, other.tol) * 2)

    def to_dict(self) -> dict:
        return operator_to_dict(self.entries)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict, **flags) -> Operator:
        return cls(matrix_from_dict(d), **flags)


@dataclass(frozen=True, eq=False)
class DensityState:
    matrix: np.ndarray
    tol: float = VALIDITY_TOL

    def __post_init__(self):
        m = _as_square(self.matrix)
        object.__setattr__(self, "matrix", m)
        if not is_hermitian(m, self.tol):
            raise QCoreError("density matrix is not Hermitian")
        tr = np.trace(m)
        if abs(tr - 1.0) > self.tol:
            raise QCoreError(f"density matrix trace {tr.real:.3e} != 1")
        if np.linalg.eigvalsh(m)[0] < -self.tol:
            raise QCoreError("density matrix has a negative eigenvalue")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def pure(cls, vec) -> DensityState:
        v = np.asarray(vec, dtype=complex)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> DensityState:
        return cls(np.eye(dim) / dim)

    def to_dict(self) -> dict:
        return operator_to_dict(self.matrix)

    @classmethod
    def from_dict(cls, d: dict) -> DensityState:
        return cls(matrix_from_dict(d))


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def projector(self, i: int) -> np.ndarray:
        v = self.eigenvectors[:, i]
        return np.outer(v, v.conj())

    def reconstruct(self) -> np.ndarray:
        vecs = self.eigenvectors
        return (vecs * self.eigenvalues) @ vecs.conj().T


def operator_to_dict(m: np.ndarray) -> dict:
    m = np.asarray(m, dtype=complex)
    return {"dim": int(m.shape[0]), "re": m.real.tolist(), "im": m.imag.tolist()}


def matrix_from_dict(d: dict) -> np.ndarray:
    m = np.array(d["re"], dtype=float) + 1j * np.array(d["im"], dtype=float)
    if m.shape != (d["dim"], d["dim"]):
        raise QCoreError(f"serialized shape {m.shape} does not match dim {d['dim']}")
    return m


def _check_dims(a: int, b: int) -> None:
    if a != b:
        raise QCoreError(f"dimension mismatch: {a} vs {b}")


def expectation(rho: DensityState, A: Operator) -> float:
    """Tr(rho A) for Hermitian ``A``."""
    _check_dims(rho.dim, A.dim)
    if not is_hermitian(A.entries, A.tol):
        raise QCoreError("expectation requires a Hermitian observable")
    val = np.trace(rho.matrix @ A.entries)
    if abs(val.imag) > IMAG_RESIDUE_TOL:
        raise QCoreError(f"imaginary residue {val.imag:.3e} in expectation value")
    return float(val.real)


def dephase(rho: DensityState, basis: Spectrum) -> DensityState:
    """Remove all coherences of ``rho`` in the given orthonormal basis."""
    _check_dims(rho.dim, basis.dim)
    vecs = basis.eigenvectors
    pops = np.einsum("ji,jk,ki->i", vecs.conj(), rho.matrix, vecs).real
    out = (vecs * pops) @ vecs.conj().T
    return DensityState(out)


def evolve(rho: DensityState, U: Operator) -> DensityState:
    _check_dims(rho.dim, U.dim)
    if not is_unitary(U.entries, U.tol):
        raise QCoreError("evolve requires a unitary operator")
    u = U.entries
    return DensityState(u @ rho.matrix @ u.conj().T)


def spectral(H: Operator) -> Spectrum:
    """Ascending eigendecomposition of a Hermitian operator.

    Within degenerate subspaces the basis is whatever ``numpy.linalg.eigh``
    returns; downstream quantities are covariant under that choice.
    """
    if not is_hermitian(H.entries, H.tol):
        raise QCoreError("spectral decomposition requires a Hermitian operator")
    h = (H.entries + H.entries.conj().T) / 2
    vals, vecs = np.linalg.eigh(h)
    return Spectrum(vals, vecs)


def random_state(dim: int, seed: int) -> DensityState:
    """Random density matrix from a normalized Gaussian purification."""
    if dim < 1:
        raise QCoreError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    m = g @ g.conj().T
    m = (m + m.conj().T) / 2
    return DensityState(m / np.trace(m).real)


def random_unitary(dim: int, seed: int) -> Operator:
    if dim < 1:
        raise QCoreError("dim must be >= 1")
    rng = np.random.default_rng(seed)
    g = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    d = np.diag(r)
    q = q * (d / np.abs(d))
    return Operator.unitary_op(q)


def random_hermitian(dim: int, seed: int, scale: float = 1.0) -> Operator:
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return Operator.observable(scale * (g + g.conj().T) / 2)
