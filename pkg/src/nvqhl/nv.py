"""Local NV window model: Hamiltonian, initial states, readout and leakage.

Frequencies in the configuration are in Hz (gamma in Hz/T, J and Omega in Hz);
they are multiplied by ``angular_factor`` (2*pi by default) before entering
exp(-i T H).  Strain values are already angular (rad/s).

The Hamiltonian is real symmetric in the (|+1>, |0>, |-1>) product basis, so
the batched routines work on real arrays.  ``NvModel`` precomputes the
site-resolved pieces once per configuration and assembles whole particle
batches with a couple of broadcasts.
"""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import quantum
from .quantum import HermitianEigen

log = logging.getLogger(__name__)

GAMMA_NV = 28.025e9
P_CLAMP = 1e-12


class DriveForm(str, enum.Enum):
    EFFECTIVE_X = "EffectiveX"
    SPIN_X = "SpinX"


class InitialState(str, enum.Enum):
    PRODUCT_RAMSEY = "ProductRamsey"
    BELL_PAIRS = "BellPairs"


class Phase(str, enum.Enum):
    B = "Bphase"
    J = "Jphase"


@dataclass(frozen=True)
class ObservableSpec:
    """Ramsey-type readout: Xeff on site ``q`` or Xeff x Xeff on (q, q+1)."""

    kind: str  # "single" or "pair"
    q: int

    def __post_init__(self):
        if self.kind not in ("single", "pair"):
            raise ValueError(f"unknown observable kind {self.kind!r}")
        if self.q < 1:
            raise ValueError("site index must be >= 1")

    @classmethod
    def single(cls, q: int) -> "ObservableSpec":
        return cls("single", q)

    @classmethod
    def pair(cls, q: int) -> "ObservableSpec":
        return cls("pair", q)

    def validate(self, M: int) -> None:
        last = self.q + 1 if self.kind == "pair" else self.q
        if last > M:
            raise ValueError(f"observable {self.label} does not fit a window of {M} sites")

    @property
    def label(self) -> str:
        return f"X{self.q}" if self.kind == "single" else f"XX{self.q},{self.q + 1}"


@dataclass(frozen=True)
class Control:
    T: float
    omega: float
    observable: ObservableSpec
    n_shots: int
    phase: Phase = Phase.B

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("evolution time must be non-negative")
        if self.n_shots < 1:
            raise ValueError("n_shots must be positive")


@dataclass(frozen=True)
class NvWindowConfig:
    M: int
    gamma_abs: float = GAMMA_NV
    B_ref: float = 50e-6
    angular_factor: float = 2 * np.pi
    strain: tuple[float, ...] = ()
    dipolar_exponent: float = 3.0
    drive_form: DriveForm = DriveForm.EFFECTIVE_X

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("window length must be >= 1")
        if self.gamma_abs <= 0 or self.dipolar_exponent <= 0:
            raise ValueError("gamma_abs and dipolar_exponent must be positive")
        strain = tuple(float(s) for s in self.strain) or (0.0,) * self.M
        if len(strain) != self.M:
            raise ValueError(f"need {self.M} strain values, got {len(strain)}")
        object.__setattr__(self, "strain", strain)
        object.__setattr__(self, "drive_form", DriveForm(self.drive_form))


def _real(op: np.ndarray) -> np.ndarray:
    assert np.max(np.abs(op.imag)) < 1e-14
    return np.ascontiguousarray(op.real)


def _digits(M: int) -> np.ndarray:
    """(3**M, M) array of per-site basis digits, site 1 most significant."""
    idx = np.arange(3 ** M)
    return np.stack([(idx // 3 ** (M - 1 - k)) % 3 for k in range(M)], axis=1)


def _ramsey(M: int) -> np.ndarray:
    site = np.array([1.0, 1.0, 0.0]) / np.sqrt(2.0)
    psi = np.ones(1)
    for _ in range(M):
        psi = np.kron(psi, site)
    return psi.astype(complex)


def initial_state(spec: InitialState | str, M: int) -> np.ndarray:
    """Product Ramsey state, or Bell pairs on (1,2), (3,4), ... .

    An odd trailing site of a Bell-pair state is prepared in the Ramsey form.
    """
    spec = InitialState(spec)
    if M < 1:
        raise ValueError("M must be >= 1")
    if spec is InitialState.PRODUCT_RAMSEY:
        return _ramsey(M)
    bell = np.zeros(9)
    bell[0] = bell[4] = 1 / np.sqrt(2.0)  # |+1,+1> and |0,0>
    psi = np.ones(1)
    for _ in range(M // 2):
        psi = np.kron(psi, bell)
    if M % 2:
        psi = np.kron(psi, _ramsey(1).real)
    return psi.astype(complex)


def observable_matrix(spec: ObservableSpec, M: int) -> np.ndarray:
    spec.validate(M)
    xeff = quantum.spin1_site_ops()["Xeff"]
    if spec.kind == "single":
        return quantum.kron_embed(xeff, spec.q, M)
    return quantum.two_site_embed(xeff, xeff, spec.q, spec.q + 1, M)


def sensing_projector(M: int) -> np.ndarray:
    return np.diag((_digits(M) != 2).all(axis=1).astype(complex))


def _expect_batch(psi: np.ndarray, spec: ObservableSpec, M: int) -> np.ndarray:
    """Real <Xeff> or <Xeff Xeff> for a stack of states of shape (..., 3**M)."""
    t = psi.reshape(psi.shape[:-1] + (3,) * M)
    lead = psi.ndim - 1

    def take(arr, q, k):
        return np.take(arr, k, axis=lead + q - 1)

    if spec.kind == "single":
        a, b = take(t, spec.q, 0), take(t, spec.q, 1)
        val = a.conj() * b
    else:
        q, r = spec.q, spec.q + 1
        # after taking along q, site r moves down one axis
        t0, t1 = take(t, q, 0), take(t, q, 1)
        a00, a01 = take(t0, r - 1, 0), take(t0, r - 1, 1)
        a10, a11 = take(t1, r - 1, 0), take(t1, r - 1, 1)
        val = a00.conj() * a11 + a01.conj() * a10
    return 2.0 * val.reshape(val.shape[:lead] + (-1,)).sum(axis=-1).real


class NvModel:
    """Precomputed operator pieces for one window configuration."""

    def __init__(self, cfg: NvWindowConfig, threads: int = 1, chunk_bytes: float = 64e6):
        self.cfg = cfg
        self.M = cfg.M
        self.dim = 3 ** cfg.M
        self.threads = max(1, int(threads))
        self.chunk = max(1, int(chunk_bytes // (self.dim * self.dim * 8)))
        ops = quantum.spin1_site_ops()
        M, a = cfg.M, cfg.angular_factor
        digits = _digits(M)
        # per-site occupation of |+1> and |-1>; shape (M, dim)
        self._n_plus = (digits == 0).T.astype(float)
        self._n_minus = (digits == 2).T.astype(float)
        self._sense = (digits != 2).all(axis=1)

        strain_op = _real(ops["Sx"] @ ops["Sx"] - ops["Sy"] @ ops["Sy"])
        drive_site = 0.5 * _real(ops["Xeff"]) if cfg.drive_form is DriveForm.EFFECTIVE_X else _real(ops["Sx"])
        static = np.zeros((self.dim, self.dim))
        drive = np.zeros((self.dim, self.dim))
        for q in range(1, M + 1):
            static += cfg.strain[q - 1] * quantum.kron_embed(strain_op, q, M).real
            drive += quantum.kron_embed(drive_site, q, M).real
        self._static = static
        self._drive = a * drive
        self._generator = self.coupling_generator()
        self._coupling = a * self._generator

    def coupling_generator(self) -> np.ndarray:
        """Dimensionless sum_{q<r} V_qr / |q-r|^p."""
        ops = quantum.spin1_site_ops()
        M = self.M
        G = np.zeros((self.dim, self.dim))
        for q in range(1, M + 1):
            for r in range(q + 1, M + 1):
                V = sum(c * quantum.two_site_embed(ops[k], ops[k], q, r, M)
                        for c, k in ((1.0, "Sx"), (1.0, "Sy"), (-2.0, "Sz")))
                G += _real(V) / abs(q - r) ** self.cfg.dipolar_exponent
        return G

    # -- Hamiltonians -------------------------------------------------------

    def hamiltonians(self, b: np.ndarray, J: np.ndarray, omega: float) -> np.ndarray:
        """Real symmetric H for each row of ``b`` (N, M) and entry of ``J`` (N,)."""
        cfg = self.cfg
        b = np.atleast_2d(np.asarray(b, dtype=float))
        J = np.broadcast_to(np.asarray(J, dtype=float), b.shape[:1])
        g = cfg.angular_factor * cfg.gamma_abs
        diag = g * ((b - cfg.B_ref) @ self._n_plus + (b + cfg.B_ref) @ self._n_minus)
        H = J[:, None, None] * self._coupling + (self._static + omega * self._drive)
        idx = np.arange(self.dim)
        H[:, idx, idx] += diag
        return H

    def eigen(self, b: np.ndarray, J: np.ndarray, omega: float) -> HermitianEigen:
        """Batched decomposition, chunked and optionally threaded.

        Each matrix is diagonalised independently, so chunking and the thread
        count never change the result.
        """
        b = np.atleast_2d(np.asarray(b, dtype=float))
        J = np.broadcast_to(np.asarray(J, dtype=float), b.shape[:1])
        n = b.shape[0]
        w = np.empty((n, self.dim))
        v = np.empty((n, self.dim, self.dim))
        bounds = [(s, min(n, s + self.chunk)) for s in range(0, n, self.chunk)]

        def work(span):
            s, e = span
            w[s:e], v[s:e] = np.linalg.eigh(self.hamiltonians(b[s:e], J[s:e], omega))

        if self.threads > 1 and len(bounds) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                list(pool.map(work, bounds))
        else:
            for span in bounds:
                work(span)
        return HermitianEigen(w, v)

    # -- states and readout -------------------------------------------------

    @cached_property
    def _initial(self) -> dict[InitialState, np.ndarray]:
        return {s: initial_state(s, self.M) for s in InitialState}

    def evolved(self, eig: HermitianEigen, init: InitialState, times: Sequence[float]) -> np.ndarray:
        """States of shape (len(times), N, dim) for a batched decomposition."""
        V = eig.eigenvectors
        psi0 = self._initial[InitialState(init)]
        # V is real, so split complex products into real matmuls
        coeff = psi0.real @ V + 1j * (psi0.imag @ V)
        out = []
        for T in times:
            if T < 0:
                raise ValueError("evolution time must be non-negative")
            c = coeff * np.exp(-1j * eig.eigenvalues * T)
            re = np.matmul(V, c.real[..., None])[..., 0]
            im = np.matmul(V, c.imag[..., None])[..., 0]
            out.append(re + 1j * im)
        return np.stack(out)

    def expectations(self, psi: np.ndarray, spec: ObservableSpec) -> np.ndarray:
        spec.validate(self.M)
        return _expect_batch(psi, spec, self.M)

    def leakage_of(self, psi: np.ndarray) -> np.ndarray:
        pop = (np.abs(psi[..., self._sense]) ** 2).sum(axis=-1)
        return np.clip(1.0 - pop, 0.0, 1.0)

    def probability_of(self, psi: np.ndarray, spec: ObservableSpec, clamp: bool = True) -> np.ndarray:
        p = 0.5 * (1.0 + self.expectations(psi, spec))
        if clamp:
            clipped = np.clip(p, P_CLAMP, 1.0 - P_CLAMP)
            if log.isEnabledFor(logging.DEBUG):
                n = int(np.count_nonzero(clipped != p))
                if n:
                    log.debug("clamped %d probabilities", n)
            return clipped
        return p

    def point_state(self, b, J: float, u: Control, init: InitialState) -> np.ndarray:
        eig = self.eigen(np.asarray(b, dtype=float)[None, :], np.array([J]), u.omega)
        return self.evolved(eig, init, [u.T])[0, 0]


# -- single-point convenience wrappers --------------------------------------

def build_hamiltonian(cfg: NvWindowConfig, b: Sequence[float], J: float, omega: float) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape != (cfg.M,):
        raise ValueError(f"field vector must have {cfg.M} entries")
    return NvModel(cfg).hamiltonians(b[None, :], np.array([J]), omega)[0]


def success_probability(cfg: NvWindowConfig, b, J: float, u: Control,
                        init: InitialState | str, model: NvModel | None = None) -> float:
    model = model or NvModel(cfg)
    psi = model.point_state(b, J, u, InitialState(init))
    return float(model.probability_of(psi, u.observable))


def leakage(cfg: NvWindowConfig, b, J: float, u: Control,
            init: InitialState | str, model: NvModel | None = None) -> float:
    model = model or NvModel(cfg)
    psi = model.point_state(b, J, u, InitialState(init))
    return float(model.leakage_of(psi))
