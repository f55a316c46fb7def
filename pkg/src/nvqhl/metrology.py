"""Fisher-information, leakage and coupling-benchmark diagnostics.

Derivatives are central finite differences.  All perturbed Hamiltonians for
one evaluation point are diagonalised in a single batch, so a full diagnostic
(CFI and QFI for M fields plus J) costs one call of ``NvModel.eigen`` on
2*(M+1)+1 matrices per drive amplitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from .nv import Control, InitialState, NvModel, NvWindowConfig, ObservableSpec, initial_state

SATURATION_TOL = 1e-12


@dataclass(frozen=True)
class FdSteps:
    delta_B: float = 10e-9
    delta_J: float = 1.0

    def __post_init__(self):
        if self.delta_B <= 0 or self.delta_J <= 0:
            raise ValueError("finite-difference steps must be positive")

    def halved(self) -> "FdSteps":
        return FdSteps(self.delta_B / 2, self.delta_J / 2)


@dataclass(frozen=True)
class FisherDiagnostics:
    F_B_diag: np.ndarray
    F_J: float
    F_BJ_cross: np.ndarray
    QFI_B_diag: np.ndarray
    QFI_J: float
    leakage: float
    p: float
    saturated: bool = False

    @property
    def F_B_sum(self) -> float:
        return float(np.sum(self.F_B_diag))

    @property
    def QFI_B_sum(self) -> float:
        return float(np.sum(self.QFI_B_diag))


def _perturbation_points(b: np.ndarray, J: float, steps: FdSteps):
    M = b.size
    pts_b = [b]
    pts_J = [J]
    for q in range(M):
        for sgn in (1.0, -1.0):
            bb = b.copy()
            bb[q] += sgn * steps.delta_B
            pts_b.append(bb)
            pts_J.append(J)
    for sgn in (1.0, -1.0):
        pts_b.append(b)
        pts_J.append(J + sgn * steps.delta_J)
    return np.array(pts_b), np.array(pts_J)


def _align(psi: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Remove the global phase of ``psi`` relative to ``ref``."""
    ov = np.vdot(ref, psi)
    return psi * (np.conj(ov) / abs(ov)) if abs(ov) > 0 else psi


def _qfi(psi: np.ndarray, plus: np.ndarray, minus: np.ndarray, delta: float) -> float:
    d = (_align(plus, psi) - _align(minus, psi)) / (2 * delta)
    val = np.vdot(d, d) - abs(np.vdot(psi, d)) ** 2
    return max(0.0, 4.0 * float(val.real))


def fisher_diagnostics_many(model: NvModel, b, J: float, controls: Sequence[Control],
                            inits: Sequence[InitialState],
                            steps: FdSteps = FdSteps()) -> list[FisherDiagnostics]:
    """CFI, QFI and leakage for several controls at one parameter point."""
    b = np.asarray(b, dtype=float)
    M = model.M
    pts_b, pts_J = _perturbation_points(b, float(J), steps)
    out: list[FisherDiagnostics | None] = [None] * len(controls)
    by_omega: dict[float, list[int]] = {}
    for i, u in enumerate(controls):
        by_omega.setdefault(u.omega, []).append(i)
    for omega, idxs in by_omega.items():
        eig = model.eigen(pts_b, pts_J, omega)
        for i in idxs:
            u, init = controls[i], InitialState(inits[i])
            psi = model.evolved(eig, init, [u.T])[0]  # (2M+3, dim)
            p = model.probability_of(psi, u.observable, clamp=False)
            p0 = float(p[0])
            dp_B = (p[1:2 * M + 1:2] - p[2:2 * M + 2:2]) / (2 * steps.delta_B)
            dp_J = (p[2 * M + 1] - p[2 * M + 2]) / (2 * steps.delta_J)
            var = p0 * (1.0 - p0)
            saturated = var < SATURATION_TOL
            if saturated:
                F_B = np.zeros(M)
                F_J = 0.0
                F_BJ = np.zeros(M)
            else:
                n = u.n_shots
                F_B = n * dp_B ** 2 / var
                F_J = float(n * dp_J ** 2 / var)
                F_BJ = n * dp_B * dp_J / var
            qfi_B = np.array([_qfi(psi[0], psi[1 + 2 * q], psi[2 + 2 * q], steps.delta_B)
                              for q in range(M)])
            qfi_J = _qfi(psi[0], psi[2 * M + 1], psi[2 * M + 2], steps.delta_J)
            out[i] = FisherDiagnostics(
                F_B_diag=F_B, F_J=F_J, F_BJ_cross=F_BJ, QFI_B_diag=qfi_B, QFI_J=qfi_J,
                leakage=float(model.leakage_of(psi[0])), p=p0, saturated=bool(saturated))
    return out  # type: ignore[return-value]


def fisher_diagnostics(cfg_or_model, b, J: float, u: Control, init,
                       steps: FdSteps = FdSteps()) -> FisherDiagnostics:
    model = cfg_or_model if isinstance(cfg_or_model, NvModel) else NvModel(cfg_or_model)
    return fisher_diagnostics_many(model, b, J, [u], [init], steps)[0]


# The two names below mirror the split between classical and quantum
# diagnostics; both come from the same batched evaluation.
cfi_diag = fisher_diagnostics
qfi_diag = fisher_diagnostics


@dataclass(frozen=True)
class CouplingBenchmark:
    qfi_prod_zero: float
    qfi_opt_zero: float
    gain: float
    eta_M: float
    qfi_prod_T: float
    qfi_opt_T_extrapolated: float
    sql_bound: float
    ideal_bound: float
    T_ref: float
    N_ref: int
    M: int
    generator_variance: float
    generator_gap: float
    angular_qfi_prod_zero: float
    angular_qfi_opt_zero: float

    def to_dict(self) -> dict:
        return asdict(self)


def crb_bound(n: float, fisher: float) -> float:
    """Single-parameter Cramer-Rao bound 1/sqrt(n F)."""
    if n <= 0 or fisher <= 0:
        return math.inf
    return 1.0 / math.sqrt(n * fisher)


def coupling_bounds(qfi_prod_T: float, qfi_prod_zero: float, qfi_opt_zero: float,
                    N_ref: int, M: int) -> dict[str, float]:
    """Gain-extrapolated bounds from zero-time and finite-time QFIs."""
    gain = qfi_opt_zero / qfi_prod_zero
    qfi_opt_T = qfi_prod_T * gain
    return {"gain": gain, "eta_M": gain / M, "qfi_opt_T_extrapolated": qfi_opt_T,
            "sql_bound": crb_bound(N_ref, qfi_prod_T),
            "ideal_bound": crb_bound(N_ref, qfi_opt_T)}


def coupling_benchmark(cfg: NvWindowConfig, b, J: float, T_ref: float, N_ref: int,
                       omega: float = 0.0, steps: FdSteps = FdSteps(),
                       model: NvModel | None = None) -> CouplingBenchmark:
    """Product-state versus spectral-gap coupling QFI for one window.

    The zero-time values use the dimensionless coupling generator
    sum_{q<r} V_qr/|q-r|^p: 4 Var(G) on the product Ramsey state and the
    squared spectral gap of G (saturated by the equal superposition of its
    extreme eigenvectors).  ``angular_*`` fields report the same quantities
    for the angular-unit generator.
    """
    if cfg.M < 2:
        raise ValueError("coupling benchmark needs M >= 2 (no pair terms)")
    model = model or NvModel(cfg)
    G = model.coupling_generator()
    psi = initial_state(InitialState.PRODUCT_RAMSEY, cfg.M)
    Gpsi = G @ psi
    mean = float(np.vdot(psi, Gpsi).real)
    var = float(np.vdot(Gpsi, Gpsi).real) - mean ** 2
    w = np.linalg.eigvalsh(G)
    gap = float(w[-1] - w[0])
    qfi_prod_zero = 4.0 * var
    qfi_opt_zero = gap ** 2
    u = Control(T=T_ref, omega=omega, observable=_pair_or_single(cfg.M), n_shots=int(N_ref))
    fd = fisher_diagnostics(model, b, J, u, InitialState.PRODUCT_RAMSEY, steps)
    bounds = coupling_bounds(fd.QFI_J, qfi_prod_zero, qfi_opt_zero, N_ref, cfg.M)
    a2 = cfg.angular_factor ** 2
    return CouplingBenchmark(
        qfi_prod_zero=qfi_prod_zero, qfi_opt_zero=qfi_opt_zero, gain=bounds["gain"],
        eta_M=bounds["eta_M"], qfi_prod_T=fd.QFI_J,
        qfi_opt_T_extrapolated=bounds["qfi_opt_T_extrapolated"],
        sql_bound=bounds["sql_bound"], ideal_bound=bounds["ideal_bound"],
        T_ref=T_ref, N_ref=int(N_ref), M=cfg.M, generator_variance=var,
        generator_gap=gap, angular_qfi_prod_zero=a2 * qfi_prod_zero,
        angular_qfi_opt_zero=a2 * qfi_opt_zero)


def _pair_or_single(M: int) -> ObservableSpec:
    return ObservableSpec.pair(1) if M >= 2 else ObservableSpec.single(1)


def sql_field_bound(gamma: float, T: float, n_shots: float, M: int,
                    angular_factor: float = 2 * math.pi) -> float:
    """SQL-type field uncertainty 1/(a gamma T sqrt(M n))."""
    if min(gamma, T, n_shots, M) <= 0:
        raise ValueError("all arguments must be positive")
    return 1.0 / (angular_factor * gamma * T * math.sqrt(M * n_shots))
