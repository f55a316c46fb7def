"""Quick invariant self-checks behind ``nvqhl validate``."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import inference as inf
from . import quantum
from .metrics import dice_iou
from .metrology import coupling_bounds
from .nv import Control, InitialState, NvModel, NvWindowConfig, ObservableSpec
from .pipeline import enumerate_windows

Check = tuple[str, Callable[[], tuple[bool, str]]]


def _ramsey() -> tuple[bool, str]:
    cfg = NvWindowConfig(M=1)
    model = NvModel(cfg)
    worst = 0.0
    for b in np.linspace(45e-6, 60e-6, 10):
        for T in np.linspace(0.0, 11e-6, 10):
            u = Control(float(T), 0.0, ObservableSpec.single(1), 1)
            psi = model.point_state([b], 0.0, u, InitialState.PRODUCT_RAMSEY)
            p = float(model.probability_of(psi, u.observable, clamp=False))
            ref = 0.5 * (1 + math.cos(2 * math.pi * cfg.gamma_abs * (b - cfg.B_ref) * T))
            worst = max(worst, abs(p - ref))
    return worst <= 1e-9, f"max |dp| = {worst:.2e}"


def _unitarity() -> tuple[bool, str]:
    rng = np.random.default_rng(0)
    worst = 0.0
    for M in (1, 2, 3):
        model = NvModel(NvWindowConfig(M=M, strain=tuple(rng.normal(0, 2 * math.pi * 5e3, M))))
        b = rng.uniform(45e-6, 60e-6, (5, M))
        J = rng.uniform(0, 10e3, 5)
        eig = model.eigen(b, J, 5e3)
        U = quantum.evolve(eig, 157e-6)
        eye = np.eye(model.dim)
        worst = max(worst, float(np.max(np.abs(np.swapaxes(U, -1, -2).conj() @ U - eye))))
    return worst <= 1e-9, f"max |U^dag U - I| = {worst:.2e}"


def _bayes() -> tuple[bool, str]:
    rng = np.random.default_rng(1)
    rho = rng.random((3, 4))
    rho /= rho.sum()
    P = rng.uniform(0.05, 0.95, (3, 4))
    z, n = 4, 10
    post = inf.update_pair_weights(rho, P, z, n)
    ref = rho * P ** z * (1 - P) ** (n - z)
    ref /= ref.sum()
    err = float(np.max(np.abs(post - ref) / ref))
    return err <= 1e-12, f"max relative error {err:.2e}"


def _eig() -> tuple[bool, str]:
    rho = np.array([[0.5, 0.5]])
    val = inf.expected_information_gain(rho, np.array([[0.0, 1.0]]))
    flat = inf.expected_information_gain(rho, np.array([[0.3, 0.3]]))
    ok = abs(val - math.log(2)) <= 1e-12 and abs(flat) <= 1e-12
    return ok, f"perfect {val:.15f}, constant {flat:.1e}"


def _table3() -> tuple[bool, str]:
    out = coupling_bounds(6.199e-7, 59.47, 474.51, 300, 6)
    ok = abs(out["sql_bound"] - 73.3) <= 0.05 and abs(out["ideal_bound"] - 26.0) <= 0.05
    return ok, f"sql {out['sql_bound']:.2f} Hz, ideal {out['ideal_bound']:.2f} Hz"


def _scan() -> tuple[bool, str]:
    n = len(enumerate_windows(60, 60, 6, 2, 2, ("H", "V")))
    return n == 1680, f"{n} windows"


def _dice() -> tuple[bool, str]:
    rng = np.random.default_rng(2)
    for _ in range(50):
        a, b = rng.random((8, 8)), rng.random((8, 8))
        d, i = dice_iou(a, b, 0.5)
        if d < i:
            return False, f"dice {d} < iou {i}"
    return True, "dice >= iou on 50 random pairs"


CHECKS: list[Check] = [
    ("ramsey-oracle", _ramsey),
    ("unitarity", _unitarity),
    ("bayes-update", _bayes),
    ("eig-bounds", _eig),
    ("coupling-bounds", _table3),
    ("scan-window-count", _scan),
    ("dice-iou-order", _dice),
]


def run_checks() -> list[tuple[str, bool, str]]:
    out = []
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # report, never crash the self-test
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
