import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nvqhl.metrology import (FdSteps, coupling_benchmark, coupling_bounds, crb_bound,
                             fisher_diagnostics, sql_field_bound)
from nvqhl.nv import GAMMA_NV, Control, NvWindowConfig, ObservableSpec

B_REF = 50e-6
CFG1 = NvWindowConfig(M=1)


def fringe_field(T):
    return B_REF + 1.0 / (4 * GAMMA_NV * T)  # phase pi/2, p = 1/2


@pytest.mark.parametrize("T", [4e-6, 8e-6, 11e-6])
def test_single_spin_cfi_and_qfi(T):
    n = 300
    fd = fisher_diagnostics(CFG1, [fringe_field(T)], 0.0,
                            Control(T, 0.0, ObservableSpec.single(1), n), "ProductRamsey")
    ref = (2 * math.pi * GAMMA_NV * T) ** 2
    assert fd.p == pytest.approx(0.5, abs=1e-9)
    assert fd.F_B_diag[0] == pytest.approx(n * ref, rel=1e-3)
    assert fd.QFI_B_diag[0] == pytest.approx(ref, rel=1e-3)
    assert fd.F_J == 0.0


@given(st.floats(45e-6, 60e-6), st.floats(1e-6, 11e-6))
@settings(max_examples=25, deadline=None)
def test_cfi_matches_closed_form_derivative(b, T):
    n = 100
    fd = fisher_diagnostics(CFG1, [b], 0.0, Control(T, 0.0, ObservableSpec.single(1), n),
                            "ProductRamsey")
    phi = 2 * math.pi * GAMMA_NV * (b - B_REF) * T
    p = 0.5 * (1 + math.cos(phi))
    if p * (1 - p) < 1e-6:
        return
    dp = -0.5 * math.sin(phi) * 2 * math.pi * GAMMA_NV * T
    assert fd.F_B_diag[0] == pytest.approx(n * dp ** 2 / (p * (1 - p)), rel=1e-3, abs=1e-3)


def test_richardson_halving_stable():
    T = 8e-6
    u = Control(T, 0.0, ObservableSpec.single(1), 1)
    a = fisher_diagnostics(CFG1, [fringe_field(T)], 0.0, u, "ProductRamsey")
    b = fisher_diagnostics(CFG1, [fringe_field(T)], 0.0, u, "ProductRamsey", FdSteps().halved())
    assert b.QFI_B_diag[0] == pytest.approx(a.QFI_B_diag[0], rel=1e-3)


def test_cfi_linear_in_shots():
    cfg = NvWindowConfig(M=2, strain=(1e4, -1e4))
    b, J = [51e-6, 54e-6], 5e3
    f1 = fisher_diagnostics(cfg, b, J, Control(100e-6, 5e3, ObservableSpec.pair(1), 150), "BellPairs")
    f2 = fisher_diagnostics(cfg, b, J, Control(100e-6, 5e3, ObservableSpec.pair(1), 300), "BellPairs")
    assert np.allclose(f2.F_B_diag, 2 * f1.F_B_diag, rtol=1e-12)
    assert f2.F_J == pytest.approx(2 * f1.F_J, rel=1e-12)
    assert f2.QFI_J == pytest.approx(f1.QFI_J, rel=1e-12)


def test_zero_time_qfi_vanishes():
    cfg = NvWindowConfig(M=2)
    fd = fisher_diagnostics(cfg, [50e-6, 55e-6], 5e3, Control(0.0, 0.0, ObservableSpec.single(1), 1),
                            "ProductRamsey")
    # round-off only; finite-time values are ~1e8 and above
    assert np.all(fd.QFI_B_diag < 1e-9) and fd.QFI_J < 1e-9


@given(st.lists(st.floats(45e-6, 60e-6), min_size=2, max_size=2), st.floats(0, 10e3),
       st.sampled_from([4e-6, 11e-6, 100e-6]), st.sampled_from(["ProductRamsey", "BellPairs"]))
@settings(max_examples=25, deadline=None)
def test_quantum_bound_dominates_classical(b, J, T, init):
    cfg = NvWindowConfig(M=2, strain=(5e3, -5e3))
    for obs in (ObservableSpec.single(1), ObservableSpec.pair(1)):
        fd = fisher_diagnostics(cfg, b, J, Control(T, 5e3, obs, 1), init)
        assert np.all(fd.F_B_diag >= 0) and fd.F_J >= 0
        assert 0 <= fd.leakage <= 1
        assert np.all(fd.QFI_B_diag >= fd.F_B_diag * (1 - 1e-3) - 1e-6 * fd.QFI_B_diag.max())
        assert fd.QFI_J >= fd.F_J * (1 - 1e-3) - 1e-6 * max(fd.QFI_J, 1e-30)


def test_table3_arithmetic():
    out = coupling_bounds(6.199e-7, 59.47, 474.51, 300, 6)
    assert out["sql_bound"] == pytest.approx(73.3, abs=0.05)
    assert out["gain"] == pytest.approx(7.98, abs=0.005)
    assert out["eta_M"] == pytest.approx(1.33, abs=0.005)
    assert out["qfi_opt_T_extrapolated"] == pytest.approx(4.946e-6, rel=1e-3)
    assert out["ideal_bound"] == pytest.approx(26.0, abs=0.05)


def coupling_generator_oracle(M):
    """Independent dense construction of sum_{q<r} V_qr / |q-r|^3."""
    s = 1 / math.sqrt(2)
    sx = s * np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    sy = s * np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]])
    sz = np.diag([1.0, 0, -1])

    def emb(ops):
        out = np.ones((1, 1))
        for k in range(M):
            out = np.kron(out, ops.get(k, np.eye(3)))
        return out

    G = np.zeros((3 ** M, 3 ** M), dtype=complex)
    for q in range(M):
        for r in range(q + 1, M):
            V = emb({q: sx, r: sx}) + emb({q: sy, r: sy}) - 2 * emb({q: sz, r: sz})
            G += V / (r - q) ** 3
    return G.real


def test_coupling_benchmark_matches_oracle_and_frozen_values():
    G = coupling_generator_oracle(6)
    psi = np.ones(1)
    for _ in range(6):
        psi = np.kron(psi, np.array([1, 1, 0]) / math.sqrt(2))
    var = psi @ G @ G @ psi - (psi @ G @ psi) ** 2
    w = np.linalg.eigvalsh(G)
    bench = coupling_benchmark(NvWindowConfig(M=6), np.full(6, B_REF), 5e3, 157e-6, 300)
    assert bench.qfi_prod_zero == pytest.approx(4 * var, rel=1e-10)
    assert bench.qfi_opt_zero == pytest.approx((w[-1] - w[0]) ** 2, rel=1e-10)
    # frozen from the oracle above
    assert bench.qfi_prod_zero == pytest.approx(59.4715, abs=1e-4)
    assert bench.qfi_opt_zero == pytest.approx(474.507, abs=1e-3)
    assert bench.gain == pytest.approx(7.9787, abs=1e-4)
    assert bench.eta_M == pytest.approx(bench.gain / 6)
    assert bench.sql_bound == pytest.approx(crb_bound(300, bench.qfi_prod_T))
    assert bench.angular_qfi_prod_zero == pytest.approx((2 * math.pi) ** 2 * bench.qfi_prod_zero)


def test_coupling_benchmark_needs_pairs():
    with pytest.raises(ValueError):
        coupling_benchmark(NvWindowConfig(M=1), [B_REF], 5e3, 157e-6, 300)


def test_crb_and_sql_bounds():
    assert crb_bound(400, 1.0) == pytest.approx(crb_bound(100, 1.0) / 2)
    assert crb_bound(0, 1.0) == math.inf
    T, n = 8e-6, 1000
    one = sql_field_bound(GAMMA_NV, T, n, 1)
    assert sql_field_bound(GAMMA_NV, T, 4 * n, 1) == pytest.approx(one / 2)
    assert sql_field_bound(GAMMA_NV, T, n, 4) == pytest.approx(one / 2)
    assert one == pytest.approx(1 / math.sqrt((2 * math.pi * GAMMA_NV * T) ** 2 * n))
    with pytest.raises(ValueError):
        sql_field_bound(GAMMA_NV, 0.0, n, 1)


def test_fd_steps_validation():
    with pytest.raises(ValueError):
        FdSteps(0.0, 1.0)
