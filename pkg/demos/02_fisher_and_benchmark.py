"""
Fisher information and the coupling benchmark
=============================================

Finite-difference CFI/QFI for one spin against the closed forms, then the
product-state versus optimal-state comparison for estimating the coupling J
in a six-spin window.
"""

import numpy as np

from nvqhl.metrology import coupling_benchmark, fisher_diagnostics
from nvqhl.nv import Control, InitialState, NvWindowConfig, ObservableSpec

cfg = NvWindowConfig(M=1)
for T in (4e-6, 8e-6, 11e-6):
    u = Control(T, 0.0, ObservableSpec.single(1), n_shots=1000)
    fd = fisher_diagnostics(cfg, [51.3e-6], 0.0, u, InitialState.PRODUCT_RAMSEY)
    qfi = (2 * np.pi * cfg.gamma_abs * T) ** 2
    print(f"T = {T * 1e6:4.1f} us  CFI/shot {fd.F_B_diag[0] / u.n_shots:.4e}  QFI {fd.QFI_B_diag[0]:.4e}  "
          f"(closed-form QFI {qfi:.4e})")

# 729-dimensional window; takes a few seconds
bench = coupling_benchmark(NvWindowConfig(M=6), np.full(6, 50e-6), 5e3, 157e-6, 300)
print(f"\n4 Var(G) on the product state: {bench.qfi_prod_zero:.2f}")
print(f"squared spectral gap of G:     {bench.qfi_opt_zero:.2f}")
print(f"gain {bench.gain:.3f}, per-spin efficiency {bench.eta_M:.3f}")
print(f"SQL bound {bench.sql_bound:.1f} Hz, ideal-state bound {bench.ideal_bound:.1f} Hz")
