"""
Ramsey fringes and many-body windows
====================================

A single NV spin in a field b precesses at gamma*(b - B_ref) relative to the
reference frame, so the X_eff readout traces a cosine in the evolution time.
Adding neighbours switches on the dipolar coupling and opens leakage out of
the {|+1>, |0>} sensing subspace.
"""

import numpy as np

from nvqhl.nv import Control, InitialState, NvModel, NvWindowConfig, ObservableSpec

# one spin, 2 uT above the reference field
cfg = NvWindowConfig(M=1)
model = NvModel(cfg)
b = 52e-6
times = np.linspace(0, 2e-6, 9)
eig = model.eigen([[b]], np.zeros(1), 0.0)
psi = model.evolved(eig, InitialState.PRODUCT_RAMSEY, times)
p = model.probability_of(psi, ObservableSpec.single(1))[:, 0]
print("T [us]   p(+1)   analytic")
for T, pk in zip(times, p):
    ref = 0.5 * (1 + np.cos(2 * np.pi * cfg.gamma_abs * (b - cfg.B_ref) * T))
    print(f"{T * 1e6:6.2f}  {pk:.6f}  {ref:.6f}")

# three coupled spins: the Hilbert space is 27-dimensional
cfg3 = NvWindowConfig(M=3, strain=(2e4, -1e4, 5e3))
m3 = NvModel(cfg3)
bs = np.array([[50e-6, 55e-6, 50e-6]])
for J in (0.0, 5e3):
    eig = m3.eigen(bs, np.array([J]), 5e3)
    psi = m3.evolved(eig, InitialState.BELL_PAIRS, [100e-6, 157e-6])
    leak = m3.leakage_of(psi)[:, 0]
    pair = m3.probability_of(psi, ObservableSpec.pair(1))[:, 0]
    print(f"J = {J:6.0f} Hz: pair readout {pair.round(4)}, leakage {leak}")
