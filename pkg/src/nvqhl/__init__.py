"""Sequential Bayesian reconstruction of dynamic magnetic-field maps from
simulated NV-center spin-1 window measurements."""

__version__ = "0.1.0"
