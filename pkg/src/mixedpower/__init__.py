"""Explicit a priori estimates for parabolic and elliptic problems with a
power-type boundary law, plus the discrete solvers used to check them."""
from . import elliptic, estimates, meshfields, parabolic, verify

__all__ = ["estimates", "meshfields", "parabolic", "elliptic", "verify"]
__version__ = "0.1.0"
