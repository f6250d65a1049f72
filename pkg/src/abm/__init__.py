"""Aharonov-Bohm eigenvalues with a moving pole: finite elements on the
double cover, local analysis at the pole, the crack profile and the sharp
eigenvalue asymptotics along a nodal line."""

__version__ = "0.1.0"
