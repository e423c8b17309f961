"""Monte Carlo laboratory for the finite-range contact process on Z and its
two-type priority variant, built on the Harris graphical construction."""

__version__ = "0.1.0"
