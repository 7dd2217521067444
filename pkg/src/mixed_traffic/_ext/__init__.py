"""Compiled kernels (Cython).  Import ``mixed_traffic.kernels`` instead of this package."""
