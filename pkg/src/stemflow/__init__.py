"""Simulation and stability-analysis toolkit for a two-compartment
(quiescent/proliferating) stem cell model of hematopoiesis and CML."""

from . import abm, dde, params, pde_full, pde_reduced, scan, spectral, steady

__all__ = ["abm", "dde", "params", "pde_full", "pde_reduced", "scan",
           "spectral", "steady"]
__version__ = "0.1.0"
