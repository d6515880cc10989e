"""Discrete elastic rods with sag-free rest-shape optimization."""
from .elastic import ExternalLoad, RestShape
from .kinematics import MaterialParams, StrandGeometry, StrandState
from .restshape import OptimizerSettings, optimize
from .sim import SimConfig, equilibrium_residual, simulate

__all__ = [
    "ExternalLoad", "MaterialParams", "OptimizerSettings", "RestShape", "SimConfig",
    "StrandGeometry", "StrandState", "equilibrium_residual", "optimize", "simulate",
]
