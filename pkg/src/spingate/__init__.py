"""Hamiltonian identification of spin networks through a small gateway of accessible spins."""

from .errors import SpinGateError
from .model import SpinNetwork, build_single_excitation, eigendecompose
from .network import GatewaySet, GraphTopology, forcing_sequence, standard_gateway, standard_topology
from .pipeline import RunConfig, run_pipeline
from .reconstruct import full_reconstruct

__version__ = "0.1.0"

__all__ = [
    "GatewaySet",
    "GraphTopology",
    "RunConfig",
    "SpinGateError",
    "SpinNetwork",
    "build_single_excitation",
    "eigendecompose",
    "forcing_sequence",
    "full_reconstruct",
    "run_pipeline",
    "standard_gateway",
    "standard_topology",
]
