"""Entanglement-based quantum key distribution with minimal qubit tomography.

Simulation of the noisy-singlet source, four-outcome tomographic
measurements, iterative two-way key extraction, the peer-to-peer session
protocol, and the information-theoretic security analysis.
"""

from .quantum import (
    binary_entropy,
    partial_trace,
    shannon_mutual_information,
    trace_distance,
    von_neumann_entropy,
)
from .source import NoiseModel, RngStream, noisy_singlet, purification, sample_pairs, twirl
from .tomography import joint_distribution, reconstruct_state, six_state_pom, tetra_pom

__all__ = [
    "binary_entropy",
    "partial_trace",
    "shannon_mutual_information",
    "trace_distance",
    "von_neumann_entropy",
    "NoiseModel",
    "RngStream",
    "noisy_singlet",
    "purification",
    "sample_pairs",
    "twirl",
    "joint_distribution",
    "reconstruct_state",
    "six_state_pom",
    "tetra_pom",
]
