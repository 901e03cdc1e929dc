"""Reconstruction of linear optical networks from measured primary data."""

from . import circuit, errors, lossmodel, netcore, probes, recon
from .lossmodel import LossyNetwork, embed_circuit_loss, embed_full_loss, embed_io_loss
from .netcore import ReckParameters, compose_reck, decompose_reck, fidelity, gauge_fix, haar_unitary
from .probes import PrimaryData, VisibilitySet, perturb, primary_data, two_photon_visibility, visibility_set
from .recon import OptimizerSettings, reconstruct_bristol, reconstruct_brisbane, reconstruct_vienna

__version__ = "0.1.0"
