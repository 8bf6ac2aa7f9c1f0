"""Broadband diffractive networks for spectrally-encoded single-pixel machine
vision: differentiable scalar-wave optics, spectral class readout, decoder
networks and experiment orchestration."""

from .dispersion import DispersionModel, default_polymer
from .errors import SpectrapixError
from .fields import ApertureMask, Wavefield, apply_aperture, square_aperture, total_power
from .layers import ThicknessMap, layer_transmit
from .losses import LossWeights, loss_efficiency, loss_inference, loss_purity, total_loss
from .model import (DetectorGeometry, DiffractiveModel, ObjectImage,
                    SpectralScores, WavelengthPlan, build_model, classify,
                    detector_integrate, forward, power_efficiency,
                    scores_from_raw)
from .propagation import propagate
from .training import VaccinationPlan, evaluate, misalignment_sweep, train

__version__ = "0.1.0"

__all__ = [
    "ApertureMask", "DetectorGeometry", "DiffractiveModel", "DispersionModel",
    "LossWeights", "ObjectImage", "SpectralScores", "SpectrapixError",
    "ThicknessMap", "VaccinationPlan", "Wavefield", "WavelengthPlan",
    "apply_aperture", "build_model", "classify", "default_polymer",
    "detector_integrate", "evaluate", "forward", "layer_transmit",
    "loss_efficiency", "loss_inference", "loss_purity", "misalignment_sweep",
    "power_efficiency", "propagate", "scores_from_raw", "square_aperture",
    "total_loss", "total_power", "train",
]
