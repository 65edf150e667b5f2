"""Geometric constellation shaping by auto-encoder learning over GN/NLIN fiber models."""

from .channel import ChannelParams, LinkConfig, NLINCoefficients
from .metrics import Constellation, mi_montecarlo, qam
from .trainer import SweepSpec, TrainConfig, train

__all__ = ["ChannelParams", "Constellation", "LinkConfig", "NLINCoefficients", "SweepSpec",
           "TrainConfig", "mi_montecarlo", "qam", "train"]
__version__ = "0.1.0"
