"""Trainer for the convolutional prolongation surrogate.

Reads MSDS datasets, trains 2/3/4-level U-Nets against the
coefficient-weighted subspace-distance loss, and exports MSUW weight
files for the solver package.  Communicates with the solver exclusively
through those two file formats.
"""

__version__ = "0.1.0"

from .loss import subspace_distance_loss
from .model import UNet, parameter_count
from .msds import read_msds
from .msuw import export_weights, read_msuw

__all__ = [
    "UNet",
    "parameter_count",
    "read_msds",
    "export_weights",
    "read_msuw",
    "subspace_distance_loss",
]
