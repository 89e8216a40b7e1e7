"""Semiclassical angular-spectrum propagation of holograms under affine maps.

Subpackages are plain modules:

- :mod:`helmprop.fields` -- grids, sampled fields, test states, HLF1 I/O
- :mod:`helmprop.geometry` -- the frequency map ``g``, Jacobians, sheets
- :mod:`helmprop.symplectic` -- canonical transformations and ray tracing
- :mod:`helmprop.fourier` -- the discrete semiclassical Fourier transform
- :mod:`helmprop.propagate` -- translation, tilted and affine propagators
- :mod:`helmprop.weyl` -- Weyl quantization on 1D grids
- :mod:`helmprop.egorov` -- Egorov, unitarity and kernel-expansion harnesses
- :mod:`helmprop.phasespace` -- Gabor spectrograms, peaks, ridges
"""

import logging

from ._kernels import backend, set_threads, use_backend
from .errors import HelmpropError
from .fields import (
    Grid,
    PhasePoint,
    SampledField,
    coherent_state,
    hermite_state,
    inner_product,
    load_field,
    norm,
    save_field,
)
from .geometry import AffineMap, SheetLabel, g_map, jacobian_J, parse_affine
from .propagate import Cutoff, apply_U_affine
from .symplectic import kappa_affine, ray_trace

__all__ = [
    "AffineMap",
    "Cutoff",
    "Grid",
    "HelmpropError",
    "PhasePoint",
    "SampledField",
    "SheetLabel",
    "apply_U_affine",
    "backend",
    "coherent_state",
    "g_map",
    "hermite_state",
    "inner_product",
    "jacobian_J",
    "kappa_affine",
    "load_field",
    "norm",
    "parse_affine",
    "ray_trace",
    "save_field",
    "set_threads",
    "use_backend",
]

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())
