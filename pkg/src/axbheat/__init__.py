"""Heat and Poisson maximal functions on R^2 x| R^+."""

from .group import IDENTITY, GroupElement, MeasureKind, ball_volume, ball_volume_exact, distance, inverse, modular
from .hardy import (
    Atom,
    CZSet,
    decompose_fL,
    make_fL,
    mean_oscillation,
    pairing,
    phi_closed_form,
    random_atom,
    validate_atom,
)
from .kernels import HEAT, POISSON, KernelKind, KernelSpec, kernel_grad, kernel_sup_t, kernel_value
from .maximal import L1Report, SupSearchSpec, maximal_at, maximal_l1, maximal_many
from .numerics import Certificate, QuadratureSpec, TailKind
from .quadrature import BoxRegion, StepFunction, convolve, integrate, kernel_mass

__version__ = "0.1.0"

__all__ = [
    "IDENTITY",
    "GroupElement",
    "MeasureKind",
    "ball_volume",
    "ball_volume_exact",
    "distance",
    "inverse",
    "modular",
    "Atom",
    "CZSet",
    "decompose_fL",
    "make_fL",
    "mean_oscillation",
    "pairing",
    "phi_closed_form",
    "random_atom",
    "validate_atom",
    "HEAT",
    "POISSON",
    "KernelKind",
    "KernelSpec",
    "kernel_grad",
    "kernel_sup_t",
    "kernel_value",
    "L1Report",
    "SupSearchSpec",
    "maximal_at",
    "maximal_l1",
    "maximal_many",
    "Certificate",
    "QuadratureSpec",
    "TailKind",
    "BoxRegion",
    "StepFunction",
    "convolve",
    "integrate",
    "kernel_mass",
]
