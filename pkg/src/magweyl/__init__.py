"""Magnetic Weyl quantization, the magnetic Moyal product and magnetic coherent states on grids."""
from . import coherent, geometry, hilbert, moyal, quantize
from .coherent import (
    CoherentVector,
    FiducialVector,
    PhaseCells,
    berezin_average,
    coherent_expectation,
    coherent_vector,
    pullback_form,
    resolution_of_identity,
    state_continuity_scan,
    transition_probability,
)
from .errors import (
    ConfigurationError,
    ConsistencyError,
    DomainError,
    InputError,
    MagweylError,
    NumericalError,
    ResolutionError,
    UnsupportedFamilyError,
    ValidationError,
    WindowError,
)
from .geometry import (
    MagneticField,
    PhaseSpacePoint,
    VectorPotential,
    circulation_segment,
    flux_triangle,
    gauge_function,
    gauge_transform,
    magnetic_field,
    vector_potential,
)
from .hilbert import KernelOperator, PositionGrid, WaveFunction, inner_product, operator_norm
from .moyal import factorized_defects, semiclassical_defects, star_direct, star_operator
from .quantize import dequantize, op_A, weyl_system, wrong_op

__version__ = "0.1.0"
