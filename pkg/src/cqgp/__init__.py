"""Coding engine for classical-quantum channels with rate-limited encoder side information."""

from .errors import NumericalInvariantError, ValidationError
from .infospec import (
    ClassicalPair,
    SpectralEstimate,
    cq_spectral_crossing,
    cq_spectral_value,
    holevo_information,
    information_density,
    in_typical_set,
    mutual_information,
    spectral_test_curve,
    tail_probability,
    von_neumann_entropy,
)
from .model import (
    CqGpChannel,
    JointLaw,
    ProductExtension,
    conditional_output_state,
    cq_marginals,
    detection_projector,
    load_system,
    system_from_dict,
    system_to_dict,
)
from .protocol import (
    Codebook,
    ProtocolParams,
    SimulationResult,
    atypicality_mass,
    build_decoder,
    decode_message,
    default_params,
    detection_threshold,
    error_budget,
    generate_codebooks,
    message_encode,
    quantizer_encode,
    simulate,
    single_letter_rates,
    weak_detection_mass,
    weak_detection_mass_interval,
    wilson_interval,
)
from .qop import (
    DensityOperator,
    HermitianOperator,
    Povm,
    Projector,
    eigh,
    inv_sqrt_on_support,
    nonneg_eigenspace_projector,
    partial_trace,
    positive_eigenspace_projector,
    sample_measurement,
    spectral_test,
    support_projector,
    tensor,
)

__version__ = "0.1.0"
