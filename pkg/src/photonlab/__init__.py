"""photonlab: simulate a single dipole photon emitter and its instruments,
then recover the emitter parameters from the simulated records."""

from .emitter import (
    DipoleOrientation,
    Emitter,
    LorentzianLine,
    SPEED_OF_LIGHT_UM_PER_PS,
    coherence_length_um,
    coherence_time_ps,
    lorentzian_value,
    time_bandwidth_ratio,
)
from .errors import (
    ConfigError,
    EstimationError,
    FormatError,
    PhotonLabError,
    RankDeficiencyError,
    UsageError,
)
from .photostream import (
    DetectorConfig,
    ExcitationConfig,
    TimeTagStream,
    cw_emission_rate_per_ns,
    simulate_cw_stream,
    simulate_pulsed_stream,
    split_hbt,
)
from .interferometry import (
    CorrelationHistogram,
    Interferogram,
    ScanProtocol,
    analytic_interferogram,
    analytic_visibility,
    compute_g2,
    estimate_emitter_count,
    simulate_michelson_scan,
)
from .dipole import (
    DefocusedImage,
    OpticsConfig,
    OrientationEstimate,
    absorption_response,
    emission_polarizer_response,
    estimate_orientation,
    render_defocused_image,
    simulate_polarization_sweep,
)
from .fitting import FitResult, least_squares_fit, numeric_jacobian
from .analysis import (
    Spectrum,
    extract_envelope,
    extract_envelope_peaks,
    fit_coherence_length,
    fit_g2_dip,
    fit_lifetime,
    fit_lorentzian,
    fit_polarization,
    lifetime_histogram,
    synthesize_spectrum,
)

__version__ = "0.1.0"
