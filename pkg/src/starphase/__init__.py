"""Threshold-detector stellar interferometry with tunable auxiliary sources.

Simulates weak starlight interfering with midpoint-launched auxiliary light
at two telescopes, end to end: source photon statistics through lossy fiber,
exact Fock-space outcome tables, Fisher information and Cramér-Rao bounds,
and maximum-likelihood phase/angle estimation.
"""

from .detection import (
    DetectorModel,
    OutcomeCoefficients,
    OutcomeTable,
    StarlightModel,
    VirtualOutcomeTable,
    aggregate_threshold,
    apply_dark_counts,
    apply_efficiency,
    build_multi_source_table,
    build_single_source_table,
    build_virtual_table,
)
from .estimation import (
    RAD_TO_UAS,
    EpsilonEstimate,
    ExperimentRecord,
    EstimationResult,
    FisherReport,
    angle_from_phase,
    average_angular_error,
    crb_angular_uncertainty,
    estimate_epsilon,
    expected_record,
    fisher_information,
    mle_angle,
    mle_phase,
    phase_from_angle,
    sample_experiment,
    two_setting_fisher,
)
from .fock import (
    LinearCircuit,
    PnrDistribution,
    SparseAmplitudeState,
    apply_circuit,
    apply_loss,
    dft_circuit,
    make_split_state,
    pnr_distribution,
)
from .sources import (
    ChannelModel,
    MuOptimum,
    PhotonNumberDistribution,
    SourceModel,
    coherent_pm,
    coherent_source,
    default_m_max,
    eta_from_baseline,
    generic_pm,
    generic_source,
    heralded_source,
    heralded_tmss_pm,
    optimize_mu,
    single_photon_source,
)

__version__ = "0.1.0"
