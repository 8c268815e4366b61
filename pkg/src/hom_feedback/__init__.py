"""Time-resolved two-photon interference with measurement-conditioned phase feedback."""

from .event_sim import (
    ConfigError,
    ExperimentConfig,
    GroundTruthLog,
    Scenario,
    ScenarioKind,
    SimulationResult,
    TimestampStream,
    run_experiment,
    sample_pair_event,
)
from .feedback import LatencyBudget, decide_phase, effective_phase_timeline, error_rate
from .interference import (
    DetectionOutcome,
    Detector,
    FeedbackRule,
    JointDensityCurve,
    OutcomeDistribution,
    conditional_second_bin,
    pjoint_t0_tau,
    pjoint_tau,
    timebin_output_distribution,
)
from .photon_model import PhaseProfile, PhotonMode, TemporalEnvelope, envelope_amplitude, intensity_density

__version__ = "0.1.0"
