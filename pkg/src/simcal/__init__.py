"""Seedable desk-scale simulator for over-the-air reciprocity calibration of
distributed TDD OFDM nodes, with phase tracking, calibration-assisted sensing
and sensing-assisted calibration maintenance."""

from .runner import VERSION as __version__  # noqa: F401

from .config import (  # noqa: F401
    C_LIGHT, ConfigError, Geometry, NodeImpairment, PilotSchedule,
    ScenarioConfig, draw_impairments, load_scenario, node_ids, zero_impairments,
)
from .channel import (  # noqa: F401
    ChannelMeta, ChannelTensor, LinkPathSet, add_noise, apply_impairments,
    dump_channel_csv, estimate_noise_std, generate_ota, make_meta,
    paths_from_geometry,
)
from .pilots import (  # noqa: F401
    EquivalentChannel, PilotMap, build_pilot_map, cars_round_trip,
    estimate_channel, form_cars, form_equivalent_channel,
)
from .calibration import (  # noqa: F401
    CalibrationSet, EstimationError, argos, argos_mean, decompose_link_offsets,
    ideal_link_coeff, ml_delay_coeff, tls_classic, tls_joint, two_step_ml_tls,
)
from .tracking import (  # noqa: F401
    TrackState, aggregate_phase, estimate_offset_from_track,
    track_quasi_static, track_sensing_assisted,
)
from .sensing import (  # noqa: F401
    CalibrationRequiredError, CrlbReport, RangeDopplerMap, SensedPath,
    SensingError, cfar_detect, crlb, localize, mti_filter, predict_channel,
    range_doppler, recover_ota, refine_velocity, stft_offset,
    unambiguous_range, unambiguous_velocity,
)
from .metrics import (  # noqa: F401
    MetricSeries, MetricsError, beamforming_gain_db, calibrated_precoder,
    empirical_cdf, percentile, phase_error_deg, phase_rmse_deg,
    spectral_efficiency,
)
from .runner import (  # noqa: F401
    ExperimentPlan, PlanError, apply_overrides, default_config_doc, run,
    run_sensing_demo,
)
