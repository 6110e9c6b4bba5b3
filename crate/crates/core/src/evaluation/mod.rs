//! Safety and behavior analyses over trained policies.

mod classification;
mod metrics;
mod permitted;
mod risk_map;

pub use classification::{
    classification_metrics, confusion, evaluate_threshold, labeled_maps, occupied_cells, pixel_classification_sweep,
    quantile_thresholds, ClassificationReport, Confusion, LabeledMap, SweepResult,
};
pub use metrics::{
    bhattacharyya, episode_record, evaluation_set, rollout_metrics, rollout_metrics_on, steering_histogram, Driver,
    EpisodeRecord, EvalCase, RolloutMetrics, BHATTACHARYYA_CAP, EVAL_HEADING_SPREAD, EVAL_LATERAL_SPREAD,
    HISTOGRAM_BINS,
};
pub use permitted::{
    permitted_set_experiment, InitializationRegion, Initialization, PermittedSetConfig, PermittedSetReport,
};
pub use risk_map::{
    build_risk_map, build_risk_map_at, default_anchor, interpolate, sample_arcs, DoubtSample, RiskMap, RiskMapConfig,
};
