//! Graph-quality measures: fuzzy duplicate clusters, lexicon noise, and the
//! derived rates, averages and degradation figures.

mod cluster;
mod noise;
mod overrides;
mod report;
mod similarity;

pub use cluster::{
    cluster_duplicates, duplicate_count, similarity_components, DuplicateCluster, DEFAULT_THRESHOLD,
};
pub use noise::{score_noise, NoiseScore};
pub use overrides::{Directive, Overrides};
pub use report::{
    case_metrics, macro_average, read_metrics_csv, relative_degradation, signed_percent,
    write_metrics_csv, AveragingMode, Averages, CaseMetrics, DegradationReport, Metric,
    METRICS_COLUMNS,
};
pub use similarity::{indel_distance, indel_ratio, partial_ratio};
