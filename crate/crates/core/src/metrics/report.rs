//! Per-case figures, macro averages and relative degradation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cluster::{duplicate_count, DuplicateCluster};
use crate::error::{Error, Result};
use crate::graph::{graph_stats, KnowledgeGraph};
use crate::runner::ConfigId;
use crate::util::{fmt2, percent_hundredths};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub case_id: String,
    pub config_id: ConfigId,
    pub total_nodes: usize,
    pub cluster_count: usize,
    pub duplicate_count: usize,
    pub noisy_count: usize,
    pub relationship_count: usize,
    pub distinct_pair_count: usize,
    pub isolated_node_count: usize,
    pub placeholder_count: usize,
}

impl CaseMetrics {
    /// Metrics known only by their counts, e.g. transcribed from a table.
    pub fn from_counts(
        case_id: &str,
        config_id: ConfigId,
        total_nodes: usize,
        duplicate_count: usize,
        noisy_count: usize,
    ) -> Result<Self> {
        if total_nodes == 0 {
            return Err(Error::EmptyGraph);
        }
        if duplicate_count >= total_nodes || noisy_count > total_nodes {
            return Err(Error::InvalidConfig(format!(
                "{case_id}/{config_id}: counts {duplicate_count}/{noisy_count} exceed total {total_nodes}"
            )));
        }
        Ok(CaseMetrics {
            case_id: case_id.to_string(),
            config_id,
            total_nodes,
            cluster_count: 0,
            duplicate_count,
            noisy_count,
            relationship_count: 0,
            distinct_pair_count: 0,
            isolated_node_count: 0,
            placeholder_count: 0,
        })
    }

    /// Duplicate fraction in [0, 1] at full precision.
    pub fn duplication_rate(&self) -> f64 {
        self.duplicate_count as f64 / self.total_nodes as f64
    }

    pub fn noise_rate(&self) -> f64 {
        self.noisy_count as f64 / self.total_nodes as f64
    }

    /// Percentage rounded half up to two decimals, as printed in reports.
    pub fn duplication_percent(&self) -> f64 {
        percent_hundredths(self.duplicate_count as u64, self.total_nodes as u64) as f64 / 100.0
    }

    pub fn noise_percent(&self) -> f64 {
        percent_hundredths(self.noisy_count as u64, self.total_nodes as u64) as f64 / 100.0
    }

    pub fn rn_ratio(&self) -> f64 {
        self.relationship_count as f64 / self.total_nodes as f64
    }
}

/// Combines a graph with its clusters and noise count.
pub fn case_metrics(
    g: &KnowledgeGraph,
    clusters: &[DuplicateCluster],
    noisy_count: usize,
) -> Result<CaseMetrics> {
    let s = graph_stats(g)?;
    Ok(CaseMetrics {
        case_id: g.case_id.clone(),
        config_id: g.config_id,
        total_nodes: s.node_count,
        cluster_count: clusters.len(),
        duplicate_count: duplicate_count(clusters),
        noisy_count,
        relationship_count: s.relationship_count,
        distinct_pair_count: s.distinct_pair_count,
        isolated_node_count: s.isolated_node_count,
        placeholder_count: s.placeholder_count,
    })
}

/// Which per-case rate enters the mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingMode {
    /// Each case's percentage as printed (two decimals, half up).
    #[default]
    Reported,
    /// Each case's exact percentage.
    FullPrecision,
}

/// Column means over cases (macro average). Rates are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub cases: usize,
    pub total_nodes: f64,
    pub duplicate_count: f64,
    pub duplication_rate: f64,
    pub noisy_count: f64,
    pub noise_rate: f64,
    pub relationship_count: f64,
    pub rn_ratio: f64,
}

type Rate<'a> = &'a dyn Fn(&CaseMetrics) -> f64;

pub fn macro_average(per_case: &[CaseMetrics], mode: AveragingMode) -> Result<Averages> {
    if per_case.is_empty() {
        return Err(Error::InvalidConfig("macro average over zero cases".into()));
    }
    let n = per_case.len() as f64;
    let mean = |f: &dyn Fn(&CaseMetrics) -> f64| per_case.iter().map(f).sum::<f64>() / n;
    let (dup, noise): (Rate, Rate) = match mode {
        AveragingMode::Reported => (&|c| c.duplication_percent(), &|c| c.noise_percent()),
        AveragingMode::FullPrecision => (&|c| 100.0 * c.duplication_rate(), &|c| 100.0 * c.noise_rate()),
    };
    Ok(Averages {
        cases: per_case.len(),
        total_nodes: mean(&|c| c.total_nodes as f64),
        duplicate_count: mean(&|c| c.duplicate_count as f64),
        duplication_rate: mean(dup),
        noisy_count: mean(&|c| c.noisy_count as f64),
        noise_rate: mean(noise),
        relationship_count: mean(&|c| c.relationship_count as f64),
        rn_ratio: mean(&|c| c.rn_ratio()),
    })
}

/// `(value - base) / base`; base must be positive.
pub fn relative_degradation(value: f64, base: f64) -> Result<f64> {
    if base.is_nan() || base <= 0.0 || base.is_infinite() {
        return Err(Error::InvalidBase(base));
    }
    Ok((value - base) / base)
}

/// `+50.54%` style rendering of a fraction.
pub fn signed_percent(fraction: f64) -> String {
    let s = fmt2(100.0 * fraction);
    if s.starts_with('-') {
        format!("{s}%")
    } else {
        format!("+{s}%")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Duplication,
    Noise,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Duplication => "duplication",
            Metric::Noise => "noise",
        })
    }
}

/// Method averages of one metric and their degradation relative to the full
/// pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationReport {
    pub metric: Metric,
    pub averages: BTreeMap<ConfigId, f64>,
    /// Fractions; zero for the base configuration.
    pub relative: BTreeMap<ConfigId, f64>,
}

impl DegradationReport {
    pub const BASE: ConfigId = ConfigId::Corekg;

    pub fn new(metric: Metric, averages: BTreeMap<ConfigId, f64>) -> Result<Self> {
        let base = *averages
            .get(&Self::BASE)
            .ok_or_else(|| Error::InvalidConfig(format!("no {} average to compare against", Self::BASE)))?;
        let relative = averages
            .iter()
            .map(|(c, v)| Ok((*c, relative_degradation(*v, base)?)))
            .collect::<Result<_>>()?;
        Ok(DegradationReport {
            metric,
            averages,
            relative,
        })
    }
}

// ---------------------------------------------------------------------------
// CSV rows

pub const METRICS_COLUMNS: [&str; 13] = [
    "case_id",
    "config_id",
    "total_nodes",
    "duplicate_count",
    "duplication_rate",
    "noisy_count",
    "noise_rate",
    "relationship_count",
    "rn_ratio",
    "cluster_count",
    "distinct_pair_count",
    "isolated_node_count",
    "placeholder_count",
];

#[derive(Debug, Serialize, Deserialize)]
struct MetricsRow {
    case_id: String,
    config_id: ConfigId,
    total_nodes: usize,
    duplicate_count: usize,
    duplication_rate: String,
    noisy_count: usize,
    noise_rate: String,
    relationship_count: usize,
    rn_ratio: String,
    cluster_count: usize,
    distinct_pair_count: usize,
    isolated_node_count: usize,
    placeholder_count: usize,
}

/// Rates and ratio are rendered at two decimals; reading derives them again
/// from the counts.
pub fn write_metrics_csv(rows: &[CaseMetrics], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(METRICS_COLUMNS)?;
    }
    for m in rows {
        w.serialize(MetricsRow {
            case_id: m.case_id.clone(),
            config_id: m.config_id,
            total_nodes: m.total_nodes,
            duplicate_count: m.duplicate_count,
            duplication_rate: fmt2(m.duplication_percent()),
            noisy_count: m.noisy_count,
            noise_rate: fmt2(m.noise_percent()),
            relationship_count: m.relationship_count,
            rn_ratio: fmt2(m.rn_ratio()),
            cluster_count: m.cluster_count,
            distinct_pair_count: m.distinct_pair_count,
            isolated_node_count: m.isolated_node_count,
            placeholder_count: m.placeholder_count,
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<CaseMetrics>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: MetricsRow = row?;
        if row.total_nodes == 0 {
            return Err(Error::EmptyGraph);
        }
        out.push(CaseMetrics {
            case_id: row.case_id,
            config_id: row.config_id,
            total_nodes: row.total_nodes,
            cluster_count: row.cluster_count,
            duplicate_count: row.duplicate_count,
            noisy_count: row.noisy_count,
            relationship_count: row.relationship_count,
            distinct_pair_count: row.distinct_pair_count,
            isolated_node_count: row.isolated_node_count,
            placeholder_count: row.placeholder_count,
        });
    }
    Ok(out)
}
