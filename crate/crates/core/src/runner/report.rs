//! Report tables rendered purely from per-case metrics, as CSV and aligned
//! text. Re-rendering from a stored `metrics.csv` reproduces them exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::ConfigId;
use crate::error::{Error, IoContext, Result};
use crate::metrics::{macro_average, signed_percent, AveragingMode, Averages, CaseMetrics, DegradationReport, Metric};
use crate::util::fmt2;

pub const DUPLICATION_NOISE: &str = "duplication_noise";
pub const DEGRADATION: &str = "degradation";
pub const GRAPH_STATS: &str = "graph_stats";

/// Rows of string cells; the first row is the header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub name: &'static str,
    pub rows: Vec<Vec<String>>,
    pub notes: Vec<String>,
}

impl Table {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| crate::error::Error::InvalidConfig(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 cells"))
    }

    /// First column left-aligned, the rest right-aligned.
    pub fn to_text(&self) -> String {
        let cols = self.rows.iter().map(Vec::len).max().unwrap_or(0);
        let width: Vec<usize> = (0..cols)
            .map(|c| self.rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, r) in self.rows.iter().enumerate() {
            let cells: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    if c == 0 {
                        format!("{s:<w$}", w = width[c])
                    } else {
                        format!("{s:>w$}", w = width[c])
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                let total = width.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        for n in &self.notes {
            out.push('\n');
            out.push_str(n);
            out.push('\n');
        }
        out
    }
}

/// Cases in first-seen order, configurations in column order.
type Cells<'a> = BTreeMap<(&'a str, ConfigId), &'a CaseMetrics>;

fn layout(metrics: &[CaseMetrics]) -> (Vec<&str>, Vec<ConfigId>, Cells<'_>) {
    let mut cases: Vec<&str> = Vec::new();
    let mut cells = BTreeMap::new();
    for m in metrics {
        if !cases.contains(&m.case_id.as_str()) {
            cases.push(&m.case_id);
        }
        cells.insert((m.case_id.as_str(), m.config_id), m);
    }
    let configs = ConfigId::ALL
        .into_iter()
        .filter(|c| metrics.iter().any(|m| m.config_id == *c))
        .collect();
    (cases, configs, cells)
}

pub fn config_averages(metrics: &[CaseMetrics], mode: AveragingMode) -> Result<BTreeMap<ConfigId, Averages>> {
    let mut by: BTreeMap<ConfigId, Vec<CaseMetrics>> = BTreeMap::new();
    for m in metrics {
        by.entry(m.config_id).or_default().push(m.clone());
    }
    by.into_iter().map(|(c, ms)| Ok((c, macro_average(&ms, mode)?))).collect()
}

/// Per-case totals, counts and rates for duplication and noise, plus an
/// average row.
pub fn duplication_noise_table(metrics: &[CaseMetrics], mode: AveragingMode) -> Result<Table> {
    let (cases, configs, cells) = layout(metrics);
    let avgs = config_averages(metrics, mode)?;
    let mut header = vec!["case".to_string()];
    for c in &configs {
        header.extend([format!("{c}_tot"), format!("{c}_dup"), format!("{c}_dup_rate")]);
    }
    for c in &configs {
        header.extend([format!("{c}_tot"), format!("{c}_noisy"), format!("{c}_noise_rate")]);
    }
    let mut rows = vec![header];
    for case in &cases {
        let mut r = vec![case.to_string()];
        for dup in [true, false] {
            for c in &configs {
                match cells.get(&(*case, *c)) {
                    Some(m) if dup => r.extend([
                        m.total_nodes.to_string(),
                        m.duplicate_count.to_string(),
                        fmt2(m.duplication_percent()),
                    ]),
                    Some(m) => r.extend([
                        m.total_nodes.to_string(),
                        m.noisy_count.to_string(),
                        fmt2(m.noise_percent()),
                    ]),
                    None => r.extend(["".into(), "".into(), "".into()]),
                }
            }
        }
        rows.push(r);
    }
    let mut avg = vec!["Avg".to_string()];
    for dup in [true, false] {
        for c in &configs {
            let a = &avgs[c];
            if dup {
                avg.extend([fmt2(a.total_nodes), fmt2(a.duplicate_count), fmt2(a.duplication_rate)]);
            } else {
                avg.extend([fmt2(a.total_nodes), fmt2(a.noisy_count), fmt2(a.noise_rate)]);
            }
        }
    }
    rows.push(avg);
    Ok(Table {
        name: DUPLICATION_NOISE,
        rows,
        notes: vec![
            "tot = total nodes; dup = sum over clusters of (size - 1); rates are percentages of tot.".into(),
        ],
    })
}

/// One report per metric; `None` where the base configuration is missing or
/// its average is zero.
pub fn degradation_reports(metrics: &[CaseMetrics], mode: AveragingMode) -> Result<[Option<DegradationReport>; 2]> {
    let avgs = config_averages(metrics, mode)?;
    let report = |metric, f: fn(&Averages) -> f64| -> Result<Option<DegradationReport>> {
        match DegradationReport::new(metric, avgs.iter().map(|(c, a)| (*c, f(a))).collect()) {
            Ok(r) => Ok(Some(r)),
            Err(Error::InvalidBase(_)) | Err(Error::InvalidConfig(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    Ok([
        report(Metric::Duplication, |a| a.duplication_rate)?,
        report(Metric::Noise, |a| a.noise_rate)?,
    ])
}

/// Average rates per method with their change relative to the full pipeline.
pub fn degradation_table(metrics: &[CaseMetrics], mode: AveragingMode, text: bool) -> Result<Table> {
    let avgs = config_averages(metrics, mode)?;
    let reports = degradation_reports(metrics, mode)?;
    let mut rows = vec![[
        "method",
        "duplication_avg",
        "duplication_rel",
        "noise_avg",
        "noise_rel",
    ]
    .map(String::from)
    .to_vec()];
    for (c, a) in &avgs {
        let rel = |i: usize| -> String {
            match &reports[i] {
                _ if *c == DegradationReport::BASE => "-".into(),
                Some(r) if text => signed_percent(r.relative[c]),
                Some(r) => fmt2(100.0 * r.relative[c]),
                None => "n/a".into(),
            }
        };
        let pct = |v: f64| if text { format!("{}%", fmt2(v)) } else { fmt2(v) };
        rows.push(vec![
            if text { c.display_name().to_string() } else { c.to_string() },
            pct(a.duplication_rate),
            rel(0),
            pct(a.noise_rate),
            rel(1),
        ]);
    }
    let base = DegradationReport::BASE;
    let mut notes = vec![format!(
        "relative degradation = (method - {base}) / {base}, from unrounded averages."
    )];
    if reports.iter().any(Option::is_none) {
        notes.push(format!("n/a: no {base} results or a zero {base} average."));
    }
    Ok(Table { name: DEGRADATION, rows, notes })
}

pub fn graph_stats_table(metrics: &[CaseMetrics]) -> Table {
    let (cases, configs, cells) = layout(metrics);
    let mut rows = vec![[
        "case",
        "method",
        "nodes",
        "relationships",
        "distinct_pairs",
        "rn_ratio",
        "isolated_nodes",
        "placeholders",
    ]
    .map(String::from)
    .to_vec()];
    for case in &cases {
        for c in &configs {
            if let Some(m) = cells.get(&(*case, *c)) {
                rows.push(vec![
                    case.to_string(),
                    c.to_string(),
                    m.total_nodes.to_string(),
                    m.relationship_count.to_string(),
                    m.distinct_pair_count.to_string(),
                    fmt2(m.rn_ratio()),
                    m.isolated_node_count.to_string(),
                    m.placeholder_count.to_string(),
                ]);
            }
        }
    }
    Table {
        name: GRAPH_STATS,
        rows,
        notes: vec!["relationships counts parallel edges; distinct_pairs counts each endpoint pair once.".into()],
    }
}

/// Writes `<name>.csv` and `<name>.txt` for the three tables into `dir`.
pub fn write_reports(metrics: &[CaseMetrics], mode: AveragingMode, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).at(dir)?;
    let mut files = Vec::new();
    let pairs = [
        (duplication_noise_table(metrics, mode)?, duplication_noise_table(metrics, mode)?),
        (degradation_table(metrics, mode, false)?, degradation_table(metrics, mode, true)?),
        (graph_stats_table(metrics), graph_stats_table(metrics)),
    ];
    for (csv_t, text_t) in pairs {
        let csv_path = dir.join(format!("{}.csv", csv_t.name));
        fs::write(&csv_path, csv_t.to_csv()?).at(&csv_path)?;
        let txt_path = dir.join(format!("{}.txt", text_t.name));
        fs::write(&txt_path, text_t.to_text()).at(&txt_path)?;
        files.extend([csv_path, txt_path]);
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(case: &str, c: ConfigId, tot: usize, dup: usize, noisy: usize) -> CaseMetrics {
        CaseMetrics::from_counts(case, c, tot, dup, noisy).unwrap()
    }

    #[test]
    fn single_case_average_equals_row() {
        let ms = vec![m("c1", ConfigId::Corekg, 51, 13, 5)];
        let t = duplication_noise_table(&ms, AveragingMode::Reported).unwrap();
        assert_eq!(t.rows.len(), 3);
        assert_eq!(t.rows[1][1..], ["51", "13", "25.49", "51", "5", "9.80"]);
        assert_eq!(t.rows[2][1..], ["51.00", "13.00", "25.49", "51.00", "5.00", "9.80"]);
    }

    #[test]
    fn degradation_rows() {
        let ms = vec![m("c1", ConfigId::Corekg, 10, 2, 1), m("c1", ConfigId::Graphrag, 10, 3, 2)];
        let t = degradation_table(&ms, AveragingMode::Reported, true).unwrap();
        assert_eq!(t.rows[1], ["GraphRAG", "30.00%", "+50.00%", "20.00%", "+100.00%"]);
        assert_eq!(t.rows[2][2], "-");
        let csv = degradation_table(&ms, AveragingMode::Reported, false).unwrap().to_csv().unwrap();
        assert!(csv.contains("graphrag,30.00,50.00,20.00,100.00"));
        let no_base = degradation_table(&[m("c1", ConfigId::Graphrag, 10, 3, 2)], AveragingMode::Reported, false).unwrap();
        assert_eq!(no_base.rows[1][2], "n/a");
        let zero = vec![m("c1", ConfigId::Corekg, 10, 2, 0), m("c1", ConfigId::Graphrag, 10, 3, 2)];
        let t = degradation_table(&zero, AveragingMode::Reported, true).unwrap();
        assert_eq!(t.rows[1], ["GraphRAG", "30.00%", "+50.00%", "20.00%", "n/a"]);
    }

    #[test]
    fn text_alignment() {
        let t = graph_stats_table(&[m("case01", ConfigId::Corekg, 32, 0, 0)]);
        let text = t.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[1].chars().all(|c| c == '-'));
        assert!(lines[2].starts_with("case01"));
    }
}
