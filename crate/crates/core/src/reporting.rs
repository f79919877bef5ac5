//! Results CSV and two-column plot data files.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::{blocking_probability, capacity_blocking, throughput, traffic_intensity, MetricsReport};

pub const RESULTS_HEADER: &str = "scenario_id,policy_column,rate_scale,population_multiplier,seed,arrivals,admissions,blocks_full,blocks_policy,blocking_prob,throughput_fraction,throughput_rate,intensity";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// One CSV row per report under [`RESULTS_HEADER`]. Ratios that are
/// undefined for zero arrivals are written as `NA`.
pub fn results_csv(reports: &[MetricsReport]) -> Result<String> {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in reports {
        r.check_conservation()?;
        let t = r.totals();
        let tp = throughput(r);
        let intensity = traffic_intensity(r, &r.capacities, r.holding_time).ok();
        let policy = match (r.policy_enabled, r.policy_column) {
            (false, _) => "none".to_string(),
            (true, Some(c)) => c.to_string(),
            (true, None) => "custom".to_string(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario_id,
            policy,
            r.rate_scale,
            r.population_multiplier,
            r.seed,
            t.arrivals,
            t.admissions,
            t.blocks_full,
            t.blocks_policy,
            opt(blocking_probability(r).overall),
            opt(tp.fraction),
            tp.rate,
            opt(intensity),
        )
        .expect("writing to a String");
    }
    Ok(out)
}

/// Writes [`results_csv`] to `destination`, returning the number of data rows.
pub fn write_results_csv(reports: &[MetricsReport], destination: impl AsRef<Path>) -> Result<usize> {
    let path = destination.as_ref();
    std::fs::write(path, results_csv(reports)?).map_err(|e| Error::io(path, e))?;
    Ok(reports.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FigureId {
    /// Per-cluster blocking under a policy column.
    PolicyBlocking,
    /// Capacity blocking with and without the policy.
    PolicyVsNoPolicy,
    /// Throughput fraction against population size.
    ThroughputPopulation,
    /// Offered traffic intensity against the rate scale.
    Intensity,
}

impl FigureId {
    pub const ALL: [FigureId; 4] = [
        FigureId::PolicyBlocking,
        FigureId::PolicyVsNoPolicy,
        FigureId::ThroughputPopulation,
        FigureId::Intensity,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FigureId::PolicyBlocking => "F5_F8_policy_blocking",
            FigureId::PolicyVsNoPolicy => "F9_F10_policy_vs_nopolicy",
            FigureId::ThroughputPopulation => "F11_throughput_population",
            FigureId::Intensity => "F12_intensity",
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown figure id '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub figure_id: FigureId,
    /// Distinguishes series of the same figure; also the file-name suffix.
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
}

impl PlotSeries {
    fn new(
        figure_id: FigureId,
        name: impl Into<String>,
        x_label: &str,
        y_label: &str,
        mut points: Vec<(f64, f64)>,
    ) -> Self {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        PlotSeries {
            figure_id,
            name: name.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            points,
        }
    }

    pub fn file_name(&self) -> String {
        format!("{}_{}.dat", self.figure_id, self.name)
    }

    /// `#` header lines followed by whitespace-separated `x y` rows.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# figure_id: {}", self.figure_id).unwrap();
        writeln!(out, "# series: {}", self.name).unwrap();
        writeln!(out, "# x: {}", self.x_label).unwrap();
        writeln!(out, "# y: {}", self.y_label).unwrap();
        for (x, y) in &self.points {
            writeln!(out, "{x} {y}").unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut figure = None;
        let mut name = None;
        let mut x_label = None;
        let mut y_label = None;
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let parse_err = |message: String| Error::Parse { line: lineno, message };
            if let Some(comment) = line.strip_prefix('#') {
                let Some((key, value)) = comment.split_once(':') else {
                    continue;
                };
                let value = value.trim().to_string();
                match key.trim() {
                    "figure_id" => figure = Some(value.parse::<FigureId>().map_err(|e| parse_err(e.to_string()))?),
                    "series" => name = Some(value),
                    "x" => x_label = Some(value),
                    "y" => y_label = Some(value),
                    _ => {}
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace().map(str::parse::<f64>);
            match (fields.next(), fields.next(), fields.next()) {
                (Some(Ok(x)), Some(Ok(y)), None) => points.push((x, y)),
                _ => return Err(parse_err(format!("expected two numbers, got '{line}'"))),
            }
        }
        let missing = |what: &str| Error::Parse {
            line: 0,
            message: format!("missing '{what}' header"),
        };
        Ok(PlotSeries {
            figure_id: figure.ok_or_else(|| missing("figure_id"))?,
            name: name.ok_or_else(|| missing("series"))?,
            x_label: x_label.ok_or_else(|| missing("x"))?,
            y_label: y_label.ok_or_else(|| missing("y"))?,
            points,
        })
    }
}

fn distinct(values: impl Iterator<Item = f64>) -> usize {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.len()
}

fn require_axis(reports: &[&MetricsReport], parameter: &str, value: impl Fn(&MetricsReport) -> f64) -> Result<()> {
    if distinct(reports.iter().map(|r| value(r))) < 2 {
        return Err(Error::config(format!(
            "plot needs reports covering at least two values of {parameter}"
        )));
    }
    Ok(())
}

/// Builds the plot series for `figure` from a set of reports.
///
/// * policy blocking: one series per report, x = cluster traffic rate (Mb/s),
///   y = that class's blocking probability.
/// * policy vs no policy: two series over the rate scale, y = capacity
///   blocking (requests refused because every partition was full).
/// * throughput: x = population multiplier, y = throughput fraction.
/// * intensity: x = rate scale, y = offered erlangs per port.
pub fn plot_series(reports: &[MetricsReport], figure: FigureId) -> Result<Vec<PlotSeries>> {
    if reports.is_empty() {
        return Err(Error::config(format!("no reports to plot for {figure}")));
    }
    let all: Vec<&MetricsReport> = reports.iter().collect();
    match figure {
        FigureId::PolicyBlocking => Ok(reports
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let b = blocking_probability(r);
                let points = r
                    .cluster_rates
                    .iter()
                    .zip(&b.per_class)
                    .filter_map(|(&x, y)| y.map(|y| (x, y)))
                    .collect();
                let name = match (r.policy_enabled, r.policy_column) {
                    (true, Some(c)) => format!("col{c:02}_run{:02}", i + 1),
                    (true, None) => format!("custom_run{:02}", i + 1),
                    (false, _) => format!("nopolicy_run{:02}", i + 1),
                };
                PlotSeries::new(
                    figure,
                    name,
                    "cluster traffic rate (Mb/s)",
                    "blocking probability",
                    points,
                )
            })
            .collect()),
        FigureId::PolicyVsNoPolicy => {
            let (on, off): (Vec<&MetricsReport>, Vec<&MetricsReport>) = all.iter().partition(|r| r.policy_enabled);
            if on.is_empty() {
                return Err(Error::config("policy comparison needs runs with the policy enabled"));
            }
            if off.is_empty() {
                return Err(Error::config("policy comparison needs runs with the policy disabled"));
            }
            require_axis(&on, "rate_scale", |r| r.rate_scale)?;
            require_axis(&off, "rate_scale", |r| r.rate_scale)?;
            let series = |group: &[&MetricsReport], name: &str| {
                let points = group
                    .iter()
                    .filter_map(|r| capacity_blocking(r).map(|b| (r.rate_scale, b)))
                    .collect();
                PlotSeries::new(figure, name, "rate scale", "capacity blocking probability", points)
            };
            Ok(vec![series(&on, "policy"), series(&off, "no_policy")])
        }
        FigureId::ThroughputPopulation => {
            require_axis(&all, "population_multiplier", |r| r.population_multiplier)?;
            let points = reports
                .iter()
                .filter_map(|r| throughput(r).fraction.map(|f| (r.population_multiplier, f)))
                .collect();
            Ok(vec![PlotSeries::new(
                figure,
                "throughput",
                "population multiplier",
                "throughput fraction",
                points,
            )])
        }
        FigureId::Intensity => {
            require_axis(&all, "rate_scale", |r| r.rate_scale)?;
            let points = reports
                .iter()
                .map(|r| Ok((r.rate_scale, traffic_intensity(r, &r.capacities, r.holding_time)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(vec![PlotSeries::new(
                figure,
                "intensity",
                "rate scale",
                "traffic intensity (erlangs per port)",
                points,
            )])
        }
    }
}

/// Builds the series for `figure` and writes one file per series into
/// `destination`, which must be an existing directory.
pub fn emit_plot_series(
    reports: &[MetricsReport],
    figure: FigureId,
    destination: impl AsRef<Path>,
) -> Result<Vec<PlotSeries>> {
    let series = plot_series(reports, figure)?;
    let dir = destination.as_ref();
    for s in &series {
        let path: PathBuf = dir.join(s.file_name());
        std::fs::write(&path, s.to_text()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(series)
}
