//! Run counters and the figures of merit derived from them.

use crate::admission::{AdmissionOutcome, BlockReason};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounters {
    pub arrivals: u64,
    pub admissions: u64,
    pub blocks_full: u64,
    pub blocks_policy: u64,
}

impl ClassCounters {
    pub fn record(&mut self, outcome: AdmissionOutcome) {
        self.arrivals += 1;
        match outcome {
            AdmissionOutcome::Admitted { .. } => self.admissions += 1,
            AdmissionOutcome::Blocked(BlockReason::AllPartitionsFull) => self.blocks_full += 1,
            AdmissionOutcome::Blocked(BlockReason::PolicyRejected) => self.blocks_policy += 1,
        }
    }

    pub fn blocks(&self) -> u64 {
        self.blocks_full + self.blocks_policy
    }

    pub fn blocking_probability(&self) -> Option<f64> {
        ratio(self.blocks(), self.arrivals)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Outcome of one simulation run. Counters cover the measured window only,
/// i.e. events at or after the warmup boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub scenario_id: String,
    pub policy_enabled: bool,
    pub policy_column: Option<usize>,
    pub rate_scale: f64,
    pub population_multiplier: f64,
    pub seed: u64,
    pub capacities: Vec<u32>,
    pub holding_time: f64,
    /// Length of the measured window in seconds.
    pub horizon: f64,
    /// Configured traffic rate of each cluster in Mb/s.
    pub cluster_rates: Vec<f64>,
    /// Request rate of each class in requests/second.
    pub offered_rates: Vec<f64>,
    pub classes: Vec<ClassCounters>,
    /// Port-seconds accumulated by each partition over the window.
    pub occupancy_time: Vec<f64>,
    pub releases: u64,
    /// Ports busy when the window opened and when it closed.
    pub held_at_start: u64,
    pub held_at_end: u64,
}

impl MetricsReport {
    pub fn totals(&self) -> ClassCounters {
        self.classes.iter().fold(ClassCounters::default(), |mut acc, c| {
            acc.arrivals += c.arrivals;
            acc.admissions += c.admissions;
            acc.blocks_full += c.blocks_full;
            acc.blocks_policy += c.blocks_policy;
            acc
        })
    }

    pub fn arrivals(&self) -> u64 {
        self.totals().arrivals
    }

    pub fn admissions(&self) -> u64 {
        self.totals().admissions
    }

    pub fn blocks(&self) -> u64 {
        self.totals().blocks()
    }

    pub fn blocks_full(&self) -> u64 {
        self.totals().blocks_full
    }

    pub fn blocks_policy(&self) -> u64 {
        self.totals().blocks_policy
    }

    pub fn total_capacity(&self) -> u64 {
        self.capacities.iter().map(|&c| u64::from(c)).sum()
    }

    /// Verifies arrivals = admissions + blocks per class, port conservation
    /// across the window, and the occupancy-integral bound.
    pub fn check_conservation(&self) -> Result<()> {
        for (i, c) in self.classes.iter().enumerate() {
            if c.arrivals != c.admissions + c.blocks() {
                return Err(Error::Fault(format!(
                    "class {i}: {} arrivals != {} admissions + {} blocks",
                    c.arrivals,
                    c.admissions,
                    c.blocks()
                )));
            }
        }
        let t = self.totals();
        if self.held_at_start + t.admissions != self.releases + self.held_at_end {
            return Err(Error::Fault(format!(
                "port balance: {} held + {} admitted != {} released + {} held",
                self.held_at_start, t.admissions, self.releases, self.held_at_end
            )));
        }
        for (j, (&area, &c)) in self.occupancy_time.iter().zip(&self.capacities).enumerate() {
            let bound = f64::from(c) * self.horizon;
            if area < 0.0 || area > bound * (1.0 + 1e-12) + 1e-9 {
                return Err(Error::Fault(format!(
                    "partition {j}: occupancy integral {area} outside [0, {bound}]"
                )));
            }
        }
        Ok(())
    }
}

/// Blocked fraction per class and overall; `None` where no request arrived.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocking {
    pub per_class: Vec<Option<f64>>,
    pub overall: Option<f64>,
}

pub fn blocking_probability(report: &MetricsReport) -> Blocking {
    Blocking {
        per_class: report.classes.iter().map(ClassCounters::blocking_probability).collect(),
        overall: report.totals().blocking_probability(),
    }
}

/// Fraction of arrivals turned away because every examined partition was
/// full, leaving out requests refused by the admission policy.
pub fn capacity_blocking(report: &MetricsReport) -> Option<f64> {
    let t = report.totals();
    ratio(t.blocks_full, t.arrivals)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Throughput {
    /// Admitted over submitted requests.
    pub fraction: Option<f64>,
    /// Admitted requests per second of measured time.
    pub rate: f64,
}

pub fn throughput(report: &MetricsReport) -> Throughput {
    let t = report.totals();
    Throughput {
        fraction: ratio(t.admissions, t.arrivals),
        rate: if report.horizon > 0.0 {
            t.admissions as f64 / report.horizon
        } else {
            0.0
        },
    }
}

/// Offered erlangs per port: `sum(lambda_i) * holding_time / sum(C_j)`.
pub fn traffic_intensity(report: &MetricsReport, capacities: &[u32], holding_time: f64) -> Result<f64> {
    let ports: u64 = capacities.iter().map(|&c| u64::from(c)).sum();
    if ports == 0 {
        return Err(Error::config("traffic intensity undefined for zero capacity"));
    }
    Ok(report.offered_rates.iter().sum::<f64>() * holding_time / ports as f64)
}

/// Mean fraction of each partition's ports in use over the window.
pub fn utilization(report: &MetricsReport) -> Vec<Option<f64>> {
    report
        .occupancy_time
        .iter()
        .zip(&report.capacities)
        .map(|(&area, &c)| (c > 0 && report.horizon > 0.0).then(|| area / (f64::from(c) * report.horizon)))
        .collect()
}

/// Standard error of a binomial proportion estimate.
pub fn binomial_std_error(p: f64, trials: u64) -> f64 {
    if trials == 0 {
        return f64::INFINITY;
    }
    (p * (1.0 - p) / trials as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(arrivals: u64, admissions: u64, full: u64, policy: u64) -> MetricsReport {
        MetricsReport {
            scenario_id: "t".into(),
            policy_enabled: true,
            policy_column: Some(2),
            rate_scale: 1.0,
            population_multiplier: 1.0,
            seed: 1,
            capacities: vec![200],
            holding_time: 140.0,
            horizon: 100.0,
            cluster_rates: vec![1.0],
            offered_rates: vec![1.0 / 140.0],
            classes: vec![ClassCounters {
                arrivals,
                admissions,
                blocks_full: full,
                blocks_policy: policy,
            }],
            occupancy_time: vec![0.0],
            releases: 0,
            held_at_start: 0,
            held_at_end: admissions,
        }
    }

    #[test]
    fn blocking_extremes() {
        assert_eq!(blocking_probability(&report(1000, 1000, 0, 0)).overall, Some(0.0));
        assert_eq!(blocking_probability(&report(1000, 0, 600, 400)).overall, Some(1.0));
        assert_eq!(blocking_probability(&report(0, 0, 0, 0)).overall, None);
    }

    #[test]
    fn throughput_values() {
        let t = throughput(&report(1000, 1000, 0, 0));
        assert_eq!(t.fraction, Some(1.0));
        assert_eq!(t.rate, 10.0);
        assert_eq!(throughput(&report(10, 0, 10, 0)).fraction, Some(0.0));
        let none = throughput(&report(0, 0, 0, 0));
        assert_eq!((none.fraction, none.rate), (None, 0.0));
    }

    #[test]
    fn throughput_and_blocking_complement() {
        let r = report(1000, 613, 300, 87);
        let b = blocking_probability(&r).overall.unwrap();
        let f = throughput(&r).fraction.unwrap();
        assert_eq!(f + b, 1.0);
    }

    #[test]
    fn intensity_arithmetic() {
        let r = report(0, 0, 0, 0);
        assert!((traffic_intensity(&r, &[200], 140.0).unwrap() - 0.005).abs() < 1e-15);
        let mut quiet = r.clone();
        quiet.offered_rates = vec![0.0];
        assert_eq!(traffic_intensity(&quiet, &[200], 140.0).unwrap(), 0.0);
        assert!(traffic_intensity(&r, &[0], 140.0).is_err());
    }

    #[test]
    fn conservation_violations_detected() {
        assert!(report(10, 5, 3, 2).check_conservation().is_ok());
        assert!(report(10, 5, 3, 1).check_conservation().is_err());
        let mut r = report(10, 5, 3, 2);
        r.releases = 1;
        assert!(r.check_conservation().is_err());
        let mut r = report(10, 5, 3, 2);
        r.occupancy_time = vec![200.0 * 100.0 + 1.0];
        assert!(r.check_conservation().is_err());
    }
}
