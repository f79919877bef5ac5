//! Cluster rate ladders, Poisson request streams and random control matrices.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::ControlMatrix;

/// Evenly spaced per-cluster traffic rates in Mb/s.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRateLadder {
    min_rate: f64,
    max_rate: f64,
    count: usize,
}

impl ClusterRateLadder {
    /// 20 clusters from 1 Mb/s to 10.5 Mb/s in 0.5 Mb/s steps.
    pub fn reference() -> Self {
        cluster_rates(1.0, 10.5, 20).expect("reference ladder is valid")
    }

    pub fn min_rate(&self) -> f64 {
        self.min_rate
    }

    pub fn max_rate(&self) -> f64 {
        self.max_rate
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn step(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.max_rate - self.min_rate) / (self.count - 1) as f64
        }
    }

    pub fn rates(&self) -> Vec<f64> {
        let step = self.step();
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.max_rate
                } else {
                    self.min_rate + step * i as f64
                }
            })
            .collect()
    }
}

pub fn cluster_rates(min_rate: f64, max_rate: f64, count: usize) -> Result<ClusterRateLadder> {
    if count == 0 {
        return Err(Error::config("rate ladder needs at least one cluster"));
    }
    if !(min_rate.is_finite() && max_rate.is_finite()) || min_rate < 0.0 {
        return Err(Error::config(format!("invalid rate bounds {min_rate}..{max_rate}")));
    }
    if max_rate < min_rate {
        return Err(Error::config(format!(
            "maximum rate {max_rate} below minimum {min_rate}"
        )));
    }
    if count == 1 && min_rate != max_rate {
        return Err(Error::config(
            "a single-cluster ladder needs equal minimum and maximum rates",
        ));
    }
    Ok(ClusterRateLadder {
        min_rate,
        max_rate,
        count,
    })
}

/// Converts a traffic rate in Mb/s into a request rate:
/// `scale * traffic_rate / playback_rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateMapping {
    /// Mb/s consumed by one stream.
    pub playback_rate: f64,
    pub scale: f64,
}

impl Default for RateMapping {
    fn default() -> Self {
        RateMapping {
            playback_rate: 4.0,
            scale: 1.0,
        }
    }
}

impl RateMapping {
    pub fn validate(&self) -> Result<()> {
        if !(self.playback_rate > 0.0 && self.playback_rate.is_finite()) {
            return Err(Error::config(format!(
                "playback rate must be positive, got {}",
                self.playback_rate
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::config(format!(
                "rate scale must be positive, got {}",
                self.scale
            )));
        }
        Ok(())
    }
}

/// Requests per second generated by `traffic_rate` Mb/s of demand.
pub fn request_rate(traffic_rate: f64, mapping: RateMapping) -> Result<f64> {
    mapping.validate()?;
    if traffic_rate < 0.0 {
        return Err(Error::config(format!("negative traffic rate {traffic_rate}")));
    }
    Ok(mapping.scale * traffic_rate / mapping.playback_rate)
}

/// Inverse-transform sample of Exp(rate) from a uniform `u` in (0,1).
pub fn interarrival_from_uniform(u: f64, rate: f64) -> f64 {
    -u.ln() / rate
}

/// Time to the next Poisson arrival, or `None` for a silent stream (rate <= 0).
pub fn next_interarrival<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Option<f64> {
    if rate.is_nan() || rate <= 0.0 {
        return None;
    }
    let u: f64 = rng.sample(Open01);
    Some(interarrival_from_uniform(u, rate))
}

/// Independent random stream for one cluster. The stream id keeps cluster
/// draws separate, so adding or removing a cluster leaves the others intact.
pub fn cluster_stream(seed: u64, cluster: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cluster as u64);
    rng
}

/// Stream ids reserved for non-arrival randomness in a run.
pub(crate) const ADMISSION_STREAM: u64 = u64::MAX;
pub(crate) const HOLDING_STREAM: u64 = u64::MAX - 1;

pub(crate) fn reserved_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const MIN_HUNDREDTHS: u32 = 1;
const MAX_HUNDREDTHS: u32 = 10;

/// Random `k x n` control matrix. Each column is a composition of 1.00 into
/// hundredths with every entry between 0.01 and 0.10.
pub fn generate_matrix(k: usize, n: usize, seed: u64) -> Result<ControlMatrix> {
    if k < 2 || n == 0 {
        return Err(Error::config(format!(
            "matrix generation needs k >= 2 and n >= 1, got {k}x{n}"
        )));
    }
    let lo = k as u64 * u64::from(MIN_HUNDREDTHS);
    let hi = k as u64 * u64::from(MAX_HUNDREDTHS);
    if lo > 100 || hi < 100 {
        return Err(Error::config(format!(
            "cannot split 1.00 into {k} entries within [0.01, 0.10]"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = vec![0.0; k * n];
    for c in 0..n {
        let mut parts = vec![MIN_HUNDREDTHS; k];
        let mut remaining = 100 - lo as u32;
        while remaining > 0 {
            let open: Vec<usize> = (0..k).filter(|&i| parts[i] < MAX_HUNDREDTHS).collect();
            let pick = open[rng.random_range(0..open.len())];
            parts[pick] += 1;
            remaining -= 1;
        }
        for (r, &h) in parts.iter().enumerate() {
            entries[r * n + c] = f64::from(h) / 100.0;
        }
    }
    ControlMatrix::new(k, n, entries)
}
