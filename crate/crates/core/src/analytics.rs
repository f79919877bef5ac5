//! Closed-form and exact oracles for the admission model.

use nalgebra::{DMatrix, DVector};

use crate::admission::{outcome_distribution, CascadeMode, OnPolicyReject};
use crate::error::{Error, Result};
use crate::model::{PolicyVector, ServerState};

/// Largest number of concurrent streams a server can sustain:
/// `floor(disk_bandwidth / playback_rate)`.
pub fn max_streams(disk_bandwidth: f64, playback_rate: f64) -> Result<u64> {
    if playback_rate.is_nan() || playback_rate <= 0.0 {
        return Err(Error::config(format!(
            "playback rate must be positive, got {playback_rate}"
        )));
    }
    if !(disk_bandwidth >= 0.0 && disk_bandwidth.is_finite()) {
        return Err(Error::config(format!(
            "disk bandwidth must be non-negative, got {disk_bandwidth}"
        )));
    }
    Ok((disk_bandwidth / playback_rate).floor() as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservedBandwidthParams {
    /// Total number of links on the path.
    pub links: u32,
    /// Links carrying a playback or interactive session.
    pub active_links: u32,
    /// Most data (Mb) sent to any interactive session.
    pub burst: f64,
    /// Data volume (Mb) per remaining link.
    pub volume: f64,
    /// Playback duration in seconds.
    pub duration: f64,
    /// Bandwidth of each link in Mb/s; one entry per link.
    pub link_bandwidths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReservedBandwidth {
    /// Mb/s.
    pub rate: f64,
    /// 1-based links whose bandwidth is below the reserved rate.
    pub infeasible_links: Vec<usize>,
}

impl ReservedBandwidth {
    pub fn feasible(&self) -> bool {
        self.infeasible_links.is_empty()
    }
}

/// Reserved rate `(K * burst + (J - K) * volume) / duration`, checked
/// against every link's bandwidth.
pub fn reserved_bandwidth(params: &ReservedBandwidthParams) -> Result<ReservedBandwidth> {
    if params.active_links > params.links {
        return Err(Error::config(format!(
            "{} active links exceed {} total",
            params.active_links, params.links
        )));
    }
    if params.duration.is_nan() || params.duration <= 0.0 {
        return Err(Error::config(format!(
            "playback duration must be positive, got {}",
            params.duration
        )));
    }
    if !params.link_bandwidths.is_empty() && params.link_bandwidths.len() != params.links as usize {
        return Err(Error::config(format!(
            "{} link bandwidths given for {} links",
            params.link_bandwidths.len(),
            params.links
        )));
    }
    if params.link_bandwidths.iter().any(|&b| b < 0.0) || params.burst < 0.0 || params.volume < 0.0 {
        return Err(Error::config("bandwidths and data volumes must be non-negative"));
    }
    let k = f64::from(params.active_links);
    let idle = f64::from(params.links - params.active_links);
    let rate = (k * params.burst + idle * params.volume) / params.duration;
    let infeasible_links = params
        .link_bandwidths
        .iter()
        .enumerate()
        .filter(|(_, &b)| rate > b)
        .map(|(j, _)| j + 1)
        .collect();
    Ok(ReservedBandwidth { rate, infeasible_links })
}

/// Erlang-B blocking for `servers` circuits offered `load` erlangs, by the
/// recursion `B(c) = a B(c-1) / (c + a B(c-1))` from `B(0) = 1`.
pub fn erlang_b(servers: u32, load: f64) -> Result<f64> {
    if !(load >= 0.0 && load.is_finite()) {
        return Err(Error::config(format!("offered load must be non-negative, got {load}")));
    }
    let mut b = 1.0;
    for c in 1..=servers {
        b = load * b / (f64::from(c) + load * b);
    }
    Ok(b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeInputs {
    /// Probability that each partition has a free port.
    pub availability: Vec<f64>,
    pub policy: PolicyVector,
    /// 0-based home partition.
    pub start_class: usize,
    pub mode: CascadeMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeStep {
    pub partition: usize,
    /// Admission probability given the scan reached this partition:
    /// `policy[j] * p(A_j)`.
    pub conditional: f64,
    /// Unconditional probability of being admitted here.
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeResult {
    pub steps: Vec<CascadeStep>,
    pub total: f64,
}

/// Admission probability along the overflow cascade, treating the partition
/// availability events as independent.
pub fn cascade_admit_probability(inputs: &CascadeInputs) -> Result<CascadeResult> {
    let k = inputs.availability.len();
    if k == 0 || inputs.policy.len() != k {
        return Err(Error::config(format!(
            "availability has {k} entries, policy has {}",
            inputs.policy.len()
        )));
    }
    if inputs.start_class >= k {
        return Err(Error::config(format!(
            "start class {} out of range",
            inputs.start_class
        )));
    }
    if let Some(a) = inputs.availability.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::config(format!("availability {a} outside [0,1]")));
    }
    let mut reach = 1.0;
    let mut total = 0.0;
    let mut steps = Vec::with_capacity(k);
    for j in inputs.mode.scan_order(inputs.start_class, k) {
        let avail = inputs.availability[j];
        let conditional = inputs.policy.get(j) * avail;
        let contribution = reach * conditional;
        total += contribution;
        steps.push(CascadeStep {
            partition: j,
            conditional,
            contribution,
        });
        reach *= match inputs.mode.on_policy_reject {
            OnPolicyReject::Continue => 1.0 - conditional,
            // A rejected draw ends the scan; only unavailable partitions pass it on.
            OnPolicyReject::Drop => 1.0 - avail,
        };
    }
    Ok(CascadeResult { steps, total })
}

/// Limit on the number of occupancy vectors the exact solver will build.
pub const MAX_CTMC_STATES: usize = 100_000;
/// Above this many states the stationary distribution is found iteratively.
pub const DENSE_SOLVE_LIMIT: usize = 2_000;
const RESIDUAL_TOLERANCE: f64 = 1e-10;
const MAX_SWEEPS: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CtmcSolution {
    /// Occupancy vector of each state, in mixed-radix order.
    pub states: Vec<Vec<u32>>,
    pub distribution: Vec<f64>,
    /// Blocking probability seen by each class's arrivals.
    pub per_class: Vec<f64>,
    /// Arrival-weighted blocking over all classes.
    pub overall: f64,
    /// Largest absolute entry of `pi * Q`.
    pub residual: f64,
}

struct Chain {
    states: Vec<Vec<u32>>,
    /// Outgoing transitions (target, rate) per state.
    out: Vec<Vec<(usize, f64)>>,
    /// Per-state, per-class blocking probability of an arrival.
    block: Vec<Vec<f64>>,
}

fn build_chain(
    capacities: &[u32],
    policy: &PolicyVector,
    rates: &[f64],
    service_rate: f64,
    mode: CascadeMode,
) -> Result<Chain> {
    let k = capacities.len();
    let radix: Vec<usize> = capacities.iter().map(|&c| c as usize + 1).collect();
    let n: usize = radix.iter().product();
    let mut stride = vec![1usize; k];
    for j in 1..k {
        stride[j] = stride[j - 1] * radix[j - 1];
    }

    let mut server = ServerState::new(capacities.to_vec())?;
    let mut states = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    let mut block = Vec::with_capacity(n);
    for s in 0..n {
        let occ: Vec<u32> = (0..k).map(|j| ((s / stride[j]) % radix[j]) as u32).collect();
        server.set_occupancies(&occ)?;
        let mut edges = Vec::new();
        let mut blocked = Vec::with_capacity(k);
        for (class, &lambda) in rates.iter().enumerate() {
            let dist = outcome_distribution(&server, class, policy, mode)?;
            for (j, &p) in dist.admitted.iter().enumerate() {
                if p > 0.0 && lambda > 0.0 {
                    edges.push((s + stride[j], lambda * p));
                }
            }
            blocked.push(dist.block_probability());
        }
        for (j, &q) in occ.iter().enumerate() {
            if q > 0 {
                edges.push((s - stride[j], f64::from(q) * service_rate));
            }
        }
        states.push(occ);
        out.push(edges);
        block.push(blocked);
    }
    Ok(Chain { states, out, block })
}

fn residual(chain: &Chain, pi: &[f64]) -> f64 {
    let mut flow = vec![0.0; pi.len()];
    for (s, edges) in chain.out.iter().enumerate() {
        for &(t, r) in edges {
            flow[t] += pi[s] * r;
            flow[s] -= pi[s] * r;
        }
    }
    flow.iter().fold(0.0f64, |m, f| m.max(f.abs()))
}

fn solve_dense(chain: &Chain) -> Result<Vec<f64>> {
    let n = chain.states.len();
    // Rows of Q^T are balance equations; the last one is swapped for
    // the normalization constraint.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (s, edges) in chain.out.iter().enumerate() {
        for &(t, r) in edges {
            a[(t, s)] += r;
            a[(s, s)] -= r;
        }
    }
    for s in 0..n {
        a[(n - 1, s)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Fault("singular generator matrix".into()))?;
    Ok(x.iter().map(|&v| v.max(0.0)).collect())
}

fn solve_iterative(chain: &Chain) -> Result<Vec<f64>> {
    let n = chain.states.len();
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut exit = vec![0.0; n];
    for (s, edges) in chain.out.iter().enumerate() {
        for &(t, r) in edges {
            incoming[t].push((s, r));
            exit[s] += r;
        }
    }
    let mut pi = vec![1.0 / n as f64; n];
    for sweep in 0..MAX_SWEEPS {
        for s in 0..n {
            if exit[s] > 0.0 {
                pi[s] = incoming[s].iter().map(|&(t, r)| pi[t] * r).sum::<f64>() / exit[s];
            }
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= total);
        if sweep % 16 == 15 && residual(chain, &pi) < RESIDUAL_TOLERANCE {
            return Ok(pi);
        }
    }
    Err(Error::Fault(format!(
        "stationary solve did not converge in {MAX_SWEEPS} sweeps"
    )))
}

/// Exact blocking of the admission cascade with Poisson arrivals and
/// exponential holding, from the stationary distribution of the occupancy
/// chain. Class `i` arrives at rate `rates[i]` with home partition `i`.
pub fn ctmc_blocking(
    capacities: &[u32],
    policy: &PolicyVector,
    rates: &[f64],
    service_rate: f64,
    mode: CascadeMode,
) -> Result<CtmcSolution> {
    let k = capacities.len();
    if k == 0 || rates.len() != k || policy.len() != k {
        return Err(Error::config(format!(
            "need matching lengths: {k} capacities, {} rates, {} policy entries",
            rates.len(),
            policy.len()
        )));
    }
    if !(service_rate > 0.0 && service_rate.is_finite()) {
        return Err(Error::config(format!(
            "service rate must be positive, got {service_rate}"
        )));
    }
    if let Some(r) = rates.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
        return Err(Error::config(format!("arrival rate {r} is not a non-negative number")));
    }
    let size: u128 = capacities.iter().map(|&c| u128::from(c) + 1).product();
    if size > MAX_CTMC_STATES as u128 {
        return Err(Error::StateSpaceTooLarge {
            states: size,
            limit: MAX_CTMC_STATES,
        });
    }

    let chain = build_chain(capacities, policy, rates, service_rate, mode)?;
    let n = chain.states.len();
    let pi = if rates.iter().all(|&r| r == 0.0) {
        // Nothing ever arrives: the empty state holds all the mass.
        let mut pi = vec![0.0; n];
        pi[0] = 1.0;
        pi
    } else if n <= DENSE_SOLVE_LIMIT {
        solve_dense(&chain)?
    } else {
        solve_iterative(&chain)?
    };

    let per_class: Vec<f64> = (0..k)
        .map(|i| pi.iter().zip(&chain.block).map(|(p, b)| p * b[i]).sum())
        .collect();
    let total_rate: f64 = rates.iter().sum();
    let overall = if total_rate > 0.0 {
        rates.iter().zip(&per_class).map(|(r, b)| r * b).sum::<f64>() / total_rate
    } else {
        0.0
    };
    let residual = residual(&chain, &pi);
    Ok(CtmcSolution {
        states: chain.states,
        distribution: pi,
        per_class,
        overall,
        residual,
    })
}
