//! Deterministic discrete-event loop.
//!
//! Each cluster owns an independent Poisson stream; admitted requests hold a
//! port for the holding time and then depart. Events are processed in
//! `(time, departure-before-arrival, sequence)` order.

use std::cmp::Ordering;
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::admission::{admit, release, AdmissionOutcome, CascadeMode};
use crate::error::{Error, Result};
use crate::metrics::{ClassCounters, MetricsReport};
use crate::model::{
    select_policy_vector, ControlMatrix, PolicyVector, ServerState, REFERENCE_PORTS_PER_SECTION, REFERENCE_SECTIONS,
};
use crate::traffic::{
    cluster_stream, next_interarrival, request_rate, reserved_stream, ClusterRateLadder, RateMapping, ADMISSION_STREAM,
    HOLDING_STREAM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Arrival { class: usize },
    Departure { partition: usize, request: u64 },
}

impl EventKind {
    // Departures sort ahead of arrivals at the same instant.
    fn rank(&self) -> u8 {
        match self {
            EventKind::Departure { .. } => 0,
            EventKind::Arrival { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub sequence: u64,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then_with(|| self.kind.rank().cmp(&other.kind.rank()))
            .then_with(|| self.sequence.cmp(&other.sequence))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-queue of pending events with a monotone tie-break counter.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Event>>,
    next_sequence: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, time: f64, kind: EventKind) {
        debug_assert!(time >= 0.0);
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Reverse(Event { time, kind, sequence }));
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop().map(|Reverse(e)| e)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HoldingDistribution {
    #[default]
    Deterministic,
    Exponential,
}

impl fmt::Display for HoldingDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HoldingDistribution::Deterministic => "deterministic",
            HoldingDistribution::Exponential => "exponential",
        })
    }
}

impl FromStr for HoldingDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deterministic" => Ok(HoldingDistribution::Deterministic),
            "exponential" => Ok(HoldingDistribution::Exponential),
            other => Err(Error::config(format!("unknown holding distribution '{other}'"))),
        }
    }
}

/// Where a scenario's admission probabilities come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySource {
    /// No traffic handle: every free port admits (pure loss system).
    Disabled,
    Vector(PolicyVector),
    /// 1-based column of a control matrix.
    Column {
        matrix: Arc<ControlMatrix>,
        column: usize,
    },
}

impl PolicySource {
    pub fn resolve(&self, k: usize) -> Result<PolicyVector> {
        let policy = match self {
            PolicySource::Disabled => return Ok(PolicyVector::admit_all(k)),
            PolicySource::Vector(v) => v.clone(),
            PolicySource::Column { matrix, column } => select_policy_vector(matrix, *column)?,
        };
        if policy.len() != k {
            return Err(Error::config(format!(
                "policy has {} entries but the server has {k} partitions",
                policy.len()
            )));
        }
        Ok(policy)
    }

    pub fn is_enabled(&self) -> bool {
        !matches!(self, PolicySource::Disabled)
    }

    pub fn column(&self) -> Option<usize> {
        match self {
            PolicySource::Column { column, .. } => Some(*column),
            _ => None,
        }
    }
}

/// Full configuration of one simulation run. The default is the reference
/// server: 20 sections of 10 ports, 20 clusters from 1 to 10.5 Mb/s, 140 s
/// port holding, a 460 s horizon, and column 2 of the bundled control matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub capacities: Vec<u32>,
    pub policy: PolicySource,
    pub cascade: CascadeMode,
    pub ladder: ClusterRateLadder,
    pub mapping: RateMapping,
    /// Multiplies every cluster's request rate.
    pub population_multiplier: f64,
    /// Seconds a request holds its port (mean, for exponential holding).
    pub holding_time: f64,
    pub holding_distribution: HoldingDistribution,
    pub sim_time: f64,
    pub warmup: f64,
    pub seed: u64,
}

pub const DEFAULT_SEED: u64 = 42;

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            id: "run".into(),
            capacities: vec![REFERENCE_PORTS_PER_SECTION; REFERENCE_SECTIONS],
            policy: PolicySource::Column {
                matrix: Arc::new(ControlMatrix::table1()),
                column: 2,
            },
            cascade: CascadeMode::default(),
            ladder: ClusterRateLadder::reference(),
            mapping: RateMapping::default(),
            population_multiplier: 1.0,
            holding_time: 140.0,
            holding_distribution: HoldingDistribution::Deterministic,
            sim_time: 460.0,
            warmup: 0.0,
            seed: DEFAULT_SEED,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.capacities.is_empty() {
            return Err(Error::config("scenario has no partitions"));
        }
        if self.ladder.count() != self.capacities.len() {
            return Err(Error::config(format!(
                "{} clusters but {} partitions; each cluster needs a home partition",
                self.ladder.count(),
                self.capacities.len()
            )));
        }
        self.mapping.validate()?;
        if !(self.population_multiplier >= 0.0 && self.population_multiplier.is_finite()) {
            return Err(Error::config(format!(
                "population multiplier must be non-negative, got {}",
                self.population_multiplier
            )));
        }
        if !(self.holding_time > 0.0 && self.holding_time.is_finite()) {
            return Err(Error::config(format!(
                "holding time must be positive, got {}",
                self.holding_time
            )));
        }
        if !(self.warmup >= 0.0 && self.sim_time > self.warmup && self.sim_time.is_finite()) {
            return Err(Error::config(format!(
                "need sim_time > warmup >= 0, got sim_time {} warmup {}",
                self.sim_time, self.warmup
            )));
        }
        self.policy.resolve(self.capacities.len())?;
        Ok(())
    }

    /// Per-class request rates in requests/second.
    pub fn arrival_rates(&self) -> Result<Vec<f64>> {
        self.ladder
            .rates()
            .into_iter()
            .map(|r| Ok(self.population_multiplier * request_rate(r, self.mapping)?))
            .collect()
    }

    /// Offered load in erlangs summed over classes.
    pub fn offered_load(&self) -> Result<f64> {
        Ok(self.arrival_rates()?.iter().sum::<f64>() * self.holding_time)
    }
}

/// One processed event, with the admission outcome for arrivals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub kind: EventKind,
    pub outcome: Option<AdmissionOutcome>,
}

pub fn run(scenario: &Scenario) -> Result<MetricsReport> {
    simulate(scenario, None)
}

/// Like [`run`], also returning every processed event in order.
pub fn run_traced(scenario: &Scenario) -> Result<(MetricsReport, Vec<TraceRecord>)> {
    let mut trace = Vec::new();
    let report = simulate(scenario, Some(&mut trace))?;
    Ok((report, trace))
}

fn simulate(scenario: &Scenario, mut trace: Option<&mut Vec<TraceRecord>>) -> Result<MetricsReport> {
    scenario.validate()?;
    let k = scenario.capacities.len();
    let policy = scenario.policy.resolve(k)?;
    let rates = scenario.arrival_rates()?;
    let mut state = ServerState::new(scenario.capacities.clone())?;

    let mut arrival_rngs: Vec<_> = (0..k).map(|i| cluster_stream(scenario.seed, i)).collect();
    let mut admission_rng = reserved_stream(scenario.seed, ADMISSION_STREAM);
    let mut holding_rng = reserved_stream(scenario.seed, HOLDING_STREAM);

    let mut queue = EventQueue::new();
    for class in 0..k {
        if let Some(dt) = next_interarrival(rates[class], &mut arrival_rngs[class]) {
            queue.schedule(dt, EventKind::Arrival { class });
        }
    }

    let mut acc = Accumulator::new(k, scenario.warmup);
    let mut next_request = 0u64;

    while let Some(event) = queue.pop() {
        if event.time > scenario.sim_time {
            break;
        }
        acc.advance_to(&state, event.time);
        state.clock = event.time;

        let mut outcome = None;
        match event.kind {
            EventKind::Departure { partition, .. } => {
                release(&mut state, partition)?;
                acc.record_release(event.time);
            }
            EventKind::Arrival { class } => {
                let result = admit(&mut state, class, &policy, scenario.cascade, &mut admission_rng)?;
                acc.record_arrival(class, result, event.time);
                if let AdmissionOutcome::Admitted { partition, .. } = result {
                    let hold = match scenario.holding_distribution {
                        HoldingDistribution::Deterministic => scenario.holding_time,
                        HoldingDistribution::Exponential => {
                            next_interarrival(1.0 / scenario.holding_time, &mut holding_rng)
                                .expect("holding rate is positive")
                        }
                    };
                    queue.schedule(
                        event.time + hold,
                        EventKind::Departure {
                            partition,
                            request: next_request,
                        },
                    );
                    next_request += 1;
                }
                if let Some(dt) = next_interarrival(rates[class], &mut arrival_rngs[class]) {
                    queue.schedule(event.time + dt, EventKind::Arrival { class });
                }
                outcome = Some(result);
            }
        }
        debug_assert!((0..k).all(|j| state.occupancies()[j] <= state.capacities()[j]));
        if let Some(trace) = trace.as_deref_mut() {
            trace.push(TraceRecord {
                time: event.time,
                kind: event.kind,
                outcome,
            });
        }
    }
    acc.advance_to(&state, scenario.sim_time);

    let report = MetricsReport {
        scenario_id: scenario.id.clone(),
        policy_enabled: scenario.policy.is_enabled(),
        policy_column: scenario.policy.column(),
        rate_scale: scenario.mapping.scale,
        population_multiplier: scenario.population_multiplier,
        seed: scenario.seed,
        capacities: scenario.capacities.clone(),
        holding_time: scenario.holding_time,
        horizon: scenario.sim_time - scenario.warmup,
        cluster_rates: scenario.ladder.rates(),
        offered_rates: rates,
        classes: acc.classes,
        occupancy_time: acc.occupancy_time,
        releases: acc.releases,
        held_at_start: acc.held_at_start.unwrap_or(state.total_occupancy()),
        held_at_end: state.total_occupancy(),
    };
    report.check_conservation()?;
    Ok(report)
}

/// Counters that only start once the clock passes the warmup boundary.
struct Accumulator {
    warmup: f64,
    last_time: f64,
    classes: Vec<ClassCounters>,
    occupancy_time: Vec<f64>,
    releases: u64,
    held_at_start: Option<u64>,
}

impl Accumulator {
    fn new(k: usize, warmup: f64) -> Self {
        Accumulator {
            warmup,
            last_time: 0.0,
            classes: vec![ClassCounters::default(); k],
            occupancy_time: vec![0.0; k],
            releases: 0,
            held_at_start: None,
        }
    }

    /// Integrates occupancy over `[last_time, time]` clipped to the measured
    /// window. `state` is the occupancy held throughout that interval.
    fn advance_to(&mut self, state: &ServerState, time: f64) {
        if self.held_at_start.is_none() && time >= self.warmup {
            self.held_at_start = Some(state.total_occupancy());
        }
        let from = self.last_time.max(self.warmup);
        if time > from {
            let dt = time - from;
            for (acc, &q) in self.occupancy_time.iter_mut().zip(state.occupancies()) {
                *acc += f64::from(q) * dt;
            }
        }
        self.last_time = self.last_time.max(time);
    }

    fn measuring(&self, time: f64) -> bool {
        time >= self.warmup
    }

    fn record_arrival(&mut self, class: usize, outcome: AdmissionOutcome, time: f64) {
        if self.measuring(time) {
            self.classes[class].record(outcome);
        }
    }

    fn record_release(&mut self, time: f64) {
        if self.measuring(time) {
            self.releases += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    RateScale,
    PopulationMultiplier,
    PolicyColumn,
    Seed,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::RateScale => "rate-scale",
            SweepAxis::PopulationMultiplier => "population-multiplier",
            SweepAxis::PolicyColumn => "policy-column",
            SweepAxis::Seed => "seed",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rate-scale" => Ok(SweepAxis::RateScale),
            "population-multiplier" => Ok(SweepAxis::PopulationMultiplier),
            "policy-column" => Ok(SweepAxis::PolicyColumn),
            "seed" => Ok(SweepAxis::Seed),
            other => Err(Error::config(format!(
                "unknown sweep axis '{other}' (expected rate-scale, population-multiplier, policy-column or seed)"
            ))),
        }
    }
}

fn as_index(axis: SweepAxis, value: f64) -> Result<u64> {
    if value >= 0.0 && value.fract() == 0.0 && value <= u64::MAX as f64 {
        Ok(value as u64)
    } else {
        Err(Error::config(format!(
            "{axis} value {value} is not a non-negative integer"
        )))
    }
}

/// Derives the scenario for one sweep point.
pub fn sweep_point(base: &Scenario, axis: SweepAxis, value: f64) -> Result<Scenario> {
    let mut s = base.clone();
    s.id = format!("{}/{axis}={value}", base.id);
    match axis {
        SweepAxis::RateScale => s.mapping.scale = value,
        SweepAxis::PopulationMultiplier => s.population_multiplier = value,
        SweepAxis::Seed => s.seed = as_index(axis, value)?,
        SweepAxis::PolicyColumn => {
            let column = as_index(axis, value)? as usize;
            s.policy = match &base.policy {
                PolicySource::Column { matrix, .. } => PolicySource::Column {
                    matrix: Arc::clone(matrix),
                    column,
                },
                _ => return Err(Error::config("policy-column sweep needs a control-matrix policy")),
            };
        }
    }
    s.validate()?;
    Ok(s)
}

/// One independent run per value, in input order. `jobs` bounds the worker
/// threads (0 picks the rayon default); results do not depend on it.
pub fn sweep(base: &Scenario, axis: SweepAxis, values: &[f64], jobs: usize) -> Result<Vec<MetricsReport>> {
    let scenarios = values
        .iter()
        .map(|&v| sweep_point(base, axis, v))
        .collect::<Result<Vec<_>>>()?;
    run_all(&scenarios, jobs)
}

/// Runs independent scenarios, possibly in parallel, returning reports in
/// input order.
pub fn run_all(scenarios: &[Scenario], jobs: usize) -> Result<Vec<MetricsReport>> {
    if jobs == 1 || scenarios.len() < 2 {
        return scenarios.iter().map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| scenarios.par_iter().map(run).collect())
}
