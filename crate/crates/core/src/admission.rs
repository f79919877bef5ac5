//! Probabilistic admission with overflow across partitions.
//!
//! An arriving request of class `i` examines partitions in scan order starting
//! at its home partition `i`. Full partitions are skipped. At a partition with
//! a free port, a Bernoulli draw with that partition's policy probability
//! decides admission. A failed draw either continues the scan or drops the
//! request, depending on [`OnPolicyReject`].

use std::fmt;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::model::{PolicyVector, ServerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Scan {
    /// Examine all k partitions, wrapping past the last one.
    #[default]
    WrapAround,
    /// Stop after the last partition.
    ForwardOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum OnPolicyReject {
    /// Treat a failed draw like a blocked partition and keep scanning.
    #[default]
    Continue,
    /// Discard the request on the first failed draw.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CascadeMode {
    pub scan: Scan,
    pub on_policy_reject: OnPolicyReject,
}

impl CascadeMode {
    pub const fn new(scan: Scan, on_policy_reject: OnPolicyReject) -> Self {
        CascadeMode { scan, on_policy_reject }
    }

    /// Partitions examined by a class-`start` request, in order.
    pub fn scan_order(&self, start: usize, k: usize) -> impl Iterator<Item = usize> {
        let len = match self.scan {
            Scan::WrapAround => k,
            Scan::ForwardOnly => k.saturating_sub(start),
        };
        (0..len).map(move |step| (start + step) % k)
    }
}

impl fmt::Display for Scan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scan::WrapAround => "wrap",
            Scan::ForwardOnly => "forward",
        })
    }
}

impl std::str::FromStr for Scan {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wrap" | "wrap-around" | "wraparound" => Ok(Scan::WrapAround),
            "forward" | "forward-only" | "forwardonly" => Ok(Scan::ForwardOnly),
            other => Err(Error::config(format!(
                "unknown scan mode '{other}' (expected wrap or forward)"
            ))),
        }
    }
}

impl fmt::Display for OnPolicyReject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OnPolicyReject::Continue => "continue",
            OnPolicyReject::Drop => "drop",
        })
    }
}

impl std::str::FromStr for OnPolicyReject {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continue" => Ok(OnPolicyReject::Continue),
            "drop" => Ok(OnPolicyReject::Drop),
            other => Err(Error::config(format!(
                "unknown policy-reject mode '{other}' (expected continue or drop)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockReason {
    /// Every examined partition was full.
    AllPartitionsFull,
    /// At least one examined partition had a free port but its draw failed.
    PolicyRejected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdmissionOutcome {
    Admitted { partition: usize, probability: f64 },
    Blocked(BlockReason),
}

impl AdmissionOutcome {
    pub fn is_admitted(&self) -> bool {
        matches!(self, AdmissionOutcome::Admitted { .. })
    }
}

/// Source of uniform draws in [0,1) for the admission Bernoulli trials.
pub trait UnitDraw {
    fn draw(&mut self) -> f64;
}

impl<R: RngCore + ?Sized> UnitDraw for R {
    fn draw(&mut self) -> f64 {
        rand::Rng::random::<f64>(self)
    }
}

/// Replays a fixed list of draws. Panics when exhausted.
#[derive(Debug, Clone)]
pub struct ScriptedDraws {
    values: Vec<f64>,
    next: usize,
}

impl ScriptedDraws {
    pub fn new(values: Vec<f64>) -> Self {
        ScriptedDraws { values, next: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.next
    }
}

impl UnitDraw for ScriptedDraws {
    fn draw(&mut self) -> f64 {
        let v = self.values[self.next];
        self.next += 1;
        v
    }
}

fn check_class(state: &ServerState, class: usize, policy: &PolicyVector) -> Result<()> {
    if policy.len() != state.partitions() {
        return Err(Error::config(format!(
            "policy has {} entries for {} partitions",
            policy.len(),
            state.partitions()
        )));
    }
    if class >= state.partitions() {
        return Err(Error::config(format!(
            "class {class} out of range for {} partitions",
            state.partitions()
        )));
    }
    Ok(())
}

/// Runs the admission cascade for one request of class `class`.
///
/// Draws are consumed only at free partitions whose probability lies strictly
/// between 0 and 1; certain outcomes need no randomness. On admission the
/// chosen partition's occupancy grows by one; a blocked request leaves the
/// state untouched.
pub fn admit<D: UnitDraw + ?Sized>(
    state: &mut ServerState,
    class: usize,
    policy: &PolicyVector,
    mode: CascadeMode,
    draws: &mut D,
) -> Result<AdmissionOutcome> {
    check_class(state, class, policy)?;
    let mut rejected = false;
    for j in mode.scan_order(class, state.partitions()) {
        if !state.has_free_port(j) {
            continue;
        }
        let p = policy.get(j);
        let accepted = if p >= 1.0 {
            true
        } else if p <= 0.0 {
            false
        } else {
            draws.draw() < p
        };
        if accepted {
            state.occupy(j);
            return Ok(AdmissionOutcome::Admitted {
                partition: j,
                probability: p,
            });
        }
        rejected = true;
        if mode.on_policy_reject == OnPolicyReject::Drop {
            break;
        }
    }
    Ok(AdmissionOutcome::Blocked(if rejected {
        BlockReason::PolicyRejected
    } else {
        BlockReason::AllPartitionsFull
    }))
}

/// Frees one port of `partition`. Releasing an empty partition is a fault.
pub fn release(state: &mut ServerState, partition: usize) -> Result<()> {
    state.vacate(partition)
}

/// Exact probabilities of each outcome of [`admit`] for a given state.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    /// Probability of admission into each partition.
    pub admitted: Vec<f64>,
    pub blocked_full: f64,
    pub blocked_policy: f64,
}

impl OutcomeDistribution {
    pub fn admit_probability(&self) -> f64 {
        self.admitted.iter().sum()
    }

    pub fn block_probability(&self) -> f64 {
        self.blocked_full + self.blocked_policy
    }
}

/// Closed-form outcome distribution of [`admit`] without drawing: walks the
/// scan order carrying the probability that the request is still unplaced.
pub fn outcome_distribution(
    state: &ServerState,
    class: usize,
    policy: &PolicyVector,
    mode: CascadeMode,
) -> Result<OutcomeDistribution> {
    check_class(state, class, policy)?;
    let k = state.partitions();
    let mut admitted = vec![0.0; k];
    // Probability of reaching the current step without any failed draw, and
    // with at least one failed draw (Continue mode only).
    let mut clean = 1.0;
    let mut rejected = 0.0;
    let mut blocked_policy = 0.0;
    for j in mode.scan_order(class, k) {
        if !state.has_free_port(j) {
            continue;
        }
        let p = policy.get(j);
        admitted[j] = (clean + rejected) * p;
        match mode.on_policy_reject {
            OnPolicyReject::Continue => {
                rejected = (clean + rejected) * (1.0 - p);
                clean = 0.0;
            }
            OnPolicyReject::Drop => {
                blocked_policy += clean * (1.0 - p);
                clean = 0.0;
                break;
            }
        }
    }
    Ok(OutcomeDistribution {
        admitted,
        blocked_full: clean,
        blocked_policy: blocked_policy + rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const WRAP_CONTINUE: CascadeMode = CascadeMode::new(Scan::WrapAround, OnPolicyReject::Continue);

    fn policy(p: &[f64]) -> PolicyVector {
        PolicyVector::new(p.to_vec()).unwrap()
    }

    #[test]
    fn certain_admission_at_home() {
        let mut s = ServerState::new(vec![2, 2]).unwrap();
        let out = admit(
            &mut s,
            0,
            &policy(&[1.0, 0.0]),
            WRAP_CONTINUE,
            &mut ScriptedDraws::new(vec![]),
        )
        .unwrap();
        assert_eq!(
            out,
            AdmissionOutcome::Admitted {
                partition: 0,
                probability: 1.0
            }
        );
        assert_eq!(s.occupancies(), &[1, 0]);
    }

    #[test]
    fn full_server_blocks() {
        let mut s = ServerState::new(vec![1, 2]).unwrap();
        s.set_occupancies(&[1, 2]).unwrap();
        let before = s.clone();
        let out = admit(
            &mut s,
            1,
            &policy(&[0.5, 0.5]),
            WRAP_CONTINUE,
            &mut ScriptedDraws::new(vec![]),
        )
        .unwrap();
        assert_eq!(out, AdmissionOutcome::Blocked(BlockReason::AllPartitionsFull));
        assert_eq!(s, before);
    }

    #[test]
    fn overflow_hand_trace() {
        // Partition 1 full, partition 2 examined, draw 0.3 < 0.5.
        let mut s = ServerState::new(vec![1, 1]).unwrap();
        s.set_occupancies(&[1, 0]).unwrap();
        let mut draws = ScriptedDraws::new(vec![0.3]);
        let out = admit(&mut s, 0, &policy(&[0.5, 0.5]), WRAP_CONTINUE, &mut draws).unwrap();
        assert_eq!(
            out,
            AdmissionOutcome::Admitted {
                partition: 1,
                probability: 0.5
            }
        );
        assert_eq!(s.occupancies(), &[1, 1]);
        assert_eq!(draws.consumed(), 1);
    }

    #[test]
    fn drop_mode_stops_on_first_rejection() {
        let mode = CascadeMode::new(Scan::WrapAround, OnPolicyReject::Drop);
        let mut s = ServerState::new(vec![1, 1]).unwrap();
        let mut draws = ScriptedDraws::new(vec![0.9, 0.0]);
        let out = admit(&mut s, 0, &policy(&[0.5, 0.5]), mode, &mut draws).unwrap();
        assert_eq!(out, AdmissionOutcome::Blocked(BlockReason::PolicyRejected));
        assert_eq!(draws.consumed(), 1);
    }

    #[test]
    fn forward_only_does_not_wrap() {
        let mode = CascadeMode::new(Scan::ForwardOnly, OnPolicyReject::Continue);
        let mut s = ServerState::new(vec![1, 1, 1]).unwrap();
        s.set_occupancies(&[0, 0, 1]).unwrap();
        let out = admit(
            &mut s,
            2,
            &policy(&[1.0, 1.0, 1.0]),
            mode,
            &mut ScriptedDraws::new(vec![]),
        )
        .unwrap();
        assert_eq!(out, AdmissionOutcome::Blocked(BlockReason::AllPartitionsFull));
        assert_eq!(mode.scan_order(1, 3).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(WRAP_CONTINUE.scan_order(1, 3).collect::<Vec<_>>(), vec![1, 2, 0]);
    }

    #[test]
    fn release_round_trip() {
        let mut s = ServerState::new(vec![3, 3]).unwrap();
        s.set_occupancies(&[1, 2]).unwrap();
        let before = s.clone();
        let out = admit(
            &mut s,
            1,
            &policy(&[1.0, 1.0]),
            WRAP_CONTINUE,
            &mut ScriptedDraws::new(vec![]),
        )
        .unwrap();
        let AdmissionOutcome::Admitted { partition, .. } = out else {
            panic!("expected admission")
        };
        release(&mut s, partition).unwrap();
        assert_eq!(s, before);

        let mut s = ServerState::new(vec![1]).unwrap();
        s.set_occupancies(&[1]).unwrap();
        release(&mut s, 0).unwrap();
        assert_eq!(s.occupancies(), &[0]);
        assert!(matches!(release(&mut s, 0), Err(Error::Fault(_))));
    }

    #[test]
    fn zero_policy_blocks_without_occupying() {
        let mut s = ServerState::new(vec![2, 2]).unwrap();
        let mut rng = crate::traffic::cluster_stream(5, 0);
        for class in [0, 1, 0, 1] {
            let out = admit(&mut s, class, &policy(&[0.0, 0.0]), WRAP_CONTINUE, &mut rng).unwrap();
            assert_eq!(out, AdmissionOutcome::Blocked(BlockReason::PolicyRejected));
        }
        assert_eq!(s.occupancies(), &[0, 0]);
    }

    #[test]
    fn bad_class_and_policy_length() {
        let mut s = ServerState::new(vec![1, 1]).unwrap();
        let mut d = ScriptedDraws::new(vec![]);
        assert!(admit(&mut s, 2, &policy(&[1.0, 1.0]), WRAP_CONTINUE, &mut d).is_err());
        assert!(admit(&mut s, 0, &policy(&[1.0]), WRAP_CONTINUE, &mut d).is_err());
    }

    #[test]
    fn distribution_continue_two_free() {
        let s = ServerState::new(vec![1, 1]).unwrap();
        let d = outcome_distribution(&s, 0, &policy(&[0.5, 0.5]), WRAP_CONTINUE).unwrap();
        assert_eq!(d.admitted, vec![0.5, 0.25]);
        assert_eq!(d.blocked_policy, 0.25);
        assert_eq!(d.blocked_full, 0.0);
    }
}
