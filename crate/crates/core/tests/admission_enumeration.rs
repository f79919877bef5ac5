use proptest::prelude::*;
use vodsim::admission::{outcome_distribution, UnitDraw};
use vodsim::{
    admit, release, AdmissionOutcome, BlockReason, CascadeMode, OnPolicyReject, PolicyVector, Scan, ServerState,
};

const MODES: [CascadeMode; 4] = [
    CascadeMode::new(Scan::WrapAround, OnPolicyReject::Continue),
    CascadeMode::new(Scan::WrapAround, OnPolicyReject::Drop),
    CascadeMode::new(Scan::ForwardOnly, OnPolicyReject::Continue),
    CascadeMode::new(Scan::ForwardOnly, OnPolicyReject::Drop),
];

/// Policy levels that are exact multiples of 1/4, so four equally likely
/// draws at the midpoints of each quarter hit "u < p" with probability p.
const LEVELS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
const GRID: [f64; 4] = [0.125, 0.375, 0.625, 0.875];

#[derive(Debug, Clone, PartialEq, Default)]
struct Dist {
    admitted: Vec<f64>,
    full: f64,
    policy: f64,
}

/// Independent brute force: enumerate every vector of Bernoulli results, one
/// per partition, and apply the scan rule directly.
fn enumerate_oracle(caps: &[u32], occ: &[u32], class: usize, policy: &[f64], mode: CascadeMode) -> Dist {
    let k = caps.len();
    let mut dist = Dist {
        admitted: vec![0.0; k],
        ..Dist::default()
    };
    for bits in 0..(1u32 << k) {
        let weight: f64 = (0..k)
            .map(|j| if bits >> j & 1 == 1 { policy[j] } else { 1.0 - policy[j] })
            .product();
        if weight == 0.0 {
            continue;
        }
        let order: Vec<usize> = match mode.scan {
            Scan::WrapAround => (0..k).map(|s| (class + s) % k).collect(),
            Scan::ForwardOnly => (class..k).collect(),
        };
        let mut saw_free = false;
        let mut placed = None;
        for j in order {
            if occ[j] >= caps[j] {
                continue;
            }
            saw_free = true;
            if bits >> j & 1 == 1 {
                placed = Some(j);
                break;
            }
            if mode.on_policy_reject == OnPolicyReject::Drop {
                break;
            }
        }
        match placed {
            Some(j) => dist.admitted[j] += weight,
            None if saw_free => dist.policy += weight,
            None => dist.full += weight,
        }
    }
    dist
}

/// Feeds grid draws from a prefix; flags when admit wants more draws than the
/// prefix holds.
struct TreeDraws<'a> {
    prefix: &'a [usize],
    pos: usize,
    overflow: bool,
}

impl UnitDraw for TreeDraws<'_> {
    fn draw(&mut self) -> f64 {
        let v = match self.prefix.get(self.pos) {
            Some(&i) => GRID[i],
            None => {
                self.overflow = true;
                GRID[0]
            }
        };
        self.pos += 1;
        v
    }
}

/// Exact outcome distribution of `admit` itself, by running it on every draw
/// sequence it can request.
fn admit_distribution(caps: &[u32], occ: &[u32], class: usize, policy: &PolicyVector, mode: CascadeMode) -> Dist {
    let k = caps.len();
    let mut dist = Dist {
        admitted: vec![0.0; k],
        ..Dist::default()
    };
    let mut stack: Vec<Vec<usize>> = vec![vec![]];
    while let Some(prefix) = stack.pop() {
        let mut state = ServerState::new(caps.to_vec()).unwrap();
        state.set_occupancies(occ).unwrap();
        let mut draws = TreeDraws {
            prefix: &prefix,
            pos: 0,
            overflow: false,
        };
        let outcome = admit(&mut state, class, policy, mode, &mut draws).unwrap();
        if draws.overflow {
            for i in 0..GRID.len() {
                let mut next = prefix.clone();
                next.push(i);
                stack.push(next);
            }
            continue;
        }
        assert_eq!(draws.pos, prefix.len(), "unused draws in prefix");
        let weight = 0.25f64.powi(prefix.len() as i32);
        match outcome {
            AdmissionOutcome::Admitted { partition, .. } => {
                assert_eq!(state.occupancies()[partition], occ[partition] + 1);
                assert!(occ[partition] < caps[partition]);
                dist.admitted[partition] += weight;
            }
            AdmissionOutcome::Blocked(reason) => {
                assert_eq!(state.occupancies(), occ);
                match reason {
                    BlockReason::AllPartitionsFull => dist.full += weight,
                    BlockReason::PolicyRejected => dist.policy += weight,
                }
            }
        }
    }
    dist
}

fn for_each_vector(radix: &[usize], mut f: impl FnMut(&[usize])) {
    let total: usize = radix.iter().product();
    let mut v = vec![0; radix.len()];
    for mut n in 0..total {
        for (slot, &r) in v.iter_mut().zip(radix) {
            *slot = n % r;
            n /= r;
        }
        f(&v);
    }
}

#[test]
fn admit_matches_brute_force_enumeration() {
    let mut cases = 0u64;
    for k in 1..=3usize {
        for_each_vector(&vec![3; k], |caps| {
            let caps: Vec<u32> = caps.iter().map(|&c| c as u32).collect();
            let occ_radix: Vec<usize> = caps.iter().map(|&c| c as usize + 1).collect();
            for_each_vector(&occ_radix, |occ| {
                let occ: Vec<u32> = occ.iter().map(|&q| q as u32).collect();
                for_each_vector(&vec![LEVELS.len(); k], |levels| {
                    let probs: Vec<f64> = levels.iter().map(|&i| LEVELS[i]).collect();
                    let policy = PolicyVector::new(probs.clone()).unwrap();
                    for class in 0..k {
                        for mode in MODES {
                            let oracle = enumerate_oracle(&caps, &occ, class, &probs, mode);
                            let simulated = admit_distribution(&caps, &occ, class, &policy, mode);
                            // Dyadic weights: both sides are exact in binary floating point.
                            assert_eq!(
                                simulated, oracle,
                                "caps {caps:?} occ {occ:?} class {class} policy {probs:?} {mode:?}"
                            );

                            let mut state = ServerState::new(caps.clone()).unwrap();
                            state.set_occupancies(&occ).unwrap();
                            let closed = outcome_distribution(&state, class, &policy, mode).unwrap();
                            assert_eq!(closed.admitted, oracle.admitted);
                            assert_eq!(closed.blocked_full, oracle.full);
                            assert_eq!(closed.blocked_policy, oracle.policy);
                            cases += 1;
                        }
                    }
                });
            });
        });
    }
    assert!(cases > 50_000, "{cases}");
}

#[test]
fn raising_a_policy_entry_never_lowers_admission() {
    for k in 1..=3usize {
        for_each_vector(&vec![3; k], |caps| {
            let caps: Vec<u32> = caps.iter().map(|&c| c as u32).collect();
            let occ_radix: Vec<usize> = caps.iter().map(|&c| c as usize + 1).collect();
            for_each_vector(&occ_radix, |occ| {
                let occ: Vec<u32> = occ.iter().map(|&q| q as u32).collect();
                for_each_vector(&vec![LEVELS.len(); k], |levels| {
                    let probs: Vec<f64> = levels.iter().map(|&i| LEVELS[i]).collect();
                    for j in 0..k {
                        if levels[j] + 1 == LEVELS.len() {
                            continue;
                        }
                        let mut raised = probs.clone();
                        raised[j] = LEVELS[levels[j] + 1];
                        for class in 0..k {
                            for mode in MODES {
                                let before = enumerate_oracle(&caps, &occ, class, &probs, mode);
                                let after = enumerate_oracle(&caps, &occ, class, &raised, mode);
                                let a: f64 = before.admitted.iter().sum();
                                let b: f64 = after.admitted.iter().sum();
                                assert!(b >= a, "caps {caps:?} occ {occ:?} {probs:?} -> {raised:?}");
                            }
                        }
                    }
                });
            });
        });
    }
}

fn small_system() -> impl Strategy<Value = (Vec<u32>, Vec<f64>)> {
    (1usize..5).prop_flat_map(|k| {
        (
            prop::collection::vec(0u32..4, k),
            prop::collection::vec(0.0f64..=1.0, k),
        )
    })
}

proptest! {
    #[test]
    fn closed_form_matches_enumeration_for_real_policies(
        (caps, probs) in small_system(),
        seed in any::<u64>(),
    ) {
        let k = caps.len();
        let occ: Vec<u32> = caps.iter().enumerate().map(|(j, &c)| ((seed >> (8 * j)) as u32) % (c + 1)).collect();
        let mut state = ServerState::new(caps.clone()).unwrap();
        state.set_occupancies(&occ).unwrap();
        let policy = PolicyVector::new(probs.clone()).unwrap();
        for class in 0..k {
            for mode in MODES {
                let oracle = enumerate_oracle(&caps, &occ, class, &probs, mode);
                let d = outcome_distribution(&state, class, &policy, mode).unwrap();
                for j in 0..k {
                    prop_assert!((d.admitted[j] - oracle.admitted[j]).abs() < 1e-12);
                }
                prop_assert!((d.blocked_full - oracle.full).abs() < 1e-12);
                prop_assert!((d.blocked_policy - oracle.policy).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_admit_release_keeps_bounds(
        (caps, probs) in small_system(),
        ops in prop::collection::vec((any::<bool>(), 0usize..4), 0..200),
        seed in any::<u64>(),
    ) {
        let k = caps.len();
        let policy = PolicyVector::new(probs).unwrap();
        let mut state = ServerState::new(caps.clone()).unwrap();
        let mut rng = vodsim::traffic::cluster_stream(seed, 0);
        let (mut admitted, mut released) = (0u64, 0u64);
        for (is_arrival, idx) in ops {
            let idx = idx % k;
            if is_arrival {
                if admit(&mut state, idx, &policy, MODES[idx % 4], &mut rng).unwrap().is_admitted() {
                    admitted += 1;
                }
            } else if state.occupancies()[idx] > 0 {
                release(&mut state, idx).unwrap();
                released += 1;
            } else {
                prop_assert!(release(&mut state, idx).is_err());
            }
            for (occ, cap) in state.occupancies().iter().zip(&caps) {
                prop_assert!(occ <= cap);
            }
        }
        prop_assert_eq!(admitted, released + state.total_occupancy());
    }

    #[test]
    fn certain_policy_blocks_only_when_full(
        caps in prop::collection::vec(0u32..4, 1..5),
        seed in any::<u64>(),
    ) {
        let k = caps.len();
        let mode = MODES[0];
        let mut state = ServerState::new(caps.clone()).unwrap();
        let occ: Vec<u32> = caps.iter().enumerate().map(|(j, &c)| ((seed >> (8 * j)) as u32) % (c + 1)).collect();
        state.set_occupancies(&occ).unwrap();
        let full = state.is_full();
        let mut rng = vodsim::traffic::cluster_stream(seed, 1);
        let out = admit(&mut state, (seed as usize) % k, &PolicyVector::admit_all(k), mode, &mut rng).unwrap();
        prop_assert_eq!(out == AdmissionOutcome::Blocked(BlockReason::AllPartitionsFull), full);
        prop_assert_eq!(out.is_admitted(), !full);

        let mut empty = ServerState::new(caps.clone()).unwrap();
        let zero = PolicyVector::new(vec![0.0; k]).unwrap();
        for class in 0..k {
            for mode in MODES {
                let out = admit(&mut empty, class, &zero, mode, &mut rng).unwrap();
                prop_assert!(!out.is_admitted());
            }
        }
        prop_assert_eq!(empty.total_occupancy(), 0);
    }
}
