//! Coupled discrete-event simulation of the station.
//!
//! Arrival streams are counter-based: the arrival flag of slot `i` for seed
//! `s` is derived from the `i`-th output of SplitMix64 seeded with `s`, so
//! every policy of a replication sees the same arrivals regardless of the
//! order or thread it runs in. Replication seeds come from the same
//! generator applied to the master seed.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::costs::outcome_cost;
use crate::dynamics::{step_in_place, Action, Event, SlotOutcome};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::policies::Policy;
use crate::state_space::State;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `index`-th output (0-based) of SplitMix64 seeded with `seed`.
pub fn splitmix64_at(seed: u64, index: u64) -> u64 {
    splitmix64_mix(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Uniform in `[0, 1)` from the top 53 bits of a 64-bit output.
fn unit_interval(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Per-slot arrival flags.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalStream {
    /// Bernoulli(`p`) flags: slot `i` has an arrival iff
    /// `unit(splitmix64_at(seed, i)) < p`.
    Bernoulli { seed: u64, length: u64, p: f64 },
    /// Replayed flags.
    Recorded(Vec<bool>),
}

impl ArrivalStream {
    pub fn bernoulli(seed: u64, length: u64, p: f64) -> Self {
        ArrivalStream::Bernoulli { seed, length, p }
    }

    pub fn recorded(flags: Vec<bool>) -> Self {
        ArrivalStream::Recorded(flags)
    }

    pub fn len(&self) -> u64 {
        match self {
            ArrivalStream::Bernoulli { length, .. } => *length,
            ArrivalStream::Recorded(v) => v.len() as u64,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn arrival(&self, slot: u64) -> bool {
        match self {
            ArrivalStream::Bernoulli { seed, p, .. } => unit_interval(splitmix64_at(*seed, slot)) < *p,
            ArrivalStream::Recorded(v) => v[slot as usize],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(move |i| self.arrival(i))
    }
}

/// Aggregate of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub total_cost: f64,
    pub slots: u64,
    pub avg_cost_per_slot: f64,
    pub arrivals: u64,
    pub expirations: u64,
    pub forced_dispatches: u64,
    pub voluntary_dispatches: u64,
    /// Dispatch count by platoon size; index 0 is unused.
    pub platoon_size_histogram: Vec<u64>,
}

/// One logged slot: the state at its start, the action taken and the
/// arrival flag.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub state: State,
    pub action: Action,
    pub arrival: bool,
}

/// Runs `policy` from the empty station over `stream`.
pub fn simulate_run(policy: &Policy, params: &ModelParams, stream: &ArrivalStream) -> Result<RunResult> {
    run(policy, params, stream, None)
}

/// As [`simulate_run`], also returning the per-slot trace.
pub fn simulate_run_traced(
    policy: &Policy,
    params: &ModelParams,
    stream: &ArrivalStream,
) -> Result<(RunResult, Vec<TraceEntry>)> {
    let mut trace = Vec::with_capacity(stream.len() as usize);
    let result = run(policy, params, stream, Some(&mut trace))?;
    Ok((result, trace))
}

fn run(
    policy: &Policy,
    params: &ModelParams,
    stream: &ArrivalStream,
    mut trace: Option<&mut Vec<TraceEntry>>,
) -> Result<RunResult> {
    if stream.is_empty() {
        return Err(Error::InvalidArgument("arrival stream must cover at least one slot".into()));
    }
    let cap = params.capacity();
    let mut state = State::empty(cap);
    let mut scratch: Vec<u32> = Vec::with_capacity(cap);
    let mut result = RunResult {
        total_cost: 0.0,
        slots: stream.len(),
        avg_cost_per_slot: 0.0,
        arrivals: 0,
        expirations: 0,
        forced_dispatches: 0,
        voluntary_dispatches: 0,
        platoon_size_histogram: vec![0; cap + 1],
    };
    for (slot, arrival) in stream.iter().enumerate() {
        let action = policy.decide(&state, params);
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceEntry {
                state: state.clone(),
                action,
                arrival,
            });
        }
        scratch.clear();
        scratch.extend_from_slice(state.deadlines());
        let event = Event::from(arrival);
        let (expired, dispatched_size, forced, present) =
            step_in_place(&mut scratch, cap, params.deadline(), action, event);
        let outcome = SlotOutcome {
            next_state: State::empty(cap),
            expired,
            dispatched_size,
            forced,
            present,
        };
        result.total_cost += outcome_cost(action, &outcome, params).total;
        result.arrivals += arrival as u64;
        result.expirations += expired as u64;
        if dispatched_size > 0 {
            result.platoon_size_histogram[dispatched_size] += 1;
            if forced {
                result.forced_dispatches += 1;
            } else {
                result.voluntary_dispatches += 1;
            }
        }
        debug_assert!(scratch.len() < cap, "slot {slot}: occupancy reached capacity");
        if state.deadlines() != scratch.as_slice() {
            state = State::from_sorted(cap, scratch.clone());
        }
    }
    result.avg_cost_per_slot = result.total_cost / result.slots as f64;
    Ok(result)
}

/// Scale and seeding of a coupled experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub replications: usize,
    pub slots_per_run: u64,
    pub master_seed: u64,
}

/// Seed of replication `r` under `master_seed`.
pub fn replication_seed(master_seed: u64, replication: usize) -> u64 {
    splitmix64_at(master_seed, replication as u64)
}

/// Runs every policy on the same arrival stream per replication. The
/// outer vector follows `policies`, the inner one the replications.
pub fn coupled_experiment(
    policies: &[Policy],
    params: &ModelParams,
    config: &ExperimentConfig,
) -> Result<Vec<Vec<RunResult>>> {
    if config.replications < 2 {
        return Err(Error::InvalidArgument("at least 2 replications are required".into()));
    }
    if config.slots_per_run < 1 {
        return Err(Error::InvalidArgument("runs must cover at least one slot".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..policies.len())
        .flat_map(|pi| (0..config.replications).map(move |r| (pi, r)))
        .collect();
    let flat: Vec<RunResult> = jobs
        .par_iter()
        .map(|&(pi, r)| {
            let stream = ArrivalStream::bernoulli(
                replication_seed(config.master_seed, r),
                config.slots_per_run,
                params.arrival_prob(),
            );
            simulate_run(&policies[pi], params, &stream)
        })
        .collect::<Result<_>>()?;
    let mut grouped: Vec<Vec<RunResult>> = Vec::with_capacity(policies.len());
    let mut it = flat.into_iter();
    for _ in policies {
        grouped.push(it.by_ref().take(config.replications).collect());
    }
    Ok(grouped)
}

/// Writes a batch of runs as CSV: `policy,replication,slots,total_cost,
/// avg_cost,arrivals,expirations,forced_dispatches,voluntary_dispatches,size_1..size_L`.
pub fn write_runs_csv<W: Write>(
    labels: &[String],
    results: &[Vec<RunResult>],
    capacity: usize,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "policy",
        "replication",
        "slots",
        "total_cost",
        "avg_cost",
        "arrivals",
        "expirations",
        "forced_dispatches",
        "voluntary_dispatches",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=capacity).map(|k| format!("size_{k}")));
    w.write_record(&header)?;
    for (label, runs) in labels.iter().zip(results) {
        for (r, run) in runs.iter().enumerate() {
            let mut row = vec![
                label.clone(),
                r.to_string(),
                run.slots.to_string(),
                run.total_cost.to_string(),
                run.avg_cost_per_slot.to_string(),
                run.arrivals.to_string(),
                run.expirations.to_string(),
                run.forced_dispatches.to_string(),
                run.voluntary_dispatches.to_string(),
            ];
            row.extend((1..=capacity).map(|k| {
                run.platoon_size_histogram
                    .get(k)
                    .copied()
                    .unwrap_or(0)
                    .to_string()
            }));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

/// Exact binomial tail `P(X >= k)` for `X ~ Binomial(n, p)`.
pub fn arrival_fraction_check(p: f64, n: u64, k: u64) -> Result<f64> {
    if k == 0 {
        return Ok(1.0);
    }
    if k > n {
        return Ok(0.0);
    }
    let dist = Binomial::new(p, n).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(dist.sf(k - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{instantaneous_cost, platoon_cost};

    fn params() -> ModelParams {
        ModelParams::new(3, 10, 0.2, 15.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn splitmix_reference_values() {
        // First outputs of SplitMix64 seeded with 1234567.
        assert_eq!(splitmix64_at(1234567, 0), 6457827717110365317);
        assert_eq!(splitmix64_at(1234567, 1), 3203168211198807973);
    }

    #[test]
    fn stream_is_reproducible_and_calibrated() {
        let a = ArrivalStream::bernoulli(42, 200_000, 0.3);
        let b = ArrivalStream::bernoulli(42, 200_000, 0.3);
        assert!(a.iter().eq(b.iter()));
        let hits = a.iter().filter(|&x| x).count() as f64 / 200_000.0;
        assert!((hits - 0.3).abs() < 0.005);
        let c = ArrivalStream::bernoulli(43, 200_000, 0.3);
        assert!(!a.iter().eq(c.iter()));
    }

    #[test]
    fn always_release_charges_solo_platoons() {
        let p = params();
        let stream = ArrivalStream::bernoulli(7, 5_000, 0.2);
        let k = stream.iter().filter(|&x| x).count() as f64;
        let table = crate::dp_solver::PolicyTable::from_fn(crate::dp_solver::Mdp::new(p), |_| Action::Release);
        let r = simulate_run(&Policy::Table(std::sync::Arc::new(table)), &p, &stream).unwrap();
        let expected = k * platoon_cost(1, &p).unwrap();
        assert!((r.total_cost - expected).abs() < 1e-9 * expected);
        assert_eq!(r.voluntary_dispatches as f64, k);
    }

    #[test]
    fn no_arrivals_no_cost() {
        let p = params();
        let stream = ArrivalStream::recorded(vec![false; 100]);
        for policy in [Policy::Greedy, Policy::Deadline, Policy::Delta(5)] {
            let r = simulate_run(&policy, &p, &stream).unwrap();
            assert_eq!(r.total_cost, 0.0);
        }
    }

    #[test]
    fn deadline_policy_single_truck_episode() {
        // One arrival at slot 0: waiting is charged in slot 0 (state empty,
        // arrival) and in each slot from [10] down to [3]; the truck leaves
        // alone at [2].
        let p = params();
        let mut flags = vec![false; 11];
        flags[0] = true;
        let r = simulate_run(&Policy::Deadline, &p, &ArrivalStream::recorded(flags)).unwrap();
        let expected = 9.0 * 1.0 + platoon_cost(1, &p).unwrap();
        assert!((r.total_cost - expected).abs() < 1e-12);
        assert_eq!(r.voluntary_dispatches, 1);
        assert_eq!(r.expirations, 0);
    }

    #[test]
    fn trace_replays_to_same_cost() {
        let p = ModelParams::new(4, 6, 0.45, 20.0, 1.0, 0.9).unwrap();
        let stream = ArrivalStream::bernoulli(99, 3_000, 0.45);
        for policy in [Policy::Greedy, Policy::Deadline, Policy::Delta(4)] {
            let (r, trace) = simulate_run_traced(&policy, &p, &stream).unwrap();
            let replay: f64 = trace
                .iter()
                .map(|t| instantaneous_cost(&t.state, t.action, Event::from(t.arrival), &p).unwrap().total)
                .sum();
            assert!((replay - r.total_cost).abs() < 1e-9);
            for t in &trace {
                assert!(t.state.occupancy() < 4);
            }
            let mass: u64 = r.platoon_size_histogram.iter().sum();
            assert_eq!(mass, r.forced_dispatches + r.voluntary_dispatches);
            assert_eq!(r.avg_cost_per_slot, r.total_cost / r.slots as f64);
        }
    }

    #[test]
    fn coupling_and_order_invariance() {
        let p = params();
        let cfg = ExperimentConfig {
            replications: 4,
            slots_per_run: 2_000,
            master_seed: 11,
        };
        let ab = coupled_experiment(&[Policy::Greedy, Policy::Deadline], &p, &cfg).unwrap();
        let ba = coupled_experiment(&[Policy::Deadline, Policy::Greedy], &p, &cfg).unwrap();
        assert_eq!(ab[0], ba[1]);
        assert_eq!(ab[1], ba[0]);
        let same = coupled_experiment(&[Policy::Greedy, Policy::Greedy], &p, &cfg).unwrap();
        assert_eq!(same[0], same[1]);
        for r in 0..4 {
            assert_eq!(ab[0][r].arrivals, ab[1][r].arrivals);
        }
        assert!(coupled_experiment(&[Policy::Greedy], &p, &ExperimentConfig { replications: 1, ..cfg }).is_err());
    }

    #[test]
    fn binomial_tail() {
        let v = arrival_fraction_check(0.6, 10, 3).unwrap();
        assert!((v - 0.9877).abs() < 0.0005);
        assert_eq!(arrival_fraction_check(0.3, 12, 0).unwrap(), 1.0);
        assert!((arrival_fraction_check(0.5, 2, 2).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(arrival_fraction_check(0.5, 2, 3).unwrap(), 0.0);
    }

    #[test]
    fn runs_csv_shape() {
        let p = params();
        let cfg = ExperimentConfig {
            replications: 2,
            slots_per_run: 100,
            master_seed: 1,
        };
        let res = coupled_experiment(&[Policy::Greedy], &p, &cfg).unwrap();
        let mut buf = Vec::new();
        write_runs_csv(&["greedy".into()], &res, 3, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].ends_with("size_1,size_2,size_3"));
    }
}
