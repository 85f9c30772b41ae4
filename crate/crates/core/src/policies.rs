//! Dispatch policies: greedy, deadline, δ-threshold and tabulated.
//!
//! A full station is dispatched by the dynamics before any decision is
//! taken, so the `|s| = L` clause of each heuristic never fires at a
//! decision state. The deadline conditions are what the rules add.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::dp_solver::{exact_average_cost, Mdp, PolicyTable};
use crate::dynamics::Action;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::simulator::{coupled_experiment, ExperimentConfig};
use crate::state_space::State;

/// Stationary dispatch rule.
#[derive(Debug, Clone)]
pub enum Policy {
    /// Release only a full platoon.
    Greedy,
    /// Release when full or when the earliest truck has two credits left.
    Deadline,
    /// Release when full or when the earliest deadline equals the threshold.
    Delta(u32),
    /// Lookup in a solved or loaded table.
    Table(Arc<PolicyTable>),
}

impl Policy {
    pub fn decide(&self, s: &State, params: &ModelParams) -> Action {
        match self {
            Policy::Greedy => greedy_decide(s, params),
            Policy::Deadline => deadline_decide(s, params),
            Policy::Delta(delta) => delta_decide(s, *delta, params),
            Policy::Table(table) => table.action(s).unwrap_or(Action::Hold),
        }
    }

    /// Short label used in reports: `greedy`, `deadline`, `delta5`, `optimal`.
    pub fn label(&self) -> String {
        match self {
            Policy::Greedy => "greedy".into(),
            Policy::Deadline => "deadline".into(),
            Policy::Delta(d) => format!("delta{d}"),
            Policy::Table(_) => "optimal".into(),
        }
    }

    /// Tabulates this policy over the decision states of `mdp`.
    pub fn tabulate(&self, mdp: &Arc<Mdp>) -> PolicyTable {
        match self {
            Policy::Table(t) if Arc::ptr_eq(t.mdp(), mdp) => (**t).clone(),
            _ => {
                let params = *mdp.params();
                PolicyTable::from_fn(mdp.clone(), |s| self.decide(s, &params))
            }
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

pub fn greedy_decide(s: &State, params: &ModelParams) -> Action {
    if s.occupancy() >= params.capacity() {
        Action::Release
    } else {
        Action::Hold
    }
}

pub fn deadline_decide(s: &State, params: &ModelParams) -> Action {
    delta_decide(s, 2, params)
}

pub fn delta_decide(s: &State, delta: u32, params: &ModelParams) -> Action {
    if s.occupancy() >= params.capacity() || s.earliest() == Some(delta) {
        Action::Release
    } else {
        Action::Hold
    }
}

/// How each threshold is scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EvaluationMode {
    /// Stationary distribution of the induced chain.
    Exact,
    /// Mean over coupled simulation replications.
    Simulated {
        replications: usize,
        slots: u64,
        seed: u64,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaSearchResult {
    pub best_delta: u32,
    pub best_cost: f64,
    /// `(delta, average cost)` in increasing delta order.
    pub cost_by_delta: Vec<(u32, f64)>,
    pub evaluation_mode: EvaluationMode,
}

impl DeltaSearchResult {
    /// CSV with columns `delta,avg_cost`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["delta", "avg_cost"])?;
        for (d, c) in &self.cost_by_delta {
            w.write_record([d.to_string(), c.to_string()])?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }
}

/// Scores every threshold in `deltas` and returns the cheapest, smallest
/// threshold on ties.
pub fn optimize_delta(
    params: &ModelParams,
    mode: EvaluationMode,
    deltas: impl IntoIterator<Item = u32>,
) -> Result<DeltaSearchResult> {
    let mut deltas: Vec<u32> = deltas.into_iter().collect();
    deltas.sort_unstable();
    deltas.dedup();
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("empty delta range".into()));
    }
    if let Some(&bad) = deltas.iter().find(|&&d| d < 1 || d > params.deadline()) {
        return Err(Error::InvalidArgument(format!(
            "delta {bad} outside [1, {}]",
            params.deadline()
        )));
    }
    let cost_by_delta: Vec<(u32, f64)> = match mode {
        EvaluationMode::Exact => {
            let mdp = Mdp::new(*params);
            deltas
                .par_iter()
                .map(|&d| {
                    let table = Policy::Delta(d).tabulate(&mdp);
                    exact_average_cost(&table).map(|c| (d, c))
                })
                .collect::<Result<_>>()?
        }
        EvaluationMode::Simulated {
            replications,
            slots,
            seed,
        } => {
            let policies: Vec<Policy> = deltas.iter().map(|&d| Policy::Delta(d)).collect();
            let config = ExperimentConfig {
                replications,
                slots_per_run: slots,
                master_seed: seed,
            };
            let runs = coupled_experiment(&policies, params, &config)?;
            deltas
                .iter()
                .zip(runs)
                .map(|(&d, results)| {
                    let mean = results.iter().map(|r| r.avg_cost_per_slot).sum::<f64>()
                        / results.len() as f64;
                    (d, mean)
                })
                .collect()
        }
    };
    let (best_delta, best_cost) = cost_by_delta
        .iter()
        .copied()
        .fold(None::<(u32, f64)>, |best, (d, c)| match best {
            Some((_, bc)) if bc <= c => best,
            _ => Some((d, c)),
        })
        .expect("non-empty");
    Ok(DeltaSearchResult {
        best_delta,
        best_cost,
        cost_by_delta,
        evaluation_mode: mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state_space::enumerate_states;

    fn params() -> ModelParams {
        ModelParams::new(3, 10, 0.1, 15.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn decide_examples() {
        let p = params();
        let s = |d: &[u32]| State::new(&p, d.to_vec()).unwrap();
        assert_eq!(greedy_decide(&s(&[2, 5, 10]), &p), Action::Release);
        assert_eq!(greedy_decide(&State::empty(3), &p), Action::Hold);
        assert_eq!(greedy_decide(&s(&[2, 5]), &p), Action::Hold);
        assert_eq!(deadline_decide(&s(&[2]), &p), Action::Release);
        assert_eq!(deadline_decide(&s(&[3]), &p), Action::Hold);
        assert_eq!(deadline_decide(&s(&[2, 7]), &p), Action::Release);
        assert_eq!(delta_decide(&s(&[5]), 5, &p), Action::Release);
        assert_eq!(delta_decide(&s(&[4]), 5, &p), Action::Hold);
    }

    #[test]
    fn delta_two_is_deadline() {
        for l in 1..=5 {
            for t in 1..=9 {
                let p = ModelParams::new(l, t, 0.3, 30.0, 1.0, 1.0).unwrap();
                for s in enumerate_states(&p, true) {
                    assert_eq!(delta_decide(&s, 2, &p), deadline_decide(&s, &p));
                }
            }
        }
    }

    #[test]
    fn search_covers_range_and_breaks_ties_low() {
        let p = params();
        let r = optimize_delta(&p, EvaluationMode::Exact, 1..=10).unwrap();
        assert_eq!(r.cost_by_delta.len(), 10);
        let min = r.cost_by_delta.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_cost, min);
        let first_min = r.cost_by_delta.iter().find(|c| c.1 == min).unwrap().0;
        assert_eq!(r.best_delta, first_min);

        // T = 1: only delta = 1 is admissible.
        let tiny = ModelParams::new(2, 1, 0.5, 10.0, 1.0, 1.0).unwrap();
        let r = optimize_delta(&tiny, EvaluationMode::Exact, [1]).unwrap();
        assert_eq!(r.best_delta, 1);
        assert!(optimize_delta(&p, EvaluationMode::Exact, [0]).is_err());
        assert!(optimize_delta(&p, EvaluationMode::Exact, [11]).is_err());
        assert!(optimize_delta(&p, EvaluationMode::Exact, []).is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(Policy::Greedy.label(), "greedy");
        assert_eq!(Policy::Delta(4).to_string(), "delta4");
    }
}
