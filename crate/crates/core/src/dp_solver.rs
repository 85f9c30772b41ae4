//! Finite-horizon value iteration and policy evaluation.
//!
//! `V_0 = 0`, `V_{n+1}(s) = min_a Q_{n+1}(s, a)` with
//! `Q_{n+1}(s, a) = (1-p)[ic(s,a,0) + V_n(f(s,a,0))] + p[ic(s,a,1) + V_n(f(s,a,1))]`.
//! The greedy action is `Release` iff `Q(s, Hold) - Q(s, Release) > 0`.
//!
//! Undiscounted values grow linearly with the horizon, so the sweep stops
//! on policy stability (plus a settled gain estimate), not on value
//! convergence.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::costs::{check_cost_ordering, outcome_cost, OrderingViolation};
use crate::dynamics::{transition, Action, Event};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::state_space::{State, StateSpace};

/// Decision deltas within this band (relative to the Q magnitude, never
/// below 1e-12 absolute) resolve to `Hold`.
pub const TIE_TOLERANCE: f64 = 1e-12;

const PARALLEL_THRESHOLD: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Branch {
    pub cost: f64,
    pub next: usize,
}

/// Decision states with their precomputed one-slot branches.
///
/// For every decision state, action and arrival outcome it stores the
/// instantaneous cost and the index of the next decision state (forced
/// dispatches already resolved to the empty station).
#[derive(Debug)]
pub struct Mdp {
    space: StateSpace,
    branches: Vec<[[Branch; 2]; 2]>,
}

impl Mdp {
    pub fn new(params: ModelParams) -> Arc<Mdp> {
        Arc::new(Mdp::from_space(StateSpace::new(params)))
    }

    pub fn from_space(space: StateSpace) -> Mdp {
        let params = *space.params();
        let branches = space
            .decision_states()
            .iter()
            .map(|s| {
                let mut row = [[Branch { cost: 0.0, next: 0 }; 2]; 2];
                for a in Action::ALL {
                    for e in Event::ALL {
                        let out = transition(s, a, e, &params).expect("enumerated state is valid");
                        let next = space
                            .decision_index(&out.next_state)
                            .expect("next state is a decision state");
                        row[a.code() as usize][e.arrival as usize] = Branch {
                            cost: outcome_cost(a, &out, &params).total,
                            next,
                        };
                    }
                }
                row
            })
            .collect();
        Mdp { space, branches }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn params(&self) -> &ModelParams {
        self.space.params()
    }

    /// Number of decision states.
    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub(crate) fn branch(&self, state: usize, action: Action, event: Event) -> Branch {
        self.branches[state][action.code() as usize][event.arrival as usize]
    }

    /// Expected one-slot cost of `action` at decision state `state`.
    pub(crate) fn expected_cost(&self, state: usize, action: Action) -> f64 {
        let p = self.params().arrival_prob();
        let b = &self.branches[state][action.code() as usize];
        (1.0 - p) * b[0].cost + p * b[1].cost
    }

    fn q(&self, values: &[f64], state: usize, action: Action) -> f64 {
        let p = self.params().arrival_prob();
        let b = &self.branches[state][action.code() as usize];
        (1.0 - p) * (b[0].cost + values[b[0].next]) + p * (b[1].cost + values[b[1].next])
    }
}

/// Expected cost-to-go `V_n` over the decision states.
#[derive(Debug, Clone)]
pub struct ValueTable {
    mdp: Arc<Mdp>,
    horizon: usize,
    values: Vec<f64>,
}

impl ValueTable {
    /// The terminal table `V_0 = 0`.
    pub fn zero(mdp: Arc<Mdp>) -> ValueTable {
        let n = mdp.len();
        ValueTable {
            mdp,
            horizon: 0,
            values: vec![0.0; n],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn get(&self, s: &State) -> Option<f64> {
        self.mdp.space.decision_index(s).map(|i| self.values[i])
    }

    /// Values aligned with `mdp.space().decision_states()`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mdp(&self) -> &Arc<Mdp> {
        &self.mdp
    }
}

/// Action per decision state, plus the hold-minus-release difference when
/// the table came out of value iteration.
#[derive(Debug, Clone)]
pub struct PolicyTable {
    mdp: Arc<Mdp>,
    actions: Vec<Action>,
    delta: Option<Vec<f64>>,
}

impl PolicyTable {
    /// Tabulates any state-to-action rule over the decision states.
    pub fn from_fn(mdp: Arc<Mdp>, mut decide: impl FnMut(&State) -> Action) -> PolicyTable {
        let actions = mdp.space.decision_states().iter().map(&mut decide).collect();
        PolicyTable {
            mdp,
            actions,
            delta: None,
        }
    }

    pub fn mdp(&self) -> &Arc<Mdp> {
        &self.mdp
    }

    pub fn params(&self) -> &ModelParams {
        self.mdp.params()
    }

    /// Action at `s`; full states always release.
    pub fn action(&self, s: &State) -> Option<Action> {
        if s.is_full() && s.capacity() == self.params().capacity() {
            return Some(Action::Release);
        }
        self.mdp.space.decision_index(s).map(|i| self.actions[i])
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn delta(&self) -> Option<&[f64]> {
        self.delta.as_deref()
    }

    pub fn delta_at(&self, s: &State) -> Option<f64> {
        let i = self.mdp.space.decision_index(s)?;
        self.delta.as_ref().map(|d| d[i])
    }

    /// Overrides one entry, dropping any stored deltas.
    pub fn set(&mut self, s: &State, action: Action) -> Result<()> {
        let i = self
            .mdp
            .space
            .decision_index(s)
            .ok_or_else(|| Error::UnknownState(s.canonical()))?;
        self.actions[i] = action;
        self.delta = None;
        Ok(())
    }

    /// Iterates `(state, action)` over the decision states.
    pub fn iter(&self) -> impl Iterator<Item = (&State, Action)> {
        self.mdp
            .space
            .decision_states()
            .iter()
            .zip(self.actions.iter().copied())
    }

    /// CSV with columns `state,V,delta,action`. `values` may be omitted;
    /// missing columns are left blank.
    pub fn write_csv<W: Write>(&self, values: Option<&ValueTable>, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["state", "V", "delta", "action"])?;
        for (i, (s, a)) in self.iter().enumerate() {
            let v = values.map(|t| t.values[i].to_string()).unwrap_or_default();
            let d = self
                .delta
                .as_ref()
                .map(|d| d[i].to_string())
                .unwrap_or_default();
            w.write_record([s.canonical(), v, d, a.label().to_string()])?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))?;
        Ok(())
    }

    /// Reads a policy from CSV with at least `state` and `action` columns.
    /// States missing from the file default to `Hold`.
    pub fn read_csv<R: std::io::Read>(mdp: Arc<Mdp>, input: R) -> Result<PolicyTable> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let headers = r.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Csv(format!("missing `{name}` column")))
        };
        let state_col = col("state")?;
        let action_col = col("action")?;
        let mut table = PolicyTable::from_fn(mdp.clone(), |_| Action::Hold);
        for rec in r.records() {
            let rec = rec?;
            let s = State::parse(&rec[state_col], mdp.params())?;
            let a = Action::parse(&rec[action_col])
                .ok_or_else(|| Error::Csv(format!("bad action `{}`", &rec[action_col])))?;
            table.set(&s, a)?;
        }
        Ok(table)
    }
}

/// `Q(s, a)` against the previous-horizon table.
pub fn q_value(s: &State, a: Action, v_prev: &ValueTable, params: &ModelParams) -> Result<f64> {
    let p = params.arrival_prob();
    let mut q = 0.0;
    for e in Event::ALL {
        let out = transition(s, a, e, params)?;
        let cost = outcome_cost(a, &out, params).total;
        let next = v_prev
            .get(&out.next_state)
            .ok_or_else(|| Error::MissingValue(out.next_state.canonical()))?;
        let weight = if e.arrival { p } else { 1.0 - p };
        q += weight * (cost + next);
    }
    Ok(q)
}

fn greedy_action(q_hold: f64, q_release: f64) -> (Action, f64) {
    let delta = q_hold - q_release;
    let tol = TIE_TOLERANCE * q_hold.abs().max(q_release.abs()).max(1.0);
    if delta > tol {
        (Action::Release, delta)
    } else {
        (Action::Hold, delta)
    }
}

/// One Bellman sweep at a time, double-buffered.
#[derive(Debug, Clone)]
pub struct ValueIteration {
    mdp: Arc<Mdp>,
    values: Vec<f64>,
    horizon: usize,
}

/// Result of a single sweep.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub values: ValueTable,
    pub policy: PolicyTable,
    pub q_hold: Vec<f64>,
    pub q_release: Vec<f64>,
}

impl ValueIteration {
    pub fn new(mdp: Arc<Mdp>) -> Self {
        let n = mdp.len();
        ValueIteration {
            mdp,
            values: vec![0.0; n],
            horizon: 0,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    fn sweep_raw(&self) -> Vec<(f64, f64)> {
        let mdp = &self.mdp;
        let values = &self.values;
        let eval = |i: usize| (mdp.q(values, i, Action::Hold), mdp.q(values, i, Action::Release));
        if mdp.len() >= PARALLEL_THRESHOLD {
            (0..mdp.len()).into_par_iter().map(eval).collect()
        } else {
            (0..mdp.len()).map(eval).collect()
        }
    }

    fn advance(&mut self) -> (Vec<Action>, Vec<f64>, Vec<(f64, f64)>) {
        let qs = self.sweep_raw();
        let mut actions = Vec::with_capacity(qs.len());
        let mut deltas = Vec::with_capacity(qs.len());
        for (i, &(qh, qr)) in qs.iter().enumerate() {
            let (a, d) = greedy_action(qh, qr);
            actions.push(a);
            deltas.push(d);
            self.values[i] = qh.min(qr);
        }
        self.horizon += 1;
        (actions, deltas, qs)
    }

    /// Runs one sweep and returns the new tables.
    pub fn step(&mut self) -> Sweep {
        let (actions, deltas, qs) = self.advance();
        Sweep {
            values: ValueTable {
                mdp: self.mdp.clone(),
                horizon: self.horizon,
                values: self.values.clone(),
            },
            policy: PolicyTable {
                mdp: self.mdp.clone(),
                actions,
                delta: Some(deltas),
            },
            q_hold: qs.iter().map(|q| q.0).collect(),
            q_release: qs.iter().map(|q| q.1).collect(),
        }
    }
}

/// Stopping rule of [`value_iterate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Sweeps without any change in the greedy policy before stopping.
    pub stability_window: usize,
    /// Largest accepted change of `V_{n+1}(∅) - V_n(∅)` between the last two
    /// sweeps at the stopping point.
    pub gain_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iters: 20_000,
            stability_window: 25,
            gain_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub iterations_run: usize,
    /// Sweep at which the greedy policy last changed.
    pub policy_stable_at: usize,
    /// `V_{n+1}(∅) - V_n(∅)` at the final sweep.
    pub average_cost_estimate: f64,
    /// Change of the gain estimate over the final sweep.
    pub gain_change: f64,
    pub converged: bool,
    pub stopping_rule: String,
    pub cost_ordering_violations: Vec<OrderingViolation>,
    pub warnings: Vec<String>,
}

impl SolveReport {
    pub fn ensure_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::NoConvergence(self.iterations_run))
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub values: ValueTable,
    pub policy: PolicyTable,
    pub report: SolveReport,
}

/// Value iteration from `V_0 = 0` until the greedy policy has been stable
/// for `stability_window` sweeps and the gain estimate has settled, or
/// `max_iters` sweeps ran. Non-convergence is reported, not raised; see
/// [`SolveReport::ensure_converged`].
pub fn value_iterate(params: &ModelParams, options: SolverOptions) -> Result<Solution> {
    value_iterate_on(Mdp::new(*params), options)
}

pub fn value_iterate_on(mdp: Arc<Mdp>, options: SolverOptions) -> Result<Solution> {
    if options.max_iters < 1 || options.stability_window < 1 {
        return Err(Error::InvalidArgument(
            "max_iters and stability_window must be at least 1".into(),
        ));
    }
    let empty = mdp.space().empty_index();
    let mut vi = ValueIteration::new(mdp.clone());
    let mut prev_policy: Option<Vec<Action>> = None;
    let mut stable_at = 0;
    let mut prev_gain = f64::NAN;
    let mut gain = f64::NAN;
    let mut gain_change = f64::INFINITY;
    let mut last = None;
    let mut converged = false;

    for n in 1..=options.max_iters {
        let before = vi.values[empty];
        let (actions, deltas, _) = vi.advance();
        let g = vi.values[empty] - before;
        if gain.is_finite() {
            prev_gain = gain;
        }
        gain = g;
        gain_change = if prev_gain.is_finite() {
            (gain - prev_gain).abs()
        } else {
            f64::INFINITY
        };
        if prev_policy.as_ref() != Some(&actions) {
            stable_at = n;
        }
        prev_policy = Some(actions.clone());
        last = Some((actions, deltas));
        if n - stable_at >= options.stability_window && gain_change <= options.gain_tolerance {
            converged = true;
            break;
        }
    }

    let (actions, deltas) = last.expect("at least one sweep");
    let cost_ordering_violations = check_cost_ordering(mdp.params());
    let mut warnings = Vec::new();
    if !cost_ordering_violations.is_empty() {
        warnings.push(format!(
            "cost ordering violated for {} (size, link) pairs",
            cost_ordering_violations.len()
        ));
    }
    if !converged {
        warnings.push(format!(
            "policy still changing or gain unsettled after {} sweeps",
            vi.horizon
        ));
    }
    let report = SolveReport {
        iterations_run: vi.horizon,
        policy_stable_at: stable_at,
        average_cost_estimate: gain,
        gain_change,
        converged,
        stopping_rule: format!(
            "greedy policy unchanged for {} sweeps and gain change <= {:e}",
            options.stability_window, options.gain_tolerance
        ),
        cost_ordering_violations,
        warnings,
    };
    Ok(Solution {
        values: ValueTable {
            mdp: mdp.clone(),
            horizon: vi.horizon,
            values: vi.values,
        },
        policy: PolicyTable {
            mdp,
            actions,
            delta: Some(deltas),
        },
        report,
    })
}

/// Decision-state indices visited from the empty station under `actions`,
/// both arrival outcomes explored, in breadth-first order.
pub(crate) fn reachable_indices(mdp: &Mdp, actions: &[Action]) -> Vec<usize> {
    let mut seen = vec![false; mdp.len()];
    let mut order = Vec::new();
    let mut queue = VecDeque::new();
    let start = mdp.space().empty_index();
    seen[start] = true;
    queue.push_back(start);
    while let Some(i) = queue.pop_front() {
        order.push(i);
        for e in Event::ALL {
            let next = mdp.branch(i, actions[i], e).next;
            if !seen[next] {
                seen[next] = true;
                queue.push_back(next);
            }
        }
    }
    order
}

const STATIONARY_TOLERANCE: f64 = 1e-13;
const STATIONARY_MAX_ITERS: usize = 2_000_000;

/// Stationary distribution of the chain induced by `policy`, over the
/// recurrent class of the empty station. Returns `(state index, mass)`.
pub fn stationary_distribution(policy: &PolicyTable) -> Result<Vec<(usize, f64)>> {
    let mdp = policy.mdp();
    let p = mdp.params().arrival_prob();
    let reach = reachable_indices(mdp, &policy.actions);
    let mut local = vec![usize::MAX; mdp.len()];
    for (k, &i) in reach.iter().enumerate() {
        local[i] = k;
    }
    let succ: Vec<[usize; 2]> = reach
        .iter()
        .map(|&i| {
            let a = policy.actions[i];
            [
                local[mdp.branch(i, a, Event::NONE).next],
                local[mdp.branch(i, a, Event::ARRIVAL).next],
            ]
        })
        .collect();

    let n = reach.len();
    let mut mu = vec![0.0; n];
    mu[0] = 1.0;
    let mut next = vec![0.0; n];
    let mut diff = f64::INFINITY;
    let mut iterations = 0;
    while iterations < STATIONARY_MAX_ITERS {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (k, &m) in mu.iter().enumerate() {
            next[succ[k][0]] += (1.0 - p) * m;
            next[succ[k][1]] += p * m;
        }
        let total: f64 = next.iter().sum();
        diff = 0.0;
        for (a, b) in mu.iter_mut().zip(next.iter()) {
            let v = b / total;
            diff += (v - *a).abs();
            *a = v;
        }
        iterations += 1;
        if diff <= STATIONARY_TOLERANCE {
            break;
        }
    }
    if diff > STATIONARY_TOLERANCE || !diff.is_finite() {
        return Err(Error::SingularChain {
            residual: diff,
            iterations,
        });
    }
    Ok(reach.into_iter().zip(mu).collect())
}

/// Long-run average cost per slot of `policy`: `sum_s mu(s) E_e[ic(s, pi(s), e)]`.
pub fn exact_average_cost(policy: &PolicyTable) -> Result<f64> {
    let mdp = policy.mdp();
    let mu = stationary_distribution(policy)?;
    Ok(mu
        .iter()
        .map(|&(i, m)| m * mdp.expected_cost(i, policy.actions[i]))
        .sum())
}
