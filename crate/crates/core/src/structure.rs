//! Structural checks on a dispatch policy: monotonicity of the hold and
//! release regions, and states that can never be visited.
//!
//! The checks are exhaustive over the decision states of an instance. For
//! `L = 3` they cover exactly the single- and two-truck states; for larger
//! stations the same shifts are applied to every occupancy and reports are
//! marked advisory.

use std::collections::HashSet;
use std::io::Write;

use serde::Serialize;

use crate::dp_solver::{reachable_indices, PolicyTable};
use crate::dynamics::Action;
use crate::error::{Error, Result};
use crate::state_space::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyId {
    /// a) hold at `(d_1)` implies hold at `(d_1 + 1)`.
    TailMonotonicity,
    /// b) hold at `(d_1, d_2)` implies hold at `(d_1 + 1, d_2 + 1)`.
    DiagonalMonotonicity,
    /// c) release at `(d_1, d_2)` implies release at tighter neighbours.
    DispatchMonotonicity,
    /// d) release at `(d_1)` makes `(d_1 - k)` unreachable.
    TailUnreachable,
    /// e) release at `(d_1, d_2)` makes `(d_1 - k, d_2 - k)` unreachable.
    DiagonalUnreachable,
}

impl PropertyId {
    pub const ALL: [PropertyId; 5] = [
        PropertyId::TailMonotonicity,
        PropertyId::DiagonalMonotonicity,
        PropertyId::DispatchMonotonicity,
        PropertyId::TailUnreachable,
        PropertyId::DiagonalUnreachable,
    ];

    /// Single-letter tag `a`..`e`.
    pub fn letter(self) -> char {
        match self {
            PropertyId::TailMonotonicity => 'a',
            PropertyId::DiagonalMonotonicity => 'b',
            PropertyId::DispatchMonotonicity => 'c',
            PropertyId::TailUnreachable => 'd',
            PropertyId::DiagonalUnreachable => 'e',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub state: String,
    pub neighbor: String,
    pub action: Action,
    pub neighbor_action: Action,
    /// Either state has a truck on its last credit (`d_1 = 1`).
    #[serde(skip)]
    pub expiring: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub property: PropertyId,
    pub violations: Vec<Violation>,
    pub checked: usize,
    /// The instance lies outside the proven `L = 3` setting.
    pub advisory: bool,
}

impl PropertyReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }

    /// Copy without the witnesses that involve an expiring state. At
    /// `d_1 = 1` the penalty is paid under either action, so RELEASE there
    /// only ships the newcomer and the shift arguments do not apply.
    pub fn excluding_expiring(&self) -> PropertyReport {
        PropertyReport {
            violations: self.violations.iter().filter(|v| !v.expiring).cloned().collect(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Decision states visited from the empty station.
#[derive(Debug, Clone)]
pub struct ReachabilitySet {
    states: HashSet<State>,
    order: Vec<State>,
}

impl ReachabilitySet {
    pub fn contains(&self, s: &State) -> bool {
        self.states.contains(s)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// States in breadth-first discovery order (empty station first).
    pub fn states(&self) -> &[State] {
        &self.order
    }
}

pub fn reachable_set(policy: &PolicyTable) -> ReachabilitySet {
    let mdp = policy.mdp();
    let order: Vec<State> = reachable_indices(mdp, policy.actions())
        .into_iter()
        .map(|i| mdp.space().decision_states()[i].clone())
        .collect();
    ReachabilitySet {
        states: order.iter().cloned().collect(),
        order,
    }
}

fn advisory(policy: &PolicyTable) -> bool {
    policy.params().capacity() > 3
}

fn shifted(s: &State, by: i64) -> Option<Vec<u32>> {
    s.deadlines()
        .iter()
        .map(|&d| {
            let v = d as i64 + by;
            (v >= 1).then_some(v as u32)
        })
        .collect()
}

fn lookup(policy: &PolicyTable, deadlines: Vec<u32>) -> Option<(State, Action)> {
    let s = State::new(policy.params(), deadlines).ok()?;
    let a = policy.action(&s)?;
    (!s.is_full()).then_some((s, a))
}

fn violation(s: &State, a: Action, n: &State, na: Action) -> Violation {
    Violation {
        state: s.canonical(),
        neighbor: n.canonical(),
        action: a,
        neighbor_action: na,
        expiring: s.earliest() == Some(1) || n.earliest() == Some(1),
    }
}

/// Hold at a single-truck state `(d_1)`, `d_1 < T`, implies hold at `(d_1 + 1)`.
pub fn check_tail_monotonicity(policy: &PolicyTable) -> PropertyReport {
    let t = policy.params().deadline();
    let mut violations = Vec::new();
    let mut checked = 0;
    for (s, a) in policy.iter() {
        if s.occupancy() != 1 || s.earliest() >= Some(t) || a != Action::Hold {
            continue;
        }
        if let Some((n, na)) = shifted(s, 1).and_then(|d| lookup(policy, d)) {
            checked += 1;
            if na != Action::Hold {
                violations.push(violation(s, a, &n, na));
            }
        }
    }
    PropertyReport {
        property: PropertyId::TailMonotonicity,
        violations,
        checked,
        advisory: advisory(policy),
    }
}

/// Hold at a state with two or more trucks, latest deadline below `T`,
/// implies hold after shifting every deadline up by one.
pub fn check_diagonal_monotonicity(policy: &PolicyTable) -> PropertyReport {
    let t = policy.params().deadline();
    let mut violations = Vec::new();
    let mut checked = 0;
    for (s, a) in policy.iter() {
        if s.occupancy() < 2 || s.deadlines().last() >= Some(&t) || a != Action::Hold {
            continue;
        }
        if let Some((n, na)) = shifted(s, 1).and_then(|d| lookup(policy, d)) {
            checked += 1;
            if na != Action::Hold {
                violations.push(violation(s, a, &n, na));
            }
        }
    }
    PropertyReport {
        property: PropertyId::DiagonalMonotonicity,
        violations,
        checked,
        advisory: advisory(policy),
    }
}

/// Tighter neighbours of a multi-truck state: each deadline lowered alone,
/// and all deadlines lowered together. Invalid vectors are skipped.
fn tighter_neighbors(s: &State) -> Vec<Vec<u32>> {
    let base = s.deadlines();
    let mut out = Vec::new();
    for i in 0..base.len() {
        let mut v = base.to_vec();
        if v[i] <= 1 {
            continue;
        }
        v[i] -= 1;
        if v.windows(2).all(|w| w[0] < w[1]) {
            out.push(v);
        }
    }
    if base.len() > 1 {
        if let Some(v) = shifted(s, -1) {
            out.push(v);
        }
    }
    out
}

/// Release at a state with two or more trucks implies release at every
/// valid neighbour with tighter deadlines.
pub fn check_dispatch_monotonicity(policy: &PolicyTable) -> PropertyReport {
    let mut violations = Vec::new();
    let mut checked = 0;
    for (s, a) in policy.iter() {
        if s.occupancy() < 2 || a != Action::Release {
            continue;
        }
        for d in tighter_neighbors(s) {
            if let Some((n, na)) = lookup(policy, d) {
                checked += 1;
                if na != Action::Release {
                    violations.push(violation(s, a, &n, na));
                }
            }
        }
    }
    PropertyReport {
        property: PropertyId::DispatchMonotonicity,
        violations,
        checked,
        advisory: advisory(policy),
    }
}

fn unreachable_below(
    policy: &PolicyTable,
    reach: &ReachabilitySet,
    property: PropertyId,
    occupancy_ok: impl Fn(usize) -> bool,
) -> PropertyReport {
    let mut violations = Vec::new();
    let mut checked = 0;
    for (s, a) in policy.iter() {
        if !occupancy_ok(s.occupancy()) || a != Action::Release {
            continue;
        }
        let d1 = s.earliest().expect("occupied") as i64;
        for k in 1..d1 {
            if let Some((n, na)) = shifted(s, -k).and_then(|d| lookup(policy, d)) {
                checked += 1;
                if reach.contains(&n) {
                    violations.push(violation(s, a, &n, na));
                }
            }
        }
    }
    PropertyReport {
        property,
        violations,
        checked,
        advisory: advisory(policy),
    }
}

/// Release at `(d_1)` leaves `(d_1 - k)`, `k = 1..d_1-1`, unvisited.
pub fn check_unreachable_tail(policy: &PolicyTable, reach: &ReachabilitySet) -> PropertyReport {
    unreachable_below(policy, reach, PropertyId::TailUnreachable, |k| k == 1)
}

/// Release at a multi-truck state leaves every diagonal shift down by
/// `k = 1..d_1-1` unvisited.
pub fn check_unreachable_diagonal(policy: &PolicyTable, reach: &ReachabilitySet) -> PropertyReport {
    unreachable_below(policy, reach, PropertyId::DiagonalUnreachable, |k| k >= 2)
}

/// All five checks, in `a`..`e` order.
pub fn check_all(policy: &PolicyTable) -> Vec<PropertyReport> {
    let reach = reachable_set(policy);
    vec![
        check_tail_monotonicity(policy),
        check_diagonal_monotonicity(policy),
        check_dispatch_monotonicity(policy),
        check_unreachable_tail(policy, &reach),
        check_unreachable_diagonal(policy, &reach),
    ]
}

/// One cell of the two-truck policy map. `None` stands for an unoccupied
/// slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub d2: Option<u32>,
    pub d1: Option<u32>,
    pub action: Action,
    pub reachable: bool,
}

/// Policy map over the empty state, the single-truck axis and the
/// two-truck plane (the latter only when `L >= 3`).
pub fn export_policy_grid(policy: &PolicyTable, reach: &ReachabilitySet) -> Vec<GridRow> {
    policy
        .iter()
        .filter(|(s, _)| s.occupancy() <= 2)
        .map(|(s, a)| GridRow {
            d2: s.deadlines().get(1).copied(),
            d1: s.earliest(),
            action: a,
            reachable: reach.contains(s),
        })
        .collect()
}

/// CSV with columns `d_2,d_1,action,reachable`; unoccupied slots as `inf`.
pub fn write_grid_csv<W: Write>(rows: &[GridRow], out: W) -> Result<()> {
    let fmt = |d: Option<u32>| d.map_or_else(|| "inf".to_string(), |v| v.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["d_2", "d_1", "action", "reachable"])?;
    for r in rows {
        w.write_record([
            fmt(r.d2),
            fmt(r.d1),
            r.action.label().to_string(),
            r.reachable.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp_solver::Mdp;
    use crate::params::ModelParams;
    use crate::policies::Policy;

    fn mdp() -> std::sync::Arc<Mdp> {
        Mdp::new(ModelParams::new(3, 10, 0.1, 15.0, 1.0, 1.0).unwrap())
    }

    fn st(d: &[u32]) -> State {
        State::from_sorted(3, d.to_vec())
    }

    #[test]
    fn trivially_true_policies() {
        let hold = PolicyTable::from_fn(mdp(), |_| Action::Hold);
        for r in check_all(&hold) {
            assert!(r.holds(), "{:?}", r.property);
        }
        let release = PolicyTable::from_fn(mdp(), |_| Action::Release);
        assert!(check_dispatch_monotonicity(&release).holds());
        assert!(check_dispatch_monotonicity(&release).checked > 0);
        let reach = reachable_set(&release);
        assert_eq!(reach.len(), 1);
        assert!(reach.contains(&State::empty(3)));
    }

    #[test]
    fn constructed_tail_violation() {
        let mut t = PolicyTable::from_fn(mdp(), |_| Action::Hold);
        t.set(&st(&[6]), Action::Release).unwrap();
        let r = check_tail_monotonicity(&t);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].state, "[5]");
        assert_eq!(r.violations[0].neighbor, "[6]");
    }

    #[test]
    fn constructed_diagonal_violation() {
        let mut t = PolicyTable::from_fn(mdp(), |_| Action::Hold);
        t.set(&st(&[4, 8]), Action::Release).unwrap();
        let r = check_diagonal_monotonicity(&t);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].state, "[3,7]");
    }

    #[test]
    fn constructed_dispatch_violation() {
        let mut t = PolicyTable::from_fn(mdp(), |_| Action::Release);
        t.set(&st(&[4, 7]), Action::Hold).unwrap();
        let r = check_dispatch_monotonicity(&t);
        // [4,7] is the tighter neighbour of [5,7], [4,8] and [5,8].
        assert_eq!(r.violations.len(), 3);
        assert!(r.violations.iter().all(|v| v.neighbor == "[4,7]"));
        let json = r.to_json();
        assert!(json.contains("\"property\": \"dispatch_monotonicity\""));
        assert!(json.contains("\"neighbor_action\": \"Hold\""));
    }

    #[test]
    fn greedy_reachability_small() {
        let m = Mdp::new(ModelParams::new(2, 3, 0.5, 10.0, 1.0, 1.0).unwrap());
        let t = Policy::Greedy.tabulate(&m);
        let reach = reachable_set(&t);
        let mut names: Vec<String> = reach.states().iter().map(|s| s.canonical()).collect();
        names.sort();
        // L = 2: the second arrival always forces a dispatch, so only
        // single-truck states appear.
        assert_eq!(names, vec!["[1]", "[2]", "[3]", "[]"]);
    }

    #[test]
    fn delta_policy_cuts_tail() {
        let m = mdp();
        let t = Policy::Delta(5).tabulate(&m);
        let reach = reachable_set(&t);
        for d in 1..5 {
            assert!(!reach.contains(&st(&[d])));
        }
        assert!(check_unreachable_tail(&t, &reach).holds());
    }

    #[test]
    fn unreachable_checker_reports_witness() {
        // Release at [6] only. [5] can only be entered from [6] or [1,6],
        // both cut off, but [4] is still entered from [1,5] on the
        // diagonal [6,10] -> [5,9] -> ... -> [1,5].
        let mut t = PolicyTable::from_fn(mdp(), |_| Action::Hold);
        t.set(&st(&[6]), Action::Release).unwrap();
        let reach = reachable_set(&t);
        assert!(!reach.contains(&st(&[5])));
        assert!(reach.contains(&st(&[1, 5])));
        let r = check_unreachable_tail(&t, &reach);
        assert_eq!(r.checked, 5);
        let witnesses: Vec<&str> = r.violations.iter().map(|v| v.neighbor.as_str()).collect();
        assert_eq!(witnesses, vec!["[4]", "[3]", "[2]", "[1]"]);
    }

    #[test]
    fn grid_shape() {
        let m = mdp();
        let t = Policy::Deadline.tabulate(&m);
        let reach = reachable_set(&t);
        let rows = export_policy_grid(&t, &reach);
        assert_eq!(rows.iter().filter(|r| r.d2.is_some()).count(), 45);
        assert_eq!(rows.iter().filter(|r| r.d2.is_none() && r.d1.is_some()).count(), 10);
        let empty = rows.iter().find(|r| r.d1.is_none()).unwrap();
        assert!(empty.reachable);
        for r in &rows {
            let mut d = Vec::new();
            d.extend(r.d1);
            d.extend(r.d2);
            assert_eq!(t.action(&st(&d)), Some(r.action));
        }
        let mut buf = Vec::new();
        write_grid_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("d_2,d_1,action,reachable\ninf,inf,hold,true"));
    }
}
