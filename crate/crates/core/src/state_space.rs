//! The station state: remaining deadlines of the trucks currently waiting.
//!
//! A state has `L` slots. Occupied slots hold a remaining deadline in
//! `1..=T`, earliest deadline in slot 1, strictly increasing with the slot
//! index. Unoccupied slots are always the highest ones. Only finite deadlines
//! are stored; [`Slot::Unoccupied`] is produced on read so no arithmetic can
//! ever touch an empty slot.
//!
//! States with occupancy `L` exist only at the arrival instant of the `L`-th
//! truck (its deadline is `T`) and are dispatched automatically. They are
//! part of the enumerated set but carry no decision.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Content of one station slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    Deadline(u32),
    Unoccupied,
}

/// Deadlines of the waiting trucks, earliest first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct State {
    deadlines: Vec<u32>,
    capacity: u32,
}

impl State {
    /// The empty station.
    pub fn empty(capacity: usize) -> State {
        State {
            deadlines: Vec::new(),
            capacity: capacity as u32,
        }
    }

    /// Builds a state from its finite deadlines (earliest first) and checks
    /// every state invariant against `params`.
    pub fn new(params: &ModelParams, deadlines: Vec<u32>) -> Result<State> {
        let s = State {
            deadlines,
            capacity: params.capacity() as u32,
        };
        s.validate(params)?;
        Ok(s)
    }

    /// Builds a state from an explicit slot vector (slot 1 first).
    pub fn from_slots(params: &ModelParams, slots: &[Slot]) -> Result<State> {
        if slots.len() != params.capacity() {
            return Err(Error::InvalidState(format!(
                "expected {} slots, got {}",
                params.capacity(),
                slots.len()
            )));
        }
        let mut deadlines = Vec::new();
        let mut seen_empty = false;
        for slot in slots {
            match *slot {
                Slot::Deadline(d) if seen_empty => {
                    return Err(Error::InvalidState(format!(
                        "deadline {d} stored above an unoccupied slot"
                    )))
                }
                Slot::Deadline(d) => deadlines.push(d),
                Slot::Unoccupied => seen_empty = true,
            }
        }
        State::new(params, deadlines)
    }

    pub(crate) fn from_sorted(capacity: usize, deadlines: Vec<u32>) -> State {
        State {
            deadlines,
            capacity: capacity as u32,
        }
    }

    /// Checks the state invariants.
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        let cap = params.capacity();
        let t = params.deadline();
        if self.capacity as usize != cap {
            return Err(Error::InvalidState(format!(
                "{self} belongs to a station of capacity {}, expected {cap}",
                self.capacity
            )));
        }
        if self.deadlines.len() > cap {
            return Err(Error::InvalidState(format!(
                "{self} holds more than {cap} trucks"
            )));
        }
        for (i, &d) in self.deadlines.iter().enumerate() {
            if d < 1 || d > t {
                return Err(Error::InvalidState(format!(
                    "{self}: deadline {d} outside [1, {t}]"
                )));
            }
            if i > 0 && d <= self.deadlines[i - 1] {
                return Err(Error::InvalidState(format!(
                    "{self}: deadlines must be strictly increasing"
                )));
            }
        }
        if self.deadlines.len() == cap && self.deadlines.last() != Some(&t) {
            return Err(Error::InvalidState(format!(
                "{self}: a full station must hold a just-arrived truck with deadline {t}"
            )));
        }
        Ok(())
    }

    /// Number of waiting trucks `|s|`.
    pub fn occupancy(&self) -> usize {
        self.deadlines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deadlines.is_empty()
    }

    /// True for the transient full state (dispatched automatically).
    pub fn is_full(&self) -> bool {
        self.deadlines.len() == self.capacity as usize
    }

    pub fn capacity(&self) -> usize {
        self.capacity as usize
    }

    /// Earliest remaining deadline `d_1`, if any truck waits.
    pub fn earliest(&self) -> Option<u32> {
        self.deadlines.first().copied()
    }

    /// Finite deadlines, earliest first.
    pub fn deadlines(&self) -> &[u32] {
        &self.deadlines
    }

    /// Slot `index` (0-based: index 0 is position 1).
    pub fn slot(&self, index: usize) -> Slot {
        match self.deadlines.get(index) {
            Some(&d) => Slot::Deadline(d),
            None => Slot::Unoccupied,
        }
    }

    /// All `L` slots, position 1 first.
    pub fn slots(&self) -> impl Iterator<Item = Slot> + '_ {
        (0..self.capacity as usize).map(move |i| self.slot(i))
    }

    /// Canonical text form `[d_1,d_2,...]`, unoccupied slots omitted.
    pub fn canonical(&self) -> String {
        let parts: Vec<String> = self.deadlines.iter().map(|d| d.to_string()).collect();
        format!("[{}]", parts.join(","))
    }

    /// Parses the canonical text form and validates it against `params`.
    pub fn parse(text: &str, params: &ModelParams) -> Result<State> {
        let inner = text
            .trim()
            .strip_prefix('[')
            .and_then(|t| t.strip_suffix(']'))
            .ok_or_else(|| Error::InvalidState(format!("malformed state `{text}`")))?;
        let mut deadlines = Vec::new();
        for part in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let d = part
                .parse::<u32>()
                .map_err(|_| Error::InvalidState(format!("malformed deadline `{part}`")))?;
            deadlines.push(d);
        }
        State::new(params, deadlines)
    }

    /// Vector notation with the highest slot first, `∞` for unoccupied
    /// slots, e.g. `(∞,7,2)`.
    pub fn vector_notation(&self) -> String {
        let parts: Vec<String> = (0..self.capacity as usize)
            .rev()
            .map(|i| match self.slot(i) {
                Slot::Deadline(d) => d.to_string(),
                Slot::Unoccupied => "∞".to_string(),
            })
            .collect();
        format!("({})", parts.join(","))
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// Binomial coefficient with `C(n, k) = 0` for `k > n` or `n < 0`.
/// Saturates at `u128::MAX`.
pub fn binomial(n: i64, k: i64) -> u128 {
    if n < 0 || k < 0 || k > n {
        return 0;
    }
    let k = k.min(n - k) as u128;
    let n = n as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        match acc.checked_mul(n - i) {
            Some(v) => acc = v / (i + 1),
            None => return u128::MAX,
        }
    }
    acc
}

/// Number of valid states, full transient states included:
/// `sum_{k<L} C(T, k) + C(T-1, L-1)`.
pub fn cardinality(params: &ModelParams) -> u128 {
    let l = params.capacity() as i64;
    let t = params.deadline() as i64;
    let mut total: u128 = 0;
    for k in 0..l {
        total = total.saturating_add(binomial(t, k));
    }
    total.saturating_add(binomial(t - 1, l - 1))
}

/// Number of decision states (occupancy below `L`).
pub fn decision_cardinality(params: &ModelParams) -> u128 {
    let l = params.capacity() as i64;
    let t = params.deadline() as i64;
    (0..l).fold(0u128, |acc, k| acc.saturating_add(binomial(t, k)))
}

/// Enumerates the state set in lexicographic order of the deadline
/// sequence (so the empty state comes first). With `include_full = false`
/// only decision states are returned.
pub fn enumerate_states(params: &ModelParams, include_full: bool) -> Vec<State> {
    let cap = params.capacity();
    let t = params.deadline();
    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(cap);
    walk(&mut prefix, cap, t, include_full, &mut out);
    out
}

fn walk(prefix: &mut Vec<u32>, cap: usize, t: u32, include_full: bool, out: &mut Vec<State>) {
    if prefix.len() == cap {
        // Only reached with last deadline T.
        if include_full {
            out.push(State::from_sorted(cap, prefix.clone()));
        }
        return;
    }
    out.push(State::from_sorted(cap, prefix.clone()));
    let lo = prefix.last().map_or(1, |&d| d + 1);
    // The L-th truck is always the one that just arrived.
    let lo = if prefix.len() + 1 == cap { lo.max(t) } else { lo };
    for d in lo..=t {
        prefix.push(d);
        walk(prefix, cap, t, include_full, out);
        prefix.pop();
    }
}

/// Enumerated state set with index lookups.
///
/// Immutable after construction; share it behind an `Arc` across workers.
#[derive(Debug, Clone)]
pub struct StateSpace {
    params: ModelParams,
    states: Vec<State>,
    index: HashMap<State, usize>,
    decision: Vec<State>,
    decision_index: HashMap<State, usize>,
}

impl StateSpace {
    pub fn new(params: ModelParams) -> StateSpace {
        let states = enumerate_states(&params, true);
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        let decision: Vec<State> = states.iter().filter(|s| !s.is_full()).cloned().collect();
        let decision_index = decision
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        StateSpace {
            params,
            states,
            index,
            decision,
            decision_index,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Every state, full transient states included, in enumeration order.
    pub fn states(&self) -> &[State] {
        &self.states
    }

    /// Decision states in enumeration order.
    pub fn decision_states(&self) -> &[State] {
        &self.decision
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Position of `s` in the full enumeration.
    pub fn state_index(&self, s: &State) -> Result<usize> {
        self.index
            .get(s)
            .copied()
            .ok_or_else(|| Error::UnknownState(s.canonical()))
    }

    /// Position of `s` among the decision states.
    pub fn decision_index(&self, s: &State) -> Option<usize> {
        self.decision_index.get(s).copied()
    }

    /// Index of the empty state among the decision states.
    pub fn empty_index(&self) -> usize {
        0
    }
}
