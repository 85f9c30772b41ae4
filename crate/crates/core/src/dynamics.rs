//! Within-slot dynamics.
//!
//! Every slot runs, in order: deadline decrement (a truck reaching zero
//! credits leaves alone), arrival (a new truck with `T` credits takes the
//! lowest free slot), then the controller action. `Release` sends everyone
//! present as one platoon, same-slot arrival included. Under `Hold`, a
//! station that just became full dispatches its full platoon automatically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::state_space::State;

/// Controller decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Hold,
    Release,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Hold, Action::Release];

    /// `0` for hold, `1` for release.
    pub fn code(self) -> u8 {
        match self {
            Action::Hold => 0,
            Action::Release => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Action> {
        match code {
            0 => Some(Action::Hold),
            1 => Some(Action::Release),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Action::Hold => "hold",
            Action::Release => "release",
        }
    }

    pub fn parse(text: &str) -> Option<Action> {
        match text.trim().to_ascii_lowercase().as_str() {
            "0" | "hold" => Some(Action::Hold),
            "1" | "release" => Some(Action::Release),
            _ => None,
        }
    }
}

/// Arrival indicator of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub arrival: bool,
}

impl Event {
    pub const NONE: Event = Event { arrival: false };
    pub const ARRIVAL: Event = Event { arrival: true };
    pub const ALL: [Event; 2] = [Event::NONE, Event::ARRIVAL];
}

impl From<bool> for Event {
    fn from(arrival: bool) -> Self {
        Event { arrival }
    }
}

/// Everything that happened in one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotOutcome {
    pub next_state: State,
    /// Trucks that ran out of credits this slot (0 or 1).
    pub expired: usize,
    /// Size of the platoon that left this slot, 0 if none.
    pub dispatched_size: usize,
    /// The platoon left because the station filled up, not by decision.
    pub forced: bool,
    /// Trucks at the station after decrement and arrival, before any
    /// dispatch. The waiting charge under `Hold` is based on this.
    pub present: usize,
}

/// Decrements every deadline by one; a truck reaching zero departs.
pub fn decrement_phase(s: &State) -> (State, usize) {
    let mut deadlines = s.deadlines().to_vec();
    let expired = decrement_in_place(&mut deadlines);
    (State::from_sorted(s.capacity(), deadlines), expired)
}

pub(crate) fn decrement_in_place(deadlines: &mut Vec<u32>) -> usize {
    for d in deadlines.iter_mut() {
        *d -= 1;
    }
    // Strictly increasing deadlines: only the first can hit zero.
    if deadlines.first() == Some(&0) {
        deadlines.remove(0);
        1
    } else {
        0
    }
}

/// Applies one slot in place and returns `(expired, dispatched, forced, present)`.
///
/// `deadlines` must describe a valid decision state or the transient full
/// state. The full state resolves through its automatic dispatch without
/// running the slot.
pub(crate) fn step_in_place(
    deadlines: &mut Vec<u32>,
    capacity: usize,
    deadline: u32,
    action: Action,
    event: Event,
) -> (usize, usize, bool, usize) {
    if deadlines.len() >= capacity {
        let size = deadlines.len();
        deadlines.clear();
        return (0, size, true, size);
    }
    let expired = decrement_in_place(deadlines);
    if event.arrival {
        deadlines.push(deadline);
    }
    let present = deadlines.len();
    match action {
        Action::Release => {
            deadlines.clear();
            (expired, present, false, present)
        }
        Action::Hold if present == capacity => {
            deadlines.clear();
            (expired, present, true, present)
        }
        Action::Hold => (expired, 0, false, present),
    }
}

/// Next-state map `f(s, a, e)` with the outcome counters of the slot.
///
/// A transient full state is resolved by its automatic dispatch: the
/// result is the empty station with a forced platoon of size `L`, and
/// `a`, `e` are ignored.
pub fn transition(s: &State, a: Action, e: Event, params: &ModelParams) -> Result<SlotOutcome> {
    s.validate(params)
        .map_err(|err| Error::InvalidState(err.to_string()))?;
    let mut deadlines = s.deadlines().to_vec();
    let (expired, dispatched_size, forced, present) =
        step_in_place(&mut deadlines, params.capacity(), params.deadline(), a, e);
    Ok(SlotOutcome {
        next_state: State::from_sorted(params.capacity(), deadlines),
        expired,
        dispatched_size,
        forced,
        present,
    })
}

/// `{(f(s,a,1), p), (f(s,a,0), 1-p)}`, merged when both coincide.
pub fn transition_distribution(
    s: &State,
    a: Action,
    params: &ModelParams,
) -> Result<Vec<(State, f64)>> {
    let p = params.arrival_prob();
    let on_arrival = transition(s, a, Event::ARRIVAL, params)?.next_state;
    let quiet = transition(s, a, Event::NONE, params)?.next_state;
    if on_arrival == quiet {
        Ok(vec![(quiet, 1.0)])
    } else {
        Ok(vec![(on_arrival, p), (quiet, 1.0 - p)])
    }
}
