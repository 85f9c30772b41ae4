//! Dispatch, waiting and expiration charges.

use serde::Serialize;

use crate::dynamics::{transition, Action, Event, SlotOutcome};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::state_space::State;

/// Per-slot cost split into its three components.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CostBreakdown {
    pub expiration: f64,
    pub dispatch: f64,
    pub waiting: f64,
    pub total: f64,
}

impl CostBreakdown {
    fn new(expiration: f64, dispatch: f64, waiting: f64) -> Self {
        CostBreakdown {
            expiration,
            dispatch,
            waiting,
            total: expiration + dispatch + waiting,
        }
    }
}

/// Penalty for dispatching a platoon of `size` trucks: zero for a full
/// platoon, `(1 - size/L) * gamma * C_ex` otherwise.
pub fn platoon_cost(size: usize, params: &ModelParams) -> Result<f64> {
    let cap = params.capacity();
    if size == 0 || size > cap {
        return Err(Error::InvalidSize { size, capacity: cap });
    }
    Ok(platoon_cost_unchecked(size, params))
}

pub(crate) fn platoon_cost_unchecked(size: usize, params: &ModelParams) -> f64 {
    let cap = params.capacity();
    if size == cap {
        0.0
    } else {
        (1.0 - size as f64 / cap as f64) * params.platoon_scale() * params.expiration_cost()
    }
}

/// Which link of `C_pt(L) < l*omega < C_pt(l) < C_ex` failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingLink {
    FullBelowWaiting,
    WaitingBelowPartial,
    PartialBelowExpiration,
}

/// One violated instance of the cost ordering, `lhs < rhs` does not hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderingViolation {
    pub size: usize,
    pub link: OrderingLink,
    pub lhs: f64,
    pub rhs: f64,
}

/// Checks the cost ordering for every partial platoon size `1..L`.
pub fn check_cost_ordering(params: &ModelParams) -> Vec<OrderingViolation> {
    let full = platoon_cost_unchecked(params.capacity(), params);
    let cex = params.expiration_cost();
    let mut out = Vec::new();
    for size in 1..params.capacity() {
        let wait = size as f64 * params.waiting_cost();
        let partial = platoon_cost_unchecked(size, params);
        for (link, lhs, rhs) in [
            (OrderingLink::FullBelowWaiting, full, wait),
            (OrderingLink::WaitingBelowPartial, wait, partial),
            (OrderingLink::PartialBelowExpiration, partial, cex),
        ] {
            if lhs.partial_cmp(&rhs) != Some(std::cmp::Ordering::Less) {
                out.push(OrderingViolation { size, link, lhs, rhs });
            }
        }
    }
    out
}

/// Cost of a slot that started in `s` (a decision state) under `action`
/// and produced `outcome`.
///
/// Waiting is charged under `Hold` for every truck present after the
/// arrival, including a platoon that the arrival forced out.
pub fn outcome_cost(action: Action, outcome: &SlotOutcome, params: &ModelParams) -> CostBreakdown {
    let expiration = if outcome.expired > 0 {
        params.expiration_cost()
    } else {
        0.0
    };
    let dispatch = if outcome.dispatched_size > 0 {
        platoon_cost_unchecked(outcome.dispatched_size, params)
    } else {
        0.0
    };
    let waiting = match action {
        Action::Hold => outcome.present as f64 * params.waiting_cost(),
        Action::Release => 0.0,
    };
    CostBreakdown::new(expiration, dispatch, waiting)
}

/// Instantaneous cost `ic(s, a, e)` of a decision state.
pub fn instantaneous_cost(
    s: &State,
    a: Action,
    e: Event,
    params: &ModelParams,
) -> Result<CostBreakdown> {
    if s.is_full() {
        return Err(Error::InvalidState(format!(
            "{s} is a full station and carries no decision"
        )));
    }
    let outcome = transition(s, a, e, params)?;
    Ok(outcome_cost(a, &outcome, params))
}
