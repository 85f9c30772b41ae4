use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalars shared by the dynamics, cost model and solver.
///
/// Field names follow the station vocabulary: `capacity` is the number of
/// trucks the station can hold (a full platoon), `deadline` the number of
/// slot credits a truck receives on arrival.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    capacity: usize,
    deadline: u32,
    arrival_prob: f64,
    expiration_cost: f64,
    waiting_cost: f64,
    platoon_scale: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawParams {
    #[serde(rename = "L")]
    capacity: usize,
    #[serde(rename = "T")]
    deadline: u32,
    p: f64,
    cex: f64,
    omega: f64,
    gamma: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.capacity, raw.deadline, raw.p, raw.cex, raw.omega, raw.gamma)
    }
}

impl From<ModelParams> for RawParams {
    fn from(m: ModelParams) -> Self {
        RawParams {
            capacity: m.capacity,
            deadline: m.deadline,
            p: m.arrival_prob,
            cex: m.expiration_cost,
            omega: m.waiting_cost,
            gamma: m.platoon_scale,
        }
    }
}

impl ModelParams {
    /// Validates and builds a parameter set.
    ///
    /// Ranges: `capacity >= 1`, `deadline >= 1`, `0 < arrival_prob < 1`,
    /// `expiration_cost > 0`, `waiting_cost > 0`, `0 < platoon_scale <= 1`.
    pub fn new(
        capacity: usize,
        deadline: u32,
        arrival_prob: f64,
        expiration_cost: f64,
        waiting_cost: f64,
        platoon_scale: f64,
    ) -> Result<Self> {
        if capacity < 1 {
            return Err(Error::InvalidParams("capacity L must be at least 1".into()));
        }
        if capacity > u32::MAX as usize {
            return Err(Error::InvalidParams("capacity L is too large".into()));
        }
        if deadline < 1 {
            return Err(Error::InvalidParams("deadline T must be at least 1".into()));
        }
        if !(arrival_prob > 0.0 && arrival_prob < 1.0) {
            return Err(Error::InvalidParams(format!(
                "arrival probability p={arrival_prob} must lie in (0, 1)"
            )));
        }
        if !(expiration_cost.is_finite() && expiration_cost > 0.0) {
            return Err(Error::InvalidParams(format!(
                "expiration cost {expiration_cost} must be positive"
            )));
        }
        if !(waiting_cost.is_finite() && waiting_cost > 0.0) {
            return Err(Error::InvalidParams(format!(
                "waiting cost {waiting_cost} must be positive"
            )));
        }
        if !(platoon_scale > 0.0 && platoon_scale <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "platoon scale gamma={platoon_scale} must lie in (0, 1]"
            )));
        }
        Ok(ModelParams {
            capacity,
            deadline,
            arrival_prob,
            expiration_cost,
            waiting_cost,
            platoon_scale,
        })
    }

    /// Station capacity `L`.
    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Deadline credits `T` given to each arriving truck.
    pub fn deadline(&self) -> u32 {
        self.deadline
    }

    pub fn arrival_prob(&self) -> f64 {
        self.arrival_prob
    }

    pub fn expiration_cost(&self) -> f64 {
        self.expiration_cost
    }

    pub fn waiting_cost(&self) -> f64 {
        self.waiting_cost
    }

    pub fn platoon_scale(&self) -> f64 {
        self.platoon_scale
    }

    /// Same parameters with a different station capacity.
    pub fn with_capacity(&self, capacity: usize) -> Result<Self> {
        ModelParams::new(
            capacity,
            self.deadline,
            self.arrival_prob,
            self.expiration_cost,
            self.waiting_cost,
            self.platoon_scale,
        )
    }
}
