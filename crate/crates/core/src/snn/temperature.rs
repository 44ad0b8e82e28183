use crate::error::{Error, Result};

pub const MIN_INVERSE_TEMPERATURE: f64 = 1e-8;
pub const MAX_INVERSE_TEMPERATURE: f64 = 1e8;

/// Temperature `T`, stored as its inverse `β = 1/T` clamped to `[1e-8, 1e8]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Temperature {
    inverse: f64,
}

impl Temperature {
    pub fn new(t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidTemperature(t));
        }
        Ok(Temperature::from_inverse_clamped(1.0 / t))
    }

    pub fn from_inverse(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidTemperature(1.0 / beta));
        }
        Ok(Temperature::from_inverse_clamped(beta))
    }

    pub(crate) fn from_inverse_clamped(beta: f64) -> Self {
        let inverse = if beta.is_nan() {
            MIN_INVERSE_TEMPERATURE
        } else {
            beta.clamp(MIN_INVERSE_TEMPERATURE, MAX_INVERSE_TEMPERATURE)
        };
        Temperature { inverse }
    }

    #[inline]
    pub fn value(self) -> f64 {
        1.0 / self.inverse
    }

    #[inline]
    pub fn inverse(self) -> f64 {
        self.inverse
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Temperature {
            inverse: 1.0 / 100.0,
        }
    }
}

pub(crate) const STEP_GROWTH: f64 = 1.5;
pub(crate) const STEP_SHRINK: f64 = 0.5;

/// A learned temperature that takes one accept/reject descent step on `β` per update.
///
/// The step size persists across updates: it grows 1.5x when a step is accepted and halves
/// when one is rejected, so `β` tracks the minimizing temperature of a drifting loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureState {
    pub temperature: Temperature,
    pub step_size: f64,
}

impl TemperatureState {
    pub fn new(temperature: Temperature, step_size: f64) -> Self {
        TemperatureState {
            temperature,
            step_size,
        }
    }

    /// `current` and `d_loss_d_inverse` are the loss and `∂loss/∂β` at the current
    /// temperature; `loss_at` evaluates the same loss at a candidate. The candidate is kept
    /// when its loss does not exceed `current`. Returns whether it was kept.
    pub fn step(
        &mut self,
        current: f64,
        d_loss_d_inverse: f64,
        loss_at: impl FnOnce(Temperature) -> Result<f64>,
    ) -> Result<bool> {
        if !(d_loss_d_inverse.is_finite() && current.is_finite()) {
            return Ok(false);
        }
        let next = Temperature::from_inverse_clamped(
            self.temperature.inverse() - self.step_size * d_loss_d_inverse,
        );
        if next == self.temperature {
            return Ok(false);
        }
        let candidate = loss_at(next)?;
        if candidate <= current {
            self.temperature = next;
            self.step_size *= STEP_GROWTH;
            Ok(true)
        } else {
            self.step_size *= STEP_SHRINK;
            Ok(false)
        }
    }
}
