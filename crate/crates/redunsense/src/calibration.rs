//! Selection under estimated component errors.
//!
//! A deployed device cannot observe its true component weights; it measures
//! them once, with noise, and calibrates its selections from those
//! estimates. This module models the measurement as one direct per-component
//! observation with i.i.d. Gaussian noise of standard deviation
//! `sigma_meas`, runs the chosen solver on the estimated weights, and then
//! reports the error of the chosen assembly under the *true* weights —
//! estimates never leak into the reported metrics.

use crate::components::RealizedSet;
use crate::error::{Error, Result};
use crate::microstates::Assembly;
use crate::rng::{self, STREAM_MEASURE};
use crate::selection::{self, Selection, SelectionStrategy};

/// A realized set together with its noisy per-component measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedSet {
    pub base: RealizedSet,
    /// `estimated[i] = actual[i] + m_i`, `m_i ~ N(0, sigma_meas)`, a pure
    /// function of `(seed, i)`.
    pub estimated: Vec<f64>,
    pub sigma_meas: f64,
    pub seed: u64,
}

/// One-shot measurement of every component. `sigma_meas = 0` reproduces the
/// actual weights exactly.
pub fn estimate_errors(realized: &RealizedSet, sigma_meas: f64, seed: u64) -> Result<EstimatedSet> {
    if !(sigma_meas >= 0.0) || !sigma_meas.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sigma_meas must be a finite nonnegative real, got {sigma_meas}"
        )));
    }
    let estimated = realized
        .actual
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            if sigma_meas == 0.0 {
                a
            } else {
                a + sigma_meas * rng::gaussian(seed, STREAM_MEASURE, i as u64)
            }
        })
        .collect();
    Ok(EstimatedSet {
        base: realized.clone(),
        estimated,
        sigma_meas,
        seed,
    })
}

/// Runs the solver with estimated weights substituted for actual weights
/// (including the estimated ideal reference) to *choose* the assembly, then
/// evaluates the choice with the true weights and the true ideal.
pub fn select_calibrated(
    est: &EstimatedSet,
    code: u64,
    strategy: SelectionStrategy,
) -> Result<Selection> {
    let believed = RealizedSet {
        base: est.base.base.clone(),
        actual: est.estimated.clone(),
        seed: est.base.seed,
    };
    let chosen = selection::select(&believed, code, strategy)?;
    let assembly = Assembly::new(&est.base.base, chosen.assembly.member_indices);
    let achieved = selection::achieved_output(&est.base, &assembly.member_indices);
    let objective_error = (achieved - selection::ideal_value(&est.base, code)).abs();
    Ok(Selection {
        code,
        assembly,
        achieved,
        objective_error,
    })
}
