//! Transfer functions and the standard converter accuracy figures.
//!
//! A transfer function maps every digital code to the selected assembly's
//! achieved output level. INL and DNL are reported in LSB units, where one
//! LSB is the endpoint-referenced step `outputs[span] / span`. Two INL modes
//! exist: `gain_normalized` (endpoint-referenced, the standard device
//! metric, zero at both endpoints by construction) and `raw` (deviation from
//! the nominal unit line, in unit components).

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::components::RealizedSet;
use crate::error::{Error, Result};
use crate::microstates;
use crate::selection::{self, SelectionStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    GainNormalized,
    Raw,
}

impl fmt::Display for MetricMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricMode::GainNormalized => write!(f, "gain_normalized"),
            MetricMode::Raw => write!(f, "raw"),
        }
    }
}

/// Per-code selected output levels of one realization under one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    /// `"<set id>#<seed>"`.
    pub realized_id: String,
    pub strategy: SelectionStrategy,
    /// Output level per code, `0..=span`.
    pub outputs: Vec<f64>,
    /// Endpoint-referenced step size, `outputs[span] / span`.
    pub lsb: f64,
}

/// Aggregated accuracy figures of one transfer function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub inl: Vec<f64>,
    pub dnl: Vec<f64>,
    pub max_inl: f64,
    pub rms_inl: f64,
    pub max_dnl: f64,
    pub mode: MetricMode,
}

/// Builds the full code-to-output map by running the strategy's selection at
/// every code. Fails on the first unrepresentable code.
pub fn transfer_function(
    realized: &RealizedSet,
    strategy: SelectionStrategy,
) -> Result<TransferFunction> {
    strategy.check_admissible(&realized.base)?;
    if let Some(gap) = microstates::first_gap(&realized.base)? {
        return Err(Error::NoAssembly {
            code: gap,
            set_id: realized.base.id.clone(),
        });
    }
    let span = realized.base.code_span();
    let mut outputs = Vec::with_capacity(span as usize + 1);
    for code in 0..=span {
        outputs.push(selection::select(realized, code, strategy)?.achieved);
    }
    let lsb = outputs[span as usize] / span as f64;
    Ok(TransferFunction {
        realized_id: format!("{}#{}", realized.base.id, realized.seed),
        strategy,
        outputs,
        lsb,
    })
}

/// Integral nonlinearity per code. Gain-normalized: deviation from the
/// endpoint-fit line in LSB. Raw: deviation from the nominal unit line in
/// unit components.
pub fn inl(tf: &TransferFunction, mode: MetricMode) -> Vec<f64> {
    tf.outputs
        .iter()
        .enumerate()
        .map(|(code, &out)| match mode {
            MetricMode::GainNormalized => (out - code as f64 * tf.lsb) / tf.lsb,
            MetricMode::Raw => out - code as f64,
        })
        .collect()
}

/// Differential nonlinearity per code in LSB; `dnl[0] = 0` by convention.
pub fn dnl(tf: &TransferFunction) -> Vec<f64> {
    let mut out = Vec::with_capacity(tf.outputs.len());
    out.push(0.0);
    for x in 1..tf.outputs.len() {
        out.push((tf.outputs[x] - tf.outputs[x - 1]) / tf.lsb - 1.0);
    }
    out
}

/// Aggregates INL/DNL into a report.
pub fn summary(tf: &TransferFunction, mode: MetricMode) -> AccuracyReport {
    let inl = inl(tf, mode);
    let dnl = dnl(tf);
    let max_inl = inl.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rms_inl = (inl.iter().map(|v| v * v).sum::<f64>() / inl.len() as f64).sqrt();
    let max_dnl = dnl.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    AccuracyReport {
        inl,
        dnl,
        max_inl,
        rms_inl,
        max_dnl,
        mode,
    }
}

/// Writes `code,output,inl,dnl` rows preceded by a `#` comment naming the
/// realization, strategy and mode.
pub fn write_csv(
    tf: &TransferFunction,
    report: &AccuracyReport,
    path: &Path,
) -> Result<()> {
    let mut out = format!(
        "# realized_id={} strategy={} mode={}\ncode,output,inl,dnl\n",
        tf.realized_id, tf.strategy, report.mode
    );
    for (code, &output) in tf.outputs.iter().enumerate() {
        out.push_str(&format!(
            "{code},{output},{},{}\n",
            report.inl[code], report.dnl[code]
        ));
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::{
        gen_binary, gen_dual_binary, gen_replicated, realize, Architecture, ComponentSet,
        MismatchModel,
    };

    fn realized(set: &ComponentSet, sigma: f64, seed: u64) -> RealizedSet {
        realize(set, &MismatchModel::new(sigma).unwrap(), seed).unwrap()
    }

    #[test]
    fn zero_noise_gives_the_identity_line() {
        for (set, strategy) in [
            (gen_binary(5).unwrap(), SelectionStrategy::BruteForce),
            (gen_dual_binary(5).unwrap(), SelectionStrategy::SplitDp),
            (gen_replicated(4, 2).unwrap(), SelectionStrategy::ReplicaBest),
        ] {
            let r = realized(&set, 0.0, 0);
            let tf = transfer_function(&r, strategy).unwrap();
            for (code, &out) in tf.outputs.iter().enumerate() {
                assert_eq!(out, code as f64);
            }
            for mode in [MetricMode::GainNormalized, MetricMode::Raw] {
                let rep = summary(&tf, mode);
                assert_eq!(rep.max_inl, 0.0);
                assert_eq!(rep.rms_inl, 0.0);
                assert_eq!(rep.max_dnl, 0.0);
            }
        }
    }

    #[test]
    fn binary_outputs_match_across_strategies() {
        let set = gen_binary(6).unwrap();
        let r = realized(&set, 0.03, 21);
        let reference = transfer_function(&r, SelectionStrategy::Canonical).unwrap();
        for strategy in [
            SelectionStrategy::BruteForce,
            SelectionStrategy::Mitm,
            SelectionStrategy::GreedySwap { swap_budget: 8 },
        ] {
            let tf = transfer_function(&r, strategy).unwrap();
            assert_eq!(tf.outputs, reference.outputs);
        }
    }

    #[test]
    fn split_dp_equals_brute_force_at_tf_level() {
        let set = gen_dual_binary(6).unwrap();
        let r = realized(&set, 0.05, 7);
        let a = transfer_function(&r, SelectionStrategy::SplitDp).unwrap();
        let b = transfer_function(&r, SelectionStrategy::BruteForce).unwrap();
        assert_eq!(a.outputs, b.outputs);
    }

    #[test]
    fn endpoint_inl_is_zero_gain_normalized() {
        for seed in 0..10u64 {
            let set = gen_dual_binary(6).unwrap();
            let r = realized(&set, 0.05, seed);
            for strategy in [SelectionStrategy::SplitDp, SelectionStrategy::Canonical] {
                let tf = transfer_function(&r, strategy).unwrap();
                let v = inl(&tf, MetricMode::GainNormalized);
                assert_eq!(v[0], 0.0);
                assert!(v[v.len() - 1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dnl_telescopes_to_zero() {
        let set = gen_dual_binary(7).unwrap();
        let r = realized(&set, 0.04, 3);
        let tf = transfer_function(&r, SelectionStrategy::SplitDp).unwrap();
        let sum: f64 = dnl(&tf).iter().sum();
        assert!(sum.abs() < 1e-9, "dnl sum {sum}");
    }

    #[test]
    fn incomplete_set_names_the_first_gap() {
        let set = ComponentSet {
            id: "gappy".into(),
            arch: Architecture::Custom,
            weights: vec![2, 2, 2],
            groups: None,
            resolution_bits: 3,
        };
        let r = realized(&set, 0.0, 0);
        match transfer_function(&r, SelectionStrategy::BruteForce) {
            Err(Error::NoAssembly { code, .. }) => assert_eq!(code, 1),
            other => panic!("expected NoAssembly, got {other:?}"),
        }
    }

    #[test]
    fn exact_selection_dominates_canonical_max_inl() {
        let set = gen_dual_binary(7).unwrap();
        for seed in 0..20u64 {
            let r = realized(&set, 0.02, seed);
            let exact = summary(
                &transfer_function(&r, SelectionStrategy::SplitDp).unwrap(),
                MetricMode::GainNormalized,
            );
            let fixed = summary(
                &transfer_function(&r, SelectionStrategy::Canonical).unwrap(),
                MetricMode::GainNormalized,
            );
            assert!(exact.max_inl <= fixed.max_inl + 1e-12);
        }
    }

    #[test]
    fn inl_scales_with_sigma() {
        let set = gen_binary(8).unwrap();
        let mean_max = |sigma: f64| -> f64 {
            let mut acc = 0.0;
            for seed in 0..200u64 {
                let r = realized(&set, sigma, seed);
                let tf = transfer_function(&r, SelectionStrategy::Canonical).unwrap();
                acc += summary(&tf, MetricMode::GainNormalized).max_inl;
            }
            acc / 200.0
        };
        let m1 = mean_max(0.01);
        let m2 = mean_max(0.02);
        assert!(m1 > 0.0);
        let ratio = m2 / m1;
        assert!((1.6..=2.4).contains(&ratio), "scaling ratio {ratio}");
    }

    #[test]
    fn summary_is_internally_consistent() {
        let set = gen_dual_binary(5).unwrap();
        let r = realized(&set, 0.03, 2);
        let tf = transfer_function(&r, SelectionStrategy::BruteForce).unwrap();
        let rep = summary(&tf, MetricMode::GainNormalized);
        assert_eq!(rep.max_inl, rep.inl.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        assert_eq!(rep.max_dnl, rep.dnl.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let rep2 = summary(&tf, MetricMode::GainNormalized);
        assert_eq!(rep, rep2);
    }
}
