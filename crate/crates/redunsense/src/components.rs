//! Component-set construction and stochastic mismatch realization.
//!
//! A [`ComponentSet`] is the resource inventory of one converter design:
//! an ordered list of nominal integer weights, measured in unit components,
//! plus an architecture tag and an optional grouping (sub-arrays for RES,
//! replicas for CRS). [`realize`] perturbs the nominal weights with seeded
//! Gaussian mismatch to produce one Monte Carlo world.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, STREAM_MISMATCH};

/// Maximum resolution supported by the generators. Keeps full-scale
/// enumeration and DP tables within desk-scale memory.
pub const MAX_RESOLUTION_BITS: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Conventional orthogonal system: one binary-weighted array.
    Cos,
    /// Conventional redundant system: `r` replicated binary arrays.
    Crs,
    /// Entangled-redundant system: two overlapping binary sub-arrays.
    Res,
    /// User-supplied weight list.
    Custom,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Architecture::Cos => "COS",
            Architecture::Crs => "CRS",
            Architecture::Res => "RES",
            Architecture::Custom => "CUSTOM",
        };
        write!(f, "{s}")
    }
}

/// Nominal component inventory of one design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSet {
    pub id: String,
    pub arch: Architecture,
    /// Nominal weights in unit components; order is significant, indices are
    /// stable identifiers.
    pub weights: Vec<u64>,
    /// Partition of `0..weights.len()` into sub-arrays (RES) or replicas
    /// (CRS). `None` means a single implicit group.
    pub groups: Option<Vec<Vec<usize>>>,
    pub resolution_bits: u32,
}

impl ComponentSet {
    /// Sum of nominal weights; the total unit-component budget.
    pub fn full_scale(&self) -> u64 {
        self.weights.iter().sum()
    }

    /// Largest representable code. Equals the full scale except for CRS,
    /// where assemblies are confined to one replica and the code range is a
    /// single replica's span.
    pub fn code_span(&self) -> u64 {
        match self.arch {
            Architecture::Crs => self.full_scale() / self.replica_count() as u64,
            _ => self.full_scale(),
        }
    }

    /// Number of replica groups (1 when ungrouped).
    pub fn replica_count(&self) -> usize {
        self.groups.as_ref().map_or(1, |g| g.len())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Checks the structural invariants: non-empty positive weights and, when
    /// present, groups forming an exact partition of the index range.
    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::SchemaViolation {
                field: "weights".into(),
                message: "weight list must be non-empty".into(),
            });
        }
        for (i, &w) in self.weights.iter().enumerate() {
            if w == 0 {
                return Err(Error::SchemaViolation {
                    field: format!("weights[{i}]"),
                    message: "weights must be >= 1".into(),
                });
            }
        }
        if let Some(groups) = &self.groups {
            let mut seen = vec![false; self.weights.len()];
            for (g, members) in groups.iter().enumerate() {
                for &idx in members {
                    if idx >= self.weights.len() {
                        return Err(Error::SchemaViolation {
                            field: format!("groups[{g}]"),
                            message: format!("index {idx} out of range"),
                        });
                    }
                    if seen[idx] {
                        return Err(Error::SchemaViolation {
                            field: format!("groups[{g}]"),
                            message: format!("index {idx} appears in more than one group"),
                        });
                    }
                    seen[idx] = true;
                }
            }
            if let Some(missing) = seen.iter().position(|&s| !s) {
                return Err(Error::SchemaViolation {
                    field: "groups".into(),
                    message: format!("index {missing} is not covered by any group"),
                });
            }
        }
        Ok(())
    }

    /// Writes the set in the JSON component-set file format.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = SetFile {
            id: self.id.clone(),
            weights: self.weights.clone(),
            groups: self.groups.clone(),
            arch: Some(self.arch),
        };
        let body = serde_json::to_string_pretty(&file).expect("set serialization");
        fs::write(path, body + "\n").map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// On-disk component-set schema: `{"id", "weights", "groups"?, "arch"?}`.
/// `arch` defaults to CUSTOM when absent so hand-written files need not
/// carry it.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetFile {
    id: String,
    weights: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    groups: Option<Vec<Vec<usize>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    arch: Option<Architecture>,
}

/// Gaussian fabrication-mismatch model. A weight-`w` component behaves as
/// `w` parallel unit components with i.i.d. unit errors, so its error
/// standard deviation is `sigma_unit * sqrt(w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MismatchModel {
    pub sigma_unit: f64,
}

impl MismatchModel {
    pub fn new(sigma_unit: f64) -> Result<Self> {
        if !(sigma_unit >= 0.0) || !sigma_unit.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sigma_unit must be a finite nonnegative real, got {sigma_unit}"
            )));
        }
        Ok(Self { sigma_unit })
    }
}

/// One Monte Carlo world: a component set with its actual, mismatch-perturbed
/// weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedSet {
    pub base: ComponentSet,
    pub actual: Vec<f64>,
    pub seed: u64,
}

impl RealizedSet {
    /// Sum of actual weights, accumulated in index order.
    pub fn total(&self) -> f64 {
        self.actual.iter().sum()
    }

    /// Total used by the gain-normalized ideal line. For CRS this is the
    /// mean replica total (the ideal line of one pathway), otherwise the
    /// full actual total.
    pub fn reference_total(&self) -> f64 {
        match self.base.arch {
            Architecture::Crs => self.total() / self.base.replica_count() as f64,
            _ => self.total(),
        }
    }

    /// Actual total of one replica group, accumulated in index order.
    pub fn replica_total(&self, group: usize) -> f64 {
        let members = &self.base.groups.as_ref().expect("grouped set")[group];
        members.iter().map(|&i| self.actual[i]).sum()
    }
}

fn check_bits(n: u32, lo: u32) -> Result<()> {
    if n < lo || n > MAX_RESOLUTION_BITS {
        return Err(Error::InvalidArgument(format!(
            "resolution must be in [{lo}, {MAX_RESOLUTION_BITS}], got {n}"
        )));
    }
    Ok(())
}

/// Binary-weighted set `[1, 2, ..., 2^(N-1)]` — the conventional orthogonal
/// architecture where every code has exactly one assembly.
pub fn gen_binary(n: u32) -> Result<ComponentSet> {
    check_bits(n, 1)?;
    let weights: Vec<u64> = (0..n).map(|i| 1u64 << i).collect();
    Ok(ComponentSet {
        id: format!("cos-n{n}"),
        arch: Architecture::Cos,
        weights,
        groups: None,
        resolution_bits: n,
    })
}

/// Two overlapping binary sub-arrays with the same unit budget as
/// `gen_binary(n)`: group A is `binary(n-1)` and group B is `binary(n-1)`
/// plus one extra unit component. Total is `2^n - 1` units and every code in
/// `0..2^n` stays representable, while mid codes gain exponentially many
/// assemblies.
pub fn gen_dual_binary(n: u32) -> Result<ComponentSet> {
    check_bits(n, 2)?;
    let sub: Vec<u64> = (0..n - 1).map(|i| 1u64 << i).collect();
    let mut weights = sub.clone();
    weights.push(1);
    weights.extend_from_slice(&sub);
    let a: Vec<usize> = (0..(n - 1) as usize).collect();
    let b: Vec<usize> = ((n - 1) as usize..weights.len()).collect();
    Ok(ComponentSet {
        id: format!("res-n{n}"),
        arch: Architecture::Res,
        weights,
        groups: Some(vec![a, b]),
        resolution_bits: n,
    })
}

/// `r` identical binary-weighted replicas; an assembly must stay inside one
/// replica, so redundancy (and resource cost) grows linearly with `r`.
pub fn gen_replicated(n: u32, r: u32) -> Result<ComponentSet> {
    check_bits(n, 1)?;
    if !(2..=8).contains(&r) {
        return Err(Error::InvalidArgument(format!(
            "replica count must be in [2, 8], got {r}"
        )));
    }
    let mut weights = Vec::with_capacity((n * r) as usize);
    let mut groups = Vec::with_capacity(r as usize);
    for g in 0..r {
        let start = (g * n) as usize;
        weights.extend((0..n).map(|i| 1u64 << i));
        groups.push((start..start + n as usize).collect());
    }
    Ok(ComponentSet {
        id: format!("crs-n{n}-r{r}"),
        arch: Architecture::Crs,
        weights,
        groups: Some(groups),
        resolution_bits: n,
    })
}

/// Loads a component set from the JSON file schema. The architecture
/// defaults to CUSTOM when the file does not carry an `arch` tag.
pub fn load_custom(path: &Path) -> Result<ComponentSet> {
    let body = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: SetFile = serde_json::from_str(&body).map_err(|e| Error::SchemaViolation {
        field: e.to_string(),
        message: format!("cannot parse {}", path.display()),
    })?;
    let full_scale: u64 = file.weights.iter().sum();
    let arch = file.arch.unwrap_or(Architecture::Custom);
    let resolution_bits = match arch {
        Architecture::Crs => {
            let r = file.groups.as_ref().map_or(1, |g| g.len()) as u64;
            bits_for(full_scale / r.max(1))
        }
        _ => bits_for(full_scale),
    };
    let set = ComponentSet {
        id: file.id,
        arch,
        weights: file.weights,
        groups: file.groups,
        resolution_bits,
    };
    set.validate()?;
    if set.arch == Architecture::Crs && set.replica_count() < 2 {
        return Err(Error::SchemaViolation {
            field: "groups".into(),
            message: "a CRS set needs at least two replica groups".into(),
        });
    }
    Ok(set)
}

fn bits_for(full_scale: u64) -> u32 {
    64 - full_scale.leading_zeros()
}

/// Perturbs each nominal weight with an independent Gaussian error of
/// standard deviation `sigma_unit * sqrt(weight)`. Each draw is a pure
/// function of `(seed, index)`, so the same seed reproduces the identical
/// realization under any call order or parallel schedule.
pub fn realize(set: &ComponentSet, model: &MismatchModel, seed: u64) -> Result<RealizedSet> {
    set.validate()?;
    let mut actual = Vec::with_capacity(set.len());
    for (i, &w) in set.weights.iter().enumerate() {
        let value = if model.sigma_unit == 0.0 {
            w as f64
        } else {
            let e = model.sigma_unit * (w as f64).sqrt() * rng::gaussian(seed, STREAM_MISMATCH, i as u64);
            w as f64 + e
        };
        if value <= 0.0 {
            return Err(Error::DegenerateRealization {
                index: i,
                value,
                seed,
            });
        }
        actual.push(value);
    }
    Ok(RealizedSet {
        base: set.clone(),
        actual,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_matches_figure_case() {
        let set = gen_binary(3).unwrap();
        assert_eq!(set.weights, vec![1, 2, 4]);
        assert_eq!(set.full_scale(), 7);
        assert!(set.groups.is_none());
        assert_eq!(set.arch, Architecture::Cos);
    }

    #[test]
    fn binary_degenerate_and_larger() {
        assert_eq!(gen_binary(1).unwrap().weights, vec![1]);
        assert_eq!(gen_binary(8).unwrap().full_scale(), 255);
        assert!(gen_binary(0).is_err());
        assert!(gen_binary(25).is_err());
    }

    #[test]
    fn dual_binary_small_instances() {
        let set = gen_dual_binary(3).unwrap();
        assert_eq!(set.weights, vec![1, 2, 1, 1, 2]);
        let groups = set.groups.as_ref().unwrap();
        assert_eq!(groups[0], vec![0, 1]);
        assert_eq!(groups[1], vec![2, 3, 4]);
        assert_eq!(set.full_scale(), 7);

        let set = gen_dual_binary(2).unwrap();
        assert_eq!(set.weights, vec![1, 1, 1]);
        assert_eq!(set.full_scale(), 3);

        let set = gen_dual_binary(4).unwrap();
        assert_eq!(set.weights, vec![1, 2, 4, 1, 1, 2, 4]);
        assert_eq!(set.full_scale(), 15);

        assert!(gen_dual_binary(1).is_err());
    }

    #[test]
    fn replicated_layout() {
        let set = gen_replicated(3, 2).unwrap();
        assert_eq!(set.weights, vec![1, 2, 4, 1, 2, 4]);
        assert_eq!(set.full_scale(), 14);
        assert_eq!(set.code_span(), 7);

        let set = gen_replicated(1, 2).unwrap();
        assert_eq!(set.weights, vec![1, 1]);

        assert_eq!(gen_replicated(4, 3).unwrap().full_scale(), 45);
        assert!(gen_replicated(3, 1).is_err());
        assert!(gen_replicated(3, 9).is_err());
    }

    #[test]
    fn custom_roundtrip_and_schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.json");

        std::fs::write(&path, r#"{"id":"x","weights":[1,1,2,3]}"#).unwrap();
        let set = load_custom(&path).unwrap();
        assert_eq!(set.arch, Architecture::Custom);
        assert_eq!(set.full_scale(), 7);
        assert_eq!(set.len(), 4);

        std::fs::write(&path, r#"{"id":"x","weights":[1,0,2]}"#).unwrap();
        assert!(matches!(
            load_custom(&path),
            Err(Error::SchemaViolation { field, .. }) if field == "weights[1]"
        ));

        std::fs::write(&path, r#"{"id":"x","weights":[1,2],"groups":[[0,1],[1]]}"#).unwrap();
        assert!(matches!(
            load_custom(&path),
            Err(Error::SchemaViolation { .. })
        ));

        std::fs::write(&path, r#"{"id":"x","weights":[1,2],"groups":[[0]]}"#).unwrap();
        assert!(matches!(
            load_custom(&path),
            Err(Error::SchemaViolation { .. })
        ));
    }

    #[test]
    fn zero_sigma_is_exact() {
        let set = gen_binary(8).unwrap();
        let model = MismatchModel::new(0.0).unwrap();
        let realized = realize(&set, &model, 12345).unwrap();
        for (i, &w) in set.weights.iter().enumerate() {
            assert_eq!(realized.actual[i].to_bits(), (w as f64).to_bits());
        }
    }

    #[test]
    fn realize_is_deterministic() {
        let set = gen_dual_binary(6).unwrap();
        let model = MismatchModel::new(0.05).unwrap();
        let a = realize(&set, &model, 99).unwrap();
        let b = realize(&set, &model, 99).unwrap();
        for (x, y) in a.actual.iter().zip(&b.actual) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn mismatch_scaling_law() {
        // std of (actual - nominal) over many seeds must track sigma*sqrt(w).
        let set = gen_binary(8).unwrap();
        let sigma = 0.01;
        let model = MismatchModel::new(sigma).unwrap();
        let trials = 100_000u64;
        let mut sums = vec![0.0f64; set.len()];
        let mut sqsums = vec![0.0f64; set.len()];
        for seed in 0..trials {
            let r = realize(&set, &model, seed).unwrap();
            for i in 0..set.len() {
                let e = r.actual[i] - set.weights[i] as f64;
                sums[i] += e;
                sqsums[i] += e * e;
            }
        }
        for i in 0..set.len() {
            let n = trials as f64;
            let var = (sqsums[i] - sums[i] * sums[i] / n) / (n - 1.0);
            let expected = sigma * (set.weights[i] as f64).sqrt();
            let rel = (var.sqrt() - expected).abs() / expected;
            assert!(rel < 0.03, "weight {} rel dev {rel}", set.weights[i]);
        }
    }

    #[test]
    fn degenerate_draw_is_an_error() {
        let set = gen_binary(4).unwrap();
        let model = MismatchModel::new(100.0).unwrap();
        // Some seed in this range must push a weight nonpositive.
        let hit = (0..200).any(|seed| {
            matches!(
                realize(&set, &model, seed),
                Err(Error::DegenerateRealization { .. })
            )
        });
        assert!(hit);
    }

    proptest! {
        #[test]
        fn resource_parity(n in 2u32..=24) {
            let cos = gen_binary(n).unwrap();
            let res = gen_dual_binary(n).unwrap();
            prop_assert_eq!(cos.full_scale(), res.full_scale());
            prop_assert_eq!(res.full_scale(), (1u64 << n) - 1);
        }

        #[test]
        fn seed_determinism(seed in any::<u64>(), n in 2u32..=8) {
            let set = gen_dual_binary(n).unwrap();
            let model = MismatchModel::new(0.02).unwrap();
            match (realize(&set, &model, seed), realize(&set, &model, seed)) {
                (Ok(a), Ok(b)) => {
                    for (x, y) in a.actual.iter().zip(&b.actual) {
                        prop_assert_eq!(x.to_bits(), y.to_bits());
                    }
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "determinism broken across Ok/Err"),
            }
        }
    }
}
