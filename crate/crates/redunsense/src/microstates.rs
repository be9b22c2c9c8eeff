//! Microstate enumeration and counting.
//!
//! A microstate of code `c` is a subset of components whose nominal weights
//! sum to `c`. Counting uses a subset-sum DP with arbitrary-precision counts
//! (the totals reach `2^n` and overflow machine integers quickly);
//! enumeration is a depth-first walk pruned by suffix reachability, emitting
//! assemblies in lexicographic order of their member indices.
//!
//! CRS sets follow replica confinement: an assembly must stay inside a
//! single replica group, so the microstates of code `c >= 1` are the union of
//! the per-replica microstates, and code 0 has the single empty assembly.

use std::path::Path;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::components::{Architecture, ComponentSet};
use crate::error::{Error, Result};

/// Hard cap on the DP table size (codes 0..=full_scale).
const MAX_PROFILE_SPAN: u64 = 1 << 24;

/// One microstate: a subset of component indices summing to a code.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Assembly {
    /// Sorted, unique component indices.
    pub member_indices: Vec<usize>,
    pub nominal_sum: u64,
}

impl Assembly {
    pub fn new(set: &ComponentSet, member_indices: Vec<usize>) -> Self {
        let nominal_sum = member_indices.iter().map(|&i| set.weights[i]).sum();
        Assembly {
            member_indices,
            nominal_sum,
        }
    }

    pub fn empty() -> Self {
        Assembly {
            member_indices: Vec::new(),
            nominal_sum: 0,
        }
    }

    /// Sum of actual weights over the members, accumulated in ascending
    /// index order (all solvers use this order so exact comparisons agree).
    pub fn achieved(&self, actual: &[f64]) -> f64 {
        self.member_indices.iter().map(|&i| actual[i]).sum()
    }

    pub(crate) fn from_mask(mut mask: u64) -> Vec<usize> {
        let mut indices = Vec::with_capacity(mask.count_ones() as usize);
        while mask != 0 {
            let i = mask.trailing_zeros() as usize;
            indices.push(i);
            mask &= mask - 1;
        }
        indices
    }

    /// Tie-break key: among assemblies of equal nominal sum, the
    /// lexicographically smallest index list has the largest key. (No
    /// assembly of a code is a prefix of another, since weights are
    /// positive, so the reversed-bit encoding is order-faithful.)
    pub(crate) fn lex_key(indices: &[usize], n: usize) -> u64 {
        debug_assert!(n <= 64);
        indices
            .iter()
            .map(|&i| 1u64 << (n - 1 - i))
            .fold(0u64, |a, b| a | b)
    }
}

/// Microstate counts for every code of a set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapacityProfile {
    /// `counts[c]` = number of microstates of code `c`, for `c` in
    /// `0..=code_span`.
    pub counts: Vec<BigUint>,
}

impl CapacityProfile {
    /// Writes `code,count` rows with a header.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("code,count\n");
        for (code, count) in self.counts.iter().enumerate() {
            out.push_str(&format!("{code},{count}\n"));
        }
        std::fs::write(path, out).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn check_code(set: &ComponentSet, code: u64) -> Result<()> {
    let span = set.code_span();
    if code > span {
        return Err(Error::InvalidArgument(format!(
            "code {code} out of range 0..={span} for set `{}`",
            set.id
        )));
    }
    Ok(())
}

/// Subset-sum counting DP over a weight list: `counts[v]` = number of
/// subsets summing to `v`.
fn subset_counts(weights: &[u64]) -> Vec<BigUint> {
    let total: u64 = weights.iter().sum();
    let mut dp = vec![BigUint::zero(); total as usize + 1];
    dp[0] = BigUint::one();
    let mut reach: u64 = 0;
    for &w in weights {
        let w = w as usize;
        let hi = reach as usize + w;
        for v in (w..=hi).rev() {
            if !dp[v - w].is_zero() {
                let add = dp[v - w].clone();
                dp[v] += add;
            }
        }
        reach += w as u64;
    }
    dp
}

/// Exact number of microstates of `code`, by counting DP. Agrees with full
/// enumeration wherever enumeration is feasible.
pub fn count_microstates(set: &ComponentSet, code: u64) -> Result<BigUint> {
    set.validate()?;
    check_code(set, code)?;
    guard_span(set)?;
    match set.arch {
        Architecture::Crs => {
            if code == 0 {
                return Ok(BigUint::one());
            }
            let groups = set.groups.as_ref().expect("validated CRS has groups");
            let mut total = BigUint::zero();
            for members in groups {
                let weights: Vec<u64> = members.iter().map(|&i| set.weights[i]).collect();
                let gsum: u64 = weights.iter().sum();
                if code <= gsum {
                    total += subset_counts(&weights)[code as usize].clone();
                }
            }
            Ok(total)
        }
        _ => Ok(subset_counts(&set.weights)[code as usize].clone()),
    }
}

fn guard_span(set: &ComponentSet) -> Result<()> {
    if set.full_scale() > MAX_PROFILE_SPAN {
        return Err(Error::ResourceLimit(format!(
            "full scale {} exceeds the DP table cap {MAX_PROFILE_SPAN}",
            set.full_scale()
        )));
    }
    Ok(())
}

/// Counts for every code in one DP pass.
pub fn capacity_profile(set: &ComponentSet) -> Result<CapacityProfile> {
    set.validate()?;
    guard_span(set)?;
    let span = set.code_span() as usize;
    let counts = match set.arch {
        Architecture::Crs => {
            let groups = set.groups.as_ref().expect("validated CRS has groups");
            let mut counts = vec![BigUint::zero(); span + 1];
            counts[0] = BigUint::one();
            for members in groups {
                let weights: Vec<u64> = members.iter().map(|&i| set.weights[i]).collect();
                let dp = subset_counts(&weights);
                for (c, count) in dp.iter().enumerate().skip(1) {
                    if c <= span {
                        counts[c] += count.clone();
                    }
                }
            }
            counts
        }
        _ => subset_counts(&set.weights),
    };
    Ok(CapacityProfile { counts })
}

/// True iff every code in `0..=code_span` has at least one microstate.
pub fn is_complete(set: &ComponentSet) -> Result<bool> {
    let profile = capacity_profile(set)?;
    Ok(profile.counts.iter().all(|c| !c.is_zero()))
}

/// First unrepresentable code, if any.
pub fn first_gap(set: &ComponentSet) -> Result<Option<u64>> {
    let profile = capacity_profile(set)?;
    Ok(profile
        .counts
        .iter()
        .position(|c| c.is_zero())
        .map(|c| c as u64))
}

/// Enumeration result, truncated at the caller's limit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enumeration {
    pub assemblies: Vec<Assembly>,
    pub truncated: bool,
}

/// Suffix reachability bitsets: `reach[i]` holds the sums achievable with
/// indices `>= i`.
struct Reachability {
    words: Vec<Vec<u64>>,
}

impl Reachability {
    fn build(weights: &[u64]) -> Self {
        let total: u64 = weights.iter().sum();
        let nwords = (total as usize / 64) + 1;
        let n = weights.len();
        let mut words = vec![vec![0u64; nwords]; n + 1];
        words[n][0] = 1;
        for i in (0..n).rev() {
            let (lo, hi) = words.split_at_mut(i + 1);
            let cur = &mut lo[i];
            let next = &hi[0];
            let w = weights[i] as usize;
            let (wq, wr) = (w / 64, w % 64);
            for j in 0..nwords {
                let mut v = next[j];
                // shifted-in bits from including weight i
                if j >= wq {
                    let src = next[j - wq];
                    v |= if wr == 0 { src } else { src << wr };
                    if wr != 0 && j > wq {
                        v |= next[j - wq - 1] >> (64 - wr);
                    }
                }
                cur[j] = v;
            }
        }
        Reachability { words }
    }

    fn reachable(&self, i: usize, v: u64) -> bool {
        let w = &self.words[i];
        (w[v as usize / 64] >> (v % 64)) & 1 == 1
    }
}

/// Lexicographic DFS over subsets of `weights` summing to `target`.
/// `map` translates local positions to global component indices.
fn enumerate_local(
    set: &ComponentSet,
    weights: &[u64],
    map: &[usize],
    target: u64,
    limit: usize,
    out: &mut Vec<Assembly>,
) {
    let reach = Reachability::build(weights);
    let mut current: Vec<usize> = Vec::new();
    dfs(set, weights, map, &reach, 0, target, limit, &mut current, out);
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    set: &ComponentSet,
    weights: &[u64],
    map: &[usize],
    reach: &Reachability,
    i: usize,
    remaining: u64,
    limit: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Assembly>,
) {
    if out.len() >= limit {
        return;
    }
    if remaining == 0 {
        out.push(Assembly::new(set, current.iter().map(|&p| map[p]).collect()));
        return;
    }
    if i >= weights.len() || !reach.reachable(i, remaining) {
        return;
    }
    // include-first gives lexicographic order on member indices
    if weights[i] <= remaining && reach.reachable(i + 1, remaining - weights[i]) {
        current.push(i);
        dfs(set, weights, map, reach, i + 1, remaining - weights[i], limit, current, out);
        current.pop();
    }
    if reach.reachable(i + 1, remaining) {
        dfs(set, weights, map, reach, i + 1, remaining, limit, current, out);
    }
}

/// All microstates of `code` in lexicographic order, truncated at `limit`.
pub fn enumerate_microstates(set: &ComponentSet, code: u64, limit: usize) -> Result<Enumeration> {
    set.validate()?;
    check_code(set, code)?;
    if limit == 0 {
        return Err(Error::InvalidArgument("limit must be >= 1".into()));
    }
    if set.len() > 64 {
        return Err(Error::ResourceLimit(format!(
            "enumeration supports at most 64 components, set has {}",
            set.len()
        )));
    }
    let mut assemblies = Vec::new();
    match set.arch {
        Architecture::Crs => {
            if code == 0 {
                assemblies.push(Assembly::empty());
            } else {
                let groups = set.groups.as_ref().expect("validated CRS has groups");
                for members in groups {
                    let weights: Vec<u64> = members.iter().map(|&i| set.weights[i]).collect();
                    enumerate_local(set, &weights, members, code, limit, &mut assemblies);
                }
                // groups may interleave indices in custom sets
                assemblies.sort();
                assemblies.truncate(limit);
            }
        }
        _ => {
            let all: Vec<usize> = (0..set.len()).collect();
            enumerate_local(set, &set.weights, &all, code, limit, &mut assemblies);
        }
    }
    let truncated =
        assemblies.len() == limit && count_microstates(set, code)? > BigUint::from(limit);
    Ok(Enumeration {
        assemblies,
        truncated,
    })
}

/// Lexicographically first microstate of `code`, or `None` when the code is
/// unrepresentable. This is the canonical assembly.
pub fn lex_first(set: &ComponentSet, code: u64) -> Result<Option<Assembly>> {
    let e = enumerate_microstates(set, code, 1)?;
    Ok(e.assemblies.into_iter().next())
}

fn random_below(bound: &BigUint, rng: &mut impl RngCore) -> BigUint {
    debug_assert!(!bound.is_zero());
    let bits = bound.bits();
    let nbytes = ((bits + 7) / 8) as usize;
    let top_mask: u8 = if bits % 8 == 0 {
        0xff
    } else {
        (1u8 << (bits % 8)) - 1
    };
    loop {
        let mut bytes = vec![0u8; nbytes];
        rng.fill_bytes(&mut bytes);
        bytes[nbytes - 1] &= top_mask;
        let candidate = BigUint::from_bytes_le(&bytes);
        if &candidate < bound {
            return candidate;
        }
    }
}

/// Draws one microstate of `code` uniformly at random, by walking the
/// suffix-count DP.
pub(crate) fn sample_uniform(
    set: &ComponentSet,
    code: u64,
    rng: &mut impl RngCore,
) -> Result<Assembly> {
    set.validate()?;
    check_code(set, code)?;
    match set.arch {
        Architecture::Crs => {
            if code == 0 {
                return Ok(Assembly::empty());
            }
            let groups = set.groups.as_ref().expect("validated CRS has groups");
            let mut per_group: Vec<BigUint> = Vec::with_capacity(groups.len());
            for members in groups {
                let weights: Vec<u64> = members.iter().map(|&i| set.weights[i]).collect();
                let gsum: u64 = weights.iter().sum();
                per_group.push(if code <= gsum {
                    subset_counts(&weights)[code as usize].clone()
                } else {
                    BigUint::zero()
                });
            }
            let total: BigUint = per_group.iter().sum();
            if total.is_zero() {
                return Err(Error::NoAssembly {
                    code,
                    set_id: set.id.clone(),
                });
            }
            let mut pick = random_below(&total, rng);
            for (g, count) in per_group.iter().enumerate() {
                if &pick < count {
                    let members = &groups[g];
                    let weights: Vec<u64> = members.iter().map(|&i| set.weights[i]).collect();
                    return sample_from_weights(set, &weights, members, code, rng);
                }
                pick -= count.clone();
            }
            unreachable!("pick exceeds total count");
        }
        _ => {
            let all: Vec<usize> = (0..set.len()).collect();
            sample_from_weights(set, &set.weights, &all, code, rng)
        }
    }
}

fn sample_from_weights(
    set: &ComponentSet,
    weights: &[u64],
    map: &[usize],
    code: u64,
    rng: &mut impl RngCore,
) -> Result<Assembly> {
    let n = weights.len();
    // cnt[i][v] = subsets of positions >= i summing to v (v <= code)
    let cap = code as usize;
    let mut cnt = vec![vec![BigUint::zero(); cap + 1]; n + 1];
    cnt[n][0] = BigUint::one();
    for i in (0..n).rev() {
        for v in 0..=cap {
            let mut c = cnt[i + 1][v].clone();
            let w = weights[i] as usize;
            if w <= v {
                c += cnt[i + 1][v - w].clone();
            }
            cnt[i][v] = c;
        }
    }
    if cnt[0][cap].is_zero() {
        return Err(Error::NoAssembly {
            code,
            set_id: set.id.clone(),
        });
    }
    let mut indices = Vec::new();
    let mut v = cap;
    for i in 0..n {
        if v == 0 {
            break;
        }
        let w = weights[i] as usize;
        let with = if w <= v {
            cnt[i + 1][v - w].clone()
        } else {
            BigUint::zero()
        };
        let total = cnt[i][v].clone();
        let pick = random_below(&total, rng);
        if pick < with {
            indices.push(map[i]);
            v -= w;
        }
    }
    Ok(Assembly::new(set, indices))
}
