//! Per-code minimum-error assembly selection.
//!
//! For a realized set and a digital code, selection finds the microstate
//! whose achieved (actual-weight) sum is closest to the gain-normalized
//! ideal line. Exact solvers are provided at three scales — exhaustive
//! enumeration, meet-in-the-middle, and a two-group split DP — plus a
//! polynomial greedy swap heuristic, the CRS replica-best rule, and the
//! fixed canonical (lexicographic-first) assembly used as the no-redundancy
//! baseline.
//!
//! All solvers share one tie-break: among equal-error assemblies, the
//! lexicographically smallest member-index list wins, so exact solvers are
//! mutually reproducible.
//!
//! On CRS sets, microstates are confined to a single replica, so the exact
//! solvers reduce to the replica-best rule rather than silently mixing
//! replicas (which would turn a CRS into a RES). Each replica pathway is
//! endpoint gain-calibrated: its raw sum is rescaled by the ratio of the
//! mean replica total to its own total, so switching pathways compares
//! like-for-like deviations instead of injecting the rigid gain spread
//! between replicas into the output.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::components::{Architecture, ComponentSet, RealizedSet};
use crate::error::{Error, Result};
use crate::microstates::{self, Assembly};
use crate::rng::{stream_rng, STREAM_ENSEMBLE};

pub const DEFAULT_SWAP_BUDGET: u32 = 32;

const BRUTE_FORCE_MAX_COMPONENTS: usize = 22;
const MITM_MAX_COMPONENTS: usize = 40;
const SPLIT_GROUP_MAX_COMPONENTS: usize = 20;

fn default_swap_budget() -> u32 {
    DEFAULT_SWAP_BUDGET
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionStrategy {
    BruteForce,
    Mitm,
    SplitDp,
    GreedySwap {
        #[serde(default = "default_swap_budget")]
        swap_budget: u32,
    },
    ReplicaBest,
    Canonical,
}

impl SelectionStrategy {
    pub fn label(&self) -> &'static str {
        match self {
            SelectionStrategy::BruteForce => "brute_force",
            SelectionStrategy::Mitm => "mitm",
            SelectionStrategy::SplitDp => "split_dp",
            SelectionStrategy::GreedySwap { .. } => "greedy_swap",
            SelectionStrategy::ReplicaBest => "replica_best",
            SelectionStrategy::Canonical => "canonical",
        }
    }

    /// Checks that this strategy can run on the given set's architecture.
    pub fn check_admissible(&self, set: &ComponentSet) -> Result<()> {
        let mismatch = |why: &str| Error::StrategyMismatch {
            strategy: format!("{} ({why})", self.label()),
            arch: set.arch.to_string(),
        };
        match self {
            SelectionStrategy::ReplicaBest => {
                if set.arch != Architecture::Crs {
                    return Err(mismatch("requires a CRS set"));
                }
            }
            SelectionStrategy::SplitDp => {
                if set.groups.as_ref().map_or(0, |g| g.len()) != 2 {
                    return Err(mismatch("requires a set with exactly two groups"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

impl std::fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// The chosen assembly for one code, with its achieved value and objective
/// error against the gain-normalized ideal.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub code: u64,
    pub assembly: Assembly,
    pub achieved: f64,
    pub objective_error: f64,
}

/// Gain-normalized reference level for a code:
/// `ideal(code) = code * total / span`, where the total is the sum of actual
/// weights (for CRS: the mean replica total) and the span is the largest
/// representable code. Endpoints have zero error by construction.
pub fn ideal_value(realized: &RealizedSet, code: u64) -> f64 {
    let span = realized.base.code_span();
    code as f64 * realized.reference_total() / span as f64
}

fn check_code(realized: &RealizedSet, code: u64) -> Result<()> {
    let span = realized.base.code_span();
    if code > span {
        return Err(Error::InvalidArgument(format!(
            "code {code} out of range 0..={span} for set `{}`",
            realized.base.id
        )));
    }
    Ok(())
}

/// Achieved output level of an assembly. On non-CRS sets this is the raw sum
/// of the members' actual weights. On CRS sets the hosting replica is
/// endpoint gain-calibrated: the raw sum is scaled by the mean replica total
/// over the replica's own total, so each pathway's output lies on a common
/// full-scale line and only within-pathway deviations remain.
pub fn achieved_output(realized: &RealizedSet, member_indices: &[usize]) -> f64 {
    let raw: f64 = member_indices.iter().map(|&i| realized.actual[i]).sum();
    if realized.base.arch != Architecture::Crs || member_indices.is_empty() {
        return raw;
    }
    let groups = realized.base.groups.as_ref().expect("CRS has groups");
    let g = groups
        .iter()
        .position(|m| m.contains(&member_indices[0]))
        .expect("member belongs to a group");
    raw * realized.reference_total() / realized.replica_total(g)
}

fn finalize(realized: &RealizedSet, code: u64, member_indices: Vec<usize>) -> Selection {
    let assembly = Assembly::new(&realized.base, member_indices);
    debug_assert_eq!(assembly.nominal_sum, code);
    let achieved = achieved_output(realized, &assembly.member_indices);
    let objective_error = (achieved - ideal_value(realized, code)).abs();
    Selection {
        code,
        assembly,
        achieved,
        objective_error,
    }
}

fn no_assembly(realized: &RealizedSet, code: u64) -> Error {
    Error::NoAssembly {
        code,
        set_id: realized.base.id.clone(),
    }
}

/// Dispatches to the solver named by the strategy, after checking
/// admissibility.
pub fn select(realized: &RealizedSet, code: u64, strategy: SelectionStrategy) -> Result<Selection> {
    strategy.check_admissible(&realized.base)?;
    match strategy {
        SelectionStrategy::BruteForce => select_bruteforce(realized, code),
        SelectionStrategy::Mitm => select_mitm(realized, code),
        SelectionStrategy::SplitDp => select_split_dp(realized, code),
        SelectionStrategy::GreedySwap { swap_budget } => {
            select_greedy(realized, code, swap_budget)
        }
        SelectionStrategy::ReplicaBest => select_replica(realized, code),
        SelectionStrategy::Canonical => select_canonical(realized, code),
    }
}

/// Exact optimum by exhaustive enumeration of all subsets. Ties broken by
/// lexicographically smallest member indices.
pub fn select_bruteforce(realized: &RealizedSet, code: u64) -> Result<Selection> {
    check_code(realized, code)?;
    if realized.base.arch == Architecture::Crs {
        return select_replica(realized, code);
    }
    let n = realized.base.len();
    if n > BRUTE_FORCE_MAX_COMPONENTS {
        return Err(Error::ResourceLimit(format!(
            "brute force is capped at {BRUTE_FORCE_MAX_COMPONENTS} components, set has {n}"
        )));
    }
    let ideal = ideal_value(realized, code);
    let weights = &realized.base.weights;
    let actual = &realized.actual;
    let mut best: Option<(f64, u64, u64)> = None; // (error, lex key, mask)
    for mask in 0u64..1 << n {
        let mut nominal = 0u64;
        let mut achieved = 0.0f64;
        let mut m = mask;
        while m != 0 {
            let i = m.trailing_zeros() as usize;
            nominal += weights[i];
            achieved += actual[i];
            m &= m - 1;
        }
        if nominal != code {
            continue;
        }
        let error = (achieved - ideal).abs();
        let key = Assembly::lex_key(&Assembly::from_mask(mask), n);
        let better = match &best {
            None => true,
            Some((e, k, _)) => error < *e || (error == *e && key > *k),
        };
        if better {
            best = Some((error, key, mask));
        }
    }
    let (_, _, mask) = best.ok_or_else(|| no_assembly(realized, code))?;
    Ok(finalize(realized, code, Assembly::from_mask(mask)))
}

/// One half-table row: a subset of a fixed index slice.
#[derive(Debug, Clone, Copy)]
struct Entry {
    nominal: u64,
    achieved: f64,
    key: u64,
    mask: u64,
}

/// Enumerates all subsets of `indices` (global component indices, ascending)
/// into table entries with global masks and lex keys.
fn enumerate_slice(realized: &RealizedSet, indices: &[usize]) -> Vec<Entry> {
    let n = realized.base.len();
    let k = indices.len();
    let mut entries = Vec::with_capacity(1 << k);
    for local in 0u64..1 << k {
        let mut nominal = 0u64;
        let mut achieved = 0.0f64;
        let mut mask = 0u64;
        for (j, &i) in indices.iter().enumerate() {
            if local >> j & 1 == 1 {
                nominal += realized.base.weights[i];
                achieved += realized.actual[i];
                mask |= 1 << i;
            }
        }
        let key = Assembly::lex_key(&Assembly::from_mask(mask), n);
        entries.push(Entry {
            nominal,
            achieved,
            key,
            mask,
        });
    }
    entries
}

/// Groups entries by nominal sum, sorts each bucket by achieved value, and
/// collapses exact achieved duplicates onto the best (largest) lex key.
fn bucket_by_sum(entries: Vec<Entry>) -> HashMap<u64, Vec<Entry>> {
    let mut map: HashMap<u64, Vec<Entry>> = HashMap::new();
    for e in entries {
        map.entry(e.nominal).or_default().push(e);
    }
    for bucket in map.values_mut() {
        bucket.sort_by(|a, b| a.achieved.total_cmp(&b.achieved).then(b.key.cmp(&a.key)));
        bucket.dedup_by(|next, kept| next.achieved == kept.achieved);
    }
    map
}

/// Joins a scan-side table against sum-bucketed tables, minimizing
/// `|achieved_a + achieved_b - ideal|` with the shared lex tie-break.
fn join_tables(
    scan: &[Entry],
    buckets: &HashMap<u64, Vec<Entry>>,
    code: u64,
    ideal: f64,
) -> Option<(u64, u64)> {
    let mut best: Option<(f64, u64, u64)> = None; // (error, key, mask)
    for a in scan {
        if a.nominal > code {
            continue;
        }
        let Some(bucket) = buckets.get(&(code - a.nominal)) else {
            continue;
        };
        let target = ideal - a.achieved;
        let idx = bucket.partition_point(|e| e.achieved < target);
        for j in [idx.wrapping_sub(1), idx] {
            let Some(b) = bucket.get(j) else { continue };
            let error = (a.achieved + b.achieved - ideal).abs();
            let key = a.key | b.key;
            let better = match &best {
                None => true,
                Some((e, k, _)) => error < *e || (error == *e && key > *k),
            };
            if better {
                best = Some((error, key, a.mask | b.mask));
            }
        }
    }
    best.map(|(_, key, mask)| (key, mask))
}

/// Exact optimum by meet-in-the-middle: tabulate both index halves, join on
/// nominal sums totalling the code. Matches brute force, including the
/// tie-break, and scales to twice as many components.
pub fn select_mitm(realized: &RealizedSet, code: u64) -> Result<Selection> {
    check_code(realized, code)?;
    if realized.base.arch == Architecture::Crs {
        return select_replica(realized, code);
    }
    let n = realized.base.len();
    if n > MITM_MAX_COMPONENTS {
        return Err(Error::ResourceLimit(format!(
            "meet-in-the-middle is capped at {MITM_MAX_COMPONENTS} components, set has {n}"
        )));
    }
    let ideal = ideal_value(realized, code);
    let mid = n / 2;
    let first: Vec<usize> = (0..mid).collect();
    let second: Vec<usize> = (mid..n).collect();
    let scan = enumerate_slice(realized, &first);
    let buckets = bucket_by_sum(enumerate_slice(realized, &second));
    let (_, mask) = join_tables(&scan, &buckets, code, ideal)
        .ok_or_else(|| no_assembly(realized, code))?;
    Ok(finalize(realized, code, Assembly::from_mask(mask)))
}

/// Exact optimum for two-group sets: per-group subset tables built once per
/// call, joined over every split `code = a + b`. On a two-replica CRS this
/// honors replica confinement and reduces to the replica-best rule.
pub fn select_split_dp(realized: &RealizedSet, code: u64) -> Result<Selection> {
    SelectionStrategy::SplitDp.check_admissible(&realized.base)?;
    check_code(realized, code)?;
    if realized.base.arch == Architecture::Crs {
        return select_replica(realized, code);
    }
    let groups = realized.base.groups.as_ref().expect("admissibility checked");
    for (g, members) in groups.iter().enumerate() {
        if members.len() > SPLIT_GROUP_MAX_COMPONENTS {
            return Err(Error::ResourceLimit(format!(
                "split DP group {g} has {} components, cap is {SPLIT_GROUP_MAX_COMPONENTS}",
                members.len()
            )));
        }
    }
    let ideal = ideal_value(realized, code);
    let mut a = groups[0].clone();
    let mut b = groups[1].clone();
    a.sort_unstable();
    b.sort_unstable();
    let scan = enumerate_slice(realized, &a);
    let buckets = bucket_by_sum(enumerate_slice(realized, &b));
    let (_, mask) = join_tables(&scan, &buckets, code, ideal)
        .ok_or_else(|| no_assembly(realized, code))?;
    Ok(finalize(realized, code, Assembly::from_mask(mask)))
}

/// Local-search heuristic: start from the canonical assembly and run up to
/// `swap_budget` passes of steepest descent over nominal-sum-preserving
/// swaps (at most two components out, two in, scanned in a deterministic
/// order). A single descent stalls in the first 2-for-2 local optimum, so
/// after each pass the search restarts from a deterministic perturbation of
/// the optimum (the pass-indexed neighbor in scan order) and the best
/// assembly seen anywhere is returned. Never worse than its start.
pub fn select_greedy(realized: &RealizedSet, code: u64, swap_budget: u32) -> Result<Selection> {
    check_code(realized, code)?;
    let set = &realized.base;
    let start = microstates::lex_first(set, code)?.ok_or_else(|| no_assembly(realized, code))?;
    let ideal = ideal_value(realized, code);
    let n = set.len();

    // CRS swaps must stay inside the replica holding the current assembly,
    // and its output is gain-corrected by that replica's factor.
    let (allowed, factor): (Vec<usize>, f64) = if set.arch == Architecture::Crs {
        match start.member_indices.first() {
            Some(&first) => {
                let groups = set.groups.as_ref().expect("CRS has groups");
                let g = groups
                    .iter()
                    .position(|m| m.contains(&first))
                    .expect("member belongs to a group");
                let mut members = groups[g].clone();
                members.sort_unstable();
                let factor = realized.reference_total() / realized.replica_total(g);
                (members, factor)
            }
            None => (Vec::new(), 1.0),
        }
    } else {
        ((0..n).collect(), 1.0)
    };

    let error_of = |indices: &[usize]| -> f64 {
        let raw: f64 = indices.iter().map(|&i| realized.actual[i]).sum();
        (raw * factor - ideal).abs()
    };

    // every nominal-sum-preserving 2-for-2 neighbor of `members`, with its
    // error, in deterministic scan order
    let neighbors = |members: &[usize]| -> Vec<(f64, Vec<usize>)> {
        let outside: Vec<usize> = allowed
            .iter()
            .copied()
            .filter(|i| !members.contains(i))
            .collect();
        let mut out = Vec::new();
        for (out_len, in_len) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            for outs in combos(members, out_len) {
                let out_sum: u64 = outs.iter().map(|&i| set.weights[i]).sum();
                for ins in combos(&outside, in_len) {
                    let in_sum: u64 = ins.iter().map(|&i| set.weights[i]).sum();
                    if in_sum != out_sum {
                        continue;
                    }
                    let mut next: Vec<usize> = members
                        .iter()
                        .copied()
                        .filter(|i| !outs.contains(i))
                        .chain(ins.iter().copied())
                        .collect();
                    next.sort_unstable();
                    let error = error_of(&next);
                    out.push((error, next));
                }
            }
        }
        out
    };

    let mut current = start.member_indices;
    let mut cur_error = error_of(&current);
    let mut best = current.clone();
    let mut best_error = cur_error;
    for pass in 0..swap_budget {
        if pass > 0 {
            // deterministic two-move kick out of the local optimum: one
            // neighbor jump falls straight back under steepest descent, so
            // jump twice, indexing by the pass number (with distinct
            // multipliers so consecutive passes land in different basins)
            let mut stuck = false;
            for mult in [1usize, 31] {
                let mut moves = neighbors(&current);
                if moves.is_empty() {
                    stuck = true;
                    break;
                }
                let idx = pass as usize * mult % moves.len();
                let (error, next) = moves.swap_remove(idx);
                current = next;
                cur_error = error;
            }
            if stuck {
                break;
            }
        }
        // steepest descent to the nearest local optimum
        loop {
            let improving = neighbors(&current)
                .into_iter()
                .filter(|(e, _)| *e < cur_error)
                .min_by(|a, b| a.0.total_cmp(&b.0));
            match improving {
                Some((error, next)) => {
                    current = next;
                    cur_error = error;
                }
                None => break,
            }
        }
        if cur_error < best_error {
            best = current.clone();
            best_error = cur_error;
        }
    }
    Ok(finalize(realized, code, best))
}

/// All `len`-element combinations of `pool` (assumed sorted) in
/// lexicographic order. Only needs len 1 or 2.
fn combos(pool: &[usize], len: usize) -> Vec<Vec<usize>> {
    match len {
        1 => pool.iter().map(|&i| vec![i]).collect(),
        2 => {
            let mut out = Vec::new();
            for (p, &i) in pool.iter().enumerate() {
                for &j in &pool[p + 1..] {
                    out.push(vec![i, j]);
                }
            }
            out
        }
        _ => unreachable!("swap neighborhood is capped at 2-for-2"),
    }
}

/// Best complete per-replica assembly of a CRS set; no cross-replica mixing.
/// Ties go to the lowest replica index.
pub fn select_replica(realized: &RealizedSet, code: u64) -> Result<Selection> {
    SelectionStrategy::ReplicaBest.check_admissible(&realized.base)?;
    check_code(realized, code)?;
    if code == 0 {
        return Ok(finalize(realized, code, Vec::new()));
    }
    let set = &realized.base;
    let ideal = ideal_value(realized, code);
    let groups = set.groups.as_ref().expect("CRS has groups");
    let mut best: Option<(f64, Vec<usize>)> = None;
    for members in groups {
        let mut members = members.clone();
        members.sort_unstable();
        let sub = ComponentSet {
            id: set.id.clone(),
            arch: Architecture::Custom,
            weights: members.iter().map(|&i| set.weights[i]).collect(),
            groups: None,
            resolution_bits: set.resolution_bits,
        };
        let gsum: u64 = sub.weights.iter().sum();
        if code > gsum {
            continue;
        }
        let Some(local) = microstates::lex_first(&sub, code)? else {
            continue;
        };
        let indices: Vec<usize> = local.member_indices.iter().map(|&j| members[j]).collect();
        let error = (achieved_output(realized, &indices) - ideal).abs();
        if best.as_ref().map_or(true, |(e, _)| error < *e) {
            best = Some((error, indices));
        }
    }
    let (_, indices) = best.ok_or_else(|| no_assembly(realized, code))?;
    Ok(finalize(realized, code, indices))
}

/// Fixed lexicographic-first assembly — the no-selection baseline.
pub fn select_canonical(realized: &RealizedSet, code: u64) -> Result<Selection> {
    check_code(realized, code)?;
    let assembly = microstates::lex_first(&realized.base, code)?
        .ok_or_else(|| no_assembly(realized, code))?;
    Ok(finalize(realized, code, assembly.member_indices))
}

/// Dynamic-redundancy estimate: the mean achieved value of `k` microstates
/// of `code` drawn uniformly at random with replacement, deterministically
/// in `seed`.
pub fn ensemble_average(realized: &RealizedSet, code: u64, k: u32, seed: u64) -> Result<f64> {
    check_code(realized, code)?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let mut rng = stream_rng(seed, STREAM_ENSEMBLE);
    let mut sum = 0.0f64;
    for _ in 0..k {
        let assembly = microstates::sample_uniform(&realized.base, code, &mut rng)?;
        sum += achieved_output(realized, &assembly.member_indices);
    }
    Ok(sum / k as f64)
}
