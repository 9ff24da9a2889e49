//! Balanced two-set partitions of the indicator columns and paired
//! split-half scores.
//!
//! A partition splits columns {0..M−1} into two disjoint sets whose sizes
//! differ by at most one. The canonical form keeps column 0 in `set_a`, which
//! dedupes mirror pairs: counts are C(M, M/2)/2 for even M and C(M, ⌊M/2⌋)
//! for odd M.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::core::pearson_slice;
use crate::error::{Error, Result, Warning};
use crate::measurement::{score_with, EmConfig, IndicatorMatrix, LatentScores, Method};
use crate::rng::task_rng;

/// Split correlation below which a [`Warning::WeakSplit`] is attached.
pub const WEAK_SPLIT_THRESHOLD: f64 = 0.05;

/// Default cap on exhaustive enumeration before switching to sampling.
pub const DEFAULT_PARTITION_CAP: usize = 1000;

/// Two disjoint column index sets covering 0..M, canonical: 0 ∈ set_a.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    set_a: Vec<usize>,
    set_b: Vec<usize>,
}

impl Partition {
    /// Build the canonical partition containing `set_a` against its
    /// complement in 0..m. Whichever side holds column 0 becomes `set_a`.
    pub fn new(m: usize, side: &[usize]) -> Result<Self> {
        let chosen: HashSet<usize> = side.iter().copied().collect();
        if chosen.len() != side.len() || side.iter().any(|&j| j >= m) {
            return Err(Error::InvalidConfig {
                reason: "partition side has duplicate or out-of-range indices".into(),
            });
        }
        let complement: Vec<usize> = (0..m).filter(|j| !chosen.contains(j)).collect();
        if complement.is_empty() || side.is_empty() {
            return Err(Error::InvalidConfig {
                reason: "both partition sides must be nonempty".into(),
            });
        }
        if side.len().abs_diff(complement.len()) > 1 {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "unbalanced partition: sizes {} and {}",
                    side.len(),
                    complement.len()
                ),
            });
        }
        let mut set_a: Vec<usize> = side.to_vec();
        let mut set_b = complement;
        set_a.sort_unstable();
        set_b.sort_unstable();
        if set_b.contains(&0) {
            std::mem::swap(&mut set_a, &mut set_b);
        }
        Ok(Self { set_a, set_b })
    }

    pub fn set_a(&self) -> &[usize] {
        &self.set_a
    }

    pub fn set_b(&self) -> &[usize] {
        &self.set_b
    }
}

/// How a plan's partitions were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    Exhaustive,
    Sampled,
}

/// A deduplicated list of partitions to aggregate over.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub partitions: Vec<Partition>,
    pub mode: PlanMode,
    pub seed: u64,
    pub cap: usize,
}

impl PartitionPlan {
    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }
}

/// Number of distinct canonical balanced partitions of m columns.
pub fn partition_count(m: usize) -> u128 {
    if m < 2 {
        return 0;
    }
    if m % 2 == 0 {
        binomial(m - 1, m / 2 - 1)
    } else {
        binomial(m - 1, m / 2) + binomial(m - 1, m / 2 - 1)
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 0..k {
        result = result * (n - i) as u128 / (i + 1) as u128;
    }
    result
}

/// Every canonical balanced partition, or [`Error::ExceedsCap`] when the
/// count is above `cap` (the caller should sample instead).
pub fn enumerate_balanced_partitions(m: usize, cap: usize) -> Result<PartitionPlan> {
    if m < 2 {
        return Err(Error::InvalidConfig {
            reason: format!("cannot partition {m} columns"),
        });
    }
    let total = partition_count(m);
    if total > cap as u128 {
        return Err(Error::ExceedsCap { count: total, cap });
    }
    let mut partitions = Vec::with_capacity(total as usize);
    // Column 0 is pinned to set_a; choose its companions from 1..m.
    let mut companion_sizes = vec![m / 2 - 1];
    if m % 2 == 1 {
        companion_sizes.push(m / 2); // set_a may hold the larger half too
    }
    for &size in &companion_sizes {
        let mut chosen: Vec<usize> = Vec::with_capacity(size);
        emit_combinations(1, m, size, &mut chosen, &mut |combo| {
            let mut side = vec![0];
            side.extend_from_slice(combo);
            partitions.push(Partition::new(m, &side).expect("canonical by construction"));
        });
    }
    debug_assert_eq!(partitions.len() as u128, total);
    Ok(PartitionPlan {
        partitions,
        mode: PlanMode::Exhaustive,
        seed: 0,
        cap,
    })
}

fn emit_combinations(
    start: usize,
    end: usize,
    remaining: usize,
    chosen: &mut Vec<usize>,
    emit: &mut impl FnMut(&[usize]),
) {
    if remaining == 0 {
        emit(chosen);
        return;
    }
    for next in start..=(end - remaining) {
        chosen.push(next);
        emit_combinations(next + 1, end, remaining - 1, chosen, emit);
        chosen.pop();
    }
}

/// Draw `k` distinct canonical partitions uniformly without replacement.
pub fn sample_partitions(m: usize, k: usize, seed: u64) -> Result<PartitionPlan> {
    if k == 0 {
        return Err(Error::InvalidConfig {
            reason: "cannot sample zero partitions".into(),
        });
    }
    let total = partition_count(m);
    if (k as u128) > total {
        return Err(Error::KTooLarge { k, total });
    }
    let mut rng = task_rng(seed, &[0x70bb]);

    // Small spaces: enumerate and shuffle, exactly uniform with no rejection.
    if total <= 4096 {
        let mut all = enumerate_balanced_partitions(m, 4096)?.partitions;
        all.shuffle(&mut rng);
        all.truncate(k);
        return Ok(PartitionPlan {
            partitions: all,
            mode: PlanMode::Sampled,
            seed,
            cap: DEFAULT_PARTITION_CAP,
        });
    }

    // Large spaces: draw uniform canonical partitions, rejecting repeats.
    let larger_side = binomial(m - 1, m / 2);
    let mut seen: HashSet<Partition> = HashSet::with_capacity(k);
    let mut partitions = Vec::with_capacity(k);
    let mut others: Vec<usize> = (1..m).collect();
    while partitions.len() < k {
        let companions = if m % 2 == 0 {
            m / 2 - 1
        } else {
            // Odd m: pick the size class proportional to its share of partitions.
            let p_large = larger_side as f64 / total as f64;
            if rng.gen::<f64>() < p_large {
                m / 2
            } else {
                m / 2 - 1
            }
        };
        others.shuffle(&mut rng);
        let mut side = vec![0];
        side.extend_from_slice(&others[..companions]);
        let partition = Partition::new(m, &side)?;
        if seen.insert(partition.clone()) {
            partitions.push(partition);
        }
    }
    Ok(PartitionPlan {
        partitions,
        mode: PlanMode::Sampled,
        seed,
        cap: DEFAULT_PARTITION_CAP,
    })
}

/// Paired split-half scores and their correlation.
#[derive(Debug, Clone)]
pub struct SplitScores {
    pub half_a: LatentScores,
    pub half_b: LatentScores,
    pub correlation: f64,
    pub warnings: Vec<Warning>,
}

/// Score both halves of a partition and correlate them.
///
/// Both halves are oriented against the full-indicator scores rather than
/// against each other, so a genuinely negative split correlation surfaces as
/// [`Error::NegativeSplitCorrelation`] instead of being silently sign-fixed.
pub fn split_scores(
    w: &IndicatorMatrix,
    partition: &Partition,
    method: Method,
    em: &EmConfig,
) -> Result<SplitScores> {
    let reference = score_with(w, method, em)?;
    split_scores_with_reference(w, partition, method, em, &reference)
}

/// As [`split_scores`], reusing precomputed full-indicator scores.
pub fn split_scores_with_reference(
    w: &IndicatorMatrix,
    partition: &Partition,
    method: Method,
    em: &EmConfig,
    reference: &LatentScores,
) -> Result<SplitScores> {
    let mut half_a = score_with(&w.select_columns(partition.set_a()), method, em)?;
    let mut half_b = score_with(&w.select_columns(partition.set_b()), method, em)?;
    for half in [&mut half_a, &mut half_b] {
        if crate::measurement::orient_nonnegative(&mut half.scores, &reference.scores) {
            half.orientation_reference = "full_indicator_scores".to_string();
        }
    }
    let correlation = pearson_slice(&half_a.scores, &half_b.scores)?;
    if correlation <= 0.0 {
        return Err(Error::NegativeSplitCorrelation { cor: correlation });
    }
    let mut warnings = Vec::new();
    if correlation < WEAK_SPLIT_THRESHOLD {
        warnings.push(Warning::WeakSplit {
            partition: 0,
            correlation,
        });
    }
    Ok(SplitScores {
        half_a,
        half_b,
        correlation,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::task_rng;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand_distr::{Distribution, Normal};

    fn plan_sets(plan: &PartitionPlan) -> Vec<(Vec<usize>, Vec<usize>)> {
        plan.partitions
            .iter()
            .map(|p| (p.set_a().to_vec(), p.set_b().to_vec()))
            .collect()
    }

    #[test]
    fn enumerate_m4() {
        let plan = enumerate_balanced_partitions(4, 100).unwrap();
        let sets = plan_sets(&plan);
        assert_eq!(
            sets,
            vec![
                (vec![0, 1], vec![2, 3]),
                (vec![0, 2], vec![1, 3]),
                (vec![0, 3], vec![1, 2]),
            ]
        );
    }

    #[test]
    fn enumerate_m5_and_m2() {
        let plan = enumerate_balanced_partitions(5, 100).unwrap();
        assert_eq!(plan.len(), 10);
        for p in &plan.partitions {
            assert!(p.set_a().contains(&0));
            assert_eq!(p.set_a().len() + p.set_b().len(), 5);
            assert!(p.set_a().len().abs_diff(p.set_b().len()) == 1);
        }
        let m2 = enumerate_balanced_partitions(2, 100).unwrap();
        assert_eq!(plan_sets(&m2), vec![(vec![0], vec![1])]);
    }

    #[test]
    fn counts_match_binomials() {
        // C(M, M/2)/2 for even M, C(M, ⌊M/2⌋) for odd M.
        let expected = |m: usize| -> u128 {
            let c = |n: usize, k: usize| binomial(n, k);
            if m % 2 == 0 {
                c(m, m / 2) / 2
            } else {
                c(m, m / 2)
            }
        };
        for m in 2..=10 {
            assert_eq!(partition_count(m), expected(m), "m = {m}");
            let plan = enumerate_balanced_partitions(m, 100_000).unwrap();
            assert_eq!(plan.len() as u128, expected(m), "m = {m}");
        }
    }

    #[test]
    fn exceeds_cap_signals_sampling() {
        assert!(matches!(
            enumerate_balanced_partitions(30, 1000),
            Err(Error::ExceedsCap { .. })
        ));
    }

    #[test]
    fn even_m_column_appearances_are_balanced() {
        // Canonical form pins column 0 to set_a in every partition; each
        // other column joins it in exactly C(M−2, M/2−2) of them, so all
        // non-anchor columns appear in set_a equally often and every column
        // lands in exactly one side of every partition.
        for m in [4usize, 6, 8] {
            let plan = enumerate_balanced_partitions(m, 100_000).unwrap();
            let expected = binomial(m - 2, m / 2 - 2) as usize;
            for col in 0..m {
                let in_a = plan
                    .partitions
                    .iter()
                    .filter(|p| p.set_a().contains(&col))
                    .count();
                if col == 0 {
                    assert_eq!(in_a, plan.len(), "anchor column, m = {m}");
                } else {
                    assert_eq!(in_a, expected, "m = {m}, col = {col}");
                }
                for p in &plan.partitions {
                    assert!(p.set_a().contains(&col) ^ p.set_b().contains(&col));
                }
            }
        }
    }

    #[test]
    fn sampling_exhausts_small_spaces() {
        let plan = sample_partitions(4, 3, 9).unwrap();
        let mut sets = plan_sets(&plan);
        sets.sort();
        assert_eq!(sets.len(), 3);
        sets.dedup();
        assert_eq!(sets.len(), 3);
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_partitions(30, 16, 42).unwrap();
        let b = sample_partitions(30, 16, 42).unwrap();
        assert_eq!(plan_sets(&a), plan_sets(&b));
        let c = sample_partitions(30, 16, 43).unwrap();
        assert_ne!(plan_sets(&a), plan_sets(&c));
    }

    #[test]
    fn sampling_distinct_and_k_too_large() {
        let plan = sample_partitions(30, 16, 7).unwrap();
        let mut sets = plan_sets(&plan);
        assert_eq!(sets.len(), 16);
        sets.sort();
        sets.dedup();
        assert_eq!(sets.len(), 16);
        assert!(matches!(
            sample_partitions(4, 4, 7),
            Err(Error::KTooLarge { k: 4, total: 3 })
        ));
    }

    #[test]
    fn sampling_uniform_over_hashed_buckets() {
        // Uniformity oracle: bucket sampled partitions by a deterministic hash
        // and compare against the flat expectation with a chi-square bound.
        fn fnv1a(bytes: &[u8]) -> u64 {
            let mut h: u64 = 0xcbf2_9ce4_8422_2325;
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
            h
        }
        let buckets = 64usize;
        let draws = 2000usize;
        let k = 16usize;
        let mut counts = vec![0f64; buckets];
        for seed in 0..draws {
            let plan = sample_partitions(30, k, seed as u64).unwrap();
            for p in &plan.partitions {
                let bytes: Vec<u8> = p.set_a().iter().map(|&j| j as u8).collect();
                counts[(fnv1a(&bytes) % buckets as u64) as usize] += 1.0;
            }
        }
        let expected = (draws * k) as f64 / buckets as f64;
        let chi2: f64 = counts
            .iter()
            .map(|c| (c - expected) * (c - expected) / expected)
            .sum();
        // 99.9th percentile of chi-square with 63 degrees of freedom.
        assert!(chi2 < 103.44, "chi2 = {chi2}");
    }

    #[test]
    fn duplicated_halves_correlate_exactly() {
        let mut rng = task_rng(5, &[0]);
        let dist = Normal::new(0.0, 1.0).unwrap();
        let n = 50;
        let base: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..2).map(|_| dist.sample(&mut rng)).collect())
            .collect();
        // Columns 2..4 duplicate columns 0..2.
        let data = DMatrix::from_fn(n, 4, |i, j| base[i][j % 2]);
        let labels = (0..4).map(|j| format!("c{j}")).collect();
        let w = IndicatorMatrix::from_dense(data, labels).unwrap();
        let partition = Partition::new(4, &[0, 1]).unwrap();
        let split = split_scores(&w, &partition, Method::Sum, &EmConfig::default()).unwrap();
        assert_abs_diff_eq!(split.correlation, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pure_noise_split_is_rejected_or_weak() {
        // With unrelated indicators the split correlation sits at 0 ± 0.01 for
        // n = 10^5; depending on sign this is an error or a weak-split warning.
        let mut rng = task_rng(6, &[0]);
        let dist = Normal::new(0.0, 1.0).unwrap();
        let n = 100_000;
        let data = DMatrix::from_fn(n, 4, |_, _| dist.sample(&mut rng));
        let labels = (0..4).map(|j| format!("c{j}")).collect();
        let w = IndicatorMatrix::from_dense(data, labels).unwrap();
        let partition = Partition::new(4, &[0, 1]).unwrap();
        match split_scores(&w, &partition, Method::Sum, &EmConfig::default()) {
            Err(Error::NegativeSplitCorrelation { cor }) => assert!(cor.abs() < 0.01),
            Ok(split) => {
                assert!(split.correlation < 0.01);
                assert!(split
                    .warnings
                    .iter()
                    .any(|w| matches!(w, Warning::WeakSplit { .. })));
            }
            Err(other) => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn split_correlation_estimates_attenuation_factor() {
        // Continuous indicators x + e with per-half error known exactly:
        // each half of m items has U variance σ²_e / m; the mean split
        // correlation estimates 1/(1+σ²_U).
        let m_per_half = 4;
        let sigma_e2 = 2.0;
        let sigma_u2 = sigma_e2 / m_per_half as f64;
        let target = 1.0 / (1.0 + sigma_u2);
        let n = 10_000;
        let reps = 200;
        let mut total = 0.0;
        for rep in 0..reps {
            let mut rng = task_rng(777, &[rep]);
            let xdist = Normal::new(0.0, 1.0).unwrap();
            let edist = Normal::new(0.0, sigma_e2.sqrt()).unwrap();
            let x: Vec<f64> = (0..n).map(|_| xdist.sample(&mut rng)).collect();
            let data = DMatrix::from_fn(n, 2 * m_per_half, |i, _| x[i] + edist.sample(&mut rng));
            let labels = (0..2 * m_per_half).map(|j| format!("c{j}")).collect();
            let w = IndicatorMatrix::from_dense(data, labels).unwrap();
            let partition = Partition::new(2 * m_per_half, &[0, 1, 2, 3]).unwrap();
            let split =
                split_scores(&w, &partition, Method::Sum, &EmConfig::default()).unwrap();
            total += split.correlation;
        }
        let mean_cor = total / reps as f64;
        assert!(
            (mean_cor - target).abs() < 0.02,
            "mean split correlation {mean_cor} vs {target}"
        );
    }

    #[test]
    fn split_correlation_symmetric_under_side_swap() {
        let mut rng = task_rng(8, &[0]);
        let dist = Normal::new(0.0, 1.0).unwrap();
        let n = 200;
        let x: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let data = DMatrix::from_fn(n, 6, |i, _| x[i] + dist.sample(&mut rng));
        let labels = (0..6).map(|j| format!("c{j}")).collect();
        let w = IndicatorMatrix::from_dense(data, labels).unwrap();
        let forward = Partition::new(6, &[0, 1, 2]).unwrap();
        let swapped = Partition::new(6, &[3, 4, 5]).unwrap();
        // Canonicalization puts column 0's side first in both.
        assert_eq!(forward, swapped);
        let a = split_scores(&w, &forward, Method::Sum, &EmConfig::default()).unwrap();
        let b = split_scores(&w, &swapped, Method::Sum, &EmConfig::default()).unwrap();
        assert_abs_diff_eq!(a.correlation, b.correlation, epsilon = 1e-12);
    }
}
