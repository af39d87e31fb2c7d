//! Mann–Whitney rank-sum test.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumOutcome {
    /// U statistic of the first sample.
    pub u: f64,
    pub z: f64,
    /// Two-sided p-value from the normal approximation.
    pub p_value: f64,
}

/// Midranks (1-based) of the pooled sample, ties sharing their average rank.
fn pooled_ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    (ranks, tie_term)
}

fn u_statistic(a: &[f64], b: &[f64]) -> (f64, f64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, tie_term) = pooled_ranks(&pooled);
    let rank_sum: f64 = ranks[..a.len()].iter().sum();
    let n = a.len() as f64;
    (rank_sum - n * (n + 1.0) / 2.0, tie_term)
}

/// Two-sided Mann–Whitney U test, normal approximation with the tie
/// correction to the variance and no continuity correction. When every
/// value in both samples is identical the p-value is 1.
pub fn rank_sum_test(a: &[f64], b: &[f64]) -> Result<RankSumOutcome> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument(
            "rank-sum test needs two non-empty samples".into(),
        ));
    }
    let (u, tie_term) = u_statistic(a, b);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let total = n1 + n2;
    let mean = n1 * n2 / 2.0;
    let variance = n1 * n2 / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    if variance <= 0.0 {
        return Ok(RankSumOutcome {
            u,
            z: 0.0,
            p_value: 1.0,
        });
    }
    let z = (u - mean) / variance.sqrt();
    let p_value = erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0);
    Ok(RankSumOutcome { u, z, p_value })
}

/// Exact two-sided p-value for tie-free samples, from the null
/// distribution of U counted over all rank arrangements.
pub fn exact_rank_sum_p(a: &[f64], b: &[f64]) -> Result<f64> {
    let (u, tie_term) = u_statistic(a, b);
    if tie_term != 0.0 {
        return Err(Error::InvalidArgument(
            "exact rank-sum p-value needs tie-free samples".into(),
        ));
    }
    let (n1, n2) = (a.len(), b.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidArgument(
            "rank-sum test needs two non-empty samples".into(),
        ));
    }
    // counts[i][j][u]: arrangements of i first-sample and j second-sample
    // items with statistic u
    let max_u = n1 * n2;
    let mut counts = vec![vec![vec![0f64; max_u + 1]; n2 + 1]; n1 + 1];
    for j in 0..=n2 {
        counts[0][j][0] = 1.0;
    }
    for i in 1..=n1 {
        counts[i][0][0] = 1.0;
        for j in 1..=n2 {
            for s in 0..=i * j {
                // largest item from the first sample beats all j others
                let from_first = if s >= j { counts[i - 1][j][s - j] } else { 0.0 };
                let from_second = counts[i][j - 1][s];
                counts[i][j][s] = from_first + from_second;
            }
        }
    }
    let dist = &counts[n1][n2];
    let total: f64 = dist.iter().sum();
    let u = u.round() as usize;
    let lower: f64 = dist[..=u].iter().sum::<f64>() / total;
    let upper: f64 = dist[u..].iter().sum::<f64>() / total;
    Ok((2.0 * lower.min(upper)).min(1.0))
}
