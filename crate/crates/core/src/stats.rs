//! Two-sample Mann–Whitney U test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stars {
    #[serde(rename = "ns")]
    Ns,
    #[serde(rename = "*")]
    One,
    #[serde(rename = "**")]
    Two,
    #[serde(rename = "***")]
    Three,
    #[serde(rename = "****")]
    Four,
}

impl Stars {
    pub fn from_p(p: f64) -> Stars {
        if p < 1e-4 {
            Stars::Four
        } else if p < 1e-3 {
            Stars::Three
        } else if p < 1e-2 {
            Stars::Two
        } else if p < 0.05 {
            Stars::One
        } else {
            Stars::Ns
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Stars::Ns => "ns",
            Stars::One => "*",
            Stars::Two => "**",
            Stars::Three => "***",
            Stars::Four => "****",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Largest per-sample size for the exact null distribution.
pub const EXACT_LIMIT: usize = 20;

/// Midranks of the pooled sample plus the tie-group sizes.
fn ranks(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut pooled: Vec<(f64, usize)> = a.iter().chain(b).copied().zip(0..).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut rank = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for item in &pooled[i..=j] {
            rank[item.1] = mid;
        }
        if j > i {
            ties.push(j - i + 1);
        }
        i = j + 1;
    }
    (rank, ties)
}

/// Counts of arrangements giving each U for sample sizes `(m, n)`.
fn u_counts(m: usize, n: usize) -> Vec<f64> {
    // f[i][j][u] via rolling over i.
    let max_u = m * n;
    let mut prev: Vec<Vec<f64>> = (0..=n).map(|_| {
        let mut v = vec![0.0; max_u + 1];
        v[0] = 1.0;
        v
    }).collect();
    for i in 1..=m {
        let mut cur: Vec<Vec<f64>> = vec![vec![0.0; max_u + 1]; n + 1];
        cur[0][0] = 1.0;
        for j in 1..=n {
            for u in 0..=i * j {
                let with_i = if u >= j { prev[j][u - j] } else { 0.0 };
                cur[j][u] = with_i + cur[j - 1][u];
            }
        }
        prev = cur;
    }
    prev.swap_remove(n)
}

pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("Mann-Whitney needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::invalid("Mann-Whitney samples contain NaN"));
    }
    let (n1, n2) = (a.len(), b.len());
    let (rank, ties) = ranks(a, b);
    let r1: f64 = rank[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let mean = (n1 * n2) as f64 / 2.0;

    if ties.is_empty() && n1 <= EXACT_LIMIT && n2 <= EXACT_LIMIT {
        let counts = u_counts(n1, n2);
        let total: f64 = counts.iter().sum();
        let k = u.round() as usize;
        let lower: f64 = counts[..=k].iter().sum::<f64>() / total;
        let upper: f64 = counts[k..].iter().sum::<f64>() / total;
        let p = (2.0 * lower.min(upper)).min(1.0);
        return Ok(MannWhitney { u, p_value: p, exact: true });
    }

    let n = (n1 + n2) as f64;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var = (n1 * n2) as f64 / 12.0 * ((n + 1.0) - tie_term);
    if !(var > 0.0) {
        return Ok(MannWhitney { u, p_value: 1.0, exact: false });
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    let p = (2.0 * normal.sf(z)).min(1.0);
    Ok(MannWhitney { u, p_value: p, exact: false })
}
