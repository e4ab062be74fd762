//! Exact and rank-based tests for comparing conditions, plus Cohen's h.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::factorial::ln_factorial;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("proportion {0} outside [0, 1]")]
    Proportion(f64),
}

/// 2x2 counts. Rows are conditions, columns are (outcome present, absent).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        Self { a, b, c, d }
    }

    /// `x1` of `n1` against `x2` of `n2`. `x1 <= n1`, `x2 <= n2`.
    pub fn from_counts(x1: u64, n1: u64, x2: u64, n2: u64) -> Self {
        assert!(x1 <= n1 && x2 <= n2, "count exceeds trials");
        Self::new(x1, n1 - x1, x2, n2 - x2)
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Two-sided Fisher exact p: the total probability of all tables with the
/// observed margins that are no more probable than the observed one.
pub fn fisher_exact(t: ContingencyTable) -> f64 {
    let r1 = t.a + t.b;
    let r2 = t.c + t.d;
    let c1 = t.a + t.c;
    let n = t.total();
    if n == 0 {
        return 1.0;
    }
    let ln_p = |x: u64| ln_choose(r1, x) + ln_choose(r2, c1 - x) - ln_choose(n, c1);
    let observed = ln_p(t.a);
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let p: f64 = (lo..=hi)
        .map(ln_p)
        .filter(|lp| *lp <= observed + 1e-7)
        .map(f64::exp)
        .sum();
    p.min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    pub p: f64,
    /// Exact permutation p rather than the normal approximation.
    pub exact: bool,
}

/// Largest pooled size that gets the exact permutation p.
pub const MWU_EXACT_MAX: usize = 12;

/// Midranks (1-based) of `xs`.
pub fn midranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Mann-Whitney U test with midranks for ties.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let offset = (n1 * (n1 + 1)) as f64 / 2.0;
    let u = ranks[..n1].iter().sum::<f64>() - offset;
    let mean = (n1 * n2) as f64 / 2.0;
    let dev = (u - mean).abs();
    let n = n1 + n2;
    if n <= MWU_EXACT_MAX {
        let (mut hits, mut total) = (0u64, 0u64);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != n1 {
                continue;
            }
            total += 1;
            let r: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
            if ((r - offset) - mean).abs() >= dev - 1e-9 {
                hits += 1;
            }
        }
        return Ok(MannWhitney {
            u,
            p: hits as f64 / total as f64,
            exact: true,
        });
    }
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|v| **v == sorted[i]).count();
        let t = j as f64;
        ties += t * t * t - t;
        i += j;
    }
    let nf = n as f64;
    let var = (n1 * n2) as f64 / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = (dev - 0.5).max(0.0) / var.sqrt();
        erfc(z / std::f64::consts::SQRT_2).min(1.0)
    };
    Ok(MannWhitney { u, p, exact: false })
}

/// Cohen's h from `p1` to `p2`: `2 asin(sqrt p2) - 2 asin(sqrt p1)`.
pub fn cohens_h(p1: f64, p2: f64) -> Result<f64, StatsError> {
    for p in [p1, p2] {
        if !(0.0..=1.0).contains(&p) {
            return Err(StatsError::Proportion(p));
        }
    }
    Ok(2.0 * p2.sqrt().asin() - 2.0 * p1.sqrt().asin())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extreme_ranks_reach_the_minimum_p() {
        let r = mann_whitney_u(&[0.0, 0.0, 0.0], &[5.0, 6.0, 7.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert!((r.p - 0.1).abs() < 1e-12);
        assert!(r.exact);
    }

    #[test]
    fn identical_samples_give_p_one() {
        let r = mann_whitney_u(&[1.0, 2.0, 2.0], &[1.0, 2.0, 2.0]).unwrap();
        assert_eq!(r.p, 1.0);
        assert_eq!(mann_whitney_u(&[], &[1.0]), Err(StatsError::EmptySample));
    }

    #[test]
    fn large_samples_use_the_normal_approximation() {
        let a: Vec<f64> = (0..20).map(|i| (i % 4) as f64).collect();
        let r = mann_whitney_u(&a, &a).unwrap();
        assert!(!r.exact);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn symmetric_tables_give_p_one() {
        assert!((fisher_exact(ContingencyTable::new(3, 3, 3, 3)) - 1.0).abs() < 1e-12);
        assert_eq!(fisher_exact(ContingencyTable::new(0, 0, 0, 0)), 1.0);
    }

    #[test]
    fn proportions_are_range_checked() {
        assert_eq!(cohens_h(1.2, 0.5), Err(StatsError::Proportion(1.2)));
        assert!((cohens_h(0.0, 1.0).unwrap() - std::f64::consts::PI).abs() < 1e-12);
    }
}
