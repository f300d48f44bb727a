use std::collections::BTreeMap;

use super::{ExactError, ReturnSeries};
use crate::local_times::ObservableF;

/// First-return mass beyond this point is dropped from the convolution kernel.
const KERNEL_TAIL: f64 = 1e-22;
/// Convolution powers with less total mass than this end the table.
const POWER_MASS_FLOOR: f64 = 1e-22;

/// `E Q_n(j)` for a set of times `n`.
///
/// Built from the renewal decomposition
/// `E Q_n(j) = Σ_s P{τ_1+…+τ_{j-1} = s} · Σ_{a=0}^{n-s} γ_a γ_{n-s-a}`,
/// where the convolution powers of the (defective) first-return law only
/// matter on `[0, n]`.
#[derive(Clone, Debug)]
pub struct ExactQTable {
    /// `rows[n][j-1] = E Q_n(j)`.
    rows: BTreeMap<usize, Vec<f64>>,
}

/// `Γ(m) = Σ_{a=0}^{m} γ_a γ_{m-a}`.
fn gamma_pair_sums(gamma_n: &[f64], upto: usize) -> Vec<f64> {
    (0..=upto).map(|m| (0..=m).map(|a| gamma_n[a] * gamma_n[m - a]).sum()).collect()
}

impl ExactQTable {
    /// Rows for each requested `n`. `j_cap` limits the number of `j` columns
    /// (useful for recurrent walks, where the powers never lose mass).
    pub fn build(series: &ReturnSeries, ns: &[usize], j_cap: Option<usize>) -> Result<Self, ExactError> {
        let horizon = series.horizon();
        let n_max = ns.iter().copied().max().unwrap_or(0);
        if n_max > horizon {
            return Err(ExactError::HorizonExceeded { requested: n_max, horizon });
        }
        let pair = gamma_pair_sums(series.gamma_n(), n_max);

        let f = &series.f_tau[..=n_max];
        let mut suffix = 0.0;
        let mut kernel_len = 0;
        for k in (1..=n_max).rev() {
            if suffix + f[k] > KERNEL_TAIL {
                kernel_len = k;
                break;
            }
            suffix += f[k];
        }
        let kernel = &f[..=kernel_len];

        let mut rows: BTreeMap<usize, Vec<f64>> = ns.iter().map(|&n| (n, Vec::new())).collect();
        let mut power = vec![0.0; n_max + 1];
        power[0] = 1.0;
        let (mut lo, mut hi) = (0usize, 0usize);
        let j_limit = j_cap.unwrap_or(usize::MAX).min(n_max + 1);
        for j in 1..=j_limit {
            for (&n, row) in rows.iter_mut() {
                let value = if lo > n {
                    0.0
                } else {
                    (lo..=hi.min(n)).map(|s| power[s] * pair[n - s]).sum()
                };
                row.push(value);
            }
            if j == j_limit {
                break;
            }
            let mut next = vec![0.0; n_max + 1];
            let mut new_lo = usize::MAX;
            let mut new_hi = 0;
            for s in lo..=hi {
                let w = power[s];
                if w == 0.0 {
                    continue;
                }
                let top = kernel_len.min(n_max - s);
                for k in 1..=top {
                    next[s + k] += w * kernel[k];
                }
                if top >= 1 {
                    new_lo = new_lo.min(s + 1);
                    new_hi = new_hi.max(s + top);
                }
            }
            if new_lo == usize::MAX {
                break;
            }
            power = next;
            lo = new_lo;
            hi = new_hi;
            while lo < hi && power[lo] == 0.0 {
                lo += 1;
            }
            let mass: f64 = power[lo..=hi].iter().sum();
            if mass < POWER_MASS_FLOOR {
                break;
            }
        }
        Ok(ExactQTable { rows })
    }

    /// Rows for every `n` in `0..=horizon`.
    pub fn full(series: &ReturnSeries, horizon: usize, j_cap: Option<usize>) -> Result<Self, ExactError> {
        let ns: Vec<usize> = (0..=horizon).collect();
        Self::build(series, &ns, j_cap)
    }

    pub fn times(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.keys().copied()
    }

    /// `E Q_n(j)` for `j = 1, 2, …` (trailing negligible columns omitted).
    pub fn row(&self, n: usize) -> Option<&[f64]> {
        self.rows.get(&n).map(Vec::as_slice)
    }

    pub fn eq(&self, n: usize, j: usize) -> Result<f64, ExactError> {
        let row = self.rows.get(&n).ok_or(ExactError::HorizonExceeded { requested: n, horizon: self.max_n() })?;
        if j == 0 {
            return Ok(0.0);
        }
        Ok(row.get(j - 1).copied().unwrap_or(0.0))
    }

    fn max_n(&self) -> usize {
        self.rows.keys().next_back().copied().unwrap_or(0)
    }

    /// `E G_n(f) = Σ_j f(j) E Q_n(j)`.
    pub fn expected_g(&self, f: &ObservableF, n: usize) -> Result<f64, ExactError> {
        self.expected_with(n, |j| f.eval(j))
    }

    pub fn expected_with(&self, n: usize, f: impl Fn(u64) -> f64) -> Result<f64, ExactError> {
        let row = self.rows.get(&n).ok_or(ExactError::HorizonExceeded { requested: n, horizon: self.max_n() })?;
        Ok(row.iter().enumerate().map(|(i, q)| f(i as u64 + 1) * q).sum())
    }

    /// `|Σ_j j E Q_n(j) - (n+1)|`.
    pub fn mass_defect(&self, n: usize) -> Option<f64> {
        let row = self.rows.get(&n)?;
        let total: f64 = row.iter().enumerate().map(|(i, q)| (i + 1) as f64 * q).sum();
        Some((total - (n + 1) as f64).abs())
    }
}

/// Single `E Q_n(j)`.
pub fn exact_eq(series: &ReturnSeries, n: usize, j: usize) -> Result<f64, ExactError> {
    ExactQTable::build(series, &[n], Some(j.max(1)))?.eq(n, j)
}

/// Single `E G_n(f)`.
pub fn exact_eg(series: &ReturnSeries, f: &ObservableF, n: usize) -> Result<f64, ExactError> {
    ExactQTable::build(series, &[n], None)?.expected_g(f, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::{validate_distribution, Probability, Site, StepDistribution};

    fn biased_series(h: usize) -> ReturnSeries {
        ReturnSeries::compute(&StepDistribution::biased1d(Probability::ratio(2, 3)).unwrap(), h, usize::MAX).unwrap()
    }

    #[test]
    fn two_step_values() {
        let s = biased_series(20);
        assert!((exact_eq(&s, 2, 1).unwrap() - 19.0 / 9.0).abs() < 1e-14);
        assert!((exact_eq(&s, 2, 2).unwrap() - 4.0 / 9.0).abs() < 1e-14);
        assert_eq!(exact_eq(&s, 2, 3).unwrap(), 0.0);
        assert!((exact_eg(&s, &ObservableF::power(0.0).unwrap(), 2).unwrap() - 23.0 / 9.0).abs() < 1e-14);
        assert!((exact_eg(&s, &ObservableF::exactly([2]), 2).unwrap() - 4.0 / 9.0).abs() < 1e-14);
        assert!(matches!(exact_eq(&s, 21, 1), Err(ExactError::HorizonExceeded { .. })));
    }

    #[test]
    fn total_visits_are_conserved() {
        let s = biased_series(300);
        let t = ExactQTable::full(&s, 300, None).unwrap();
        for n in 0..=300 {
            assert!(t.mass_defect(n).unwrap() < 1e-9, "n={n}");
        }
        let one = ObservableF::power(1.0).unwrap();
        assert!((t.expected_g(&one, 300).unwrap() - 301.0).abs() < 1e-9);
    }

    #[test]
    fn lazy_walk_can_revisit_in_place() {
        // a zero step allows a site to be visited n+1 times
        let d = validate_distribution(
            &[(Site(vec![0]), Probability::ratio(1, 2)), (Site(vec![1]), Probability::ratio(1, 2))],
            1,
        )
        .unwrap();
        let s = ReturnSeries::compute(&d, 5, usize::MAX).unwrap();
        let t = ExactQTable::full(&s, 5, None).unwrap();
        assert!((t.eq(5, 6).unwrap() - 1.0 / 32.0).abs() < 1e-15);
        assert!(t.mass_defect(5).unwrap() < 1e-12);
    }
}
