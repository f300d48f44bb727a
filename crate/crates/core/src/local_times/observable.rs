use std::collections::BTreeSet;
use std::fmt;

use super::LocalTimeError;

/// Set of local-time values selected by an indicator observable.
#[derive(Clone, Debug, PartialEq)]
pub enum IndicatorSet {
    /// `f(j) = 1` for `j` in the set.
    Finite(BTreeSet<u64>),
    /// `f(j) = 1` for every `j >= 1` not in the excluded set.
    CoFinite(BTreeSet<u64>),
}

impl IndicatorSet {
    pub fn contains(&self, j: u64) -> bool {
        match self {
            IndicatorSet::Finite(s) => s.contains(&j),
            IndicatorSet::CoFinite(excluded) => !excluded.contains(&j),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TailRule {
    /// `f(i) = 0` past the table.
    Zero,
    /// `f(i) = f(m)` past the table.
    Last,
    /// `f(i) = f(m) (i/m)^β` with `β` fitted to the last two entries.
    PowerExtrapolation,
}

/// A function `f: Z+ -> R` of the local time, with `f(0) = 0` for every form.
#[derive(Clone, Debug, PartialEq)]
pub enum ObservableF {
    Power { alpha: f64 },
    Indicator(IndicatorSet),
    /// `values[i - 1] = f(i)` for `i = 1..=m`.
    Table { values: Vec<f64>, tail: TailRule },
    /// `f(i) = e^{c i} / i^p`.
    ExpCapped { c: f64, p: f64 },
}

/// Growth class of `f` relative to the geometric decay `(1 - γ)^j` of a
/// site's visit count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrowthClass {
    /// `Σ f(j)² j (1-γ)^j < ∞`: the mean-square and almost-sure limit both apply.
    SquareSummable,
    /// Only `Σ |f(j)| (1-γ)^j < ∞`: the expectation converges, almost-sure
    /// convergence needs the truncation argument.
    MeanSummableOnly,
    /// Neither series converges.
    Divergent,
    Unclassified,
}

impl ObservableF {
    pub fn power(alpha: f64) -> Result<Self, LocalTimeError> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(LocalTimeError::NegativeAlpha(alpha));
        }
        Ok(ObservableF::Power { alpha })
    }

    /// `f(j) = I{j >= k}`; `k = 1` counts visited sites.
    pub fn at_least(k: u64) -> Self {
        ObservableF::Indicator(IndicatorSet::CoFinite((1..k).collect()))
    }

    pub fn exactly(js: impl IntoIterator<Item = u64>) -> Self {
        ObservableF::Indicator(IndicatorSet::Finite(js.into_iter().collect()))
    }

    pub fn eval(&self, i: u64) -> f64 {
        if i == 0 {
            return 0.0;
        }
        match self {
            ObservableF::Power { alpha } => {
                if *alpha == 0.0 {
                    1.0
                } else if *alpha == 1.0 {
                    i as f64
                } else if *alpha == 2.0 {
                    (i as f64) * (i as f64)
                } else {
                    (i as f64).powf(*alpha)
                }
            }
            ObservableF::Indicator(set) => {
                if set.contains(i) {
                    1.0
                } else {
                    0.0
                }
            }
            ObservableF::Table { values, tail } => {
                let m = values.len() as u64;
                if i <= m {
                    return values[(i - 1) as usize];
                }
                match tail {
                    TailRule::Zero => 0.0,
                    TailRule::Last => values.last().copied().unwrap_or(0.0),
                    TailRule::PowerExtrapolation => {
                        let last = values.last().copied().unwrap_or(0.0);
                        match self.tail_exponent() {
                            Some(beta) => last * (i as f64 / m as f64).powf(beta),
                            None => last,
                        }
                    }
                }
            }
            ObservableF::ExpCapped { c, p } => (c * i as f64 - p * (i as f64).ln()).exp(),
        }
    }

    /// Fitted exponent of a power-extrapolated table, when the last two
    /// entries share a sign.
    fn tail_exponent(&self) -> Option<f64> {
        let ObservableF::Table { values, tail: TailRule::PowerExtrapolation } = self else {
            return None;
        };
        let m = values.len();
        if m < 2 {
            return None;
        }
        let (a, b) = (values[m - 2], values[m - 1]);
        if a == 0.0 || b == 0.0 || a.signum() != b.signum() {
            return None;
        }
        let beta = (b / a).ln() / (m as f64 / (m - 1) as f64).ln();
        beta.is_finite().then_some(beta)
    }

    /// Checks `f(i) >= f(i-1)` for `i = 1..=upto` (with `f(0) = 0`).
    pub fn is_non_decreasing_upto(&self, upto: u64) -> bool {
        let mut prev = 0.0;
        for i in 1..=upto {
            let v = self.eval(i);
            if v < prev {
                return false;
            }
            prev = v;
        }
        true
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ObservableF {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservableF::Power { alpha } => write!(f, "power({alpha})"),
            ObservableF::Indicator(IndicatorSet::Finite(s)) => {
                let items: Vec<String> = s.iter().map(u64::to_string).collect();
                write!(f, "indicator({{{}}})", items.join(","))
            }
            ObservableF::Indicator(IndicatorSet::CoFinite(ex)) => {
                let k = ex.len() as u64 + 1;
                if ex.iter().copied().eq(1..k) {
                    write!(f, "indicator(j>={k})")
                } else {
                    let items: Vec<String> = ex.iter().map(u64::to_string).collect();
                    write!(f, "indicator(j>=1,not{{{}}})", items.join(","))
                }
            }
            ObservableF::Table { values, tail } => {
                let tail = match tail {
                    TailRule::Zero => "zero",
                    TailRule::Last => "last",
                    TailRule::PowerExtrapolation => "power",
                };
                write!(f, "table({};{tail})", values.len())
            }
            ObservableF::ExpCapped { c, p } => write!(f, "exp_capped({c},{p})"),
        }
    }
}

fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Classifies `f` against the escape probability `γ ∈ (0,1)`.
pub fn check_condition_f(f: &ObservableF, gamma: f64) -> GrowthClass {
    if !(gamma > 0.0 && gamma < 1.0) {
        return GrowthClass::Unclassified;
    }
    let lambda = -(1.0 - gamma).ln();
    match f {
        ObservableF::Power { alpha } if alpha.is_finite() => GrowthClass::SquareSummable,
        ObservableF::Power { .. } => GrowthClass::Unclassified,
        ObservableF::Indicator(_) => GrowthClass::SquareSummable,
        ObservableF::ExpCapped { c, p } => {
            let square = 2.0 * c < lambda && !nearly_equal(2.0 * c, lambda)
                || nearly_equal(2.0 * c, lambda) && *p > 1.0;
            let mean = *c < lambda && !nearly_equal(*c, lambda) || nearly_equal(*c, lambda) && *p > 1.0;
            if square {
                GrowthClass::SquareSummable
            } else if mean {
                GrowthClass::MeanSummableOnly
            } else {
                GrowthClass::Divergent
            }
        }
        ObservableF::Table { values, tail } => {
            if values.iter().any(|v| !v.is_finite()) {
                return GrowthClass::Unclassified;
            }
            match tail {
                TailRule::Zero | TailRule::Last => GrowthClass::SquareSummable,
                // polynomial envelope; an unfittable exponent degrades to `Last`
                TailRule::PowerExtrapolation => GrowthClass::SquareSummable,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluation_respects_zero_convention() {
        for f in [
            ObservableF::power(0.0).unwrap(),
            ObservableF::at_least(1),
            ObservableF::ExpCapped { c: 0.3, p: 2.0 },
            ObservableF::Table { values: vec![5.0], tail: TailRule::Last },
        ] {
            assert_eq!(f.eval(0), 0.0, "{f}");
        }
        assert_eq!(ObservableF::power(0.5).unwrap().eval(4), 2.0);
        assert_eq!(ObservableF::exactly([2]).eval(2), 1.0);
        assert_eq!(ObservableF::exactly([2]).eval(3), 0.0);
        assert_eq!(ObservableF::at_least(3).eval(2), 0.0);
        assert_eq!(ObservableF::at_least(3).eval(7), 1.0);
        assert!(matches!(ObservableF::power(-1.0), Err(LocalTimeError::NegativeAlpha(_))));
    }

    #[test]
    fn table_tails() {
        let zero = ObservableF::Table { values: vec![1.0, 4.0], tail: TailRule::Zero };
        let last = ObservableF::Table { values: vec![1.0, 4.0], tail: TailRule::Last };
        let pow = ObservableF::Table { values: vec![1.0, 4.0], tail: TailRule::PowerExtrapolation };
        assert_eq!(zero.eval(3), 0.0);
        assert_eq!(last.eval(3), 4.0);
        assert!((pow.eval(3) - 9.0).abs() < 1e-12);
        assert!((pow.eval(10) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn labels() {
        assert_eq!(ObservableF::power(2.0).unwrap().label(), "power(2)");
        assert_eq!(ObservableF::at_least(1).label(), "indicator(j>=1)");
        assert_eq!(ObservableF::exactly([1, 3]).label(), "indicator({1,3})");
    }

    #[test]
    fn growth_classification() {
        let gamma = 1.0 / 3.0;
        let lambda = (1.5f64).ln();
        assert_eq!(check_condition_f(&ObservableF::power(2.0).unwrap(), gamma), GrowthClass::SquareSummable);
        assert_eq!(check_condition_f(&ObservableF::exactly([4]), gamma), GrowthClass::SquareSummable);
        assert_eq!(
            check_condition_f(&ObservableF::ExpCapped { c: lambda, p: 2.5 }, gamma),
            GrowthClass::MeanSummableOnly
        );
        assert_eq!(
            check_condition_f(&ObservableF::ExpCapped { c: 0.4 * lambda, p: 0.0 }, gamma),
            GrowthClass::SquareSummable
        );
        assert_eq!(
            check_condition_f(&ObservableF::ExpCapped { c: 0.5 * lambda, p: 1.5 }, gamma),
            GrowthClass::SquareSummable
        );
        assert_eq!(
            check_condition_f(&ObservableF::ExpCapped { c: 0.5 * lambda, p: 0.5 }, gamma),
            GrowthClass::MeanSummableOnly
        );
        assert_eq!(
            check_condition_f(&ObservableF::ExpCapped { c: lambda, p: 1.0 }, gamma),
            GrowthClass::Divergent
        );
        assert_eq!(
            check_condition_f(&ObservableF::ExpCapped { c: 2.0 * lambda, p: 5.0 }, gamma),
            GrowthClass::Divergent
        );
        assert_eq!(
            check_condition_f(&ObservableF::Table { values: vec![f64::NAN], tail: TailRule::Zero }, gamma),
            GrowthClass::Unclassified
        );
    }

    #[test]
    fn monotonicity_check() {
        assert!(ObservableF::power(2.0).unwrap().is_non_decreasing_upto(50));
        assert!(ObservableF::at_least(1).is_non_decreasing_upto(50));
        assert!(!ObservableF::exactly([1]).is_non_decreasing_upto(5));
    }
}
