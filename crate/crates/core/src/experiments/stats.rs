/// Count, mean and centred second moment, mergeable across partitions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let (na, nb) = (self.count as f64, other.count as f64);
        let delta = other.mean - self.mean;
        let mean = if delta == 0.0 { self.mean } else { self.mean + delta * nb / count as f64 };
        let m2 = self.m2 + other.m2 + delta * delta * na * nb / count as f64;
        Moments { count, mean, m2 }
    }

    /// Unbiased sample variance; 0 for fewer than two values.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn population_variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        (self.variance() / self.count as f64).sqrt()
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval at 95% for `k` successes out of `n`.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn moments_match_two_pass() {
        let xs = [1.5, 2.0, -0.25, 7.0, 3.5, 3.5];
        let m: Moments = xs.iter().copied().collect();
        let mean = xs.iter().sum::<f64>() / 6.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        assert_relative_eq!(m.mean, mean, max_relative = 1e-15);
        assert_relative_eq!(m.variance(), var, max_relative = 1e-14);
        let a: Moments = xs[..2].iter().copied().collect();
        let b: Moments = xs[2..].iter().copied().collect();
        let ab = a.merge(&b);
        assert_relative_eq!(ab.mean, mean, max_relative = 1e-15);
        assert_relative_eq!(ab.variance(), var, max_relative = 1e-14);
    }

    #[test]
    fn constant_values_have_zero_variance() {
        let m: Moments = std::iter::repeat_n(9.0 / 8.0, 7).collect();
        assert_eq!(m.mean, 9.0 / 8.0);
        assert_eq!(m.variance(), 0.0);
        let merged = m.merge(&m);
        assert_eq!(merged.variance(), 0.0);
        assert_eq!(merged.mean, 9.0 / 8.0);
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(100, 100);
        assert!(hi == 1.0 && lo > 0.96);
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
    }
}
