use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::ExactError;
use crate::walk::{Site, StepDistribution};

/// Deconvolved `f_n` down to this value are rounding noise and are clamped to zero.
pub const NEGATIVITY_CLAMP: f64 = -1e-10;

/// Below this `γ_N` the walk is reported as recurrent.
const RECURRENCE_FLOOR: f64 = 1e-9;

/// Recognized laws with a combinatorial expression for `P{S_{2n} = 0}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ClosedForm {
    /// Nearest-neighbour walk on `Z` with `P{+1} = p`; includes the simple walk.
    Biased1d { p: f64 },
    Simple2,
    Simple3,
}

impl ClosedForm {
    pub fn detect(dist: &StepDistribution) -> Option<Self> {
        let atoms = dist.atoms();
        let probs = dist.probs();
        match dist.dim() {
            1 if atoms == [Site(vec![-1]), Site(vec![1])] => Some(ClosedForm::Biased1d { p: probs[1] }),
            d @ (2 | 3) => {
                let equal = probs.iter().all(|&q| (q - 1.0 / (2 * d) as f64).abs() < 1e-15);
                let units = atoms.len() == 2 * d && atoms.iter().all(|s| s.radius() == 1 && s.0.iter().filter(|&&c| c != 0).count() == 1);
                (equal && units).then_some(if d == 2 { ClosedForm::Simple2 } else { ClosedForm::Simple3 })
            }
            _ => None,
        }
    }

    /// `u_0..=u_horizon`.
    pub fn u_series(self, horizon: usize) -> Vec<f64> {
        let mut u = vec![0.0; horizon + 1];
        u[0] = 1.0;
        // central binomial probability C(2n,n)/4^n, built by its ratio
        let mut central = 1.0;
        match self {
            ClosedForm::Biased1d { p } => {
                let scale = 4.0 * p * (1.0 - p);
                let mut term = 1.0;
                for n in 1..=horizon / 2 {
                    term *= scale * (2 * n - 1) as f64 / (2 * n) as f64;
                    u[2 * n] = term;
                }
            }
            ClosedForm::Simple2 => {
                for n in 1..=horizon / 2 {
                    central *= (2 * n - 1) as f64 / (2 * n) as f64;
                    u[2 * n] = central * central;
                }
            }
            ClosedForm::Simple3 => {
                // Collapsing the trinomial double sum over (j, k) gives
                // u_{2n} = C(2n,n)/4^n · t_n with t_n = 9^{-n} Σ_k C(n,k)² C(2k,k),
                // and t_n obeys n² t_n = (10n²-10n+3)/9 t_{n-1} - (n-1)²/9 t_{n-2}.
                let (mut t_prev, mut t) = (1.0f64, 1.0f64);
                for n in 1..=horizon / 2 {
                    let next = if n == 1 {
                        1.0 / 3.0
                    } else {
                        let nf = n as f64;
                        ((10.0 * nf * nf - 10.0 * nf + 3.0) / 9.0 * t - (nf - 1.0).powi(2) / 9.0 * t_prev) / (nf * nf)
                    };
                    t_prev = t;
                    t = next;
                    central *= (2 * n - 1) as f64 / (2 * n) as f64;
                    u[2 * n] = central * t;
                }
            }
        }
        u
    }
}

/// Bytes needed by the dense return-probability recursion.
pub fn dense_memory(dist: &StepDistribution, horizon: usize) -> Option<usize> {
    let reach = (horizon.div_ceil(2) as u128) * dist.max_radius() as u128;
    let side = 2 * reach + 1;
    let cells = side.checked_pow(dist.dim() as u32)?;
    let bytes = cells.checked_mul(16)?;
    usize::try_from(bytes).ok()
}

/// `u_n = P{S_n = 0}` for `n = 0..=horizon`.
///
/// Uses a closed form when the law is recognized, otherwise the dense
/// n-fold self-convolution restricted to sites that can still return to the
/// origin before the horizon.
pub fn compute_u_series(dist: &StepDistribution, horizon: usize, mem_cap: usize) -> Result<Vec<f64>, ExactError> {
    if let Some(form) = ClosedForm::detect(dist) {
        return Ok(form.u_series(horizon));
    }
    dense_u_series(dist, horizon, mem_cap)
}

/// Dense convolution recursion, ignoring closed forms.
pub fn dense_u_series(dist: &StepDistribution, horizon: usize, mem_cap: usize) -> Result<Vec<f64>, ExactError> {
    let needed = dense_memory(dist, horizon).unwrap_or(usize::MAX);
    if needed > mem_cap {
        return Err(ExactError::MemoryCapExceeded { needed, cap: mem_cap });
    }
    let d = dist.dim();
    let radius = dist.max_radius() as usize;
    let reach = horizon.div_ceil(2) * radius;
    let side = 2 * reach + 1;
    let cells = side.pow(d as u32);
    let strides: Vec<usize> = (0..d).map(|k| side.pow((d - 1 - k) as u32)).collect();
    let center: usize = strides.iter().map(|s| s * reach).sum();
    let offsets: Vec<isize> = dist
        .atoms()
        .iter()
        .map(|a| a.coords().iter().zip(&strides).map(|(&c, &s)| c as isize * s as isize).sum())
        .collect();

    let mut cur = vec![0.0f64; cells];
    let mut next = vec![0.0f64; cells];
    cur[center] = 1.0;
    let mut u = vec![0.0; horizon + 1];
    u[0] = 1.0;
    let mut coord = vec![0i64; d];
    for k in 1..=horizon {
        let prev_r = (k - 1).min(horizon + 1 - k) * radius;
        let prev_r = prev_r.min(reach) as i64;
        let r = ((k.min(horizon - k)) * radius).min(reach) as i64;
        next.iter_mut().for_each(|x| *x = 0.0);
        // odometer over the previous active box [-prev_r, prev_r]^d
        coord.iter_mut().for_each(|c| *c = -prev_r);
        'cells: loop {
            let idx = coord.iter().zip(&strides).map(|(&c, &s)| (c + reach as i64) as usize * s).sum::<usize>();
            let mass = cur[idx];
            if mass != 0.0 {
                for ((atom, &off), &p) in dist.atoms().iter().zip(&offsets).zip(dist.probs()) {
                    let inside = coord.iter().zip(atom.coords()).all(|(&c, &a)| (c + a).abs() <= r);
                    if inside {
                        next[(idx as isize + off) as usize] += p * mass;
                    }
                }
            }
            let mut axis = d;
            loop {
                if axis == 0 {
                    break 'cells;
                }
                axis -= 1;
                if coord[axis] < prev_r {
                    coord[axis] += 1;
                    continue 'cells;
                }
                coord[axis] = -prev_r;
            }
        }
        std::mem::swap(&mut cur, &mut next);
        u[k] = cur[center];
    }
    Ok(u)
}

/// Exact `u_n` for a one-dimensional law given with rational weights.
pub fn compute_u_series_exact(dist: &StepDistribution, horizon: usize) -> Result<Vec<BigRational>, ExactError> {
    let probs = dist.exact_probs().ok_or(ExactError::ExactModeUnavailable)?;
    if dist.dim() != 1 {
        return Err(ExactError::ExactModeUnavailable);
    }
    let reach = (horizon as i64) * dist.max_radius();
    let width = (2 * reach + 1) as usize;
    let mut cur = vec![BigRational::zero(); width];
    cur[reach as usize] = BigRational::one();
    let mut u = vec![BigRational::one()];
    for _ in 0..horizon {
        let mut next = vec![BigRational::zero(); width];
        for (x, mass) in cur.iter().enumerate().filter(|(_, m)| !m.is_zero()) {
            for (atom, p) in dist.atoms().iter().zip(probs) {
                let y = x as i64 + atom.0[0];
                if (0..width as i64).contains(&y) {
                    next[y as usize] += mass * p;
                }
            }
        }
        cur = next;
        u.push(cur[reach as usize].clone());
    }
    Ok(u)
}

/// Deconvolves the renewal identity `u_n = Σ_{k=1}^{n} f_k u_{n-k}`.
/// The result has `f[0] = 0`.
pub fn first_return_series(u: &[f64]) -> Result<Vec<f64>, ExactError> {
    if u.first() != Some(&1.0) {
        return Err(ExactError::InconsistentSeries("u_0 must be 1".into()));
    }
    let mut f = vec![0.0; u.len()];
    for n in 1..u.len() {
        let conv: f64 = (1..n).map(|k| f[k] * u[n - k]).sum();
        let value = u[n] - conv;
        if value < NEGATIVITY_CLAMP {
            return Err(ExactError::NumericalNegativity { n, value });
        }
        f[n] = value.max(0.0);
    }
    Ok(f)
}

pub fn first_return_series_exact(u: &[BigRational]) -> Result<Vec<BigRational>, ExactError> {
    if u.first().map_or(true, |u0| !u0.is_one()) {
        return Err(ExactError::InconsistentSeries("u_0 must be 1".into()));
    }
    let mut f = vec![BigRational::zero(); u.len()];
    for n in 1..u.len() {
        let mut value = u[n].clone();
        for k in 1..n {
            value -= &f[k] * &u[n - k];
        }
        if value.is_negative() {
            return Err(ExactError::NumericalNegativity { n, value: value.to_f64().unwrap_or(f64::NAN) });
        }
        f[n] = value;
    }
    Ok(f)
}

/// `max_n |u_n - Σ_{k=1}^{n} f_k u_{n-k}|` over `n >= 1`.
pub fn renewal_residual(u: &[f64], f: &[f64]) -> f64 {
    (1..u.len().min(f.len()))
        .map(|n| {
            let conv: f64 = (1..=n).map(|k| f[k] * u[n - k]).sum();
            (u[n] - conv).abs()
        })
        .fold(0.0, f64::max)
}

/// Shape assumed for `u_n` beyond the horizon when extrapolating `Σ u_n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailTemplate {
    /// Walks with drift: exponential decay.
    Geometric,
    /// Centered walks: `u_n ~ a n^{-exponent}` with `exponent = rank/2`.
    Power { exponent: f64 },
}

impl TailTemplate {
    pub fn for_distribution(dist: &StepDistribution) -> Self {
        if dist.is_centered() {
            TailTemplate::Power { exponent: dist.covariance_rank() as f64 / 2.0 }
        } else {
            TailTemplate::Geometric
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransienceStatus {
    Transient,
    Recurrent,
    /// The walk never returns (`γ = 1`).
    TrivialTransient,
}

/// Escape-probability summary computed from a finite horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaSummary {
    /// `γ_n = P{τ >= n+1} = 1 - Σ_{k<=n} f_k`, non-increasing.
    pub gamma_n: Vec<f64>,
    /// `min(γ_N, 1/Σ_{n<=N} u_n)`; both terms dominate `γ`.
    pub gamma_upper: f64,
    /// `1/(Σ_{n<=N} u_n + T)` with `T` the template-extrapolated tail of `u`.
    pub gamma_estimate: f64,
    pub error_bound: f64,
    pub tail_u: f64,
    pub template: TailTemplate,
    pub status: TransienceStatus,
}

impl GammaSummary {
    pub fn horizon(&self) -> usize {
        self.gamma_n.len() - 1
    }

    pub fn gamma_at_horizon(&self) -> f64 {
        *self.gamma_n.last().unwrap()
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `Σ_{k>K} k^{-s}` by Euler–Maclaurin, `s > 1`.
fn zeta_tail(s: f64, k: f64) -> f64 {
    k.powf(1.0 - s) / (s - 1.0) - 0.5 * k.powf(-s) + s / 12.0 * k.powf(-s - 1.0)
        - s * (s + 1.0) * (s + 2.0) / 720.0 * k.powf(-s - 3.0)
}

pub fn gamma_summary(f_tau: &[f64], u: &[f64], template: TailTemplate) -> GammaSummary {
    let mut gamma_n = Vec::with_capacity(f_tau.len());
    let mut returned = 0.0;
    for (n, f) in f_tau.iter().enumerate() {
        if n > 0 {
            returned += f;
        }
        gamma_n.push(1.0 - returned);
    }
    let horizon = u.len() - 1;
    let gamma_last = gamma_n[horizon.min(gamma_n.len() - 1)];
    let partial: f64 = u.iter().sum();
    let gamma_upper = gamma_last.min(1.0 / partial);

    let period = (1..=horizon).filter(|&n| u[n] > 0.0).fold(0, gcd);
    let mut summary = GammaSummary {
        gamma_n,
        gamma_upper,
        gamma_estimate: gamma_upper,
        error_bound: 0.0,
        tail_u: 0.0,
        template,
        status: TransienceStatus::Transient,
    };
    if period == 0 || 1.0 - gamma_last < 1e-12 {
        summary.status = TransienceStatus::TrivialTransient;
        summary.gamma_estimate = 1.0;
        summary.gamma_upper = 1.0;
        return summary;
    }
    if gamma_last < RECURRENCE_FLOOR {
        summary.status = TransienceStatus::Recurrent;
        summary.gamma_estimate = 0.0;
        summary.error_bound = gamma_upper;
        return summary;
    }

    let last = horizon / period * period;
    let prev = last.saturating_sub(period);
    let rounding = 1e-15 * horizon as f64;
    match template {
        TailTemplate::Power { exponent } if exponent <= 1.0 => {
            summary.status = TransienceStatus::Recurrent;
            summary.gamma_estimate = 0.0;
            summary.error_bound = gamma_upper;
        }
        TailTemplate::Power { exponent: s } => {
            let nb = last as f64;
            let ub = u[last];
            let k = (last / period) as f64;
            let p = period as f64;
            let one_term = ub * nb.powf(s) * p.powf(-s) * zeta_tail(s, k);
            let mid = (last / 2) / period * period;
            let two_term = if mid >= period && u[mid] > 0.0 {
                let na = mid as f64;
                let ratio = ub * nb.powf(s) / (u[mid] * na.powf(s));
                let b = (1.0 - ratio) / (ratio / na - 1.0 / nb);
                let a = ub * nb.powf(s) / (1.0 + b / nb);
                a * p.powf(-s) * (zeta_tail(s, k) + b / p * zeta_tail(s + 1.0, k))
            } else {
                one_term
            };
            let est = 1.0 / (partial + two_term);
            let alt = 1.0 / (partial + one_term);
            summary.tail_u = two_term;
            summary.gamma_estimate = est.min(gamma_upper);
            summary.error_bound = (est - alt).abs() + rounding;
        }
        TailTemplate::Geometric => {
            let ratio = if prev > 0 && u[prev] > 0.0 { u[last] / u[prev] } else { 0.0 };
            let tail = if ratio.is_finite() && ratio < 1.0 { u[last] * ratio / (1.0 - ratio) } else { f64::INFINITY };
            if tail.is_finite() {
                let est = 1.0 / (partial + tail);
                summary.tail_u = tail;
                summary.gamma_estimate = est.min(gamma_upper);
                summary.error_bound = (1.0 / partial - est).abs() + rounding;
            } else {
                summary.error_bound = gamma_upper;
            }
        }
    }
    summary
}

/// Return probabilities, first-return law and escape summary up to a horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnSeries {
    pub u: Vec<f64>,
    /// `f_tau[n] = P{τ = n}`, `f_tau[0] = 0`.
    pub f_tau: Vec<f64>,
    pub gamma: GammaSummary,
}

impl ReturnSeries {
    pub fn compute(dist: &StepDistribution, horizon: usize, mem_cap: usize) -> Result<Self, ExactError> {
        let u = compute_u_series(dist, horizon, mem_cap)?;
        Self::from_u(u, TailTemplate::for_distribution(dist))
    }

    pub fn from_u(u: Vec<f64>, template: TailTemplate) -> Result<Self, ExactError> {
        let f_tau = first_return_series(&u)?;
        let gamma = gamma_summary(&f_tau, &u, template);
        Ok(ReturnSeries { u, f_tau, gamma })
    }

    pub fn horizon(&self) -> usize {
        self.u.len() - 1
    }

    pub fn gamma_n(&self) -> &[f64] {
        &self.gamma.gamma_n
    }
}
