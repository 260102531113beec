//! Compensated floating point accumulation and small regression helpers.

use std::iter::Sum;
use std::ops::{Add, AddAssign};

/// Kahan-Babuska-Neumaier running sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    pub fn push(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another partial sum in, keeping both compensation terms.
    pub fn merge(&mut self, other: &NeumaierSum) {
        self.push(other.sum);
        self.push(other.comp);
    }
}

impl AddAssign<f64> for NeumaierSum {
    fn add_assign(&mut self, rhs: f64) {
        self.push(rhs);
    }
}

impl Add for NeumaierSum {
    type Output = NeumaierSum;

    fn add(mut self, rhs: NeumaierSum) -> NeumaierSum {
        self.merge(&rhs);
        self
    }
}

impl Sum<f64> for NeumaierSum {
    fn sum<I: Iterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        for x in iter {
            s.push(x);
        }
        s
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().sum::<NeumaierSum>().value()
}

/// Combines partial results pairwise in index order, so the reduction tree
/// depends only on the number of parts.
pub fn tree_reduce<T>(mut parts: Vec<T>, combine: impl Fn(T, T) -> T) -> Option<T> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop()
}

/// Sample mean and unbiased standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Ordinary least-squares fit of `y` against `x`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope from the residual variance.
    pub slope_stderr: f64,
}

impl LinearFit {
    /// `|slope| < z * stderr`, i.e. no trend at `z` standard errors.
    /// A fit with zero residuals only passes with an exactly zero slope.
    pub fn no_trend(&self, z: f64) -> bool {
        self.slope.abs() < z * self.slope_stderr || self.slope == 0.0
    }

    /// `slope < z * stderr`: no significantly positive trend.
    pub fn not_increasing(&self, z: f64) -> bool {
        self.slope < z * self.slope_stderr || self.slope <= 0.0
    }
}

pub fn least_squares(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return None;
    }
    let (mx, _) = mean_std(x);
    let (my, _) = mean_std(y);
    let sxx = compensated_sum(x.iter().map(|a| (a - mx) * (a - mx)));
    if sxx == 0.0 {
        return None;
    }
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = compensated_sum(
        x.iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2)),
    );
    let slope_stderr = (rss / (n - 2) as f64 / sxx).sqrt();
    Some(LinearFit {
        slope,
        intercept,
        slope_stderr,
    })
}
