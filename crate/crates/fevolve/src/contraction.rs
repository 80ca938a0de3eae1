//! Strict-contraction fixed-point engine with the geometric a-priori error
//! estimate ||x - x_m|| <= K^m (1-K)^-1 ||x_1 - x_0||.

use serde_json::json;

use crate::error::{Error, Result};

/// Outcome of a fixed-point iteration run.
#[derive(Debug, Clone)]
pub struct ContractionReport {
    /// Contraction ratio used for the bounds.
    pub ratio: f64,
    /// True when the ratio was supplied analytically; estimated ratios carry
    /// no a-priori guarantee.
    pub ratio_supplied: bool,
    pub iterations: usize,
    /// ||x_{k+1} - x_k|| per iteration.
    pub increment_norms: Vec<f64>,
    /// K^m (1-K)^-1 ||x_1 - x_0|| for m = 0..iterations.
    pub apriori_bounds: Vec<f64>,
    pub converged: bool,
    /// Last increment norm observed.
    pub final_residual: f64,
}

impl ContractionReport {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "ratio": self.ratio,
            "ratio_supplied": self.ratio_supplied,
            "iterations": self.iterations,
            "increment_norms": self.increment_norms,
            "apriori_bounds": self.apriori_bounds,
            "converged": self.converged,
            "final_residual": self.final_residual,
        })
    }

    /// CSV rows (iter, increment, apriori_bound).
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "iter,increment,apriori_bound")?;
        for (k, inc) in self.increment_norms.iter().enumerate() {
            let bound = self
                .apriori_bounds
                .get(k)
                .copied()
                .unwrap_or(f64::INFINITY);
            writeln!(w, "{k},{inc:.12e},{bound:.12e}")?;
        }
        Ok(())
    }
}

/// Exact evaluation of the remark's estimate K^m (1-K)^-1 d.
pub fn contraction_error_bound(k: f64, m: usize, first_increment: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&k) {
        return Err(Error::InvalidRatio(k));
    }
    Ok(k.powi(m as i32) / (1.0 - k) * first_increment)
}

/// Iterate x_{n+1} = T(x_n) until the increment drops below
/// tol * max(1, ||x_n||). `inspect` sees each new iterate (for ball
/// confinement checks) and may abort the run with an error.
///
/// With no `k_hint` the ratio is estimated as the largest observed increment
/// ratio; three consecutive ratios above 1 + 1e-6 abort with
/// `DivergenceDetected`.
pub fn fixed_point_iterate<X, T, D, N, I>(
    map: T,
    x0: X,
    norm_diff: D,
    norm: N,
    k_hint: Option<f64>,
    tol: f64,
    max_iter: usize,
    mut inspect: I,
) -> Result<(X, ContractionReport)>
where
    X: Clone,
    T: Fn(&X) -> Result<X>,
    D: Fn(&X, &X) -> f64,
    N: Fn(&X) -> f64,
    I: FnMut(usize, &X) -> Result<()>,
{
    assert!(tol > 0.0, "tolerance must be positive");
    if let Some(k) = k_hint {
        if !(0.0..1.0).contains(&k) {
            return Err(Error::InvalidRatio(k));
        }
    }
    let mut x = x0;
    inspect(0, &x)?;
    let mut increments: Vec<f64> = Vec::new();
    let mut max_ratio = 0.0f64;
    let mut bad_streak = 0usize;
    let mut last_ratio = 0.0f64;
    let mut converged = false;
    let mut iterations = 0usize;
    for k in 0..max_iter {
        let next = map(&x)?;
        let inc = norm_diff(&next, &x);
        if let Some(&prev) = increments.last() {
            if prev > 0.0 {
                let ratio = inc / prev;
                max_ratio = max_ratio.max(ratio);
                last_ratio = ratio;
                if ratio > 1.0 + 1e-6 {
                    bad_streak += 1;
                    if bad_streak >= 3 {
                        return Err(Error::DivergenceDetected {
                            consecutive: bad_streak,
                            ratio,
                        });
                    }
                } else {
                    bad_streak = 0;
                }
            }
        }
        increments.push(inc);
        let scale = norm(&x).max(1.0);
        x = next;
        inspect(k + 1, &x)?;
        iterations = k + 1;
        if inc <= tol * scale {
            converged = true;
            break;
        }
    }
    let _ = last_ratio;
    let ratio_supplied = k_hint.is_some();
    let ratio = k_hint.unwrap_or(max_ratio);
    let first = increments.first().copied().unwrap_or(0.0);
    let apriori_bounds: Vec<f64> = (0..=iterations)
        .map(|m| {
            if ratio < 1.0 {
                ratio.powi(m as i32) / (1.0 - ratio) * first
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let final_residual = increments.last().copied().unwrap_or(0.0);
    Ok((
        x,
        ContractionReport {
            ratio,
            ratio_supplied,
            iterations,
            increment_norms: increments,
            apriori_bounds,
            converged,
            final_residual,
        },
    ))
}
