//! L2-regularized multinomial logistic and linear regression fitted with L-BFGS.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::Deadline;
use crate::task::Targets;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub l2: f64,
    pub max_iter: usize,
    pub tolerance: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams {
            l2: 1e-4,
            max_iter: 500,
            tolerance: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// `d x out` weights.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub classification: bool,
    /// Target standardization for regression (`mean`, `std`).
    pub target_scale: (f64, f64),
}

/// Minimizes `f` with limited-memory BFGS and Armijo backtracking.
///
/// `f` writes the gradient into its second argument and returns the value.
pub fn lbfgs(
    mut f: impl FnMut(&[f64], &mut [f64]) -> f64,
    x0: Vec<f64>,
    max_iter: usize,
    tolerance: f64,
    deadline: &Deadline,
) -> Vec<f64> {
    const MEMORY: usize = 10;
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    for iter in 0..max_iter {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < tolerance {
            break;
        }
        if iter > 0 && deadline.expired() {
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = vec![0.0; s_hist.len()];
        for i in (0..s_hist.len()).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alphas[i] = rho * dot(&s_hist[i], &q);
            q.iter_mut().zip(&y_hist[i]).for_each(|(qv, yv)| *qv -= alphas[i] * yv);
        }
        let gamma = match (s_hist.last(), y_hist.last()) {
            (Some(s), Some(y)) => dot(s, y) / dot(y, y),
            _ => 1.0 / dot(&g, &g).sqrt().max(1e-12),
        };
        q.iter_mut().for_each(|v| *v *= gamma);
        for i in 0..s_hist.len() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &q);
            q.iter_mut().zip(&s_hist[i]).for_each(|(qv, sv)| *qv += (alphas[i] - beta) * sv);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            let scale = 1.0 / dot(&g, &g).sqrt().max(1e-12);
            dir = g.iter().map(|v| -v * scale).collect();
            slope = dot(&g, &dir);
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            let f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                let improvement = fx - f_new;
                if dot(&s, &y) > 1e-12 {
                    s_hist.push(s);
                    y_hist.push(y);
                    if s_hist.len() > MEMORY {
                        s_hist.remove(0);
                        y_hist.remove(0);
                    }
                }
                x.copy_from_slice(&x_new);
                g.copy_from_slice(&g_new);
                fx = f_new;
                accepted = improvement > 1e-14 * fx.abs().max(1.0);
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    x
}

impl LinearModel {
    pub fn fit(x: &Array2<f64>, targets: &Targets, params: &LinearParams, deadline: &Deadline) -> LinearModel {
        let (n, d) = x.dim();
        let nf = n.max(1) as f64;
        let out = targets.output_dim();
        let (y, classification, target_scale) = match targets {
            Targets::Classes { .. } => (targets.as_prediction(), true, (0.0, 1.0)),
            Targets::Values(v) => {
                let mean = v.iter().sum::<f64>() / nf;
                let std = (v.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / nf).sqrt();
                let std = if std > 1e-12 { std } else { 1.0 };
                let y = Array2::from_shape_fn((n, 1), |(r, _)| (v[r] - mean) / std);
                (y, false, (mean, std))
            }
        };
        let l2 = params.l2;
        let unpack = |theta: &[f64]| {
            let w = Array2::from_shape_vec((d, out), theta[..d * out].to_vec()).unwrap();
            let b = Array1::from_vec(theta[d * out..].to_vec());
            (w, b)
        };
        let objective = |theta: &[f64], grad: &mut [f64]| -> f64 {
            let (w, b) = unpack(theta);
            let mut z = x.dot(&w) + &b;
            let mut value;
            if classification {
                value = 0.0;
                for (mut row, yrow) in z.rows_mut().into_iter().zip(y.rows()) {
                    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                    for (zv, yv) in row.iter_mut().zip(yrow.iter()) {
                        value -= yv * (*zv - lse);
                        *zv = (*zv - lse).exp() - yv;
                    }
                }
                value /= nf;
            } else {
                z -= &y;
                value = 0.5 * z.iter().map(|r| r * r).sum::<f64>() / nf;
            }
            // z now holds d(loss)/d(logits) * n
            let gw = x.t().dot(&z) / nf + &w * l2;
            let gb = z.sum_axis(Axis(0)) / nf;
            value += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
            grad[..d * out].copy_from_slice(gw.as_slice().unwrap());
            grad[d * out..].copy_from_slice(gb.as_slice().unwrap());
            value
        };
        let theta = lbfgs(objective, vec![0.0; d * out + out], params.max_iter, params.tolerance, deadline);
        let (weights, bias) = unpack(&theta);
        LinearModel {
            weights,
            bias,
            classification,
            target_scale,
        }
    }

    pub fn predict(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights) + &self.bias;
        if self.classification {
            for mut row in z.rows_mut() {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                row.mapv_inplace(|v| (v - m).exp());
                let s = row.sum();
                row /= s;
            }
        } else {
            let (mean, std) = self.target_scale;
            z.mapv_inplace(|v| v * std + mean);
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lbfgs_minimizes_rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let x = lbfgs(f, vec![-1.2, 1.0], 1000, 1e-10, &Deadline::unlimited());
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] - 1.0).abs() < 1e-5, "{x:?}");
    }

    #[test]
    fn regression_recovers_linear_function() {
        let x = Array2::from_shape_fn((50, 2), |(i, j)| ((i * (j + 2)) % 11) as f64);
        let y: Vec<f64> = x.rows().into_iter().map(|r| 3.0 * r[0] - 2.0 * r[1] + 1.0).collect();
        let params = LinearParams {
            l2: 0.0,
            ..Default::default()
        };
        let m = LinearModel::fit(&x, &Targets::Values(y.clone()), &params, &Deadline::unlimited());
        let p = m.predict(&x);
        for (pv, yv) in p.column(0).iter().zip(&y) {
            assert!((pv - yv).abs() < 1e-4);
        }
    }
}
