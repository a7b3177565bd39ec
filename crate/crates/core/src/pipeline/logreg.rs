//! L1-penalized logistic regression.
//!
//! Minimizes `Σ log-loss + λ‖β‖₁` with `λ = 1/C` and an unpenalized intercept.
//! Each outer step builds the Newton quadratic model of the log-loss, solves
//! the penalized quadratic by cyclic coordinate descent and backtracks along
//! the resulting direction. Convergence is judged by the KKT residual.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    pub features: Vec<String>,
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub c: f64,
    pub iterations: usize,
    /// KKT residual at the returned solution.
    pub kkt: f64,
}

impl LogRegModel {
    pub fn logit(&self, x: ArrayView1<f64>) -> f64 {
        self.intercept + x.iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|r| sigmoid(self.logit(r)))
            .collect()
    }

    pub fn nonzero(&self) -> usize {
        self.coef.iter().filter(|b| **b != 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Inverse penalty strength.
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            c: 1.0,
            tol: 1e-6,
            max_iter: 200,
        }
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

struct Problem {
    /// Column-major copy of the design matrix.
    cols: Vec<Vec<f64>>,
    y: Vec<f64>,
    lambda: f64,
}

impl Problem {
    fn eta(&self, b0: f64, beta: &[f64]) -> Vec<f64> {
        let mut eta = vec![b0; self.y.len()];
        for (col, b) in self.cols.iter().zip(beta) {
            if *b != 0.0 {
                for (e, x) in eta.iter_mut().zip(col) {
                    *e += b * x;
                }
            }
        }
        eta
    }

    fn objective(&self, b0: f64, beta: &[f64]) -> f64 {
        let loss: f64 = self
            .eta(b0, beta)
            .iter()
            .zip(&self.y)
            .map(|(e, y)| softplus(*e) - y * e)
            .sum();
        loss + self.lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Gradient of the summed log-loss, intercept first.
    fn gradient(&self, p: &[f64]) -> (f64, Vec<f64>) {
        let resid: Vec<f64> = p.iter().zip(&self.y).map(|(p, y)| p - y).collect();
        let g0 = resid.iter().sum();
        let g = self
            .cols
            .iter()
            .map(|c| c.iter().zip(&resid).map(|(x, r)| x * r).sum())
            .collect();
        (g0, g)
    }
}

fn kkt_from_gradient(g0: f64, g: &[f64], beta: &[f64], lambda: f64) -> f64 {
    g.iter().zip(beta).fold(g0.abs(), |acc, (gj, bj)| {
        let r = if *bj == 0.0 {
            (gj.abs() - lambda).max(0.0)
        } else {
            (gj + lambda * bj.signum()).abs()
        };
        acc.max(r)
    })
}

/// Largest KKT violation of `(b0, beta)` for penalty `lambda`.
pub fn kkt_residual(x: ArrayView2<f64>, y: &[bool], b0: f64, beta: &[f64], lambda: f64) -> f64 {
    let p = problem(x, y, lambda);
    let prob: Vec<f64> = p.eta(b0, beta).into_iter().map(sigmoid).collect();
    let (g0, g) = p.gradient(&prob);
    kkt_from_gradient(g0, &g, beta, lambda)
}

fn problem(x: ArrayView2<f64>, y: &[bool], lambda: f64) -> Problem {
    Problem {
        cols: x.columns().into_iter().map(|c| c.to_vec()).collect(),
        y: y.iter().map(|v| *v as u8 as f64).collect(),
        lambda,
    }
}

/// Penalized Newton direction `(d0, d)` by coordinate descent on the
/// quadratic model. Returns the direction and `X d + d0`.
fn newton_direction(
    pb: &Problem,
    w: &[f64],
    g0: f64,
    g: &[f64],
    beta: &[f64],
    inner_tol: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let n = w.len();
    let h00: f64 = w.iter().sum();
    let hjj: Vec<f64> = pb
        .cols
        .iter()
        .map(|c| c.iter().zip(w).map(|(x, w)| w * x * x).sum())
        .collect();
    let mut d0 = 0.0;
    let mut d = vec![0.0; beta.len()];
    let mut r = vec![0.0; n];
    for _ in 0..10_000 {
        let mut max_step: f64 = 0.0;
        if h00 > 0.0 {
            let grad = g0 + w.iter().zip(&r).map(|(w, r)| w * r).sum::<f64>();
            let delta = -grad / h00;
            d0 += delta;
            r.iter_mut().for_each(|ri| *ri += delta);
            max_step = max_step.max(delta.abs() * h00.sqrt());
        }
        for j in 0..beta.len() {
            if hjj[j] <= 0.0 {
                continue;
            }
            let col = &pb.cols[j];
            let grad = g[j]
                + col
                    .iter()
                    .zip(w)
                    .zip(&r)
                    .map(|((x, w), r)| x * w * r)
                    .sum::<f64>();
            let cur = beta[j] + d[j];
            let new = soft_threshold(cur - grad / hjj[j], pb.lambda / hjj[j]);
            let delta = new - cur;
            if delta != 0.0 {
                d[j] += delta;
                for (ri, x) in r.iter_mut().zip(col) {
                    *ri += delta * x;
                }
                max_step = max_step.max(delta.abs() * hjj[j].sqrt());
            }
        }
        if max_step <= inner_tol {
            break;
        }
    }
    (d0, d, r)
}

/// Fit on rows of `x` (expected column-standardized).
pub fn fit_l1_logreg(
    x: ArrayView2<f64>,
    y: &[bool],
    features: &[String],
    opts: &FitOptions,
) -> Result<LogRegModel> {
    if x.nrows() != y.len() || x.ncols() != features.len() {
        return Err(Error::InvalidArgument(format!(
            "logreg: {}x{} design, {} labels, {} names",
            x.nrows(),
            x.ncols(),
            y.len(),
            features.len()
        )));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    if !(opts.c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "C must be positive, got {}",
            opts.c
        )));
    }
    let npos = y.iter().filter(|v| **v).count();
    if npos == 0 || npos == y.len() {
        return Err(Error::InsufficientData(
            "logistic regression needs both classes".into(),
        ));
    }
    let pb = problem(x, y, 1.0 / opts.c);
    let rate = npos as f64 / y.len() as f64;
    let mut b0 = (rate / (1.0 - rate)).ln();
    let mut beta = vec![0.0; x.ncols()];
    let mut residual = f64::INFINITY;

    for it in 0..=opts.max_iter {
        let eta = pb.eta(b0, &beta);
        let p: Vec<f64> = eta.iter().map(|e| sigmoid(*e)).collect();
        let (g0, g) = pb.gradient(&p);
        residual = kkt_from_gradient(g0, &g, &beta, pb.lambda);
        if residual <= opts.tol {
            return Ok(LogRegModel {
                features: features.to_vec(),
                intercept: b0,
                coef: beta,
                c: opts.c,
                iterations: it,
                kkt: residual,
            });
        }
        if it == opts.max_iter {
            break;
        }
        let w: Vec<f64> = p.iter().map(|p| p * (1.0 - p)).collect();
        let inner_tol = (0.01 * residual).clamp(1e-13, 1e-3);
        let (d0, d, _) = newton_direction(&pb, &w, g0, &g, &beta, inner_tol);

        let f0 = pb.objective(b0, &beta);
        let l1 = |b: &[f64]| b.iter().map(|v| v.abs()).sum::<f64>();
        let trial: Vec<f64> = beta.iter().zip(&d).map(|(b, d)| b + d).collect();
        let decrease = g0 * d0
            + g.iter().zip(&d).map(|(g, d)| g * d).sum::<f64>()
            + pb.lambda * (l1(&trial) - l1(&beta));
        // near the optimum the decrease drops below the rounding of f
        let slack = 1e-12 * f0.abs().max(1.0);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = beta.iter().zip(&d).map(|(b, d)| b + t * d).collect();
            let f = pb.objective(b0 + t * d0, &cand);
            if f <= f0 + 1e-4 * t * decrease.min(0.0) + slack || t < 1e-10 {
                b0 += t * d0;
                // snap tiny coordinates produced by a partial step
                beta = cand
                    .into_iter()
                    .zip(&trial)
                    .map(|(c, tr)| if *tr == 0.0 { 0.0 } else { c })
                    .collect();
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("x{j}")).collect()
    }

    #[test]
    fn heavy_penalty_gives_base_rate() {
        let x = Array2::from_shape_fn((20, 3), |(i, j)| ((i * 3 + j * 5) % 7) as f64 - 3.0);
        let y: Vec<bool> = (0..20).map(|i| i % 4 == 0).collect();
        let m = fit_l1_logreg(
            x.view(),
            &y,
            &names(3),
            &FitOptions {
                c: 1e-6,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(m.coef.iter().all(|b| *b == 0.0));
        assert!((m.intercept - (0.25f64 / 0.75).ln()).abs() < 1e-9);
    }

    #[test]
    fn informative_feature_only() {
        // x0 separates the classes, x1 is balanced noise
        let x = Array2::from_shape_fn((40, 2), |(i, j)| {
            if j == 0 {
                if i < 20 {
                    -1.0 - (i % 5) as f64 * 0.1
                } else {
                    1.0 + (i % 5) as f64 * 0.1
                }
            } else {
                [1.0, -1.0, -1.0, 1.0][i % 4]
            }
        });
        let y: Vec<bool> = (0..40).map(|i| i >= 20).collect();
        let m = fit_l1_logreg(x.view(), &y, &names(2), &FitOptions::default()).unwrap();
        assert!(m.coef[0] > 0.0);
        assert_eq!(m.coef[1], 0.0);
        assert!(m.kkt <= 1e-6);
        assert!(kkt_residual(x.view(), &y, m.intercept, &m.coef, 1.0) <= 1e-6);
    }

    #[test]
    fn rejects_single_class_and_bad_c() {
        let x = Array2::zeros((4, 1));
        assert!(fit_l1_logreg(x.view(), &[true; 4], &names(1), &FitOptions::default()).is_err());
        let y = [true, false, true, false];
        let bad = FitOptions {
            c: 0.0,
            ..Default::default()
        };
        assert!(fit_l1_logreg(x.view(), &y, &names(1), &bad).is_err());
    }
}
