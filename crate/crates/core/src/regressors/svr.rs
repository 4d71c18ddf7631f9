//! ε-insensitive support vector regression on a single standardized feature.
//!
//! The dual problem over the paired multipliers (α, α*) is solved by
//! sequential minimal optimisation: each iteration picks the maximal violating
//! pair with second-order working-set selection and solves the two-variable
//! subproblem analytically under the box [0, C] and Σ(α − α*) = 0.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};

/// Kernel matrices up to this many rows are precomputed; larger problems
/// evaluate kernel rows on demand.
const DENSE_KERNEL_LIMIT: usize = 4096;
const TAU: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Rbf,
    Linear,
}

/// RBF width: `"auto"` resolves to 1 / var(standardized time).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GammaRepr", into = "GammaRepr")]
pub enum Gamma {
    #[default]
    Auto,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GammaRepr {
    Name(String),
    Value(f64),
}

impl TryFrom<GammaRepr> for Gamma {
    type Error = String;

    fn try_from(r: GammaRepr) -> std::result::Result<Self, String> {
        match r {
            GammaRepr::Name(s) if s == "auto" => Ok(Gamma::Auto),
            GammaRepr::Name(s) => Err(format!("gamma must be \"auto\" or a number, got `{s}`")),
            GammaRepr::Value(v) => Ok(Gamma::Value(v)),
        }
    }
}

impl From<Gamma> for GammaRepr {
    fn from(g: Gamma) -> Self {
        match g {
            Gamma::Auto => GammaRepr::Name("auto".into()),
            Gamma::Value(v) => GammaRepr::Value(v),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub gamma: Gamma,
    pub kernel: Kernel,
    /// Iteration cap of the pair-update loop.
    pub max_passes: usize,
    /// Stop once the maximal KKT violation drops below this.
    pub tol: f64,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            c: 10.0,
            epsilon: 0.05,
            gamma: Gamma::Auto,
            kernel: Kernel::Rbf,
            max_passes: 100_000,
            tol: 1e-4,
        }
    }
}

impl SvrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::param("c", format!("must be > 0, got {}", self.c)));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::param(
                "epsilon",
                format!("must be >= 0, got {}", self.epsilon),
            ));
        }
        if let Gamma::Value(g) = self.gamma {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::param("gamma", format!("must be > 0, got {g}")));
            }
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::param(
                "tol",
                format!("must be > 0, got {}", self.tol),
            ));
        }
        if self.max_passes == 0 {
            return Err(Error::param("max_passes", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub kernel: Kernel,
    /// Standardized training times of the support vectors.
    pub support_x: Vec<f64>,
    /// α_i − α_i* for each support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub c: f64,
    pub x_mean: f64,
    pub x_std: f64,
}

impl SvrModel {
    pub fn standardize(&self, time_s: f64) -> f64 {
        (time_s - self.x_mean) / self.x_std
    }

    pub fn kernel_value(&self, a: f64, b: f64) -> f64 {
        kernel_value(self.kernel, self.gamma, a, b)
    }

    pub fn predict(&self, time_s: f64) -> f64 {
        let z = self.standardize(time_s);
        self.support_x
            .iter()
            .zip(&self.dual_coefs)
            .map(|(&sx, &beta)| beta * self.kernel_value(sx, z))
            .sum::<f64>()
            + self.bias
    }
}

fn kernel_value(kernel: Kernel, gamma: f64, a: f64, b: f64) -> f64 {
    match kernel {
        Kernel::Rbf => {
            let d = a - b;
            (-gamma * d * d).exp()
        }
        Kernel::Linear => a * b,
    }
}

#[derive(Clone, Debug)]
pub struct SvrFit {
    pub model: SvrModel,
    pub iterations: usize,
    /// Maximal KKT violation at exit.
    pub violation: f64,
    pub converged: bool,
    /// Dual objective ½ βᵀKβ − yᵀβ + ε Σ(α + α*) at exit.
    pub objective: f64,
}

pub fn fit_svr(train: &TimeSeriesDataset, params: &SvrParams) -> Result<SvrFit> {
    fit_svr_xy(&train.times(), &train.temperatures(), params)
}

struct KernelRows {
    x: Vec<f64>,
    kernel: Kernel,
    gamma: f64,
    dense: Option<Vec<f64>>,
}

impl KernelRows {
    fn new(x: Vec<f64>, kernel: Kernel, gamma: f64) -> Self {
        let n = x.len();
        let dense = (n <= DENSE_KERNEL_LIMIT).then(|| {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let k = kernel_value(kernel, gamma, x[i], x[j]);
                    m[i * n + j] = k;
                    m[j * n + i] = k;
                }
            }
            m
        });
        Self {
            x,
            kernel,
            gamma,
            dense,
        }
    }

    fn row(&self, i: usize) -> Cow<'_, [f64]> {
        let n = self.x.len();
        match &self.dense {
            Some(m) => Cow::Borrowed(&m[i * n..(i + 1) * n]),
            None => Cow::Owned(
                self.x
                    .iter()
                    .map(|&xj| kernel_value(self.kernel, self.gamma, self.x[i], xj))
                    .collect(),
            ),
        }
    }

    fn diag(&self, i: usize) -> f64 {
        kernel_value(self.kernel, self.gamma, self.x[i], self.x[i])
    }
}

/// Fits an ε-SVR on raw times `x` and targets `y`.
///
/// Returns the model even when the iteration cap is hit; `converged` and
/// `violation` report the final state.
pub fn fit_svr_xy(x: &[f64], y: &[f64], params: &SvrParams) -> Result<SvrFit> {
    params.validate()?;
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            actual: y.len(),
            predicted: x.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "SVR needs at least 2 samples, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite training value".into()));
    }

    let n = x.len();
    let x_mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - x_mean).powi(2)).sum::<f64>() / n as f64;
    let x_std = if var > 0.0 { var.sqrt() } else { 1.0 };
    let z: Vec<f64> = x.iter().map(|v| (v - x_mean) / x_std).collect();
    let gamma = match params.gamma {
        Gamma::Value(g) => g,
        Gamma::Auto => {
            let zm = z.iter().sum::<f64>() / n as f64;
            let zv = z.iter().map(|v| (v - zm).powi(2)).sum::<f64>() / n as f64;
            if zv > 0.0 {
                1.0 / zv
            } else {
                1.0
            }
        }
    };

    let kernel = KernelRows::new(z, params.kernel, gamma);
    let solution = solve_dual(&kernel, y, params);

    let mut support_x = Vec::new();
    let mut dual_coefs = Vec::new();
    for i in 0..n {
        let beta = solution.alpha[i] - solution.alpha[i + n];
        if beta != 0.0 {
            support_x.push(kernel.x[i]);
            dual_coefs.push(beta);
        }
    }

    Ok(SvrFit {
        model: SvrModel {
            kernel: params.kernel,
            support_x,
            dual_coefs,
            bias: solution.bias,
            gamma,
            epsilon: params.epsilon,
            c: params.c,
            x_mean,
            x_std,
        },
        iterations: solution.iterations,
        violation: solution.violation,
        converged: solution.converged,
        objective: solution.objective,
    })
}

struct DualSolution {
    /// α₁..αₙ followed by α₁*..αₙ*.
    alpha: Vec<f64>,
    bias: f64,
    iterations: usize,
    violation: f64,
    converged: bool,
    objective: f64,
}

/// Minimises ½ aᵀQa + pᵀa over a ∈ [0, C]²ⁿ subject to sᵀa = 0, where
/// s = (+1ⁿ, −1ⁿ), Q_uv = s_u s_v K(u mod n, v mod n) and
/// p = (ε − y, ε + y).
fn solve_dual(kernel: &KernelRows, y: &[f64], params: &SvrParams) -> DualSolution {
    let n = y.len();
    let l = 2 * n;
    let c = params.c;
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let p: Vec<f64> = (0..l)
        .map(|t| {
            if t < n {
                params.epsilon - y[t]
            } else {
                params.epsilon + y[t - n]
            }
        })
        .collect();
    let qd: Vec<f64> = (0..n).map(|i| kernel.diag(i)).collect();

    let mut alpha = vec![0.0; l];
    let mut grad = p.clone();
    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    let mut converged = false;

    let in_up = |a: f64, s: f64| (s > 0.0 && a < c) || (s < 0.0 && a > 0.0);
    let in_low = |a: f64, s: f64| (s > 0.0 && a > 0.0) || (s < 0.0 && a < c);

    while iterations < params.max_passes {
        let mut g_max = f64::NEG_INFINITY;
        let mut g_max2 = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..l {
            let s = sign(t);
            if in_up(alpha[t], s) && -s * grad[t] >= g_max {
                g_max = -s * grad[t];
                i_sel = t;
            }
            if in_low(alpha[t], s) && s * grad[t] > g_max2 {
                g_max2 = s * grad[t];
            }
        }
        violation = g_max + g_max2;
        if violation < params.tol || i_sel == usize::MAX {
            converged = true;
            break;
        }

        let i = i_sel;
        let row_i = kernel.row(i % n);
        let mut j_sel = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..l {
            let s = sign(t);
            if !in_low(alpha[t], s) {
                continue;
            }
            let grad_diff = g_max + s * grad[t];
            if grad_diff > 0.0 {
                let mut quad = qd[i % n] + qd[t % n] - 2.0 * row_i[t % n];
                if quad <= 0.0 {
                    quad = TAU;
                }
                let obj_diff = -grad_diff * grad_diff / quad;
                if obj_diff <= best {
                    best = obj_diff;
                    j_sel = t;
                }
            }
        }
        if j_sel == usize::MAX {
            converged = true;
            break;
        }
        let j = j_sel;
        iterations += 1;

        let (si, sj) = (sign(i), sign(j));
        let q_ij = si * sj * row_i[j % n];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if si != sj {
            let mut quad = qd[i % n] + qd[j % n] + 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = qd[i % n] + qd[j % n] - 2.0 * q_ij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;

        let (di, dj) = (ai - old_i, aj - old_j);
        let row_j = kernel.row(j % n);
        for t in 0..l {
            let st = sign(t);
            grad[t] += st * (si * row_i[t % n] * di + sj * row_j[t % n] * dj);
        }
    }

    // bias from free multipliers, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_count) = (0.0, 0usize);
    for t in 0..l {
        let s = sign(t);
        let yg = s * grad[t];
        if alpha[t] >= c {
            if s < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if s > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_count += 1;
            free_sum += yg;
        }
    }
    let rho = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        0.5 * (ub + lb)
    };

    let objective = 0.5 * (0..l).map(|t| alpha[t] * (grad[t] + p[t])).sum::<f64>();

    DualSolution {
        alpha,
        bias: -rho,
        iterations,
        violation,
        converged,
        objective,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 * 30.0).collect()
    }

    #[test]
    fn flat_targets_give_flat_model() {
        let x = line(25);
        let y = vec![31.5; 25];
        let fit = fit_svr_xy(&x, &y, &SvrParams::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.model.dual_coefs.is_empty());
        for t in [0.0, 100.0, 555.5, 1e4] {
            assert!((fit.model.predict(t) - 31.5).abs() < 1e-12);
        }
    }

    #[test]
    fn wide_tube_has_zero_training_loss() {
        let x = line(30);
        let y: Vec<f64> = x.iter().map(|t| 25.0 + (t / 300.0).sin()).collect();
        let params = SvrParams {
            epsilon: 2.5,
            ..SvrParams::default()
        };
        let fit = fit_svr_xy(&x, &y, &params).unwrap();
        let loss: f64 = x
            .iter()
            .zip(&y)
            .map(|(t, v)| ((fit.model.predict(*t) - v).abs() - params.epsilon).max(0.0))
            .sum();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn kkt_conditions_at_convergence() {
        let x = line(60);
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, t)| {
                24.0 + 6.0 * (1.0 - (-t / 600.0).exp()) + 0.1 * ((i * 37 % 11) as f64 - 5.0) / 5.0
            })
            .collect();
        let params = SvrParams::default();
        let fit = fit_svr_xy(&x, &y, &params).unwrap();
        assert!(fit.converged, "violation {}", fit.violation);
        let m = &fit.model;
        assert!(m.dual_coefs.iter().all(|b| b.abs() <= params.c));
        let sum: f64 = m.dual_coefs.iter().sum();
        assert!(sum.abs() < 1e-9, "{sum}");
        for (t, v) in x.iter().zip(&y) {
            let z = m.standardize(*t);
            let residual = (m.predict(*t) - v).abs();
            if residual < params.epsilon - params.tol {
                assert!(
                    !m.support_x.contains(&z),
                    "point inside tube carries a dual coefficient"
                );
            }
        }
    }

    #[test]
    fn prediction_forms() {
        let mut m = SvrModel {
            kernel: Kernel::Rbf,
            support_x: vec![],
            dual_coefs: vec![],
            bias: 3.25,
            gamma: 1.0,
            epsilon: 0.05,
            c: 10.0,
            x_mean: 100.0,
            x_std: 50.0,
        };
        assert_eq!(m.predict(42.0), 3.25);
        m.support_x = vec![0.4];
        m.dual_coefs = vec![-1.5];
        assert_eq!(m.predict(120.0), -1.5 + 3.25);

        m.support_x = vec![-1.0, 0.25, 2.0];
        m.dual_coefs = vec![0.7, -0.2, -0.5];
        m.gamma = 0.8;
        // z = (190 − 100)/50 = 1.8
        let expected = 0.7 * (-0.8f64 * 2.8 * 2.8).exp()
            + -0.2 * (-0.8f64 * 1.55 * 1.55).exp()
            + -0.5 * (-0.8f64 * 0.2 * 0.2).exp()
            + 3.25;
        assert!((m.predict(190.0) - expected).abs() < 1e-14);
    }

    #[test]
    fn linear_kernel_fits_a_line() {
        let x = line(40);
        let y: Vec<f64> = x.iter().map(|t| 20.0 + 0.01 * t).collect();
        let params = SvrParams {
            kernel: Kernel::Linear,
            epsilon: 0.01,
            ..SvrParams::default()
        };
        let fit = fit_svr_xy(&x, &y, &params).unwrap();
        assert!(fit.converged);
        for (t, v) in x.iter().zip(&y) {
            assert!((fit.model.predict(*t) - v).abs() <= params.epsilon + 1e-3);
        }
    }

    #[test]
    fn gamma_serializes_as_auto_or_number() {
        assert_eq!(serde_json::to_string(&Gamma::Auto).unwrap(), "\"auto\"");
        assert_eq!(serde_json::to_string(&Gamma::Value(0.5)).unwrap(), "0.5");
        let g: Gamma = serde_json::from_str("2.0").unwrap();
        assert_eq!(g, Gamma::Value(2.0));
        assert!(serde_json::from_str::<Gamma>("\"scale\"").is_err());
    }

    #[test]
    fn rejects_invalid_hyperparameters() {
        let x = line(5);
        let y = vec![1.0; 5];
        for params in [
            SvrParams {
                c: 0.0,
                ..SvrParams::default()
            },
            SvrParams {
                epsilon: -0.1,
                ..SvrParams::default()
            },
            SvrParams {
                gamma: Gamma::Value(0.0),
                ..SvrParams::default()
            },
        ] {
            assert!(matches!(
                fit_svr_xy(&x, &y, &params),
                Err(Error::InvalidParameter { .. })
            ));
        }
        assert!(fit_svr_xy(&[1.0], &[1.0], &SvrParams::default()).is_err());
    }

    #[test]
    fn reports_non_convergence() {
        let x = line(50);
        let y: Vec<f64> = x.iter().map(|t| (t / 97.0).sin() * 5.0).collect();
        let params = SvrParams {
            max_passes: 3,
            ..SvrParams::default()
        };
        let fit = fit_svr_xy(&x, &y, &params).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 3);
        assert!(fit.violation >= params.tol);
    }
}
