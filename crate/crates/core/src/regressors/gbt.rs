//! Second-order gradient-boosted regression trees for squared loss.
//!
//! With squared loss every gradient is the negative residual and every Hessian
//! is 1, so a leaf's optimal output is Σresiduals / (count + λ) and the split
//! gain reduces to sums of residuals. Trees split on time thresholds chosen by
//! exact greedy search over midpoints of consecutive distinct times.

use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub max_depth: usize,
    pub min_child_count: usize,
    pub min_split_gain: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            rounds: 100,
            learning_rate: 0.3,
            lambda: 1.0,
            max_depth: 6,
            min_child_count: 1,
            min_split_gain: 0.0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::param("rounds", "must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::param(
                "learning_rate",
                format!("must lie in (0, 1], got {}", self.learning_rate),
            ));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::param(
                "lambda",
                format!("must be >= 0, got {}", self.lambda),
            ));
        }
        if self.min_child_count == 0 {
            return Err(Error::param("min_child_count", "must be >= 1"));
        }
        if !(self.min_split_gain.is_finite() && self.min_split_gain >= 0.0) {
            return Err(Error::param("min_split_gain", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    /// Samples with `time < threshold` go left.
    Split {
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Binary tree stored as a node arena; the root is node 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn predict(&self, time_s: f64) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf { value } => return value,
                Node::Split {
                    threshold,
                    left,
                    right,
                } => idx = if time_s < threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], idx: usize) -> usize {
            match nodes[idx] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::ModelFormat("tree has no nodes".into()));
        }
        // children must point forward so every walk terminates
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                Node::Leaf { value } if !value.is_finite() => {
                    return Err(Error::ModelFormat(format!("leaf {i} is not finite")))
                }
                Node::Split {
                    threshold,
                    left,
                    right,
                } => {
                    if !threshold.is_finite() {
                        return Err(Error::ModelFormat(format!("threshold {i} is not finite")));
                    }
                    if left <= i
                        || right <= i
                        || left >= self.nodes.len()
                        || right >= self.nodes.len()
                    {
                        return Err(Error::ModelFormat(format!("node {i} has invalid children")));
                    }
                }
                Node::Leaf { .. } => {}
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_score: f64,
    pub trees: Vec<RegressionTree>,
    pub learning_rate: f64,
    pub lambda: f64,
    pub max_depth: usize,
    pub min_child_count: usize,
    pub min_split_gain: f64,
}

impl GbtModel {
    pub fn predict(&self, time_s: f64) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(time_s)).sum();
        self.base_score + self.learning_rate * sum
    }

    pub fn params(&self) -> GbtParams {
        GbtParams {
            rounds: self.trees.len().max(1),
            learning_rate: self.learning_rate,
            lambda: self.lambda,
            max_depth: self.max_depth,
            min_child_count: self.min_child_count,
            min_split_gain: self.min_split_gain,
        }
    }
}

/// Optimal shrunk leaf value: Σresiduals / (count + λ).
pub fn leaf_output(residuals: &[f64], lambda: f64) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::DegenerateInput("leaf has no residuals".into()));
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::param(
            "lambda",
            format!("must be >= 0, got {lambda}"),
        ));
    }
    Ok(residuals.iter().sum::<f64>() / (residuals.len() as f64 + lambda))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitScore {
    pub gain: f64,
    /// `gain > min_split_gain`
    pub accepted: bool,
}

fn gain_from_sums(g_left: f64, n_left: f64, g_right: f64, n_right: f64, lambda: f64) -> f64 {
    let g = g_left + g_right;
    0.5 * (g_left * g_left / (n_left + lambda) + g_right * g_right / (n_right + lambda)
        - g * g / (n_left + n_right + lambda))
}

/// Loss reduction from splitting a node into the given residual groups.
pub fn split_gain(
    left_residuals: &[f64],
    right_residuals: &[f64],
    lambda: f64,
    min_split_gain: f64,
) -> Result<SplitScore> {
    if left_residuals.is_empty() || right_residuals.is_empty() {
        return Err(Error::DegenerateInput(
            "both sides of a split must be nonempty".into(),
        ));
    }
    let gain = gain_from_sums(
        left_residuals.iter().sum(),
        left_residuals.len() as f64,
        right_residuals.iter().sum(),
        right_residuals.len() as f64,
        lambda,
    );
    Ok(SplitScore {
        gain,
        accepted: gain > min_split_gain,
    })
}

#[derive(Clone, Debug)]
pub struct GbtFit {
    pub model: GbtModel,
    /// Training RMSE of the base score followed by the RMSE after each round.
    pub train_rmse: Vec<f64>,
}

pub fn fit_gbt(train: &TimeSeriesDataset, params: &GbtParams) -> Result<GbtFit> {
    fit_gbt_xy(&train.times(), &train.temperatures(), params)
}

struct TreeBuilder<'a> {
    /// Feature values in ascending order.
    x: &'a [f64],
    residuals: &'a [f64],
    params: &'a GbtParams,
    nodes: Vec<Node>,
    /// Leaf value assigned to each sorted position.
    outputs: Vec<f64>,
}

impl TreeBuilder<'_> {
    fn build(&mut self, lo: usize, hi: usize, depth: usize) -> Result<usize> {
        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        match self.best_split(lo, hi, depth) {
            Some((cut, threshold)) => {
                let left = self.build(lo, cut, depth + 1)?;
                let right = self.build(cut, hi, depth + 1)?;
                self.nodes[idx] = Node::Split {
                    threshold,
                    left,
                    right,
                };
            }
            None => {
                let value = leaf_output(&self.residuals[lo..hi], self.params.lambda)?;
                self.outputs[lo..hi].fill(value);
                self.nodes[idx] = Node::Leaf { value };
            }
        }
        Ok(idx)
    }

    /// Best cut position in `lo..hi` and its threshold; ties keep the lowest threshold.
    fn best_split(&self, lo: usize, hi: usize, depth: usize) -> Option<(usize, f64)> {
        let min_child = self.params.min_child_count;
        if depth >= self.params.max_depth || hi - lo < 2 * min_child {
            return None;
        }
        let lambda = self.params.lambda;
        let total: f64 = self.residuals[lo..hi].iter().sum();
        let n = (hi - lo) as f64;
        let mut best: Option<(usize, f64)> = None;
        let mut best_gain = f64::NEG_INFINITY;
        let mut g_left = 0.0;
        for k in lo + 1..hi {
            g_left += self.residuals[k - 1];
            let n_left = k - lo;
            if n_left < min_child || hi - k < min_child || self.x[k] == self.x[k - 1] {
                continue;
            }
            let n_left = n_left as f64;
            let gain = gain_from_sums(g_left, n_left, total - g_left, n - n_left, lambda);
            if gain > best_gain {
                best_gain = gain;
                best = Some((k, midpoint(self.x[k - 1], self.x[k])));
            }
        }
        best.filter(|_| best_gain > self.params.min_split_gain)
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let mid = a + 0.5 * (b - a);
    // a < mid <= b keeps `a` on the left and `b` on the right
    if mid > a && mid <= b {
        mid
    } else {
        b
    }
}

pub fn fit_gbt_xy(x: &[f64], y: &[f64], params: &GbtParams) -> Result<GbtFit> {
    params.validate()?;
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            actual: y.len(),
            predicted: x.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::DegenerateInput(
            "boosting needs at least 1 sample".into(),
        ));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("non-finite training value".into()));
    }

    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();

    let n = ys.len() as f64;
    let base_score = ys.iter().sum::<f64>() / n;
    let mut predictions = vec![base_score; ys.len()];
    let rmse = |pred: &[f64]| {
        (ys.iter()
            .zip(pred)
            .map(|(a, p)| (a - p).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
    };
    let mut train_rmse = vec![rmse(&predictions)];
    let mut trees = Vec::with_capacity(params.rounds);

    for _ in 0..params.rounds {
        let residuals: Vec<f64> = ys.iter().zip(&predictions).map(|(a, p)| a - p).collect();
        let mut builder = TreeBuilder {
            x: &xs,
            residuals: &residuals,
            params,
            nodes: Vec::new(),
            outputs: vec![0.0; ys.len()],
        };
        builder.build(0, ys.len(), 0)?;
        for (p, o) in predictions.iter_mut().zip(&builder.outputs) {
            *p += params.learning_rate * o;
        }
        train_rmse.push(rmse(&predictions));
        trees.push(RegressionTree {
            nodes: builder.nodes,
        });
    }

    Ok(GbtFit {
        model: GbtModel {
            base_score,
            trees,
            learning_rate: params.learning_rate,
            lambda: params.lambda,
            max_depth: params.max_depth,
            min_child_count: params.min_child_count,
            min_split_gain: params.min_split_gain,
        },
        train_rmse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn leaf_output_values() {
        assert_eq!(leaf_output(&[1.0, 2.0, 3.0], 0.0).unwrap(), 2.0);
        assert_eq!(leaf_output(&[1.0, 2.0, 3.0], 3.0).unwrap(), 1.0);
        assert!(leaf_output(&[], 1.0).is_err());
        let mut prev = f64::INFINITY;
        for lambda in [0.0, 1.0, 10.0, 1e3, 1e6, 1e12] {
            let v = leaf_output(&[0.5, -2.0, 4.0], lambda).unwrap().abs();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-11);
    }

    #[test]
    fn split_gain_values() {
        let s = split_gain(&[-1.0, -1.0], &[1.0, 1.0], 0.0, 0.0).unwrap();
        assert_eq!(s.gain, 2.0);
        assert!(s.accepted);
        let flat = split_gain(&[0.5, 0.5], &[0.5, 0.5], 0.0, 0.0).unwrap();
        assert_eq!(flat.gain, 0.0);
        assert!(!flat.accepted);
        assert!(
            !split_gain(&[-1.0, -1.0], &[1.0, 1.0], 0.0, 2.0)
                .unwrap()
                .accepted
        );
        assert!(split_gain(&[], &[1.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn single_leaf_predicts_mean() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [10.0, 11.0, 15.0, 20.0];
        let params = GbtParams {
            rounds: 1,
            max_depth: 0,
            lambda: 0.0,
            learning_rate: 1.0,
            ..GbtParams::default()
        };
        let fit = fit_gbt_xy(&x, &y, &params).unwrap();
        for t in [-5.0, 2.5, 100.0] {
            assert_eq!(fit.model.predict(t), 14.0);
        }
    }

    #[test]
    fn two_clusters_fit_exactly() {
        let x = [0.0, 0.0, 0.0, 100.0, 100.0, 100.0];
        let y = [10.0, 10.0, 10.0, 20.0, 20.0, 20.0];
        let params = GbtParams {
            rounds: 1,
            max_depth: 1,
            lambda: 0.0,
            learning_rate: 1.0,
            ..GbtParams::default()
        };
        let fit = fit_gbt_xy(&x, &y, &params).unwrap();
        assert_eq!(*fit.train_rmse.last().unwrap(), 0.0);
        assert_eq!(
            fit.model.trees[0].nodes[0],
            Node::Split {
                threshold: 50.0,
                left: 1,
                right: 2
            }
        );
        assert_eq!(fit.model.predict(0.0), 10.0);
        assert_eq!(fit.model.predict(100.0), 20.0);
    }

    #[test]
    fn ties_keep_lowest_threshold() {
        // residuals ±1 alternate in pairs; cutting at 1.5 and at 5.5 score the same
        let x = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let y = [1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
        let params = GbtParams {
            rounds: 1,
            max_depth: 1,
            lambda: 0.0,
            learning_rate: 1.0,
            ..GbtParams::default()
        };
        let fit = fit_gbt_xy(&x, &y, &params).unwrap();
        match fit.model.trees[0].nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(threshold, 1.5),
            ref other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn min_child_count_limits_leaves() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let params = GbtParams {
            rounds: 1,
            max_depth: 6,
            min_child_count: 4,
            ..GbtParams::default()
        };
        let fit = fit_gbt_xy(&x, &y, &params).unwrap();
        let leaves = fit.model.trees[0]
            .nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count();
        assert_eq!(leaves, 2);
    }

    #[test]
    fn prediction_forms() {
        let mut m = GbtModel {
            base_score: 27.5,
            trees: vec![],
            learning_rate: 0.3,
            lambda: 1.0,
            max_depth: 6,
            min_child_count: 1,
            min_split_gain: 0.0,
        };
        assert_eq!(m.predict(12.0), 27.5);
        m.trees.push(RegressionTree::leaf(2.0));
        assert_eq!(m.predict(12.0), 27.5 + 0.3 * 2.0);
    }

    #[test]
    fn rejects_invalid_hyperparameters() {
        let x = [0.0, 1.0];
        let y = [0.0, 1.0];
        for p in [
            GbtParams {
                rounds: 0,
                ..GbtParams::default()
            },
            GbtParams {
                learning_rate: 0.0,
                ..GbtParams::default()
            },
            GbtParams {
                learning_rate: 1.5,
                ..GbtParams::default()
            },
            GbtParams {
                lambda: -1.0,
                ..GbtParams::default()
            },
            GbtParams {
                min_child_count: 0,
                ..GbtParams::default()
            },
        ] {
            assert!(matches!(
                fit_gbt_xy(&x, &y, &p),
                Err(Error::InvalidParameter { .. })
            ));
        }
    }

    proptest! {
        #[test]
        fn split_gain_is_symmetric(
            l in proptest::collection::vec(-5.0f64..5.0, 1..20),
            r in proptest::collection::vec(-5.0f64..5.0, 1..20),
            lambda in 0.0f64..5.0,
        ) {
            let a = split_gain(&l, &r, lambda, 0.0).unwrap().gain;
            let b = split_gain(&r, &l, lambda, 0.0).unwrap().gain;
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn training_loss_never_increases(
            y in proptest::collection::vec(0.0f64..50.0, 2..60),
            eta in 0.05f64..1.0,
            lambda in 0.0f64..3.0,
            depth in 0usize..5,
        ) {
            let x: Vec<f64> = (0..y.len()).map(|i| i as f64 * 2.0).collect();
            let params = GbtParams { rounds: 25, learning_rate: eta, lambda, max_depth: depth, ..GbtParams::default() };
            let fit = fit_gbt_xy(&x, &y, &params).unwrap();
            for w in fit.train_rmse.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
            }
            for tree in &fit.model.trees {
                prop_assert!(tree.depth() <= depth);
            }
        }

        #[test]
        fn unregularised_deep_ensemble_interpolates(y in proptest::collection::vec(0.0f64..50.0, 2..8)) {
            let x: Vec<f64> = (0..y.len()).map(|i| i as f64).collect();
            let params = GbtParams { rounds: 3, learning_rate: 1.0, lambda: 0.0, max_depth: 6, ..GbtParams::default() };
            let fit = fit_gbt_xy(&x, &y, &params).unwrap();
            prop_assert!(*fit.train_rmse.last().unwrap() < 1e-9);
        }
    }
}
