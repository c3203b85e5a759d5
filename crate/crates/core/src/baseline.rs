//! Ridge regression from flattened graph features to the flattened label
//! vector. A deliberately simple stand-in for a learned solver.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::{embed_grid, flatten_prediction, unflatten_prediction, HeteroGraph, NodeType, Prediction};
use crate::error::{Error, Result};
use crate::perturb::DatasetEntry;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub ridge: f64,
    /// Row count per node type the model was fitted on.
    pub layout: Vec<(NodeType, usize)>,
    pub feature_mean: Vec<f64>,
    /// Per-feature scale; constant features keep scale 1.
    pub feature_scale: Vec<f64>,
    pub target_mean: Vec<f64>,
    /// Row-major `n_features × n_outputs`, on standardized features.
    pub weights: Vec<f64>,
    pub n_features: usize,
    pub n_outputs: usize,
    /// SHA-256 over the training features and targets.
    pub fitted_on: String,
}

fn columns_of(rows: &[Vec<f64>]) -> usize {
    rows.first().map_or(0, Vec::len)
}

fn graph_of(e: &DatasetEntry) -> HeteroGraph {
    embed_grid(&e.grid)
}

/// Fits `W` minimizing ‖XW − Y‖² + ridge·‖W‖² on standardized features and
/// centered targets, solving the normal equations by Cholesky.
pub fn fit(train: &[DatasetEntry], ridge: f64) -> Result<RidgeModel> {
    if !(ridge > 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidArgument(format!("ridge coefficient must be positive, got {ridge}")));
    }
    let first = train
        .first()
        .ok_or_else(|| Error::Model("cannot fit on an empty training set".to_string()))?;
    let layout = graph_of(first).layout();
    let mut xs = Vec::with_capacity(train.len());
    let mut ys = Vec::with_capacity(train.len());
    for (i, e) in train.iter().enumerate() {
        let g = graph_of(e);
        if g.layout() != layout {
            return Err(Error::Model(format!("training entry {i} has a different graph layout")));
        }
        g.check_prediction(&e.solution)?;
        xs.push(g.flat_features());
        ys.push(flatten_prediction(&e.solution));
    }
    let (n, d, m) = (xs.len(), columns_of(&xs), columns_of(&ys));

    let mut hasher = Sha256::new();
    for v in xs.iter().chain(&ys).flatten() {
        hasher.update(v.to_le_bytes());
    }
    let fitted_on = hex::encode(hasher.finalize());

    let mean = |rows: &[Vec<f64>], j: usize| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
    let feature_mean: Vec<f64> = (0..d).map(|j| mean(&xs, j)).collect();
    let feature_std: Vec<f64> = (0..d)
        .map(|j| (xs.iter().map(|r| (r[j] - feature_mean[j]).powi(2)).sum::<f64>() / n as f64).sqrt())
        .collect();
    // Spread at rounding level of the mean counts as constant.
    let varies: Vec<bool> = feature_std
        .iter()
        .zip(&feature_mean)
        .map(|(s, m)| *s > 1e-12 * m.abs().max(1.0))
        .collect();
    if !varies.contains(&true) {
        return Err(Error::Model("all features are constant over the training set".to_string()));
    }
    let feature_scale: Vec<f64> = feature_std.iter().zip(&varies).map(|(&s, &v)| if v { s } else { 1.0 }).collect();
    let target_mean: Vec<f64> = (0..m).map(|j| mean(&ys, j)).collect();

    let x = DMatrix::from_fn(n, d, |i, j| (xs[i][j] - feature_mean[j]) / feature_scale[j]);
    let y = DMatrix::from_fn(n, m, |i, j| ys[i][j] - target_mean[j]);
    let gram = x.transpose() * &x + DMatrix::identity(d, d) * ridge;
    let w = gram
        .cholesky()
        .ok_or_else(|| Error::Model("normal equations are not positive definite".to_string()))?
        .solve(&(x.transpose() * y));
    Ok(RidgeModel {
        ridge,
        layout,
        feature_mean,
        feature_scale,
        target_mean,
        weights: (0..d).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| w[(i, j)]).collect(),
        n_features: d,
        n_outputs: m,
        fitted_on,
    })
}

impl RidgeModel {
    pub fn predict(&self, graph: &HeteroGraph) -> Result<Prediction> {
        if graph.layout() != self.layout {
            return Err(Error::Model(format!(
                "graph layout {:?} does not match model layout {:?}",
                graph.layout(),
                self.layout
            )));
        }
        let f = graph.flat_features();
        let z = DVector::from_iterator(
            self.n_features,
            f.iter()
                .zip(&self.feature_mean)
                .zip(&self.feature_scale)
                .map(|((v, m), s)| (v - m) / s),
        );
        let w = DMatrix::from_row_slice(self.n_features, self.n_outputs, &self.weights);
        let out = w.transpose() * z;
        let values: Vec<f64> = out.iter().zip(&self.target_mean).map(|(a, b)| a + b).collect();
        unflatten_prediction(&values, graph.count(NodeType::Bus), graph.count(NodeType::Generator))
    }

    pub fn predict_entries(&self, entries: &[DatasetEntry]) -> Result<Vec<Prediction>> {
        entries.iter().map(|e| self.predict(&graph_of(e))).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: RidgeModel = serde_json::from_str(text)?;
        if m.weights.len() != m.n_features * m.n_outputs
            || m.feature_mean.len() != m.n_features
            || m.feature_scale.len() != m.n_features
            || m.target_mean.len() != m.n_outputs
        {
            return Err(Error::Model("model file has inconsistent dimensions".to_string()));
        }
        Ok(m)
    }
}

/// Elementwise mean of the training labels, predicted for every input.
pub fn mean_predictor(train: &[DatasetEntry]) -> Result<Prediction> {
    let first = train
        .first()
        .ok_or_else(|| Error::Model("cannot average an empty training set".to_string()))?;
    let (nb, ng) = (first.solution.state.vm.len(), first.solution.gen_p_mw.len());
    let mut acc = vec![0.0; 2 * (nb + ng + 1)];
    for e in train {
        let v = flatten_prediction(&e.solution);
        if v.len() != acc.len() {
            return Err(Error::Dimension("training labels differ in size".to_string()));
        }
        acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
    }
    let n = train.len() as f64;
    unflatten_prediction(&acc.iter().map(|a| a / n).collect::<Vec<_>>(), nb, ng)
}
