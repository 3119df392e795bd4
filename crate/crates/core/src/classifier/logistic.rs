use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub standardize: bool,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            learning_rate: 0.5,
            epochs: 500,
            standardize: true,
        }
    }
}

/// Binary logistic regression with optional per-feature standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub l2: f64,
}

impl LogisticModel {
    /// All-zero model over `dim` raw features.
    pub fn zeros(dim: usize) -> Self {
        LogisticModel {
            weights: vec![0.0; dim],
            bias: 0.0,
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
            l2: 0.0,
        }
    }

    fn margin(&self, x: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(x)
            .zip(self.mean.iter().zip(&self.scale))
            .map(|((w, v), (m, s))| w * (v - m) / s)
            .sum::<f64>()
            + self.bias
    }
}

fn check_matrix(x: &[Vec<f64>]) -> Result<usize> {
    let dim = x
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Empty("feature matrix".into()))?;
    for row in x {
        if row.len() != dim {
            return Err(Error::Shape(format!(
                "feature rows of length {} and {dim}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
    }
    Ok(dim)
}

/// Minimizes mean log-loss plus `l2 / 2 * |w|^2` by full-batch gradient
/// descent. The penalty step is applied in closed form, so any `l2 >= 0`
/// is stable. The bias is not penalized.
pub fn logistic_train(
    x: &[Vec<f64>],
    y: &[bool],
    l2: f64,
    config: &LogisticConfig,
) -> Result<LogisticModel> {
    let dim = check_matrix(x)?;
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} rows for {} labels",
            x.len(),
            y.len()
        )));
    }
    if y.iter().all(|&b| b) || y.iter().all(|&b| !b) {
        return Err(Error::SingleClass);
    }
    if !(l2 >= 0.0 && l2.is_finite()) || !(config.learning_rate > 0.0) {
        return Err(Error::InvalidArgument(
            "l2 must be >= 0 and the learning rate > 0".into(),
        ));
    }
    let n = x.len() as f64;
    let mut model = LogisticModel::zeros(dim);
    model.l2 = l2;
    if config.standardize {
        for j in 0..dim {
            let m = x.iter().map(|r| r[j]).sum::<f64>() / n;
            let s = (x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n).sqrt();
            model.mean[j] = m;
            model.scale[j] = if s > 0.0 { s } else { 1.0 };
        }
    }
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| {
            (0..dim)
                .map(|j| (r[j] - model.mean[j]) / model.scale[j])
                .collect()
        })
        .collect();
    let lr = config.learning_rate;
    for _ in 0..config.epochs {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for (row, &label) in z.iter().zip(y) {
            let m: f64 = model
                .weights
                .iter()
                .zip(row)
                .map(|(w, v)| w * v)
                .sum::<f64>()
                + model.bias;
            let err = sigmoid(m) - f64::from(u8::from(label));
            for (g, v) in gw.iter_mut().zip(row) {
                *g += err * v;
            }
            gb += err;
        }
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w = (*w - lr * g / n) / (1.0 + lr * l2);
        }
        model.bias -= lr * gb / n;
    }
    Ok(model)
}

/// `P(incivil | x)`.
pub fn logistic_predict(model: &LogisticModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.weights.len() {
        return Err(Error::Shape(format!(
            "{} features for a model of {}",
            x.len(),
            model.weights.len()
        )));
    }
    Ok(sigmoid(model.margin(x)))
}
