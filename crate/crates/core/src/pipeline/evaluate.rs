use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::operator::{DeepONet, OperatorDataset};
use crate::recovery::RecoveryFunctionSet;
use crate::sos::RecoveryCurve;

/// Reference and predicted SoS functionality of one sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveComparison {
    pub sample: usize,
    pub times: Vec<f64>,
    pub reference: Vec<f64>,
    pub predicted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    /// `(exact, predicted)` for every observed pair.
    pub scatter: Vec<(f64, f64)>,
    pub mse: f64,
    /// `1 - SS_res / SS_tot`. A constant target set gives 1 for a perfect
    /// fit and 0 otherwise.
    pub r2: f64,
    pub curves: Vec<CurveComparison>,
}

/// Scores raw model outputs against the dataset targets.
pub fn evaluate(model: &DeepONet, data: &OperatorDataset) -> Result<EvaluationReport> {
    if model.encoding() != data.encoding() {
        return Err(Error::Shape("model and dataset use different sensor encodings".into()));
    }
    let pred = model.predict(data.branch().view(), data.times())?;
    let mut predictions = Vec::with_capacity(data.n_pairs());
    for ((k, j), &m) in data.mask().indexed_iter() {
        if m != 0.0 {
            predictions.push(pred[(k, j)]);
        }
    }
    evaluate_predictions(data, &predictions)
}

/// Scores predictions listed in [`OperatorDataset::observations`] order.
pub fn evaluate_predictions(data: &OperatorDataset, predictions: &[f64]) -> Result<EvaluationReport> {
    let obs = data.observations();
    if obs.len() != predictions.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} observations",
            predictions.len(),
            obs.len()
        )));
    }
    if obs.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    let n = obs.len() as f64;
    let scatter: Vec<(f64, f64)> = obs.iter().zip(predictions).map(|(o, &p)| (o.target, p)).collect();
    let mean = scatter.iter().map(|(y, _)| y).sum::<f64>() / n;
    let ss_res: f64 = scatter.iter().map(|(y, p)| (y - p) * (y - p)).sum();
    let ss_tot: f64 = scatter.iter().map(|(y, _)| (y - mean) * (y - mean)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };

    let mut curves: Vec<CurveComparison> = Vec::new();
    for (o, &p) in obs.iter().zip(predictions) {
        match curves.last_mut() {
            Some(c) if c.sample == o.sample => {
                c.times.push(o.time);
                c.reference.push(o.target);
                c.predicted.push(p);
            }
            _ => curves.push(CurveComparison {
                sample: o.sample,
                times: vec![o.time],
                reference: vec![o.target],
                predicted: vec![p],
            }),
        }
    }

    Ok(EvaluationReport {
        scatter,
        mse: ss_res / n,
        r2,
        curves,
    })
}

/// Surrogate prediction of a full recovery path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPrediction {
    /// Predictions clamped to `[0, 1]`.
    pub curve: RecoveryCurve,
    /// Raw network outputs before clamping.
    pub raw: Vec<f64>,
    /// Set when the grid extends past the horizon the model was trained on.
    pub extrapolated: bool,
}

pub fn predict_recovery_path(
    model: &DeepONet,
    set: &RecoveryFunctionSet,
    grid: &TimeGrid,
) -> Result<PathPrediction> {
    let enc = model.encoding();
    if set.n_systems() != enc.n_systems {
        return Err(Error::Shape(format!(
            "model expects {} systems, got {}",
            enc.n_systems,
            set.n_systems()
        )));
    }
    let input = set.sensor_values(&enc.sensors);
    let x = ndarray::ArrayView2::from_shape((1, input.len()), &input)
        .map_err(|e| Error::Shape(e.to_string()))?;
    let raw: Vec<f64> = model.predict(x, grid.times())?.row(0).to_vec();
    let extrapolated = grid.t_end() > enc.t_end * (1.0 + 1e-12);
    if extrapolated {
        log::warn!(
            "predicting up to t = {} beyond the training horizon {}",
            grid.t_end(),
            enc.t_end
        );
    }
    Ok(PathPrediction {
        curve: RecoveryCurve {
            grid: grid.clone(),
            values: raw.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            stderr: None,
        },
        raw,
        extrapolated,
    })
}
