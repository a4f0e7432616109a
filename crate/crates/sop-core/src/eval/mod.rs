//! Evaluation: forecast metrics, the promotion measure, conflict
//! diagnostics, and plug transfer.
//!
//! Everything here accumulates in f64 regardless of pipeline precision,
//! and operates on whatever space the tensors are in — callers decide
//! whether that is normalized or raw units.

mod report;

pub use report::{
    curves_svg, emit_report, metrics_csv, metrics_rows, parse_metrics_csv, report_markdown,
    MetricsRow, Report, Scope,
};

use serde::{Deserialize, Serialize};

use crate::calibrate::CalibrationRun;
use crate::error::{Error, Result};
use crate::plug::PlugBank;
use crate::socket::PredictionCache;
use crate::Tensor32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub mse: f64,
    pub mae: f64,
}

/// Squared and absolute error broken out three ways over a (w × n × s)
/// prediction stack: overall, per variable, per horizon step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    /// Number of windows the table was computed over.
    pub samples: usize,
    pub overall: Metric,
    pub per_variable: Vec<Metric>,
    pub per_horizon: Vec<Metric>,
}

/// Computes the full metrics table for predictions against targets,
/// both (w, n, s).
pub fn evaluate(yhat: &Tensor32, y: &Tensor32) -> Result<MetricsTable> {
    if yhat.shape() != y.shape() || yhat.shape().len() != 3 {
        return Err(Error::Shape(format!(
            "evaluate wants matching rank-3 stacks, got {:?} vs {:?}",
            yhat.shape(),
            y.shape()
        )));
    }
    let (w, n, s) = (yhat.shape()[0], yhat.shape()[1], yhat.shape()[2]);
    if w == 0 {
        return Err(Error::Config("evaluate: no windows to score".into()));
    }
    let mut sq_var = vec![0.0f64; n];
    let mut ab_var = vec![0.0f64; n];
    let mut sq_hor = vec![0.0f64; s];
    let mut ab_hor = vec![0.0f64; s];
    for row in 0..w {
        let p = &yhat.data()[row * n * s..(row + 1) * n * s];
        let t = &y.data()[row * n * s..(row + 1) * n * s];
        for v in 0..n {
            for j in 0..s {
                let d = p[v * s + j] as f64 - t[v * s + j] as f64;
                let (sq, ab) = (d * d, d.abs());
                sq_var[v] += sq;
                ab_var[v] += ab;
                sq_hor[j] += sq;
                ab_hor[j] += ab;
            }
        }
    }
    let total = (w * n * s) as f64;
    let overall = Metric {
        mse: sq_var.iter().sum::<f64>() / total,
        mae: ab_var.iter().sum::<f64>() / total,
    };
    let per_count = (w * s) as f64;
    let per_variable = (0..n)
        .map(|v| Metric {
            mse: sq_var[v] / per_count,
            mae: ab_var[v] / per_count,
        })
        .collect();
    let hor_count = (w * n) as f64;
    let per_horizon = (0..s)
        .map(|j| Metric {
            mse: sq_hor[j] / hor_count,
            mae: ab_hor[j] / hor_count,
        })
        .collect();
    Ok(MetricsTable {
        samples: w,
        overall,
        per_variable,
        per_horizon,
    })
}

/// Relative error reduction in percent: how much of the socket's MSE the
/// calibrated forecast removed. Negative when calibration made things
/// worse. Undefined when the socket was already exact (division by zero
/// says nothing either way).
pub fn promotion(base_mse: f64, calibrated_mse: f64) -> Result<f64> {
    if !base_mse.is_finite() || !calibrated_mse.is_finite() {
        return Err(Error::Numeric(format!(
            "promotion of non-finite losses {base_mse} → {calibrated_mse}"
        )));
    }
    if base_mse <= 0.0 {
        return Err(Error::UndefinedPromotion(format!(
            "baseline MSE is {base_mse}; promotion is undefined"
        )));
    }
    Ok((base_mse - calibrated_mse) / base_mse * 100.0)
}

/// Summary of how differently the plugs stopped — the observable trace of
/// multi-target learning conflict. A wide stop-epoch range is exactly the
/// schedule disagreement a single shared monitor would have flattened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtlcReport {
    pub stop_epochs: Vec<usize>,
    pub min: usize,
    pub max: usize,
    pub range: usize,
    pub mean: f64,
    pub std: f64,
}

impl MtlcReport {
    pub fn from_run(run: &CalibrationRun) -> Result<Self> {
        let stop_epochs = run.stop_epochs();
        if stop_epochs.is_empty() {
            return Err(Error::Config("run has no plug outcomes".into()));
        }
        let min = *stop_epochs.iter().min().expect("nonempty");
        let max = *stop_epochs.iter().max().expect("nonempty");
        let k = stop_epochs.len() as f64;
        let mean = stop_epochs.iter().map(|&e| e as f64).sum::<f64>() / k;
        let var = stop_epochs
            .iter()
            .map(|&e| {
                let d = e as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / k;
        Ok(Self {
            stop_epochs,
            min,
            max,
            range: max - min,
            mean,
            std: var.sqrt(),
        })
    }
}

/// Result of carrying a trained bank to a different socket's predictions:
/// the receiving socket scored bare and with the foreign plugs attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    /// Digest of the socket the bank was calibrated against.
    pub from_socket: String,
    /// Digest of the socket whose predictions it was applied to here.
    pub to_socket: String,
    pub base: MetricsTable,
    pub calibrated: MetricsTable,
    /// Signed: negative means the foreign plugs hurt.
    pub promotion_pct: f64,
}

/// Applies `bank` (trained against the socket whose digest is
/// `from_digest`) to another socket's cache and scores both. The target
/// geometry must match the partition; nothing else about the sockets has
/// to agree.
pub fn transfer(
    bank: &PlugBank<f32>,
    from_digest: &str,
    cache: &PredictionCache,
) -> Result<TransferReport> {
    if cache.n() != bank.spec.n || cache.s() != bank.spec.s {
        return Err(Error::Shape(format!(
            "bank calibrates {}×{} targets, cache provides {}×{}",
            bank.spec.n,
            bank.spec.s,
            cache.n(),
            cache.s()
        )));
    }
    let base = evaluate(&cache.yhat, &cache.y)?;
    let calibrated_stack = bank.apply(&cache.yhat)?;
    let calibrated = evaluate(&calibrated_stack, &cache.y)?;
    let promotion_pct = promotion(base.overall.mse, calibrated.overall.mse)?;
    Ok(TransferReport {
        from_socket: from_digest.to_string(),
        to_socket: cache.socket_digest.clone(),
        base,
        calibrated,
        promotion_pct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::{CalibrateHyper, CalibrationMode, PlugOutcome};
    use crate::data::Split;
    use crate::numerics::Rng;
    use crate::plug::{partition, Axis, PlugBank};

    /// Hand-checked 1-window case, n=2 s=2:
    /// errors [1, -1, 2, 0] → mse overall (1+1+4)/4 = 1.5, mae 1.0;
    /// var0 errors [1,-1] → mse 1, mae 1; var1 [2,0] → mse 2, mae 1;
    /// horizon0 [1,2] → mse 2.5, mae 1.5; horizon1 [-1,0] → mse .5 mae .5
    #[test]
    fn evaluate_matches_hand_computation() {
        let yhat = Tensor32::new(vec![1, 2, 2], vec![2.0, 1.0, 5.0, 4.0]).unwrap();
        let y = Tensor32::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = evaluate(&yhat, &y).unwrap();
        assert_eq!(m.samples, 1);
        assert_eq!(m.overall, Metric { mse: 1.5, mae: 1.0 });
        assert_eq!(m.per_variable[0], Metric { mse: 1.0, mae: 1.0 });
        assert_eq!(m.per_variable[1], Metric { mse: 2.0, mae: 1.0 });
        assert_eq!(m.per_horizon[0], Metric { mse: 2.5, mae: 1.5 });
        assert_eq!(m.per_horizon[1], Metric { mse: 0.5, mae: 0.5 });
    }

    #[test]
    fn evaluate_rejects_bad_shapes() {
        let a = Tensor32::zeros(vec![1, 2, 2]);
        let b = Tensor32::zeros(vec![1, 2, 3]);
        assert!(matches!(evaluate(&a, &b).unwrap_err(), Error::Shape(_)));
        let flat = Tensor32::zeros(vec![2, 2]);
        assert!(matches!(evaluate(&flat, &flat).unwrap_err(), Error::Shape(_)));
    }

    #[test]
    fn promotion_is_relative_reduction_in_percent() {
        assert_eq!(promotion(2.0, 1.0).unwrap(), 50.0);
        assert_eq!(promotion(2.0, 2.5).unwrap(), -25.0);
        assert_eq!(promotion(4.0, 4.0).unwrap(), 0.0);
        assert!(matches!(
            promotion(0.0, 1.0).unwrap_err(),
            Error::UndefinedPromotion(_)
        ));
        assert!(matches!(
            promotion(f64::NAN, 1.0).unwrap_err(),
            Error::Numeric(_)
        ));
    }

    fn fake_run(stops: &[usize]) -> CalibrationRun {
        CalibrationRun {
            mode: CalibrationMode::PerGroup,
            spec: partition(Axis::Variable, stops.len(), 4, stops.len()).unwrap(),
            hyper: CalibrateHyper::default(),
            seed: 0,
            fingerprint: "fp".into(),
            socket_digest: "sock".into(),
            outcomes: stops
                .iter()
                .enumerate()
                .map(|(i, &e)| PlugOutcome {
                    plug_id: i,
                    io: 4,
                    stop_epoch: e,
                    best_epoch: e.saturating_sub(1).max(1),
                    best_val: 0.5,
                    train_curve: vec![1.0; e],
                    val_curve: vec![0.9; e],
                    digest: format!("d{i}"),
                })
                .collect(),
        }
    }

    #[test]
    fn mtlc_report_summarizes_stop_spread() {
        let r = MtlcReport::from_run(&fake_run(&[3, 10, 7])).unwrap();
        assert_eq!((r.min, r.max, r.range), (3, 10, 7));
        assert!((r.mean - 20.0 / 3.0).abs() < 1e-12);
        // population std of [3,10,7]: mean 6.666…, var (13.444+11.111+0.111)/3
        let want = ((3.0f64 - 20.0 / 3.0).powi(2)
            + (10.0f64 - 20.0 / 3.0).powi(2)
            + (7.0f64 - 20.0 / 3.0).powi(2))
            / 3.0;
        assert!((r.std - want.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn transfer_scores_bank_on_foreign_cache() {
        let (n, s, w) = (3, 4, 20);
        let mut rng = Rng::new(31);
        let y: Vec<f32> = (0..w * n * s).map(|_| rng.next_normal() as f32).collect();
        let yhat: Vec<f32> = y.iter().map(|v| 0.8 * v + 0.1).collect();
        let cache = PredictionCache::new(
            Split::Test,
            Tensor32::new(vec![w, n, s], yhat).unwrap(),
            Tensor32::new(vec![w, n, s], y).unwrap(),
            "fp".into(),
            "sock-b".into(),
        )
        .unwrap();
        let bank = PlugBank::init(partition(Axis::Variable, n, s, n).unwrap(), 8, 1e-5, 5).unwrap();
        let rep = transfer(&bank, "sock-a", &cache).unwrap();
        assert_eq!(rep.from_socket, "sock-a");
        assert_eq!(rep.to_socket, "sock-b");
        // promotion consistent with its own tables
        let want = promotion(rep.base.overall.mse, rep.calibrated.overall.mse).unwrap();
        assert_eq!(rep.promotion_pct, want);
        // geometry mismatch is rejected
        let bad = PlugBank::init(partition(Axis::Variable, n + 1, s, 2).unwrap(), 8, 1e-5, 5).unwrap();
        assert!(matches!(
            transfer(&bad, "sock-a", &cache).unwrap_err(),
            Error::Shape(_)
        ));
    }
}
