//! Dataset plumbing: raw multivariate series, z-score normalization fit on
//! the training split only, chronological splits, sliding windows, and the
//! binary tensor file format.

mod csv_io;
mod synth;
mod tensor_file;

pub use csv_io::{load_csv, write_csv};
pub use synth::{generate_synthetic, SynthSpec};
pub use tensor_file::{decode_tensor, read_tensor, tensor_bytes, write_tensor};

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::sha256_hex;
use crate::Tensor32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

// ─── raw series ──────────────────────────────────────────────────────────

/// An ingested multivariate series: `rows` time steps × `n` variables,
/// row-major, fully finite, optionally timestamped. Constant variables are
/// rejected here — they cannot be z-scored and a forecaster has nothing to
/// learn from them.
#[derive(Debug, Clone)]
pub struct RawSeries {
    pub name: String,
    pub variable_names: Vec<String>,
    pub timestamps: Option<Vec<String>>,
    values: Vec<f32>,
    rows: usize,
}

impl RawSeries {
    pub fn new(
        name: String,
        variable_names: Vec<String>,
        timestamps: Option<Vec<String>>,
        values: Vec<f32>,
    ) -> Result<Self> {
        let n = variable_names.len();
        if n == 0 {
            return Err(Error::Ingestion(format!("{name}: no variable columns")));
        }
        if values.is_empty() || !values.len().is_multiple_of(n) {
            return Err(Error::Ingestion(format!(
                "{name}: {} values do not form whole rows of {n}",
                values.len()
            )));
        }
        let rows = values.len() / n;
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Ingestion(format!(
                "{name}: non-finite value at row {}, column '{}'",
                pos / n,
                variable_names[pos % n]
            )));
        }
        {
            let mut seen = variable_names.clone();
            seen.sort();
            seen.dedup();
            if seen.len() != n {
                return Err(Error::Ingestion(format!("{name}: duplicate variable names")));
            }
        }
        if let Some(ts) = &timestamps {
            if ts.len() != rows {
                return Err(Error::Ingestion(format!(
                    "{name}: {} timestamps for {rows} rows",
                    ts.len()
                )));
            }
            for w in ts.windows(2) {
                if w[1] <= w[0] {
                    return Err(Error::Ingestion(format!(
                        "{name}: timestamps not strictly increasing at '{}' → '{}'",
                        w[0], w[1]
                    )));
                }
            }
        }
        for v in 0..n {
            let first = values[v];
            if (0..rows).all(|r| values[r * n + v] == first) {
                return Err(Error::Ingestion(format!(
                    "{name}: variable '{}' is constant",
                    variable_names[v]
                )));
            }
        }
        Ok(Self {
            name,
            variable_names,
            timestamps,
            values,
            rows,
        })
    }

    pub fn n(&self) -> usize {
        self.variable_names.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn value(&self, row: usize, var: usize) -> f32 {
        self.values[row * self.n() + var]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        let n = self.n();
        &self.values[row * n..(row + 1) * n]
    }
}

// ─── normalization ───────────────────────────────────────────────────────

/// Per-variable z-score parameters, fit on the training rows only (fitting
/// on more would leak the future into the past). Population std, f64
/// accumulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn fit(series: &RawSeries, rows: Range<usize>) -> Result<Self> {
        if rows.is_empty() || rows.end > series.rows() {
            return Err(Error::Config(format!(
                "normalization range {rows:?} invalid for {} rows",
                series.rows()
            )));
        }
        let n = series.n();
        let len = rows.len() as f64;
        let mut mean = vec![0.0f64; n];
        let mut std = vec![0.0f64; n];
        for v in 0..n {
            let mut sum = 0.0;
            for r in rows.clone() {
                sum += series.value(r, v) as f64;
            }
            mean[v] = sum / len;
            let mut varsum = 0.0;
            for r in rows.clone() {
                let d = series.value(r, v) as f64 - mean[v];
                varsum += d * d;
            }
            std[v] = (varsum / len).sqrt();
            if std[v] == 0.0 {
                return Err(Error::Ingestion(format!(
                    "variable '{}' is constant on the training rows; cannot normalize",
                    series.variable_names[v]
                )));
            }
        }
        Ok(Self { mean, std })
    }

    pub fn n(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    pub fn normalize(&self, value: f32, var: usize) -> f32 {
        ((value as f64 - self.mean[var]) / self.std[var]) as f32
    }

    #[inline]
    pub fn denormalize(&self, value: f32, var: usize) -> f32 {
        (value as f64 * self.std[var] + self.mean[var]) as f32
    }
}

// ─── chronological splits ────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl SplitRanges {
    pub fn get(&self, split: Split) -> Range<usize> {
        match split {
            Split::Train => self.train.clone(),
            Split::Val => self.val.clone(),
            Split::Test => self.test.clone(),
        }
    }
}

/// Standard ratios: 0.7/0.1/0.2, except the ETT family's conventional
/// 0.6/0.2/0.2 (triggered by dataset name prefix).
pub fn default_ratios(dataset_name: &str) -> [f64; 3] {
    if dataset_name.starts_with("ETT") {
        [0.6, 0.2, 0.2]
    } else {
        [0.7, 0.1, 0.2]
    }
}

/// Cuts [0, rows) into train/val/test at floor(rows·r₀) and
/// floor(rows·(r₀+r₁)). Order is always chronological; shuffling rows of a
/// time series would be data leakage, so there is no option for it.
pub fn split_chronological(rows: usize, ratios: [f64; 3]) -> Result<SplitRanges> {
    for r in ratios {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::Config(format!("split ratios must be positive, got {ratios:?}")));
        }
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Config(format!("split ratios sum to {sum}, want 1")));
    }
    let train_end = (rows as f64 * ratios[0]).floor() as usize;
    let val_end = (rows as f64 * (ratios[0] + ratios[1])).floor() as usize;
    let ranges = SplitRanges {
        train: 0..train_end,
        val: train_end..val_end,
        test: val_end..rows,
    };
    for (name, r) in [
        ("train", &ranges.train),
        ("val", &ranges.val),
        ("test", &ranges.test),
    ] {
        if r.is_empty() {
            return Err(Error::Config(format!(
                "{name} split is empty for {rows} rows and ratios {ratios:?}"
            )));
        }
    }
    Ok(ranges)
}

// ─── windows ─────────────────────────────────────────────────────────────

/// One forecasting example: `x` is the normalized look-back (n × t), `y`
/// the normalized target horizon (n × s), `origin` the absolute row where
/// the look-back starts.
#[derive(Debug, Clone)]
pub struct WindowSample {
    pub origin: usize,
    pub x: Tensor32,
    pub y: Tensor32,
}

#[derive(Debug, Clone)]
pub struct WindowSet {
    pub n: usize,
    pub t: usize,
    pub s: usize,
    pub samples: Vec<WindowSample>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Tiles `rows` with look-back/horizon windows at the given stride. Every
/// window lies entirely inside `rows`, so windows never straddle a split
/// boundary. Window count is floor((len − t − s)/stride) + 1.
pub fn make_windows(
    series: &RawSeries,
    stats: &NormStats,
    rows: Range<usize>,
    t: usize,
    s: usize,
    stride: usize,
) -> Result<WindowSet> {
    if t == 0 || s == 0 || stride == 0 {
        return Err(Error::Config(format!(
            "window parameters must be positive: t={t}, s={s}, stride={stride}"
        )));
    }
    if stats.n() != series.n() {
        return Err(Error::Shape(format!(
            "stats cover {} variables, series has {}",
            stats.n(),
            series.n()
        )));
    }
    let len = rows.len();
    if rows.end > series.rows() || len < t + s {
        return Err(Error::Config(format!(
            "range {rows:?} too short for t+s = {} rows",
            t + s
        )));
    }
    let n = series.n();
    let count = (len - t - s) / stride + 1;
    let mut samples = Vec::with_capacity(count);
    for k in 0..count {
        let origin = rows.start + k * stride;
        let mut x = vec![0.0f32; n * t];
        let mut y = vec![0.0f32; n * s];
        for v in 0..n {
            for j in 0..t {
                x[v * t + j] = stats.normalize(series.value(origin + j, v), v);
            }
            for j in 0..s {
                y[v * s + j] = stats.normalize(series.value(origin + t + j, v), v);
            }
        }
        samples.push(WindowSample {
            origin,
            x: Tensor32::new(vec![n, t], x)?,
            y: Tensor32::new(vec![n, s], y)?,
        });
    }
    Ok(WindowSet { n, t, s, samples })
}

// ─── prepared dataset ────────────────────────────────────────────────────

/// Everything downstream stages need: normalized windows per split plus a
/// content fingerprint that changes whenever the data, the normalization
/// stats, the split boundaries or the window geometry change.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub series_name: String,
    pub variable_names: Vec<String>,
    pub n: usize,
    pub t: usize,
    pub s: usize,
    pub stride: usize,
    pub stats: NormStats,
    pub ranges: SplitRanges,
    pub train: WindowSet,
    pub val: WindowSet,
    pub test: WindowSet,
    pub fingerprint: String,
}

impl PreparedData {
    pub fn windows(&self, split: Split) -> &WindowSet {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

pub fn prepare(
    series: &RawSeries,
    t: usize,
    s: usize,
    stride: usize,
    ratios: Option<[f64; 3]>,
) -> Result<PreparedData> {
    let ratios = ratios.unwrap_or_else(|| default_ratios(&series.name));
    let ranges = split_chronological(series.rows(), ratios)?;
    let stats = NormStats::fit(series, ranges.train.clone())?;
    let train = make_windows(series, &stats, ranges.train.clone(), t, s, stride)?;
    let val = make_windows(series, &stats, ranges.val.clone(), t, s, stride)?;
    let test = make_windows(series, &stats, ranges.test.clone(), t, s, stride)?;
    let fingerprint = dataset_fingerprint(series, &stats, &ranges, t, s, stride);
    Ok(PreparedData {
        series_name: series.name.clone(),
        variable_names: series.variable_names.clone(),
        n: series.n(),
        t,
        s,
        stride,
        stats,
        ranges,
        train,
        val,
        test,
        fingerprint,
    })
}

fn dataset_fingerprint(
    series: &RawSeries,
    stats: &NormStats,
    ranges: &SplitRanges,
    t: usize,
    s: usize,
    stride: usize,
) -> String {
    let mut buf = Vec::new();
    buf.extend_from_slice(b"sop-dataset-v1");
    for v in [
        series.rows(),
        series.n(),
        t,
        s,
        stride,
        ranges.train.start,
        ranges.train.end,
        ranges.val.start,
        ranges.val.end,
        ranges.test.start,
        ranges.test.end,
    ] {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for name in &series.variable_names {
        buf.extend_from_slice(&(name.len() as u64).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
    }
    for v in 0..stats.n() {
        buf.extend_from_slice(&stats.mean[v].to_le_bytes());
        buf.extend_from_slice(&stats.std[v].to_le_bytes());
    }
    sha256_hex([buf.as_slice()])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_series() -> RawSeries {
        // Single variable 0,1,2,...,9 — train rows 0..7 in the 0.7/0.1/0.2
        // split; but the oracle below uses an explicit range.
        RawSeries::new(
            "ramp".into(),
            vec!["a".into()],
            None,
            (0..10).map(|i| i as f32).collect(),
        )
        .unwrap()
    }

    #[test]
    fn norm_stats_oracle_on_ramp() {
        // train rows 0..7 hold 0..6: mean 3, population std = sqrt(28/7) = 2
        let s = ramp_series();
        let stats = NormStats::fit(&s, 0..7).unwrap();
        assert_eq!(stats.mean, vec![3.0]);
        assert_eq!(stats.std, vec![2.0]);
        assert_eq!(stats.normalize(0.0, 0), -1.5);
        assert_eq!(stats.normalize(6.0, 0), 1.5);
    }

    #[test]
    fn normalize_round_trips() {
        let s = ramp_series();
        let stats = NormStats::fit(&s, 0..7).unwrap();
        for r in 0..s.rows() {
            let v = s.value(r, 0);
            let back = stats.denormalize(stats.normalize(v, 0), 0);
            let tol = 1e-5 * (1.0 + v.abs());
            assert!((back - v).abs() <= tol, "{v} → {back}");
        }
    }

    #[test]
    fn constant_on_train_is_rejected() {
        let s = RawSeries::new(
            "c".into(),
            vec!["a".into()],
            None,
            vec![5.0, 5.0, 5.0, 5.0, 1.0, 9.0],
        )
        .unwrap();
        let err = NormStats::fit(&s, 0..4).unwrap_err();
        assert!(matches!(err, Error::Ingestion(_)), "{err:?}");
    }

    #[test]
    fn raw_series_validation() {
        // fully constant column
        let err = RawSeries::new(
            "x".into(),
            vec!["a".into(), "b".into()],
            None,
            vec![1.0, 5.0, 2.0, 5.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Ingestion(_)), "{err:?}");
        // non-finite cell
        let err = RawSeries::new(
            "x".into(),
            vec!["a".into()],
            None,
            vec![1.0, f32::NAN],
        )
        .unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
        // unsorted timestamps
        let err = RawSeries::new(
            "x".into(),
            vec!["a".into()],
            Some(vec!["2020-01-02".into(), "2020-01-01".into()]),
            vec![1.0, 2.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Ingestion(_)), "{err:?}");
    }

    #[test]
    fn split_boundaries_and_rules() {
        // 100 rows at 0.7/0.1/0.2 → 0..70, 70..80, 80..100
        let r = split_chronological(100, [0.7, 0.1, 0.2]).unwrap();
        assert_eq!(r.train, 0..70);
        assert_eq!(r.val, 70..80);
        assert_eq!(r.test, 80..100);
        // ETT convention switches on the name prefix
        assert_eq!(default_ratios("ETTh1"), [0.6, 0.2, 0.2]);
        assert_eq!(default_ratios("exchange"), [0.7, 0.1, 0.2]);
        // degenerate inputs
        assert!(split_chronological(3, [0.7, 0.1, 0.2]).is_err()); // empty val
        assert!(split_chronological(100, [0.5, 0.5, 0.5]).is_err());
        assert!(split_chronological(100, [1.0, -0.5, 0.5]).is_err());
    }

    #[test]
    fn window_count_and_contents() {
        // len 10, t=3, s=2, stride 1 → (10-5)/1 + 1 = 6 windows
        let s = ramp_series();
        let stats = NormStats::fit(&s, 0..10).unwrap();
        let ws = make_windows(&s, &stats, 0..10, 3, 2, 1).unwrap();
        assert_eq!(ws.len(), 6);
        assert_eq!(ws.samples[0].origin, 0);
        assert_eq!(ws.samples[5].origin, 5);
        // stride 2 → (10-5)/2 + 1 = 3
        let ws2 = make_windows(&s, &stats, 0..10, 3, 2, 2).unwrap();
        assert_eq!(ws2.len(), 3);
        // x/y adjacency: y starts right after x ends (f32 round-trip tolerance)
        let w = &ws.samples[1];
        let denorm = |v: f32| stats.denormalize(v, 0);
        let close = |a: f32, b: f32| (a - b).abs() < 1e-5;
        assert!(close(denorm(w.x.at(&[0, 0])), 1.0));
        assert!(close(denorm(w.x.at(&[0, 2])), 3.0));
        assert!(close(denorm(w.y.at(&[0, 0])), 4.0));
        assert!(close(denorm(w.y.at(&[0, 1])), 5.0));
    }

    #[test]
    fn exact_fit_yields_one_window() {
        let s = ramp_series();
        let stats = NormStats::fit(&s, 0..10).unwrap();
        let ws = make_windows(&s, &stats, 0..5, 3, 2, 1).unwrap();
        assert_eq!(ws.len(), 1);
        let err = make_windows(&s, &stats, 0..4, 3, 2, 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err:?}");
    }

    #[test]
    fn windows_respect_split_boundaries() {
        let s = RawSeries::new(
            "w".into(),
            vec!["a".into()],
            None,
            (0..80).map(|i| (i as f32).sin()).collect(),
        )
        .unwrap();
        let prepared = prepare(&s, 4, 2, 1, None).unwrap();
        for (set, range) in [
            (&prepared.train, &prepared.ranges.train),
            (&prepared.val, &prepared.ranges.val),
            (&prepared.test, &prepared.ranges.test),
        ] {
            for w in &set.samples {
                assert!(w.origin >= range.start);
                assert!(w.origin + prepared.t + prepared.s <= range.end);
            }
        }
    }

    #[test]
    fn fingerprint_tracks_stats_and_geometry() {
        let long_ramp = |scale: f32| {
            RawSeries::new(
                "ramp".into(),
                vec!["a".into()],
                None,
                (0..60).map(|i| i as f32 * scale).collect(),
            )
            .unwrap()
        };
        let s = long_ramp(1.0);
        let base = prepare(&s, 3, 2, 1, None).unwrap();
        let same = prepare(&s, 3, 2, 1, None).unwrap();
        assert_eq!(base.fingerprint, same.fingerprint);
        let other_geom = prepare(&s, 2, 2, 1, None).unwrap();
        assert_ne!(base.fingerprint, other_geom.fingerprint);
        // different data → different stats → different fingerprint
        let other_data = prepare(&long_ramp(2.0), 3, 2, 1, None).unwrap();
        assert_ne!(base.fingerprint, other_data.fingerprint);
    }
}
