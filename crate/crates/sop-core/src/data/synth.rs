use serde::{Deserialize, Serialize};

use crate::data::RawSeries;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Recipe for a synthetic multivariate series in which every variable gets
/// its own period, trend slope and noise level, plus a common factor mixed
/// in with weight `rho`. Deliberately heterogeneous per-variable dynamics
/// are the whole point: they give the variables different learnability,
/// which is the regime where per-target calibration schedules diverge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub length: usize,
    /// Sinusoid period per variable, in time steps (≥ 2).
    pub periods: Vec<u32>,
    /// Gaussian noise std per variable (≥ 0).
    pub noise_std: Vec<f64>,
    /// Linear trend slope per variable, per time step.
    pub slopes: Vec<f64>,
    /// Weight of the shared standard-normal factor, in [0, 1).
    pub rho: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("synth: n must be ≥ 1".into()));
        }
        if self.length < 2 {
            return Err(Error::Config("synth: length must be ≥ 2".into()));
        }
        for (what, len) in [
            ("periods", self.periods.len()),
            ("noise_std", self.noise_std.len()),
            ("slopes", self.slopes.len()),
        ] {
            if len != self.n {
                return Err(Error::Config(format!(
                    "synth: {what} has {len} entries for n = {}",
                    self.n
                )));
            }
        }
        if let Some(p) = self.periods.iter().find(|&&p| p < 2) {
            return Err(Error::Config(format!("synth: period {p} < 2")));
        }
        if let Some(v) = self.noise_std.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Config(format!("synth: noise_std {v} invalid")));
        }
        if let Some(v) = self.slopes.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("synth: slope {v} invalid")));
        }
        if !(self.rho.is_finite() && (0.0..1.0).contains(&self.rho)) {
            return Err(Error::Config(format!("synth: rho {} outside [0, 1)", self.rho)));
        }
        Ok(())
    }
}

/// value(t, i) = sin(2πt/periodᵢ) + slopeᵢ·t + ρ·shared(t) + noiseᵢ·εᵢ(t)
///
/// The shared factor and each variable's noise come from independent
/// derived streams, so the output is a pure function of the spec.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<RawSeries> {
    spec.validate()?;
    let root = Rng::new(spec.seed);
    let shared: Vec<f64> = {
        let mut r = root.derive("shared");
        (0..spec.length).map(|_| r.next_normal()).collect()
    };
    let mut values = vec![0.0f32; spec.length * spec.n];
    let noise_root = root.derive("noise");
    for i in 0..spec.n {
        let mut noise = noise_root.derive_u64(i as u64);
        let period = spec.periods[i] as f64;
        for t in 0..spec.length {
            let tt = t as f64;
            let v = (2.0 * std::f64::consts::PI * tt / period).sin()
                + spec.slopes[i] * tt
                + spec.rho * shared[t]
                + spec.noise_std[i] * noise.next_normal();
            values[t * spec.n + i] = v as f32;
        }
    }
    RawSeries::new(
        "synthetic".into(),
        (0..spec.n).map(|i| format!("v{i}")).collect(),
        None,
        values,
    )
}
