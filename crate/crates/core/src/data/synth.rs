use serde::{Deserialize, Serialize};

use super::sample::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::numcore::{DenseArray, RngStream};

/// Parameters of the synthetic bag + clinical-record generator.
///
/// Each sample carries a hidden image score `z_img = image_signal·(2y−1) + N(0,1)` and an
/// independent clinical score built the same way from `clinical_signal`. The image score is
/// written along a fixed direction into a random `signal_fraction` of the patches; an equal
/// number of nuisance patches get a label-free offset along an orthogonal direction. The
/// clinical score drives tumor size and shifts the ER/PR/HER2 marker rates; age carries no
/// label information.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub t_min: usize,
    pub t_max: usize,
    pub d_w: usize,
    pub d_c: usize,
    pub image_signal: f64,
    pub clinical_signal: f64,
    /// Per-coordinate patch noise σ.
    pub noise: f64,
    /// Probability of the positive label.
    pub positive_rate: f64,
    pub signal_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 600,
            t_min: 8,
            t_max: 32,
            d_w: 32,
            d_c: 5,
            image_signal: 0.8,
            clinical_signal: 1.2,
            noise: 1.0,
            positive_rate: 0.4,
            signal_fraction: 0.25,
            seed: 0,
        }
    }
}

/// Amplitude of salient-patch offsets relative to the hidden score.
const PATCH_GAIN: f64 = 1.5;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be >= 1".into()));
        }
        if self.t_min == 0 || self.t_max < self.t_min {
            return Err(Error::Config(format!(
                "patch range must satisfy 1 <= t_min <= t_max, got {}..{}",
                self.t_min, self.t_max
            )));
        }
        if self.d_w < 2 || self.d_c == 0 {
            return Err(Error::Config("need d_w >= 2 and d_c >= 1".into()));
        }
        if self.image_signal < 0.0 || self.clinical_signal < 0.0 || self.noise < 0.0 {
            return Err(Error::Config("signal strengths and noise must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.positive_rate) || !(0.0..=1.0).contains(&self.signal_fraction) {
            return Err(Error::Config("positive_rate and signal_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

fn unit(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v {
        *x /= n;
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Signal and nuisance directions in patch space (orthonormal).
pub fn synth_directions(cfg: &SynthConfig) -> (Vec<f64>, Vec<f64>) {
    let mut r = RngStream::new(cfg.seed).substream("synth").substream("directions");
    let mut u: Vec<f64> = (0..cfg.d_w).map(|_| r.normal()).collect();
    unit(&mut u);
    let mut v: Vec<f64> = (0..cfg.d_w).map(|_| r.normal()).collect();
    let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
    for (vi, ui) in v.iter_mut().zip(&u) {
        *vi -= dot * ui;
    }
    unit(&mut v);
    (u, v)
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let (u, v) = synth_directions(cfg);
    let root = RngStream::new(cfg.seed).substream("synth");
    // Marker intercepts and label weights for ER, PR, HER2 (extra columns reuse the last).
    let marker_base = [0.6, 0.2, -1.0];
    let marker_gain = [0.9, 0.7, 0.6];
    let width = (cfg.n.max(1) - 1).to_string().len().max(4);

    let mut samples = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let mut r = root.substream(&format!("sample{i}"));
        let label = usize::from(r.bernoulli(cfg.positive_rate));
        let sign = if label == 1 { 1.0 } else { -1.0 };

        let z_img = cfg.image_signal * sign + r.normal();
        let t = r.int_inclusive(cfg.t_min, cfg.t_max);
        let k = ((cfg.signal_fraction * t as f64).round() as usize).clamp(1, t);
        let order = r.permutation(t);
        let mut bag = DenseArray::zeros(t, cfg.d_w);
        for p in 0..t {
            for x in bag.row_mut(p) {
                *x = cfg.noise * r.normal();
            }
        }
        for &p in &order[..k] {
            for (x, ui) in bag.row_mut(p).iter_mut().zip(&u) {
                *x += PATCH_GAIN * z_img * ui;
            }
        }
        for &p in order.iter().skip(k).take(k) {
            let nuisance = PATCH_GAIN * 2.0 * r.normal();
            for (x, vi) in bag.row_mut(p).iter_mut().zip(&v) {
                *x += nuisance * vi;
            }
        }

        let z_cli = cfg.clinical_signal * sign + r.normal();
        let mut clinical = Vec::with_capacity(cfg.d_c);
        for c in 0..cfg.d_c {
            let value = match c {
                0 => 55.0 + 10.0 * r.normal(),
                1 => (2.5 + 0.8 * z_cli).max(0.1),
                _ => {
                    let m = (c - 2).min(marker_base.len() - 1);
                    let p = sigmoid(marker_base[m] + marker_gain[m] * cfg.clinical_signal * sign);
                    f64::from(u8::from(r.bernoulli(p)))
                }
            };
            clinical.push(value);
        }
        samples.push(Sample::new(format!("s{i:0width$}"), label, bag, Some(clinical))?);
    }
    Dataset::new(samples, cfg.d_w, cfg.d_c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_shaped() {
        let cfg = SynthConfig {
            n: 20,
            ..SynthConfig::default()
        };
        let a = synth_generate(&cfg).unwrap();
        let b = synth_generate(&cfg).unwrap();
        assert_eq!(a.len(), 20);
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.id, y.id);
            assert_eq!(x.bag, y.bag);
            assert_eq!(x.clinical, y.clinical);
            assert!((8..=32).contains(&x.bag.rows()));
            let c = x.clinical.as_ref().unwrap();
            assert!(c[2..].iter().all(|&m| m == 0.0 || m == 1.0));
        }
        let c = synth_generate(&SynthConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.samples[0].bag, c.samples[0].bag);
    }

    #[test]
    fn directions_orthonormal() {
        let (u, v) = synth_directions(&SynthConfig::default());
        let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        let nu: f64 = u.iter().map(|a| a * a).sum();
        assert!(dot.abs() < 1e-12 && (nu - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_config() {
        let cfg = SynthConfig {
            t_min: 0,
            ..SynthConfig::default()
        };
        assert!(synth_generate(&cfg).is_err());
    }
}
