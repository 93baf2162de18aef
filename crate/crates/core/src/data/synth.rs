use chrono::{Days, NaiveDate};
use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::features::standardize;
use super::{DataError, SeriesFrame};
use crate::rng::{derive_seed, seeded, stream};

/// One stationary stretch of the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    /// Own-lag coefficients `a_1..a_K`, shared by every column.
    pub ar: Vec<f64>,
    pub noise_scale: f64,
    pub drift: f64,
    pub length: usize,
}

/// Multivariate autoregressive generator:
/// `x_t = drift + Σ_k a_k x_{t-k} + C x_{t-1} + σ ε_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub regimes: Vec<Regime>,
    /// Square `N × N` cross-feature coupling; `coupling[j][i]` feeds column
    /// `i` at `t-1` into column `j` at `t`.
    pub coupling: Vec<Vec<f64>>,
    pub seed: u64,
    /// Leading fraction of rows used to standardize the target column.
    pub train_fraction: f64,
    pub standardize_target: bool,
}

impl SynthSpec {
    pub fn num_features(&self) -> usize {
        self.coupling.len()
    }

    pub fn total_length(&self) -> usize {
        self.regimes.iter().map(|r| r.length).sum()
    }

    /// Same spec with every regime length multiplied by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        for r in &mut self.regimes {
            r.length = ((r.length as f64 * factor).round() as usize).max(1);
        }
        self
    }

    fn validate(&self) -> Result<(), DataError> {
        let n = self.coupling.len();
        if n == 0 || self.coupling.iter().any(|row| row.len() != n) {
            return Err(DataError::InvalidSynth("coupling must be a non-empty square matrix".into()));
        }
        if self.regimes.is_empty() {
            return Err(DataError::InvalidSynth("at least one regime is required".into()));
        }
        for (i, r) in self.regimes.iter().enumerate() {
            if !(r.noise_scale >= 0.0) || !r.drift.is_finite() || r.ar.iter().any(|a| !a.is_finite()) {
                return Err(DataError::InvalidSynth(format!("regime {i} has invalid parameters")));
            }
            if r.length == 0 {
                return Err(DataError::InvalidSynth(format!("regime {i} has zero length")));
            }
        }
        if self.coupling.iter().flatten().any(|c| !c.is_finite()) {
            return Err(DataError::InvalidSynth("coupling has non-finite entries".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(DataError::InvalidSynth("train fraction must be in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesized {
    pub frame: SeriesFrame,
    pub warnings: Vec<String>,
}

/// Spectral radius of the companion matrix of the regime recursion.
pub(crate) fn spectral_radius(ar: &[f64], coupling: &[Vec<f64>]) -> f64 {
    let n = coupling.len();
    let k = ar.len().max(1);
    let dim = n * k;
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for lag in 0..k {
        let a = ar.get(lag).copied().unwrap_or(0.0);
        for j in 0..n {
            m[(j, lag * n + j)] += a;
            if lag == 0 {
                for i in 0..n {
                    m[(j, i)] += coupling[j][i];
                }
            }
        }
    }
    for b in 1..k {
        for j in 0..n {
            m[(b * n + j, (b - 1) * n + j)] = 1.0;
        }
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn synth_generate(spec: &SynthSpec) -> Result<Synthesized, DataError> {
    spec.validate()?;
    let n = spec.num_features();
    let total = spec.total_length();
    let mut rng = seeded(derive_seed(spec.seed, stream::DATA));
    let mut warnings = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(total);
    let mut t = 0usize;
    for (ri, regime) in spec.regimes.iter().enumerate() {
        let radius = spectral_radius(&regime.ar, &spec.coupling);
        let clip = if radius >= 1.0 {
            let bound = if regime.noise_scale > 0.0 {
                10.0 * regime.noise_scale
            } else {
                10.0 * regime.drift.abs().max(1.0)
            };
            warnings.push(format!(
                "regime {ri}: spectral radius {radius:.4} >= 1, values clipped at ±{bound}"
            ));
            Some(bound)
        } else {
            None
        };
        for _ in 0..regime.length {
            let mut x = vec![0.0; n];
            for (j, xj) in x.iter_mut().enumerate() {
                let mut v = regime.drift;
                for (k, a) in regime.ar.iter().enumerate() {
                    if t > k {
                        v += a * rows[t - 1 - k][j];
                    }
                }
                if t > 0 {
                    for i in 0..n {
                        v += spec.coupling[j][i] * rows[t - 1][i];
                    }
                }
                let eps: f64 = StandardNormal.sample(&mut rng);
                v += regime.noise_scale * eps;
                if let Some(b) = clip {
                    v = v.clamp(-b, b);
                }
                *xj = v;
            }
            rows.push(x);
            t += 1;
        }
    }
    let mut columns: Vec<(String, Vec<f64>)> = (0..n)
        .map(|j| {
            let name = if j == 0 { "target".to_string() } else { format!("f{j}") };
            (name, rows.iter().map(|r| r[j]).collect())
        })
        .collect();
    if spec.standardize_target {
        let fit = ((total as f64 * spec.train_fraction).round() as usize).clamp(1, total);
        standardize(&mut columns[0].1, fit);
    }
    let start = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    let timestamps = (0..total).map(|i| start + Days::new(i as u64)).collect();
    Ok(Synthesized {
        frame: SeriesFrame::new(timestamps, columns)?,
        warnings,
    })
}

pub const PRESET_NAMES: [&str; 3] = ["synth-financial", "synth-industrials", "synth-technology"];

const PRESET_FEATURES: usize = 12;

fn regime(ar: &[f64], noise_scale: f64, drift: f64, length: usize) -> Regime {
    Regime {
        ar: ar.to_vec(),
        noise_scale,
        drift,
        length,
    }
}

/// Named twelve-column generators. All three share the target's dependence
/// on `f1..f3` and the chain `f1 -> f2 -> f3`; regimes and the remaining
/// couplings differ per preset.
pub fn preset(name: &str) -> Result<SynthSpec, DataError> {
    let mut c = vec![vec![0.0; PRESET_FEATURES]; PRESET_FEATURES];
    c[0][1] = 0.6;
    c[0][2] = -0.4;
    c[0][3] = 0.3;
    c[2][1] = 0.3;
    c[3][2] = 0.3;
    let (regimes, seed) = match name {
        "synth-financial" => {
            c[0][4] = 0.5;
            c[5][4] = 0.4;
            c[7][6] = 0.5;
            (
                vec![regime(&[0.5], 1.0, 0.0, 1000), regime(&[0.3, 0.2], 1.4, 0.05, 1000)],
                101,
            )
        }
        "synth-industrials" => {
            c[0][5] = 0.5;
            c[0][8] = -0.3;
            c[6][5] = 0.4;
            (
                vec![regime(&[0.6], 0.8, 0.0, 1200), regime(&[0.4], 1.2, -0.05, 800)],
                202,
            )
        }
        "synth-technology" => {
            c[0][6] = 0.6;
            c[0][9] = 0.3;
            c[10][9] = 0.5;
            (
                vec![
                    regime(&[0.4, 0.1], 1.2, 0.02, 700),
                    regime(&[0.6], 1.0, 0.0, 700),
                    regime(&[0.2], 1.5, 0.0, 600),
                ],
                303,
            )
        }
        other => return Err(DataError::UnknownPreset(other.to_string())),
    };
    Ok(SynthSpec {
        regimes,
        coupling: c,
        seed,
        train_fraction: 0.7,
        standardize_target: true,
    })
}
