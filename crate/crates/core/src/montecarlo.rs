//! Seeded Monte Carlo sweeps over β, N or SNR.
//!
//! Each axis value gets its own truth (stiffness law with bell-shaped
//! amplitudes), `trials` noisy realisations and one set of bounds. Trials
//! run in parallel but every random stream is derived from
//! `(master_seed, axis_index, trial_index)` and all reductions run in trial
//! order, so results do not depend on the thread count.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::compute_bounds;
use crate::error::{Error, Result};
use crate::estimators::{harmonic_mle, unstructured_mle};
use crate::model::{bell_amplitudes, synthesize_true, InharmonicityLaw, TrueSignalSpec};
use crate::pseudo_true::SearchConfig;

/// Stream tag for the phase draws that feed the bound curves.
const BOUND_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Beta,
    #[serde(alias = "n")]
    Samples,
    Snr,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "beta" => Ok(Self::Beta),
            "n" | "samples" => Ok(Self::Samples),
            "snr" => Ok(Self::Snr),
            other => Err(Error::InvalidParameter(format!("unknown sweep axis '{other}' (beta|n|snr)"))),
        }
    }
}

impl SweepAxis {
    /// Axis values used when a config leaves them empty.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            Self::Beta => (0..=8).map(|i| 10f64.powf(-7.0 + 0.5 * i as f64)).collect(),
            Self::Samples => vec![50.0, 100.0, 200.0, 400.0, 800.0, 1600.0, 3200.0],
            Self::Snr => (0..=10).map(|i| -10.0 + 5.0 * i as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    /// Empty means [`SweepAxis::default_values`].
    pub values: Vec<f64>,
    pub beta: f64,
    pub samples: usize,
    pub snr_db: f64,
    pub trials: usize,
    pub harmonics: usize,
    pub omega: f64,
    /// Width `w` of the amplitude profile `exp(−(k−K/2)²/w)`.
    pub amplitude_width: f64,
    pub master_seed: u64,
    /// Draw one phase set per axis value instead of one per trial.
    pub fixed_phases: bool,
    pub run_unstructured: bool,
    /// Phase draws averaged into the bound curves when phases vary per trial.
    pub bound_phase_draws: usize,
    pub search: SearchConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: SweepAxis::Beta,
            values: Vec::new(),
            beta: 1e-4,
            samples: 200,
            snr_db: 10.0,
            trials: 1000,
            harmonics: 10,
            omega: PI / 40.0,
            amplitude_width: 20.0,
            master_seed: 0,
            fixed_phases: false,
            run_unstructured: true,
            bound_phase_draws: 50,
            search: SearchConfig::default(),
        }
    }
}

/// Fixed settings of one axis value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSetting {
    pub beta: f64,
    pub samples: usize,
    pub snr_db: f64,
}

impl SweepConfig {
    pub fn axis_values(&self) -> Vec<f64> {
        if self.values.is_empty() { self.axis.default_values() } else { self.values.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.harmonics == 0 {
            return bad("harmonics must be at least 1".into());
        }
        if !(self.omega > 0.0) || !(self.amplitude_width > 0.0) {
            return bad("omega and amplitude_width must be positive".into());
        }
        for v in self.axis_values() {
            self.setting(v)?;
        }
        Ok(())
    }

    /// Settings at axis value `v`.
    pub fn setting(&self, v: f64) -> Result<PointSetting> {
        let mut s = PointSetting { beta: self.beta, samples: self.samples, snr_db: self.snr_db };
        if !v.is_finite() {
            return Err(Error::InvalidParameter(format!("axis value {v} is not finite")));
        }
        match self.axis {
            SweepAxis::Beta => s.beta = v,
            SweepAxis::Samples => {
                if v.fract() != 0.0 || v < 1.0 {
                    return Err(Error::InvalidParameter(format!("sample count {v} is not a positive integer")));
                }
                s.samples = v as usize;
            }
            SweepAxis::Snr => s.snr_db = v,
        }
        if s.beta < 0.0 {
            return Err(Error::InvalidParameter(format!("β = {} is negative", s.beta)));
        }
        if s.samples < 3 * self.harmonics {
            return Err(Error::InvalidParameter(format!(
                "N = {} is too short for {} sinusoids",
                s.samples, self.harmonics
            )));
        }
        Ok(s)
    }

    /// True spec at a setting with the given phases.
    pub fn truth(&self, s: &PointSetting, phases: Vec<f64>) -> Result<TrueSignalSpec> {
        let law = InharmonicityLaw::stiffness(self.omega, s.beta)?;
        TrueSignalSpec::from_law(&law, bell_amplitudes(self.harmonics, self.amplitude_width), phases, 1.0)?
            .with_snr_db(s.snr_db)
    }

    fn search(&self) -> SearchConfig {
        let mut search = self.search.clone();
        if search.window.is_none() && search.hint.is_none() {
            search.hint = Some(self.omega);
        }
        search
    }
}

/// Deterministic 64-bit seed for `(master, axis_index, trial_index)`.
pub fn derive_seed(master: u64, axis_index: u64, trial_index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(master) ^ axis_index) ^ trial_index)
}

fn draw_phases<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(0.0..TAU)).collect()
}

/// `k` phases uniform on `[0, 2π)` from a ChaCha8 stream seeded with `seed`.
pub fn seeded_phases(k: usize, seed: u64) -> Vec<f64> {
    draw_phases(k, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Error statistics of one estimator at one axis value (converged trials only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStats {
    pub mse: f64,
    /// Population variance of the recorded estimates.
    pub variance: f64,
    /// Squared mean error of the recorded estimates.
    pub bias_sq: f64,
    pub mean: f64,
    pub n_converged: usize,
    pub n_failed: usize,
}

impl EstimatorStats {
    fn from_estimates(estimates: &[Option<f64>], truth: f64) -> Self {
        let kept: Vec<f64> = estimates.iter().flatten().copied().collect();
        let m = kept.len() as f64;
        let (mean, mse, variance) = if kept.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            let mean = kept.iter().sum::<f64>() / m;
            let mse = kept.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / m;
            let variance = kept.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
            (mean, mse, variance)
        };
        Self {
            mse,
            variance,
            bias_sq: (mean - truth).powi(2),
            mean,
            n_converged: kept.len(),
            n_failed: estimates.len() - kept.len(),
        }
    }
}

/// Bound curves at one axis value, averaged over the phase draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointBounds {
    pub omega0: f64,
    /// `(ω₀ − ν₁)²`.
    pub bias_sq: f64,
    pub mse_lb: f64,
    pub mcrlb_exact: f64,
    pub mcrlb_asymp: f64,
    pub crlb_sine: f64,
    pub crlb_harmonic: f64,
    pub phase_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis_value: f64,
    pub truth_nu1: f64,
    pub harmonic: EstimatorStats,
    pub unstructured: Option<EstimatorStats>,
    pub bounds: Option<PointBounds>,
    pub bound_error: Option<String>,
    /// Seed of trial 0 at this axis value.
    pub first_trial_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub points: Vec<SweepPoint>,
}

fn point_bounds(config: &SweepConfig, s: &PointSetting, axis_index: u64) -> Result<PointBounds> {
    let draws = if config.fixed_phases { 1 } else { config.bound_phase_draws.max(1) };
    let search = config.search();
    let reports = (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.master_seed, axis_index, BOUND_STREAM + d as u64));
            let spec = config.truth(s, draw_phases(config.harmonics, &mut rng))?;
            compute_bounds(&spec, s.samples, &search)
        })
        .collect::<Result<Vec<_>>>()?;
    let m = reports.len() as f64;
    let avg = |f: &dyn Fn(&crate::bounds::BoundReport) -> f64| reports.iter().map(f).sum::<f64>() / m;
    Ok(PointBounds {
        omega0: avg(&|r| r.omega0),
        bias_sq: avg(&|r| r.bias[0].powi(2)),
        mse_lb: avg(&|r| r.mse_lower_freqs[0]),
        mcrlb_exact: avg(&|r| r.mcrlb_exact_omega),
        mcrlb_asymp: avg(&|r| r.mcrlb_asymptotic_omega),
        crlb_sine: avg(&|r| r.crlb_unstructured_freqs[0]),
        crlb_harmonic: avg(&|r| r.crlb_harmonic_omega),
        phase_draws: reports.len(),
    })
}

fn run_point(config: &SweepConfig, axis_index: usize, value: f64) -> Result<SweepPoint> {
    let s = config.setting(value)?;
    let ai = axis_index as u64;
    let search = config.search();
    let fixed = if config.fixed_phases {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.master_seed, ai, BOUND_STREAM));
        Some(draw_phases(config.harmonics, &mut rng))
    } else {
        None
    };
    let reference = config.truth(&s, vec![0.0; config.harmonics])?;
    let nu1 = reference.frequencies()[0];

    let outcomes: Vec<(Option<f64>, Option<f64>)> = (0..config.trials)
        .into_par_iter()
        .map(|trial| -> Result<(Option<f64>, Option<f64>)> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.master_seed, ai, trial as u64));
            let phases = match &fixed {
                Some(p) => p.clone(),
                None => draw_phases(config.harmonics, &mut rng),
            };
            let spec = config.truth(&s, phases)?;
            let y = synthesize_true(&spec, s.samples, &mut rng);
            let h = harmonic_mle(&y, config.harmonics, &search)
                .ok()
                .filter(|e| e.converged)
                .and_then(|e| e.harmonic().map(|p| p.omega()));
            let u = if config.run_unstructured {
                unstructured_mle(&y, config.harmonics, spec.frequencies())
                    .ok()
                    .filter(|e| e.converged)
                    .map(|e| e.frequencies()[0])
            } else {
                None
            };
            Ok((h, u))
        })
        .collect::<Result<_>>()?;

    let harmonic: Vec<Option<f64>> = outcomes.iter().map(|o| o.0).collect();
    let unstructured = config.run_unstructured.then(|| {
        let u: Vec<Option<f64>> = outcomes.iter().map(|o| o.1).collect();
        EstimatorStats::from_estimates(&u, nu1)
    });
    let (bounds, bound_error) = match point_bounds(config, &s, ai) {
        Ok(b) => (Some(b), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(SweepPoint {
        axis_value: value,
        truth_nu1: nu1,
        harmonic: EstimatorStats::from_estimates(&harmonic, nu1),
        unstructured,
        bounds,
        bound_error,
        first_trial_seed: derive_seed(config.master_seed, ai, 0),
    })
}

/// Runs every axis value of the sweep.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    let points = config
        .axis_values()
        .into_iter()
        .enumerate()
        .map(|(i, v)| run_point(config, i, v))
        .collect::<Result<_>>()?;
    Ok(SweepResult { config: config.clone(), points })
}

/// One CSV row of figure data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub axis_value: f64,
    pub mse_empirical: f64,
    pub var_empirical: f64,
    pub bias_sq: f64,
    pub mse_lb: f64,
    pub mcrlb_exact: f64,
    pub mcrlb_asymp: f64,
    pub crlb_sine: f64,
    pub crlb_harmonic: f64,
    pub n_converged: usize,
}

impl FigureRow {
    fn new(p: &SweepPoint, stats: &EstimatorStats) -> Self {
        let b = |f: fn(&PointBounds) -> f64| p.bounds.as_ref().map_or(f64::NAN, f);
        Self {
            axis_value: p.axis_value,
            mse_empirical: stats.mse,
            var_empirical: stats.variance,
            bias_sq: stats.bias_sq,
            mse_lb: b(|b| b.mse_lb),
            mcrlb_exact: b(|b| b.mcrlb_exact),
            mcrlb_asymp: b(|b| b.mcrlb_asymp),
            crlb_sine: b(|b| b.crlb_sine),
            crlb_harmonic: b(|b| b.crlb_harmonic),
            n_converged: stats.n_converged,
        }
    }
}

impl SweepResult {
    /// Rows for the harmonic-model estimator.
    pub fn harmonic_rows(&self) -> Vec<FigureRow> {
        self.points.iter().map(|p| FigureRow::new(p, &p.harmonic)).collect()
    }

    /// Rows for the unstructured estimator, if it was run.
    pub fn unstructured_rows(&self) -> Option<Vec<FigureRow>> {
        self.points
            .iter()
            .map(|p| p.unstructured.as_ref().map(|s| FigureRow::new(p, s)))
            .collect()
    }
}

/// Writes rows with a mandatory header; numbers use shortest round-trip decimals.
pub fn write_figure_rows<W: std::io::Write>(rows: &[FigureRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record([
        "axis_value", "mse_empirical", "var_empirical", "bias_sq", "mse_lb",
        "mcrlb_exact", "mcrlb_asymp", "crlb_sine", "crlb_harmonic", "n_converged",
    ])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<path>` for the harmonic estimator and `<stem>_sine.<ext>` for the
/// unstructured one; returns the files written.
pub fn emit_figure_data(result: &SweepResult, path: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut written = vec![path.to_path_buf()];
    write_figure_rows(&result.harmonic_rows(), std::fs::File::create(path)?)?;
    if let Some(rows) = result.unstructured_rows().filter(|_| result.config.run_unstructured) {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("figure");
        let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
        let sine = path.with_file_name(format!("{stem}_sine.{ext}"));
        write_figure_rows(&rows, std::fs::File::create(&sine)?)?;
        written.push(sine);
    }
    Ok(written)
}

pub fn read_figure_rows<R: std::io::Read>(input: R) -> Result<Vec<FigureRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn read_figure_data(path: &Path) -> Result<Vec<FigureRow>> {
    read_figure_rows(std::fs::File::open(path)?)
}
