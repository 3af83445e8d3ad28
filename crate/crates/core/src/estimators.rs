//! Maximum-likelihood estimators on noisy data.
//!
//! Under circular Gaussian noise both estimators reduce to nonlinear least
//! squares with the linear amplitudes projected out. The harmonic estimator
//! reuses the pseudo-true fit; the unstructured one refines K free
//! frequencies by cyclic coordinate descent from a given start.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{synthesize_true, ComplexSeries, HarmonicParams, TrueSignalSpec};
use crate::projection::{minimize_bracketed, project, Projection};
use crate::pseudo_true::{fit_harmonic, solve_pseudo_true, SearchConfig};

/// Free sinusoid parameters `{r_k, φ_k, ν_k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidSet {
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    pub frequencies: Vec<f64>,
}

impl SinusoidSet {
    fn from_coeffs(coeffs: &[Complex64], frequencies: Vec<f64>) -> Self {
        Self {
            amplitudes: coeffs.iter().map(|c| c.norm()).collect(),
            phases: coeffs.iter().map(|c| c.arg()).collect(),
            frequencies,
        }
    }

    pub fn order(&self) -> usize {
        self.frequencies.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum EstimatedParams {
    Harmonic(HarmonicParams),
    Unstructured(SinusoidSet),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub params: EstimatedParams,
    /// `(1/N) Σ_t |y_t − ŷ_t|²`.
    pub residual_variance: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Residual energy after each refinement step; non-increasing.
    pub residual_trace: Vec<f64>,
}

impl EstimateResult {
    /// Estimated sinusoid frequencies (`kω̂` for the harmonic model).
    pub fn frequencies(&self) -> Vec<f64> {
        match &self.params {
            EstimatedParams::Harmonic(p) => p.harmonic_frequencies(),
            EstimatedParams::Unstructured(s) => s.frequencies.clone(),
        }
    }

    pub fn harmonic(&self) -> Option<&HarmonicParams> {
        match &self.params {
            EstimatedParams::Harmonic(p) => Some(p),
            EstimatedParams::Unstructured(_) => None,
        }
    }

    pub fn sinusoids(&self) -> Option<&SinusoidSet> {
        match &self.params {
            EstimatedParams::Unstructured(s) => Some(s),
            EstimatedParams::Harmonic(_) => None,
        }
    }
}

/// Harmonic-model MLE of `y`; identical to the pseudo-true fit on the same input.
pub fn harmonic_mle(y: &ComplexSeries, order: usize, search: &SearchConfig) -> Result<EstimateResult> {
    let fit = fit_harmonic(y, order, search)?;
    Ok(EstimateResult {
        residual_variance: fit.residual_energy / y.len() as f64,
        params: EstimatedParams::Harmonic(fit.params),
        converged: fit.converged,
        iterations: fit.iterations,
        residual_trace: fit.residual_trace,
    })
}

/// Stopping and safety knobs for [`unstructured_mle_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnstructuredConfig {
    /// Relative residual change that ends the sweeps.
    pub relative_tolerance: f64,
    /// Largest frequency step (rad/sample) that also ends the sweeps.
    pub step_tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for UnstructuredConfig {
    fn default() -> Self {
        Self { relative_tolerance: 1e-12, step_tolerance: 1e-13, max_sweeps: 500 }
    }
}

/// Unstructured sinusoidal MLE refined from `init_freqs` with default knobs.
pub fn unstructured_mle(y: &ComplexSeries, order: usize, init_freqs: &[f64]) -> Result<EstimateResult> {
    unstructured_mle_with(y, order, init_freqs, &UnstructuredConfig::default())
}

/// Cyclic coordinate descent over the K frequencies.
///
/// Each coordinate takes a Newton step on the projected residual (curvature
/// from a gradient difference), confined to a trust half-width that starts at
/// `π/(2N)` and then tracks four times the last step; a step that does not
/// lower the residual falls back to a golden-section search on the same
/// interval. Frequencies closer than `π/(4N)` mark the result as not
/// converged.
pub fn unstructured_mle_with(
    y: &ComplexSeries,
    order: usize,
    init_freqs: &[f64],
    config: &UnstructuredConfig,
) -> Result<EstimateResult> {
    let n = y.len();
    if init_freqs.len() != order {
        return Err(Error::OrderMismatch { expected: order, found: init_freqs.len() });
    }
    if order == 0 || n < 3 * order {
        return Err(Error::InvalidParameter(format!(
            "N={n} samples cannot identify {order} free sinusoids"
        )));
    }
    let collision = PI / (4.0 * n as f64);
    for i in 0..order {
        for j in 0..i {
            if (init_freqs[i] - init_freqs[j]).abs() < collision {
                return Err(Error::InvalidParameter(format!(
                    "initial frequencies {} and {} are not distinct",
                    init_freqs[j], init_freqs[i]
                )));
            }
        }
    }

    let data = y.samples();
    let mut freqs = init_freqs.to_vec();
    let mut at = project(data, &freqs)?;
    let mut trace = vec![at.residual];
    let max_half = PI / (2.0 * n as f64);
    let probe = 1e-6 * max_half;
    let mut half = vec![max_half; order];
    let mut converged = false;
    let mut collided = false;
    let mut sweeps = 0;

    while sweeps < config.max_sweeps {
        sweeps += 1;
        let before = at.residual;
        let mut max_step = 0.0f64;
        for j in 0..order {
            let centre = freqs[j];
            match coordinate_update(data, &freqs, j, &at, half[j], probe) {
                Ok(Some((nu, p))) => {
                    let step = nu - centre;
                    max_step = max_step.max(step.abs());
                    half[j] = (4.0 * step.abs()).clamp(1e-9 * max_half, max_half);
                    freqs[j] = nu;
                    at = p;
                }
                Ok(None) => half[j] = (0.5 * half[j]).max(1e-9 * max_half),
                // a step into a neighbouring atom makes the Gram singular
                Err(Error::IllConditioned { .. }) => half[j] = (0.25 * half[j]).max(1e-9 * max_half),
                Err(e) => return Err(e),
            }
        }
        trace.push(at.residual);
        if (0..order).any(|i| (0..i).any(|j| (freqs[i] - freqs[j]).abs() < collision)) {
            collided = true;
            break;
        }
        let relative = if before > 0.0 { (before - at.residual) / before } else { 0.0 };
        if relative < config.relative_tolerance || max_step < config.step_tolerance {
            converged = true;
            break;
        }
    }
    if converged && !collided {
        polish_stationary(data, &mut freqs, probe, 1e-3 * max_half)?;
    }

    let p = project(data, &freqs)?;
    Ok(EstimateResult {
        residual_variance: p.residual / n as f64,
        params: EstimatedParams::Unstructured(SinusoidSet::from_coeffs(&p.coeffs, freqs)),
        converged: converged && !collided,
        iterations: sweeps,
        residual_trace: trace,
    })
}

/// Drives each gradient component to zero with small Newton steps. Near the
/// minimum the residual is flat to rounding while the gradient still
/// resolves the stationary point, so steps are kept while |gradient| shrinks.
fn polish_stationary(data: &[Complex64], freqs: &mut [f64], probe: f64, limit: f64) -> Result<()> {
    let mut at = project(data, freqs)?;
    for _ in 0..8 {
        let mut moved = false;
        for j in 0..freqs.len() {
            let g0 = at.gradient[j];
            if g0 == 0.0 {
                continue;
            }
            let mut trial = freqs.to_vec();
            trial[j] += probe;
            let curvature = (project(data, &trial)?.gradient[j] - g0) / probe;
            if curvature <= 0.0 {
                continue;
            }
            let step = g0 / curvature;
            if step.abs() > limit {
                continue;
            }
            trial[j] = freqs[j] - step;
            let p = project(data, &trial)?;
            if p.gradient[j].abs() < g0.abs() {
                moved |= trial[j] != freqs[j];
                freqs[j] = trial[j];
                at = p;
            }
        }
        if !moved {
            break;
        }
    }
    Ok(())
}

/// New value of frequency `j` and the projection there, or `None` when no
/// point in `[ν_j − half, ν_j + half]` lowers the residual.
fn coordinate_update(
    data: &[Complex64],
    freqs: &[f64],
    j: usize,
    at: &Projection,
    half: f64,
    probe: f64,
) -> Result<Option<(f64, Projection)>> {
    let centre = freqs[j];
    let mut trial = freqs.to_vec();
    let mut eval = |w: f64| {
        trial[j] = w;
        project(data, &trial)
    };
    let g0 = at.gradient[j];
    if g0 == 0.0 {
        return Ok(None);
    }
    let shifted = eval(centre + probe)?;
    let curvature = (shifted.gradient[j] - g0) / probe;
    if curvature > 0.0 {
        let nu = centre - (g0 / curvature).clamp(-half, half);
        let p = eval(nu)?;
        if p.residual <= at.residual {
            return Ok(Some((nu, p)));
        }
    }
    let line = minimize_bracketed(
        |w| eval(w).map(|p| (p.residual, p.gradient[j])),
        centre - half,
        centre + half,
        half * 1e-6,
        200,
    )?;
    if line.value <= at.residual && line.x != centre {
        let p = eval(line.x)?;
        if p.residual <= at.residual {
            return Ok(Some((line.x, p)));
        }
    }
    Ok(None)
}

/// One row of the consistency table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub samples: usize,
    pub omega0: f64,
    pub mean_omega: f64,
    /// Standard error of the mean of ω̂.
    pub std_error: f64,
    pub gap: f64,
    pub trials: usize,
}

impl ConsistencyRow {
    /// `|mean(ω̂) − ω₀|` in standard errors.
    pub fn gap_in_std_errors(&self) -> f64 {
        if self.std_error > 0.0 { self.gap / self.std_error } else { f64::INFINITY }
    }
}

/// Averages harmonic-MLE fundamentals over seeded trials for each N and
/// compares them with ω₀(N).
pub fn asymptotic_mle_consistency_check(
    spec: &TrueSignalSpec,
    sample_counts: &[usize],
    trials: usize,
    seed: u64,
    search: &SearchConfig,
) -> Result<Vec<ConsistencyRow>> {
    use rand::SeedableRng;
    use rayon::prelude::*;

    if trials < 2 {
        return Err(Error::InvalidParameter("consistency check needs at least two trials".into()));
    }
    sample_counts
        .iter()
        .enumerate()
        .map(|(ni, &n)| {
            let omega0 = solve_pseudo_true(spec, n, search)?.theta0.omega();
            let estimates: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|trial| {
                    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(crate::montecarlo::derive_seed(
                        seed, ni as u64, trial as u64,
                    ));
                    let y = synthesize_true(spec, n, &mut rng);
                    harmonic_mle(&y, spec.order(), search).map(|e| e.harmonic().map_or(f64::NAN, |p| p.omega()))
                })
                .collect::<Result<_>>()?;
            let m = trials as f64;
            let mean = estimates.iter().sum::<f64>() / m;
            let var = estimates.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (m - 1.0);
            Ok(ConsistencyRow {
                samples: n,
                omega0,
                mean_omega: mean,
                std_error: (var / m).sqrt(),
                gap: (mean - omega0).abs(),
                trials,
            })
        })
        .collect()
}
