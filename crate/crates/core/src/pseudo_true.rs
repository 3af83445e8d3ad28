//! Pseudo-true parameters of the harmonic model.
//!
//! Under Gaussian noise for both the true and the assumed model, the
//! KL-minimising harmonic parameters are the noise-free least-squares match
//! of the harmonic waveform to the true waveform, and the pseudo-true noise
//! variance is the true noise power plus the per-sample mismatch energy.
//! The harmonic fit itself ([`fit_harmonic`]) is shared with the noisy-data
//! maximum-likelihood estimator.

use std::cell::RefCell;
use std::f64::consts::{PI, TAU};

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{clean_waveform, model_gradient, synthesize_model, ComplexSeries, HarmonicParams, TrueSignalSpec};
use crate::projection::{minimize_bracketed, project, residual_from_correlations};

/// How the fundamental is searched: a uniform grid over a window, then a
/// bracketed refinement around the best grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Explicit `[lo, hi]` window in rad/sample; overrides `hint`.
    pub window: Option<(f64, f64)>,
    /// Approximate fundamental; the window becomes `[0.5 hint, 1.5 hint]`.
    pub hint: Option<f64>,
    /// Grid points per `2π/(NK)`, the main-lobe scale of the K-th harmonic.
    pub grid_density: f64,
    /// Final bracket width in rad/sample.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            window: None,
            hint: None,
            grid_density: 8.0,
            tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

impl SearchConfig {
    pub fn with_hint(mut self, hint: f64) -> Self {
        self.hint = Some(hint);
        self
    }

    pub fn with_window(mut self, lo: f64, hi: f64) -> Self {
        self.window = Some((lo, hi));
        self
    }

    /// Search window for a K-harmonic model on N samples.
    pub fn resolve_window(&self, order: usize, n: usize) -> Result<(f64, f64)> {
        let floor = PI / n as f64;
        let ceiling = TAU / order as f64 * (1.0 - 1e-12);
        let (lo, hi) = match (self.window, self.hint) {
            (Some((lo, hi)), _) => (lo.max(floor), hi.min(ceiling)),
            (None, Some(h)) => ((0.5 * h).max(floor), (1.5 * h).min(ceiling)),
            (None, None) => (floor, ceiling),
        };
        if !(lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "empty fundamental search window [{lo}, {hi}] for K={order}, N={n}"
            )));
        }
        Ok((lo, hi))
    }
}

/// Least-squares harmonic fit to a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicFit {
    pub params: HarmonicParams,
    /// `Σ_t |s_t − x̃_t(θ̂)|²`.
    pub residual_energy: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Best residual after each refinement step.
    pub residual_trace: Vec<f64>,
    /// Grid point the refinement started from.
    pub grid_omega: f64,
}

/// Pseudo-true parameters and noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoTrueResult {
    pub theta0: HarmonicParams,
    pub pseudo_variance: f64,
    pub residual_energy: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual_trace: Vec<f64>,
}

fn harmonic_freqs(omega: f64, order: usize) -> Vec<f64> {
    (1..=order).map(|k| k as f64 * omega).collect()
}

fn check_identifiable(order: usize, n: usize) -> Result<()> {
    if order == 0 {
        return Err(Error::InvalidParameter("model order must be at least 1".into()));
    }
    if n < 2 * order + 1 {
        return Err(Error::InvalidParameter(format!(
            "N={n} samples cannot identify a {order}-harmonic model (need N ≥ {})",
            2 * order + 1
        )));
    }
    Ok(())
}

/// Residual and `dR/dω` of the projected harmonic fit.
fn harmonic_objective(data: &[Complex64], order: usize, omega: f64) -> Result<(f64, f64)> {
    let p = project(data, &harmonic_freqs(omega, order))?;
    let d_omega = p
        .gradient
        .iter()
        .enumerate()
        .map(|(k, g)| (k + 1) as f64 * g)
        .sum();
    Ok((p.residual, d_omega))
}

fn fit_at(data: &[Complex64], order: usize, omega: f64) -> Result<(HarmonicParams, f64)> {
    let p = project(data, &harmonic_freqs(omega, order))?;
    let amplitudes: Vec<f64> = p.coeffs.iter().map(|c| c.norm()).collect();
    let phases: Vec<f64> = p.coeffs.iter().map(|c| c.arg()).collect();
    if let Some(k) = amplitudes.iter().position(|&r| r <= 0.0) {
        return Err(Error::Degenerate(format!(
            "harmonic {} has zero fitted amplitude at ω={omega}",
            k + 1
        )));
    }
    Ok((HarmonicParams::new(omega, phases, amplitudes)?, p.residual))
}

fn refine_bracket(
    data: &[Complex64],
    order: usize,
    lo: f64,
    hi: f64,
    grid_omega: f64,
    search: &SearchConfig,
) -> Result<HarmonicFit> {
    let line = minimize_bracketed(
        |w| harmonic_objective(data, order, w),
        lo,
        hi,
        search.tolerance,
        search.max_iterations,
    )?;
    let (params, residual_energy) = fit_at(data, order, line.x)?;
    Ok(HarmonicFit {
        params,
        residual_energy,
        converged: line.converged,
        iterations: line.iterations,
        residual_trace: line.trace,
        grid_omega,
    })
}

/// Harmonic least-squares fit: grid scan over the window, then refinement.
///
/// Grid points sit on multiples of `2π/M`, so every harmonic of every grid
/// point falls on a bin of one zero-padded M-point FFT of the data, with
/// `M` the power of two at or above `grid_density·N·K`. Ties on the grid go to the smallest ω.
pub fn fit_harmonic(series: &ComplexSeries, order: usize, search: &SearchConfig) -> Result<HarmonicFit> {
    let n = series.len();
    check_identifiable(order, n)?;
    let (lo, hi) = search.resolve_window(order, n)?;
    let m = (search.grid_density * (n * order) as f64).max(4.0 * TAU / (hi - lo)).ceil() as usize;
    let m = m.max(n).next_power_of_two();
    let step = TAU / m as f64;
    let data = series.samples();
    let energy = series.energy();

    let mut spectrum = data.to_vec();
    spectrum.resize(m, Complex64::new(0.0, 0.0));
    thread_local! {
        static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(m)).process(&mut spectrum);

    let first = (lo / step).ceil() as usize;
    let last = ((hi / step).floor() as usize).max(first);
    let values: Vec<Option<f64>> = (first..=last)
        .into_par_iter()
        .map(|i| {
            let b = DVector::from_iterator(order, (1..=order).map(|k| spectrum[(k * i) % m]));
            residual_from_correlations(&b, energy, &harmonic_freqs(i as f64 * step, order), n).ok()
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            if best.map_or(true, |(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    let (i, _) = best.ok_or_else(|| {
        Error::Degenerate(format!("no admissible grid point in [{lo}, {hi}]"))
    })?;
    let grid_omega = (first + i) as f64 * step;
    let a = (grid_omega - step).max(lo);
    let b = (grid_omega + step).min(hi);
    refine_bracket(data, order, a, b, grid_omega, search)
}

/// Refinement only, from a given starting fundamental with bracket half-width `half_width`.
pub fn refine_harmonic_from(
    series: &ComplexSeries,
    order: usize,
    start: f64,
    half_width: f64,
    search: &SearchConfig,
) -> Result<HarmonicFit> {
    check_identifiable(order, series.len())?;
    refine_bracket(series.samples(), order, start - half_width, start + half_width, start, search)
}

/// `ε_t(θ) = x̃_t(θ) − x_t`.
pub fn waveform_diff(theta: &HarmonicParams, spec: &TrueSignalSpec, n: usize) -> Result<ComplexSeries> {
    if theta.order() != spec.order() {
        return Err(Error::OrderMismatch { expected: spec.order(), found: theta.order() });
    }
    let model = synthesize_model(theta, n);
    let truth = clean_waveform(spec, n);
    Ok(model
        .samples()
        .iter()
        .zip(truth.samples())
        .map(|(a, b)| a - b)
        .collect::<Vec<_>>()
        .into())
}

/// `σ̆² + (1/N) Σ_t |ε_t(θ₀)|²`.
pub fn pseudo_variance(spec: &TrueSignalSpec, theta0: &HarmonicParams, n: usize) -> Result<f64> {
    let diff = waveform_diff(theta0, spec, n)?;
    Ok(spec.noise_variance() + diff.energy() / n as f64)
}

/// Computes θ₀ and the pseudo-true variance for `spec` observed over `n` samples.
pub fn solve_pseudo_true(spec: &TrueSignalSpec, n: usize, search: &SearchConfig) -> Result<PseudoTrueResult> {
    let order = spec.order();
    let clean = clean_waveform(spec, n);
    let fit = fit_harmonic(&clean, order, search)?;
    let residual_energy = waveform_diff(&fit.params, spec, n)?.energy();
    Ok(PseudoTrueResult {
        pseudo_variance: spec.noise_variance() + residual_energy / n as f64,
        theta0: fit.params,
        residual_energy,
        converged: fit.converged,
        iterations: fit.iterations,
        residual_trace: fit.residual_trace,
    })
}

/// `Σ_t ε^ℜ_t ∇x̃^ℜ_t + ε^ℑ_t ∇x̃^ℑ_t`; vanishes at θ₀.
pub fn optimality_gradient(theta: &HarmonicParams, spec: &TrueSignalSpec, n: usize) -> Result<Vec<f64>> {
    let diff = waveform_diff(theta, spec, n)?;
    let mut grad = vec![0.0; theta.dimension()];
    for (t, eps) in diff.samples().iter().enumerate() {
        for (g, d) in grad.iter_mut().zip(model_gradient(theta, t)) {
            *g += (eps.conj() * d).re;
        }
    }
    Ok(grad)
}

/// Scale for [`optimality_gradient`]: the Cauchy-Schwarz bound
/// `‖ε‖ · ‖∂x̃/∂θ_i‖` per component.
pub fn optimality_scale(theta: &HarmonicParams, spec: &TrueSignalSpec, n: usize) -> Result<Vec<f64>> {
    let resid = waveform_diff(theta, spec, n)?.energy().sqrt();
    let mut norms = vec![0.0; theta.dimension()];
    for t in 0..n {
        for (s, d) in norms.iter_mut().zip(model_gradient(theta, t)) {
            *s += d.norm_sqr();
        }
    }
    Ok(norms.into_iter().map(|s| resid * s.sqrt()).collect())
}
