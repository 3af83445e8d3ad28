//! Misspecified and classical Cramér-Rao bounds.
//!
//! With θ₀ the pseudo-true harmonic parameters and `σ²` the pseudo-true
//! noise variance, the sandwich matrices are
//!
//! ```text
//! F  = (2σ̆²/σ⁴) Σ_t ∇x̃ᴿ∇x̃ᴿᵀ + ∇x̃ᴵ∇x̃ᴵᵀ
//! F̃  = (2/σ²)   Σ_t εᴿ ∇²x̃ᴿ + εᴵ ∇²x̃ᴵ
//! A  = −(σ²/σ̆²) F − F̃
//! ```
//!
//! and the misspecified bound on the covariance of any estimator unbiased
//! for θ₀ is `A⁻¹ F A⁻¹`. For large N the ω entry has the closed form
//! `σ̆² (C + E) / (C − E + Z + D)²`, computed here twice: from explicit
//! per-harmonic trigonometric sums, and from the arrowhead decomposition of
//! the finite-N matrices (η, z, d, ρ, u).

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{normal_inverse_diagonal, symmetric_inverse};
use crate::model::{model_gradient, model_hessian, model_hessian_entries, HarmonicParams, TrueSignalSpec};
use crate::pseudo_true::{solve_pseudo_true, waveform_diff, PseudoTrueResult, SearchConfig};

/// `F`, `F̃` and `A` evaluated at θ₀, in the canonical θ ordering.
#[derive(Debug, Clone)]
pub struct SandwichMatrices {
    pub f: DMatrix<f64>,
    pub f_tilde: DMatrix<f64>,
    pub a: DMatrix<f64>,
    /// Condition estimate of the equilibrated `A`.
    pub a_condition: f64,
}

/// Terms of the closed-form asymptotic bound on ω₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticTerms {
    pub c: f64,
    pub z: f64,
    pub d: f64,
    pub e: f64,
    /// `φ_k − φ̆_k`.
    pub phase_diffs: Vec<f64>,
    /// `kω₀ − ν_k`.
    pub freq_diffs: Vec<f64>,
}

impl AsymptoticTerms {
    /// `σ̆² (C + E) / (C − E + Z + D)²`.
    pub fn bound(&self, noise_variance: f64) -> Result<f64> {
        let denom = self.c - self.e + self.z + self.d;
        if denom.abs() <= 1e-12 * self.c.abs() {
            return Err(Error::Degenerate(format!(
                "asymptotic bound denominator C−E+Z+D = {denom:e} vanishes"
            )));
        }
        Ok(noise_variance * (self.c + self.e) / (denom * denom))
    }
}

/// Finite-N arrowhead quantities of `A(θ₀)` and `F(θ₀)`.
///
/// `α = [φ_1..φ_K, r_1..r_K]` indexes `d`, `z_*` and `u[1..]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrowheadTerms {
    pub eta_model: f64,
    pub eta_resid: f64,
    pub d: Vec<f64>,
    pub z_model: Vec<f64>,
    pub z_resid: Vec<f64>,
    pub rho: f64,
    /// `u = u_x̃ + u_ε`, length 2K+1, first entry −1.
    pub u: Vec<f64>,
}

impl ArrowheadTerms {
    fn weighted_dot(a: &[f64], b: &[f64], d: &[f64]) -> f64 {
        a.iter().zip(b).zip(d).map(|((x, y), w)| x * y / w).sum()
    }

    /// `u_x̃ = [−1, (z_x̃./d)ᵀ]ᵀ`.
    pub fn u_model(&self) -> Vec<f64> {
        std::iter::once(-1.0)
            .chain(self.z_model.iter().zip(&self.d).map(|(z, d)| z / d))
            .collect()
    }

    /// `u_ε = [0, (z_ε./d)ᵀ]ᵀ`.
    pub fn u_resid(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain(self.z_resid.iter().zip(&self.d).map(|(z, d)| z / d))
            .collect()
    }

    /// `u_aᵀ M u_b` with `M = [η_x̃ z_x̃ᵀ; z_x̃ diag(d)]`, the arrowhead shape
    /// of F up to the factor `σ̆²/σ⁴`.
    pub fn model_form(&self, ua: &[f64], ub: &[f64]) -> f64 {
        let mut s = ua[0] * self.eta_model * ub[0];
        for i in 0..self.d.len() {
            s += ua[0] * self.z_model[i] * ub[i + 1];
            s += ua[i + 1] * self.z_model[i] * ub[0];
            s += ua[i + 1] * self.d[i] * ub[i + 1];
        }
        s
    }

    pub fn terms(&self, theta0: &HarmonicParams, spec: &TrueSignalSpec) -> AsymptoticTerms {
        let (phase_diffs, freq_diffs) = diffs(theta0, spec);
        AsymptoticTerms {
            c: self.eta_model - Self::weighted_dot(&self.z_model, &self.z_model, &self.d),
            e: Self::weighted_dot(&self.z_resid, &self.z_resid, &self.d),
            d: -2.0 * Self::weighted_dot(&self.z_model, &self.z_resid, &self.d),
            z: self.eta_resid,
            phase_diffs,
            freq_diffs,
        }
    }

    /// `σ̆² uᵀMu / ρ²` (equal to `σ̆²(C+E)/ρ²`).
    pub fn bound(&self, noise_variance: f64) -> f64 {
        let um = self.u_model();
        let ur = self.u_resid();
        let numer = self.model_form(&um, &um) + self.model_form(&ur, &ur);
        noise_variance * numer / (self.rho * self.rho)
    }
}

/// All bounds for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub order: usize,
    pub samples: usize,
    pub noise_variance: f64,
    pub pseudo_variance: f64,
    pub omega0: f64,
    pub converged: bool,
    /// Diagonal of `A⁻¹FA⁻¹`, θ ordering.
    pub mcrlb_exact_diag: Vec<f64>,
    pub mcrlb_exact_omega: f64,
    #[serde(rename = "mcrlb_asymp_omega")]
    pub mcrlb_asymptotic_omega: f64,
    /// ω entry of the inverse harmonic-model FIM at θ₀.
    pub crlb_harmonic_omega: f64,
    /// `σ̆²/C`, the large-N harmonic CRLB.
    pub crlb_harmonic_omega_asymp: f64,
    /// Exact-FIM unstructured bound on each `ν_k`.
    #[serde(rename = "crlb_sine_k")]
    pub crlb_unstructured_freqs: Vec<f64>,
    /// Per-sinusoid `6σ̆²/(r̆_k² N(N²−1))`.
    #[serde(rename = "crlb_sine_decoupled_k")]
    pub crlb_unstructured_decoupled: Vec<f64>,
    /// `kω₀ − ν_k`.
    #[serde(rename = "bias_k")]
    pub bias: Vec<f64>,
    #[serde(rename = "mse_lb_k")]
    pub mse_lower_freqs: Vec<f64>,
    pub asymptotic_terms: AsymptoticTerms,
}

impl BoundReport {
    /// Flat CSV header; per-harmonic columns are suffixed `_1..K`.
    pub fn csv_header(order: usize) -> Vec<String> {
        let mut h: Vec<String> = ["samples", "noise_variance", "pseudo_variance", "omega0"]
            .iter()
            .chain(&["mcrlb_exact_omega", "mcrlb_asymp_omega", "crlb_harmonic_omega"])
            .map(|s| s.to_string())
            .collect();
        for prefix in ["crlb_sine", "bias", "mse_lb"] {
            h.extend((1..=order).map(|k| format!("{prefix}_{k}")));
        }
        h
    }

    pub fn csv_record(&self) -> Vec<String> {
        let mut r = vec![
            self.samples.to_string(),
            self.noise_variance.to_string(),
            self.pseudo_variance.to_string(),
            self.omega0.to_string(),
            self.mcrlb_exact_omega.to_string(),
            self.mcrlb_asymptotic_omega.to_string(),
            self.crlb_harmonic_omega.to_string(),
        ];
        for v in [&self.crlb_unstructured_freqs, &self.bias, &self.mse_lower_freqs] {
            r.extend(v.iter().map(|x| x.to_string()));
        }
        r
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::csv_header(self.order))?;
        w.write_record(self.csv_record())?;
        w.flush()?;
        Ok(())
    }
}

fn diffs(theta0: &HarmonicParams, spec: &TrueSignalSpec) -> (Vec<f64>, Vec<f64>) {
    let phase_diffs = theta0
        .phases()
        .iter()
        .zip(spec.phases())
        .map(|(a, b)| a - b)
        .collect();
    let freq_diffs = spec
        .frequencies()
        .iter()
        .enumerate()
        .map(|(k, nu)| (k + 1) as f64 * theta0.omega() - nu)
        .collect();
    (phase_diffs, freq_diffs)
}

fn check_pair(theta: &HarmonicParams, spec: &TrueSignalSpec) -> Result<()> {
    if theta.order() != spec.order() {
        return Err(Error::OrderMismatch { expected: spec.order(), found: theta.order() });
    }
    Ok(())
}

/// Builds `F`, `F̃` and `A` at θ₀ for pseudo-true variance `sigma2`.
pub fn build_sandwich(
    theta0: &HarmonicParams,
    spec: &TrueSignalSpec,
    n: usize,
    sigma2: f64,
) -> Result<SandwichMatrices> {
    check_pair(theta0, spec)?;
    let noise = spec.noise_variance();
    if !(noise > 0.0) {
        return Err(Error::InvalidParameter("bounds need a positive true noise variance".into()));
    }
    if !(sigma2 >= noise) {
        return Err(Error::InvalidParameter(format!(
            "pseudo-true variance {sigma2} is below the true noise variance {noise}"
        )));
    }
    let dim = theta0.dimension();
    let diff = waveform_diff(theta0, spec, n)?;
    let mut outer = DMatrix::<f64>::zeros(dim, dim);
    let mut curvature = DMatrix::<f64>::zeros(dim, dim);
    for (t, eps) in diff.samples().iter().enumerate() {
        let g = model_gradient(theta0, t);
        for i in 0..dim {
            for j in i..dim {
                outer[(i, j)] += g[i].re * g[j].re + g[i].im * g[j].im;
            }
        }
        for (i, j, h) in model_hessian_entries(theta0, t) {
            curvature[(i, j)] += (eps.conj() * h).re;
        }
    }
    for i in 0..dim {
        for j in 0..i {
            outer[(i, j)] = outer[(j, i)];
            curvature[(i, j)] = curvature[(j, i)];
        }
    }
    let f = outer * (2.0 * noise / (sigma2 * sigma2));
    let f_tilde = curvature * (2.0 / sigma2);
    let a = &f * (-sigma2 / noise) - &f_tilde;
    let a_condition = symmetric_inverse(&a, "A(θ₀)").map(|(_, c)| c).unwrap_or(f64::INFINITY);
    Ok(SandwichMatrices { f, f_tilde, a, a_condition })
}

/// Diagonal of `A⁻¹ F A⁻¹`, θ ordering.
pub fn mcrlb_exact(sm: &SandwichMatrices) -> Result<Vec<f64>> {
    let (a_inv, _) = symmetric_inverse(&sm.a, "A(θ₀)")?;
    let cov = &a_inv * &sm.f * &a_inv;
    Ok(cov.diagonal().iter().copied().collect())
}

/// Closed-form large-N bound on ω₀ from the explicit per-harmonic sums.
pub fn mcrlb_asymptotic(
    theta0: &HarmonicParams,
    spec: &TrueSignalSpec,
    n: usize,
) -> Result<(f64, AsymptoticTerms)> {
    let terms = asymptotic_terms(theta0, spec, n)?;
    Ok((terms.bound(spec.noise_variance())?, terms))
}

/// C, Z, D and E from explicit trigonometric sums over t.
pub fn asymptotic_terms(theta0: &HarmonicParams, spec: &TrueSignalSpec, n: usize) -> Result<AsymptoticTerms> {
    check_pair(theta0, spec)?;
    if theta0.omega() <= PI / n as f64 {
        return Err(Error::Degenerate(format!(
            "ω₀ = {} is too close to zero for N = {n}",
            theta0.omega()
        )));
    }
    let nf = n as f64;
    let (phase_diffs, freq_diffs) = diffs(theta0, spec);
    let sum_t = nf * (nf - 1.0) / 2.0;
    let sum_t2 = nf * (nf - 1.0) * (2.0 * nf - 1.0) / 6.0;

    let mut weighted_power = 0.0;
    let (mut z_cross, mut d_cross, mut e) = (0.0, 0.0, 0.0);
    for k in 0..theta0.order() {
        let h2 = ((k + 1) as f64).powi(2);
        let (r, r_true) = (theta0.amplitudes()[k], spec.amplitudes()[k]);
        weighted_power += h2 * r * r;
        let (mut t_cos, mut t_sin, mut t2_cos) = (0.0, 0.0, 0.0);
        for t in 0..n {
            let tf = t as f64;
            let (s, c) = (phase_diffs[k] + freq_diffs[k] * tf).sin_cos();
            t_cos += tf * c;
            t_sin += tf * s;
            t2_cos += tf * tf * c;
        }
        z_cross += h2 * r * r_true * t2_cos;
        d_cross += h2 * r * r_true * t_cos;
        e += 2.0 / nf * h2 * (r_true * t_sin).powi(2);
        e += 2.0 / nf * h2 * (r_true * t_cos - r * sum_t).powi(2);
    }
    let c = nf * (nf * nf - 1.0) * weighted_power / 6.0;
    let z = -2.0 * weighted_power * sum_t2 + 2.0 * z_cross;
    // the inner sum carries a factor t, matching Σt = N(N−1)/2 in the first term
    let d = 2.0 * (nf - 1.0) * (sum_t * weighted_power - d_cross);
    Ok(AsymptoticTerms { c, z, d, e, phase_diffs, freq_diffs })
}

/// η, z, d, ρ and u from finite-N sums over the model derivatives.
pub fn asymptotic_terms_via_appendix(
    theta0: &HarmonicParams,
    spec: &TrueSignalSpec,
    n: usize,
) -> Result<ArrowheadTerms> {
    check_pair(theta0, spec)?;
    let dim = theta0.dimension();
    let m = dim - 1;
    let diff = waveform_diff(theta0, spec, n)?;
    let (mut eta_model, mut eta_resid) = (0.0, 0.0);
    let mut d = vec![0.0; m];
    let mut z_model = vec![0.0; m];
    let mut z_resid = vec![0.0; m];
    for (t, eps) in diff.samples().iter().enumerate() {
        let g = model_gradient(theta0, t);
        let h = model_hessian(theta0, t);
        eta_model += 2.0 * g[0].norm_sqr();
        eta_resid += 2.0 * (eps.conj() * h[(0, 0)]).re;
        for i in 0..m {
            d[i] += 2.0 * g[i + 1].norm_sqr();
            z_model[i] += 2.0 * (g[i + 1] * g[0].conj()).re;
            z_resid[i] += 2.0 * (eps.conj() * h[(0, i + 1)]).re;
        }
    }
    if let Some(i) = d.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Degenerate(format!("arrowhead diagonal entry {} is not positive", i + 1)));
    }
    let z: Vec<f64> = z_model.iter().zip(&z_resid).map(|(a, b)| a + b).collect();
    let rho = eta_model + eta_resid - ArrowheadTerms::weighted_dot(&z, &z, &d);
    let u = std::iter::once(-1.0)
        .chain(z.iter().zip(&d).map(|(zi, di)| zi / di))
        .collect();
    Ok(ArrowheadTerms { eta_model, eta_resid, d, z_model, z_resid, rho, u })
}

/// Fisher information of the harmonic model at θ under noise variance `noise_variance`.
pub fn harmonic_fim(theta: &HarmonicParams, noise_variance: f64, n: usize) -> DMatrix<f64> {
    let dim = theta.dimension();
    let mut fim = DMatrix::<f64>::zeros(dim, dim);
    for t in 0..n {
        let g = model_gradient(theta, t);
        for i in 0..dim {
            for j in i..dim {
                fim[(i, j)] += (g[i] * g[j].conj()).re;
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            fim[(i, j)] = fim[(j, i)];
        }
    }
    fim * (2.0 / noise_variance)
}

/// Diagonal of the inverse harmonic-model FIM (θ ordering).
pub fn crlb_harmonic(theta: &HarmonicParams, noise_variance: f64, n: usize) -> Result<Vec<f64>> {
    let (inv, _) = symmetric_inverse(&harmonic_fim(theta, noise_variance, n), "harmonic FIM")?;
    Ok(inv.diagonal().iter().copied().collect())
}

/// Frequency CRLBs of K free sinusoids `Σ r_k exp(iφ_k + iν_k t)`.
///
/// Parameters are ordered `[r_1, φ_1, ν_1, r_2, …]`; the returned vector
/// holds the `ν_k` diagonal entries of the inverse FIM. No ordering of the
/// frequencies is required, so coinciding frequencies surface as a
/// conditioning error.
pub fn crlb_sinusoids(
    amplitudes: &[f64],
    phases: &[f64],
    frequencies: &[f64],
    noise_variance: f64,
    n: usize,
) -> Result<Vec<f64>> {
    let order = amplitudes.len();
    if phases.len() != order || frequencies.len() != order {
        return Err(Error::InvalidParameter("sinusoid parameter lengths differ".into()));
    }
    if n < 3 * order {
        return Err(Error::InvalidParameter(format!(
            "N={n} samples cannot identify {order} free sinusoids (need N ≥ {})",
            3 * order
        )));
    }
    // FIM = (2/σ²) JᵀJ with J the stacked real and imaginary Jacobian
    let dim = 3 * order;
    let mut jac = DMatrix::<f64>::zeros(2 * n, dim);
    for t in 0..n {
        let tf = t as f64;
        for k in 0..order {
            let atom = num_complex::Complex64::from_polar(1.0, phases[k] + frequencies[k] * tf);
            let d_phase = atom * num_complex::Complex64::new(0.0, amplitudes[k]);
            for (c, v) in [atom, d_phase, d_phase * tf].iter().enumerate() {
                jac[(2 * t, 3 * k + c)] = v.re;
                jac[(2 * t + 1, 3 * k + c)] = v.im;
            }
        }
    }
    let (diag, _) = normal_inverse_diagonal(jac, "unstructured FIM")?;
    Ok((0..order).map(|k| 0.5 * noise_variance * diag[3 * k + 2]).collect())
}

/// Exact-FIM CRLBs on the sinusoidal frequencies of `spec`.
pub fn crlb_unstructured(spec: &TrueSignalSpec, n: usize) -> Result<Vec<f64>> {
    crlb_sinusoids(spec.amplitudes(), spec.phases(), spec.frequencies(), spec.noise_variance(), n)
}

/// Per-sinusoid large-N CRLBs `6σ̆² / (r̆_k² N(N²−1))`.
pub fn crlb_unstructured_decoupled(spec: &TrueSignalSpec, n: usize) -> Vec<f64> {
    let nf = n as f64;
    spec.amplitudes()
        .iter()
        .map(|r| 6.0 * spec.noise_variance() / (r * r * nf * (nf * nf - 1.0)))
        .collect()
}

/// `(kω₀ − ν_k)² + k² MCRLB(ω₀)` per harmonic order.
pub fn mse_lower_bound(bias: &[f64], mcrlb_omega: f64) -> Vec<f64> {
    bias.iter()
        .enumerate()
        .map(|(k, b)| b * b + ((k + 1) as f64).powi(2) * mcrlb_omega)
        .collect()
}

/// Largest off-diagonal magnitude outside the first row and column,
/// normalised by the smallest diagonal entry.
pub fn arrowhead_deviation(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut off = 0.0f64;
    let mut diag = f64::INFINITY;
    for i in 1..n {
        diag = diag.min(m[(i, i)].abs());
        for j in 1..n {
            if i != j {
                off = off.max(m[(i, j)].abs());
            }
        }
    }
    off / diag
}

/// Bounds from an already solved pseudo-true point.
pub fn bound_report_from(pt: &PseudoTrueResult, spec: &TrueSignalSpec, n: usize) -> Result<BoundReport> {
    let theta0 = &pt.theta0;
    let sm = build_sandwich(theta0, spec, n, pt.pseudo_variance)?;
    let mcrlb_exact_diag = mcrlb_exact(&sm)?;
    let (mcrlb_asymptotic_omega, asymptotic_terms) = mcrlb_asymptotic(theta0, spec, n)?;
    let crlb_harmonic_omega = crlb_harmonic(theta0, spec.noise_variance(), n)?[0];
    let bias: Vec<f64> = asymptotic_terms.freq_diffs.clone();
    let mcrlb_exact_omega = mcrlb_exact_diag[0];
    Ok(BoundReport {
        order: spec.order(),
        samples: n,
        noise_variance: spec.noise_variance(),
        pseudo_variance: pt.pseudo_variance,
        omega0: theta0.omega(),
        converged: pt.converged,
        mse_lower_freqs: mse_lower_bound(&bias, mcrlb_exact_omega),
        mcrlb_exact_omega,
        mcrlb_exact_diag,
        mcrlb_asymptotic_omega,
        crlb_harmonic_omega,
        crlb_harmonic_omega_asymp: spec.noise_variance() / asymptotic_terms.c,
        crlb_unstructured_freqs: crlb_unstructured(spec, n)?,
        crlb_unstructured_decoupled: crlb_unstructured_decoupled(spec, n),
        bias,
        asymptotic_terms,
    })
}

/// Pseudo-true solve followed by every bound.
pub fn compute_bounds(spec: &TrueSignalSpec, n: usize, search: &SearchConfig) -> Result<BoundReport> {
    let pt = solve_pseudo_true(spec, n, search)?;
    bound_report_from(&pt, spec, n)
}
