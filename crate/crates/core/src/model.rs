//! Signal-domain types and waveform synthesis.
//!
//! Two signal families live here. The *true* signal is an arbitrary sum of
//! complex sinusoids
//!
//! ```text
//! y_t = Σ_k r̆_k exp(i φ̆_k + i ν_k t) + e_t,    t = 0..N-1
//! ```
//!
//! and the *assumed* harmonic model ties every frequency to an integer
//! multiple of one fundamental,
//!
//! ```text
//! x̃_t(θ) = Σ_k r_k exp(i φ_k + i k ω t).
//! ```
//!
//! The harmonic parameter vector is always flattened as
//! `θ = [ω, φ_1, …, φ_K, r_1, …, r_K]`. Every matrix built downstream uses
//! this ordering; [`HarmonicParams::phase_index`] and
//! [`HarmonicParams::amplitude_index`] give the positions.
//!
//! Noise is circularly symmetric complex Gaussian: a complex variance `σ̆²`
//! puts `σ̆²/2` on each of the real and imaginary parts.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Wraps a phase into `[0, 2π)`.
pub fn wrap_phase(phase: f64) -> f64 {
    let wrapped = phase.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if wrapped >= TAU {
        0.0
    } else {
        wrapped
    }
}

/// Distance between two angles on the circle, in `[0, π]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = wrap_phase(a - b);
    d.min(TAU - d)
}

/// Bell-shaped amplitude profile `r_k = exp(-(k - K/2)² / width)`, k = 1..K.
pub fn bell_amplitudes(order: usize, width: f64) -> Vec<f64> {
    let center = order as f64 / 2.0;
    (1..=order)
        .map(|k| (-(k as f64 - center).powi(2) / width).exp())
        .collect()
}

/// Ground-truth inharmonic signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueSignalSpec {
    amplitudes: Vec<f64>,
    phases: Vec<f64>,
    frequencies: Vec<f64>,
    noise_variance: f64,
}

impl TrueSignalSpec {
    pub fn new(
        amplitudes: Vec<f64>,
        phases: Vec<f64>,
        frequencies: Vec<f64>,
        noise_variance: f64,
    ) -> Result<Self> {
        let order = amplitudes.len();
        if order == 0 {
            return Err(Error::InvalidParameter("signal needs at least one sinusoid".into()));
        }
        if phases.len() != order || frequencies.len() != order {
            return Err(Error::InvalidParameter(format!(
                "length mismatch: {} amplitudes, {} phases, {} frequencies",
                order,
                phases.len(),
                frequencies.len()
            )));
        }
        if let Some(k) = amplitudes.iter().position(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "amplitude of component k={} must be positive, got {}",
                k + 1,
                amplitudes[k]
            )));
        }
        for (k, &nu) in frequencies.iter().enumerate() {
            if !nu.is_finite() || nu < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "frequency of component k={} must be in [0, 2π), got {nu}",
                    k + 1
                )));
            }
            if nu >= TAU {
                return Err(Error::Aliasing { k: k + 1, frequency: nu });
            }
        }
        if frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "frequencies must be strictly increasing in k".into(),
            ));
        }
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be nonnegative, got {noise_variance}"
            )));
        }
        Ok(Self {
            amplitudes,
            phases: phases.into_iter().map(wrap_phase).collect(),
            frequencies,
            noise_variance,
        })
    }

    /// Builds a spec whose frequencies follow an inharmonicity law.
    pub fn from_law(
        law: &InharmonicityLaw,
        amplitudes: Vec<f64>,
        phases: Vec<f64>,
        noise_variance: f64,
    ) -> Result<Self> {
        let frequencies = frequencies_from_law(law, amplitudes.len())?;
        Self::new(amplitudes, phases, frequencies, noise_variance)
    }

    pub fn order(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Total sinusoidal power `Σ r̆_k²`.
    pub fn signal_power(&self) -> f64 {
        self.amplitudes.iter().map(|r| r * r).sum()
    }

    /// `Σ r̆_k² / σ̆²`; infinite for a noise-free spec.
    pub fn snr(&self) -> f64 {
        self.signal_power() / self.noise_variance
    }

    /// Same signal, different noise power.
    pub fn with_noise_variance(&self, noise_variance: f64) -> Result<Self> {
        Self::new(
            self.amplitudes.clone(),
            self.phases.clone(),
            self.frequencies.clone(),
            noise_variance,
        )
    }

    /// Same signal with the noise variance set from an SNR in dB.
    pub fn with_snr_db(&self, snr_db: f64) -> Result<Self> {
        self.with_noise_variance(self.signal_power() / 10f64.powf(snr_db / 10.0))
    }

    /// Single-sinusoid spec holding component `k` (0-based).
    pub fn component(&self, k: usize) -> Result<Self> {
        Self::new(
            vec![self.amplitudes[k]],
            vec![self.phases[k]],
            vec![self.frequencies[k]],
            self.noise_variance,
        )
    }
}

/// Frequency law of an inharmonic source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum InharmonicityLaw {
    /// `ν_k = ωk + δ_k`.
    Offset { fundamental: f64, offsets: Vec<f64> },
    /// String stiffness: `ν_k = ωk √(1 + βk²)`.
    Stiffness { fundamental: f64, beta: f64 },
}

impl InharmonicityLaw {
    pub fn offset(fundamental: f64, offsets: Vec<f64>) -> Result<Self> {
        check_fundamental(fundamental)?;
        if offsets.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidParameter("offsets must be finite".into()));
        }
        Ok(Self::Offset { fundamental, offsets })
    }

    pub fn stiffness(fundamental: f64, beta: f64) -> Result<Self> {
        check_fundamental(fundamental)?;
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "stiffness β must be nonnegative, got {beta}"
            )));
        }
        Ok(Self::Stiffness { fundamental, beta })
    }

    pub fn fundamental(&self) -> f64 {
        match self {
            Self::Offset { fundamental, .. } | Self::Stiffness { fundamental, .. } => *fundamental,
        }
    }
}

fn check_fundamental(omega: f64) -> Result<()> {
    if omega > 0.0 && omega < TAU {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "fundamental must lie in (0, 2π), got {omega}"
        )))
    }
}

/// Sinusoidal frequencies `ν_1..ν_K` implied by a law.
pub fn frequencies_from_law(law: &InharmonicityLaw, order: usize) -> Result<Vec<f64>> {
    let freqs: Vec<f64> = match law {
        InharmonicityLaw::Offset { fundamental, offsets } => {
            if offsets.len() != order {
                return Err(Error::OrderMismatch { expected: order, found: offsets.len() });
            }
            offsets
                .iter()
                .enumerate()
                .map(|(i, d)| fundamental * (i + 1) as f64 + d)
                .collect()
        }
        InharmonicityLaw::Stiffness { fundamental, beta } => (1..=order)
            .map(|k| {
                let k = k as f64;
                fundamental * k * (1.0 + beta * k * k).sqrt()
            })
            .collect(),
    };
    if let Some(k) = freqs.iter().position(|&nu| nu >= TAU) {
        return Err(Error::Aliasing { k: k + 1, frequency: freqs[k] });
    }
    if let Some(k) = freqs.iter().position(|&nu| nu < 0.0) {
        return Err(Error::InvalidParameter(format!(
            "component k={} has negative frequency {}",
            k + 1,
            freqs[k]
        )));
    }
    Ok(freqs)
}

/// Parameters of the assumed harmonic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicParams {
    omega: f64,
    phases: Vec<f64>,
    amplitudes: Vec<f64>,
}

impl HarmonicParams {
    pub fn new(omega: f64, phases: Vec<f64>, amplitudes: Vec<f64>) -> Result<Self> {
        let order = amplitudes.len();
        if order == 0 || phases.len() != order {
            return Err(Error::InvalidParameter(format!(
                "need matching nonempty phase/amplitude vectors, got {} and {}",
                phases.len(),
                order
            )));
        }
        check_fundamental(omega)?;
        if omega * order as f64 >= TAU {
            return Err(Error::Aliasing { k: order, frequency: omega * order as f64 });
        }
        if let Some(k) = amplitudes.iter().position(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "harmonic amplitude r_{} must be positive, got {}",
                k + 1,
                amplitudes[k]
            )));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("phases must be finite".into()));
        }
        Ok(Self {
            omega,
            phases: phases.into_iter().map(wrap_phase).collect(),
            amplitudes,
        })
    }

    /// Rebuilds parameters from a flattened `[ω, φ.., r..]` vector.
    pub fn from_vector(theta: &[f64]) -> Result<Self> {
        if theta.len() < 3 || theta.len() % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "parameter vector length must be 2K+1, got {}",
                theta.len()
            )));
        }
        let order = (theta.len() - 1) / 2;
        Self::new(
            theta[0],
            theta[1..=order].to_vec(),
            theta[order + 1..].to_vec(),
        )
    }

    pub fn order(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    /// Length of θ, `2K+1`.
    pub fn dimension(&self) -> usize {
        2 * self.order() + 1
    }

    /// Position of `φ_k` in θ for 0-based harmonic index `k`.
    pub fn phase_index(&self, k: usize) -> usize {
        1 + k
    }

    /// Position of `r_k` in θ for 0-based harmonic index `k`.
    pub fn amplitude_index(&self, k: usize) -> usize {
        1 + self.order() + k
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.dimension());
        theta.push(self.omega);
        theta.extend_from_slice(&self.phases);
        theta.extend_from_slice(&self.amplitudes);
        theta
    }

    /// Harmonic frequencies `kω`, k = 1..K.
    pub fn harmonic_frequencies(&self) -> Vec<f64> {
        (1..=self.order()).map(|k| k as f64 * self.omega).collect()
    }

    /// The harmonic model read as a (noise-free) sinusoidal spec.
    pub fn to_spec(&self, noise_variance: f64) -> Result<TrueSignalSpec> {
        TrueSignalSpec::new(
            self.amplitudes.clone(),
            self.phases.clone(),
            self.harmonic_frequencies(),
            noise_variance,
        )
    }
}

/// Complex samples `t = 0..N-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexSeries(Vec<Complex64>);

impl ComplexSeries {
    pub fn new(samples: Vec<Complex64>) -> Self {
        Self(samples)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `Σ_t |s_t|²`.
    pub fn energy(&self) -> f64 {
        self.0.iter().map(|s| s.norm_sqr()).sum()
    }

    /// Mean power `energy / N`.
    pub fn mean_power(&self) -> f64 {
        self.energy() / self.len() as f64
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self(self.0.iter().map(|s| s * gain).collect())
    }
}

impl std::ops::Index<usize> for ComplexSeries {
    type Output = Complex64;

    fn index(&self, t: usize) -> &Complex64 {
        &self.0[t]
    }
}

impl From<Vec<Complex64>> for ComplexSeries {
    fn from(samples: Vec<Complex64>) -> Self {
        Self(samples)
    }
}

fn sum_of_sinusoids(amplitudes: &[f64], phases: &[f64], freqs: &[f64], n: usize) -> ComplexSeries {
    let samples = (0..n)
        .map(|t| {
            let t = t as f64;
            amplitudes
                .iter()
                .zip(phases)
                .zip(freqs)
                .map(|((&r, &phi), &nu)| Complex64::from_polar(r, phi + nu * t))
                .sum()
        })
        .collect();
    ComplexSeries(samples)
}

/// Noise-free waveform `x_t` of a true spec.
pub fn clean_waveform(spec: &TrueSignalSpec, n: usize) -> ComplexSeries {
    sum_of_sinusoids(&spec.amplitudes, &spec.phases, &spec.frequencies, n)
}

/// Adds circularly symmetric complex Gaussian noise of complex variance `variance`.
pub fn add_noise<R: Rng + ?Sized>(series: &mut ComplexSeries, variance: f64, rng: &mut R) {
    if variance <= 0.0 {
        return;
    }
    let scale = (variance / 2.0).sqrt();
    for s in series.0.iter_mut() {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *s += Complex64::new(scale * re, scale * im);
    }
}

/// Noisy measurement `y_t = x_t + e_t` drawn with `rng`.
pub fn synthesize_true<R: Rng + ?Sized>(
    spec: &TrueSignalSpec,
    n: usize,
    rng: &mut R,
) -> ComplexSeries {
    let mut series = clean_waveform(spec, n);
    add_noise(&mut series, spec.noise_variance, rng);
    series
}

/// Seeded variant of [`synthesize_true`]; `None` yields the noise-free waveform.
pub fn synthesize_true_seeded(spec: &TrueSignalSpec, n: usize, seed: Option<u64>) -> ComplexSeries {
    match seed {
        Some(seed) => synthesize_true(spec, n, &mut ChaCha8Rng::seed_from_u64(seed)),
        None => clean_waveform(spec, n),
    }
}

/// Harmonic model waveform `x̃_t(θ)`.
pub fn synthesize_model(params: &HarmonicParams, n: usize) -> ComplexSeries {
    sum_of_sinusoids(
        &params.amplitudes,
        &params.phases,
        &params.harmonic_frequencies(),
        n,
    )
}

/// `∂x̃_t/∂θ` in the canonical ordering.
pub fn model_gradient(params: &HarmonicParams, t: usize) -> Vec<Complex64> {
    let order = params.order();
    let t = t as f64;
    let mut grad = vec![Complex64::new(0.0, 0.0); params.dimension()];
    for k in 0..order {
        let h = (k + 1) as f64;
        let r = params.amplitudes[k];
        let atom = Complex64::from_polar(1.0, params.phases[k] + h * params.omega * t);
        grad[0] += I * h * t * r * atom;
        grad[params.phase_index(k)] = I * r * atom;
        grad[params.amplitude_index(k)] = atom;
    }
    grad
}

/// Nonzero upper-triangle entries `(i, j, ∂²x̃_t/∂θ_i∂θ_j)`, `i ≤ j`, of the
/// model Hessian; `(0, 0)` comes first and accumulates over harmonics.
pub fn model_hessian_entries(params: &HarmonicParams, t: usize) -> Vec<(usize, usize, Complex64)> {
    let order = params.order();
    let t = t as f64;
    let mut entries = Vec::with_capacity(1 + 4 * order);
    entries.push((0, 0, Complex64::new(0.0, 0.0)));
    for k in 0..order {
        let h = (k + 1) as f64;
        let r = params.amplitudes[k];
        let atom = Complex64::from_polar(1.0, params.phases[k] + h * params.omega * t);
        let (p, a) = (params.phase_index(k), params.amplitude_index(k));
        entries[0].2 -= h * h * t * t * r * atom;
        entries.push((0, p, -h * t * r * atom));
        entries.push((0, a, I * h * t * atom));
        entries.push((p, p, -r * atom));
        entries.push((p, a, I * atom));
    }
    entries
}

/// `∇²_θ x̃_t`, symmetric; second derivatives across different harmonics vanish.
pub fn model_hessian(params: &HarmonicParams, t: usize) -> DMatrix<Complex64> {
    let dim = params.dimension();
    let mut hess = DMatrix::<Complex64>::zeros(dim, dim);
    for (i, j, v) in model_hessian_entries(params, t) {
        hess[(i, j)] = v;
        hess[(j, i)] = v;
    }
    hess
}

/// Default test fundamental `π/40` rad/sample.
pub const REFERENCE_FUNDAMENTAL: f64 = PI / 40.0;

/// Largest relative deviations of [`model_gradient`] and [`model_hessian`]
/// at sample `t` from central differences of the waveform and of the
/// analytic gradient. Entries are compared against `max(|analytic|, 1e-9·max)`.
pub fn derivative_errors(params: &HarmonicParams, t: usize) -> Result<(f64, f64)> {
    let theta = params.to_vector();
    let order = params.order();
    let sample = |v: &[f64]| -> Result<Complex64> {
        let p = HarmonicParams::from_vector(v)?;
        Ok((0..order)
            .map(|k| p.amplitudes[k] * Complex64::from_polar(1.0, p.phases[k] + (k + 1) as f64 * p.omega * t as f64))
            .sum())
    };
    let step = |i: usize| match i {
        0 => 1e-5 / (order as f64 * t.max(1) as f64),
        i if i <= order => 1e-5,
        i => 1e-5 * theta[i],
    };
    let shifted = |i: usize, sign: f64| {
        let mut v = theta.clone();
        v[i] += sign * step(i);
        v
    };
    let relative = |pairs: &[(Complex64, Complex64)]| {
        let scale = pairs.iter().map(|(a, _)| a.norm()).fold(0.0, f64::max);
        pairs
            .iter()
            .map(|(a, fd)| (a - fd).norm() / a.norm().max(1e-9 * scale).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    };

    let grad = model_gradient(params, t);
    let hess = model_hessian(params, t);
    let mut grad_pairs = Vec::with_capacity(theta.len());
    let mut hess_pairs = Vec::with_capacity(theta.len() * theta.len());
    for j in 0..theta.len() {
        let h = step(j);
        let fd = (sample(&shifted(j, 1.0))? - sample(&shifted(j, -1.0))?) / (2.0 * h);
        grad_pairs.push((grad[j], fd));
        let up = model_gradient(&HarmonicParams::from_vector(&shifted(j, 1.0))?, t);
        let dn = model_gradient(&HarmonicParams::from_vector(&shifted(j, -1.0))?, t);
        for i in 0..theta.len() {
            hess_pairs.push((hess[(i, j)], (up[i] - dn[i]) / (2.0 * h)));
        }
    }
    Ok((relative(&grad_pairs), relative(&hess_pairs)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn stiffness_zero_is_harmonic() {
        let law = InharmonicityLaw::stiffness(PI / 40.0, 0.0).unwrap();
        let f = frequencies_from_law(&law, 3).unwrap();
        for (k, nu) in f.iter().enumerate() {
            assert!((nu - (k + 1) as f64 * PI / 40.0).abs() < 1e-15);
        }
    }

    #[test]
    fn stiffness_tenth_partial() {
        let law = InharmonicityLaw::stiffness(PI / 40.0, 1e-4).unwrap();
        let f = frequencies_from_law(&law, 10).unwrap();
        let expected = PI / 4.0 * 1.01f64.sqrt();
        assert!(rel_err(f[9], expected) < 1e-14);
    }

    #[test]
    fn offset_law() {
        let law = InharmonicityLaw::offset(0.1, vec![0.0, 0.01]).unwrap();
        let f = frequencies_from_law(&law, 2).unwrap();
        assert!((f[0] - 0.1).abs() < 1e-15);
        assert!((f[1] - 0.21).abs() < 1e-15);
    }

    #[test]
    fn aliasing_names_component() {
        let law = InharmonicityLaw::stiffness(1.0, 0.5).unwrap();
        match frequencies_from_law(&law, 5) {
            Err(Error::Aliasing { k, .. }) => assert_eq!(k, 3),
            other => panic!("expected aliasing error, got {other:?}"),
        }
        assert!(InharmonicityLaw::stiffness(0.1, -1e-3).is_err());
    }

    #[test]
    fn spec_invariants() {
        assert!(TrueSignalSpec::new(vec![], vec![], vec![], 0.0).is_err());
        assert!(TrueSignalSpec::new(vec![1.0, 0.0], vec![0.0; 2], vec![0.1, 0.2], 0.0).is_err());
        assert!(TrueSignalSpec::new(vec![1.0; 2], vec![0.0; 2], vec![0.2, 0.1], 0.0).is_err());
        assert!(TrueSignalSpec::new(vec![1.0], vec![0.0], vec![0.1], -1.0).is_err());
        let s = TrueSignalSpec::new(vec![1.0], vec![-0.5], vec![0.1], 0.0).unwrap();
        assert!((s.phases()[0] - (TAU - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn unit_circle_quarter_steps() {
        let spec = TrueSignalSpec::new(vec![1.0], vec![0.0], vec![PI / 2.0], 0.0).unwrap();
        let x = synthesize_true_seeded(&spec, 4, Some(7));
        let expected = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, -1.0),
        ];
        for (a, b) in x.samples().iter().zip(expected) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn mean_power_close_to_total_power() {
        let amps = bell_amplitudes(10, 20.0);
        let law = InharmonicityLaw::stiffness(PI / 40.0, 0.0).unwrap();
        // aligned phases; random phases leak up to ~12% at N=200
        let spec = TrueSignalSpec::from_law(&law, amps.clone(), vec![0.0; 10], 0.0).unwrap();
        let x = clean_waveform(&spec, 200);
        // independent brute-force summation
        let mut energy = 0.0;
        for t in 0..200 {
            let mut re = 0.0;
            let mut im = 0.0;
            for k in 0..10 {
                let arg = spec.phases()[k] + spec.frequencies()[k] * t as f64;
                re += amps[k] * arg.cos();
                im += amps[k] * arg.sin();
            }
            energy += re * re + im * im;
        }
        assert!(rel_err(x.energy(), energy) < 1e-12);
        assert!(rel_err(x.mean_power(), spec.signal_power()) < 0.05);
    }

    #[test]
    fn noise_variance_is_complex_variance() {
        let spec = TrueSignalSpec::new(vec![1e-9], vec![0.0], vec![0.5], 1.0).unwrap();
        let x = synthesize_true_seeded(&spec, 100_000, Some(42));
        let clean = clean_waveform(&spec, 100_000);
        let n = x.len() as f64;
        let (mut re2, mut im2) = (0.0, 0.0);
        for (a, b) in x.samples().iter().zip(clean.samples()) {
            let e = a - b;
            re2 += e.re * e.re;
            im2 += e.im * e.im;
        }
        assert!(((re2 + im2) / n - 1.0).abs() < 0.02);
        assert!((re2 / n - 0.5).abs() < 0.01);
        assert!((im2 / n - 0.5).abs() < 0.01);
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let spec = TrueSignalSpec::new(vec![1.0], vec![0.0], vec![0.5], 0.3).unwrap();
        let a = synthesize_true_seeded(&spec, 64, Some(9));
        let b = synthesize_true_seeded(&spec, 64, Some(9));
        let c = synthesize_true_seeded(&spec, 64, Some(10));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(synthesize_true_seeded(&spec, 64, None), clean_waveform(&spec, 64));
    }

    #[test]
    fn model_matches_harmonic_truth() {
        let amps = bell_amplitudes(10, 20.0);
        let phases: Vec<f64> = (0..10).map(|k| 1.3 * k as f64).collect();
        let law = InharmonicityLaw::stiffness(PI / 40.0, 0.0).unwrap();
        let spec = TrueSignalSpec::from_law(&law, amps.clone(), phases.clone(), 0.0).unwrap();
        let theta = HarmonicParams::new(PI / 40.0, phases, amps).unwrap();
        let a = clean_waveform(&spec, 200);
        let b = synthesize_model(&theta, 200);
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert!((x - y).norm() < 1e-13);
        }
    }

    #[test]
    fn single_harmonic_equals_single_sinusoid() {
        let spec = TrueSignalSpec::new(vec![1.0], vec![0.0], vec![PI / 2.0], 0.0).unwrap();
        let theta = HarmonicParams::new(PI / 2.0, vec![0.0], vec![1.0]).unwrap();
        assert_eq!(clean_waveform(&spec, 4), synthesize_model(&theta, 4));
    }

    #[test]
    fn harmonic_params_invariants() {
        assert!(HarmonicParams::new(PI / 40.0, vec![0.0], vec![0.0]).is_err());
        assert!(HarmonicParams::new(1.0, vec![0.0; 7], vec![1.0; 7]).is_err());
        assert!(HarmonicParams::from_vector(&[0.1, 0.0, 1.0, 1.0]).is_err());
        let theta = HarmonicParams::from_vector(&[0.1, 0.2, 0.3, 1.0, 2.0]).unwrap();
        assert_eq!(theta.order(), 2);
        assert_eq!(theta.to_vector(), vec![0.1, 0.2, 0.3, 1.0, 2.0]);
        assert_eq!(theta.phase_index(1), 2);
        assert_eq!(theta.amplitude_index(0), 3);
    }

    #[test]
    fn gradient_at_origin() {
        let theta = HarmonicParams::new(0.37, vec![0.0], vec![1.0]).unwrap();
        let g = model_gradient(&theta, 0);
        assert_eq!(g, vec![Complex64::new(0.0, 0.0), I, Complex64::new(1.0, 0.0)]);
        let h = model_hessian(&theta, 0);
        assert_eq!(h[(0, 0)], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn derivatives_match_central_differences() {
        let theta = HarmonicParams::new(0.07, vec![0.3, 5.9, 2.0, 4.4], vec![1.0, 0.6, 0.3, 2.0]).unwrap();
        for t in [0, 1, 57, 199] {
            let (g, h) = derivative_errors(&theta, t).unwrap();
            assert!(g < 1e-7 && h < 1e-6, "t={t}: {g:e} {h:e}");
        }
    }

    #[test]
    fn hessian_is_symmetric_and_separable() {
        let theta = HarmonicParams::new(0.05, vec![0.1, 0.2, 0.3], vec![1.0, 0.5, 0.25]).unwrap();
        let h = model_hessian(&theta, 37);
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                assert_eq!(h[(i, j)], h[(j, i)]);
            }
        }
        for k in 0..3 {
            for j in 0..3 {
                if k != j {
                    assert_eq!(h[(theta.phase_index(k), theta.amplitude_index(j))], Complex64::new(0.0, 0.0));
                    assert_eq!(h[(theta.phase_index(k), theta.phase_index(j))], Complex64::new(0.0, 0.0));
                }
            }
            let a = theta.amplitude_index(k);
            assert_eq!(h[(a, a)], Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn conjugate_symmetry() {
        // ω and 2π - ω with negated phases give conjugate series
        let theta = HarmonicParams::new(0.3, vec![0.4], vec![1.5]).unwrap();
        let mirrored = HarmonicParams::new(TAU - 0.3, vec![-0.4], vec![1.5]).unwrap();
        let a = synthesize_model(&theta, 50);
        let b = synthesize_model(&mirrored, 50);
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert!((x.conj() - y).norm() < 1e-12);
        }
    }

    #[test]
    fn additivity_over_components() {
        let spec = TrueSignalSpec::new(vec![1.0, 0.4, 0.2], vec![0.1, 2.0, 4.0], vec![0.1, 0.25, 0.33], 0.0)
            .unwrap();
        let whole = clean_waveform(&spec, 128);
        let mut sum = vec![Complex64::new(0.0, 0.0); 128];
        for k in 0..3 {
            let part = clean_waveform(&spec.component(k).unwrap(), 128);
            for (s, p) in sum.iter_mut().zip(part.samples()) {
                *s += p;
            }
        }
        for (a, b) in whole.samples().iter().zip(&sum) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn circular_distance_wraps() {
        assert!((circular_distance(0.1, TAU - 0.1) - 0.2).abs() < 1e-12);
        assert!((circular_distance(3.0, 3.0)).abs() < 1e-15);
    }
}
