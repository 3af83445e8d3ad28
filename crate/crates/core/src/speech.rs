//! Frame-based analysis of recorded audio.
//!
//! Audio is turned into its discrete analytic signal (over the whole
//! recording or per frame) and cut into non-overlapping frames; sinusoids
//! are detected on a zero-padded
//! periodogram and refined by the unstructured MLE. Frames whose sinusoids
//! form a complete harmonic series `1..K` (3 ≤ K ≤ 10) are then treated as
//! inharmonic truths: their pseudo-true fundamental, misspecified bound and
//! MSE bound are compared with the unstructured CRLB at imposed SNRs.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::bounds::compute_bounds;
use crate::error::{Error, Result};
use crate::estimators::{unstructured_mle, SinusoidSet};
use crate::model::{ComplexSeries, TrueSignalSpec};
use crate::pseudo_true::{solve_pseudo_true, SearchConfig};

/// Real audio normalised to [−1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a mono 16-bit PCM or 32-bit float WAV file.
pub fn load_audio(path: &Path) -> Result<AudioClip> {
    let mut reader = hound::WavReader::open(path)
        .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Audio(format!(
            "{}: {} channels; only mono audio is supported",
            path.display(),
            spec.channels
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>(),
        (format, bits) => {
            return Err(Error::Audio(format!(
                "{}: unsupported sample format {format:?} with {bits} bits (need 16-bit PCM or 32-bit float)",
                path.display()
            )))
        }
    }
    .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    Ok(AudioClip { samples, sample_rate: spec.sample_rate })
}

/// Writes mono 16-bit PCM, clipping to [−1, 1).
pub fn write_wav_i16(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let audio = |e: hound::Error| Error::Audio(format!("{}: {e}", path.display()));
    let mut w = hound::WavWriter::create(path, spec).map_err(audio)?;
    for &s in samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(audio)?;
    }
    w.finalize().map_err(audio)
}

/// Samples per frame: `round(frame_ms · fs / 1000)`.
pub fn frame_length(sample_rate: u32, frame_ms: f64) -> usize {
    (frame_ms * sample_rate as f64 / 1000.0).round() as usize
}

/// Non-overlapping frames; a trailing partial frame is dropped.
pub fn frame_signal(series: &[f64], sample_rate: u32, frame_ms: f64) -> Vec<&[f64]> {
    let len = frame_length(sample_rate, frame_ms);
    if len == 0 {
        return Vec::new();
    }
    series.chunks_exact(len).collect()
}

/// Discrete analytic signal by one-sided spectrum construction.
///
/// Strictly positive bins are doubled, negative bins zeroed, DC and Nyquist
/// kept, so the real part reproduces the input.
pub fn analytic_signal(frame: &[f64]) -> ComplexSeries {
    let n = frame.len();
    if n == 0 {
        return ComplexSeries::new(Vec::new());
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex64> = frame.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let nyquist = if n % 2 == 0 { Some(half) } else { None };
    for (k, v) in buf.iter_mut().enumerate() {
        if k == 0 || Some(k) == nyquist {
            continue;
        }
        if k <= (n - 1) / 2 {
            *v *= 2.0;
        } else {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    ComplexSeries::new(buf.into_iter().map(|v| v * scale).collect())
}

/// Peak-picking and pruning knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    /// Peaks must exceed the median periodogram level by this much.
    pub threshold_db: f64,
    /// Zero-padding factor of the periodogram.
    pub zero_pad: usize,
    /// Minimum peak separation in unpadded DFT bins.
    pub min_separation_bins: f64,
    pub max_peaks: usize,
    /// Fitted sinusoids with `N r̂²/σ̂²` below this are discarded and the fit repeated.
    pub min_component_snr_db: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            threshold_db: 10.0,
            zero_pad: 4,
            min_separation_bins: 1.5,
            max_peaks: 20,
            min_component_snr_db: 15.0,
        }
    }
}

/// Span over which the analytic signal is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalyticScope {
    /// Once over all framed samples, then cut into frames.
    #[default]
    Recording,
    /// Separately for each frame. Leakage of the negative-frequency image
    /// of a truncated frame biases the lowest harmonics.
    Frame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeechConfig {
    pub frame_ms: f64,
    pub analytic_scope: AnalyticScope,
    pub detect: DetectConfig,
    /// Imposed SNRs (dB) at which the bounds are evaluated.
    pub snr_db: Vec<f64>,
    /// Sample count used for the bounds.
    pub bounds_samples: usize,
    pub min_harmonics: usize,
    pub max_harmonics: usize,
    pub search: SearchConfig,
}

impl Default for SpeechConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.6,
            analytic_scope: AnalyticScope::Recording,
            detect: DetectConfig::default(),
            snr_db: vec![0.0, 10.0],
            bounds_samples: 200,
            min_harmonics: 3,
            max_harmonics: 10,
            search: SearchConfig::default(),
        }
    }
}

/// Why a frame was left out of the ratio statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum Rejection {
    NoPeaks,
    TooFewComponents(usize),
    TooManyComponents(usize),
    /// Assigned orders (carried here) are not exactly `1, 2, …, K`.
    MissingHarmonics(Vec<i64>),
    EstimationFailed(String),
    BoundFailure(String),
}

impl Rejection {
    /// Histogram key.
    pub fn key(&self) -> &'static str {
        match self {
            Self::NoPeaks => "no_peaks",
            Self::TooFewComponents(_) => "too_few_components",
            Self::TooManyComponents(_) => "too_many_components",
            Self::MissingHarmonics(_) => "missing_harmonics",
            Self::EstimationFailed(_) => "estimation_failed",
            Self::BoundFailure(_) => "bound_failure",
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoPeaks => write!(f, "no spectral peaks above threshold"),
            Self::TooFewComponents(k) => write!(f, "{k} components (fewer than allowed)"),
            Self::TooManyComponents(k) => write!(f, "{k} components (more than allowed)"),
            Self::MissingHarmonics(orders) => write!(f, "missing harmonics (orders {orders:?})"),
            Self::EstimationFailed(m) => write!(f, "sinusoid estimation failed: {m}"),
            Self::BoundFailure(m) => write!(f, "bound computation failed: {m}"),
        }
    }
}

/// Bound ratios of one frame at one imposed SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRatios {
    pub snr_db: f64,
    /// `mse_lb_1 / crlb_sine_1`.
    pub ratio_mse: f64,
    /// `mcrlb(ω₀) / crlb_sine_1`.
    pub ratio_mcrlb: f64,
    pub mse_lb: f64,
    pub mcrlb: f64,
    pub crlb_sine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnalysis {
    pub frame_index: usize,
    pub k_detected: usize,
    /// Refined sinusoids, sorted by frequency.
    pub sinusoids: Option<SinusoidSet>,
    /// Harmonic orders assigned by rounding against the median spacing.
    pub orders: Vec<i64>,
    pub omega0: Option<f64>,
    pub ratios: Vec<FrameRatios>,
    pub accepted: bool,
    pub rejection: Option<Rejection>,
}

impl FrameAnalysis {
    fn rejected(frame_index: usize, k: usize, sinusoids: Option<SinusoidSet>, orders: Vec<i64>, why: Rejection) -> Self {
        Self {
            frame_index,
            k_detected: k,
            sinusoids,
            orders,
            omega0: None,
            ratios: Vec::new(),
            accepted: false,
            rejection: Some(why),
        }
    }
}

/// Candidate sinusoid frequencies (rad/sample) from the periodogram of `frame`.
pub fn detect_peaks(frame: &ComplexSeries, detect: &DetectConfig) -> Vec<f64> {
    let n = frame.len();
    if n < 4 {
        return Vec::new();
    }
    let m = n * detect.zero_pad.max(1);
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for (t, (b, x)) in buf.iter_mut().zip(frame.samples()).enumerate() {
        let w = 0.5 - 0.5 * (TAU * t as f64 / n as f64).cos();
        *b = x * w;
    }
    FftPlanner::<f64>::new().plan_fft_forward(m).process(&mut buf);
    let power: Vec<f64> = buf.iter().map(|v| v.norm_sqr()).collect();

    // positive band only, excluding the first unpadded bin around DC
    let first = detect.zero_pad.max(1);
    let last = m / 2;
    if last <= first + 1 {
        return Vec::new();
    }
    let mut band: Vec<f64> = power[first..last].to_vec();
    band.sort_by(|a, b| a.total_cmp(b));
    let median = band[band.len() / 2];
    let threshold = median * 10f64.powf(detect.threshold_db / 10.0);

    let mut peaks: Vec<(usize, f64)> = (first + 1..last - 1)
        .filter(|&i| power[i] > threshold && power[i] > power[i - 1] && power[i] >= power[i + 1])
        .map(|i| (i, power[i]))
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let min_sep = detect.min_separation_bins * detect.zero_pad.max(1) as f64;
    let mut chosen: Vec<usize> = Vec::new();
    for (i, _) in peaks {
        if chosen.len() >= detect.max_peaks {
            break;
        }
        if chosen.iter().all(|&c| (c as f64 - i as f64).abs() >= min_sep) {
            chosen.push(i);
        }
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| TAU * i as f64 / m as f64).collect()
}

/// Orders `round(ν_k / median spacing)` of sorted frequencies.
pub fn assign_orders(freqs: &[f64]) -> Vec<i64> {
    if freqs.len() < 2 {
        return vec![1; freqs.len()];
    }
    let mut gaps: Vec<f64> = freqs.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(|a, b| a.total_cmp(b));
    let mid = gaps.len() / 2;
    let spacing = if gaps.len() % 2 == 1 { gaps[mid] } else { 0.5 * (gaps[mid - 1] + gaps[mid]) };
    freqs.iter().map(|f| (f / spacing).round() as i64).collect()
}

/// Assigns orders and removes components below half the median spacing
/// (order 0), which on short frames come from the analytic-signal
/// construction rather than from the source.
fn drop_subharmonic(set: SinusoidSet) -> (SinusoidSet, Vec<i64>) {
    let orders = assign_orders(&set.frequencies);
    let keep: Vec<usize> = (0..set.order()).filter(|&i| orders[i] >= 1).collect();
    let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect();
    let kept = SinusoidSet {
        amplitudes: pick(&set.amplitudes),
        phases: pick(&set.phases),
        frequencies: pick(&set.frequencies),
    };
    (kept, keep.iter().map(|&i| orders[i]).collect())
}

fn fit_sinusoids(frame: &ComplexSeries, init: &[f64], detect: &DetectConfig) -> Result<SinusoidSet> {
    let mut freqs = init.to_vec();
    let n = frame.len() as f64;
    let floor = 10f64.powf(detect.min_component_snr_db / 10.0);
    // every pass either returns or removes at least one component
    while !freqs.is_empty() {
        let est = unstructured_mle(frame, freqs.len(), &freqs)?;
        let set = est.sinusoids().cloned().expect("unstructured estimate");
        let k = set.order();
        let weaker = |a: usize, b: usize| if set.amplitudes[a] < set.amplitudes[b] { a } else { b };
        let closest = (0..k).flat_map(|i| (0..i).map(move |j| (i, j))).min_by(|&(a, b), &(c, d)| {
            let gap = |x: usize, y: usize| (set.frequencies[x] - set.frequencies[y]).abs();
            gap(a, b).total_cmp(&gap(c, d))
        });
        let gap = |(i, j): (usize, usize)| (set.frequencies[i] - set.frequencies[j]).abs();
        // noise peaks wander and collide, or settle inside the main lobe of
        // a true component: drop the weaker of a pair closer than one DFT
        // bin (or, failing that, the weakest overall) and refit
        let unresolved = closest.filter(|&p| gap(p) < TAU / n);
        if !est.converged || unresolved.is_some() {
            let drop = unresolved.map(|(i, j)| weaker(i, j)).unwrap_or_else(|| {
                (0..k).min_by(|&a, &b| set.amplitudes[a].total_cmp(&set.amplitudes[b])).expect("non-empty set")
            });
            freqs = set.frequencies.clone();
            freqs.remove(drop);
            continue;
        }
        let noise = est.residual_variance.max(f64::MIN_POSITIVE);
        let keep: Vec<usize> = (0..set.order())
            .filter(|&k| n * set.amplitudes[k].powi(2) / noise >= floor)
            .collect();
        if keep.len() == set.order() {
            let mut idx: Vec<usize> = (0..set.order()).collect();
            idx.sort_by(|&a, &b| set.frequencies[a].total_cmp(&set.frequencies[b]));
            return Ok(SinusoidSet {
                amplitudes: idx.iter().map(|&i| set.amplitudes[i]).collect(),
                phases: idx.iter().map(|&i| set.phases[i]).collect(),
                frequencies: idx.iter().map(|&i| set.frequencies[i]).collect(),
            });
        }
        freqs = keep.iter().map(|&k| set.frequencies[k]).collect();
    }
    Ok(SinusoidSet { amplitudes: Vec::new(), phases: Vec::new(), frequencies: Vec::new() })
}

/// Detection, refinement, acceptance and bound ratios for one analytic frame.
pub fn analyze_frame(frame_index: usize, frame: &ComplexSeries, config: &SpeechConfig) -> FrameAnalysis {
    let peaks = detect_peaks(frame, &config.detect);
    if peaks.is_empty() {
        return FrameAnalysis::rejected(frame_index, 0, None, Vec::new(), Rejection::NoPeaks);
    }
    let set = match fit_sinusoids(frame, &peaks, &config.detect) {
        Ok(s) => s,
        Err(e) => {
            return FrameAnalysis::rejected(frame_index, peaks.len(), None, Vec::new(), Rejection::EstimationFailed(e.to_string()))
        }
    };
    let (set, orders) = drop_subharmonic(set);
    let k = set.order();
    if k == 0 {
        return FrameAnalysis::rejected(frame_index, 0, Some(set), Vec::new(), Rejection::NoPeaks);
    }
    if k < config.min_harmonics {
        return FrameAnalysis::rejected(frame_index, k, Some(set), orders, Rejection::TooFewComponents(k));
    }
    if k > config.max_harmonics {
        return FrameAnalysis::rejected(frame_index, k, Some(set), orders, Rejection::TooManyComponents(k));
    }
    if orders.iter().enumerate().any(|(i, &o)| o != i as i64 + 1) {
        return FrameAnalysis::rejected(frame_index, k, Some(set), orders.clone(), Rejection::MissingHarmonics(orders));
    }

    let fail = |set: SinusoidSet, orders: Vec<i64>, e: Error| {
        FrameAnalysis::rejected(frame_index, k, Some(set), orders, Rejection::BoundFailure(e.to_string()))
    };
    let spacing = set.frequencies[k - 1] / k as f64;
    let mut search = config.search.clone();
    if search.window.is_none() && search.hint.is_none() {
        search.hint = Some(spacing);
    }
    let base = match TrueSignalSpec::new(set.amplitudes.clone(), set.phases.clone(), set.frequencies.clone(), 0.0) {
        Ok(s) => s,
        Err(e) => return fail(set, orders, e),
    };
    let omega0 = match solve_pseudo_true(&base, config.bounds_samples, &search) {
        Ok(pt) => pt.theta0.omega(),
        Err(e) => return fail(set, orders, e),
    };
    let mut ratios = Vec::with_capacity(config.snr_db.len());
    for &snr in &config.snr_db {
        let report = base.with_snr_db(snr).and_then(|s| compute_bounds(&s, config.bounds_samples, &search));
        match report {
            Ok(r) => {
                let crlb = r.crlb_unstructured_freqs[0];
                ratios.push(FrameRatios {
                    snr_db: snr,
                    ratio_mse: r.mse_lower_freqs[0] / crlb,
                    ratio_mcrlb: r.mcrlb_exact_omega / crlb,
                    mse_lb: r.mse_lower_freqs[0],
                    mcrlb: r.mcrlb_exact_omega,
                    crlb_sine: crlb,
                });
            }
            Err(e) => return fail(set, orders, e),
        }
    }
    FrameAnalysis {
        frame_index,
        k_detected: k,
        sinusoids: Some(set),
        orders,
        omega0: Some(omega0),
        ratios,
        accepted: true,
        rejection: None,
    }
}

/// Frames, analytic signals and per-frame analysis, in frame order.
pub fn analyze_audio(samples: &[f64], sample_rate: u32, config: &SpeechConfig) -> Vec<FrameAnalysis> {
    let frames = frame_signal(samples, sample_rate, config.frame_ms);
    let analytic: Vec<ComplexSeries> = match config.analytic_scope {
        AnalyticScope::Frame => frames.iter().map(|f| analytic_signal(f)).collect(),
        AnalyticScope::Recording => {
            let len = frame_length(sample_rate, config.frame_ms);
            let z = analytic_signal(&samples[..frames.len() * len]);
            z.samples().chunks_exact(len.max(1)).map(|c| ComplexSeries::new(c.to_vec())).collect()
        }
    };
    analytic.par_iter().enumerate().map(|(i, z)| analyze_frame(i, z, config)).collect()
}

/// Accepted count and rejection histogram.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AcceptanceSummary {
    pub frames: usize,
    pub accepted: usize,
    pub rejections: BTreeMap<String, usize>,
}

pub fn summarize(analyses: &[FrameAnalysis]) -> AcceptanceSummary {
    let mut s = AcceptanceSummary { frames: analyses.len(), ..Default::default() };
    for a in analyses {
        match &a.rejection {
            None => s.accepted += 1,
            Some(r) => *s.rejections.entry(r.key().to_string()).or_default() += 1,
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioKind {
    Mse,
    Mcrlb,
}

/// One point of an empirical CDF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub snr_db: f64,
    pub ratio_kind: RatioKind,
    pub ratio: f64,
    pub cdf: f64,
}

/// Empirical CDFs of both ratios for each SNR, from accepted frames.
pub fn ratio_cdf(analyses: &[FrameAnalysis], snr_db: &[f64]) -> Result<Vec<CdfRow>> {
    let accepted: Vec<&FrameAnalysis> = analyses.iter().filter(|a| a.accepted).collect();
    if accepted.is_empty() {
        let s = summarize(analyses);
        let reasons: Vec<String> = s.rejections.iter().map(|(k, v)| format!("{k}={v}")).collect();
        return Err(Error::NoAcceptedFrames(format!(
            "0 of {} frames accepted ({})",
            s.frames,
            if reasons.is_empty() { "no frames".into() } else { reasons.join(", ") }
        )));
    }
    let mut rows = Vec::new();
    for &snr in snr_db {
        for kind in [RatioKind::Mse, RatioKind::Mcrlb] {
            let mut values: Vec<f64> = accepted
                .iter()
                .filter_map(|a| a.ratios.iter().find(|r| r.snr_db == snr))
                .map(|r| if kind == RatioKind::Mse { r.ratio_mse } else { r.ratio_mcrlb })
                .collect();
            values.sort_by(|a, b| a.total_cmp(b));
            let m = values.len() as f64;
            rows.extend(values.into_iter().enumerate().map(|(i, ratio)| CdfRow {
                snr_db: snr,
                ratio_kind: kind.clone(),
                ratio,
                cdf: (i + 1) as f64 / m,
            }));
        }
    }
    Ok(rows)
}

pub fn write_ratio_cdf<W: std::io::Write>(rows: &[CdfRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["snr_db", "ratio_kind", "ratio", "cdf"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Fraction of a CDF group's mass strictly below `level`.
pub fn mass_below(rows: &[CdfRow], snr_db: f64, kind: RatioKind, level: f64) -> f64 {
    let group: Vec<&CdfRow> = rows.iter().filter(|r| r.snr_db == snr_db && r.ratio_kind == kind).collect();
    if group.is_empty() {
        return f64::NAN;
    }
    group.iter().filter(|r| r.ratio < level).count() as f64 / group.len() as f64
}

/// Recipe for a synthetic voiced recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticVoice {
    pub sample_rate: u32,
    /// Each segment holds one fundamental (Hz) for `segment_frames` frames.
    pub fundamentals_hz: Vec<f64>,
    pub segment_frames: usize,
    pub frame_ms: f64,
    pub harmonics: usize,
    /// Stiffness coefficient of the partials.
    pub beta: f64,
    /// Amplitude roll-off per harmonic order, in dB.
    pub rolloff_db: f64,
    pub peak_amplitude: f64,
    /// White-noise level relative to the total sinusoidal power.
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for SyntheticVoice {
    fn default() -> Self {
        Self {
            sample_rate: 20000,
            fundamentals_hz: vec![120.0, 150.0, 180.0, 210.0, 240.0, 170.0],
            segment_frames: 4,
            frame_ms: 25.6,
            harmonics: 6,
            beta: 0.0,
            rolloff_db: 3.0,
            peak_amplitude: 0.3,
            snr_db: 35.0,
            seed: 1,
        }
    }
}

impl SyntheticVoice {
    /// Renders the recording; segments align with frame boundaries.
    pub fn render(&self) -> Vec<f64> {
        let fs = self.sample_rate as f64;
        let frame = frame_length(self.sample_rate, self.frame_ms);
        let seg = frame * self.segment_frames;
        let amps: Vec<f64> = (0..self.harmonics)
            .map(|k| self.peak_amplitude * 10f64.powf(-self.rolloff_db * k as f64 / 20.0))
            .collect();
        let power: f64 = amps.iter().map(|a| a * a / 2.0).sum();
        let sigma = (power / 10f64.powf(self.snr_db / 10.0)).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, sigma).expect("finite noise level");
        let mut out = Vec::with_capacity(seg * self.fundamentals_hz.len());
        for (s, &f0) in self.fundamentals_hz.iter().enumerate() {
            for t in 0..seg {
                let tt = t as f64;
                let x: f64 = amps
                    .iter()
                    .enumerate()
                    .map(|(k, a)| {
                        let h = (k + 1) as f64;
                        let f = h * f0 * (1.0 + self.beta * h * h).sqrt();
                        let phase = 0.7 * h + 1.3 * s as f64;
                        a * (TAU * f * tt / fs + phase).cos()
                    })
                    .sum();
                out.push(x + noise.sample(&mut rng));
            }
        }
        out
    }
}

/// Band-limited sawtooth with all harmonics below Nyquist.
pub fn sawtooth(f0_hz: f64, sample_rate: u32, len: usize, amplitude: f64) -> Vec<f64> {
    let fs = sample_rate as f64;
    let top = ((fs / 2.0) / f0_hz).floor() as usize;
    (0..len)
        .map(|t| {
            let tt = t as f64;
            (1..=top)
                .filter(|&k| (k as f64) * f0_hz < fs / 2.0)
                .map(|k| amplitude * 2.0 / PI * (-1f64).powi(k as i32 + 1) / k as f64 * (TAU * k as f64 * f0_hz * tt / fs).sin())
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complex_frame(freqs: &[f64], amps: &[f64], n: usize, noise: f64, seed: u64) -> ComplexSeries {
        let spec = TrueSignalSpec::new(amps.to_vec(), (0..freqs.len()).map(|k| 0.4 * k as f64).collect(), freqs.to_vec(), noise)
            .unwrap();
        crate::model::synthesize_true_seeded(&spec, n, Some(seed))
    }

    #[test]
    fn frame_lengths() {
        assert_eq!(frame_length(20000, 25.6), 512);
        let x = vec![0.0; 1024];
        assert_eq!(frame_signal(&x, 20000, 25.6).len(), 2);
        assert_eq!(frame_signal(&x[..511], 20000, 25.6).len(), 0);
        assert_eq!(frame_signal(&[0.0; 1500], 20000, 25.6).len(), 2);
    }

    #[test]
    fn analytic_of_cosine_is_complex_exponential() {
        let n = 256;
        let k0 = 19.0;
        let x: Vec<f64> = (0..n).map(|t| (TAU * t as f64 * k0 / n as f64).cos()).collect();
        let z = analytic_signal(&x);
        for (t, v) in z.samples().iter().enumerate() {
            let e = Complex64::from_polar(1.0, TAU * t as f64 * k0 / n as f64);
            assert!((v - e).norm() < 1e-12);
        }
    }

    #[test]
    fn analytic_preserves_real_part_and_doubles_energy() {
        let n = 200;
        let mut x: Vec<f64> = (0..n).map(|t| ((t * 7919) % 113) as f64 / 113.0 - 0.3).collect();
        let mean = x.iter().sum::<f64>() / n as f64;
        x.iter_mut().for_each(|v| *v -= mean);
        // remove Nyquist content so the Parseval identity is exact
        let alt = x.iter().enumerate().map(|(t, v)| if t % 2 == 0 { *v } else { -v }).sum::<f64>() / n as f64;
        x.iter_mut().enumerate().for_each(|(t, v)| *v -= if t % 2 == 0 { alt } else { -alt });
        let z = analytic_signal(&x);
        for (a, b) in z.samples().iter().zip(&x) {
            assert!((a.re - b).abs() < 1e-12);
        }
        let ex: f64 = x.iter().map(|v| v * v).sum();
        assert!((z.energy() - 2.0 * ex).abs() < 1e-9 * ex);
    }

    #[test]
    fn orders_by_median_spacing() {
        assert_eq!(assign_orders(&[0.1, 0.2, 0.3, 0.41]), vec![1, 2, 3, 4]);
        assert_eq!(assign_orders(&[0.1, 0.2, 0.4, 0.5]), vec![1, 2, 4, 5]);
        assert_eq!(assign_orders(&[0.2, 0.3, 0.4]), vec![2, 3, 4]);
    }

    #[test]
    fn harmonic_frames_are_accepted() {
        let w = 0.09;
        let freqs: Vec<f64> = (1..=5).map(|k| k as f64 * w).collect();
        let amps = [1.0, 0.8, 0.6, 0.5, 0.4];
        let power: f64 = amps.iter().map(|a| a * a).sum();
        let noise = power / 100.0;
        let theta = crate::model::HarmonicParams::new(w, vec![0.0; 5], amps.to_vec()).unwrap();
        let sd = crate::bounds::crlb_harmonic(&theta, noise, 512).unwrap()[0].sqrt();
        let mut sq = 0.0;
        for seed in 0..20 {
            let frame = complex_frame(&freqs, &amps, 512, noise, seed);
            let a = analyze_frame(0, &frame, &SpeechConfig::default());
            assert!(a.accepted, "{:?}", a.rejection);
            assert_eq!(a.k_detected, 5);
            for r in &a.ratios {
                assert!(r.ratio_mcrlb < 1.0);
                assert!(r.ratio_mcrlb <= r.ratio_mse);
            }
            let err = a.omega0.unwrap() - w;
            assert!(err.abs() < 4.0 * sd, "{err} vs sd {sd}");
            sq += err * err / 20.0;
        }
        // spread of ω₀ matches the harmonic standard error
        assert!(sq.sqrt() < 1.5 * sd, "rms {} vs sd {sd}", sq.sqrt());
    }

    #[test]
    fn missing_harmonic_is_rejected() {
        let w = 0.09;
        let freqs: Vec<f64> = [1, 2, 4, 5].iter().map(|&k| k as f64 * w).collect();
        let frame = complex_frame(&freqs, &[1.0, 0.8, 0.5, 0.4], 512, 0.01, 4);
        let a = analyze_frame(0, &frame, &SpeechConfig::default());
        assert!(matches!(a.rejection, Some(Rejection::MissingHarmonics(_))), "{:?}", a.rejection);
    }

    #[test]
    fn two_components_are_rejected() {
        let frame = complex_frame(&[0.1, 0.2], &[1.0, 0.7], 512, 0.01, 5);
        let a = analyze_frame(0, &frame, &SpeechConfig::default());
        assert_eq!(a.rejection, Some(Rejection::TooFewComponents(2)));
    }

    #[test]
    fn eleven_harmonics_are_rejected() {
        let freqs: Vec<f64> = (1..=11).map(|k| k as f64 * 0.12).collect();
        let frame = complex_frame(&freqs, &[1.0; 11], 512, 0.01, 6);
        let a = analyze_frame(0, &frame, &SpeechConfig::default());
        assert_eq!(a.rejection, Some(Rejection::TooManyComponents(11)));
    }

    #[test]
    fn silence_has_no_accepted_frames() {
        let analyses = analyze_audio(&vec![0.0; 4096], 8000, &SpeechConfig::default());
        assert!(analyses.iter().all(|a| !a.accepted));
        assert!(matches!(ratio_cdf(&analyses, &[10.0]), Err(Error::NoAcceptedFrames(_))));
    }

    #[test]
    fn single_frame_cdf_is_unit_step() {
        let fa = FrameAnalysis {
            frame_index: 0,
            k_detected: 3,
            sinusoids: None,
            orders: vec![1, 2, 3],
            omega0: Some(0.1),
            ratios: vec![FrameRatios { snr_db: 10.0, ratio_mse: 0.5, ratio_mcrlb: 0.01, mse_lb: 1.0, mcrlb: 0.02, crlb_sine: 2.0 }],
            accepted: true,
            rejection: None,
        };
        let rows = ratio_cdf(&[fa], &[10.0]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.cdf == 1.0));
        let mut buf = Vec::new();
        write_ratio_cdf(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("snr_db,ratio_kind,ratio,cdf\n10.0,mse,0.5,1.0\n"), "{text}");
    }

    #[test]
    fn sawtooth_peaks_sit_on_multiples_of_f0() {
        let fs = 8000;
        let x = sawtooth(200.0, fs, 2048, 0.5);
        let len = frame_length(fs, 25.6);
        let frame = analytic_signal(&x[..len]);
        let peaks = detect_peaks(&frame, &DetectConfig::default());
        assert!(peaks.len() >= 10);
        let bin = TAU / len as f64;
        let w = TAU * 200.0 / fs as f64;
        for p in peaks {
            let k = (p / w).round();
            assert!((p - k * w).abs() <= bin, "peak {p} far from harmonic {k}");
        }
    }
}
