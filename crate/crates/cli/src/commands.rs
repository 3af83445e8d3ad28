//! Subcommand bodies.

use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use inharmonica::bounds::{compute_bounds, BoundReport};
use inharmonica::model::{bell_amplitudes, derivative_errors, HarmonicParams, InharmonicityLaw, TrueSignalSpec};
use inharmonica::montecarlo::{emit_figure_data, run_sweep, seeded_phases, SweepAxis, SweepConfig, SweepResult};
use inharmonica::pseudo_true::SearchConfig;
use inharmonica::speech::{
    analyze_audio, load_audio, mass_below, ratio_cdf, summarize, write_ratio_cdf, AnalyticScope, RatioKind, SpeechConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::manifest::{now_ms, RunManifest};
use crate::{usage, AxisArg, BoundsArgs, Cli, ScopeArg, SelftestArgs, SpeechArgs, SweepArgs};

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// A config file, or the `config` member of a manifest written by `command`.
fn config_from<T: serde::de::DeserializeOwned>(path: &Path, command: &str) -> Result<T> {
    let mut value = read_json(path)?;
    if value.get("command").and_then(|c| c.as_str()) == Some(command) {
        if let Some(c) = value.get_mut("config") {
            value = c.take();
        }
    }
    serde_json::from_value(value).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn stem_of(path: Option<&Path>, fallback: &str) -> String {
    path.and_then(|p| p.file_stem())
        .and_then(|s| s.to_str())
        .map_or_else(|| fallback.to_string(), |s| s.trim_end_matches(".manifest").to_string())
}

#[derive(serde::Serialize)]
struct BoundsConfig<'a> {
    truth: &'a TrueSignalSpec,
    samples: usize,
    search: &'a SearchConfig,
}

fn bounds_spec(cli: &Cli, a: &BoundsArgs) -> Result<(TrueSignalSpec, SearchConfig)> {
    let k = a.harmonics as usize;
    let omega = match (a.omega, a.f0_hz, a.fs) {
        (Some(w), _, _) => w,
        (None, Some(f0), Some(fs)) if fs > 0.0 => TAU * f0 / fs,
        _ => return Err(usage("--f0-hz needs a positive --fs")),
    };
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(usage(format!("fundamental must be positive, got {omega} rad/sample")));
    }
    if a.samples < 3 * k {
        return Err(usage(format!("--N {} is too small for K={k} (need N ≥ 3K)", a.samples)));
    }
    let law = match (a.beta, &a.offsets) {
        (Some(beta), _) => InharmonicityLaw::stiffness(omega, beta),
        (None, Some(off)) if off.len() == k => InharmonicityLaw::offset(omega, off.clone()),
        (None, Some(off)) => return Err(usage(format!("--offsets has {} values, --K is {k}", off.len()))),
        _ => unreachable!("clap requires --beta or --offsets"),
    }
    .map_err(|e| usage(e.to_string()))?;
    let amplitudes = match &a.amplitudes {
        Some(r) if r.len() == k => r.clone(),
        Some(r) => return Err(usage(format!("--amplitudes has {} values, --K is {k}", r.len()))),
        None => bell_amplitudes(k, a.amplitude_width),
    };
    let phases = match (&a.phases, cli.seed) {
        (Some(p), _) if p.len() == k => p.clone(),
        (Some(p), _) => return Err(usage(format!("--phases has {} values, --K is {k}", p.len()))),
        (None, Some(seed)) => seeded_phases(k, seed),
        (None, None) => vec![0.0; k],
    };
    let base = TrueSignalSpec::from_law(&law, amplitudes, phases, 0.0).map_err(|e| usage(e.to_string()))?;
    let spec = match (a.snr_db, a.sigma2) {
        (Some(db), _) => base.with_snr_db(db),
        (None, Some(s2)) => base.with_noise_variance(s2),
        _ => unreachable!("clap requires --snr-db or --sigma2"),
    }
    .map_err(|e| usage(e.to_string()))?;
    if spec.noise_variance() <= 0.0 {
        return Err(usage("noise variance must be positive"));
    }
    let search = if a.full_search { SearchConfig::default() } else { SearchConfig::default().with_hint(omega) };
    Ok((spec, search))
}

fn print_bounds(spec: &TrueSignalSpec, r: &BoundReport) {
    println!("K = {}   N = {}   σ̆² = {:.6e}   σ² = {:.6e}", r.order, r.samples, r.noise_variance, r.pseudo_variance);
    println!("ω₀                       {:.12}", r.omega0);
    println!("mcrlb_exact(ω₀)          {:.6e}", r.mcrlb_exact_omega);
    println!("mcrlb_asymptotic(ω₀)     {:.6e}", r.mcrlb_asymptotic_omega);
    println!("crlb_harmonic(ω)         {:.6e}", r.crlb_harmonic_omega);
    println!("crlb_harmonic asymptotic {:.6e}", r.crlb_harmonic_omega_asymp);
    if !r.converged {
        println!("warning: pseudo-true search did not reach its tolerance");
    }
    println!();
    println!("{:>3}  {:>14}  {:>11}  {:>12}  {:>12}  {:>12}", "k", "ν_k", "r̆_k", "bias_k", "mse_lb_k", "crlb_sine_k");
    for k in 0..r.order {
        println!(
            "{:>3}  {:>14.10}  {:>11.4e}  {:>12.4e}  {:>12.4e}  {:>12.4e}",
            k + 1,
            spec.frequencies()[k],
            spec.amplitudes()[k],
            r.bias[k],
            r.mse_lower_freqs[k],
            r.crlb_unstructured_freqs[k]
        );
    }
}

pub fn bounds(cli: &Cli, a: &BoundsArgs) -> Result<()> {
    let started = now_ms();
    let (spec, search) = bounds_spec(cli, a)?;
    let report = compute_bounds(&spec, a.samples, &search).context("bound computation failed")?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print_bounds(&spec, &report);
    }
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let path = dir.join("bounds.json");
        std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")?;
        let config = BoundsConfig { truth: &spec, samples: a.samples, search: &search };
        RunManifest::new("bounds", &config, cli.seed, cli.threads, started)?
            .finish(&[path], &dir.join("bounds.manifest.json"))?;
    }
    Ok(())
}

fn sweep_config(cli: &Cli, a: &SweepArgs) -> Result<SweepConfig> {
    let mut c: SweepConfig = match &a.config {
        Some(p) => config_from(p, "sweep")?,
        None => SweepConfig::default(),
    };
    if let Some(axis) = a.axis {
        let axis = match axis {
            AxisArg::Beta => SweepAxis::Beta,
            AxisArg::N => SweepAxis::Samples,
            AxisArg::Snr => SweepAxis::Snr,
        };
        if axis != c.axis {
            c.axis = axis;
            c.values.clear();
        }
    }
    if let Some(v) = &a.values {
        c.values = v.clone();
    }
    if let Some(t) = a.trials {
        c.trials = t;
    }
    if let Some(b) = a.beta {
        c.beta = b;
    }
    if let Some(n) = a.samples {
        c.samples = n;
    }
    if let Some(s) = a.snr_db {
        c.snr_db = s;
    }
    if let Some(d) = a.bound_phase_draws {
        c.bound_phase_draws = d;
    }
    if a.no_unstructured {
        c.run_unstructured = false;
    }
    if let Some(seed) = cli.seed {
        c.master_seed = seed;
    }
    if c.values.is_empty() {
        c.values = c.axis.default_values();
    }
    c.validate().map_err(|e| usage(e.to_string()))?;
    Ok(c)
}

fn print_sweep(result: &SweepResult) {
    let axis = match result.config.axis {
        SweepAxis::Beta => "beta",
        SweepAxis::Samples => "N",
        SweepAxis::Snr => "snr_db",
    };
    println!(
        "{:>10}  {:>11}  {:>11}  {:>11}  {:>11}  {:>11}  {:>11}",
        axis, "mse_harm", "var_harm", "mse_lb", "mcrlb", "mse_sine", "crlb_sine"
    );
    let sine = result.unstructured_rows();
    for (i, r) in result.harmonic_rows().iter().enumerate() {
        let mse_sine = sine.as_ref().map_or(f64::NAN, |s| s[i].mse_empirical);
        println!(
            "{:>10.4e}  {:>11.4e}  {:>11.4e}  {:>11.4e}  {:>11.4e}  {:>11.4e}  {:>11.4e}",
            r.axis_value, r.mse_empirical, r.var_empirical, r.mse_lb, r.mcrlb_exact, mse_sine, r.crlb_sine
        );
    }
    for p in &result.points {
        if let Some(e) = &p.bound_error {
            println!("warning: bounds at {} failed: {e}", p.axis_value);
        }
    }
}

pub fn sweep(cli: &Cli, a: &SweepArgs) -> Result<()> {
    let started = now_ms();
    let config = sweep_config(cli, a)?;
    let name = a.name.clone().unwrap_or_else(|| stem_of(a.config.as_deref(), "sweep"));
    let result = run_sweep(&config).context("sweep failed")?;
    create_dir(&a.out)?;
    let mut outputs = emit_figure_data(&result, &a.out.join(format!("{name}.csv")))?;
    let json = a.out.join(format!("{name}.json"));
    std::fs::write(&json, serde_json::to_string_pretty(&result)? + "\n")?;
    outputs.push(json);
    let manifest = RunManifest::new("sweep", &config, Some(config.master_seed), cli.threads, started)?
        .finish(&outputs, &a.out.join(format!("{name}.manifest.json")))?;
    print_sweep(&result);
    for p in outputs.iter().chain([&manifest]) {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn speech_config(a: &SpeechArgs) -> Result<SpeechConfig> {
    let mut c: SpeechConfig = match &a.config {
        Some(p) => config_from(p, "speech")?,
        None => SpeechConfig::default(),
    };
    if let Some(s) = &a.snr_db {
        c.snr_db = s.clone();
    }
    if let Some(f) = a.frame_ms {
        c.frame_ms = f;
    }
    if let Some(n) = a.bounds_n {
        c.bounds_samples = n;
    }
    if let Some(s) = a.analytic_scope {
        c.analytic_scope = match s {
            ScopeArg::Recording => AnalyticScope::Recording,
            ScopeArg::Frame => AnalyticScope::Frame,
        };
    }
    if let Some(t) = a.threshold_db {
        c.detect.threshold_db = t;
    }
    if c.snr_db.is_empty() || c.snr_db.iter().any(|s| !s.is_finite()) {
        return Err(usage("--snr-db needs at least one finite value"));
    }
    if !(c.frame_ms > 0.0 && c.frame_ms.is_finite()) {
        return Err(usage(format!("--frame-ms must be positive, got {}", c.frame_ms)));
    }
    if c.min_harmonics == 0 || c.min_harmonics > c.max_harmonics {
        return Err(usage(format!("harmonic range {}..={} is empty", c.min_harmonics, c.max_harmonics)));
    }
    if c.bounds_samples < 3 * c.max_harmonics {
        return Err(usage(format!(
            "--bounds-n {} is too small for up to {} harmonics",
            c.bounds_samples, c.max_harmonics
        )));
    }
    Ok(c)
}

pub fn speech(cli: &Cli, a: &SpeechArgs) -> Result<()> {
    let started = now_ms();
    let config = speech_config(a)?;
    let clip = load_audio(&a.audio)?;
    let analyses = analyze_audio(&clip.samples, clip.sample_rate, &config);
    let summary = summarize(&analyses);

    let name = a.name.clone().unwrap_or_else(|| stem_of(Some(&a.audio), "speech"));
    create_dir(&a.out)?;
    let frames_path = a.out.join(format!("{name}_frames.jsonl"));
    let mut lines = String::new();
    for f in &analyses {
        lines.push_str(&serde_json::to_string(f)?);
        lines.push('\n');
    }
    std::fs::write(&frames_path, lines)?;
    let mut outputs: Vec<PathBuf> = vec![frames_path];

    println!("{} ({} Hz, {:.2} s): {} frames, {} accepted", a.audio.display(), clip.sample_rate, clip.duration_secs(), summary.frames, summary.accepted);
    for (reason, count) in &summary.rejections {
        println!("  rejected {reason:<22} {count}");
    }
    let cdf = ratio_cdf(&analyses, &config.snr_db);
    if let Ok(rows) = &cdf {
        let path = a.out.join(format!("{name}_cdf.csv"));
        write_ratio_cdf(rows, std::fs::File::create(&path)?)?;
        outputs.push(path);
        for &snr in &config.snr_db {
            println!(
                "  SNR {snr:>5} dB: mse ratio < 1 in {:.1}% of frames, mcrlb ratio < 1 in {:.1}%",
                100.0 * mass_below(rows, snr, RatioKind::Mse, 1.0),
                100.0 * mass_below(rows, snr, RatioKind::Mcrlb, 1.0)
            );
        }
    }
    let manifest = RunManifest::new("speech", &config, cli.seed, cli.threads, started)?
        .finish(&outputs, &a.out.join(format!("{name}.manifest.json")))?;
    for p in outputs.iter().chain([&manifest]) {
        println!("wrote {}", p.display());
    }
    cdf?;
    Ok(())
}

pub fn selftest(cli: &Cli, a: &SelftestArgs) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    let mut failures = 0;
    let mut report = |name: &str, pass: bool, detail: String| {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            failures += 1;
        }
    };

    let (k, n, omega) = (10, 200, PI / 40.0);
    let spec = TrueSignalSpec::from_law(
        &InharmonicityLaw::stiffness(omega, 0.0)?,
        bell_amplitudes(k, 20.0),
        seeded_phases(k, seed),
        0.0,
    )?
    .with_snr_db(10.0)?;
    let r = compute_bounds(&spec, n, &SearchConfig::default().with_hint(omega))?;
    let rel = (r.mcrlb_exact_omega - r.crlb_harmonic_omega).abs() / r.crlb_harmonic_omega;
    report("degeneracy mcrlb = crlb at β=0", rel < 1e-8, format!("relative difference {rel:.2e} (limit 1e-8)"));
    let t = &r.asymptotic_terms;
    let zde = t.z.abs().max(t.d.abs()).max(t.e.abs()) / t.c;
    report("degeneracy Z = D = E = 0 at β=0", zde < 1e-9, format!("max |Z|,|D|,|E| / C = {zde:.2e} (limit 1e-9)"));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    for _ in 0..a.points {
        let order = rng.random_range(1..=10usize);
        let w = rng.random_range(0.01..0.9 * TAU / order as f64);
        let phases = (0..order).map(|_| rng.random_range(0.0..TAU)).collect();
        let amps = (0..order).map(|_| rng.random_range(0.1..2.0)).collect();
        let theta = HarmonicParams::new(w, phases, amps)?;
        let (g, h) = derivative_errors(&theta, rng.random_range(0..400usize))?;
        worst_g = worst_g.max(g);
        worst_h = worst_h.max(h);
    }
    report("model gradient vs central differences", worst_g < 1e-5, format!("max relative error {worst_g:.2e} (limit 1e-5)"));
    report("model Hessian vs central differences", worst_h < 1e-4, format!("max relative error {worst_h:.2e} (limit 1e-4)"));

    if failures > 0 {
        anyhow::bail!("{failures} self-test check(s) failed");
    }
    Ok(())
}
