//! Variable projection for sums of complex exponentials.
//!
//! For a fixed set of frequencies the complex amplitudes enter linearly, so
//! the least-squares fit of `Σ_k c_k exp(iν_k t)` to data reduces to a small
//! Hermitian system `G c = b` with `G` the atom Gram matrix. The projected
//! residual `R(ν)` and its envelope derivative `∂R/∂ν_j` are what the
//! nonlinear searches see.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Gram matrices above this condition estimate are refused.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

const ANCHOR_STRIDE: usize = 32;

#[derive(Debug, Clone)]
pub(crate) struct Projection {
    pub coeffs: Vec<Complex64>,
    pub residual: f64,
    /// `∂R/∂ν_j` at the optimal amplitudes.
    pub gradient: Vec<f64>,
}

/// `Σ_{t<n} exp(iΔt)` in Dirichlet form, accurate for small `Δ`.
pub(crate) fn dirichlet(delta: f64, n: usize) -> Complex64 {
    // t is an integer, so Δ only matters modulo 2π
    let delta = delta - std::f64::consts::TAU * (delta / std::f64::consts::TAU).round();
    let half = 0.5 * delta;
    let s = half.sin();
    let phase = Complex64::from_polar(1.0, half * (n as f64 - 1.0));
    if s.abs() < 1e-300 {
        // Δ is a multiple of 2π: every term is 1
        return Complex64::new(n as f64, 0.0);
    }
    phase * ((n as f64 * half).sin() / s)
}

/// Hermitian Gram matrix; Toeplitz with `k` kernels when `freqs` is exactly `[ω, 2ω, …]`.
fn gram(freqs: &[f64], n: usize) -> DMatrix<Complex64> {
    let k = freqs.len();
    let harmonic = freqs.iter().enumerate().all(|(j, &f)| f == (j + 1) as f64 * freqs[0]);
    let mut g = DMatrix::<Complex64>::zeros(k, k);
    if harmonic {
        let lags: Vec<Complex64> = (0..k).map(|m| dirichlet(m as f64 * freqs[0], n)).collect();
        for j in 0..k {
            for l in j..k {
                g[(j, l)] = lags[l - j];
                g[(l, j)] = lags[l - j].conj();
            }
        }
    } else {
        for j in 0..k {
            for l in j..k {
                let d = dirichlet(freqs[l] - freqs[j], n);
                g[(j, l)] = d;
                g[(l, j)] = d.conj();
            }
        }
    }
    g
}

/// Rotating atoms `exp(iν_k t)` advanced sample by sample, re-anchored
/// periodically against the exact value to bound drift.
struct AtomCursor<'a> {
    freqs: &'a [f64],
    steps: Vec<Complex64>,
    current: Vec<Complex64>,
    t: usize,
}

impl<'a> AtomCursor<'a> {
    fn new(freqs: &'a [f64]) -> Self {
        Self {
            freqs,
            steps: freqs.iter().map(|&f| Complex64::from_polar(1.0, f)).collect(),
            current: vec![Complex64::new(1.0, 0.0); freqs.len()],
            t: 0,
        }
    }

    fn atoms(&self) -> &[Complex64] {
        &self.current
    }

    fn advance(&mut self) {
        self.t += 1;
        if self.t % ANCHOR_STRIDE == 0 {
            let t = self.t as f64;
            for (c, &f) in self.current.iter_mut().zip(self.freqs) {
                *c = Complex64::from_polar(1.0, f * t);
            }
        } else {
            for (c, s) in self.current.iter_mut().zip(&self.steps) {
                *c *= s;
            }
        }
    }
}

fn correlate(data: &[Complex64], freqs: &[f64]) -> DVector<Complex64> {
    let mut b = DVector::<Complex64>::zeros(freqs.len());
    let mut cursor = AtomCursor::new(freqs);
    for y in data {
        for (bj, a) in b.iter_mut().zip(cursor.atoms()) {
            *bj += a.conj() * y;
        }
        cursor.advance();
    }
    b
}

fn solve_gram(freqs: &[f64], n: usize, b: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    let g = gram(freqs, n);
    let chol = Cholesky::new(g).ok_or(Error::IllConditioned {
        what: "atom Gram matrix",
        condition: f64::INFINITY,
    })?;
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..freqs.len() {
        let d = l[(i, i)].re;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let condition = (hi / lo).powi(2);
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(Error::IllConditioned { what: "atom Gram matrix", condition });
    }
    Ok(chol.solve(b))
}

/// Projected residual `‖y‖² − Re(bᴴc)` from the correlations
/// `b_j = Σ_t y_t exp(−iν_j t)` of `n` samples; used for grid scans.
pub(crate) fn residual_from_correlations(b: &DVector<Complex64>, energy: f64, freqs: &[f64], n: usize) -> Result<f64> {
    let c = solve_gram(freqs, n, b)?;
    let explained: f64 = b.iter().zip(c.iter()).map(|(bj, cj)| (bj.conj() * cj).re).sum();
    Ok((energy - explained).max(0.0))
}

/// Full projection with directly summed residual and envelope gradient.
pub(crate) fn project(data: &[Complex64], freqs: &[f64]) -> Result<Projection> {
    let b = correlate(data, freqs);
    let c = solve_gram(freqs, data.len(), &b)?;
    let coeffs: Vec<Complex64> = c.iter().copied().collect();
    let mut residual = 0.0;
    let mut gradient = vec![0.0; freqs.len()];
    let mut cursor = AtomCursor::new(freqs);
    for (t, y) in data.iter().enumerate() {
        let atoms = cursor.atoms();
        let model: Complex64 = coeffs.iter().zip(atoms).map(|(c, a)| c * a).sum();
        let eps = model - y;
        residual += eps.norm_sqr();
        let tf = t as f64;
        for ((g, c), a) in gradient.iter_mut().zip(&coeffs).zip(atoms) {
            // Re(conj(ε) · i t c a) = -t Im(conj(ε) c a)
            *g -= 2.0 * tf * (eps.conj() * c * a).im;
        }
        cursor.advance();
    }
    Ok(Projection { coeffs, residual, gradient })
}

/// Outcome of a bracketed one-dimensional minimisation.
#[derive(Debug, Clone)]
pub(crate) struct LineMinimum {
    pub x: f64,
    pub value: f64,
    /// Best value seen after each iteration; non-increasing.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search on `[lo, hi]` down to width `tol`, then a
/// safeguarded false-position polish on the derivative sign change.
///
/// `eval` returns `(value, derivative)`; the polished point replaces the
/// golden-section point whenever the derivative changes sign in the bracket.
pub(crate) fn minimize_bracketed<F>(
    mut eval: F,
    lo: f64,
    hi: f64,
    tol: f64,
    max_iterations: usize,
) -> Result<LineMinimum>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let (mut a, mut b) = (lo, hi);
    let mut best = (f64::NAN, f64::INFINITY);
    let note = |x: f64, v: f64, best: &mut (f64, f64)| {
        if v < best.1 || (v == best.1 && x < best.0) {
            *best = (x, v);
        }
    };
    let (fa, ga) = eval(a)?;
    note(a, fa, &mut best);
    let (fb, gb) = eval(b)?;
    note(b, fb, &mut best);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c)?.0;
    note(c, fc, &mut best);
    let mut fd = eval(d)?.0;
    note(d, fd, &mut best);

    let mut trace = vec![best.1];
    let mut iterations = 0;
    let (mut ga, mut gb) = (ga, gb);
    while b - a > tol && iterations < max_iterations {
        iterations += 1;
        if fc <= fd {
            b = d;
            gb = f64::NAN;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c)?.0;
            note(c, fc, &mut best);
        } else {
            a = c;
            ga = f64::NAN;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d)?.0;
            note(d, fd, &mut best);
        }
        trace.push(best.1);
    }
    let converged = b - a <= tol;

    // Polish on the derivative, which stays well resolved where the value
    // has flattened to rounding level.
    if ga.is_nan() {
        ga = eval(a)?.1;
    }
    if gb.is_nan() {
        gb = eval(b)?.1;
    }
    // value comparisons at rounding level can leave the stationary point
    // just outside the final bracket
    let width = (b - a).max(4.0 * f64::EPSILON * best.0.abs());
    for _ in 0..4 {
        if ga < 0.0 && gb > 0.0 {
            break;
        }
        if ga >= 0.0 && a > lo {
            a = (a - width).max(lo);
            ga = eval(a)?.1;
        }
        if gb <= 0.0 && b < hi {
            b = (b + width).min(hi);
            gb = eval(b)?.1;
        }
    }
    if ga < 0.0 && gb > 0.0 {
        let (mut xa, mut xb, mut da, mut db) = (a, b, ga, gb);
        let mut side = 0i8;
        let mut root = 0.5 * (xa + xb);
        for _ in 0..100 {
            root = (xa * db - xb * da) / (db - da);
            if !(root > xa && root < xb) {
                root = 0.5 * (xa + xb);
            }
            let (_, dr) = eval(root)?;
            if dr == 0.0 {
                break;
            }
            if dr < 0.0 {
                xa = root;
                da = dr;
                if side == -1 {
                    db *= 0.5;
                }
                side = -1;
            } else {
                xb = root;
                db = dr;
                if side == 1 {
                    da *= 0.5;
                }
                side = 1;
            }
            if xb - xa <= 4.0 * f64::EPSILON * root.abs().max(1e-300) {
                break;
            }
        }
        // the bracket is a few golden steps wide, so a value above the best
        // one is rounding in the residual; the trace keeps the minimum
        let (fr, _) = eval(root)?;
        trace.push(fr.min(best.1));
        best = (root, fr);
    }

    Ok(LineMinimum { x: best.0, value: best.1, trace, iterations, converged })
}
