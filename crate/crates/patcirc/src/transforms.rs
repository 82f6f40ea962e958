//! Special functions and harmonic-analysis kernels.
//!
//! Fourier convention used everywhere: forward kernel `e^{-i x·ξ}`,
//! inverse kernel `(2π)^{-d} e^{+i x·ξ}`. Under it the Hilbert transform
//! has multiplier `-i sgn(ξ)` and maps `cos` to `sin`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Samples `values[i]` at `start + i·step`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledSignal {
    pub values: Vec<f64>,
    pub step: f64,
    pub start: f64,
}

impl SampledSignal {
    pub fn new(values: Vec<f64>, step: f64, start: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidArgument(format!("signal step must be positive, got {step}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("signal has non-finite samples".into()));
        }
        Ok(SampledSignal { values, step, start })
    }

    pub fn from_fn(n: usize, step: f64, start: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        SampledSignal::new((0..n).map(|i| f(start + i as f64 * step)).collect(), step, start)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn abscissa(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }
}

// ---------------------------------------------------------------------------
// Bessel J0

fn j0_series(x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..80 {
        term *= q / (k * k) as f64;
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-3) {
            break;
        }
    }
    sum
}

// (1/2π)∫ cos(x sin θ) dθ by the periodic trapezoid rule; the aliasing error
// is of the size of J_96(x), negligible for |x| < 25.
fn j0_trapezoid(x: f64) -> f64 {
    const N: usize = 96;
    let mut s = 0.0;
    for k in 0..N / 4 {
        let th = (k as f64 + 0.5) * 2.0 * PI / N as f64;
        s += (x * th.sin()).cos();
    }
    // cos(x sin θ) has the symmetries θ → π−θ and θ → θ+π
    4.0 * s / N as f64
}

fn j0_asymptotic(x: f64) -> f64 {
    // Hankel expansion; coefficients a_k = Π_{j≤k}(2j−1)² / (k! 8^k)
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut xp = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..60usize {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            a *= odd * odd / (k as f64 * 8.0);
            xp *= x;
        }
        let term = a / xp;
        if term > last {
            break;
        }
        last = term;
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * term;
        } else {
            q -= sign * term;
        }
        if term < 1e-17 {
            break;
        }
    }
    let chi = x - 0.25 * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 8.0 {
        j0_series(ax)
    } else if ax < 25.0 {
        j0_trapezoid(ax)
    } else {
        j0_asymptotic(ax)
    }
}

// ---------------------------------------------------------------------------
// Hilbert transform

/// Reusable FFT plan for the Hilbert transform of length-`n` signals.
pub struct HilbertPlan {
    n: usize,
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl HilbertPlan {
    pub fn new(n: usize) -> Self {
        let m = (2 * n).next_power_of_two();
        let mut planner = FftPlanner::new();
        HilbertPlan { n, m, fwd: planner.plan_fft_forward(m), inv: planner.plan_fft_inverse(m) }
    }

    /// Plan without padding: the signal is treated as one period.
    pub fn periodic(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        HilbertPlan { n, m: n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Hilbert transform of `input` (length `n`) written to `out`.
    pub fn apply(&self, input: &[f64], out: &mut [f64]) {
        assert_eq!(input.len(), self.n);
        let m = self.m;
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for (b, &v) in buf.iter_mut().zip(input) {
            b.re = v;
        }
        self.fwd.process(&mut buf);
        buf[0] = Complex64::new(0.0, 0.0);
        if m % 2 == 0 {
            buf[m / 2] = Complex64::new(0.0, 0.0);
        }
        for (k, b) in buf.iter_mut().enumerate().skip(1) {
            if 2 * k == m {
                continue;
            }
            // multiply by −i·sgn(k)
            let z = *b;
            *b = if 2 * k < m { Complex64::new(z.im, -z.re) } else { Complex64::new(-z.im, z.re) };
        }
        self.inv.process(&mut buf);
        let scale = 1.0 / m as f64;
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re * scale;
        }
    }
}

pub fn hilbert(signal: &SampledSignal) -> SampledSignal {
    let mut out = vec![0.0; signal.len()];
    if signal.len() > 0 {
        HilbertPlan::new(signal.len()).apply(&signal.values, &mut out);
    }
    SampledSignal { values: out, step: signal.step, start: signal.start }
}

/// Extends samples on `[0, L]` (first sample at 0) to `[-L, L]` with the given parity sign.
pub fn extend_about_zero(values: &[f64], sign: f64) -> Vec<f64> {
    let n = values.len();
    let mut full = Vec::with_capacity(2 * n - 1);
    full.extend(values[1..].iter().rev().map(|v| sign * v));
    full.extend_from_slice(values);
    full
}

// ---------------------------------------------------------------------------
// Finite differences

/// First derivative, central inside and second-order one-sided at the ends.
pub fn derivative(values: &[f64], step: f64) -> Vec<f64> {
    let n = values.len();
    let mut d = vec![0.0; n];
    if n < 3 {
        if n == 2 {
            let s = (values[1] - values[0]) / step;
            d = vec![s, s];
        }
        return d;
    }
    for i in 1..n - 1 {
        d[i] = (values[i + 1] - values[i - 1]) / (2.0 * step);
    }
    d[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * step);
    d[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * step);
    d
}

/// Second derivative with the 4-point one-sided closure (exact on cubics).
pub fn second_derivative(values: &[f64], step: f64) -> Vec<f64> {
    let n = values.len();
    let h2 = step * step;
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (values[i + 1] - 2.0 * values[i] + values[i - 1]) / h2;
    }
    if n >= 4 {
        d[0] = (2.0 * values[0] - 5.0 * values[1] + 4.0 * values[2] - values[3]) / h2;
        d[n - 1] = (2.0 * values[n - 1] - 5.0 * values[n - 2] + 4.0 * values[n - 3] - values[n - 4]) / h2;
    } else {
        d[0] = d[1];
        d[n - 1] = d[n - 2];
    }
    d
}

/// `∂²_t (t² · values)` on the signal's own abscissae.
pub fn second_derivative_t(signal: &SampledSignal) -> Result<SampledSignal> {
    if signal.len() < 5 {
        return Err(Error::InvalidArgument(format!("need at least 5 samples, got {}", signal.len())));
    }
    let w: Vec<f64> = signal
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let t = signal.abscissa(i);
            t * t * v
        })
        .collect();
    Ok(SampledSignal { values: second_derivative(&w, signal.step), step: signal.step, start: signal.start })
}

/// 5-point Laplacian of a slice stored x-fastest, one-sided closure at the edges.
pub fn laplacian2(slice: &[f64], nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Vec<f64>> {
    if nx < 3 || ny < 3 || slice.len() != nx * ny {
        return Err(Error::InvalidArgument(format!("laplacian2 needs a ≥3×3 slice, got {nx}×{ny}")));
    }
    let mut out = vec![0.0; nx * ny];
    let mut line = Vec::new();
    for j in 0..ny {
        line.clear();
        line.extend((0..nx).map(|i| slice[i + nx * j]));
        for (i, d) in second_derivative(&line, dx).into_iter().enumerate() {
            out[i + nx * j] += d;
        }
    }
    for i in 0..nx {
        line.clear();
        line.extend((0..ny).map(|j| slice[i + nx * j]));
        for (j, d) in second_derivative(&line, dy).into_iter().enumerate() {
            out[i + nx * j] += d;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Hankel transform and the Bateman identity

/// Trapezoid rule for `∫_0^{r_max} h(t) t J0(tη) dt`.
pub fn hankel0(signal: &SampledSignal, eta: f64) -> Result<f64> {
    if signal.start != 0.0 {
        return Err(Error::InvalidArgument("hankel0 expects samples starting at 0".into()));
    }
    let n = signal.len();
    let mut s = 0.0;
    for (i, v) in signal.values.iter().enumerate() {
        let t = signal.abscissa(i);
        let w = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
        s += w * v * t * bessel_j0(t * eta);
    }
    Ok(s * signal.step)
}

/// Quadrature of `∫_0^{ρ_max} J0(a√(ρ²+b²)) cos(ρξ1) dρ` next to its closed form.
///
/// The partial integrals oscillate with period `2π/|a−ξ1|` about the limit,
/// so they are averaged twice over that window before reporting.
pub fn bateman_identity_check(a: f64, b: f64, xi1: f64, rho_max: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) || !(b >= 0.0) || !(xi1 > 0.0) || xi1 == a || !(rho_max > 0.0) {
        return Err(Error::InvalidArgument(format!("bad Bateman parameters a={a} b={b} xi1={xi1}")));
    }
    let rhs = if xi1 < a {
        let k = (a * a - xi1 * xi1).sqrt();
        (b * k).cos() / k
    } else {
        0.0
    };
    let h = (0.02 / (a + xi1)).min(0.01);
    let n = (rho_max / h).ceil() as usize;
    let h = rho_max / n as f64;
    let integrand = |rho: f64| bessel_j0(a * (rho * rho + b * b).sqrt()) * (rho * xi1).cos();
    let mut partial = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    let mut prev = integrand(0.0);
    partial.push(0.0);
    for i in 1..=n {
        let cur = integrand(i as f64 * h);
        acc += 0.5 * h * (prev + cur);
        partial.push(acc);
        prev = cur;
    }
    let period = 2.0 * PI / (a - xi1).abs();
    let w = ((period / h).round() as usize).clamp(1, n / 3);
    let running = moving_average(&partial, w);
    let twice = moving_average(&running, w);
    Ok((*twice.last().unwrap(), rhs))
}

// mean over the trailing window of `w` intervals (w+1 samples, trapezoid weights)
fn moving_average(v: &[f64], w: usize) -> Vec<f64> {
    let mut cum = vec![0.0; v.len()];
    for i in 1..v.len() {
        cum[i] = cum[i - 1] + 0.5 * (v[i] + v[i - 1]);
    }
    (w..v.len()).map(|i| (cum[i] - cum[i - w]) / w as f64).collect()
}

// ---------------------------------------------------------------------------
// Fourier transforms approximating the continuous transform

/// Samples of the continuous Fourier transform on the FFT lattice.
///
/// Axis 0 is fastest in `data`, matching the field layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub dims: Vec<usize>,
    pub steps: Vec<f64>,
    pub origins: Vec<f64>,
    pub data: Vec<Complex64>,
}

/// FFT frequency index `k` of an `n`-point axis as a signed integer.
#[inline]
pub fn signed_index(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

impl Spectrum {
    #[inline]
    pub fn freq(&self, axis: usize, k: usize) -> f64 {
        let n = self.dims[axis];
        2.0 * PI * signed_index(k, n) as f64 / (n as f64 * self.steps[axis])
    }

    /// Same dims, steps and origins with no data.
    pub fn clone_shape(&self) -> Spectrum {
        Spectrum { dims: self.dims.clone(), steps: self.steps.clone(), origins: self.origins.clone(), data: Vec::new() }
    }

    /// Multi-index of a flat position.
    pub fn unravel(&self, mut idx: usize) -> Vec<usize> {
        self.dims
            .iter()
            .map(|&n| {
                let k = idx % n;
                idx /= n;
                k
            })
            .collect()
    }
}

pub(crate) fn fft_axis(data: &mut [Complex64], dims: &[usize], axis: usize, fft: &Arc<dyn Fft<f64>>) {
    let n = dims[axis];
    let stride: usize = dims[..axis].iter().product();
    let outer: usize = dims[axis + 1..].iter().product();
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for o in 0..outer {
        for s in 0..stride {
            let base = s + o * stride * n;
            for (k, l) in line.iter_mut().enumerate() {
                *l = data[base + k * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (k, l) in line.iter().enumerate() {
                data[base + k * stride] = *l;
            }
        }
    }
}

fn origin_phase(spec: &Spectrum, idx: usize) -> Complex64 {
    let ks = spec.unravel(idx);
    let arg: f64 = ks.iter().enumerate().map(|(a, &k)| spec.origins[a] * spec.freq(a, k)).sum();
    Complex64::from_polar(1.0, -arg)
}

/// Continuous-transform approximation of real samples on a uniform grid.
pub fn fourier_nd(values: &[f64], dims: &[usize], steps: &[f64], origins: &[f64]) -> Spectrum {
    assert_eq!(values.len(), dims.iter().product::<usize>());
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    for (a, &n) in dims.iter().enumerate() {
        let fft = planner.plan_fft_forward(n);
        fft_axis(&mut data, dims, a, &fft);
    }
    let mut spec = Spectrum { dims: dims.to_vec(), steps: steps.to_vec(), origins: origins.to_vec(), data: Vec::new() };
    let cell: f64 = steps.iter().product();
    for (i, d) in data.iter_mut().enumerate() {
        *d *= origin_phase(&spec, i) * cell;
    }
    spec.data = data;
    spec
}

/// Inverse of `fourier_nd`, complex samples on the original grid.
pub fn inverse_fourier_nd(spec: &Spectrum) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = spec.data.iter().enumerate().map(|(i, d)| d * origin_phase(spec, i).conj()).collect();
    let mut planner = FftPlanner::new();
    for (a, &n) in spec.dims.iter().enumerate() {
        let fft = planner.plan_fft_inverse(n);
        fft_axis(&mut data, &spec.dims, a, &fft);
    }
    let total: usize = spec.dims.iter().product();
    let cell: f64 = spec.steps.iter().product();
    let scale = 1.0 / (total as f64 * cell);
    for d in data.iter_mut() {
        *d *= scale;
    }
    data
}

/// Real part of the inverse transform, failing if the imaginary residue exceeds `tol` (relative).
pub fn inverse_fourier_nd_real(spec: &Spectrum, tol: f64) -> Result<Vec<f64>> {
    let z = inverse_fourier_nd(spec);
    let re: f64 = z.iter().map(|c| c.re * c.re).sum::<f64>().sqrt();
    let im: f64 = z.iter().map(|c| c.im * c.im).sum::<f64>().sqrt();
    if im > tol * re.max(f64::MIN_POSITIVE) {
        return Err(Error::ImaginaryResidue { residue: im / re.max(f64::MIN_POSITIVE), tolerance: tol });
    }
    Ok(z.into_iter().map(|c| c.re).collect())
}

/// Plane stored u-fastest.
pub fn fourier2(plane: &[f64], n: [usize; 2], step: [f64; 2], origin: [f64; 2]) -> Spectrum {
    fourier_nd(plane, &n, &step, &origin)
}

pub fn inverse_fourier2(spec: &Spectrum) -> Vec<Complex64> {
    inverse_fourier_nd(spec)
}

pub fn fourier3(volume: &[f64], n: [usize; 3], step: [f64; 3], origin: [f64; 3]) -> Spectrum {
    fourier_nd(volume, &n, &step, &origin)
}

pub fn inverse_fourier3(spec: &Spectrum) -> Vec<Complex64> {
    inverse_fourier_nd(spec)
}
