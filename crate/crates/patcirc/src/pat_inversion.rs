//! Recovery of M_{r_det}f from detector data in the three geometries, and
//! Bessel deconvolution from M_{r_det}f to f.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{rp_from_pressure, CircularMeanMap, CylindricalSinogram, PlanarSinogram, PressureData, SphericalSinogram};
use crate::grid::{Axis, Grid3, ScalarField3};
mod plane;

use crate::transforms::{
    bessel_j0, derivative, extend_about_zero, fourier2, fourier3, inverse_fourier2, inverse_fourier3,
    laplacian2, second_derivative_t, signed_index, HilbertPlan, SampledSignal,
};

/// `L = FILTRATION_FACTOR · (1/t) H_t ∂_t R_P^# g`.
pub const FILTRATION_FACTOR: f64 = 1.0 / (2.0 * PI);
/// Uncorrected filtration factor `−1/π²`; differs from the working one by the ratio `−2/π`.
pub const UNCORRECTED_FILTRATION_FACTOR: f64 = -1.0 / (PI * PI);
/// `M_{r_det}f = CYLINDER_FACTOR · Δ ∫ R_P^# g(θ, x3, |x' − Rθ|) dθ`.
pub const CYLINDER_FACTOR: f64 = -1.0 / (8.0 * PI * PI);
/// Planar multiplier `|ξ||ξ1| · PLANE_FACTOR`, applied before the inverse transform.
pub const PLANE_FACTOR: f64 = 1.0 / (8.0 * PI * PI);

/// Uncorrected cylinder factor `1/(πR)`.
pub fn uncorrected_cylinder_factor(radius: f64) -> f64 {
    1.0 / (PI * radius)
}

/// Uncorrected planar multiplier `1/(2⁵π⁶)` in front of the bare ξ-integral, as a
/// factor on `|ξ||ξ1|` under the `(2π)^{-3}` inverse convention it equals `1/(4π³)`.
pub const UNCORRECTED_PLANE_FACTOR: f64 = 1.0 / (4.0 * PI * PI * PI);

pub fn sphere_factor(radius: f64) -> f64 {
    -radius / (8.0 * PI * PI)
}

// ---------------------------------------------------------------------------
// R_P^#

/// z range of the backprojection integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ZWindow {
    /// Whole z range of the data.
    Data,
    /// `[x3 − half_width, x3 + half_width]` for every x3.
    Symmetric { half_width: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BackprojectionConfig {
    pub window: ZWindow,
    /// Extrapolation in the half width Z (symmetric windows only).
    pub extrapolation: Extrapolation,
}

/// Cancels leading powers of `1/Z` in the truncated z-integral.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extrapolation {
    Off,
    /// `2B_Z − B_{Z/2}`, removes a `1/Z` term.
    Linear,
    /// `(4B_Z − B_{Z/2})/3`, removes a `1/Z²` term.
    Quadratic,
    /// `(8B_Z − 6B_{Z/2} + B_{Z/4})/3`, removes both.
    Both,
}

/// `R_P^# g` sampled as `[θ][x3][ρ]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Backprojection {
    pub theta: Axis,
    pub x3: Axis,
    pub rho: Axis,
    pub values: Vec<f64>,
}

impl Backprojection {
    pub fn row(&self, i_theta: usize, i_x3: usize) -> &[f64] {
        let n = self.rho.len;
        let o = (i_theta * self.x3.len + i_x3) * n;
        &self.values[o..o + n]
    }
}

// Integral over [a, b] of the piecewise-linear interpolant of node values
// `f(first), f(first+1), …` on `axis`.
pub(crate) fn window_integral(axis: &Axis, a: f64, b: f64, first: usize, f: &[f64]) -> f64 {
    let last = (axis.len - 1) as f64;
    let ua = ((a - axis.start) / axis.step).clamp(0.0, last);
    let ub = ((b - axis.start) / axis.step).clamp(0.0, last);
    if ub <= ua {
        return 0.0;
    }
    let c0 = (ua.floor() as usize).min(axis.len - 2);
    let c1 = (ub.ceil() as usize).max(c0 + 1);
    let mut s = 0.0;
    for c in c0..c1 {
        let u0 = ua.max(c as f64);
        let u1 = ub.min(c as f64 + 1.0);
        if u1 <= u0 {
            continue;
        }
        let f0 = f[c - first];
        let f1 = f[c + 1 - first];
        s += (u1 - u0) * (f0 + (0.5 * (u0 + u1) - c as f64) * (f1 - f0));
    }
    s * axis.step
}

#[inline]
fn interp_row(t: &Axis, row: &[f64], x: f64) -> f64 {
    t.interp(row, x)
}

pub fn rp_backprojection(g: &CylindricalSinogram, x3: Axis, rho: Axis) -> Result<Backprojection> {
    rp_backprojection_with(g, x3, rho, &BackprojectionConfig { window: ZWindow::Data, extrapolation: Extrapolation::Off })
}

pub fn rp_backprojection_with(
    g: &CylindricalSinogram,
    x3: Axis,
    rho: Axis,
    cfg: &BackprojectionConfig,
) -> Result<Backprojection> {
    if rho.start < 0.0 {
        return Err(Error::InvalidArgument("rho axis must be nonnegative".into()));
    }
    let z = g.z;
    let t = g.t;
    let half = match cfg.window {
        ZWindow::Data => {
            if cfg.extrapolation != Extrapolation::Off {
                return Err(Error::InvalidArgument("aperture extrapolation needs a symmetric window".into()));
            }
            None
        }
        ZWindow::Symmetric { half_width } => {
            if !(half_width > 0.0) {
                return Err(Error::InvalidArgument(format!("window half width must be positive, got {half_width}")));
            }
            let tol = 1e-9 * z.step;
            if x3.start - half_width < z.start - tol || x3.end() + half_width > z.end() + tol {
                return Err(Error::InvalidArgument(format!(
                    "z data [{}, {}] do not cover x3 ± {half_width} for x3 in [{}, {}]",
                    z.start,
                    z.end(),
                    x3.start,
                    x3.end()
                )));
            }
            let need = half_width.hypot(rho.end());
            if t.end() < need - 1e-9 * t.step {
                return Err(Error::InvalidArgument(format!("t axis ends at {} but the window needs {need}", t.end())));
            }
            Some(half_width)
        }
    };
    let nt = t.len;
    let nr = rho.len;
    let mut values = vec![0.0; g.theta.len * x3.len * nr];
    values.par_chunks_mut(nr).enumerate().for_each(|(row, out)| {
        let it = row / x3.len;
        let xv = x3.value(row % x3.len);
        let (a, b) = match half {
            Some(h) => (xv - h, xv + h),
            None => (z.start, z.end()),
        };
        let first = (((a - z.start) / z.step).floor().max(0.0) as usize).min(z.len - 2);
        let lastn = (((b - z.start) / z.step).ceil() as usize).clamp(first + 1, z.len - 1);
        let mut nodes = vec![0.0; lastn - first + 1];
        for (m, o) in out.iter_mut().enumerate() {
            let r = rho.value(m);
            for (j, v) in nodes.iter_mut().enumerate() {
                let zi = first + j;
                let tau = (z.value(zi) - xv).hypot(r);
                let base = (it * z.len + zi) * nt;
                *v = tau * interp_row(&t, &g.values[base..base + nt], tau);
            }
            let full = window_integral(&z, a, b, first, &nodes);
            let part = |w: f64| window_integral(&z, xv - w, xv + w, first, &nodes);
            *o = match (half, cfg.extrapolation) {
                (Some(h), Extrapolation::Linear) => 2.0 * full - part(0.5 * h),
                (Some(h), Extrapolation::Quadratic) => (4.0 * full - part(0.5 * h)) / 3.0,
                (Some(h), Extrapolation::Both) => (8.0 * full - 6.0 * part(0.5 * h) + part(0.25 * h)) / 3.0,
                _ => full,
            };
        }
    });
    Ok(Backprojection { theta: g.theta, x3, rho, values })
}

// ---------------------------------------------------------------------------
// Filtration

/// `H_ρ ∂_ρ` of rows even in ρ, optionally with a logarithmic tail model.
///
/// Without a finite window the backprojection grows like `−κ log ρ²` for large ρ,
/// so `∂B` decays only like `1/ρ` and its Hilbert transform on a finite ρ range is
/// biased. The model `−κ log(ρ² + a²)` is split off, its filtered form
/// `2κa/(ρ² + a²)` added back analytically, and κ fixed by
/// `∫_0^{ρ_s} S dρ = π κ` over the band `[0, ρ_s]` that carries the signal.
pub struct TailFilter {
    n: usize,
    step: f64,
    plan: HilbertPlan,
    tail: Option<(Vec<f64>, Vec<f64>)>,
}

impl TailFilter {
    pub fn new(rho: &Axis, tail_width: Option<f64>, support_band: f64) -> Result<Self> {
        if rho.start != 0.0 {
            return Err(Error::InvalidArgument("filtration needs a rho axis starting at 0".into()));
        }
        let n = rho.len;
        let plan = HilbertPlan::new(2 * n - 1);
        let tail = match tail_width {
            None => None,
            Some(a) => {
                if !(a > 0.0) {
                    return Err(Error::InvalidArgument(format!("tail width must be positive, got {a}")));
                }
                // model per unit κ/2: ∂B = −4ρ/(ρ²+a²), filtered 4a/(ρ²+a²)
                let model: Vec<f64> = (0..n).map(|i| rho.value(i)).map(|r| -4.0 * r / (r * r + a * a)).collect();
                let hm = odd_hilbert(&plan, &model);
                let s1: Vec<f64> = (0..n)
                    .map(|i| {
                        let r = rho.value(i);
                        4.0 * a / (r * r + a * a) - hm[i]
                    })
                    .collect();
                let w: Vec<f64> = (0..n)
                    .map(|i| {
                        let r = rho.value(i);
                        if r > support_band + 1e-12 {
                            0.0
                        } else if i == 0 {
                            0.5 * rho.step
                        } else {
                            rho.step
                        }
                    })
                    .collect();
                Some((s1, w))
            }
        };
        Ok(TailFilter { n, step: rho.step, plan, tail })
    }

    pub fn apply(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let q = derivative(b, self.step);
        let s0 = odd_hilbert(&self.plan, &q);
        match &self.tail {
            None => s0,
            Some((s1, w)) => {
                let num: f64 = s0.iter().zip(w).map(|(s, w)| s * w).sum();
                let den: f64 = 2.0 * PI - s1.iter().zip(w).map(|(s, w)| s * w).sum::<f64>();
                let kappa = num / den;
                s0.iter().zip(s1).map(|(a, b)| a + kappa * b).collect()
            }
        }
    }
}

// Hilbert transform of the odd extension of `q` about 0, restricted to ρ ≥ 0.
fn odd_hilbert(plan: &HilbertPlan, q: &[f64]) -> Vec<f64> {
    let n = q.len();
    let full = extend_about_zero(q, -1.0);
    let mut out = vec![0.0; full.len()];
    plan.apply(&full, &mut out);
    out[n - 1..].to_vec()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiltrationConfig {
    pub backprojection: BackprojectionConfig,
    /// Width `a` of the tail model; `None` filters the backprojection as is.
    pub tail_width: Option<f64>,
    /// Upper end of the signal band; `2R + r_det` when `None`.
    pub support_band: Option<f64>,
}

impl Default for FiltrationConfig {
    fn default() -> Self {
        FiltrationConfig {
            backprojection: BackprojectionConfig { window: ZWindow::Symmetric { half_width: 16.0 }, extrapolation: Extrapolation::Both },
            tail_width: Some(0.5),
            support_band: None,
        }
    }
}

/// `∫∫ f(Rθ + r_det α + t β, x3) dβ dα` sampled as `[θ][x3][t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FilteredMeans {
    pub theta: Axis,
    pub x3: Axis,
    pub t: Axis,
    pub values: Vec<f64>,
}

pub fn circular_means_of_cmm_via_filtration(
    g: &CylindricalSinogram,
    x3: Axis,
    t_out: Axis,
    cfg: &FiltrationConfig,
) -> Result<FilteredMeans> {
    let b = rp_backprojection_with(g, x3, t_out, &cfg.backprojection)?;
    let band = cfg.support_band.unwrap_or(2.0 * g.radius + g.r_det);
    let filter = TailFilter::new(&t_out, cfg.tail_width, band)?;
    let n = t_out.len;
    let mut values = vec![0.0; b.values.len()];
    values.par_chunks_mut(n).zip(b.values.par_chunks(n)).for_each(|(out, row)| {
        let s = filter.apply(row);
        for i in 1..n {
            out[i] = FILTRATION_FACTOR * s[i] / t_out.value(i);
        }
        // S vanishes at 0 with a kink, so L(0) is its one-sided slope
        out[0] = if n > 2 { 2.0 * out[1] - out[2] } else { out[1] };
    });
    Ok(FilteredMeans { theta: g.theta, x3, t: t_out, values })
}

// ---------------------------------------------------------------------------
// Cylinder

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CylinderConfig {
    pub backprojection: BackprojectionConfig,
    /// ρ spacing of the backprojection table; the data t step when `None`.
    pub rho_step: Option<f64>,
    /// Multiplies the inversion constant. Only the mutation check changes it.
    pub constant_scale: f64,
}

impl Default for CylinderConfig {
    fn default() -> Self {
        CylinderConfig {
            backprojection: BackprojectionConfig { window: ZWindow::Symmetric { half_width: 6.0 }, extrapolation: Extrapolation::Quadratic },
            rho_step: None,
            constant_scale: 1.0,
        }
    }
}

fn check_full_circle(theta: &Axis) -> Result<()> {
    if ((theta.step * theta.len as f64) - 2.0 * PI).abs() > 1e-9 {
        return Err(Error::InvalidArgument("theta axis must sample the full circle uniformly".into()));
    }
    Ok(())
}

pub fn invert_cylinder(g: &CylindricalSinogram, target: &Grid3) -> Result<CircularMeanMap> {
    invert_cylinder_with(g, target, &CylinderConfig::default())
}

pub fn invert_cylinder_with(g: &CylindricalSinogram, target: &Grid3, cfg: &CylinderConfig) -> Result<CircularMeanMap> {
    check_full_circle(&g.theta)?;
    let lo = target.origin();
    let hi = target.upper();
    let reach = lo[0].abs().max(hi[0].abs()).hypot(lo[1].abs().max(hi[1].abs()));
    if reach >= g.radius {
        return Err(Error::OutsideDomain(format!(
            "target grid reaches radius {reach} but the detector cylinder has radius {}",
            g.radius
        )));
    }
    let step = cfg.rho_step.unwrap_or(g.t.step);
    let nr = ((g.radius + reach) / step).ceil() as usize + 3;
    let rho = Axis::new(0.0, step, nr)?;
    let x3 = target.axis(2);
    let b = rp_backprojection_with(g, x3, rho, &cfg.backprojection)?;
    let [nx, ny, nz] = target.counts();
    let d = target.spacing();
    let centers: Vec<[f64; 2]> = (0..g.theta.len)
        .map(|i| {
            let (s, c) = g.theta.value(i).sin_cos();
            [g.radius * c, g.radius * s]
        })
        .collect();
    let factor = CYLINDER_FACTOR * cfg.constant_scale;
    let slices: Vec<Vec<f64>> = (0..nz)
        .into_par_iter()
        .map(|k| -> Result<Vec<f64>> {
            let mut a = vec![0.0; nx * ny];
            for j in 0..ny {
                for i in 0..nx {
                    let p = target.point(i, j, k);
                    let mut s = 0.0;
                    for (it, c) in centers.iter().enumerate() {
                        s += rho.interp(b.row(it, k), (p[0] - c[0]).hypot(p[1] - c[1]));
                    }
                    a[i + nx * j] = s * g.theta.step;
                }
            }
            Ok(laplacian2(&a, nx, ny, d[0], d[1])?.into_iter().map(|v| factor * v).collect())
        })
        .collect::<Result<_>>()?;
    Ok(CircularMeanMap { grid: *target, values: slices.concat(), r_det: g.r_det })
}

// ---------------------------------------------------------------------------
// Plane

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanarMethod {
    /// Transform of `M_P^* g` evaluated directly on a lattice shifted by half a step in ξ1.
    Spectral,
    /// `M_P^* g` on the target grid followed by a discrete transform of the box.
    BoxFft,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneConfig {
    pub method: PlanarMethod,
    /// Outer fraction of the detector half width covered by a raised-cosine taper.
    pub taper_fraction: f64,
    /// GMRES steps of the aperture completion; 0 keeps the direct spectral estimate.
    pub completion_steps: usize,
}

impl Default for PlaneConfig {
    fn default() -> Self {
        PlaneConfig { method: PlanarMethod::Spectral, taper_fraction: 0.4, completion_steps: 20 }
    }
}

fn trapezoid_weights(axis: &Axis) -> Vec<f64> {
    (0..axis.len).map(|i| if i == 0 || i + 1 == axis.len { 0.5 * axis.step } else { axis.step }).collect()
}

/// `M_P^* g(x) = ∫∫ g(y, z, |x − (0, y, z)|) dy dz`.
pub fn mp_star(g: &PlanarSinogram, target: &Grid3) -> Result<Vec<f64>> {
    let wy = trapezoid_weights(&g.y);
    let wz = trapezoid_weights(&g.z);
    let nt = g.t.len;
    let values = (0..target.len())
        .into_par_iter()
        .map(|idx| {
            let p = target.point_at(idx);
            let mut s = 0.0;
            for iy in 0..g.y.len {
                let dy = g.y.value(iy) - p[1];
                let q = p[0] * p[0] + dy * dy;
                let mut row = 0.0;
                for iz in 0..g.z.len {
                    let dz = g.z.value(iz) - p[2];
                    let base = (iy * g.z.len + iz) * nt;
                    row += wz[iz] * g.t.interp(&g.values[base..base + nt], (q + dz * dz).sqrt());
                }
                s += wy[iy] * row;
            }
            s
        })
        .collect();
    Ok(values)
}

pub fn invert_plane(g: &PlanarSinogram, target: &Grid3) -> Result<CircularMeanMap> {
    invert_plane_with(g, target, &PlaneConfig::default())
}

pub fn invert_plane_with(g: &PlanarSinogram, target: &Grid3, cfg: &PlaneConfig) -> Result<CircularMeanMap> {
    if !target.is_symmetric_x1() {
        return Err(Error::Parity("planar inversion needs a target grid symmetric in x1".into()));
    }
    if !(0.0..1.0).contains(&cfg.taper_fraction) {
        return Err(Error::InvalidArgument(format!("taper fraction must lie in [0, 1), got {}", cfg.taper_fraction)));
    }
    let values = match cfg.method {
        PlanarMethod::BoxFft => {
            let b = mp_star(g, target)?;
            let mut spec = fourier3(&b, target.counts(), target.spacing(), target.origin());
            let shape = spec.clone_shape();
            for (idx, v) in spec.data.iter_mut().enumerate() {
                let k = shape.unravel(idx);
                let xi = [shape.freq(0, k[0]), shape.freq(1, k[1]), shape.freq(2, k[2])];
                let norm = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
                *v *= PLANE_FACTOR * norm * xi[0].abs();
            }
            inverse_fourier3(&spec).into_iter().map(|c| c.re).collect()
        }
        PlanarMethod::Spectral => {
            let plan = plane::SpectralPlan::new(g, target, cfg.taper_fraction)?;
            let first = plan.synthesize(&plan.data_transform(g));
            if cfg.completion_steps == 0 {
                first
            } else {
                plane::gmres(|h| plan.synthesize(&plan.simulate(h)), &first, cfg.completion_steps)
            }
        }
    };
    Ok(CircularMeanMap { grid: *target, values, r_det: g.r_det })
}

// ---------------------------------------------------------------------------
// Sphere

pub fn invert_sphere(g: &SphericalSinogram, target: &Grid3) -> Result<CircularMeanMap> {
    let lo = target.origin();
    let hi = target.upper();
    let reach = (0..3).map(|a| lo[a].abs().max(hi[a].abs()).powi(2)).sum::<f64>().sqrt();
    if reach >= g.radius {
        return Err(Error::OutsideDomain(format!(
            "target grid reaches radius {reach} but the detector sphere has radius {}",
            g.radius
        )));
    }
    let nt = g.t.len;
    let q: Vec<Vec<f64>> = g
        .values
        .chunks(nt)
        .map(|row| {
            second_derivative_t(&SampledSignal { values: row.to_vec(), step: g.t.step, start: g.t.start })
                .map(|s| s.values)
        })
        .collect::<Result<_>>()?;
    let centers: Vec<[f64; 3]> = g.directions.dirs.iter().map(|d| d.map(|v| g.radius * v)).collect();
    let w = &g.directions.weights;
    let factor = sphere_factor(g.radius);
    let values = (0..target.len())
        .into_par_iter()
        .map(|idx| {
            let p = target.point_at(idx);
            let mut s = 0.0;
            for ((c, qrow), wk) in centers.iter().zip(&q).zip(w) {
                let r = ((c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2) + (c[2] - p[2]).powi(2)).sqrt();
                s += wk * g.t.interp(qrow, r) / r;
            }
            factor * s
        })
        .collect();
    Ok(CircularMeanMap { grid: *target, values, r_det: g.r_det })
}

// ---------------------------------------------------------------------------
// Deconvolution

/// Frequencies where the Bessel factor nearly vanishes.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    /// Distinct `|ξ|` of lattice frequencies with `|J0(r_det|ξ|)| < 1e-2`.
    pub near_zero_shells: Vec<f64>,
    pub min_abs_j0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Deconvolution {
    pub field: ScalarField3,
    pub report: ConditionReport,
}

/// Per x3 slice, `f̂ = M̂ · J0/(2π(J0² + ε))` with `J0 = J0(r_det|ξ|)`.
pub fn deconvolve_fixed_radius(m: &CircularMeanMap, reg_epsilon: f64) -> Result<Deconvolution> {
    if !(reg_epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("reg_epsilon must be nonnegative, got {reg_epsilon}")));
    }
    if !(m.r_det > 0.0) {
        return Err(Error::InvalidArgument(format!("r_det must be positive, got {}", m.r_det)));
    }
    let grid = m.grid;
    let [nx, ny, nz] = grid.counts();
    let d = grid.spacing();
    let o = grid.origin();
    let plane = nx * ny;
    let slices: Vec<Vec<f64>> = (0..nz)
        .into_par_iter()
        .map(|k| {
            let mut spec = fourier2(&m.values[k * plane..(k + 1) * plane], [nx, ny], [d[0], d[1]], [o[0], o[1]]);
            let shape = spec.clone_shape();
            for (idx, v) in spec.data.iter_mut().enumerate() {
                let (i, j) = (idx % nx, idx / nx);
                let xi = shape.freq(0, i).hypot(shape.freq(1, j));
                let j0 = bessel_j0(m.r_det * xi);
                let den = 2.0 * PI * (j0 * j0 + reg_epsilon);
                *v = if den == 0.0 { Complex64::new(0.0, 0.0) } else { *v * (j0 / den) };
            }
            inverse_fourier2(&spec).into_iter().map(|c| c.re).collect()
        })
        .collect();
    let mut shells = Vec::new();
    let mut min_abs = f64::INFINITY;
    for j in 0..ny {
        for i in 0..nx {
            let a = 2.0 * PI * signed_index(i, nx) as f64 / (nx as f64 * d[0]);
            let b = 2.0 * PI * signed_index(j, ny) as f64 / (ny as f64 * d[1]);
            let xi = a.hypot(b);
            let j0 = bessel_j0(m.r_det * xi).abs();
            min_abs = min_abs.min(j0);
            if j0 < 1e-2 {
                shells.push(xi);
            }
        }
    }
    shells.sort_by(|a, b| a.partial_cmp(b).unwrap());
    shells.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs().max(1.0));
    let lo = grid.origin();
    let hi = grid.upper();
    let support = (0..3).map(|a| lo[a].abs().max(hi[a].abs()).powi(2)).sum::<f64>().sqrt();
    let field = ScalarField3::from_values(grid, slices.concat(), support)?;
    Ok(Deconvolution { field, report: ConditionReport { near_zero_shells: shells, min_abs_j0: min_abs } })
}

// ---------------------------------------------------------------------------
// Pipeline

#[derive(Clone, Debug, PartialEq)]
pub enum GeometryData {
    Cylinder(PressureData<CylindricalSinogram>),
    Plane(PressureData<PlanarSinogram>),
    Sphere(PressureData<SphericalSinogram>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructConfig {
    pub target: Grid3,
    pub reg_epsilon: f64,
    pub cylinder: CylinderConfig,
    pub plane: PlaneConfig,
}

impl ReconstructConfig {
    pub fn new(target: Grid3) -> Self {
        ReconstructConfig { target, reg_epsilon: 1e-6, cylinder: CylinderConfig::default(), plane: PlaneConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageTiming {
    pub stage: &'static str,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub field: ScalarField3,
    pub mean_map: CircularMeanMap,
    pub report: ConditionReport,
    pub stages: Vec<StageTiming>,
}

/// Pressure → R_P f → M_{r_det}f → f.
pub fn reconstruct(data: &GeometryData, cfg: &ReconstructConfig) -> Result<Reconstruction> {
    let mut stages = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |stage: &'static str, stages: &mut Vec<StageTiming>| {
        stages.push(StageTiming { stage, wall_ms: clock.elapsed().as_secs_f64() * 1e3 });
        clock = Instant::now();
    };
    let mean_map = match data {
        GeometryData::Cylinder(p) => {
            let g = rp_from_pressure(p)?;
            lap("rp_from_pressure", &mut stages);
            let m = invert_cylinder_with(&g, &cfg.target, &cfg.cylinder)?;
            lap("invert_cylinder", &mut stages);
            m
        }
        GeometryData::Plane(p) => {
            let g = rp_from_pressure(p)?;
            lap("rp_from_pressure", &mut stages);
            let m = invert_plane_with(&g, &cfg.target, &cfg.plane)?;
            lap("invert_plane", &mut stages);
            m
        }
        GeometryData::Sphere(p) => {
            let g = rp_from_pressure(p)?;
            lap("rp_from_pressure", &mut stages);
            let m = invert_sphere(&g, &cfg.target)?;
            lap("invert_sphere", &mut stages);
            m
        }
    };
    let d = deconvolve_fixed_radius(&mean_map, cfg.reg_epsilon)?;
    lap("deconvolve_fixed_radius", &mut stages);
    Ok(Reconstruction { field: d.field, mean_map, report: d.report, stages })
}
