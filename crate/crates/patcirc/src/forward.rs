//! Forward operators: circular means, spherical means, the detector
//! transform R_P for cylindrical, planar and spherical detector surfaces,
//! the pressure model and the toroidal Radon transform.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{trilinear, Axis, Grid3, Parity, ScalarField3};

/// Quadrature settings shared by the forward operators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    /// Nodes on a full detector circle.
    pub n_alpha: usize,
    /// Azimuthal nodes of the full sphere rule.
    pub n_beta1: usize,
    /// Polar intervals of the full sphere rule.
    pub n_beta2: usize,
    /// Largest arc length between nodes for clipped rules; grid spacing if `None`.
    pub max_step: Option<f64>,
    /// Restrict circles and spheres to the part meeting the support ball.
    pub clip_to_support: bool,
    pub method: ForwardMethod,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardMethod {
    /// Evaluate the circle mean at every sphere node.
    Direct,
    /// Tabulate M_{r_det}f on the field grid first, then take spherical means of it.
    Tabulated,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            n_alpha: 128,
            n_beta1: 128,
            n_beta2: 64,
            max_step: None,
            clip_to_support: true,
            method: ForwardMethod::Tabulated,
        }
    }
}

impl Quadrature {
    pub fn validate(&self) -> Result<()> {
        if self.n_alpha < 4 || self.n_beta1 < 4 || self.n_beta2 < 2 {
            return Err(Error::InvalidArgument(format!(
                "quadrature orders too small: {}/{}/{}",
                self.n_alpha, self.n_beta1, self.n_beta2
            )));
        }
        if let Some(s) = self.max_step {
            if !(s > 0.0) {
                return Err(Error::InvalidArgument(format!("max_step must be positive, got {s}")));
            }
        }
        Ok(())
    }

    fn step_for(&self, grid: &Grid3) -> f64 {
        self.max_step.unwrap_or_else(|| grid.spacing().iter().cloned().fold(f64::INFINITY, f64::min))
    }
}

// ---------------------------------------------------------------------------
// Arc clipping

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Arc {
    Empty,
    Full,
    Part { start: f64, len: f64 },
}

/// Part of the circle `c + r(cos φ, sin φ)` lying in the disc `|x − d| ≤ rd`.
pub(crate) fn arc_in_disc(c: [f64; 2], r: f64, d: [f64; 2], rd: f64) -> Arc {
    let dx = d[0] - c[0];
    let dy = d[1] - c[1];
    let dist = (dx * dx + dy * dy).sqrt();
    if rd <= 0.0 {
        return Arc::Empty;
    }
    if dist + r <= rd {
        return Arc::Full;
    }
    if dist >= r + rd || r >= dist + rd {
        return Arc::Empty;
    }
    let cosg = ((r * r + dist * dist - rd * rd) / (2.0 * r * dist)).clamp(-1.0, 1.0);
    let half = cosg.acos();
    Arc::Part { start: dy.atan2(dx) - half, len: 2.0 * half }
}

/// Union of arcs as disjoint angle intervals `(start, len)`.
fn merge_arcs(arcs: &[Arc]) -> Vec<(f64, f64)> {
    if arcs.iter().any(|a| *a == Arc::Full) {
        return vec![(0.0, 2.0 * PI)];
    }
    let mut iv: Vec<(f64, f64)> = Vec::new();
    for a in arcs {
        if let Arc::Part { start, len } = *a {
            let s = start.rem_euclid(2.0 * PI);
            if s + len > 2.0 * PI {
                iv.push((s, 2.0 * PI));
                iv.push((0.0, s + len - 2.0 * PI));
            } else {
                iv.push((s, s + len));
            }
        }
    }
    iv.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in iv {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out.into_iter().map(|(a, b)| (a, b - a)).collect()
}

/// Trapezoid nodes and weights on one angle interval.
fn arc_nodes(start: f64, len: f64, n_full: usize, radius: f64, step: f64, out: &mut Vec<(f64, f64)>) {
    if len >= 2.0 * PI - 1e-15 {
        let n = n_full.max((2.0 * PI * radius / step).ceil() as usize);
        let w = 2.0 * PI / n as f64;
        out.extend((0..n).map(|k| (start + k as f64 * w, w)));
        return;
    }
    let m = ((n_full as f64 * len / (2.0 * PI)).ceil() as usize).max((radius * len / step).ceil() as usize).max(4);
    let h = len / m as f64;
    for k in 0..=m {
        let w = if k == 0 || k == m { 0.5 * h } else { h };
        out.push((start + k as f64 * h, w));
    }
}

// ---------------------------------------------------------------------------
// Circle rules

/// Angle nodes of the circle `c + r α⃗`, restricted to the disc `B(0, rd)` when clipping.
fn circle_rule(c: [f64; 2], r: f64, clip: Option<(f64, f64)>, n_full: usize, out: &mut Vec<(f64, f64)>) {
    out.clear();
    match clip {
        None => {
            let w = 2.0 * PI / n_full as f64;
            out.extend((0..n_full).map(|k| (k as f64 * w, w)));
        }
        Some((rd, step)) => {
            for (s, l) in merge_arcs(&[arc_in_disc(c, r, [0.0, 0.0], rd)]) {
                arc_nodes(s, l, n_full, r, step, out);
            }
        }
    }
}

/// `∫_0^{2π} F(c + r α⃗, x3) dα`.
#[inline]
fn circle_integral(eval: &impl Fn([f64; 3]) -> f64, c: [f64; 2], x3: f64, r: f64, rule: &[(f64, f64)]) -> f64 {
    rule.iter().map(|&(a, w)| w * eval([c[0] + r * a.cos(), c[1] + r * a.sin(), x3])).sum()
}

// cross-section radius of the support ball at height x3
#[inline]
fn slice_radius(support: f64, x3: f64) -> f64 {
    let q = support * support - x3 * x3;
    if q > 0.0 {
        q.sqrt()
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Sphere rules

/// Product lat–long rule: trapezoid in azimuth, sin-weighted hat functions in the polar angle.
///
/// Weights `(node angle, weight)` integrate `sin φ` exactly on `[0, gamma]`.
fn polar_weights(gamma: f64, m: usize) -> Vec<(f64, f64)> {
    let h = gamma / m as f64;
    (0..=m)
        .map(|j| {
            let phi = j as f64 * h;
            let w = if j == 0 {
                1.0 - h.sin() / h
            } else if j == m {
                gamma.sin() * (1.0 - h.cos()) / h - gamma.cos() * (1.0 - h.sin() / h)
            } else {
                2.0 * phi.sin() * (1.0 - h.cos()) / h
            };
            (phi, w)
        })
        .collect()
}

/// Unit directions with quadrature weights over the sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereDirections {
    pub dirs: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl SphereDirections {
    /// `n_polar` polar intervals, `n_azimuth` azimuth nodes per ring, poles collapsed.
    pub fn lat_long(n_polar: usize, n_azimuth: usize) -> Result<Self> {
        if n_polar < 2 || n_azimuth < 3 {
            return Err(Error::InvalidArgument(format!("lat-long rule needs n_polar >= 2, n_azimuth >= 3")));
        }
        let mut dirs = Vec::new();
        let mut weights = Vec::new();
        let dpsi = 2.0 * PI / n_azimuth as f64;
        for (j, (phi, w)) in polar_weights(PI, n_polar).into_iter().enumerate() {
            if j == 0 || j == n_polar {
                dirs.push([0.0, 0.0, if j == 0 { 1.0 } else { -1.0 }]);
                weights.push(2.0 * PI * w);
                continue;
            }
            for k in 0..n_azimuth {
                let psi = k as f64 * dpsi;
                dirs.push([phi.sin() * psi.cos(), phi.sin() * psi.sin(), phi.cos()]);
                weights.push(w * dpsi);
            }
        }
        Ok(SphereDirections { dirs, weights })
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }
}

// Orthonormal frame with first axis `n`; the second axis is the x1 direction
// whenever it is orthogonal to `n`, which keeps the rule symmetric under x1 → −x1.
fn frame(n: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let trial = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = trial[0] * n[0] + trial[1] * n[1] + trial[2] * n[2];
    let mut e1 = [trial[0] - d * n[0], trial[1] - d * n[1], trial[2] - d * n[2]];
    let l = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    e1 = e1.map(|v| v / l);
    let e2 = [n[1] * e1[2] - n[2] * e1[1], n[2] * e1[0] - n[0] * e1[2], n[0] * e1[1] - n[1] * e1[0]];
    (e1, e2)
}

/// `∫_{S²} F(c + tβ) dS(β)`.
fn sphere_integral(
    eval: &impl Fn([f64; 3]) -> f64,
    c: [f64; 3],
    t: f64,
    quad: &Quadrature,
    clip: Option<(f64, f64)>,
) -> f64 {
    if t == 0.0 {
        return 4.0 * PI * eval(c);
    }
    let at = |d: [f64; 3]| eval([c[0] + t * d[0], c[1] + t * d[1], c[2] + t * d[2]]);
    let Some((support, step)) = clip else {
        let dpsi = 2.0 * PI / quad.n_beta1 as f64;
        let mut s = 0.0;
        for (j, (phi, w)) in polar_weights(PI, quad.n_beta2).into_iter().enumerate() {
            if j == 0 || j == quad.n_beta2 {
                s += 2.0 * PI * w * at([0.0, 0.0, phi.cos()]);
                continue;
            }
            let (sp, cp) = phi.sin_cos();
            let mut ring = 0.0;
            for k in 0..quad.n_beta1 {
                let (ss, cs) = (k as f64 * dpsi).sin_cos();
                ring += at([sp * cs, sp * ss, cp]);
            }
            s += w * dpsi * ring;
        }
        return s;
    };
    let dist = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    if (t - dist).abs() >= support {
        return 0.0;
    }
    let (axis, gamma) = if dist == 0.0 || t + dist <= support {
        ([0.0, 0.0, 1.0], PI)
    } else {
        let cg = ((t * t + dist * dist - support * support) / (2.0 * t * dist)).clamp(-1.0, 1.0);
        ([-c[0] / dist, -c[1] / dist, -c[2] / dist], cg.acos())
    };
    let (e1, e2) = frame(axis);
    let m = ((quad.n_beta2 as f64 * gamma / PI).ceil() as usize).max((t * gamma / step).ceil() as usize).max(4);
    let mut s = 0.0;
    for (j, (phi, w)) in polar_weights(gamma, m).into_iter().enumerate() {
        let (sp, cp) = phi.sin_cos();
        if j == 0 || (j == m && gamma >= PI) {
            s += 2.0 * PI * w * at(axis.map(|a| a * cp));
            continue;
        }
        let ring_len = 2.0 * PI * t * sp;
        let n_az = (((quad.n_beta1 as f64 * sp).ceil() as usize).max((ring_len / step).ceil() as usize).max(8) + 1) & !1;
        let dpsi = 2.0 * PI / n_az as f64;
        let mut ring = 0.0;
        for k in 0..n_az {
            let (ss, cs) = (k as f64 * dpsi).sin_cos();
            let d = [0, 1, 2].map(|a| cp * axis[a] + sp * (cs * e1[a] + ss * e2[a]));
            ring += at(d);
        }
        s += w * dpsi * ring;
    }
    s
}

/// Full product rule of the spherical mean (unnormalized, total measure 4π).
pub fn spherical_mean(f: &ScalarField3, center: [f64; 3], t: f64, n_beta1: usize, n_beta2: usize) -> f64 {
    let quad = Quadrature { n_beta1, n_beta2, clip_to_support: false, ..Quadrature::default() };
    sphere_integral(&|p| trilinear(f.grid(), f.values(), p), center, t, &quad, None)
}

// ---------------------------------------------------------------------------
// Fixed-radius circular mean

/// M_{r_det}f sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CircularMeanMap {
    pub grid: Grid3,
    pub values: Vec<f64>,
    pub r_det: f64,
}

impl CircularMeanMap {
    pub fn interpolate(&self, p: [f64; 3]) -> f64 {
        trilinear(&self.grid, &self.values, p)
    }

    pub fn to_field(&self, support_radius: f64) -> Result<ScalarField3> {
        ScalarField3::from_values(self.grid, self.values.clone(), support_radius)
    }
}

/// Pointwise `∫_0^{2π} f(x' + r α⃗, x3) dα` with an `n_alpha`-point periodic trapezoid.
pub fn circular_mean_at(f: &ScalarField3, r_det: f64, x: [f64; 3], n_alpha: usize) -> f64 {
    let w = 2.0 * PI / n_alpha as f64;
    let mut s = 0.0;
    for k in 0..n_alpha {
        let (sa, ca) = (k as f64 * w).sin_cos();
        s += trilinear(f.grid(), f.values(), [x[0] + r_det * ca, x[1] + r_det * sa, x[2]]);
    }
    w * s
}

pub fn circular_mean_fixed_radius(f: &ScalarField3, r_det: f64, grid: &Grid3, n_alpha: usize) -> Result<CircularMeanMap> {
    if !(r_det > 0.0) {
        return Err(Error::InvalidArgument(format!("r_det must be positive, got {r_det}")));
    }
    if n_alpha < 4 {
        return Err(Error::InvalidArgument("n_alpha must be at least 4".into()));
    }
    let w = 2.0 * PI / n_alpha as f64;
    let offsets: Vec<[f64; 2]> = (0..n_alpha)
        .map(|k| {
            let (s, c) = (k as f64 * w).sin_cos();
            [r_det * c, r_det * s]
        })
        .collect();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p = grid.point_at(i);
            w * offsets.iter().map(|o| trilinear(f.grid(), f.values(), [p[0] + o[0], p[1] + o[1], p[2]])).sum::<f64>()
        })
        .collect();
    Ok(CircularMeanMap { grid: *grid, values, r_det })
}

// ---------------------------------------------------------------------------
// Sinograms

/// Data laid out as rows of time (or radius) samples, last axis fastest.
pub trait TimeSeries: Clone {
    fn t_axis(&self) -> Axis;
    fn values(&self) -> &[f64];
    fn values_mut(&mut self) -> &mut [f64];
}

macro_rules! time_series {
    ($t:ty, $field:ident) => {
        impl TimeSeries for $t {
            fn t_axis(&self) -> Axis {
                self.$field
            }
            fn values(&self) -> &[f64] {
                &self.values
            }
            fn values_mut(&mut self) -> &mut [f64] {
                &mut self.values
            }
        }
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct CylindricalSinogram {
    pub radius: f64,
    pub r_det: f64,
    pub theta: Axis,
    pub z: Axis,
    pub t: Axis,
    /// `[θ][z][t]`
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanarSinogram {
    pub r_det: f64,
    pub y: Axis,
    pub z: Axis,
    pub t: Axis,
    /// `[y][z][t]`
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphericalSinogram {
    pub radius: f64,
    pub r_det: f64,
    pub directions: SphereDirections,
    pub t: Axis,
    /// `[ω][t]`
    pub values: Vec<f64>,
}

/// Centers of detector circles or tori in the x1x2-plane.
#[derive(Clone, Debug, PartialEq)]
pub enum CenterSet {
    /// Points `R(cos θ, sin θ)`.
    Circle { radius: f64, theta: Axis },
    /// Points `(0, x2)`.
    Line { x2: Axis },
}

impl CenterSet {
    pub fn len(&self) -> usize {
        match self {
            CenterSet::Circle { theta, .. } => theta.len,
            CenterSet::Line { x2 } => x2.len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn center(&self, i: usize) -> [f64; 2] {
        match self {
            CenterSet::Circle { radius, theta } => {
                let (s, c) = theta.value(i).sin_cos();
                [radius * c, radius * s]
            }
            CenterSet::Line { x2 } => [0.0, x2.value(i)],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToroidalSinogram {
    pub centers: CenterSet,
    pub u: f64,
    pub p: Axis,
    pub r: Axis,
    /// `[μ][p][r]`
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircularRadonData {
    pub centers: CenterSet,
    pub x3: Axis,
    pub r: Axis,
    /// `[μ][x3][r]`
    pub values: Vec<f64>,
}

time_series!(CylindricalSinogram, t);
time_series!(PlanarSinogram, t);
time_series!(SphericalSinogram, t);
time_series!(ToroidalSinogram, r);
time_series!(CircularRadonData, r);

/// Measured pressure `P(a, t)` with the detector layout of the wrapped sinogram type.
#[derive(Clone, Debug, PartialEq)]
pub struct PressureData<S>(pub S);

// ---------------------------------------------------------------------------
// R_P

fn check_t_axis(t: &Axis) -> Result<()> {
    if t.start < 0.0 {
        return Err(Error::InvalidArgument(format!("t axis must be nonnegative, starts at {}", t.start)));
    }
    Ok(())
}

/// Evaluates `R_P f(a, t)` for many detector centers `a` and one t axis.
fn rp_rows(f: &ScalarField3, r_det: f64, centers: &[[f64; 3]], t: &Axis, quad: &Quadrature) -> Result<Vec<f64>> {
    quad.validate()?;
    check_t_axis(t)?;
    if !(r_det > 0.0) {
        return Err(Error::InvalidArgument(format!("r_det must be positive, got {r_det}")));
    }
    let nt = t.len;
    let mut values = vec![0.0; centers.len() * nt];
    match quad.method {
        ForwardMethod::Direct => {
            let support = f.support_radius() + r_det;
            let step = quad.step_for(f.grid());
            let clip = quad.clip_to_support.then_some((support, step));
            let eval = |p: [f64; 3]| circular_mean_at(f, r_det, p, quad.n_alpha);
            values.par_chunks_mut(nt).zip(centers.par_iter()).for_each(|(row, &c)| {
                for (k, v) in row.iter_mut().enumerate() {
                    *v = sphere_integral(&eval, c, t.value(k), quad, clip);
                }
            });
        }
        ForwardMethod::Tabulated => {
            let h = circular_mean_fixed_radius(f, r_det, f.grid(), quad.n_alpha)?;
            let support = f.support_radius() + r_det;
            let step = quad.step_for(&h.grid);
            let clip = quad.clip_to_support.then_some((support, step));
            let eval = |p: [f64; 3]| trilinear(&h.grid, &h.values, p);
            values.par_chunks_mut(nt).zip(centers.par_iter()).for_each(|(row, &c)| {
                for (k, v) in row.iter_mut().enumerate() {
                    *v = sphere_integral(&eval, c, t.value(k), quad, clip);
                }
            });
        }
    }
    Ok(values)
}

pub fn rp_cylinder(
    f: &ScalarField3,
    radius: f64,
    r_det: f64,
    theta: Axis,
    z: Axis,
    t: Axis,
    quad: &Quadrature,
) -> Result<CylindricalSinogram> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("cylinder radius must be positive, got {radius}")));
    }
    if f.support_radius() > radius {
        return Err(Error::SupportViolation(format!(
            "support radius {} exceeds cylinder radius {radius}",
            f.support_radius()
        )));
    }
    let mut centers = Vec::with_capacity(theta.len * z.len);
    for i in 0..theta.len {
        let (s, c) = theta.value(i).sin_cos();
        for k in 0..z.len {
            centers.push([radius * c, radius * s, z.value(k)]);
        }
    }
    let values = rp_rows(f, r_det, &centers, &t, quad)?;
    Ok(CylindricalSinogram { radius, r_det, theta, z, t, values })
}

pub fn rp_plane(f: &ScalarField3, y: Axis, z: Axis, t: Axis, r_det: f64, quad: &Quadrature) -> Result<PlanarSinogram> {
    if f.parity_x1() != Parity::Even {
        return Err(Error::Parity(format!("planar data needs an even-in-x1 field, got {:?}", f.parity_x1())));
    }
    rp_plane_unchecked(f, y, z, t, r_det, quad)
}

/// `rp_plane` without the parity precondition.
pub fn rp_plane_unchecked(f: &ScalarField3, y: Axis, z: Axis, t: Axis, r_det: f64, quad: &Quadrature) -> Result<PlanarSinogram> {
    let mut centers = Vec::with_capacity(y.len * z.len);
    for i in 0..y.len {
        for k in 0..z.len {
            centers.push([0.0, y.value(i), z.value(k)]);
        }
    }
    let values = rp_rows(f, r_det, &centers, &t, quad)?;
    Ok(PlanarSinogram { r_det, y, z, t, values })
}

pub fn rp_sphere(
    f: &ScalarField3,
    radius: f64,
    r_det: f64,
    directions: SphereDirections,
    t: Axis,
    quad: &Quadrature,
) -> Result<SphericalSinogram> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("sphere radius must be positive, got {radius}")));
    }
    if f.support_radius() >= radius {
        return Err(Error::SupportViolation(format!(
            "support radius {} is not inside the detector sphere of radius {radius}",
            f.support_radius()
        )));
    }
    let centers: Vec<[f64; 3]> = directions.dirs.iter().map(|d| d.map(|v| radius * v)).collect();
    let values = rp_rows(f, r_det, &centers, &t, quad)?;
    Ok(SphericalSinogram { radius, r_det, directions, t, values })
}

// ---------------------------------------------------------------------------
// Pressure model

/// `P = (1/8π²) ∂_t (t · R_P f)` row by row.
pub fn pressure_from_rp<S: TimeSeries>(sinogram: &S) -> PressureData<S> {
    let t = sinogram.t_axis();
    let mut out = sinogram.clone();
    let src = sinogram.values();
    out.values_mut().par_chunks_mut(t.len).zip(src.par_chunks(t.len)).for_each(|(dst, row)| {
        let w: Vec<f64> = row.iter().enumerate().map(|(k, v)| t.value(k) * v).collect();
        for (d, v) in dst.iter_mut().zip(crate::transforms::derivative(&w, t.step)) {
            *d = v / (8.0 * PI * PI);
        }
    });
    PressureData(out)
}

/// `R_P f(a,t) = (8π²/t) ∫_0^t P(a,τ) dτ`, with `8π² P(a,0)` at `t = 0`.
pub fn rp_from_pressure<S: TimeSeries>(pressure: &PressureData<S>) -> Result<S> {
    let t = pressure.0.t_axis();
    if t.start != 0.0 {
        return Err(Error::InvalidArgument(format!("pressure t axis must start at 0, starts at {}", t.start)));
    }
    let mut out = pressure.0.clone();
    let src = pressure.0.values();
    let c = 8.0 * PI * PI;
    out.values_mut().par_chunks_mut(t.len).zip(src.par_chunks(t.len)).for_each(|(dst, row)| {
        let mut acc = 0.0;
        dst[0] = c * row[0];
        for k in 1..row.len() {
            acc += 0.5 * t.step * (row[k] + row[k - 1]);
            dst[k] = c * acc / t.value(k);
        }
    });
    Ok(out)
}

// ---------------------------------------------------------------------------
// Circular Radon transform and toroidal Radon transform

/// `M f(μ, x3, r) = ∫_0^{2π} f(μ + r α⃗, x3) dα`.
pub fn circular_radon_at(f: &ScalarField3, mu: [f64; 2], x3: f64, r: f64, quad: &Quadrature) -> f64 {
    let eval = |p: [f64; 3]| trilinear(f.grid(), f.values(), p);
    let mut rule = Vec::new();
    let clip = quad
        .clip_to_support
        .then(|| (slice_radius(f.support_radius(), x3), quad.step_for(f.grid())));
    if let Some((rd, _)) = clip {
        if rd == 0.0 {
            return 0.0;
        }
    }
    circle_rule(mu, r, clip, quad.n_alpha, &mut rule);
    circle_integral(&eval, mu, x3, r, &rule)
}

pub fn circular_radon(f: &ScalarField3, centers: CenterSet, x3: Axis, r: Axis, quad: &Quadrature) -> Result<CircularRadonData> {
    quad.validate()?;
    if r.start < 0.0 {
        return Err(Error::InvalidArgument("radii must be nonnegative".into()));
    }
    let nr = r.len;
    let mut values = vec![0.0; centers.len() * x3.len * nr];
    values.par_chunks_mut(nr).enumerate().for_each(|(row, out)| {
        let mu = centers.center(row / x3.len);
        let z = x3.value(row % x3.len);
        for (k, v) in out.iter_mut().enumerate() {
            *v = circular_radon_at(f, mu, z, r.value(k), quad);
        }
    });
    Ok(CircularRadonData { centers, x3, r, values })
}

/// `R_T f(μ,p,r) = (1/2π) ∫∫ f(μ + (u − r cos β) α⃗, p + r sin β) dβ dα`.
pub fn toroidal_radon_at(f: &ScalarField3, mu: [f64; 2], u: f64, p: f64, r: f64, quad: &Quadrature) -> f64 {
    let eval = |q: [f64; 3]| trilinear(f.grid(), f.values(), q);
    let support = f.support_radius();
    let step = quad.step_for(f.grid());
    let mut beta_rule = Vec::new();
    let mut alpha_rule = Vec::new();
    if quad.clip_to_support {
        // points (s, z) = (u + r cos φ, p + r sin φ), φ = π − β; the support maps to two discs
        let dmu = (mu[0] * mu[0] + mu[1] * mu[1]).sqrt();
        let arcs = [arc_in_disc([u, p], r, [dmu, 0.0], support), arc_in_disc([u, p], r, [-dmu, 0.0], support)];
        for (s, l) in merge_arcs(&arcs) {
            arc_nodes(s, l, quad.n_beta1, r, step, &mut beta_rule);
        }
    } else {
        let w = 2.0 * PI / quad.n_beta1 as f64;
        beta_rule.extend((0..quad.n_beta1).map(|k| (k as f64 * w, w)));
    }
    let mut total = 0.0;
    for &(phi, wb) in &beta_rule {
        let s = u + r * phi.cos();
        let z = p + r * phi.sin();
        let clip = if quad.clip_to_support {
            let rd = slice_radius(support, z);
            if rd == 0.0 {
                continue;
            }
            Some((rd, step))
        } else {
            None
        };
        circle_rule(mu, s.abs(), clip, quad.n_alpha, &mut alpha_rule);
        total += wb * circle_integral(&eval, mu, z, s.abs(), &alpha_rule);
    }
    total / (2.0 * PI)
}

pub fn toroidal_radon(f: &ScalarField3, centers: CenterSet, u: f64, p: Axis, r: Axis, quad: &Quadrature) -> Result<ToroidalSinogram> {
    quad.validate()?;
    if !(u > 0.0) {
        return Err(Error::InvalidArgument(format!("torus central radius must be positive, got {u}")));
    }
    if !(r.start > 0.0) {
        return Err(Error::InvalidArgument("torus tube radii must be positive".into()));
    }
    let nr = r.len;
    let mut values = vec![0.0; centers.len() * p.len * nr];
    values.par_chunks_mut(nr).enumerate().for_each(|(row, out)| {
        let mu = centers.center(row / p.len);
        let pp = p.value(row % p.len);
        for (k, v) in out.iter_mut().enumerate() {
            *v = toroidal_radon_at(f, mu, u, pp, r.value(k), quad);
        }
    });
    Ok(ToroidalSinogram { centers, u, p, r, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{sample_phantom, Blob, PhantomSpec};
    use proptest::prelude::*;

    fn i0(x: f64) -> f64 {
        let mut s = 0.0;
        let mut term = 1.0;
        for k in 0..60 {
            if k > 0 {
                term *= (0.5 * x) * (0.5 * x) / (k * k) as f64;
            }
            s += term;
        }
        s
    }

    fn blob(c: [f64; 3], s: f64, a: f64) -> Blob {
        Blob { center: c, sigma: s, amplitude: a }
    }

    fn field(blobs: Vec<Blob>, n: usize, half: f64) -> ScalarField3 {
        sample_phantom(&PhantomSpec { blobs, symmetrize_x1: false }, &Grid3::cube(n, half).unwrap())
    }

    #[test]
    fn arc_clipping_geometry() {
        assert_eq!(arc_in_disc([0.0, 0.0], 0.5, [0.0, 0.0], 1.0), Arc::Full);
        assert_eq!(arc_in_disc([5.0, 0.0], 1.0, [0.0, 0.0], 1.0), Arc::Empty);
        assert_eq!(arc_in_disc([0.0, 0.0], 3.0, [0.0, 0.0], 1.0), Arc::Empty);
        match arc_in_disc([2.0, 0.0], 2.0, [0.0, 0.0], 1.0) {
            Arc::Part { start, len } => {
                // crossing points of |x|=1 and |x-(2,0)|=2 are at x = 1/4
                let mid = start + 0.5 * len;
                assert!((mid - PI).abs() < 1e-12);
                let end = [2.0 + 2.0 * (start + len).cos(), 2.0 * (start + len).sin()];
                assert!(((end[0] * end[0] + end[1] * end[1]).sqrt() - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        let m = merge_arcs(&[Arc::Part { start: -0.5, len: 1.0 }, Arc::Part { start: 0.2, len: 1.0 }]);
        let total: f64 = m.iter().map(|x| x.1).sum();
        assert!((total - 1.7).abs() < 1e-12);
    }

    #[test]
    fn direction_weights() {
        for &(np, na) in &[(64, 128), (7, 5), (2, 3)] {
            let d = SphereDirections::lat_long(np, na).unwrap();
            let s: f64 = d.weights.iter().sum();
            assert!((s - 4.0 * PI).abs() < 1e-12, "{s}");
            for v in &d.dirs {
                assert!(((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spherical_mean_examples() {
        let g = Grid3::cube(33, 2.0).unwrap();
        let c = ScalarField3::from_fn(g, 10.0, |_| 1.7).unwrap();
        assert!((spherical_mean(&c, [0.1, 0.0, -0.2], 0.9, 128, 64) - 4.0 * PI * 1.7).abs() < 1e-12);
        let gauss = ScalarField3::from_fn(g, 10.0, |p| (-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / 2.0).exp()).unwrap();
        assert!((spherical_mean(&gauss, [0.0; 3], 0.0, 16, 8) - 4.0 * PI).abs() < 1e-12);
        // radial closed form, trilinear bias O(Δ²)
        let fine = Grid3::cube(81, 2.0).unwrap();
        let gauss = ScalarField3::from_fn(fine, 10.0, |p| (-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]) / 2.0).exp()).unwrap();
        for &t in &[0.3, 0.8, 1.2] {
            let v = spherical_mean(&gauss, [0.0; 3], t, 128, 64);
            let want = 4.0 * PI * (-t * t / 2.0f64).exp();
            assert!((v - want).abs() < 2e-3 * want, "{t}: {v} {want}");
        }
    }

    #[test]
    fn clipped_sphere_rule_matches_full_rule() {
        let f = field(vec![blob([0.2, -0.1, 0.1], 0.2, 1.0)], 41, 1.0);
        let eval = |p: [f64; 3]| trilinear(f.grid(), f.values(), p);
        let full = Quadrature { n_beta1: 512, n_beta2: 256, clip_to_support: false, ..Quadrature::default() };
        let clip = Quadrature { n_beta1: 128, n_beta2: 64, clip_to_support: true, ..Quadrature::default() };
        for &(c, t) in &[([1.2, 0.0, 0.3], 1.0), ([0.0, 1.0, -0.4], 1.4), ([0.1, 0.1, 0.0], 0.3)] {
            let a = sphere_integral(&eval, c, t, &full, None);
            let b = sphere_integral(&eval, c, t, &clip, Some((f.support_radius(), 0.5 * 0.05)));
            assert!((a - b).abs() < 2e-3 * a.abs().max(1e-3), "{a} {b}");
        }
    }

    #[test]
    fn circular_mean_examples() {
        let g = Grid3::new([5, 5, 5], [0.1; 3], [-0.2; 3]).unwrap();
        let z = ScalarField3::zeros(Grid3::cube(9, 1.0).unwrap());
        assert!(circular_mean_fixed_radius(&z, 0.2, &g, 64).unwrap().values.iter().all(|&v| v == 0.0));
        let big = ScalarField3::from_fn(Grid3::cube(9, 3.0).unwrap(), 10.0, |_| 0.75).unwrap();
        let m = circular_mean_fixed_radius(&big, 0.3, &g, 128).unwrap();
        assert!(m.values.iter().all(|v| (v - 2.0 * PI * 0.75).abs() < 1e-12));
        // closed form with I0 on a fine grid
        let fine = Grid3::new([161, 161, 3], [0.05, 0.05, 0.1], [-4.0, -4.0, -0.1]).unwrap();
        let gx = |x3: f64| 1.0 + 0.5 * x3;
        let f = ScalarField3::from_fn(fine, 10.0, |p| (-(p[0] * p[0] + p[1] * p[1]) / 2.0).exp() * gx(p[2])).unwrap();
        let r = 0.7;
        for &x in &[[0.0, 0.0, 0.0], [0.4, -0.3, 0.05], [1.1, 0.6, -0.05]] {
            let v = circular_mean_at(&f, r, x, 128);
            let q = (x[0] * x[0] + x[1] * x[1]).sqrt();
            let want = 2.0 * PI * (-(q * q + r * r) / 2.0f64).exp() * i0(r * q) * gx(x[2]);
            assert!((v - want).abs() < 1e-3 * want, "{v} {want}");
        }
    }

    #[test]
    fn circular_radon_examples() {
        let fine = Grid3::new([161, 161, 3], [0.05, 0.05, 0.1], [-4.0, -4.0, -0.1]).unwrap();
        let f = ScalarField3::from_fn(fine, 3.0, |p| (-(p[0] * p[0] + p[1] * p[1]) / 2.0).exp() * (1.0 - p[2])).unwrap();
        let q = Quadrature::default();
        let zero = ScalarField3::zeros(fine);
        assert_eq!(circular_radon_at(&zero, [0.3, 0.1], 0.0, 0.5, &q), 0.0);
        for &r in &[0.2, 0.9, 1.7] {
            let v = circular_radon_at(&f, [0.0, 0.0], 0.05, r, &q);
            let want = 2.0 * PI * (-r * r / 2.0f64).exp() * 0.95;
            assert!((v - want).abs() < 1e-3 * want);
            let mu = [0.8, -0.6];
            let v = circular_radon_at(&f, mu, 0.05, r, &q);
            let want = 2.0 * PI * (-(1.0 + r * r) / 2.0f64).exp() * i0(r) * 0.95;
            assert!((v - want).abs() < 2e-3 * want, "{v} {want}");
        }
    }

    // Brute-force triple loop over α, β1, β2 with the same product rule.
    fn rp_oracle(f: &ScalarField3, a: [f64; 3], r_det: f64, t: f64, na: usize, nb1: usize, nb2: usize) -> f64 {
        let mut s = 0.0;
        for ia in 0..na {
            let al = 2.0 * PI * ia as f64 / na as f64;
            for j in 0..=nb2 {
                let b2 = PI * j as f64 / nb2 as f64;
                let h = PI / nb2 as f64;
                let w2 = if j == 0 || j == nb2 {
                    1.0 - h.sin() / h
                } else {
                    2.0 * b2.sin() * (1.0 - h.cos()) / h
                };
                let reps = if j == 0 || j == nb2 { 1 } else { nb1 };
                for ib in 0..reps {
                    let b1 = 2.0 * PI * ib as f64 / nb1 as f64;
                    let wb = if reps == 1 { 2.0 * PI } else { 2.0 * PI / nb1 as f64 };
                    let p = [
                        a[0] + r_det * al.cos() + t * b1.cos() * b2.sin(),
                        a[1] + r_det * al.sin() + t * b1.sin() * b2.sin(),
                        a[2] + t * b2.cos(),
                    ];
                    s += (2.0 * PI / na as f64) * wb * w2 * interp_oracle(f, p);
                }
            }
        }
        s
    }

    // separate trilinear implementation for the oracle
    fn interp_oracle(f: &ScalarField3, p: [f64; 3]) -> f64 {
        let g = f.grid();
        let mut idx = [0usize; 3];
        let mut fr = [0.0; 3];
        for a in 0..3 {
            let u = (p[a] - g.origin()[a]) / g.spacing()[a];
            if u < 0.0 || u > (g.counts()[a] - 1) as f64 {
                return 0.0;
            }
            idx[a] = (u as usize).min(g.counts()[a] - 2);
            fr[a] = u - idx[a] as f64;
        }
        let mut s = 0.0;
        for corner in 0..8 {
            let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let w: f64 = (0..3).map(|a| if o[a] == 1 { fr[a] } else { 1.0 - fr[a] }).product();
            s += w * f.at(idx[0] + o[0], idx[1] + o[1], idx[2] + o[2]);
        }
        s
    }

    #[test]
    fn rp_cylinder_matches_brute_force() {
        let f = field(vec![blob([0.0; 3], 0.15, 1.0)], 33, 1.0);
        let quad = Quadrature { n_alpha: 16, n_beta1: 24, n_beta2: 12, clip_to_support: false, method: ForwardMethod::Direct, ..Quadrature::default() };
        let t = Axis::new(0.0, 0.25, 7).unwrap();
        let g = rp_cylinder(&f, 1.0, 0.15, Axis::angles(4).unwrap(), Axis::new(-0.1, 0.1, 2).unwrap(), t, &quad).unwrap();
        for k in 0..7 {
            let v = g.values[k];
            let want = rp_oracle(&f, [1.0, 0.0, -0.1], 0.15, t.value(k), 16, 24, 12);
            assert!((v - want).abs() <= 1e-4 * want.abs().max(1e-12) + 1e-14, "{k}: {v} {want}");
        }
        // t = 0 slice equals 4π M_{r_det} f at the detector center
        let m0 = circular_mean_at(&f, 0.15, [0.0, 1.0, 0.0], 16);
        let g0 = rp_cylinder(&f, 1.0, 0.15, Axis::angles(4).unwrap(), Axis::new(0.0, 0.1, 2).unwrap(), t, &quad).unwrap();
        assert!((g0.values[7 * 2] - 4.0 * PI * m0).abs() < 1e-12);
    }

    #[test]
    fn composition_identity() {
        // Direct R_P equals spherical means of the pointwise circle mean
        let f = field(vec![blob([0.1, 0.0, 0.0], 0.2, 1.0)], 25, 1.0);
        let quad = Quadrature { n_alpha: 32, n_beta1: 32, n_beta2: 16, method: ForwardMethod::Direct, clip_to_support: false, ..Quadrature::default() };
        let t = Axis::new(0.0, 0.3, 6).unwrap();
        let g = rp_cylinder(&f, 1.5, 0.1, Axis::angles(3).unwrap(), Axis::new(0.0, 0.2, 2).unwrap(), t, &quad).unwrap();
        let (s, c) = (2.0 * PI / 3.0f64).sin_cos();
        let (s, c) = (1.5 * s, 1.5 * c);
        let eval = |p: [f64; 3]| circular_mean_at(&f, 0.1, p, 32);
        for k in 0..6 {
            let want = sphere_integral(&eval, [c, s, 0.2], t.value(k), &quad, None);
            let v = g.values[(2 + 1) * 6 + k];
            assert!((v - want).abs() <= 1e-6 * want.abs().max(1e-12));
        }
    }

    #[test]
    fn tabulated_and_direct_agree() {
        let f = field(vec![blob([0.1, 0.2, 0.0], 0.2, 1.0)], 49, 1.0);
        let t = Axis::new(0.0, 0.1, 25).unwrap();
        let d = Quadrature { method: ForwardMethod::Direct, n_alpha: 64, ..Quadrature::default() };
        let tab = Quadrature { method: ForwardMethod::Tabulated, n_alpha: 64, ..Quadrature::default() };
        let th = Axis::angles(2).unwrap();
        let z = Axis::new(0.0, 0.1, 1 + 1).unwrap();
        let a = rp_cylinder(&f, 1.5, 0.15, th, z, t, &d).unwrap();
        let b = rp_cylinder(&f, 1.5, 0.15, th, z, t, &tab).unwrap();
        let e = crate::grid::rel_l2(&b.values, &a.values);
        assert!(e < 5e-3, "{e}");
    }

    #[test]
    fn support_and_parity_errors() {
        let f = field(vec![blob([0.0; 3], 0.3, 1.0)], 9, 1.0);
        let q = Quadrature::default();
        let t = Axis::new(0.0, 0.1, 4).unwrap();
        let th = Axis::angles(2).unwrap();
        assert!(matches!(rp_cylinder(&f, 1.0, 0.1, th, t, t, &q), Err(Error::SupportViolation(_))));
        assert!(matches!(rp_sphere(&f, 1.5, 0.1, SphereDirections::lat_long(2, 3).unwrap(), t, &q), Err(Error::SupportViolation(_))));
        assert!(matches!(rp_plane(&f, t, t, t, 0.1, &q), Err(Error::Parity(_))));
    }

    #[test]
    fn planar_parity() {
        let spec = PhantomSpec { blobs: vec![blob([0.3, 0.1, -0.1], 0.15, 1.0)], symmetrize_x1: false };
        let f = sample_phantom(&spec, &Grid3::cube(33, 1.0).unwrap());
        let odd = f.odd_part().unwrap();
        let even = f.even_part().unwrap();
        let y = Axis::new(-0.6, 0.3, 5).unwrap();
        let t = Axis::new(0.0, 0.1, 20).unwrap();
        let q = Quadrature::default();
        assert!(matches!(rp_plane(&odd, y, y, t, 0.1, &q), Err(Error::Parity(_))));
        let zero = rp_plane_unchecked(&odd, y, y, t, 0.1, &q).unwrap();
        assert!(zero.values.iter().all(|v| v.abs() < 1e-8));
        let ge = rp_plane(&even, y, y, t, 0.1, &q).unwrap();
        assert!(ge.values.iter().any(|v| v.abs() > 1e-3));
        let direct = Quadrature { method: ForwardMethod::Direct, n_alpha: 32, ..Quadrature::default() };
        let zero = rp_plane_unchecked(&odd, y, y, t, 0.1, &direct).unwrap();
        assert!(zero.values.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn pressure_examples() {
        let t = Axis::new(0.0, 0.01, 200).unwrap();
        let mk = |v: Vec<f64>| CylindricalSinogram {
            radius: 1.0,
            r_det: 0.1,
            theta: Axis::angles(2).unwrap(),
            z: Axis::new(0.0, 1.0, 2).unwrap(),
            t,
            values: v,
        };
        let z = mk(vec![0.0; 800]);
        assert!(pressure_from_rp(&z).0.values.iter().all(|&v| v == 0.0));
        let c = mk(vec![3.0; 800]);
        assert!(pressure_from_rp(&c).0.values.iter().all(|v| (v - 3.0 / (8.0 * PI * PI)).abs() < 1e-12));
        let p = PressureData(mk(vec![0.5; 800]));
        assert!(rp_from_pressure(&p).unwrap().values.iter().all(|v| (v - 8.0 * PI * PI * 0.5).abs() < 1e-10));
        // Gaussian in t: analytic derivative of t·g
        let g = |s: f64| (-(s - 1.0).powi(2) / 0.08).exp();
        let dg = |s: f64| g(s) + s * g(s) * (-2.0 * (s - 1.0) / 0.08);
        let vals: Vec<f64> = (0..800).map(|i| g(t.value(i % 200))).collect();
        let pr = pressure_from_rp(&mk(vals.clone()));
        let want: Vec<f64> = (0..800).map(|i| dg(t.value(i % 200)) / (8.0 * PI * PI)).collect();
        let e = crate::grid::rel_l2(&pr.0.values, &want);
        assert!(e < 1e-2, "{e}");
        let back = rp_from_pressure(&pr).unwrap();
        let e = crate::grid::rel_l2(&back.values, &vals);
        assert!(e < 1e-3, "{e}");
    }

    fn torus_oracle(f: &ScalarField3, mu: [f64; 2], u: f64, p: f64, r: f64, na: usize, nb: usize) -> f64 {
        let mut s = 0.0;
        for ib in 0..nb {
            let b = 2.0 * PI * ib as f64 / nb as f64;
            for ia in 0..na {
                let a = 2.0 * PI * ia as f64 / na as f64;
                let rad = u - r * b.cos();
                s += interp_oracle(f, [mu[0] + rad * a.cos(), mu[1] + rad * a.sin(), p + r * b.sin()]);
            }
        }
        s * (2.0 * PI / na as f64) * (2.0 * PI / nb as f64) / (2.0 * PI)
    }

    #[test]
    fn toroidal_examples() {
        let g = Grid3::cube(33, 1.0).unwrap();
        let q = Quadrature { clip_to_support: false, n_alpha: 64, n_beta1: 48, ..Quadrature::default() };
        assert_eq!(toroidal_radon_at(&ScalarField3::zeros(g), [1.0, 0.0], 0.4, 0.0, 0.3, &q), 0.0);
        let big = ScalarField3::from_fn(Grid3::cube(9, 5.0).unwrap(), 100.0, |_| 1.25).unwrap();
        assert!((toroidal_radon_at(&big, [0.5, 0.0], 0.4, 0.0, 0.3, &q) - 2.0 * PI * 1.25).abs() < 1e-12);
        let f = field(vec![blob([0.2, 0.1, 0.0], 0.2, 1.0)], 33, 1.0);
        for &(mu, p, r) in &[([1.0, 0.0], 0.0, 0.3), ([0.0, 1.0], 0.1, 0.7), ([0.6, 0.8], -0.2, 1.1)] {
            let v = toroidal_radon_at(&f, mu, 0.4, p, r, &q);
            let want = torus_oracle(&f, mu, 0.4, p, r, 64, 48);
            assert!((v - want).abs() <= 1e-6 * want.abs().max(1e-300), "{v} {want}");
        }
        // clipped adaptive rule agrees with a very fine full rule
        let fine = Quadrature { clip_to_support: false, n_alpha: 1024, n_beta1: 1024, ..Quadrature::default() };
        let clip = Quadrature { clip_to_support: true, max_step: Some(0.01), ..Quadrature::default() };
        for &(mu, p, r) in &[([1.0, 0.0], 0.0, 0.5), ([0.0, 1.0], 0.1, 1.2)] {
            let a = toroidal_radon_at(&f, mu, 0.4, p, r, &fine);
            let b = toroidal_radon_at(&f, mu, 0.4, p, r, &clip);
            assert!((a - b).abs() < 2e-3 * a.abs(), "{a} {b}");
        }
    }

    #[test]
    fn axial_shift_commutes_with_rp_cylinder() {
        let g = Grid3::new([33, 33, 41], [1.0 / 16.0; 3], [-1.0, -1.0, -1.25]).unwrap();
        let make = |dz: f64| sample_phantom(&PhantomSpec { blobs: vec![blob([0.2, 0.0, dz], 0.2, 1.0)], symmetrize_x1: false }, &g);
        let q = Quadrature::default();
        let t = Axis::new(0.0, 0.1, 20).unwrap();
        let th = Axis::angles(2).unwrap();
        let a = rp_cylinder(&make(0.0), 1.5, 0.1, th, Axis::new(0.0, 0.25, 2).unwrap(), t, &q).unwrap();
        let b = rp_cylinder(&make(0.25), 1.5, 0.1, th, Axis::new(0.25, 0.25, 2).unwrap(), t, &q).unwrap();
        assert!(crate::grid::rel_l2(&b.values, &a.values) < 1e-2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn forward_operators_are_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, cx in -0.3f64..0.3) {
            let g = Grid3::cube(17, 1.0).unwrap();
            // equal declared supports so all three use the same clipped rule
            let f1 = sample_phantom(&PhantomSpec { blobs: vec![blob([cx, 0.1, 0.0], 0.15, 1.0)], symmetrize_x1: false }, &g);
            let f1 = ScalarField3::from_values(g, f1.into_values(), 1.2).unwrap();
            let f2 = sample_phantom(&PhantomSpec { blobs: vec![blob([-0.1, cx, 0.2], 0.2, 0.7)], symmetrize_x1: false }, &g);
            let f2 = ScalarField3::from_values(g, f2.into_values(), 1.2).unwrap();
            let comb = f1.lin_comb(a, &f2, b).unwrap();
            let q = Quadrature { n_alpha: 16, n_beta1: 16, n_beta2: 8, ..Quadrature::default() };
            let t = Axis::new(0.0, 0.2, 6).unwrap();
            let th = Axis::angles(3).unwrap();
            let z = Axis::new(-0.2, 0.2, 3).unwrap();
            let r1 = rp_cylinder(&f1, 1.5, 0.1, th, z, t, &q).unwrap();
            let r2 = rp_cylinder(&f2, 1.5, 0.1, th, z, t, &q).unwrap();
            let rc = rp_cylinder(&comb, 1.5, 0.1, th, z, t, &q).unwrap();
            let scale = rc.values.iter().chain(&r1.values).fold(1.0f64, |m, v| m.max(v.abs()));
            for i in 0..rc.values.len() {
                prop_assert!((rc.values[i] - a * r1.values[i] - b * r2.values[i]).abs() < 1e-12 * scale * 10.0);
            }
            let centers = CenterSet::Circle { radius: 1.0, theta: th };
            let r = Axis::new(0.2, 0.3, 4).unwrap();
            let t1 = toroidal_radon(&f1, centers.clone(), 0.4, z, r, &q).unwrap();
            let t2 = toroidal_radon(&f2, centers.clone(), 0.4, z, r, &q).unwrap();
            let tc = toroidal_radon(&comb, centers.clone(), 0.4, z, r, &q).unwrap();
            for i in 0..tc.values.len() {
                prop_assert!((tc.values[i] - a * t1.values[i] - b * t2.values[i]).abs() < 1e-12 * 10.0);
            }
            let c1 = circular_radon(&f1, centers.clone(), z, r, &q).unwrap();
            let c2 = circular_radon(&f2, centers.clone(), z, r, &q).unwrap();
            let cc = circular_radon(&comb, centers, z, r, &q).unwrap();
            for i in 0..cc.values.len() {
                prop_assert!((cc.values[i] - a * c1.values[i] - b * c2.values[i]).abs() < 1e-12 * 10.0);
            }
        }
    }
}
