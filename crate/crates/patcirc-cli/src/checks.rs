//! Oracle experiments shared by `selftest` and the acceptance suite.
//!
//! `Scale::Full` runs the desk-scale sizes, `Scale::Small` the quick versions.

use std::f64::consts::PI;
use std::time::Instant;

use patcirc::forward::{
    circular_mean_fixed_radius, circular_radon, circular_radon_at, rp_cylinder, rp_plane, rp_plane_unchecked, rp_sphere,
    toroidal_radon, CenterSet, CircularRadonData, Quadrature, SphereDirections,
};
use patcirc::grid::{rel_l2, sample_phantom, Axis, Blob, Grid3, PhantomSpec, ScalarField3};
use patcirc::pat_inversion::{
    circular_means_of_cmm_via_filtration, deconvolve_fixed_radius, invert_cylinder_with, invert_plane_with, invert_sphere,
    CylinderConfig, FiltrationConfig, PlaneConfig,
};
use patcirc::torus_inversion::{torus_to_circle_pair_with, unfold_cylinder, CirclePairSums, TorusConfig};
use patcirc::transforms::{bateman_identity_check, bessel_j0, fourier2, hilbert, SampledSignal};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Small,
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub name: &'static str,
    /// Measured error.
    pub value: f64,
    pub tolerance: f64,
    pub wall_ms: f64,
    /// Runtime limit, if any.
    pub budget_ms: Option<f64>,
    pub detail: String,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.value.is_finite() && self.value <= self.tolerance && self.budget_ms.is_none_or(|b| self.wall_ms <= b)
    }

    pub fn line(&self) -> String {
        let budget = self.budget_ms.map(|b| format!(" (budget {:.0} s)", b / 1e3)).unwrap_or_default();
        format!(
            "{} {}: error {:.3e} <= {:.1e}, {:.1} s{budget}{}",
            if self.pass() { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.tolerance,
            self.wall_ms / 1e3,
            if self.detail.is_empty() { String::new() } else { format!(" [{}]", self.detail) }
        )
    }
}

type R<T> = Result<T, patcirc::Error>;

fn blob(c: [f64; 3], s: f64, a: f64) -> Blob {
    Blob { center: c, sigma: s, amplitude: a }
}

fn two_blob() -> PhantomSpec {
    PhantomSpec { blobs: vec![blob([0.2, 0.1, 0.0], 0.12, 1.0), blob([-0.15, -0.2, 0.15], 0.1, 0.7)], symmetrize_x1: false }
}

fn even_pair() -> PhantomSpec {
    PhantomSpec { blobs: vec![blob([0.35, 0.1, 0.0], 0.1, 1.0), blob([0.2, -0.3, 0.2], 0.1, 1.0)], symmetrize_x1: true }
}

fn fast_quad() -> Quadrature {
    Quadrature { max_step: Some(0.05), ..Quadrature::default() }
}

fn masked(a: &[f64], b: &[f64], keep: impl Fn(usize) -> bool) -> f64 {
    let idx: Vec<usize> = (0..a.len()).filter(|&i| keep(i)).collect();
    let pa: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
    let pb: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    rel_l2(&pa, &pb)
}

fn outcome(name: &'static str, t0: Instant, value: f64, tolerance: f64, budget_s: f64, detail: String) -> Outcome {
    Outcome { name, value, tolerance, wall_ms: t0.elapsed().as_secs_f64() * 1e3, budget_ms: Some(budget_s * 1e3), detail }
}

/// `M̂ = 2π f̂ J0(r_det|ξ|)` on one slice, over `|ξ|` up to half the Nyquist frequency.
pub fn fourier_relation(scale: Scale) -> R<Outcome> {
    let t0 = Instant::now();
    let n = if scale == Scale::Full { 128 } else { 64 };
    let h = 2.0 / (n - 1) as f64;
    let grid = Grid3::new([n, n, 2], [h, h, 0.1], [-1.0, -1.0, 0.0])?;
    let f = sample_phantom(&PhantomSpec { blobs: vec![blob([0.1, -0.05, 0.0], 0.12, 1.0)], symmetrize_x1: false }, &grid);
    let r_det = 0.15;
    let m = circular_mean_fixed_radius(&f, r_det, &grid, 256)?;
    let o = grid.origin();
    let fs = fourier2(&f.values()[..n * n], [n, n], [h, h], [o[0], o[1]]);
    let ms = fourier2(&m.values[..n * n], [n, n], [h, h], [o[0], o[1]]);
    let nyq = PI / h;
    let (mut num, mut den) = (0.0, 0.0);
    for idx in 0..n * n {
        let xi = fs.freq(0, idx % n).hypot(fs.freq(1, idx / n));
        if xi > 0.5 * nyq {
            continue;
        }
        let want = fs.data[idx] * (2.0 * PI * bessel_j0(r_det * xi));
        num += (ms.data[idx] - want).norm_sqr();
        den += ms.data[idx].norm_sqr();
    }
    Ok(outcome("Fourier relation", t0, (num / den).sqrt(), 0.03, 10.0, format!("{n}^2 slice")))
}

pub fn bateman(_scale: Scale) -> R<Outcome> {
    let t0 = Instant::now();
    let (lhs, rhs) = bateman_identity_check(2.0, 1.0, 1.0, 400.0)?;
    Ok(outcome("Bateman identity", t0, (lhs - rhs).abs(), 1e-3, 5.0, format!("lhs {lhs:.6} rhs {rhs:.6}")))
}

/// Filtered backprojection against `∫∫ f(Rθ + r_det α + t β, x3) dβ dα`.
pub fn filtration_lemma(scale: Scale) -> R<Outcome> {
    let t0 = Instant::now();
    let n = if scale == Scale::Full { 48 } else { 32 };
    let (radius, r_det) = (1.0, 0.15);
    let f = sample_phantom(&two_blob(), &Grid3::cube(n, 1.0)?);
    let theta = Axis::new(0.3, PI / 2.0, 2)?;
    let x3 = Axis::new(-0.2, 0.1, 5)?;
    let (zh, dz, dt) = (16.0, 0.04, 0.02);
    let zmax = 0.2 + zh + dz;
    let z = Axis::new(-zmax, dz, (2.0 * zmax / dz).round() as usize + 1)?;
    let band = 2.0 * radius + r_det;
    let t_out = Axis::new(0.0, dt, (2.0 * band / dt) as usize + 1)?;
    let t = Axis::new(0.0, dt, (zh.hypot(t_out.end()) / dt) as usize + 3)?;
    let g = rp_cylinder(&f, radius, r_det, theta, z, t, &fast_quad())?;
    let cfg = FiltrationConfig { support_band: Some(band), ..FiltrationConfig::default() };
    let l = circular_means_of_cmm_via_filtration(&g, x3, t_out, &cfg)?;
    let q = Quadrature::default();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for it in 0..theta.len {
        let (s, c) = theta.value(it).sin_cos();
        for k in 0..x3.len {
            for m in 0..t_out.len {
                let tv = t_out.value(m);
                if tv < 0.2 * radius - 1e-9 || tv > 1.5 * radius + 1e-9 {
                    continue;
                }
                let na = 64;
                let mut acc = 0.0;
                for ia in 0..na {
                    let al = 2.0 * PI * ia as f64 / na as f64;
                    let mu = [radius * c + r_det * al.cos(), radius * s + r_det * al.sin()];
                    acc += circular_radon_at(&f, mu, x3.value(k), tv, &q);
                }
                a.push(l.values[(it * x3.len + k) * t_out.len + m]);
                b.push(acc * 2.0 * PI / na as f64);
            }
        }
    }
    Ok(outcome("filtration identity", t0, rel_l2(&a, &b), 0.10, 300.0, format!("{n}^3, window 16")))
}

/// `invert_cylinder ∘ rp_cylinder` against `M_{r_det} f` on `|x'| ≤ 0.5`.
pub fn cylinder_round_trip(scale: Scale, constant_scale: f64) -> R<Outcome> {
    let t0 = Instant::now();
    let (n, n_theta) = if scale == Scale::Full { (64, 64) } else { (32, 32) };
    let f = sample_phantom(&two_blob(), &Grid3::cube(n, 1.0)?);
    let zh = 6.0;
    let dz = 0.04;
    let zmax = 0.9 + zh;
    let z = Axis::new(-zmax, dz, (2.0 * zmax / dz).round() as usize + 1)?;
    let t = Axis::new(0.0, 0.02, (((zh * zh + 4.0f64).sqrt() + 0.1) / 0.02) as usize + 2)?;
    let g = rp_cylinder(&f, 1.0, 0.15, Axis::angles(n_theta)?, z, t, &fast_quad())?;
    let nz = n / 2;
    let d = 1.1 / (n - 1) as f64;
    let target = Grid3::new([n, n, nz], [d, d, 1.6 / (nz - 1) as f64], [-0.55, -0.55, -0.8])?;
    let cfg = CylinderConfig { constant_scale, ..CylinderConfig::default() };
    let m = invert_cylinder_with(&g, &target, &cfg)?;
    let direct = circular_mean_fixed_radius(&f, 0.15, &target, 128)?;
    let e = masked(&m.values, &direct.values, |i| {
        let p = target.point_at(i);
        p[0].hypot(p[1]) <= 0.5
    });
    Ok(outcome("cylinder round trip", t0, e, 0.10, 600.0, format!("{n}^3, {n_theta} angles")))
}

pub fn plane_round_trip(scale: Scale) -> R<Outcome> {
    let t0 = Instant::now();
    let n = if scale == Scale::Full { 64 } else { 32 };
    let grid = Grid3::cube(n, 1.0)?;
    let f = sample_phantom(&even_pair(), &grid);
    let (y0, dy, steps) = if scale == Scale::Full { (3.0, 0.05, 20) } else { (3.0, 0.1, 14) };
    let y = Axis::new(-y0, dy, (2.0 * y0 / dy).round() as usize + 1)?;
    let t = Axis::new(0.0, 0.02, ((2f64.sqrt() * y0 + 1.2) / 0.02) as usize + 2)?;
    let g = rp_plane(&f, y, y, t, 0.15, &fast_quad())?;
    let m = invert_plane_with(&g, &grid, &PlaneConfig { completion_steps: steps, ..PlaneConfig::default() })?;
    let truth = circular_mean_fixed_radius(&f, 0.15, &grid, 128)?;
    Ok(outcome("planar round trip", t0, rel_l2(&m.values, &truth.values), 0.15, 600.0, format!("{n}^3 even phantom, aperture 3")))
}

pub fn sphere_round_trip(scale: Scale) -> R<Outcome> {
    let t0 = Instant::now();
    let n = if scale == Scale::Full { 48 } else { 32 };
    let radius = 1.5;
    let grid = Grid3::cube(n, 0.85)?;
    let f = sample_phantom(&two_blob(), &grid);
    let dirs = SphereDirections::lat_long(32, 64)?;
    let t = Axis::new(0.0, 0.02, 160)?;
    let g = rp_sphere(&f, radius, 0.15, dirs, t, &fast_quad())?;
    let m = invert_sphere(&g, &grid)?;
    let direct = circular_mean_fixed_radius(&f, 0.15, &grid, 128)?;
    let e = masked(&m.values, &direct.values, |i| {
        let p = grid.point_at(i);
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() <= 0.7 * radius
    });
    Ok(outcome("spherical round trip", t0, e, 0.10, 600.0, format!("{n}^3, R = {radius}")))
}

/// `deconvolve_fixed_radius ∘ circular_mean_fixed_radius` with `r_det` below the first `J0` zero.
pub fn deconvolution(scale: Scale) -> R<Outcome> {
    let t0 = Instant::now();
    let n = if scale == Scale::Full { 64 } else { 32 };
    let grid = Grid3::cube(n, 1.0)?;
    let f = sample_phantom(&two_blob(), &grid);
    let h = grid.spacing()[0];
    let xi_max = (PI / h) * 2f64.sqrt();
    let r_det = 0.9 * 2.404_825_557_695_773 / xi_max;
    let m = circular_mean_fixed_radius(&f, r_det, &grid, 128)?;
    let d = deconvolve_fixed_radius(&m, 1e-6)?;
    Ok(outcome("deconvolution", t0, rel_l2(d.field.values(), f.values()), 0.05, 30.0, format!("{n}^3, r_det {r_det:.4}")))
}

struct TorusCase {
    f: ScalarField3,
    centers: CenterSet,
    x3: Axis,
    rho: Axis,
    g: patcirc::forward::ToroidalSinogram,
}

fn torus_case(n: usize, u: f64, zh: f64, rho_end: f64) -> R<TorusCase> {
    let f = sample_phantom(&two_blob(), &Grid3::cube(n, 1.0)?);
    let centers = CenterSet::Circle { radius: 1.0, theta: Axis::new(0.3, PI / 2.0, 2)? };
    let x3 = Axis::new(-0.2, 0.1, 5)?;
    let (dp, dr) = (0.04, 0.02);
    let pmax = 0.2 + zh + dp;
    let p = Axis::new(-pmax, dp, (2.0 * pmax / dp).round() as usize + 1)?;
    let rho = Axis::new(0.0, dr, (rho_end / dr).round() as usize + 1)?;
    let r = Axis::new(0.5 * dr, dr, ((zh.hypot(rho.end()) + 0.1) / dr) as usize + 2)?;
    let g = toroidal_radon(&f, centers.clone(), u, p, r, &fast_quad())?;
    Ok(TorusCase { f, centers, x3, rho, g })
}

/// Filtered torus data against `M f(|u−r|) + M f(u+r)` for `r ∈ [0.05, 0.35]`, u = 0.4.
pub fn circle_pair_lemma(scale: Scale) -> R<Outcome> {
    let t0 = Instant::now();
    let n = if scale == Scale::Full { 48 } else { 32 };
    let u = 0.4;
    let c = torus_case(n, u, 32.0, 3.0)?;
    let cfg = TorusConfig { support_band: Some(2.6), ..TorusConfig::default() };
    let s = torus_to_circle_pair_with(&c.g, c.x3, c.rho, &cfg)?;
    let q = Quadrature::default();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for m in 0..c.centers.len() {
        let mu = c.centers.center(m);
        for k in 0..c.x3.len {
            for i in 0..c.rho.len {
                let rv = c.rho.value(i);
                if !(0.05 - 1e-9..=0.35 + 1e-9).contains(&rv) {
                    continue;
                }
                let x3 = c.x3.value(k);
                a.push(s.row(m, k)[i]);
                b.push(circular_radon_at(&c.f, mu, x3, u - rv, &q) + circular_radon_at(&c.f, mu, x3, u + rv, &q));
            }
        }
    }
    Ok(outcome("two-circle identity", t0, rel_l2(&a, &b), 0.10, 300.0, format!("{n}^3, u = {u}")))
}

/// Unfolding of exact two-circle sums built from circular means.
pub fn unfolding_exact(scale: Scale) -> R<Outcome> {
    let t0 = Instant::now();
    let n = if scale == Scale::Full { 48 } else { 32 };
    let f = sample_phantom(&two_blob(), &Grid3::cube(n, 1.0)?);
    let u = 0.3;
    let step = u / 15.0;
    let centers = CenterSet::Circle { radius: 1.0, theta: Axis::angles(4)? };
    let x3 = Axis::new(-0.2, 0.2, 3)?;
    let r = Axis::new(0.0, step, (2.0 * 2.0 / step) as usize + 1)?;
    let mf = circular_radon(&f, centers.clone(), x3, r, &Quadrature::default())?;
    let nr = r.len;
    let mut values = Vec::with_capacity(mf.values.len());
    for row in mf.values.chunks(nr) {
        for k in 0..nr {
            // |u − ρ| and u + ρ are nodes of r since u is a multiple of the step
            let lo = (15i64 - k as i64).unsigned_abs() as usize;
            let hi = 15 + k;
            values.push(row[lo] + if hi < nr { row[hi] } else { 0.0 });
        }
    }
    let s = CirclePairSums { centers, u, x3, r, values };
    let out = Axis::new(0.0, step, (2.0 / step) as usize + 1)?;
    let got = unfold_cylinder(&s, 1.0, out)?;
    let mut worst: f64 = 0.0;
    for (row_out, row_in) in got.values.chunks(out.len).zip(mf.values.chunks(nr)) {
        for k in 0..out.len {
            worst = worst.max((row_out[k] - row_in[k]).abs());
        }
    }
    let scale_ref = mf.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(outcome("unfolding of exact sums", t0, worst / scale_ref, 1e-10, 300.0, format!("{n}^3, u = {u}")))
}

/// `toroidal_radon` → two-circle sums → unfolding against direct circular means, u = 0.3, R = 1.
pub fn unfolding_simulated(scale: Scale) -> R<(Outcome, CircularRadonData)> {
    let t0 = Instant::now();
    let n = if scale == Scale::Full { 48 } else { 32 };
    let u = 0.3;
    let c = torus_case(n, u, 32.0, 3.0)?;
    let cfg = TorusConfig { support_band: Some(2.6), ..TorusConfig::default() };
    let s = torus_to_circle_pair_with(&c.g, c.x3, c.rho, &cfg)?;
    let out = Axis::new(0.0, 0.02, 101)?;
    let m = unfold_cylinder(&s, 1.0, out)?;
    let direct = circular_radon(&c.f, c.centers, c.x3, out, &Quadrature::default())?;
    let o = outcome("unfolding of simulated data", t0, rel_l2(&m.values, &direct.values), 0.15, 300.0, format!("{n}^3, r in [0, 2]"));
    Ok((o, m))
}

pub fn odd_planar_zero(_scale: Scale) -> R<Outcome> {
    let t0 = Instant::now();
    let spec = PhantomSpec { blobs: vec![blob([0.3, 0.1, -0.1], 0.15, 1.0), blob([-0.2, -0.3, 0.2], 0.1, 0.5)], symmetrize_x1: false };
    let f = sample_phantom(&spec, &Grid3::cube(33, 1.0)?);
    let odd = f.odd_part()?;
    let y = Axis::new(-0.6, 0.3, 5)?;
    let t = Axis::new(0.0, 0.1, 25)?;
    let g = rp_plane_unchecked(&odd, y, y, t, 0.15, &Quadrature::default())?;
    let worst = g.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(outcome("planar data of an odd phantom", t0, worst, 1e-8, 60.0, String::new()))
}

pub fn hilbert_involution(_scale: Scale) -> R<Outcome> {
    let t0 = Instant::now();
    let n = 1024;
    let c = 0.5 * n as f64;
    let s = SampledSignal::from_fn(n, 1.0, 0.0, |t| {
        let u = (t - c) / 40.0;
        (-u * u).exp() * (0.3 * (t - c)).sin()
    })?;
    let hh = hilbert(&hilbert(&s));
    let e = hh.values.iter().zip(&s.values).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
    Ok(outcome("H∘H = −id", t0, e, 1e-6, 10.0, String::new()))
}

/// Largest relative deviation from linearity over every forward operator.
pub fn forward_linearity(_scale: Scale) -> R<Outcome> {
    let t0 = Instant::now();
    let g = Grid3::cube(17, 1.0)?;
    let make = |b: Blob| -> R<ScalarField3> {
        let f = sample_phantom(&PhantomSpec { blobs: vec![b], symmetrize_x1: false }, &g);
        ScalarField3::from_values(g, f.into_values(), 1.2)
    };
    let f1 = make(blob([0.2, 0.1, 0.0], 0.15, 1.0))?;
    let f2 = make(blob([-0.1, 0.25, 0.2], 0.2, 0.7))?;
    let (a, b) = (1.7, -0.6);
    let comb = f1.lin_comb(a, &f2, b)?;
    let q = Quadrature { n_alpha: 16, n_beta1: 16, n_beta2: 8, ..Quadrature::default() };
    let t = Axis::new(0.0, 0.2, 8)?;
    let th = Axis::angles(3)?;
    let z = Axis::new(-0.2, 0.2, 3)?;
    let r = Axis::new(0.2, 0.3, 4)?;
    let centers = CenterSet::Circle { radius: 1.0, theta: th };
    let dirs = SphereDirections::lat_long(3, 4)?;
    let ops: Vec<Box<dyn Fn(&ScalarField3) -> R<Vec<f64>>>> = vec![
        Box::new(|f| Ok(rp_cylinder(f, 1.5, 0.1, th, z, t, &q)?.values)),
        Box::new(|f| Ok(rp_plane_unchecked(f, z, z, t, 0.1, &q)?.values)),
        Box::new(|f| Ok(rp_sphere(f, 1.5, 0.1, dirs.clone(), t, &q)?.values)),
        Box::new(|f| Ok(toroidal_radon(f, centers.clone(), 0.4, z, r, &q)?.values)),
        Box::new(|f| Ok(circular_radon(f, centers.clone(), z, r, &q)?.values)),
    ];
    let mut worst: f64 = 0.0;
    for op in &ops {
        let (v1, v2, vc) = (op(&f1)?, op(&f2)?, op(&comb)?);
        let scale = vc.iter().chain(&v1).chain(&v2).fold(f64::MIN_POSITIVE, |m, v| m.max(v.abs()));
        for i in 0..vc.len() {
            worst = worst.max((vc[i] - a * v1[i] - b * v2[i]).abs() / scale);
        }
    }
    Ok(outcome("forward operators linear", t0, worst, 1e-12, 60.0, format!("{} operators", ops.len())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_line_reports_budget() {
        let o = Outcome { name: "x", value: 0.01, tolerance: 0.1, wall_ms: 2000.0, budget_ms: Some(1000.0), detail: String::new() };
        assert!(!o.pass());
        assert!(o.line().starts_with("FAIL x"));
        let o = Outcome { budget_ms: None, ..o };
        assert!(o.pass());
        let nan = Outcome { value: f64::NAN, ..o };
        assert!(!nan.pass());
    }

    #[test]
    fn quick_checks_pass() {
        for o in [bateman(Scale::Small).unwrap(), hilbert_involution(Scale::Small).unwrap(), odd_planar_zero(Scale::Small).unwrap()] {
            assert!(o.pass(), "{}", o.line());
        }
    }
}
