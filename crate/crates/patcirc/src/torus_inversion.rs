//! Toroidal data to circular means: `R_T^*`, the `|ξ2|` filter, the
//! two-circle identity and the unfolding sums.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{CenterSet, CircularRadonData, ToroidalSinogram};
use crate::grid::Axis;
use crate::pat_inversion::{window_integral, BackprojectionConfig, Extrapolation, TailFilter, ZWindow};
use crate::transforms::fourier2;

const RESIDUE_TOL: f64 = 1e-8;

/// `R_T^* g` for one center on a `(z, ρ)` grid, ρ symmetric about 0.
#[derive(Clone, Debug, PartialEq)]
pub struct FiltrationPlane {
    pub z: Axis,
    /// `[−ρ_max, ρ_max]`, odd length.
    pub rho: Axis,
    /// `[z][ρ]`
    pub values: Vec<f64>,
}

impl FiltrationPlane {
    pub fn row(&self, iz: usize) -> &[f64] {
        let n = self.rho.len;
        &self.values[iz * n..(iz + 1) * n]
    }

    /// The `ρ ≥ 0` half of row `iz`.
    pub fn half_row(&self, iz: usize) -> &[f64] {
        &self.row(iz)[self.rho.len / 2..]
    }
}

fn symmetric_axis(rho: &Axis) -> Result<Axis> {
    if rho.start != 0.0 {
        return Err(Error::InvalidArgument("rho axis must start at 0".into()));
    }
    Axis::new(-rho.end(), rho.step, 2 * rho.len - 1)
}

pub fn rt_star(g: &ToroidalSinogram, z: Axis, rho: Axis) -> Result<Vec<FiltrationPlane>> {
    rt_star_with(g, z, rho, &BackprojectionConfig { window: ZWindow::Data, extrapolation: Extrapolation::Off })
}

/// `∫ g(μ, p, √((z−p)² + ρ²)) dp` with the p-window and extrapolation of `cfg`.
pub fn rt_star_with(g: &ToroidalSinogram, z: Axis, rho: Axis, cfg: &BackprojectionConfig) -> Result<Vec<FiltrationPlane>> {
    let sym = symmetric_axis(&rho)?;
    let p = g.p;
    let r = g.r;
    if p.len < 2 {
        return Err(Error::InvalidArgument("p axis needs at least two nodes".into()));
    }
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
            let tol = 1e-9 * p.step;
            if z.start - half_width < p.start - tol || z.end() + half_width > p.end() + tol {
                return Err(Error::InvalidArgument(format!(
                    "p data [{}, {}] do not cover z ± {half_width} for z in [{}, {}]",
                    p.start,
                    p.end(),
                    z.start,
                    z.end()
                )));
            }
            let need = half_width.hypot(rho.end());
            if r.end() < need - 1e-9 * r.step {
                return Err(Error::InvalidArgument(format!("r axis ends at {} but the window needs {need}", r.end())));
            }
            Some(half_width)
        }
    };
    let nr = r.len;
    let nh = rho.len;
    let planes = (0..g.centers.len())
        .into_par_iter()
        .map(|m| {
            let block = &g.values[m * p.len * nr..(m + 1) * p.len * nr];
            let mut values = vec![0.0; z.len * sym.len];
            for (iz, out) in values.chunks_mut(sym.len).enumerate() {
                let zv = z.value(iz);
                let (a, b) = match half {
                    Some(h) => (zv - h, zv + h),
                    None => (p.start, p.end()),
                };
                let first = (((a - p.start) / p.step).floor().max(0.0) as usize).min(p.len - 2);
                let last = (((b - p.start) / p.step).ceil() as usize).clamp(first + 1, p.len - 1);
                let mut nodes = vec![0.0; last - first + 1];
                for k in 0..nh {
                    let rv = rho.value(k);
                    for (j, v) in nodes.iter_mut().enumerate() {
                        let pi = first + j;
                        let row = &block[pi * nr..(pi + 1) * nr];
                        let rr = (zv - p.value(pi)).hypot(rv);
                        // tube radii below the first sample take the first value
                        *v = r.interp(row, rr.max(r.start));
                    }
                    let full = window_integral(&p, a, b, first, &nodes);
                    let part = |w: f64| window_integral(&p, zv - w, zv + w, first, &nodes);
                    let v = match (half, cfg.extrapolation) {
                        (Some(h), Extrapolation::Linear) => 2.0 * full - part(0.5 * h),
                        (Some(h), Extrapolation::Quadratic) => (4.0 * full - part(0.5 * h)) / 3.0,
                        (Some(h), Extrapolation::Both) => (8.0 * full - 6.0 * part(0.5 * h) + part(0.25 * h)) / 3.0,
                        _ => full,
                    };
                    out[nh - 1 + k] = v;
                    out[nh - 1 - k] = v;
                }
            }
            FiltrationPlane { z, rho: sym, values }
        })
        .collect();
    Ok(planes)
}

/// `|ξ2|` multiplier in ρ on a 2× zero padded plane.
///
/// The mean of each row is removed first: the multiplier annihilates functions
/// constant in ρ, which a padded window would otherwise turn into edge terms.
pub fn riesz_filter(plane: &FiltrationPlane) -> Result<FiltrationPlane> {
    let nr = plane.rho.len;
    let nz = plane.z.len;
    let (pr, pz) = (2 * nr, 2 * nz);
    let mut padded = vec![0.0; pr * pz];
    for iz in 0..nz {
        let row = plane.row(iz);
        let mean = row.iter().sum::<f64>() / nr as f64;
        for (k, v) in row.iter().enumerate() {
            padded[iz * pr + k] = v - mean;
        }
    }
    let mut spec = fourier2(&padded, [pr, pz], [plane.rho.step, plane.z.step], [0.0, 0.0]);
    for (i, d) in spec.data.iter_mut().enumerate() {
        *d *= spec_freq_abs(pr, plane.rho.step, i % pr);
    }
    let full = crate::transforms::inverse_fourier_nd_real(&spec, RESIDUE_TOL)?;
    let mut values = vec![0.0; nr * nz];
    for iz in 0..nz {
        values[iz * nr..(iz + 1) * nr].copy_from_slice(&full[iz * pr..iz * pr + nr]);
    }
    Ok(FiltrationPlane { z: plane.z, rho: plane.rho, values })
}

fn spec_freq_abs(n: usize, step: f64, k: usize) -> f64 {
    (2.0 * std::f64::consts::PI * crate::transforms::signed_index(k, n) as f64 / (n as f64 * step)).abs()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RieszMethod {
    /// `riesz_filter` on the whole plane.
    Spectral,
    /// Row-wise `H_ρ∂_ρ` with a logarithmic tail model of width `tail_width`.
    LogTail { tail_width: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusConfig {
    pub backprojection: BackprojectionConfig,
    pub filter: RieszMethod,
    /// Upper end of the ρ band carrying S; whole ρ axis when `None`.
    pub support_band: Option<f64>,
}

impl Default for TorusConfig {
    fn default() -> Self {
        TorusConfig {
            backprojection: BackprojectionConfig { window: ZWindow::Symmetric { half_width: 32.0 }, extrapolation: Extrapolation::Linear },
            filter: RieszMethod::LogTail { tail_width: 0.5 },
            support_band: None,
        }
    }
}

/// `S(μ, x3, r) = M f(μ, x3, |u − r|) + M f(μ, x3, u + r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CirclePairSums {
    pub centers: CenterSet,
    pub u: f64,
    pub x3: Axis,
    /// Starts at 0.
    pub r: Axis,
    /// `[μ][x3][r]`
    pub values: Vec<f64>,
}

impl CirclePairSums {
    pub fn row(&self, i_mu: usize, i_x3: usize) -> &[f64] {
        let n = self.r.len;
        let o = (i_mu * self.x3.len + i_x3) * n;
        &self.values[o..o + n]
    }
}

pub fn torus_to_circle_pair(g: &ToroidalSinogram, x3: Axis, r: Axis) -> Result<CirclePairSums> {
    torus_to_circle_pair_with(g, x3, r, &TorusConfig::default())
}

pub fn torus_to_circle_pair_with(g: &ToroidalSinogram, x3: Axis, r: Axis, cfg: &TorusConfig) -> Result<CirclePairSums> {
    let planes = rt_star_with(g, x3, r, &cfg.backprojection)?;
    let nr = r.len;
    let filtered: Vec<Vec<f64>> = match cfg.filter {
        RieszMethod::Spectral => planes
            .par_iter()
            .map(|pl| {
                let f = riesz_filter(pl)?;
                Ok((0..x3.len).flat_map(|iz| f.half_row(iz).to_vec()).collect())
            })
            .collect::<Result<_>>()?,
        RieszMethod::LogTail { tail_width } => {
            let band = cfg.support_band.unwrap_or(r.end());
            let filter = TailFilter::new(&r, Some(tail_width), band)?;
            planes.par_iter().map(|pl| (0..x3.len).flat_map(|iz| filter.apply(pl.half_row(iz))).collect()).collect()
        }
    };
    let mut values = Vec::with_capacity(g.centers.len() * x3.len * nr);
    for f in filtered {
        values.extend(f);
    }
    Ok(CirclePairSums { centers: g.centers.clone(), u: g.u, x3, r, values })
}

// ---------------------------------------------------------------------------
// Unfolding

fn center_norm(centers: &CenterSet, m: usize) -> f64 {
    let c = centers.center(m);
    c[0].hypot(c[1])
}

fn check_unfold(s: &CirclePairSums, radius: f64) -> Result<()> {
    if !(s.u > 0.0) {
        return Err(Error::InvalidArgument(format!("torus central radius must be positive, got {}", s.u)));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("support radius must be positive, got {radius}")));
    }
    if s.r.start != 0.0 {
        return Err(Error::InvalidArgument("S must be sampled from r = 0".into()));
    }
    Ok(())
}

// Alternating sum over (2j+1)u ∓ r. `limit(r ≤ u)` is the printed bracket; terms
// stop once the argument passes `cutoff`, where S is zero.
fn unfold(s: &CirclePairSums, radius: f64, r_axis: Axis, limit: impl Fn(bool) -> usize + Sync) -> Result<CircularRadonData> {
    check_unfold(s, radius)?;
    let u = s.u;
    let nr = r_axis.len;
    let mut values = vec![0.0; s.centers.len() * s.x3.len * nr];
    values.par_chunks_mut(nr).enumerate().for_each(|(row, out)| {
        let m = row / s.x3.len;
        let src = s.row(m, row % s.x3.len);
        let reach = center_norm(&s.centers, m) + radius;
        let cutoff = (reach + u).min(s.r.end());
        for (k, o) in out.iter_mut().enumerate() {
            let r = r_axis.value(k);
            let inner = r <= u;
            let sign = if inner { -r } else { r };
            // the remainder term vanishes once 2(J+1)u ± r ≥ reach
            let needed = ((reach - sign) / (2.0 * u) - 1.0).ceil().max(0.0) as usize;
            let j_max = limit(inner).max(needed);
            let mut acc = 0.0;
            for j in 0..=j_max {
                let arg = (2 * j + 1) as f64 * u + sign;
                if arg > cutoff {
                    break;
                }
                let v = s.r.interp(src, arg);
                acc += if j % 2 == 0 { v } else { -v };
            }
            *o = acc;
        }
    });
    Ok(CircularRadonData { centers: s.centers.clone(), x3: s.x3, r: r_axis, values })
}

/// Circular means from S for `supp f ⊂ B_R × ℝ`, sums to `[R/u + ½]`.
pub fn unfold_cylinder(s: &CirclePairSums, radius: f64, r_axis: Axis) -> Result<CircularRadonData> {
    let j = (radius / s.u + 0.5).floor().max(0.0) as usize;
    unfold(s, radius, r_axis, |_| j)
}

/// Single-term form for `R/2 < u < R` and `supp f ⊂ B_{R−u} × ℝ`: `S(r − u)` for
/// `r > u`, zero otherwise.
pub fn unfold_cylinder_small_support(s: &CirclePairSums, radius: f64, r_axis: Axis) -> Result<CircularRadonData> {
    check_unfold(s, radius)?;
    let u = s.u;
    if !(0.5 * radius < u && u < radius) {
        return Err(Error::InvalidArgument(format!("single-term unfolding needs R/2 < u < R, got u = {u}, R = {radius}")));
    }
    let nr = r_axis.len;
    let mut values = vec![0.0; s.centers.len() * s.x3.len * nr];
    for (row, out) in values.chunks_mut(nr).enumerate() {
        let src = s.row(row / s.x3.len, row % s.x3.len);
        for (k, o) in out.iter_mut().enumerate() {
            let r = r_axis.value(k);
            *o = if r > u { s.r.interp(src, r - u) } else { 0.0 };
        }
    }
    Ok(CircularRadonData { centers: s.centers.clone(), x3: s.x3, r: r_axis, values })
}

/// Circular means from S for `supp f ⊂ B³_R`, f even in x1; sums to
/// `[(R+u)/2u]` for `r ≤ u` and `[R/2u]` otherwise.
pub fn unfold_plane(s: &CirclePairSums, radius: f64, r_axis: Axis) -> Result<CircularRadonData> {
    let u = s.u;
    let inner = ((radius + u) / (2.0 * u)).floor().max(0.0) as usize;
    let outer = (radius / (2.0 * u)).floor().max(0.0) as usize;
    unfold(s, radius, r_axis, |is_inner| if is_inner { inner } else { outer })
}
