//! Spectral planar inversion and its aperture completion.
//!
//! With ĝ the transform of the detector data over the plane,
//! `ĥ(ξ) = (|ξ1|/2π) ∫ t sin(|ξ|t) ĝ(ξ', t) dt` for `h = M_{r_det}f`. The ξ1 lattice is
//! offset by half a step because the multiplier vanishes on ξ1 = 0. On a finite
//! aperture the estimate is biased; the bias is removed by solving
//! `S(A h) = S(g)` with GMRES, where `A` simulates the tapered aperture data of a
//! volume exactly in Fourier space and `S` is the spectral estimate itself.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::forward::PlanarSinogram;
use crate::grid::{Axis, Grid3};
use crate::transforms::{bessel_j0, fft_axis, signed_index};

fn taper_weight(c: f64, lo: f64, hi: f64, fraction: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let inner = half * (1.0 - fraction);
    let d = (c - mid).abs();
    if d > half + 1e-12 * half {
        0.0
    } else if fraction <= 0.0 || d <= inner {
        1.0
    } else {
        let s = ((d - inner) / (half - inner)).min(1.0);
        0.5 * (1.0 + (PI * s).cos())
    }
}

fn trapezoid(axis: &Axis) -> Vec<f64> {
    (0..axis.len).map(|i| if i == 0 || i + 1 == axis.len { 0.5 * axis.step } else { axis.step }).collect()
}

/// Separable transform of a weighted plane sample to the (ξ2, ξ3) lattice.
struct PlaneDft {
    n2: usize,
    n3: usize,
    ny: usize,
    nz: usize,
    // [ξ][sample], weights folded in
    ey: Vec<Complex64>,
    ez: Vec<Complex64>,
}

impl PlaneDft {
    fn new(xi2: &[f64], xi3: &[f64], y: &[(f64, f64)], z: &[(f64, f64)]) -> Self {
        let row = |xi: &[f64], pts: &[(f64, f64)]| -> Vec<Complex64> {
            xi.iter().flat_map(|&x| pts.iter().map(move |&(c, w)| Complex64::from_polar(w, -x * c))).collect()
        };
        PlaneDft { n2: xi2.len(), n3: xi3.len(), ny: y.len(), nz: z.len(), ey: row(xi2, y), ez: row(xi3, z) }
    }

    /// `slab(iy, iz)` over the sample points; result laid out `[ξ2][ξ3]`.
    fn apply(&self, slab: impl Fn(usize, usize) -> f64) -> Vec<Complex64> {
        let (n2, n3, ny, nz) = (self.n2, self.n3, self.ny, self.nz);
        let zero = Complex64::new(0.0, 0.0);
        let mut tmp = vec![zero; n2 * nz];
        for iy in 0..ny {
            for iz in 0..nz {
                let v = slab(iy, iz);
                if v == 0.0 {
                    continue;
                }
                for j in 0..n2 {
                    tmp[j * nz + iz] += self.ey[j * ny + iy] * v;
                }
            }
        }
        let mut out = vec![zero; n2 * n3];
        for j in 0..n2 {
            let t = &tmp[j * nz..(j + 1) * nz];
            for l in 0..n3 {
                let e = &self.ez[l * nz..(l + 1) * nz];
                out[j * n3 + l] = t.iter().zip(e).map(|(a, b)| a * b).sum();
            }
        }
        out
    }
}

struct J0Table {
    step: f64,
    values: Vec<f64>,
}

impl J0Table {
    fn new(max: f64, step: f64) -> Self {
        let n = (max / step).ceil() as usize + 2;
        J0Table { step, values: (0..n).map(|i| bessel_j0(i as f64 * step)).collect() }
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let u = x / self.step;
        let i = u as usize;
        if i + 1 >= self.values.len() {
            return bessel_j0(x);
        }
        let w = u - i as f64;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

pub(super) struct SpectralPlan {
    dims: [usize; 3],
    origin: [f64; 3],
    len: [f64; 3],
    xi1: Vec<f64>,
    xi2: Vec<f64>,
    xi3: Vec<f64>,
    t: Axis,
    wt: Vec<f64>,
    data_dft: PlaneDft,
    model: ApertureModel,
}

impl SpectralPlan {
    pub(super) fn new(g: &PlanarSinogram, target: &Grid3, taper: f64) -> Result<Self> {
        let dims = target.counts();
        let d = target.spacing();
        let origin = target.origin();
        let len = [dims[0] as f64 * d[0], dims[1] as f64 * d[1], dims[2] as f64 * d[2]];
        let xi1 = (0..dims[0]).map(|k| 2.0 * PI * (signed_index(k, dims[0]) as f64 + 0.5) / len[0]).collect();
        let xi2: Vec<f64> = (0..dims[1]).map(|k| 2.0 * PI * signed_index(k, dims[1]) as f64 / len[1]).collect();
        let xi3: Vec<f64> = (0..dims[2]).map(|k| 2.0 * PI * signed_index(k, dims[2]) as f64 / len[2]).collect();
        let pts = |axis: &Axis| -> Vec<(f64, f64)> {
            trapezoid(axis)
                .into_iter()
                .enumerate()
                .map(|(i, w)| (axis.value(i), w * taper_weight(axis.value(i), axis.start, axis.end(), taper)))
                .collect()
        };
        let data_dft = PlaneDft::new(&xi2, &xi3, &pts(&g.y), &pts(&g.z));
        let wt = trapezoid(&g.t).iter().enumerate().map(|(i, w)| w * g.t.value(i)).collect();
        let model = ApertureModel::new(g, target, taper, &xi2, &xi3)?;
        Ok(SpectralPlan { dims, origin, len, xi1, xi2, xi3, t: g.t, wt, data_dft, model })
    }

    /// ĝ of the measured data, `[t][ξ2·n3 + ξ3]`.
    pub(super) fn data_transform(&self, g: &PlanarSinogram) -> Vec<Vec<Complex64>> {
        let nt = g.t.len;
        let nz = g.z.len;
        (0..nt)
            .into_par_iter()
            .map(|it| self.data_dft.apply(|iy, iz| g.values[(iy * nz + iz) * nt + it]))
            .collect()
    }

    /// Volume from ĝ.
    pub(super) fn synthesize(&self, ghat: &[Vec<Complex64>]) -> Vec<f64> {
        let [n1, n2, n3] = self.dims;
        let o = self.origin;
        let zero = Complex64::new(0.0, 0.0);
        let mut hhat = vec![zero; n1 * n2 * n3];
        let nt = self.t.len;
        hhat.par_chunks_mut(n1).enumerate().for_each(|(row, out)| {
            let j = row % n2;
            let l = row / n2;
            let q2 = self.xi2[j] * self.xi2[j] + self.xi3[l] * self.xi3[l];
            for (k, v) in out.iter_mut().enumerate() {
                let x1 = self.xi1[k];
                let norm = (x1 * x1 + q2).sqrt();
                let mut s = zero;
                for it in 0..nt {
                    if self.wt[it] != 0.0 {
                        s += ghat[it][j * n3 + l] * (self.wt[it] * (norm * self.t.value(it)).sin());
                    }
                }
                let phase = Complex64::from_polar(x1.abs() / (2.0 * PI), o[0] * x1 + o[1] * self.xi2[j] + o[2] * self.xi3[l]);
                *v = s * phase;
            }
        });
        let dims = [n1, n2, n3];
        let mut planner = FftPlanner::new();
        for (a, &n) in dims.iter().enumerate() {
            let fft = planner.plan_fft_inverse(n);
            fft_axis(&mut hhat, &dims, a, &fft);
        }
        let scale = 1.0 / (self.len[0] * self.len[1] * self.len[2]);
        let mut out: Vec<f64> = hhat
            .iter()
            .enumerate()
            .map(|(idx, c)| (c * Complex64::from_polar(scale, PI * (idx % n1) as f64 / n1 as f64)).re)
            .collect();
        symmetrize_x1(&mut out, n1);
        out
    }

    pub(super) fn simulate(&self, h: &[f64]) -> Vec<Vec<Complex64>> {
        self.model.simulate(h)
    }
}

fn symmetrize_x1(v: &mut [f64], n1: usize) {
    for row in v.chunks_mut(n1) {
        for i in 0..n1 / 2 {
            let a = 0.5 * (row[i] + row[n1 - 1 - i]);
            row[i] = a;
            row[n1 - 1 - i] = a;
        }
    }
}

/// Tapered aperture data of a volume supported in the target box, computed from
/// `∫_{S²} h(p + tω) dω = (1/t) ∫_{−t}^{t} ∫ h(x1, p' + √(t²−x1²) e_φ) dφ dx1`
/// with the inner circle integrals done by 2D FFT.
struct ApertureModel {
    dims: [usize; 3],
    x1: Vec<f64>,
    np: [usize; 2],
    // |ξ'| on the padded plane lattice
    knorm: Vec<f64>,
    // padded-grid indices and weighted coordinates of aperture points
    y_idx: Vec<usize>,
    z_idx: Vec<usize>,
    dft: PlaneDft,
    t: Axis,
    t_reach: f64,
    j0: J0Table,
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
}

fn fast_len(min: usize) -> usize {
    let mut n = min.max(2);
    loop {
        let mut m = n;
        for p in [2, 3, 5] {
            while m % p == 0 {
                m /= p;
            }
        }
        if m == 1 {
            return n;
        }
        n += 1;
    }
}

impl ApertureModel {
    fn new(g: &PlanarSinogram, target: &Grid3, taper: f64, xi2: &[f64], xi3: &[f64]) -> Result<Self> {
        let dims = target.counts();
        let d = target.spacing();
        let o = target.origin();
        let up = target.upper();
        let box_r = (0.5 * (up[1] - o[1])).hypot(0.5 * (up[2] - o[2]));
        let center = [0.5 * (o[1] + up[1]), 0.5 * (o[2] + up[2])];
        let t_max = g.t.end();
        let mut np = [0usize; 2];
        let mut idx = [Vec::new(), Vec::new()];
        let mut pts = [Vec::new(), Vec::new()];
        for (a, axis) in [g.y, g.z].iter().enumerate() {
            let da = d[a + 1];
            let oa = o[a + 1];
            let reach = (axis.start - center[a]).abs().max((axis.end() - center[a]).abs());
            let period = reach + t_max + box_r + 2.0 * da;
            np[a] = fast_len((period / da).ceil() as usize);
            let q0 = ((axis.start - oa) / da - 1e-9).ceil() as i64;
            let q1 = ((axis.end() - oa) / da + 1e-9).floor() as i64;
            if q1 <= q0 {
                return Err(Error::InvalidArgument("detector aperture narrower than one grid step".into()));
            }
            for q in q0..=q1 {
                let c = oa + q as f64 * da;
                let w = da * taper_weight(c, axis.start, axis.end(), taper);
                idx[a].push(q.rem_euclid(np[a] as i64) as usize);
                pts[a].push((c, w));
            }
        }
        let dft = PlaneDft::new(xi2, xi3, &pts[0], &pts[1]);
        let k2: Vec<f64> =
            (0..np[0]).map(|m| 2.0 * PI * signed_index(m, np[0]) as f64 / (np[0] as f64 * d[1])).collect();
        let k3: Vec<f64> =
            (0..np[1]).map(|m| 2.0 * PI * signed_index(m, np[1]) as f64 / (np[1] as f64 * d[2])).collect();
        // row-major [y][z]
        let knorm: Vec<f64> = k2.iter().flat_map(|a| k3.iter().map(move |b| a.hypot(*b))).collect();
        let kmax = knorm.iter().cloned().fold(0.0, f64::max);
        // farthest aperture point from the box decides where the data vanish
        let far = |a: usize, axis: &Axis| (axis.start - center[a]).abs().max((axis.end() - center[a]).abs());
        let t_reach = far(0, &g.y).hypot(far(1, &g.z)) + box_r + o[0].abs().max(up[0].abs());
        let mut planner = FftPlanner::new();
        let fwd = [planner.plan_fft_forward(np[0]), planner.plan_fft_forward(np[1])];
        let inv = [planner.plan_fft_inverse(np[0]), planner.plan_fft_inverse(np[1])];
        Ok(ApertureModel {
            dims,
            x1: (0..dims[0]).map(|i| target.coord(0, i)).collect(),
            np,
            knorm,
            y_idx: idx[0].clone(),
            z_idx: idx[1].clone(),
            dft,
            t: g.t,
            t_reach,
            j0: J0Table::new(kmax * t_max * 1.01 + 1.0, 2e-3),
            fwd,
            inv,
        })
    }

    // 2D transform of a row-major [y][z] plane; axis 0 of `fft_axis` is the fast one.
    fn fft2(&self, data: &mut [Complex64], inverse: bool) {
        let dims = [self.np[1], self.np[0]];
        let plans = if inverse { &self.inv } else { &self.fwd };
        fft_axis(data, &dims, 0, &plans[1]);
        fft_axis(data, &dims, 1, &plans[0]);
    }

    fn simulate(&self, h: &[f64]) -> Vec<Vec<Complex64>> {
        let [n1, n2, n3] = self.dims;
        let [p2, p3] = self.np;
        let zero = Complex64::new(0.0, 0.0);
        // padded slice spectra, one per x1 node
        let spectra: Vec<Vec<Complex64>> = (0..n1)
            .into_par_iter()
            .map(|i| {
                let mut s = vec![zero; p2 * p3];
                for l in 0..n3 {
                    for j in 0..n2 {
                        s[j * p3 + l] = Complex64::new(h[i + n1 * (j + n2 * l)], 0.0);
                    }
                }
                self.fft2(&mut s, false);
                s
            })
            .collect();
        let dx1 = if n1 > 1 { self.x1[1] - self.x1[0] } else { 1.0 };
        let norm = 1.0 / (p2 * p3) as f64;
        (0..self.t.len)
            .into_par_iter()
            .map(|it| {
                let t = self.t.value(it);
                if t <= 0.0 || t > self.t_reach {
                    return vec![zero; self.dft.n2 * self.dft.n3];
                }
                let mut acc = vec![zero; p2 * p3];
                let inside: Vec<usize> = (0..n1).filter(|&i| self.x1[i].abs() < t).collect();
                // circle integrals at radius √(t²−x1²), trapezoid in x1 with end segments to ±t
                let mut add = |spec: &[Complex64], r: f64, w: f64| {
                    for ((a, s), k) in acc.iter_mut().zip(spec).zip(&self.knorm) {
                        *a += s * (w * self.j0.eval(r * k));
                    }
                };
                let slice_at = |x: f64| -> Option<Vec<Complex64>> {
                    let u = (x - self.x1[0]) / dx1;
                    if u < 0.0 || u > (n1 - 1) as f64 {
                        return None;
                    }
                    let i0 = (u.floor() as usize).min(n1 - 2);
                    let w = u - i0 as f64;
                    Some(spectra[i0].iter().zip(&spectra[i0 + 1]).map(|(a, b)| a * (1.0 - w) + b * w).collect())
                };
                if let (Some(&first), Some(&last)) = (inside.first(), inside.last()) {
                    for &i in &inside {
                        let mut w = dx1;
                        if i == first {
                            w -= 0.5 * dx1;
                        }
                        if i == last {
                            w -= 0.5 * dx1;
                        }
                        let seg_lo = if i == first { (self.x1[i] + t).abs() } else { 0.0 };
                        let seg_hi = if i == last { (t - self.x1[i]).abs() } else { 0.0 };
                        w += 0.5 * (seg_lo + seg_hi);
                        let r = (t * t - self.x1[i] * self.x1[i]).sqrt();
                        add(&spectra[i], r, w);
                    }
                    for (x, seg) in [(-t, (self.x1[first] + t).abs()), (t, (t - self.x1[last]).abs())] {
                        if let Some(s) = slice_at(x) {
                            add(&s, 0.0, 0.5 * seg);
                        }
                    }
                } else {
                    // sphere thinner than one x1 step
                    for x in [-t, t] {
                        if let Some(s) = slice_at(x) {
                            add(&s, (t * t - x * x).max(0.0).sqrt(), t);
                        }
                    }
                }
                self.fft2(&mut acc, true);
                let scale = 2.0 * PI * norm / t;
                let nz = self.z_idx.len();
                let plane: Vec<f64> = self
                    .y_idx
                    .iter()
                    .flat_map(|&my| self.z_idx.iter().map(move |&mz| (my, mz)))
                    .map(|(my, mz)| acc[my * p3 + mz].re * scale)
                    .collect();
                self.dft.apply(|iy, iz| plane[iy * nz + iz])
            })
            .collect()
    }
}

/// Restarted-free GMRES with `m` Arnoldi steps from `x = 0`.
pub(super) fn gmres(apply: impl Fn(&[f64]) -> Vec<f64>, b: &[f64], m: usize) -> Vec<f64> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let beta = dot(b, b).sqrt();
    let mut x = vec![0.0; b.len()];
    if beta == 0.0 || m == 0 {
        return x;
    }
    let mut v: Vec<Vec<f64>> = vec![b.iter().map(|e| e / beta).collect()];
    let mut h = vec![vec![0.0; m]; m + 1];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut rhs = vec![0.0; m + 1];
    rhs[0] = beta;
    let mut k = 0;
    for j in 0..m {
        let mut w = apply(&v[j]);
        for i in 0..=j {
            let c = dot(&w, &v[i]);
            h[i][j] = c;
            w.iter_mut().zip(&v[i]).for_each(|(a, b)| *a -= c * b);
        }
        let nw = dot(&w, &w).sqrt();
        h[j + 1][j] = nw;
        for i in 0..j {
            let tmp = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
            h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
            h[i][j] = tmp;
        }
        let r = h[j][j].hypot(h[j + 1][j]);
        if r == 0.0 {
            break;
        }
        cs[j] = h[j][j] / r;
        sn[j] = h[j + 1][j] / r;
        h[j][j] = r;
        h[j + 1][j] = 0.0;
        rhs[j + 1] = -sn[j] * rhs[j];
        rhs[j] *= cs[j];
        k = j + 1;
        if nw <= 1e-14 * beta {
            break;
        }
        v.push(w.iter().map(|e| e / nw).collect());
    }
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|l| h[i][l] * y[l]).sum();
        y[i] = (rhs[i] - s) / h[i][i];
    }
    for (yi, vi) in y.iter().zip(&v) {
        x.iter_mut().zip(vi).for_each(|(a, b)| *a += yi * b);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gmres_solves_small_system() {
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 2.0]];
        let b = [1.0, 2.0, 3.0];
        let x = gmres(|v| (0..3).map(|i| (0..3).map(|j| a[i][j] * v[j]).sum()).collect(), &b, 3);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i][j] * x[j]).sum();
            assert!((r - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn taper_is_one_inside_and_zero_at_edge() {
        assert_eq!(taper_weight(0.0, -1.0, 1.0, 0.4), 1.0);
        assert!(taper_weight(1.0, -1.0, 1.0, 0.4).abs() < 1e-15);
        assert!((taper_weight(0.8, -1.0, 1.0, 0.4) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fast_lengths() {
        assert_eq!(fast_len(313), 320);
        assert_eq!(fast_len(7), 8);
    }

    #[test]
    fn j0_table_tracks_bessel() {
        let t = J0Table::new(100.0, 2e-3);
        for x in [0.0, 0.3, 5.1, 47.7, 99.9] {
            assert!((t.eval(x) - bessel_j0(x)).abs() < 1e-6);
        }
    }
}
