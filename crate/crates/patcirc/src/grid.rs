//! Regular grids, sampled fields, Gaussian phantoms and error metrics.

use crate::error::{Error, Result};

/// Uniformly sampled coordinate axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl Axis {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() || !start.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "axis needs finite start and positive step, got start={start} step={step}"
            )));
        }
        if len < 2 {
            return Err(Error::InvalidArgument(format!("axis needs at least 2 samples, got {len}")));
        }
        Ok(Axis { start, step, len })
    }

    /// Axis with `len` samples covering `[start, end]`.
    pub fn span(start: f64, end: f64, len: usize) -> Result<Self> {
        if len < 2 || !(end > start) {
            return Err(Error::InvalidArgument(format!("bad span [{start}, {end}] with {len} samples")));
        }
        Axis::new(start, (end - start) / (len - 1) as f64, len)
    }

    /// Periodic angle axis: `len` samples of `[0, 2π)`.
    pub fn angles(len: usize) -> Result<Self> {
        Axis::new(0.0, 2.0 * std::f64::consts::PI / len as f64, len)
    }

    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.value(self.len - 1)
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.value(i)).collect()
    }

    /// Cell index and fraction for linear interpolation, `None` outside `[start, end]`.
    #[inline]
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let u = (x - self.start) / self.step;
        let last = (self.len - 1) as f64;
        if !(u >= 0.0 && u <= last) {
            return None;
        }
        let i = (u.floor() as usize).min(self.len - 2);
        Some((i, u - i as f64))
    }

    /// Linear interpolation of `values` sampled on this axis, zero outside.
    #[inline]
    pub fn interp(&self, values: &[f64], x: f64) -> f64 {
        match self.locate(x) {
            Some((i, w)) => values[i] * (1.0 - w) + values[i + 1] * w,
            None => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid3 {
    counts: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
}

impl Grid3 {
    pub fn new(counts: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        for a in 0..3 {
            if counts[a] < 2 {
                return Err(Error::InvalidGrid(format!("axis {a} has {} samples, need >= 2", counts[a])));
            }
            if !(spacing[a] > 0.0) || !spacing[a].is_finite() {
                return Err(Error::InvalidGrid(format!("axis {a} spacing {} is not positive", spacing[a])));
            }
            if !origin[a].is_finite() {
                return Err(Error::InvalidGrid(format!("axis {a} origin is not finite")));
            }
        }
        Ok(Grid3 { counts, spacing, origin })
    }

    /// Grid symmetric about the origin in every axis.
    pub fn centered(counts: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        let origin = [0, 1, 2].map(|a| -0.5 * (counts[a] as f64 - 1.0) * spacing[a]);
        Grid3::new(counts, spacing, origin)
    }

    /// `n³` nodes covering `[-half_width, half_width]³`.
    pub fn cube(n: usize, half_width: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("cube needs n >= 2, got {n}")));
        }
        let h = 2.0 * half_width / (n - 1) as f64;
        Grid3::centered([n; 3], [h; 3])
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn axis(&self, a: usize) -> Axis {
        Axis { start: self.origin[a], step: self.spacing[a], len: self.counts[a] }
    }

    #[inline]
    pub fn coord(&self, a: usize, i: usize) -> f64 {
        self.origin[a] + i as f64 * self.spacing[a]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.counts[0] * (j + self.counts[1] * k)
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [self.coord(0, i), self.coord(1, j), self.coord(2, k)]
    }

    /// Coordinates of the node with flat index `idx`.
    #[inline]
    pub fn point_at(&self, idx: usize) -> [f64; 3] {
        let i = idx % self.counts[0];
        let j = (idx / self.counts[0]) % self.counts[1];
        let k = idx / (self.counts[0] * self.counts[1]);
        self.point(i, j, k)
    }

    pub fn upper(&self) -> [f64; 3] {
        [0, 1, 2].map(|a| self.coord(a, self.counts[a] - 1))
    }

    /// Mirror node `i ↔ n−1−i` in x1 maps coordinates to their negatives.
    pub fn is_symmetric_x1(&self) -> bool {
        let lo = self.origin[0];
        let hi = self.upper()[0];
        (lo + hi).abs() <= 1e-12 * (1.0 + hi.abs())
    }

    /// Largest radius `r` such that the ball `B(0, r)` lies inside the grid hull.
    pub fn inscribed_radius(&self) -> f64 {
        let up = self.upper();
        (0..3).map(|a| (-self.origin[a]).min(up[a])).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    None,
    Even,
    Odd,
}

#[inline]
pub(crate) fn trilinear(grid: &Grid3, values: &[f64], p: [f64; 3]) -> f64 {
    let mut base = [0usize; 3];
    let mut w = [0.0f64; 3];
    for a in 0..3 {
        let u = (p[a] - grid.origin[a]) / grid.spacing[a];
        let last = (grid.counts[a] - 1) as f64;
        if !(u >= 0.0 && u <= last) {
            return 0.0;
        }
        let i = (u.floor() as usize).min(grid.counts[a] - 2);
        base[a] = i;
        w[a] = u - i as f64;
    }
    let nx = grid.counts[0];
    let nxy = nx * grid.counts[1];
    let i0 = base[0] + nx * base[1] + nxy * base[2];
    let c = |o: usize| values[i0 + o];
    let x00 = c(0) + w[0] * (c(1) - c(0));
    let x10 = c(nx) + w[0] * (c(nx + 1) - c(nx));
    let x01 = c(nxy) + w[0] * (c(nxy + 1) - c(nxy));
    let x11 = c(nxy + nx) + w[0] * (c(nxy + nx + 1) - c(nxy + nx));
    let y0 = x00 + w[1] * (x10 - x00);
    let y1 = x01 + w[1] * (x11 - x01);
    y0 + w[2] * (y1 - y0)
}

/// Scalar volume sampled on a `Grid3`, x1 fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField3 {
    grid: Grid3,
    values: Vec<f64>,
    support_radius: f64,
    parity_x1: Parity,
}

impl ScalarField3 {
    pub fn zeros(grid: Grid3) -> Self {
        ScalarField3 { grid, values: vec![0.0; grid.len()], support_radius: 0.0, parity_x1: Parity::None }
    }

    pub fn from_values(grid: Grid3, values: Vec<f64>, support_radius: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at index {i}")));
        }
        if !(support_radius >= 0.0) {
            return Err(Error::InvalidArgument(format!("support radius {support_radius} is negative")));
        }
        Ok(ScalarField3 { grid, values, support_radius, parity_x1: Parity::None })
    }

    pub fn from_fn(grid: Grid3, support_radius: f64, f: impl Fn([f64; 3]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(grid.point_at(i))).collect();
        ScalarField3::from_values(grid, values, support_radius)
    }

    /// Declares x1-parity after checking it on mirrored nodes.
    pub fn with_parity(mut self, parity: Parity) -> Result<Self> {
        if parity != Parity::None {
            let sign = if parity == Parity::Even { 1.0 } else { -1.0 };
            if !self.grid.is_symmetric_x1() {
                return Err(Error::Parity("grid is not symmetric in x1".into()));
            }
            let [nx, ny, nz] = self.grid.counts;
            for k in 0..nz {
                for j in 0..ny {
                    for i in 0..nx {
                        let a = self.values[self.grid.index(i, j, k)];
                        let b = self.values[self.grid.index(nx - 1 - i, j, k)];
                        if (a - sign * b).abs() > 1e-12 * (1.0 + a.abs()) {
                            return Err(Error::Parity(format!("node ({i},{j},{k}) breaks {parity:?} symmetry")));
                        }
                    }
                }
            }
        }
        self.parity_x1 = parity;
        Ok(self)
    }

    /// Even (`sign = 1`) or odd (`sign = -1`) part in x1.
    fn mirror_part(&self, sign: f64) -> Result<Self> {
        if !self.grid.is_symmetric_x1() {
            return Err(Error::Parity("grid is not symmetric in x1".into()));
        }
        let [nx, ny, nz] = self.grid.counts;
        let mut out = vec![0.0; self.values.len()];
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let a = self.values[self.grid.index(i, j, k)];
                    let b = self.values[self.grid.index(nx - 1 - i, j, k)];
                    out[self.grid.index(i, j, k)] = 0.5 * (a + sign * b);
                }
            }
        }
        // exact antisymmetry on mirrored nodes
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx / 2 {
                    let v = out[self.grid.index(i, j, k)];
                    out[self.grid.index(nx - 1 - i, j, k)] = sign * v;
                }
                if nx % 2 == 1 && sign < 0.0 {
                    out[self.grid.index(nx / 2, j, k)] = 0.0;
                }
            }
        }
        let parity = if sign > 0.0 { Parity::Even } else { Parity::Odd };
        Ok(ScalarField3 { grid: self.grid, values: out, support_radius: self.support_radius, parity_x1: parity })
    }

    pub fn even_part(&self) -> Result<Self> {
        self.mirror_part(1.0)
    }

    pub fn odd_part(&self) -> Result<Self> {
        self.mirror_part(-1.0)
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn parity_x1(&self) -> Parity {
        self.parity_x1
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    /// `a·self + b·other` on the same grid.
    pub fn lin_comb(&self, a: f64, other: &ScalarField3, b: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        let parity = if self.parity_x1 == other.parity_x1 { self.parity_x1 } else { Parity::None };
        Ok(ScalarField3 {
            grid: self.grid,
            values,
            support_radius: self.support_radius.max(other.support_radius),
            parity_x1: parity,
        })
    }

    pub fn scaled(&self, a: f64) -> Self {
        ScalarField3 { values: self.values.iter().map(|v| a * v).collect(), ..self.clone() }
    }
}

/// Trilinear interpolation; zero outside the grid hull.
pub fn interpolate3(field: &ScalarField3, point: [f64; 3]) -> f64 {
    trilinear(&field.grid, &field.values, point)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Blob {
    pub center: [f64; 3],
    pub sigma: f64,
    pub amplitude: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhantomSpec {
    pub blobs: Vec<Blob>,
    pub symmetrize_x1: bool,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        for (n, b) in self.blobs.iter().enumerate() {
            if !(b.sigma > 0.0) || !b.sigma.is_finite() {
                return Err(Error::InvalidArgument(format!("blob {n}: sigma must be positive")));
            }
            if !b.amplitude.is_finite() || b.center.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidArgument(format!("blob {n}: non-finite parameters")));
            }
        }
        Ok(())
    }

    /// Blob list with mirrored copies added when symmetrizing.
    pub fn expanded(&self) -> Vec<Blob> {
        let mut out = self.blobs.clone();
        if self.symmetrize_x1 {
            out.extend(self.blobs.iter().map(|b| Blob { center: [-b.center[0], b.center[1], b.center[2]], ..*b }));
        }
        out
    }

    pub fn support_radius(&self) -> f64 {
        self.blobs
            .iter()
            .map(|b| norm3(b.center) + 5.0 * b.sigma)
            .fold(0.0, f64::max)
    }

    /// Analytic value at a point.
    pub fn eval(&self, p: [f64; 3]) -> f64 {
        self.expanded().iter().map(|b| blob_value(b, p)).sum()
    }
}

#[inline]
pub(crate) fn blob_value(b: &Blob, p: [f64; 3]) -> f64 {
    let d2 = (p[0] - b.center[0]).powi(2) + (p[1] - b.center[1]).powi(2) + (p[2] - b.center[2]).powi(2);
    b.amplitude * (-d2 / (2.0 * b.sigma * b.sigma)).exp()
}

#[inline]
pub(crate) fn norm3(p: [f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

pub fn sample_phantom(spec: &PhantomSpec, grid: &Grid3) -> ScalarField3 {
    let blobs = spec.expanded();
    let [nx, ny, nz] = grid.counts;
    let mut values = vec![0.0; grid.len()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                // mirrored nodes use the negated coordinate exactly
                let mut p = grid.point(i, j, k);
                if grid.is_symmetric_x1() && 2 * i + 1 > nx {
                    p[0] = -grid.coord(0, nx - 1 - i);
                }
                values[grid.index(i, j, k)] = blobs.iter().map(|b| blob_value(b, p)).sum();
            }
        }
    }
    let parity = if spec.symmetrize_x1 && grid.is_symmetric_x1() { Parity::Even } else { Parity::None };
    ScalarField3 { grid: *grid, values, support_radius: spec.support_radius(), parity_x1: parity }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DetectorKind {
    Cylinder { radius: f64 },
    Plane,
    Sphere { radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorGeometry {
    pub kind: DetectorKind,
    pub r_det: f64,
}

impl DetectorGeometry {
    pub fn new(kind: DetectorKind, r_det: f64) -> Result<Self> {
        if !(r_det > 0.0) || !r_det.is_finite() {
            return Err(Error::InvalidArgument(format!("r_det must be positive, got {r_det}")));
        }
        match kind {
            DetectorKind::Cylinder { radius } | DetectorKind::Sphere { radius } if !(radius > 0.0) => {
                Err(Error::InvalidArgument(format!("detector surface radius must be positive, got {radius}")))
            }
            _ => Ok(DetectorGeometry { kind, r_det }),
        }
    }
}

/// `‖a−b‖₂/‖b‖₂` over raw arrays, `‖a‖₂` when `b` vanishes.
pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - y) * (x - y);
        den += y * y;
    }
    if den == 0.0 {
        a.iter().map(|x| x * x).sum::<f64>().sqrt()
    } else {
        (num / den).sqrt()
    }
}

pub fn rel_l2_error(a: &ScalarField3, b: &ScalarField3) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    Ok(rel_l2(&a.values, &b.values))
}

/// Relative error restricted to nodes where `keep` holds.
pub fn rel_l2_error_masked(a: &ScalarField3, b: &ScalarField3, keep: impl Fn([f64; 3]) -> bool) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let (sa, sb): (Vec<f64>, Vec<f64>) = (0..a.grid.len())
        .filter(|&i| keep(a.grid.point_at(i)))
        .map(|i| (a.values[i], b.values[i]))
        .unzip();
    Ok(rel_l2(&sa, &sb))
}
