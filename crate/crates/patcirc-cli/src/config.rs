//! Experiment configuration: one TOML file with flat dotted keys.
//!
//! ```text
//! geometry.kind = "cylinder"
//! geometry.radius = 1.0
//! geometry.r_det = 0.15
//! grid.n = 64
//! noise.sigma = 0.0
//! ```

use std::path::{Path, PathBuf};

use patcirc::grid::{Blob, Grid3, PhantomSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryKind {
    Cylinder,
    Plane,
    Sphere,
    TorusCylinder,
    TorusPlane,
}

impl GeometryKind {
    pub fn name(self) -> &'static str {
        match self {
            GeometryKind::Cylinder => "cylinder",
            GeometryKind::Plane => "plane",
            GeometryKind::Sphere => "sphere",
            GeometryKind::TorusCylinder => "torus-cylinder",
            GeometryKind::TorusPlane => "torus-plane",
        }
    }

    pub fn is_torus(self) -> bool {
        matches!(self, GeometryKind::TorusCylinder | GeometryKind::TorusPlane)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomKind {
    /// Two Gaussian blobs off the axes.
    TwoBlob,
    /// Two Gaussian blobs mirrored in x1.
    EvenPair,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    pub kind: GeometryKind,
    /// Detector cylinder or sphere radius; support radius R for the torus geometries.
    pub radius: f64,
    pub r_det: f64,
    /// Central radius of the tori.
    pub u: f64,
    /// Half extent of the detector plane in x2 and x3.
    pub aperture: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry { kind: GeometryKind::Cylinder, radius: 1.0, r_det: 0.15, u: 0.3, aperture: 3.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Phantom grid `n³` on `[−half_width, half_width]³`.
    pub n: usize,
    pub half_width: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { n: 64, half_width: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    /// Nodes along x1 and x2 (x3 gets `nz`).
    pub n: usize,
    pub nz: usize,
    pub half_width: f64,
    pub z_half_width: f64,
    /// Radius `|x'|` of the region scored for the cylinder.
    pub mask_radius: f64,
}

impl Default for TargetSection {
    fn default() -> Self {
        TargetSection { n: 32, nz: 16, half_width: 0.65, z_half_width: 0.8, mask_radius: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSection {
    pub kind: PhantomKind,
    pub amplitude: f64,
}

impl Default for PhantomSection {
    fn default() -> Self {
        PhantomSection { kind: PhantomKind::TwoBlob, amplitude: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Detector angles on the cylinder, or torus centers on the circle.
    pub n_theta: usize,
    /// Detector or center spacing along lines (z, x2, p).
    pub dz: f64,
    pub dt: f64,
    /// Half width of the symmetric integration window of the dual operators;
    /// 6 for the cylinder and 32 for the tori when absent.
    pub window: Option<f64>,
    /// Polar intervals of the spherical detector layout (azimuth gets twice as many).
    pub n_polar: usize,
    /// Torus centers on the line.
    pub n_x2: usize,
    /// Output radii of the circular means.
    pub r_max: f64,
    /// x3 samples of the circular means on `[−x3_half_width, x3_half_width]`.
    pub n_x3: usize,
    pub x3_half_width: f64,
    /// Torus centers on the line span `[−x2_half_width, x2_half_width]`.
    pub x2_half_width: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            n_theta: 64,
            dz: 0.04,
            dt: 0.02,
            window: None,
            n_polar: 32,
            n_x2: 2,
            r_max: 2.0,
            n_x3: 5,
            x3_half_width: 0.2,
            x2_half_width: 0.4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureSection {
    pub n_alpha: usize,
    pub n_beta1: usize,
    pub n_beta2: usize,
    /// Largest arc step of clipped rules, grid spacing when 0.
    pub max_step: f64,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        QuadratureSection { n_alpha: 128, n_beta1: 128, n_beta2: 64, max_step: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionSection {
    pub reg_epsilon: f64,
    /// GMRES steps of the planar aperture completion.
    pub completion_steps: usize,
}

impl Default for InversionSection {
    fn default() -> Self {
        InversionSection { reg_epsilon: 1e-3, completion_steps: 20 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub sigma: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("patcirc-out") }
    }
}

/// Deliberate faults for checking that the self-test notices them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationSection {
    /// Multiplies the cylinder inversion constant.
    pub cylinder_scale: f64,
}

impl Default for MutationSection {
    fn default() -> Self {
        MutationSection { cylinder_scale: 1.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: Geometry,
    pub grid: GridSection,
    pub target: TargetSection,
    pub phantom: PhantomSection,
    pub data: DataSection,
    pub quadrature: QuadratureSection,
    pub inversion: InversionSection,
    pub noise: NoiseSection,
    pub output: OutputSection,
    pub mutation: MutationSection,
}

fn bad(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

fn positive(key: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be positive, got {v}")))
    }
}

fn at_least(key: &str, v: usize, min: usize) -> Result<(), CliError> {
    if v >= min {
        Ok(())
    } else {
        Err(bad(key, format!("must be at least {min}, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn window(&self) -> f64 {
        self.data.window.unwrap_or(if self.geometry.kind.is_torus() { 32.0 } else { 6.0 })
    }

    pub fn phantom_spec(&self) -> PhantomSpec {
        let a = self.phantom.amplitude;
        let blob = |c: [f64; 3], s: f64, w: f64| Blob { center: c, sigma: s, amplitude: a * w };
        match self.phantom.kind {
            PhantomKind::TwoBlob => PhantomSpec {
                blobs: vec![blob([0.2, 0.1, 0.0], 0.12, 1.0), blob([-0.15, -0.2, 0.15], 0.1, 0.7)],
                symmetrize_x1: false,
            },
            PhantomKind::EvenPair => PhantomSpec {
                blobs: vec![blob([0.35, 0.1, 0.0], 0.1, 1.0), blob([0.2, -0.3, 0.2], 0.1, 0.8)],
                symmetrize_x1: true,
            },
            // a zero-amplitude blob keeps the support radius meaningful
            PhantomKind::Zero => PhantomSpec { blobs: vec![Blob { center: [0.0; 3], sigma: 0.1, amplitude: 0.0 }], symmetrize_x1: false },
        }
    }

    pub fn phantom_grid(&self) -> Result<Grid3, CliError> {
        Ok(Grid3::cube(self.grid.n, self.grid.half_width)?)
    }

    /// Grid on which the circular means and the final field are reconstructed.
    pub fn target_grid(&self) -> Result<Grid3, CliError> {
        let t = &self.target;
        let grid = match self.geometry.kind {
            GeometryKind::Cylinder => {
                let d = 2.0 * t.half_width / (t.n - 1) as f64;
                let dz = 2.0 * t.z_half_width / (t.nz - 1) as f64;
                Grid3::new([t.n, t.n, t.nz], [d, d, dz], [-t.half_width, -t.half_width, -t.z_half_width])?
            }
            _ => self.phantom_grid()?,
        };
        Ok(grid)
    }

    /// Checks every field and the geometry preconditions on the phantom support.
    pub fn validate(&self) -> Result<(), CliError> {
        let g = &self.geometry;
        positive("geometry.r_det", g.r_det)?;
        positive("geometry.radius", g.radius)?;
        positive("grid.half_width", self.grid.half_width)?;
        at_least("grid.n", self.grid.n, 4)?;
        at_least("target.n", self.target.n, 4)?;
        at_least("target.nz", self.target.nz, 2)?;
        positive("target.half_width", self.target.half_width)?;
        positive("target.z_half_width", self.target.z_half_width)?;
        positive("target.mask_radius", self.target.mask_radius)?;
        positive("data.dz", self.data.dz)?;
        positive("data.dt", self.data.dt)?;
        positive("data.window", self.window())?;
        positive("data.x3_half_width", self.data.x3_half_width)?;
        positive("data.x2_half_width", self.data.x2_half_width)?;
        positive("data.r_max", self.data.r_max)?;
        at_least("data.n_theta", self.data.n_theta, 2)?;
        at_least("data.n_polar", self.data.n_polar, 2)?;
        at_least("data.n_x2", self.data.n_x2, 2)?;
        at_least("data.n_x3", self.data.n_x3, 2)?;
        at_least("quadrature.n_alpha", self.quadrature.n_alpha, 4)?;
        at_least("quadrature.n_beta1", self.quadrature.n_beta1, 4)?;
        at_least("quadrature.n_beta2", self.quadrature.n_beta2, 2)?;
        if !(self.quadrature.max_step >= 0.0) {
            return Err(bad("quadrature.max_step", "must be nonnegative"));
        }
        if !(self.inversion.reg_epsilon >= 0.0) {
            return Err(bad("inversion.reg_epsilon", "must be nonnegative"));
        }
        if !(self.noise.sigma >= 0.0) || !self.noise.sigma.is_finite() {
            return Err(bad("noise.sigma", "must be nonnegative"));
        }
        if !self.phantom.amplitude.is_finite() {
            return Err(bad("phantom.amplitude", "must be finite"));
        }
        let spec = self.phantom_spec();
        let support = spec.support_radius();
        if support > self.grid.half_width {
            return Err(bad("grid.half_width", format!("phantom support radius {support} does not fit the grid")));
        }
        match g.kind {
            GeometryKind::Cylinder => {
                if support > g.radius {
                    return Err(bad("geometry.radius", format!("phantom support radius {support} exceeds the detector cylinder")));
                }
                let reach = self.target.half_width * 2f64.sqrt();
                if reach >= g.radius {
                    return Err(bad("target.half_width", format!("target reaches |x'| = {reach}, not inside the cylinder")));
                }
            }
            GeometryKind::Sphere => {
                if support >= g.radius {
                    return Err(bad("geometry.radius", format!("phantom support radius {support} is not inside the detector sphere")));
                }
                let corner = self.grid.half_width * 3f64.sqrt();
                if corner >= g.radius {
                    return Err(bad("grid.half_width", format!("grid corners at radius {corner} are not inside the detector sphere")));
                }
            }
            GeometryKind::Plane | GeometryKind::TorusPlane => {
                if !spec.symmetrize_x1 && self.phantom.kind != PhantomKind::Zero {
                    return Err(bad("phantom.kind", "planar geometries need a phantom even in x1"));
                }
                positive("geometry.aperture", g.aperture)?;
            }
            GeometryKind::TorusCylinder => {}
        }
        if g.kind.is_torus() {
            positive("geometry.u", g.u)?;
            if support > g.radius {
                return Err(bad("geometry.radius", format!("phantom support radius {support} exceeds the support radius R")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_parse() {
        let c = ExperimentConfig::from_str("geometry.kind = \"torus-plane\"\ngeometry.u = 0.4\nnoise.seed = 7\nphantom.kind = \"even-pair\"\n").unwrap();
        assert_eq!(c.geometry.kind, GeometryKind::TorusPlane);
        assert_eq!(c.geometry.u, 0.4);
        assert_eq!(c.noise.seed, 7);
        assert_eq!(c.grid, GridSection::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_str("grid.nx = 3\n").is_err());
    }

    #[test]
    fn round_trips_through_text() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_str(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn preconditions_name_the_key() {
        let mut c = ExperimentConfig::default();
        c.geometry.radius = 0.5;
        let e = c.validate().unwrap_err().to_string();
        assert!(e.contains("geometry.radius"), "{e}");
        let mut c = ExperimentConfig::default();
        c.geometry.kind = GeometryKind::Plane;
        assert!(c.validate().unwrap_err().to_string().contains("phantom.kind"));
        let mut c = ExperimentConfig::default();
        c.data.dt = -1.0;
        assert!(c.validate().unwrap_err().to_string().contains("data.dt"));
        let mut c = ExperimentConfig::default();
        c.geometry.kind = GeometryKind::Sphere;
        c.geometry.radius = 1.5;
        assert!(c.validate().unwrap_err().to_string().contains("grid.half_width"));
        c.grid.half_width = 0.85;
        c.validate().unwrap();
        let mut c = ExperimentConfig::default();
        c.data.n_theta = 1;
        assert!(c.validate().unwrap_err().to_string().contains("data.n_theta"));
    }
}
