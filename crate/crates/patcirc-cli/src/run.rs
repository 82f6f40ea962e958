//! Phantom, forward, invert and pipeline commands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use patcirc::forward::{
    circular_mean_fixed_radius, circular_radon, pressure_from_rp, rp_cylinder, rp_plane, rp_sphere, toroidal_radon, CenterSet,
    CylindricalSinogram, PlanarSinogram, PressureData, Quadrature, SphereDirections, SphericalSinogram, ToroidalSinogram,
};
use patcirc::grid::{rel_l2, sample_phantom, Axis, Grid3, ScalarField3};
use patcirc::pat_inversion::{reconstruct, BackprojectionConfig, CylinderConfig, Extrapolation, GeometryData, PlaneConfig, ReconstructConfig, ZWindow};
use patcirc::torus_inversion::{torus_to_circle_pair_with, unfold_cylinder, unfold_plane, TorusConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{ExperimentConfig, GeometryKind};
use crate::io::{io_err, write_metrics, Manifest, Metric, Volume};
use crate::CliError;

pub const SINOGRAM: &str = "sinogram.rvl";
pub const SINOGRAM_MANIFEST: &str = "sinogram.manifest";

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn manifest_path(vol: &Path) -> PathBuf {
    vol.with_extension("manifest")
}

pub fn quadrature(cfg: &ExperimentConfig) -> Quadrature {
    let q = &cfg.quadrature;
    Quadrature {
        n_alpha: q.n_alpha,
        n_beta1: q.n_beta1,
        n_beta2: q.n_beta2,
        max_step: (q.max_step > 0.0).then_some(q.max_step),
        ..Quadrature::default()
    }
}

/// Keys that invert checks against the sinogram manifest.
fn geometry_entries(cfg: &ExperimentConfig) -> Vec<(&'static str, String)> {
    let g = &cfg.geometry;
    let d = &cfg.data;
    vec![
        ("geometry.kind", g.kind.name().to_string()),
        ("geometry.radius", g.radius.to_string()),
        ("geometry.r_det", g.r_det.to_string()),
        ("geometry.u", g.u.to_string()),
        ("geometry.aperture", g.aperture.to_string()),
        ("data.n_theta", d.n_theta.to_string()),
        ("data.n_polar", d.n_polar.to_string()),
        ("data.n_x2", d.n_x2.to_string()),
        ("data.x2_half_width", d.x2_half_width.to_string()),
    ]
}

fn base_manifest(cfg: &ExperimentConfig, content: &str, vol: &Volume) -> Manifest {
    let mut m = Manifest::default();
    m.set("content", content);
    for (k, v) in geometry_entries(cfg) {
        m.set(k, v);
    }
    let q = &cfg.quadrature;
    m.set("quadrature.n_alpha", q.n_alpha);
    m.set("quadrature.n_beta1", q.n_beta1);
    m.set("quadrature.n_beta2", q.n_beta2);
    m.set("quadrature.max_step", q.max_step);
    m.set("noise.sigma", cfg.noise.sigma);
    m.set("noise.seed", cfg.noise.seed);
    m.set("rank", vol.axes.len());
    for (i, a) in vol.axes.iter().enumerate() {
        m.set(&format!("axis{i}"), format!("{} {} {}", a.start, a.step, a.len));
    }
    m.set("payload.sha256", vol.checksum());
    m
}

fn write_volume(cfg: &ExperimentConfig, out: &Path, name: &str, content: &str, vol: &Volume) -> Result<(), CliError> {
    let path = out.join(name);
    vol.write(&path)?;
    base_manifest(cfg, content, vol).write(&manifest_path(&path))
}

/// Field layout (x fastest) as a row-major `[z][y][x]` volume.
fn field_volume(grid: &Grid3, values: Vec<f64>) -> Result<Volume, CliError> {
    Volume::new(vec![grid.axis(2), grid.axis(1), grid.axis(0)], values)
}

pub fn phantom_field(cfg: &ExperimentConfig) -> Result<ScalarField3, CliError> {
    Ok(sample_phantom(&cfg.phantom_spec(), &cfg.phantom_grid()?))
}

fn prepare(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))
}

pub fn cmd_phantom(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<Metric>, CliError> {
    prepare(cfg, out)?;
    let t0 = Instant::now();
    let f = phantom_field(cfg)?;
    let grid = *f.grid();
    write_volume(cfg, out, "phantom.rvl", "phantom", &field_volume(&grid, f.into_values())?)?;
    let rows = vec![Metric::new("phantom", "voxels", grid.len() as f64, "1", ms(t0))];
    write_metrics(&out.join("metrics_phantom.csv"), &rows)?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Data layouts

fn axis_span(half: f64, step: f64) -> Result<Axis, CliError> {
    let n = (2.0 * half / step).round() as usize + 1;
    Ok(Axis::new(-0.5 * (n - 1) as f64 * step, step, n)?)
}

fn t_axis(step: f64, end: f64) -> Result<Axis, CliError> {
    Ok(Axis::new(0.0, step, (end / step).ceil() as usize + 2)?)
}

fn target_reach(grid: &Grid3) -> f64 {
    let lo = grid.origin();
    let hi = grid.upper();
    lo[0].abs().max(hi[0].abs()).hypot(lo[1].abs().max(hi[1].abs()))
}

fn torus_centers(cfg: &ExperimentConfig) -> Result<CenterSet, CliError> {
    Ok(match cfg.geometry.kind {
        GeometryKind::TorusPlane => {
            let h = cfg.data.x2_half_width;
            CenterSet::Line { x2: Axis::span(-h, h, cfg.data.n_x2)? }
        }
        _ => CenterSet::Circle { radius: cfg.geometry.radius, theta: Axis::angles(cfg.data.n_theta)? },
    })
}

fn center_axis(c: &CenterSet) -> Axis {
    match c {
        CenterSet::Circle { theta, .. } => *theta,
        CenterSet::Line { x2 } => *x2,
    }
}

struct TorusAxes {
    x3: Axis,
    /// ρ axis of the two-circle sums.
    rho: Axis,
    band: f64,
    /// Radii of the recovered circular means.
    r_out: Axis,
    p: Axis,
    r: Axis,
}

fn torus_axes(cfg: &ExperimentConfig, centers: &CenterSet) -> Result<TorusAxes, CliError> {
    let d = &cfg.data;
    let u = cfg.geometry.u;
    let x3 = Axis::span(-d.x3_half_width, d.x3_half_width, d.n_x3)?;
    let mu = (0..centers.len()).map(|m| centers.center(m)).map(|c| c[0].hypot(c[1])).fold(0.0, f64::max);
    let reach = mu + cfg.geometry.radius;
    // the filter band ends a little past the last nonzero two-circle sum
    let band = (reach + u).max(d.r_max + u) + 0.3;
    let rho_end = band + 0.4;
    let rho = Axis::new(0.0, d.dt, (rho_end / d.dt).ceil() as usize + 1)?;
    let r_out = Axis::new(0.0, d.dt, (d.r_max / d.dt).round() as usize + 1)?;
    let w = cfg.window();
    let p = axis_span(d.x3_half_width + w + d.dz, d.dz)?;
    let r_end = w.hypot(rho.end()) + 0.1;
    let r = Axis::new(0.5 * d.dt, d.dt, (r_end / d.dt).ceil() as usize + 2)?;
    Ok(TorusAxes { x3, rho, band, r_out, p, r })
}

fn torus_config(cfg: &ExperimentConfig, band: f64) -> TorusConfig {
    TorusConfig {
        backprojection: BackprojectionConfig { window: ZWindow::Symmetric { half_width: cfg.window() }, extrapolation: Extrapolation::Linear },
        support_band: Some(band),
        ..TorusConfig::default()
    }
}

/// Sinogram of the configured geometry; pressure for the detector surfaces, `R_T f` for the tori.
pub fn forward_volume(cfg: &ExperimentConfig, f: &ScalarField3) -> Result<Volume, CliError> {
    let g = &cfg.geometry;
    let d = &cfg.data;
    let quad = quadrature(cfg);
    let vol = match g.kind {
        GeometryKind::Cylinder => {
            let target = cfg.target_grid()?;
            let w = cfg.window();
            let z = axis_span(cfg.target.z_half_width + w + d.dz, d.dz)?;
            let t = t_axis(d.dt, w.hypot(g.radius + target_reach(&target) + 4.0 * d.dt) + 0.1)?;
            let theta = Axis::angles(d.n_theta)?;
            let s = rp_cylinder(f, g.radius, g.r_det, theta, z, t, &quad)?;
            let p = pressure_from_rp(&s).0;
            Volume::new(vec![p.theta, p.z, p.t], p.values)?
        }
        GeometryKind::Plane => {
            let y = axis_span(g.aperture, d.dz)?;
            let t = t_axis(d.dt, 2f64.sqrt() * g.aperture + 1.2)?;
            let p = pressure_from_rp(&rp_plane(f, y, y, t, g.r_det, &quad)?).0;
            Volume::new(vec![p.y, p.z, p.t], p.values)?
        }
        GeometryKind::Sphere => {
            let dirs = SphereDirections::lat_long(d.n_polar, 2 * d.n_polar)?;
            let corner = f.grid().origin().iter().map(|v| v * v).sum::<f64>().sqrt();
            let t = t_axis(d.dt, g.radius + corner + 0.1)?;
            let p = pressure_from_rp(&rp_sphere(f, g.radius, g.r_det, dirs, t, &quad)?).0;
            let n = p.directions.len();
            Volume::new(vec![Axis::new(0.0, 1.0, n)?, p.t], p.values)?
        }
        GeometryKind::TorusCylinder | GeometryKind::TorusPlane => {
            let centers = torus_centers(cfg)?;
            let ax = torus_axes(cfg, &centers)?;
            let s = toroidal_radon(f, centers.clone(), g.u, ax.p, ax.r, &quad)?;
            Volume::new(vec![center_axis(&centers), s.p, s.r], s.values)?
        }
    };
    Ok(vol)
}

pub fn add_noise(vol: &mut Volume, sigma: f64, seed: u64) -> Result<(), CliError> {
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| CliError::Config(format!("noise.sigma: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in vol.values.iter_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(())
}

pub fn cmd_forward(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<Metric>, CliError> {
    prepare(cfg, out)?;
    let t0 = Instant::now();
    let f = phantom_field(cfg)?;
    let mut rows = vec![Metric::new("phantom", "voxels", f.grid().len() as f64, "1", ms(t0))];
    let t1 = Instant::now();
    let mut vol = forward_volume(cfg, &f)?;
    rows.push(Metric::new("forward", "samples", vol.values.len() as f64, "1", ms(t1)));
    add_noise(&mut vol, cfg.noise.sigma, cfg.noise.seed)?;
    let content = if cfg.geometry.kind.is_torus() { "toroidal_radon" } else { "pressure" };
    write_volume(cfg, out, SINOGRAM, content, &vol)?;
    rows.push(Metric::new("forward", "noise_sigma", cfg.noise.sigma, "1", 0.0));
    write_metrics(&out.join("metrics_forward.csv"), &rows)?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Inversion

fn check_manifest(cfg: &ExperimentConfig, m: &Manifest) -> Result<(), CliError> {
    for (k, want) in geometry_entries(cfg) {
        match m.get(k) {
            Some(v) if v == want => {}
            got => {
                return Err(CliError::GeometryMismatch(format!(
                    "{k} is {} in the sinogram manifest but {want} in the config",
                    got.unwrap_or("missing")
                )))
            }
        }
    }
    Ok(())
}

fn expect_rank(vol: &Volume, rank: usize) -> Result<(), CliError> {
    if vol.axes.len() != rank {
        return Err(CliError::GeometryMismatch(format!("sinogram has rank {}, expected {rank}", vol.axes.len())));
    }
    Ok(())
}

fn masked_rel(a: &[f64], b: &[f64], keep: &[bool]) -> f64 {
    let pick = |v: &[f64]| -> Vec<f64> { v.iter().zip(keep).filter(|(_, k)| **k).map(|(x, _)| *x).collect() };
    rel_l2(&pick(a), &pick(b))
}

pub fn cmd_invert(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<Metric>, CliError> {
    prepare(cfg, out)?;
    let path = out.join(SINOGRAM);
    let vol = Volume::read(&path)?;
    let manifest = Manifest::read(&out.join(SINOGRAM_MANIFEST))?;
    manifest.verify(&vol)?;
    check_manifest(cfg, &manifest)?;
    let f = phantom_field(cfg)?;
    if cfg.geometry.kind.is_torus() {
        invert_torus(cfg, out, vol, &f)
    } else {
        invert_pat(cfg, out, vol, &f)
    }
}

fn invert_pat(cfg: &ExperimentConfig, out: &Path, vol: Volume, f: &ScalarField3) -> Result<Vec<Metric>, CliError> {
    let g = &cfg.geometry;
    let data = match g.kind {
        GeometryKind::Cylinder => {
            expect_rank(&vol, 3)?;
            let s = CylindricalSinogram { radius: g.radius, r_det: g.r_det, theta: vol.axes[0], z: vol.axes[1], t: vol.axes[2], values: vol.values };
            GeometryData::Cylinder(PressureData(s))
        }
        GeometryKind::Plane => {
            expect_rank(&vol, 3)?;
            GeometryData::Plane(PressureData(PlanarSinogram { r_det: g.r_det, y: vol.axes[0], z: vol.axes[1], t: vol.axes[2], values: vol.values }))
        }
        GeometryKind::Sphere => {
            expect_rank(&vol, 2)?;
            let directions = SphereDirections::lat_long(cfg.data.n_polar, 2 * cfg.data.n_polar)?;
            if directions.len() != vol.axes[0].len {
                return Err(CliError::GeometryMismatch(format!("{} detector rows for {} directions", vol.axes[0].len, directions.len())));
            }
            GeometryData::Sphere(PressureData(SphericalSinogram { radius: g.radius, r_det: g.r_det, directions, t: vol.axes[1], values: vol.values }))
        }
        _ => unreachable!("torus handled separately"),
    };
    let target = cfg.target_grid()?;
    let mut rc = ReconstructConfig::new(target);
    rc.reg_epsilon = cfg.inversion.reg_epsilon;
    rc.cylinder = CylinderConfig {
        backprojection: BackprojectionConfig { window: ZWindow::Symmetric { half_width: cfg.window() }, extrapolation: Extrapolation::Quadratic },
        constant_scale: cfg.mutation.cylinder_scale,
        ..CylinderConfig::default()
    };
    rc.plane = PlaneConfig { completion_steps: cfg.inversion.completion_steps, ..PlaneConfig::default() };
    let rec = reconstruct(&data, &rc)?;
    let mut rows: Vec<Metric> = rec.stages.iter().map(|s| Metric::new(s.stage, "wall_time", s.wall_ms, "ms", s.wall_ms)).collect();
    let keep: Vec<bool> = match g.kind {
        GeometryKind::Cylinder => (0..target.len()).map(|i| target.point_at(i)).map(|p| p[0].hypot(p[1]) <= cfg.target.mask_radius).collect(),
        _ => vec![true; target.len()],
    };
    let t0 = Instant::now();
    let oracle = circular_mean_fixed_radius(f, g.r_det, &target, cfg.quadrature.n_alpha)?;
    rows.push(Metric::new("mean_map", "rel_l2_error", masked_rel(&rec.mean_map.values, &oracle.values, &keep), "1", ms(t0)));
    let truth = sample_phantom(&cfg.phantom_spec(), &target);
    rows.push(Metric::new("field", "rel_l2_error", masked_rel(rec.field.values(), truth.values(), &keep), "1", 0.0));
    rows.push(Metric::new("deconvolve_fixed_radius", "min_abs_j0", rec.report.min_abs_j0, "1", 0.0));
    write_volume(cfg, out, "mean_map.rvl", "circular_mean_map", &field_volume(&target, rec.mean_map.values)?)?;
    write_volume(cfg, out, "field.rvl", "field", &field_volume(&target, rec.field.into_values())?)?;
    write_metrics(&out.join("metrics_invert.csv"), &rows)?;
    Ok(rows)
}

fn invert_torus(cfg: &ExperimentConfig, out: &Path, vol: Volume, f: &ScalarField3) -> Result<Vec<Metric>, CliError> {
    expect_rank(&vol, 3)?;
    let centers = torus_centers(cfg)?;
    if center_axis(&centers) != vol.axes[0] {
        return Err(CliError::GeometryMismatch("torus center axis differs from the config".into()));
    }
    let ax = torus_axes(cfg, &centers)?;
    let g = ToroidalSinogram { centers: centers.clone(), u: cfg.geometry.u, p: vol.axes[1], r: vol.axes[2], values: vol.values };
    let t0 = Instant::now();
    let s = torus_to_circle_pair_with(&g, ax.x3, ax.rho, &torus_config(cfg, ax.band))?;
    let mut rows = vec![Metric::new("torus_to_circle_pair", "wall_time", ms(t0), "ms", ms(t0))];
    let t1 = Instant::now();
    let m = match cfg.geometry.kind {
        GeometryKind::TorusPlane => unfold_plane(&s, cfg.geometry.radius, ax.r_out)?,
        _ => unfold_cylinder(&s, cfg.geometry.radius, ax.r_out)?,
    };
    rows.push(Metric::new("unfold", "wall_time", ms(t1), "ms", ms(t1)));
    let t2 = Instant::now();
    let direct = circular_radon(f, centers.clone(), ax.x3, ax.r_out, &Quadrature::default())?;
    rows.push(Metric::new("circular_radon", "rel_l2_error", rel_l2(&m.values, &direct.values), "1", ms(t2)));
    let shape = vec![center_axis(&centers), ax.x3, ax.r_out];
    write_volume(cfg, out, "circular_radon.rvl", "circular_radon", &Volume::new(shape, m.values)?)?;
    write_metrics(&out.join("metrics_invert.csv"), &rows)?;
    Ok(rows)
}

pub fn cmd_pipeline(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<Metric>, CliError> {
    let mut rows = cmd_forward(cfg, out)?;
    rows.extend(cmd_invert(cfg, out)?);
    write_metrics(&out.join("metrics_pipeline.csv"), &rows)?;
    Ok(rows)
}

/// Small-scale oracle checks; the cylinder round trip uses `mutation.cylinder_scale`.
pub fn cmd_selftest(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<Metric>, CliError> {
    use crate::checks::{self, Scale};
    prepare(cfg, out)?;
    let s = Scale::Small;
    let outcomes = vec![
        checks::fourier_relation(s)?,
        checks::bateman(s)?,
        checks::hilbert_involution(s)?,
        checks::odd_planar_zero(s)?,
        checks::forward_linearity(s)?,
        checks::deconvolution(s)?,
        checks::unfolding_exact(s)?,
        checks::filtration_lemma(s)?,
        checks::circle_pair_lemma(s)?,
        checks::cylinder_round_trip(s, cfg.mutation.cylinder_scale)?,
        checks::sphere_round_trip(s)?,
        checks::plane_round_trip(s)?,
    ];
    let rows: Vec<Metric> = outcomes.iter().map(|o| Metric::new("selftest", o.name, o.value, "1", o.wall_ms)).collect();
    write_metrics(&out.join("metrics_selftest.csv"), &rows)?;
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.pass()).map(|o| o.line()).collect();
    if !failed.is_empty() {
        return Err(CliError::Selftest(failed.join("; ")));
    }
    Ok(rows)
}
