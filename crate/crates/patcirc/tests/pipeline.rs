use patcirc::forward::{circular_mean_fixed_radius, pressure_from_rp, rp_cylinder, rp_sphere, Quadrature, SphereDirections};
use patcirc::grid::{rel_l2, sample_phantom, Axis, Blob, Grid3, PhantomSpec};
use patcirc::pat_inversion::{
    invert_cylinder_with, reconstruct, BackprojectionConfig, CylinderConfig, Extrapolation, GeometryData, ReconstructConfig, ZWindow,
};

fn phantom() -> PhantomSpec {
    PhantomSpec {
        blobs: vec![
            Blob { center: [0.2, 0.1, 0.0], sigma: 0.12, amplitude: 1.0 },
            Blob { center: [-0.15, -0.2, 0.15], sigma: 0.1, amplitude: 0.7 },
        ],
        symmetrize_x1: false,
    }
}

fn quad() -> Quadrature {
    Quadrature { max_step: Some(0.05), ..Quadrature::default() }
}

#[test]
fn pressure_path_matches_direct_inversion() {
    let f = sample_phantom(&phantom(), &Grid3::cube(24, 1.0).unwrap());
    let zh = 3.0;
    let z = Axis::new(-(0.9 + zh), 0.04, ((2.0 * (0.9 + zh)) / 0.04).round() as usize + 1).unwrap();
    let t = Axis::new(0.0, 0.02, ((zh * zh + 4.0f64).sqrt() / 0.02) as usize + 8).unwrap();
    let g = rp_cylinder(&f, 1.0, 0.15, Axis::angles(16).unwrap(), z, t, &quad()).unwrap();
    let target = Grid3::new([12, 12, 4], [0.1, 0.1, 0.4], [-0.55, -0.55, -0.6]).unwrap();
    let cfg = CylinderConfig {
        backprojection: BackprojectionConfig { window: ZWindow::Symmetric { half_width: zh }, extrapolation: Extrapolation::Quadratic },
        ..CylinderConfig::default()
    };
    let direct = invert_cylinder_with(&g, &target, &cfg).unwrap();
    let mut rc = ReconstructConfig::new(target);
    rc.cylinder = cfg;
    let rec = reconstruct(&GeometryData::Cylinder(pressure_from_rp(&g)), &rc).unwrap();
    // derivative then trapezoid: O(dt²) per row, not exact
    let e = rel_l2(&rec.mean_map.values, &direct.values);
    println!("pressure vs direct {e:e}");
    assert!(e < 2e-2, "{e}");
    let stages: Vec<&str> = rec.stages.iter().map(|s| s.stage).collect();
    assert_eq!(stages, ["rp_from_pressure", "invert_cylinder", "deconvolve_fixed_radius"]);
}

#[test]
fn sphere_reconstruction_recovers_field() {
    let grid = Grid3::cube(32, 0.85).unwrap();
    let f = sample_phantom(&phantom(), &grid);
    let g = rp_sphere(&f, 1.5, 0.15, SphereDirections::lat_long(24, 48).unwrap(), Axis::new(0.0, 0.02, 160).unwrap(), &quad()).unwrap();
    let rec = reconstruct(&GeometryData::Sphere(pressure_from_rp(&g)), &ReconstructConfig::new(grid)).unwrap();
    let m = circular_mean_fixed_radius(&f, 0.15, &grid, 128).unwrap();
    let em = rel_l2(&rec.mean_map.values, &m.values);
    let ef = rel_l2(rec.field.values(), f.values());
    println!("mean map {em:e} field {ef:e} min|J0| {}", rec.report.min_abs_j0);
    assert!(em < 0.1, "{em}");
    assert!(ef < 0.25, "{ef}");
}
