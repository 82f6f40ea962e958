use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use patcirc_cli::io::{read_metrics, sha256_hex, Manifest, Volume};

const SMALL: &str = "\
geometry.kind = \"cylinder\"
grid.n = 24
target.n = 16
target.nz = 4
data.n_theta = 8
data.window = 2.0
";

fn patcirc(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patcirc"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn patcirc")
}

fn config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn zero_phantom_gives_zero_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "z.toml", &format!("{SMALL}phantom.kind = \"zero\"\n"));
    let out = dir.path().join("out");
    ok(&patcirc(&["pipeline", "--quiet"], &cfg, &out));
    let sino = Volume::read(&out.join("sinogram.rvl")).unwrap();
    assert!(sino.values.iter().all(|&v| v == 0.0));
    let m = Manifest::read(&out.join("sinogram.manifest")).unwrap();
    assert_eq!(m.get("payload.sha256").unwrap(), sha256_hex(&vec![0u8; 8 * sino.values.len()]));
    for f in ["mean_map.rvl", "field.rvl"] {
        assert!(Volume::read(&out.join(f)).unwrap().values.iter().all(|&v| v == 0.0), "{f}");
    }
    let rows = read_metrics(&out.join("metrics_invert.csv")).unwrap();
    let errors: Vec<f64> = rows.iter().filter(|r| r.name == "rel_l2_error").map(|r| r.value).collect();
    assert_eq!(errors, vec![0.0, 0.0]);
}

#[test]
fn noise_changes_values_only() {
    let dir = tempfile::tempdir().unwrap();
    let clean = config(dir.path(), "a.toml", SMALL);
    let noisy = config(dir.path(), "b.toml", &format!("{SMALL}noise.sigma = 0.05\nnoise.seed = 3\n"));
    let (oa, ob) = (dir.path().join("a"), dir.path().join("b"));
    ok(&patcirc(&["forward", "--quiet"], &clean, &oa));
    ok(&patcirc(&["forward", "--quiet"], &noisy, &ob));
    let a = fs::read(oa.join("sinogram.rvl")).unwrap();
    let b = fs::read(ob.join("sinogram.rvl")).unwrap();
    assert_eq!(a.len(), b.len());
    let va = Volume::from_bytes(&a).unwrap();
    let header = a.len() - 8 * va.values.len();
    assert_eq!(a[..header], b[..header]);
    assert_ne!(a[header..], b[header..]);
}

#[test]
fn same_seed_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.toml", &format!("{SMALL}noise.sigma = 0.05\nnoise.seed = 11\n"));
    let (oa, ob) = (dir.path().join("a"), dir.path().join("b"));
    ok(&patcirc(&["pipeline", "--quiet"], &cfg, &oa));
    ok(&patcirc(&["pipeline", "--quiet"], &cfg, &ob));
    for f in ["sinogram.rvl", "sinogram.manifest", "mean_map.rvl", "field.rvl", "field.manifest"] {
        assert_eq!(fs::read(oa.join(f)).unwrap(), fs::read(ob.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn invert_rejects_other_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    ok(&patcirc(&["forward", "--quiet"], &config(dir.path(), "a.toml", SMALL), &out));
    let other = config(dir.path(), "b.toml", &format!("{SMALL}geometry.r_det = 0.2\n"));
    let o = patcirc(&["invert"], &other, &out);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("geometry mismatch") && err.contains("geometry.r_det"), "{err}");
}

#[test]
fn invert_rejects_tampered_payload() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "a.toml", SMALL);
    let out = dir.path().join("out");
    ok(&patcirc(&["forward", "--quiet"], &cfg, &out));
    let p = out.join("sinogram.rvl");
    let mut bytes = fs::read(&p).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&p, bytes).unwrap();
    let o = patcirc(&["invert"], &cfg, &out);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("checksum mismatch"));
}

#[test]
fn bad_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = patcirc(&["forward"], &config(dir.path(), "a.toml", &format!("{SMALL}geometry.r_det = -1.0\n")), &out);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("geometry.r_det"));
    let o = patcirc(&["forward"], &config(dir.path(), "b.toml", "grid.nx = 3\n"), &out);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nx"));
}

#[test]
fn printed_metrics_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = patcirc(&["phantom"], &config(dir.path(), "a.toml", SMALL), &out);
    ok(&o);
    let printed = String::from_utf8_lossy(&o.stdout);
    let rows = read_metrics(&out.join("metrics_phantom.csv")).unwrap();
    assert_eq!(printed.lines().count(), rows.len());
    for r in &rows {
        assert!(printed.contains(&format!("{},{}", r.stage, r.name)));
    }
}

#[test]
fn selftest_passes_and_catches_a_wrong_constant() {
    let dir = tempfile::tempdir().unwrap();
    let o = patcirc(&["selftest", "--quiet"], &config(dir.path(), "a.toml", ""), &dir.path().join("clean"));
    ok(&o);
    let mutated = config(dir.path(), "m.toml", "mutation.cylinder_scale = 2.0\n");
    let o = patcirc(&["selftest", "--quiet"], &mutated, &dir.path().join("mutated"));
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("FAIL cylinder round trip"), "{err}");
    let rows = read_metrics(&dir.path().join("mutated/metrics_selftest.csv")).unwrap();
    assert!(rows.iter().any(|r| r.name == "cylinder round trip" && r.value > 0.5));
}
