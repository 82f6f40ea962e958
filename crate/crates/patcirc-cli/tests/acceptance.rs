//! Acceptance criteria 1 to 10, one PASS/FAIL line each.
//!
//! `ACCEPTANCE_ONLY=3,8` restricts the run to the listed criteria.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use patcirc_cli::checks::{self, Outcome, Scale};

const FULL: Scale = Scale::Full;

fn criterion(id: u32) -> Vec<Outcome> {
    let run = |r: Result<Outcome, patcirc::Error>| r.unwrap_or_else(|e| failed("error", e.to_string()));
    match id {
        1 => vec![run(checks::fourier_relation(FULL))],
        2 => vec![run(checks::bateman(FULL))],
        3 => vec![run(checks::filtration_lemma(FULL))],
        4 => vec![run(checks::cylinder_round_trip(FULL, 1.0))],
        5 => vec![run(checks::plane_round_trip(FULL))],
        6 => vec![run(checks::sphere_round_trip(FULL))],
        7 => vec![run(checks::deconvolution(FULL))],
        8 => vec![run(checks::circle_pair_lemma(FULL))],
        9 => {
            let t0 = Instant::now();
            let mut v = vec![run(checks::unfolding_exact(FULL)), run(checks::unfolding_simulated(FULL).map(|(o, _)| o))];
            // the two halves share one runtime limit
            let total = t0.elapsed().as_secs_f64() * 1e3;
            v.push(Outcome { name: "unfolding total runtime", value: 0.0, tolerance: 0.0, wall_ms: total, budget_ms: Some(300e3), detail: String::new() });
            v
        }
        10 => vec![
            run(checks::odd_planar_zero(FULL)),
            run(checks::hilbert_involution(FULL)),
            run(checks::forward_linearity(FULL)),
            cli_determinism(),
        ],
        _ => unreachable!(),
    }
}

fn failed(name: &'static str, detail: String) -> Outcome {
    Outcome { name, value: f64::INFINITY, tolerance: 0.0, wall_ms: 0.0, budget_ms: None, detail }
}

const DEMO: &str = "\
geometry.kind = \"cylinder\"
grid.n = 24
target.n = 16
target.nz = 4
data.n_theta = 8
data.window = 2.0
noise.sigma = 0.01
noise.seed = 7
";

/// Two `forward` runs of the binary with the same config and seed must write identical bytes.
fn cli_determinism() -> Outcome {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = dir.path().join("demo.toml");
    std::fs::write(&cfg, DEMO).expect("write config");
    let mut differing = 0.0;
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_patcirc"))
            .args(["forward", "--quiet", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .expect("spawn patcirc");
        if !status.success() {
            return failed("CLI determinism", format!("patcirc forward exited with {status}"));
        }
        runs.push(out);
    }
    for file in ["sinogram.rvl", "sinogram.manifest"] {
        let read = |d: &Path| std::fs::read(d.join(file)).unwrap_or_default();
        let (a, b) = (read(&runs[0]), read(&runs[1]));
        if a.is_empty() || a != b {
            differing += 1.0;
        }
    }
    Outcome {
        name: "CLI determinism",
        value: differing,
        tolerance: 0.0,
        wall_ms: t0.elapsed().as_secs_f64() * 1e3,
        budget_ms: None,
        detail: "files differing between runs".into(),
    }
}

fn main() -> ExitCode {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    if std::env::args().skip(1).any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut all_pass = true;
    for id in 1..=10u32 {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let outcomes = criterion(id);
        let pass = outcomes.iter().all(Outcome::pass);
        all_pass &= pass;
        println!("criterion {id}: {}", if pass { "PASS" } else { "FAIL" });
        for o in &outcomes {
            println!("    {}", o.line());
        }
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
