//! End-to-end runs of the `gflow` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gflow::harness::read_trajectory_csv;

const BIN: &str = env!("CARGO_BIN_EXE_gflow");

const SPECTRAL: &str = "\
target.spectrum = 4 1
init.kind = spectral
init.sigma0 = 1 1
alphas = 1e-3 1e-6
epsilon = 0.5
grid.kind = auto
grid.samples_per_interval = 64
";

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn gflow(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("RICCATI_WORKERS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn run(cfg: &Path, out: &Path, sub: &str, envs: &[(&str, &str)]) -> Output {
    gflow(
        &["--quiet", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), sub],
        envs,
    )
}

fn sorted_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

/// `I_k = [a, b]` lines of a schedule or verify report.
fn parse_intervals(text: &str) -> Vec<(usize, f64, f64)> {
    text.lines()
        .filter_map(|l| {
            let rest = l.strip_prefix("I_")?;
            let (k, rest) = rest.split_once(" = [")?;
            let (a, rest) = rest.split_once(", ")?;
            let b = rest.split(']').next()?;
            Some((k.parse().ok()?, a.parse().ok()?, b.parse().ok()?))
        })
        .collect()
}

#[test]
fn solve_is_byte_deterministic_across_runs_and_worker_counts() {
    let dir = scratch("determinism");
    let cfg = write_config(&dir, &format!("{SPECTRAL}oracle = true\n"));
    let (a, b, c) = (dir.join("a"), dir.join("b"), dir.join("c"));
    assert!(run(&cfg, &a, "solve", &[]).status.success());
    assert!(run(&cfg, &b, "solve", &[]).status.success());
    assert!(run(&cfg, &c, "solve", &[("RICCATI_WORKERS", "1")]).status.success());
    let files = sorted_files(&a);
    assert_eq!(files.len(), 2);
    assert_eq!(files, sorted_files(&b));
    assert_eq!(files, sorted_files(&c));
}

#[test]
fn seeded_random_init_is_deterministic_and_recorded() {
    let dir = scratch("seeded");
    let cfg = write_config(
        &dir,
        "target.spectrum = 3 2 1\ntarget.rotation_seed = 4\ninit.kind = random\ninit.rows = 3\n\
         init.cols = 5\ninit.seed = 99\nalphas = 1e-4\nepsilon = 0.5\ngrid.kind = log\n\
         grid.start = 1e-2\ngrid.stop = 20\ngrid.points = 40\n",
    );
    let (a, b) = (dir.join("a"), dir.join("b"));
    assert!(run(&cfg, &a, "solve", &[]).status.success());
    assert!(run(&cfg, &b, "solve", &[]).status.success());
    assert_eq!(sorted_files(&a), sorted_files(&b));
    let text = fs::read_to_string(a.join("traj_alpha=1e-4.csv")).unwrap();
    assert!(text.lines().any(|l| l == "# target_seed=4 init_seed=99"));
}

#[test]
fn trajectory_rows_have_sorted_eigenvalues() {
    let dir = scratch("sorted");
    let cfg = write_config(
        &dir,
        "target.spectrum = 5 3 1 0\ntarget.rotation_seed = 3\ninit.kind = perturbed_identity\n\
         init.amplitude = 0.2\ninit.seed = 5\nalphas = 1e-3 1e-7\nepsilon = 0.5\ngrid.kind = linear\n\
         grid.start = 0\ngrid.stop = 15\ngrid.points = 301\n",
    );
    assert!(run(&cfg, &dir, "solve", &[]).status.success());
    for tag in ["1e-3", "1e-7"] {
        let csv = read_trajectory_csv(&dir.join(format!("traj_alpha={tag}.csv"))).unwrap();
        assert_eq!(
            csv.header,
            ["t", "loss", "sig1", "sig2", "sig3", "sig4", "dist_k0", "dist_k1", "dist_k2", "dist_k3"]
        );
        assert_eq!(csv.rows.len(), 301);
        for row in &csv.rows {
            assert!(row[2..6].windows(2).all(|p| p[1] <= p[0] + 1e-9), "{row:?}");
        }
    }
}

#[test]
fn verify_agrees_with_the_emitted_trajectories() {
    let dir = scratch("roundtrip");
    let cfg = write_config(&dir, SPECTRAL);
    let out = run(&cfg, &dir, "verify", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run(&cfg, &dir, "solve", &[]).status.success());
    for tag in ["1e-3", "1e-6"] {
        let report = fs::read_to_string(dir.join(format!("verify_alpha={tag}.txt"))).unwrap();
        let verified = report.lines().any(|l| l == "overall: pass");
        let csv = read_trajectory_csv(&dir.join(format!("traj_alpha={tag}.csv"))).unwrap();
        let t = csv.column("t").unwrap();
        let mut intervals = parse_intervals(&report);
        // The report repeats the intervals after the verification lines.
        intervals.sort_by_key(|iv| iv.0);
        intervals.dedup_by_key(|iv| iv.0);
        assert_eq!(intervals.len(), 2);
        let mut recomputed = true;
        for (k, a, b) in intervals {
            let dist = csv.column(&format!("dist_k{k}")).unwrap();
            let mut checked = 0;
            for (ti, di) in t.iter().zip(&dist) {
                if *ti >= a * (1.0 - 1e-11) && *ti <= b {
                    recomputed &= *di <= 0.5;
                    checked += 1;
                }
            }
            assert!(checked >= 10, "I_{k} sampled {checked} times");
        }
        assert_eq!(verified, recomputed, "alpha {tag}");
    }
}

#[test]
fn schedule_reports_the_fixture_windows() {
    let dir = scratch("schedule");
    let cfg = write_config(&dir, &SPECTRAL.replace("alphas = 1e-3 1e-6", "alphas = 1e-6 0.3"));
    assert!(run(&cfg, &dir, "schedule", &[]).status.success());
    let text = fs::read_to_string(dir.join("schedule_alpha=1e-6.txt")).unwrap();
    let ivs = parse_intervals(&text);
    assert_eq!(ivs.len(), 2);
    assert!((ivs[0].1 - 2.160155807595500).abs() < 1e-9);
    assert!((ivs[0].2 - 6.561181688702164).abs() < 1e-9);
    assert!((ivs[1].1 - 8.640623230382000).abs() < 1e-9);
    assert!(ivs[1].2.is_infinite());
    let refused = fs::read_to_string(dir.join("schedule_alpha=3e-1.txt")).unwrap();
    assert!(refused.contains("admissible: false"));
    assert!(refused.contains("reason: log-ratio"));
}

#[test]
fn sweep_writes_slopes_only_for_several_alphas() {
    let dir = scratch("sweep");
    let many = write_config(
        &dir,
        "target.spectrum = 4 1\ninit.kind = identity\nalphas = 1e-2 1e-4 1e-6 1e-8 1e-10\n\
         epsilon = 0.5\ngrid.kind = log\ngrid.start = 1e-2\ngrid.stop = 10\ngrid.points = 10\n",
    );
    assert!(run(&many, &dir.join("many"), "sweep", &[]).status.success());
    let text = fs::read_to_string(dir.join("many/sweep.csv")).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "alpha,mode,t05,t50,t95,slope_t50");
    for line in text.lines().filter(|l| l.starts_with(|c: char| c.is_ascii_digit())) {
        let cols: Vec<&str> = line.split(',').collect();
        let sigma = if cols[1] == "1" { 4.0 } else { 1.0 };
        let slope: f64 = cols[5].parse().unwrap();
        assert!((slope * 2.0 * sigma - 1.0).abs() < 0.02, "{line}");
    }

    let single = fs::read_to_string(&many).unwrap().replace("1e-2 1e-4 1e-6 1e-8 1e-10", "1e-4");
    fs::create_dir_all(dir.join("one")).unwrap();
    let single = write_config(&dir.join("one"), &single);
    assert!(run(&single, &dir.join("one"), "sweep", &[]).status.success());
    let text = fs::read_to_string(dir.join("one/sweep.csv")).unwrap();
    assert!(text.lines().any(|l| l == "alpha,mode,t05,t50,t95"));
}

#[test]
fn exit_codes() {
    let dir = scratch("exit");
    let ok = write_config(&dir, SPECTRAL);
    assert_eq!(run(&ok, &dir, "schedule", &[]).status.code(), Some(0));

    // Usage errors.
    assert_eq!(gflow(&["frobnicate"], &[]).status.code(), Some(1));
    assert_eq!(gflow(&["solve"], &[]).status.code(), Some(1));

    // No admissible alpha.
    let bad_alpha = dir.join("bad_alpha");
    fs::create_dir_all(&bad_alpha).unwrap();
    let cfg = write_config(&bad_alpha, &SPECTRAL.replace("alphas = 1e-3 1e-6", "alphas = 0.3 0.49"));
    let out = run(&cfg, &bad_alpha, "verify", &[]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    // Internal: malformed config, missing file, bad worker override.
    let broken = dir.join("broken");
    fs::create_dir_all(&broken).unwrap();
    let cfg = write_config(&broken, &format!("{SPECTRAL}colour = blue\n"));
    assert_eq!(run(&cfg, &broken, "solve", &[]).status.code(), Some(3));
    let missing = dir.join("does-not-exist.cfg");
    assert_eq!(run(&missing, &broken, "solve", &[]).status.code(), Some(3));
    assert_eq!(run(&ok, &dir, "solve", &[("RICCATI_WORKERS", "zero")]).status.code(), Some(3));
    let cfg = write_config(&broken, &SPECTRAL.replace("4 1", "4 -1"));
    assert_eq!(run(&cfg, &broken, "solve", &[]).status.code(), Some(3));
}

#[test]
fn target_and_init_can_come_from_files() {
    let dir = scratch("files");
    fs::write(dir.join("y.txt"), "2 2\n3 1\n1 2\n").unwrap();
    fs::write(dir.join("u.txt"), "2 2\n1.4142135623730951 0\n0.7071067811865476 1.5811388300841898\n").unwrap();
    let cfg = write_config(
        &dir,
        "target.file = y.txt\ninit.kind = file\ninit.file = u.txt\nalphas = 1e-2\nepsilon = 0.5\n\
         grid.kind = linear\ngrid.start = 0\ngrid.stop = 4\ngrid.points = 9\n",
    );
    assert!(run(&cfg, &dir, "solve", &[]).status.success());
    let csv = read_trajectory_csv(&dir.join("traj_alpha=1e-2.csv")).unwrap();
    // W(0) = 0.01 · [[2,1],[1,3]].
    let loss0 = csv.column("loss").unwrap()[0];
    let expect = 0.25 * ((3.0_f64 - 0.02).powi(2) + 2.0 * 0.99_f64.powi(2) + (2.0_f64 - 0.03).powi(2));
    assert!((loss0 - expect).abs() < 1e-12);
}
