//! End-to-end checks of the binary: spawns the real executable, inspects
//! exit codes, stdout and the files each subcommand writes.

use gqarch_cli::config::RunConfig;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gqarch"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn assert_code(out: &Output, want: i32) {
    assert_eq!(
        out.status.code(),
        Some(want),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn simulate_to(path: &Path, extra: &[&str]) {
    let mut args = vec![
        "simulate", "--n", "400", "--seed", "5", "--gamma", "0.15", "--omega", "0.8",
        "--a", "0.1", "--d", "0.3", "--c", "0.25",
    ];
    args.extend_from_slice(extra);
    let path_s = path.to_str().unwrap().to_string();
    args.extend_from_slice(&["--out", &path_s]);
    let out = run(&args);
    assert_code(&out, 0);
}

#[test]
fn simulate_is_deterministic_and_replayable_from_its_own_header() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.csv");
    let second = dir.path().join("second.csv");
    simulate_to(&first, &[]);
    simulate_to(&second, &[]);
    let a = std::fs::read(&first).unwrap();
    assert_eq!(a, std::fs::read(&second).unwrap(), "reruns must be byte-identical");

    // The echoed header is a complete recipe: feeding it back as a config
    // file regenerates the same bytes with no flags at all.
    let text = std::fs::read_to_string(&first).unwrap();
    let rc = RunConfig::from_comment_block(&text).expect("header should parse");
    assert_eq!(rc.command, "simulate");
    let cfg = dir.path().join("replay.cfg");
    let lines: Vec<String> = rc
        .comment_lines()
        .into_iter()
        .filter(|l| !l.starts_with("command ="))
        .collect();
    std::fs::write(&cfg, lines.join("\n") + "\n").unwrap();
    let replay = dir.path().join("replay.csv");
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        replay.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    assert_eq!(a, std::fs::read(&replay).unwrap());
}

#[test]
fn flags_override_config_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "n = 400\nseed = 5\ngamma = 0.15\nomega = 0.8\na = 0.1\nd = 0.3\nc = 0.25\n",
    )
    .unwrap();
    let from_cfg = dir.path().join("cfg.csv");
    let out = run(&[
        "simulate", "--config", cfg.to_str().unwrap(),
        "--out", from_cfg.to_str().unwrap(),
    ]);
    assert_code(&out, 0);

    // Same file, seed overridden on the command line: different draws,
    // and the header records the seed that was actually used.
    let overridden = dir.path().join("override.csv");
    let out = run(&[
        "simulate", "--config", cfg.to_str().unwrap(), "--seed", "6",
        "--out", overridden.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let a = std::fs::read_to_string(&from_cfg).unwrap();
    let b = std::fs::read_to_string(&overridden).unwrap();
    assert_ne!(a, b);
    assert!(b.contains("# seed = 6"), "{b}");

    let baseline = dir.path().join("flags.csv");
    simulate_to(&baseline, &[]);
    assert_eq!(a, std::fs::read_to_string(&baseline).unwrap());
}

#[test]
fn unknown_config_keys_and_bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "gamma = 0.1\nbogus = 1\n").unwrap();
    let out = run(&[
        "feasibility", "--config", cfg.to_str().unwrap(),
        "--omega", "1", "--a", "0", "--d", "0.2", "--c", "0.1",
    ]);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let out = run(&["estimate", "--no-such-flag"]);
    assert_code(&out, 2);

    // Required value missing entirely.
    let out = run(&["simulate", "--n", "50"]);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--gamma"));
}

#[test]
fn estimate_writes_a_parseable_csv_row() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("series.csv");
    simulate_to(&series, &[]);
    let fit = dir.path().join("fit.csv");
    let out = run(&[
        "estimate", "--input", series.to_str().unwrap(),
        "--starts", "2", "--max-iters", "200",
        "--out", fit.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("objective ="), "{stdout}");
    assert!(stdout.contains("gamma"), "{stdout}");

    let text = std::fs::read_to_string(&fit).unwrap();
    let mut lines = text.lines().skip_while(|l| l.starts_with('#'));
    let header = lines.next().unwrap();
    let row = lines.next().unwrap();
    assert_eq!(header.split(',').count(), row.split(',').count());
    let cols: Vec<&str> = header.split(',').collect();
    let vals: Vec<&str> = row.split(',').collect();
    assert_eq!(cols[0], "n");
    assert_eq!(vals[0], "400");
    let d_hat: f64 = vals[cols.iter().position(|c| *c == "d_hat").unwrap()]
        .parse()
        .unwrap();
    assert!((0.0..=0.5).contains(&d_hat), "d_hat = {d_hat}");
    for name in ["se_gamma", "objective", "kappa4_hat", "b2", "converged"] {
        assert!(cols.contains(&name), "missing column {name}");
    }
}

#[test]
fn data_problems_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();

    let out = run(&["estimate", "--input", "/no/such/file.csv"]);
    assert_code(&out, 3);

    // A file without a presample block cannot be fit in presample mode.
    let series = dir.path().join("series.csv");
    simulate_to(&series, &[]);
    let out = run(&[
        "estimate", "--input", series.to_str().unwrap(),
        "--mode", "presample", "--starts", "1", "--max-iters", "50",
    ]);
    assert_code(&out, 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("presample"));

    let mangled = dir.path().join("mangled.csv");
    std::fs::write(&mangled, "r\n0.5\nnot a number\n").unwrap();
    let out = run(&["estimate", "--input", mangled.to_str().unwrap()]);
    assert_code(&out, 3);
}

#[test]
fn infeasible_points_are_gated_unless_forced() {
    // c = 0.9 at d = 0.45 puts the squared lag mass far above 1 - gamma.
    let args = [
        "simulate", "--n", "50", "--gamma", "0.5", "--omega", "1",
        "--a", "0", "--d", "0.45", "--c", "0.9",
    ];
    let out = run(&args);
    assert_code(&out, 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));

    let mut forced = args.to_vec();
    forced.extend_from_slice(&["--force", "true"]);
    let out = run(&forced);
    assert_code(&out, 0);
}

#[test]
fn feasibility_reports_both_moment_conditions() {
    let out = run(&[
        "feasibility", "--gamma", "0.1", "--omega", "1",
        "--a", "0.05", "--d", "0.25", "--c", "0.2",
    ]);
    assert_code(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("l2 (b2 < 1 - gamma): satisfied"), "{stdout}");
    assert!(stdout.contains("l4"), "{stdout}");
    assert!(stdout.contains("feasible for simulation: yes"), "{stdout}");

    let out = run(&[
        "feasibility", "--gamma", "0.1", "--omega", "1",
        "--a", "0.05", "--d", "0.25", "--c", "0.2",
        "--innovation", "student:4",
    ]);
    assert_code(&out, 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("infinite"));
}

#[test]
fn diagnose_writes_acf_and_slope() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("long.csv");
    let out = run(&[
        "simulate", "--n", "8000", "--seed", "11", "--gamma", "0.1", "--omega", "1",
        "--a", "0.05", "--d", "0.35", "--c", "0.25",
        "--out", series.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let acf = dir.path().join("acf.csv");
    let out = run(&[
        "diagnose", "--input", series.to_str().unwrap(),
        "--max-lag", "30", "--out", acf.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("d_implied"));
    let text = std::fs::read_to_string(&acf).unwrap();
    assert!(text.contains("# slope = "), "{text}");
    let rows = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 32, "header plus one row per lag 0..=30");
    assert!(text.contains("\n0,"), "lag-0 variance row present");
}

#[test]
fn estimate_on_a_simulated_design_lands_near_truth() {
    // Simulate the gamma = 0.7 design and refit it; a single path only
    // supports a loose check, a few sampling sd wide.
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("s.csv");
    let series_s = series.to_str().unwrap().to_string();
    let sim: Vec<&str> = vec![
        "simulate", "--gamma", "0.7", "--omega", "0.1", "--a", "-0.2",
        "--c", "0.2", "--d", "0.2", "--n", "1000", "--seed", "42",
        "--out", &series_s,
    ];
    assert_code(&run(&sim), 0);
    let first = std::fs::read(&series).unwrap();
    let data_rows = String::from_utf8_lossy(&first)
        .lines()
        .filter(|l| !l.starts_with('#') && *l != "r")
        .count();
    assert_eq!(data_rows, 1000);
    assert_code(&run(&sim), 0);
    assert_eq!(std::fs::read(&series).unwrap(), first, "rerun not bit-identical");

    let fit = dir.path().join("fit.csv");
    let out = run(&[
        "estimate", "--in", &series_s, "--mode", "finite-past",
        "--out", fit.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let text = std::fs::read_to_string(&fit).unwrap();
    let row = text
        .lines()
        .find(|l| l.starts_with("1000,finite-past,"))
        .expect("result row");
    let gamma_hat: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!((gamma_hat - 0.7).abs() < 0.3, "gamma_hat {gamma_hat}");
}

#[test]
fn nonpositive_acf_is_a_numerical_failure() {
    // Alternating large and small magnitudes force negative odd-lag
    // autocovariances of the squares, which the slope fit cannot log.
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("alt.csv");
    let mut text = String::from("r\n");
    for t in 0..60 {
        text += if t % 2 == 0 { "2.0\n" } else { "0.1\n" };
    }
    std::fs::write(&series, text).unwrap();
    let acf_path = dir.path().join("acf.csv");
    let out = run(&[
        "diagnose", "--input", series.to_str().unwrap(),
        "--max-lag", "3", "--out", acf_path.to_str().unwrap(),
    ]);
    assert_code(&out, 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("lag"));
    // The autocovariance table itself is still written, just without
    // slope lines.
    let text = std::fs::read_to_string(&acf_path).unwrap();
    assert!(text.contains("lag,autocov"));
    assert!(!text.contains("# slope"));
}

#[test]
fn mc_csv_has_the_documented_schema_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("mc1.csv");
    let out2 = dir.path().join("mc2.csv");
    let base = [
        "mc", "--omega0", "1", "--d0", "0.25", "--n", "200", "--reps", "3",
        "--starts", "2", "--max-iters", "150",
    ];
    for (workers, path) in [("1", &out1), ("2", &out2)] {
        let mut args = base.to_vec();
        let path_s = path.to_str().unwrap().to_string();
        args.extend_from_slice(&["--workers", workers, "--out", &path_s]);
        let out = run(&args);
        assert_code(&out, 0);
    }
    let read_rows = |p: &Path| -> Vec<String> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(str::to_string)
            .collect()
    };
    let rows1 = read_rows(&out1);
    assert_eq!(
        rows1[0],
        "omega0,d0,n,reps,rmse_gamma,rmse_omega,rmse_a,rmse_d,rmse_c,\
         bias_gamma,bias_omega,bias_a,bias_d,bias_c,failures,seed"
    );
    assert_eq!(rows1.len(), 2, "one header and one cell");
    // The worker count changes scheduling, never the numbers.
    assert_eq!(rows1, read_rows(&out2));

    let out3 = dir.path().join("mc3.csv");
    let mut args = base.to_vec();
    let path_s = out3.to_str().unwrap().to_string();
    args.extend_from_slice(&["--workers", "1", "--out", &path_s]);
    let out = run(&args);
    assert_code(&out, 0);
    assert_eq!(std::fs::read(&out1).unwrap(), std::fs::read(&out3).unwrap());
}
