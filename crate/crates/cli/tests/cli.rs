use std::path::Path;
use std::process::{Command, Output};

fn trbu(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trbu"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_then_complete_at_full_rate() {
    let dir = tempfile::tempdir().unwrap();
    let o = trbu(
        &["synth", "--dims", "4,5,4,5", "--rank", "2", "--seed", "3", "--out", "t.dt1", "--factors", "t.tr"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("t.tr").exists());
    let o = trbu(&["complete", "--input", "t.dt1", "--sr", "1.0", "--out", "x.dt1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let re: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("re "))
        .expect("re line")
        .parse()
        .unwrap();
    assert!(re <= 1e-12, "{out}");
    let a = std::fs::read(dir.path().join("t.dt1")).unwrap();
    let b = std::fs::read(dir.path().join("x.dt1")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn complete_recovers_from_samples() {
    let dir = tempfile::tempdir().unwrap();
    let o = trbu(&["synth", "--dims", "6,6,6,6", "--rank", "2", "--seed", "1", "--out", "t.dt1"], dir.path());
    assert!(o.status.success());
    let o = trbu(
        &["complete", "--input", "t.dt1", "--sr", "0.6", "--seed", "2", "--out", "x.dt1", "--trace", "trace.csv"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let re: f64 = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("re "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(re < 1e-6, "re {re}");
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("iter,rc,mu,seconds\n"));
}

#[test]
fn truncated_tensor_is_rejected_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = trbu(&["synth", "--dims", "3,4,5", "--rank", "1", "--out", "t.dt1"], dir.path());
    assert!(o.status.success());
    let path = dir.path().join("t.dt1");
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 11]).unwrap();
    let o = trbu(&["complete", "--input", "t.dt1", "--sr", "0.5", "--out", "x.dt1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("t.dt1"), "{err}");
    assert!(err.contains(&format!("byte {}", bytes.len() - 11)), "{err}");
    assert!(!dir.path().join("x.dt1").exists());
    assert!(!dir.path().join("x.dt1.partial").exists());
}

#[test]
fn bad_arguments_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = trbu(&["complete", "--input", "missing.dt1", "--sr", "0.5", "--out", "x.dt1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.dt1"));
    let o = trbu(&["synth", "--dims", "3,3", "--rank", "1,2,3", "--out", "t.dt1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = trbu(&["phase", "--preset", "nope", "--dry-run"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = trbu(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fig2_grid_has_published_shape() {
    let dir = tempfile::tempdir().unwrap();
    let o = trbu(&["phase", "--preset", "fig2", "--dry-run", "--out", "cells.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("cells.csv")).unwrap();
    let rows: Vec<(usize, String)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (r, sr) = l.split_once(',').unwrap();
            (r.parse().unwrap(), sr.to_string())
        })
        .collect();
    assert_eq!(rows.len(), 18 * 19);
    let mut ranks: Vec<usize> = rows.iter().map(|r| r.0).collect();
    ranks.dedup();
    assert_eq!(ranks, (2..=19).collect::<Vec<_>>());
    let srs: Vec<&str> = rows.iter().take(19).map(|r| r.1.as_str()).collect();
    assert_eq!(srs.first(), Some(&"0.05"));
    assert_eq!(srs.last(), Some(&"0.95"));
}

#[test]
fn runs_are_deterministic_given_seed() {
    let dir = tempfile::tempdir().unwrap();
    for tag in ["a", "b"] {
        let t = format!("t{tag}.dt1");
        let f = format!("t{tag}.tr");
        let x = format!("x{tag}.dt1");
        let tr = format!("trace{tag}.csv");
        let c = format!("curve{tag}.csv");
        assert!(trbu(&["synth", "--dims", "4,4,4,4", "--rank", "2", "--seed", "9", "--out", &t, "--factors", &f], dir.path())
            .status
            .success());
        let o = trbu(
            &["complete", "--input", &t, "--sr", "0.5", "--seed", "4", "--out", &x, "--trace", &tr, "--no-timing"],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let o = trbu(
            &["curve", "--dims", "4,4,4,4", "--rank", "1", "--sr", "0.4,0.8", "--trials", "2", "--seed", "5", "--out", &c, "--no-timing"],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for (a, b) in [("ta.dt1", "tb.dt1"), ("ta.tr", "tb.tr"), ("xa.dt1", "xb.dt1"), ("tracea.csv", "traceb.csv"), ("curvea.csv", "curveb.csv")] {
        let x = std::fs::read(dir.path().join(a)).unwrap();
        let y = std::fs::read(dir.path().join(b)).unwrap();
        assert_eq!(x, y, "{a} vs {b}");
    }
    let csv = std::fs::read_to_string(dir.path().join("curvea.csv")).unwrap();
    assert!(csv.starts_with("l,sr,trial,seed,re,success,iters,seconds\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
}

#[test]
fn mask_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let truth = trbu::Factors::random(&[6, 6, 6, 6], &[2; 4], 12).unwrap().synthesize();
    let mask = trbu::ObservationMask::uniform(truth.dims(), 800, 1).unwrap();
    trbu::io::write_tensor(dir.path().join("obs.dt1"), &mask.project(&truth, 0.0).unwrap()).unwrap();
    trbu::io::write_tensor(dir.path().join("truth.dt1"), &truth).unwrap();
    trbu::io::write_mask(dir.path().join("m.mk1"), &mask).unwrap();
    let o = trbu(
        &["complete", "--input", "obs.dt1", "--mask", "m.mk1", "--truth", "truth.dt1", "--out", "x.dt1"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let re: f64 = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("re "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(re < 1e-6, "re {re}");

    let wrong = trbu::ObservationMask::uniform(&[6, 6, 36], 10, 1).unwrap();
    trbu::io::write_mask(dir.path().join("w.mk1"), &wrong).unwrap();
    let o = trbu(&["complete", "--input", "obs.dt1", "--mask", "w.mk1", "--out", "y.dt1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("y.dt1").exists());
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("solver.cfg"), "# quick run\nmax_iters = 3\nlog10_mu0 = -2\n").unwrap();
    assert!(trbu(&["synth", "--dims", "4,4,4", "--rank", "1", "--out", "t.dt1"], dir.path()).status.success());
    let o = trbu(
        &["complete", "--input", "t.dt1", "--sr", "0.5", "--config", "solver.cfg", "--l", "1", "--out", "x.dt1"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("3 iterations"), "{}", stdout(&o));
    std::fs::write(dir.path().join("bad.cfg"), "beta = 3\n").unwrap();
    let o = trbu(&["complete", "--input", "t.dt1", "--sr", "0.5", "--config", "bad.cfg", "--out", "x2.dt1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = trbu(&["complete", "--input", "t.dt1", "--sr", "0.5", "--preset", "image", "--out", "x3.dt1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn incoherence_and_certify_print_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = trbu(&["incoherence", "--dims", "8,8,8", "--rank", "2", "--seed", "1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("core,n,r_in,r_out,mu,bound_base\n"));
    assert_eq!(out.lines().count(), 4);

    let o = trbu(&["certify", "--dims", "8,8", "--rank", "1", "--sr", "0.6", "--trials", "5"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 6);
    assert!(stderr(&o).contains("/5 draws"));
}

#[test]
fn vdt_round_trip_through_ppm() {
    let dir = tempfile::tempdir().unwrap();
    let img = trbu::Tensor::from_fn(&[16, 16, 3], |i| ((i[0] * 16 + i[1]) * 3 + i[2]) as f64 % 256.0 / 255.0).unwrap();
    trbu::io::write_ppm(dir.path().join("a.ppm"), &img).unwrap();
    let o = trbu(&["vdt", "--input", "a.ppm", "--out", "a.dt1", "--plan", "dyadic:4"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let t: trbu::Tensor = trbu::io::read_tensor(dir.path().join("a.dt1")).unwrap();
    assert_eq!(t.dims(), &[4, 4, 4, 4, 3]);
    let o = trbu(&["vdt", "--input", "a.dt1", "--out", "b.ppm", "--plan", "dyadic:4", "--inverse"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(dir.path().join("a.ppm")).unwrap(),
        std::fs::read(dir.path().join("b.ppm")).unwrap()
    );
    let o = trbu(&["vdt", "--input", "a.ppm", "--out", "c.dt1", "--plan", "kodim04"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
