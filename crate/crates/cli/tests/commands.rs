use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use saccadic_core::engine::{load_prior, read_scanpath_csv, PlausibilityReference};
use saccadic_core::eyedata::write_fixation_log;
use saccadic_core::statmodel::ks2d_statistic;
use saccadic_core::synthetic::{spatial_mixtures, structured_saliency, synthetic_fixation_log, LogSpec};
use saccadic_core::{
    fixation_saliency_map, parse_fixation_log, saccades_from_sequence, scanpath_plausibility, FixationSequence,
    Geometry, JointSaccadeDistribution, Prior, SaccadeSample,
};
use tempfile::TempDir;

const W: usize = 640;
const H: usize = 480;
const AMP_MAX: &str = "30";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_saccadic"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "saccadic {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn group_log(group: &str, amp_scale: f64, seed: u64) -> Vec<FixationSequence> {
    let spec = LogSpec {
        width: W,
        height: H,
        ppd: 28.0,
        observers: 8,
        images: 4,
        fixations: 16,
        group_id: group.into(),
        amp_scale,
        seed,
    };
    synthetic_fixation_log(&spatial_mixtures(), &spec)
}

fn write_log(dir: &Path, name: &str, seqs: &[FixationSequence]) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, write_fixation_log(seqs).unwrap()).unwrap();
    path
}

fn write_saliency(dir: &Path) -> PathBuf {
    let path = dir.join("saliency.sgf");
    structured_saliency(W, H, 6, 3).unwrap().save(&path).unwrap();
    path
}

/// Estimates group `g` into `dir` and returns the spatial-set path.
fn estimate_group(dir: &Path) -> PathBuf {
    let log = write_log(dir, "g.csv", &group_log("g", 1.0, 1));
    let out = dir.join("dist");
    ok(&["estimate", "--log", s(&log), "--width", "640", "--height", "480", "--amp-max", AMP_MAX, "--out", s(&out)]);
    out.join("g_spatial.json")
}

#[test]
fn estimate_fans_out_over_groups() {
    let dir = TempDir::new().unwrap();
    let mut seqs = Vec::new();
    for (k, g) in ["children", "adults", "elders", "teens"].iter().enumerate() {
        seqs.extend(group_log(g, 1.0, k as u64));
    }
    let log = write_log(dir.path(), "log.csv", &seqs);
    let out = dir.path().join("out");
    let stdout =
        ok(&["estimate", "--log", s(&log), "--width", "640", "--height", "480", "--amp-max", AMP_MAX, "--out", s(&out)]);
    for g in ["children", "adults", "elders", "teens"] {
        assert!(matches!(load_prior(out.join(format!("{g}_spatial.json"))).unwrap(), Prior::Spatial(_)));
        assert!(matches!(load_prior(out.join(format!("{g}_pooled.json"))).unwrap(), Prior::Single(_)));
        assert!(stdout.contains(&format!("{g}: saccades per cell")));
    }
    assert_eq!(fs::read_dir(&out).unwrap().count(), 8);
}

#[test]
fn estimate_1x1_writes_pooled_only() {
    let dir = TempDir::new().unwrap();
    let log = write_log(dir.path(), "log.csv", &group_log("g", 1.0, 1));
    let out = dir.path().join("out");
    ok(&["estimate", "--log", s(&log), "--width", "640", "--height", "480", "--grid", "1x1", "--amp-max", AMP_MAX, "--out", s(&out)]);
    let names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(names, vec!["g_pooled.json".to_string()]);
}

#[test]
fn missing_column_exits_with_code_2() {
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("log.csv");
    fs::write(&log, "observer_id,image_id,group_id,index,x\no,i,g,0,1\n").unwrap();
    let out = run(&["estimate", "--log", s(&log), "--width", "640", "--height", "480", "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`y`"));
}

#[test]
fn starved_cells_fail_with_a_report() {
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("log.csv");
    fs::write(&log, "observer_id,image_id,group_id,index,x,y,duration_ms\no,i,g,0,10,10,\no,i,g,1,20,20,\no,i,g,2,30,10,\no,i,g,3,40,20,\n").unwrap();
    let out = run(&["estimate", "--log", s(&log), "--width", "640", "--height", "480", "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("starved cells (8)"), "{err}");
}

fn generate(dir: &Path, dist: &Path, sal: &Path, out: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(out);
    let mut args = vec!["generate", "--saliency", s(sal), "--distribution", s(dist), "--out", s(&out)];
    args.extend_from_slice(extra);
    if !extra.contains(&"--seed") {
        args.extend(["--seed", "42"]);
    }
    ok(&args);
    out
}

#[test]
fn generate_defaults_and_determinism() {
    let dir = TempDir::new().unwrap();
    let dist = estimate_group(dir.path());
    let sal = write_saliency(dir.path());
    let a = generate(dir.path(), &dist, &sal, "a", &[]);
    let b = generate(dir.path(), &dist, &sal, "b", &[]);
    let csv = fs::read_to_string(a.join("scanpaths.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 300);
    assert_eq!(csv, fs::read_to_string(b.join("scanpaths.csv")).unwrap());
    assert_eq!(fs::read(a.join("scanpath_saliency.sgf")).unwrap(), fs::read(b.join("scanpath_saliency.sgf")).unwrap());
    let png = |d: &Path| image::open(d.join("scanpath_saliency.png")).unwrap().to_rgb8();
    let (pa, pb) = (png(&a), png(&b));
    assert_eq!(pa.dimensions(), (W as u32, H as u32));
    assert_eq!(pa.as_raw(), pb.as_raw());

    let c = generate(dir.path(), &dist, &sal, "c", &["--seed", "43"]);
    assert_ne!(csv, fs::read_to_string(c.join("scanpaths.csv")).unwrap());
}

#[test]
fn generate_accepts_ablation_flags() {
    let dir = TempDir::new().unwrap();
    let dist = estimate_group(dir.path());
    let sal = write_saliency(dir.path());
    let full = fs::read_to_string(generate(dir.path(), &dist, &sal, "full", &[]).join("scanpaths.csv")).unwrap();
    for (name, flags) in [
        ("uniform", vec!["--uniform-prior"]),
        ("nsv", vec!["--grid", "1x1"]),
        ("jac", vec!["--jacobian-correction", "--nc", "3", "--memory-span", "4"]),
    ] {
        let out = generate(dir.path(), &dist, &sal, name, &flags);
        let csv = fs::read_to_string(out.join("scanpaths.csv")).unwrap();
        assert_eq!(csv.lines().count(), 301);
        assert_ne!(csv, full, "{name} should change the scanpaths");
    }
}

#[test]
fn generate_needs_a_seed() {
    let dir = TempDir::new().unwrap();
    let sal = write_saliency(dir.path());
    let out = run(&["generate", "--saliency", s(&sal), "--uniform-prior", "--out", s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn col(header: &[String], row: &[String], name: &str) -> f64 {
    let i = header.iter().position(|h| h == name).unwrap();
    row[i].parse().unwrap()
}

#[test]
fn evaluate_self_prediction_is_perfect() {
    let dir = TempDir::new().unwrap();
    let seqs = group_log("g", 1.0, 1);
    let log = write_log(dir.path(), "log.csv", &seqs);
    let fix: Vec<_> = seqs.iter().filter(|s| s.image_id == "img00").flat_map(|s| s.fixations.iter().copied()).collect();
    let human = fixation_saliency_map(&fix, Geometry::new(W, H), 28.0).unwrap();
    let hp = dir.path().join("human.sgf");
    human.save(&hp).unwrap();
    let out = dir.path().join("eval");
    ok(&[
        "evaluate", "--prediction", &format!("img00:self={}", s(&hp)), "--human", &format!("img00={}", s(&hp)),
        "--fixations", s(&log), "--width", "640", "--height", "480", "--seed", "1", "--out", s(&out),
    ]);
    let (header, rows) = read_csv(&out.join("metrics.csv"));
    assert_eq!(rows.len(), 1);
    assert!((col(&header, &rows[0], "cc") - 1.0).abs() < 1e-9);
    assert!((col(&header, &rows[0], "sim") - 1.0).abs() < 1e-9);
    assert!(col(&header, &rows[0], "emd").abs() < 1e-9);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 1);
}

#[test]
fn evaluate_batches_images_and_models() {
    let dir = TempDir::new().unwrap();
    let log = write_log(dir.path(), "log.csv", &group_log("g", 1.0, 1));
    let mut args: Vec<String> = vec!["evaluate".into()];
    for img in 0..3 {
        for (m, seed) in [("a", 10), ("b", 20)] {
            let p = dir.path().join(format!("{m}{img}.sgf"));
            structured_saliency(W, H, 5, seed + img).unwrap().save(&p).unwrap();
            args.extend(["--prediction".into(), format!("img{img:02}:{m}={}", p.display())]);
        }
    }
    let out = dir.path().join("eval");
    args.extend(
        ["--fixations", s(&log), "--width", "640", "--height", "480", "--seed", "1", "--out", s(&out)].map(String::from),
    );
    let o = bin().args(&args).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.join("metrics.csv"));
    assert_eq!(rows.len(), 6);
    assert_eq!(&header[..3], ["image_id", "group_id", "model"]);
    let keys: Vec<(String, String)> = rows.iter().map(|r| (r[0].clone(), r[2].clone())).collect();
    assert_eq!(keys[0], ("img00".to_string(), "a".to_string()));
    assert_eq!(keys[5], ("img02".to_string(), "b".to_string()));
}

#[test]
fn evaluate_reference_dist_adds_kl_columns() {
    let dir = TempDir::new().unwrap();
    let dist = estimate_group(dir.path());
    let sal = write_saliency(dir.path());
    let gen = generate(dir.path(), &dist, &sal, "gen", &["--image-id", "img00"]);
    let log = dir.path().join("g.csv");
    let out = dir.path().join("eval");
    ok(&[
        "evaluate", "--prediction", &format!("img00:saccadic={}", s(&gen.join("scanpaths.csv"))),
        "--fixations", s(&log), "--width", "640", "--height", "480", "--reference-dist", s(&dist),
        "--seed", "1", "--out", s(&out),
    ]);
    let (header, rows) = read_csv(&out.join("metrics.csv"));
    assert_eq!(header.len(), 11);
    assert_eq!(&header[9..], ["kl_amplitude", "kl_joint"]);

    let reference = match load_prior(&dist).unwrap() {
        Prior::Spatial(set) => set.pooled().unwrap(),
        _ => unreachable!(),
    };
    let paths = read_scanpath_csv(fs::File::open(gen.join("scanpaths.csv")).unwrap(), "img00").unwrap();
    let direct = scanpath_plausibility(&paths, PlausibilityReference::Distribution(&reference), 28.0).unwrap();
    assert!((col(&header, &rows[0], "kl_amplitude") - direct.kl_amplitude).abs() < 1e-12);
    assert!((col(&header, &rows[0], "kl_joint") - direct.kl_joint).abs() < 1e-12);
}

#[test]
fn evaluate_reports_both_geometries_on_mismatch() {
    let dir = TempDir::new().unwrap();
    let log = write_log(dir.path(), "log.csv", &group_log("g", 1.0, 1));
    let p = dir.path().join("small.sgf");
    structured_saliency(320, 240, 3, 1).unwrap().save(&p).unwrap();
    let out = run(&[
        "evaluate", "--prediction", &format!("img00:m={}", s(&p)), "--fixations", s(&log), "--width", "640",
        "--height", "480", "--seed", "1", "--out", s(&dir.path().join("o")),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("320x240") && err.contains("640x480"), "{err}");
}

fn sweep(dir: &Path, dist: &Path, sal: &Path, name: &str, reps: &str) -> (Vec<String>, Vec<Vec<String>>, String) {
    let out = dir.join(name);
    ok(&[
        "sweep-nc", "--saliency", s(sal), "--distribution", s(dist), "--reference", s(dist), "--nc-range", "1-9",
        "--repetitions", reps, "--seed", "5", "--out", s(&out),
    ]);
    let (h, r) = read_csv(&out.join("sweep_nc.csv"));
    (h, r, fs::read_to_string(out.join("sweep_nc.csv")).unwrap())
}

#[test]
fn sweep_schema_is_stable_and_deterministic() {
    let dir = TempDir::new().unwrap();
    let dist = estimate_group(dir.path());
    let sal = write_saliency(dir.path());
    let (h1, r1, text1) = sweep(dir.path(), &dist, &sal, "one", "1");
    let (_, _, again) = sweep(dir.path(), &dist, &sal, "again", "1");
    let (h3, r3, _) = sweep(dir.path(), &dist, &sal, "three", "3");
    assert_eq!(text1, again);
    assert_eq!(h1, h3);
    assert_eq!(r1.len(), 9);
    assert_eq!(r3.len(), 9);
    assert_eq!(r1.iter().map(|r| r[0].clone()).collect::<Vec<_>>(), (1..=9).map(|n| n.to_string()).collect::<Vec<_>>());
    assert_ne!(r1, r3);
    // Without ground truth the metric columns stay empty.
    assert!(r1.iter().all(|r| r[5..].iter().all(String::is_empty)));
}

#[test]
fn sweep_rejects_out_of_range_nc() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "sweep-nc", "--saliency", "x.sgf", "--uniform-prior", "--reference", "r.json", "--nc-range", "0-65", "--seed", "1",
        "--out", s(dir.path()),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("1 ≤ start ≤ end ≤ 64"));
}

fn analyze(dir: &Path, seqs: &[FixationSequence]) -> (PathBuf, Vec<Vec<String>>) {
    let log = write_log(dir, "log.csv", seqs);
    let out = dir.join("analysis");
    ok(&["analyze", "--log", s(&log), "--width", "640", "--height", "480", "--amp-max", AMP_MAX, "--seed", "3", "--out", s(&out)]);
    let (_, ks) = read_csv(&out.join("ks_matrix.csv"));
    (out, ks)
}

#[test]
fn analyze_two_groups() {
    let dir = TempDir::new().unwrap();
    let mut seqs = group_log("a", 1.0, 1);
    seqs.extend(group_log("b", 1.0, 2));
    let (out, ks) = analyze(dir.path(), &seqs);
    let (header, crowns) = read_csv(&out.join("crowns.csv"));
    assert_eq!(crowns.len(), 2);
    assert_eq!(header.len(), 13);
    for row in &crowns {
        let total: f64 = row[2..12].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
    assert_eq!(ks.len(), 4);
    for row in ks.iter().filter(|r| r[0] == r[1]) {
        assert_eq!(row[3].parse::<f64>().unwrap(), 1.0, "diagonal {row:?}");
    }
    for g in ["a", "b"] {
        let d = JointSaccadeDistribution::load(out.join(format!("{g}_joint.json"))).unwrap();
        let total: f64 = d.bin_probabilities().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        let (_, amp) = read_csv(&out.join(format!("{g}_amplitude.csv")));
        assert_eq!(amp.len(), d.grid().amp_bins);
    }
}

#[test]
fn analyze_single_group_is_self_consistent() {
    let dir = TempDir::new().unwrap();
    let (_, ks) = analyze(dir.path(), &group_log("solo", 1.0, 1));
    assert_eq!(ks.len(), 1);
    assert!(ks[0][3].parse::<f64>().unwrap() > 0.99);
}

/// Fraction of label permutations whose statistic reaches the observed one.
fn permutation_p(a: &[SaccadeSample], b: &[SaccadeSample], n_perm: usize) -> f64 {
    use rand::{Rng, SeedableRng};
    let observed = ks2d_statistic(a, b);
    let mut pool: Vec<SaccadeSample> = a.iter().chain(b).copied().collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let mut hits = 0;
    for _ in 0..n_perm {
        for i in (1..pool.len()).rev() {
            pool.swap(i, rng.random_range(0..=i));
        }
        if ks2d_statistic(&pool[..a.len()], &pool[a.len()..]) >= observed {
            hits += 1;
        }
    }
    (hits + 1) as f64 / (n_perm + 1) as f64
}

#[test]
fn analyze_separates_different_groups() {
    let dir = TempDir::new().unwrap();
    let near = group_log("near", 0.5, 1);
    let far = group_log("far", 1.8, 2);
    let mut seqs = near.clone();
    seqs.extend(far.clone());
    let (_, ks) = analyze(dir.path(), &seqs);
    for row in ks.iter().filter(|r| r[0] != r[1]) {
        assert!(row[3].parse::<f64>().unwrap() < 0.001, "{row:?}");
    }

    // The log round trip drops the first fixation of every trial.
    let geometry = Geometry::new(W, H);
    let sample = |seqs: &[FixationSequence]| -> Vec<SaccadeSample> {
        let text = write_fixation_log(seqs).unwrap();
        parse_fixation_log(&text, geometry)
            .unwrap()
            .iter()
            .flat_map(|s| saccades_from_sequence(s, 28.0).unwrap())
            .take(150)
            .collect()
    };
    let oracle = permutation_p(&sample(&near), &sample(&far), 1999);
    assert!(oracle < 0.001, "permutation p = {oracle}");
}
