use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kernel_aimc::features::{read_projection, sample, FeatureMapSpec, Sampler};
use kernel_aimc::exact::KernelId;

fn kaimc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kaimc")).args(args).env_remove("KAIMC_MANIFEST").output().expect("spawn kaimc")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn assert_usage_error(o: &Output) {
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("kaimc: "), "{err}");
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn approx_error_writes_header_and_rows() {
    let o = kaimc(&["approx-error", "--kernel", "rbf", "--sampler", "orf", "--backend", "exact", "--seeds", "0..3", "--subset", "60"]);
    let text = stdout(&o);
    assert!(text.starts_with("# kernel-aimc ") && text.lines().next().unwrap().ends_with(" approx-error"));
    assert!(text.lines().any(|l| l.starts_with("# config: {")));
    assert!(text.lines().any(|l| l == "# seeds: 0 1 2"));
    let rows = data_lines(&text);
    assert_eq!(rows[0], "dataset,kernel,sampler,log2_ratio,backend,mean_err,std_err,seeds");
    assert_eq!(rows.len(), 6);
    for (i, r) in rows[1..].iter().enumerate() {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f[3], (i + 1).to_string());
        assert!(f[5].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn self_check_reports_zero_error() {
    let text = stdout(&kaimc(&["approx-error", "--self-check", "--backend", "exact", "--seeds", "0..2", "--ratios", "1,2", "--subset", "50"]));
    for r in &data_lines(&text)[1..] {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f[5].parse::<f64>().unwrap(), 0.0, "{r}");
    }
}

#[test]
fn ridge_reports_accuracy_and_delta() {
    let text = stdout(&kaimc(&["ridge", "--kernel", "rbf", "--sampler", "rff", "--seeds", "0..2", "--ratio", "3"]));
    let rows = data_lines(&text);
    assert_eq!(rows[0], "dataset,kernel,sampler,backend,accuracy_mean,accuracy_std,delta_vs_exact");
    assert_eq!(rows.len(), 3);
    for r in &rows[1..] {
        let acc: f64 = r.split(',').nth(4).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
}

#[test]
fn attention_emits_error_table() {
    let text = stdout(&kaimc(&["attention", "-L", "32", "--d-head", "4", "--m", "32,64", "--sampler", "orf", "--features", "positive,relu", "--backend", "exact", "--seeds", "0..2"]));
    let rows = data_lines(&text);
    assert!(rows[0].starts_with("m,sampler,features,backend,metric"));
    assert!(rows.iter().any(|r| r.contains(",relu,") && r.contains("attention_mse")));
    assert!(!rows.iter().any(|r| r.contains(",relu,") && r.contains("kernel_mse")));
}

#[test]
fn cost_csv_and_linearity() {
    let a = stdout(&kaimc(&["cost", "--csv", "-L", "100000", "--profile", "aimc"]));
    let b = stdout(&kaimc(&["cost", "--csv", "-L", "300000", "--profile", "AIMC"]));
    let field = |t: &str, i: usize| -> f64 { t.lines().nth(1).unwrap().split(',').nth(i).unwrap().parse().unwrap() };
    assert_eq!(a.lines().next().unwrap(), "L,d,m,profile,latency_ms,energy_mJ");
    approx::assert_relative_eq!(field(&b, 4), 3.0 * field(&a, 4), max_relative = 1e-3);
    approx::assert_relative_eq!(field(&b, 5), 3.0 * field(&a, 5), max_relative = 1e-3);
}

#[test]
fn cost_reads_custom_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("hw.txt");
    fs::write(&p, "# custom\nslow 1 10\nfast 100 50 4\n").unwrap();
    let text = stdout(&kaimc(&["cost", "--csv", "--profiles", p.to_str().unwrap(), "-L", "1", "--d", "1", "--m", "1"]));
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains(",slow,") && rows[1].contains(",fast,"));
}

#[test]
fn sample_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("omega.bin");
    stdout(&kaimc(&["sample", "--kernel", "arccos0", "--sampler", "sorf", "--d", "6", "--m", "20", "--seed", "4", "--out", out.to_str().unwrap()]));
    let back = read_projection(std::io::BufReader::new(fs::File::open(&out).unwrap())).unwrap();
    let orig = sample(FeatureMapSpec::new(KernelId::ArcCos0, Sampler::Sorf, 6, 20, 4)).unwrap();
    assert_eq!(back.omega, orig.omega);
}

#[test]
fn errors_are_one_line_with_status_two() {
    assert_usage_error(&kaimc(&["approx-error", "--dataset", "/no/such/file.libsvm"]));
    assert_usage_error(&kaimc(&["approx-error", "--ratios", "17"]));
    assert_usage_error(&kaimc(&["approx-error", "--kernel", "laplace"]));
    assert_usage_error(&kaimc(&["cost", "--profile", "tpu"]));
    assert_usage_error(&kaimc(&["ridge", "--backend", "optical"]));
    assert_usage_error(&kaimc(&["frobnicate"]));
    assert_usage_error(&kaimc(&["cost", "--eta"]));
}

#[test]
fn failed_run_leaves_no_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res.csv");
    let o = kaimc(&["approx-error", "--dataset", "/missing.csv", "--out", out.to_str().unwrap()]);
    assert_usage_error(&o);
    assert!(!Path::new(&out).exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn out_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res.csv");
    let args = ["approx-error", "--kernel", "arccos0", "--sampler", "rff", "--seeds", "0..2", "--ratios", "1", "--subset", "40"];
    let printed = stdout(&kaimc(&args));
    let mut with_out = args.to_vec();
    with_out.extend(["--out", out.to_str().unwrap()]);
    stdout(&kaimc(&with_out));
    assert_eq!(data_lines(&fs::read_to_string(&out).unwrap()), data_lines(&printed));
}
