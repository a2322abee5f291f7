//! End-to-end CLI checks through the built binary.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const KEY_HEX: &str = "00112233445566778899aabbccddeeff";

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_sevc")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("SEVC_KEY")
        .output()
        .expect("spawn sevc")
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sevc-cli-{}-{tag}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_clip(dir: &Path) -> (PathBuf, usize, usize, usize) {
    let clip = &common::corpus()[1]; // checker_pan, 64x64
    let frames = 9usize;
    let frame_bytes = clip.bytes.len() / clip.frames;
    let path = dir.join("clip.yuv");
    fs::write(&path, &clip.bytes[..frames * frame_bytes]).unwrap();
    (path, clip.width, clip.height, frames)
}

#[test]
fn encode_decode_analyze_report_flow() {
    let dir = workdir("flow");
    let (clip, w, h, n) = write_clip(&dir);
    let (ws, hs, ns) = (w.to_string(), h.to_string(), n.to_string());

    let plain = dir.join("plain.sevc");
    let out = run(&[
        "encode", "--input", clip.to_str().unwrap(), "--width", &ws, "--height", &hs,
        "--frames", &ns, "--qp", "24", "--gop", "4", "--encrypt", "", "--nonce", "7",
        "--out", plain.to_str().unwrap(), "--ledger", dir.join("plain_ledger.csv").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // Plain encode: ledger rows all zero.
    let ledger = fs::read_to_string(dir.join("plain_ledger.csv")).unwrap();
    for line in ledger.lines().skip(1) {
        assert!(line.ends_with(",0,0"), "nonzero row in plain ledger: {line}");
    }

    let enc = dir.join("enc.sevc");
    let out = run(&[
        "encode", "--input", clip.to_str().unwrap(), "--width", &ws, "--height", &hs,
        "--frames", &ns, "--qp", "24", "--gop", "4", "--encrypt", "ipm,mvdv,mvds,rsign",
        "--key", KEY_HEX, "--nonce", "7", "--out", enc.to_str().unwrap(),
        "--ledger", dir.join("ledger.csv").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    // Full encryption: every class appears in the ledger.
    let ledger = fs::read_to_string(dir.join("ledger.csv")).unwrap();
    for class in ["luma_ipm", "mvd_value", "mvd_sign", "residual_sign"] {
        let total: u64 = ledger
            .lines()
            .filter(|l| l.starts_with(class))
            .map(|l| l.split(',').nth(2).unwrap().parse::<u64>().unwrap())
            .sum();
        assert!(total > 0, "class {class} never encrypted");
    }

    // Correct-key decode matches the plain decode bit-exactly.
    let dec_plain = dir.join("dec_plain.yuv");
    let dec_keyed = dir.join("dec_keyed.yuv");
    let dec_nokey = dir.join("dec_nokey.yuv");
    assert!(run(&["decode", "--in", plain.to_str().unwrap(), "--out", dec_plain.to_str().unwrap()])
        .status
        .success());
    assert!(run(&[
        "decode", "--in", enc.to_str().unwrap(), "--key", KEY_HEX,
        "--out", dec_keyed.to_str().unwrap(),
    ])
    .status
    .success());
    assert_eq!(fs::read(&dec_plain).unwrap(), fs::read(&dec_keyed).unwrap());

    // No key: still succeeds, visibly different output.
    assert!(run(&["decode", "--in", enc.to_str().unwrap(), "--out", dec_nokey.to_str().unwrap()])
        .status
        .success());
    assert_ne!(fs::read(&dec_plain).unwrap(), fs::read(&dec_nokey).unwrap());

    // Analyze a file against itself: ssim 1.0 and edr 0.0 on every row.
    let self_csv = dir.join("self.csv");
    let out = run(&[
        "analyze", "--ref", clip.to_str().unwrap(), "--test", clip.to_str().unwrap(),
        "--width", &ws, "--height", &hs, "--frames", &ns,
        "--csv", self_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let csv = fs::read_to_string(&self_csv).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), n);
    for row in rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[1], "99.99");
        assert_eq!(fields[2], "1.000000");
        assert_eq!(fields[3], "0.000000");
    }

    // Report aggregates the ledger and the bit counts.
    let report_csv = dir.join("report.csv");
    let out = run(&[
        "report", "--plain-bits", "100", "--enc-bits", "102",
        "--ledger", dir.join("ledger.csv").to_str().unwrap(),
        "--csv", report_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report = fs::read_to_string(&report_csv).unwrap();
    assert!(report.contains("bitrate_delta,0.020000"));
    let enc_total: u64 = report
        .lines()
        .find(|l| l.starts_with("enc_space,total"))
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .unwrap();
    let manual: u64 = ledger
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(enc_total, manual);

    fs::remove_dir_all(&dir).ok();
}

#[test]
fn missing_key_with_encryption_is_a_usage_error() {
    let dir = workdir("nokey");
    let (clip, w, h, n) = write_clip(&dir);
    let out = run(&[
        "encode", "--input", clip.to_str().unwrap(), "--width", &w.to_string(),
        "--height", &h.to_string(), "--frames", &n.to_string(),
        "--encrypt", "ipm", "--out", dir.join("x.sevc").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("key"));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn key_env_fallback_works() {
    let dir = workdir("env");
    let (clip, w, h, n) = write_clip(&dir);
    let enc = dir.join("env.sevc");
    let out = Command::new(bin())
        .args([
            "encode", "--input", clip.to_str().unwrap(), "--width", &w.to_string(),
            "--height", &h.to_string(), "--frames", &n.to_string(), "--encrypt", "rsign",
            "--nonce", "3", "--out", enc.to_str().unwrap(),
        ])
        .env("SEVC_KEY", KEY_HEX)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn bad_magic_is_an_error_exit() {
    let dir = workdir("magic");
    let bogus = dir.join("bogus.sevc");
    fs::write(&bogus, b"not a sevc stream at all").unwrap();
    let out = run(&["decode", "--in", bogus.to_str().unwrap(), "--out", dir.join("o.yuv").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn analyze_rejects_mismatched_dimensions() {
    let dir = workdir("dims");
    let (clip, w, h, _) = write_clip(&dir);
    // Claim fewer frames than needed for the other file: truncated error.
    let out = run(&[
        "analyze", "--ref", clip.to_str().unwrap(), "--test", clip.to_str().unwrap(),
        "--width", &(w * 2).to_string(), "--height", &h.to_string(), "--frames", "9",
        "--csv", dir.join("m.csv").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    fs::remove_dir_all(&dir).ok();
}
