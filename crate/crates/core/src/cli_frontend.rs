//! Batch CLI: `encode`, `decode`, `analyze`, `report`. Results are
//! files; the only hidden input is the encode-time nonce, and `--nonce`
//! pins that for byte-reproducible runs.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::media_io::{read_yuv, write_yuv};
use crate::pipeline::{decode, encode, EncodeJob, EncoderConfig};
use crate::quality_metrics::{
    analyze_sequences, ledger_csv, metrics_csv, parse_ledger_csv, report_csv,
    DEFAULT_EDGE_THRESHOLD,
};
use crate::selective_crypto::{ClassSet, EncryptionConfig, Keystream};

#[derive(Parser)]
#[command(
    name = "sevc",
    about = "Toy VVC-style codec with selective encryption of syntax elements",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a raw .yuv clip into a container, optionally enciphering
    /// selected syntax elements.
    Encode(EncodeArgs),
    /// Decode a container back to raw .yuv (scrambled without the key).
    Decode(DecodeArgs),
    /// Per-frame PSNR/SSIM/EDR between two raw .yuv files.
    Analyze(AnalyzeArgs),
    /// Aggregate bitrate change and encryption space into one CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct EncodeArgs {
    /// Raw planar 4:2:0 input, 8-bit, no header.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    /// Number of frames to read from the input.
    #[arg(long)]
    frames: usize,
    #[arg(long, default_value_t = 24)]
    qp: u8,
    #[arg(long, default_value_t = 8)]
    gop: u8,
    #[arg(long, default_value_t = 32)]
    ctu: usize,
    /// Comma list of element classes: ipm,mvdv,mvds,rsign. Empty = plain.
    #[arg(long, default_value = "")]
    encrypt: String,
    /// 32 hex chars; falls back to the SEVC_KEY environment variable.
    #[arg(long, env = "SEVC_KEY")]
    key: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Optional per-class encryption ledger CSV.
    #[arg(long)]
    ledger: Option<PathBuf>,
    /// Pin the stream nonce (normally random) for reproducible output.
    #[arg(long)]
    nonce: Option<u64>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// 32 hex chars; falls back to SEVC_KEY. Optional: decoding without
    /// it yields scrambled frames, never an error.
    #[arg(long, env = "SEVC_KEY")]
    key: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long = "test")]
    test: PathBuf,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    height: usize,
    #[arg(long)]
    frames: usize,
    #[arg(long)]
    csv: PathBuf,
    #[arg(long, default_value_t = DEFAULT_EDGE_THRESHOLD)]
    edge_threshold: u8,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    plain_bits: u64,
    #[arg(long)]
    enc_bits: u64,
    #[arg(long)]
    ledger: PathBuf,
    #[arg(long)]
    csv: PathBuf,
}

/// Binary entry point; maps errors to a nonzero exit.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Encode(args) => cmd_encode(&args),
        Command::Decode(args) => cmd_decode(&args),
        Command::Analyze(args) => cmd_analyze(&args),
        Command::Report(args) => cmd_report(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn open_reader(path: &Path) -> Result<BufReader<fs::File>> {
    Ok(BufReader::new(fs::File::open(path)?))
}

fn cmd_encode(args: &EncodeArgs) -> Result<()> {
    let start = Instant::now();
    let classes = ClassSet::parse(&args.encrypt)?;
    let keystream = if classes.is_empty() {
        None
    } else {
        let key = args.key.as_deref().ok_or_else(|| {
            Error::InvalidConfig(
                "encryption requested but no key given (use --key or SEVC_KEY)".into(),
            )
        })?;
        Some(Keystream::from_hex_key(key)?)
    };
    let nonce = args.nonce.unwrap_or_else(rand::random);

    let mut reader = open_reader(&args.input)?;
    let frames = read_yuv(&mut reader, args.width, args.height, args.frames, args.ctu)?;
    let job = EncodeJob {
        frames,
        config: EncoderConfig::new(args.qp, args.gop, args.ctu),
        encryption: EncryptionConfig { classes, nonce },
    };
    let out = encode(&job, keystream.as_ref())?;
    fs::write(&args.out, &out.bitstream)?;
    if let Some(path) = &args.ledger {
        fs::write(path, ledger_csv(&out.ledger))?;
    }

    println!(
        "encoded {} frames, {} payload bits ({} container bytes) in {:.3}s",
        args.frames,
        out.payload_bits,
        out.bitstream.len(),
        start.elapsed().as_secs_f64()
    );
    let total = out.ledger.total();
    println!(
        "encrypted: {} elements, {} bits total",
        total.elements, total.bits
    );
    for class in crate::selective_crypto::ElementClass::ALL {
        let c = out.ledger.class_total(class);
        println!("  {}: {} elements, {} bits", class.name(), c.elements, c.bits);
    }
    Ok(())
}

fn cmd_decode(args: &DecodeArgs) -> Result<()> {
    let start = Instant::now();
    let keystream = match args.key.as_deref() {
        Some(k) => Some(Keystream::from_hex_key(k)?),
        None => None,
    };
    let bytes = fs::read(&args.input)?;
    let out = decode(&bytes, keystream.as_ref())?;
    let mut sink = Vec::new();
    let written = write_yuv(&out.frames, &mut sink)?;
    fs::write(&args.out, &sink)?;
    println!(
        "decoded {} frames ({}x{}) to {} ({} bytes) in {:.3}s",
        out.frames.len(),
        out.header.width,
        out.header.height,
        args.out.display(),
        written,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let mut ref_reader = open_reader(&args.reference)?;
    let mut test_reader = open_reader(&args.test)?;
    // No CTU padding for analysis: metrics run on the raw frames.
    let reference = read_yuv(&mut ref_reader, args.width, args.height, args.frames, 1)?;
    let test = read_yuv(&mut test_reader, args.width, args.height, args.frames, 1)?;
    let report = analyze_sequences(&reference, &test, args.edge_threshold)?;
    fs::write(&args.csv, metrics_csv(&report, None))?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    println!(
        "analyzed {} frames: mean ssim {:.4}, mean edr {:.4}",
        report.frame_count(),
        mean(&report.ssim),
        mean(&report.edr)
    );
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let ledger = parse_ledger_csv(&fs::read_to_string(&args.ledger)?)?;
    let csv = report_csv(args.plain_bits, args.enc_bits, &ledger)?;
    fs::write(&args.csv, &csv)?;
    let delta = crate::quality_metrics::bitrate_change(args.plain_bits, args.enc_bits)?;
    println!("bitrate_delta {delta:.6}");
    Ok(())
}
