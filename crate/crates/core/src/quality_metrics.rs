//! Evaluation metrics: PSNR, SSIM, the edge differential ratio, bitrate
//! change, and encryption-space accounting, plus the CSV formats the CLI
//! emits.
//!
//! All pixel metrics run on the luma plane over the pre-padding window.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::media_io::FrameBuffer;
use crate::pipeline::{ClassCount, EncryptionLedger, FrameType};
use crate::selective_crypto::ElementClass;

/// Sentinel written to CSV when MSE is zero (infinite PSNR).
pub const PSNR_INF_SENTINEL: f64 = 99.99;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SAMPLE_PEAK: f64 = 255.0;

/// Default Sobel gradient threshold on the 8-bit gradient scale.
pub const DEFAULT_EDGE_THRESHOLD: u8 = 64;

fn check_same_window(a: &FrameBuffer, b: &FrameBuffer) -> Result<(usize, usize)> {
    if a.orig_width != b.orig_width || a.orig_height != b.orig_height {
        return Err(Error::DimensionMismatch(
            a.orig_width,
            a.orig_height,
            b.orig_width,
            b.orig_height,
        ));
    }
    Ok((a.orig_width, a.orig_height))
}

/// Luma PSNR in dB; identical frames report `f64::INFINITY` (serialized
/// as 99.99).
pub fn psnr(reference: &FrameBuffer, test: &FrameBuffer) -> Result<f64> {
    let (w, h) = check_same_window(reference, test)?;
    let mut sse = 0u64;
    for y in 0..h {
        for x in 0..w {
            let d = reference.y_plane.get(x, y) as i64 - test.y_plane.get(x, y) as i64;
            sse += (d * d) as u64;
        }
    }
    if sse == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse as f64 / (w * h) as f64;
    Ok(10.0 * (SAMPLE_PEAK * SAMPLE_PEAK / mse).log10())
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - mid;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in k.iter_mut() {
        *v /= sum;
    }
    k
}

/// Mean local SSIM over an 11x11 Gaussian window (sigma 1.5), luma only.
pub fn ssim(reference: &FrameBuffer, test: &FrameBuffer) -> Result<f64> {
    let (w, h) = check_same_window(reference, test)?;
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::FrameTooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let kernel = gaussian_kernel();
    let c1 = (SSIM_K1 * SAMPLE_PEAK) * (SSIM_K1 * SAMPLE_PEAK);
    let c2 = (SSIM_K2 * SAMPLE_PEAK) * (SSIM_K2 * SAMPLE_PEAK);

    // Separable pass: horizontal Gaussian over the five moment planes,
    // then the vertical pass while sliding the window.
    let planes: [&dyn Fn(usize, usize) -> f64; 5] = [
        &|x, y| reference.y_plane.get(x, y) as f64,
        &|x, y| test.y_plane.get(x, y) as f64,
        &|x, y| {
            let v = reference.y_plane.get(x, y) as f64;
            v * v
        },
        &|x, y| {
            let v = test.y_plane.get(x, y) as f64;
            v * v
        },
        &|x, y| reference.y_plane.get(x, y) as f64 * test.y_plane.get(x, y) as f64,
    ];
    let out_w = w - SSIM_WINDOW + 1;
    let out_h = h - SSIM_WINDOW + 1;
    let mut hpass = vec![0.0f64; 5 * out_w * h];
    for (pi, plane) in planes.iter().enumerate() {
        let dst = &mut hpass[pi * out_w * h..(pi + 1) * out_w * h];
        for y in 0..h {
            for x in 0..out_w {
                let mut acc = 0.0;
                for (t, &k) in kernel.iter().enumerate() {
                    acc += k * plane(x + t, y);
                }
                dst[y * out_w + x] = acc;
            }
        }
    }
    let mut total = 0.0;
    for y in 0..out_h {
        for x in 0..out_w {
            let mut m = [0.0f64; 5];
            for (pi, slot) in m.iter_mut().enumerate() {
                let src = &hpass[pi * out_w * h..(pi + 1) * out_w * h];
                let mut acc = 0.0;
                for (t, &k) in kernel.iter().enumerate() {
                    acc += k * src[(y + t) * out_w + x];
                }
                *slot = acc;
            }
            let (mu_x, mu_y, xx, yy, xy) = (m[0], m[1], m[2], m[3], m[4]);
            let var_x = xx - mu_x * mu_x;
            let var_y = yy - mu_y * mu_y;
            let cov = xy - mu_x * mu_y;
            total += ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2))
                / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2));
        }
    }
    Ok(total / (out_w * out_h) as f64)
}

/// Binary edge map with the detector parameters that produced it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<u8>,
    pub threshold: u8,
}

/// Sobel 3x3 gradient magnitude on luma, scaled to 8 bits and
/// thresholded. The one-pixel border is never an edge.
pub fn edge_map(frame: &FrameBuffer, threshold: u8) -> EdgeMap {
    let (w, h) = (frame.orig_width, frame.orig_height);
    let mut bits = vec![0u8; w * h];
    let p = &frame.y_plane;
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let s = |dx: isize, dy: isize| {
                p.get((x as isize + dx) as usize, (y as isize + dy) as usize) as i32
            };
            let gx = -s(-1, -1) + s(1, -1) - 2 * s(-1, 0) + 2 * s(1, 0) - s(-1, 1) + s(1, 1);
            let gy = -s(-1, -1) - 2 * s(0, -1) - s(1, -1) + s(-1, 1) + 2 * s(0, 1) + s(1, 1);
            let mag = ((gx * gx + gy * gy) as f64).sqrt() / 4.0;
            let g8 = mag.round().min(255.0) as u8;
            if g8 >= threshold {
                bits[y * w + x] = 1;
            }
        }
    }
    EdgeMap {
        width: w,
        height: h,
        bits,
        threshold,
    }
}

/// Edge differential ratio between two binary maps:
/// sum |P - P̄| / sum (P + P̄); both maps empty gives 0.
pub fn edr_from_maps(a: &EdgeMap, b: &EdgeMap) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch(a.width, a.height, b.width, b.height));
    }
    let mut num = 0u64;
    let mut den = 0u64;
    for (&pa, &pb) in a.bits.iter().zip(&b.bits) {
        num += pa.abs_diff(pb) as u64;
        den += (pa + pb) as u64;
    }
    if den == 0 {
        return Ok(0.0);
    }
    Ok(num as f64 / den as f64)
}

/// EDR of two frames with a Sobel detector at `threshold`.
pub fn edr(reference: &FrameBuffer, test: &FrameBuffer, threshold: u8) -> Result<f64> {
    check_same_window(reference, test)?;
    edr_from_maps(&edge_map(reference, threshold), &edge_map(test, threshold))
}

/// Signed relative bitrate change.
pub fn bitrate_change(bits_plain: u64, bits_encrypted: u64) -> Result<f64> {
    if bits_plain == 0 {
        return Err(Error::ZeroBaseline);
    }
    Ok((bits_encrypted as f64 - bits_plain as f64) / bits_plain as f64)
}

/// Per-class encrypted element and bit counts, plus the total row.
pub fn encryption_space(ledger: &EncryptionLedger) -> Vec<(ElementClass, ClassCount)> {
    ElementClass::ALL
        .iter()
        .map(|&c| (c, ledger.class_total(c)))
        .collect()
}

/// Per-frame metric rows for the analyze CSV.
#[derive(Clone, Debug, Default)]
pub struct MetricsReport {
    pub psnr_db: Vec<f64>,
    pub ssim: Vec<f64>,
    pub edr: Vec<f64>,
    pub bitrate_delta: Option<f64>,
}

impl MetricsReport {
    pub fn frame_count(&self) -> usize {
        self.psnr_db.len()
    }
}

/// Computes per-frame PSNR/SSIM/EDR over two aligned sequences.
pub fn analyze_sequences(
    reference: &[FrameBuffer],
    test: &[FrameBuffer],
    edge_threshold: u8,
) -> Result<MetricsReport> {
    if reference.len() != test.len() {
        return Err(Error::InvalidConfig(format!(
            "frame count mismatch: {} vs {}",
            reference.len(),
            test.len()
        )));
    }
    let mut report = MetricsReport::default();
    for (r, t) in reference.iter().zip(test) {
        report.psnr_db.push(psnr(r, t)?);
        report.ssim.push(ssim(r, t)?);
        report.edr.push(edr(r, t, edge_threshold)?);
    }
    Ok(report)
}

fn fmt_psnr(v: f64) -> String {
    if v.is_infinite() {
        format!("{PSNR_INF_SENTINEL:.2}")
    } else {
        format!("{v:.4}")
    }
}

/// Per-frame CSV: `frame,psnr_db,ssim,edr` rows, then optional summary
/// rows (`bitrate_delta,...` and `enc_space,<class>,<elements>,<bits>`).
pub fn metrics_csv(report: &MetricsReport, ledger: Option<&EncryptionLedger>) -> String {
    let mut out = String::from("frame,psnr_db,ssim,edr\n");
    for i in 0..report.frame_count() {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6}",
            i,
            fmt_psnr(report.psnr_db[i]),
            report.ssim[i],
            report.edr[i]
        );
    }
    if let Some(delta) = report.bitrate_delta {
        let _ = writeln!(out, "bitrate_delta,{delta:.6}");
    }
    if let Some(ledger) = ledger {
        out.push_str(&enc_space_rows(ledger));
    }
    out
}

fn enc_space_rows(ledger: &EncryptionLedger) -> String {
    let mut out = String::new();
    for (class, count) in encryption_space(ledger) {
        let _ = writeln!(
            out,
            "enc_space,{},{},{}",
            class.name(),
            count.elements,
            count.bits
        );
    }
    let total = ledger.total();
    let _ = writeln!(out, "enc_space,total,{},{}", total.elements, total.bits);
    out
}

/// Ledger CSV: `class,frame_type,elements,bits` with one row per
/// (class, I/P) pair.
pub fn ledger_csv(ledger: &EncryptionLedger) -> String {
    let mut out = String::from("class,frame_type,elements,bits\n");
    for class in ElementClass::ALL {
        for (ftype, label) in [(FrameType::I, "I"), (FrameType::P, "P")] {
            let c = ledger.class_frame(class, ftype);
            let _ = writeln!(out, "{},{},{},{}", class.name(), label, c.elements, c.bits);
        }
    }
    out
}

/// Parses the ledger CSV back; the inverse of `ledger_csv`.
pub fn parse_ledger_csv(text: &str) -> Result<EncryptionLedger> {
    let mut ledger = EncryptionLedger::default();
    let mut lines = text.lines();
    match lines.next() {
        Some("class,frame_type,elements,bits") => {}
        other => {
            return Err(Error::BadLedgerCsv(format!(
                "unexpected header {other:?}"
            )))
        }
    }
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::BadLedgerCsv(format!("bad row '{line}'")));
        }
        let class = ElementClass::ALL
            .into_iter()
            .find(|c| c.name() == fields[0])
            .ok_or_else(|| Error::BadLedgerCsv(format!("unknown class '{}'", fields[0])))?;
        let ftype = match fields[1] {
            "I" => FrameType::I,
            "P" => FrameType::P,
            other => return Err(Error::BadLedgerCsv(format!("bad frame type '{other}'"))),
        };
        let elements: u64 = fields[2]
            .parse()
            .map_err(|_| Error::BadLedgerCsv(format!("bad element count in '{line}'")))?;
        let bits: u64 = fields[3]
            .parse()
            .map_err(|_| Error::BadLedgerCsv(format!("bad bit count in '{line}'")))?;
        ledger.set_counts(class, ftype, ClassCount { elements, bits });
    }
    Ok(ledger)
}

/// Report CSV mirroring the bitrate + encryption-space tables.
pub fn report_csv(bits_plain: u64, bits_encrypted: u64, ledger: &EncryptionLedger) -> Result<String> {
    let delta = bitrate_change(bits_plain, bits_encrypted)?;
    let mut out = String::from("metric,value\n");
    let _ = writeln!(out, "bits_plain,{bits_plain}");
    let _ = writeln!(out, "bits_encrypted,{bits_encrypted}");
    let _ = writeln!(out, "bitrate_delta,{delta:.6}");
    out.push_str(&enc_space_rows(ledger));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media_io::Plane;

    fn frame_from_luma(w: usize, h: usize, mut f: impl FnMut(usize, usize) -> u8) -> FrameBuffer {
        let mut fb = FrameBuffer::new(w, h, 1, 0);
        let mut plane = Plane::new(w, h);
        for y in 0..h {
            for x in 0..w {
                plane.set(x, y, f(x, y));
            }
        }
        fb.y_plane = plane;
        fb
    }

    fn rng_frame(w: usize, h: usize, seed: u64) -> FrameBuffer {
        let mut s = seed | 1;
        frame_from_luma(w, h, move |x, y| {
            let mut v = s ^ ((x as u64) << 17) ^ ((y as u64) << 33);
            v ^= v << 13;
            v ^= v >> 7;
            v ^= v << 17;
            s = s.wrapping_add(0x9E3779B9);
            (v >> 24) as u8
        })
    }

    #[test]
    fn psnr_identical_is_infinite() {
        let f = rng_frame(32, 32, 5);
        assert!(psnr(&f, &f).unwrap().is_infinite());
    }

    #[test]
    fn psnr_mse_one_closed_form() {
        // Off-by-one everywhere: MSE exactly 1 -> 10*log10(65025).
        let a = frame_from_luma(32, 32, |_, _| 100);
        let b = frame_from_luma(32, 32, |_, _| 101);
        let got = psnr(&a, &b).unwrap();
        assert!((got - 10.0 * 65025f64.log10()).abs() < 1e-9);
        assert!((got - 48.13).abs() < 0.005);
    }

    #[test]
    fn psnr_full_scale_is_zero_db() {
        let a = frame_from_luma(16, 16, |_, _| 0);
        let b = frame_from_luma(16, 16, |_, _| 255);
        assert!(psnr(&a, &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn psnr_dimension_mismatch_rejected() {
        let a = frame_from_luma(16, 16, |_, _| 0);
        let b = frame_from_luma(16, 32, |_, _| 0);
        assert!(psnr(&a, &b).is_err());
    }

    /// Direct (non-separable) SSIM evaluation; the independent oracle.
    fn ssim_direct(a: &FrameBuffer, b: &FrameBuffer) -> f64 {
        let (w, h) = (a.orig_width, a.orig_height);
        let kernel = gaussian_kernel();
        let c1 = (SSIM_K1 * SAMPLE_PEAK) * (SSIM_K1 * SAMPLE_PEAK);
        let c2 = (SSIM_K2 * SAMPLE_PEAK) * (SSIM_K2 * SAMPLE_PEAK);
        let mut total = 0.0;
        let mut count = 0usize;
        for wy in 0..=(h - SSIM_WINDOW) {
            for wx in 0..=(w - SSIM_WINDOW) {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..SSIM_WINDOW {
                    for dx in 0..SSIM_WINDOW {
                        let wgt = kernel[dy] * kernel[dx];
                        let pa = a.y_plane.get(wx + dx, wy + dy) as f64;
                        let pb = b.y_plane.get(wx + dx, wy + dy) as f64;
                        mx += wgt * pa;
                        my += wgt * pb;
                        sxx += wgt * pa * pa;
                        syy += wgt * pb * pb;
                        sxy += wgt * pa * pb;
                    }
                }
                let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn ssim_identical_is_one() {
        let f = rng_frame(32, 32, 1);
        assert!((ssim(&f, &f).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_constant_shift_degrades_luminance_only() {
        let a = rng_frame(32, 32, 2);
        let mut b = a.clone();
        for v in b.y_plane.data.iter_mut() {
            *v = v.saturating_add(10);
        }
        let got = ssim(&a, &b).unwrap();
        assert!(got < 1.0);
        let oracle = ssim_direct(&a, &b);
        assert!((got - oracle).abs() < 1e-6);
    }

    #[test]
    fn ssim_matches_direct_oracle_on_random_pairs() {
        for seed in 0..8 {
            let a = rng_frame(24, 20, seed * 2 + 1);
            let b = rng_frame(24, 20, seed * 3 + 2);
            let got = ssim(&a, &b).unwrap();
            let oracle = ssim_direct(&a, &b);
            assert!((got - oracle).abs() < 1e-6, "seed {seed}");
        }
    }

    #[test]
    fn ssim_rejects_small_frames() {
        let a = frame_from_luma(10, 10, |_, _| 0);
        assert!(matches!(ssim(&a, &a), Err(Error::FrameTooSmall { .. })));
    }

    #[test]
    fn edr_identical_frames_is_zero() {
        let f = rng_frame(32, 32, 9);
        assert_eq!(edr(&f, &f, DEFAULT_EDGE_THRESHOLD).unwrap(), 0.0);
    }

    #[test]
    fn edr_complementary_maps_is_one() {
        let a = EdgeMap {
            width: 2,
            height: 1,
            bits: vec![1, 0],
            threshold: 64,
        };
        let b = EdgeMap {
            width: 2,
            height: 1,
            bits: vec![0, 1],
            threshold: 64,
        };
        assert_eq!(edr_from_maps(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn edr_hand_built_maps() {
        // P = [1,1,0,0], P̄ = [1,0,1,0]: num = 0+1+1+0 = 2, den = 2+1+1+0 = 4.
        let a = EdgeMap {
            width: 4,
            height: 1,
            bits: vec![1, 1, 0, 0],
            threshold: 64,
        };
        let b = EdgeMap {
            width: 4,
            height: 1,
            bits: vec![1, 0, 1, 0],
            threshold: 64,
        };
        assert_eq!(edr_from_maps(&a, &b).unwrap(), 0.5);
        // Symmetry.
        assert_eq!(
            edr_from_maps(&a, &b).unwrap(),
            edr_from_maps(&b, &a).unwrap()
        );
    }

    #[test]
    fn edr_empty_maps_is_zero() {
        let flat = frame_from_luma(16, 16, |_, _| 128);
        assert_eq!(edr(&flat, &flat, DEFAULT_EDGE_THRESHOLD).unwrap(), 0.0);
    }

    #[test]
    fn sobel_finds_a_vertical_edge() {
        let f = frame_from_luma(16, 16, |x, _| if x < 8 { 0 } else { 255 });
        let map = edge_map(&f, DEFAULT_EDGE_THRESHOLD);
        assert_eq!(map.bits[5 * 16 + 7], 1);
        assert_eq!(map.bits[5 * 16 + 2], 0);
    }

    #[test]
    fn bitrate_change_examples() {
        assert_eq!(bitrate_change(100, 100).unwrap(), 0.0);
        assert!((bitrate_change(100, 102).unwrap() - 0.02).abs() < 1e-12);
        assert!((bitrate_change(100, 95).unwrap() + 0.05).abs() < 1e-12);
        assert!(matches!(bitrate_change(0, 10), Err(Error::ZeroBaseline)));
    }

    #[test]
    fn encryption_space_zero_when_disabled() {
        let ledger = EncryptionLedger::default();
        for (_, count) in encryption_space(&ledger) {
            assert_eq!(count, ClassCount::default());
        }
    }

    #[test]
    fn encryption_space_counts_one_pattern() {
        let mut ledger = EncryptionLedger::default();
        ledger.record(ElementClass::ResidualSign, FrameType::I, 3);
        let rows = encryption_space(&ledger);
        let rsign = rows
            .iter()
            .find(|(c, _)| *c == ElementClass::ResidualSign)
            .unwrap();
        assert_eq!(rsign.1.elements, 1);
        assert_eq!(rsign.1.bits, 3);
    }

    #[test]
    fn ledger_csv_round_trip() {
        let mut ledger = EncryptionLedger::default();
        ledger.record(ElementClass::LumaIpm, FrameType::I, 3);
        ledger.record(ElementClass::LumaIpm, FrameType::P, 6);
        ledger.record(ElementClass::MvdSign, FrameType::P, 1);
        ledger.record(ElementClass::ResidualSign, FrameType::I, 17);
        let text = ledger_csv(&ledger);
        let back = parse_ledger_csv(&text).unwrap();
        assert_eq!(back, ledger);
        assert!(parse_ledger_csv("bogus").is_err());
    }

    #[test]
    fn metrics_csv_shape() {
        let report = MetricsReport {
            psnr_db: vec![f64::INFINITY, 30.0],
            ssim: vec![1.0, 0.5],
            edr: vec![0.0, 0.25],
            bitrate_delta: Some(0.02),
        };
        let csv = metrics_csv(&report, None);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("frame,psnr_db,ssim,edr"));
        assert_eq!(lines.next(), Some("0,99.99,1.000000,0.000000"));
        assert_eq!(lines.next(), Some("1,30.0000,0.500000,0.250000"));
        assert_eq!(lines.next(), Some("bitrate_delta,0.020000"));
    }
}
