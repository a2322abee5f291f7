//! Residual transform + quantization, reconstruction, and the per-block
//! residual sign pattern.
//!
//! The forward transform is a separable integer approximation of DCT-II
//! with an 8-bit basis (entries up to 91). Quantization is a uniform
//! dead-zone quantizer with step 2^((qp-4)/6); the inverse path scales
//! coefficients back through the exact float inverse of the integer
//! basis and rounds half away from zero. After the initial quantization
//! the encoder refines individual levels until the spatial reconstruction
//! error is within one quantizer step, so the round-trip bound holds at
//! every QP. Levels are what get coded, so the decoder reproduces the
//! refined reconstruction bit-exactly.

use std::sync::OnceLock;

/// Quantized transform coefficients of one block, in diagonal scan order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoeffBlock {
    pub size: usize,
    pub levels: Vec<i32>,
}

impl CoeffBlock {
    pub fn nonzero_count(&self) -> usize {
        self.levels.iter().filter(|&&v| v != 0).count()
    }
}

/// One bit per nonzero level in scan order; true = negative.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SignPattern {
    pub bits: Vec<bool>,
}

impl SignPattern {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Quantizer step for a QP in [0, 51].
pub fn step_size(qp: u8) -> f64 {
    2f64.powf((qp as f64 - 4.0) / 6.0)
}

const SUPPORTED_SIZES: [usize; 4] = [4, 8, 16, 32];

fn size_slot(size: usize) -> usize {
    SUPPORTED_SIZES
        .iter()
        .position(|&s| s == size)
        .unwrap_or_else(|| panic!("unsupported transform size {size}"))
}

/// Diagonal up-right scan: anti-diagonals in order, each walked from
/// bottom-left to top-right.
pub fn diagonal_scan(size: usize) -> &'static [(usize, usize)] {
    static SCANS: OnceLock<[Vec<(usize, usize)>; 4]> = OnceLock::new();
    let scans = SCANS.get_or_init(|| {
        let build = |n: usize| {
            let mut order = Vec::with_capacity(n * n);
            for s in 0..(2 * n - 1) {
                let r_hi = s.min(n - 1);
                let r_lo = s.saturating_sub(n - 1);
                for r in (r_lo..=r_hi).rev() {
                    order.push((r, s - r));
                }
            }
            order
        };
        [build(4), build(8), build(16), build(32)]
    });
    &scans[size_slot(size)]
}

struct TransformTables {
    n: usize,
    /// Integer basis, row-major; row i is the i-th frequency.
    basis: Vec<i64>,
    /// Square root of each row's squared norm.
    sqrt_norm: Vec<f64>,
    /// Exact float inverse of the basis matrix.
    inv: Vec<f64>,
}

fn build_tables(n: usize) -> TransformTables {
    let mut basis = vec![0i64; n * n];
    for i in 0..n {
        let scale = if i == 0 { 64.0 } else { 64.0 * 2f64.sqrt() };
        for j in 0..n {
            let angle = std::f64::consts::PI * i as f64 * (2 * j + 1) as f64 / (2 * n) as f64;
            basis[i * n + j] = (scale * angle.cos()).round() as i64;
        }
    }
    let sqrt_norm = (0..n)
        .map(|i| {
            let sq: i64 = (0..n).map(|j| basis[i * n + j] * basis[i * n + j]).sum();
            (sq as f64).sqrt()
        })
        .collect();
    let inv = invert(&basis, n);
    TransformTables {
        n,
        basis,
        sqrt_norm,
        inv,
    }
}

/// Gauss-Jordan inverse with partial pivoting.
fn invert(m: &[i64], n: usize) -> Vec<f64> {
    let mut a: Vec<f64> = m.iter().map(|&v| v as f64).collect();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r1, &r2| {
                a[r1 * n + col]
                    .abs()
                    .partial_cmp(&a[r2 * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
                inv.swap(col * n + j, pivot * n + j);
            }
        }
        let d = a[col * n + col];
        for j in 0..n {
            a[col * n + j] /= d;
            inv[col * n + j] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * n + col];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                a[r * n + j] -= f * a[col * n + j];
                inv[r * n + j] -= f * inv[col * n + j];
            }
        }
    }
    inv
}

fn tables(size: usize) -> &'static TransformTables {
    static TABLES: OnceLock<[TransformTables; 4]> = OnceLock::new();
    let all = TABLES.get_or_init(|| {
        [
            build_tables(4),
            build_tables(8),
            build_tables(16),
            build_tables(32),
        ]
    });
    &all[size_slot(size)]
}

/// Forward integer transform: C = T X T^t, exact in i64.
fn forward(tables: &TransformTables, x: &[i32]) -> Vec<i64> {
    let n = tables.n;
    let t = &tables.basis;
    // tmp = T X
    let mut tmp = vec![0i64; n * n];
    for i in 0..n {
        for b in 0..n {
            let mut acc = 0i64;
            for a in 0..n {
                acc += t[i * n + a] * x[a * n + b] as i64;
            }
            tmp[i * n + b] = acc;
        }
    }
    // C = tmp T^t
    let mut c = vec![0i64; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0i64;
            for b in 0..n {
                acc += tmp[i * n + b] * t[j * n + b];
            }
            c[i * n + j] = acc;
        }
    }
    c
}

/// Inverse path from levels (matrix order) to real-valued spatial
/// residuals. Bit-identical wherever it runs: pure f64 arithmetic over
/// the same static tables.
fn inverse_real(tables: &TransformTables, levels_mat: &[i32], step: f64) -> Vec<f64> {
    let n = tables.n;
    let u = &tables.inv;
    // Raw dequantized coefficients.
    let mut c = vec![0.0f64; n * n];
    for i in 0..n {
        for j in 0..n {
            let l = levels_mat[i * n + j];
            if l != 0 {
                c[i * n + j] = l as f64 * step * tables.sqrt_norm[i] * tables.sqrt_norm[j];
            }
        }
    }
    // X = U C U^t
    let mut tmp = vec![0.0f64; n * n];
    for r in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                acc += u[r * n + i] * c[i * n + j];
            }
            tmp[r * n + j] = acc;
        }
    }
    let mut out = vec![0.0f64; n * n];
    for r in 0..n {
        for s in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += tmp[r * n + j] * u[s * n + j];
            }
            out[r * n + s] = acc;
        }
    }
    out
}

fn inverse_from_levels(tables: &TransformTables, levels_mat: &[i32], step: f64) -> Vec<i32> {
    inverse_real(tables, levels_mat, step)
        .iter()
        .map(|&v| v.round() as i32)
        .collect()
}

/// Excess-error potential: zero exactly when every pixel's real-valued
/// reconstruction error is safely below the rounding threshold `r_limit`.
fn excess_potential(x: &[i32], recon_real: &[f64], r_limit: f64) -> f64 {
    let mut phi = 0.0;
    for (&a, &v) in x.iter().zip(recon_real) {
        let over = (a as f64 - v).abs() - r_limit;
        if over > 0.0 {
            phi += over * over + over;
        }
    }
    phi
}

/// Nudges individual levels until the spatial reconstruction error is
/// within one step of the source residual. Decoder-transparent: only the
/// transmitted levels change.
///
/// Steepest descent on a smooth excess potential; each candidate move is
/// one +/-1 level change evaluated incrementally over the whole block.
fn refine_levels(
    tables: &TransformTables,
    x: &[i32],
    levels_mat: &mut [i32],
    step: f64,
    bound: f64,
) {
    let n = tables.n;
    let mut recon_real = inverse_real(tables, levels_mat, step);
    // Integer error <= floor(bound) holds whenever the real error stays
    // strictly inside floor(bound) + 0.5; aim a little inside that.
    let r_limit = (bound + 1e-9).floor() + 0.45;
    let mut phi = excess_potential(x, &recon_real, r_limit);
    if phi == 0.0 {
        return;
    }
    // a[i][r] such that one level step at (i, j) moves pixel (r, s) by
    // step * a[i][r] * a[j][s].
    let mut a = vec![0.0f64; n * n];
    for i in 0..n {
        for r in 0..n {
            a[i * n + r] = tables.sqrt_norm[i] * tables.inv[r * n + i];
        }
    }
    let full_scan = n <= 8;
    let mut widen = false;
    let mut scratch = vec![0.0f64; n * n];
    for _ in 0..1024 {
        let mut cand: Vec<(usize, usize)> = if full_scan || widen {
            (0..n * n).map(|k| (k / n, k % n)).collect()
        } else {
            // Leverage-ranked candidates around the violating pixels.
            let mut worst: Vec<usize> = (0..n * n)
                .filter(|&p| (x[p] as f64 - recon_real[p]).abs() > r_limit)
                .collect();
            worst.truncate(4);
            let mut set: Vec<(usize, usize)> = (0..n * n).map(|k| (k / n, k % n)).collect();
            set.sort_by(|&(i1, j1), &(i2, j2)| {
                let lev = |i: usize, j: usize| {
                    worst
                        .iter()
                        .map(|&p| (a[i * n + p / n] * a[j * n + p % n]).abs())
                        .fold(0.0f64, f64::max)
                };
                lev(i2, j2)
                    .partial_cmp(&lev(i1, j1))
                    .unwrap()
                    .then(i1.cmp(&i2))
                    .then(j1.cmp(&j2))
            });
            set.truncate(64);
            set
        };
        cand.sort_unstable();
        let mut best: Option<(f64, usize, usize, i32)> = None;
        for &(i, j) in &cand {
            for delta in [1i32, -1] {
                let d = delta as f64 * step;
                let mut cand_phi = 0.0;
                for r in 0..n {
                    let ar = d * a[i * n + r];
                    for s in 0..n {
                        let p = r * n + s;
                        let over = (x[p] as f64 - (recon_real[p] + ar * a[j * n + s])).abs()
                            - r_limit;
                        if over > 0.0 {
                            cand_phi += over * over + over;
                        }
                    }
                }
                if cand_phi < phi && best.is_none_or(|(bp, ..)| cand_phi < bp) {
                    best = Some((cand_phi, i, j, delta));
                }
            }
        }
        let Some((new_phi, i, j, delta)) = best else {
            // Leverage-ranked subset stalled; retry once over every
            // coefficient before giving up.
            if !full_scan && !widen {
                widen = true;
                continue;
            }
            break;
        };
        widen = false;
        levels_mat[i * n + j] += delta;
        let d = delta as f64 * step;
        for r in 0..n {
            let ar = d * a[i * n + r];
            for s in 0..n {
                scratch[r * n + s] = recon_real[r * n + s] + ar * a[j * n + s];
            }
        }
        std::mem::swap(&mut recon_real, &mut scratch);
        phi = new_phi;
        if phi == 0.0 {
            break;
        }
        // Drop incremental drift every so often by re-deriving from levels.
        recon_real = inverse_real(tables, levels_mat, step);
        phi = excess_potential(x, &recon_real, r_limit);
        if phi == 0.0 {
            break;
        }
    }
}

/// Transforms and quantizes a residual block (row-major, `size*size`
/// entries). Coefficient magnitudes round half away from zero.
pub fn transform_quant(residual: &[i32], size: usize, qp: u8) -> CoeffBlock {
    debug_assert_eq!(residual.len(), size * size);
    let tbl = tables(size);
    let step = step_size(qp);
    let c = forward(tbl, residual);
    let mut levels_mat = vec![0i32; size * size];
    for i in 0..size {
        for j in 0..size {
            let ortho = c[i * size + j] as f64 / (tbl.sqrt_norm[i] * tbl.sqrt_norm[j]);
            let mag = (ortho.abs() / step + 0.5).floor() as i32;
            levels_mat[i * size + j] = if ortho < 0.0 { -mag } else { mag };
        }
    }
    refine_levels(tbl, residual, &mut levels_mat, step, step + 1e-9);
    let levels = diagonal_scan(size)
        .iter()
        .map(|&(r, s)| levels_mat[r * size + s])
        .collect();
    CoeffBlock { size, levels }
}

/// Dequantizes and inverse-transforms to a row-major residual block.
pub fn dequant_itransform(coeffs: &CoeffBlock, qp: u8) -> Vec<i32> {
    let n = coeffs.size;
    let tbl = tables(n);
    let mut levels_mat = vec![0i32; n * n];
    for (&(r, s), &l) in diagonal_scan(n).iter().zip(&coeffs.levels) {
        levels_mat[r * n + s] = l;
    }
    inverse_from_levels(tbl, &levels_mat, step_size(qp))
}

/// Strips signs off the nonzero levels. Magnitudes keep one entry per
/// scan position (zeros included).
pub fn extract_sign_pattern(coeffs: &CoeffBlock) -> (SignPattern, Vec<u32>) {
    let mut bits = Vec::new();
    let mut mags = Vec::with_capacity(coeffs.levels.len());
    for &l in &coeffs.levels {
        if l != 0 {
            bits.push(l < 0);
        }
        mags.push(l.unsigned_abs());
    }
    (SignPattern { bits }, mags)
}

/// Inverse of `extract_sign_pattern`.
pub fn apply_sign_pattern(magnitudes: &[u32], pattern: &SignPattern) -> Vec<i32> {
    let mut signs = pattern.bits.iter();
    magnitudes
        .iter()
        .map(|&m| {
            if m == 0 {
                0
            } else if *signs.next().expect("sign pattern shorter than nonzeros") {
                -(m as i32)
            } else {
                m as i32
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scan_starts_at_dc_and_covers_block() {
        for n in SUPPORTED_SIZES {
            let scan = diagonal_scan(n);
            assert_eq!(scan[0], (0, 0));
            assert_eq!(scan.len(), n * n);
            let mut seen: Vec<_> = scan.to_vec();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), n * n);
        }
        assert_eq!(&diagonal_scan(4)[..6], &[(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]);
    }

    #[test]
    fn all_zero_residual_gives_all_zero_levels() {
        let res = vec![0i32; 16];
        let cb = transform_quant(&res, 4, 24);
        assert_eq!(cb.nonzero_count(), 0);
        assert!(cb.levels.iter().all(|&l| l == 0));
        assert_eq!(dequant_itransform(&cb, 24), res);
    }

    #[test]
    fn constant_residual_is_dc_only_at_low_qp() {
        for n in [4usize, 8] {
            let res = vec![7i32; n * n];
            let cb = transform_quant(&res, n, 4);
            assert_eq!(cb.nonzero_count(), 1, "n={n}");
            assert_ne!(cb.levels[0], 0);
            let back = dequant_itransform(&cb, 4);
            let step = step_size(4);
            for (&a, &b) in res.iter().zip(&back) {
                assert!(((a - b).abs() as f64) <= step + 1e-9);
            }
        }
    }

    fn xorshift(state: &mut u64) -> u64 {
        let mut v = *state;
        v ^= v << 13;
        v ^= v >> 7;
        v ^= v << 17;
        *state = v;
        v
    }

    #[test]
    fn round_trip_error_within_step_random_4x4() {
        // Brute-force bound check: 1000 random blocks per QP.
        let mut seed = 0xabcdefu64;
        for qp in [4u8, 8, 24, 40] {
            let step = step_size(qp);
            for case in 0..1000 {
                let res: Vec<i32> = (0..16)
                    .map(|_| (xorshift(&mut seed) % 511) as i32 - 255)
                    .collect();
                let cb = transform_quant(&res, 4, qp);
                let back = dequant_itransform(&cb, qp);
                let worst = res
                    .iter()
                    .zip(&back)
                    .map(|(&a, &b)| (a - b).abs())
                    .max()
                    .unwrap();
                assert!(
                    (worst as f64) <= step + 1e-9,
                    "qp={qp} case={case} worst={worst} step={step}"
                );
            }
        }
    }

    #[test]
    fn round_trip_error_within_step_larger_blocks() {
        let mut seed = 0x1234u64;
        for (n, qp) in [(8usize, 8u8), (16, 24), (32, 40), (32, 8)] {
            let step = step_size(qp);
            for _ in 0..30 {
                let res: Vec<i32> = (0..n * n)
                    .map(|_| (xorshift(&mut seed) % 511) as i32 - 255)
                    .collect();
                let cb = transform_quant(&res, n, qp);
                let back = dequant_itransform(&cb, qp);
                let worst = res
                    .iter()
                    .zip(&back)
                    .map(|(&a, &b)| (a - b).abs())
                    .max()
                    .unwrap();
                assert!(
                    (worst as f64) <= step + 1e-9,
                    "n={n} qp={qp} worst={worst} step={step}"
                );
            }
        }
    }

    #[test]
    fn sign_pattern_example() {
        let cb = CoeffBlock {
            size: 4,
            levels: {
                let mut l = vec![0i32; 16];
                l[0] = 5;
                l[1] = -3;
                l[2] = 0;
                l[3] = 2;
                l
            },
        };
        let (pattern, mags) = extract_sign_pattern(&cb);
        assert_eq!(pattern.bits, vec![false, true, false]);
        assert_eq!(&mags[..4], &[5, 3, 0, 2]);
        assert_eq!(apply_sign_pattern(&mags, &pattern), cb.levels);
    }

    #[test]
    fn empty_pattern_for_zero_block() {
        let cb = CoeffBlock {
            size: 4,
            levels: vec![0; 16],
        };
        let (pattern, _) = extract_sign_pattern(&cb);
        assert!(pattern.is_empty());
    }

    #[test]
    fn sign_round_trip_random_blocks() {
        let mut seed = 42u64;
        for _ in 0..200 {
            let levels: Vec<i32> = (0..64)
                .map(|_| {
                    let r = xorshift(&mut seed);
                    if r.is_multiple_of(3) {
                        0
                    } else {
                        (r % 17) as i32 - 8
                    }
                })
                .collect();
            let cb = CoeffBlock { size: 8, levels };
            let (pattern, mags) = extract_sign_pattern(&cb);
            assert_eq!(pattern.len(), cb.nonzero_count());
            assert_eq!(apply_sign_pattern(&mags, &pattern), cb.levels);
        }
    }

    #[test]
    fn flipping_one_sign_changes_exactly_one_coefficient() {
        let res: Vec<i32> = (0..16).map(|i| (i * 13 % 61) - 30).collect();
        let cb = transform_quant(&res, 4, 20);
        assert!(cb.nonzero_count() >= 2);
        let (mut pattern, mags) = extract_sign_pattern(&cb);
        pattern.bits[1] = !pattern.bits[1];
        let flipped = apply_sign_pattern(&mags, &pattern);
        let diffs: Vec<usize> = cb
            .levels
            .iter()
            .zip(&flipped)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(diffs.len(), 1);
        assert_eq!(cb.levels[diffs[0]], -flipped[diffs[0]]);
    }
}
