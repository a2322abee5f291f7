//! 67-mode intra prediction: planar, DC, and 65 angular directions, with
//! MPM-list derivation from the above/left neighbours and exhaustive
//! SAD-based mode selection.
//!
//! The mode index is the element the crypto layer encrypts, either as a
//! 6-entry MPM list position (truncated unary, max 5) or as the rank of
//! the chosen mode among the 61 non-MPM modes (6-bit fixed length).

use crate::media_io::Plane;

pub const PLANAR: u8 = 0;
pub const DC: u8 = 1;
pub const NUM_MODES: u8 = 67;
pub const MPM_SIZE: usize = 6;
/// Horizontal axis direction.
pub const HOR: u8 = 18;
/// Vertical axis direction.
pub const VER: u8 = 50;

/// Substitute reference value when a neighbour row/column is outside
/// the frame.
const MID_SAMPLE: i32 = 128;

/// One of the 67 intra prediction modes.
/// 0 = planar, 1 = DC, 2..=66 = angular.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IntraMode(u8);

impl IntraMode {
    pub fn new(index: u8) -> Self {
        assert!(index < NUM_MODES, "intra mode out of range: {index}");
        IntraMode(index)
    }

    #[inline]
    pub fn index(self) -> u8 {
        self.0
    }

    #[inline]
    pub fn is_angular(self) -> bool {
        self.0 >= 2
    }
}

/// Signalled form of a luma intra mode.
///
/// The variant flag itself is regular-coded; the payload index is
/// bypass-coded and is the encryption target. Range invariants are held
/// by construction: `index <= 5`, `rem <= 60`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IpmSyntax {
    /// Position in the MPM list, truncated-unary coded with cMax 5.
    Mpm { index: u8 },
    /// Rank among the 61 non-MPM modes, 6-bit fixed-length coded.
    Remaining { rem: u8 },
}

impl IpmSyntax {
    pub fn is_mpm(&self) -> bool {
        matches!(self, IpmSyntax::Mpm { .. })
    }
}

/// Wraps an angular index by `delta` steps around the 2..=66 fan.
fn angular_neighbor(mode: u8, delta: i32) -> u8 {
    debug_assert!(mode >= 2);
    ((mode as i32 - 2 + delta).rem_euclid(65)) as u8 + 2
}

const DEFAULT_MODES: [u8; 6] = [PLANAR, DC, VER, HOR, 46, 54];

/// Derives the 6-entry MPM list from the above and left neighbour modes.
///
/// Starts with planar, appends the left and above modes, then the +/-1
/// angular neighbours of each appended angular mode, and fills the rest
/// from a fixed default list, skipping duplicates throughout. The rule
/// is identical on encoder and decoder.
pub fn build_mpm_list(above: Option<IntraMode>, left: Option<IntraMode>) -> [IntraMode; MPM_SIZE] {
    let mut list: Vec<u8> = Vec::with_capacity(MPM_SIZE);
    let push = |list: &mut Vec<u8>, m: u8| {
        if list.len() < MPM_SIZE && !list.contains(&m) {
            list.push(m);
        }
    };
    push(&mut list, PLANAR);
    let neighbors = [left, above];
    for m in neighbors.iter().flatten() {
        push(&mut list, m.index());
    }
    for m in neighbors.iter().flatten() {
        if m.is_angular() {
            push(&mut list, angular_neighbor(m.index(), -1));
            push(&mut list, angular_neighbor(m.index(), 1));
        }
    }
    for &m in &DEFAULT_MODES {
        push(&mut list, m);
    }
    debug_assert_eq!(list.len(), MPM_SIZE);
    let mut out = [IntraMode(0); MPM_SIZE];
    for (slot, &m) in out.iter_mut().zip(&list) {
        *slot = IntraMode(m);
    }
    out
}

/// Reference samples for one block: the row above (2N+2 entries starting
/// at the block's left edge), the column to the left (2N+2 entries), and
/// the above-left corner. Missing neighbours are filled with 128.
#[derive(Clone, Debug)]
pub struct RefSamples {
    pub above: Vec<i32>,
    pub left: Vec<i32>,
    pub corner: i32,
    pub size: usize,
}

/// Gathers references from reconstructed samples around (x, y).
pub fn gather_references(recon: &Plane, x: usize, y: usize, size: usize) -> RefSamples {
    let n = size;
    let mut above = vec![MID_SAMPLE; 2 * n + 2];
    let mut left = vec![MID_SAMPLE; 2 * n + 2];
    if y > 0 {
        for (i, slot) in above.iter_mut().enumerate() {
            *slot = recon.get_clamped((x + i) as isize, y as isize - 1) as i32;
        }
    }
    if x > 0 {
        for (j, slot) in left.iter_mut().enumerate() {
            *slot = recon.get_clamped(x as isize - 1, (y + j) as isize) as i32;
        }
    }
    let corner = if x > 0 && y > 0 {
        recon.get(x - 1, y - 1) as i32
    } else {
        MID_SAMPLE
    };
    RefSamples {
        above,
        left,
        corner,
        size: n,
    }
}

/// Displacement per sample step in 1/32 units for an angular mode.
/// Modes 2..=33 are horizontal-group, 34..=66 vertical-group; the axis
/// modes 18 and 50 have displacement 0, the diagonals +/-32.
fn angle_displacement(mode: u8) -> (bool, i32) {
    debug_assert!((2..=66).contains(&mode));
    if mode >= 34 {
        (true, 2 * (mode as i32 - VER as i32))
    } else {
        (false, 2 * (HOR as i32 - mode as i32))
    }
}

/// Predicts an NxN block. DC is the mean of the 2N adjacent references,
/// planar the usual bilinear blend, angular a directional copy with
/// 1/32-sample linear interpolation.
pub fn predict_intra(refs: &RefSamples, mode: IntraMode, size: usize) -> Vec<u8> {
    debug_assert_eq!(refs.size, size);
    match mode.index() {
        PLANAR => predict_planar(refs, size),
        DC => predict_dc(refs, size),
        m => predict_angular(refs, m, size),
    }
}

fn predict_dc(refs: &RefSamples, n: usize) -> Vec<u8> {
    let sum: i32 = refs.above[..n].iter().chain(refs.left[..n].iter()).sum();
    let dc = ((sum + n as i32) / (2 * n as i32)) as u8;
    vec![dc; n * n]
}

fn predict_planar(refs: &RefSamples, n: usize) -> Vec<u8> {
    let log2n = n.trailing_zeros();
    let top_right = refs.above[n];
    let bottom_left = refs.left[n];
    let mut out = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let hor = (n - 1 - x) as i32 * refs.left[y] + (x + 1) as i32 * top_right;
            let ver = (n - 1 - y) as i32 * refs.above[x] + (y + 1) as i32 * bottom_left;
            out.push(((hor + ver + n as i32) >> (log2n + 1)) as u8);
        }
    }
    out
}

/// Builds the main reference array for an angular mode: index `offset`
/// holds the corner, above it the main-side samples; for negative
/// displacements the array extends below the corner by projecting the
/// side reference.
fn build_main_ref(main: &[i32], side: &[i32], corner: i32, n: usize, d: i32) -> (Vec<i32>, usize) {
    let offset = n;
    let mut buf = vec![0i32; n + 2 * n + 3];
    buf[offset] = corner;
    for i in 0..(2 * n + 2) {
        buf[offset + 1 + i] = main[i.min(2 * n + 1)];
    }
    if d < 0 {
        let abs_d = (-d) as u32;
        // Rounded inverse angle in 1/256-sample units.
        let inv = ((8192 + (abs_d >> 1)) / abs_d) as i64;
        let needed = ((n as i32 * -d) >> 5) + 1;
        for k in 1..=needed.min(n as i32) {
            let proj = ((k as i64 * inv + 128) >> 8) - 1;
            let idx = proj.clamp(0, 2 * n as i64 + 1) as usize;
            buf[offset - k as usize] = side[idx];
        }
    }
    (buf, offset)
}

fn predict_angular(refs: &RefSamples, mode: u8, n: usize) -> Vec<u8> {
    let (vertical, d) = angle_displacement(mode);
    let (main, side) = if vertical {
        (&refs.above, &refs.left)
    } else {
        (&refs.left, &refs.above)
    };
    let (buf, offset) = build_main_ref(main, side, refs.corner, n, d);
    let mut out = vec![0u8; n * n];
    for line in 0..n {
        let pos = (line as i32 + 1) * d;
        let idx = pos >> 5;
        let frac = pos & 31;
        for t in 0..n {
            let base = (offset as i32 + 1 + t as i32 + idx) as usize;
            let v = ((32 - frac) * buf[base] + frac * buf[base + 1] + 16) >> 5;
            // Vertical group walks rows; horizontal group is the transpose.
            let (x, y) = if vertical { (t, line) } else { (line, t) };
            out[y * n + x] = v as u8;
        }
    }
    out
}

fn sad(a: &[u8], b: &[u8]) -> u64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as i32 - y as i32).unsigned_abs() as u64)
        .sum()
}

/// Maps a chosen mode to its signalled form given the MPM list.
pub fn syntax_for_mode(mode: IntraMode, mpm: &[IntraMode; MPM_SIZE]) -> IpmSyntax {
    if let Some(pos) = mpm.iter().position(|&m| m == mode) {
        return IpmSyntax::Mpm { index: pos as u8 };
    }
    // Rank among the 61 non-MPM modes in ascending index order.
    let rank = (0..mode.index())
        .filter(|&m| !mpm.iter().any(|&p| p.index() == m))
        .count() as u8;
    debug_assert!(rank <= 60);
    IpmSyntax::Remaining { rem: rank }
}

/// Inverse of `syntax_for_mode`; identical on encoder and decoder.
pub fn mode_from_syntax(syntax: &IpmSyntax, mpm: &[IntraMode; MPM_SIZE]) -> IntraMode {
    match *syntax {
        IpmSyntax::Mpm { index } => mpm[index as usize],
        IpmSyntax::Remaining { rem } => {
            let mut rank = rem as i32;
            for m in 0..NUM_MODES {
                if mpm.iter().any(|&p| p.index() == m) {
                    continue;
                }
                if rank == 0 {
                    return IntraMode(m);
                }
                rank -= 1;
            }
            unreachable!("remaining-mode rank out of range")
        }
    }
}

/// Exhaustive SAD search over all 67 modes; ties break to the lowest
/// mode index.
pub fn select_intra_mode(
    block: &[u8],
    refs: &RefSamples,
    mpm: &[IntraMode; MPM_SIZE],
) -> (IntraMode, IpmSyntax) {
    let n = refs.size;
    debug_assert_eq!(block.len(), n * n);
    let mut best = (u64::MAX, 0u8);
    for m in 0..NUM_MODES {
        let pred = predict_intra(refs, IntraMode(m), n);
        let cost = sad(block, &pred);
        if cost < best.0 {
            best = (cost, m);
        }
    }
    let mode = IntraMode(best.1);
    (mode, syntax_for_mode(mode, mpm))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn modes(list: &[IntraMode; MPM_SIZE]) -> Vec<u8> {
        list.iter().map(|m| m.index()).collect()
    }

    #[test]
    fn mpm_default_list_when_no_neighbors() {
        let list = build_mpm_list(None, None);
        assert_eq!(modes(&list), vec![0, 1, 50, 18, 46, 54]);
    }

    #[test]
    fn mpm_same_angular_neighbors() {
        let m = IntraMode::new(30);
        let list = build_mpm_list(Some(m), Some(m));
        let got = modes(&list);
        assert_eq!(&got[..4], &[0, 30, 29, 31]);
        let mut sorted = got.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), MPM_SIZE);
    }

    #[test]
    fn mpm_wraps_at_fan_edges() {
        let list = build_mpm_list(None, Some(IntraMode::new(2)));
        let got = modes(&list);
        assert!(got.contains(&66) && got.contains(&3));
        let list = build_mpm_list(None, Some(IntraMode::new(66)));
        let got = modes(&list);
        assert!(got.contains(&65) && got.contains(&2));
    }

    #[test]
    fn mpm_exhaustive_all_neighbor_combinations() {
        // 67 modes + absent on each side: list is always 6 distinct
        // in-range entries.
        let options: Vec<Option<IntraMode>> = std::iter::once(None)
            .chain((0..NUM_MODES).map(|m| Some(IntraMode::new(m))))
            .collect();
        for &above in &options {
            for &left in &options {
                let list = build_mpm_list(above, left);
                let got = modes(&list);
                let mut sorted = got.clone();
                sorted.sort_unstable();
                sorted.dedup();
                assert_eq!(sorted.len(), MPM_SIZE, "dups for {above:?}/{left:?}");
                assert!(got.iter().all(|&m| m < NUM_MODES));
            }
        }
    }

    fn const_refs(c: i32, n: usize) -> RefSamples {
        RefSamples {
            above: vec![c; 2 * n + 2],
            left: vec![c; 2 * n + 2],
            corner: c,
            size: n,
        }
    }

    #[test]
    fn dc_of_constant_references() {
        let refs = const_refs(100, 8);
        let pred = predict_intra(&refs, IntraMode::new(DC), 8);
        assert!(pred.iter().all(|&v| v == 100));
    }

    #[test]
    fn planar_of_constant_references() {
        for c in [0, 37, 255] {
            let refs = const_refs(c, 4);
            let pred = predict_intra(&refs, IntraMode::new(PLANAR), 4);
            assert!(pred.iter().all(|&v| v as i32 == c), "c={c}");
        }
    }

    #[test]
    fn vertical_mode_copies_above_row() {
        let mut refs = const_refs(0, 4);
        refs.above = vec![10, 20, 30, 40, 50, 60, 70, 80, 90, 95];
        let pred = predict_intra(&refs, IntraMode::new(VER), 4);
        for y in 0..4 {
            assert_eq!(&pred[y * 4..y * 4 + 4], &[10, 20, 30, 40]);
        }
    }

    #[test]
    fn horizontal_mode_copies_left_column() {
        let mut refs = const_refs(0, 4);
        refs.left = vec![11, 22, 33, 44, 55, 66, 77, 88, 99, 12];
        let pred = predict_intra(&refs, IntraMode::new(HOR), 4);
        for y in 0..4 {
            assert!(pred[y * 4..y * 4 + 4]
                .iter()
                .all(|&v| v as i32 == refs.left[y]));
        }
    }

    #[test]
    fn all_modes_stay_in_sample_range() {
        let mut refs = const_refs(0, 8);
        for (i, v) in refs.above.iter_mut().enumerate() {
            *v = ((i * 53) % 256) as i32;
        }
        for (j, v) in refs.left.iter_mut().enumerate() {
            *v = ((j * 91 + 7) % 256) as i32;
        }
        refs.corner = 200;
        for m in 0..NUM_MODES {
            let pred = predict_intra(&refs, IntraMode::new(m), 8);
            assert_eq!(pred.len(), 64);
        }
    }

    #[test]
    fn syntax_round_trip_first_mpm() {
        let mpm = build_mpm_list(None, None);
        let syn = syntax_for_mode(mpm[0], &mpm);
        assert_eq!(syn, IpmSyntax::Mpm { index: 0 });
        assert_eq!(mode_from_syntax(&syn, &mpm), mpm[0]);
    }

    #[test]
    fn smallest_non_mpm_mode_has_rank_zero() {
        let mpm = build_mpm_list(None, None); // [0,1,50,18,46,54]
        let first_non_mpm = (0..NUM_MODES)
            .map(IntraMode::new)
            .find(|m| !mpm.contains(m))
            .unwrap();
        assert_eq!(first_non_mpm.index(), 2);
        let syn = syntax_for_mode(first_non_mpm, &mpm);
        assert_eq!(syn, IpmSyntax::Remaining { rem: 0 });
    }

    #[test]
    fn rem_mode_mapping_is_bijective_exhaustive() {
        let mut seed = 77u64;
        let mut rng = || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            seed
        };
        for _ in 0..200 {
            let above = match rng() % 68 {
                67 => None,
                m => Some(IntraMode::new(m as u8)),
            };
            let left = match rng() % 68 {
                67 => None,
                m => Some(IntraMode::new(m as u8)),
            };
            let mpm = build_mpm_list(above, left);
            for m in (0..NUM_MODES).map(IntraMode::new) {
                let syn = syntax_for_mode(m, &mpm);
                if let IpmSyntax::Remaining { rem } = syn {
                    assert!(rem <= 60);
                }
                assert_eq!(mode_from_syntax(&syn, &mpm), m);
            }
        }
    }
}
