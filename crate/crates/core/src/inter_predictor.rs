//! Block-translation motion estimation against the previous reconstructed
//! frame and the MVD syntax (flags, magnitude, sign) coded per component.
//!
//! MVs are integer-pel. The magnitude suffix (`abs_mvd_minus_2`, coded
//! Golomb-Rice) and the sign are the bypass-coded fields the crypto
//! layer may encrypt; the two greater-than flags are regular-coded and
//! never touched.

use crate::media_io::Plane;

/// Integer-pel motion vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MotionVector {
    pub x: i32,
    pub y: i32,
}

/// Signalled form of one MVD component.
///
/// Invariants by construction: |mvd| = 0 has no further fields,
/// |mvd| = 1 carries only the sign, |mvd| >= 2 carries `abs_minus_2`
/// and the sign. Sign convention: false = non-negative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MvdSyntax {
    Zero,
    Unit { negative: bool },
    AtLeastTwo { abs_minus_2: u32, negative: bool },
}

impl MvdSyntax {
    pub fn abs_gr0(&self) -> bool {
        !matches!(self, MvdSyntax::Zero)
    }

    pub fn abs_gr1(&self) -> bool {
        matches!(self, MvdSyntax::AtLeastTwo { .. })
    }
}

/// Splits an MVD component into flags + magnitude + sign.
pub fn mvd_to_syntax(mvd: i32) -> MvdSyntax {
    let negative = mvd < 0;
    match mvd.unsigned_abs() {
        0 => MvdSyntax::Zero,
        1 => MvdSyntax::Unit { negative },
        a => MvdSyntax::AtLeastTwo {
            abs_minus_2: a - 2,
            negative,
        },
    }
}

pub fn syntax_to_mvd(syntax: &MvdSyntax) -> i32 {
    match *syntax {
        MvdSyntax::Zero => 0,
        MvdSyntax::Unit { negative } => {
            if negative {
                -1
            } else {
                1
            }
        }
        MvdSyntax::AtLeastTwo {
            abs_minus_2,
            negative,
        } => {
            let a = (abs_minus_2 + 2) as i32;
            if negative {
                -a
            } else {
                a
            }
        }
    }
}

/// Component-wise `mv - predictor`.
pub fn compute_mvd(mv: MotionVector, predictor: MotionVector) -> (i32, i32) {
    (mv.x - predictor.x, mv.y - predictor.y)
}

fn block_sad(
    cur: &Plane,
    reference: &Plane,
    x: usize,
    y: usize,
    size: usize,
    dx: i32,
    dy: i32,
) -> u64 {
    let mut acc = 0u64;
    for row in 0..size {
        let cy = y + row;
        let ry = (cy as i32 + dy) as usize;
        let c = &cur.data[cy * cur.width + x..cy * cur.width + x + size];
        let rx = (x as i32 + dx) as usize;
        let r = &reference.data[ry * reference.width + rx..ry * reference.width + rx + size];
        acc += c
            .iter()
            .zip(r)
            .map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs() as u64)
            .sum::<u64>();
    }
    acc
}

/// Exhaustive full search over `[-range, range]^2`, restricted to
/// candidates whose referenced block lies fully inside the reference
/// frame. Ties break to smaller |mvx|+|mvy|, then smaller mvy, then
/// smaller mvx.
pub fn motion_search(
    cur: &Plane,
    reference: &Plane,
    x: usize,
    y: usize,
    size: usize,
    range: i32,
) -> MotionVector {
    debug_assert!(range >= 0);
    let mut best = (u64::MAX, i32::MAX, i32::MAX, i32::MAX);
    let mut best_mv = MotionVector::default();
    for dy in -range..=range {
        let ry = y as i32 + dy;
        if ry < 0 || ry + size as i32 > reference.height as i32 {
            continue;
        }
        for dx in -range..=range {
            let rx = x as i32 + dx;
            if rx < 0 || rx + size as i32 > reference.width as i32 {
                continue;
            }
            let cost = block_sad(cur, reference, x, y, size, dx, dy);
            let key = (cost, dx.abs() + dy.abs(), dy, dx);
            if key < best {
                best = key;
                best_mv = MotionVector { x: dx, y: dy };
            }
        }
    }
    best_mv
}

/// Motion-compensated prediction block. The read origin is clamped into
/// the reference plane, so any MV — including one reconstructed from a
/// wrong-key decode — produces a defined block.
pub fn motion_compensate(
    reference: &Plane,
    x: usize,
    y: usize,
    size: usize,
    mv: MotionVector,
) -> Vec<u8> {
    let ox = (x as i64 + mv.x as i64).clamp(0, (reference.width - size) as i64) as usize;
    let oy = (y as i64 + mv.y as i64).clamp(0, (reference.height - size) as i64) as usize;
    reference.block(ox, oy, size)
}

/// Chroma MV derived from the luma MV at half resolution (floor shift).
pub fn chroma_mv(mv: MotionVector) -> MotionVector {
    MotionVector {
        x: mv.x >> 1,
        y: mv.y >> 1,
    }
}
