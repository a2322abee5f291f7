//! Shared test corpus: four seeded synthetic clips, 17 frames each,
//! coded with GOP 8 at QP {8, 24, 40}.
//
// Each test target pulls in what it needs.
#![allow(dead_code)]

use sevc::media_io::{read_yuv, FrameBuffer};

pub const QPS: [u8; 3] = [8, 24, 40];
pub const GOP: u8 = 8;
pub const CTU: usize = 32;
pub const FRAMES: usize = 17;

pub struct Clip {
    pub name: &'static str,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub bytes: Vec<u8>,
    /// Carries enough structure for the visual-security criteria.
    pub textured: bool,
    /// Has coherent motion for the element-importance criteria.
    pub moving: bool,
}

impl Clip {
    pub fn frame_buffers(&self, ctu_align: usize) -> Vec<FrameBuffer> {
        read_yuv(
            &mut self.bytes.as_slice(),
            self.width,
            self.height,
            self.frames,
            ctu_align,
        )
        .expect("corpus clip reads cleanly")
    }
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn push_chroma(bytes: &mut Vec<u8>, w: usize, h: usize, rng: &mut u64, wobble: u64) {
    for _ in 0..2 * (w / 2) * (h / 2) {
        let n = if wobble == 0 {
            0
        } else {
            (splitmix(rng) % (2 * wobble + 1)) as i32 - wobble as i32
        };
        bytes.push((128 + n) as u8);
    }
}

/// Diagonal stripes plus texture noise plus a bright moving box.
fn gradient_box(w: usize, h: usize, frames: usize, seed: u64) -> Vec<u8> {
    let mut rng = seed;
    let mut bytes = Vec::new();
    for f in 0..frames {
        let bx = (f * 6 + 20) % (w - 24);
        let by = (f * 4 + 12) % (h - 24);
        for y in 0..h {
            for x in 0..w {
                let stripe = 60 + 80 * (((x + 2 * y) / 12) % 2) as i32;
                let noise = (splitmix(&mut rng) % 37) as i32 - 18;
                let v = if x >= bx && x < bx + 24 && y >= by && y < by + 24 {
                    235 + noise / 3
                } else {
                    stripe + noise
                };
                bytes.push(v.clamp(0, 255) as u8);
            }
        }
        push_chroma(&mut bytes, w, h, &mut rng, 6);
    }
    bytes
}

/// Hard checkerboard panning one pixel per frame.
fn checker_pan(w: usize, h: usize, frames: usize, seed: u64) -> Vec<u8> {
    let mut rng = seed;
    let mut bytes = Vec::new();
    let cell = 24;
    for f in 0..frames {
        for y in 0..h {
            for x in 0..w {
                let c = (((x + f) / cell) + (y / cell)) % 2;
                let base = if c == 0 { 40 } else { 215 };
                let noise = (splitmix(&mut rng) % 5) as i32 - 2;
                bytes.push((base + noise).clamp(0, 255) as u8);
            }
        }
        push_chroma(&mut bytes, w, h, &mut rng, 2);
    }
    bytes
}

/// Independent uniform noise every frame.
fn noise(w: usize, h: usize, frames: usize, seed: u64) -> Vec<u8> {
    let mut rng = seed;
    let mut bytes = Vec::new();
    for _ in 0..frames {
        for _ in 0..w * h {
            bytes.push((splitmix(&mut rng) >> 24) as u8);
        }
        push_chroma(&mut bytes, w, h, &mut rng, 20);
    }
    bytes
}

fn flat(w: usize, h: usize, frames: usize) -> Vec<u8> {
    let mut bytes = Vec::new();
    for _ in 0..frames {
        bytes.extend(std::iter::repeat_n(120u8, w * h));
        bytes.extend(std::iter::repeat_n(128u8, 2 * (w / 2) * (h / 2)));
    }
    bytes
}

/// The desk corpus: one 176x144 textured clip and three 64x64 clips.
pub fn corpus() -> Vec<Clip> {
    vec![
        Clip {
            name: "gradient_box",
            width: 176,
            height: 144,
            frames: FRAMES,
            bytes: gradient_box(176, 144, FRAMES, 0x6f1e),
            textured: true,
            moving: true,
        },
        Clip {
            name: "checker_pan",
            width: 64,
            height: 64,
            frames: FRAMES,
            bytes: checker_pan(64, 64, FRAMES, 0xc4ec),
            textured: true,
            moving: true,
        },
        Clip {
            name: "noise",
            width: 64,
            height: 64,
            frames: FRAMES,
            bytes: noise(64, 64, FRAMES, 0x707e),
            textured: false,
            moving: false,
        },
        Clip {
            name: "flat",
            width: 64,
            height: 64,
            frames: FRAMES,
            bytes: flat(64, 64, FRAMES),
            textured: false,
            moving: false,
        },
    ]
}

/// Prints the per-criterion verdict line and asserts it.
pub fn criterion(number: u32, label: &str, pass: bool, detail: &str) {
    println!(
        "[acceptance] criterion {number} ({label}): {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {number} ({label}) failed: {detail}");
}
