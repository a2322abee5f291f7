//! Raw planar 4:2:0 frame I/O and the in-memory picture model.
//!
//! Frames are read from headerless `.yuv` byte streams (Y then Cb then
//! Cr, 8-bit) and padded to a multiple of the CTU size by edge
//! replication. The pre-padding dimensions are kept so output can be
//! cropped back bit-exactly.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// One sample plane, row-major, stride == width.
#[derive(Clone, PartialEq, Eq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Plane {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[u8] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Clamped read; used by prediction at frame borders.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.get(cx, cy)
    }

    /// Copies a `size`x`size` block starting at (x, y) into a flat vector.
    pub fn block(&self, x: usize, y: usize, size: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(size * size);
        for row in 0..size {
            let start = (y + row) * self.width + x;
            out.extend_from_slice(&self.data[start..start + size]);
        }
        out
    }

    pub fn set_block(&mut self, x: usize, y: usize, size: usize, values: &[u8]) {
        debug_assert_eq!(values.len(), size * size);
        for row in 0..size {
            let start = (y + row) * self.width + x;
            self.data[start..start + size].copy_from_slice(&values[row * size..(row + 1) * size]);
        }
    }
}

impl std::fmt::Debug for Plane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Plane({}x{})", self.width, self.height)
    }
}

/// One picture: a luma plane plus two half-resolution chroma planes.
///
/// `width`/`height` are the padded dimensions (multiples of the CTU
/// size used at ingest); `orig_width`/`orig_height` are the source
/// dimensions used when cropping back on output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameBuffer {
    pub width: usize,
    pub height: usize,
    pub orig_width: usize,
    pub orig_height: usize,
    pub bit_depth: u8,
    pub frame_index: usize,
    pub y_plane: Plane,
    pub cb_plane: Plane,
    pub cr_plane: Plane,
}

impl FrameBuffer {
    /// Zero-filled padded frame with the given source dimensions.
    pub fn new(orig_width: usize, orig_height: usize, align: usize, frame_index: usize) -> Self {
        let width = pad_to(orig_width, align);
        let height = pad_to(orig_height, align);
        FrameBuffer {
            width,
            height,
            orig_width,
            orig_height,
            bit_depth: 8,
            frame_index,
            y_plane: Plane::new(width, height),
            cb_plane: Plane::new(width / 2, height / 2),
            cr_plane: Plane::new(width / 2, height / 2),
        }
    }
}

fn pad_to(v: usize, align: usize) -> usize {
    debug_assert!(align >= 1);
    v.div_ceil(align) * align
}

/// Frame byte size of one planar 4:2:0 frame at the given source dimensions.
pub fn frame_byte_size(width: usize, height: usize) -> usize {
    width * height + 2 * ((width / 2) * (height / 2))
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || !width.is_multiple_of(2) || !height.is_multiple_of(2) {
        return Err(Error::BadDimensions { width, height });
    }
    Ok(())
}

/// Fills `plane` from a packed source rectangle, replicating the last
/// source column/row into the padded area.
fn fill_padded(plane: &mut Plane, src: &[u8], src_w: usize, src_h: usize) {
    for y in 0..plane.height {
        let sy = y.min(src_h - 1);
        for x in 0..plane.width {
            let sx = x.min(src_w - 1);
            plane.set(x, y, src[sy * src_w + sx]);
        }
    }
}

/// Reads exactly `max_frames` planar 4:2:0 frames, padding each plane to
/// a multiple of `ctu_align` by edge replication. Pass `ctu_align = 1`
/// for no padding.
pub fn read_yuv(
    source: &mut impl Read,
    width: usize,
    height: usize,
    max_frames: usize,
    ctu_align: usize,
) -> Result<Vec<FrameBuffer>> {
    check_dims(width, height)?;
    if ctu_align == 0 {
        return Err(Error::InvalidConfig("ctu_align must be >= 1".into()));
    }
    let fsize = frame_byte_size(width, height);
    let mut frames = Vec::with_capacity(max_frames);
    let mut buf = vec![0u8; fsize];
    for frame_index in 0..max_frames {
        source
            .read_exact(&mut buf)
            .map_err(|_| Error::TruncatedSource { frame_index })?;
        let mut frame = FrameBuffer::new(width, height, ctu_align, frame_index);
        let (cw, ch) = (width / 2, height / 2);
        let y_bytes = &buf[..width * height];
        let cb_bytes = &buf[width * height..width * height + cw * ch];
        let cr_bytes = &buf[width * height + cw * ch..];
        fill_padded(&mut frame.y_plane, y_bytes, width, height);
        fill_padded(&mut frame.cb_plane, cb_bytes, cw, ch);
        fill_padded(&mut frame.cr_plane, cr_bytes, cw, ch);
        frames.push(frame);
    }
    Ok(frames)
}

/// Writes frames as planar 4:2:0 bytes, cropped back to the source
/// dimensions. Returns the number of bytes written.
pub fn write_yuv(frames: &[FrameBuffer], sink: &mut impl Write) -> Result<u64> {
    if frames.is_empty() {
        return Ok(0);
    }
    let first = &frames[0];
    let mut written = 0u64;
    for frame in frames {
        if frame.orig_width != first.orig_width
            || frame.orig_height != first.orig_height
            || frame.width != first.width
            || frame.bit_depth != first.bit_depth
        {
            return Err(Error::MixedDimensions);
        }
        written += write_plane_cropped(&frame.y_plane, frame.orig_width, frame.orig_height, sink)?;
        written += write_plane_cropped(
            &frame.cb_plane,
            frame.orig_width / 2,
            frame.orig_height / 2,
            sink,
        )?;
        written += write_plane_cropped(
            &frame.cr_plane,
            frame.orig_width / 2,
            frame.orig_height / 2,
            sink,
        )?;
    }
    Ok(written)
}

fn write_plane_cropped(
    plane: &Plane,
    crop_w: usize,
    crop_h: usize,
    sink: &mut impl Write,
) -> Result<u64> {
    for y in 0..crop_h {
        sink.write_all(&plane.row(y)[..crop_w])?;
    }
    Ok((crop_w * crop_h) as u64)
}
