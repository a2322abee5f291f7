//! Encode/decode orchestration: frame loop, GOP handling, CU coding
//! order, the encryption hook applied between syntax generation and
//! binarization, and the container framing.
//!
//! The encoder's reference reconstructions are built from the plaintext
//! element values (it knows them), so a correct-key decode reproduces the
//! encoder-internal reconstruction bit-exactly. A decode without the key
//! parses the identical structure and simply uses the enciphered values,
//! which stay inside every syntactic range by construction.

mod container;

pub use container::{ContainerHeader, FrameType, HEADER_LEN};

use crate::entropy_coder::{BinDecoder, BinEncoder, ContextState, Ctx, MVD_RICE_K};
use crate::error::{Error, Result};
use crate::inter_predictor::{
    chroma_mv, compute_mvd, motion_compensate, motion_search, mvd_to_syntax, syntax_to_mvd,
    MotionVector, MvdSyntax,
};
use crate::intra_predictor::{
    build_mpm_list, gather_references, mode_from_syntax, predict_intra, select_intra_mode,
    IntraMode, IpmSyntax, DC, MPM_SIZE,
};
use crate::media_io::{FrameBuffer, Plane};
use crate::partitioner::{
    lambda_for_qp, partition_ctu, PartitionConfig, PartitionNode, PartitionTree,
};
use crate::residual_coder::{
    apply_sign_pattern, dequant_itransform, extract_sign_pattern, transform_quant, CoeffBlock,
    SignPattern,
};
use crate::selective_crypto::{
    ClassSet, ElementClass, EncryptionConfig, Encryptor, Keystream, UnitContext, MAX_COORD,
    MAX_FRAMES_ENCRYPTED,
};

/// Encoder settings. Partition depth, minimum CU size, and search range
/// are fixed derivations in v1 (the container does not carry them), so
/// the decoder re-derives identical values from the header.
#[derive(Clone, Copy, Debug)]
pub struct EncoderConfig {
    pub qp: u8,
    pub gop_size: u8,
    pub ctu_size: usize,
}

pub const MAX_TRANSFORM_SIZE: usize = 32;
const SEARCH_RANGE: i32 = 8;
/// Flagged split levels below any forced (transform-bound) splits.
const FLAGGED_DEPTH: u8 = 2;

impl EncoderConfig {
    pub fn new(qp: u8, gop_size: u8, ctu_size: usize) -> Self {
        EncoderConfig {
            qp,
            gop_size,
            ctu_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.qp > 51 {
            return Err(Error::InvalidConfig(format!("qp {} > 51", self.qp)));
        }
        if self.gop_size == 0 {
            return Err(Error::InvalidConfig("gop_size must be >= 1".into()));
        }
        if !self.ctu_size.is_power_of_two() || !(8..=128).contains(&self.ctu_size) {
            return Err(Error::InvalidConfig(format!(
                "ctu_size {} must be a power of two in [8, 128]",
                self.ctu_size
            )));
        }
        Ok(())
    }

    pub fn min_cu_size(&self) -> usize {
        8.min(self.ctu_size)
    }

    /// Total split depth: two flagged levels plus any splits forced by
    /// the maximum transform size.
    pub fn max_depth(&self) -> u8 {
        let forced = if self.ctu_size > MAX_TRANSFORM_SIZE {
            (self.ctu_size / MAX_TRANSFORM_SIZE).trailing_zeros() as u8
        } else {
            0
        };
        FLAGGED_DEPTH + forced
    }

    pub fn partition_config(&self) -> PartitionConfig {
        PartitionConfig::new(
            self.ctu_size,
            self.min_cu_size(),
            self.max_depth(),
            lambda_for_qp(self.qp),
        )
        .with_max_leaf(self.ctu_size.min(MAX_TRANSFORM_SIZE))
    }
}

/// One encode request.
pub struct EncodeJob {
    pub frames: Vec<FrameBuffer>,
    pub config: EncoderConfig,
    pub encryption: EncryptionConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassCount {
    pub elements: u64,
    pub bits: u64,
}

/// Per-class, per-frame-type accounting of what was actually enciphered.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EncryptionLedger {
    counts: [[ClassCount; 2]; 4],
}

fn class_slot(class: ElementClass) -> usize {
    class.bit() as usize
}

fn type_slot(ftype: FrameType) -> usize {
    match ftype {
        FrameType::I => 0,
        FrameType::P => 1,
    }
}

impl EncryptionLedger {
    pub fn record(&mut self, class: ElementClass, ftype: FrameType, bits: u64) {
        let c = &mut self.counts[class_slot(class)][type_slot(ftype)];
        c.elements += 1;
        c.bits += bits;
    }

    pub fn set_counts(&mut self, class: ElementClass, ftype: FrameType, count: ClassCount) {
        self.counts[class_slot(class)][type_slot(ftype)] = count;
    }

    pub fn class_frame(&self, class: ElementClass, ftype: FrameType) -> ClassCount {
        self.counts[class_slot(class)][type_slot(ftype)]
    }

    pub fn class_total(&self, class: ElementClass) -> ClassCount {
        let i = self.counts[class_slot(class)][0];
        let p = self.counts[class_slot(class)][1];
        ClassCount {
            elements: i.elements + p.elements,
            bits: i.bits + p.bits,
        }
    }

    pub fn total(&self) -> ClassCount {
        ElementClass::ALL
            .iter()
            .fold(ClassCount::default(), |acc, &c| {
                let t = self.class_total(c);
                ClassCount {
                    elements: acc.elements + t.elements,
                    bits: acc.bits + t.bits,
                }
            })
    }

    pub fn is_zero(&self) -> bool {
        self.total() == ClassCount::default()
    }
}

pub struct EncodeOutput {
    pub bitstream: Vec<u8>,
    pub ledger: EncryptionLedger,
    /// Byte-aligned payload bits summed over frames.
    pub payload_bits: u64,
    pub frame_payload_bits: Vec<u64>,
    pub frame_types: Vec<FrameType>,
    /// Encoder-internal reconstructions (padded dimensions).
    pub recon_frames: Vec<FrameBuffer>,
}

pub struct DecodeOutput {
    pub frames: Vec<FrameBuffer>,
    pub header: ContainerHeader,
    /// Decoder-side re-walk of the enciphered elements; equals the
    /// encoder ledger for any key, since the walk is structural.
    pub recount: EncryptionLedger,
}

fn validate_job(job: &EncodeJob) -> Result<()> {
    job.config.validate()?;
    let frames = &job.frames;
    if frames.is_empty() {
        return Err(Error::InvalidConfig("no frames to encode".into()));
    }
    let first = &frames[0];
    for f in frames {
        if f.orig_width != first.orig_width
            || f.orig_height != first.orig_height
            || f.width != first.width
            || f.bit_depth != 8
        {
            return Err(Error::MixedDimensions);
        }
    }
    if !first.width.is_multiple_of(job.config.ctu_size) || !first.height.is_multiple_of(job.config.ctu_size) {
        return Err(Error::InvalidConfig(
            "frames must be padded to the CTU size (read them with the same --ctu)".into(),
        ));
    }
    if first.orig_width > u16::MAX as usize || first.orig_height > u16::MAX as usize {
        return Err(Error::InvalidConfig("frame dimensions exceed container limits".into()));
    }
    if frames.len() > u32::MAX as usize {
        return Err(Error::InvalidConfig("too many frames".into()));
    }
    if !job.encryption.classes.is_empty() {
        if first.width > MAX_COORD as usize + 1 || first.height > MAX_COORD as usize + 1 {
            return Err(Error::CounterCapacity(format!(
                "padded {}x{} exceeds the 14-bit position fields",
                first.width, first.height
            )));
        }
        if frames.len() > MAX_FRAMES_ENCRYPTED as usize {
            return Err(Error::CounterCapacity(format!(
                "{} frames exceed the spill-free frame field",
                frames.len()
            )));
        }
    }
    Ok(())
}

/// Encodes a job into a container. `keystream` is required exactly when
/// the job enables any encryption class.
pub fn encode(job: &EncodeJob, keystream: Option<&Keystream>) -> Result<EncodeOutput> {
    validate_job(job)?;
    let classes = job.encryption.classes;
    if !classes.is_empty() && keystream.is_none() {
        return Err(Error::InvalidConfig(
            "encryption classes enabled but no key supplied".into(),
        ));
    }
    let crypto = keystream
        .filter(|_| !classes.is_empty())
        .map(|ks| Encryptor::new(ks.cipher(), job.encryption.nonce, classes));

    let first = &job.frames[0];
    let header = ContainerHeader {
        width: first.orig_width as u16,
        height: first.orig_height as u16,
        bit_depth: 8,
        qp: job.config.qp,
        gop_size: job.config.gop_size,
        ctu_size: job.config.ctu_size as u8,
        enc_flags: classes,
        nonce: job.encryption.nonce,
        frame_count: job.frames.len() as u32,
    };
    let mut bitstream = Vec::new();
    container::write_header(&header, &mut bitstream);

    let mut ledger = EncryptionLedger::default();
    let mut recon_frames: Vec<FrameBuffer> = Vec::with_capacity(job.frames.len());
    let mut frame_payload_bits = Vec::with_capacity(job.frames.len());
    let mut frame_types = Vec::with_capacity(job.frames.len());

    for (idx, frame) in job.frames.iter().enumerate() {
        let ftype = if idx % job.config.gop_size as usize == 0 {
            FrameType::I
        } else {
            FrameType::P
        };
        let prev = match ftype {
            FrameType::I => None,
            FrameType::P => recon_frames.last(),
        };
        let (payload, recon) = encode_frame(
            frame,
            prev,
            idx as u32,
            ftype,
            &job.config,
            classes,
            crypto.as_ref(),
            &mut ledger,
        )?;
        bitstream.push(ftype.to_byte());
        bitstream.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        frame_payload_bits.push(payload.len() as u64 * 8);
        bitstream.extend_from_slice(&payload);
        frame_types.push(ftype);
        recon_frames.push(recon);
    }

    Ok(EncodeOutput {
        bitstream,
        ledger,
        payload_bits: frame_payload_bits.iter().sum(),
        frame_payload_bits,
        frame_types,
        recon_frames,
    })
}

/// Decodes a container. Without a keystream (or with a wrong one) the
/// stream still parses completely; the output is merely scrambled.
pub fn decode(bytes: &[u8], keystream: Option<&Keystream>) -> Result<DecodeOutput> {
    let mut reader = container::ByteReader::new(bytes);
    let header = container::read_header(&mut reader)?;
    let classes = header.enc_flags;
    let crypto = keystream
        .filter(|_| !classes.is_empty())
        .map(|ks| Encryptor::new(ks.cipher(), header.nonce, classes));
    let config = EncoderConfig::new(header.qp, header.gop_size, header.ctu_size as usize);
    config.validate().map_err(|e| Error::CorruptStream(e.to_string()))?;

    let mut frames: Vec<FrameBuffer> = Vec::with_capacity(header.frame_count as usize);
    let mut recount = EncryptionLedger::default();
    for idx in 0..header.frame_count {
        let ftype = FrameType::from_byte(reader.u8()?)?;
        let len = reader.u32()? as usize;
        let payload = reader.take(len)?;
        if ftype == FrameType::P && frames.is_empty() {
            return Err(Error::CorruptStream("P frame without a reference".into()));
        }
        let prev = match ftype {
            FrameType::I => None,
            FrameType::P => frames.last(),
        };
        let frame = decode_frame(
            payload,
            &header,
            prev,
            idx,
            ftype,
            &config,
            classes,
            crypto.as_ref(),
            &mut recount,
        )?;
        frames.push(frame);
    }
    Ok(DecodeOutput {
        frames,
        header,
        recount,
    })
}

fn unit_ctx(frame: u32, cu_x: usize, cu_y: usize, class: ElementClass, ordinal: u32) -> UnitContext {
    UnitContext {
        frame_index: frame,
        x: cu_x as u32,
        y: cu_y as u32,
        element_tag: class.tag(),
        ordinal,
    }
}

fn clamp_u8(v: i32) -> u8 {
    v.clamp(0, 255) as u8
}

fn add_residual(pred: &[u8], res: &[i32]) -> Vec<u8> {
    pred.iter()
        .zip(res)
        .map(|(&p, &r)| clamp_u8(p as i32 + r))
        .collect()
}

fn sad(a: &[u8], b: &[u8]) -> u64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as i32 - y as i32).unsigned_abs() as u64)
        .sum()
}

/// Per-frame coding state shared by the mirrored encoder/decoder walks.
struct FrameState {
    mode_map: Vec<Option<IntraMode>>,
    grid_w: usize,
    cell: usize,
    mv_pred: Option<MotionVector>,
}

impl FrameState {
    fn new(width: usize, height: usize, cell: usize) -> Self {
        let grid_w = width / cell;
        let grid_h = height / cell;
        FrameState {
            mode_map: vec![None; grid_w * grid_h],
            grid_w,
            cell,
            mv_pred: None,
        }
    }

    fn neighbor_modes(&self, x: usize, y: usize) -> (Option<IntraMode>, Option<IntraMode>) {
        let above = if y > 0 {
            self.mode_map[(y - 1) / self.cell * self.grid_w + x / self.cell]
        } else {
            None
        };
        let left = if x > 0 {
            self.mode_map[y / self.cell * self.grid_w + (x - 1) / self.cell]
        } else {
            None
        };
        (above, left)
    }

    fn mpm(&self, x: usize, y: usize) -> [IntraMode; MPM_SIZE] {
        let (above, left) = self.neighbor_modes(x, y);
        build_mpm_list(above, left)
    }

    fn set_mode(&mut self, x: usize, y: usize, size: usize, mode: Option<IntraMode>) {
        for cy in (y / self.cell)..((y + size) / self.cell) {
            for cx in (x / self.cell)..((x + size) / self.cell) {
                self.mode_map[cy * self.grid_w + cx] = mode;
            }
        }
    }

    fn predictor(&self) -> MotionVector {
        self.mv_pred.unwrap_or_default()
    }
}

/// Per-(CU, tag) occurrence counters for the counter block.
#[derive(Default)]
struct CuOrdinals {
    mvd_value: u32,
    mvd_sign: u32,
    residual_sign: u32,
}

#[allow(clippy::too_many_arguments)]
fn encode_frame(
    frame: &FrameBuffer,
    prev: Option<&FrameBuffer>,
    findex: u32,
    ftype: FrameType,
    config: &EncoderConfig,
    classes: ClassSet,
    crypto: Option<&Encryptor>,
    ledger: &mut EncryptionLedger,
) -> Result<(Vec<u8>, FrameBuffer)> {
    let pcfg = config.partition_config();
    let lambda_pred = lambda_for_qp(config.qp).sqrt();
    let mut recon = FrameBuffer::new(frame.orig_width, frame.orig_height, config.ctu_size, findex as usize);
    let mut state = FrameState::new(frame.width, frame.height, config.min_cu_size());
    let mut enc = BinEncoder::new();
    let mut ctxs = ContextState::new();

    let luma = &frame.y_plane;
    for ctu_y in (0..frame.height).step_by(config.ctu_size) {
        for ctu_x in (0..frame.width).step_by(config.ctu_size) {
            let cost_fn = |x: usize, y: usize, size: usize| leaf_cost(luma, x, y, size);
            let tree = partition_ctu(ctu_x, ctu_y, &pcfg, &cost_fn);
            encode_tree(
                &tree, &pcfg, frame, prev, findex, ftype, config, classes, crypto, ledger,
                &mut state, &mut recon, &mut enc, &mut ctxs, lambda_pred,
            )?;
        }
    }
    Ok((enc.finish(), recon))
}

/// Flat bits estimate plus SSE about the block mean; the partitioning
/// rate-distortion proxy.
fn leaf_cost(plane: &Plane, x: usize, y: usize, size: usize) -> (f64, f64) {
    let mut sum = 0u64;
    for r in 0..size {
        let row = &plane.data[(y + r) * plane.width + x..(y + r) * plane.width + x + size];
        sum += row.iter().map(|&v| v as u64).sum::<u64>();
    }
    let mean = sum as f64 / (size * size) as f64;
    let mut sse = 0.0;
    for r in 0..size {
        let row = &plane.data[(y + r) * plane.width + x..(y + r) * plane.width + x + size];
        for &v in row {
            let d = v as f64 - mean;
            sse += d * d;
        }
    }
    (24.0, sse)
}

#[allow(clippy::too_many_arguments)]
fn encode_tree(
    tree: &PartitionTree,
    pcfg: &PartitionConfig,
    frame: &FrameBuffer,
    prev: Option<&FrameBuffer>,
    findex: u32,
    ftype: FrameType,
    config: &EncoderConfig,
    classes: ClassSet,
    crypto: Option<&Encryptor>,
    ledger: &mut EncryptionLedger,
    state: &mut FrameState,
    recon: &mut FrameBuffer,
    enc: &mut BinEncoder,
    ctxs: &mut ContextState,
    lambda_pred: f64,
) -> Result<()> {
    // Depth-first pre-order, flags interleaved exactly as the decoder
    // replays them.
    fn walk(
        node: &PartitionNode,
        x: usize,
        y: usize,
        size: usize,
        depth: u8,
        pcfg: &PartitionConfig,
        enc: &mut BinEncoder,
        ctxs: &mut ContextState,
        cu_sink: &mut impl FnMut(usize, usize, usize, &mut BinEncoder, &mut ContextState) -> Result<()>,
    ) -> Result<()> {
        let split = matches!(node, PartitionNode::Split(_));
        if pcfg.emits_flag(size, depth) {
            enc.encode_regular(split, ctxs, Ctx::SplitFlag);
        }
        match node {
            PartitionNode::Leaf => cu_sink(x, y, size, enc, ctxs),
            PartitionNode::Split(children) => {
                let h = size / 2;
                for (child, (dx, dy)) in children.iter().zip([(0, 0), (h, 0), (0, h), (h, h)]) {
                    walk(child, x + dx, y + dy, h, depth + 1, pcfg, enc, ctxs, cu_sink)?;
                }
                Ok(())
            }
        }
    }

    let mut sink = |x: usize, y: usize, size: usize, enc: &mut BinEncoder, ctxs: &mut ContextState| {
        encode_cu(
            x, y, size, frame, prev, findex, ftype, config, classes, crypto, ledger, state,
            recon, enc, ctxs, lambda_pred,
        )
    };
    walk(
        &tree.root,
        tree.ctu_x,
        tree.ctu_y,
        pcfg.ctu_size,
        0,
        pcfg,
        enc,
        ctxs,
        &mut sink,
    )
}

#[allow(clippy::too_many_arguments)]
fn encode_cu(
    x: usize,
    y: usize,
    size: usize,
    frame: &FrameBuffer,
    prev: Option<&FrameBuffer>,
    findex: u32,
    ftype: FrameType,
    config: &EncoderConfig,
    classes: ClassSet,
    crypto: Option<&Encryptor>,
    ledger: &mut EncryptionLedger,
    state: &mut FrameState,
    recon: &mut FrameBuffer,
    enc: &mut BinEncoder,
    ctxs: &mut ContextState,
    lambda_pred: f64,
) -> Result<()> {
    let orig = frame.y_plane.block(x, y, size);
    let mut ords = CuOrdinals::default();

    let inter = if let (FrameType::P, Some(prev_frame)) = (ftype, prev) {
        let mv = motion_search(&frame.y_plane, &prev_frame.y_plane, x, y, size, SEARCH_RANGE);
        let pred_inter = motion_compensate(&prev_frame.y_plane, x, y, size, mv);
        let (dx, dy) = compute_mvd(mv, state.predictor());
        let bits_inter =
            6.0 + 2.0 * ((1 + dx.abs()) as f64).log2() + 2.0 * ((1 + dy.abs()) as f64).log2();
        let cost_inter = sad(&orig, &pred_inter) as f64 + lambda_pred * bits_inter;

        let refs = gather_references(&recon.y_plane, x, y, size);
        let (mode, _) = select_intra_mode(&orig, &refs, &state.mpm(x, y));
        let pred_intra = predict_intra(&refs, mode, size);
        let cost_intra = sad(&orig, &pred_intra) as f64 + lambda_pred * 8.0;

        let choose_inter = cost_inter <= cost_intra;
        enc.encode_regular(choose_inter, ctxs, Ctx::CuIsInter);
        choose_inter.then_some(mv)
    } else {
        None
    };

    if let Some(mv) = inter {
        let prev_frame = prev.expect("inter CU requires a reference");
        let (dx, dy) = compute_mvd(mv, state.predictor());
        for mvd in [dx, dy] {
            let syn = mvd_to_syntax(mvd);
            let vctx = unit_ctx(
                findex,
                x,
                y,
                ElementClass::MvdValue,
                if syn.abs_gr1() {
                    let o = ords.mvd_value;
                    ords.mvd_value += 1;
                    o
                } else {
                    0
                },
            );
            let sctx = unit_ctx(
                findex,
                x,
                y,
                ElementClass::MvdSign,
                if syn.abs_gr0() {
                    let o = ords.mvd_sign;
                    ords.mvd_sign += 1;
                    o
                } else {
                    0
                },
            );
            if classes.contains(ElementClass::MvdValue) && syn.abs_gr1() {
                ledger.record(ElementClass::MvdValue, ftype, MVD_RICE_K as u64);
            }
            if classes.contains(ElementClass::MvdSign) && syn.abs_gr0() {
                ledger.record(ElementClass::MvdSign, ftype, 1);
            }
            let coded = match crypto {
                Some(c) => c.encrypt_mvd(syn, &vctx, &sctx),
                None => syn,
            };
            write_mvd_component(enc, ctxs, &coded)?;
        }
        // Prediction and reconstruction use the plaintext vector.
        let pred_y = motion_compensate(&prev_frame.y_plane, x, y, size, mv);
        code_plane_residual(
            PlaneSel::Y, x, y, size, &pred_y, frame, findex, ftype, config, classes, crypto,
            ledger, &mut ords, recon, enc, ctxs,
        )?;
        let cmv = chroma_mv(mv);
        let (cx, cy, csize) = (x / 2, y / 2, size / 2);
        let pred_cb = motion_compensate(&prev_frame.cb_plane, cx, cy, csize, cmv);
        code_plane_residual(
            PlaneSel::Cb, cx, cy, csize, &pred_cb, frame, findex, ftype, config, classes, crypto,
            ledger, &mut ords, recon, enc, ctxs,
        )?;
        let pred_cr = motion_compensate(&prev_frame.cr_plane, cx, cy, csize, cmv);
        code_plane_residual(
            PlaneSel::Cr, cx, cy, csize, &pred_cr, frame, findex, ftype, config, classes, crypto,
            ledger, &mut ords, recon, enc, ctxs,
        )?;
        state.set_mode(x, y, size, None);
        state.mv_pred = Some(mv);
    } else {
        let mpm = state.mpm(x, y);
        let refs = gather_references(&recon.y_plane, x, y, size);
        let (mode, syn) = select_intra_mode(&orig, &refs, &mpm);
        let ipm_ctx = unit_ctx(findex, x, y, ElementClass::LumaIpm, 0);
        if classes.contains(ElementClass::LumaIpm) {
            let bits = if syn.is_mpm() { 3 } else { 6 };
            ledger.record(ElementClass::LumaIpm, ftype, bits);
        }
        let coded = match crypto {
            Some(c) => c.encrypt_ipm(syn, &ipm_ctx),
            None => syn,
        };
        write_ipm(enc, ctxs, &coded)?;
        // Prediction and reconstruction use the plaintext mode.
        let pred_y = predict_intra(&refs, mode, size);
        code_plane_residual(
            PlaneSel::Y, x, y, size, &pred_y, frame, findex, ftype, config, classes, crypto,
            ledger, &mut ords, recon, enc, ctxs,
        )?;
        // Chroma always predicts DC in v1.
        let (cx, cy, csize) = (x / 2, y / 2, size / 2);
        let crefs = gather_references(&recon.cb_plane, cx, cy, csize);
        let pred_cb = predict_intra(&crefs, IntraMode::new(DC), csize);
        code_plane_residual(
            PlaneSel::Cb, cx, cy, csize, &pred_cb, frame, findex, ftype, config, classes, crypto,
            ledger, &mut ords, recon, enc, ctxs,
        )?;
        let crefs = gather_references(&recon.cr_plane, cx, cy, csize);
        let pred_cr = predict_intra(&crefs, IntraMode::new(DC), csize);
        code_plane_residual(
            PlaneSel::Cr, cx, cy, csize, &pred_cr, frame, findex, ftype, config, classes, crypto,
            ledger, &mut ords, recon, enc, ctxs,
        )?;
        state.set_mode(x, y, size, Some(mode));
    }
    Ok(())
}

fn write_ipm(enc: &mut BinEncoder, ctxs: &mut ContextState, syn: &IpmSyntax) -> Result<()> {
    match *syn {
        IpmSyntax::Mpm { index } => {
            enc.encode_regular(true, ctxs, Ctx::IsMpm);
            enc.encode_truncated_unary(index as u32, 5)?;
        }
        IpmSyntax::Remaining { rem } => {
            enc.encode_regular(false, ctxs, Ctx::IsMpm);
            enc.encode_fixed_length(rem as u32, 6)?;
        }
    }
    Ok(())
}

fn write_mvd_component(
    enc: &mut BinEncoder,
    ctxs: &mut ContextState,
    syn: &MvdSyntax,
) -> Result<()> {
    enc.encode_regular(syn.abs_gr0(), ctxs, Ctx::MvdAbsGr0);
    match *syn {
        MvdSyntax::Zero => {}
        MvdSyntax::Unit { negative } => {
            enc.encode_regular(false, ctxs, Ctx::MvdAbsGr1);
            enc.encode_bypass(negative);
        }
        MvdSyntax::AtLeastTwo {
            abs_minus_2,
            negative,
        } => {
            enc.encode_regular(true, ctxs, Ctx::MvdAbsGr1);
            enc.encode_golomb_rice(abs_minus_2, MVD_RICE_K);
            enc.encode_bypass(negative);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug)]
enum PlaneSel {
    Y,
    Cb,
    Cr,
}

fn plane_of(frame: &FrameBuffer, sel: PlaneSel) -> &Plane {
    match sel {
        PlaneSel::Y => &frame.y_plane,
        PlaneSel::Cb => &frame.cb_plane,
        PlaneSel::Cr => &frame.cr_plane,
    }
}

fn plane_of_mut(frame: &mut FrameBuffer, sel: PlaneSel) -> &mut Plane {
    match sel {
        PlaneSel::Y => &mut frame.y_plane,
        PlaneSel::Cb => &mut frame.cb_plane,
        PlaneSel::Cr => &mut frame.cr_plane,
    }
}

#[allow(clippy::too_many_arguments)]
fn code_plane_residual(
    sel: PlaneSel,
    x: usize,
    y: usize,
    size: usize,
    pred: &[u8],
    frame: &FrameBuffer,
    findex: u32,
    ftype: FrameType,
    config: &EncoderConfig,
    classes: ClassSet,
    crypto: Option<&Encryptor>,
    ledger: &mut EncryptionLedger,
    ords: &mut CuOrdinals,
    recon: &mut FrameBuffer,
    enc: &mut BinEncoder,
    ctxs: &mut ContextState,
) -> Result<()> {
    let orig = plane_of(frame, sel).block(x, y, size);
    let residual: Vec<i32> = orig
        .iter()
        .zip(pred)
        .map(|(&o, &p)| o as i32 - p as i32)
        .collect();
    let coeffs = transform_quant(&residual, size, config.qp);
    let (pattern, mags) = extract_sign_pattern(&coeffs);

    // The crypto layer sees the pattern before binarization; counter
    // contexts carry the luma CU origin for chroma blocks too.
    let (cu_x, cu_y) = match sel {
        PlaneSel::Y => (x, y),
        PlaneSel::Cb | PlaneSel::Cr => (x * 2, y * 2),
    };
    let coded_pattern = if !pattern.is_empty() && classes.contains(ElementClass::ResidualSign) {
        let ctx = unit_ctx(findex, cu_x, cu_y, ElementClass::ResidualSign, ords.residual_sign);
        ords.residual_sign += Encryptor::sign_pattern_chunks(pattern.len());
        ledger.record(ElementClass::ResidualSign, ftype, pattern.len() as u64);
        match crypto {
            Some(c) => c.encrypt_sign_pattern(&pattern, &ctx),
            None => pattern.clone(),
        }
    } else {
        pattern.clone()
    };

    for &m in &mags {
        enc.encode_regular(m != 0, ctxs, Ctx::SigFlag);
    }
    for &m in mags.iter().filter(|&&m| m != 0) {
        enc.encode_golomb_rice(m - 1, 0);
    }
    for &bit in &coded_pattern.bits {
        enc.encode_bypass(bit);
    }

    // Reconstruction from the plaintext signs.
    let levels = apply_sign_pattern(&mags, &pattern);
    let res = dequant_itransform(
        &CoeffBlock {
            size,
            levels,
        },
        config.qp,
    );
    let block = add_residual(pred, &res);
    plane_of_mut(recon, sel).set_block(x, y, size, &block);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn decode_frame(
    payload: &[u8],
    header: &ContainerHeader,
    prev: Option<&FrameBuffer>,
    findex: u32,
    ftype: FrameType,
    config: &EncoderConfig,
    classes: ClassSet,
    crypto: Option<&Encryptor>,
    recount: &mut EncryptionLedger,
) -> Result<FrameBuffer> {
    let pcfg = config.partition_config();
    let mut recon = FrameBuffer::new(
        header.width as usize,
        header.height as usize,
        config.ctu_size,
        findex as usize,
    );
    let mut state = FrameState::new(recon.width, recon.height, config.min_cu_size());
    let mut dec = BinDecoder::new(payload)?;
    let mut ctxs = ContextState::new();

    let (w, h) = (recon.width, recon.height);
    for ctu_y in (0..h).step_by(config.ctu_size) {
        for ctu_x in (0..w).step_by(config.ctu_size) {
            decode_node(
                ctu_x, ctu_y, pcfg.ctu_size, 0, &pcfg, prev, findex, ftype, config, classes,
                crypto, recount, &mut state, &mut recon, &mut dec, &mut ctxs,
            )?;
        }
    }
    Ok(recon)
}

#[allow(clippy::too_many_arguments)]
fn decode_node(
    x: usize,
    y: usize,
    size: usize,
    depth: u8,
    pcfg: &PartitionConfig,
    prev: Option<&FrameBuffer>,
    findex: u32,
    ftype: FrameType,
    config: &EncoderConfig,
    classes: ClassSet,
    crypto: Option<&Encryptor>,
    recount: &mut EncryptionLedger,
    state: &mut FrameState,
    recon: &mut FrameBuffer,
    dec: &mut BinDecoder,
    ctxs: &mut ContextState,
) -> Result<()> {
    let split = if pcfg.must_split(size) {
        true
    } else if pcfg.emits_flag(size, depth) {
        dec.decode_regular(ctxs, Ctx::SplitFlag)?
    } else {
        false
    };
    if split {
        let half = size / 2;
        for (dx, dy) in [(0, 0), (half, 0), (0, half), (half, half)] {
            decode_node(
                x + dx, y + dy, half, depth + 1, pcfg, prev, findex, ftype, config, classes,
                crypto, recount, state, recon, dec, ctxs,
            )?;
        }
        return Ok(());
    }
    decode_cu(
        x, y, size, prev, findex, ftype, config, classes, crypto, recount, state, recon, dec,
        ctxs,
    )
}

#[allow(clippy::too_many_arguments)]
fn decode_cu(
    x: usize,
    y: usize,
    size: usize,
    prev: Option<&FrameBuffer>,
    findex: u32,
    ftype: FrameType,
    config: &EncoderConfig,
    classes: ClassSet,
    crypto: Option<&Encryptor>,
    recount: &mut EncryptionLedger,
    state: &mut FrameState,
    recon: &mut FrameBuffer,
    dec: &mut BinDecoder,
    ctxs: &mut ContextState,
) -> Result<()> {
    let mut ords = CuOrdinals::default();
    let inter = match ftype {
        FrameType::I => false,
        FrameType::P => dec.decode_regular(ctxs, Ctx::CuIsInter)?,
    };

    if inter {
        let prev_frame = prev.ok_or_else(|| Error::CorruptStream("missing reference".into()))?;
        let mut comps = [0i32; 2];
        for comp in comps.iter_mut() {
            let syn = read_mvd_component(dec, ctxs)?;
            let vctx = unit_ctx(
                findex,
                x,
                y,
                ElementClass::MvdValue,
                if syn.abs_gr1() {
                    let o = ords.mvd_value;
                    ords.mvd_value += 1;
                    o
                } else {
                    0
                },
            );
            let sctx = unit_ctx(
                findex,
                x,
                y,
                ElementClass::MvdSign,
                if syn.abs_gr0() {
                    let o = ords.mvd_sign;
                    ords.mvd_sign += 1;
                    o
                } else {
                    0
                },
            );
            if classes.contains(ElementClass::MvdValue) && syn.abs_gr1() {
                recount.record(ElementClass::MvdValue, ftype, MVD_RICE_K as u64);
            }
            if classes.contains(ElementClass::MvdSign) && syn.abs_gr0() {
                recount.record(ElementClass::MvdSign, ftype, 1);
            }
            let plain = match crypto {
                Some(c) => c.encrypt_mvd(syn, &vctx, &sctx),
                None => syn,
            };
            *comp = syntax_to_mvd(&plain);
        }
        let pred_mv = state.predictor();
        let mv = MotionVector {
            x: pred_mv.x + comps[0],
            y: pred_mv.y + comps[1],
        };
        let pred_y = motion_compensate(&prev_frame.y_plane, x, y, size, mv);
        decode_plane_residual(
            PlaneSel::Y, x, y, size, &pred_y, findex, ftype, config, classes, crypto, recount,
            &mut ords, recon, dec, ctxs,
        )?;
        let cmv = chroma_mv(mv);
        let (cx, cy, csize) = (x / 2, y / 2, size / 2);
        let pred_cb = motion_compensate(&prev_frame.cb_plane, cx, cy, csize, cmv);
        decode_plane_residual(
            PlaneSel::Cb, cx, cy, csize, &pred_cb, findex, ftype, config, classes, crypto,
            recount, &mut ords, recon, dec, ctxs,
        )?;
        let pred_cr = motion_compensate(&prev_frame.cr_plane, cx, cy, csize, cmv);
        decode_plane_residual(
            PlaneSel::Cr, cx, cy, csize, &pred_cr, findex, ftype, config, classes, crypto,
            recount, &mut ords, recon, dec, ctxs,
        )?;
        state.set_mode(x, y, size, None);
        state.mv_pred = Some(mv);
    } else {
        let syn = read_ipm(dec, ctxs)?;
        let ipm_ctx = unit_ctx(findex, x, y, ElementClass::LumaIpm, 0);
        if classes.contains(ElementClass::LumaIpm) {
            let bits = if syn.is_mpm() { 3 } else { 6 };
            recount.record(ElementClass::LumaIpm, ftype, bits);
        }
        let plain = match crypto {
            Some(c) => c.encrypt_ipm(syn, &ipm_ctx),
            None => syn,
        };
        let mpm = state.mpm(x, y);
        let mode = mode_from_syntax(&plain, &mpm);
        let refs = gather_references(&recon.y_plane, x, y, size);
        let pred_y = predict_intra(&refs, mode, size);
        decode_plane_residual(
            PlaneSel::Y, x, y, size, &pred_y, findex, ftype, config, classes, crypto, recount,
            &mut ords, recon, dec, ctxs,
        )?;
        let (cx, cy, csize) = (x / 2, y / 2, size / 2);
        let crefs = gather_references(&recon.cb_plane, cx, cy, csize);
        let pred_cb = predict_intra(&crefs, IntraMode::new(DC), csize);
        decode_plane_residual(
            PlaneSel::Cb, cx, cy, csize, &pred_cb, findex, ftype, config, classes, crypto,
            recount, &mut ords, recon, dec, ctxs,
        )?;
        let crefs = gather_references(&recon.cr_plane, cx, cy, csize);
        let pred_cr = predict_intra(&crefs, IntraMode::new(DC), csize);
        decode_plane_residual(
            PlaneSel::Cr, cx, cy, csize, &pred_cr, findex, ftype, config, classes, crypto,
            recount, &mut ords, recon, dec, ctxs,
        )?;
        state.set_mode(x, y, size, Some(mode));
    }
    Ok(())
}

fn read_ipm(dec: &mut BinDecoder, ctxs: &mut ContextState) -> Result<IpmSyntax> {
    if dec.decode_regular(ctxs, Ctx::IsMpm)? {
        let index = dec.decode_truncated_unary(5)? as u8;
        Ok(IpmSyntax::Mpm { index })
    } else {
        let rem = dec.decode_fixed_length(6)? as u8;
        if rem > 60 {
            return Err(Error::CorruptStream(format!(
                "remaining mode {rem} out of range"
            )));
        }
        Ok(IpmSyntax::Remaining { rem })
    }
}

fn read_mvd_component(dec: &mut BinDecoder, ctxs: &mut ContextState) -> Result<MvdSyntax> {
    if !dec.decode_regular(ctxs, Ctx::MvdAbsGr0)? {
        return Ok(MvdSyntax::Zero);
    }
    if dec.decode_regular(ctxs, Ctx::MvdAbsGr1)? {
        let abs_minus_2 = dec.decode_golomb_rice(MVD_RICE_K)?;
        let negative = dec.decode_bypass()?;
        Ok(MvdSyntax::AtLeastTwo {
            abs_minus_2,
            negative,
        })
    } else {
        let negative = dec.decode_bypass()?;
        Ok(MvdSyntax::Unit { negative })
    }
}

#[allow(clippy::too_many_arguments)]
fn decode_plane_residual(
    sel: PlaneSel,
    x: usize,
    y: usize,
    size: usize,
    pred: &[u8],
    findex: u32,
    ftype: FrameType,
    config: &EncoderConfig,
    classes: ClassSet,
    crypto: Option<&Encryptor>,
    recount: &mut EncryptionLedger,
    ords: &mut CuOrdinals,
    recon: &mut FrameBuffer,
    dec: &mut BinDecoder,
    ctxs: &mut ContextState,
) -> Result<()> {
    let mut mags = Vec::with_capacity(size * size);
    for _ in 0..size * size {
        let sig = dec.decode_regular(ctxs, Ctx::SigFlag)?;
        mags.push(sig as u32);
    }
    for m in mags.iter_mut().filter(|m| **m != 0) {
        *m = dec.decode_golomb_rice(0)? + 1;
    }
    let nonzero = mags.iter().filter(|&&m| m != 0).count();
    let mut bits = Vec::with_capacity(nonzero);
    for _ in 0..nonzero {
        bits.push(dec.decode_bypass()?);
    }
    let coded_pattern = SignPattern { bits };

    let (cu_x, cu_y) = match sel {
        PlaneSel::Y => (x, y),
        PlaneSel::Cb | PlaneSel::Cr => (x * 2, y * 2),
    };
    let pattern = if !coded_pattern.is_empty() && classes.contains(ElementClass::ResidualSign) {
        let ctx = unit_ctx(findex, cu_x, cu_y, ElementClass::ResidualSign, ords.residual_sign);
        ords.residual_sign += Encryptor::sign_pattern_chunks(coded_pattern.len());
        recount.record(ElementClass::ResidualSign, ftype, coded_pattern.len() as u64);
        match crypto {
            Some(c) => c.encrypt_sign_pattern(&coded_pattern, &ctx),
            None => coded_pattern,
        }
    } else {
        coded_pattern
    };

    let levels = apply_sign_pattern(&mags, &pattern);
    let res = dequant_itransform(
        &CoeffBlock {
            size,
            levels,
        },
        config.qp,
    );
    let block = add_residual(pred, &res);
    plane_of_mut(recon, sel).set_block(x, y, size, &block);
    Ok(())
}
