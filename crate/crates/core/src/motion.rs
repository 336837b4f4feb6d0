//! Motion clips, the `MOT1` binary format, CSV import, mirroring, dataset
//! splits, synthetic generators, and the temporal patcher.
//!
//! Frames are stored row-major as `T × D` 64-bit values. `D` is fixed by the
//! clip's [`JointLayout`], which also says where each joint's `(x, y, z)`
//! triple lives inside a frame and how joints pair up under mirroring.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeded_rng;

pub const MAGIC: &[u8; 4] = b"MOT1";

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("bad magic bytes {0:?}, expected \"MOT1\"")]
    BadMagic([u8; 4]),
    #[error("truncated payload: {0}")]
    Truncated(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value at frame {frame}, dim {dim}")]
    NonFinite { frame: usize, dim: usize },
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("layout has no mirror metadata (lateral axis unset)")]
    NoMirrorMetadata,
    #[error("invalid ratios: {0}")]
    InvalidRatios(String),
    #[error("unknown generator kind {0:?}")]
    UnknownKind(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("csv parse error on line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("layout json: {0}")]
    LayoutJson(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MotionError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn offset(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Where joint positions live inside a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLayout {
    pub joint_count: usize,
    pub total_dims: usize,
    pub position_offsets: Vec<usize>,
    #[serde(default)]
    pub mirror_pairs: Vec<(usize, usize)>,
    #[serde(default)]
    pub lateral_axis: Option<Axis>,
}

impl JointLayout {
    /// `joint_count` xyz triples packed back to back with no extra features.
    pub fn packed(joint_count: usize) -> Self {
        JointLayout {
            joint_count,
            total_dims: 3 * joint_count,
            position_offsets: (0..joint_count).map(|j| 3 * j).collect(),
            mirror_pairs: Vec::new(),
            lateral_axis: None,
        }
    }

    /// Five-joint toy skeleton: root, left/right hand, left/right foot.
    pub fn toy_skeleton() -> Self {
        JointLayout {
            joint_count: 5,
            total_dims: 15,
            position_offsets: vec![0, 3, 6, 9, 12],
            mirror_pairs: vec![(1, 2), (3, 4)],
            lateral_axis: Some(Axis::X),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MotionError::InvalidLayout(m));
        if self.joint_count == 0 {
            return bad("joint_count must be positive".into());
        }
        if self.position_offsets.len() != self.joint_count {
            return bad(format!(
                "{} offsets for {} joints",
                self.position_offsets.len(),
                self.joint_count
            ));
        }
        let mut sorted = self.position_offsets.clone();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[1] < w[0] + 3 {
                return bad(format!("offsets {} and {} overlap", w[0], w[1]));
            }
        }
        if let Some(last) = sorted.last() {
            if last + 3 > self.total_dims {
                return bad(format!("offset {last} exceeds {} dims", self.total_dims));
            }
        }
        let mut seen = vec![false; self.joint_count];
        for &(l, r) in &self.mirror_pairs {
            if l >= self.joint_count || r >= self.joint_count || l == r {
                return bad(format!("invalid mirror pair ({l}, {r})"));
            }
            for j in [l, r] {
                if seen[j] {
                    return bad(format!("joint {j} appears in two mirror pairs"));
                }
                seen[j] = true;
            }
        }
        Ok(())
    }
}

/// A motion clip: `T` frames of `D` features sampled at `fps`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    frames: Vec<f64>,
    len: usize,
    fps: f64,
    layout: JointLayout,
}

impl MotionSequence {
    pub fn new(frames: Vec<f64>, fps: f64, layout: JointLayout) -> Result<Self> {
        layout.validate()?;
        let dims = layout.total_dims;
        if frames.is_empty() || frames.len() % dims != 0 {
            return Err(MotionError::DimensionMismatch(format!(
                "{} values is not a positive multiple of D={dims}",
                frames.len()
            )));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(MotionError::InvalidArgument(format!("fps must be positive, got {fps}")));
        }
        if let Some(i) = frames.iter().position(|v| !v.is_finite()) {
            return Err(MotionError::NonFinite { frame: i / dims, dim: i % dims });
        }
        let len = frames.len() / dims;
        Ok(MotionSequence { frames, len, fps, layout })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dims(&self) -> usize {
        self.layout.total_dims
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn layout(&self) -> &JointLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let d = self.dims();
        &self.frames[t * d..(t + 1) * d]
    }

    pub fn joint_position(&self, t: usize, joint: usize) -> [f64; 3] {
        let o = self.layout.position_offsets[joint];
        let f = self.frame(t);
        [f[o], f[o + 1], f[o + 2]]
    }

    /// Swaps paired joints and negates the lateral coordinate of every joint.
    pub fn mirror(&self) -> Result<Self> {
        let axis = self.layout.lateral_axis.ok_or(MotionError::NoMirrorMetadata)?;
        let d = self.dims();
        let offsets = &self.layout.position_offsets;
        let mut source: Vec<usize> = (0..self.layout.joint_count).collect();
        for &(l, r) in &self.layout.mirror_pairs {
            source[l] = r;
            source[r] = l;
        }
        let mut out = self.frames.clone();
        for t in 0..self.len {
            let row = &self.frames[t * d..(t + 1) * d];
            let dst = &mut out[t * d..(t + 1) * d];
            for (joint, &src) in source.iter().enumerate() {
                let (o_dst, o_src) = (offsets[joint], offsets[src]);
                dst[o_dst..o_dst + 3].copy_from_slice(&row[o_src..o_src + 3]);
                dst[o_dst + axis.offset()] = -dst[o_dst + axis.offset()];
            }
        }
        Ok(MotionSequence { frames: out, ..self.clone() })
    }

    /// Writes the `MOT1` binary encoding. Values are stored as `f32`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let layout_json = serde_json::to_vec(&self.layout)?;
        let layout_len = u16::try_from(layout_json.len())
            .map_err(|_| MotionError::InvalidLayout("layout JSON exceeds 65535 bytes".into()))?;
        let header_dims = |v: usize| {
            u32::try_from(v).map_err(|_| MotionError::DimensionMismatch(format!("{v} exceeds u32")))
        };
        let mut buf = Vec::with_capacity(16 + layout_json.len() + 4 * self.frames.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&header_dims(self.len)?.to_le_bytes());
        buf.extend_from_slice(&header_dims(self.dims())?.to_le_bytes());
        buf.extend_from_slice(&(self.fps as f32).to_le_bytes());
        buf.extend_from_slice(&layout_len.to_le_bytes());
        buf.extend_from_slice(&layout_json);
        for v in &self.frames {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = ByteCursor { bytes, pos: 0 };
        let magic: [u8; 4] = cur.take(4, "magic")?.try_into().unwrap();
        if &magic != MAGIC {
            return Err(MotionError::BadMagic(magic));
        }
        let len = cur.u32("frame count")? as usize;
        let dims = cur.u32("dimension count")? as usize;
        let fps = f32::from_le_bytes(cur.take(4, "fps")?.try_into().unwrap());
        let layout_len = u16::from_le_bytes(cur.take(2, "layout length")?.try_into().unwrap());
        let layout: JointLayout = serde_json::from_slice(cur.take(layout_len as usize, "layout")?)?;
        if layout.total_dims != dims {
            return Err(MotionError::DimensionMismatch(format!(
                "header D={dims} but layout declares {}",
                layout.total_dims
            )));
        }
        let count = len
            .checked_mul(dims)
            .ok_or_else(|| MotionError::DimensionMismatch("T·D overflows".into()))?;
        let payload = cur.take(4 * count, "frame payload")?;
        if cur.pos != bytes.len() {
            return Err(MotionError::DimensionMismatch(format!(
                "{} trailing bytes after T·D payload",
                bytes.len() - cur.pos
            )));
        }
        let frames = payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        MotionSequence::new(frames, f64::from(fps), layout)
    }

    /// Parses `fps=<real>` followed by rows of `D` comma-separated decimals.
    /// Without an explicit layout, every three columns are taken as one joint.
    pub fn from_csv_str(text: &str, layout: Option<JointLayout>) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(MotionError::Csv { line: 1, msg: "empty file".into() })?;
        let fps = header
            .trim()
            .strip_prefix("fps=")
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or_else(|| MotionError::Csv { line: 1, msg: format!("expected fps=<real>, got {header:?}") })?;
        let mut frames = Vec::new();
        let mut width = None;
        for (i, line) in lines {
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| MotionError::Csv { line: i + 1, msg: e.to_string() })?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(MotionError::Csv { line: i + 1, msg: format!("expected {w} columns, got {}", row.len()) })
                }
                _ => {}
            }
            frames.extend(row);
        }
        let width = width.ok_or(MotionError::Csv { line: 2, msg: "no frames".into() })?;
        let layout = match layout {
            Some(l) => l,
            None if width % 3 == 0 => JointLayout::packed(width / 3),
            None => {
                return Err(MotionError::DimensionMismatch(format!(
                    "{width} columns cannot be read as xyz joints without a layout"
                )))
            }
        };
        if layout.total_dims != width {
            return Err(MotionError::DimensionMismatch(format!(
                "csv has {width} columns, layout declares {}",
                layout.total_dims
            )));
        }
        MotionSequence::new(frames, fps, layout)
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = format!("fps={}\n", self.fps);
        for t in 0..self.len {
            let row: Vec<String> = self.frame(t).iter().map(|v| v.to_string()).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or_else(|| {
            MotionError::Truncated(format!(
                "{what}: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Loads a `.csv` file as CSV and anything else as `MOT1` binary.
pub fn load_motion(path: impl AsRef<Path>) -> Result<MotionSequence> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        MotionSequence::from_csv_str(&std::fs::read_to_string(path)?, None)
    } else {
        MotionSequence::from_bytes(&std::fs::read(path)?)
    }
}

pub fn save_motion(seq: &MotionSequence, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    seq.write_to(&mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Train / validation / test partition of item identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Shuffles `ids` with `seed` and cuts it into train/val/test.
///
/// Validation and test get `floor(ratio · n)` items each; train absorbs the
/// remainder.
pub fn split_dataset<T: Clone>(ids: &[T], ratios: [f64; 3], seed: u64) -> Result<DatasetSplit<T>> {
    if let Some(r) = ratios.iter().find(|r| !r.is_finite() || **r < 0.0) {
        return Err(MotionError::InvalidRatios(format!("ratio {r} is negative or non-finite")));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(MotionError::InvalidRatios(format!("ratios sum to {sum}, expected 1")));
    }
    let n = ids.len();
    // The epsilon absorbs products like 0.15 · 20 = 2.9999999999999996.
    let bucket = |r: f64| ((r * n as f64 + 1e-9).floor() as usize).min(n);
    let n_val = bucket(ratios[1]);
    let n_test = bucket(ratios[2]).min(n - n_val);
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut seeded_rng(seed));
    let test = shuffled.split_off(n - n_test);
    let val = shuffled.split_off(n - n_test - n_val);
    Ok(DatasetSplit { train: shuffled, val, test })
}

/// Synthetic motion generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    SineWalk,
    RandomSmooth,
    Cubic,
    Constant,
}

impl SynthKind {
    pub const ALL: [SynthKind; 4] = [SynthKind::SineWalk, SynthKind::RandomSmooth, SynthKind::Cubic, SynthKind::Constant];

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::SineWalk => "sine_walk",
            SynthKind::RandomSmooth => "random_smooth",
            SynthKind::Cubic => "cubic",
            SynthKind::Constant => "constant",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = MotionError;

    fn from_str(s: &str) -> Result<Self> {
        SynthKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| MotionError::UnknownKind(s.to_string()))
    }
}

pub const DEFAULT_FPS: f64 = 20.0;

/// [`synth_motion_with`] on the toy skeleton at 20 fps.
pub fn synth_motion(kind: SynthKind, length: usize, seed: u64) -> Result<MotionSequence> {
    synth_motion_with(kind, length, seed, &JointLayout::toy_skeleton(), DEFAULT_FPS)
}

/// Generates a deterministic clip of `length` frames.
///
/// Time is measured in seconds (`t = frame / fps`). `cubic` sets every
/// coordinate of joint `j` to `a_j · t³`; feature dims outside any joint get
/// their own coefficient.
pub fn synth_motion_with(
    kind: SynthKind,
    length: usize,
    seed: u64,
    layout: &JointLayout,
    fps: f64,
) -> Result<MotionSequence> {
    if length < 4 {
        return Err(MotionError::InvalidArgument(format!("length must be at least 4, got {length}")));
    }
    layout.validate()?;
    let dims = layout.total_dims;
    let mut rng = seeded_rng(seed ^ 0x6d6f_7469_6f6e);
    let mut frames = vec![0.0; length * dims];
    match kind {
        SynthKind::Constant => {
            let pose: Vec<f64> = (0..dims).map(|_| rng.random_range(-1.0..1.0)).collect();
            for row in frames.chunks_exact_mut(dims) {
                row.copy_from_slice(&pose);
            }
        }
        SynthKind::Cubic => {
            let mut coeff: Vec<f64> = (0..dims).map(|_| rng.random_range(0.5..1.5)).collect();
            for &o in &layout.position_offsets {
                let a = rng.random_range(0.5..1.5);
                coeff[o..o + 3].fill(a);
            }
            for (i, row) in frames.chunks_exact_mut(dims).enumerate() {
                let t = i as f64 / fps;
                for (v, a) in row.iter_mut().zip(&coeff) {
                    *v = a * t * t * t;
                }
            }
        }
        SynthKind::SineWalk => {
            let stride_hz = rng.random_range(0.8..1.6);
            let speed = rng.random_range(0.5..1.5);
            let params: Vec<(f64, f64, f64)> = (0..dims)
                .map(|_| (rng.random_range(0.05..0.4), rng.random_range(0.0..2.0 * PI), rng.random_range(-0.5..0.5)))
                .collect();
            for (i, row) in frames.chunks_exact_mut(dims).enumerate() {
                let t = i as f64 / fps;
                for (d, v) in row.iter_mut().enumerate() {
                    let (amp, phase, base) = params[d];
                    *v = base + amp * (2.0 * PI * stride_hz * t + phase).sin();
                }
                // forward progress along z for every joint
                for &o in &layout.position_offsets {
                    row[o + 2] += speed * t;
                }
            }
        }
        SynthKind::RandomSmooth => {
            const COMPONENTS: usize = 3;
            let params: Vec<[(f64, f64, f64); COMPONENTS]> = (0..dims)
                .map(|_| {
                    std::array::from_fn(|_| {
                        (rng.random_range(0.05..0.5), rng.random_range(0.1..1.5), rng.random_range(0.0..2.0 * PI))
                    })
                })
                .collect();
            for (i, row) in frames.chunks_exact_mut(dims).enumerate() {
                let t = i as f64 / fps;
                for (v, comps) in row.iter_mut().zip(&params) {
                    *v = comps.iter().map(|(a, hz, ph)| a * (2.0 * PI * hz * t + ph).sin()).sum();
                }
            }
        }
    }
    MotionSequence::new(frames, fps, layout.clone())
}

/// Non-overlapping windows of `stride` frames flattened into latent vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSequence {
    codes: Vec<f64>,
    len: usize,
    dim: usize,
    stride: usize,
}

impl LatentSequence {
    pub fn new(codes: Vec<f64>, dim: usize, stride: usize) -> Result<Self> {
        if dim == 0 || stride == 0 || codes.len() % dim != 0 {
            return Err(MotionError::DimensionMismatch(format!(
                "{} values do not form vectors of dim {dim}",
                codes.len()
            )));
        }
        Ok(LatentSequence { len: codes.len() / dim, codes, dim, stride })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn code(&self, i: usize) -> &[f64] {
        &self.codes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.codes
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.codes.chunks_exact(self.dim)
    }
}

/// Groups frames into windows of `stride`; the last window is zero-padded.
pub fn patch(seq: &MotionSequence, stride: usize) -> Result<LatentSequence> {
    if stride == 0 {
        return Err(MotionError::InvalidArgument("stride must be at least 1".into()));
    }
    let dims = seq.dims();
    let windows = seq.len().div_ceil(stride);
    let mut codes = vec![0.0; windows * stride * dims];
    codes[..seq.values().len()].copy_from_slice(seq.values());
    LatentSequence::new(codes, stride * dims, stride)
}

/// Inverse of [`patch`]: flattens windows back to `len` frames of `dims`.
pub fn unpatch(lat: &LatentSequence, dims: usize, len: usize, fps: f64, layout: JointLayout) -> Result<MotionSequence> {
    if lat.dim != lat.stride * dims || layout.total_dims != dims {
        return Err(MotionError::DimensionMismatch(format!(
            "latent dim {} != stride {} × D {dims}",
            lat.dim, lat.stride
        )));
    }
    if len > lat.len * lat.stride || len + lat.stride <= lat.len * lat.stride {
        return Err(MotionError::DimensionMismatch(format!(
            "{len} frames do not fit {} windows of {}",
            lat.len, lat.stride
        )));
    }
    MotionSequence::new(lat.codes[..len * dims].to_vec(), fps, layout)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(values: Vec<f64>, layout: JointLayout) -> MotionSequence {
        MotionSequence::new(values, 20.0, layout).unwrap()
    }

    #[test]
    fn save_load_round_trip_3x6() {
        let values: Vec<f64> = (0..18).map(|i| i as f64 * 0.25 - 2.0).collect();
        let s = seq(values.clone(), JointLayout::packed(2));
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let back = MotionSequence::from_bytes(&buf).unwrap();
        assert_eq!(back.values(), &values[..]);
        assert_eq!(back.len(), 3);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let s = seq(vec![1.0; 6], JointLayout::packed(2));
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[..4].copy_from_slice(b"XXXX");
        assert!(matches!(MotionSequence::from_bytes(&bad), Err(MotionError::BadMagic(_))));
        assert!(matches!(MotionSequence::from_bytes(&buf[..buf.len() - 1]), Err(MotionError::Truncated(_))));
    }

    #[test]
    fn rejects_non_finite_payload() {
        let s = seq(vec![1.0; 6], JointLayout::packed(2));
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let n = buf.len();
        buf[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(MotionSequence::from_bytes(&buf), Err(MotionError::NonFinite { frame: 0, dim: 5 })));
    }

    #[test]
    fn csv_import() {
        let s = MotionSequence::from_csv_str("fps=30\n1,2,3\n4,5,6\n", None).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.fps(), 30.0);
        assert_eq!(s.joint_position(1, 0), [4.0, 5.0, 6.0]);
        assert!(MotionSequence::from_csv_str("fps=30\n1,2,3\n4,5\n", None).is_err());
        assert!(MotionSequence::from_csv_str("hz=30\n1,2,3\n", None).is_err());
    }

    #[test]
    fn mirror_unpaired_joint() {
        let mut layout = JointLayout::packed(1);
        layout.lateral_axis = Some(Axis::X);
        let m = seq(vec![1.0, 2.0, 3.0], layout).mirror().unwrap();
        assert_eq!(m.values(), &[-1.0, 2.0, 3.0]);
    }

    #[test]
    fn mirror_pair_swaps_then_negates() {
        let mut layout = JointLayout::packed(2);
        layout.lateral_axis = Some(Axis::X);
        layout.mirror_pairs = vec![(0, 1)];
        let m = seq(vec![1.0, 0.0, 0.0, 2.0, 0.0, 0.0], layout).mirror().unwrap();
        assert_eq!(m.values(), &[-2.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn mirror_requires_metadata() {
        let s = seq(vec![1.0, 2.0, 3.0], JointLayout::packed(1));
        assert!(matches!(s.mirror(), Err(MotionError::NoMirrorMetadata)));
    }

    #[test]
    fn layout_validation() {
        let mut l = JointLayout::packed(2);
        l.position_offsets = vec![0, 2];
        assert!(l.validate().is_err());
        let mut l = JointLayout::packed(3);
        l.mirror_pairs = vec![(0, 1), (1, 2)];
        assert!(l.validate().is_err());
        assert!(JointLayout::toy_skeleton().validate().is_ok());
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let ids: Vec<u32> = (0..20).collect();
        let s = split_dataset(&ids, [0.8, 0.15, 0.05], 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (16, 3, 1));
        let all = split_dataset(&ids, [1.0, 0.0, 0.0], 1).unwrap();
        assert_eq!(all.train.len(), 20);
        assert_eq!(split_dataset(&ids, [0.8, 0.15, 0.05], 9).unwrap(), split_dataset(&ids, [0.8, 0.15, 0.05], 9).unwrap());
        assert!(split_dataset(&ids, [1.2, -0.2, 0.0], 1).is_err());
        assert!(split_dataset(&ids, [0.5, 0.2, 0.2], 1).is_err());
    }

    #[test]
    fn synth_constant_and_unknown_kind() {
        let s = synth_motion(SynthKind::Constant, 10, 3).unwrap();
        for t in 1..10 {
            assert_eq!(s.frame(t), s.frame(0));
        }
        assert!(matches!("spin".parse::<SynthKind>(), Err(MotionError::UnknownKind(_))));
        assert!(synth_motion(SynthKind::Cubic, 3, 0).is_err());
    }

    #[test]
    fn synth_is_deterministic() {
        for kind in SynthKind::ALL {
            assert_eq!(synth_motion(kind, 32, 5).unwrap(), synth_motion(kind, 32, 5).unwrap());
        }
        assert_ne!(synth_motion(SynthKind::RandomSmooth, 32, 5).unwrap(), synth_motion(SynthKind::RandomSmooth, 32, 6).unwrap());
    }

    #[test]
    fn cubic_third_difference_is_six_a() {
        // unit time step: fps = 1, third difference of a·t³ is 6a
        let s = synth_motion_with(SynthKind::Cubic, 12, 2, &JointLayout::packed(2), 1.0).unwrap();
        for j in 0..2 {
            let a = s.joint_position(1, j)[0];
            for t in 3..12 {
                let p = |k: usize| s.joint_position(k, j)[1];
                let third = p(t) - 3.0 * p(t - 1) + 3.0 * p(t - 2) - p(t - 3);
                assert!((third - 6.0 * a).abs() < 1e-9 * (1.0 + (t * t * t) as f64));
            }
        }
    }

    #[test]
    fn patch_t8_and_t7() {
        let layout = JointLayout::packed(1);
        let s8 = seq((0..24).map(f64::from).collect(), layout.clone());
        let lat = patch(&s8, 4).unwrap();
        assert_eq!((lat.len(), lat.dim()), (2, 12));
        assert_eq!(unpatch(&lat, 3, 8, 20.0, layout.clone()).unwrap(), s8);

        let s7 = seq((0..21).map(f64::from).collect(), layout.clone());
        let lat = patch(&s7, 4).unwrap();
        assert_eq!(lat.len(), 2);
        assert_eq!(&lat.code(1)[..9], &[12.0, 13.0, 14.0, 15.0, 16.0, 17.0, 18.0, 19.0, 20.0]);
        assert_eq!(&lat.code(1)[9..], &[0.0, 0.0, 0.0]);
        assert_eq!(unpatch(&lat, 3, 7, 20.0, layout.clone()).unwrap(), s7);
        assert!(unpatch(&lat, 2, 7, 20.0, JointLayout::packed(1)).is_err());
    }
}
