//! Evaluation metrics.
//!
//! Positions are taken to be in millimeters, so [`mpjpe`] reports millimeters
//! directly. FID here is computed over a statistical descriptor rather than a
//! learned evaluator and is only comparable between runs that use the same
//! [`FeatureExtractor`]; reports carry the extractor name for that reason.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{matmul, mean_and_covariance, psd_sqrt, symmetric_eigen};
use crate::motion::MotionSequence;
use crate::util::euclidean;
use crate::seeded_rng;

pub const FID_RIDGE: f64 = 1e-6;
pub const DEFAULT_POOL_SIZE: usize = 32;
pub const DEFAULT_MM_SUBSET: usize = 10;
/// Upper bound on the feature dimension of [`DefaultFeatureExtractor`].
pub const MAX_FEATURE_DIM: usize = 64;
const GROUPS_PER_BLOCK: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("sequence has {0} frames; at least 4 are needed")]
    TooShort(usize),
    #[error("feature dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("empty feature set")]
    Empty,
    #[error("need at least {needed} pairs, got {got}")]
    TooFewPairs { needed: usize, got: usize },
    #[error("condition {condition} has {got} generations; need {needed}")]
    InsufficientGenerations { condition: usize, got: usize, needed: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("metric {0} is not finite")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

fn check_same_shape(pred: &MotionSequence, gt: &MotionSequence) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(MetricsError::Shape(format!("{} vs {} frames", pred.len(), gt.len())));
    }
    if pred.layout() != gt.layout() {
        return Err(MetricsError::Shape("different joint layouts".into()));
    }
    Ok(())
}

/// Mean per-joint position error over all frames and joints.
pub fn mpjpe(pred: &MotionSequence, gt: &MotionSequence) -> Result<f64> {
    check_same_shape(pred, gt)?;
    let joints = gt.layout().joint_count;
    if gt.is_empty() || joints == 0 {
        return Err(MetricsError::Shape("no frames or joints".into()));
    }
    let mut total = 0.0;
    for t in 0..gt.len() {
        for j in 0..joints {
            total += euclidean(&pred.joint_position(t, j), &gt.joint_position(t, j));
        }
    }
    Ok(total / (gt.len() * joints) as f64)
}

/// Per-frame, per-joint jerk magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct JerkSeries {
    fps: f64,
    joints: usize,
    /// Frame-major: `values[frame * joints + joint]`.
    values: Vec<f64>,
}

impl JerkSeries {
    /// Builds a series from frame-major magnitudes.
    pub fn new(values: Vec<f64>, joints: usize, fps: f64) -> Result<Self> {
        if joints == 0 || values.len() % joints != 0 {
            return Err(MetricsError::Shape(format!("{} values do not split into {joints} joints", values.len())));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(MetricsError::InvalidArgument("jerk magnitudes must be finite and non-negative".into()));
        }
        Ok(JerkSeries { fps, joints, values })
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    /// Number of frames, `T - 3`.
    pub fn frames(&self) -> usize {
        if self.joints == 0 { 0 } else { self.values.len() / self.joints }
    }

    pub fn get(&self, frame: usize, joint: usize) -> f64 {
        self.values[frame * self.joints + joint]
    }

    pub fn frame(&self, frame: usize) -> &[f64] {
        &self.values[frame * self.joints..(frame + 1) * self.joints]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mean jerk of each joint over all frames.
    pub fn joint_means(&self) -> Vec<f64> {
        let frames = self.frames().max(1) as f64;
        (0..self.joints)
            .map(|j| (0..self.frames()).map(|f| self.get(f, j)).sum::<f64>() / frames)
            .collect()
    }
}

/// Third backward difference of every joint position, scaled by `fps³`.
pub fn jerk(seq: &MotionSequence) -> Result<JerkSeries> {
    let len = seq.len();
    if len < 4 {
        return Err(MetricsError::TooShort(len));
    }
    let joints = seq.layout().joint_count;
    let scale = seq.fps().powi(3);
    let mut values = Vec::with_capacity((len - 3) * joints);
    for t in 3..len {
        for j in 0..joints {
            let p0 = seq.joint_position(t, j);
            let p1 = seq.joint_position(t - 1, j);
            let p2 = seq.joint_position(t - 2, j);
            let p3 = seq.joint_position(t - 3, j);
            let d: Vec<f64> = (0..3).map(|k| (p0[k] - 3.0 * p1[k] + 3.0 * p2[k] - p3[k]) * scale).collect();
            values.push(d.iter().map(|x| x * x).sum::<f64>().sqrt());
        }
    }
    Ok(JerkSeries { fps: seq.fps(), joints, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SjpeReport {
    pub total: f64,
    pub noise: f64,
    pub r#static: f64,
}

/// One frame of an sJPE trace, averaged over joints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SjpeFrame {
    pub frame: usize,
    pub gt_jerk: f64,
    pub pred_jerk: f64,
    pub term: f64,
    /// `+1` when overestimation dominates the frame, `-1` for underestimation, `0` otherwise.
    pub sign: i8,
}

fn check_jerk_shapes(pred: &JerkSeries, gt: &JerkSeries) -> Result<()> {
    if pred.joints != gt.joints || pred.values.len() != gt.values.len() {
        return Err(MetricsError::Shape(format!(
            "{}x{} vs {}x{} jerk series",
            pred.frames(),
            pred.joints,
            gt.frames(),
            gt.joints
        )));
    }
    Ok(())
}

fn split_term(p: f64, g: f64) -> (f64, f64) {
    let denom = p.abs() + g.abs();
    if denom == 0.0 {
        return (0.0, 0.0);
    }
    ((p - g).max(0.0) / denom, (g - p).max(0.0) / denom)
}

/// Symmetric jerk percentage error with its overestimation (noise) and
/// underestimation (static) parts.
pub fn sjpe(pred: &JerkSeries, gt: &JerkSeries) -> Result<SjpeReport> {
    check_jerk_shapes(pred, gt)?;
    let n = gt.values.len();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    let (mut noise, mut stat) = (0.0, 0.0);
    for (&p, &g) in pred.values.iter().zip(&gt.values) {
        let (a, b) = split_term(p, g);
        noise += a;
        stat += b;
    }
    let noise = noise / n as f64;
    let stat = stat / n as f64;
    Ok(SjpeReport { total: noise + stat, noise, r#static: stat })
}

/// Per-frame trace of the sJPE terms.
pub fn sjpe_trace(pred: &JerkSeries, gt: &JerkSeries) -> Result<Vec<SjpeFrame>> {
    check_jerk_shapes(pred, gt)?;
    let joints = gt.joints.max(1) as f64;
    Ok((0..gt.frames())
        .map(|f| {
            let (mut over, mut under) = (0.0, 0.0);
            for (&p, &g) in pred.frame(f).iter().zip(gt.frame(f)) {
                let (a, b) = split_term(p, g);
                over += a;
                under += b;
            }
            let sign = if over > under {
                1
            } else if under > over {
                -1
            } else {
                0
            };
            SjpeFrame {
                frame: f,
                gt_jerk: gt.frame(f).iter().sum::<f64>() / joints,
                pred_jerk: pred.frame(f).iter().sum::<f64>() / joints,
                term: (over + under) / joints,
                sign,
            }
        })
        .collect())
}

pub fn sjpe_trace_csv(trace: &[SjpeFrame]) -> String {
    let mut out = String::from("frame,gt_jerk,pred_jerk,term,sign\n");
    for r in trace {
        out.push_str(&format!("{},{},{},{},{}\n", r.frame, r.gt_jerk, r.pred_jerk, r.term, r.sign));
    }
    out
}

/// Fréchet distance between two Gaussians given by mean and row-major covariance.
pub fn fid_from_stats(mu_a: &[f64], cov_a: &[f64], mu_b: &[f64], cov_b: &[f64]) -> Result<f64> {
    let n = mu_a.len();
    if mu_b.len() != n {
        return Err(MetricsError::DimensionMismatch(n, mu_b.len()));
    }
    if cov_a.len() != n * n || cov_b.len() != n * n {
        return Err(MetricsError::Shape("covariance size does not match mean".into()));
    }
    let mean_term: f64 = mu_a.iter().zip(mu_b).map(|(a, b)| (a - b) * (a - b)).sum();
    let root_a = psd_sqrt(cov_a, n);
    let mut s = matmul(&matmul(&root_a, cov_b, n), &root_a, n);
    for i in 0..n {
        for j in i + 1..n {
            let m = 0.5 * (s[i * n + j] + s[j * n + i]);
            s[i * n + j] = m;
            s[j * n + i] = m;
        }
    }
    let cross: f64 = symmetric_eigen(&s, n).values.iter().map(|&v| v.max(0.0).sqrt()).sum();
    let trace: f64 = (0..n).map(|i| cov_a[i * n + i] + cov_b[i * n + i]).sum();
    Ok(mean_term + trace - 2.0 * cross)
}

fn feature_stats(set: &[Vec<f64>], dim: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(bad) = set.iter().find(|v| v.len() != dim) {
        return Err(MetricsError::DimensionMismatch(dim, bad.len()));
    }
    let (mu, mut cov) = mean_and_covariance(set, dim);
    if set.len() < dim + 1 {
        for i in 0..dim {
            cov[i * dim + i] += FID_RIDGE;
        }
    }
    Ok((mu, cov))
}

/// FID between two feature sets, using unbiased covariances.
pub fn fid(feats_a: &[Vec<f64>], feats_b: &[Vec<f64>]) -> Result<f64> {
    let dim = feats_a.first().ok_or(MetricsError::Empty)?.len();
    if feats_b.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (mu_a, cov_a) = feature_stats(feats_a, dim)?;
    let (mu_b, cov_b) = feature_stats(feats_b, dim)?;
    fid_from_stats(&mu_a, &cov_a, &mu_b, &cov_b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    /// `r_precision[k - 1]` is R-precision at `k`.
    pub r_precision: [f64; 3],
    pub mm_dist: f64,
}

/// R-precision at 1..3 and mean matched distance over `(condition, motion)` pairs.
///
/// Each motion's true condition competes against `pool_size - 1` conditions
/// drawn from the other pairs; ties go to the true condition.
pub fn retrieval_metrics(pairs: &[(Vec<f64>, Vec<f64>)], pool_size: usize, seed: u64) -> Result<RetrievalReport> {
    if pool_size == 0 {
        return Err(MetricsError::InvalidArgument("pool_size must be positive".into()));
    }
    if pairs.len() < pool_size {
        return Err(MetricsError::TooFewPairs { needed: pool_size, got: pairs.len() });
    }
    let dim = pairs[0].0.len();
    for (c, m) in pairs {
        if c.len() != dim || m.len() != dim {
            return Err(MetricsError::DimensionMismatch(dim, if c.len() != dim { c.len() } else { m.len() }));
        }
    }
    let mut rng = seeded_rng(seed);
    let mut hits = [0usize; 3];
    let mut mm = 0.0;
    let mut others: Vec<usize> = Vec::with_capacity(pairs.len());
    for (i, (cond, motion)) in pairs.iter().enumerate() {
        let d_true = euclidean(motion, cond);
        mm += d_true;
        others.clear();
        others.extend((0..pairs.len()).filter(|&k| k != i));
        let (chosen, _) = others.partial_shuffle(&mut rng, pool_size - 1);
        let rank = 1 + chosen.iter().filter(|&&k| euclidean(motion, &pairs[k].0) < d_true).count();
        for (k, h) in hits.iter_mut().enumerate() {
            if rank <= k + 1 {
                *h += 1;
            }
        }
    }
    let n = pairs.len() as f64;
    Ok(RetrievalReport { r_precision: hits.map(|h| h as f64 / n), mm_dist: mm / n })
}

/// Mean distance between explicitly paired generations, averaged per condition.
pub fn multimodality_paired(generations: &[Vec<Vec<f64>>], pairs: &[Vec<(usize, usize)>]) -> Result<f64> {
    if generations.is_empty() {
        return Err(MetricsError::Empty);
    }
    if pairs.len() != generations.len() {
        return Err(MetricsError::Shape("one pairing per condition is required".into()));
    }
    let mut total = 0.0;
    for (c, (gens, idx)) in generations.iter().zip(pairs).enumerate() {
        if idx.is_empty() {
            return Err(MetricsError::InsufficientGenerations { condition: c, got: gens.len(), needed: 2 });
        }
        let mut sum = 0.0;
        for &(a, b) in idx {
            let (x, y) = (gens.get(a), gens.get(b));
            let (Some(x), Some(y)) = (x, y) else {
                return Err(MetricsError::Shape(format!("pair ({a}, {b}) out of range for condition {c}")));
            };
            if x.len() != y.len() {
                return Err(MetricsError::DimensionMismatch(x.len(), y.len()));
            }
            sum += euclidean(x, y);
        }
        total += sum / idx.len() as f64;
    }
    Ok(total / generations.len() as f64)
}

/// Diversity among generations that share a condition: two disjoint seeded
/// `r`-subsets are paired element-wise.
pub fn multimodality(generations: &[Vec<Vec<f64>>], r: usize, seed: u64) -> Result<f64> {
    if r == 0 {
        return Err(MetricsError::InvalidArgument("r must be positive".into()));
    }
    let mut rng = seeded_rng(seed);
    let mut pairs = Vec::with_capacity(generations.len());
    for (c, gens) in generations.iter().enumerate() {
        if gens.len() < 2 * r {
            return Err(MetricsError::InsufficientGenerations { condition: c, got: gens.len(), needed: 2 * r });
        }
        let mut idx: Vec<usize> = (0..gens.len()).collect();
        let (chosen, _) = idx.partial_shuffle(&mut rng, 2 * r);
        pairs.push((0..r).map(|k| (chosen[k], chosen[r + k])).collect());
    }
    multimodality_paired(generations, &pairs)
}

/// Maps a motion to a fixed-length descriptor.
pub trait FeatureExtractor {
    fn name(&self) -> &str;

    fn extract(&self, seq: &MotionSequence) -> Result<Vec<f64>>;
}

/// Per-dimension mean, standard deviation and mean absolute first difference,
/// plus per-joint mean jerk magnitude. Each block is averaged over contiguous
/// groups down to at most 16 values, so the output has at most 64 entries.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultFeatureExtractor;

impl FeatureExtractor for DefaultFeatureExtractor {
    fn name(&self) -> &str {
        "stat-pool-v1"
    }

    fn extract(&self, seq: &MotionSequence) -> Result<Vec<f64>> {
        default_feature_extractor(seq)
    }
}

fn pool(block: &[f64]) -> Vec<f64> {
    let n = block.len();
    let groups = n.min(GROUPS_PER_BLOCK);
    (0..groups)
        .map(|g| {
            let (lo, hi) = (g * n / groups, (g + 1) * n / groups);
            block[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

pub fn default_feature_extractor(seq: &MotionSequence) -> Result<Vec<f64>> {
    let len = seq.len();
    if len < 4 {
        return Err(MetricsError::TooShort(len));
    }
    let dims = seq.dims();
    let tf = len as f64;
    let mut mean = vec![0.0; dims];
    let mut vel = vec![0.0; dims];
    for t in 0..len {
        for (m, x) in mean.iter_mut().zip(seq.frame(t)) {
            *m += x;
        }
        if t > 0 {
            for ((v, x), y) in vel.iter_mut().zip(seq.frame(t)).zip(seq.frame(t - 1)) {
                *v += (x - y).abs();
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= tf);
    vel.iter_mut().for_each(|v| *v /= tf - 1.0);
    let mut std = vec![0.0; dims];
    for t in 0..len {
        for ((s, x), m) in std.iter_mut().zip(seq.frame(t)).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    std.iter_mut().for_each(|s| *s = (*s / tf).sqrt());
    let jerk_means = jerk(seq)?.joint_means();
    let mut out = pool(&mean);
    out.extend(pool(&std));
    out.extend(pool(&vel));
    out.extend(pool(&jerk_means));
    Ok(out)
}

/// Flat, JSON-serializable set of named metrics. Absent metrics are omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub extractor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mpjpe_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fid: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sjpe: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sjpe_noise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sjpe_static: Option<f64>,
    #[serde(default, rename = "r_precision@1", skip_serializing_if = "Option::is_none")]
    pub r_precision_1: Option<f64>,
    #[serde(default, rename = "r_precision@2", skip_serializing_if = "Option::is_none")]
    pub r_precision_2: Option<f64>,
    #[serde(default, rename = "r_precision@3", skip_serializing_if = "Option::is_none")]
    pub r_precision_3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mm_dist: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multimodality: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codebook_perplexity: Option<f64>,
}

impl MetricReport {
    pub fn new(extractor: impl Into<String>) -> Self {
        MetricReport { extractor: extractor.into(), ..Default::default() }
    }

    pub fn set_fid(&mut self, value: f64) {
        self.fid = Some(value.max(0.0));
    }

    pub fn set_sjpe(&mut self, report: SjpeReport) {
        self.sjpe = Some(report.total);
        self.sjpe_noise = Some(report.noise);
        self.sjpe_static = Some(report.r#static);
    }

    pub fn set_retrieval(&mut self, report: RetrievalReport) {
        self.r_precision_1 = Some(report.r_precision[0]);
        self.r_precision_2 = Some(report.r_precision[1]);
        self.r_precision_3 = Some(report.r_precision[2]);
        self.mm_dist = Some(report.mm_dist);
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mpjpe_mm", self.mpjpe_mm),
            ("fid", self.fid),
            ("sjpe", self.sjpe),
            ("sjpe_noise", self.sjpe_noise),
            ("sjpe_static", self.sjpe_static),
            ("r_precision@1", self.r_precision_1),
            ("r_precision@2", self.r_precision_2),
            ("r_precision@3", self.r_precision_3),
            ("mm_dist", self.mm_dist),
            ("multimodality", self.multimodality),
            ("codebook_perplexity", self.codebook_perplexity),
        ];
        for (name, v) in fields {
            if v.is_some_and(|x| !x.is_finite()) {
                return Err(MetricsError::NonFinite(name));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        serde_json::to_string_pretty(self).map_err(|e| MetricsError::InvalidArgument(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::JointLayout;

    fn seq(frames: Vec<f64>, joints: usize, fps: f64) -> MotionSequence {
        MotionSequence::new(frames, fps, JointLayout::packed(joints)).unwrap()
    }

    fn series(values: Vec<f64>) -> JerkSeries {
        JerkSeries { fps: 20.0, joints: 1, values }
    }

    #[test]
    fn mpjpe_examples() {
        let gt = seq(vec![0.0; 6], 2, 20.0);
        assert_eq!(mpjpe(&gt, &gt).unwrap(), 0.0);
        let pred = seq(vec![3.0, 4.0, 0.0, 0.0, 0.0, 0.0], 2, 20.0);
        assert_eq!(mpjpe(&pred, &gt).unwrap(), 2.5);
        let shifted = seq(vec![10.0, 0.0, 0.0, 10.0, 0.0, 0.0], 2, 20.0);
        assert_eq!(mpjpe(&shifted, &gt).unwrap(), 10.0);
        let short = seq(vec![0.0; 3], 1, 20.0);
        assert!(matches!(mpjpe(&short, &gt), Err(MetricsError::Shape(_))));
    }

    #[test]
    fn jerk_of_unit_cubic_is_six() {
        let frames: Vec<f64> = (0..8).flat_map(|t| [(t as f64).powi(3), 0.0, 0.0]).collect();
        let j = jerk(&seq(frames, 1, 1.0)).unwrap();
        assert_eq!(j.frames(), 5);
        assert!(j.values().iter().all(|&v| v == 6.0));
    }

    #[test]
    fn jerk_needs_four_frames() {
        assert_eq!(jerk(&seq(vec![0.0; 9], 1, 20.0)), Err(MetricsError::TooShort(3)));
    }

    #[test]
    fn sjpe_examples() {
        let gt = series(vec![1.0, 2.0, 0.5]);
        assert_eq!(sjpe(&gt, &gt).unwrap(), SjpeReport { total: 0.0, noise: 0.0, r#static: 0.0 });
        let double = series(vec![2.0, 4.0, 1.0]);
        let r = sjpe(&double, &gt).unwrap();
        assert!((r.total - 1.0 / 3.0).abs() < 1e-15 && (r.noise - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.r#static, 0.0);
        let flat = series(vec![0.0; 3]);
        assert_eq!(sjpe(&flat, &gt).unwrap(), SjpeReport { total: 1.0, noise: 0.0, r#static: 1.0 });
        assert_eq!(sjpe(&flat, &flat).unwrap().total, 0.0);
        assert!(sjpe(&series(vec![1.0]), &gt).is_err());
    }

    #[test]
    fn trace_marks_direction() {
        let t = sjpe_trace(&series(vec![2.0, 0.0, 1.0]), &series(vec![1.0, 1.0, 1.0])).unwrap();
        assert_eq!(t.iter().map(|r| r.sign).collect::<Vec<_>>(), vec![1, -1, 0]);
        let csv = sjpe_trace_csv(&t);
        assert!(csv.starts_with("frame,gt_jerk,pred_jerk,term,sign\n0,1,2,"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn fid_one_dimensional_closed_form() {
        assert!((fid_from_stats(&[0.0], &[1.0], &[1.0], &[1.0]).unwrap() - 1.0).abs() < 1e-12);
        // (σa - σb)² with σa = 1, σb = 3
        assert!((fid_from_stats(&[0.0], &[1.0], &[0.0], &[9.0]).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn fid_diagonal_example() {
        let v = fid_from_stats(&[0.0, 0.0], &[1.0, 0.0, 0.0, 4.0], &[0.0, 0.0], &[4.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fid_of_identical_sets_is_zero() {
        let a: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64 * 0.1, (i as f64).sin()]).collect();
        assert!(fid(&a, &a).unwrap().abs() < 1e-6);
        let small = vec![vec![1.0, 2.0, 3.0]];
        assert!(fid(&small, &small).unwrap().abs() < 1e-6);
        assert!(matches!(fid(&a, &[vec![1.0]]), Err(MetricsError::DimensionMismatch(3, 1))));
    }

    #[test]
    fn retrieval_identity() {
        let pairs: Vec<_> = (0..40).map(|i| (vec![i as f64, 0.0], vec![i as f64, 0.0])).collect();
        let r = retrieval_metrics(&pairs, 32, 1).unwrap();
        assert_eq!(r.r_precision, [1.0, 1.0, 1.0]);
        assert_eq!(r.mm_dist, 0.0);
        assert_eq!(retrieval_metrics(&pairs[..10], 32, 1), Err(MetricsError::TooFewPairs { needed: 32, got: 10 }));
    }

    #[test]
    fn multimodality_examples() {
        let same = vec![vec![vec![1.0, 1.0]; 20]; 2];
        assert_eq!(multimodality(&same, 10, 0).unwrap(), 0.0);
        let gens = vec![vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![3.0, 4.0], vec![3.0, 4.0]]];
        let cross = vec![vec![(0, 2), (1, 3)]];
        assert_eq!(multimodality_paired(&gens, &cross).unwrap(), 5.0);
        assert!(matches!(multimodality(&gens, 3, 0), Err(MetricsError::InsufficientGenerations { .. })));
    }

    #[test]
    fn extractor_statistics() {
        let fives = seq(vec![5.0; 6 * 6], 2, 20.0);
        let f = default_feature_extractor(&fives).unwrap();
        assert_eq!(f.len(), 6 + 6 + 6 + 2);
        assert!(f[..6].iter().all(|&m| m == 5.0));
        assert!(f[6..].iter().all(|&m| m == 0.0));
        let wide = MotionSequence::new(vec![0.0; 4 * 90], 20.0, JointLayout::packed(30)).unwrap();
        assert_eq!(DefaultFeatureExtractor.extract(&wide).unwrap().len(), MAX_FEATURE_DIM);
    }

    #[test]
    fn report_is_flat_json() {
        let mut r = MetricReport::new("stat-pool-v1");
        r.set_fid(-1e-12);
        r.set_sjpe(SjpeReport { total: 0.5, noise: 0.25, r#static: 0.25 });
        r.set_retrieval(RetrievalReport { r_precision: [0.5, 0.75, 1.0], mm_dist: 2.0 });
        let json = r.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["fid"], 0.0);
        assert_eq!(v["r_precision@2"], 0.75);
        assert_eq!(v["sjpe_noise"], 0.25);
        assert!(v.get("mpjpe_mm").is_none());
        assert_eq!(serde_json::from_str::<MetricReport>(&json).unwrap(), r);
        r.mm_dist = Some(f64::NAN);
        assert_eq!(r.validate(), Err(MetricsError::NonFinite("mm_dist")));
    }
}
