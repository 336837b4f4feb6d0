//! Residual vector quantization.
//!
//! A [`CodebookStack`] holds `V + 1` codebooks. Layer 0 quantizes the latent
//! vector; every later layer quantizes whatever the earlier layers left over,
//! so the reconstruction is the sum of the selected codes. Residual layers
//! keep a pinned zero vector at entry 0, which guarantees that adding a layer
//! never increases the residual norm.
//!
//! Codebooks learn by exponential moving averages of their assigned vectors
//! (no gradients are involved) with dead-code reset, and training can drop
//! trailing layers per sample ("quantization dropout").

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::motion::LatentSequence;
use crate::util::squared_distance;
use crate::{seeded_rng, Rng};

/// Floor on EMA counts when normalizing sums back into entries.
pub const EMA_EPSILON: f64 = 1e-8;
/// Lloyd iteration cap for codebook initialization.
pub const KMEANS_MAX_ITERATIONS: usize = 50;

#[derive(Debug, Error)]
pub enum RvqError {
    #[error("codebook is empty")]
    EmptyCodebook,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("active layer count {requested} outside 1..={available}")]
    LayerCount { requested: usize, available: usize },
    #[error("token {index} at layer {layer}, position {position} is outside the codebook of size {size}")]
    IndexOutOfRange { layer: usize, position: usize, index: usize, size: usize },
    #[error("ragged token grid: row {row} has {got} positions, expected {expected}")]
    RaggedGrid { row: usize, expected: usize, got: usize },
    #[error("no training data")]
    EmptyData,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("codebook json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RvqError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RvqConfig {
    /// `V`: number of residual layers on top of the base layer.
    pub num_residual_layers: usize,
    pub codebook_size: usize,
    pub code_dim: usize,
    /// Probability that a training sample is truncated to a random layer prefix.
    pub dropout_ratio: f64,
    pub ema_decay: f64,
    pub dead_code_threshold: f64,
    /// Only reported as a diagnostic; the patcher has no parameters to train.
    pub commitment_weight: f64,
}

impl Default for RvqConfig {
    fn default() -> Self {
        RvqConfig {
            num_residual_layers: 5,
            codebook_size: 512,
            code_dim: 60,
            dropout_ratio: 0.2,
            ema_decay: 0.99,
            dead_code_threshold: 1e-2,
            commitment_weight: 0.02,
        }
    }
}

impl RvqConfig {
    pub fn num_layers(&self) -> usize {
        self.num_residual_layers + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(RvqError::InvalidConfig(m.to_string()));
        if self.codebook_size == 0 {
            return bad("codebook_size must be at least 1");
        }
        if self.code_dim == 0 {
            return bad("code_dim must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.dropout_ratio) {
            return bad("dropout_ratio must lie in [0, 1]");
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return bad("ema_decay must lie in (0, 1)");
        }
        if !(self.dead_code_threshold >= 0.0) || !(self.commitment_weight >= 0.0) {
            return bad("dead_code_threshold and commitment_weight must be non-negative");
        }
        Ok(())
    }
}

/// One layer of code vectors plus its EMA statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "CodebookRepr", try_from = "CodebookRepr")]
pub struct Codebook {
    dim: usize,
    entries: Vec<f64>,
    ema_counts: Vec<f64>,
    ema_sums: Vec<f64>,
    pinned_zero: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodebookRepr {
    pinned_zero: bool,
    entries: Vec<Vec<f64>>,
    ema_counts: Vec<f64>,
    ema_sums: Vec<Vec<f64>>,
}

impl From<Codebook> for CodebookRepr {
    fn from(cb: Codebook) -> Self {
        let rows = |v: &[f64]| v.chunks_exact(cb.dim).map(<[f64]>::to_vec).collect();
        CodebookRepr {
            pinned_zero: cb.pinned_zero,
            entries: rows(&cb.entries),
            ema_sums: rows(&cb.ema_sums),
            ema_counts: cb.ema_counts,
        }
    }
}

impl TryFrom<CodebookRepr> for Codebook {
    type Error = String;

    fn try_from(r: CodebookRepr) -> std::result::Result<Self, String> {
        let n = r.entries.len();
        let dim = r.entries.first().map_or(0, Vec::len);
        if n == 0 || dim == 0 {
            return Err("codebook needs at least one non-empty entry".into());
        }
        if r.ema_counts.len() != n || r.ema_sums.len() != n {
            return Err("EMA state length differs from entry count".into());
        }
        if r.entries.iter().chain(&r.ema_sums).any(|e| e.len() != dim) {
            return Err("ragged codebook entries".into());
        }
        let cb = Codebook {
            dim,
            entries: r.entries.concat(),
            ema_counts: r.ema_counts,
            ema_sums: r.ema_sums.concat(),
            pinned_zero: r.pinned_zero,
        };
        if cb.entries.iter().chain(&cb.ema_sums).any(|v| !v.is_finite()) || cb.ema_counts.iter().any(|c| !(*c >= 0.0)) {
            return Err("codebook holds non-finite entries or negative counts".into());
        }
        if cb.pinned_zero && cb.entry(0).iter().any(|v| *v != 0.0) {
            return Err("pinned entry 0 is not the zero vector".into());
        }
        Ok(cb)
    }
}

impl Codebook {
    /// Builds a codebook from row-major entries. EMA state starts at a count
    /// of one per entry with sums equal to the entries.
    pub fn from_entries(entries: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || entries.is_empty() {
            return Err(RvqError::EmptyCodebook);
        }
        if entries.len() % dim != 0 {
            return Err(RvqError::DimensionMismatch { expected: dim, got: entries.len() % dim });
        }
        let n = entries.len() / dim;
        Ok(Codebook { dim, ema_sums: entries.clone(), entries, ema_counts: vec![1.0; n], pinned_zero: false })
    }

    /// Like [`Codebook::from_entries`] but entry 0 is forced to the zero
    /// vector and is never updated or reset.
    pub fn with_pinned_zero(entries: Vec<f64>, dim: usize) -> Result<Self> {
        let mut cb = Codebook::from_entries(entries, dim)?;
        cb.entries[..dim].fill(0.0);
        cb.ema_sums[..dim].fill(0.0);
        cb.pinned_zero = true;
        Ok(cb)
    }

    pub fn len(&self) -> usize {
        self.ema_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ema_counts.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, k: usize) -> &[f64] {
        &self.entries[k * self.dim..(k + 1) * self.dim]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn ema_counts(&self) -> &[f64] {
        &self.ema_counts
    }

    pub fn pinned_zero(&self) -> bool {
        self.pinned_zero
    }

    /// Squared-Euclidean nearest entry; ties go to the lowest index.
    pub fn nearest_code(&self, v: &[f64]) -> Result<(usize, &[f64])> {
        if self.is_empty() {
            return Err(RvqError::EmptyCodebook);
        }
        if v.len() != self.dim {
            return Err(RvqError::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        let mut best = (0, f64::INFINITY);
        for (k, e) in self.entries.chunks_exact(self.dim).enumerate() {
            let d = squared_distance(e, v);
            if d < best.1 {
                best = (k, d);
            }
        }
        Ok((best.0, self.entry(best.0)))
    }

    /// One EMA step over `assignments` of `(code index, vector)`.
    ///
    /// Counts and sums decay by `decay` and absorb the batch statistics with
    /// weight `1 - decay`; entries become `sums / max(counts, EMA_EPSILON)`.
    /// Afterwards every non-pinned entry whose count is below
    /// `dead_code_threshold` is replaced by a randomly chosen assigned vector
    /// (count reset to 1). Returns the number of reset entries.
    pub fn ema_update(
        &mut self,
        assignments: &[(usize, &[f64])],
        decay: f64,
        dead_code_threshold: f64,
        rng: &mut Rng,
    ) -> Result<usize> {
        let (n, dim) = (self.len(), self.dim);
        let mut batch_counts = vec![0.0; n];
        let mut batch_sums = vec![0.0; n * dim];
        for (position, &(k, v)) in assignments.iter().enumerate() {
            if k >= n {
                return Err(RvqError::IndexOutOfRange { layer: 0, position, index: k, size: n });
            }
            if v.len() != dim {
                return Err(RvqError::DimensionMismatch { expected: dim, got: v.len() });
            }
            batch_counts[k] += 1.0;
            for (acc, x) in batch_sums[k * dim..(k + 1) * dim].iter_mut().zip(v) {
                *acc += x;
            }
        }
        let first = usize::from(self.pinned_zero);
        for k in first..n {
            self.ema_counts[k] = decay * self.ema_counts[k] + (1.0 - decay) * batch_counts[k];
            let denom = self.ema_counts[k].max(EMA_EPSILON);
            for i in k * dim..(k + 1) * dim {
                self.ema_sums[i] = decay * self.ema_sums[i] + (1.0 - decay) * batch_sums[i];
                self.entries[i] = self.ema_sums[i] / denom;
            }
        }
        let mut resets = 0;
        if !assignments.is_empty() {
            for k in first..n {
                if self.ema_counts[k] < dead_code_threshold {
                    let (_, v) = assignments[rng.random_range(0..assignments.len())];
                    self.entries[k * dim..(k + 1) * dim].copy_from_slice(v);
                    self.ema_sums[k * dim..(k + 1) * dim].copy_from_slice(v);
                    self.ema_counts[k] = 1.0;
                    resets += 1;
                }
            }
        }
        Ok(resets)
    }
}

/// Token indices for every layer: `rows[layer][position]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenGrid {
    rows: Vec<Vec<usize>>,
}

impl TokenGrid {
    pub fn new(rows: Vec<Vec<usize>>) -> Result<Self> {
        let expected = rows.first().map_or(0, Vec::len);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != expected {
                return Err(RvqError::RaggedGrid { row, expected, got: r.len() });
            }
        }
        Ok(TokenGrid { rows })
    }

    pub fn num_layers(&self) -> usize {
        self.rows.len()
    }

    /// Number of positions (latent time steps).
    pub fn len(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, layer: usize) -> &[usize] {
        &self.rows[layer]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vec<usize>> {
        self.rows
    }
}

/// Result of [`CodebookStack::encode`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeTrace {
    pub grid: TokenGrid,
    /// `layer_inputs[v]` is the residual fed to layer `v` (row-major `n × d`);
    /// `layer_inputs[0]` is the latent itself.
    pub layer_inputs: Vec<Vec<f64>>,
    /// What is left after the last active layer.
    pub final_residual: Vec<f64>,
    /// `residual_norms[v][i]`: norm of position `i`'s residual after layer `v`.
    pub residual_norms: Vec<Vec<f64>>,
}

impl EncodeTrace {
    /// Residual left after the first `layers` layers (row-major `n × d`).
    pub fn residual_after(&self, layers: usize) -> &[f64] {
        if layers < self.layer_inputs.len() {
            &self.layer_inputs[layers]
        } else {
            &self.final_residual
        }
    }

    /// Mean squared reconstruction error per element using `layers` layers.
    pub fn mse_after(&self, layers: usize) -> f64 {
        let r = self.residual_after(layers);
        r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64
    }
}

/// The `V + 1` codebooks and the configuration that built them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodebookStack {
    pub config: RvqConfig,
    layers: Vec<Codebook>,
}

impl CodebookStack {
    pub fn new(config: RvqConfig, layers: Vec<Codebook>) -> Result<Self> {
        config.validate()?;
        if layers.len() != config.num_layers() {
            return Err(RvqError::InvalidConfig(format!(
                "{} codebooks for {} layers",
                layers.len(),
                config.num_layers()
            )));
        }
        for cb in &layers {
            if cb.dim() != config.code_dim {
                return Err(RvqError::DimensionMismatch { expected: config.code_dim, got: cb.dim() });
            }
        }
        Ok(CodebookStack { config, layers })
    }

    pub fn layers(&self) -> &[Codebook] {
        &self.layers
    }

    pub fn layer(&self, v: usize) -> &Codebook {
        &self.layers[v]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn code_dim(&self) -> usize {
        self.config.code_dim
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: CodebookStack = serde_json::from_str(text)?;
        CodebookStack::new(raw.config, raw.layers)
    }

    fn check_active(&self, active_layers: usize) -> Result<()> {
        if active_layers == 0 || active_layers > self.num_layers() {
            return Err(RvqError::LayerCount { requested: active_layers, available: self.num_layers() });
        }
        Ok(())
    }

    /// Quantizes one vector through the first `active_layers` layers,
    /// writing the residual after each layer into `residuals`.
    fn encode_vector(&self, v: &[f64], active_layers: usize, tokens: &mut Vec<usize>, residuals: &mut Vec<Vec<f64>>) -> Result<()> {
        let mut r = v.to_vec();
        for cb in &self.layers[..active_layers] {
            let (k, code) = cb.nearest_code(&r)?;
            tokens.push(k);
            for (x, c) in r.iter_mut().zip(code) {
                *x -= c;
            }
            residuals.push(r.clone());
        }
        Ok(())
    }

    /// Residual quantization of every latent vector through the first
    /// `active_layers` layers.
    pub fn encode(&self, lat: &LatentSequence, active_layers: usize) -> Result<EncodeTrace> {
        self.check_active(active_layers)?;
        if lat.dim() != self.code_dim() {
            return Err(RvqError::DimensionMismatch { expected: self.code_dim(), got: lat.dim() });
        }
        let n = lat.len();
        let d = self.code_dim();
        let mut rows = vec![Vec::with_capacity(n); active_layers];
        let mut inputs = vec![Vec::with_capacity(n * d); active_layers];
        let mut norms = vec![Vec::with_capacity(n); active_layers];
        let mut final_residual = Vec::with_capacity(n * d);
        let (mut tokens, mut residuals) = (Vec::new(), Vec::new());
        for v in lat.iter() {
            tokens.clear();
            residuals.clear();
            self.encode_vector(v, active_layers, &mut tokens, &mut residuals)?;
            inputs[0].extend_from_slice(v);
            for layer in 0..active_layers {
                rows[layer].push(tokens[layer]);
                let r = &residuals[layer];
                norms[layer].push(r.iter().map(|x| x * x).sum::<f64>().sqrt());
                if layer + 1 < active_layers {
                    inputs[layer + 1].extend_from_slice(r);
                } else {
                    final_residual.extend_from_slice(r);
                }
            }
        }
        Ok(EncodeTrace { grid: TokenGrid::new(rows)?, layer_inputs: inputs, final_residual, residual_norms: norms })
    }

    /// Sum of the selected codes over layers `0..up_to_layer` at each position.
    pub fn decode(&self, grid: &TokenGrid, up_to_layer: usize, stride: usize) -> Result<LatentSequence> {
        if up_to_layer == 0 || up_to_layer > grid.num_layers() || up_to_layer > self.num_layers() {
            return Err(RvqError::LayerCount {
                requested: up_to_layer,
                available: grid.num_layers().min(self.num_layers()),
            });
        }
        let d = self.code_dim();
        let mut codes = vec![0.0; grid.len() * d];
        for (layer, row) in grid.rows()[..up_to_layer].iter().enumerate() {
            let cb = &self.layers[layer];
            for (position, &index) in row.iter().enumerate() {
                if index >= cb.len() {
                    return Err(RvqError::IndexOutOfRange { layer, position, index, size: cb.len() });
                }
                for (acc, c) in codes[position * d..(position + 1) * d].iter_mut().zip(cb.entry(index)) {
                    *acc += c;
                }
            }
        }
        LatentSequence::new(codes, d, stride).map_err(|_| RvqError::DimensionMismatch { expected: d, got: 0 })
    }

    /// `β · mean ||residual||²` of an encode trace, reported for monitoring only.
    pub fn commitment_diagnostic(&self, trace: &EncodeTrace) -> f64 {
        let n = trace.grid.len().max(1);
        self.config.commitment_weight * trace.final_residual.iter().map(|x| x * x).sum::<f64>() / n as f64
    }
}

/// Convenience wrapper for [`CodebookStack::encode`].
pub fn rvq_encode(stack: &CodebookStack, lat: &LatentSequence, active_layers: usize) -> Result<EncodeTrace> {
    stack.encode(lat, active_layers)
}

/// Convenience wrapper for [`CodebookStack::decode`].
pub fn rvq_decode(stack: &CodebookStack, grid: &TokenGrid, up_to_layer: usize, stride: usize) -> Result<LatentSequence> {
    stack.decode(grid, up_to_layer, stride)
}

/// k-means++ seeding followed by at most `max_iterations` Lloyd steps.
///
/// `data` is row-major with `dim` columns. When the data holds fewer distinct
/// points than `k`, the surplus centroids duplicate randomly chosen points.
/// Empty clusters keep their previous centroid.
pub fn kmeans(data: &[f64], dim: usize, k: usize, max_iterations: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    if dim == 0 || data.is_empty() || data.len() % dim != 0 {
        return Err(RvqError::EmptyData);
    }
    if k == 0 {
        return Err(RvqError::EmptyCodebook);
    }
    let points: Vec<&[f64]> = data.chunks_exact(dim).collect();
    let m = points.len();

    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(points[rng.random_range(0..m)]);
    let mut nearest: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[..dim])).collect();
    for _ in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = m - 1;
            for (i, w) in nearest.iter().enumerate() {
                if *w > 0.0 && target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // floating-point slack can run past the last positive weight
            if nearest[chosen] == 0.0 {
                chosen = nearest.iter().rposition(|w| *w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..m)
        };
        let c = points[pick];
        centroids.extend_from_slice(c);
        for (w, p) in nearest.iter_mut().zip(&points) {
            *w = w.min(squared_distance(p, c));
        }
    }

    let mut assignment = vec![usize::MAX; m];
    for _ in 0..max_iterations {
        let mut changed = false;
        for (a, p) in assignment.iter_mut().zip(&points) {
            let mut best = (0, f64::INFINITY);
            for (j, c) in centroids.chunks_exact(dim).enumerate() {
                let d = squared_distance(p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            if *a != best.0 {
                *a = best.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (a, p) in assignment.iter().zip(&points) {
            counts[*a] += 1;
            for (s, x) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for i in j * dim..(j + 1) * dim {
                    centroids[i] = sums[i] / counts[j] as f64;
                }
            }
        }
    }
    Ok(centroids)
}

/// Builds a stack layer by layer with k-means: layer 0 on the data, layer
/// `v > 0` on the residuals left by layers `< v` (with entry 0 pinned to zero
/// and k-means filling the other `N - 1` entries).
pub fn init_codebooks(data: &[LatentSequence], cfg: &RvqConfig, seed: u64) -> Result<CodebookStack> {
    cfg.validate()?;
    let d = cfg.code_dim;
    let mut residual: Vec<f64> = Vec::new();
    for lat in data {
        if lat.dim() != d {
            return Err(RvqError::DimensionMismatch { expected: d, got: lat.dim() });
        }
        residual.extend_from_slice(lat.values());
    }
    if residual.is_empty() {
        return Err(RvqError::EmptyData);
    }
    let mut rng = seeded_rng(seed);
    let mut layers = Vec::with_capacity(cfg.num_layers());
    for v in 0..cfg.num_layers() {
        let cb = if v == 0 {
            Codebook::from_entries(kmeans(&residual, d, cfg.codebook_size, KMEANS_MAX_ITERATIONS, &mut rng)?, d)?
        } else {
            let mut entries = vec![0.0; d];
            if cfg.codebook_size > 1 {
                entries.extend(kmeans(&residual, d, cfg.codebook_size - 1, KMEANS_MAX_ITERATIONS, &mut rng)?);
            }
            Codebook::with_pinned_zero(entries, d)?
        };
        for r in residual.chunks_exact_mut(d) {
            let (_, code) = cb.nearest_code(r)?;
            for (x, c) in r.iter_mut().zip(code) {
                *x -= c;
            }
        }
        layers.push(cb);
    }
    CodebookStack::new(cfg.clone(), layers)
}

/// Number of layers a training sample keeps: all `V + 1` with probability
/// `1 - q`, otherwise a uniform prefix length in `1..=V + 1`.
pub fn sample_active_layers(q: f64, num_residual_layers: usize, rng: &mut Rng) -> usize {
    if rng.random::<f64>() < q {
        rng.random_range(1..=num_residual_layers + 1)
    } else {
        num_residual_layers + 1
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub stack: CodebookStack,
    /// Per-element reconstruction MSE with all layers, one entry per epoch.
    pub mse_log: Vec<f64>,
    pub resets: usize,
}

/// Initializes a stack with [`init_codebooks`] and refines it with EMA updates.
///
/// Each mini-batch draws an active layer count per sample, encodes it, and
/// feeds every active layer the residuals it saw.
pub fn train_rvq(dataset: &[LatentSequence], cfg: &RvqConfig, epochs: usize, batch_size: usize, seed: u64) -> Result<TrainOutcome> {
    if epochs == 0 || batch_size == 0 {
        return Err(RvqError::InvalidConfig("epochs and batch_size must be at least 1".into()));
    }
    let mut stack = init_codebooks(dataset, cfg, seed)?;
    let d = cfg.code_dim;
    let vectors: Vec<&[f64]> = dataset.iter().flat_map(|l| l.iter()).collect();
    let mut rng = seeded_rng(seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    let mut mse_log = Vec::with_capacity(epochs);
    let mut resets = 0;
    let (mut tokens, mut residuals) = (Vec::new(), Vec::new());
    for _ in 0..epochs {
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for batch in order.chunks(batch_size) {
            let mut per_layer: Vec<(Vec<usize>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); stack.num_layers()];
            for &i in batch {
                let active = sample_active_layers(cfg.dropout_ratio, cfg.num_residual_layers, &mut rng);
                tokens.clear();
                residuals.clear();
                stack.encode_vector(vectors[i], active, &mut tokens, &mut residuals)?;
                for layer in 0..active {
                    let input = if layer == 0 { vectors[i] } else { &residuals[layer - 1][..] };
                    per_layer[layer].0.push(tokens[layer]);
                    per_layer[layer].1.extend_from_slice(input);
                }
            }
            for (layer, (idx, flat)) in per_layer.iter().enumerate() {
                let assignments: Vec<(usize, &[f64])> = idx.iter().copied().zip(flat.chunks_exact(d)).collect();
                resets += stack.layers[layer].ema_update(&assignments, cfg.ema_decay, cfg.dead_code_threshold, &mut rng)?;
            }
        }
        mse_log.push(dataset_mse(&stack, dataset, stack.num_layers())?);
    }
    Ok(TrainOutcome { stack, mse_log, resets })
}

/// Per-element reconstruction MSE over a dataset using the first `layers` layers.
pub fn dataset_mse(stack: &CodebookStack, dataset: &[LatentSequence], layers: usize) -> Result<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for lat in dataset {
        let trace = stack.encode(lat, layers)?;
        sum += trace.final_residual.iter().map(|x| x * x).sum::<f64>();
        count += trace.final_residual.len();
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// `exp(H)` of the usage distribution, with `0 · ln 0 = 0`.
pub fn codebook_perplexity(histogram: &[u64]) -> f64 {
    let total: u64 = histogram.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let entropy: f64 = histogram
        .iter()
        .filter(|c| **c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    entropy.exp()
}

/// Code-usage counts of one layer across a set of grids.
pub fn usage_histogram<'a>(grids: impl IntoIterator<Item = &'a TokenGrid>, layer: usize, codebook_size: usize) -> Vec<u64> {
    let mut hist = vec![0u64; codebook_size];
    for g in grids {
        if layer < g.num_layers() {
            for &t in g.row(layer) {
                if t < codebook_size {
                    hist[t] += 1;
                }
            }
        }
    }
    hist
}
