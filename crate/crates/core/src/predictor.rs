//! Token-probability models consumed by the generators.
//!
//! [`TokenPredictor`] is the contract: given a partially masked token row, a
//! condition, and a layer index, return one row of logits per position. Two
//! implementations ship here: [`OraclePredictor`] replays fixed per-position
//! distributions (for brute-force checks), and [`CountModel`] is a smoothed
//! count table over local contexts that can be trained from token grids.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeded_rng;
use crate::util::{softmax, squared_distance, Fnv64};

/// JSON encoding of a masked position.
pub const MASK_JSON: i64 = -1;
/// Number of coarse position buckets used by [`CountModel`] contexts.
pub const POSITION_BUCKETS: usize = 8;
/// Logit assigned to zero-probability tokens so that logits stay finite.
pub const ZERO_PROB_LOGIT: f64 = -1e4;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("row {row} sums to {sum}, expected 1")]
    Unnormalized { row: usize, sum: f64 },
    #[error("unknown condition {0}")]
    UnknownCondition(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PredictorError>;

/// A token row where some positions are hidden.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "Vec<i64>", try_from = "Vec<i64>")]
pub struct MaskedSequence {
    tokens: Vec<Option<usize>>,
}

impl MaskedSequence {
    pub fn new(tokens: Vec<Option<usize>>) -> Self {
        MaskedSequence { tokens }
    }

    pub fn fully_masked(n: usize) -> Self {
        MaskedSequence { tokens: vec![None; n] }
    }

    pub fn from_row(row: &[usize]) -> Self {
        MaskedSequence { tokens: row.iter().copied().map(Some).collect() }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<usize> {
        self.tokens[i]
    }

    pub fn set(&mut self, i: usize, token: Option<usize>) {
        self.tokens[i] = token;
    }

    pub fn tokens(&self) -> &[Option<usize>] {
        &self.tokens
    }

    pub fn masked_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_none()).count()
    }
}

impl From<MaskedSequence> for Vec<i64> {
    fn from(m: MaskedSequence) -> Self {
        m.tokens.into_iter().map(|t| t.map_or(MASK_JSON, |v| v as i64)).collect()
    }
}

impl TryFrom<Vec<i64>> for MaskedSequence {
    type Error = String;

    fn try_from(v: Vec<i64>) -> std::result::Result<Self, String> {
        v.into_iter()
            .map(|x| match x {
                MASK_JSON => Ok(None),
                x if x >= 0 => Ok(Some(x as usize)),
                x => Err(format!("token {x} is neither an index nor the mask value -1")),
            })
            .collect::<std::result::Result<_, _>>()
            .map(MaskedSequence::new)
    }
}

/// What generation is conditioned on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Unconditional.
    Null,
    Label(u32),
    /// A caller-supplied embedding, resolved by the model.
    Vector(Vec<f64>),
}

/// Dense `rows × cols` matrix of logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl LogitMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(PredictorError::Shape(format!("{} values for {rows}x{cols}", data.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(PredictorError::Shape(format!("non-finite logit at row {}", i / cols.max(1))));
        }
        Ok(LogitMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn softmax_row(&self, i: usize) -> Vec<f64> {
        softmax(self.row(i))
    }
}

/// Anything that can score every token at every position.
///
/// Rows for unmasked positions may hold arbitrary values; callers ignore them.
pub trait TokenPredictor {
    fn vocab_size(&self) -> usize;

    fn predict_logits(&self, partial: &MaskedSequence, condition: &Condition, layer: usize) -> Result<LogitMatrix>;
}

fn log_prob(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        ZERO_PROB_LOGIT
    }
}

/// Replays stored per-position categorical distributions, ignoring the mask
/// pattern and the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePredictor {
    vocab: usize,
    tables: BTreeMap<Option<u32>, Vec<Vec<f64>>>,
}

impl OraclePredictor {
    pub fn new(vocab: usize) -> Self {
        OraclePredictor { vocab, tables: BTreeMap::new() }
    }

    /// Oracle with a single table that answers every condition.
    pub fn unconditional(rows: Vec<Vec<f64>>) -> Result<Self> {
        let vocab = rows.first().map_or(0, Vec::len);
        let mut o = OraclePredictor::new(vocab);
        o.insert(None, rows)?;
        Ok(o)
    }

    /// Stores the table for a label (`Some`) or for the unconditional branch (`None`).
    pub fn insert(&mut self, label: Option<u32>, rows: Vec<Vec<f64>>) -> Result<()> {
        for (i, r) in rows.iter().enumerate() {
            if r.len() != self.vocab {
                return Err(PredictorError::Shape(format!("row {i} has {} entries, vocab is {}", r.len(), self.vocab)));
            }
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || r.iter().any(|p| !(*p >= 0.0)) {
                return Err(PredictorError::Unnormalized { row: i, sum });
            }
        }
        self.tables.insert(label, rows);
        Ok(())
    }

    /// A one-hot table whose argmax at position `i` is `row[i]`.
    pub fn deterministic(row: &[usize], vocab: usize) -> Result<Self> {
        let rows = row
            .iter()
            .map(|&t| {
                let mut r = vec![0.0; vocab];
                r[t] = 1.0;
                r
            })
            .collect();
        let mut o = OraclePredictor::new(vocab);
        o.insert(None, rows)?;
        Ok(o)
    }

    fn table(&self, condition: &Condition) -> Result<&Vec<Vec<f64>>> {
        let key = match condition {
            Condition::Null => None,
            Condition::Label(l) => Some(*l),
            Condition::Vector(_) => {
                return Err(PredictorError::UnknownCondition("oracle tables are keyed by label".into()));
            }
        };
        self.tables
            .get(&key)
            .or_else(|| self.tables.get(&None))
            .ok_or_else(|| PredictorError::UnknownCondition(format!("{condition:?}")))
    }
}

impl TokenPredictor for OraclePredictor {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn predict_logits(&self, partial: &MaskedSequence, condition: &Condition, _layer: usize) -> Result<LogitMatrix> {
        let table = self.table(condition)?;
        if table.len() != partial.len() {
            return Err(PredictorError::Shape(format!(
                "oracle holds {} positions, sequence has {}",
                table.len(),
                partial.len()
            )));
        }
        let data = table.iter().flat_map(|r| r.iter().map(|p| log_prob(*p))).collect();
        LogitMatrix::new(table.len(), self.vocab, data)
    }
}

/// The local context a count is filed under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextTag {
    /// Nearest unmasked neighbors; `None` stands for BOS (left) or EOS (right).
    Neighbors { left: Option<u32>, right: Option<u32> },
    /// Discretized partial reconstruction from earlier RVQ layers.
    Residual { id: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContextKey {
    #[serde(flatten)]
    pub tag: ContextTag,
    pub bucket: u8,
    pub condition: Option<u32>,
    pub layer: u32,
}

/// `floor(8 · t / n)`.
pub fn position_bucket(t: usize, n: usize) -> u8 {
    ((POSITION_BUCKETS * t) / n.max(1)).min(POSITION_BUCKETS - 1) as u8
}

/// Laplace-smoothed count tables over `(context, bucket, condition, layer)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "CountModelRepr", try_from = "CountModelRepr")]
pub struct CountModel {
    alpha: f64,
    vocab: usize,
    tables: BTreeMap<ContextKey, Vec<u64>>,
    marginals: BTreeMap<(Option<u32>, u32), Vec<u64>>,
    labels: BTreeSet<u32>,
    prototypes: Vec<(u32, Vec<f64>)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CountModelRepr {
    alpha: f64,
    vocab_size: usize,
    buckets: usize,
    labels: Vec<u32>,
    #[serde(default)]
    prototypes: Vec<(u32, Vec<f64>)>,
    contexts: Vec<SparseEntry<ContextKey>>,
    marginals: Vec<SparseEntry<MarginalKey>>,
}

#[derive(Serialize, Deserialize)]
struct MarginalKey {
    condition: Option<u32>,
    layer: u32,
}

#[derive(Serialize, Deserialize)]
struct SparseEntry<K> {
    #[serde(flatten)]
    key: K,
    /// `(token, count)` pairs with non-zero counts.
    counts: Vec<(usize, u64)>,
}

fn sparse(counts: &[u64]) -> Vec<(usize, u64)> {
    counts.iter().enumerate().filter(|(_, c)| **c > 0).map(|(k, c)| (k, *c)).collect()
}

fn dense(vocab: usize, entries: &[(usize, u64)]) -> std::result::Result<Vec<u64>, String> {
    let mut out = vec![0; vocab];
    for &(k, c) in entries {
        *out.get_mut(k).ok_or_else(|| format!("token {k} outside vocab {vocab}"))? += c;
    }
    Ok(out)
}

impl From<CountModel> for CountModelRepr {
    fn from(m: CountModel) -> Self {
        CountModelRepr {
            alpha: m.alpha,
            vocab_size: m.vocab,
            buckets: POSITION_BUCKETS,
            labels: m.labels.into_iter().collect(),
            prototypes: m.prototypes,
            contexts: m.tables.iter().map(|(k, c)| SparseEntry { key: *k, counts: sparse(c) }).collect(),
            marginals: m
                .marginals
                .iter()
                .map(|(&(condition, layer), c)| SparseEntry { key: MarginalKey { condition, layer }, counts: sparse(c) })
                .collect(),
        }
    }
}

impl TryFrom<CountModelRepr> for CountModel {
    type Error = String;

    fn try_from(r: CountModelRepr) -> std::result::Result<Self, String> {
        if !(r.alpha > 0.0 && r.alpha.is_finite()) || r.vocab_size == 0 {
            return Err("alpha must be positive and vocab_size at least 1".into());
        }
        if r.buckets != POSITION_BUCKETS {
            return Err(format!("model uses {} position buckets, this build expects {POSITION_BUCKETS}", r.buckets));
        }
        let mut m = CountModel::new(r.vocab_size, r.alpha).map_err(|e| e.to_string())?;
        m.labels = r.labels.into_iter().collect();
        m.prototypes = r.prototypes;
        for e in r.contexts {
            m.tables.insert(e.key, dense(r.vocab_size, &e.counts)?);
        }
        for e in r.marginals {
            m.marginals.insert((e.key.condition, e.key.layer), dense(r.vocab_size, &e.counts)?);
        }
        Ok(m)
    }
}

impl CountModel {
    pub fn new(vocab: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(PredictorError::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        if vocab == 0 {
            return Err(PredictorError::InvalidArgument("vocab must be at least 1".into()));
        }
        Ok(CountModel {
            alpha,
            vocab,
            tables: BTreeMap::new(),
            marginals: BTreeMap::new(),
            labels: BTreeSet::new(),
            prototypes: Vec::new(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tables(&self) -> &BTreeMap<ContextKey, Vec<u64>> {
        &self.tables
    }

    pub fn marginal(&self, condition: Option<u32>, layer: u32) -> Option<&[u64]> {
        self.marginals.get(&(condition, layer)).map(Vec::as_slice)
    }

    pub fn labels(&self) -> &BTreeSet<u32> {
        &self.labels
    }

    /// True when any counts were recorded for `layer`.
    pub fn has_layer(&self, layer: u32) -> bool {
        self.marginals.keys().any(|(_, l)| *l == layer)
    }

    /// Lets [`Condition::Vector`] resolve to `label` by nearest prototype.
    pub fn register_prototype(&mut self, label: u32, vector: Vec<f64>) {
        self.labels.insert(label);
        self.prototypes.retain(|(l, _)| *l != label);
        self.prototypes.push((label, vector));
    }

    pub fn resolve_condition(&self, condition: &Condition) -> Result<Option<u32>> {
        match condition {
            Condition::Null => Ok(None),
            Condition::Label(l) if self.labels.contains(l) => Ok(Some(*l)),
            Condition::Label(l) => Err(PredictorError::UnknownCondition(format!("label {l} is not registered"))),
            Condition::Vector(v) => self
                .prototypes
                .iter()
                .filter(|(_, p)| p.len() == v.len())
                .min_by(|a, b| squared_distance(&a.1, v).total_cmp(&squared_distance(&b.1, v)))
                .map(|(l, _)| Some(*l))
                .ok_or_else(|| PredictorError::UnknownCondition("no prototype matches the condition vector".into())),
        }
    }

    /// Records one observation of `token` under `key`, and in the marginal
    /// table of `(key.condition, key.layer)`.
    pub fn observe(&mut self, key: ContextKey, token: usize) -> Result<()> {
        if token >= self.vocab {
            return Err(PredictorError::InvalidArgument(format!("token {token} outside vocab {}", self.vocab)));
        }
        if let Some(l) = key.condition {
            self.labels.insert(l);
        }
        let vocab = self.vocab;
        self.tables.entry(key).or_insert_with(|| vec![0; vocab])[token] += 1;
        self.marginals.entry((key.condition, key.layer)).or_insert_with(|| vec![0; vocab])[token] += 1;
        Ok(())
    }

    /// Smoothed distribution for `key`, falling back to the marginal of
    /// `(condition, layer)` when the context was never seen.
    pub fn probabilities(&self, key: &ContextKey) -> Vec<f64> {
        let zeros;
        let counts = match self.tables.get(key).or_else(|| self.marginals.get(&(key.condition, key.layer))) {
            Some(c) => c.as_slice(),
            None => {
                zeros = vec![0; self.vocab];
                &zeros
            }
        };
        let total: u64 = counts.iter().sum();
        let denom = total as f64 + self.alpha * self.vocab as f64;
        counts.iter().map(|c| (*c as f64 + self.alpha) / denom).collect()
    }

    pub fn log_probabilities(&self, key: &ContextKey) -> Vec<f64> {
        self.probabilities(key).into_iter().map(f64::ln).collect()
    }

    /// Counts every position of every row for `layer`.
    ///
    /// With probability `uncond_drop` an example is counted a second time
    /// under the unconditional key. The draw depends only on the seed, the
    /// example, and how many identical examples came before it, so the result
    /// does not depend on corpus order.
    pub fn train_layer(&mut self, corpus: &[(Vec<usize>, Condition)], layer: u32, uncond_drop: f64, seed: u64) -> Result<()> {
        if corpus.is_empty() {
            return Err(PredictorError::EmptyCorpus);
        }
        if !(0.0..=1.0).contains(&uncond_drop) {
            return Err(PredictorError::InvalidArgument(format!("uncond_drop {uncond_drop} outside [0, 1]")));
        }
        let mut occurrences: HashMap<(&[usize], Option<u32>), u64> = HashMap::new();
        for (row, condition) in corpus {
            let cond = match condition {
                Condition::Null => None,
                Condition::Label(l) => Some(*l),
                Condition::Vector(_) => {
                    return Err(PredictorError::InvalidArgument(
                        "training conditions must be labels; map vectors with register_prototype".into(),
                    ))
                }
            };
            let seen = occurrences.entry((row.as_slice(), cond)).or_insert(0);
            let drop = cond.is_some() && uncond_drop > 0.0 && example_draw(seed, row, cond, *seen) < uncond_drop;
            *seen += 1;
            self.count_row(row, cond, layer)?;
            if drop {
                self.count_row(row, None, layer)?;
            }
        }
        Ok(())
    }

    fn count_row(&mut self, row: &[usize], condition: Option<u32>, layer: u32) -> Result<()> {
        let n = row.len();
        for t in 0..n {
            let left = t.checked_sub(1).map(|i| row[i] as u32);
            let right = row.get(t + 1).map(|&v| v as u32);
            let key = ContextKey { tag: ContextTag::Neighbors { left, right }, bucket: position_bucket(t, n), condition, layer };
            self.observe(key, row[t])?;
        }
        Ok(())
    }

    /// Logits for every position using nearest unmasked neighbors as context.
    pub fn predict_row_logits(&self, partial: &MaskedSequence, condition: Option<u32>, layer: u32) -> Result<LogitMatrix> {
        let n = partial.len();
        let tokens = partial.tokens();
        let mut data = Vec::with_capacity(n * self.vocab);
        let mut left = None;
        // right_of[i]: nearest unmasked token strictly after i
        let mut right_of = vec![None; n];
        for i in (0..n.saturating_sub(1)).rev() {
            right_of[i] = tokens[i + 1].map(|t| t as u32).or(right_of[i + 1]);
        }
        for t in 0..n {
            let key = ContextKey {
                tag: ContextTag::Neighbors { left, right: right_of[t] },
                bucket: position_bucket(t, n),
                condition,
                layer,
            };
            data.extend(self.log_probabilities(&key));
            if let Some(tok) = tokens[t] {
                left = Some(tok as u32);
            }
        }
        LogitMatrix::new(n, self.vocab, data)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn example_draw(seed: u64, row: &[usize], cond: Option<u32>, occurrence: u64) -> f64 {
    let mut h = Fnv64::new();
    h.write_u64(seed);
    h.write_u64(row.len() as u64);
    for &t in row {
        h.write_u64(t as u64);
    }
    h.write_u64(cond.map_or(u64::MAX, u64::from));
    h.write_u64(occurrence);
    seeded_rng(h.finish()).random::<f64>()
}

impl TokenPredictor for CountModel {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn predict_logits(&self, partial: &MaskedSequence, condition: &Condition, layer: usize) -> Result<LogitMatrix> {
        self.predict_row_logits(partial, self.resolve_condition(condition)?, layer as u32)
    }
}

/// Trains a fresh [`CountModel`] on one layer of token rows.
pub fn train_count_predictor(
    corpus: &[(Vec<usize>, Condition)],
    layer: u32,
    vocab: usize,
    alpha: f64,
    uncond_drop: f64,
    seed: u64,
) -> Result<CountModel> {
    let mut m = CountModel::new(vocab, alpha)?;
    m.train_layer(corpus, layer, uncond_drop, seed)?;
    Ok(m)
}

/// Free-function form of [`TokenPredictor::predict_logits`] for count models.
pub fn count_predict_logits(model: &CountModel, partial: &MaskedSequence, condition: &Condition, layer: usize) -> Result<LogitMatrix> {
    model.predict_logits(partial, condition, layer)
}
