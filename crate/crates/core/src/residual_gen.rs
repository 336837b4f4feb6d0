//! Residual-layer token prediction.
//!
//! Layer `j` is predicted in a single pass from the partial reconstruction of
//! layers `0..j`. For count models that reconstruction is discretized to the
//! index of its nearest base-layer code. Training corrupts the earlier layers
//! with random replacements so the model learns to cope with upstream errors.

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::masked_gen::{cfg_logits, draw, DecodeError, Sampling};
use crate::predictor::{position_bucket, Condition, ContextKey, ContextTag, CountModel, LogitMatrix, PredictorError};
use crate::rvq::{CodebookStack, RvqError, TokenGrid};
use crate::util::softmax;
use crate::Rng;

#[derive(Debug, Error)]
pub enum ResidualError {
    #[error("layer {layer} is not a residual layer (valid: 1..={max})")]
    InvalidLayer { layer: usize, max: usize },
    #[error("context for layer {layer} needs {layer} token rows, got {got}")]
    MissingRows { layer: usize, got: usize },
    #[error("no residual model for layer {0}")]
    MissingModel(usize),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Rvq(#[from] RvqError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

pub type Result<T> = std::result::Result<T, ResidualError>;

/// Summary of layers `0..layer` at one position.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualContext {
    /// `Σ_{v < layer}` of the selected code vectors.
    pub vector: Vec<f64>,
    /// Index of the base-layer code nearest to `vector`.
    pub id: u32,
    pub layer: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RRemaskConfig {
    pub replace_ratio: f64,
}

impl Default for RRemaskConfig {
    fn default() -> Self {
        RRemaskConfig { replace_ratio: 0.2 }
    }
}

fn check_layer(stack: &CodebookStack, layer: usize) -> Result<()> {
    let max = stack.num_layers() - 1;
    if layer == 0 || layer > max {
        return Err(ResidualError::InvalidLayer { layer, max });
    }
    Ok(())
}

/// Per-position context for predicting `layer` from `rows[..layer]`.
pub fn residual_context(stack: &CodebookStack, rows: &[Vec<usize>], layer: usize) -> Result<Vec<ResidualContext>> {
    check_layer(stack, layer)?;
    if rows.len() < layer {
        return Err(ResidualError::MissingRows { layer, got: rows.len() });
    }
    let grid = TokenGrid::new(rows[..layer].to_vec())?;
    let partial = stack.decode(&grid, layer, 1)?;
    partial
        .iter()
        .map(|v| {
            let (id, _) = stack.layer(0).nearest_code(v)?;
            Ok(ResidualContext { vector: v.to_vec(), id: id as u32, layer })
        })
        .collect()
}

/// Replaces a uniform `floor(ρ · n)`-subset of positions with random tokens
/// that differ from the originals whenever `vocab > 1`. Returns the corrupted
/// row and the sorted replaced positions.
pub fn rremask_corrupt(row: &[usize], replace_ratio: f64, vocab: usize, rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
    let n = row.len();
    let count = ((replace_ratio.clamp(0.0, 1.0) * n as f64).floor() as usize).min(n);
    let mut out = row.to_vec();
    if count == 0 || vocab == 0 {
        return (out, Vec::new());
    }
    let mut replaced = sample(rng, n, count).into_vec();
    replaced.sort_unstable();
    for &i in &replaced {
        out[i] = if vocab > 1 {
            // uniform over the other vocab - 1 tokens
            let r = rng.random_range(0..vocab - 1);
            if r >= row[i] { r + 1 } else { r }
        } else {
            rng.random_range(0..vocab)
        };
    }
    (out, replaced)
}

/// Scores residual-layer tokens from [`ResidualContext`]s.
pub trait ResidualPredictor {
    fn vocab_size(&self) -> usize;

    fn has_layer(&self, layer: usize) -> bool;

    fn predict_layer_logits(
        &self,
        contexts: &[ResidualContext],
        condition: &Condition,
        layer: usize,
    ) -> std::result::Result<LogitMatrix, PredictorError>;
}

impl ResidualPredictor for CountModel {
    fn vocab_size(&self) -> usize {
        crate::predictor::TokenPredictor::vocab_size(self)
    }

    fn has_layer(&self, layer: usize) -> bool {
        CountModel::has_layer(self, layer as u32)
    }

    fn predict_layer_logits(
        &self,
        contexts: &[ResidualContext],
        condition: &Condition,
        layer: usize,
    ) -> std::result::Result<LogitMatrix, PredictorError> {
        let cond = self.resolve_condition(condition)?;
        let n = contexts.len();
        let vocab = ResidualPredictor::vocab_size(self);
        let mut data = Vec::with_capacity(n * vocab);
        for (t, ctx) in contexts.iter().enumerate() {
            let key = ContextKey {
                tag: ContextTag::Residual { id: ctx.id },
                bucket: position_bucket(t, n),
                condition: cond,
                layer: layer as u32,
            };
            data.extend(self.log_probabilities(&key));
        }
        LogitMatrix::new(n, vocab, data)
    }
}

/// Adds residual-layer `layer` counts to `model` from full token grids.
///
/// Rows `0..layer` of each grid are corrupted with [`rremask_corrupt`] before
/// the context is computed; the target is the clean layer-`layer` token.
pub fn train_residual_layer(
    model: &mut CountModel,
    stack: &CodebookStack,
    corpus: &[(TokenGrid, Condition)],
    layer: usize,
    rremask: RRemaskConfig,
    uncond_drop: f64,
    rng: &mut Rng,
) -> Result<()> {
    check_layer(stack, layer)?;
    if corpus.is_empty() {
        return Err(ResidualError::EmptyCorpus);
    }
    for (grid, condition) in corpus {
        if grid.num_layers() <= layer {
            return Err(ResidualError::MissingRows { layer: layer + 1, got: grid.num_layers() });
        }
        let cond = model.resolve_condition(condition).or_else(|e| match condition {
            Condition::Label(l) => Ok(Some(*l)),
            _ => Err(e),
        })?;
        let corrupted: Vec<Vec<usize>> = grid.rows()[..layer]
            .iter()
            .enumerate()
            .map(|(v, row)| rremask_corrupt(row, rremask.replace_ratio, stack.layer(v).len(), rng).0)
            .collect();
        let contexts = residual_context(stack, &corrupted, layer)?;
        let drop = cond.is_some() && rng.random::<f64>() < uncond_drop;
        let n = contexts.len();
        for (t, ctx) in contexts.iter().enumerate() {
            let target = grid.row(layer)[t];
            let mut key = ContextKey {
                tag: ContextTag::Residual { id: ctx.id },
                bucket: position_bucket(t, n),
                condition: cond,
                layer: layer as u32,
            };
            model.observe(key, target)?;
            if drop {
                key.condition = None;
                model.observe(key, target)?;
            }
        }
    }
    Ok(())
}

/// Trains one count table per residual layer `1..=V` into a single model.
pub fn train_residual(
    stack: &CodebookStack,
    corpus: &[(TokenGrid, Condition)],
    rremask: RRemaskConfig,
    alpha: f64,
    uncond_drop: f64,
    seed: u64,
) -> Result<CountModel> {
    let vocab = stack.layers().iter().map(|c| c.len()).max().unwrap_or(1);
    let mut model = CountModel::new(vocab, alpha)?;
    let mut rng = crate::seeded_rng(seed);
    for layer in 1..stack.num_layers() {
        train_residual_layer(&mut model, stack, corpus, layer, rremask, uncond_drop, &mut rng)?;
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgressiveOutcome {
    pub grid: TokenGrid,
    pub predictor_passes: usize,
}

/// Fills layers `1..=V` one at a time on top of a committed base row.
pub fn progressive_decode<P: ResidualPredictor + ?Sized>(
    models: &P,
    stack: &CodebookStack,
    base_row: &[usize],
    condition: &Condition,
    cfg_scale: f64,
    sampling: Sampling,
    rng: &mut Rng,
) -> Result<ProgressiveOutcome> {
    let mut rows = vec![base_row.to_vec()];
    let mut passes = 0;
    for layer in 1..stack.num_layers() {
        if !models.has_layer(layer) {
            return Err(ResidualError::MissingModel(layer));
        }
        let contexts = residual_context(stack, &rows, layer)?;
        let cond = models.predict_layer_logits(&contexts, condition, layer)?;
        let uncond = models.predict_layer_logits(&contexts, &Condition::Null, layer)?;
        let logits = cfg_logits(&cond, &uncond, cfg_scale)?;
        passes += 1;
        let size = stack.layer(layer).len();
        let row = (0..logits.rows())
            .map(|t| {
                let scores = &logits.row(t)[..size.min(logits.cols())];
                draw(&softmax(scores), sampling, rng)
            })
            .collect();
        rows.push(row);
    }
    Ok(ProgressiveOutcome { grid: TokenGrid::new(rows)?, predictor_passes: passes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rvq::{Codebook, RvqConfig};
    use crate::seeded_rng;

    fn stack_1d() -> CodebookStack {
        let cfg = RvqConfig { num_residual_layers: 2, codebook_size: 3, code_dim: 1, ..RvqConfig::default() };
        CodebookStack::new(
            cfg,
            vec![
                Codebook::from_entries(vec![0.0, 4.0, 8.0], 1).unwrap(),
                Codebook::with_pinned_zero(vec![0.0, -1.0, 1.0], 1).unwrap(),
                Codebook::with_pinned_zero(vec![0.0, -0.25, 0.25], 1).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn first_layer_context_is_base_code() {
        let ctx = residual_context(&stack_1d(), &[vec![1, 2]], 1).unwrap();
        assert_eq!(ctx[0].vector, vec![4.0]);
        assert_eq!((ctx[0].id, ctx[1].id), (1, 2));
    }

    #[test]
    fn second_layer_context_sums_codes() {
        // base 4 plus residual -1
        let ctx = residual_context(&stack_1d(), &[vec![1], vec![1]], 2).unwrap();
        assert_eq!(ctx[0].vector, vec![3.0]);
        assert_eq!(ctx[0].id, 1);
    }

    #[test]
    fn zero_residual_codes_leave_base_context() {
        let s = stack_1d();
        for layer in 1..=2 {
            let rows = vec![vec![2, 0], vec![0, 0]];
            let ctx = residual_context(&s, &rows, layer).unwrap();
            assert_eq!(ctx[0].vector, vec![8.0]);
            assert_eq!(ctx[1].vector, vec![0.0]);
        }
    }

    #[test]
    fn context_errors() {
        let s = stack_1d();
        assert!(matches!(residual_context(&s, &[vec![0]], 0), Err(ResidualError::InvalidLayer { .. })));
        assert!(matches!(residual_context(&s, &[vec![0]], 3), Err(ResidualError::InvalidLayer { .. })));
        assert!(matches!(residual_context(&s, &[vec![0]], 2), Err(ResidualError::MissingRows { .. })));
    }

    #[test]
    fn rremask_cases() {
        let mut rng = seeded_rng(0);
        let row = vec![0, 1, 1, 0, 1, 0, 0, 1];
        assert_eq!(rremask_corrupt(&row, 0.0, 2, &mut rng), (row.clone(), vec![]));
        let (flipped, all) = rremask_corrupt(&row, 1.0, 2, &mut rng);
        assert_eq!(all.len(), 8);
        assert!(flipped.iter().zip(&row).all(|(a, b)| a != b));
        let row = vec![3, 1, 4, 1, 5, 9, 2, 6];
        let (out, replaced) = rremask_corrupt(&row, 0.5, 10, &mut rng);
        assert_eq!(replaced.len(), 4);
        for i in 0..8 {
            assert_eq!(out[i] != row[i], replaced.contains(&i));
        }
    }

    #[test]
    fn layer_zero_training_rejected() {
        let s = stack_1d();
        let mut m = CountModel::new(3, 1.0).unwrap();
        let grid = TokenGrid::new(vec![vec![0], vec![0], vec![0]]).unwrap();
        let r = train_residual_layer(&mut m, &s, &[(grid, Condition::Null)], 0, RRemaskConfig::default(), 0.1, &mut seeded_rng(0));
        assert!(matches!(r, Err(ResidualError::InvalidLayer { layer: 0, .. })));
    }

    #[test]
    fn single_pair_marginal_fallback() {
        let s = stack_1d();
        let alpha = 0.5;
        let grid = TokenGrid::new(vec![vec![1], vec![2], vec![0]]).unwrap();
        let m = train_residual(&s, &[(grid, Condition::Label(1))], RRemaskConfig { replace_ratio: 0.0 }, alpha, 0.0, 3).unwrap();
        // base token 2 (code 8) was never seen as a context
        let ctx = residual_context(&s, &[vec![2]], 1).unwrap();
        let l = m.predict_layer_logits(&ctx, &Condition::Label(1), 1).unwrap();
        let p = l.softmax_row(0);
        assert!((p[2] - (1.0 + alpha) / (1.0 + alpha * 3.0)).abs() < 1e-12);
    }

    #[test]
    fn no_corruption_matches_plain_counting() {
        let s = stack_1d();
        let grid = TokenGrid::new(vec![vec![1, 2, 0], vec![2, 0, 1], vec![0, 1, 2]]).unwrap();
        let m = train_residual(&s, &[(grid.clone(), Condition::Label(4))], RRemaskConfig { replace_ratio: 0.0 }, 1.0, 0.0, 0).unwrap();
        let mut expected = CountModel::new(3, 1.0).unwrap();
        for layer in 1..3 {
            let ctx = residual_context(&s, grid.rows(), layer).unwrap();
            for (t, c) in ctx.iter().enumerate() {
                let key = ContextKey { tag: ContextTag::Residual { id: c.id }, bucket: position_bucket(t, 3), condition: Some(4), layer: layer as u32 };
                expected.observe(key, grid.row(layer)[t]).unwrap();
            }
        }
        assert_eq!(m, expected);
    }

    #[test]
    fn zero_residual_layers_returns_base_row() {
        let cfg = RvqConfig { num_residual_layers: 0, codebook_size: 2, code_dim: 1, ..RvqConfig::default() };
        let s = CodebookStack::new(cfg, vec![Codebook::from_entries(vec![0.0, 1.0], 1).unwrap()]).unwrap();
        let m = CountModel::new(2, 1.0).unwrap();
        let out = progressive_decode(&m, &s, &[1, 0, 1], &Condition::Null, 5.0, Sampling::Greedy, &mut seeded_rng(0)).unwrap();
        assert_eq!(out.grid.rows(), &[vec![1, 0, 1]]);
        assert_eq!(out.predictor_passes, 0);
    }

    #[test]
    fn missing_layer_model_is_an_error() {
        let s = stack_1d();
        let m = CountModel::new(3, 1.0).unwrap();
        let r = progressive_decode(&m, &s, &[0], &Condition::Null, 5.0, Sampling::Greedy, &mut seeded_rng(0));
        assert!(matches!(r, Err(ResidualError::MissingModel(1))));
    }

    /// Picks the token whose code brings the context closest to a fixed target.
    struct TargetOracle {
        stack: CodebookStack,
        target: f64,
    }

    impl ResidualPredictor for TargetOracle {
        fn vocab_size(&self) -> usize {
            3
        }

        fn has_layer(&self, _layer: usize) -> bool {
            true
        }

        fn predict_layer_logits(
            &self,
            contexts: &[ResidualContext],
            _condition: &Condition,
            layer: usize,
        ) -> std::result::Result<LogitMatrix, PredictorError> {
            let codes = self.stack.layer(layer).entries();
            let data = contexts
                .iter()
                .flat_map(|c| codes.iter().map(move |k| -(c.vector[0] + k - self.target).abs()))
                .collect();
            LogitMatrix::new(contexts.len(), 3, data)
        }
    }

    #[test]
    fn oracle_residual_model_decodes_hand_trace() {
        let stack = stack_1d();
        let oracle = TargetOracle { stack: stack.clone(), target: 3.0 };
        let out = progressive_decode(&oracle, &stack, &[1], &Condition::Null, 0.0, Sampling::Greedy, &mut seeded_rng(0)).unwrap();
        assert_eq!(out.grid.rows(), &[vec![1], vec![1], vec![0]]);
        assert_eq!(out.predictor_passes, 2);
        assert_eq!(stack.decode(&out.grid, 3, 1).unwrap().values(), &[3.0]);
    }

    #[test]
    fn rows_depend_only_on_earlier_layers() {
        let s = stack_1d();
        let grids = [
            TokenGrid::new(vec![vec![0, 1, 2, 1], vec![1, 2, 0, 0], vec![2, 2, 1, 0]]).unwrap(),
            TokenGrid::new(vec![vec![1, 1, 2, 0], vec![2, 0, 1, 1], vec![0, 1, 1, 2]]).unwrap(),
        ];
        let corpus: Vec<_> = grids.iter().map(|g| (g.clone(), Condition::Label(0))).collect();
        let m = train_residual(&s, &corpus, RRemaskConfig::default(), 0.5, 0.2, 4).unwrap();
        let base = [1, 2, 0, 1];
        let a = residual_context(&s, &[base.to_vec(), vec![1, 1, 1, 1]], 1).unwrap();
        let b = residual_context(&s, &[base.to_vec(), vec![2, 0, 2, 0]], 1).unwrap();
        assert_eq!(a, b);
        let la = m.predict_layer_logits(&a, &Condition::Label(0), 1).unwrap();
        let lb = m.predict_layer_logits(&b, &Condition::Label(0), 1).unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn corruption_changes_observed_contexts() {
        let s = stack_1d();
        let rows: Vec<(TokenGrid, Condition)> = (0..6)
            .map(|i| {
                let base: Vec<usize> = (0..16).map(|t| (t + i) % 3).collect();
                let r1: Vec<usize> = (0..16).map(|t| (t * 2 + i) % 3).collect();
                (TokenGrid::new(vec![base, r1, vec![0; 16]]).unwrap(), Condition::Null)
            })
            .collect();
        let clean = train_residual(&s, &rows, RRemaskConfig { replace_ratio: 0.0 }, 1.0, 0.0, 1).unwrap();
        let noisy = train_residual(&s, &rows, RRemaskConfig { replace_ratio: 0.3 }, 1.0, 0.0, 1).unwrap();
        assert_ne!(clean.tables(), noisy.tables());
        assert_eq!(clean.marginal(None, 1), noisy.marginal(None, 1));
    }

    #[test]
    fn progressive_decode_is_reproducible() {
        let s = stack_1d();
        let grid = TokenGrid::new(vec![vec![0, 1, 2], vec![1, 2, 0], vec![2, 0, 1]]).unwrap();
        let m = train_residual(&s, &[(grid, Condition::Label(2))], RRemaskConfig::default(), 1.0, 0.5, 9).unwrap();
        let run = || progressive_decode(&m, &s, &[2, 1, 0], &Condition::Label(2), 5.0, Sampling::Greedy, &mut seeded_rng(1)).unwrap();
        assert_eq!(run(), run());
    }
}
