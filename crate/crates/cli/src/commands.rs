use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::path::{Path, PathBuf};

use log::{debug, info};
use momask_core::masked_gen::{inpaint, iterative_decode, DecodeOutcome, Sampling};
use momask_core::metrics::{
    default_feature_extractor, fid, jerk, mpjpe, sjpe, sjpe_trace, sjpe_trace_csv, DefaultFeatureExtractor,
    FeatureExtractor, MetricReport, SjpeReport,
};
use momask_core::motion::{load_motion, patch, synth_motion, unpatch, JointLayout, MotionSequence, SynthKind};
use momask_core::predictor::{train_count_predictor, Condition, CountModel};
use momask_core::residual_gen::{progressive_decode, train_residual, RRemaskConfig};
use momask_core::rvq::{codebook_perplexity, train_rvq, usage_histogram, CodebookStack, TokenGrid};
use momask_core::seeded_rng;
use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result, WithPath};
use crate::manifest::RunWriter;
use crate::plot::{parse_csv, render_svg};
use crate::Command;

pub const STACK_FILE: &str = "stack.json";
pub const TOKENIZER_FILE: &str = "tokenizer.json";
pub const BASE_MODEL_FILE: &str = "base_model.json";
pub const RESIDUAL_MODEL_FILE: &str = "residual_model.json";

/// Shape information needed to turn latents back into motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerMeta {
    pub stride: usize,
    pub dims: usize,
    pub fps: f64,
    pub layout: JointLayout,
}

/// One tokenized clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenFile {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u32>,
    pub frames: usize,
    pub grid: TokenGrid,
}

pub(crate) fn dispatch(command: &Command, config: &mut RunConfig, out: &Path) -> Result<()> {
    match command {
        Command::Synth { count, frames, kind } => cmd_synth(config, out, *count, *frames, kind.as_deref()),
        Command::Tokenize { motions, labels, epochs } => {
            if let Some(e) = epochs {
                config.tokenizer.epochs = *e;
            }
            config.validate()?;
            let motions = motions
                .clone()
                .or_else(|| config.paths.motions.clone())
                .ok_or_else(|| CliError::Config("tokenize needs --motions or paths.motions".into()))?;
            let labels = labels.clone().or_else(|| config.paths.labels.clone());
            cmd_tokenize(config, out, &motions, labels.as_deref())
        }
        Command::TrainPredictor { tokens } => {
            let tokens = tokens
                .clone()
                .or_else(|| config.paths.tokens.clone())
                .ok_or_else(|| CliError::Config("train-predictor needs --tokens or paths.tokens".into()))?;
            cmd_train_predictor(config, out, &tokens)
        }
        Command::Generate { models, label, length, cfg_scale, iters, conditional_only, inpaint, input } => {
            if let Some(s) = cfg_scale {
                config.decode.cfg_scale = *s;
                config.predictor.residual_cfg_scale = *s;
            }
            if let Some(l) = iters {
                config.decode.iterations = *l;
            }
            if *conditional_only {
                config.decode.guidance = false;
                config.predictor.residual_cfg_scale = 0.0;
            }
            config.validate()?;
            let models = models
                .clone()
                .or_else(|| config.paths.models.clone())
                .ok_or_else(|| CliError::Config("generate needs --models or paths.models".into()))?;
            let regions = inpaint.iter().map(|r| parse_region(r)).collect::<Result<Vec<_>>>()?;
            if !regions.is_empty() && input.is_none() {
                return Err(CliError::Config("--inpaint requires --input".into()));
            }
            let request = GenerateRequest { label: *label, length: *length, regions, input: input.clone() };
            cmd_generate(config, out, &models, &request)
        }
        Command::Eval { pred, gt } => cmd_eval(config, out, pred, gt),
        Command::Plot { input } => cmd_plot(config, out, input),
    }
}

/// Parses a half-open token region `start:end`.
pub fn parse_region(text: &str) -> Result<Range<usize>> {
    let bad = || CliError::Config(format!("bad region {text:?}; expected START:END with START <= END"));
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    let start: usize = a.trim().parse().map_err(|_| bad())?;
    let end: usize = b.trim().parse().map_err(|_| bad())?;
    if start > end {
        return Err(bad());
    }
    Ok(start..end)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn read_model_json<T: DeserializeOwned>(path: &Path) -> Result<(T, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Model(format!("{}: {e}", path.display())))?;
    let value = serde_json::from_slice(&bytes).map_err(|e| CliError::Model(format!("{}: {e}", path.display())))?;
    Ok((value, bytes))
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    serde_json::to_vec_pretty(value).map_err(|e| CliError::Data(e.to_string()))
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn is_motion_file(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("mot" | "csv"))
}

/// Regular files in `dir`, sorted by name.
fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Motion files in `dir`; any other regular file is an error.
fn list_motion_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let files = list_files(dir)?;
    if let Some(bad) = files.iter().find(|p| !is_motion_file(p)) {
        return Err(CliError::Data(format!("{}: not a motion file (expected .mot or .csv)", bad.display())));
    }
    if files.is_empty() {
        return Err(CliError::Data(format!("{}: no motion files", dir.display())));
    }
    Ok(files)
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<(MotionSequence, Vec<u8>)>> {
    paths
        .par_iter()
        .map(|p| {
            let bytes = read_bytes(p)?;
            let seq = load_motion(p).at(p)?;
            Ok((seq, bytes))
        })
        .collect()
}

fn cmd_synth(config: &RunConfig, out: &Path, count: usize, frames: usize, kind: Option<&str>) -> Result<()> {
    let kinds: Vec<SynthKind> = match kind {
        Some(k) => vec![k.parse().map_err(|e: momask_core::motion::MotionError| CliError::Config(e.to_string()))?],
        None => SynthKind::ALL.to_vec(),
    };
    let mut run = RunWriter::new("synth", out, config);
    let mut labels = BTreeMap::new();
    for i in 0..count {
        let label = i % kinds.len();
        let seq = synth_motion(kinds[label], frames, config.seed.wrapping_add(i as u64))?;
        let mut bytes = Vec::new();
        seq.write_to(&mut bytes)?;
        let name = format!("clip_{i:04}");
        run.write(&format!("motions/{name}.mot"), &bytes)?;
        labels.insert(name, label as u32);
    }
    run.write("labels.json", &to_json(&labels)?)?;
    run.finish()?;
    info!("wrote {count} clips to {}", out.display());
    Ok(())
}

fn cmd_tokenize(config: &RunConfig, out: &Path, motions: &Path, labels: Option<&Path>) -> Result<()> {
    let paths = list_motion_files(motions)?;
    let clips = load_all(&paths)?;
    let first = &clips[0].0;
    let meta = TokenizerMeta {
        stride: config.tokenizer.stride,
        dims: first.dims(),
        fps: first.fps(),
        layout: first.layout().clone(),
    };
    for ((seq, _), path) in clips.iter().zip(&paths) {
        if seq.layout() != &meta.layout || seq.fps() != meta.fps {
            return Err(CliError::Data(format!("{}: layout or fps differs from {}", path.display(), paths[0].display())));
        }
    }
    if config.rvq.code_dim != meta.stride * meta.dims {
        return Err(CliError::Config(format!(
            "rvq.code_dim is {} but stride {} x {} motion dims gives {}",
            config.rvq.code_dim,
            meta.stride,
            meta.dims,
            meta.stride * meta.dims
        )));
    }
    let label_map: BTreeMap<String, u32> = match labels {
        Some(p) => serde_json::from_slice(&read_bytes(p)?).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        None => BTreeMap::new(),
    };
    let latents = clips
        .par_iter()
        .map(|(seq, _)| patch(seq, meta.stride).map_err(CliError::from))
        .collect::<Result<Vec<_>>>()?;
    let t = &config.tokenizer;
    info!("training {} codebooks of size {} on {} clips", config.rvq.num_layers(), config.rvq.codebook_size, clips.len());
    let trained = train_rvq(&latents, &config.rvq, t.epochs, t.batch_size, config.seed)?;
    let stack = trained.stack;
    let grids = latents
        .par_iter()
        .map(|lat| Ok(stack.encode(lat, stack.num_layers())?.grid))
        .collect::<Result<Vec<_>>>()?;

    let mut run = RunWriter::new("tokenize", out, config);
    for ((path, (_, bytes)), _) in paths.iter().zip(&clips).zip(&grids) {
        run.input(file_name(path), bytes);
    }
    run.write(STACK_FILE, stack.to_json()?.as_bytes())?;
    run.write(TOKENIZER_FILE, &to_json(&meta)?)?;
    for ((path, (seq, _)), grid) in paths.iter().zip(&clips).zip(grids.iter()) {
        let name = stem(path);
        let file = TokenFile { label: label_map.get(&name).copied(), source: file_name(path), frames: seq.len(), grid: grid.clone() };
        run.write(&format!("tokens/{name}.json"), &to_json(&file)?)?;
    }
    let mut csv = String::from("epoch,mse\n");
    for (e, mse) in trained.mse_log.iter().enumerate() {
        csv.push_str(&format!("{},{mse}\n", e + 1));
        debug!("epoch {}: mse {mse}", e + 1);
    }
    run.write("mse.csv", csv.as_bytes())?;
    let final_mse = trained.mse_log.last().copied().unwrap_or(f64::NAN);
    let perplexity = codebook_perplexity(&usage_histogram(&grids, 0, config.rvq.codebook_size));
    info!("final mse {final_mse}, base perplexity {perplexity:.2}, {} dead-code resets", trained.resets);
    run.detail("final_mse", final_mse);
    run.detail("resets", trained.resets);
    run.detail("codebook_perplexity", perplexity);
    run.finish()?;
    Ok(())
}

/// Loads the token files of a tokenize run in name order.
pub fn load_token_dir(dir: &Path) -> Result<Vec<(String, TokenFile, Vec<u8>)>> {
    let token_dir = dir.join("tokens");
    let mut out = Vec::new();
    for path in list_files(&token_dir)? {
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let bytes = read_bytes(&path)?;
        let file: TokenFile =
            serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        out.push((file_name(&path), file, bytes));
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{}: no token files", token_dir.display())));
    }
    Ok(out)
}

fn condition_of(label: Option<u32>) -> Condition {
    label.map_or(Condition::Null, Condition::Label)
}

fn cmd_train_predictor(config: &RunConfig, out: &Path, tokens: &Path) -> Result<()> {
    config.validate()?;
    let (stack, stack_bytes): (CodebookStack, _) = read_model_json(&tokens.join(STACK_FILE))?;
    let (meta, meta_bytes): (TokenizerMeta, _) = read_model_json(&tokens.join(TOKENIZER_FILE))?;
    if stack.code_dim() != meta.stride * meta.dims {
        return Err(CliError::Model(format!("{}: code dim does not match tokenizer shape", tokens.display())));
    }
    let files = load_token_dir(tokens)?;
    let p = &config.predictor;
    let base_corpus: Vec<(Vec<usize>, Condition)> =
        files.iter().map(|(_, f, _)| (f.grid.row(0).to_vec(), condition_of(f.label))).collect();
    let grid_corpus: Vec<(TokenGrid, Condition)> =
        files.iter().map(|(_, f, _)| (f.grid.clone(), condition_of(f.label))).collect();
    info!("training count predictors on {} token grids", files.len());
    let base = train_count_predictor(&base_corpus, 0, stack.layer(0).len(), p.alpha, p.uncond_drop, config.seed)?;
    let residual = train_residual(
        &stack,
        &grid_corpus,
        RRemaskConfig { replace_ratio: p.replace_ratio },
        p.alpha,
        p.uncond_drop,
        config.seed.wrapping_add(1),
    )?;

    let mut run = RunWriter::new("train-predictor", out, config);
    run.input(STACK_FILE, &stack_bytes);
    for (name, _, bytes) in &files {
        run.input(format!("tokens/{name}"), bytes);
    }
    run.write(BASE_MODEL_FILE, base.to_json()?.as_bytes())?;
    run.write(RESIDUAL_MODEL_FILE, residual.to_json()?.as_bytes())?;
    run.write(STACK_FILE, &stack_bytes)?;
    run.write(TOKENIZER_FILE, &meta_bytes)?;
    run.detail("base_contexts", base.tables().len());
    run.detail("residual_contexts", residual.tables().len());
    run.finish()?;
    Ok(())
}

/// Loaded artifacts of a train-predictor run.
pub struct Models {
    pub stack: CodebookStack,
    pub meta: TokenizerMeta,
    pub base: CountModel,
    pub residual: CountModel,
    hashes: Vec<(String, Vec<u8>)>,
}

pub fn load_models(dir: &Path) -> Result<Models> {
    let (stack, a) = read_model_json(&dir.join(STACK_FILE))?;
    let (meta, b) = read_model_json(&dir.join(TOKENIZER_FILE))?;
    let base_path = dir.join(BASE_MODEL_FILE);
    let residual_path = dir.join(RESIDUAL_MODEL_FILE);
    let c = std::fs::read(&base_path).map_err(|e| CliError::Model(format!("{}: {e}", base_path.display())))?;
    let d = std::fs::read(&residual_path).map_err(|e| CliError::Model(format!("{}: {e}", residual_path.display())))?;
    let base = CountModel::from_json(&String::from_utf8_lossy(&c)).at(&base_path)?;
    let residual = CountModel::from_json(&String::from_utf8_lossy(&d)).at(&residual_path)?;
    Ok(Models {
        stack,
        meta,
        base,
        residual,
        hashes: vec![
            (STACK_FILE.into(), a),
            (TOKENIZER_FILE.into(), b),
            (BASE_MODEL_FILE.into(), c),
            (RESIDUAL_MODEL_FILE.into(), d),
        ],
    })
}

pub struct GenerateRequest {
    pub label: Option<u32>,
    pub length: usize,
    pub regions: Vec<Range<usize>>,
    pub input: Option<PathBuf>,
}

fn cmd_generate(config: &RunConfig, out: &Path, models_dir: &Path, req: &GenerateRequest) -> Result<()> {
    let models = load_models(models_dir)?;
    if let Some(l) = req.label {
        if !models.base.labels().contains(&l) {
            return Err(CliError::Config(format!("label {l} was not seen in training (known: {:?})", models.base.labels())));
        }
    }
    let condition = condition_of(req.label);
    let input = match &req.input {
        Some(p) => {
            let bytes = read_bytes(p)?;
            let file: TokenFile =
                serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            if file.grid.num_layers() != models.stack.num_layers() {
                return Err(CliError::Data(format!(
                    "{}: {} token layers but the model has {}",
                    p.display(),
                    file.grid.num_layers(),
                    models.stack.num_layers()
                )));
            }
            Some((file, bytes))
        }
        None => None,
    };

    let n = input.as_ref().map_or(req.length, |(f, _)| f.grid.len());
    if n == 0 {
        return Err(CliError::Config("--length must be at least 1".into()));
    }
    let (base_row, decode): (Vec<usize>, Option<DecodeOutcome>) = match &input {
        Some((file, _)) if !req.regions.is_empty() => {
            let outcome = inpaint(&models.base, file.grid.row(0), &req.regions, &condition, &config.decode)?;
            (outcome.tokens, outcome.decode)
        }
        Some((file, _)) => (file.grid.row(0).to_vec(), None),
        None => {
            let outcome = iterative_decode(&models.base, n, &condition, &config.decode, &BTreeMap::new())?;
            (outcome.tokens.clone(), Some(outcome))
        }
    };
    if let Some(d) = &decode {
        for (l, m) in d.masked_counts.iter().enumerate() {
            info!("iteration {}: {m} positions masked", l + 1);
        }
    }
    let mut rng = seeded_rng(config.decode.seed ^ config.seed.rotate_left(32));
    let residual = progressive_decode(
        &models.residual,
        &models.stack,
        &base_row,
        &condition,
        config.predictor.residual_cfg_scale,
        Sampling::Greedy,
        &mut rng,
    )?;
    let mut rows = residual.grid.into_rows();
    if let Some((file, _)) = &input {
        let inside: BTreeSet<usize> = req.regions.iter().flat_map(|r| r.clone()).collect();
        for (layer, row) in rows.iter_mut().enumerate() {
            for (t, tok) in row.iter_mut().enumerate() {
                if !inside.contains(&t) {
                    *tok = file.grid.row(layer)[t];
                }
            }
        }
    }
    let grid = TokenGrid::new(rows)?;
    let base_passes = decode.as_ref().map_or(0, |d| d.predictor_passes);
    let passes = base_passes + residual.predictor_passes;
    info!("predictor passes: {passes} ({base_passes} base + {} residual)", residual.predictor_passes);

    let meta = &models.meta;
    let frames = input.as_ref().map_or(n * meta.stride, |(f, _)| f.frames);
    let lat = models.stack.decode(&grid, grid.num_layers(), meta.stride)?;
    let motion = unpatch(&lat, meta.dims, frames, meta.fps, meta.layout.clone())?;
    let mut motion_bytes = Vec::new();
    motion.write_to(&mut motion_bytes)?;

    let mut run = RunWriter::new("generate", out, config);
    for (name, bytes) in &models.hashes {
        run.input(name.clone(), bytes);
    }
    if let Some((_, bytes)) = &input {
        run.input("input", bytes);
    }
    let token_file = TokenFile { source: "generate".into(), label: req.label, frames, grid };
    run.write("tokens.json", &to_json(&token_file)?)?;
    run.write("motions/motion.mot", &motion_bytes)?;
    let mut log = String::from("iteration,masked\n");
    if let Some(d) = &decode {
        for (l, m) in d.masked_counts.iter().enumerate() {
            log.push_str(&format!("{},{m}\n", l + 1));
        }
    }
    run.write("decode_log.csv", log.as_bytes())?;
    run.detail("masked_counts", decode.as_ref().map(|d| d.masked_counts.clone()).unwrap_or_default());
    run.detail("predictor_passes", passes);
    run.detail("regions", req.regions.iter().map(|r| [r.start, r.end]).collect::<Vec<_>>());
    run.finish()?;
    Ok(())
}

/// Pairs prediction and ground-truth files by name.
fn match_files(pred: &Path, gt: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    if pred.is_file() || gt.is_file() {
        for p in [pred, gt] {
            if !p.is_file() {
                return Err(CliError::Data(format!("{}: no such file", p.display())));
            }
        }
        return Ok(vec![(pred.to_path_buf(), gt.to_path_buf())]);
    }
    for p in [pred, gt] {
        if !p.is_dir() {
            return Err(CliError::Data(format!("{}: no such file or directory", p.display())));
        }
    }
    let motion_files = |dir: &Path| -> Result<Vec<PathBuf>> {
        let files: Vec<PathBuf> = list_files(dir)?.into_iter().filter(|p| is_motion_file(p)).collect();
        if files.is_empty() {
            return Err(CliError::Data(format!("{}: no motion files", dir.display())));
        }
        Ok(files)
    };
    let preds = motion_files(pred)?;
    let gts = motion_files(gt)?;
    let mut pairs = Vec::with_capacity(preds.len());
    for p in &preds {
        let g = gt.join(file_name(p));
        if !g.is_file() {
            return Err(CliError::Data(format!("{}: missing ground truth for {}", g.display(), p.display())));
        }
        pairs.push((p.clone(), g));
    }
    if let Some(extra) = gts.iter().find(|g| !pred.join(file_name(g)).is_file()) {
        return Err(CliError::Data(format!("{}: no matching prediction", extra.display())));
    }
    Ok(pairs)
}

struct SequenceEval {
    name: String,
    mpjpe: f64,
    sjpe: SjpeReport,
    trace_csv: String,
    pred_features: Vec<f64>,
    gt_features: Vec<f64>,
    pred_bytes: Vec<u8>,
    gt_bytes: Vec<u8>,
}

fn eval_pair(pred: &Path, gt: &Path) -> Result<SequenceEval> {
    let pred_bytes = read_bytes(pred)?;
    let gt_bytes = read_bytes(gt)?;
    let p = load_motion(pred).at(pred)?;
    let g = load_motion(gt).at(gt)?;
    let pj = jerk(&p).at(pred)?;
    let gj = jerk(&g).at(gt)?;
    Ok(SequenceEval {
        name: stem(pred),
        mpjpe: mpjpe(&p, &g).at(pred)?,
        sjpe: sjpe(&pj, &gj).at(pred)?,
        trace_csv: sjpe_trace_csv(&sjpe_trace(&pj, &gj)?),
        pred_features: default_feature_extractor(&p).at(pred)?,
        gt_features: default_feature_extractor(&g).at(gt)?,
        pred_bytes,
        gt_bytes,
    })
}

fn cmd_eval(config: &RunConfig, out: &Path, pred: &Path, gt: &Path) -> Result<()> {
    let pairs = match_files(pred, gt)?;
    let evals = pairs.par_iter().map(|(p, g)| eval_pair(p, g)).collect::<Result<Vec<_>>>()?;
    let n = evals.len() as f64;
    let mut report = MetricReport::new(DefaultFeatureExtractor.name());
    report.mpjpe_mm = Some(evals.iter().map(|e| e.mpjpe).sum::<f64>() / n);
    let noise = evals.iter().map(|e| e.sjpe.noise).sum::<f64>() / n;
    let stat = evals.iter().map(|e| e.sjpe.r#static).sum::<f64>() / n;
    report.set_sjpe(SjpeReport { total: noise + stat, noise, r#static: stat });
    let pf: Vec<Vec<f64>> = evals.iter().map(|e| e.pred_features.clone()).collect();
    let gf: Vec<Vec<f64>> = evals.iter().map(|e| e.gt_features.clone()).collect();
    report.set_fid(fid(&pf, &gf)?);
    report.validate()?;

    let mut run = RunWriter::new("eval", out, config);
    for e in &evals {
        run.input(format!("pred/{}", e.name), &e.pred_bytes);
        run.input(format!("gt/{}", e.name), &e.gt_bytes);
        run.write(&format!("traces/{}_sjpe.csv", e.name), e.trace_csv.as_bytes())?;
    }
    run.write("report.json", report.to_json()?.as_bytes())?;
    info!(
        "mpjpe {:.4} mm, sjpe {:.4} (noise {:.4}, static {:.4}), fid {:.6}",
        report.mpjpe_mm.unwrap_or_default(),
        noise + stat,
        noise,
        stat,
        report.fid.unwrap_or_default()
    );
    run.metrics(report);
    run.finish()?;
    Ok(())
}

fn cmd_plot(config: &RunConfig, out: &Path, input: &Path) -> Result<()> {
    let files: Vec<PathBuf> = if input.is_dir() {
        list_files(input)?.into_iter().filter(|p| p.extension().and_then(|e| e.to_str()) == Some("csv")).collect()
    } else if input.is_file() {
        vec![input.to_path_buf()]
    } else {
        return Err(CliError::Data(format!("{}: no such file or directory", input.display())));
    };
    if files.is_empty() {
        return Err(CliError::Data(format!("{}: no CSV files", input.display())));
    }
    let mut run = RunWriter::new("plot", out, config);
    for f in &files {
        let bytes = read_bytes(f)?;
        let table = parse_csv(&String::from_utf8_lossy(&bytes)).at(f)?;
        run.input(file_name(f), &bytes);
        run.write(&format!("{}.svg", stem(f)), render_svg(&table, &stem(f)).as_bytes())?;
    }
    run.finish()?;
    Ok(())
}
