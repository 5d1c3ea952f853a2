//! End-to-end driver: simulate → basis → estimate → denoise → candidates →
//! rerank → average → evaluate.
//!
//! [`run`] keeps everything in memory. [`Runner`] writes every artifact under
//! an output directory together with `manifest.json`, and reuses the
//! simulate, estimate and candidates stages when their cache key and
//! artifact hashes still match.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::affinity::AffinityContext;
use crate::classify::{class_average, initial_candidates, rerank, ClassAverage, NeighborTable};
use crate::config::{hex, PipelineConfig};
use crate::ctf::ctf_grid;
use crate::cwf::{
    conditional_moments, denoise, estimate_covariance, estimate_mean, estimate_noise_var, ConditionalMoments,
    CovarianceModel,
};
use crate::eval::{evaluate, CleanReference, EvalReport};
use crate::image::{Image, ImageStack, Quaternion};
use crate::mrc::{read_mrc_images, read_mrc_stack, read_mrc_volume, write_mrc_images, write_mrc_stack};
use crate::plot::{plot_density, plot_montage};
use crate::steerable::{build_basis_with_cutoff, ctf_block_operator, BasisSpec, CtfOperator, SteerableCoeffs};
use crate::synth::{simulate, Particle, Phantom, SimConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Simulate,
    Basis,
    Estimate,
    Denoise,
    Candidates,
    Rerank,
    Average,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Simulate,
        Stage::Basis,
        Stage::Estimate,
        Stage::Denoise,
        Stage::Candidates,
        Stage::Rerank,
        Stage::Average,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Basis => "basis",
            Stage::Estimate => "estimate",
            Stage::Denoise => "denoise",
            Stage::Candidates => "candidates",
            Stage::Rerank => "rerank",
            Stage::Average => "average",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A stage error tagged with the stage that raised it.
#[derive(Debug)]
pub struct StageFailure {
    pub stage: Stage,
    pub error: Error,
}

impl fmt::Display for StageFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageFailure {}

fn at<T>(stage: Stage, r: Result<T>) -> std::result::Result<T, StageFailure> {
    r.map_err(|error| StageFailure { stage, error })
}

pub fn particle(cfg: &PipelineConfig) -> Result<Particle> {
    match &cfg.volume {
        Some(path) => Ok(Particle::Volume(read_mrc_volume(path)?)),
        None if cfg.blobs == 0 => Ok(Particle::Blobs(Phantom::asymmetric())),
        None => Ok(Particle::Blobs(Phantom::random(
            cfg.blobs,
            cfg.blob_spread,
            (cfg.blob_sigma_min, cfg.blob_sigma_max),
            cfg.phantom_seed,
        )?)),
    }
}

pub fn sim_config(cfg: &PipelineConfig) -> SimConfig {
    SimConfig {
        n: cfg.n,
        side: cfg.p,
        snr: cfg.snr,
        groups: cfg.ctf_params(),
        seed: cfg.seed,
    }
}

/// Simulated stack with clean images attached, or the configured input stack
/// (plus `clean.mrcs` from the same directory when that file exists).
pub fn simulate_stage(cfg: &PipelineConfig) -> Result<ImageStack> {
    if let Some(input) = &cfg.input {
        let stack = read_mrc_stack(input)?;
        let clean_path = clean_path_for(input);
        return if clean_path.exists() {
            stack.attach_clean(read_mrc_images(&clean_path)?)
        } else {
            Ok(stack)
        };
    }
    Ok(simulate(&particle(cfg)?, &sim_config(cfg))?.stack)
}

/// Ground-truth clean images expected next to an input stack: `<dir>/clean.mrcs`.
pub fn clean_path_for(stack: &Path) -> PathBuf {
    stack.with_file_name("clean.mrcs")
}

pub fn basis_stage(cfg: &PipelineConfig) -> Result<BasisSpec> {
    build_basis_with_cutoff(cfg.p, cfg.radius, cfg.bandlimit)
}

/// One block operator per configured defocus group.
pub fn ctf_operators(cfg: &PipelineConfig, basis: &BasisSpec) -> Result<Vec<CtfOperator>> {
    cfg.ctf_params()
        .iter()
        .map(|g| ctf_block_operator(&ctf_grid(g, cfg.p)?, basis))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub coeffs: Vec<SteerableCoeffs>,
    pub ops: Vec<CtfOperator>,
    pub model: CovarianceModel,
}

fn check_stack(stack: &ImageStack, cfg: &PipelineConfig) -> Result<()> {
    if stack.side() != cfg.p {
        return Err(Error::Config(format!(
            "stack images are {0}x{0} but p = {1}",
            stack.side(),
            cfg.p
        )));
    }
    if stack.n_groups() > cfg.n_groups() {
        return Err(Error::Config(format!(
            "stack uses {} defocus groups but defocus_um lists {}",
            stack.n_groups(),
            cfg.n_groups()
        )));
    }
    Ok(())
}

/// Expansion, CTF operators and the model, optionally reusing a stored model.
pub fn estimate_stage(
    stack: &ImageStack,
    basis: &BasisSpec,
    cfg: &PipelineConfig,
    stored: Option<CovarianceModel>,
) -> Result<Estimate> {
    check_stack(stack, cfg)?;
    let coeffs = basis.expand_all(stack.images())?;
    let ops = ctf_operators(cfg, basis)?;
    let model = match stored {
        Some(m) => m,
        None => {
            let noise_var = estimate_noise_var(stack, cfg.radius)?;
            let mu = estimate_mean(&coeffs, &ops, stack.group_of())?;
            estimate_covariance(&coeffs, &ops, stack.group_of(), &mu, noise_var, cfg.shrink_tau)?
        }
    };
    Ok(Estimate { coeffs, ops, model })
}

pub fn denoise_stage(
    stack: &ImageStack,
    est: &Estimate,
    basis: &BasisSpec,
) -> Result<(ConditionalMoments, ImageStack)> {
    let moments = conditional_moments(&est.coeffs, &est.ops, stack.group_of(), &est.model)?;
    let denoised = denoise(&moments, basis, stack.pixel_size())?;
    Ok((moments, denoised))
}

pub fn candidates_stage(moments: &ConditionalMoments, cfg: &PipelineConfig) -> Result<NeighborTable> {
    initial_candidates(moments.alpha(), cfg.s, cfg.angles)
}

pub fn rerank_stage(
    moments: &ConditionalMoments,
    model: &CovarianceModel,
    initial: &NeighborTable,
    cfg: &PipelineConfig,
) -> Result<NeighborTable> {
    let ctx = AffinityContext::new(moments, model)?;
    rerank(initial, &ctx, cfg.k)
}

/// Class averages of the denoised images, one per image.
pub fn average_stage(table: &NeighborTable, denoised: &ImageStack) -> Result<Vec<ClassAverage>> {
    use rayon::prelude::*;
    (0..table.len())
        .into_par_iter()
        .map(|i| class_average(i, table, denoised.images()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    /// Initial candidates truncated to `K`.
    pub initial: EvalReport,
    pub reranked: EvalReport,
}

pub fn evaluate_stage(
    stack: &ImageStack,
    initial: &NeighborTable,
    reranked: &NeighborTable,
    cfg: &PipelineConfig,
) -> Result<Evaluation> {
    let truth = stack
        .truth()
        .ok_or_else(|| Error::MissingTruth("stack has no ground-truth rotations".into()))?;
    let clean = stack
        .clean_images()
        .ok_or_else(|| Error::MissingTruth("stack has no clean images".into()))?;
    let rotations: Vec<Quaternion> = truth.iter().map(|t| t.rotation).collect();
    let reference = CleanReference::new(&clean, cfg.angles)?;
    let k = reranked.width();
    Ok(Evaluation {
        initial: evaluate(&initial.truncated(k), &rotations, &reference, cfg.threshold)?,
        reranked: evaluate(reranked, &rotations, &reference, cfg.threshold)?,
    })
}

/// Everything produced by one in-memory run.
#[derive(Debug)]
pub struct RunOutput {
    pub stack: ImageStack,
    pub basis: BasisSpec,
    pub estimate: Estimate,
    pub moments: ConditionalMoments,
    pub denoised: ImageStack,
    pub initial: NeighborTable,
    pub reranked: NeighborTable,
    pub averages: Vec<ClassAverage>,
    /// Absent when the stack carries no ground truth.
    pub evaluation: Option<Evaluation>,
    pub seconds: Vec<(Stage, f64)>,
}

/// Runs all eight stages in memory.
pub fn run(cfg: &PipelineConfig) -> std::result::Result<RunOutput, StageFailure> {
    at(Stage::Simulate, cfg.validate())?;
    let mut seconds = Vec::new();
    let mut timed = |stage: Stage, t: Instant| seconds.push((stage, t.elapsed().as_secs_f64()));

    let t = Instant::now();
    let stack = at(Stage::Simulate, simulate_stage(cfg))?;
    timed(Stage::Simulate, t);
    let t = Instant::now();
    let basis = at(Stage::Basis, basis_stage(cfg))?;
    timed(Stage::Basis, t);
    let t = Instant::now();
    let estimate = at(Stage::Estimate, estimate_stage(&stack, &basis, cfg, None))?;
    timed(Stage::Estimate, t);
    let t = Instant::now();
    let (moments, denoised) = at(Stage::Denoise, denoise_stage(&stack, &estimate, &basis))?;
    timed(Stage::Denoise, t);
    let t = Instant::now();
    let initial = at(Stage::Candidates, candidates_stage(&moments, cfg))?;
    timed(Stage::Candidates, t);
    let t = Instant::now();
    let reranked = at(Stage::Rerank, rerank_stage(&moments, &estimate.model, &initial, cfg))?;
    timed(Stage::Rerank, t);
    let t = Instant::now();
    let averages = at(Stage::Average, average_stage(&reranked, &denoised))?;
    timed(Stage::Average, t);
    let t = Instant::now();
    let evaluation = if stack.clean_images().is_some() {
        Some(at(Stage::Evaluate, evaluate_stage(&stack, &initial, &reranked, cfg))?)
    } else {
        None
    };
    timed(Stage::Evaluate, t);
    Ok(RunOutput {
        stack,
        basis,
        estimate,
        moments,
        denoised,
        initial,
        reranked,
        averages,
        evaluation,
        seconds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub key: String,
    pub seconds: f64,
    pub cached: bool,
    /// Output-relative path → SHA-256 of the file contents.
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    pub versions: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
}

pub const MANIFEST: &str = "manifest.json";

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            message: e.to_string(),
        })
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn key_of(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    hex(&h.finalize())
}

const SIM_KEYS: &[&str] = &[
    "n",
    "p",
    "snr",
    "seed",
    "defocus_um",
    "cs_mm",
    "lambda_pm",
    "b_factor",
    "amp_contrast",
    "pixel_size_ang",
    "blobs",
    "blob_spread",
    "blob_sigma_min",
    "blob_sigma_max",
    "phantom_seed",
    "volume",
    "input",
];

/// Artifact names, relative to the output directory.
pub mod artifacts {
    pub const STACK: &str = "stack.mrcs";
    pub const SIDECAR: &str = "stack.meta.jsonl";
    pub const CLEAN: &str = "clean.mrcs";
    pub const BASIS: &str = "basis.json";
    pub const MODEL: &str = "model.json";
    pub const DENOISED: &str = "denoised.mrcs";
    pub const CANDIDATES: &str = "candidates.csv";
    pub const NEIGHBORS: &str = "neighbors.csv";
    pub const AVERAGES: &str = "averages.mrcs";
    pub const MONTAGE: &str = "montage";
    pub const EVAL_INITIAL: &str = "eval_initial.csv";
    pub const EVAL_RERANKED: &str = "eval_reranked.csv";
    pub const DENSITY: &str = "density";
}

/// Disk-backed pipeline run under one output directory.
pub struct Runner {
    cfg: PipelineConfig,
    out: PathBuf,
    previous: Option<Manifest>,
    records: Vec<StageRecord>,
}

impl Runner {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let out = cfg.out.clone();
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        let manifest_path = out.join(MANIFEST);
        let previous = if manifest_path.exists() {
            match Manifest::read(&manifest_path) {
                Ok(m) => Some(m),
                Err(e) => {
                    log::warn!("ignoring unreadable manifest: {e}");
                    None
                }
            }
        } else {
            None
        };
        Ok(Runner {
            cfg,
            out,
            previous,
            records: Vec::new(),
        })
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// True when the previous manifest recorded `key` for `stage` and every
    /// artifact on disk still has the recorded hash.
    fn is_cached(&self, stage: Stage, key: &str) -> bool {
        let Some(rec) = self.previous.as_ref().and_then(|m| m.stage(stage.name())) else {
            return false;
        };
        rec.key == key
            && !rec.artifacts.is_empty()
            && rec
                .artifacts
                .iter()
                .all(|(p, h)| file_sha256(&self.path(p)).is_ok_and(|got| &got == h))
    }

    fn record(&mut self, stage: Stage, key: String, t: Instant, cached: bool, files: &[PathBuf]) -> Result<()> {
        let mut artifacts = BTreeMap::new();
        for f in files {
            let rel = f.strip_prefix(&self.out).unwrap_or(f).display().to_string();
            artifacts.insert(rel, file_sha256(f)?);
        }
        let seconds = t.elapsed().as_secs_f64();
        log::info!(
            "{stage}: {seconds:.2} s{}",
            if cached { " (cached)" } else { "" }
        );
        self.records.push(StageRecord {
            name: stage.name().to_string(),
            key,
            seconds,
            cached,
            artifacts,
        });
        Ok(())
    }

    fn artifact_hashes(&self, stage: Stage) -> String {
        self.records
            .iter()
            .find(|r| r.name == stage.name())
            .map(|r| r.artifacts.values().cloned().collect::<Vec<_>>().join(","))
            .unwrap_or_default()
    }

    fn write_manifest(&self) -> Result<Manifest> {
        let config = self
            .cfg
            .canonical()
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let mut versions = BTreeMap::new();
        versions.insert("cryoclass".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("manifest".to_string(), "1".to_string());
        let manifest = Manifest {
            config_hash: self.cfg.hash(),
            config,
            versions,
            stages: self.records.clone(),
        };
        let path = self.path(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }

    /// Runs stages up to and including `until`, then writes the manifest.
    pub fn run_until(mut self, until: Stage) -> std::result::Result<Manifest, StageFailure> {
        let result = self.stages(until);
        let manifest = at(until, self.write_manifest());
        result?;
        manifest
    }

    fn stages(&mut self, until: Stage) -> std::result::Result<(), StageFailure> {
        use artifacts as A;
        let cfg = self.cfg.clone();

        // simulate
        let stage = Stage::Simulate;
        let t = Instant::now();
        let mut sim_key_parts = vec![cfg.hash_keys(SIM_KEYS)];
        if let Some(input) = &cfg.input {
            sim_key_parts.push(at(stage, file_sha256(input))?);
        }
        let key = key_of(&sim_key_parts.iter().map(String::as_str).collect::<Vec<_>>());
        let stack_path = self.path(A::STACK);
        let clean_path = self.path(A::CLEAN);
        let cached = self.is_cached(stage, &key);
        let stack = if cached {
            let stack = at(stage, read_mrc_stack(&stack_path))?;
            if clean_path.exists() {
                at(stage, stack.attach_clean(at(stage, read_mrc_images(&clean_path))?))?
            } else {
                stack
            }
        } else {
            let stack = at(stage, simulate_stage(&cfg))?;
            at(stage, write_mrc_stack(&stack, &stack_path))?;
            if let Some(clean) = stack.clean_images() {
                let clean: Vec<Image> = clean.into_iter().cloned().collect();
                at(stage, write_mrc_images(&clean, &clean_path))?;
            } else if clean_path.exists() {
                at(stage, std::fs::remove_file(&clean_path).map_err(|e| Error::io(&clean_path, e)))?;
            }
            stack
        };
        let mut files = vec![stack_path.clone(), self.path(A::SIDECAR)];
        if clean_path.exists() {
            files.push(clean_path);
        }
        at(stage, self.record(stage, key.clone(), t, cached, &files))?;
        if until == stage {
            return Ok(());
        }

        // basis
        let stage = Stage::Basis;
        let t = Instant::now();
        let basis = at(stage, basis_stage(&cfg))?;
        let basis_path = self.path(A::BASIS);
        let summary = serde_json::json!({
            "side": basis.side(),
            "radius": basis.radius(),
            "total_dim": basis.total_dim(),
            "blocks": (0..basis.layout().n_blocks())
                .map(|b| (basis.layout().m(b), basis.layout().len(b)))
                .collect::<Vec<_>>(),
        });
        at(
            stage,
            std::fs::write(&basis_path, summary.to_string() + "\n").map_err(|e| Error::io(&basis_path, e)),
        )?;
        let basis_key = key_of(&[&cfg.hash_keys(&["p", "radius", "bandlimit"])]);
        at(stage, self.record(stage, basis_key, t, false, &[basis_path]))?;
        if until == stage {
            return Ok(());
        }

        // estimate
        let stage = Stage::Estimate;
        let t = Instant::now();
        let est_key = key_of(&[
            &self.artifact_hashes(Stage::Simulate),
            &cfg.hash_keys(&["p", "radius", "bandlimit", "shrink_tau", "defocus_um", "cs_mm", "lambda_pm", "b_factor", "amp_contrast", "pixel_size_ang"]),
        ]);
        let model_path = self.path(A::MODEL);
        let cached = self.is_cached(stage, &est_key);
        let stored = if cached {
            let text = at(
                stage,
                std::fs::read_to_string(&model_path).map_err(|e| Error::io(&model_path, e)),
            )?;
            Some(at(stage, CovarianceModel::from_json(&text))?)
        } else {
            None
        };
        let estimate = at(stage, estimate_stage(&stack, &basis, &cfg, stored))?;
        if !cached {
            at(
                stage,
                std::fs::write(&model_path, estimate.model.to_json()).map_err(|e| Error::io(&model_path, e)),
            )?;
        }
        at(stage, self.record(stage, est_key.clone(), t, cached, &[model_path]))?;
        if until == stage {
            return Ok(());
        }

        // denoise
        let stage = Stage::Denoise;
        let t = Instant::now();
        let (moments, denoised) = at(stage, denoise_stage(&stack, &estimate, &basis))?;
        let den_path = self.path(A::DENOISED);
        at(stage, write_mrc_images(denoised.images(), &den_path))?;
        at(stage, self.record(stage, est_key.clone(), t, false, &[den_path]))?;
        if until == stage {
            return Ok(());
        }

        // candidates
        let stage = Stage::Candidates;
        let t = Instant::now();
        let cand_key = key_of(&[&self.artifact_hashes(Stage::Estimate), &est_key, &cfg.hash_keys(&["S", "angles"])]);
        let cand_path = self.path(A::CANDIDATES);
        let cached = self.is_cached(stage, &cand_key);
        let initial = if cached {
            at(stage, NeighborTable::read_csv(&cand_path, stack.len(), cfg.s, cfg.s))?
        } else {
            let table = at(stage, candidates_stage(&moments, &cfg))?;
            at(stage, table.write_csv(&cand_path))?;
            table
        };
        at(stage, self.record(stage, cand_key.clone(), t, cached, &[cand_path]))?;
        if until == stage {
            return Ok(());
        }

        // rerank
        let stage = Stage::Rerank;
        let t = Instant::now();
        let rerank_key = key_of(&[&self.artifact_hashes(Stage::Candidates), &cfg.hash_keys(&["K"])]);
        let reranked = at(stage, rerank_stage(&moments, &estimate.model, &initial, &cfg))?;
        let nb_path = self.path(A::NEIGHBORS);
        at(stage, reranked.write_csv(&nb_path))?;
        at(stage, self.record(stage, rerank_key.clone(), t, false, &[nb_path]))?;
        if until == stage {
            return Ok(());
        }

        // average
        let stage = Stage::Average;
        let t = Instant::now();
        let averages = at(stage, average_stage(&reranked, &denoised))?;
        let avg_images: Vec<Image> = averages.iter().map(|a| a.average.clone()).collect();
        let avg_path = self.path(A::AVERAGES);
        at(stage, write_mrc_images(&avg_images, &avg_path))?;
        let mut files = vec![avg_path];
        files.extend(at(
            stage,
            write_figure_montage(&stack, &denoised, &avg_images, cfg.montage_classes, &self.path(A::MONTAGE)),
        )?);
        let avg_key = key_of(&[&self.artifact_hashes(Stage::Rerank), &cfg.hash_keys(&["montage_classes"])]);
        at(stage, self.record(stage, avg_key, t, false, &files))?;
        if until == stage {
            return Ok(());
        }

        // evaluate
        let stage = Stage::Evaluate;
        let t = Instant::now();
        let eval = at(stage, evaluate_stage(&stack, &initial, &reranked, &cfg))?;
        let (p_init, p_rer) = (self.path(A::EVAL_INITIAL), self.path(A::EVAL_RERANKED));
        at(stage, eval.initial.write_csv(&p_init))?;
        at(stage, eval.reranked.write_csv(&p_rer))?;
        let mut files = vec![p_init, p_rer];
        files.extend(at(
            stage,
            plot_density(
                &[("initial", &eval.initial), ("reranked", &eval.reranked)],
                &self.path(A::DENSITY),
            ),
        )?);
        let eval_key = key_of(&[
            &self.artifact_hashes(Stage::Rerank),
            &self.artifact_hashes(Stage::Candidates),
            &cfg.hash_keys(&["threshold", "angles"]),
        ]);
        at(stage, self.record(stage, eval_key, t, false, &files))?;
        log::info!(
            "true neighbors: initial {} / reranked {} of {} pairs",
            eval.initial.true_neighbors,
            eval.reranked.true_neighbors,
            eval.reranked.pairs
        );
        Ok(())
    }
}

/// Columns are classes; rows are clean (when known), noisy, denoised and
/// class average of the first `classes` centers.
pub fn write_figure_montage(
    stack: &ImageStack,
    denoised: &ImageStack,
    averages: &[Image],
    classes: usize,
    stem: &Path,
) -> Result<Vec<PathBuf>> {
    let c = classes.min(stack.len()).max(1);
    let mut tiles = Vec::new();
    if let Some(clean) = stack.clean_images() {
        tiles.extend(clean[..c].iter().map(|&im| im.clone()));
    }
    tiles.extend(stack.images()[..c].iter().cloned());
    tiles.extend(denoised.images()[..c].iter().cloned());
    tiles.extend(averages[..c].iter().cloned());
    plot_montage(&tiles, c, stem)
}

/// Reads the `bin_deg,density` section of an evaluation CSV.
pub fn read_histogram(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, message: String| Error::Metadata {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().skip_while(|(_, l)| l.trim() != "bin_deg,density");
    if lines.next().is_none() {
        return Err(bad(0, "no bin_deg,density section".into()));
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            let v = l.split(',').nth(1).ok_or_else(|| bad(k + 1, format!("expected bin,density, got {l:?}")))?;
            v.trim().parse::<f64>().map_err(|e| bad(k + 1, e.to_string()))
        })
        .collect()
}

/// Re-renders the montage of class averages and the density plot from the
/// artifacts of a finished run.
pub fn replot(out: &Path, cols: usize) -> Result<Vec<PathBuf>> {
    use crate::plot::density_raster;
    let mut files = Vec::new();
    let averages = read_mrc_images(&out.join(artifacts::AVERAGES))?;
    let c = cols.max(1);
    let shown = &averages[..averages.len().min(c * c)];
    files.extend(plot_montage(shown, c, &out.join("averages_montage"))?);
    let init = read_histogram(&out.join(artifacts::EVAL_INITIAL))?;
    let rer = read_histogram(&out.join(artifacts::EVAL_RERANKED))?;
    files.extend(density_raster(&[&init, &rer])?.write_both(&out.join(artifacts::DENSITY))?);
    Ok(files)
}
