use std::path::PathBuf;
use std::process::Command;

use crate::error::{Error, Result};
use crate::metrics::{frechet_distance, gaussian_stats, EmbeddingSet, GaussianStats};
use crate::refine::RefineParams;
use crate::tensor::read_fmap;
use crate::unet::{ddim_sample, SamplerConfig, ToyUNet};

/// A score over refinement parameters; lower is better.
pub trait Objective: Sync {
    fn name(&self) -> &str;

    fn evaluate(&self, params: &RefineParams) -> Result<f64>;

    /// Whether trials may run concurrently.
    fn reentrant(&self) -> bool {
        true
    }
}

/// Squared distance to a planted optimum `(s1, s2, b1, b2, m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticBowl {
    pub center: [f64; 5],
}

impl SyntheticBowl {
    pub fn new(center: [f64; 5]) -> Self {
        Self { center }
    }
}

impl Objective for SyntheticBowl {
    fn name(&self) -> &str {
        "synthetic-bowl"
    }

    fn evaluate(&self, params: &RefineParams) -> Result<f64> {
        Ok(params
            .as_array()
            .iter()
            .zip(&self.center)
            .map(|(p, c)| (p - c).powi(2))
            .sum())
    }
}

/// Runs a user program and parses the last non-empty stdout line as the score.
///
/// The program receives the parameters as trailing `key=value` arguments
/// (`s1=… s2=… b1=… b2=… m=…`) and as `MELREFINE_S1` … `MELREFINE_M`
/// environment variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalCommand {
    pub program: String,
    pub args: Vec<String>,
    pub serial: bool,
}

impl ExternalCommand {
    /// Splits a command line on whitespace.
    pub fn parse(command: &str) -> Result<Self> {
        let mut parts = command.split_whitespace().map(str::to_owned);
        let program = parts
            .next()
            .ok_or_else(|| Error::InvalidParam("external command is empty".into()))?;
        Ok(Self {
            program,
            args: parts.collect(),
            serial: false,
        })
    }

    fn command(&self, params: &RefineParams) -> Command {
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args);
        let named = [
            ("s1", params.s1),
            ("s2", params.s2),
            ("b1", params.b1),
            ("b2", params.b2),
            ("m", params.m),
        ];
        for (key, value) in named {
            cmd.arg(format!("{key}={value}"));
            cmd.env(
                format!("MELREFINE_{}", key.to_uppercase()),
                value.to_string(),
            );
        }
        cmd
    }
}

impl Objective for ExternalCommand {
    fn name(&self) -> &str {
        "external-command"
    }

    fn evaluate(&self, params: &RefineParams) -> Result<f64> {
        let output = self
            .command(params)
            .output()
            .map_err(|e| Error::Objective(format!("cannot run {}: {e}", self.program)))?;
        if !output.status.success() {
            return Err(Error::Objective(format!(
                "{} exited with {}",
                self.program, output.status
            )));
        }
        let stdout = String::from_utf8_lossy(&output.stdout);
        let line = stdout
            .lines()
            .rev()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .ok_or_else(|| Error::Objective(format!("{} printed no score", self.program)))?;
        let value = line.strip_prefix("score=").unwrap_or(line);
        value
            .parse()
            .map_err(|_| Error::Objective(format!("cannot parse score from {line:?}")))
    }

    fn reentrant(&self) -> bool {
        !self.serial
    }
}

/// Produces embeddings for the toy pipeline: each seed's DDIM sample is
/// mean-pooled to a 4×4 grid per channel and flattened.
#[derive(Debug, Clone)]
pub struct ToyEmbedder {
    pub net: ToyUNet,
    pub sampler: SamplerConfig,
    pub samples: usize,
}

pub const EMBED_GRID: usize = 4;

impl ToyEmbedder {
    pub fn embed(&self, params: Option<&RefineParams>) -> Result<EmbeddingSet> {
        let cfg = self.net.config();
        let (ph, pw) = (cfg.height / EMBED_GRID, cfg.width / EMBED_GRID);
        let d = cfg.in_channels * EMBED_GRID * EMBED_GRID;
        let mut data = Vec::with_capacity(self.samples * d);
        for i in 0..self.samples {
            let scfg = SamplerConfig {
                seed: self.sampler.seed.wrapping_add(i as u64),
                ..self.sampler
            };
            let x = ddim_sample(&self.net, &scfg, params)?;
            for c in 0..cfg.in_channels {
                let plane = x.plane(0, c);
                for gy in 0..EMBED_GRID {
                    for gx in 0..EMBED_GRID {
                        let mut acc = 0.0f64;
                        for y in gy * ph..(gy + 1) * ph {
                            for xx in gx * pw..(gx + 1) * pw {
                                acc += f64::from(plane[y * cfg.width + xx]);
                            }
                        }
                        data.push(acc / (ph * pw) as f64);
                    }
                }
            }
        }
        EmbeddingSet::new(self.samples, d, &data)
    }
}

/// Where `fd-embeddings` gets generated embeddings from.
#[derive(Debug, Clone)]
pub enum EmbeddingSource {
    Toy(ToyEmbedder),
    /// A program invoked like [`ExternalCommand`] with an extra `--out <path>`
    /// argument; it must write a `(1, 1, n, d)` FMAP file there.
    Command {
        command: ExternalCommand,
        workdir: PathBuf,
    },
}

/// Fréchet distance between generated embeddings and a fixed reference.
#[derive(Debug, Clone)]
pub struct FdEmbeddings {
    pub reference: GaussianStats,
    pub source: EmbeddingSource,
}

impl FdEmbeddings {
    pub fn new(reference: &EmbeddingSet, source: EmbeddingSource) -> Self {
        Self {
            reference: gaussian_stats(reference),
            source,
        }
    }
}

impl Objective for FdEmbeddings {
    fn name(&self) -> &str {
        "fd-embeddings"
    }

    fn evaluate(&self, params: &RefineParams) -> Result<f64> {
        let generated = match &self.source {
            EmbeddingSource::Toy(embedder) => embedder.embed(Some(params))?,
            EmbeddingSource::Command { command, workdir } => {
                let [s1, s2, b1, b2, m] = params.as_array();
                let out = workdir.join(format!("emb_s1={s1}_s2={s2}_b1={b1}_b2={b2}_m={m}.fmap"));
                let status = command
                    .command(params)
                    .arg("--out")
                    .arg(&out)
                    .status()
                    .map_err(|e| {
                        Error::Objective(format!("cannot run {}: {e}", command.program))
                    })?;
                if !status.success() {
                    return Err(Error::Objective(format!(
                        "{} exited with {status}",
                        command.program
                    )));
                }
                EmbeddingSet::from_feature_map(&read_fmap(&out)?)?
            }
        };
        frechet_distance(&self.reference, &gaussian_stats(&generated))
    }

    fn reentrant(&self) -> bool {
        match &self.source {
            EmbeddingSource::Toy(_) => true,
            EmbeddingSource::Command { command, .. } => !command.serial,
        }
    }
}
