use anyhow::{bail, Context, Result};
use clap::Args;

use melrefine::metrics::EmbeddingSet;
use melrefine::search::{
    EmbeddingSource, ExternalCommand, FdEmbeddings, Objective, SyntheticBowl, ToyEmbedder,
};
use melrefine::tensor::read_fmap;
use melrefine::unet::{build_unet, SamplerConfig, UNetConfig};
use melrefine::RefineParams;

use crate::{parse_list, parse_spatial, ObjectiveArgs};

/// Toy U-Net and sampler settings.
#[derive(Args, Debug, Clone)]
pub struct ToyArgs {
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    /// `N` or `HxW`; each side must be a multiple of 2^levels.
    #[arg(long, default_value = "32", value_parser = parse_spatial)]
    pub spatial: (usize, usize),
    #[arg(long, default_value_t = 8)]
    pub base_channels: usize,
    /// Seeds both the weights and the starting noise.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 25)]
    pub steps: usize,
    /// Samples per embedding set.
    #[arg(long, default_value_t = 16)]
    pub samples: usize,
}

impl ToyArgs {
    pub fn configs(&self) -> Result<(UNetConfig, SamplerConfig)> {
        let ucfg = UNetConfig {
            levels: self.levels,
            base_channels: self.base_channels,
            in_channels: 1,
            height: self.spatial.0,
            width: self.spatial.1,
            seed: self.seed,
        };
        ucfg.validate()?;
        let scfg = SamplerConfig {
            steps: self.steps,
            seed: self.seed,
            ..SamplerConfig::default()
        };
        scfg.validate()?;
        Ok((ucfg, scfg))
    }

    pub fn embedder(&self) -> Result<ToyEmbedder> {
        let (ucfg, sampler) = self.configs()?;
        Ok(ToyEmbedder {
            net: build_unet(&ucfg)?,
            sampler,
            samples: self.samples,
        })
    }
}

pub fn build_objective(a: &ObjectiveArgs) -> Result<Box<dyn Objective>> {
    let (kind, arg) = a
        .objective
        .split_once(':')
        .unwrap_or((a.objective.as_str(), ""));
    match kind {
        "synthetic-bowl" => {
            let center = if arg.is_empty() {
                RefineParams::tango2().as_array()
            } else {
                let v = parse_list(arg)?;
                <[f64; 5]>::try_from(v.as_slice())
                    .with_context(|| format!("synthetic-bowl needs 5 values, got {}", v.len()))?
            };
            Ok(Box::new(SyntheticBowl::new(center)))
        }
        "external-command" => {
            let mut cmd = ExternalCommand::parse(arg)?;
            cmd.serial = a.serial;
            Ok(Box::new(cmd))
        }
        "fd-embeddings" => {
            if arg.is_empty() {
                bail!("fd-embeddings needs a reference file: fd-embeddings:<ref.fmap>");
            }
            let reference = EmbeddingSet::from_feature_map(&read_fmap(arg)?)?;
            let source = match &a.embed_command {
                Some(line) => {
                    let mut command = ExternalCommand::parse(line)?;
                    command.serial = a.serial;
                    let workdir = std::env::temp_dir().join(format!("melrefine-embed-{}", std::process::id()));
                    std::fs::create_dir_all(&workdir).with_context(|| format!("creating {}", workdir.display()))?;
                    EmbeddingSource::Command { command, workdir }
                }
                None => EmbeddingSource::Toy(a.toy.embedder()?),
            };
            Ok(Box::new(FdEmbeddings::new(&reference, source)))
        }
        other => bail!("unknown objective {other:?}; expected synthetic-bowl, external-command or fd-embeddings"),
    }
}
