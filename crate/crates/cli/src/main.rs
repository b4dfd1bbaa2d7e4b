mod objective;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use melrefine::mel::{mel_spectrogram, read_wav, render_png, MelConfig};
use melrefine::metrics::{
    band_energy, frechet_distance, gaussian_stats, mean_paired_kl, pairs_from_feature_map,
    EmbeddingSet, DEFAULT_KL_EPS,
};
use melrefine::search::{
    coarse_sweep_m, fine_sweep_m, grid_search, rank, run_demo, write_tsv, GridSpec, Trial,
};
use melrefine::tensor::{read_fmap, write_fmap};
use melrefine::{apply_block, Dims, FeatureMap, RefineParams};

use objective::{build_objective, ToyArgs};

/// Frequency-band refinement of diffusion U-Net features, with the toy
/// pipeline, mel front end, metrics and parameter search around it.
#[derive(Parser, Debug)]
#[command(name = "melrefine", version)]
struct Cli {
    /// Print results as one JSON object instead of key=value lines.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Apply the hook to one decoder block's serialized features.
    Refine(RefineArgs),
    /// Sample the toy U-Net with and without the hook and write a comparison bundle.
    Demo(DemoArgs),
    /// Write toy-pipeline embeddings, e.g. as an `fd-embeddings` reference.
    Embed(EmbedArgs),
    /// Log-mel spectrogram of a WAV file.
    Mel(MelArgs),
    #[command(subcommand)]
    Metrics(MetricsCommand),
    #[command(subcommand)]
    Search(SearchCommand),
}

#[derive(Args, Debug, Clone, Default)]
struct ParamArgs {
    /// Start from a named preset: identity, tango, mustango, tango2.
    #[arg(long)]
    preset: Option<String>,
    /// Start from a `s1=… s2=… b1=… b2=… m=…` text file.
    #[arg(long, conflicts_with = "preset")]
    params: Option<PathBuf>,
    #[arg(long)]
    s1: Option<f64>,
    #[arg(long)]
    s2: Option<f64>,
    #[arg(long)]
    b1: Option<f64>,
    #[arg(long)]
    b2: Option<f64>,
    #[arg(long)]
    m: Option<f64>,
}

impl ParamArgs {
    /// Base from preset or file (identity otherwise), then per-flag overrides.
    fn resolve(&self) -> Result<RefineParams> {
        let mut p = match (&self.preset, &self.params) {
            (Some(name), _) => RefineParams::from_preset(name)?,
            (None, Some(path)) => std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?
                .parse()?,
            (None, None) => RefineParams::identity(),
        };
        let overrides = [
            (&mut p.s1, self.s1),
            (&mut p.s2, self.s2),
            (&mut p.b1, self.b1),
            (&mut p.b2, self.b2),
            (&mut p.m, self.m),
        ];
        for (slot, value) in overrides {
            if let Some(v) = value {
                *slot = v;
            }
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args, Debug)]
struct RefineArgs {
    /// Backbone features (FMAP).
    #[arg(long = "in")]
    input: PathBuf,
    /// Skip features (FMAP).
    #[arg(long)]
    skip: PathBuf,
    /// Decoder block index, 0 next to the bottleneck.
    #[arg(long)]
    block: usize,
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    out_x: PathBuf,
    #[arg(long)]
    out_h: PathBuf,
}

/// `N` or `HxW`.
fn parse_spatial(s: &str) -> Result<(usize, usize), String> {
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| format!("bad spatial size {s:?}"))
    };
    match s.split_once(['x', 'X']) {
        Some((h, w)) => Ok((parse(h)?, parse(w)?)),
        None => parse(s).map(|n| (n, n)),
    }
}

#[derive(Args, Debug)]
struct DemoArgs {
    #[command(flatten)]
    toy: ToyArgs,
    #[command(flatten)]
    params: ParamArgs,
    /// Output directory for the bundle.
    #[arg(long)]
    out: PathBuf,
    /// Also write the first step's per-block hook inputs and outputs.
    #[arg(long)]
    capture: bool,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[command(flatten)]
    toy: ToyArgs,
    #[command(flatten)]
    params: ParamArgs,
    /// Write `(1, 1, n, d)` embeddings here.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MelArgs {
    #[arg(long)]
    wav: PathBuf,
    #[arg(long, default_value_t = 16_000)]
    sr: u32,
    #[arg(long, default_value_t = 1024)]
    nfft: usize,
    #[arg(long, default_value_t = 160)]
    hop: usize,
    #[arg(long, default_value_t = 64)]
    mels: usize,
    #[arg(long)]
    out_fmap: Option<PathBuf>,
    #[arg(long)]
    out_png: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum MetricsCommand {
    /// Fréchet distance between two `(1, 1, n, d)` embedding files.
    Fd {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        gen: PathBuf,
    },
    /// Mean paired KL(ref ‖ gen) from a `(1, 2, n, k)` posterior file.
    Kl {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = DEFAULT_KL_EPS)]
        eps: f64,
    },
    /// Low/high-frequency spectral energy of a feature map.
    Band {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Args, Debug)]
struct ObjectiveArgs {
    /// `synthetic-bowl[:s1,s2,b1,b2,m]`, `external-command:<cmd …>` or `fd-embeddings:<ref.fmap>`.
    #[arg(long)]
    objective: String,
    /// For `fd-embeddings`: produce embeddings with this command instead of the toy pipeline.
    /// It gets `s1=… … m=…` arguments plus `--out <path>` and must write a `(1, 1, n, d)` FMAP.
    #[arg(long)]
    embed_command: Option<String>,
    /// Run external commands one at a time.
    #[arg(long)]
    serial: bool,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[command(flatten)]
    toy: ToyArgs,
}

#[derive(Args, Debug)]
struct GridArgs {
    /// Axis overrides such as `s1=1.0:1.6:0.1;b2=0.1:0.5:0.1`.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    no_order_s: bool,
    #[arg(long)]
    no_order_b: bool,
}

impl GridArgs {
    fn spec(&self) -> Result<GridSpec> {
        let mut g = GridSpec::default();
        if let Some(ranges) = &self.grid {
            g = g.with_ranges(ranges)?;
        }
        g.enforce_s_order = !self.no_order_s;
        g.enforce_b_order = !self.no_order_b;
        Ok(g)
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split([',', ' '])
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .with_context(|| format!("bad number {t:?}"))
        })
        .collect()
}

#[derive(Subcommand, Debug)]
enum SearchCommand {
    /// Sweep the backbone gain m with the other gains held at the anchor.
    CoarseM {
        #[command(flatten)]
        objective: ObjectiveArgs,
        /// Candidate m values, comma separated.
        #[arg(long, default_value = "1,1.5,2,2.5,3")]
        candidates: String,
        /// Refine around the best candidate at this step.
        #[arg(long)]
        fine_step: Option<f64>,
        #[command(flatten)]
        anchor: ParamArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive (s1, s2, b1, b2) grid at fixed m.
    Grid {
        #[command(flatten)]
        objective: ObjectiveArgs,
        #[arg(long)]
        m: f64,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coarse m sweep, fine m sweep, then the grid at the chosen m.
    Full {
        #[command(flatten)]
        objective: ObjectiveArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

type Report = Map<String, Value>;

fn emit(report: &Report, as_json: bool) {
    if as_json {
        println!("{}", Value::Object(report.clone()));
        return;
    }
    for (k, v) in report {
        match v {
            Value::String(s) => println!("{k}={s}"),
            other => println!("{k}={other}"),
        }
    }
}

fn write_table(path: Option<&Path>, trials: &[Trial]) -> Result<()> {
    if let Some(path) = path {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_tsv(BufWriter::new(file), trials)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn params_json(p: &RefineParams) -> Value {
    json!({ "s1": p.s1, "s2": p.s2, "b1": p.b1, "b2": p.b2, "m": p.m })
}

fn run(cli: Cli) -> Result<Report> {
    let mut r = Report::new();
    match cli.command {
        Command::Refine(a) => {
            let params = a.params.resolve()?;
            let x = read_fmap(&a.input)?;
            let h = read_fmap(&a.skip)?;
            let (xr, hr) = apply_block(&params, a.block, &x, &h)?;
            write_fmap(&a.out_x, &xr)?;
            write_fmap(&a.out_h, &hr)?;
            r.insert("params".into(), params.to_string().into());
            r.insert("block".into(), a.block.into());
            r.insert("max_abs_diff_x".into(), json!(xr.max_abs_diff(&x)?));
            r.insert("max_abs_diff_h".into(), json!(hr.max_abs_diff(&h)?));
        }
        Command::Demo(a) => {
            let params = a.params.resolve()?;
            let (ucfg, scfg) = a.toy.configs()?;
            let report = run_demo(&ucfg, &scfg, &params, &a.out, a.capture)?;
            r.insert("params".into(), report.params.to_string().into());
            r.insert("max_abs_diff".into(), json!(report.max_abs_diff));
            for b in &report.blocks {
                r.insert(format!("block{}_skip_hf_ratio", b.block), json!(b.skip_hf));
                r.insert(format!("block{}_skip_lf_ratio", b.block), json!(b.skip_lf));
                r.insert(
                    format!("block{}_backbone_hf_ratio", b.block),
                    json!(b.backbone_hf),
                );
                r.insert(
                    format!("block{}_backbone_lf_ratio", b.block),
                    json!(b.backbone_lf),
                );
            }
            r.insert("baseline_sha256".into(), report.baseline_sha256.into());
            r.insert("refined_sha256".into(), report.refined_sha256.into());
            r.insert("out".into(), a.out.display().to_string().into());
        }
        Command::Embed(a) => {
            let params = a.params.resolve()?;
            let embedder = a.toy.embedder()?;
            let hook = (!params.is_identity()).then_some(&params);
            let set = embedder.embed(hook)?;
            let v = set.vectors();
            let data: Vec<f32> = (0..set.n())
                .flat_map(|i| (0..set.d()).map(move |j| v[(i, j)] as f32))
                .collect();
            write_fmap(
                &a.out,
                &FeatureMap::new(Dims::new(1, 1, set.n(), set.d()), data)?,
            )?;
            r.insert("n".into(), set.n().into());
            r.insert("d".into(), set.d().into());
            r.insert("out".into(), a.out.display().to_string().into());
        }
        Command::Mel(a) => {
            let cfg = MelConfig {
                n_fft: a.nfft,
                hop: a.hop,
                n_mels: a.mels,
                ..MelConfig::with_sample_rate(a.sr)
            };
            let wave = read_wav(&a.wav)?;
            let mel = mel_spectrogram(&wave, &cfg)?;
            if let Some(p) = &a.out_fmap {
                write_fmap(p, &mel.to_feature_map()?)?;
            }
            if let Some(p) = &a.out_png {
                render_png(&mel, p)?;
            }
            r.insert("mels".into(), mel.rows.into());
            r.insert("frames".into(), mel.cols.into());
        }
        Command::Metrics(MetricsCommand::Fd { reference, gen }) => {
            let a = gaussian_stats(&EmbeddingSet::from_feature_map(&read_fmap(&reference)?)?);
            let b = gaussian_stats(&EmbeddingSet::from_feature_map(&read_fmap(&gen)?)?);
            r.insert("FD".into(), json!(frechet_distance(&a, &b)?));
        }
        Command::Metrics(MetricsCommand::Kl { pairs, eps }) => {
            let pairs = pairs_from_feature_map(&read_fmap(&pairs)?)?;
            r.insert("KL".into(), json!(mean_paired_kl(&pairs, eps)?));
            r.insert("pairs".into(), pairs.len().into());
        }
        Command::Metrics(MetricsCommand::Band { input }) => {
            let e = band_energy(&read_fmap(&input)?)?;
            r.insert("lf".into(), json!(e.lf));
            r.insert("hf".into(), json!(e.hf));
            r.insert("total".into(), json!(e.total()));
        }
        Command::Search(cmd) => search(cmd, &mut r)?,
    }
    Ok(r)
}

fn search(cmd: SearchCommand, r: &mut Report) -> Result<()> {
    match cmd {
        SearchCommand::CoarseM {
            objective,
            candidates,
            fine_step,
            anchor,
            out,
        } => {
            let obj = build_objective(&objective)?;
            let cands = parse_list(&candidates)?;
            let anchor = anchor.resolve()?;
            let coarse = coarse_sweep_m(obj.as_ref(), &cands, &anchor, objective.workers)?;
            let mut table = coarse.trials.clone();
            let (best_m, best_score) = match fine_step {
                Some(step) => {
                    let fine = fine_sweep_m(
                        obj.as_ref(),
                        &coarse,
                        &cands,
                        step,
                        &anchor,
                        objective.workers,
                    )?;
                    table.extend(fine.trials.iter().cloned());
                    (fine.best_m, fine.best_score)
                }
                None => (coarse.best_m, coarse.best_score),
            };
            write_table(out.as_deref(), &rank(&table))?;
            r.insert("objective".into(), obj.name().into());
            r.insert("best_m".into(), json!(best_m));
            r.insert("best_score".into(), json!(best_score));
            r.insert("trials".into(), table.len().into());
        }
        SearchCommand::Grid {
            objective,
            m,
            grid,
            out,
        } => {
            let obj = build_objective(&objective)?;
            let result = grid_search(obj.as_ref(), &grid.spec()?, m, objective.workers)?;
            write_table(out.as_deref(), &result.ranked)?;
            r.insert("objective".into(), obj.name().into());
            r.insert("best".into(), result.best.to_string().into());
            r.insert("best_params".into(), params_json(&result.best));
            r.insert("best_score".into(), json!(result.best_score));
            r.insert("trials".into(), result.ranked.len().into());
            r.insert(
                "failed".into(),
                result
                    .ranked
                    .iter()
                    .filter(|t| t.score().is_none())
                    .count()
                    .into(),
            );
        }
        SearchCommand::Full {
            objective,
            grid,
            out,
        } => {
            let obj = build_objective(&objective)?;
            let spec = grid.spec()?;
            let outcome = melrefine::search::full_search(
                obj.as_ref(),
                &spec,
                &RefineParams::identity(),
                objective.workers,
            )?;
            write_table(out.as_deref(), &outcome.grid.ranked)?;
            r.insert("objective".into(), obj.name().into());
            r.insert("coarse_m".into(), json!(outcome.coarse.best_m));
            r.insert("fine_m".into(), json!(outcome.fine.best_m));
            r.insert("best".into(), outcome.grid.best.to_string().into());
            r.insert("best_params".into(), params_json(&outcome.grid.best));
            r.insert("best_score".into(), json!(outcome.grid.best_score));
        }
    }
    Ok(())
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| e.downcast_ref::<melrefine::Error>())
        .map(melrefine::Error::kind)
        .unwrap_or("cli")
}

/// Context chain joined by `: `, skipping causes already spelled out by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !parts.last().is_some_and(|p| p.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn fail(kind: &str, msg: &str) -> ExitCode {
    eprintln!(
        "error kind={kind} msg={}",
        serde_json::to_string(&one_line(msg)).unwrap()
    );
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let body: Vec<&str> = msg
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .collect();
            return fail("usage", body.join(" ").trim_start_matches("error: "));
        }
    };
    let as_json = cli.json;
    match run(cli) {
        Ok(report) => {
            emit(&report, as_json);
            ExitCode::SUCCESS
        }
        Err(e) => fail(error_kind(&e), &describe(&e)),
    }
}
