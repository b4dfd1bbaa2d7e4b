use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mel::{render_png, Map2d};
use crate::metrics::band_energy;
use crate::refine::RefineParams;
use crate::tensor::{write_fmap, FeatureMap};
use crate::unet::{
    build_unet, ddim_sample, ddim_sample_traced, fmap_checksum, SamplerConfig, UNetConfig,
};

/// Band-energy ratios (after / before the hook) at one decoder block,
/// measured during the first denoising step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockRatios {
    pub block: usize,
    pub skip_hf: f64,
    pub skip_lf: f64,
    pub backbone_hf: f64,
    pub backbone_lf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoReport {
    pub params: RefineParams,
    pub max_abs_diff: f32,
    pub blocks: Vec<BlockRatios>,
    pub baseline_sha256: String,
    pub refined_sha256: String,
    pub files: Vec<PathBuf>,
}

impl DemoReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "params {}", self.params).unwrap();
        writeln!(s, "max_abs_diff={}", self.max_abs_diff).unwrap();
        for b in &self.blocks {
            writeln!(
                s,
                "block={} skip_hf_ratio={} skip_lf_ratio={} backbone_hf_ratio={} backbone_lf_ratio={}",
                b.block, b.skip_hf, b.skip_lf, b.backbone_hf, b.backbone_lf
            )
            .unwrap();
        }
        writeln!(s, "baseline_sha256={}", self.baseline_sha256).unwrap();
        writeln!(s, "refined_sha256={}", self.refined_sha256).unwrap();
        s
    }
}

fn ratio(after: f64, before: f64) -> f64 {
    if before == 0.0 {
        if after == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        after / before
    }
}

fn save(dir: &Path, name: &str, x: &FeatureMap, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    write_fmap(&path, x)?;
    files.push(path);
    Ok(())
}

/// Samples the toy U-Net with and without the hook and writes a comparison bundle
/// into `out_dir`: `baseline.{fmap,png}`, `refined.{fmap,png}` and `report.txt`.
///
/// With `capture`, the first denoising step's hook inputs and outputs are also
/// written as `refined.blkK.{x,h,xr,hr}.fmap`.
pub fn run_demo(
    ucfg: &UNetConfig,
    scfg: &SamplerConfig,
    params: &RefineParams,
    out_dir: impl AsRef<Path>,
    capture: bool,
) -> Result<DemoReport> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let net = build_unet(ucfg)?;
    let baseline = ddim_sample(&net, scfg, None)?;
    let trace = ddim_sample_traced(&net, scfg, Some(params))?;
    let refined = &trace.sample;

    let mut blocks = Vec::with_capacity(trace.first_step.len());
    for cap in &trace.first_step {
        let (h0, h1) = (band_energy(&cap.h)?, band_energy(&cap.h_refined)?);
        let (x0, x1) = (band_energy(&cap.x)?, band_energy(&cap.x_refined)?);
        blocks.push(BlockRatios {
            block: cap.block,
            skip_hf: ratio(h1.hf, h0.hf),
            skip_lf: ratio(h1.lf, h0.lf),
            backbone_hf: ratio(x1.hf, x0.hf),
            backbone_lf: ratio(x1.lf, x0.lf),
        });
    }

    let mut files = Vec::new();
    save(dir, "baseline.fmap", &baseline, &mut files)?;
    save(dir, "refined.fmap", refined, &mut files)?;
    for (name, x) in [("baseline.png", &baseline), ("refined.png", refined)] {
        let path = dir.join(name);
        render_png(&Map2d::from_plane(x, 0, 0)?, &path)?;
        files.push(path);
    }
    if capture {
        for cap in &trace.first_step {
            let k = cap.block;
            save(dir, &format!("refined.blk{k}.x.fmap"), &cap.x, &mut files)?;
            save(dir, &format!("refined.blk{k}.h.fmap"), &cap.h, &mut files)?;
            save(
                dir,
                &format!("refined.blk{k}.xr.fmap"),
                &cap.x_refined,
                &mut files,
            )?;
            save(
                dir,
                &format!("refined.blk{k}.hr.fmap"),
                &cap.h_refined,
                &mut files,
            )?;
        }
    }

    let mut report = DemoReport {
        params: *params,
        max_abs_diff: baseline.max_abs_diff(refined)?,
        blocks,
        baseline_sha256: fmap_checksum(&baseline),
        refined_sha256: fmap_checksum(refined),
        files: Vec::new(),
    };
    let report_path = dir.join("report.txt");
    std::fs::write(&report_path, report.to_text()).map_err(|e| Error::io(&report_path, e))?;
    files.push(report_path);
    report.files = files;
    Ok(report)
}
