use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use floodmap_core::classifier::decision_threshold_sweep;
use floodmap_core::metrics::{confusion, Scores};

use super::Ctx;

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Predicted binary mask
    #[arg(long)]
    pub pred: PathBuf,
    /// Binary truth mask
    #[arg(long)]
    pub truth: PathBuf,
    /// Binary mask of pixels to leave out
    #[arg(long)]
    pub ignore: Option<PathBuf>,
    /// Float32 probability raster for a threshold sweep
    #[arg(long, requires = "thresholds")]
    pub probability: Option<PathBuf>,
    /// Comma-separated decision thresholds
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Vec<f64>,
}

pub fn run(ctx: &mut Ctx, a: &MetricsArgs) -> Result<()> {
    let pred = ctx.read_raster(&a.pred)?;
    let truth = ctx.read_raster(&a.truth)?;
    let ignore = a.ignore.as_ref().map(|p| ctx.read_raster(p)).transpose()?;
    let c = confusion(&pred, &truth, ignore.as_ref())?;
    let s = Scores::from_counts(&c);
    ctx.write_with("metrics.csv", |mut w| {
        writeln!(w, "tp,fp,fn,tn,precision,recall,f1,iou")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            c.tp, c.fp, c.fn_, c.tn, s.precision, s.recall, s.f1, s.iou
        )?;
        w.flush()
    })?;
    if let Some(p) = &a.probability {
        let prob = ctx.read_raster(p)?;
        let rows =
            decision_threshold_sweep(&prob, &truth, &a.thresholds).context("threshold sweep")?;
        let list: Vec<String> = a.thresholds.iter().map(f64::to_string).collect();
        ctx.config.note("metrics.thresholds", list.join(","));
        ctx.write_with("sweep.csv", |mut w| {
            writeln!(w, "threshold,tp,fp,fn,tn,precision,recall,f1")?;
            for r in &rows {
                let c = r.counts;
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    r.threshold, c.tp, c.fp, c.fn_, c.tn, r.precision, r.recall, r.f1
                )?;
            }
            w.flush()
        })?;
    }
    Ok(())
}
