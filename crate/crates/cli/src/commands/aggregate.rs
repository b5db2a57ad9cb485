use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::Args;
use floodmap_core::aggregate::{
    coarsen, compose_records, read_detections, CoarsenRule, CompositeMap, GridSpec, Period,
};

use super::Ctx;

#[derive(Args, Debug)]
pub struct AggregateArgs {
    /// detections.csv from `detect`
    #[arg(long)]
    pub detections: PathBuf,
    /// Any raster on the target grid
    #[arg(long)]
    pub grid: PathBuf,
    /// First day of the period (default: earliest detection)
    #[arg(long)]
    pub start: Option<NaiveDate>,
    /// Last day of the period, inclusive (default: latest detection)
    #[arg(long)]
    pub end: Option<NaiveDate>,
    /// Buffer radius in pixels
    #[arg(long)]
    pub radius_px: Option<usize>,
    /// Coarse pixel size in metres (0 disables coarsening)
    #[arg(long)]
    pub coarse_m: Option<f64>,
    /// `any` or `fraction:F`
    #[arg(long)]
    pub coarsen_rule: Option<String>,
}

pub fn parse_coarsen_rule(s: &str) -> Result<CoarsenRule> {
    match s.split_once(':') {
        None if s == "any" => Ok(CoarsenRule::AnyTouch),
        Some(("fraction", f)) => Ok(CoarsenRule::Fraction(
            f.parse().with_context(|| format!("coarsen rule {s:?}"))?,
        )),
        _ => bail!("unknown coarsen rule {s:?}, expected `any` or `fraction:F`"),
    }
}

fn summary_row(w: &mut impl Write, level: &str, c: &CompositeMap) -> Result<()> {
    let t = c.extent.transform();
    writeln!(
        w,
        "{level},{},{},{}",
        t.pixel_width,
        c.positives(),
        c.hectares()?
    )?;
    Ok(())
}

pub fn run(ctx: &mut Ctx, a: &AggregateArgs) -> Result<()> {
    let radius = ctx.config.pick("buffer.radius_px", a.radius_px, 12usize)?;
    let coarse_m = ctx
        .config
        .pick("aggregate.coarse_pixel_m", a.coarse_m, 0.0f64)?;
    let rule_text = ctx.config.pick(
        "aggregate.coarsen_rule",
        a.coarsen_rule.clone(),
        "any".to_string(),
    )?;
    let rule = parse_coarsen_rule(&rule_text)?;

    let records = read_detections(ctx.open(&a.detections)?)
        .with_context(|| format!("reading detections {}", a.detections.display()))?;
    let grid = GridSpec::of(&ctx.read_raster(&a.grid)?);
    let dates = records.iter().filter(|r| !r.filtered).map(|r| r.date);
    let period = Period {
        start: a
            .start
            .or_else(|| dates.clone().min())
            .unwrap_or(NaiveDate::MIN),
        end: a.end.or_else(|| dates.max()).unwrap_or(NaiveDate::MAX),
    };
    if period.end < period.start {
        bail!("period end {} precedes start {}", period.end, period.start);
    }
    ctx.config.note(
        "aggregate.period",
        format!("{}..{}", period.start, period.end),
    );

    let fine = compose_records(&records, grid, period, radius)?;
    ctx.write_raster("extent.flr", &fine.extent)?;
    let coarse = if coarse_m > 0.0 {
        let c = coarsen(&fine, coarse_m, rule)?;
        ctx.write_raster("extent_coarse.flr", &c.extent)?;
        Some(c)
    } else {
        None
    };
    ctx.write_with("aggregate_summary.csv", |mut w| {
        writeln!(w, "level,pixel_m,positives,hectares")?;
        summary_row(&mut w, "fine", &fine)?;
        if let Some(c) = &coarse {
            summary_row(&mut w, "coarse", c)?;
        }
        w.flush()?;
        Ok::<_, anyhow::Error>(())
    })
}
