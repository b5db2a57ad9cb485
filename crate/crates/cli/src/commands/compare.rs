use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use floodmap_core::metrics::{
    gsw_flood_prone, new_area_pct, overlap_stats, write_comparison_report, ComparisonRow,
    GswOptions,
};
use floodmap_core::{Error as CoreError, Raster};
use log::warn;

use super::Ctx;

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Our binary flood extent
    #[arg(long)]
    pub ours: PathBuf,
    /// Binary reference extents used for the new-area statistic
    #[arg(long, num_args = 1..)]
    pub refs: Vec<PathBuf>,
    /// Water-occurrence percentage layer (0..100)
    #[arg(long)]
    pub gsw: Option<PathBuf>,
    /// Binary MODIS-style flood layer
    #[arg(long)]
    pub modis: Option<PathBuf>,
    /// Binary exclusion mask from `mask`
    #[arg(long)]
    pub exclusion: Option<PathBuf>,
    #[arg(long, default_value = "all")]
    pub region: String,
    /// Occurrence percentage below which a GSW pixel counts as flood-prone
    #[arg(long)]
    pub gsw_threshold: Option<f64>,
    /// Count never-observed-as-water GSW pixels as flood-prone
    #[arg(long)]
    pub gsw_include_zero: Option<bool>,
}

/// Overlap rates, or `None` with a warning when the reference has no positives.
fn rates(
    ours: &Raster,
    reference: &Raster,
    exclusion: Option<&Raster>,
    what: &str,
) -> Result<(Option<f64>, Option<f64>)> {
    match overlap_stats(ours, reference, exclusion) {
        Ok(s) => Ok((Some(s.detection_rate), s.detection_rate_outside_mask)),
        Err(CoreError::UndefinedRate(why)) => {
            warn!("{what}: {why}");
            Ok((None, None))
        }
        Err(e) => Err(e).with_context(|| format!("{what} overlap")),
    }
}

pub fn run(ctx: &mut Ctx, a: &CompareArgs) -> Result<()> {
    let defaults = GswOptions::default();
    let gsw_opts = GswOptions {
        threshold_pct: ctx.config.pick(
            "gsw.threshold_pct",
            a.gsw_threshold,
            defaults.threshold_pct,
        )?,
        include_zero: ctx.config.pick(
            "gsw.include_zero",
            a.gsw_include_zero,
            defaults.include_zero,
        )?,
    };
    ctx.config.note("compare.region", &a.region);
    let ours = ctx.read_raster(&a.ours)?;
    let exclusion = a
        .exclusion
        .as_ref()
        .map(|p| ctx.read_raster(p))
        .transpose()?;
    let mut refs = a
        .refs
        .iter()
        .map(|p| ctx.read_raster(p))
        .collect::<Result<Vec<_>>>()?;

    let mut row = ComparisonRow {
        region_id: a.region.clone(),
        new_area_pct: 0.0,
        rate_gsw: None,
        rate_gsw_unmasked: None,
        rate_modis: None,
        rate_modis_unmasked: None,
    };
    if let Some(p) = &a.gsw {
        let prone = gsw_flood_prone(&ctx.read_raster(p)?, gsw_opts)?;
        (row.rate_gsw, row.rate_gsw_unmasked) = rates(&ours, &prone, exclusion.as_ref(), "gsw")?;
        refs.push(prone);
    }
    if let Some(p) = &a.modis {
        let modis = ctx.read_raster(p)?;
        (row.rate_modis, row.rate_modis_unmasked) =
            rates(&ours, &modis, exclusion.as_ref(), "modis")?;
        refs.push(modis);
    }
    let ref_views: Vec<&Raster> = refs.iter().collect();
    row.new_area_pct = new_area_pct(&ours, &ref_views).context("new-area statistic")?;
    ctx.write_with("comparison.csv", |w| write_comparison_report(w, &[row]))
}
