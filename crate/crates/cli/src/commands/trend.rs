use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use floodmap_core::aggregate::read_detections;
use floodmap_core::features::{read_scene_manifest, ManifestEntry};
use floodmap_core::geo;
use floodmap_core::raster::pixel_area_hectares;
use floodmap_core::trend::{
    build_series, fit_trend, land_area_from_cover, observation_range, observations_from_manifest,
    polarization_correction, seasonal_decompose, tile_trends, write_decomposition,
    write_tile_trends, write_trend_report, BandMode, MonthRange, MonthlySeries, Scenario, TileArea,
    TileTrendOptions, YearMonth,
};
use floodmap_core::{Error as CoreError, Raster};
use log::warn;

use super::Ctx;

#[derive(Args, Debug)]
pub struct TrendArgs {
    /// detections.csv from `detect`
    #[arg(long)]
    pub detections: PathBuf,
    /// Scene manifest used for observation counts
    #[arg(long)]
    pub manifest: PathBuf,
    /// Exclusion scenario (repeatable; default: all three)
    #[arg(long = "scenario")]
    pub scenarios: Vec<Scenario>,
    /// First month of the series, YYYY-MM (default: first observation)
    #[arg(long)]
    pub start: Option<YearMonth>,
    /// Last month of the series, YYYY-MM (default: last observation)
    #[arg(long)]
    pub end: Option<YearMonth>,
    /// Start of the polarization-correction window, YYYY-MM
    #[arg(long, requires = "correct_to")]
    pub correct_from: Option<YearMonth>,
    /// End of the polarization-correction window, YYYY-MM
    #[arg(long, requires = "correct_from")]
    pub correct_to: Option<YearMonth>,
    /// Hectares per detection (default: pixel area of the first VV raster)
    #[arg(long)]
    pub pixel_area_ha: Option<f64>,
    /// Skip the seasonal decomposition
    #[arg(long)]
    pub no_decompose: bool,
    /// Also compute per-tile trends
    #[arg(long)]
    pub tiles: bool,
    /// Land-cover raster for tile land areas
    #[arg(long, requires = "tiles")]
    pub land_cover: Option<PathBuf>,
    /// Tile edge length in degrees
    #[arg(long)]
    pub tile_deg: Option<f64>,
    /// Largest p-value counted as a significant tile trend
    #[arg(long)]
    pub p_cutoff: Option<f64>,
    /// `over_period` or `per_month`
    #[arg(long)]
    pub band_mode: Option<BandMode>,
}

fn write_series(mut w: impl Write, s: &MonthlySeries) -> Result<()> {
    writeln!(
        w,
        "year,month,flooded_area_ha,observation_count,normalized,single_pol_fraction"
    )?;
    for i in 0..s.len() {
        let m = s.months[i];
        let norm = s.normalized[i].map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            m.year,
            m.month,
            s.flooded_area[i],
            s.observation_count[i],
            norm,
            s.single_pol_fraction[i]
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Lon/lat bounding box of a raster.
fn footprint(r: &Raster) -> Result<(f64, f64, f64, f64)> {
    let t = r.transform();
    let (x0, y0) = t.pixel_to_world(0.0, 0.0);
    let (x1, y1) = t.pixel_to_world(r.width() as f64, r.height() as f64);
    let (lon0, lat0) = geo::to_lon_lat(t.crs_code, x0, y0)?;
    let (lon1, lat1) = geo::to_lon_lat(t.crs_code, x1, y1)?;
    Ok((
        lon0.min(lon1),
        lat0.min(lat1),
        lon0.max(lon1),
        lat0.max(lat1),
    ))
}

fn vv_raster(
    ctx: &mut Ctx,
    base: &Path,
    entries: &[ManifestEntry],
    scene_id: &str,
) -> Result<Raster> {
    let e = entries
        .iter()
        .find(|e| e.scene_id == scene_id)
        .with_context(|| format!("scene {scene_id} not in manifest"))?;
    ctx.read_raster(&base.join(&e.vv_path))
}

pub fn run(ctx: &mut Ctx, a: &TrendArgs) -> Result<()> {
    let entries = read_scene_manifest(ctx.open(&a.manifest)?)
        .with_context(|| format!("reading scene manifest {}", a.manifest.display()))?;
    let base = a.manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let records = read_detections(ctx.open(&a.detections)?)
        .with_context(|| format!("reading detections {}", a.detections.display()))?;
    let mut observations = observations_from_manifest(&entries);
    if observations.is_empty() {
        return Err(CoreError::InsufficientData(
            "no admissible scene pairs in the manifest".into(),
        )
        .into());
    }
    let pixel_area_ha = match a.pixel_area_ha {
        Some(v) => v,
        None => pixel_area_hectares(
            vv_raster(ctx, &base, &entries, &observations[0].scene_id)?.transform(),
        )?,
    };
    ctx.config.note("trend.pixel_area_ha", pixel_area_ha);

    let span = observation_range(&observations)?;
    let range = MonthRange::new(a.start.unwrap_or(span.start), a.end.unwrap_or(span.end))?;
    ctx.config
        .note("trend.range", format!("{}..{}", range.start, range.end));
    let mut series = build_series(&records, &observations, pixel_area_ha, Some(range))?;
    if let (Some(from), Some(to)) = (a.correct_from, a.correct_to) {
        series = polarization_correction(&series, MonthRange::new(from, to)?)
            .context("polarization correction")?;
        ctx.config
            .note("trend.correction_window", format!("{from}..{to}"));
        ctx.config.note(
            "trend.correction_factor",
            series.correction_factor.unwrap_or(1.0),
        );
    }
    ctx.write_with("series.csv", |w| write_series(w, &series))?;

    let scenarios = if a.scenarios.is_empty() {
        Scenario::ALL.to_vec()
    } else {
        a.scenarios.clone()
    };
    let labels: Vec<&str> = scenarios.iter().map(|s| s.label()).collect();
    ctx.config.note("trend.scenarios", labels.join(","));
    let results = scenarios
        .iter()
        .map(|&sc| fit_trend(&series, sc).with_context(|| format!("scenario {sc}")))
        .collect::<Result<Vec<_>>>()?;
    ctx.write_with("trend_report.csv", |w| write_trend_report(w, &results))?;

    if !a.no_decompose {
        match seasonal_decompose(&series, 12) {
            Ok(d) => ctx.write_with("decomposition.csv", |w| write_decomposition(w, &d))?,
            Err(CoreError::InsufficientData(why)) => warn!("decomposition skipped: {why}"),
            Err(e) => return Err(e.into()),
        }
    }

    if a.tiles {
        let defaults = TileTrendOptions::default();
        let opts = TileTrendOptions {
            tile_deg: ctx
                .config
                .pick("trend.tile_deg", a.tile_deg, defaults.tile_deg)?,
            p_cutoff: ctx
                .config
                .pick("trend.p_cutoff", a.p_cutoff, defaults.p_cutoff)?,
            moderate_band: ctx
                .config
                .pick("trend.moderate_band", None, defaults.moderate_band)?,
            large_band: ctx
                .config
                .pick("trend.large_band", None, defaults.large_band)?,
            band_mode: ctx
                .config
                .pick("trend.band_mode", a.band_mode, defaults.band_mode)?,
            scenario: scenarios[0],
            range: Some(range),
            pixel_area_ha,
        };
        let mut footprints = HashMap::new();
        for o in &mut observations {
            if !footprints.contains_key(&o.scene_id) {
                let r = vv_raster(ctx, &base, &entries, &o.scene_id)?;
                footprints.insert(o.scene_id.clone(), footprint(&r)?);
            }
            o.footprint = footprints.get(&o.scene_id).copied();
        }
        let area = match &a.land_cover {
            Some(p) => TileArea::Land(land_area_from_cover(&ctx.read_raster(p)?, opts.tile_deg)?),
            None => TileArea::Full,
        };
        let tiles = tile_trends(&records, &observations, &opts, &area)?;
        ctx.write_with("tile_trends.csv", |w| write_tile_trends(w, &tiles))?;
    }
    Ok(())
}
