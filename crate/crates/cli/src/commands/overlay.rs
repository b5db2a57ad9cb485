use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use floodmap_core::aggregate::{overlay_impact, write_impact, Zone};
use floodmap_core::geo::Polygon;
use floodmap_core::kv::KvDoc;
use floodmap_core::postproc::land_cover;

use super::Ctx;

#[derive(Args, Debug)]
pub struct OverlayArgs {
    /// Binary flood extent
    #[arg(long)]
    pub extent: PathBuf,
    /// Byte land-cover raster on the same grid
    #[arg(long)]
    pub land_cover: PathBuf,
    /// Land-cover class code (default: cropland)
    #[arg(long, default_value_t = land_cover::CROPLAND)]
    pub class: u8,
    /// Zone as `ID=lon lat; lon lat; ...` (repeatable; default: whole grid)
    #[arg(long = "zone")]
    pub zones: Vec<String>,
    /// Buffer radius the extent was built with, in pixels (default: taken
    /// from the aggregate manifest beside the extent)
    #[arg(long)]
    pub buffer_px: Option<usize>,
}

/// Looks up the buffer radius recorded for `extent` by the `aggregate` run
/// that wrote it.
fn recorded_buffer(extent: &Path) -> Option<String> {
    let dir = extent.parent().unwrap_or(Path::new("."));
    let name = extent.file_name()?.to_str()?;
    let doc = KvDoc::parse(&fs::read_to_string(dir.join("aggregate.manifest.txt")).ok()?).ok()?;
    let mut paths = (0..).map_while(|i| doc.get(&format!("output.{i}.path")));
    paths
        .any(|p| p == name)
        .then(|| doc.get("config.buffer.radius_px").map(str::to_string))?
}

fn parse_zone(s: &str) -> Result<Zone> {
    let (id, ring) = s
        .split_once('=')
        .with_context(|| format!("zone {s:?} must look like ID=lon lat; lon lat; ..."))?;
    Ok(Zone {
        id: id.trim().to_string(),
        polygon: Polygon::parse_ring(ring)?,
    })
}

pub fn run(ctx: &mut Ctx, a: &OverlayArgs) -> Result<()> {
    ctx.config.note("overlay.class", a.class);
    match a
        .buffer_px
        .map(|r| r.to_string())
        .or_else(|| recorded_buffer(&a.extent))
    {
        Some(r) => ctx.config.note("overlay.buffer_radius_px", r),
        None => {
            log::warn!(
                "buffer radius of {} is unknown; pass --buffer-px to record it",
                a.extent.display()
            );
            ctx.config.note("overlay.buffer_radius_px", "unknown");
        }
    }
    let zones = a
        .zones
        .iter()
        .map(|z| parse_zone(z))
        .collect::<Result<Vec<_>>>()?;
    for z in &zones {
        ctx.config.note(
            "overlay.zone",
            format!("{}={}", z.id, z.polygon.format_ring()),
        );
    }
    let extent = ctx.read_raster(&a.extent)?;
    let lc = ctx.read_raster(&a.land_cover)?;
    let rows = overlay_impact(
        &extent,
        &lc,
        a.class,
        (!zones.is_empty()).then_some(zones.as_slice()),
    )?;
    ctx.write_with("impact.csv", |w| write_impact(w, &rows))
}
