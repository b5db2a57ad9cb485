use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use floodmap_core::postproc::buffer_mask;

use super::Ctx;

#[derive(Args, Debug)]
pub struct BufferArgs {
    /// Binary byte raster
    #[arg(long)]
    pub input: PathBuf,
    /// Radius in pixels; 12 px is 240 m at 20 m resolution
    #[arg(long)]
    pub radius_px: Option<usize>,
    /// Output file name inside --out (default: <input stem>_buffered.flr)
    #[arg(long)]
    pub output: Option<String>,
}

pub fn run(ctx: &mut Ctx, a: &BufferArgs) -> Result<()> {
    let radius = ctx.config.pick("buffer.radius_px", a.radius_px, 12usize)?;
    let input = ctx.read_raster(&a.input)?;
    let out = buffer_mask(&input, radius)?;
    let name = a.output.clone().unwrap_or_else(|| {
        let stem = a
            .input
            .file_stem()
            .map_or("mask".into(), |s| s.to_string_lossy());
        format!("{stem}_buffered.flr")
    });
    log::info!(
        "{} -> {} positives",
        input.count_value(1.0),
        out.count_value(1.0)
    );
    ctx.write_raster(&name, &out)
}
