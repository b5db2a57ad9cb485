use anyhow::{bail, Result};
use clap::Args;
use floodmap_core::postproc::build_exclusion_mask;

use super::{AuxArgs, Ctx};

#[derive(Args, Debug)]
pub struct MaskArgs {
    /// Slope and land cover are required; other planes are ignored
    #[command(flatten)]
    pub aux: AuxArgs,
}

pub fn run(ctx: &mut Ctx, a: &MaskArgs) -> Result<()> {
    let filter = ctx.config.filter()?;
    let Some(aux) = a.aux.load(ctx)? else {
        bail!("mask needs --slope and --land-cover (or --aux-dir)");
    };
    let ex = build_exclusion_mask(&aux, &filter)?;
    ctx.write_raster("exclusion.flr", &ex.mask)?;
    ctx.write_raster("exclusion_reason.flr", &ex.reason)
}
