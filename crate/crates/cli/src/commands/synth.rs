use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use floodmap_core::kv::KvDoc;
use floodmap_core::synth::{generate_decade, generate_pair, DecadeModel, SynthScenario};
use log::info;

use super::Ctx;

/// A flooded block crossing steep ground and a bare-ground patch, so that
/// every filter has something to remove.
const DEMO_SCENARIO: &str = "\
speckle_sigma = 1.0
flood.pixel_rect = 40 60 220 180
aux.slope = ramp:0:14
aux.soil_moisture = const:0.3
aux.temperature = const:290
aux.elevation = const:120
aux.land_cover = const:40
aux.land_cover_patch = 60: 40 40 80 100
";

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// key=value scenario file (default: a built-in demo scene for pairs,
    /// the plain default grid for decades)
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Generate a monthly decade archive instead of a single pair
    #[arg(long)]
    pub decade: bool,
}

pub fn run(ctx: &mut Ctx, a: &SynthArgs) -> Result<()> {
    let doc = match &a.scenario {
        Some(p) => {
            ctx.run.input(p);
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading scenario {}", p.display()))?;
            KvDoc::parse(&text).with_context(|| format!("parsing scenario {}", p.display()))?
        }
        None if a.decade => KvDoc::new(),
        None => KvDoc::parse(DEMO_SCENARIO)?,
    };
    let mut sc = SynthScenario::from_kv(&doc)?;
    if let Some(seed) = ctx.seed {
        sc.seed = seed;
    }
    let mut resolved = KvDoc::new();
    sc.write_kv(&mut resolved);
    let written = if a.decade {
        let model = DecadeModel::from_kv(&doc)?;
        model.write_kv(&mut resolved);
        let decade = generate_decade(&sc, &model)?;
        info!("decade of {} months, seed {}", decade.months.len(), sc.seed);
        decade.write(ctx.run.out_dir())?
    } else {
        let pair = generate_pair(&sc)?;
        pair.write(ctx.run.out_dir())?
    };
    ctx.run.outputs_written(&written);
    for (k, v) in resolved.iter() {
        ctx.config.note(&format!("synth.{k}"), v);
    }
    let p = ctx.run.output("scenario.txt");
    std::fs::write(&p, resolved.to_text()).with_context(|| format!("writing {}", p.display()))?;
    Ok(())
}
