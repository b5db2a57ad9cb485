use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use floodmap_core::aggregate::{emit_records, write_detections};
use floodmap_core::classifier::{classify_rule, infer, load_weights, DEFAULT_DECISION_THRESHOLD};
use floodmap_core::features::{
    compute_features, read_scene_manifest, select_pairs, ManifestEntry, Scene, ScenePair,
};
use floodmap_core::postproc::{filter_false_positives, majority_smooth, AuxStack};
use floodmap_core::Raster;
use log::{info, warn};

use super::{AuxArgs, Ctx};

#[derive(Args, Debug)]
pub struct DetectArgs {
    /// Scene manifest CSV; raster paths are relative to its directory
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub aux: AuxArgs,
    /// Skip the false-positive filters
    #[arg(long)]
    pub no_filter: bool,
    /// Network spec for convolutional inference (used with --weights)
    #[arg(long, requires = "weights")]
    pub net: Option<PathBuf>,
    /// Raw little-endian float32 weights; switches from the rule classifier to the network
    #[arg(long, requires = "net")]
    pub weights: Option<PathBuf>,
    /// Decision threshold on the network probability
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Inference tile size in pixels
    #[arg(long)]
    pub tile_size: Option<usize>,
    /// Minimum backscatter drop in dB for the rule classifier
    #[arg(long)]
    pub min_delta_db: Option<f64>,
    /// Require both polarizations to vote for flood
    #[arg(long)]
    pub require_both_polarizations: bool,
    /// Majority-filter window applied to the candidates (0 or 1 disables)
    #[arg(long)]
    pub smooth: Option<usize>,
}

fn load_scene(ctx: &mut Ctx, base: &Path, e: &ManifestEntry) -> Result<Scene> {
    let vv = ctx.read_raster(&base.join(&e.vv_path))?;
    let vh = match &e.vh_path {
        None => None,
        Some(p) if !base.join(p).exists() => {
            warn!(
                "scene {}: VH raster {} missing, single-polarization mode",
                e.scene_id,
                base.join(p).display()
            );
            None
        }
        Some(p) => Some(ctx.read_raster(&base.join(p))?),
    };
    Ok(Scene::new(e.meta(), vv, vh)?)
}

pub fn run(ctx: &mut Ctx, a: &DetectArgs) -> Result<()> {
    let rule = ctx
        .config
        .rule(a.min_delta_db, a.require_both_polarizations)?;
    let filter = ctx.config.filter()?;
    let smooth = ctx.config.pick("smooth.window", a.smooth, 0usize)?;
    let net = match (&a.net, &a.weights) {
        (Some(spec), Some(weights)) => {
            ctx.run.input(spec);
            ctx.run.input(weights);
            let net = load_weights(spec, weights).context("loading network")?;
            let threshold =
                ctx.config
                    .pick("infer.threshold", a.threshold, DEFAULT_DECISION_THRESHOLD)?;
            let tile = ctx.config.pick("infer.tile_size", a.tile_size, 256usize)?;
            Some((net, threshold, tile))
        }
        _ => None,
    };
    ctx.config.note(
        "detect.classifier",
        if net.is_some() { "conv" } else { "rule" },
    );

    let entries = read_scene_manifest(ctx.open(&a.manifest)?)
        .with_context(|| format!("reading scene manifest {}", a.manifest.display()))?;
    let base = a.manifest.parent().unwrap_or(Path::new(".")).to_path_buf();
    let aux = a.aux.load(ctx)?;
    let apply_filters = !a.no_filter && aux.is_some();
    if aux.is_none() && !a.no_filter {
        warn!("no auxiliary rasters given; false-positive filters skipped");
    }
    ctx.config.note("detect.filters", apply_filters);

    let single = entries.iter().filter(|e| e.vh_path.is_none()).count();
    if single > 0 {
        warn!(
            "{single} of {} scenes have no VH raster; those pairs run in single-polarization mode",
            entries.len()
        );
    }
    let metas: Vec<_> = entries.iter().map(ManifestEntry::meta).collect();
    let pairs = select_pairs(&metas);
    if pairs.is_empty() {
        warn!("no admissible scene pairs in {}", a.manifest.display());
    }
    let empty_aux = AuxStack::default();
    let mut records = Vec::new();
    for (i, j) in pairs {
        let pair = ScenePair::new(
            load_scene(ctx, &base, &entries[i])?,
            load_scene(ctx, &base, &entries[j])?,
        )
        .with_context(|| format!("pairing {} -> {}", entries[i].scene_id, entries[j].scene_id))?;
        let features = compute_features(&pair)?;
        let mut cand = match &net {
            Some((net, threshold, tile)) => infer(net, &features, *threshold, *tile)?,
            None => classify_rule(&features, &rule)?,
        };
        if smooth > 1 {
            cand.mask = majority_smooth(&cand.mask, smooth)?;
        }
        let (kept, reason) = match (&aux, apply_filters) {
            (Some(aux), true) => filter_false_positives(&cand, aux, &filter)?,
            _ => {
                let m = &cand.mask;
                let zeros = Raster::from_u8(
                    m.width(),
                    m.height(),
                    *m.transform(),
                    None,
                    vec![0; m.len()],
                )?;
                (cand.clone(), zeros)
            }
        };
        let id = &pair.post.meta.scene_id;
        ctx.write_raster(&format!("candidates_{id}.flr"), &cand.mask)?;
        if let Some(p) = &cand.probability {
            ctx.write_raster(&format!("probability_{id}.flr"), p)?;
        }
        ctx.write_raster(&format!("mask_{id}.flr"), &kept.mask)?;
        ctx.write_raster(&format!("reason_{id}.flr"), &reason)?;
        let recs = emit_records(
            &kept,
            &reason,
            &features,
            aux.as_ref().unwrap_or(&empty_aux),
            &pair.post.meta,
        )?;
        info!(
            "{} -> {}: {} candidates, {} kept",
            pair.pre.meta.scene_id,
            id,
            cand.positives(),
            kept.positives()
        );
        records.extend(recs);
    }
    ctx.write_with("detections.csv", |w| write_detections(w, &records))
}
