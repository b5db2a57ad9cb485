//! Scene pairing rules and change-detection feature extraction.
//!
//! The classifier consumes four planes per pair: a binary "changed into the
//! water backscatter range" indicator for VV and for VH, and the post-minus-pre
//! backscatter delta for each polarization.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::{DateTime, Duration, SecondsFormat, Utc};

use crate::raster::{PixelData, Raster, BINARY_NODATA};
use crate::{Error, Result};

/// Water range upper bound for VV, dB (exclusive).
pub const WATER_VV_DB: f64 = -17.5;
/// Water range upper bound for VH, dB (exclusive).
pub const WATER_VH_DB: f64 = -22.5;
pub const MAX_PAIR_GAP_DAYS: i64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarization {
    VV,
    VH,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PassDirection {
    Ascending,
    Descending,
}

impl fmt::Display for PassDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PassDirection::Ascending => "ascending",
            PassDirection::Descending => "descending",
        })
    }
}

impl FromStr for PassDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ascending" | "asc" => Ok(PassDirection::Ascending),
            "descending" | "desc" => Ok(PassDirection::Descending),
            _ => Err(Error::InvalidArgument(format!(
                "unknown pass direction {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneMeta {
    pub scene_id: String,
    pub acquisition_time: DateTime<Utc>,
    pub pass_direction: PassDirection,
    pub relative_orbit: u32,
    pub polarizations: Vec<Polarization>,
}

impl SceneMeta {
    pub fn is_dual_pol(&self) -> bool {
        self.polarizations.contains(&Polarization::VV)
            && self.polarizations.contains(&Polarization::VH)
    }
}

/// A scene's metadata together with its dB rasters.
#[derive(Debug, Clone)]
pub struct Scene {
    pub meta: SceneMeta,
    pub vv: Raster,
    pub vh: Option<Raster>,
}

impl Scene {
    /// Builds a scene, deriving `meta.polarizations` from the rasters supplied.
    pub fn new(mut meta: SceneMeta, vv: Raster, vh: Option<Raster>) -> Result<Self> {
        vv.expect_f32("VV backscatter")?;
        if let Some(vh) = &vh {
            vh.expect_f32("VH backscatter")?;
            vv.check_congruent(vh, "VV vs VH")?;
        }
        meta.polarizations = if vh.is_some() {
            vec![Polarization::VV, Polarization::VH]
        } else {
            vec![Polarization::VV]
        };
        Ok(Self { meta, vv, vh })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairRule {
    /// Pass direction or relative orbit differ.
    Geometry,
    /// Post is not strictly after pre.
    Order,
    /// More than the allowed number of days between acquisitions.
    Gap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairVerdict {
    Accept,
    Reject(PairRule),
}

impl PairVerdict {
    pub fn is_accept(self) -> bool {
        self == PairVerdict::Accept
    }
}

pub fn validate_pair(pre: &SceneMeta, post: &SceneMeta) -> PairVerdict {
    if pre.pass_direction != post.pass_direction || pre.relative_orbit != post.relative_orbit {
        return PairVerdict::Reject(PairRule::Geometry);
    }
    let dt = post.acquisition_time - pre.acquisition_time;
    if dt <= Duration::zero() {
        PairVerdict::Reject(PairRule::Order)
    } else if dt > Duration::days(MAX_PAIR_GAP_DAYS) {
        PairVerdict::Reject(PairRule::Gap)
    } else {
        PairVerdict::Accept
    }
}

/// For every scene, the nearest admissible predecessor. Returns `(pre, post)`
/// index pairs ordered by post acquisition time.
pub fn select_pairs(scenes: &[SceneMeta]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    order.sort_by(|&a, &b| {
        scenes[a]
            .acquisition_time
            .cmp(&scenes[b].acquisition_time)
            .then(a.cmp(&b))
    });
    let mut pairs = Vec::new();
    for (k, &post) in order.iter().enumerate() {
        let pre = order[..k]
            .iter()
            .rev()
            .copied()
            .find(|&pre| validate_pair(&scenes[pre], &scenes[post]).is_accept());
        if let Some(pre) = pre {
            pairs.push((pre, post));
        }
    }
    pairs
}

#[derive(Debug, Clone)]
pub struct ScenePair {
    pub pre: Scene,
    pub post: Scene,
}

impl ScenePair {
    pub fn new(pre: Scene, post: Scene) -> Result<Self> {
        if let PairVerdict::Reject(rule) = validate_pair(&pre.meta, &post.meta) {
            return Err(Error::InvalidArgument(format!(
                "scenes {} -> {} violate the {rule:?} pairing rule",
                pre.meta.scene_id, post.meta.scene_id
            )));
        }
        pre.vv.check_congruent(&post.vv, "pre vs post VV")?;
        Ok(Self { pre, post })
    }

    pub fn is_dual_pol(&self) -> bool {
        self.pre.vh.is_some() && self.post.vh.is_some()
    }
}

/// `amplitude` strictly below the polarization's water threshold.
pub fn is_water_db(amplitude: f64, pol: Polarization) -> bool {
    match pol {
        Polarization::VV => amplitude < WATER_VV_DB,
        Polarization::VH => amplitude < WATER_VH_DB,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    /// Binary byte raster, nodata 255.
    pub change_to_water_vv: Raster,
    /// Binary byte raster; all nodata for single-polarization pairs.
    pub change_to_water_vh: Raster,
    /// Float32 dB raster, NaN nodata.
    pub delta_vv: Raster,
    pub delta_vh: Raster,
}

impl FeatureStack {
    pub fn width(&self) -> usize {
        self.delta_vv.width()
    }

    pub fn height(&self) -> usize {
        self.delta_vv.height()
    }

    pub fn has_vh(&self) -> bool {
        (0..self.change_to_water_vh.len()).any(|i| !self.change_to_water_vh.is_nodata(i))
    }

    pub fn check_consistent(&self) -> Result<()> {
        let g = &self.delta_vv;
        g.check_congruent(&self.change_to_water_vv, "change_to_water_vv")?;
        g.check_congruent(&self.change_to_water_vh, "change_to_water_vh")?;
        g.check_congruent(&self.delta_vh, "delta_vh")?;
        self.change_to_water_vv.expect_u8("change_to_water_vv")?;
        self.change_to_water_vh.expect_u8("change_to_water_vh")?;
        self.delta_vv.expect_f32("delta_vv")?;
        self.delta_vh.expect_f32("delta_vh")?;
        Ok(())
    }
}

fn change_planes(pre: &Raster, post: &Raster, pol: Polarization) -> Result<(Raster, Raster)> {
    pre.check_congruent(post, "pre vs post")?;
    let n = pre.len();
    let pre_v = pre.expect_f32("pre backscatter")?;
    let post_v = post.expect_f32("post backscatter")?;
    let mut change = vec![BINARY_NODATA; n];
    let mut delta = vec![f32::NAN; n];
    for i in 0..n {
        if pre.is_nodata(i) || post.is_nodata(i) {
            continue;
        }
        let (a, b) = (pre_v[i], post_v[i]);
        change[i] = (!is_water_db(a as f64, pol) && is_water_db(b as f64, pol)) as u8;
        delta[i] = b - a;
    }
    let t = *pre.transform();
    Ok((
        Raster::binary(pre.width(), pre.height(), t, change)?,
        Raster::from_f32(pre.width(), pre.height(), t, Some(f32::NAN), delta)?,
    ))
}

fn empty_planes(like: &Raster) -> (Raster, Raster) {
    let (w, h, t) = (like.width(), like.height(), *like.transform());
    (
        Raster::filled_u8(w, h, t, Some(BINARY_NODATA), BINARY_NODATA),
        Raster::filled_f32(w, h, t, Some(f32::NAN), f32::NAN),
    )
}

pub fn compute_features(p: &ScenePair) -> Result<FeatureStack> {
    let (change_to_water_vv, delta_vv) = change_planes(&p.pre.vv, &p.post.vv, Polarization::VV)?;
    let (change_to_water_vh, delta_vh) = match (&p.pre.vh, &p.post.vh) {
        (Some(a), Some(b)) => {
            p.pre.vv.check_congruent(a, "VH grid")?;
            change_planes(a, b, Polarization::VH)?
        }
        _ => empty_planes(&p.pre.vv),
    };
    Ok(FeatureStack {
        change_to_water_vv,
        change_to_water_vh,
        delta_vv,
        delta_vh,
    })
}

/// Pixel `i` of a delta plane, `None` for nodata.
pub(crate) fn delta_at(r: &Raster, i: usize) -> Option<f32> {
    match r.data() {
        PixelData::Float32(v) if !r.is_nodata(i) => Some(v[i]),
        _ => None,
    }
}

pub const SCENE_MANIFEST_HEADER: [&str; 6] = [
    "scene_id",
    "acquisition_time",
    "pass_direction",
    "relative_orbit",
    "vv_path",
    "vh_path",
];

/// One row of a scene manifest CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub scene_id: String,
    pub acquisition_time: DateTime<Utc>,
    pub pass_direction: PassDirection,
    pub relative_orbit: u32,
    pub vv_path: String,
    pub vh_path: Option<String>,
}

impl ManifestEntry {
    pub fn meta(&self) -> SceneMeta {
        let mut polarizations = vec![Polarization::VV];
        if self.vh_path.is_some() {
            polarizations.push(Polarization::VH);
        }
        SceneMeta {
            scene_id: self.scene_id.clone(),
            acquisition_time: self.acquisition_time,
            pass_direction: self.pass_direction,
            relative_orbit: self.relative_orbit,
            polarizations,
        }
    }
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    if !s.ends_with('Z') {
        return Err(format!("timestamp {s:?} must be UTC with a trailing Z"));
    }
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("timestamp {s:?}: {e}"))
}

pub fn read_scene_manifest<R: Read>(reader: R) -> Result<Vec<ManifestEntry>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != SCENE_MANIFEST_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", SCENE_MANIFEST_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::Parse { line, message };
        if rec.len() != 6 {
            return Err(bad(format!("expected 6 fields, found {}", rec.len())));
        }
        if rec[0].is_empty() {
            return Err(bad("empty scene_id".into()));
        }
        out.push(ManifestEntry {
            scene_id: rec[0].to_string(),
            acquisition_time: parse_timestamp(&rec[1]).map_err(bad)?,
            pass_direction: rec[2].parse().map_err(|e: Error| bad(e.to_string()))?,
            relative_orbit: rec[3]
                .parse()
                .map_err(|e| bad(format!("relative_orbit: {e}")))?,
            vv_path: if rec[4].is_empty() {
                return Err(bad("empty vv_path".into()));
            } else {
                rec[4].to_string()
            },
            vh_path: (!rec[5].is_empty()).then(|| rec[5].to_string()),
        });
    }
    Ok(out)
}

pub fn write_scene_manifest<W: Write>(writer: W, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SCENE_MANIFEST_HEADER)?;
    for e in entries {
        w.write_record([
            e.scene_id.as_str(),
            &format_timestamp(&e.acquisition_time),
            &e.pass_direction.to_string(),
            &e.relative_orbit.to_string(),
            &e.vv_path,
            e.vh_path.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<scene manifest>", e))?;
    Ok(())
}
