//! Deterministic synthetic scenes with planted flood extents.
//!
//! A [`SynthScenario`] describes a grid, backscatter levels for land and
//! water, flood polygons and auxiliary-field generators. [`generate_pair`]
//! turns it into a pre/post scene pair plus the planted truth;
//! [`generate_decade`] produces a monthly archive with a planted trend,
//! seasonality, an outlier year and a single-polarization era.
//!
//! Randomness comes from a ChaCha8 generator seeded with the scenario seed;
//! every raster draws from its own stream so scenes can be generated in any
//! order or in parallel with identical results.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::features::{
    write_scene_manifest, ManifestEntry, PassDirection, Scene, SceneMeta, ScenePair, WATER_VH_DB,
    WATER_VV_DB,
};
use crate::geo::{self, Polygon};
use crate::kv::KvDoc;
use crate::postproc::{land_cover, AuxStack};
use crate::raster::{write_raster, GeoTransform, Raster};
use crate::trend::{MonthRange, YearMonth};
use crate::{Error, Result};

/// How an auxiliary float plane is filled.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AuxField {
    #[default]
    Absent,
    Constant(f64),
    /// Linear from `from` at the left edge to `to` at the right edge.
    Ramp {
        from: f64,
        to: f64,
    },
    /// Independent uniform draws in `[lo, hi)`.
    Uniform {
        lo: f64,
        hi: f64,
    },
}

impl FromStr for AuxField {
    type Err = Error;

    /// `none`, `const:V`, `ramp:A:B` or `uniform:A:B`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad aux generator {s:?}"));
        let parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let num = |i: usize| {
            parts
                .get(i)
                .and_then(|p| p.parse::<f64>().ok())
                .ok_or_else(bad)
        };
        match (parts[0], parts.len()) {
            ("none", 1) => Ok(AuxField::Absent),
            ("const", 2) => Ok(AuxField::Constant(num(1)?)),
            ("ramp", 3) => Ok(AuxField::Ramp {
                from: num(1)?,
                to: num(2)?,
            }),
            ("uniform", 3) => {
                let (lo, hi) = (num(1)?, num(2)?);
                if hi < lo {
                    return Err(bad());
                }
                Ok(AuxField::Uniform { lo, hi })
            }
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for AuxField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AuxField::Absent => write!(f, "none"),
            AuxField::Constant(v) => write!(f, "const:{v}"),
            AuxField::Ramp { from, to } => write!(f, "ramp:{from}:{to}"),
            AuxField::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
        }
    }
}

impl AuxField {
    fn generate(
        &self,
        width: usize,
        height: usize,
        t: GeoTransform,
        rng: &mut ChaCha8Rng,
    ) -> Option<Raster> {
        let data: Vec<f32> = match *self {
            AuxField::Absent => return None,
            AuxField::Constant(v) => vec![v as f32; width * height],
            AuxField::Ramp { from, to } => {
                let denom = width.saturating_sub(1).max(1) as f64;
                (0..width * height).map(|i| (from + (to - from) * (i % width) as f64 / denom) as f32).collect()
            }
            AuxField::Uniform { lo, hi } => {
                (0..width * height).map(|_| if hi > lo { rng.random_range(lo..hi) } else { lo } as f32).collect()
            }
        };
        Some(Raster::from_f32(width, height, t, None, data).expect("generated plane is finite"))
    }
}

/// Rectangle of whole pixels, `[col0, col1) × [row0, row1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub col0: usize,
    pub row0: usize,
    pub col1: usize,
    pub row1: usize,
}

impl FromStr for PixelRect {
    type Err = Error;

    /// `col0 row0 col1 row1`.
    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<usize> = s
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidArgument(format!("bad pixel rectangle {s:?}")))?;
        match v[..] {
            [col0, row0, col1, row1] if col0 < col1 && row0 < row1 => Ok(Self {
                col0,
                row0,
                col1,
                row1,
            }),
            _ => Err(Error::InvalidArgument(format!(
                "bad pixel rectangle {s:?}, expected col0 row0 col1 row1"
            ))),
        }
    }
}

impl std::fmt::Display for PixelRect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {} {} {}", self.col0, self.row0, self.col1, self.row1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScenario {
    pub seed: u64,
    pub transform: GeoTransform,
    pub width: usize,
    pub height: usize,
    pub land_vv: f64,
    pub land_vh: f64,
    pub water_vv: f64,
    pub water_vh: f64,
    /// Lon/lat rings; a pixel is flooded when its centre lies in any polygon.
    pub flood_polygons: Vec<Polygon>,
    /// Standard deviation of additive Gaussian noise, dB.
    pub speckle_sigma: f64,
    pub slope: AuxField,
    pub soil_moisture: AuxField,
    pub temperature: AuxField,
    pub elevation: AuxField,
    /// Base land-cover class, if a land-cover plane is generated.
    pub land_cover: Option<u8>,
    /// Land-cover overrides applied in order.
    pub land_cover_patches: Vec<(u8, PixelRect)>,
    pub pre_time: DateTime<Utc>,
    pub revisit_days: i64,
    pub pass_direction: PassDirection,
    pub relative_orbit: u32,
}

impl Default for SynthScenario {
    fn default() -> Self {
        Self {
            seed: 0,
            transform: GeoTransform::new(1.0e6, 1.0e6, 20.0, 20.0, geo::EPSG_WEB_MERCATOR)
                .expect("valid"),
            width: 256,
            height: 256,
            land_vv: -11.0,
            land_vh: -11.0,
            water_vv: -21.0,
            water_vh: -25.0,
            flood_polygons: Vec::new(),
            speckle_sigma: 0.0,
            slope: AuxField::Absent,
            soil_moisture: AuxField::Absent,
            temperature: AuxField::Absent,
            elevation: AuxField::Absent,
            land_cover: None,
            land_cover_patches: Vec::new(),
            pre_time: Utc.with_ymd_and_hms(2020, 1, 1, 6, 0, 0).unwrap(),
            revisit_days: 12,
            pass_direction: PassDirection::Ascending,
            relative_orbit: 42,
        }
    }
}

impl SynthScenario {
    pub const KEYS: [&'static str; 24] = [
        "seed",
        "grid.crs",
        "grid.x_origin",
        "grid.y_origin",
        "grid.pixel_size",
        "grid.width",
        "grid.height",
        "amp.land_vv",
        "amp.land_vh",
        "amp.water_vv",
        "amp.water_vh",
        "speckle_sigma",
        "flood.polygon",
        "flood.pixel_rect",
        "aux.slope",
        "aux.soil_moisture",
        "aux.temperature",
        "aux.elevation",
        "aux.land_cover",
        "aux.land_cover_patch",
        "time.pre",
        "time.revisit_days",
        "orbit.pass",
        "orbit.relative",
    ];

    /// Polygon covering whole pixels of the grid, in lon/lat.
    pub fn pixel_rect_polygon(&self, r: PixelRect) -> Result<Polygon> {
        let t = &self.transform;
        let (x0, y0) = t.pixel_to_world(r.col0 as f64, r.row1 as f64);
        let (x1, y1) = t.pixel_to_world(r.col1 as f64, r.row0 as f64);
        let (lon0, lat0) = geo::to_lon_lat(t.crs_code, x0, y0)?;
        let (lon1, lat1) = geo::to_lon_lat(t.crs_code, x1, y1)?;
        Ok(Polygon::rect(lon0, lat0, lon1, lat1))
    }

    pub fn add_pixel_rect(&mut self, r: PixelRect) -> Result<()> {
        let p = self.pixel_rect_polygon(r)?;
        self.flood_polygons.push(p);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.width == 0 || self.height == 0 {
            return bad("grid must be non-empty".into());
        }
        for (name, v) in [
            ("land_vv", self.land_vv),
            ("land_vh", self.land_vh),
            ("water_vv", self.water_vv),
            ("water_vh", self.water_vh),
            ("speckle_sigma", self.speckle_sigma),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if !(self.water_vv < WATER_VV_DB && self.land_vv >= WATER_VV_DB) {
            return bad(format!(
                "VV amplitudes must straddle {WATER_VV_DB} dB (water {}, land {})",
                self.water_vv, self.land_vv
            ));
        }
        if !(self.water_vh < WATER_VH_DB && self.land_vh >= WATER_VH_DB) {
            return bad(format!(
                "VH amplitudes must straddle {WATER_VH_DB} dB (water {}, land {})",
                self.water_vh, self.land_vh
            ));
        }
        if self.speckle_sigma < 0.0 {
            return bad("speckle_sigma must be non-negative".into());
        }
        if !(1..=crate::features::MAX_PAIR_GAP_DAYS).contains(&self.revisit_days) {
            return bad(format!(
                "revisit_days must be in 1..={}",
                crate::features::MAX_PAIR_GAP_DAYS
            ));
        }
        for (code, r) in &self.land_cover_patches {
            if !land_cover::is_known(*code) {
                return bad(format!("unknown land-cover class {code}"));
            }
            if r.col1 > self.width || r.row1 > self.height {
                return bad(format!("land-cover patch {r} outside the grid"));
            }
        }
        if let Some(code) = self.land_cover {
            if !land_cover::is_known(code) {
                return bad(format!("unknown land-cover class {code}"));
            }
        }
        Ok(())
    }

    /// Parses a scenario file. Decade keys are accepted and ignored here.
    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        let mut known: Vec<&str> = Self::KEYS.to_vec();
        known.extend(DecadeModel::KEYS);
        doc.check_keys(&known)?;
        let mut sc = Self::default();
        if let Some(v) = doc.parse_opt("seed")? {
            sc.seed = v;
        }
        let t = &mut sc.transform;
        if let Some(v) = doc.parse_opt("grid.crs")? {
            t.crs_code = v;
        }
        if let Some(v) = doc.parse_opt("grid.x_origin")? {
            t.x_origin = v;
        }
        if let Some(v) = doc.parse_opt("grid.y_origin")? {
            t.y_origin = v;
        }
        if let Some(v) = doc.parse_opt::<f64>("grid.pixel_size")? {
            t.pixel_width = v;
            t.pixel_height = v;
        }
        t.validate()?;
        if let Some(v) = doc.parse_opt("grid.width")? {
            sc.width = v;
        }
        if let Some(v) = doc.parse_opt("grid.height")? {
            sc.height = v;
        }
        for (key, slot) in [
            ("amp.land_vv", &mut sc.land_vv),
            ("amp.land_vh", &mut sc.land_vh),
            ("amp.water_vv", &mut sc.water_vv),
            ("amp.water_vh", &mut sc.water_vh),
            ("speckle_sigma", &mut sc.speckle_sigma),
        ] {
            if let Some(v) = doc.parse_opt(key)? {
                *slot = v;
            }
        }
        for ring in doc.get_all("flood.polygon") {
            sc.flood_polygons.push(Polygon::parse_ring(ring)?);
        }
        for (key, slot) in [
            ("aux.slope", &mut sc.slope),
            ("aux.soil_moisture", &mut sc.soil_moisture),
            ("aux.temperature", &mut sc.temperature),
            ("aux.elevation", &mut sc.elevation),
        ] {
            if let Some(v) = doc.parse_opt(key)? {
                *slot = v;
            }
        }
        sc.land_cover = match doc.get("aux.land_cover") {
            None | Some("none") => None,
            Some(v) => Some(
                v.strip_prefix("const:")
                    .and_then(|c| c.trim().parse().ok())
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "aux.land_cover: expected const:CODE, got {v:?}"
                        ))
                    })?,
            ),
        };
        for patch in doc.get_all("aux.land_cover_patch") {
            let (code, rect) = patch.split_once(':').ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "aux.land_cover_patch: expected CODE: rect, got {patch:?}"
                ))
            })?;
            let code = code
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad land-cover code in {patch:?}")))?;
            sc.land_cover_patches.push((code, rect.parse()?));
        }
        if let Some(v) = doc.get("time.pre") {
            sc.pre_time = crate::features::parse_timestamp(v).map_err(Error::InvalidArgument)?;
        }
        if let Some(v) = doc.parse_opt("time.revisit_days")? {
            sc.revisit_days = v;
        }
        if let Some(v) = doc.get("orbit.pass") {
            sc.pass_direction = v.parse()?;
        }
        if let Some(v) = doc.parse_opt("orbit.relative")? {
            sc.relative_orbit = v;
        }
        // Pixel rectangles need the final grid.
        for r in doc.get_all("flood.pixel_rect") {
            let r: PixelRect = r.parse()?;
            sc.add_pixel_rect(r)?;
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn write_kv(&self, doc: &mut KvDoc) {
        let t = &self.transform;
        doc.push("seed", self.seed);
        doc.push("grid.crs", t.crs_code);
        doc.push("grid.x_origin", t.x_origin);
        doc.push("grid.y_origin", t.y_origin);
        doc.push("grid.pixel_size", t.pixel_width);
        doc.push("grid.width", self.width);
        doc.push("grid.height", self.height);
        doc.push("amp.land_vv", self.land_vv);
        doc.push("amp.land_vh", self.land_vh);
        doc.push("amp.water_vv", self.water_vv);
        doc.push("amp.water_vh", self.water_vh);
        doc.push("speckle_sigma", self.speckle_sigma);
        for p in &self.flood_polygons {
            doc.push("flood.polygon", p.format_ring());
        }
        doc.push("aux.slope", self.slope);
        doc.push("aux.soil_moisture", self.soil_moisture);
        doc.push("aux.temperature", self.temperature);
        doc.push("aux.elevation", self.elevation);
        match self.land_cover {
            Some(c) => doc.push("aux.land_cover", format!("const:{c}")),
            None => doc.push("aux.land_cover", "none"),
        }
        for (code, r) in &self.land_cover_patches {
            doc.push("aux.land_cover_patch", format!("{code}: {r}"));
        }
        doc.push(
            "time.pre",
            crate::features::format_timestamp(&self.pre_time),
        );
        doc.push("time.revisit_days", self.revisit_days);
        doc.push("orbit.pass", self.pass_direction);
        doc.push("orbit.relative", self.relative_orbit);
    }

    /// Rasterized flood polygons: 1 where a pixel centre falls in any polygon.
    pub fn truth(&self) -> Result<Raster> {
        let t = self.transform;
        let boxes: Vec<_> = self.flood_polygons.iter().map(|p| p.bbox()).collect();
        let mut data = vec![0u8; self.width * self.height];
        if !self.flood_polygons.is_empty() {
            for row in 0..self.height {
                for col in 0..self.width {
                    let (x, y) = t.pixel_center(row, col);
                    let (lon, lat) = geo::to_lon_lat(t.crs_code, x, y)?;
                    let hit = self.flood_polygons.iter().zip(&boxes).any(|(p, b)| {
                        b.is_some_and(|(a, b, c, d)| lon >= a && lon <= c && lat >= b && lat <= d)
                            && p.contains(lon, lat)
                    });
                    data[row * self.width + col] = hit as u8;
                }
            }
        }
        Raster::binary(self.width, self.height, t, data)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// Backscatter plane: `water` where `flooded(i)`, `land` elsewhere, plus noise.
    fn backscatter(
        &self,
        land: f64,
        water: f64,
        flooded: impl Fn(usize) -> bool,
        stream: u64,
    ) -> Raster {
        let n = self.width * self.height;
        let mut data: Vec<f32> = (0..n)
            .map(|i| if flooded(i) { water } else { land } as f32)
            .collect();
        if self.speckle_sigma > 0.0 {
            let noise = Normal::new(0.0, self.speckle_sigma).expect("sigma validated");
            let mut rng = self.rng(stream);
            for v in &mut data {
                *v = (*v as f64 + noise.sample(&mut rng)) as f32;
            }
        }
        Raster::from_f32(self.width, self.height, self.transform, None, data)
            .expect("finite backscatter")
    }

    /// Auxiliary planes from the configured generators.
    pub fn aux(&self) -> AuxStack {
        let (w, h, t) = (self.width, self.height, self.transform);
        let land_cover = self.land_cover.map(|base| {
            let mut data = vec![base; w * h];
            for (code, r) in &self.land_cover_patches {
                for row in r.row0..r.row1 {
                    data[row * w + r.col0..row * w + r.col1].fill(*code);
                }
            }
            Raster::from_u8(w, h, t, None, data).expect("sized land cover")
        });
        AuxStack {
            slope: self.slope.generate(w, h, t, &mut self.rng(AUX_STREAM)),
            soil_moisture: self
                .soil_moisture
                .generate(w, h, t, &mut self.rng(AUX_STREAM + 1)),
            temperature: self
                .temperature
                .generate(w, h, t, &mut self.rng(AUX_STREAM + 2)),
            elevation: self
                .elevation
                .generate(w, h, t, &mut self.rng(AUX_STREAM + 3)),
            land_cover,
        }
    }

    fn meta(&self, scene_id: String, time: DateTime<Utc>, relative_orbit: u32) -> SceneMeta {
        SceneMeta {
            scene_id,
            acquisition_time: time,
            pass_direction: self.pass_direction,
            relative_orbit,
            polarizations: Vec::new(),
        }
    }
}

/// Streams at and above this value are reserved for auxiliary planes.
const AUX_STREAM: u64 = 1 << 40;

/// Streams of scene `k`: VV then VH.
fn scene_streams(k: u64) -> (u64, u64) {
    (2 * k, 2 * k + 1)
}

#[derive(Debug, Clone)]
pub struct SynthPair {
    pub pair: ScenePair,
    pub truth: Raster,
    pub aux: AuxStack,
}

/// Pre scene of land everywhere, post scene with water inside the flood
/// polygons, both dual-polarization.
pub fn generate_pair(sc: &SynthScenario) -> Result<SynthPair> {
    sc.validate()?;
    let truth = sc.truth()?;
    let mask = truth.as_u8().expect("binary truth");
    let post_time = sc.pre_time + Duration::days(sc.revisit_days);
    let stamp = |t: DateTime<Utc>| t.format("%Y%m%dT%H%M%S").to_string();
    let (pre_vv, pre_vh) = scene_streams(0);
    let (post_vv, post_vh) = scene_streams(1);
    let pre = Scene::new(
        sc.meta(
            format!("SYN_{}_{}", sc.seed, stamp(sc.pre_time)),
            sc.pre_time,
            sc.relative_orbit,
        ),
        sc.backscatter(sc.land_vv, sc.water_vv, |_| false, pre_vv),
        Some(sc.backscatter(sc.land_vh, sc.water_vh, |_| false, pre_vh)),
    )?;
    let post = Scene::new(
        sc.meta(
            format!("SYN_{}_{}", sc.seed, stamp(post_time)),
            post_time,
            sc.relative_orbit,
        ),
        sc.backscatter(sc.land_vv, sc.water_vv, |i| mask[i] == 1, post_vv),
        Some(sc.backscatter(sc.land_vh, sc.water_vh, |i| mask[i] == 1, post_vh)),
    )?;
    Ok(SynthPair {
        pair: ScenePair::new(pre, post)?,
        truth,
        aux: sc.aux(),
    })
}

/// Monthly flood model for [`generate_decade`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecadeModel {
    pub start: YearMonth,
    pub months: usize,
    /// Mean planted flooded pixels per month.
    pub mean_flood_px: f64,
    /// Linear trend in percent of the mean per year, centred on the period.
    pub trend_pct_per_year: f64,
    /// Relative seasonal amplitude: the area is scaled by `1 + a·sin(2π(month−1)/12)`.
    pub seasonal_amplitude: f64,
    /// Calendar year whose months are inflated by `outlier_factor`.
    pub outlier_year: Option<i32>,
    pub outlier_factor: f64,
    /// Scenes acquired before this date carry VV only.
    pub single_pol_before: Option<NaiveDate>,
    /// Fraction of flooded pixels that look like water in VH only; these go
    /// undetected in single-polarization scenes.
    pub vh_only_fraction: f64,
}

impl Default for DecadeModel {
    fn default() -> Self {
        Self {
            start: YearMonth::new(2014, 10),
            months: 120,
            mean_flood_px: 400.0,
            trend_pct_per_year: 5.0,
            seasonal_amplitude: 0.3,
            outlier_year: Some(2022),
            outlier_factor: 3.0,
            single_pol_before: NaiveDate::from_ymd_opt(2017, 6, 1),
            vh_only_fraction: 0.5,
        }
    }
}

impl DecadeModel {
    pub const KEYS: [&'static str; 9] = [
        "decade.start",
        "decade.months",
        "decade.mean_flood_px",
        "decade.trend_pct_per_year",
        "decade.seasonal_amplitude",
        "decade.outlier_year",
        "decade.outlier_factor",
        "decade.single_pol_before",
        "decade.vh_only_fraction",
    ];

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.months == 0 {
            return bad("decade.months must be positive");
        }
        for v in [
            self.mean_flood_px,
            self.trend_pct_per_year,
            self.seasonal_amplitude,
            self.outlier_factor,
        ] {
            if !v.is_finite() {
                return bad("decade model parameters must be finite");
            }
        }
        if self.mean_flood_px < 0.0 || self.outlier_factor < 0.0 {
            return bad("mean_flood_px and outlier_factor must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.vh_only_fraction) {
            return bad("vh_only_fraction must be in [0, 1]");
        }
        Ok(())
    }

    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        let mut m = Self::default();
        if let Some(v) = doc.parse_opt("decade.start")? {
            m.start = v;
        }
        if let Some(v) = doc.parse_opt("decade.months")? {
            m.months = v;
        }
        for (key, slot) in [
            ("decade.mean_flood_px", &mut m.mean_flood_px),
            ("decade.trend_pct_per_year", &mut m.trend_pct_per_year),
            ("decade.seasonal_amplitude", &mut m.seasonal_amplitude),
            ("decade.outlier_factor", &mut m.outlier_factor),
            ("decade.vh_only_fraction", &mut m.vh_only_fraction),
        ] {
            if let Some(v) = doc.parse_opt(key)? {
                *slot = v;
            }
        }
        match doc.get("decade.outlier_year") {
            None => {}
            Some("none") => m.outlier_year = None,
            Some(_) => m.outlier_year = doc.parse_opt("decade.outlier_year")?,
        }
        match doc.get("decade.single_pol_before") {
            None => {}
            Some("none") => m.single_pol_before = None,
            Some(_) => m.single_pol_before = doc.parse_opt("decade.single_pol_before")?,
        }
        m.validate()?;
        Ok(m)
    }

    pub fn write_kv(&self, doc: &mut KvDoc) {
        doc.push("decade.start", self.start);
        doc.push("decade.months", self.months);
        doc.push("decade.mean_flood_px", self.mean_flood_px);
        doc.push("decade.trend_pct_per_year", self.trend_pct_per_year);
        doc.push("decade.seasonal_amplitude", self.seasonal_amplitude);
        doc.push(
            "decade.outlier_year",
            self.outlier_year
                .map_or("none".to_string(), |y| y.to_string()),
        );
        doc.push("decade.outlier_factor", self.outlier_factor);
        doc.push(
            "decade.single_pol_before",
            self.single_pol_before
                .map_or("none".to_string(), |d| d.to_string()),
        );
        doc.push("decade.vh_only_fraction", self.vh_only_fraction);
    }

    pub fn range(&self) -> MonthRange {
        MonthRange {
            start: self.start,
            end: self.start.offset(self.months as i64 - 1),
        }
    }

    /// Planted area before rounding, in pixels, for month offset `k`.
    pub fn planted_area(&self, k: usize) -> f64 {
        let m = self.start.offset(k as i64);
        let centre = (self.months as f64 - 1.0) / 2.0;
        let trend = 1.0 + self.trend_pct_per_year / 100.0 * (k as f64 - centre) / 12.0;
        let season =
            1.0 + self.seasonal_amplitude * (2.0 * PI * (m.month as f64 - 1.0) / 12.0).sin();
        let outlier = if self.outlier_year == Some(m.year) {
            self.outlier_factor
        } else {
            1.0
        };
        (self.mean_flood_px * trend * season * outlier).max(0.0)
    }
}

/// One month of a synthetic archive.
#[derive(Debug, Clone)]
pub struct DecadeMonth {
    pub month: YearMonth,
    pub pair: ScenePair,
    pub truth: Raster,
    pub planted_px: usize,
    /// Planted pixels that a VV-only detector can see.
    pub vv_visible_px: usize,
}

#[derive(Debug, Clone)]
pub struct Decade {
    pub months: Vec<DecadeMonth>,
    pub aux: AuxStack,
}

impl Decade {
    /// All scenes in acquisition order.
    pub fn scenes(&self) -> impl Iterator<Item = &Scene> {
        self.months.iter().flat_map(|m| [&m.pair.pre, &m.pair.post])
    }

    /// Writes every scene as FLR1 plus `manifest.csv` (paths relative to
    /// `dir`) and per-month truth rasters. Returns the files written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut entries = Vec::new();
        for scene in self.scenes() {
            entries.push(write_scene(dir, scene, &mut written)?);
        }
        for m in &self.months {
            let p = dir.join(format!("truth_{}.flr", m.month));
            write_raster(&m.truth, &p)?;
            written.push(p);
        }
        let p = dir.join("manifest.csv");
        let f = fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
        write_scene_manifest(f, &entries)?;
        written.push(p);
        Ok(written)
    }
}

impl SynthPair {
    /// Writes both scenes, the truth raster, any auxiliary planes and
    /// `manifest.csv` into `dir`. Returns the files written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let entries = vec![
            write_scene(dir, &self.pair.pre, &mut written)?,
            write_scene(dir, &self.pair.post, &mut written)?,
        ];
        let p = dir.join("truth.flr");
        write_raster(&self.truth, &p)?;
        written.push(p);
        written.extend(write_aux(dir, &self.aux)?);
        let p = dir.join("manifest.csv");
        let f = fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
        write_scene_manifest(f, &entries)?;
        written.push(p);
        Ok(written)
    }
}

fn write_scene(dir: &Path, s: &Scene, written: &mut Vec<PathBuf>) -> Result<ManifestEntry> {
    let vv_name = format!("{}_vv.flr", s.meta.scene_id);
    write_raster(&s.vv, dir.join(&vv_name))?;
    written.push(dir.join(&vv_name));
    let vh_path = match &s.vh {
        Some(vh) => {
            let name = format!("{}_vh.flr", s.meta.scene_id);
            write_raster(vh, dir.join(&name))?;
            written.push(dir.join(&name));
            Some(name)
        }
        None => None,
    };
    Ok(ManifestEntry {
        scene_id: s.meta.scene_id.clone(),
        acquisition_time: s.meta.acquisition_time,
        pass_direction: s.meta.pass_direction,
        relative_orbit: s.meta.relative_orbit,
        vv_path: vv_name,
        vh_path,
    })
}

/// Writes present auxiliary planes as `aux_<name>.flr`.
pub fn write_aux(dir: &Path, aux: &AuxStack) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (name, plane) in [
        ("slope", &aux.slope),
        ("land_cover", &aux.land_cover),
        ("soil_moisture", &aux.soil_moisture),
        ("temperature", &aux.temperature),
        ("elevation", &aux.elevation),
    ] {
        if let Some(r) = plane {
            let p = dir.join(format!("aux_{name}.flr"));
            write_raster(r, &p)?;
            written.push(p);
        }
    }
    Ok(written)
}

/// A monthly archive: one admissible pair per month, pre on the 1st and
/// post `revisit_days` later. Consecutive months use alternating relative
/// orbits so only the intended pairs are admissible. The scenario's flood
/// polygons are ignored; each month floods the first `planted_px` pixels of
/// a seeded permutation of the grid.
pub fn generate_decade(sc: &SynthScenario, model: &DecadeModel) -> Result<Decade> {
    sc.validate()?;
    model.validate()?;
    let n = sc.width * sc.height;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut sc.rng(AUX_STREAM + 16));
    let hour = sc.pre_time.time();

    let months = (0..model.months)
        .into_par_iter()
        .map(|k| {
            let month = model.start.offset(k as i64);
            let planted_px = (model.planted_area(k).round() as usize).min(n);
            let vh_only = (model.vh_only_fraction * planted_px as f64).round() as usize;
            let mut flooded = vec![0u8; n];
            for &i in &order[..planted_px] {
                flooded[i] = 1;
            }
            // VH-only pixels are the first `vh_only` of the planted ones.
            let mut vv_water = flooded.clone();
            for &i in &order[..vh_only] {
                vv_water[i] = 0;
            }
            let pre_time = month.first_day().and_time(hour).and_utc();
            let post_time = pre_time + Duration::days(sc.revisit_days);
            let orbit = sc.relative_orbit + (k % 2) as u32;
            let dual =
                |t: DateTime<Utc>| model.single_pol_before.is_none_or(|d| t.date_naive() >= d);
            let scene = |t: DateTime<Utc>, s: u64, tag: &str, water: Option<(&[u8], &[u8])>| {
                let (vv_stream, vh_stream) = scene_streams(s);
                let (vv_mask, vh_mask) = water.unwrap_or((&[], &[]));
                let vv = sc.backscatter(
                    sc.land_vv,
                    sc.water_vv,
                    |i| vv_mask.get(i) == Some(&1),
                    vv_stream,
                );
                let vh = dual(t).then(|| {
                    sc.backscatter(
                        sc.land_vh,
                        sc.water_vh,
                        |i| vh_mask.get(i) == Some(&1),
                        vh_stream,
                    )
                });
                Scene::new(
                    sc.meta(
                        format!("SYN_{}_{}_{tag}", sc.seed, t.format("%Y%m%d")),
                        t,
                        orbit,
                    ),
                    vv,
                    vh,
                )
            };
            let pre = scene(pre_time, 2 * k as u64, "pre", None)?;
            let post = scene(
                post_time,
                2 * k as u64 + 1,
                "post",
                Some((&vv_water, &flooded)),
            )?;
            Ok(DecadeMonth {
                month,
                pair: ScenePair::new(pre, post)?,
                truth: Raster::binary(sc.width, sc.height, sc.transform, flooded)?,
                planted_px,
                vv_visible_px: planted_px - vh_only,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Decade {
        months,
        aux: sc.aux(),
    })
}
