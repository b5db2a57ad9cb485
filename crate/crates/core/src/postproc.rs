//! False-positive filtering with auxiliary rasters, the static exclusion
//! mask, square-element dilation (buffering) and majority smoothing.
//!
//! Land-cover codes follow the ESA WorldCover registry:
//!
//! | code | class |
//! |------|-------|
//! | 10 | tree cover |
//! | 20 | shrubland |
//! | 30 | grassland |
//! | 40 | cropland |
//! | 50 | built-up |
//! | 60 | bare / sparse vegetation |
//! | 70 | snow and ice |
//! | 80 | permanent water bodies |
//! | 90 | herbaceous wetland |
//! | 95 | mangroves |
//! | 100 | moss and lichen |

use std::collections::BTreeSet;

use bitflags::bitflags;

use crate::classifier::FloodCandidateMask;
use crate::kv::KvDoc;
use crate::raster::{Raster, BINARY_NODATA};
use crate::{Error, Result};

pub mod land_cover {
    pub const TREE_COVER: u8 = 10;
    pub const SHRUBLAND: u8 = 20;
    pub const GRASSLAND: u8 = 30;
    pub const CROPLAND: u8 = 40;
    pub const BUILT_UP: u8 = 50;
    pub const BARE_GROUND: u8 = 60;
    pub const SNOW_ICE: u8 = 70;
    pub const PERMANENT_WATER: u8 = 80;
    pub const HERBACEOUS_WETLAND: u8 = 90;
    pub const MANGROVES: u8 = 95;
    pub const MOSS_LICHEN: u8 = 100;

    pub const ALL: [u8; 11] = [
        TREE_COVER,
        SHRUBLAND,
        GRASSLAND,
        CROPLAND,
        BUILT_UP,
        BARE_GROUND,
        SNOW_ICE,
        PERMANENT_WATER,
        HERBACEOUS_WETLAND,
        MANGROVES,
        MOSS_LICHEN,
    ];

    pub fn is_known(code: u8) -> bool {
        ALL.contains(&code)
    }
}

bitflags! {
    /// Why a pixel was removed or masked. Stored as a byte raster.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct Reason: u8 {
        const STEEP_TERRAIN = 0x01;
        const BARE_GROUND = 0x02;
        const BUILT_UP = 0x04;
        const PERMANENT_WATER = 0x08;
        /// Any other land-cover class listed in `exclude_land_cover`.
        const EXCLUDED_LAND_COVER = 0x10;
        const LOW_SOIL_MOISTURE = 0x20;
        const LOW_TEMPERATURE = 0x40;
    }
}

impl Reason {
    fn for_land_cover(code: u8) -> Reason {
        match code {
            land_cover::BARE_GROUND => Reason::BARE_GROUND,
            land_cover::BUILT_UP => Reason::BUILT_UP,
            land_cover::PERMANENT_WATER => Reason::PERMANENT_WATER,
            _ => Reason::EXCLUDED_LAND_COVER,
        }
    }
}

/// Auxiliary planes on the detection grid. Each is optional so callers can
/// run partial pipelines; operations name the plane they are missing.
#[derive(Debug, Clone, Default)]
pub struct AuxStack {
    /// Degrees, float32.
    pub slope: Option<Raster>,
    /// WorldCover class codes, byte.
    pub land_cover: Option<Raster>,
    /// m³/m³, float32.
    pub soil_moisture: Option<Raster>,
    /// Kelvin, float32.
    pub temperature: Option<Raster>,
    /// Metres, float32.
    pub elevation: Option<Raster>,
}

impl AuxStack {
    fn planes(&self) -> [(&'static str, Option<&Raster>); 5] {
        [
            ("slope", self.slope.as_ref()),
            ("land_cover", self.land_cover.as_ref()),
            ("soil_moisture", self.soil_moisture.as_ref()),
            ("temperature", self.temperature.as_ref()),
            ("elevation", self.elevation.as_ref()),
        ]
    }

    /// Checks grids against `grid` and value ranges of every present plane.
    pub fn validate(&self, grid: &Raster) -> Result<()> {
        for (name, plane) in self.planes() {
            let Some(r) = plane else { continue };
            grid.check_congruent(r, name)?;
            if name == "land_cover" {
                r.expect_u8(name)?;
                continue;
            }
            r.expect_f32(name)?;
            for i in 0..r.len() {
                let Some(v) = r.value(i) else { continue };
                let ok = match name {
                    "slope" => v >= 0.0,
                    "soil_moisture" => (0.0..=1.0).contains(&v),
                    "temperature" => v > 0.0,
                    _ => true,
                };
                if !ok {
                    return Err(Error::InvalidRaster(format!(
                        "{name} value {v} at pixel {i} out of range"
                    )));
                }
            }
        }
        Ok(())
    }

    fn require(&self, name: &'static str) -> Result<&Raster> {
        self.planes()
            .into_iter()
            .find(|(n, _)| *n == name)
            .and_then(|(_, r)| r)
            .ok_or(Error::MissingPlane(name))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub max_slope_deg: f64,
    pub min_soil_moisture: f64,
    pub min_temperature_k: f64,
    pub exclude_land_cover: BTreeSet<u8>,
    pub slope_neighborhood_px: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            max_slope_deg: 10.0,
            min_soil_moisture: 0.10,
            min_temperature_k: 275.15,
            exclude_land_cover: [land_cover::BARE_GROUND, land_cover::PERMANENT_WATER].into(),
            slope_neighborhood_px: 2,
        }
    }
}

impl FilterConfig {
    pub const KEYS: [&'static str; 5] = [
        "filter.max_slope_deg",
        "filter.min_soil_moisture",
        "filter.min_temperature_k",
        "filter.exclude_land_cover",
        "filter.slope_neighborhood_px",
    ];

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("max_slope_deg", self.max_slope_deg),
            ("min_soil_moisture", self.min_soil_moisture),
            ("min_temperature_k", self.min_temperature_k),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be finite")));
            }
        }
        if let Some(&c) = self
            .exclude_land_cover
            .iter()
            .find(|c| !land_cover::is_known(**c))
        {
            return Err(Error::UnknownClass(c));
        }
        Ok(())
    }

    pub fn apply_kv(&mut self, doc: &KvDoc) -> Result<()> {
        if let Some(v) = doc.parse_opt("filter.max_slope_deg")? {
            self.max_slope_deg = v;
        }
        if let Some(v) = doc.parse_opt("filter.min_soil_moisture")? {
            self.min_soil_moisture = v;
        }
        if let Some(v) = doc.parse_opt("filter.min_temperature_k")? {
            self.min_temperature_k = v;
        }
        if let Some(v) = doc.parse_opt("filter.slope_neighborhood_px")? {
            self.slope_neighborhood_px = v;
        }
        if let Some(list) = doc.get("filter.exclude_land_cover") {
            self.exclude_land_cover = list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<u8>()
                        .map_err(|e| Error::InvalidArgument(format!("exclude_land_cover: {e}")))
                })
                .collect::<Result<_>>()?;
        }
        self.validate()
    }

    pub fn from_kv(doc: &KvDoc) -> Result<Self> {
        let mut c = Self::default();
        c.apply_kv(doc)?;
        Ok(c)
    }

    pub fn write_kv(&self, doc: &mut KvDoc) {
        doc.push("filter.max_slope_deg", self.max_slope_deg);
        doc.push("filter.min_soil_moisture", self.min_soil_moisture);
        doc.push("filter.min_temperature_k", self.min_temperature_k);
        let codes: Vec<String> = self.exclude_land_cover.iter().map(u8::to_string).collect();
        doc.push("filter.exclude_land_cover", codes.join(","));
        doc.push("filter.slope_neighborhood_px", self.slope_neighborhood_px);
    }
}

fn gt(r: &Raster, i: usize, threshold: f64) -> bool {
    r.value(i).is_some_and(|v| v > threshold)
}

fn lt(r: &Raster, i: usize, threshold: f64) -> bool {
    r.value(i).is_some_and(|v| v < threshold)
}

/// Removes candidates that trip any filter rule. Returns the filtered mask and
/// a byte raster of [`Reason`] bits (zero for retained and non-candidate
/// pixels). Auxiliary nodata never triggers a rule.
pub fn filter_false_positives(
    cand: &FloodCandidateMask,
    aux: &AuxStack,
    cfg: &FilterConfig,
) -> Result<(FloodCandidateMask, Raster)> {
    cfg.validate()?;
    let slope = aux.require("slope")?;
    let lc = aux.require("land_cover")?;
    let sm = aux.require("soil_moisture")?;
    let temp = aux.require("temperature")?;
    aux.validate(&cand.mask)?;
    let m = cand.mask.expect_u8("candidate mask")?;
    let lcv = lc.as_u8().unwrap();

    let mut out = m.to_vec();
    let mut reasons = vec![0u8; m.len()];
    for i in (0..m.len()).filter(|&i| m[i] == 1) {
        let mut r = Reason::empty();
        if gt(slope, i, cfg.max_slope_deg) {
            r |= Reason::STEEP_TERRAIN;
        }
        if !lc.is_nodata(i) && cfg.exclude_land_cover.contains(&lcv[i]) {
            r |= Reason::for_land_cover(lcv[i]);
        }
        if lt(sm, i, cfg.min_soil_moisture) {
            r |= Reason::LOW_SOIL_MOISTURE;
        }
        if lt(temp, i, cfg.min_temperature_k) {
            r |= Reason::LOW_TEMPERATURE;
        }
        if !r.is_empty() {
            out[i] = 0;
            reasons[i] = r.bits();
        }
    }
    let (w, h, t) = (
        cand.mask.width(),
        cand.mask.height(),
        *cand.mask.transform(),
    );
    let filtered = FloodCandidateMask {
        mask: Raster::binary(w, h, t, out)?,
        probability: cand.probability.clone(),
        threshold: cand.threshold,
    };
    Ok((filtered, Raster::from_u8(w, h, t, None, reasons)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExclusionMask {
    /// 1 where detections are unreliable.
    pub mask: Raster,
    /// [`Reason`] bits: steep terrain (dilated), bare ground, built-up.
    pub reason: Raster,
}

/// Static mask of zones where detections are unreliable or false negatives
/// are likely. Independent of any detections.
pub fn build_exclusion_mask(aux: &AuxStack, cfg: &FilterConfig) -> Result<ExclusionMask> {
    let slope = aux.require("slope")?;
    let lc = aux.require("land_cover")?;
    slope.expect_f32("slope")?;
    slope.check_congruent(lc, "land_cover")?;
    let lcv = lc.expect_u8("land_cover")?;
    let (w, h, t) = (slope.width(), slope.height(), *slope.transform());

    let steep: Vec<u8> = (0..slope.len())
        .map(|i| gt(slope, i, cfg.max_slope_deg) as u8)
        .collect();
    let steep = buffer_mask(&Raster::binary(w, h, t, steep)?, cfg.slope_neighborhood_px)?;
    let steep = steep.as_u8().unwrap();

    let mut reason = vec![0u8; slope.len()];
    for i in 0..reason.len() {
        let mut r = Reason::empty();
        if steep[i] == 1 {
            r |= Reason::STEEP_TERRAIN;
        }
        if !lc.is_nodata(i) {
            match lcv[i] {
                land_cover::BARE_GROUND => r |= Reason::BARE_GROUND,
                land_cover::BUILT_UP => r |= Reason::BUILT_UP,
                _ => {}
            }
        }
        reason[i] = r.bits();
    }
    let mask = reason.iter().map(|&r| (r != 0) as u8).collect();
    Ok(ExclusionMask {
        mask: Raster::binary(w, h, t, mask)?,
        reason: Raster::from_u8(w, h, t, None, reason)?,
    })
}

/// 1-D "any positive within `radius`" pass over `n` values at `stride`.
fn dilate_line(
    src: &[u8],
    dst: &mut [u8],
    start: usize,
    n: usize,
    stride: usize,
    radius: usize,
    prefix: &mut Vec<u32>,
) {
    prefix.clear();
    prefix.push(0);
    for k in 0..n {
        let v = (src[start + k * stride] == 1) as u32;
        prefix.push(prefix[k] + v);
    }
    for k in 0..n {
        let lo = k.saturating_sub(radius);
        let hi = (k + radius + 1).min(n);
        if prefix[hi] > prefix[lo] {
            dst[start + k * stride] = 1;
        }
    }
}

/// Dilation with a (2r+1)x(2r+1) square structuring element. Pixels reached
/// by the buffer become 1; all others keep their value (0 or nodata).
pub fn buffer_mask(mask: &Raster, radius_px: usize) -> Result<Raster> {
    let src = mask.expect_u8("mask")?;
    if radius_px == 0 {
        return Ok(mask.clone());
    }
    let (w, h) = (mask.width(), mask.height());
    let mut prefix = Vec::with_capacity(w.max(h) + 1);
    // rows
    let mut rows = vec![0u8; src.len()];
    for y in 0..h {
        dilate_line(src, &mut rows, y * w, w, 1, radius_px, &mut prefix);
    }
    // columns
    let mut hits = vec![0u8; src.len()];
    for x in 0..w {
        dilate_line(&rows, &mut hits, x, h, w, radius_px, &mut prefix);
    }
    let out = src
        .iter()
        .zip(&hits)
        .map(|(&v, &d)| if d == 1 { 1 } else { v })
        .collect();
    Raster::new(
        w,
        h,
        *mask.transform(),
        mask.nodata(),
        crate::raster::PixelData::Byte(out),
    )
}

/// Majority filter over a `window` x `window` neighbourhood clipped at the
/// raster edge. Nodata pixels are neither counted nor changed; ties keep the
/// original value.
pub fn majority_smooth(mask: &Raster, window: usize) -> Result<Raster> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "window must be odd and >= 1, got {window}"
        )));
    }
    let src = mask.expect_u8("mask")?;
    if window == 1 {
        return Ok(mask.clone());
    }
    let (w, h) = (mask.width(), mask.height());
    let r = window / 2;
    // summed-area tables of positives and valid pixels
    let mut pos = vec![0u32; (w + 1) * (h + 1)];
    let mut valid = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let nd = mask.is_nodata(i);
            let p = (!nd && src[i] == 1) as u32;
            let v = (!nd) as u32;
            let s = (y + 1) * (w + 1) + x + 1;
            pos[s] = p + pos[s - 1] + pos[s - w - 1] - pos[s - w - 2];
            valid[s] = v + valid[s - 1] + valid[s - w - 1] - valid[s - w - 2];
        }
    }
    let boxsum = |t: &[u32], y0: usize, x0: usize, y1: usize, x1: usize| {
        t[y1 * (w + 1) + x1] + t[y0 * (w + 1) + x0] - t[y0 * (w + 1) + x1] - t[y1 * (w + 1) + x0]
    };
    let mut out = src.to_vec();
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            let i = y * w + x;
            if mask.is_nodata(i) {
                continue;
            }
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let p = boxsum(&pos, y0, x0, y1, x1);
            let n = boxsum(&valid, y0, x0, y1, x1);
            if 2 * p > n {
                out[i] = 1;
            } else if 2 * p < n {
                out[i] = 0;
            }
        }
    }
    Raster::new(
        w,
        h,
        *mask.transform(),
        mask.nodata(),
        crate::raster::PixelData::Byte(out),
    )
}

/// Convenience: an empty byte mask with nodata 255.
pub fn empty_mask_like(r: &Raster) -> Raster {
    Raster::filled_u8(
        r.width(),
        r.height(),
        *r.transform(),
        Some(BINARY_NODATA),
        0,
    )
}
