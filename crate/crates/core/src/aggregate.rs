//! Detection records, multi-scene composite extent maps, coarsening and
//! land-cover impact overlays.

use std::io::{Read, Write};

use chrono::NaiveDate;

use crate::classifier::FloodCandidateMask;
use crate::features::{delta_at, FeatureStack, SceneMeta};
use crate::geo::{self, Polygon};
use crate::metrics::{check_header, fmt_opt, parse_opt};
use crate::postproc::{buffer_mask, land_cover, AuxStack};
use crate::raster::{
    pixel_area_hectares, resample_nearest, GeoTransform, PixelData, Raster, BINARY_NODATA,
};
use crate::{Error, Result};

pub const DETECTIONS_HEADER: [&str; 13] = [
    "lon",
    "lat",
    "date",
    "scene_id",
    "delta_vv",
    "delta_vh",
    "soil_moisture",
    "elevation",
    "slope",
    "temperature",
    "land_cover",
    "filtered",
    "removal_reason",
];

/// One flood-candidate pixel, retained or filtered. Optional fields are
/// written as empty CSV cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub lon: f64,
    pub lat: f64,
    pub date: NaiveDate,
    pub scene_id: String,
    pub delta_vv: Option<f64>,
    pub delta_vh: Option<f64>,
    pub soil_moisture: Option<f64>,
    pub elevation: Option<f64>,
    pub slope: Option<f64>,
    pub temperature: Option<f64>,
    pub land_cover: Option<u8>,
    pub filtered: bool,
    pub removal_reason: u8,
}

impl DetectionRecord {
    pub fn validate(&self) -> Result<()> {
        if !(-180.0..=180.0).contains(&self.lon) || !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::InvalidArgument(format!(
                "record at ({}, {}) outside lon/lat range",
                self.lon, self.lat
            )));
        }
        if self.filtered != (self.removal_reason != 0) {
            return Err(Error::InvalidArgument(
                "filtered flag disagrees with removal_reason".into(),
            ));
        }
        Ok(())
    }

    /// Single-polarization detections carry no VH delta.
    pub fn is_dual_pol(&self) -> bool {
        self.delta_vh.is_some()
    }
}

/// One record per candidate pixel (retained or removed by the filters), in
/// row-major order, located at the pixel centre.
pub fn emit_records(
    filtered: &FloodCandidateMask,
    removal_reason: &Raster,
    features: &FeatureStack,
    aux: &AuxStack,
    meta: &SceneMeta,
) -> Result<Vec<DetectionRecord>> {
    let grid = &filtered.mask;
    grid.check_congruent(removal_reason, "removal_reason")?;
    grid.check_congruent(&features.delta_vv, "features")?;
    aux.validate(grid)?;
    let m = grid.expect_u8("candidate mask")?;
    let reasons = removal_reason.expect_u8("removal_reason")?;
    let t = grid.transform();
    let date = meta.acquisition_time.date_naive();
    let sample = |r: &Option<Raster>, i: usize| r.as_ref().and_then(|r| r.value(i));
    let mut out = Vec::new();
    for i in 0..m.len() {
        let reason = reasons[i];
        if m[i] != 1 && reason == 0 {
            continue;
        }
        let (row, col) = (i / grid.width(), i % grid.width());
        let (x, y) = t.pixel_center(row, col);
        let (lon, lat) = geo::to_lon_lat(t.crs_code, x, y)?;
        out.push(DetectionRecord {
            lon,
            lat,
            date,
            scene_id: meta.scene_id.clone(),
            delta_vv: delta_at(&features.delta_vv, i).map(f64::from),
            delta_vh: delta_at(&features.delta_vh, i).map(f64::from),
            soil_moisture: sample(&aux.soil_moisture, i),
            elevation: sample(&aux.elevation, i),
            slope: sample(&aux.slope, i),
            temperature: sample(&aux.temperature, i),
            land_cover: sample(&aux.land_cover, i).map(|v| v as u8),
            filtered: reason != 0,
            removal_reason: reason,
        });
    }
    Ok(out)
}

pub fn write_detections<W: Write>(w: W, records: &[DetectionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(DETECTIONS_HEADER)?;
    for r in records {
        w.write_record([
            r.lon.to_string(),
            r.lat.to_string(),
            r.date.format("%Y-%m-%d").to_string(),
            r.scene_id.clone(),
            fmt_opt(r.delta_vv),
            fmt_opt(r.delta_vh),
            fmt_opt(r.soil_moisture),
            fmt_opt(r.elevation),
            fmt_opt(r.slope),
            fmt_opt(r.temperature),
            r.land_cover.map(|c| c.to_string()).unwrap_or_default(),
            r.filtered.to_string(),
            r.removal_reason.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<detections>", e))?;
    Ok(())
}

pub fn read_detections<R: Read>(r: R) -> Result<Vec<DetectionRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &DETECTIONS_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::Parse { line, message };
        let req = |i: usize, name: &str| -> Result<f64> {
            parse_opt(&rec[i], line, name)?.ok_or_else(|| bad(format!("{name} is required")))
        };
        let record = DetectionRecord {
            lon: req(0, "lon")?,
            lat: req(1, "lat")?,
            date: NaiveDate::parse_from_str(&rec[2], "%Y-%m-%d")
                .map_err(|e| bad(format!("date: {e}")))?,
            scene_id: rec[3].to_string(),
            delta_vv: parse_opt(&rec[4], line, "delta_vv")?,
            delta_vh: parse_opt(&rec[5], line, "delta_vh")?,
            soil_moisture: parse_opt(&rec[6], line, "soil_moisture")?,
            elevation: parse_opt(&rec[7], line, "elevation")?,
            slope: parse_opt(&rec[8], line, "slope")?,
            temperature: parse_opt(&rec[9], line, "temperature")?,
            land_cover: if rec[10].is_empty() {
                None
            } else {
                Some(
                    rec[10]
                        .parse()
                        .map_err(|e| bad(format!("land_cover: {e}")))?,
                )
            },
            filtered: rec[11].parse().map_err(|e| bad(format!("filtered: {e}")))?,
            removal_reason: rec[12]
                .parse()
                .map_err(|e| bad(format!("removal_reason: {e}")))?,
        };
        record.validate().map_err(|e| bad(e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}

/// Target grid for composites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub transform: GeoTransform,
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub fn of(r: &Raster) -> Self {
        Self {
            transform: *r.transform(),
            width: r.width(),
            height: r.height(),
        }
    }
}

/// Inclusive date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Period {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Period {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeMap {
    /// Binary byte raster.
    pub extent: Raster,
    pub period: Period,
    pub buffer_radius_px: usize,
    /// Int16 count of contributing observations per pixel (mask inputs only).
    pub observation_count: Option<Raster>,
}

impl CompositeMap {
    pub fn positives(&self) -> usize {
        self.extent.count_value(1.0)
    }

    pub fn hectares(&self) -> Result<f64> {
        Ok(self.positives() as f64 * pixel_area_hectares(self.extent.transform())?)
    }
}

/// A per-scene (already filtered) flood mask with its acquisition date.
#[derive(Debug, Clone)]
pub struct DatedMask {
    pub date: NaiveDate,
    pub mask: Raster,
}

/// OR-accumulates dated masks inside `period` onto `target`, then buffers.
/// Masks on another grid are resampled (nearest) first.
pub fn compose_masks(
    masks: &[DatedMask],
    target: GridSpec,
    period: Period,
    buffer_radius_px: usize,
) -> Result<CompositeMap> {
    let n = target.width * target.height;
    let mut extent = vec![0u8; n];
    let mut counts = vec![0i16; n];
    for dm in masks.iter().filter(|m| period.contains(m.date)) {
        let resampled;
        let m = if GridSpec::of(&dm.mask) == target {
            &dm.mask
        } else {
            resampled = resample_nearest(&dm.mask, target.transform, target.width, target.height)?;
            &resampled
        };
        let v = m.expect_u8("flood mask")?;
        for i in 0..n {
            if m.is_nodata(i) {
                continue;
            }
            counts[i] = counts[i].saturating_add(1);
            if v[i] == 1 {
                extent[i] = 1;
            }
        }
    }
    let extent = Raster::binary(target.width, target.height, target.transform, extent)?;
    Ok(CompositeMap {
        extent: buffer_mask(&extent, buffer_radius_px)?,
        period,
        buffer_radius_px,
        observation_count: Some(Raster::new(
            target.width,
            target.height,
            target.transform,
            None,
            PixelData::Int16(counts),
        )?),
    })
}

/// OR-accumulates unfiltered records inside `period` onto `target`, then
/// buffers. Records outside the grid are dropped.
pub fn compose_records(
    records: &[DetectionRecord],
    target: GridSpec,
    period: Period,
    buffer_radius_px: usize,
) -> Result<CompositeMap> {
    let mut extent = vec![0u8; target.width * target.height];
    for r in records
        .iter()
        .filter(|r| !r.filtered && period.contains(r.date))
    {
        let (x, y) = geo::from_lon_lat(target.transform.crs_code, r.lon, r.lat)?;
        if let Some((row, col)) = target.transform.pixel_at(x, y, target.width, target.height) {
            extent[row * target.width + col] = 1;
        }
    }
    let extent = Raster::binary(target.width, target.height, target.transform, extent)?;
    Ok(CompositeMap {
        extent: buffer_mask(&extent, buffer_radius_px)?,
        period,
        buffer_radius_px,
        observation_count: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CoarsenRule {
    /// Coarse cell is 1 if any fine positive centre falls inside it.
    #[default]
    AnyTouch,
    /// Coarse cell is 1 if at least this fraction of fine centres inside it are positive.
    Fraction(f64),
}

/// Re-grids a fine composite onto `coarse_pixel`-metre cells sharing its origin.
pub fn coarsen(fine: &CompositeMap, coarse_pixel: f64, rule: CoarsenRule) -> Result<CompositeMap> {
    let ft = *fine.extent.transform();
    pixel_area_hectares(&ft)?;
    if !(coarse_pixel > ft.pixel_width && coarse_pixel > ft.pixel_height) {
        return Err(Error::InvalidArgument(format!(
            "coarse pixel {coarse_pixel} must exceed the fine pixel {}x{}",
            ft.pixel_width, ft.pixel_height
        )));
    }
    if let CoarsenRule::Fraction(f) = rule {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "fraction must be in (0, 1], got {f}"
            )));
        }
    }
    let (fw, fh) = (fine.extent.width(), fine.extent.height());
    let ct = GeoTransform {
        pixel_width: coarse_pixel,
        pixel_height: coarse_pixel,
        ..ft
    };
    let cw = ((fw as f64 * ft.pixel_width) / coarse_pixel).ceil() as usize;
    let ch = ((fh as f64 * ft.pixel_height) / coarse_pixel).ceil() as usize;
    let v = fine.extent.expect_u8("fine extent")?;
    let mut pos = vec![0u32; cw * ch];
    let mut tot = vec![0u32; cw * ch];
    for row in 0..fh {
        for col in 0..fw {
            let i = row * fw + col;
            if fine.extent.is_nodata(i) {
                continue;
            }
            let (x, y) = ft.pixel_center(row, col);
            let Some((cr, cc)) = ct.pixel_at(x, y, cw, ch) else {
                continue;
            };
            tot[cr * cw + cc] += 1;
            pos[cr * cw + cc] += (v[i] == 1) as u32;
        }
    }
    let out = pos
        .iter()
        .zip(&tot)
        .map(|(&p, &t)| match rule {
            CoarsenRule::AnyTouch => (p > 0) as u8,
            CoarsenRule::Fraction(f) => (t > 0 && p as f64 >= f * t as f64) as u8,
        })
        .collect();
    Ok(CompositeMap {
        extent: Raster::binary(cw, ch, ct, out)?,
        period: fine.period,
        buffer_radius_px: fine.buffer_radius_px,
        observation_count: None,
    })
}

/// Named lon/lat polygon for zonal statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Zone {
    pub id: String,
    pub polygon: Polygon,
}

pub const IMPACT_HEADER: [&str; 6] = [
    "zone_id",
    "class",
    "class_px",
    "flooded_px",
    "fraction",
    "hectares",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ImpactRow {
    pub zone_id: String,
    pub class: u8,
    pub class_px: u64,
    pub flooded_px: u64,
    /// flooded_px / class_px (0 when the class is absent).
    pub fraction: f64,
    /// flooded_px × pixel area.
    pub hectares: f64,
}

pub const WHOLE_GRID_ZONE: &str = "all";

/// Pixels of land-cover `class` inside the flood extent, per zone or over
/// the whole grid (zone id `all`). Zone membership uses pixel centres.
pub fn overlay_impact(
    extent: &Raster,
    land_cover_r: &Raster,
    class: u8,
    zones: Option<&[Zone]>,
) -> Result<Vec<ImpactRow>> {
    if !land_cover::is_known(class) {
        return Err(Error::UnknownClass(class));
    }
    extent.check_congruent(land_cover_r, "land cover")?;
    let ev = extent.expect_u8("extent")?;
    let lv = land_cover_r.expect_u8("land cover")?;
    let t = *extent.transform();
    let px_ha = pixel_area_hectares(&t)?;
    let row_for = |zone_id: String, member: &dyn Fn(usize) -> bool| {
        let (mut class_px, mut flooded_px) = (0u64, 0u64);
        for i in (0..lv.len()).filter(|&i| member(i)) {
            if land_cover_r.is_nodata(i) || lv[i] != class {
                continue;
            }
            class_px += 1;
            if !extent.is_nodata(i) && ev[i] == 1 {
                flooded_px += 1;
            }
        }
        ImpactRow {
            zone_id,
            class,
            class_px,
            flooded_px,
            fraction: if class_px == 0 {
                0.0
            } else {
                flooded_px as f64 / class_px as f64
            },
            hectares: flooded_px as f64 * px_ha,
        }
    };
    match zones {
        None => Ok(vec![row_for(WHOLE_GRID_ZONE.to_string(), &|_| true)]),
        Some(zones) => {
            let w = extent.width();
            let centres = (0..lv.len())
                .map(|i| {
                    let (x, y) = t.pixel_center(i / w, i % w);
                    geo::to_lon_lat(t.crs_code, x, y)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(zones
                .iter()
                .map(|z| {
                    row_for(z.id.clone(), &|i| {
                        z.polygon.contains(centres[i].0, centres[i].1)
                    })
                })
                .collect())
        }
    }
}

pub fn write_impact<W: Write>(w: W, rows: &[ImpactRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(IMPACT_HEADER)?;
    for r in rows {
        w.write_record([
            r.zone_id.clone(),
            r.class.to_string(),
            r.class_px.to_string(),
            r.flooded_px.to_string(),
            r.fraction.to_string(),
            r.hectares.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<impact>", e))?;
    Ok(())
}

pub fn read_impact<R: Read>(r: R) -> Result<Vec<ImpactRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &IMPACT_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |f: &str, e: String| Error::Parse {
            line,
            message: format!("{f}: {e}"),
        };
        out.push(ImpactRow {
            zone_id: rec[0].to_string(),
            class: rec[1]
                .parse()
                .map_err(|e: std::num::ParseIntError| bad("class", e.to_string()))?,
            class_px: rec[2]
                .parse()
                .map_err(|e: std::num::ParseIntError| bad("class_px", e.to_string()))?,
            flooded_px: rec[3]
                .parse()
                .map_err(|e: std::num::ParseIntError| bad("flooded_px", e.to_string()))?,
            fraction: rec[4]
                .parse()
                .map_err(|e: std::num::ParseFloatError| bad("fraction", e.to_string()))?,
            hectares: rec[5]
                .parse()
                .map_err(|e: std::num::ParseFloatError| bad("hectares", e.to_string()))?,
        });
    }
    Ok(out)
}

/// Empty binary raster on `grid`.
pub fn empty_extent(grid: GridSpec) -> Raster {
    Raster::filled_u8(
        grid.width,
        grid.height,
        grid.transform,
        Some(BINARY_NODATA),
        0,
    )
}
