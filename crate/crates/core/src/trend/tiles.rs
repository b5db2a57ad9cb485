use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;

use super::{
    fit_trend, observation_range, MonthRange, Observation, Scenario, SeriesBuilder, YearMonth,
};
use crate::aggregate::DetectionRecord;
use crate::geo::{self, spherical_cell_area_ha};
use crate::metrics::{check_header, fmt_opt, parse_opt};
use crate::postproc::land_cover;
use crate::raster::Raster;
use crate::{Error, Result};

/// Index of a `tile_deg × tile_deg` lon/lat cell; the cell's south-west
/// corner is `(lon × tile_deg, lat × tile_deg)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TileIndex {
    pub lon: i32,
    pub lat: i32,
}

impl TileIndex {
    pub fn of(lon: f64, lat: f64, tile_deg: f64) -> Self {
        Self {
            lon: (lon / tile_deg).floor() as i32,
            lat: (lat / tile_deg).floor() as i32,
        }
    }

    pub fn south_west(self, tile_deg: f64) -> (f64, f64) {
        (self.lon as f64 * tile_deg, self.lat as f64 * tile_deg)
    }

    fn overlaps(self, tile_deg: f64, (lon0, lat0, lon1, lat1): (f64, f64, f64, f64)) -> bool {
        let (x0, y0) = self.south_west(tile_deg);
        lon0 < x0 + tile_deg && lon1 >= x0 && lat0 < y0 + tile_deg && lat1 >= y0
    }
}

/// How per-tile net change is expressed against the land area.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandMode {
    /// |slope| × fitted months: change accumulated over the fitted period.
    OverPeriod,
    /// |slope|: change per month.
    PerMonth,
}

impl FromStr for BandMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "over_period" => Ok(BandMode::OverPeriod),
            "per_month" => Ok(BandMode::PerMonth),
            _ => Err(Error::InvalidArgument(format!("unknown band mode {s:?}"))),
        }
    }
}

impl fmt::Display for BandMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BandMode::OverPeriod => "over_period",
            BandMode::PerMonth => "per_month",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileTrendOptions {
    pub tile_deg: f64,
    pub p_cutoff: f64,
    /// Percent of tile land area.
    pub moderate_band: f64,
    pub large_band: f64,
    pub band_mode: BandMode,
    pub scenario: Scenario,
    /// Month grid; defaults to the span of the observations.
    pub range: Option<MonthRange>,
    /// Hectares per detection record.
    pub pixel_area_ha: f64,
}

impl Default for TileTrendOptions {
    fn default() -> Self {
        Self {
            tile_deg: 3.0,
            p_cutoff: 0.2,
            moderate_band: 1.0,
            large_band: 2.0,
            band_mode: BandMode::OverPeriod,
            scenario: Scenario::All,
            range: None,
            pixel_area_ha: 0.04,
        }
    }
}

impl TileTrendOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.tile_deg > 0.0 && self.tile_deg <= 180.0) {
            return bad(format!(
                "tile_deg must be in (0, 180], got {}",
                self.tile_deg
            ));
        }
        if !(0.0..=1.0).contains(&self.p_cutoff) {
            return bad(format!("p_cutoff must be in [0, 1], got {}", self.p_cutoff));
        }
        if !(self.moderate_band >= 0.0 && self.moderate_band <= self.large_band) {
            return bad(format!(
                "bands must satisfy 0 <= moderate ({}) <= large ({})",
                self.moderate_band, self.large_band
            ));
        }
        if self.pixel_area_ha.is_nan() || self.pixel_area_ha <= 0.0 {
            return bad(format!(
                "pixel_area_ha must be positive, got {}",
                self.pixel_area_ha
            ));
        }
        Ok(())
    }
}

/// Land area per tile in hectares.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum TileArea {
    /// Full spherical tile area; results are flagged.
    #[default]
    Full,
    /// Measured land area; tiles absent from the map fall back to the full area.
    Land(HashMap<TileIndex, f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MagnitudeClass {
    LargeIncrease,
    ModerateIncrease,
    ModerateDecrease,
    LargeDecrease,
    Filtered,
}

impl MagnitudeClass {
    pub fn label(self) -> &'static str {
        match self {
            MagnitudeClass::LargeIncrease => "large_increase",
            MagnitudeClass::ModerateIncrease => "moderate_increase",
            MagnitudeClass::ModerateDecrease => "moderate_decrease",
            MagnitudeClass::LargeDecrease => "large_decrease",
            MagnitudeClass::Filtered => "filtered",
        }
    }
}

impl fmt::Display for MagnitudeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MagnitudeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use MagnitudeClass::*;
        [
            LargeIncrease,
            ModerateIncrease,
            ModerateDecrease,
            LargeDecrease,
            Filtered,
        ]
        .into_iter()
        .find(|c| c.label() == s)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown magnitude class {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileTrend {
    pub tile: TileIndex,
    /// South-west corner, degrees.
    pub tile_lon: f64,
    pub tile_lat: f64,
    /// `None` when the tile's series could not be fitted.
    pub slope: Option<f64>,
    pub p_value: Option<f64>,
    pub net_change_pct: Option<f64>,
    pub class: MagnitudeClass,
    pub land_area_ha: f64,
    /// Land area is the full tile area because no land-cover area was known.
    pub full_tile_area: bool,
}

fn classify(slope: f64, p: f64, pct: f64, o: &TileTrendOptions) -> MagnitudeClass {
    if p > o.p_cutoff || pct < o.moderate_band || slope == 0.0 {
        return MagnitudeClass::Filtered;
    }
    match (slope > 0.0, pct >= o.large_band) {
        (true, true) => MagnitudeClass::LargeIncrease,
        (true, false) => MagnitudeClass::ModerateIncrease,
        (false, false) => MagnitudeClass::ModerateDecrease,
        (false, true) => MagnitudeClass::LargeDecrease,
    }
}

/// Per-tile trends. Tiles are those holding at least one record or touched
/// by an observation footprint; observations without a footprint count for
/// every tile. Tiles whose series cannot be fitted are reported as filtered.
pub fn tile_trends(
    records: &[DetectionRecord],
    observations: &[Observation],
    opts: &TileTrendOptions,
    area: &TileArea,
) -> Result<Vec<TileTrend>> {
    opts.validate()?;
    let deg = opts.tile_deg;
    let mut tiles: BTreeSet<TileIndex> = records
        .iter()
        .map(|r| TileIndex::of(r.lon, r.lat, deg))
        .collect();
    for fp in observations.iter().filter_map(|o| o.footprint) {
        let (a, b) = (
            TileIndex::of(fp.0, fp.1, deg),
            TileIndex::of(fp.2, fp.3, deg),
        );
        for lon in a.lon..=b.lon {
            for lat in a.lat..=b.lat {
                tiles.insert(TileIndex { lon, lat });
            }
        }
    }
    if tiles.is_empty() {
        return Ok(Vec::new());
    }
    let range = match opts.range {
        Some(r) => r,
        None => match observation_range(observations) {
            Ok(r) => r,
            Err(_) => {
                let lo = records
                    .iter()
                    .map(|r| YearMonth::of(r.date))
                    .min()
                    .expect("records present");
                let hi = records
                    .iter()
                    .map(|r| YearMonth::of(r.date))
                    .max()
                    .expect("records present");
                MonthRange::new(lo, hi)?
            }
        },
    };

    let mut by_tile: HashMap<TileIndex, Vec<&DetectionRecord>> = HashMap::new();
    for r in records.iter().filter(|r| !r.filtered) {
        by_tile
            .entry(TileIndex::of(r.lon, r.lat, deg))
            .or_default()
            .push(r);
    }
    let dual_by_scene: HashMap<&str, bool> = observations
        .iter()
        .map(|o| (o.scene_id.as_str(), o.dual_pol))
        .collect();

    let tiles: Vec<TileIndex> = tiles.into_iter().collect();
    Ok(tiles
        .par_iter()
        .map(|&tile| {
            let mut b = SeriesBuilder::new(range);
            for o in observations
                .iter()
                .filter(|o| o.footprint.is_none_or(|fp| tile.overlaps(deg, fp)))
            {
                b.add_observation(o.date, o.dual_pol);
            }
            for r in by_tile.get(&tile).into_iter().flatten() {
                let dual = dual_by_scene
                    .get(r.scene_id.as_str())
                    .copied()
                    .unwrap_or(r.is_dual_pol());
                b.add_area(r.date, opts.pixel_area_ha, dual);
            }
            let (lon0, lat0) = tile.south_west(deg);
            let measured = match area {
                TileArea::Land(m) => m.get(&tile).copied(),
                TileArea::Full => None,
            };
            let land_area_ha = measured
                .unwrap_or_else(|| spherical_cell_area_ha(lon0, lon0 + deg, lat0, lat0 + deg));
            let mut out = TileTrend {
                tile,
                tile_lon: lon0,
                tile_lat: lat0,
                slope: None,
                p_value: None,
                net_change_pct: None,
                class: MagnitudeClass::Filtered,
                land_area_ha,
                full_tile_area: measured.is_none(),
            };
            if let Ok(fit) = fit_trend(&b.finish(), opts.scenario) {
                let months = match opts.band_mode {
                    BandMode::OverPeriod => fit.n_months as f64,
                    BandMode::PerMonth => 1.0,
                };
                let pct = if land_area_ha > 0.0 {
                    100.0 * fit.slope.abs() * months / land_area_ha
                } else {
                    0.0
                };
                out.class = classify(fit.slope, fit.p_value, pct, opts);
                out.slope = Some(fit.slope);
                out.p_value = Some(fit.p_value);
                out.net_change_pct = Some(pct);
            }
            out
        })
        .collect())
}

/// Land area per tile from a land-cover raster: valid pixels other than
/// permanent water, each assigned to the tile holding its centre.
pub fn land_area_from_cover(lc: &Raster, tile_deg: f64) -> Result<HashMap<TileIndex, f64>> {
    let codes = lc.expect_u8("land cover")?;
    let t = *lc.transform();
    let metric_area = (!geo::is_geographic(t.crs_code))
        .then(|| t.pixel_area_hectares())
        .transpose()?;
    let mut out: HashMap<TileIndex, f64> = HashMap::new();
    for (i, &code) in codes.iter().enumerate() {
        if lc.is_nodata(i) || code == land_cover::PERMANENT_WATER {
            continue;
        }
        let (row, col) = (i / lc.width(), i % lc.width());
        let (x, y) = t.pixel_center(row, col);
        let (lon, lat) = geo::to_lon_lat(t.crs_code, x, y)?;
        let ha = match metric_area {
            Some(a) => a,
            None => {
                let (x0, y0) = t.pixel_to_world(col as f64, row as f64);
                let (x1, y1) = t.pixel_to_world(col as f64 + 1.0, row as f64 + 1.0);
                spherical_cell_area_ha(x0, x1, y0, y1)
            }
        };
        *out.entry(TileIndex::of(lon, lat, tile_deg)).or_default() += ha;
    }
    Ok(out)
}

pub const TILE_TRENDS_HEADER: [&str; 5] = ["tile_lon", "tile_lat", "slope", "p_value", "class"];

pub fn write_tile_trends<W: Write>(w: W, tiles: &[TileTrend]) -> Result<()> {
    let rows: Vec<TileTrendRow> = tiles.iter().map(TileTrendRow::from).collect();
    write_tile_rows(w, &rows)
}

pub fn write_tile_rows<W: Write>(w: W, rows: &[TileTrendRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TILE_TRENDS_HEADER)?;
    for t in rows {
        out.write_record([
            t.tile_lon.to_string(),
            t.tile_lat.to_string(),
            fmt_opt(t.slope),
            fmt_opt(t.p_value),
            t.class.label().to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<tile trends>", e))?;
    Ok(())
}

/// A `tile_trends.csv` row.
#[derive(Debug, Clone, PartialEq)]
pub struct TileTrendRow {
    pub tile_lon: f64,
    pub tile_lat: f64,
    pub slope: Option<f64>,
    pub p_value: Option<f64>,
    pub class: MagnitudeClass,
}

impl From<&TileTrend> for TileTrendRow {
    fn from(t: &TileTrend) -> Self {
        Self {
            tile_lon: t.tile_lon,
            tile_lat: t.tile_lat,
            slope: t.slope,
            p_value: t.p_value,
            class: t.class,
        }
    }
}

pub fn read_tile_trends<R: Read>(r: R) -> Result<Vec<TileTrendRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &TILE_TRENDS_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let req = |i: usize| -> Result<f64> {
            parse_opt(&rec[i], line, TILE_TRENDS_HEADER[i])?.ok_or_else(|| Error::Parse {
                line,
                message: format!("{} is required", TILE_TRENDS_HEADER[i]),
            })
        };
        out.push(TileTrendRow {
            tile_lon: req(0)?,
            tile_lat: req(1)?,
            slope: parse_opt(&rec[2], line, "slope")?,
            p_value: parse_opt(&rec[3], line, "p_value")?,
            class: rec[4].parse().map_err(|e: Error| Error::Parse {
                line,
                message: e.to_string(),
            })?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn rec(lon: f64, lat: f64, date: NaiveDate) -> DetectionRecord {
        DetectionRecord {
            lon,
            lat,
            date,
            scene_id: format!("s{date}"),
            delta_vv: Some(-8.0),
            delta_vh: Some(-8.0),
            soil_moisture: None,
            elevation: None,
            slope: None,
            temperature: None,
            land_cover: None,
            filtered: false,
            removal_reason: 0,
        }
    }

    /// Monthly observations plus `count(t, month)` records per month in a
    /// tile at (1.5, 1.5) and `other(t)` in a tile at (4.5, 1.5).
    fn fixture(count: impl Fn(usize, u32) -> usize) -> (Vec<DetectionRecord>, Vec<Observation>) {
        let start = YearMonth::new(2015, 1);
        let mut recs = Vec::new();
        let mut obs = Vec::new();
        for t in 0..72 {
            let m = start.offset(t as i64);
            let date = m.first_day();
            obs.push(Observation {
                date,
                scene_id: format!("s{date}"),
                dual_pol: true,
                footprint: None,
            });
            recs.extend((0..count(t, m.month)).map(|_| rec(1.5, 1.5, date)));
        }
        (recs, obs)
    }

    fn land(area: f64) -> TileArea {
        TileArea::Land([(TileIndex { lon: 0, lat: 0 }, area)].into_iter().collect())
    }

    #[test]
    fn strong_trend_is_large_increase() {
        let (recs, obs) = fixture(|t, m| 100 + 10 * t + (m as usize % 3));
        let opts = TileTrendOptions {
            pixel_area_ha: 1.0,
            ..Default::default()
        };
        let out = tile_trends(&recs, &obs, &opts, &land(10_000.0)).unwrap();
        assert_eq!(out.len(), 1);
        let t = &out[0];
        assert_eq!(t.class, MagnitudeClass::LargeIncrease);
        assert!(!t.full_tile_area);
        assert!((t.slope.unwrap() - 10.0).abs() < 0.1);
        // 10 ha/month × 72 months / 10 000 ha = 7.2%.
        assert!((t.net_change_pct.unwrap() - 7.2).abs() < 0.1);
    }

    #[test]
    fn bands_and_direction() {
        // 2 ha/month over 72 months on 10 000 ha: 1.44%, moderate.
        let (recs, obs) = fixture(|t, m| 500 - 2 * t + (m as usize % 3));
        let opts = TileTrendOptions {
            pixel_area_ha: 1.0,
            ..Default::default()
        };
        let out = tile_trends(&recs, &obs, &opts, &land(10_000.0)).unwrap();
        assert_eq!(out[0].class, MagnitudeClass::ModerateDecrease);
        let per_month = TileTrendOptions {
            band_mode: BandMode::PerMonth,
            ..opts
        };
        let out = tile_trends(&recs, &obs, &per_month, &land(10_000.0)).unwrap();
        assert_eq!(out[0].class, MagnitudeClass::Filtered);
    }

    #[test]
    fn seasonal_only_and_empty_are_filtered() {
        let (recs, obs) = fixture(|t, m| {
            // Pure seasonal signal with a small deterministic wobble.
            50 + [0, 5, 20, 40, 30, 10, 0, 0, 5, 10, 5, 0][m as usize - 1] + (t * 37 % 5)
        });
        let opts = TileTrendOptions {
            pixel_area_ha: 1.0,
            ..Default::default()
        };
        let out = tile_trends(&recs, &obs, &opts, &land(10_000.0)).unwrap();
        assert_eq!(out[0].class, MagnitudeClass::Filtered);
        assert!(out[0].p_value.unwrap() > 0.2);

        // An observed tile with no detections.
        let mut obs = obs;
        obs[0].footprint = Some((10.0, 10.0, 10.5, 10.5));
        let out = tile_trends(&[], &obs, &opts, &TileArea::Full).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].class, MagnitudeClass::Filtered);
        assert!(out[0].full_tile_area);
        assert!(tile_trends(&[], &[], &opts, &TileArea::Full)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn tile_index_floor() {
        assert_eq!(
            TileIndex::of(-0.1, 2.99, 3.0),
            TileIndex { lon: -1, lat: 0 }
        );
        assert_eq!(TileIndex::of(3.0, -3.0, 3.0), TileIndex { lon: 1, lat: -1 });
    }

    #[test]
    fn csv_round_trip() {
        let (recs, obs) = fixture(|t, _| 10 + t);
        let out = tile_trends(&recs, &obs, &TileTrendOptions::default(), &TileArea::Full).unwrap();
        let mut buf = Vec::new();
        write_tile_trends(&mut buf, &out).unwrap();
        let back = read_tile_trends(&buf[..]).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].tile_lon, 0.0);
        assert_eq!(back[0].class, out[0].class);
        let mut again = Vec::new();
        write_tile_rows(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }
}
