//! Longitudinal analysis of flood extent: observation-normalized monthly
//! series, single-polarization correction, classical decomposition,
//! dummy-variable OLS trends and per-tile trend maps.

mod decompose;
mod ols;
mod tiles;

pub use decompose::{
    decompose_values, read_decomposition, seasonal_decompose, write_decomposition,
    write_decomposition_rows, Decomposition, DecompositionRow, DECOMPOSITION_HEADER,
};
pub use ols::{
    fit_trend, read_trend_report, student_t_two_sided_p, write_trend_report, write_trend_rows,
    Scenario, TrendReportRow, TrendResult, TREND_REPORT_HEADER,
};
pub use tiles::{
    land_area_from_cover, read_tile_trends, tile_trends, write_tile_rows, write_tile_trends,
    BandMode, MagnitudeClass, TileArea, TileIndex, TileTrend, TileTrendOptions, TileTrendRow,
    TILE_TRENDS_HEADER,
};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};

use crate::aggregate::DetectionRecord;
use crate::features::{select_pairs, ManifestEntry};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month {month} out of range");
        Self { year, month }
    }

    pub fn of(d: NaiveDate) -> Self {
        Self::new(d.year(), d.month())
    }

    /// Months since year 0.
    pub fn index(self) -> i64 {
        self.year as i64 * 12 + self.month as i64 - 1
    }

    pub fn from_index(i: i64) -> Self {
        Self::new(i.div_euclid(12) as i32, (i.rem_euclid(12) + 1) as u32)
    }

    pub fn offset(self, months: i64) -> Self {
        Self::from_index(self.index() + months)
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid month")
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("expected YYYY-MM, got {s:?}"));
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        let (year, month): (i32, u32) =
            (y.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?);
        if !(1..=12).contains(&month) {
            return Err(bad());
        }
        Ok(Self { year, month })
    }
}

/// Inclusive month range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonthRange {
    pub start: YearMonth,
    pub end: YearMonth,
}

impl MonthRange {
    pub fn new(start: YearMonth, end: YearMonth) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidArgument(format!(
                "month range {start}..{end} is empty"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        (self.end.index() - self.start.index() + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, m: YearMonth) -> bool {
        self.start <= m && m <= self.end
    }

    pub fn months(&self) -> impl Iterator<Item = YearMonth> {
        let s = self.start.index();
        (s..=self.end.index()).map(YearMonth::from_index)
    }
}

/// Observation-normalized monthly flood extent.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthlySeries {
    pub months: Vec<YearMonth>,
    /// Hectares of unfiltered detections per month.
    pub flooded_area: Vec<f64>,
    /// Scene-pair evaluations per month.
    pub observation_count: Vec<u32>,
    /// flooded_area / observation_count; `None` marks a month without observations.
    pub normalized: Vec<Option<f64>>,
    /// Fraction of the month's observations that were single-polarization.
    pub single_pol_fraction: Vec<f64>,
    /// Part of `flooded_area` contributed by single-polarization observations.
    pub single_pol_area: Vec<f64>,
    pub single_pol_count: Vec<u32>,
    /// Scale applied to single-polarization contributions, once corrected.
    pub correction_factor: Option<f64>,
}

impl MonthlySeries {
    pub fn len(&self) -> usize {
        self.months.len()
    }

    pub fn is_empty(&self) -> bool {
        self.months.is_empty()
    }

    /// A fully observed dual-polarization series with one observation per
    /// month whose normalized values are `values`.
    pub fn from_values(start: YearMonth, values: &[f64]) -> Self {
        let n = values.len();
        Self {
            months: (0..n as i64).map(|k| start.offset(k)).collect(),
            flooded_area: values.to_vec(),
            observation_count: vec![1; n],
            normalized: values.iter().copied().map(Some).collect(),
            single_pol_fraction: vec![0.0; n],
            single_pol_area: vec![0.0; n],
            single_pol_count: vec![0; n],
            correction_factor: None,
        }
    }

    fn renormalize(&mut self) {
        for k in 0..self.len() {
            let c = self.observation_count[k];
            self.normalized[k] = (c > 0).then(|| self.flooded_area[k] / c as f64);
            self.single_pol_fraction[k] = if c > 0 {
                self.single_pol_count[k] as f64 / c as f64
            } else {
                0.0
            };
        }
    }
}

/// Scene-pair evaluation used for observation counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub date: NaiveDate,
    pub scene_id: String,
    pub dual_pol: bool,
    /// (lon0, lat0, lon1, lat1); `None` means the observation covers every tile.
    pub footprint: Option<(f64, f64, f64, f64)>,
}

/// Accumulates observations and detected areas into a [`MonthlySeries`].
#[derive(Debug, Clone)]
pub struct SeriesBuilder {
    range: MonthRange,
    area: Vec<f64>,
    single_area: Vec<f64>,
    count: Vec<u32>,
    single_count: Vec<u32>,
}

impl SeriesBuilder {
    pub fn new(range: MonthRange) -> Self {
        let n = range.len();
        Self {
            range,
            area: vec![0.0; n],
            single_area: vec![0.0; n],
            count: vec![0; n],
            single_count: vec![0; n],
        }
    }

    fn slot(&self, d: NaiveDate) -> Option<usize> {
        let m = YearMonth::of(d);
        self.range
            .contains(m)
            .then(|| (m.index() - self.range.start.index()) as usize)
    }

    pub fn add_observation(&mut self, date: NaiveDate, dual_pol: bool) {
        if let Some(k) = self.slot(date) {
            self.count[k] += 1;
            if !dual_pol {
                self.single_count[k] += 1;
            }
        }
    }

    pub fn add_area(&mut self, date: NaiveDate, hectares: f64, dual_pol: bool) {
        if let Some(k) = self.slot(date) {
            self.area[k] += hectares;
            if !dual_pol {
                self.single_area[k] += hectares;
            }
        }
    }

    pub fn finish(self) -> MonthlySeries {
        let n = self.range.len();
        let mut s = MonthlySeries {
            months: self.range.months().collect(),
            flooded_area: self.area,
            observation_count: self.count,
            normalized: vec![None; n],
            single_pol_fraction: vec![0.0; n],
            single_pol_area: self.single_area,
            single_pol_count: self.single_count,
            correction_factor: None,
        };
        s.renormalize();
        s
    }
}

/// One observation per admissible scene pair of a manifest, dated and named
/// after the post-event scene. A pair is dual-polarization only when both
/// scenes are.
pub fn observations_from_manifest(entries: &[ManifestEntry]) -> Vec<Observation> {
    let metas: Vec<_> = entries.iter().map(ManifestEntry::meta).collect();
    select_pairs(&metas)
        .into_iter()
        .map(|(pre, post)| Observation {
            date: metas[post].acquisition_time.date_naive(),
            scene_id: metas[post].scene_id.clone(),
            dual_pol: metas[pre].is_dual_pol() && metas[post].is_dual_pol(),
            footprint: None,
        })
        .collect()
}

/// Month range spanning all observations.
pub fn observation_range(observations: &[Observation]) -> Result<MonthRange> {
    let min = observations.iter().map(|o| YearMonth::of(o.date)).min();
    let max = observations.iter().map(|o| YearMonth::of(o.date)).max();
    match (min, max) {
        (Some(a), Some(b)) => MonthRange::new(a, b),
        _ => Err(Error::InsufficientData("no observations".into())),
    }
}

/// Monthly series from detection records. Only unfiltered records count,
/// each contributing `pixel_area_ha`. A record's polarization mode comes from
/// its scene's observation (by `scene_id`), falling back to whether it
/// carries a VH delta.
pub fn build_series(
    records: &[DetectionRecord],
    observations: &[Observation],
    pixel_area_ha: f64,
    range: Option<MonthRange>,
) -> Result<MonthlySeries> {
    let range = match range {
        Some(r) => r,
        None => observation_range(observations)?,
    };
    let mut b = SeriesBuilder::new(range);
    let mut dual_by_scene: HashMap<&str, bool> = HashMap::new();
    for o in observations {
        b.add_observation(o.date, o.dual_pol);
        dual_by_scene.insert(&o.scene_id, o.dual_pol);
    }
    for r in records.iter().filter(|r| !r.filtered) {
        let dual = dual_by_scene
            .get(r.scene_id.as_str())
            .copied()
            .unwrap_or(r.is_dual_pol());
        b.add_area(r.date, pixel_area_ha, dual);
    }
    Ok(b.finish())
}

/// Rescales single-polarization contributions by the ratio of the pooled
/// dual- to single-polarization detection rates (area per observation) over
/// `window`. A series without single-polarization observations is returned
/// unchanged.
pub fn polarization_correction(s: &MonthlySeries, window: MonthRange) -> Result<MonthlySeries> {
    if s.single_pol_count.iter().all(|&c| c == 0) {
        return Ok(s.clone());
    }
    let (mut dual_area, mut dual_n, mut single_area, mut single_n) = (0.0, 0u64, 0.0, 0u64);
    for k in (0..s.len()).filter(|&k| window.contains(s.months[k])) {
        single_area += s.single_pol_area[k];
        single_n += s.single_pol_count[k] as u64;
        dual_area += s.flooded_area[k] - s.single_pol_area[k];
        dual_n += (s.observation_count[k] - s.single_pol_count[k]) as u64;
    }
    if dual_n == 0 || single_n == 0 {
        return Err(Error::InsufficientData(format!(
            "calibration window {}..{} needs both single- and dual-polarization observations",
            window.start, window.end
        )));
    }
    let single_rate = single_area / single_n as f64;
    if single_rate <= 0.0 {
        return Err(Error::InsufficientData(
            "single-polarization detection rate is zero".into(),
        ));
    }
    let factor = (dual_area / dual_n as f64) / single_rate;
    let mut out = s.clone();
    for k in 0..out.len() {
        let extra = (factor - 1.0) * out.single_pol_area[k];
        out.flooded_area[k] += extra;
        out.single_pol_area[k] *= factor;
    }
    out.renormalize();
    out.correction_factor = Some(factor * s.correction_factor.unwrap_or(1.0));
    Ok(out)
}
