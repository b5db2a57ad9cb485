//! Validation metrics and overlap statistics against reference water layers.

use std::io::{Read, Write};

use crate::raster::{Raster, BINARY_NODATA};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    #[inline]
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
}

impl Scores {
    /// Zero-denominator conventions: precision (recall) is 1.0 when the
    /// other side is also empty and 0.0 otherwise; F1 is 0 when P + R = 0;
    /// IoU is 1.0 when there are no positives anywhere.
    pub fn from_counts(c: &ConfusionCounts) -> Self {
        let (tp, fp, fn_) = (c.tp as f64, c.fp as f64, c.fn_ as f64);
        let truth_empty = c.tp + c.fn_ == 0;
        let pred_empty = c.tp + c.fp == 0;
        let precision = if pred_empty {
            if truth_empty {
                1.0
            } else {
                0.0
            }
        } else {
            tp / (tp + fp)
        };
        let recall = if truth_empty {
            if pred_empty {
                1.0
            } else {
                0.0
            }
        } else {
            tp / (tp + fn_)
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let union = c.tp + c.fp + c.fn_;
        let iou = if union == 0 { 1.0 } else { tp / union as f64 };
        Self {
            precision,
            recall,
            f1,
            iou,
        }
    }
}

fn binary<'a>(r: &'a Raster, what: &str) -> Result<&'a [u8]> {
    let v = r.expect_u8(what)?;
    if let Some(i) = (0..v.len()).find(|&i| !r.is_nodata(i) && v[i] > 1) {
        return Err(Error::InvalidRaster(format!(
            "{what} pixel {i} is {} (expected 0/1)",
            v[i]
        )));
    }
    Ok(v)
}

/// Pixels usable for comparison: not nodata in any input and not ignored.
fn evaluated(rasters: &[&Raster], ignore: Option<&Raster>) -> Result<Vec<bool>> {
    let first = rasters[0];
    for r in &rasters[1..] {
        first.check_congruent(r, "comparison grids")?;
    }
    let ign = match ignore {
        Some(m) => {
            first.check_congruent(m, "ignore mask")?;
            Some(binary(m, "ignore mask")?)
        }
        None => None,
    };
    Ok((0..first.len())
        .map(|i| rasters.iter().all(|r| !r.is_nodata(i)) && ign.is_none_or(|m| m[i] != 1))
        .collect())
}

pub fn confusion(
    pred: &Raster,
    truth: &Raster,
    ignore: Option<&Raster>,
) -> Result<ConfusionCounts> {
    let keep = evaluated(&[pred, truth], ignore)?;
    let (p, t) = (binary(pred, "prediction")?, binary(truth, "truth")?);
    let mut c = ConfusionCounts::default();
    for i in (0..p.len()).filter(|&i| keep[i]) {
        c.add(p[i] == 1, t[i] == 1);
    }
    Ok(c)
}

/// Precision, recall, F1 and IoU of `pred` against `truth`; pixels where
/// `ignore` is 1, or either input is nodata, are not counted.
pub fn compare_metrics(pred: &Raster, truth: &Raster, ignore: Option<&Raster>) -> Result<Scores> {
    Ok(Scores::from_counts(&confusion(pred, truth, ignore)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GswOptions {
    pub threshold_pct: f64,
    /// Treat 0% occurrence (never observed as water) as flood-prone.
    pub include_zero: bool,
}

impl Default for GswOptions {
    fn default() -> Self {
        Self {
            threshold_pct: 50.0,
            include_zero: false,
        }
    }
}

/// Flood-prone pixels of a water-occurrence percentage layer: occurrence
/// strictly below the threshold, and above zero unless `include_zero`.
pub fn gsw_flood_prone(occurrence: &Raster, opts: GswOptions) -> Result<Raster> {
    let out = (0..occurrence.len())
        .map(|i| match occurrence.value(i) {
            None => Ok(BINARY_NODATA),
            Some(v) if !(0.0..=100.0).contains(&v) => Err(Error::InvalidRaster(format!(
                "occurrence {v} at pixel {i} outside [0, 100]"
            ))),
            Some(v) => Ok(((v > 0.0 || opts.include_zero) && v < opts.threshold_pct) as u8),
        })
        .collect::<Result<Vec<u8>>>()?;
    Raster::binary(
        occurrence.width(),
        occurrence.height(),
        *occurrence.transform(),
        out,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapStats {
    /// |ours ∩ reference| / |reference|
    pub detection_rate: f64,
    /// Same, restricted to pixels outside the exclusion mask (numerator and
    /// denominator). `None` when no exclusion mask was given.
    pub detection_rate_outside_mask: Option<f64>,
}

fn rate(
    ours: &[u8],
    reference: &[u8],
    keep: impl Fn(usize) -> bool,
    what: &'static str,
) -> Result<f64> {
    let (mut hit, mut total) = (0u64, 0u64);
    for i in (0..reference.len()).filter(|&i| keep(i) && reference[i] == 1) {
        total += 1;
        hit += (ours[i] == 1) as u64;
    }
    if total == 0 {
        return Err(Error::UndefinedRate(what));
    }
    Ok(hit as f64 / total as f64)
}

pub fn overlap_stats(
    ours: &Raster,
    reference: &Raster,
    exclusion: Option<&Raster>,
) -> Result<OverlapStats> {
    let keep = evaluated(&[ours, reference], None)?;
    let (o, r) = (binary(ours, "ours")?, binary(reference, "reference")?);
    let detection_rate = rate(o, r, |i| keep[i], "reference layer has no positive pixels")?;
    let detection_rate_outside_mask = match exclusion {
        Some(m) => {
            ours.check_congruent(m, "exclusion mask")?;
            let mv = binary(m, "exclusion mask")?;
            Some(rate(
                o,
                r,
                |i| keep[i] && mv[i] == 0,
                "no reference pixels outside the exclusion mask",
            )?)
        }
        None => None,
    };
    Ok(OverlapStats {
        detection_rate,
        detection_rate_outside_mask,
    })
}

/// `100 * |ours \ union(refs)| / |union(refs)|`.
pub fn new_area_pct(ours: &Raster, refs: &[&Raster]) -> Result<f64> {
    if refs.is_empty() {
        return Err(Error::UndefinedRate("no reference layers"));
    }
    let mut all = vec![ours];
    all.extend_from_slice(refs);
    let keep = evaluated(&all, None)?;
    let o = binary(ours, "ours")?;
    let rs = refs
        .iter()
        .map(|r| binary(r, "reference"))
        .collect::<Result<Vec<_>>>()?;
    let (mut union, mut extra) = (0u64, 0u64);
    for i in (0..o.len()).filter(|&i| keep[i]) {
        if rs.iter().any(|r| r[i] == 1) {
            union += 1;
        } else if o[i] == 1 {
            extra += 1;
        }
    }
    if union == 0 {
        return Err(Error::UndefinedRate("reference union is empty"));
    }
    Ok(100.0 * extra as f64 / union as f64)
}

pub const COMPARISON_HEADER: [&str; 6] = [
    "region_id",
    "new_area_pct",
    "rate_gsw",
    "rate_gsw_unmasked",
    "rate_modis",
    "rate_modis_unmasked",
];

/// One row of `comparison_report.csv`. Rates are fractions in [0, 1];
/// `*_unmasked` are the rates over pixels outside the exclusion mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub region_id: String,
    pub new_area_pct: f64,
    pub rate_gsw: Option<f64>,
    pub rate_gsw_unmasked: Option<f64>,
    pub rate_modis: Option<f64>,
    pub rate_modis_unmasked: Option<f64>,
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn parse_opt(s: &str, line: usize, field: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|e| Error::Parse {
        line,
        message: format!("{field}: {e}"),
    })
}

pub(crate) fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?;
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    Ok(())
}

pub fn write_comparison_report<W: Write>(w: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(COMPARISON_HEADER)?;
    for r in rows {
        w.write_record([
            r.region_id.clone(),
            r.new_area_pct.to_string(),
            fmt_opt(r.rate_gsw),
            fmt_opt(r.rate_gsw_unmasked),
            fmt_opt(r.rate_modis),
            fmt_opt(r.rate_modis_unmasked),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<comparison report>", e))?;
    Ok(())
}

pub fn read_comparison_report<R: Read>(r: R) -> Result<Vec<ComparisonRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &COMPARISON_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        out.push(ComparisonRow {
            region_id: rec[0].to_string(),
            new_area_pct: parse_opt(&rec[1], line, "new_area_pct")?.ok_or_else(|| {
                Error::Parse {
                    line,
                    message: "new_area_pct is required".into(),
                }
            })?,
            rate_gsw: parse_opt(&rec[2], line, "rate_gsw")?,
            rate_gsw_unmasked: parse_opt(&rec[3], line, "rate_gsw_unmasked")?,
            rate_modis: parse_opt(&rec[4], line, "rate_modis")?,
            rate_modis_unmasked: parse_opt(&rec[5], line, "rate_modis_unmasked")?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::GeoTransform;

    fn gt() -> GeoTransform {
        GeoTransform::new(0.0, 0.0, 20.0, 20.0, 3857).unwrap()
    }

    fn bin(v: Vec<u8>) -> Raster {
        Raster::binary(v.len(), 1, gt(), v).unwrap()
    }

    #[test]
    fn perfect_and_half_overlap() {
        let t = bin(vec![1, 1, 0, 0]);
        let s = compare_metrics(&t, &t, None).unwrap();
        assert_eq!((s.precision, s.recall, s.f1, s.iou), (1.0, 1.0, 1.0, 1.0));

        let c = ConfusionCounts {
            tp: 50,
            fp: 50,
            fn_: 50,
            tn: 0,
        };
        let s = Scores::from_counts(&c);
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
        assert_eq!(s.iou, 1.0 / 3.0);
    }

    #[test]
    fn degenerate_conventions() {
        let s = compare_metrics(&bin(vec![0, 0]), &bin(vec![1, 0]), None).unwrap();
        assert_eq!((s.precision, s.recall, s.f1, s.iou), (0.0, 0.0, 0.0, 0.0));
        let s = compare_metrics(&bin(vec![0, 0]), &bin(vec![0, 0]), None).unwrap();
        assert_eq!((s.precision, s.recall, s.f1, s.iou), (1.0, 1.0, 1.0, 1.0));
        let s = compare_metrics(&bin(vec![1, 0]), &bin(vec![0, 0]), None).unwrap();
        assert_eq!((s.precision, s.recall, s.f1, s.iou), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn ignore_and_nodata_excluded() {
        let pred = bin(vec![1, 1, 255, 0]);
        let truth = bin(vec![1, 0, 1, 1]);
        let ign = bin(vec![0, 1, 0, 0]);
        let c = confusion(&pred, &truth, Some(&ign)).unwrap();
        assert_eq!(
            c,
            ConfusionCounts {
                tp: 1,
                fp: 0,
                fn_: 1,
                tn: 0
            }
        );
    }

    #[test]
    fn gsw_rule() {
        let occ = Raster::from_f32(4, 1, gt(), None, vec![30.0, 80.0, 0.0, 50.0]).unwrap();
        assert_eq!(
            gsw_flood_prone(&occ, GswOptions::default())
                .unwrap()
                .as_u8()
                .unwrap(),
            &[1, 0, 0, 0]
        );
        let incl = GswOptions {
            include_zero: true,
            ..Default::default()
        };
        assert_eq!(
            gsw_flood_prone(&occ, incl).unwrap().as_u8().unwrap(),
            &[1, 0, 1, 0]
        );
        let bad = Raster::from_f32(1, 1, gt(), None, vec![101.0]).unwrap();
        assert!(gsw_flood_prone(&bad, GswOptions::default()).is_err());
    }

    #[test]
    fn overlap_counting_grid() {
        // 200 pixels: 100 reference, 35 of them detected; mask covers 20
        // reference pixels, 7 of which are detected.
        let n = 200;
        let mut reference = vec![0u8; n];
        let mut ours = vec![0u8; n];
        let mut mask = vec![0u8; n];
        reference[..100].fill(1);
        ours[..35].fill(1);
        mask[..7].fill(1);
        mask[35..48].fill(1);
        ours[150..160].fill(1);
        let st = overlap_stats(
            &bin(ours.clone()),
            &bin(reference.clone()),
            Some(&bin(mask)),
        )
        .unwrap();
        assert_eq!(st.detection_rate, 0.35);
        assert_eq!(st.detection_rate_outside_mask, Some(28.0 / 80.0));
        assert!(overlap_stats(&bin(ours), &bin(vec![0; n]), None).is_err());
        assert_eq!(
            overlap_stats(&bin(reference.clone()), &bin(reference), None)
                .unwrap()
                .detection_rate,
            1.0
        );
    }

    #[test]
    fn new_area_examples() {
        let mut union = vec![0u8; 300];
        union[..100].fill(1);
        let mut ours = union.clone();
        assert_eq!(
            new_area_pct(&bin(ours.clone()), &[&bin(union.clone())]).unwrap(),
            0.0
        );
        ours[100..171].fill(1);
        assert_eq!(
            new_area_pct(&bin(ours), &[&bin(union.clone())]).unwrap(),
            71.0
        );
        let mut sub = vec![0u8; 300];
        sub[..10].fill(1);
        assert_eq!(new_area_pct(&bin(sub), &[&bin(union)]).unwrap(), 0.0);
        assert!(new_area_pct(&bin(vec![1; 3]), &[&bin(vec![0; 3])]).is_err());
        assert!(new_area_pct(&bin(vec![1; 3]), &[]).is_err());
    }

    #[test]
    fn report_round_trip() {
        let rows = vec![ComparisonRow {
            region_id: "global".into(),
            new_area_pct: 71.0,
            rate_gsw: Some(0.35),
            rate_gsw_unmasked: Some(0.48),
            rate_modis: None,
            rate_modis_unmasked: None,
        }];
        let mut buf = Vec::new();
        write_comparison_report(&mut buf, &rows).unwrap();
        assert_eq!(read_comparison_report(buf.as_slice()).unwrap(), rows);
    }
}
