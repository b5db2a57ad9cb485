use std::io::{Read, Write};

use super::{MonthlySeries, YearMonth};
use crate::metrics::{check_header, fmt_opt, parse_opt};
use crate::{Error, Result};

/// Classical additive decomposition of a regular monthly series.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub months: Vec<YearMonth>,
    /// Input values with missing months linearly interpolated.
    pub observed: Vec<f64>,
    /// Months whose `observed` value was interpolated.
    pub interpolated: Vec<bool>,
    /// Centred moving average; undefined within half a period of either end.
    pub trend: Vec<Option<f64>>,
    pub seasonal: Vec<f64>,
    /// `observed − (trend + seasonal)` where the trend is defined.
    pub residual: Vec<Option<f64>>,
    pub period: usize,
}

fn interpolate(values: &[Option<f64>]) -> Result<(Vec<f64>, Vec<bool>)> {
    let known: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    let (Some(&first), Some(&last)) = (known.first(), known.last()) else {
        return Err(Error::InsufficientData(
            "series has no observed months".into(),
        ));
    };
    let mut out = vec![0.0; values.len()];
    let mut flagged = vec![false; values.len()];
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = v {
            out[i] = *v;
            continue;
        }
        flagged[i] = true;
        out[i] = if i < first {
            values[first].unwrap()
        } else if i > last {
            values[last].unwrap()
        } else {
            let hi = known[known.partition_point(|&k| k < i)];
            let lo = known[known.partition_point(|&k| k < i) - 1];
            let (a, b) = (values[lo].unwrap(), values[hi].unwrap());
            a + (b - a) * (i - lo) as f64 / (hi - lo) as f64
        };
    }
    Ok((out, flagged))
}

fn moving_average(y: &[f64], period: usize) -> Vec<Option<f64>> {
    let half = period / 2;
    let n = y.len();
    (0..n)
        .map(|i| {
            if i < half || i + half >= n {
                return None;
            }
            let window = &y[i - half..=i + half];
            let sum = if period.is_multiple_of(2) {
                0.5 * window[0] + window[1..period].iter().sum::<f64>() + 0.5 * window[period]
            } else {
                window.iter().sum()
            };
            Some(sum / period as f64)
        })
        .collect()
}

/// Rounds seasonal factors to a dyadic grid fine enough to be harmless but
/// coarse enough that every partial sum is exactly representable, then sets
/// the last factor so the total is exactly zero in any summation order.
fn exact_zero_sum(s: &mut [f64]) {
    let bound = 4.0 * s.iter().map(|v| v.abs()).sum::<f64>();
    if bound == 0.0 || !bound.is_finite() {
        return;
    }
    let q = 2f64.powi(bound.log2().ceil() as i32 - 50);
    let (head, last) = s.split_at_mut(s.len() - 1);
    for v in head.iter_mut() {
        *v = (*v / q).round() * q;
    }
    last[0] = -head.iter().sum::<f64>();
}

/// Decomposes consecutive monthly `values` starting at `start`, with `None`
/// for missing months.
pub fn decompose_values(
    start: YearMonth,
    values: &[Option<f64>],
    period: usize,
) -> Result<Decomposition> {
    if period < 2 {
        return Err(Error::InvalidArgument(format!(
            "period must be at least 2, got {period}"
        )));
    }
    if values.len() < 2 * period {
        return Err(Error::InsufficientData(format!(
            "decomposition needs at least {} months, got {}",
            2 * period,
            values.len()
        )));
    }
    let (y, flagged) = interpolate(values)?;
    let trend = moving_average(&y, period);

    let mut sums = vec![0.0; period];
    let mut counts = vec![0usize; period];
    for (i, t) in trend.iter().enumerate() {
        if let Some(t) = t {
            sums[i % period] += y[i] - t;
            counts[i % period] += 1;
        }
    }
    let mut factors: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect();
    let mean = factors.iter().sum::<f64>() / period as f64;
    factors.iter_mut().for_each(|f| *f -= mean);
    exact_zero_sum(&mut factors);

    let seasonal: Vec<f64> = (0..y.len()).map(|i| factors[i % period]).collect();
    let residual = trend
        .iter()
        .zip(&seasonal)
        .zip(&y)
        .map(|((t, s), v)| t.map(|t| v - (t + s)))
        .collect();
    Ok(Decomposition {
        months: (0..y.len() as i64).map(|k| start.offset(k)).collect(),
        observed: y,
        interpolated: flagged,
        trend,
        seasonal,
        residual,
        period,
    })
}

/// Classical decomposition of the normalized series.
pub fn seasonal_decompose(s: &MonthlySeries, period: usize) -> Result<Decomposition> {
    let start = s.months.first().copied().unwrap_or(YearMonth::new(1970, 1));
    decompose_values(start, &s.normalized, period)
}

pub const DECOMPOSITION_HEADER: [&str; 6] =
    ["year", "month", "observed", "trend", "seasonal", "residual"];

pub fn write_decomposition<W: Write>(w: W, d: &Decomposition) -> Result<()> {
    let rows: Vec<DecompositionRow> = (0..d.months.len())
        .map(|i| DecompositionRow {
            month: d.months[i],
            observed: d.observed[i],
            trend: d.trend[i],
            seasonal: d.seasonal[i],
            residual: d.residual[i],
        })
        .collect();
    write_decomposition_rows(w, &rows)
}

/// A `decomposition.csv` row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionRow {
    pub month: YearMonth,
    pub observed: f64,
    pub trend: Option<f64>,
    pub seasonal: f64,
    pub residual: Option<f64>,
}

pub fn write_decomposition_rows<W: Write>(w: W, rows: &[DecompositionRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(DECOMPOSITION_HEADER)?;
    for r in rows {
        out.write_record([
            r.month.year.to_string(),
            r.month.month.to_string(),
            r.observed.to_string(),
            fmt_opt(r.trend),
            r.seasonal.to_string(),
            fmt_opt(r.residual),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<decomposition>", e))?;
    Ok(())
}

pub fn read_decomposition<R: Read>(r: R) -> Result<Vec<DecompositionRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &DECOMPOSITION_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let req = |i: usize| -> Result<f64> {
            parse_opt(&rec[i], line, DECOMPOSITION_HEADER[i])?.ok_or_else(|| Error::Parse {
                line,
                message: format!("{} is required", DECOMPOSITION_HEADER[i]),
            })
        };
        let int = |i: usize| -> Result<i64> {
            rec[i].parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad {} {:?}", DECOMPOSITION_HEADER[i], &rec[i]),
            })
        };
        let month = int(1)?;
        if !(1..=12).contains(&month) {
            return Err(Error::Parse {
                line,
                message: format!("month {month} out of range"),
            });
        }
        out.push(DecompositionRow {
            month: YearMonth::new(int(0)? as i32, month as u32),
            observed: req(2)?,
            trend: parse_opt(&rec[3], line, "trend")?,
            seasonal: req(4)?,
            residual: parse_opt(&rec[5], line, "residual")?,
        });
    }
    Ok(out)
}
