use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use statrs::function::beta::beta_reg;

use super::{MonthlySeries, YearMonth};
use crate::metrics::{check_header, parse_opt};
use crate::{Error, Result};

/// Number of design columns: intercept, time and eleven month dummies.
const N_COEFFS: usize = 13;

/// Month exclusions applied before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    All,
    Drop2022,
    Drop2022AndPreJun2017,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::All,
        Scenario::Drop2022,
        Scenario::Drop2022AndPreJun2017,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Scenario::All => "all",
            Scenario::Drop2022 => "drop_2022",
            Scenario::Drop2022AndPreJun2017 => "drop_2022_and_pre_jun2017",
        }
    }

    pub fn includes(self, m: YearMonth) -> bool {
        match self {
            Scenario::All => true,
            Scenario::Drop2022 => m.year != 2022,
            Scenario::Drop2022AndPreJun2017 => m.year != 2022 && m >= YearMonth::new(2017, 6),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.label() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendResult {
    pub scenario: Scenario,
    /// Hectares per observation per month.
    pub slope: f64,
    pub intercept: f64,
    /// February..December offsets relative to January.
    pub monthly_coefficients: [f64; 11],
    pub slope_stderr: f64,
    pub p_value: f64,
    /// 100 × 12 × slope / mean of the fitted values.
    pub annual_pct: f64,
    pub n_months: usize,
    pub mean: f64,
    /// Residuals in fitted-month order.
    pub residuals: Vec<f64>,
}

impl TrendResult {
    pub fn coefficients(&self) -> Vec<f64> {
        let mut c = vec![self.intercept, self.slope];
        c.extend_from_slice(&self.monthly_coefficients);
        c
    }

    pub fn annual_pct_stderr(&self) -> f64 {
        100.0 * 12.0 * self.slope_stderr / self.mean.abs()
    }
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom,
/// `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Design row for a month at offset `t` from the series start.
pub(crate) fn design_row(m: YearMonth, t: f64) -> [f64; N_COEFFS] {
    let mut row = [0.0; N_COEFFS];
    row[0] = 1.0;
    row[1] = t;
    if m.month > 1 {
        row[m.month as usize] = 1.0;
    }
    row
}

/// OLS of the normalized series on intercept, months since the series start
/// and eleven month dummies (January baseline). Months without observations
/// and months excluded by `scenario` are left out.
pub fn fit_trend(s: &MonthlySeries, scenario: Scenario) -> Result<TrendResult> {
    let Some(&origin) = s.months.first() else {
        return Err(Error::InsufficientData("empty series".into()));
    };
    let rows: Vec<(YearMonth, f64)> = s
        .months
        .iter()
        .zip(&s.normalized)
        .filter_map(|(&m, v)| v.filter(|_| scenario.includes(m)).map(|v| (m, v)))
        .collect();
    let n = rows.len();
    if n <= N_COEFFS {
        return Err(Error::InsufficientData(format!(
            "scenario {scenario} leaves {n} months; need more than {N_COEFFS}"
        )));
    }
    let x = DMatrix::from_fn(n, N_COEFFS, |i, j| {
        let (m, _) = rows[i];
        design_row(m, (m.index() - origin.index()) as f64)[j]
    });
    let y = DVector::from_iterator(n, rows.iter().map(|&(_, v)| v));

    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = (0..N_COEFFS).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let tol = max_diag * n as f64 * f64::EPSILON;
    if let Some(col) = (0..N_COEFFS).find(|&i| r[(i, i)].abs() <= tol) {
        let what = match col {
            0 | 1 => "intercept/time".to_string(),
            c => format!("month {c} dummy"),
        };
        return Err(Error::RankDeficient(format!(
            "design column {what} is not identifiable"
        )));
    }
    let qty = qr.q().transpose() * &y;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;

    let residuals: Vec<f64> = (&y - &x * &beta).iter().copied().collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let df = (n - N_COEFFS) as f64;
    let sigma2 = rss / df;
    // (XᵀX)⁻¹ = R⁻¹ R⁻ᵀ; only the slope's diagonal entry is needed.
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(N_COEFFS, N_COEFFS))
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
    let slope_var = sigma2 * r_inv.row(1).iter().map(|v| v * v).sum::<f64>();
    let slope = beta[1];
    let slope_stderr = slope_var.sqrt();
    let p_value = if slope_stderr > 0.0 {
        student_t_two_sided_p(slope / slope_stderr, df)
    } else if slope == 0.0 {
        1.0
    } else {
        0.0
    };
    let mean = y.mean();
    let mut monthly_coefficients = [0.0; 11];
    monthly_coefficients.copy_from_slice(&beta.as_slice()[2..]);
    Ok(TrendResult {
        scenario,
        slope,
        intercept: beta[0],
        monthly_coefficients,
        slope_stderr,
        p_value,
        annual_pct: 100.0 * 12.0 * slope / mean,
        n_months: n,
        mean,
        residuals,
    })
}

pub const TREND_REPORT_HEADER: [&str; 6] = [
    "scenario",
    "slope",
    "stderr",
    "p_value",
    "annual_pct",
    "n_months",
];

pub fn write_trend_report<W: Write>(w: W, results: &[TrendResult]) -> Result<()> {
    let rows: Vec<TrendReportRow> = results.iter().map(TrendReportRow::from).collect();
    write_trend_rows(w, &rows)
}

pub fn write_trend_rows<W: Write>(w: W, rows: &[TrendReportRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TREND_REPORT_HEADER)?;
    for r in rows {
        out.write_record([
            r.scenario.label().to_string(),
            r.slope.to_string(),
            r.stderr.to_string(),
            r.p_value.to_string(),
            r.annual_pct.to_string(),
            r.n_months.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<trend report>", e))?;
    Ok(())
}

/// Row of a trend report as read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendReportRow {
    pub scenario: Scenario,
    pub slope: f64,
    pub stderr: f64,
    pub p_value: f64,
    pub annual_pct: f64,
    pub n_months: usize,
}

impl From<&TrendResult> for TrendReportRow {
    fn from(r: &TrendResult) -> Self {
        Self {
            scenario: r.scenario,
            slope: r.slope,
            stderr: r.slope_stderr,
            p_value: r.p_value,
            annual_pct: r.annual_pct,
            n_months: r.n_months,
        }
    }
}

pub fn read_trend_report<R: Read>(r: R) -> Result<Vec<TrendReportRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    check_header(&mut rdr, &TREND_REPORT_HEADER)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let f = |i: usize| -> Result<f64> {
            parse_opt(&rec[i], line, TREND_REPORT_HEADER[i])?.ok_or_else(|| Error::Parse {
                line,
                message: format!("{} is required", TREND_REPORT_HEADER[i]),
            })
        };
        rows.push(TrendReportRow {
            scenario: rec[0].parse().map_err(|e: Error| Error::Parse {
                line,
                message: e.to_string(),
            })?,
            slope: f(1)?,
            stderr: f(2)?,
            p_value: f(3)?,
            annual_pct: f(4)?,
            n_months: rec[5].parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad n_months {:?}", &rec[5]),
            })?,
        });
    }
    Ok(rows)
}
