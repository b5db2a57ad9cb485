//! Effective configuration: command-line flags override the `--config` file,
//! which overrides built-in defaults.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use floodmap_core::classifier::RuleConfig;
use floodmap_core::kv::KvDoc;
use floodmap_core::postproc::FilterConfig;

/// Keys the CLI itself reads from a config file, besides the rule and filter keys.
pub const CLI_KEYS: &[&str] = &[
    "buffer.radius_px",
    "aggregate.coarse_pixel_m",
    "aggregate.coarsen_rule",
    "infer.threshold",
    "infer.tile_size",
    "smooth.window",
    "gsw.threshold_pct",
    "gsw.include_zero",
    "trend.tile_deg",
    "trend.p_cutoff",
    "trend.moderate_band",
    "trend.large_band",
    "trend.band_mode",
    "trend.period",
];

pub struct Config {
    file: KvDoc,
    effective: KvDoc,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                let doc = KvDoc::parse(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?;
                let mut known: Vec<&str> = CLI_KEYS.to_vec();
                known.extend(RuleConfig::KEYS);
                known.extend(FilterConfig::KEYS);
                doc.check_keys(&known)
                    .with_context(|| format!("config {}", p.display()))?;
                doc
            }
            None => KvDoc::new(),
        };
        Ok(Self {
            file,
            effective: KvDoc::new(),
        })
    }

    /// Resolves `key` from the flag, then the file, then `default`, and
    /// records the result.
    pub fn pick<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let v = match flag {
            Some(v) => v,
            None => self.file.parse_opt(key)?.unwrap_or(default),
        };
        self.effective.push(key, &v);
        Ok(v)
    }

    pub fn rule(&mut self, min_delta_db: Option<f64>, require_both: bool) -> Result<RuleConfig> {
        let mut cfg = RuleConfig::default();
        cfg.apply_kv(&self.file)?;
        if let Some(v) = min_delta_db {
            cfg.min_delta_db = v;
        }
        if require_both {
            cfg.require_both_polarizations = true;
        }
        cfg.validate()?;
        cfg.write_kv(&mut self.effective);
        Ok(cfg)
    }

    pub fn filter(&mut self) -> Result<FilterConfig> {
        let cfg = FilterConfig::from_kv(&self.file)?;
        cfg.write_kv(&mut self.effective);
        Ok(cfg)
    }

    /// Records a setting that has no file key.
    pub fn note(&mut self, key: &str, value: impl Display) {
        self.effective.push(key, value);
    }

    pub fn effective(&self) -> &KvDoc {
        &self.effective
    }
}
