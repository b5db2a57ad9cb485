use crate::features::{delta_at, FeatureStack};
use crate::kv::KvDoc;
use crate::raster::{Raster, BINARY_NODATA};
use crate::{Error, Result};

use super::FloodCandidateMask;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleConfig {
    /// Minimum absolute backscatter change, dB.
    pub min_delta_db: f64,
    /// AND instead of OR across polarizations.
    pub require_both_polarizations: bool,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self {
            min_delta_db: 3.0,
            require_both_polarizations: false,
        }
    }
}

impl RuleConfig {
    pub const KEYS: [&'static str; 2] = ["rule.min_delta_db", "rule.require_both_polarizations"];

    pub fn validate(&self) -> Result<()> {
        if !(self.min_delta_db >= 0.0 && self.min_delta_db.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "min_delta_db must be finite and >= 0, got {}",
                self.min_delta_db
            )));
        }
        Ok(())
    }

    /// Overrides fields present in `doc`.
    pub fn apply_kv(&mut self, doc: &KvDoc) -> Result<()> {
        if let Some(v) = doc.parse_opt("rule.min_delta_db")? {
            self.min_delta_db = v;
        }
        if let Some(v) = doc.parse_opt("rule.require_both_polarizations")? {
            self.require_both_polarizations = v;
        }
        self.validate()
    }

    pub fn write_kv(&self, doc: &mut KvDoc) {
        doc.push("rule.min_delta_db", self.min_delta_db);
        doc.push(
            "rule.require_both_polarizations",
            self.require_both_polarizations,
        );
    }
}

/// Rule-based reference classifier.
///
/// A polarization votes for flood when its change indicator is 1 and the
/// matching delta magnitude reaches `min_delta_db`. Missing (nodata) planes
/// vote "no"; the output is nodata only where both polarizations are nodata.
pub fn classify_rule(f: &FeatureStack, cfg: &RuleConfig) -> Result<FloodCandidateMask> {
    cfg.validate()?;
    f.check_consistent()?;
    let cvv = f.change_to_water_vv.as_u8().unwrap();
    let cvh = f.change_to_water_vh.as_u8().unwrap();
    let clause = |change: &[u8], change_r: &Raster, delta: &Raster, i: usize| -> Option<bool> {
        if change_r.is_nodata(i) {
            return None;
        }
        let d = delta_at(delta, i)?;
        Some(change[i] == 1 && (d as f64).abs() >= cfg.min_delta_db)
    };
    let out: Vec<u8> = (0..f.delta_vv.len())
        .map(|i| {
            let vv = clause(cvv, &f.change_to_water_vv, &f.delta_vv, i);
            let vh = clause(cvh, &f.change_to_water_vh, &f.delta_vh, i);
            match (vv, vh) {
                (None, None) => BINARY_NODATA,
                (a, b) => {
                    let (a, b) = (a.unwrap_or(false), b.unwrap_or(false));
                    if cfg.require_both_polarizations {
                        (a && b) as u8
                    } else {
                        (a || b) as u8
                    }
                }
            }
        })
        .collect();
    let mask = Raster::binary(f.width(), f.height(), *f.delta_vv.transform(), out)?;
    Ok(FloodCandidateMask::from_mask(mask))
}
