//! Run manifests: what a command read, what it wrote, and with which settings.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use chrono::{SecondsFormat, Utc};
use floodmap_core::aggregate::{read_detections, read_impact, write_detections, write_impact};
use floodmap_core::features::{read_scene_manifest, write_scene_manifest};
use floodmap_core::kv::KvDoc;
use floodmap_core::metrics::{read_comparison_report, write_comparison_report};
use floodmap_core::trend::{
    read_decomposition, read_tile_trends, read_trend_report, write_decomposition_rows,
    write_tile_rows, write_trend_rows,
};
use floodmap_core::Raster;
use sha2::{Digest, Sha256};

use crate::config::Config;

pub struct RunManifest {
    command: String,
    out_dir: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
    started_at: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str, out_dir: &Path) -> Self {
        Self {
            command: command.to_string(),
            out_dir: out_dir.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
            started_at: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
        }
    }

    pub fn input(&mut self, path: &Path) {
        if !self.inputs.iter().any(|p| p == path) {
            self.inputs.push(path.to_path_buf());
        }
    }

    /// Path for an output file named `name` in the output directory, recorded
    /// for the manifest.
    pub fn output(&mut self, name: &str) -> PathBuf {
        let rel = PathBuf::from(name);
        if !self.outputs.contains(&rel) {
            self.outputs.push(rel);
        }
        self.out_dir.join(name)
    }

    /// Records files written by a library call (absolute or out-dir paths).
    pub fn outputs_written(&mut self, paths: &[PathBuf]) {
        for p in paths {
            let rel = p.strip_prefix(&self.out_dir).unwrap_or(p).to_path_buf();
            if !self.outputs.contains(&rel) {
                self.outputs.push(rel);
            }
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out_dir.join(format!("{}.manifest.txt", self.command))
    }

    /// Checks every output round-trips through its reader, then writes the
    /// manifest with content digests.
    pub fn finish(
        self,
        config: &Config,
        seed: Option<u64>,
        jobs: Option<usize>,
    ) -> Result<PathBuf> {
        let mut doc = KvDoc::new();
        doc.push("command", &self.command);
        doc.push(
            "tool_version",
            concat!("floodmap ", env!("CARGO_PKG_VERSION")),
        );
        doc.push("seed", seed.map_or("none".to_string(), |s| s.to_string()));
        doc.push("jobs", jobs.map_or("auto".to_string(), |j| j.to_string()));
        for (k, v) in config.effective().iter() {
            doc.push(format!("config.{k}"), v);
        }
        for (i, p) in self.inputs.iter().enumerate() {
            doc.push(format!("input.{i}.path"), p.display());
            doc.push(format!("input.{i}.sha256"), sha256_file(p)?);
        }
        for (i, rel) in self.outputs.iter().enumerate() {
            let full = self.out_dir.join(rel);
            verify_output(&full).with_context(|| {
                format!("output {} failed its round-trip check", full.display())
            })?;
            doc.push(format!("output.{i}.path"), rel.display());
            doc.push(format!("output.{i}.sha256"), sha256_file(&full)?);
        }
        doc.push("started_at", &self.started_at);
        doc.push(
            "wall_time_s",
            format!("{:.3}", self.started.elapsed().as_secs_f64()),
        );
        let path = self.manifest_path();
        fs::write(&path, doc.to_text()).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Re-reads an output with the matching reader and, where one exists,
/// re-serializes it to check the bytes are reproduced.
pub fn verify_output(path: &Path) -> Result<()> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "flr" => {
            let r = Raster::from_bytes(&bytes)?;
            if r.to_bytes() != bytes {
                bail!("raster does not re-encode identically");
            }
        }
        "csv" => verify_csv(&bytes)?,
        "txt" => {
            let text = std::str::from_utf8(&bytes)?;
            if KvDoc::parse(text)?.to_text() != text {
                bail!("key=value file does not re-serialize identically");
            }
        }
        _ => {}
    }
    Ok(())
}

fn verify_csv(bytes: &[u8]) -> Result<()> {
    let header = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
    let header = std::str::from_utf8(header)?;
    let mut again = Vec::new();
    match header {
        h if h.starts_with("lon,lat,date,scene_id") => {
            write_detections(&mut again, &read_detections(bytes)?)?
        }
        h if h.starts_with("scene_id,acquisition_time") => {
            write_scene_manifest(&mut again, &read_scene_manifest(bytes)?)?
        }
        h if h.starts_with("region_id,") => {
            write_comparison_report(&mut again, &read_comparison_report(bytes)?)?
        }
        h if h.starts_with("zone_id,") => write_impact(&mut again, &read_impact(bytes)?)?,
        h if h.starts_with("scenario,slope") => {
            write_trend_rows(&mut again, &read_trend_report(bytes)?)?
        }
        h if h.starts_with("tile_lon,tile_lat") => {
            write_tile_rows(&mut again, &read_tile_trends(bytes)?)?
        }
        h if h.starts_with("year,month,observed") => {
            write_decomposition_rows(&mut again, &read_decomposition(bytes)?)?
        }
        _ => {
            let mut rdr = csv::Reader::from_reader(bytes);
            let width = rdr.headers()?.len();
            for rec in rdr.records() {
                if rec?.len() != width {
                    bail!("ragged CSV row");
                }
            }
            return Ok(());
        }
    }
    if again != bytes {
        bail!("CSV does not re-serialize identically");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use floodmap_core::GeoTransform;

    fn scratch(name: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("floodmap-run-{name}-{}", std::process::id()));
        fs::create_dir_all(&d).unwrap();
        d
    }

    #[test]
    fn raster_outputs_must_reencode() {
        let d = scratch("flr");
        let t = GeoTransform::new(0.0, 0.0, 20.0, 20.0, 3857).unwrap();
        let r = Raster::binary(3, 2, t, vec![0, 1, 0, 1, 1, 255]).unwrap();
        let p = d.join("m.flr");
        fs::write(&p, r.to_bytes()).unwrap();
        verify_output(&p).unwrap();
        let mut bytes = r.to_bytes();
        bytes.push(0);
        fs::write(&p, bytes).unwrap();
        assert!(verify_output(&p).is_err());
    }

    #[test]
    fn csv_outputs_are_checked() {
        let d = scratch("csv");
        let p = d.join("x.csv");
        fs::write(&p, "a,b\n1,2\n").unwrap();
        verify_output(&p).unwrap();
        fs::write(&p, "a,b\n1,2,3\n").unwrap();
        assert!(verify_output(&p).is_err());
        fs::write(&p, "region_id,new_area_pct,rate_gsw,rate_gsw_unmasked,rate_modis,rate_modis_unmasked\nall,x,,,,\n").unwrap();
        assert!(verify_output(&p).is_err());
    }

    #[test]
    fn manifest_lists_outputs_with_digests() {
        let d = scratch("manifest");
        let mut run = RunManifest::new("buffer", &d);
        let out = run.output("a.csv");
        fs::write(&out, "k\n1\n").unwrap();
        let cfg = Config::load(None).unwrap();
        let path = run.finish(&cfg, Some(7), None).unwrap();
        let doc = KvDoc::parse(&fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(doc.get("command"), Some("buffer"));
        assert_eq!(doc.get("seed"), Some("7"));
        assert_eq!(doc.get("jobs"), Some("auto"));
        assert_eq!(doc.get("output.0.path"), Some("a.csv"));
        assert_eq!(
            doc.get("output.0.sha256"),
            Some(sha256_file(&out).unwrap().as_str())
        );
    }
}
