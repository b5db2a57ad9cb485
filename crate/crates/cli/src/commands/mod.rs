pub mod aggregate;
pub mod buffer;
pub mod compare;
pub mod detect;
pub mod mask;
pub mod metrics;
pub mod overlay;
pub mod synth;
pub mod trend;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use floodmap_core::postproc::AuxStack;
use floodmap_core::raster::{read_raster, write_raster};
use floodmap_core::Raster;
use log::warn;

use crate::config::Config;
use crate::run::RunManifest;

pub struct Ctx {
    pub config: Config,
    pub run: RunManifest,
    pub seed: Option<u64>,
    jobs: Option<usize>,
}

impl Ctx {
    pub fn new(
        command: &str,
        out: &Path,
        config: Option<&Path>,
        seed: Option<u64>,
        jobs: Option<usize>,
    ) -> Result<Self> {
        let mut run = RunManifest::new(command, out);
        if let Some(p) = config {
            run.input(p);
        }
        Ok(Self {
            config: Config::load(config)?,
            run,
            seed,
            jobs,
        })
    }

    pub fn read_raster(&mut self, path: &Path) -> Result<Raster> {
        self.run.input(path);
        read_raster(path).with_context(|| format!("reading raster {}", path.display()))
    }

    pub fn write_raster(&mut self, name: &str, r: &Raster) -> Result<()> {
        let p = self.run.output(name);
        write_raster(r, &p).with_context(|| format!("writing {}", p.display()))
    }

    /// Creates an output file and hands a buffered writer to `f`.
    pub fn write_with<E>(
        &mut self,
        name: &str,
        f: impl FnOnce(BufWriter<File>) -> Result<(), E>,
    ) -> Result<()>
    where
        E: Into<anyhow::Error>,
    {
        let p = self.run.output(name);
        let file = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        f(BufWriter::new(file))
            .map_err(Into::into)
            .with_context(|| format!("writing {}", p.display()))
    }

    pub fn open(&mut self, path: &Path) -> Result<File> {
        self.run.input(path);
        File::open(path).with_context(|| format!("opening {}", path.display()))
    }

    pub fn finish(self) -> Result<PathBuf> {
        self.run.finish(&self.config, self.seed, self.jobs)
    }
}

/// Auxiliary raster paths, given one by one or as a directory holding
/// `aux_<name>.flr` files.
#[derive(clap::Args, Debug, Default)]
pub struct AuxArgs {
    /// Directory with aux_<name>.flr planes (as written by `synth`)
    #[arg(long)]
    pub aux_dir: Option<PathBuf>,
    /// Slope raster, degrees (overrides --aux-dir)
    #[arg(long)]
    pub slope: Option<PathBuf>,
    /// Byte land-cover raster
    #[arg(long)]
    pub land_cover: Option<PathBuf>,
    /// Soil moisture raster, m³/m³
    #[arg(long)]
    pub soil_moisture: Option<PathBuf>,
    /// Temperature raster, kelvin
    #[arg(long)]
    pub temperature: Option<PathBuf>,
    /// Elevation raster, metres
    #[arg(long)]
    pub elevation: Option<PathBuf>,
}

impl AuxArgs {
    fn path(&self, explicit: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
        explicit.clone().or_else(|| {
            let p = self.aux_dir.as_ref()?.join(format!("aux_{name}.flr"));
            p.exists().then_some(p)
        })
    }

    /// Loads whichever planes were supplied. Returns `None` if none were.
    pub fn load(&self, ctx: &mut Ctx) -> Result<Option<AuxStack>> {
        let mut load = |explicit: &Option<PathBuf>, name: &str| -> Result<Option<Raster>> {
            match self.path(explicit, name) {
                Some(p) => ctx.read_raster(&p).map(Some),
                None => Ok(None),
            }
        };
        let aux = AuxStack {
            slope: load(&self.slope, "slope")?,
            land_cover: load(&self.land_cover, "land_cover")?,
            soil_moisture: load(&self.soil_moisture, "soil_moisture")?,
            temperature: load(&self.temperature, "temperature")?,
            elevation: load(&self.elevation, "elevation")?,
        };
        let any = aux.slope.is_some()
            || aux.land_cover.is_some()
            || aux.soil_moisture.is_some()
            || aux.temperature.is_some()
            || aux.elevation.is_some();
        if !any {
            if let Some(d) = &self.aux_dir {
                warn!("no aux_<name>.flr planes found in {}", d.display());
            }
        }
        Ok(any.then_some(aux))
    }
}
