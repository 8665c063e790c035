//! Sectioned `key = value` run configuration. Unknown sections and keys are
//! rejected so that typos fail loudly.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::{Ini, Properties};
use quasi2d::md::{LjParams, MdConfig, Thermostat, WallParams};
use quasi2d::{AlphaMode, BoxGeometry};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ewald2d,
    Soewald2d,
    Rbse2d,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ewald2d => "ewald2d",
            Method::Soewald2d => "soewald2d",
            Method::Rbse2d => "rbse2d",
        }
    }
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "ewald2d" => Ok(Method::Ewald2d),
            "soewald2d" => Ok(Method::Soewald2d),
            "rbse2d" => Ok(Method::Rbse2d),
            other => Err(CliError::Config(format!("unknown method {other:?} (expected ewald2d, soewald2d or rbse2d)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxSection {
    pub lx: f64,
    pub ly: f64,
    pub lz: f64,
    pub sigma_top: f64,
    pub sigma_bot: f64,
}

impl BoxSection {
    pub fn geometry(&self) -> Result<BoxGeometry, CliError> {
        Ok(BoxGeometry::with_slabs(self.lx, self.ly, self.lz, self.sigma_top, self.sigma_bot)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParticleSource {
    File(PathBuf),
    Generated { cations: usize, anions: usize, valence: f64, margin: f64, min_dist: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaChoice {
    Fixed(f64),
    Auto { mode: AlphaMode, prefactor: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SoeSource {
    Terms(usize),
    Tolerance(f64),
    Table(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbSection {
    pub batch_size: usize,
    pub downsample: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdSection {
    pub dt: f64,
    pub steps: usize,
    pub equilibration: usize,
    pub record_every: usize,
    pub thermostat: Thermostat,
    pub temperature: f64,
    pub z_bins: usize,
    pub skin: f64,
    pub seed: u64,
    pub trajectory_stride: usize,
    pub msd_max_lag: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanKind {
    S,
    N,
    Lz,
    Force,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanSection {
    pub kind: ScanKind,
    pub values: Vec<f64>,
    /// Number density for the N scan.
    pub density: f64,
    /// Cutoff parameter of the stable reference in the s scan.
    pub reference_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSection {
    pub sizes: Vec<usize>,
    pub density: f64,
    pub repeats: usize,
    pub ewald_max_n: usize,
    pub balanced_prefactor: f64,
    pub linear_prefactor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub output_dir: PathBuf,
    pub geometry: BoxSection,
    pub particles: ParticleSource,
    pub s: f64,
    pub alpha: AlphaChoice,
    pub soe: SoeSource,
    pub rb: RbSection,
    pub lattice_radius: usize,
    pub md: Option<MdSection>,
    pub lj: Option<(f64, f64)>,
    pub wall: Option<(f64, f64, f64, f64)>,
    pub scan: Option<ScanSection>,
    pub bench: Option<BenchSection>,
}

const SECTIONS: [&str; 12] = ["run", "box", "particles", "ewald", "soe", "rb", "md", "lj", "wall", "scan", "bench", "manifest"];

/// Tracks which keys of one section were read.
struct Section<'a> {
    name: &'a str,
    props: Option<&'a Properties>,
    used: BTreeSet<&'a str>,
}

impl<'a> Section<'a> {
    fn new(ini: &'a Ini, name: &'a str) -> Self {
        Self { name, props: ini.section(Some(name)), used: BTreeSet::new() }
    }

    fn present(&self) -> bool {
        self.props.is_some()
    }

    fn raw(&mut self, key: &'a str) -> Option<&'a str> {
        self.used.insert(key);
        self.props.and_then(|p| p.get(key))
    }

    fn get<T: FromStr>(&mut self, key: &'a str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let name = self.name;
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|e| CliError::Config(format!("[{name}] {key} = {v:?}: {e}"))))
            .transpose()
    }

    fn or<T: FromStr>(&mut self, key: &'a str, default: T) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&mut self, key: &'a str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let name = self.name;
        self.get(key)?.ok_or_else(|| CliError::Config(format!("[{name}] is missing {key}")))
    }

    fn list<T: FromStr>(&mut self, key: &'a str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let name = self.name;
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|x| x.trim().parse::<T>().map_err(|e| CliError::Config(format!("[{name}] {key}: {x:?}: {e}"))))
                    .collect()
            })
            .transpose()
    }

    fn finish(self) -> Result<(), CliError> {
        if let Some(props) = self.props {
            let unknown: Vec<&str> = props.iter().map(|(k, _)| k).filter(|k| !self.used.contains(k)).collect();
            if !unknown.is_empty() {
                return Err(CliError::Config(format!("unknown key(s) in [{}]: {}", self.name, unknown.join(", "))));
            }
        }
        Ok(())
    }
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn at_least_one(name: &str, v: usize) -> Result<usize, CliError> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be at least 1")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative file paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(format!("malformed config: {e}")))?;
        for (name, props) in ini.iter() {
            match name {
                None if props.is_empty() => {}
                None => {
                    let keys: Vec<&str> = props.iter().map(|(k, _)| k).collect();
                    return Err(CliError::Config(format!("keys outside any section: {}", keys.join(", "))));
                }
                Some(n) if !SECTIONS.contains(&n) => return Err(CliError::Config(format!("unknown section [{n}]"))),
                _ => {}
            }
        }
        let path = |p: String| {
            let p = PathBuf::from(p);
            if p.is_absolute() { p } else { base.join(p) }
        };

        let mut run = Section::new(&ini, "run");
        let method = run.or("method", "soewald2d".to_string())?.parse()?;
        let output_dir = PathBuf::from(run.or("output_dir", "out".to_string())?);
        run.finish()?;

        let mut sec = Section::new(&ini, "box");
        let geometry = BoxSection {
            lx: positive("box lx", sec.require("lx")?)?,
            ly: positive("box ly", sec.require("ly")?)?,
            lz: positive("box lz", sec.require("lz")?)?,
            sigma_top: sec.or("sigma_top", 0.0)?,
            sigma_bot: sec.or("sigma_bot", 0.0)?,
        };
        sec.finish()?;

        let mut sec = Section::new(&ini, "particles");
        let particles = match sec.get::<String>("file")? {
            Some(f) => ParticleSource::File(path(f)),
            None => ParticleSource::Generated {
                cations: sec.or("cations", 0)?,
                anions: sec.or("anions", 0)?,
                valence: positive("particles valence", sec.or("valence", 1.0)?)?,
                margin: sec.or("margin", 0.0)?,
                min_dist: sec.or("min_dist", 0.0)?,
                seed: sec.or("seed", 1)?,
            },
        };
        sec.finish()?;

        let mut sec = Section::new(&ini, "ewald");
        let s = positive("ewald s", sec.or("s", 4.0)?)?;
        let fixed: Option<f64> = sec.get("alpha")?;
        let mode: Option<String> = sec.get("alpha_mode")?;
        let prefactor = positive("ewald alpha_prefactor", sec.or("alpha_prefactor", 1.0)?)?;
        let alpha = match (fixed, mode.as_deref()) {
            (Some(_), Some(_)) => return Err(CliError::Config("[ewald] give either alpha or alpha_mode, not both".into())),
            (Some(a), None) => AlphaChoice::Fixed(positive("ewald alpha", a)?),
            (None, Some("balanced")) => AlphaChoice::Auto { mode: AlphaMode::Balanced, prefactor },
            (None, Some("linear")) => AlphaChoice::Auto { mode: AlphaMode::Linear, prefactor },
            (None, Some(other)) => return Err(CliError::Config(format!("[ewald] unknown alpha_mode {other:?}"))),
            (None, None) => AlphaChoice::Auto { mode: AlphaMode::Balanced, prefactor },
        };
        let lattice_radius = at_least_one("ewald lattice_radius", sec.or("lattice_radius", 100)?)?;
        sec.finish()?;

        let mut sec = Section::new(&ini, "soe");
        let terms: Option<usize> = sec.get("m")?;
        let eps: Option<f64> = sec.get("eps")?;
        let table: Option<String> = sec.get("table")?;
        let soe = match (terms, eps, table) {
            (Some(m), None, None) => SoeSource::Terms(m),
            (None, Some(e), None) => SoeSource::Tolerance(positive("soe eps", e)?),
            (None, None, Some(t)) => SoeSource::Table(path(t)),
            (None, None, None) => SoeSource::Tolerance(1e-8),
            _ => return Err(CliError::Config("[soe] give exactly one of m, eps, table".into())),
        };
        sec.finish()?;

        let mut sec = Section::new(&ini, "rb");
        let rb = RbSection {
            batch_size: at_least_one("rb batch_size", sec.or("batch_size", 16)?)?,
            downsample: at_least_one("rb downsample", sec.or("downsample", quasi2d::rbse::DEFAULT_DOWNSAMPLE)?)?,
            seed: sec.or("seed", 1)?,
        };
        sec.finish()?;

        let mut sec = Section::new(&ini, "md");
        let md = if sec.present() {
            let temperature = sec.or("temperature", 1.0)?;
            let thermostat = match sec.or("thermostat", "nose-hoover".to_string())?.as_str() {
                "nose-hoover" => Thermostat::NoseHoover { tau: positive("md tau", sec.or("tau", 0.1)?)? },
                "langevin" => Thermostat::Langevin { gamma: sec.or("gamma", 1.0)? },
                "none" => Thermostat::None,
                other => return Err(CliError::Config(format!("[md] unknown thermostat {other:?}"))),
            };
            let steps: usize = sec.require("steps")?;
            let record_every = at_least_one("md record_every", sec.or("record_every", 100)?)?;
            Some(MdSection {
                dt: positive("md dt", sec.require("dt")?)?,
                steps,
                equilibration: sec.or("equilibration", 0)?,
                record_every,
                thermostat,
                temperature,
                z_bins: at_least_one("md z_bins", sec.or("z_bins", 20)?)?,
                skin: sec.or("skin", 0.3)?,
                seed: sec.or("seed", 1)?,
                trajectory_stride: sec.or("trajectory_stride", 0)?,
                msd_max_lag: sec.or("msd_max_lag", (steps / record_every / 2).max(1))?,
            })
        } else {
            None
        };
        sec.finish()?;

        let mut sec = Section::new(&ini, "lj");
        let lj = if sec.present() { Some((sec.or("epsilon", 1.0)?, sec.or("sigma", 1.0)?)) } else { None };
        sec.finish()?;

        let mut sec = Section::new(&ini, "wall");
        let wall = if sec.present() {
            Some((sec.or("z_lo", 0.0)?, sec.or("z_hi", geometry.lz)?, sec.or("epsilon", 1.0)?, sec.or("sigma", 0.5)?))
        } else {
            None
        };
        sec.finish()?;

        let mut sec = Section::new(&ini, "scan");
        let scan = if sec.present() {
            let kind = match sec.require::<String>("kind")?.as_str() {
                "s" => ScanKind::S,
                "n" => ScanKind::N,
                "lz" => ScanKind::Lz,
                "force" => ScanKind::Force,
                other => return Err(CliError::Config(format!("[scan] unknown kind {other:?} (expected s, n, lz or force)"))),
            };
            let values = sec.list("values")?.unwrap_or_default();
            if kind != ScanKind::Force && values.is_empty() {
                return Err(CliError::Config("[scan] needs a values list".into()));
            }
            Some(ScanSection {
                kind,
                values,
                density: positive("scan density", sec.or("density", 1e-4)?)?,
                reference_s: positive("scan reference_s", sec.or("reference_s", 6.0)?)?,
            })
        } else {
            None
        };
        sec.finish()?;

        let mut sec = Section::new(&ini, "bench");
        let bench = if sec.present() {
            Some(BenchSection {
                sizes: sec.list("sizes")?.unwrap_or_else(|| vec![1000, 3000, 10_000]),
                density: positive("bench density", sec.or("density", 0.01)?)?,
                repeats: at_least_one("bench repeats", sec.or("repeats", 5)?)?,
                ewald_max_n: sec.or("ewald_max_n", 1000)?,
                balanced_prefactor: positive("bench balanced_prefactor", sec.or("balanced_prefactor", 2.5)?)?,
                linear_prefactor: positive("bench linear_prefactor", sec.or("linear_prefactor", 2.0)?)?,
            })
        } else {
            None
        };
        sec.finish()?;

        Ok(Self { method, output_dir, geometry, particles, s, alpha, soe, rb, lattice_radius, md, lj, wall, scan, bench })
    }

    /// Overrides every seed with `seed`.
    pub fn reseed(&mut self, seed: u64) {
        if let ParticleSource::Generated { seed: s, .. } = &mut self.particles {
            *s = seed;
        }
        self.rb.seed = seed;
        if let Some(md) = &mut self.md {
            md.seed = seed;
        }
    }

    pub fn md_seed(&self) -> u64 {
        self.md.as_ref().map_or(0, |m| m.seed)
    }

    pub fn md_config(&self) -> Result<MdConfig, CliError> {
        let md = self.md.as_ref().ok_or_else(|| CliError::Config("simulate needs an [md] section".into()))?;
        let lj = self.lj.map(|(e, s)| LjParams::new(e, s)).transpose()?;
        let walls = self
            .wall
            .map(|(z_lo, z_hi, e, s)| LjParams::new(e, s).map(|lj| WallParams { z_lo, z_hi, lj }))
            .transpose()?;
        let cfg = MdConfig {
            dt: md.dt,
            steps: md.steps,
            equilibration: md.equilibration,
            record_every: md.record_every,
            temperature: md.temperature,
            thermostat: md.thermostat,
            lj,
            walls,
            skin: md.skin,
            seed: md.seed,
            z_bins: md.z_bins,
            init_velocities: true,
            trajectory_stride: md.trajectory_stride,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fully resolved config in the same format it was read from. Floats are
    /// written in round-trip form, so parsing the output gives back `self`.
    pub fn to_ini(&self) -> String {
        let mut out = String::new();
        let mut w = |line: String| {
            out.push_str(&line);
            out.push('\n');
        };
        w("[run]".into());
        w(format!("method = {}", self.method.name()));
        w(format!("output_dir = {}", self.output_dir.display()));
        let b = &self.geometry;
        w("\n[box]".into());
        w(format!("lx = {:?}\nly = {:?}\nlz = {:?}\nsigma_top = {:?}\nsigma_bot = {:?}", b.lx, b.ly, b.lz, b.sigma_top, b.sigma_bot));
        w("\n[particles]".into());
        match &self.particles {
            ParticleSource::File(p) => w(format!("file = {}", p.display())),
            ParticleSource::Generated { cations, anions, valence, margin, min_dist, seed } => w(format!(
                "cations = {cations}\nanions = {anions}\nvalence = {valence:?}\nmargin = {margin:?}\nmin_dist = {min_dist:?}\nseed = {seed}"
            )),
        }
        w("\n[ewald]".into());
        w(format!("s = {:?}", self.s));
        match self.alpha {
            AlphaChoice::Fixed(a) => w(format!("alpha = {a:?}")),
            AlphaChoice::Auto { mode, prefactor } => {
                let m = if mode == AlphaMode::Balanced { "balanced" } else { "linear" };
                w(format!("alpha_mode = {m}\nalpha_prefactor = {prefactor:?}"));
            }
        }
        w(format!("lattice_radius = {}", self.lattice_radius));
        w("\n[soe]".into());
        match &self.soe {
            SoeSource::Terms(m) => w(format!("m = {m}")),
            SoeSource::Tolerance(e) => w(format!("eps = {e:?}")),
            SoeSource::Table(p) => w(format!("table = {}", p.display())),
        }
        w("\n[rb]".into());
        w(format!("batch_size = {}\ndownsample = {}\nseed = {}", self.rb.batch_size, self.rb.downsample, self.rb.seed));
        if let Some(md) = &self.md {
            w("\n[md]".into());
            let thermo = match md.thermostat {
                Thermostat::NoseHoover { tau } => format!("thermostat = nose-hoover\ntau = {tau:?}"),
                Thermostat::Langevin { gamma } => format!("thermostat = langevin\ngamma = {gamma:?}"),
                Thermostat::None => "thermostat = none".into(),
            };
            w(format!(
                "dt = {:?}\nsteps = {}\nequilibration = {}\nrecord_every = {}\n{thermo}\ntemperature = {:?}\nz_bins = {}\nskin = {:?}\nseed = {}\ntrajectory_stride = {}\nmsd_max_lag = {}",
                md.dt, md.steps, md.equilibration, md.record_every, md.temperature, md.z_bins, md.skin, md.seed, md.trajectory_stride, md.msd_max_lag
            ));
        }
        if let Some((e, s)) = self.lj {
            w(format!("\n[lj]\nepsilon = {e:?}\nsigma = {s:?}"));
        }
        if let Some((lo, hi, e, s)) = self.wall {
            w(format!("\n[wall]\nz_lo = {lo:?}\nz_hi = {hi:?}\nepsilon = {e:?}\nsigma = {s:?}"));
        }
        if let Some(scan) = &self.scan {
            let kind = match scan.kind {
                ScanKind::S => "s",
                ScanKind::N => "n",
                ScanKind::Lz => "lz",
                ScanKind::Force => "force",
            };
            let values: Vec<String> = scan.values.iter().map(|v| format!("{v:?}")).collect();
            w(format!("\n[scan]\nkind = {kind}\ndensity = {:?}\nreference_s = {:?}", scan.density, scan.reference_s));
            if !values.is_empty() {
                w(format!("values = {}", values.join(", ")));
            }
        }
        if let Some(b) = &self.bench {
            let sizes: Vec<String> = b.sizes.iter().map(|v| v.to_string()).collect();
            w(format!(
                "\n[bench]\nsizes = {}\ndensity = {:?}\nrepeats = {}\newald_max_n = {}\nbalanced_prefactor = {:?}\nlinear_prefactor = {:?}",
                sizes.join(", "),
                b.density,
                b.repeats,
                b.ewald_max_n,
                b.balanced_prefactor,
                b.linear_prefactor
            ));
        }
        let _ = writeln!(out);
        out
    }
}
