//! Command-line front end: one subcommand per experiment, flags or a TOML parameter file,
//! deterministic output files and a content-addressed result cache.

use std::ffi::OsString;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::parser::ValueSource;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{
    csv_writer, evolve, fmt_real, prepare_packet, prepare_packet_in_gauge, write_pgm, write_pgm_raw, write_trajectory_csv,
    BandSelect, EdgeExperiment, SpinorField, TrajectoryAnalysis, WavePacketSpec,
};
use crate::linalg::{eigenphases, max_abs, phase_multiset_distance, unitarity_defect};
use crate::operators::{
    bloch_step_operator, effective_hamiltonian, gcd, spectral_flow_operator, BlochCell, Coin, Flux, GaugeField, LatticeGeometry,
    RealSpaceWalk, TimeFrame,
};
use crate::realism::{
    excitation_budget, gap_width_scan, imprint_2d, imprint_row, p_ex_perturbative, p_ex_splitstep, psf_sigma, sawtooth_profile,
    shallow_lattice_warning, Ramp, SplitStepGrid, LAMBDA_RATIO,
};
use crate::spectra::{
    band_structure_for_cell, bulk_gap_table, butterfly, butterfly_column, gap_table, profile_edges, ribbon_spectrum,
    ribbon_spectrum_from_phases, ring_phases, stripe_profile, uniform_ky_grid, GapTable, EDGE_WINDOW,
};
use crate::symmetry::{
    bloch_suite, check_alternating_sublattice, check_conserved_sublattice, check_particle_hole_real, SymmetryReport,
};
use crate::topology::{bulk_boundary_check, chern_number_converged, rlbl_all_gaps, rlbl_invariant, RlblResult, RLBL_PROBE, RLBL_S};
use crate::{CMatrix, Result, WalkError, C64};

pub const CACHE_ENV: &str = "MAGWALK_CACHE_DIR";
pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_QUALITY: i32 = 3;

#[derive(Parser, Debug, Clone)]
#[command(name = "magwalk", version, about = "Discrete-time quantum walks of a spin-1/2 particle in a magnetic field")]
pub struct Cli {
    /// TOML file of `key = value` parameters; flags on the command line take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = crate::symmetry::DEFAULT_SEED)]
    pub seed: u64,
    /// worker threads (all cores by default)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// recompute even if a cached result exists
    #[arg(long, global = true)]
    pub no_cache: bool,
    /// run the subcommand's built-in identity checks instead of an experiment
    #[arg(long, global = true)]
    pub selftest: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
pub enum Command {
    /// Bulk bands on a uniform grid over the magnetic zone
    Bands(BandsArgs),
    /// Spectra for every flux p/q with q <= q-max
    Butterfly(ButterflyArgs),
    /// Chern numbers of every isolated band group
    Chern(ChernArgs),
    /// Gap invariants from spectral flow
    Rlbl(RlblArgs),
    /// Ribbon spectrum of a flux stripe and the bulk-boundary count
    Stripe(StripeArgs),
    /// Real-space evolution of a preset initial state
    Evolve(EvolveArgs),
    /// Edge transport around a quarter-disk flux island
    Edge(EdgeArgs),
    /// Bulk gap width of imprinted phase profiles against alignment
    RealismGapScan(GapScanArgs),
    /// Motional excitation probability of the flashed gradient
    RealismPex(PexArgs),
    /// Operator symmetry residuals
    Symmetry(SymmetryArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bands(_) => "bands",
            Command::Butterfly(_) => "butterfly",
            Command::Chern(_) => "chern",
            Command::Rlbl(_) => "rlbl",
            Command::Stripe(_) => "stripe",
            Command::Evolve(_) => "evolve",
            Command::Edge(_) => "edge",
            Command::RealismGapScan(_) => "realism-gap-scan",
            Command::RealismPex(_) => "realism-pex",
            Command::Symmetry(_) => "symmetry",
        }
    }

    fn params(&self) -> serde_json::Value {
        let v = match self {
            Command::Bands(a) => serde_json::to_value(a),
            Command::Butterfly(a) => serde_json::to_value(a),
            Command::Chern(a) => serde_json::to_value(a),
            Command::Rlbl(a) => serde_json::to_value(a),
            Command::Stripe(a) => serde_json::to_value(a),
            Command::Evolve(a) => serde_json::to_value(a),
            Command::Edge(a) => serde_json::to_value(a),
            Command::RealismGapScan(a) => serde_json::to_value(a),
            Command::RealismPex(a) => serde_json::to_value(a),
            Command::Symmetry(a) => serde_json::to_value(a),
        };
        v.expect("argument structs serialize")
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameArg {
    Original,
    Primed,
    DoublePrimed,
}

impl From<FrameArg> for TimeFrame {
    fn from(f: FrameArg) -> Self {
        match f {
            FrameArg::Original => TimeFrame::Original,
            FrameArg::Primed => TimeFrame::Primed,
            FrameArg::DoublePrimed => TimeFrame::DoublePrimed,
        }
    }
}

/// Flux given as `p/q` or an integer.
pub fn parse_flux(s: &str) -> std::result::Result<Flux, String> {
    let (p, q) = s.split_once('/').unwrap_or((s, "1"));
    let p: i64 = p.trim().parse().map_err(|e| format!("{s}: {e}"))?;
    let q: i64 = q.trim().parse().map_err(|e| format!("{s}: {e}"))?;
    Flux::new(p, q).map_err(|e| e.to_string())
}

/// Real number given as a decimal or as `a/b`.
pub fn parse_ratio(s: &str) -> std::result::Result<f64, String> {
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            let b: f64 = b.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            a / b
        }
        None => s.trim().parse().map_err(|e| format!("{s}: {e}"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s}: not a finite number"))
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BandsArgs {
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    pub p: i64,
    #[arg(long, default_value_t = 3)]
    pub q: i64,
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
    #[arg(long, value_enum, default_value_t = FrameArg::Original)]
    pub frame: FrameArg,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ButterflyArgs {
    #[arg(long, default_value_t = 30)]
    pub q_max: i64,
    /// k samples per axis in each column
    #[arg(long, default_value_t = 3)]
    pub k_samples: usize,
    /// raster size of butterfly.pgm
    #[arg(long, default_value_t = 512)]
    pub pixels: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ChernArgs {
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    pub p: i64,
    #[arg(long, default_value_t = 3)]
    pub q: i64,
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
    #[arg(long, default_value_t = 256)]
    pub grid_max: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RlblArgs {
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    pub p: i64,
    #[arg(long, default_value_t = 3)]
    pub q: i64,
    #[arg(long, default_value_t = RLBL_S)]
    pub s: usize,
    /// quasienergy inside a bulk gap
    #[arg(long, allow_hyphen_values = true)]
    pub energy: Option<f64>,
    #[arg(long)]
    pub all_gaps: bool,
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct StripeArgs {
    #[arg(long, default_value_t = 60)]
    pub lx: usize,
    #[arg(long, default_value_t = 15)]
    pub left: usize,
    #[arg(long, default_value_t = 45)]
    pub right: usize,
    #[arg(long, default_value = "-1/3", value_parser = parse_flux, allow_hyphen_values = true)]
    pub phi_out: Flux,
    #[arg(long, default_value = "1/3", value_parser = parse_flux, allow_hyphen_values = true)]
    pub phi_in: Flux,
    #[arg(long, default_value_t = 256)]
    pub ky: usize,
    /// imprint the phases with this numerical aperture instead of the ideal gauge
    #[arg(long)]
    pub na: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub shift: f64,
    #[arg(long, default_value_t = LAMBDA_RATIO)]
    pub lambda_ratio: f64,
    #[arg(long, default_value_t = EDGE_WINDOW)]
    pub window: usize,
    #[arg(long, default_value_t = RLBL_S)]
    pub s: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Gaussian cone packet on a torus in a weak uniform field
    Cyclotron,
    /// single site on the rim of a quarter-disk island of opposite flux
    QuarterCircle,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EvolveArgs {
    #[arg(long, value_enum, default_value_t = Preset::QuarterCircle)]
    pub preset: Preset,
    #[arg(long, default_value_t = 40.0)]
    pub radius: f64,
    /// defaults to 400 (quarter-circle) or 1200 (cyclotron)
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub record: usize,
    /// flux per plaquette; defaults to 1/1200 (cyclotron) or 1/3 outside the island
    #[arg(long, value_parser = parse_ratio, allow_hyphen_values = true)]
    pub phi: Option<f64>,
    #[arg(long, default_value_t = 400)]
    pub lattice: usize,
    #[arg(long, default_value_t = 15.0)]
    pub sigma: f64,
    /// momentum offset from the Dirac point along kx
    #[arg(long, default_value_t = PI / 4.0, allow_hyphen_values = true)]
    pub dk: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EdgeArgs {
    #[arg(long, default_value_t = 40.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 400)]
    pub steps: usize,
    #[arg(long, default_value_t = 10)]
    pub record: usize,
    #[arg(long, default_value = "1/3", value_parser = parse_ratio, allow_hyphen_values = true)]
    pub phi_out: f64,
    #[arg(long, default_value = "-1/3", value_parser = parse_ratio, allow_hyphen_values = true)]
    pub phi_in: f64,
    /// remove the island (uniform `phi-out`)
    #[arg(long)]
    pub control: bool,
    #[arg(long)]
    pub na: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub shift: f64,
    #[arg(long, default_value_t = LAMBDA_RATIO)]
    pub lambda_ratio: f64,
    /// write every recorded probability map as PGM
    #[arg(long)]
    pub frames: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GapScanArgs {
    #[arg(long, default_value_t = 1)]
    pub p: i64,
    #[arg(long, default_value_t = 3)]
    pub q: i64,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub m: Vec<usize>,
    #[arg(long, default_value_t = 0.92)]
    pub na: f64,
    /// no blur (overrides `na`)
    #[arg(long)]
    pub ideal: bool,
    /// number of shifts on a uniform grid over [0, 1)
    #[arg(long, default_value_t = 20)]
    pub shifts: usize,
    #[arg(long, default_value_t = LAMBDA_RATIO)]
    pub lambda_ratio: f64,
    #[arg(long, default_value_t = 48)]
    pub grid: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PexArgs {
    #[arg(long, default_value = "1/3", value_parser = parse_ratio)]
    pub phi: f64,
    #[arg(long, default_value_t = 850.0)]
    pub v0: f64,
    #[arg(long, default_value_t = 3.0)]
    pub tau_max: f64,
    /// tau grid `tau_max * i / tau_points` for `i = 1..=tau_points`
    #[arg(long, default_value_t = 30)]
    pub tau_points: usize,
    /// also run the split-step oracle
    #[arg(long)]
    pub numeric: bool,
    #[arg(long, default_value_t = 128)]
    pub points_per_site: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SymmetryArgs {
    #[arg(long, default_value_t = 10)]
    pub q_max: i64,
    #[arg(long, default_value_t = 20)]
    pub k_points: usize,
    /// minimum torus side for the real-space checks
    #[arg(long, default_value_t = 12)]
    pub lattice: usize,
}

/// One output file.
#[derive(Clone, Debug)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub files: Vec<Artifact>,
    /// quality checks that failed; a non-empty list gives exit code 3
    pub failures: Vec<String>,
}

impl Outcome {
    fn push(&mut self, a: Artifact) {
        self.files.push(a);
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }
}

/// Pretty JSON with keys sorted (objects go through `serde_json::Value`).
pub fn json_artifact<T: Serialize>(name: &str, value: &T) -> Artifact {
    let v = serde_json::to_value(value).expect("serializable");
    let mut bytes = serde_json::to_vec_pretty(&v).expect("serializable");
    bytes.push(b'\n');
    Artifact { name: name.to_string(), bytes }
}

fn csv_artifact(name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Artifact> {
    let mut w = csv_writer(Vec::new());
    w.write_record(header).map_err(std::io::Error::from)?;
    for r in rows {
        w.write_record(&r).map_err(std::io::Error::from)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(Artifact { name: name.to_string(), bytes })
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

fn opt_real(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

/// Parameters and seed that key a cached result.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub params: serde_json::Value,
    pub seed: u64,
    pub tool_version: String,
}

impl RunConfig {
    pub fn new(cli: &Cli) -> Self {
        RunConfig {
            command: cli.command.name().to_string(),
            params: cli.command.params(),
            seed: cli.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("serializable");
        hex(&Sha256::digest(serde_json::to_vec(&v).expect("serializable")))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub files: Vec<FileEntry>,
    pub wall_clock_seconds: f64,
}

impl ResultManifest {
    fn new(config: &RunConfig, hash: &str, files: &[Artifact], seconds: f64) -> Self {
        ResultManifest {
            config_hash: hash.to_string(),
            tool_version: config.tool_version.clone(),
            config: serde_json::to_value(config).expect("serializable"),
            files: files
                .iter()
                .map(|a| FileEntry { name: a.name.clone(), sha256: hex(&Sha256::digest(&a.bytes)), bytes: a.bytes.len() })
                .collect(),
            wall_clock_seconds: seconds,
        }
    }
}

pub const MANIFEST: &str = "manifest.json";

/// Result cache rooted at `$MAGWALK_CACHE_DIR`, or `$XDG_CACHE_HOME/magwalk`, or
/// `$HOME/.cache/magwalk`.
#[derive(Clone, Debug)]
pub struct Cache {
    pub root: PathBuf,
}

impl Cache {
    pub fn from_env() -> Option<Self> {
        let root = std::env::var_os(CACHE_ENV)
            .map(PathBuf::from)
            .or_else(|| std::env::var_os("XDG_CACHE_HOME").map(|d| PathBuf::from(d).join("magwalk")))
            .or_else(|| std::env::var_os("HOME").map(|d| PathBuf::from(d).join(".cache").join("magwalk")))?;
        Some(Cache { root })
    }

    fn entry(&self, hash: &str) -> PathBuf {
        self.root.join(hash)
    }

    /// Files of a valid entry; a corrupted entry is removed.
    pub fn lookup(&self, hash: &str) -> Option<(ResultManifest, Vec<Artifact>)> {
        let dir = self.entry(hash);
        let text = fs::read(dir.join(MANIFEST)).ok()?;
        let valid = || -> Option<(ResultManifest, Vec<Artifact>)> {
            let m: ResultManifest = serde_json::from_slice(&text).ok()?;
            if m.config_hash != hash {
                return None;
            }
            let mut files = Vec::new();
            for f in &m.files {
                let bytes = fs::read(dir.join(&f.name)).ok()?;
                if bytes.len() != f.bytes || hex(&Sha256::digest(&bytes)) != f.sha256 {
                    return None;
                }
                files.push(Artifact { name: f.name.clone(), bytes });
            }
            Some((m, files))
        };
        let hit = valid();
        if hit.is_none() {
            let _ = fs::remove_dir_all(&dir);
        }
        hit
    }

    /// Writes the entry into a temporary directory and renames it into place.
    pub fn store(&self, hash: &str, files: &[Artifact], manifest: &ResultManifest) -> std::io::Result<()> {
        fs::create_dir_all(&self.root)?;
        let tmp = tempfile::Builder::new().prefix(".partial-").tempdir_in(&self.root)?;
        write_files(tmp.path(), files, manifest)?;
        let dest = self.entry(hash);
        if dest.exists() {
            fs::remove_dir_all(&dest)?;
        }
        fs::rename(tmp.keep(), dest)
    }
}

fn write_files(dir: &Path, files: &[Artifact], manifest: &ResultManifest) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for a in files {
        write_atomic(&dir.join(&a.name), &a.bytes)?;
    }
    write_atomic(&dir.join(MANIFEST), &json_artifact(MANIFEST, manifest).bytes)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Exit code for a library error: 2 for invalid input, 3 for numerical-quality failures.
pub fn exit_code(e: &WalkError) -> i32 {
    match e {
        WalkError::NotCoprime { .. }
        | WalkError::InvalidParameter { .. }
        | WalkError::DimensionMismatch { .. }
        | WalkError::Incommensurate { .. }
        | WalkError::NotInGap { .. }
        | WalkError::PacketOverflow(_) => EXIT_INVALID,
        WalkError::Io(_) => EXIT_IO,
        _ => EXIT_QUALITY,
    }
}

fn toml_value(key: &str, v: &toml::Value) -> std::result::Result<String, String> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        toml::Value::Array(a) => a.iter().map(|x| toml_value(key, x)).collect::<std::result::Result<Vec<_>, _>>().map(|v| v.join(",")),
        _ => Err(format!("config key {key}: unsupported value {v}")),
    }
}

/// Appends `--key=value` for every config-file entry that was not given on the command line.
fn merge_config(argv: Vec<OsString>) -> std::result::Result<Vec<OsString>, (i32, String)> {
    let mut cmd = Cli::command();
    cmd.build();
    let matches = match cmd.clone().try_get_matches_from(&argv) {
        Ok(m) => m,
        // clap reports the problem itself on the final parse
        Err(_) => return Ok(argv),
    };
    let Some(path) = matches.get_one::<PathBuf>("config") else { return Ok(argv) };
    let text = fs::read_to_string(path).map_err(|e| (EXIT_INVALID, format!("config {}: {e}", path.display())))?;
    let table: toml::Table = text.parse().map_err(|e| (EXIT_INVALID, format!("config {}: {e}", path.display())))?;
    let (sub_name, sub_matches) = matches.subcommand().expect("subcommand is required");
    let sub = cmd.find_subcommand(sub_name).expect("parsed subcommand exists");
    let mut out = argv;
    for (key, value) in &table {
        let id = key.replace('-', "_");
        if id == "config" {
            return Err((EXIT_INVALID, format!("config key {key}: nested config files are not supported")));
        }
        let Some(arg) = sub.get_arguments().find(|a| a.get_id() == id.as_str()) else {
            return Err((EXIT_INVALID, format!("config key {key}: unknown parameter for {sub_name}")));
        };
        if sub_matches.value_source(&id) == Some(ValueSource::CommandLine) {
            continue;
        }
        let long = arg.get_long().expect("every parameter has a long flag");
        let val = toml_value(key, value).map_err(|e| (EXIT_INVALID, e))?;
        if arg.get_action().takes_values() {
            out.push(format!("--{long}={val}").into());
        } else {
            match val.as_str() {
                "true" => out.push(format!("--{long}").into()),
                "false" => {}
                _ => return Err((EXIT_INVALID, format!("config key {key}: expected a boolean, got {val}"))),
            }
        }
    }
    Ok(out)
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match merge_config(argv) {
        Ok(a) => a,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            return code;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return EXIT_INVALID;
        }
    };
    pool.install(|| execute(&cli))
}

fn execute(cli: &Cli) -> i32 {
    if cli.selftest {
        return report_selftest(cli.command.name(), &selftest(&cli.command));
    }
    let config = RunConfig::new(cli);
    let hash = config.hash();
    let cache = Cache::from_env();
    if !cli.no_cache {
        if let Some((manifest, files)) = cache.as_ref().and_then(|c| c.lookup(&hash)) {
            if let Err(e) = write_files(&cli.out, &files, &manifest) {
                eprintln!("error: {e}");
                return EXIT_IO;
            }
            eprintln!("cache hit {hash}");
            return EXIT_OK;
        }
    }
    let start = Instant::now();
    let outcome = match compute(&cli.command, cli.seed) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let manifest = ResultManifest::new(&config, &hash, &outcome.files, start.elapsed().as_secs_f64());
    if let Err(e) = write_files(&cli.out, &outcome.files, &manifest) {
        eprintln!("error: {e}");
        return EXIT_IO;
    }
    if !outcome.failures.is_empty() {
        for f in &outcome.failures {
            eprintln!("quality check failed: {f}");
        }
        return EXIT_QUALITY;
    }
    if let Some(c) = cache {
        if let Err(e) = c.store(&hash, &outcome.files, &manifest) {
            eprintln!("warning: cache not written: {e}");
        }
    }
    EXIT_OK
}

/// Runs one command in memory.
pub fn compute(command: &Command, seed: u64) -> Result<Outcome> {
    match command {
        Command::Bands(a) => cmd_bands(a),
        Command::Butterfly(a) => cmd_butterfly(a),
        Command::Chern(a) => cmd_chern(a),
        Command::Rlbl(a) => cmd_rlbl(a),
        Command::Stripe(a) => cmd_stripe(a),
        Command::Evolve(a) => cmd_evolve(a),
        Command::Edge(a) => cmd_edge(a),
        Command::RealismGapScan(a) => cmd_gap_scan(a),
        Command::RealismPex(a) => cmd_pex(a),
        Command::Symmetry(a) => cmd_symmetry(a, seed),
    }
}

fn cmd_bands(a: &BandsArgs) -> Result<Outcome> {
    let flux = Flux::new(a.p, a.q)?;
    if a.grid < 2 {
        return Err(WalkError::param("grid", a.grid, "must be at least 2"));
    }
    let bands = band_structure_for_cell(&BlochCell::landau(flux), flux, a.grid, a.grid, a.frame.into())?;
    let nb = bands.n_bands();
    let mut cols = header(&["kx", "ky"]);
    cols.extend((1..=nb).map(|b| format!("E{b}")));
    let mut rows = Vec::with_capacity(a.grid * a.grid);
    for iy in 0..bands.ny {
        for ix in 0..bands.nx {
            let (kx, ky) = bands.k(ix, iy);
            let mut r = vec![fmt_real(kx), fmt_real(ky)];
            r.extend(bands.energies[bands.index(ix, iy)].iter().map(|&e| fmt_real(e)));
            rows.push(r);
        }
    }
    #[derive(Serialize)]
    struct Summary {
        flux: Flux,
        frame: FrameArg,
        grid: usize,
        band_min: Vec<f64>,
        band_max: Vec<f64>,
        gaps: GapTable,
    }
    let summary = Summary {
        flux,
        frame: a.frame,
        grid: a.grid,
        band_min: (0..nb).map(|b| bands.band_min(b)).collect(),
        band_max: (0..nb).map(|b| bands.band_max(b)).collect(),
        gaps: gap_table(&bands),
    };
    let mut out = Outcome::default();
    out.push(csv_artifact("bands.csv", &cols, rows)?);
    out.push(json_artifact("gaps.json", &summary));
    Ok(out)
}

fn cmd_butterfly(a: &ButterflyArgs) -> Result<Outcome> {
    if a.pixels < 2 {
        return Err(WalkError::param("pixels", a.pixels, "must be at least 2"));
    }
    let data = butterfly(a.q_max, a.k_samples)?;
    let mut rows = Vec::new();
    let n = a.pixels;
    let mut raster = vec![0.0; n * n];
    for col in &data.columns {
        let phi = col.flux.value();
        let px = ((phi * n as f64).floor() as usize).min(n - 1);
        for es in &col.energies {
            for &e in es {
                rows.push(vec![col.flux.p.to_string(), col.flux.q.to_string(), fmt_real(phi), fmt_real(e)]);
                let py = (((PI - e) / (2.0 * PI) * n as f64).floor() as usize).min(n - 1);
                raster[py * n + px] = 1.0;
            }
        }
    }
    let mut pgm = Vec::new();
    write_pgm_raw(&mut pgm, &raster, n, n)?;
    let mut out = Outcome::default();
    out.push(csv_artifact("butterfly.csv", &header(&["p", "q", "phi", "energy"]), rows)?);
    out.push(Artifact { name: "butterfly.pgm".into(), bytes: pgm });
    Ok(out)
}

/// Gap table of pure `p/q` with Dirac touchings removed.
fn bulk_table(flux: Flux, grid: usize) -> Result<GapTable> {
    bulk_gap_table(&BlochCell::landau(flux), flux, grid)
}

fn cmd_chern(a: &ChernArgs) -> Result<Outcome> {
    let flux = Flux::new(a.p, a.q)?;
    let cell = BlochCell::landau(flux);
    let table = bulk_table(flux, a.grid)?;
    #[derive(Serialize)]
    struct Group {
        bands: Vec<usize>,
        value: i64,
        grid: (usize, usize),
        gauge_check: f64,
        max_field: f64,
    }
    let groups: Vec<Group> = table
        .band_groups()
        .into_iter()
        .map(|g| {
            let r = chern_number_converged(&cell, flux, g, a.grid, a.grid_max)?;
            Ok(Group { bands: g.indices(), value: r.value, grid: r.grid, gauge_check: r.gauge_check, max_field: r.max_field })
        })
        .collect::<Result<_>>()?;
    let total: i64 = groups.iter().map(|g| g.value).sum();
    let mut out = Outcome::default();
    out.check(total == 0, format!("Chern numbers sum to {total}"));
    out.push(json_artifact("chern.json", &serde_json::json!({ "flux": flux, "groups": groups, "total": total, "gaps": table })));
    Ok(out)
}

#[derive(Serialize)]
struct Invariant {
    energy: f64,
    value: i64,
    raw_flow: f64,
    residual: f64,
    s: usize,
    probes: Vec<((f64, f64), i64)>,
}

impl From<&RlblResult> for Invariant {
    fn from(r: &RlblResult) -> Self {
        Invariant {
            energy: r.energy,
            value: r.value,
            raw_flow: r.raw_flow,
            residual: (r.raw_flow - r.value as f64).abs(),
            s: r.s,
            probes: r.probes.clone(),
        }
    }
}

fn cmd_rlbl(a: &RlblArgs) -> Result<Outcome> {
    let flux = Flux::new(a.p, a.q)?;
    let table = bulk_table(flux, a.grid)?;
    let results = match (a.energy, a.all_gaps) {
        (Some(e), false) => vec![rlbl_invariant(flux.p, flux.q, e, a.s, RLBL_PROBE, &table)?],
        (None, true) => rlbl_all_gaps(flux.p, flux.q, a.s, &table)?,
        _ => return Err(WalkError::param("energy", format!("{:?}", a.energy), "give exactly one of --energy or --all-gaps")),
    };
    let inv: Vec<Invariant> = results.iter().map(Invariant::from).collect();
    let mut out = Outcome::default();
    for i in &inv {
        out.check(i.residual < 1e-6, format!("RLBL residual {:e} at energy {}", i.residual, i.energy));
    }
    out.push(json_artifact("invariants.json", &serde_json::json!({ "flux": flux, "s": a.s, "invariants": inv, "gaps": table })));
    Ok(out)
}

/// Ideal or imprinted y-link phases of a column flux profile on a ring.
pub fn stripe_phases(profile: &[f64], phi_ref: f64, na: Option<f64>, shift: f64, lambda_ratio: f64) -> Result<Vec<f64>> {
    let ideal = ring_phases(profile)?;
    match na {
        None => Ok(ideal),
        Some(na) => {
            if !(na > 0.0 && na <= 1.0) {
                return Err(WalkError::param("na", na, "numerical aperture must lie in (0, 1]"));
            }
            let ramp = Ramp::new(profile.to_vec(), true);
            Ok(imprint_row(&ramp, phi_ref, shift, psf_sigma(na, lambda_ratio), profile.len()))
        }
    }
}

fn cmd_stripe(a: &StripeArgs) -> Result<Outcome> {
    if !(a.left < a.right && a.right <= a.lx) {
        return Err(WalkError::param("left/right", format!("{}..{}", a.left, a.right), "need left < right <= lx"));
    }
    let profile = stripe_profile(a.lx, a.left, a.right, a.phi_out.value(), a.phi_in.value());
    let theta = stripe_phases(&profile, a.phi_in.value().abs(), a.na, a.shift, a.lambda_ratio)?;
    let ky = uniform_ky_grid(a.ky);
    let ribbon = ribbon_spectrum_from_phases(&theta, profile_edges(&profile), &ky, a.window)?;
    let (t_in, t_out) = (bulk_table(a.phi_in, 32)?, bulk_table(a.phi_out, 32)?);
    let mut reports = Vec::new();
    let mut out = Outcome::default();
    for gap in &t_in.gaps {
        let Some(g_out) = t_out.find(gap.midgap) else { continue };
        let e = if g_out.contains(gap.midgap) { gap.midgap } else { g_out.midgap };
        let r_in = rlbl_invariant(a.phi_in.p, a.phi_in.q, e, a.s, RLBL_PROBE, &t_in)?.value;
        let r_out = rlbl_invariant(a.phi_out.p, a.phi_out.q, e, a.s, RLBL_PROBE, &t_out)?.value;
        let rep = bulk_boundary_check(&ribbon, r_in, r_out, gap);
        out.check(rep.holds(), format!("bulk-boundary count fails in gap at {}", gap.midgap));
        reports.push(serde_json::json!({ "r_inside": r_in, "r_outside": r_out, "report": rep, "holds": rep.holds() }));
    }
    let mut rows = Vec::new();
    for (j, &k) in ribbon.ky.iter().enumerate() {
        for (s, &e) in ribbon.energies[j].iter().enumerate() {
            rows.push(vec![
                j.to_string(),
                fmt_real(k),
                s.to_string(),
                fmt_real(e),
                fmt_real(ribbon.left_weight(j, s)),
                fmt_real(ribbon.right_weight(j, s)),
                fmt_real(ribbon.bulk_weight(j, s)),
            ]);
        }
    }
    out.push(csv_artifact("ribbon.csv", &header(&["iky", "ky", "state", "energy", "left_weight", "right_weight", "bulk_weight"]), rows)?);
    out.push(json_artifact("bulk_boundary.json", &serde_json::json!({ "edges": ribbon.edges, "gaps": reports })));
    Ok(out)
}

fn frame_files(out: &mut Outcome, maps: &[(usize, Vec<f64>)], geometry: LatticeGeometry) -> Result<()> {
    for (step, map) in maps.iter().filter(|(s, _)| *s > 0) {
        let mut bytes = Vec::new();
        write_pgm(&mut bytes, map, geometry)?;
        out.push(Artifact { name: format!("frame_{step:05}.pgm"), bytes });
    }
    Ok(())
}

fn cmd_evolve(a: &EvolveArgs) -> Result<Outcome> {
    let mut out = Outcome::default();
    match a.preset {
        Preset::Cyclotron => {
            let steps = a.steps.unwrap_or(1200);
            let l = a.lattice;
            let geo = LatticeGeometry::torus(l, l);
            let c = (l / 2) as f64;
            let gauge = GaugeField::landau_with_seam(a.phi.unwrap_or(1.0 / 1200.0), geo, c);
            let walk = RealSpaceWalk::from_gauge(&gauge, TimeFrame::Original, 1)?;
            let spec = WavePacketSpec {
                center: (c, c),
                sigma: a.sigma,
                k0: (PI / 2.0 + a.dk, -PI / 2.0),
                band_select: BandSelect::UpperCone,
                spin: (C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
            };
            let psi = prepare_packet_in_gauge(&spec, &gauge)?;
            let ev = evolve(&psi, &walk, steps, a.record)?;
            let analysis = TrajectoryAnalysis::from_evolution(&ev);
            frame_files(&mut out, &ev.maps, geo)?;
            let mut traj = Vec::new();
            write_trajectory_csv(&mut traj, &ev.center_of_mass)?;
            out.push(Artifact { name: "trajectory.csv".into(), bytes: traj });
            out.push(json_artifact("summary.json", &serde_json::json!({ "circle": analysis.circle, "leakage": ev.leakage, "steps": steps })));
        }
        Preset::QuarterCircle => {
            let steps = a.steps.unwrap_or(400);
            let phi = a.phi.unwrap_or(1.0 / 3.0);
            let mut exp = EdgeExperiment::quarter_circle(a.radius, phi, -phi, steps);
            exp.record_every = a.record;
            let walk = exp.walk()?;
            let psi = SpinorField::single_site(exp.geometry, exp.start.0, exp.start.1, exp.spin);
            let ev = evolve(&psi, &walk, steps, a.record)?;
            frame_files(&mut out, &ev.maps, exp.geometry)?;
            let mut traj = Vec::new();
            write_trajectory_csv(&mut traj, &ev.center_of_mass)?;
            out.push(Artifact { name: "trajectory.csv".into(), bytes: traj });
            out.push(json_artifact("summary.json", &serde_json::json!({ "start": exp.start, "leakage": ev.leakage, "steps": steps })));
        }
    }
    Ok(out)
}

/// Quarter-disk experiment for the `edge` parameters, and its walk (imprinted when `na` is set).
pub fn edge_setup(a: &EdgeArgs) -> Result<(EdgeExperiment, RealSpaceWalk)> {
    let phi_in = if a.control { a.phi_out } else { a.phi_in };
    let mut exp = EdgeExperiment::quarter_circle(a.radius, a.phi_out, phi_in, a.steps);
    exp.record_every = a.record;
    let walk = match a.na {
        None => exp.walk()?,
        Some(na) => {
            if !(na > 0.0 && na <= 1.0) {
                return Err(WalkError::param("na", na, "numerical aperture must lie in (0, 1]"));
            }
            let flux = exp.landscape().plaquette_flux(exp.geometry)?;
            let theta = imprint_2d(exp.geometry, &flux, a.phi_out.abs(), a.shift, psf_sigma(na, a.lambda_ratio));
            RealSpaceWalk::from_site_phases(exp.geometry, &theta, TimeFrame::Original, 1)?
        }
    };
    Ok((exp, walk))
}

fn cmd_edge(a: &EdgeArgs) -> Result<Outcome> {
    let (exp, walk) = edge_setup(a)?;
    let rep = exp.run_with(&walk)?;
    let mut out = Outcome::default();
    let rows = rep.analysis.boundary_fraction.iter().map(|(s, f)| vec![s.to_string(), fmt_real(*f)]);
    out.push(csv_artifact("boundary_fraction.csv", &header(&["step", "boundary_fraction"]), rows)?);
    let max_increase = rep.transits.iter().map(|t| t.bulk_increase()).fold(f64::NEG_INFINITY, f64::max);
    out.push(json_artifact(
        "edge_summary.json",
        &serde_json::json!({
            "start": exp.start,
            "control": a.control,
            "min_fraction_after_20": rep.min_fraction_after(20),
            "transits": rep.transits,
            "max_bulk_increase": if rep.transits.is_empty() { None } else { Some(max_increase) },
            "leakage": rep.leakage,
        }),
    ));
    if a.frames {
        frame_files(&mut out, &rep.maps, exp.geometry)?;
    }
    Ok(out)
}

fn cmd_gap_scan(a: &GapScanArgs) -> Result<Outcome> {
    let flux = Flux::new(a.p, a.q)?;
    if a.shifts < 1 {
        return Err(WalkError::param("shifts", a.shifts, "need at least one shift"));
    }
    let shifts: Vec<f64> = (0..a.shifts).map(|i| i as f64 / a.shifts as f64).collect();
    let na = if a.ideal { None } else { Some(a.na) };
    let rows = gap_width_scan(flux, &a.m, na, &shifts, a.lambda_ratio, a.grid)?;
    let mut out = Outcome::default();
    let csv_rows = rows.iter().map(|r| vec![r.m.to_string(), fmt_real(r.shift), fmt_real(r.min_gap)]);
    out.push(csv_artifact("gap_scan.csv", &header(&["m", "shift", "gap_width"]), csv_rows)?);
    Ok(out)
}

fn cmd_pex(a: &PexArgs) -> Result<Outcome> {
    if let Some(w) = shallow_lattice_warning(a.v0) {
        eprintln!("warning: {w}");
    }
    if a.tau_points < 1 || !(a.tau_max > 0.0) {
        return Err(WalkError::param("tau_points", a.tau_points, "need a positive tau range"));
    }
    use rayon::prelude::*;
    let grid = SplitStepGrid { points_per_site: a.points_per_site, ..SplitStepGrid::default() };
    let taus: Vec<f64> = (1..=a.tau_points).map(|i| a.tau_max * i as f64 / a.tau_points as f64).collect();
    let budgets = taus
        .par_iter()
        .map(|&t| excitation_budget(a.phi, a.v0, t, a.numeric.then_some(grid)))
        .collect::<Result<Vec<_>>>()?;
    let rows = budgets
        .iter()
        .map(|b| vec![fmt_real(b.tau_over_tau_ho), fmt_real(b.p_ex_perturbative), opt_real(b.p_ex_numeric)]);
    let mut out = Outcome::default();
    out.push(csv_artifact("pex.csv", &header(&["tau_over_tauHO", "p_pert", "p_numeric"]), rows)?);
    Ok(out)
}

/// Reduced fluxes `p/q` with `1 <= q <= q_max` in `[0, 1)`.
pub fn flux_list(q_max: i64) -> Vec<Flux> {
    (1..=q_max)
        .flat_map(|q| (0..q).filter(move |&p| gcd(p as u64, q as u64) == 1).map(move |p| Flux { p, q }))
        .collect()
}

/// Torus side: the smallest multiple of `lcm(q, 2)` that is at least `min_side`.
pub fn symmetry_torus(q: usize, min_side: usize) -> LatticeGeometry {
    let base = if q % 2 == 0 { q } else { 2 * q };
    let l = base * min_side.div_ceil(base).max(1);
    LatticeGeometry::torus(l, l)
}

#[derive(Serialize)]
struct FluxReport {
    flux: Flux,
    reports: Vec<SymmetryReport>,
}

/// Every Bloch and real-space symmetry residual for one flux.
pub fn symmetry_reports(flux: Flux, k_points: usize, lattice: usize, seed: u64) -> Result<Vec<SymmetryReport>> {
    let mut reports = bloch_suite(flux.p, flux.q, k_points, seed)?;
    let gauge = GaugeField::landau(flux, symmetry_torus(flux.q as usize, lattice))?;
    reports.push(check_alternating_sublattice(&gauge, TimeFrame::Original, seed)?);
    reports.push(check_conserved_sublattice(&gauge, TimeFrame::Original, seed)?);
    for frame in TimeFrame::ALL {
        let mut r = check_particle_hole_real(&gauge, frame, seed)?;
        r.name = format!("{}_{frame:?}", r.name).to_lowercase();
        reports.push(r);
    }
    Ok(reports)
}

fn cmd_symmetry(a: &SymmetryArgs, seed: u64) -> Result<Outcome> {
    use rayon::prelude::*;
    if a.q_max < 1 {
        return Err(WalkError::param("q_max", a.q_max, "must be at least 1"));
    }
    let all = flux_list(a.q_max)
        .par_iter()
        .map(|&f| Ok(FluxReport { flux: f, reports: symmetry_reports(f, a.k_points, a.lattice, seed)? }))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Outcome::default();
    for fr in &all {
        for r in &fr.reports {
            out.check(r.pass, format!("{} residual {:e} at flux {}/{}", r.name, r.residual, fr.flux.p, fr.flux.q));
        }
    }
    out.push(json_artifact("symmetry.json", &all));
    Ok(out)
}

/// Named pass/fail results of a subcommand's identity checks.
pub fn selftest(command: &Command) -> Vec<(String, bool)> {
    let checks: Vec<(&str, fn() -> Result<bool>)> = match command {
        Command::Bands(_) => vec![
            ("coin is unitary", st_coin_unitary),
            ("coin squared is exp(-i sigma_y pi/2)", st_coin_square),
            ("zero field step at k = 0", st_zero_field_origin),
            ("zero field Dirac points give W = +-1", st_zero_field_dirac),
            ("log of simple unitaries", st_effective_hamiltonian),
            ("band edges mirror symmetric at flux 1/3", st_band_edge_mirror),
            ("gap widths invariant under a constant shift", st_gap_shift),
        ],
        Command::Butterfly(_) => vec![("q = 3 column matches the flux 1/3 bands", st_column_matches), ("flux periodicity", st_flux_periodicity)],
        Command::Chern(_) => vec![("pure gauge carries no flux", st_pure_gauge), ("reversed contour negates the winding", st_reversed_contour)],
        Command::Rlbl(_) => vec![("spectral flow operator is unitary", st_flow_unitary), ("zero probe flux folds the spectrum", st_flow_folding)],
        Command::Stripe(_) => vec![("uniform ring has no edges", st_uniform_ribbon_edges), ("uniform ribbon has no net crossings", st_uniform_ribbon_crossings)],
        Command::Evolve(_) | Command::Edge(_) => vec![
            ("step preserves the norm", st_norm),
            ("packet is normalized", st_packet_norm),
            ("zero field sublattice support", st_parity_support),
        ],
        Command::RealismGapScan(_) => vec![("unblurred profile is the Landau gauge", st_ideal_profile), ("ideal profile reproduces the bands", st_ideal_bands)],
        Command::RealismPex(_) => vec![
            ("sinc zero at tau = tau_HO", st_pex_zero),
            ("depth scaling", st_pex_scaling),
            ("no gradient, no excitation", st_pex_no_field),
        ],
        Command::Symmetry(_) => vec![("zero field Bloch identities", st_zero_field_bloch), ("spectrum of -W", st_minus_w)],
    };
    checks.into_iter().map(|(name, f)| (name.to_string(), f().unwrap_or(false))).collect()
}

fn report_selftest(name: &str, results: &[(String, bool)]) -> i32 {
    for (check, ok) in results {
        println!("{} {name}: {check}", if *ok { "PASS" } else { "FAIL" });
    }
    if results.iter().all(|r| r.1) {
        EXIT_OK
    } else {
        EXIT_QUALITY
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn mat2(a: [[C64; 2]; 2]) -> CMatrix {
    CMatrix::from_fn(2, 2, |i, j| a[i][j])
}

fn st_coin_unitary() -> Result<bool> {
    let m = Coin::default().0;
    Ok((m * m.adjoint() - nalgebra::Matrix2::identity()).iter().all(|z| z.norm() < 1e-15))
}

fn st_coin_square() -> Result<bool> {
    let m = Coin::default().0;
    let want = nalgebra::Matrix2::new(c(0.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0));
    Ok((m * m - want).iter().all(|z| z.norm() < 1e-15))
}

fn st_zero_field_origin() -> Result<bool> {
    let w = bloch_step_operator(0, 1, 0.0, 0.0, TimeFrame::Original)?.matrix;
    let want = mat2([[c(0.0, 0.0), c(-1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]]);
    let mut e = eigenphases(&w, 0.0);
    e.sort_by(f64::total_cmp);
    Ok(max_abs(&(w - want)) < 1e-14 && (e[0] + PI / 2.0).abs() < 1e-14 && (e[1] - PI / 2.0).abs() < 1e-14)
}

fn st_zero_field_dirac() -> Result<bool> {
    let id = CMatrix::identity(2, 2);
    let a = bloch_step_operator(0, 1, PI / 2.0, -PI / 2.0, TimeFrame::Original)?.matrix;
    let b = bloch_step_operator(0, 1, PI / 2.0, PI / 2.0, TimeFrame::Original)?.matrix;
    Ok(max_abs(&(a - &id)) < 1e-14 && max_abs(&(b + id)) < 1e-14)
}

fn st_effective_hamiltonian() -> Result<bool> {
    let h0 = effective_hamiltonian(&CMatrix::identity(2, 2), 0.0)?;
    let u = mat2([[c(0.0, 0.0), c(-1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]]);
    let h = effective_hamiltonian(&u, 0.0)?;
    let sy = mat2([[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]]) * c(PI / 2.0, 0.0);
    Ok(max_abs(&h0.matrix) < 1e-14 && max_abs(&(h.matrix - sy)) < 1e-12)
}

fn st_band_edge_mirror() -> Result<bool> {
    let f = Flux::new(1, 3)?;
    let b = band_structure_for_cell(&BlochCell::landau(f), f, 16, 16, TimeFrame::Original)?;
    let nb = b.n_bands();
    Ok((0..nb).all(|i| (b.band_min(i) + b.band_max(nb - 1 - i)).abs() < 1e-10))
}

fn st_gap_shift() -> Result<bool> {
    let f = Flux::new(1, 3)?;
    let b = band_structure_for_cell(&BlochCell::landau(f), f, 16, 16, TimeFrame::Original)?;
    let mut shifted = b.clone();
    for es in shifted.energies.iter_mut() {
        for e in es.iter_mut() {
            *e = crate::linalg::wrap_angle(*e + 0.3);
        }
        es.sort_by(f64::total_cmp);
    }
    let widths = |t: GapTable| {
        let mut w: Vec<f64> = t.gaps.iter().map(|g| g.width).collect();
        w.sort_by(f64::total_cmp);
        w
    };
    let (a, s) = (widths(gap_table(&b)), widths(gap_table(&shifted)));
    Ok(a.len() == s.len() && a.iter().zip(&s).all(|(x, y)| (x - y).abs() < 1e-12))
}

fn st_column_matches() -> Result<bool> {
    let f = Flux::new(1, 3)?;
    let col = butterfly_column(f, 4);
    let a = 2.0 * PI / 3.0;
    let cell = BlochCell::landau(f);
    Ok(col.energies.iter().enumerate().all(|(i, e)| {
        let (kx, ky) = (-a / 2.0 + a * (i % 4) as f64 / 4.0, -PI + 2.0 * PI * (i / 4) as f64 / 4.0);
        e.len() == 6 && phase_multiset_distance(e, &eigenphases(&cell.step(kx, ky, TimeFrame::Original), 0.0)) < 1e-12
    }))
}

fn st_flux_periodicity() -> Result<bool> {
    let (a, b) = (BlochCell::landau(Flux::new(1, 3)?), BlochCell::landau(Flux::new(-2, 3)?));
    Ok([(0.1, 0.2), (-0.3, 1.7), (0.9, -2.5)].iter().all(|&(kx, ky)| {
        let ea = eigenphases(&a.step(kx, ky, TimeFrame::Original), 0.0);
        let eb = eigenphases(&b.step(kx, ky, TimeFrame::Original), 0.0);
        phase_multiset_distance(&ea, &eb) < 1e-10
    }))
}

fn st_pure_gauge() -> Result<bool> {
    let geo = LatticeGeometry::torus(8, 8);
    let lambda: Vec<f64> = (0..geo.sites()).map(|i| (i as f64 * 0.731).sin() * 3.0).collect();
    let g = GaugeField::zero(geo).gauge_transform(&lambda);
    Ok(g.plaquette_flux_grid().iter().all(|f| crate::linalg::wrap_angle(2.0 * PI * f).abs() < 1e-12))
}

fn st_reversed_contour() -> Result<bool> {
    use crate::topology::{winding_number, Contour};
    let h = |kx: f64, ky: f64| Ok(CMatrix::from_element(1, 1, c(kx - 0.2, ky + 0.1)));
    let contour = Contour::Circle { center: (0.2, -0.1), radius: 0.5 };
    Ok(winding_number(h, &contour, false)? == -winding_number(h, &contour, true)?)
}

fn st_flow_unitary() -> Result<bool> {
    let u = spectral_flow_operator(1, 3, 2.0 * PI / 15.0, 0.0, 0.1, 0.1, 15)?;
    Ok(unitarity_defect(&u) < 1e-12)
}

fn st_flow_folding() -> Result<bool> {
    let s = 5;
    let (kx, ky) = (0.1, 0.1);
    let u = spectral_flow_operator(1, 3, 0.0, 0.0, kx, ky, s)?;
    let cell = BlochCell::landau(Flux::new(1, 3)?);
    let a = 2.0 * PI / 3.0;
    let mut want = Vec::new();
    for j in 0..s {
        want.extend(eigenphases(&cell.step(kx + a * j as f64 / s as f64, ky, TimeFrame::Original), 0.0));
    }
    Ok(phase_multiset_distance(&eigenphases(&u, 0.0), &want) < 1e-10)
}

fn st_uniform_ribbon_edges() -> Result<bool> {
    let profile = vec![1.0 / 3.0; 6];
    let r = ribbon_spectrum(&profile, &uniform_ky_grid(16), 1)?;
    Ok(r.edges.is_empty() && (0..r.ky.len()).all(|j| (0..2 * r.lx).all(|s| r.bulk_weight(j, s) > 0.5)))
}

fn st_uniform_ribbon_crossings() -> Result<bool> {
    let f = Flux::new(1, 3)?;
    let table = bulk_table(f, 16)?;
    let r = ribbon_spectrum(&vec![1.0 / 3.0; 30], &uniform_ky_grid(64), EDGE_WINDOW)?;
    Ok(table.gaps.iter().all(|g| {
        let rep = bulk_boundary_check(&r, 1, 1, g);
        rep.crossings.iter().map(|c| c.sign).sum::<i64>() == 0
    }))
}

fn st_norm() -> Result<bool> {
    let geo = LatticeGeometry::torus(12, 12);
    let walk = RealSpaceWalk::from_gauge(&GaugeField::zero(geo), TimeFrame::Original, 1)?;
    let mut s = crate::symmetry::random_states(&GaugeField::zero(geo), 1, 7).remove(0);
    let mut scratch = Vec::new();
    for _ in 0..20 {
        walk.step(&mut s, &mut scratch)?;
    }
    Ok((s.norm_sqr() - 1.0).abs() < 1e-12)
}

fn st_packet_norm() -> Result<bool> {
    let spec = WavePacketSpec {
        center: (32.0, 32.0),
        sigma: 4.0,
        k0: (PI / 2.0 + 0.3, -PI / 2.0),
        band_select: BandSelect::UpperCone,
        spin: (c(1.0, 0.0), c(0.0, 0.0)),
    };
    let p = prepare_packet(&spec, LatticeGeometry::torus(64, 64))?;
    Ok((p.norm_sqr() - 1.0).abs() < 1e-12)
}

fn st_parity_support() -> Result<bool> {
    let geo = LatticeGeometry::torus(16, 16);
    let walk = RealSpaceWalk::from_gauge(&GaugeField::zero(geo), TimeFrame::Original, 1)?;
    let psi = SpinorField::single_site(geo, 5, 6, (c(1.0, 0.0), c(0.0, 0.0)));
    let ev = evolve(&psi, &walk, 7, 1)?;
    Ok(ev.final_state.parity_weights()[0] < 1e-24)
}

fn st_ideal_profile() -> Result<bool> {
    Ok(sawtooth_profile(1.0 / 3.0, 1, 0.5, None, LAMBDA_RATIO, 24)?.max_site_error() < 1e-12)
}

fn st_ideal_bands() -> Result<bool> {
    let f = Flux::new(1, 3)?;
    let p = sawtooth_profile(1.0 / 3.0, 1, 0.5, None, LAMBDA_RATIO, 3)?;
    let (a, b) = (BlochCell::landau(f), BlochCell::from_y_phases(p.superlattice_phases()));
    Ok([(0.1, 0.2), (-0.5, 2.9), (0.7, -1.1)].iter().all(|&(kx, ky)| {
        let ea = eigenphases(&a.step(kx, ky, TimeFrame::Original), 0.0);
        let eb = eigenphases(&b.step(kx, ky, TimeFrame::Original), 0.0);
        phase_multiset_distance(&ea, &eb) < 1e-10
    }))
}

fn st_pex_zero() -> Result<bool> {
    Ok(p_ex_perturbative(1.0 / 3.0, 850.0, 1.0) == 0.0)
}

fn st_pex_scaling() -> Result<bool> {
    let (a, b) = (p_ex_perturbative(1.0 / 3.0, 850.0, 0.3), p_ex_perturbative(1.0 / 3.0, 1700.0, 0.3));
    Ok((b / a - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12)
}

fn st_pex_no_field() -> Result<bool> {
    Ok(p_ex_splitstep(0.0, 850.0, 0.5, SplitStepGrid::default())? < 1e-12)
}

fn st_zero_field_bloch() -> Result<bool> {
    Ok(bloch_suite(0, 1, 16, crate::symmetry::DEFAULT_SEED)?.iter().all(|r| r.residual < 1e-13))
}

fn st_minus_w() -> Result<bool> {
    let g = GaugeField::landau(Flux::new(1, 4)?, LatticeGeometry::torus(8, 8))?;
    Ok(check_alternating_sublattice(&g, TimeFrame::Original, 3)?.pass)
}
