//! Experiment configuration.
//!
//! One flat record serves every subcommand; precedence is flags over config
//! file over defaults. The canonical `key = value` echo written into run
//! manifests re-parses to an identical record, which is what makes manifests
//! replayable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Parser;
use delta_lab_core::{LabError, Result};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CommandKind {
    Sieve,
    Delta,
    Ms,
    JutilaCompare,
    Fit,
    ZetaMoment,
    EMs,
    Perron,
    Omega,
    Beta,
}

impl CommandKind {
    pub const ALL: [CommandKind; 10] = [
        CommandKind::Sieve,
        CommandKind::Delta,
        CommandKind::Ms,
        CommandKind::JutilaCompare,
        CommandKind::Fit,
        CommandKind::ZetaMoment,
        CommandKind::EMs,
        CommandKind::Perron,
        CommandKind::Omega,
        CommandKind::Beta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Sieve => "sieve",
            CommandKind::Delta => "delta",
            CommandKind::Ms => "ms",
            CommandKind::JutilaCompare => "jutila-compare",
            CommandKind::Fit => "fit",
            CommandKind::ZetaMoment => "zeta-moment",
            CommandKind::EMs => "e-ms",
            CommandKind::Perron => "perron",
            CommandKind::Omega => "omega",
            CommandKind::Beta => "beta",
        }
    }

    fn parse(s: &str) -> Result<CommandKind> {
        CommandKind::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                LabError::Validation(format!(
                    "unknown command `{s}`; expected one of {}",
                    command_list()
                ))
            })
    }
}

fn command_list() -> String {
    CommandKind::ALL
        .iter()
        .map(|c| c.name())
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Precision {
    Standard,
    Extended,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::Standard => "standard",
            Precision::Extended => "extended",
        }
    }

    fn parse(s: &str) -> Result<Precision> {
        match s {
            "standard" => Ok(Precision::Standard),
            "extended" => Ok(Precision::Extended),
            other => Err(LabError::Validation(format!(
                "precision must be `standard` or `extended`, got `{other}`"
            ))),
        }
    }
}

/// Raw command line; every field optional so that file and default layers
/// can fill the gaps.
#[derive(Parser, Debug)]
#[command(
    name = "delta-lab",
    version,
    about = "Numerical laboratory for generalized divisor error terms"
)]
pub struct Cli {
    /// Experiment: sieve | delta | ms | jutila-compare | fit | zeta-moment | e-ms | perron | omega | beta
    pub command: Option<String>,
    /// Plain-text `key = value` config file; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Divisor order k
    #[arg(long)]
    pub k: Option<u32>,
    /// Range anchor X (real for delta/e-ms/perron, integer elsewhere)
    #[arg(long = "X")]
    pub x: Option<f64>,
    /// Interval length h
    #[arg(long, allow_negative_numbers = true)]
    pub h: Option<f64>,
    /// Comma-separated integer h values, e.g. 16,32,64
    #[arg(long = "h-grid")]
    pub h_grid: Option<String>,
    /// Real part of s for zeta-moment
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Integration height T for zeta-moment and perron
    #[arg(long = "T")]
    pub t: Option<f64>,
    /// Sample count for omega scans
    #[arg(long)]
    pub samples: Option<u64>,
    /// Gauss-Legendre order for unit-cell quadrature (8, 16, 32)
    #[arg(long = "quad-order")]
    pub quad_order: Option<u32>,
    /// Minimum node budget for the oscillatory series integrals
    #[arg(long = "quad-nodes")]
    pub quad_nodes: Option<u32>,
    /// Worker threads; falls back to DELTA_LAB_THREADS, then machine parallelism
    #[arg(long)]
    pub workers: Option<usize>,
    /// Checkpoint cache directory
    #[arg(long = "cache-dir")]
    pub cache_dir: Option<PathBuf>,
    /// Output CSV path (default <command>.csv)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional two-column plot-data file
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Numeric output profile: standard | extended
    #[arg(long)]
    pub precision: Option<String>,
}

/// Fully resolved configuration.
#[derive(Clone, PartialEq, Debug)]
pub struct ExperimentConfig {
    pub command: CommandKind,
    pub k: u32,
    pub x: Option<f64>,
    pub h: Option<f64>,
    pub h_grid: Option<Vec<u64>>,
    pub sigma: f64,
    pub t: Option<f64>,
    pub samples: u64,
    pub quad_order: u32,
    pub quad_nodes: u32,
    pub workers: usize,
    pub cache_dir: PathBuf,
    pub out: PathBuf,
    pub plot: Option<PathBuf>,
    pub precision: Precision,
}

const KNOWN_KEYS: [&str; 15] = [
    "command",
    "k",
    "X",
    "h",
    "h_grid",
    "sigma",
    "T",
    "samples",
    "quad_order",
    "quad_nodes",
    "workers",
    "cache_dir",
    "out",
    "plot",
    "precision",
];

fn parse_key_value_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LabError::Resource(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            LabError::Validation(format!(
                "{}:{}: expected `key = value`, got `{line}`",
                path.display(),
                idx + 1
            ))
        })?;
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(LabError::Validation(format!(
                "{}:{}: unknown config key `{key}`; known keys: {}",
                path.display(),
                idx + 1,
                KNOWN_KEYS.join(", ")
            )));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(LabError::Validation(format!(
                "{}:{}: duplicate config key `{key}`",
                path.display(),
                idx + 1
            )));
        }
    }
    Ok(map)
}

fn parse_as<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse().map_err(|_| {
        LabError::Validation(format!(
            "config key `{key}`: cannot parse `{raw}` as {}",
            std::any::type_name::<T>()
        ))
    })
}

/// Flag value, else file value, else None.
fn layered<T: std::str::FromStr>(
    flag: Option<T>,
    file: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match file.get(key) {
        Some(raw) => Ok(Some(parse_as(key, raw)?)),
        None => Ok(None),
    }
}

fn parse_grid(raw: &str) -> Result<Vec<u64>> {
    let grid: Vec<u64> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_as::<u64>("h_grid", s))
        .collect::<Result<_>>()?;
    if grid.is_empty() {
        return Err(LabError::Validation("h_grid must list at least one value".into()));
    }
    Ok(grid)
}

fn workers_from_environment() -> Result<usize> {
    match std::env::var("DELTA_LAB_THREADS") {
        Ok(raw) => {
            let n: usize = raw.parse().map_err(|_| {
                LabError::Validation(format!(
                    "DELTA_LAB_THREADS must be a positive integer, got `{raw}`"
                ))
            })?;
            if n == 0 {
                return Err(LabError::Validation(
                    "DELTA_LAB_THREADS must be a positive integer, got `0`".into(),
                ));
            }
            Ok(n)
        }
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Merges flags, optional config file, and defaults into a full config.
pub fn resolve(cli: Cli) -> Result<ExperimentConfig> {
    let file = match &cli.config {
        Some(path) => parse_key_value_file(path)?,
        None => BTreeMap::new(),
    };

    let command_name = cli
        .command
        .or_else(|| file.get("command").cloned())
        .ok_or_else(|| {
            LabError::Validation(format!(
                "missing command: pass one of {} as the first argument or set `command = ...` in the config file",
                command_list()
            ))
        })?;
    let command = CommandKind::parse(&command_name)?;

    let k = layered(cli.k, &file, "k")?.unwrap_or(2);
    let x = layered(cli.x, &file, "X")?;
    let h = layered(cli.h, &file, "h")?;
    let h_grid = match cli.h_grid.or_else(|| file.get("h_grid").cloned()) {
        Some(raw) => Some(parse_grid(&raw)?),
        None => None,
    };
    let sigma = layered(cli.sigma, &file, "sigma")?.unwrap_or(0.5);
    let t = layered(cli.t, &file, "T")?;
    let samples = layered(cli.samples, &file, "samples")?.unwrap_or(100_000);
    let quad_order = layered(cli.quad_order, &file, "quad_order")?.unwrap_or(16);
    let quad_nodes = layered(cli.quad_nodes, &file, "quad_nodes")?.unwrap_or(64);
    let workers = match layered(cli.workers, &file, "workers")? {
        Some(0) => {
            return Err(LabError::Validation("workers must be at least 1".into()));
        }
        Some(n) => n,
        None => workers_from_environment()?,
    };
    let cache_dir = layered(cli.cache_dir, &file, "cache_dir")?
        .unwrap_or_else(|| PathBuf::from("./.delta_lab_cache"));
    let out = layered(cli.out, &file, "out")?
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", command.name())));
    let plot = layered(cli.plot, &file, "plot")?;
    let precision = match cli.precision.or_else(|| file.get("precision").cloned()) {
        Some(raw) => Precision::parse(&raw)?,
        None => Precision::Standard,
    };

    Ok(ExperimentConfig {
        command,
        k,
        x,
        h,
        h_grid,
        sigma,
        t,
        samples,
        quad_order,
        quad_nodes,
        workers,
        cache_dir,
        out,
        plot,
        precision,
    })
}

impl ExperimentConfig {
    /// Canonical `key = value` echo; parsing it back (with no flags) yields
    /// an equal config.
    pub fn echo(&self) -> String {
        let mut lines = Vec::new();
        lines.push(format!("command = {}", self.command.name()));
        lines.push(format!("k = {}", self.k));
        if let Some(x) = self.x {
            lines.push(format!("X = {x}"));
        }
        if let Some(h) = self.h {
            lines.push(format!("h = {h}"));
        }
        if let Some(grid) = &self.h_grid {
            let joined: Vec<String> = grid.iter().map(u64::to_string).collect();
            lines.push(format!("h_grid = {}", joined.join(",")));
        }
        lines.push(format!("sigma = {}", self.sigma));
        if let Some(t) = self.t {
            lines.push(format!("T = {t}"));
        }
        lines.push(format!("samples = {}", self.samples));
        lines.push(format!("quad_order = {}", self.quad_order));
        lines.push(format!("quad_nodes = {}", self.quad_nodes));
        lines.push(format!("workers = {}", self.workers));
        lines.push(format!("cache_dir = {}", self.cache_dir.display()));
        lines.push(format!("out = {}", self.out.display()));
        if let Some(plot) = &self.plot {
            lines.push(format!("plot = {}", plot.display()));
        }
        lines.push(format!("precision = {}", self.precision.name()));
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<ExperimentConfig> {
        let mut argv = vec!["delta-lab"];
        argv.extend_from_slice(args);
        resolve(Cli::try_parse_from(argv).expect("clap accepts the flags"))
    }

    #[test]
    fn defaults_fill_unspecified_fields() {
        let cfg = parse(&["ms", "--X", "1000000", "--h", "100"]).unwrap();
        assert_eq!(cfg.command, CommandKind::Ms);
        assert_eq!(cfg.k, 2);
        assert_eq!(cfg.x, Some(1.0e6));
        assert_eq!(cfg.h, Some(100.0));
        assert_eq!(cfg.quad_order, 16);
        assert_eq!(cfg.precision, Precision::Standard);
        assert_eq!(cfg.out, PathBuf::from("ms.csv"));
        assert!(cfg.workers >= 1);
    }

    #[test]
    fn flags_override_file_and_file_overrides_defaults() {
        let dir = std::env::temp_dir().join(format!("delta-lab-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("exp.conf");
        std::fs::write(&path, "# comment\ncommand = ms\nk = 3\nh = 20\nquad_order = 32\n")
            .unwrap();
        let cfg = parse(&["--config", path.to_str().unwrap(), "--h", "10", "--X", "500"]).unwrap();
        assert_eq!(cfg.command, CommandKind::Ms);
        assert_eq!(cfg.k, 3, "file beats default");
        assert_eq!(cfg.h, Some(10.0), "flag beats file");
        assert_eq!(cfg.quad_order, 32);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn unknown_keys_and_malformed_lines_are_rejected() {
        let dir = std::env::temp_dir().join(format!("delta-lab-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let bad_key = dir.join("bad_key.conf");
        std::fs::write(&bad_key, "bogus = 1\n").unwrap();
        let err = parse(&["ms", "--config", bad_key.to_str().unwrap()]).unwrap_err();
        assert!(err.to_string().contains("unknown config key"), "{err}");
        let bad_line = dir.join("bad_line.conf");
        std::fs::write(&bad_line, "just words\n").unwrap();
        let err = parse(&["ms", "--config", bad_line.to_str().unwrap()]).unwrap_err();
        assert!(err.to_string().contains("key = value"), "{err}");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn grid_parsing_accepts_the_documented_shape() {
        let cfg = parse(&[
            "fit",
            "--X",
            "10000000",
            "--h-grid",
            "16,32,64,128,256,512,1024,2048",
        ])
        .unwrap();
        assert_eq!(
            cfg.h_grid,
            Some(vec![16, 32, 64, 128, 256, 512, 1024, 2048])
        );
        assert!(parse(&["fit", "--X", "100", "--h-grid", "16,abc"]).is_err());
    }

    #[test]
    fn echo_round_trips_to_an_equal_config() {
        let dir = std::env::temp_dir().join(format!("delta-lab-echo-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        for args in [
            vec!["ms", "--k", "3", "--X", "1000000", "--h", "100", "--workers", "4"],
            vec!["perron", "--X", "100.5", "--T", "500", "--precision", "extended"],
            vec![
                "fit",
                "--X",
                "10000000",
                "--h-grid",
                "16,32,64,128",
                "--plot",
                "fit.dat",
            ],
        ] {
            let original = parse(&args).unwrap();
            let path = dir.join("echo.conf");
            std::fs::write(&path, original.echo()).unwrap();
            let reparsed = parse(&["--config", path.to_str().unwrap()]).unwrap();
            assert_eq!(reparsed, original);
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn missing_command_is_an_actionable_error() {
        let err = parse(&["--X", "100"]).unwrap_err();
        assert!(err.to_string().contains("missing command"), "{err}");
        let err = parse(&["frobnicate"]).unwrap_err();
        assert!(err.to_string().contains("unknown command"), "{err}");
    }
}
