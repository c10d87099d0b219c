//! Command-line front end.
//!
//! Resolves a flat experiment config (flags over file over defaults),
//! dispatches to the library, and emits three artifacts: a CSV with the
//! command's declared schema, an optional two-column plot-data file, and a
//! run manifest whose config echo replays the run. Exit codes: 0 ok,
//! 2 validation, 3 resource guard, 4 internal consistency.

mod config;

use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;
use delta_lab_core::{delta, fit, jutila, mainterm, sieve, zeta, LabError, Result};
use sha2::{Digest, Sha256};

use config::{CommandKind, ExperimentConfig, Precision};

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match config::Cli::try_parse_from(std::env::args_os()) {
        Ok(cli) => cli,
        // clap owns usage errors (exit 2) and help/version (exit 0)
        Err(e) => e.exit(),
    };
    let cfg = match config::resolve(cli) {
        Ok(cfg) => cfg,
        Err(e) => return report_error(&e),
    };
    match run(&cfg) {
        Ok(()) => 0,
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &LabError) -> i32 {
    eprintln!("error: {e}");
    match e {
        LabError::Validation(_) => 2,
        LabError::Resource(_) => 3,
        LabError::Internal(_) => 4,
    }
}

/// One command's output before it is written anywhere.
struct Emitted {
    header: &'static str,
    rows: Vec<String>,
    plot: Vec<(f64, f64)>,
    stages: Vec<(String, u128)>,
    notes: Vec<String>,
}

impl Emitted {
    fn new(header: &'static str) -> Emitted {
        Emitted { header, rows: Vec::new(), plot: Vec::new(), stages: Vec::new(), notes: Vec::new() }
    }

    fn timed<T>(&mut self, label: impl Into<String>, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let value = f()?;
        self.stages.push((label.into(), start.elapsed().as_millis()));
        Ok(value)
    }
}

fn num(p: Precision, v: f64) -> String {
    match p {
        Precision::Standard => format!("{v:.12e}"),
        Precision::Extended => format!("{v:.16e}"),
    }
}

fn require_x(cfg: &ExperimentConfig) -> Result<f64> {
    cfg.x
        .ok_or_else(|| LabError::Validation(format!("{} requires --X", cfg.command.name())))
}

fn as_positive_int(name: &str, v: f64) -> Result<u64> {
    if v.is_finite() && v >= 1.0 && v <= 9.0e15 && v.fract() == 0.0 {
        Ok(v as u64)
    } else {
        Err(LabError::Validation(format!(
            "{name} must be a positive integer, got {v}"
        )))
    }
}

fn require_x_int(cfg: &ExperimentConfig) -> Result<u64> {
    as_positive_int("X", require_x(cfg)?)
}

/// Integer h values: the grid when given, else the single flag.
fn h_values(cfg: &ExperimentConfig) -> Result<Vec<u64>> {
    if let Some(grid) = &cfg.h_grid {
        return Ok(grid.clone());
    }
    match cfg.h {
        Some(h) => Ok(vec![as_positive_int("h", h)?]),
        None => Err(LabError::Validation(format!(
            "{} requires --h or --h-grid",
            cfg.command.name()
        ))),
    }
}

fn require_t(cfg: &ExperimentConfig) -> Result<f64> {
    cfg.t
        .ok_or_else(|| LabError::Validation(format!("{} requires --T", cfg.command.name())))
}

fn dispatch(cfg: &ExperimentConfig) -> Result<Emitted> {
    match cfg.command {
        CommandKind::Sieve => run_sieve(cfg),
        CommandKind::Delta => run_delta(cfg),
        CommandKind::Ms => run_ms(cfg),
        CommandKind::JutilaCompare => run_jutila_compare(cfg),
        CommandKind::Fit => run_fit(cfg),
        CommandKind::ZetaMoment => run_zeta_moment(cfg),
        CommandKind::EMs => run_e_ms(cfg),
        CommandKind::Perron => run_perron(cfg),
        CommandKind::Omega => run_omega(cfg),
        CommandKind::Beta => run_beta(cfg),
    }
}

fn run_sieve(cfg: &ExperimentConfig) -> Result<Emitted> {
    let mut out = Emitted::new("k,x,summatory");
    let x = require_x_int(cfg)?;
    let store = sieve::CheckpointStore::open(&cfg.cache_dir)?;
    let k = cfg.k;
    let workers = cfg.workers;
    let sum = out.timed("summatory", || sieve::summatory_dk_cached(k, x, workers, &store))?;
    out.rows.push(format!("{k},{x},{sum}"));
    out.plot.push((x as f64, sum as f64));
    Ok(out)
}

fn run_delta(cfg: &ExperimentConfig) -> Result<Emitted> {
    let mut out = Emitted::new("k,x,delta,main_term");
    let x = require_x(cfg)?;
    let (k, workers) = (cfg.k, cfg.workers);
    let d = out.timed("delta", || delta::delta_k(k, x, workers))?;
    let main = mainterm::eval_main(k, x)?;
    let main_text = match cfg.precision {
        Precision::Standard => num(cfg.precision, main.to_f64()),
        Precision::Extended => main.to_decimal_string(20),
    };
    out.rows.push(format!("{k},{x},{},{main_text}", num(cfg.precision, d)));
    out.plot.push((x, d));
    Ok(out)
}

fn run_ms(cfg: &ExperimentConfig) -> Result<Emitted> {
    let mut out = Emitted::new("k,X,h,discrete,continuous,discrepancy,bound,quad_order");
    let x = require_x_int(cfg)?;
    let (k, order, workers) = (cfg.k, cfg.quad_order, cfg.workers);
    for h in h_values(cfg)? {
        let r = out.timed(format!("h={h}"), || {
            delta::discrepancy_report(k, x, h, order, workers)
        })?;
        if r.range_warning {
            out.notes.push(format!(
                "h = {h} is outside the comfortable window [2, sqrt(X)/2]; the bound column is extrapolated"
            ));
        }
        out.rows.push(format!(
            "{k},{x},{h},{},{},{},{},{order}",
            num(cfg.precision, r.discrete),
            num(cfg.precision, r.continuous),
            num(cfg.precision, r.discrepancy),
            num(cfg.precision, r.bound),
        ));
        out.plot.push((h as f64, r.discrete));
    }
    Ok(out)
}

fn run_jutila_compare(cfg: &ExperimentConfig) -> Result<Emitted> {
    let mut out = Emitted::new("X,h,series_value,direct_value,rel_gap");
    if cfg.k != 2 {
        return Err(LabError::Validation(
            "jutila-compare is defined for k = 2 (pass --k 2 or omit it)".into(),
        ));
    }
    let x = require_x_int(cfg)?;
    let (nodes, order, workers) = (cfg.quad_nodes, cfg.quad_order, cfg.workers);
    for h in h_values(cfg)? {
        let series = out.timed(format!("series h={h}"), || {
            jutila::jutila_series(x, h, nodes, workers)
        })?;
        let direct = out.timed(format!("direct h={h}"), || {
            delta::continuous_mean_square(2, x, h, order, workers)
        })?;
        if series.empty_truncation {
            out.notes.push(format!("series truncation is empty at h = {h}"));
        }
        let rel_gap = (series.value - direct) / direct;
        out.rows.push(format!(
            "{x},{h},{},{},{}",
            num(cfg.precision, series.value),
            num(cfg.precision, direct),
            num(cfg.precision, rel_gap),
        ));
        out.plot.push((h as f64, rel_gap));
    }
    Ok(out)
}

fn run_fit(cfg: &ExperimentConfig) -> Result<Emitted> {
    let mut out = Emitted::new("j,c_j,stderr");
    let x = require_x_int(cfg)?;
    let grid = cfg.h_grid.as_ref().ok_or_else(|| {
        LabError::Validation("fit requires --h-grid (at least 8 comma-separated h values)".into())
    })?;
    let (k, workers) = (cfg.k, cfg.workers);
    let mut samples = Vec::with_capacity(grid.len());
    for &h in grid {
        let value = out.timed(format!("ms h={h}"), || {
            delta::discrete_mean_square(k, x, h, workers)
        })?;
        samples.push((x as f64, h as f64, value));
        let l = ((x as f64).sqrt() / h as f64).ln();
        out.plot.push((l, value / (x as f64 * h as f64)));
    }
    let fitted = out.timed("fit", || fit::fit_log_cubic(&samples))?;
    for j in 0..4 {
        out.rows.push(format!(
            "{j},{},{}",
            num(cfg.precision, fitted.c[j]),
            num(cfg.precision, fitted.stderr[j]),
        ));
    }
    out.notes.push(format!(
        "relative residual {:.3e} over {} samples",
        fitted.residual, fitted.sample_count
    ));
    Ok(out)
}

fn run_zeta_moment(cfg: &ExperimentConfig) -> Result<Emitted> {
    let mut out = Emitted::new("k,sigma,T,integral,exponent");
    let t = require_t(cfg)?;
    let (k, sigma, workers) = (cfg.k, cfg.sigma, cfg.workers);
    let m = out.timed("moment", || zeta::moment_integral(k, sigma, t, workers))?;
    out.rows.push(format!(
        "{k},{sigma},{t},{},{}",
        num(cfg.precision, m.integral),
        num(cfg.precision, m.exponent_estimate),
    ));
    out.notes.push(format!(
        "reference abscissa sigma({k}) = {}",
        m.sigma_k_reference
    ));
    out.plot.push((t, m.integral));
    Ok(out)
}

fn run_e_ms(cfg: &ExperimentConfig) -> Result<Emitted> {
    let mut out = Emitted::new("X,h,value,expected_main,ratio");
    let x = require_x(cfg)?;
    let workers = cfg.workers;
    let hs: Vec<f64> = if let Some(grid) = &cfg.h_grid {
        grid.iter().map(|&h| h as f64).collect()
    } else {
        match cfg.h {
            Some(h) => vec![h],
            None => {
                return Err(LabError::Validation("e-ms requires --h or --h-grid".into()));
            }
        }
    };
    for h in hs {
        let value = out.timed(format!("h={h}"), || zeta::e_short_diff_ms(x, h, workers))?;
        let expected = if h > 0.0 {
            jutila::expected_cubic_main(x, h)?
        } else {
            0.0
        };
        let ratio = if expected != 0.0 { value / expected } else { f64::NAN };
        out.rows.push(format!(
            "{x},{h},{},{},{}",
            num(cfg.precision, value),
            num(cfg.precision, expected),
            num(cfg.precision, ratio),
        ));
        out.plot.push((h, value));
    }
    Ok(out)
}

fn run_perron(cfg: &ExperimentConfig) -> Result<Emitted> {
    let mut out = Emitted::new("x,T,integral,exact,abs_err");
    let x = require_x(cfg)?;
    let t = require_t(cfg)?;
    let (k, workers) = (cfg.k, cfg.workers);
    let r = out.timed("perron", || zeta::perron_truncated(k, x, t, workers))?;
    out.rows.push(format!(
        "{x},{t},{},{},{}",
        num(cfg.precision, r.integral_value),
        r.exact_sum,
        num(cfg.precision, r.abs_error),
    ));
    out.plot.push((t, r.abs_error));
    Ok(out)
}

fn run_omega(cfg: &ExperimentConfig) -> Result<Emitted> {
    let mut out = Emitted::new("k,X,h,max_ratio,argmax_x,max_plain_ratio,samples");
    let x = require_x_int(cfg)?;
    let hs = h_values(cfg)?;
    if hs.len() != 1 {
        return Err(LabError::Validation("omega takes a single --h".into()));
    }
    let (k, samples, workers) = (cfg.k, cfg.samples, cfg.workers);
    let h = hs[0];
    let r = out.timed("scan", || jutila::omega_scan(k, x, h, samples, workers))?;
    out.rows.push(format!(
        "{k},{x},{h},{},{},{},{}",
        num(cfg.precision, r.max_ratio),
        r.argmax_x,
        num(cfg.precision, r.max_plain_ratio),
        r.samples,
    ));
    out.plot.push((r.argmax_x as f64, r.max_ratio));
    Ok(out)
}

fn run_beta(cfg: &ExperimentConfig) -> Result<Emitted> {
    let mut out = Emitted::new("k,X,value,half_value,beta_hat");
    let x = require_x_int(cfg)?;
    let k = cfg.k;
    let g = out.timed("integral", || delta::global_mean_square(k, x))?;
    out.rows.push(format!(
        "{k},{x},{},{},{}",
        num(cfg.precision, g.value),
        num(cfg.precision, g.half_value),
        num(cfg.precision, g.beta_hat),
    ));
    out.plot.push((x as f64, g.beta_hat));
    Ok(out)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(path: &PathBuf, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| LabError::Resource(format!("creating {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, content)
        .map_err(|e| LabError::Resource(format!("writing {}: {e}", path.display())))
}

fn manifest_path(out: &PathBuf) -> PathBuf {
    let mut os = out.clone().into_os_string();
    os.push(".manifest");
    PathBuf::from(os)
}

fn run(cfg: &ExperimentConfig) -> Result<()> {
    let started = Instant::now();
    let emitted = dispatch(cfg)?;

    let mut csv = String::new();
    csv.push_str(emitted.header);
    csv.push('\n');
    for row in &emitted.rows {
        csv.push_str(row);
        csv.push('\n');
    }
    write_file(&cfg.out, &csv)?;
    let checksum = hex(&Sha256::digest(csv.as_bytes()));

    if let Some(plot_path) = &cfg.plot {
        let mut data = String::new();
        for &(a, b) in &emitted.plot {
            data.push_str(&format!("{} {}\n", num(cfg.precision, a), num(cfg.precision, b)));
        }
        write_file(plot_path, &data)?;
    }

    let mut manifest = String::new();
    manifest.push_str("# delta-lab run manifest\n");
    manifest.push_str(&format!("# version = {}\n", env!("CARGO_PKG_VERSION")));
    manifest.push_str(&format!("# wall_ms = {}\n", started.elapsed().as_millis()));
    for (label, ms) in &emitted.stages {
        manifest.push_str(&format!("# stage {label} = {ms} ms\n"));
    }
    manifest.push_str(&format!("# rows = {}\n", emitted.rows.len()));
    manifest.push_str(&format!("# checksum_sha256 = {checksum}\n"));
    manifest.push_str(&cfg.echo());
    write_file(&manifest_path(&cfg.out), &manifest)?;

    for note in &emitted.notes {
        eprintln!("note: {note}");
    }
    println!(
        "{} -> {} ({} rows, sha256 {}, {} ms)",
        cfg.command.name(),
        cfg.out.display(),
        emitted.rows.len(),
        &checksum[..12],
        started.elapsed().as_millis()
    );
    Ok(())
}
