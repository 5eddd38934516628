// Copyright 2026 jjchain contributors
// SPDX-License-Identifier: Apache-2.0

//! `jjchain`: command-line front end for the chain-transfer toolkit.
//!
//! Every subcommand resolves its settings from built-in defaults, an
//! optional TOML config file and command-line flags (flags win), runs one
//! study from the core library, and writes a CSV table, an optional SVG
//! plot and a JSON metadata sidecar next to it.
//!
//! Exit codes: 0 on success, 2 for configuration and usage errors, 3 when
//! a run fails numerically.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use serde::Serialize;

use jjchain_core::dephasing::{build_dephasing_rates, evolve_dephasing, stationary_fidelity};
use jjchain_core::experiments::{
    reproduce_figure, run_disorder_ensemble, run_length_sweep, Figure, FigureBundle,
    FigureOverrides,
};
use jjchain_core::hamiltonian::{build_hamiltonian, DisorderSpec};
use jjchain_core::unitary::{fidelity_series, find_first_maximum, find_first_above_threshold};
use jjchain_core::{
    CapacitanceModel64, ChainParams64, DensityMatrix64, Error as CoreError, ReadoutParams64,
    SweepSpec64,
};

mod config;
mod output;
mod plot;

use config::{ChainConfig, ConfigError, Merged, Overrides};
use output::{write_artifacts, Artifacts, Cell, Table};
use plot::Series;

#[derive(Parser)]
#[command(
    name = "jjchain",
    version,
    about = "Single-pair state transfer along a superconducting island chain",
    after_help = "Flags may appear before or after the subcommand and override \
                  config-file values. The JJCHAIN_OUT_DIR environment variable \
                  sets the default output directory."
)]
struct Cli {
    /// TOML config file; command-line flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Number of islands in the chain
    #[arg(long, global = true)]
    length: Option<usize>,

    /// Charging-to-Josephson energy ratio (2e)^2 / (E_J C0)
    #[arg(long, global = true)]
    u0: Option<f64>,

    /// Junction-to-ground capacitance ratio C / C0
    #[arg(long, global = true)]
    c_ratio: Option<f64>,

    /// Per-island gate charges, comma separated, in pair units
    #[arg(long, global = true, value_delimiter = ',', value_name = "Q1,Q2,...")]
    gate_charges: Option<Vec<f64>>,

    /// Per-junction Josephson energies, comma separated, relative to nominal
    #[arg(long, global = true, value_delimiter = ',', value_name = "E1,E2,...")]
    bond_energies: Option<Vec<f64>>,

    /// End of the time grid, in units of hbar/E_J
    #[arg(long, global = true)]
    t_max: Option<f64>,

    /// Integrator or sampling step
    #[arg(long, global = true)]
    dt: Option<f64>,

    /// Polar angle of the prepared state on the Bloch sphere
    #[arg(long, global = true)]
    theta: Option<f64>,

    /// Azimuthal angle of the prepared state
    #[arg(long, global = true)]
    phi: Option<f64>,

    /// Gate-noise dephasing strength
    #[arg(long, global = true)]
    gamma: Option<f64>,

    /// Quasiparticle tunneling rate of the probe junction
    #[arg(long, global = true)]
    gamma_qp: Option<f64>,

    /// Disconnect time of the last bond in the readout protocol
    #[arg(long, global = true)]
    t_star: Option<f64>,

    /// Pulse repetition period; currents are reported in e per period
    #[arg(long, global = true)]
    t_pulse: Option<f64>,

    /// Collection window after the disconnect
    #[arg(long, global = true)]
    t_tail: Option<f64>,

    /// Chain lengths for sweeps, comma separated
    #[arg(long, global = true, value_delimiter = ',', value_name = "L1,L2,...")]
    lengths: Option<Vec<usize>>,

    /// Capacitance ratios for sweeps, comma separated
    #[arg(long, global = true, value_delimiter = ',', value_name = "C1,C2,...")]
    c_ratios: Option<Vec<f64>>,

    /// Report the first peak at or above this fidelity instead of the
    /// first local maximum
    #[arg(long, global = true)]
    threshold: Option<f64>,

    /// Number of disorder realizations
    #[arg(long, global = true)]
    realizations: Option<usize>,

    /// Seed for disorder ensembles
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Relative standard deviation of the bond energies
    #[arg(long, global = true)]
    bond_sigma: Option<f64>,

    /// Standard deviation of the gate-charge offsets, in pair units
    #[arg(long, global = true)]
    charge_sigma: Option<f64>,

    /// Output directory (default: JJCHAIN_OUT_DIR or the working directory)
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,

    /// Output format: csv or csv+svg
    #[arg(long, global = true)]
    format: Option<String>,

    /// File stem for the emitted artifacts
    #[arg(long, global = true)]
    stem: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Noiseless end-to-end amplitude and transfer fidelity on a time grid
    FidelitySeries,
    /// First-arrival peak fidelity across chain lengths and capacitance ratios
    SweepLength,
    /// Disorder-averaged fidelity for a single chain geometry
    DisorderEnsemble,
    /// Transfer under gate-noise dephasing, via the master equation
    Dephasing,
    /// Quasiparticle readout protocol with integrated-current estimate
    Readout,
    /// Rebuild one of the standard figures from its preset
    Reproduce {
        /// fig2..fig6, or transfer-peaks, large-capacitance, disorder,
        /// dephasing, readout-current
        #[arg(long)]
        figure: String,
    },
}

impl Cli {
    fn overrides(&self) -> Overrides {
        Overrides {
            length: self.length,
            u0: self.u0,
            c_ratio: self.c_ratio,
            gate_charges: self.gate_charges.clone(),
            bond_energies: self.bond_energies.clone(),
            t_max: self.t_max,
            dt: self.dt,
            theta: self.theta,
            phi: self.phi,
            gamma: self.gamma,
            gamma_qp: self.gamma_qp,
            t_star: self.t_star,
            t_pulse: self.t_pulse,
            t_tail: self.t_tail,
            lengths: self.lengths.clone(),
            c_ratios: self.c_ratios.clone(),
            threshold: self.threshold,
            realizations: self.realizations,
            seed: self.seed,
            bond_sigma: self.bond_sigma,
            charge_sigma: self.charge_sigma,
            out_dir: self.out.clone(),
            format: self.format.clone(),
            stem: self.stem.clone(),
        }
    }
}

enum AppError {
    /// Bad configuration or usage; exit code 2.
    Config(String),
    /// The computation itself failed; exit code 3.
    Numerical(String),
}

impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParameter(_) | CoreError::DimensionMismatch { .. } => {
                AppError::Config(e.to_string())
            }
            CoreError::NoInteriorMaximum(_) | CoreError::NumericalFailure(_) => {
                AppError::Numerical(e.to_string())
            }
        }
    }
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Config(e.0)
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Config(format!("cannot write output: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(AppError::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: &Cli) -> Result<(), AppError> {
    let file = match &cli.config {
        Some(path) => config::load_file(path)?,
        None => config::FileConfig::default(),
    };
    let merged = config::merge(&file, &cli.overrides());
    match &cli.command {
        Command::FidelitySeries => run_series(&merged),
        Command::SweepLength => run_sweep(&merged),
        Command::DisorderEnsemble => run_ensemble(&merged),
        Command::Dephasing => run_dephasing(&merged),
        Command::Readout => run_readout(&merged),
        Command::Reproduce { figure } => run_reproduce(&merged, figure),
    }
}

fn chain_params(cfg: &ChainConfig) -> Result<ChainParams64, AppError> {
    let mut params = ChainParams64::uniform(cfg.length, cfg.u0, cfg.c_ratio);
    if let Some(q) = &cfg.gate_charges {
        params.gate_charges = q.clone();
    }
    if let Some(b) = &cfg.bond_energies {
        params.bond_energies = b.clone();
    }
    params.validate()?;
    Ok(params)
}

fn reject_per_island_fields(merged: &Merged, subcommand: &str) -> Result<(), AppError> {
    if merged.gate_charges.is_some() || merged.bond_energies.is_some() {
        return Err(AppError::Config(format!(
            "gate_charges and bond_energies describe a single explicit chain; \
             {subcommand} builds its own chains, so they cannot be combined"
        )));
    }
    Ok(())
}

fn note(notes: &mut Vec<(String, String)>, key: &str, value: impl std::fmt::Display) {
    notes.push((key.into(), value.to_string()));
}

fn report(artifacts: &Artifacts, rows: usize) {
    println!("wrote {} ({rows} rows)", artifacts.csv_path.display());
    if let Some(svg) = &artifacts.svg_path {
        println!("wrote {}", svg.display());
    }
    println!("wrote {}", artifacts.meta_path.display());
}

// ---------------------------------------------------------------------------
// fidelity-series

fn run_series(merged: &Merged) -> Result<(), AppError> {
    let cfg = config::resolve_series(merged);
    let out = config::resolve_output(merged, "fidelity-series")?;
    let params = chain_params(&cfg.chain)?;
    let model = CapacitanceModel64::build(params.length, params.c_ratio)?;
    let h = build_hamiltonian(&params, &model)?;
    let series = fidelity_series(&h, cfg.t_max, cfg.dt)?;

    let mut table = Table::new(vec!["t", "re_f", "im_f", "abs_f", "fidelity"]);
    for i in 0..series.len() {
        table.push(vec![
            Cell::Float(series.times[i]),
            Cell::Float(series.amplitude[i].re),
            Cell::Float(series.amplitude[i].im),
            Cell::Float(series.amplitude[i].norm()),
            Cell::Float(series.fidelity[i]),
        ]);
    }

    let mut notes = Vec::new();
    let peak = match merged.threshold {
        Some(threshold) => find_first_above_threshold(&series, &h, threshold),
        None => find_first_maximum(&series, &h),
    };
    match peak {
        Ok(p) => {
            note(&mut notes, "peak_t", p.t_peak);
            note(&mut notes, "peak_fidelity", p.f_peak);
        }
        Err(CoreError::NoInteriorMaximum(_)) => {
            note(&mut notes, "peak", "none inside the time grid");
        }
        Err(e) => return Err(e.into()),
    }

    let svg = out.format.wants_svg().then(|| {
        let pair = |values: &dyn Fn(usize) -> f64| -> Vec<(f64, f64)> {
            (0..series.len()).map(|i| (series.times[i], values(i))).collect()
        };
        plot::line_plot(
            "end-to-end transfer",
            "t [hbar/E_J]",
            "value",
            &[
                Series::new("|f|", pair(&|i| series.amplitude[i].norm())),
                Series::new("fidelity", pair(&|i| series.fidelity[i])),
            ],
        )
    });

    let artifacts = write_artifacts(&out, "fidelity-series", &cfg, &table, &notes, svg.as_deref())?;
    report(&artifacts, table.rows.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep-length

fn run_sweep(merged: &Merged) -> Result<(), AppError> {
    reject_per_island_fields(merged, "sweep-length")?;
    let cfg = config::resolve_sweep(merged);
    let out = config::resolve_output(merged, "sweep-length")?;
    let spec = SweepSpec64 {
        lengths: cfg.lengths.clone(),
        u0: cfg.u0,
        c_ratios: cfg.c_ratios.clone(),
        gamma: None,
        gamma_qp: None,
        disorder: None,
        realizations: 1,
        t_max: cfg.t_max,
        dt: cfg.dt,
        threshold: cfg.threshold,
        master_seed: 0,
    };
    let rows = run_length_sweep(&spec)?;

    let mut table = Table::new(vec![
        "length",
        "c_ratio",
        "t_peak",
        "f_peak",
        "t_threshold",
        "f_threshold",
        "status",
    ]);
    let opt = |value: Option<f64>| match value {
        Some(x) => Cell::Float(x),
        None => Cell::Text(String::new()),
    };
    for row in &rows {
        table.push(vec![
            Cell::Int(row.length as i64),
            Cell::Float(row.c_ratio),
            opt(row.peak.map(|p| p.t_peak)),
            opt(row.peak.map(|p| p.f_peak)),
            opt(row.threshold_peak.map(|p| p.t_peak)),
            opt(row.threshold_peak.map(|p| p.f_peak)),
            Cell::Text(row.error.clone().unwrap_or_else(|| "ok".into())),
        ]);
    }

    let svg = out.format.wants_svg().then(|| {
        let series: Vec<Series> = cfg
            .c_ratios
            .iter()
            .map(|&c| {
                let points = rows
                    .iter()
                    .filter(|r| r.c_ratio == c)
                    .filter_map(|r| r.peak.map(|p| (r.length as f64, p.f_peak)))
                    .collect();
                Series::new(format!("c_ratio {c}"), points)
            })
            .collect();
        plot::line_plot("first-arrival peak fidelity", "length", "f_peak", &series)
    });

    let artifacts = write_artifacts(&out, "sweep-length", &cfg, &table, &[], svg.as_deref())?;
    report(&artifacts, table.rows.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// disorder-ensemble

fn run_ensemble(merged: &Merged) -> Result<(), AppError> {
    reject_per_island_fields(merged, "disorder-ensemble")?;
    let cfg = config::resolve_ensemble(merged);
    let out = config::resolve_output(merged, "disorder-ensemble")?;
    let spec = SweepSpec64 {
        lengths: vec![cfg.chain.length],
        u0: cfg.chain.u0,
        c_ratios: vec![cfg.chain.c_ratio],
        gamma: None,
        gamma_qp: None,
        disorder: Some(DisorderSpec {
            bond_sigma: cfg.bond_sigma,
            charge_sigma: cfg.charge_sigma,
            seed: cfg.seed,
        }),
        realizations: cfg.realizations,
        t_max: cfg.t_max,
        dt: cfg.dt,
        threshold: None,
        master_seed: cfg.seed,
    };
    let ensemble = run_disorder_ensemble(&spec)?;

    let mut table = Table::new(vec!["t", "fidelity_mean", "fidelity_std_error"]);
    for i in 0..ensemble.times.len() {
        table.push(vec![
            Cell::Float(ensemble.times[i]),
            Cell::Float(ensemble.fidelity.mean[i]),
            Cell::Float(ensemble.fidelity.std_error[i]),
        ]);
    }

    let mut notes = Vec::new();
    note(&mut notes, "realizations_used", ensemble.fidelity.n);
    note(&mut notes, "peak_time_mean", ensemble.peak_time.mean);
    note(&mut notes, "peak_time_std_error", ensemble.peak_time.std_error);
    note(&mut notes, "peak_fidelity_mean", ensemble.peak_fidelity.mean);
    note(
        &mut notes,
        "peak_fidelity_std_error",
        ensemble.peak_fidelity.std_error,
    );

    let svg = out.format.wants_svg().then(|| {
        let points = ensemble
            .times
            .iter()
            .zip(ensemble.fidelity.mean.iter())
            .map(|(&t, &f)| (t, f))
            .collect();
        plot::line_plot(
            "disorder-averaged fidelity",
            "t [hbar/E_J]",
            "fidelity",
            &[Series::new("mean", points)],
        )
    });

    let artifacts = write_artifacts(&out, "disorder-ensemble", &cfg, &table, &notes, svg.as_deref())?;
    report(&artifacts, table.rows.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// dephasing

fn run_dephasing(merged: &Merged) -> Result<(), AppError> {
    let cfg = config::resolve_dephasing(merged);
    let out = config::resolve_output(merged, "dephasing")?;
    let params = chain_params(&cfg.chain)?;
    let model = CapacitanceModel64::build(params.length, params.c_ratio)?;
    let h = build_hamiltonian(&params, &model)?;
    let rates = build_dephasing_rates(cfg.gamma, &model)?;
    let rho0 = DensityMatrix64::from_bloch(cfg.chain.length, cfg.theta, cfg.phi)?;
    let run = evolve_dephasing(&rho0, &h, &rates, cfg.t_max, cfg.dt, cfg.stride)?;

    let mut table = Table::new(vec![
        "t",
        "fidelity",
        "rho_ll",
        "rho_11",
        "re_coherence",
        "im_coherence",
        "trace_error",
        "min_eigenvalue",
    ]);
    for i in 0..run.len() {
        table.push(vec![
            Cell::Float(run.times[i]),
            Cell::Float(run.fidelity[i]),
            Cell::Float(run.rho_ll[i]),
            Cell::Float(run.rho_11[i]),
            Cell::Float(run.coherence[i].re),
            Cell::Float(run.coherence[i].im),
            Cell::Float(run.trace_error[i]),
            Cell::Float(run.min_eigenvalue[i]),
        ]);
    }

    let mut notes = Vec::new();
    note(
        &mut notes,
        "stationary_fidelity",
        stationary_fidelity::<f64>(cfg.chain.length)?,
    );
    if let Some(last) = run.fidelity.last() {
        note(&mut notes, "final_fidelity", last);
    }

    let svg = out.format.wants_svg().then(|| {
        let pair = |values: &[f64]| -> Vec<(f64, f64)> {
            run.times.iter().zip(values).map(|(&t, &v)| (t, v)).collect()
        };
        plot::line_plot(
            "transfer under gate-noise dephasing",
            "t [hbar/E_J]",
            "value",
            &[
                Series::new("fidelity", pair(&run.fidelity)),
                Series::new("rho_LL", pair(&run.rho_ll)),
            ],
        )
    });

    let artifacts = write_artifacts(&out, "dephasing", &cfg, &table, &notes, svg.as_deref())?;
    report(&artifacts, table.rows.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// readout

fn run_readout(merged: &Merged) -> Result<(), AppError> {
    let cfg = config::resolve_readout(merged);
    let out = config::resolve_output(merged, "readout")?;
    let params = chain_params(&cfg.chain)?;
    let rp = ReadoutParams64 {
        gamma_qp: cfg.gamma_qp,
        t_star: cfg.t_star,
        t_pulse: cfg.t_pulse,
        t_tail: cfg.t_tail,
        dt: cfg.dt,
    };
    let run = jjchain_core::readout::evolve_readout(cfg.theta, cfg.phi, &params, &rp)?;

    let mut table = Table::new(vec!["t", "current", "p_vac", "p_qp", "rho_ll"]);
    for i in 0..run.times.len() {
        table.push(vec![
            Cell::Float(run.times[i]),
            Cell::Float(run.current[i]),
            Cell::Float(run.p_vac[i]),
            Cell::Float(run.p_qp[i]),
            Cell::Float(run.rho_ll[i]),
        ]);
    }

    let mut notes = Vec::new();
    note(&mut notes, "rho_ll_star", run.rho_ll_star);
    note(&mut notes, "p_qp_star", run.p_qp_star);
    note(
        &mut notes,
        "emitted_before_disconnect",
        run.emitted_before_disconnect,
    );
    note(&mut notes, "integrated_current", run.integrated_current);
    note(
        &mut notes,
        "approx_integrated_current",
        run.approx_integrated_current,
    );
    note(&mut notes, "worst_trace_error", run.worst_trace_error);
    note(&mut notes, "worst_min_eigenvalue", run.worst_min_eigenvalue);
    if let Some(warning) = &run.protocol_warning {
        note(&mut notes, "protocol_warning", warning);
    }

    let svg = out.format.wants_svg().then(|| {
        let points = run
            .times
            .iter()
            .zip(run.current.iter())
            .map(|(&t, &c)| (t, c))
            .collect();
        plot::line_plot(
            "probe-junction current",
            "t [hbar/E_J]",
            "current [e per unit time]",
            &[Series::new("current", points)],
        )
    });

    let artifacts = write_artifacts(&out, "readout", &cfg, &table, &notes, svg.as_deref())?;
    report(&artifacts, table.rows.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// reproduce

/// Echo of a reproduce run: the figure plus exactly the overrides that were
/// set. Everything else follows the preset and lands in the notes.
#[derive(Serialize)]
struct ReproduceEcho {
    figure: &'static str,
    name: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    lengths: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c_ratios: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    u0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma_qp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bond_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    charge_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    realizations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
}

fn figure_series(bundle: &FigureBundle<f64>) -> Vec<Series> {
    let column = |y: usize| -> Series {
        Series::new(
            bundle.columns[y].clone(),
            bundle.rows.iter().map(|r| (r[0], r[y])).collect(),
        )
    };
    match bundle.figure {
        Figure::TransferPeaks | Figure::LargeCapacitance => {
            let mut ratios: Vec<f64> = Vec::new();
            for row in &bundle.rows {
                if !ratios.contains(&row[1]) {
                    ratios.push(row[1]);
                }
            }
            ratios
                .iter()
                .map(|&c| {
                    let points = bundle
                        .rows
                        .iter()
                        .filter(|r| r[1] == c)
                        .map(|r| (r[0], r[3]))
                        .collect();
                    Series::new(format!("c_ratio {c}"), points)
                })
                .collect()
        }
        Figure::Disorder => vec![column(1), column(2), column(4)],
        Figure::Dephasing => vec![column(1), column(2)],
        Figure::ReadoutCurrent => vec![column(1), column(2), column(3)],
    }
}

fn run_reproduce(merged: &Merged, figure_name: &str) -> Result<(), AppError> {
    let figure = Figure::from_str(figure_name)?;
    let overrides = FigureOverrides::<f64> {
        lengths: merged.lengths.clone(),
        c_ratios: merged.c_ratios.clone(),
        u0: merged.u0,
        gamma: merged.gamma,
        gamma_qp: merged.gamma_qp,
        bond_sigma: merged.bond_sigma,
        charge_sigma: merged.charge_sigma,
        realizations: merged.realizations,
        master_seed: merged.seed,
        t_max: merged.t_max,
        dt: merged.dt,
    };
    let bundle = reproduce_figure(figure, &overrides)?;
    let out = config::resolve_output(merged, figure.slug())?;

    let mut table = Table::new(bundle.columns.clone());
    for row in &bundle.rows {
        table.push(row.iter().map(|&x| Cell::Float(x)).collect());
    }

    let echo = ReproduceEcho {
        figure: figure.id(),
        name: figure.slug(),
        lengths: overrides.lengths.clone(),
        c_ratios: overrides.c_ratios.clone(),
        u0: overrides.u0,
        gamma: overrides.gamma,
        gamma_qp: overrides.gamma_qp,
        bond_sigma: overrides.bond_sigma,
        charge_sigma: overrides.charge_sigma,
        realizations: overrides.realizations,
        master_seed: overrides.master_seed,
        t_max: overrides.t_max,
        dt: overrides.dt,
    };

    let svg = out.format.wants_svg().then(|| {
        plot::line_plot(
            figure.slug(),
            &bundle.columns[0],
            "value",
            &figure_series(&bundle),
        )
    });

    let artifacts = write_artifacts(&out, "reproduce", &echo, &table, &bundle.notes, svg.as_deref())?;
    report(&artifacts, table.rows.len());
    Ok(())
}
