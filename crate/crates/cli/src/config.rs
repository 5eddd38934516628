// Copyright 2026 jjchain contributors
// SPDX-License-Identifier: Apache-2.0

//! Layered run configuration: built-in defaults, then the optional TOML
//! file, then command-line flags, with unknown keys rejected outright. The
//! merged result is resolved per subcommand so every run starts from fully
//! validated, echoable settings.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Configuration-layer error: bad file, bad key, bad value. These map to
/// exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<V>(message: impl Into<String>) -> Result<V, ConfigError> {
    Err(ConfigError(message.into()))
}

// ---------------------------------------------------------------------------
// File layer.

#[derive(Debug, Default, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preparation: Option<PreparationSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dephasing: Option<DephasingSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub readout: Option<ReadoutSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disorder: Option<DisorderSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate_charges: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bond_energies: Option<Vec<f64>>,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PreparationSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DephasingSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_qp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_pulse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_tail: Option<f64>,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lengths: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_ratios: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realizations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bond_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub charge_sigma: Option<f64>,
}

#[derive(Debug, Default, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stem: Option<String>,
}

/// Loads and parses a TOML configuration file. Unknown keys anywhere in the
/// file are hard errors naming the key.
pub fn load_file(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config file {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| ConfigError(format!("config file {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Merge layer.

/// Command-line values; every field overrides the matching file value.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub length: Option<usize>,
    pub u0: Option<f64>,
    pub c_ratio: Option<f64>,
    pub gate_charges: Option<Vec<f64>>,
    pub bond_energies: Option<Vec<f64>>,
    pub t_max: Option<f64>,
    pub dt: Option<f64>,
    pub theta: Option<f64>,
    pub phi: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_qp: Option<f64>,
    pub t_star: Option<f64>,
    pub t_pulse: Option<f64>,
    pub t_tail: Option<f64>,
    pub lengths: Option<Vec<usize>>,
    pub c_ratios: Option<Vec<f64>>,
    pub threshold: Option<f64>,
    pub realizations: Option<usize>,
    pub seed: Option<u64>,
    pub bond_sigma: Option<f64>,
    pub charge_sigma: Option<f64>,
    pub out_dir: Option<String>,
    pub format: Option<String>,
    pub stem: Option<String>,
}

/// Fully merged optional settings: file values overlaid with flags, still
/// without subcommand defaults.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Merged {
    pub length: Option<usize>,
    pub u0: Option<f64>,
    pub c_ratio: Option<f64>,
    pub gate_charges: Option<Vec<f64>>,
    pub bond_energies: Option<Vec<f64>>,
    pub t_max: Option<f64>,
    pub dt: Option<f64>,
    pub theta: Option<f64>,
    pub phi: Option<f64>,
    pub gamma: Option<f64>,
    pub gamma_qp: Option<f64>,
    pub t_star: Option<f64>,
    pub t_pulse: Option<f64>,
    pub t_tail: Option<f64>,
    pub lengths: Option<Vec<usize>>,
    pub c_ratios: Option<Vec<f64>>,
    pub threshold: Option<f64>,
    pub realizations: Option<usize>,
    pub seed: Option<u64>,
    pub bond_sigma: Option<f64>,
    pub charge_sigma: Option<f64>,
    pub out_dir: Option<String>,
    pub format: Option<String>,
    pub stem: Option<String>,
}

pub fn merge(file: &FileConfig, flags: &Overrides) -> Merged {
    let chain = file.chain.clone().unwrap_or_default();
    let grid = file.grid.clone().unwrap_or_default();
    let preparation = file.preparation.clone().unwrap_or_default();
    let dephasing = file.dephasing.clone().unwrap_or_default();
    let readout = file.readout.clone().unwrap_or_default();
    let sweep = file.sweep.clone().unwrap_or_default();
    let disorder = file.disorder.clone().unwrap_or_default();
    let output = file.output.clone().unwrap_or_default();

    Merged {
        length: flags.length.or(chain.length),
        u0: flags.u0.or(chain.u0),
        c_ratio: flags.c_ratio.or(chain.c_ratio),
        gate_charges: flags.gate_charges.clone().or(chain.gate_charges),
        bond_energies: flags.bond_energies.clone().or(chain.bond_energies),
        t_max: flags.t_max.or(grid.t_max),
        dt: flags.dt.or(grid.dt),
        theta: flags.theta.or(preparation.theta),
        phi: flags.phi.or(preparation.phi),
        gamma: flags.gamma.or(dephasing.gamma),
        gamma_qp: flags.gamma_qp.or(readout.gamma_qp),
        t_star: flags.t_star.or(readout.t_star),
        t_pulse: flags.t_pulse.or(readout.t_pulse),
        t_tail: flags.t_tail.or(readout.t_tail),
        lengths: flags.lengths.clone().or(sweep.lengths),
        c_ratios: flags.c_ratios.clone().or(sweep.c_ratios),
        threshold: flags.threshold.or(sweep.threshold),
        realizations: flags.realizations.or(sweep.realizations),
        seed: flags.seed.or(sweep.seed),
        bond_sigma: flags.bond_sigma.or(disorder.bond_sigma),
        charge_sigma: flags.charge_sigma.or(disorder.charge_sigma),
        out_dir: flags.out_dir.clone().or(output.dir),
        format: flags.format.clone().or(output.format),
        stem: flags.stem.clone().or(output.stem),
    }
}

#[cfg(test)]
impl Merged {
    /// Inverse of the file layer: every set field lands back in its section.
    /// `load_file(emit) -> merge -> self` round-trips.
    pub fn to_file_config(&self) -> FileConfig {
        fn keep<S: Default + PartialEq>(section: S) -> Option<S> {
            if section == S::default() {
                None
            } else {
                Some(section)
            }
        }
        FileConfig {
            chain: keep(ChainSection {
                length: self.length,
                u0: self.u0,
                c_ratio: self.c_ratio,
                gate_charges: self.gate_charges.clone(),
                bond_energies: self.bond_energies.clone(),
            }),
            grid: keep(GridSection {
                t_max: self.t_max,
                dt: self.dt,
            }),
            preparation: keep(PreparationSection {
                theta: self.theta,
                phi: self.phi,
            }),
            dephasing: keep(DephasingSection { gamma: self.gamma }),
            readout: keep(ReadoutSection {
                gamma_qp: self.gamma_qp,
                t_star: self.t_star,
                t_pulse: self.t_pulse,
                t_tail: self.t_tail,
            }),
            sweep: keep(SweepSection {
                lengths: self.lengths.clone(),
                c_ratios: self.c_ratios.clone(),
                threshold: self.threshold,
                realizations: self.realizations,
                seed: self.seed,
            }),
            disorder: keep(DisorderSection {
                bond_sigma: self.bond_sigma,
                charge_sigma: self.charge_sigma,
            }),
            output: keep(OutputSection {
                dir: self.out_dir.clone(),
                format: self.format.clone(),
                stem: self.stem.clone(),
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Resolution layer.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    CsvSvg,
}

impl OutputFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::CsvSvg => "csv+svg",
        }
    }

    pub fn wants_svg(self) -> bool {
        self == OutputFormat::CsvSvg
    }
}

impl Serialize for OutputFormat {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "csv+svg" => Ok(OutputFormat::CsvSvg),
            other => err(format!(
                "output format must be \"csv\" or \"csv+svg\", got \"{other}\""
            )),
        }
    }
}

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "JJCHAIN_OUT_DIR";

#[derive(Debug, Clone, Serialize)]
pub struct OutputSettings {
    pub dir: String,
    pub format: OutputFormat,
    pub stem: String,
}

/// Resolves output settings; `default_stem` names the files when neither
/// flag nor file provides a stem.
pub fn resolve_output(
    merged: &Merged,
    default_stem: &str,
) -> Result<OutputSettings, ConfigError> {
    let dir = merged
        .out_dir
        .clone()
        .or_else(|| std::env::var(OUT_DIR_ENV).ok())
        .unwrap_or_else(|| ".".into());
    let format = match &merged.format {
        Some(text) => text.parse()?,
        None => OutputFormat::Csv,
    };
    let stem = merged.stem.clone().unwrap_or_else(|| default_stem.into());
    if stem.is_empty() || stem.contains(['/', '\\']) {
        return err(format!(
            "output stem must be a bare file name, got \"{stem}\""
        ));
    }
    Ok(OutputSettings { dir, format, stem })
}

/// Chain geometry shared by the single-geometry subcommands.
#[derive(Debug, Clone, Serialize)]
pub struct ChainConfig {
    pub length: usize,
    pub u0: f64,
    pub c_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate_charges: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bond_energies: Option<Vec<f64>>,
}

impl ChainConfig {
    fn from_merged(merged: &Merged, default_c_ratio: f64) -> Self {
        Self {
            length: merged.length.unwrap_or(7),
            u0: merged.u0.unwrap_or(10.0),
            c_ratio: merged.c_ratio.unwrap_or(default_c_ratio),
            gate_charges: merged.gate_charges.clone(),
            bond_energies: merged.bond_energies.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesConfig {
    #[serde(flatten)]
    pub chain: ChainConfig,
    pub t_max: f64,
    pub dt: f64,
}

pub fn resolve_series(merged: &Merged) -> SeriesConfig {
    SeriesConfig {
        chain: ChainConfig::from_merged(merged, 0.1),
        t_max: merged.t_max.unwrap_or(60.0),
        dt: merged.dt.unwrap_or(0.01),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepConfig {
    pub lengths: Vec<usize>,
    pub u0: f64,
    pub c_ratios: Vec<f64>,
    pub t_max: f64,
    pub dt: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

pub fn resolve_sweep(merged: &Merged) -> SweepConfig {
    SweepConfig {
        lengths: merged.lengths.clone().unwrap_or_else(|| (2..=10).collect()),
        u0: merged.u0.unwrap_or(10.0),
        c_ratios: merged.c_ratios.clone().unwrap_or_else(|| vec![0.05, 0.1]),
        t_max: merged.t_max.unwrap_or(60.0),
        dt: merged.dt.unwrap_or(0.01),
        threshold: merged.threshold,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleConfig {
    #[serde(flatten)]
    pub chain: ChainConfig,
    pub bond_sigma: f64,
    pub charge_sigma: f64,
    pub realizations: usize,
    pub seed: u64,
    pub t_max: f64,
    pub dt: f64,
}

pub fn resolve_ensemble(merged: &Merged) -> EnsembleConfig {
    EnsembleConfig {
        chain: ChainConfig::from_merged(merged, 0.0),
        bond_sigma: merged.bond_sigma.unwrap_or(0.0),
        charge_sigma: merged.charge_sigma.unwrap_or(0.0),
        realizations: merged.realizations.unwrap_or(200),
        seed: merged.seed.unwrap_or(7),
        t_max: merged.t_max.unwrap_or(30.0),
        dt: merged.dt.unwrap_or(0.01),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DephasingConfig {
    #[serde(flatten)]
    pub chain: ChainConfig,
    pub gamma: f64,
    pub theta: f64,
    pub phi: f64,
    pub t_max: f64,
    pub dt: f64,
    /// Recording stride in steps; the defaults land records near 0.01.
    pub stride: usize,
}

pub fn resolve_dephasing(merged: &Merged) -> DephasingConfig {
    let dt = merged.dt.unwrap_or(0.002);
    let stride = if dt > 0.0 && dt.is_finite() {
        ((0.01 / dt).round() as usize).max(1)
    } else {
        1
    };
    DephasingConfig {
        chain: ChainConfig::from_merged(merged, 0.1),
        gamma: merged.gamma.unwrap_or(0.01),
        theta: merged.theta.unwrap_or(std::f64::consts::FRAC_PI_2),
        phi: merged.phi.unwrap_or(0.0),
        t_max: merged.t_max.unwrap_or(60.0),
        dt,
        stride,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReadoutConfig {
    #[serde(flatten)]
    pub chain: ChainConfig,
    pub gamma_qp: f64,
    pub t_star: f64,
    pub t_pulse: f64,
    pub t_tail: f64,
    pub dt: f64,
    pub theta: f64,
    pub phi: f64,
}

pub fn resolve_readout(merged: &Merged) -> ReadoutConfig {
    let gamma_qp = merged.gamma_qp.unwrap_or(0.05);
    ReadoutConfig {
        chain: ChainConfig::from_merged(merged, 0.1),
        gamma_qp,
        t_star: merged.t_star.unwrap_or(10.0),
        t_pulse: merged.t_pulse.unwrap_or(1.0),
        t_tail: merged.t_tail.unwrap_or(20.0 / gamma_qp),
        dt: merged.dt.unwrap_or(0.005),
        theta: merged.theta.unwrap_or(std::f64::consts::PI),
        phi: merged.phi.unwrap_or(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_merged() -> Merged {
        Merged {
            length: Some(5),
            u0: Some(12.0),
            c_ratio: Some(0.2),
            gate_charges: Some(vec![0.1, -0.1, 0.0, 0.0, 0.05]),
            bond_energies: Some(vec![1.0, 0.9, 1.1, 1.0]),
            t_max: Some(25.0),
            dt: Some(0.004),
            theta: Some(1.0),
            phi: Some(0.5),
            gamma: Some(0.02),
            gamma_qp: Some(0.1),
            t_star: Some(8.0),
            t_pulse: Some(2.0),
            t_tail: Some(250.0),
            lengths: Some(vec![2, 4, 6]),
            c_ratios: Some(vec![0.05, 1.0]),
            threshold: Some(0.9),
            realizations: Some(50),
            seed: Some(99),
            bond_sigma: Some(0.1),
            charge_sigma: Some(0.02),
            out_dir: Some("runs".into()),
            format: Some("csv+svg".into()),
            stem: Some("case-a".into()),
        }
    }

    #[test]
    fn file_and_flag_layers_merge_with_flag_priority() {
        let file: FileConfig = toml::from_str(
            "[grid]\ndt = 0.05\nt_max = 40.0\n\n[chain]\nlength = 3\n",
        )
        .unwrap();
        let flags = Overrides {
            dt: Some(0.01),
            ..Default::default()
        };
        let merged = merge(&file, &flags);
        assert_eq!(merged.dt, Some(0.01));
        assert_eq!(merged.t_max, Some(40.0));
        assert_eq!(merged.length, Some(3));
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_name() {
        let parsed: Result<FileConfig, _> = toml::from_str("[grid]\ndx = 0.1\n");
        let text = parsed.unwrap_err().to_string();
        assert!(text.contains("dx"), "{text}");

        let parsed: Result<FileConfig, _> = toml::from_str("[typo]\nx = 1\n");
        assert!(parsed.unwrap_err().to_string().contains("typo"));
    }

    #[test]
    fn emitted_config_parses_back_to_the_same_settings() {
        let merged = full_merged();
        let text = toml::to_string(&merged.to_file_config()).unwrap();
        let reparsed: FileConfig = toml::from_str(&text).unwrap();
        let round_trip = merge(&reparsed, &Overrides::default());
        assert_eq!(round_trip, merged);
    }

    #[test]
    fn empty_sections_are_dropped_from_the_emitted_file() {
        let merged = Merged {
            dt: Some(0.01),
            ..Default::default()
        };
        let file = merged.to_file_config();
        assert!(file.chain.is_none());
        assert!(file.output.is_none());
        let text = toml::to_string(&file).unwrap();
        assert!(!text.contains("chain"), "{text}");
    }

    #[test]
    fn subcommand_defaults_fill_unset_fields() {
        let merged = Merged::default();
        let series = resolve_series(&merged);
        assert_eq!(series.chain.length, 7);
        assert_eq!(series.dt, 0.01);
        let deph = resolve_dephasing(&merged);
        assert_eq!(deph.dt, 0.002);
        assert_eq!(deph.stride, 5);
        assert_eq!(deph.gamma, 0.01);
        let rd = resolve_readout(&merged);
        assert_eq!(rd.t_tail, 400.0);
        assert_eq!(rd.theta, std::f64::consts::PI);
        let sweep = resolve_sweep(&merged);
        assert_eq!(sweep.lengths, (2..=10).collect::<Vec<_>>());
    }

    #[test]
    fn output_format_parsing() {
        assert_eq!("csv".parse::<OutputFormat>().unwrap(), OutputFormat::Csv);
        assert_eq!(
            "csv+svg".parse::<OutputFormat>().unwrap(),
            OutputFormat::CsvSvg
        );
        assert!("svg".parse::<OutputFormat>().is_err());
    }
}
