// Copyright 2026 jjchain contributors
// SPDX-License-Identifier: Apache-2.0

//! Canned parameter studies: length sweeps, disorder ensembles, and the
//! standard figure set.
//!
//! Ensemble aggregation is deterministic: realizations are indexed, each
//! index seeds its own generator, and reductions run in double precision
//! with pairwise summation, so reruns and thread counts cannot change the
//! output bits.

use rayon::prelude::*;
use std::fmt;
use std::str::FromStr;

use crate::dephasing::{build_dephasing_rates, evolve_dephasing, DensityMatrix};
use crate::electrostatics::CapacitanceModel;
use crate::error::{Error, Result};
use crate::float::{real, real_of, Float};
use crate::hamiltonian::{build_hamiltonian, sample_disorder, ChainParams, DisorderSpec};
use crate::readout::{current_vs_tstar_sweep, ReadoutParams};
use crate::unitary::{
    fidelity_closed_form, fidelity_series, find_first_above_threshold, find_first_maximum,
    PeakResult, TransferEvolution,
};

/// Shared settings for the parameter studies.
#[derive(Debug, Clone)]
pub struct SweepSpec<T: Float> {
    pub lengths: Vec<usize>,
    pub u0: T,
    pub c_ratios: Vec<T>,
    /// Gate-noise dephasing strength, where a study uses one.
    pub gamma: Option<T>,
    /// Probe tunneling rate, where a study uses one.
    pub gamma_qp: Option<T>,
    pub disorder: Option<DisorderSpec>,
    pub realizations: usize,
    pub t_max: T,
    pub dt: T,
    /// Optional first-above-threshold target for sweep rows.
    pub threshold: Option<T>,
    /// Seed used by the figure presets to fill `disorder.seed`.
    pub master_seed: u64,
}

impl<T: Float> SweepSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.lengths.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one chain length is required".into(),
            ));
        }
        if self.lengths.iter().any(|&l| l == 0) {
            return Err(Error::InvalidParameter(
                "chain length must be at least 1".into(),
            ));
        }
        if self.c_ratios.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one capacitance ratio is required".into(),
            ));
        }
        for &c in &self.c_ratios {
            if !c.is_finite() || c < T::zero() {
                return Err(Error::InvalidParameter(format!(
                    "capacitance ratio must be finite and non-negative, got {c}"
                )));
            }
        }
        if !self.u0.is_finite() || self.u0 < T::zero() {
            return Err(Error::InvalidParameter(format!(
                "u0 must be finite and non-negative, got {}",
                self.u0
            )));
        }
        if let Some(g) = self.gamma {
            if !g.is_finite() || g < T::zero() {
                return Err(Error::InvalidParameter(format!(
                    "gamma must be finite and non-negative, got {g}"
                )));
            }
        }
        if let Some(g) = self.gamma_qp {
            if !g.is_finite() || g <= T::zero() {
                return Err(Error::InvalidParameter(format!(
                    "gamma_qp must be finite and positive, got {g}"
                )));
            }
        }
        if let Some(d) = &self.disorder {
            d.validate()?;
        }
        if self.realizations == 0 {
            return Err(Error::InvalidParameter(
                "at least one realization is required".into(),
            ));
        }
        Ok(())
    }
}

/// One `(length, c_ratio)` entry of a length sweep. A failed peak search
/// annotates the row instead of aborting the sweep.
#[derive(Debug, Clone)]
pub struct SweepRow<T: Float> {
    pub length: usize,
    pub c_ratio: T,
    pub peak: Option<PeakResult<T>>,
    pub threshold_peak: Option<PeakResult<T>>,
    pub error: Option<String>,
}

/// First-arrival peaks over a grid of lengths and capacitance ratios on
/// clean chains. Rows come out in `lengths x c_ratios` order.
pub fn run_length_sweep<T: Float>(spec: &SweepSpec<T>) -> Result<Vec<SweepRow<T>>> {
    spec.validate()?;
    if spec.disorder.is_some() {
        return Err(Error::InvalidParameter(
            "length sweeps take clean chains; use the disorder ensemble instead".into(),
        ));
    }

    let mut rows = Vec::with_capacity(spec.lengths.len() * spec.c_ratios.len());
    for &length in &spec.lengths {
        for &c_ratio in &spec.c_ratios {
            let mut row = SweepRow {
                length,
                c_ratio,
                peak: None,
                threshold_peak: None,
                error: None,
            };
            let outcome = (|| -> Result<()> {
                let params = ChainParams::uniform(length, spec.u0, c_ratio);
                let model = CapacitanceModel::build(length, c_ratio)?;
                let h = build_hamiltonian(&params, &model)?;
                let series = fidelity_series(&h, spec.t_max, spec.dt)?;
                row.peak = Some(find_first_maximum(&series, &h)?);
                if let Some(threshold) = spec.threshold {
                    row.threshold_peak =
                        Some(find_first_above_threshold(&series, &h, threshold)?);
                }
                Ok(())
            })();
            if let Err(e) = outcome {
                row.error = Some(e.to_string());
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Mean and standard error of a time series over an ensemble.
#[derive(Debug, Clone)]
pub struct EnsembleStats<T: Float> {
    pub mean: Vec<T>,
    pub std_error: Vec<T>,
    /// Realizations that completed and entered the aggregate.
    pub n: usize,
}

/// Mean and standard error of one scalar over an ensemble.
#[derive(Debug, Clone, Copy)]
pub struct ScalarStats<T: Float> {
    pub mean: T,
    pub std_error: T,
    pub n: usize,
}

/// Disorder-averaged fidelity curve with first-arrival peak statistics.
#[derive(Debug, Clone)]
pub struct DisorderEnsemble<T: Float> {
    pub times: Vec<T>,
    pub fidelity: EnsembleStats<T>,
    pub peak_time: ScalarStats<T>,
    pub peak_fidelity: ScalarStats<T>,
}

/// Deterministic pairwise reduction; the tree depends only on the length.
fn pairwise_sum_by(lo: usize, hi: usize, f: &dyn Fn(usize) -> f64) -> f64 {
    if hi - lo <= 8 {
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        acc
    } else {
        let mid = lo + (hi - lo) / 2;
        pairwise_sum_by(lo, mid, f) + pairwise_sum_by(mid, hi, f)
    }
}

fn scalar_stats<T: Float>(values: &[f64]) -> ScalarStats<T> {
    let n = values.len();
    let nf = n as f64;
    let mean = pairwise_sum_by(0, n, &|i| values[i]) / nf;
    let std_error = if n >= 2 {
        let ss = pairwise_sum_by(0, n, &|i| (values[i] - mean) * (values[i] - mean));
        (ss / (nf - 1.0)).sqrt() / nf.sqrt()
    } else {
        0.0
    };
    ScalarStats {
        mean: real::<T>(mean),
        std_error: real::<T>(std_error),
        n,
    }
}

struct Realization {
    fidelity: Vec<f64>,
    peak: Option<(f64, f64)>,
}

/// Disorder-averaged transfer for a single geometry, one independent
/// parameter draw per realization index. The random stream is governed by
/// `disorder.seed`; reruns with the same spec are bit-identical regardless
/// of thread count.
pub fn run_disorder_ensemble<T: Float>(spec: &SweepSpec<T>) -> Result<DisorderEnsemble<T>> {
    spec.validate()?;
    let disorder = spec.disorder.as_ref().ok_or_else(|| {
        Error::InvalidParameter("the disorder ensemble needs a disorder spec".into())
    })?;
    if spec.lengths.len() != 1 || spec.c_ratios.len() != 1 {
        return Err(Error::InvalidParameter(
            "the disorder ensemble studies a single geometry; pass one length \
             and one capacitance ratio"
                .into(),
        ));
    }
    let length = spec.lengths[0];
    let c_ratio = spec.c_ratios[0];
    let base = ChainParams::uniform(length, spec.u0, c_ratio);
    let model = CapacitanceModel::build(length, c_ratio)?;

    let realizations: Vec<Realization> = (0..spec.realizations)
        .into_par_iter()
        .map(|index| -> Result<Realization> {
            let params = sample_disorder(disorder, &base, index as u64)?;
            let h = build_hamiltonian(&params, &model)?;
            let series = fidelity_series(&h, spec.t_max, spec.dt)?;
            let peak = find_first_maximum(&series, &h).ok().map(|p| {
                (
                    p.t_peak.to_f64().expect("finite peak time"),
                    p.f_peak.to_f64().expect("finite peak fidelity"),
                )
            });
            let fidelity = series
                .fidelity
                .iter()
                .map(|&x| x.to_f64().expect("finite fidelity"))
                .collect();
            Ok(Realization { fidelity, peak })
        })
        .collect::<Result<_>>()?;

    let n = realizations.len();
    let nf = n as f64;
    let samples = realizations[0].fidelity.len();
    let steps = samples - 1;
    let times: Vec<T> = (0..=steps).map(|k| real_of::<T>(k) * spec.dt).collect();

    let mut mean = Vec::with_capacity(samples);
    let mut std_error = Vec::with_capacity(samples);
    for k in 0..samples {
        let m = pairwise_sum_by(0, n, &|i| realizations[i].fidelity[k]) / nf;
        let se = if n >= 2 {
            let ss = pairwise_sum_by(0, n, &|i| {
                let d = realizations[i].fidelity[k] - m;
                d * d
            });
            (ss / (nf - 1.0)).sqrt() / nf.sqrt()
        } else {
            0.0
        };
        mean.push(real::<T>(m));
        std_error.push(real::<T>(se));
    }

    let peak_times: Vec<f64> = realizations
        .iter()
        .filter_map(|r| r.peak.map(|p| p.0))
        .collect();
    let peak_fids: Vec<f64> = realizations
        .iter()
        .filter_map(|r| r.peak.map(|p| p.1))
        .collect();
    if peak_times.is_empty() {
        return Err(Error::NoInteriorMaximum(
            "no realization resolved a first arrival peak; enlarge t_max".into(),
        ));
    }

    Ok(DisorderEnsemble {
        times,
        fidelity: EnsembleStats { mean, std_error, n },
        peak_time: scalar_stats(&peak_times),
        peak_fidelity: scalar_stats(&peak_fids),
    })
}

/// The standard figure set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Peak transfer fidelity against chain length at small `c_ratio`.
    TransferPeaks,
    /// The same sweep deep in the screened regime, `c_ratio >= 1`.
    LargeCapacitance,
    /// Disorder-averaged fidelity, bond noise against gate-charge noise.
    Disorder,
    /// Transfer under gate-noise dephasing against the noiseless curve.
    Dephasing,
    /// Collected readout charge as a function of the disconnect time.
    ReadoutCurrent,
}

impl Figure {
    pub fn all() -> [Figure; 5] {
        [
            Figure::TransferPeaks,
            Figure::LargeCapacitance,
            Figure::Disorder,
            Figure::Dephasing,
            Figure::ReadoutCurrent,
        ]
    }

    /// Short stable identifier, also accepted by `from_str`.
    pub fn id(&self) -> &'static str {
        match self {
            Figure::TransferPeaks => "fig2",
            Figure::LargeCapacitance => "fig3",
            Figure::Disorder => "fig4",
            Figure::Dephasing => "fig5",
            Figure::ReadoutCurrent => "fig6",
        }
    }

    pub fn slug(&self) -> &'static str {
        match self {
            Figure::TransferPeaks => "transfer-peaks",
            Figure::LargeCapacitance => "large-capacitance",
            Figure::Disorder => "disorder",
            Figure::Dephasing => "dephasing",
            Figure::ReadoutCurrent => "readout-current",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        for figure in Figure::all() {
            if lower == figure.id() || lower == figure.slug() {
                return Ok(figure);
            }
        }
        Err(Error::InvalidParameter(format!(
            "unknown figure {s:?}; expected one of fig2..fig6 or their names \
             (transfer-peaks, large-capacitance, disorder, dephasing, readout-current)"
        )))
    }
}

/// Optional replacements for a figure's preset values. Anything left `None`
/// keeps the default, which the bundle then lists in its notes.
#[derive(Debug, Clone, Default)]
pub struct FigureOverrides<T: Float> {
    pub lengths: Option<Vec<usize>>,
    pub c_ratios: Option<Vec<T>>,
    pub u0: Option<T>,
    pub gamma: Option<T>,
    pub gamma_qp: Option<T>,
    pub bond_sigma: Option<f64>,
    pub charge_sigma: Option<f64>,
    pub realizations: Option<usize>,
    pub master_seed: Option<u64>,
    pub t_max: Option<T>,
    pub dt: Option<T>,
}

/// A reproduced figure: one table plus the assumptions behind it.
#[derive(Debug, Clone)]
pub struct FigureBundle<T: Float> {
    pub figure: Figure,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<T>>,
    /// Every assumed parameter and derived annotation, as key/value text.
    pub notes: Vec<(String, String)>,
}

fn note<T: fmt::Display>(notes: &mut Vec<(String, String)>, key: &str, value: T) {
    notes.push((key.into(), value.to_string()));
}

/// Rebuilds one of the standard figures, with presets for everything the
/// caller does not override.
pub fn reproduce_figure<T: Float>(
    figure: Figure,
    overrides: &FigureOverrides<T>,
) -> Result<FigureBundle<T>> {
    match figure {
        Figure::TransferPeaks => peak_sweep_figure(
            figure,
            overrides,
            vec![real::<T>(0.05), real::<T>(0.1)],
            real::<T>(60.0),
        ),
        Figure::LargeCapacitance => peak_sweep_figure(
            figure,
            overrides,
            vec![real::<T>(1.0), real::<T>(2.0), real::<T>(5.0)],
            real::<T>(150.0),
        ),
        Figure::Disorder => disorder_figure(overrides),
        Figure::Dephasing => dephasing_figure(overrides),
        Figure::ReadoutCurrent => readout_figure(overrides),
    }
}

fn peak_sweep_figure<T: Float>(
    figure: Figure,
    ov: &FigureOverrides<T>,
    default_c: Vec<T>,
    default_t_max: T,
) -> Result<FigureBundle<T>> {
    let spec = SweepSpec {
        lengths: ov.lengths.clone().unwrap_or_else(|| (2..=10).collect()),
        u0: ov.u0.unwrap_or_else(|| real::<T>(10.0)),
        c_ratios: ov.c_ratios.clone().unwrap_or(default_c),
        gamma: None,
        gamma_qp: None,
        disorder: None,
        realizations: 1,
        t_max: ov.t_max.unwrap_or(default_t_max),
        dt: ov.dt.unwrap_or_else(|| real::<T>(0.01)),
        threshold: None,
        master_seed: ov.master_seed.unwrap_or(0),
    };
    let rows_raw = run_length_sweep(&spec)?;

    let mut notes = Vec::new();
    note(&mut notes, "u0", spec.u0);
    note(&mut notes, "t_max", spec.t_max);
    note(&mut notes, "dt", spec.dt);
    note(
        &mut notes,
        "peak",
        "first arrival maximum of the Bloch-averaged fidelity",
    );

    let mut rows = Vec::new();
    for row in rows_raw {
        match (&row.peak, &row.error) {
            (Some(peak), _) => rows.push(vec![
                real_of::<T>(row.length),
                row.c_ratio,
                peak.t_peak,
                peak.f_peak,
            ]),
            (None, Some(message)) => note(
                &mut notes,
                &format!("skipped length={} c_ratio={}", row.length, row.c_ratio),
                message,
            ),
            (None, None) => {}
        }
    }
    Ok(FigureBundle {
        figure,
        columns: vec![
            "length".into(),
            "c_ratio".into(),
            "t_peak".into(),
            "f_peak".into(),
        ],
        rows,
        notes,
    })
}

fn disorder_figure<T: Float>(ov: &FigureOverrides<T>) -> Result<FigureBundle<T>> {
    let length = ov.lengths.as_ref().map_or(7, |l| l[0]);
    let c_ratio = ov.c_ratios.as_ref().map_or(T::zero(), |c| c[0]);
    let u0 = ov.u0.unwrap_or_else(|| real::<T>(10.0));
    let bond_sigma = ov.bond_sigma.unwrap_or(0.1);
    let charge_sigma = ov.charge_sigma.unwrap_or(0.025);
    let realizations = ov.realizations.unwrap_or(500);
    let seed = ov.master_seed.unwrap_or(7);
    let t_max = ov.t_max.unwrap_or_else(|| real::<T>(30.0));
    let dt = ov.dt.unwrap_or_else(|| real::<T>(0.01));

    let base_spec = |disorder: DisorderSpec| SweepSpec {
        lengths: vec![length],
        u0,
        c_ratios: vec![c_ratio],
        gamma: None,
        gamma_qp: None,
        disorder: Some(disorder),
        realizations,
        t_max,
        dt,
        threshold: None,
        master_seed: seed,
    };
    let bond = run_disorder_ensemble(&base_spec(DisorderSpec {
        bond_sigma,
        charge_sigma: 0.0,
        seed,
    }))?;
    let charge = run_disorder_ensemble(&base_spec(DisorderSpec {
        bond_sigma: 0.0,
        charge_sigma,
        seed,
    }))?;

    let params = ChainParams::uniform(length, u0, c_ratio);
    let model = CapacitanceModel::build(length, c_ratio)?;
    let h = build_hamiltonian(&params, &model)?;
    let clean = fidelity_series(&h, t_max, dt)?;

    let mut rows = Vec::with_capacity(clean.times.len());
    for k in 0..clean.times.len() {
        rows.push(vec![
            clean.times[k],
            clean.fidelity[k],
            bond.fidelity.mean[k],
            bond.fidelity.std_error[k],
            charge.fidelity.mean[k],
            charge.fidelity.std_error[k],
        ]);
    }

    let mut notes = Vec::new();
    note(&mut notes, "length", length);
    note(&mut notes, "u0", u0);
    note(&mut notes, "c_ratio", c_ratio);
    note(&mut notes, "bond_sigma", bond_sigma);
    note(&mut notes, "charge_sigma", charge_sigma);
    note(&mut notes, "realizations", realizations);
    note(&mut notes, "seed", seed);
    note(&mut notes, "t_max", t_max);
    note(&mut notes, "dt", dt);
    note(
        &mut notes,
        "bond first-peak fidelity",
        format!(
            "{} +/- {} (n = {})",
            bond.peak_fidelity.mean, bond.peak_fidelity.std_error, bond.peak_fidelity.n
        ),
    );
    note(
        &mut notes,
        "charge first-peak fidelity",
        format!(
            "{} +/- {} (n = {})",
            charge.peak_fidelity.mean, charge.peak_fidelity.std_error, charge.peak_fidelity.n
        ),
    );

    Ok(FigureBundle {
        figure: Figure::Disorder,
        columns: vec![
            "t".into(),
            "fidelity_clean".into(),
            "bond_mean".into(),
            "bond_std_error".into(),
            "charge_mean".into(),
            "charge_std_error".into(),
        ],
        rows,
        notes,
    })
}

fn dephasing_figure<T: Float>(ov: &FigureOverrides<T>) -> Result<FigureBundle<T>> {
    let length = ov.lengths.as_ref().map_or(7, |l| l[0]);
    let c_ratio = ov.c_ratios.as_ref().map_or_else(|| real::<T>(0.1), |c| c[0]);
    let u0 = ov.u0.unwrap_or_else(|| real::<T>(10.0));
    let gamma = ov.gamma.unwrap_or_else(|| real::<T>(0.01));
    let t_max = ov.t_max.unwrap_or_else(|| real::<T>(60.0));
    let dt = ov.dt.unwrap_or_else(|| real::<T>(0.002));

    let params = ChainParams::uniform(length, u0, c_ratio);
    let model = CapacitanceModel::build(length, c_ratio)?;
    let h = build_hamiltonian(&params, &model)?;
    let rates = build_dephasing_rates(gamma, &model)?;
    let half_pi = T::pi() * real::<T>(0.5);
    let rho0 = DensityMatrix::from_bloch(length, half_pi, T::zero())?;
    // Record on a grid of roughly 0.01 regardless of the integration step.
    let stride = (real::<T>(0.01) / dt)
        .to_f64()
        .map_or(1, |r| r.round() as usize)
        .max(1);
    let run = evolve_dephasing(&rho0, &h, &rates, t_max, dt, stride)?;

    let evolution = TransferEvolution::new(&h)?;
    let mut rows = Vec::with_capacity(run.len());
    for (k, &t) in run.times.iter().enumerate() {
        let noiseless = fidelity_closed_form(evolution.amplitude(t))?;
        rows.push(vec![t, noiseless, run.fidelity[k]]);
    }

    let mut notes = Vec::new();
    note(&mut notes, "length", length);
    note(&mut notes, "u0", u0);
    note(&mut notes, "c_ratio", c_ratio);
    note(&mut notes, "gamma", gamma);
    note(&mut notes, "t_max", t_max);
    note(&mut notes, "dt", dt);
    note(
        &mut notes,
        "preparation",
        "equatorial Bloch state; the fidelity column is the full sphere average",
    );

    Ok(FigureBundle {
        figure: Figure::Dephasing,
        columns: vec![
            "t".into(),
            "fidelity_noiseless".into(),
            "fidelity_noisy".into(),
        ],
        rows,
        notes,
    })
}

fn readout_figure<T: Float>(ov: &FigureOverrides<T>) -> Result<FigureBundle<T>> {
    let length = ov.lengths.as_ref().map_or(7, |l| l[0]);
    let c_ratio = ov.c_ratios.as_ref().map_or_else(|| real::<T>(0.1), |c| c[0]);
    let u0 = ov.u0.unwrap_or_else(|| real::<T>(10.0));
    let gamma_qp = ov.gamma_qp.unwrap_or_else(|| real::<T>(0.05));
    let t_max = ov.t_max.unwrap_or_else(|| real::<T>(30.0));
    let dt = ov.dt.unwrap_or_else(|| real::<T>(0.005));

    let params = ChainParams::uniform(length, u0, c_ratio);
    let rp = ReadoutParams {
        gamma_qp,
        t_star: T::zero(),
        t_pulse: T::one(),
        t_tail: real::<T>(20.0) / gamma_qp,
        dt,
    };
    let grid_step = dt * real::<T>(5.0);
    let points = (t_max / grid_step)
        .to_f64()
        .expect("finite grid size")
        .floor() as usize;
    if points < 2 {
        return Err(Error::InvalidParameter(
            "t_max leaves fewer than two disconnect times on the grid".into(),
        ));
    }
    let grid: Vec<T> = (1..=points).map(|k| real_of::<T>(k) * grid_step).collect();
    let sweep = current_vs_tstar_sweep(&params, &rp, &grid, T::pi(), T::zero())?;

    let mut rows = Vec::with_capacity(grid.len());
    for k in 0..sweep.t_star.len() {
        rows.push(vec![
            sweep.t_star[k],
            sweep.integrated_current[k],
            sweep.approx_integrated_current[k],
            sweep.fidelity_isolated[k],
            sweep.rho_ll[k],
            sweep.p_qp[k],
        ]);
    }

    let mut notes = Vec::new();
    note(&mut notes, "length", length);
    note(&mut notes, "u0", u0);
    note(&mut notes, "c_ratio", c_ratio);
    note(&mut notes, "gamma_qp", gamma_qp);
    note(&mut notes, "t_max", t_max);
    note(&mut notes, "dt", dt);
    note(&mut notes, "preparation", "full pair on island 1");
    note(
        &mut notes,
        "charge units",
        "electrons per pulse period (t_pulse = 1)",
    );
    for pair in &sweep.peak_pairs {
        note(
            &mut notes,
            &format!("charge peak at t_star = {}", pair.t_current),
            format!(
                "nearest fidelity peak at {} (offset {})",
                pair.t_fidelity, pair.offset
            ),
        );
    }

    Ok(FigureBundle {
        figure: Figure::ReadoutCurrent,
        columns: vec![
            "t_star".into(),
            "integrated_current".into(),
            "approx_integrated_current".into(),
            "fidelity_isolated".into(),
            "rho_ll".into(),
            "p_qp".into(),
        ],
        rows,
        notes,
    })
}
