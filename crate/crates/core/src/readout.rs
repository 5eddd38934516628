// Copyright 2026 jjchain contributors
// SPDX-License-Identifier: Apache-2.0

//! Destructive charge readout at the receiving island.
//!
//! A probe junction converts the pair on the last island into two
//! quasiparticle tunneling events at rate `Gamma`. The state space grows by
//! one incoherent label, `{vac, qp, 1..L}`: `qp` tags the half-emitted
//! configuration after the first tunneling event. The evolution is a
//! cascade
//!
//! ```text
//! rho_c' = -i [H, rho_c] - (Gamma/2) {P_L, rho_c}
//! v'     = -i H v - (Gamma/2) P_L v
//! p_qp'  = Gamma rho_LL - Gamma p_qp
//! p_vac' = Gamma p_qp
//! ```
//!
//! with `v` the vacuum coherence column and `P_L` the projector on the
//! receiving island. The measured current is `I(t) = Gamma (rho_LL + p_qp)`
//! in units of the electron charge per unit time.
//!
//! The protocol connects the probe while the pair travels, then opens the
//! last hopping bond at `t_star` and collects the remaining charge. Because
//! nothing reenters the receiving island after the disconnect, the collected
//! tail equals `2 rho_LL(t_star) + p_qp(t_star)` exactly, which is what
//! makes the measured charge track the transfer fidelity.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::dephasing::{DensityMatrix, StateBasis};
use crate::electrostatics::CapacitanceModel;
use crate::error::{Error, Result};
use crate::float::{real, real_of, Float};
use crate::hamiltonian::{build_hamiltonian, ChainParams};
use crate::unitary::{fidelity_closed_form, lobe_peak_indices, TransferEvolution};

/// Probe and protocol settings for a readout run.
#[derive(Debug, Clone)]
pub struct ReadoutParams<T: Float> {
    /// Quasiparticle tunneling rate `Gamma` of the probe junction.
    pub gamma_qp: T,
    /// Disconnect time of the last hopping bond.
    pub t_star: T,
    /// Pulse repetition period `T`; reported currents are in units `e / T`.
    pub t_pulse: T,
    /// Collection window after the disconnect. Must cover at least
    /// `20 / Gamma` so the truncated tail is negligible.
    pub t_tail: T,
    /// Integrator step.
    pub dt: T,
}

impl<T: Float> ReadoutParams<T> {
    /// Conventional settings: unit pulse period, tail of `20 / Gamma`,
    /// step `0.005`.
    pub fn standard(gamma_qp: T, t_star: T) -> Self {
        Self {
            gamma_qp,
            t_star,
            t_pulse: T::one(),
            t_tail: real::<T>(20.0) / gamma_qp,
            dt: real::<T>(0.005),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma_qp.is_finite() || self.gamma_qp <= T::zero() {
            return Err(Error::InvalidParameter(format!(
                "gamma_qp must be finite and positive, got {}",
                self.gamma_qp
            )));
        }
        if !self.t_star.is_finite() || self.t_star < T::zero() {
            return Err(Error::InvalidParameter(format!(
                "t_star must be finite and non-negative, got {}",
                self.t_star
            )));
        }
        if !self.t_pulse.is_finite() || self.t_pulse <= T::zero() {
            return Err(Error::InvalidParameter(format!(
                "t_pulse must be finite and positive, got {}",
                self.t_pulse
            )));
        }
        let needed = real::<T>(20.0) / self.gamma_qp;
        if !self.t_tail.is_finite() || self.t_tail < needed {
            return Err(Error::InvalidParameter(format!(
                "t_tail must be at least 20 / gamma_qp = {needed}, got {}",
                self.t_tail
            )));
        }
        if !self.dt.is_finite() || self.dt <= T::zero() || self.dt > real::<T>(0.1) {
            return Err(Error::InvalidParameter(format!(
                "dt must lie in (0, 0.1], got {}",
                self.dt
            )));
        }
        Ok(())
    }
}

/// Recorded trace of one readout run.
#[derive(Debug, Clone)]
pub struct ReadoutResult<T: Float> {
    pub times: Vec<T>,
    /// Instantaneous current `Gamma (rho_LL + p_qp)` in units `e` per unit
    /// time (one electron per tunneling event).
    pub current: Vec<T>,
    pub p_vac: Vec<T>,
    pub p_qp: Vec<T>,
    pub rho_ll: Vec<T>,
    /// Times of the retained density-matrix snapshots.
    pub snapshot_times: Vec<T>,
    /// Snapshots kept at the validation stride and the stage boundaries.
    pub snapshots: Vec<DensityMatrix<T>>,
    /// Pair population of the receiving island at the disconnect.
    pub rho_ll_star: T,
    pub p_qp_star: T,
    /// Charge collected before the disconnect, in units of `e`.
    pub emitted_before_disconnect: T,
    /// Full collected charge over pulse period, in units `e / T`.
    pub integrated_current: T,
    /// The estimate `(2 rho_LL + p_qp)(t_star) / T` that ignores emission
    /// during the transfer.
    pub approx_integrated_current: T,
    /// Set when the protocol assumptions are strained, for example when
    /// `Gamma t_star` is not small.
    pub protocol_warning: Option<String>,
    pub worst_trace_error: T,
    pub worst_min_eigenvalue: T,
    pub final_state: DensityMatrix<T>,
}

#[derive(Clone)]
struct Blocks<T: Float> {
    rho: DMatrix<Complex<T>>,
    v: DVector<Complex<T>>,
    p_qp: T,
    p_vac: T,
    /// Running integral of the current, in units of `e`.
    q: T,
}

impl<T: Float> Blocks<T> {
    fn axpy(&mut self, a: T, other: &Self) {
        let ac = Complex::new(a, T::zero());
        self.rho += &other.rho * ac;
        self.v += &other.v * ac;
        self.p_qp += a * other.p_qp;
        self.p_vac += a * other.p_vac;
        self.q += a * other.q;
    }

    fn charge_trace(&self) -> T {
        self.rho.trace().re
    }

    fn rho_ll(&self) -> T {
        let l = self.rho.nrows();
        self.rho[(l - 1, l - 1)].re
    }

    fn current(&self, gamma: T) -> T {
        gamma * (self.rho_ll() + self.p_qp)
    }

    fn assemble(&self) -> DMatrix<Complex<T>> {
        let l = self.rho.nrows();
        let zero = Complex::new(T::zero(), T::zero());
        let mut full = DMatrix::from_element(l + 2, l + 2, zero);
        full[(0, 0)] = Complex::new(self.p_vac, T::zero());
        full[(1, 1)] = Complex::new(self.p_qp, T::zero());
        for i in 0..l {
            full[(i + 2, 0)] = self.v[i];
            full[(0, i + 2)] = self.v[i].conj();
            for j in 0..l {
                full[(i + 2, j + 2)] = self.rho[(i, j)];
            }
        }
        full
    }
}

fn readout_rhs<T: Float>(h: &DMatrix<Complex<T>>, gamma: T, state: &Blocks<T>) -> Blocks<T> {
    let l = state.rho.nrows();
    let minus_i = Complex::new(T::zero(), -T::one());
    let half_gamma = gamma * real::<T>(0.5);

    let mut rho_dot = (h * &state.rho - &state.rho * h) * minus_i;
    for j in 0..l {
        let damp = Complex::new(half_gamma, T::zero());
        rho_dot[(l - 1, j)] -= state.rho[(l - 1, j)] * damp;
        rho_dot[(j, l - 1)] -= state.rho[(j, l - 1)] * damp;
    }

    let mut v_dot = h * &state.v * minus_i;
    v_dot[l - 1] -= state.v[l - 1] * Complex::new(half_gamma, T::zero());

    let rho_ll = state.rho_ll();
    Blocks {
        rho: rho_dot,
        v: v_dot,
        p_qp: gamma * (rho_ll - state.p_qp),
        p_vac: gamma * state.p_qp,
        q: gamma * (rho_ll + state.p_qp),
    }
}

fn rk4_step<T: Float>(h: &DMatrix<Complex<T>>, gamma: T, state: &Blocks<T>, dt: T) -> Blocks<T> {
    let half = real::<T>(0.5);
    let sixth = real::<T>(1.0 / 6.0);

    let k1 = readout_rhs(h, gamma, state);
    let mut s2 = state.clone();
    s2.axpy(dt * half, &k1);
    let k2 = readout_rhs(h, gamma, &s2);
    let mut s3 = state.clone();
    s3.axpy(dt * half, &k2);
    let k3 = readout_rhs(h, gamma, &s3);
    let mut s4 = state.clone();
    s4.axpy(dt, &k3);
    let k4 = readout_rhs(h, gamma, &s4);

    let mut next = state.clone();
    next.axpy(dt * sixth, &k1);
    next.axpy(dt * sixth * real::<T>(2.0), &k2);
    next.axpy(dt * sixth * real::<T>(2.0), &k3);
    next.axpy(dt * sixth, &k4);
    next
}

fn embed_complex<T: Float>(m: &DMatrix<T>) -> DMatrix<Complex<T>> {
    m.map(|x| Complex::new(x, T::zero()))
}

fn disconnect_last_bond<T: Float>(h: &DMatrix<T>) -> DMatrix<T> {
    let l = h.nrows();
    let mut out = h.clone();
    if l >= 2 {
        out[(l - 2, l - 1)] = T::zero();
        out[(l - 1, l - 2)] = T::zero();
    }
    out
}

fn bloch_blocks<T: Float>(length: usize, theta: T, phi: T) -> Result<Blocks<T>> {
    if !theta.is_finite() || !phi.is_finite() {
        return Err(Error::InvalidParameter(
            "Bloch angles must be finite".into(),
        ));
    }
    let half = real::<T>(0.5);
    let c = (theta * half).cos();
    let s = (theta * half).sin();
    let site = Complex::new(phi.cos(), phi.sin()) * s;

    let zero = Complex::new(T::zero(), T::zero());
    let mut rho = DMatrix::from_element(length, length, zero);
    rho[(0, 0)] = site * site.conj();
    let mut v = DVector::from_element(length, zero);
    v[0] = site * Complex::new(c, T::zero());
    Ok(Blocks {
        rho,
        v,
        p_qp: T::zero(),
        p_vac: Complex::new(c, T::zero()).norm_sqr(),
        q: T::zero(),
    })
}

struct Recorder<T: Float> {
    times: Vec<T>,
    current: Vec<T>,
    p_vac: Vec<T>,
    p_qp: Vec<T>,
    rho_ll: Vec<T>,
    snapshot_times: Vec<T>,
    snapshots: Vec<DensityMatrix<T>>,
    worst_trace_error: T,
    worst_min_eigenvalue: T,
    steps_seen: usize,
    validate_stride: usize,
}

impl<T: Float> Recorder<T> {
    fn new(validate_stride: usize) -> Self {
        Self {
            times: Vec::new(),
            current: Vec::new(),
            p_vac: Vec::new(),
            p_qp: Vec::new(),
            rho_ll: Vec::new(),
            snapshot_times: Vec::new(),
            snapshots: Vec::new(),
            worst_trace_error: T::zero(),
            worst_min_eigenvalue: T::one(),
            steps_seen: 0,
            validate_stride: validate_stride.max(1),
        }
    }

    fn record(&mut self, t: T, state: &Blocks<T>, gamma: T, force_validate: bool) -> Result<()> {
        let current = state.current(gamma);
        let tol = real::<T>(1e-10).max(T::epsilon() * real::<T>(1000.0));
        if current < -tol {
            return Err(Error::NumericalFailure(format!(
                "current turned negative ({current}) at t = {t}; reduce dt"
            )));
        }
        let total = state.p_vac + state.p_qp + state.charge_trace();
        if (total - T::one()).abs() > tol {
            return Err(Error::NumericalFailure(format!(
                "probability bookkeeping off by {} at t = {t}; reduce dt",
                (total - T::one()).abs()
            )));
        }
        if force_validate || self.steps_seen % self.validate_stride == 0 {
            let snapshot = DensityMatrix::from_matrix(StateBasis::Readout, state.assemble())?;
            self.worst_trace_error = self.worst_trace_error.max(snapshot.trace_error());
            self.worst_min_eigenvalue = self.worst_min_eigenvalue.min(snapshot.min_eigenvalue());
            self.snapshot_times.push(t);
            self.snapshots.push(snapshot);
        }
        self.steps_seen += 1;
        self.times.push(t);
        self.current.push(current);
        self.p_vac.push(state.p_vac);
        self.p_qp.push(state.p_qp);
        self.rho_ll.push(state.rho_ll());
        Ok(())
    }
}

/// Integrates one stage over `[t0, t1]`, recording after every step. The
/// state at `t0` is assumed already recorded. Step times are reconstructed
/// from the step index so long stages accumulate no grid drift.
fn integrate_stage<T: Float>(
    state: &mut Blocks<T>,
    h: &DMatrix<Complex<T>>,
    gamma: T,
    t0: T,
    t1: T,
    dt: T,
    recorder: &mut Recorder<T>,
) -> Result<()> {
    let span = t1 - t0;
    if span <= T::zero() {
        return Ok(());
    }
    let whole = (span / dt + real::<T>(1e-9))
        .floor()
        .to_f64()
        .expect("finite step count") as usize;
    let remainder = span - real_of::<T>(whole) * dt;
    let tiny = dt * real::<T>(1e-6);

    for k in 1..=whole {
        *state = rk4_step(h, gamma, state, dt);
        let t = if k == whole && remainder <= tiny {
            t1
        } else {
            t0 + real_of::<T>(k) * dt
        };
        let boundary = k == whole && remainder <= tiny;
        recorder.record(t, state, gamma, boundary)?;
    }
    if remainder > tiny {
        *state = rk4_step(h, gamma, state, remainder);
        recorder.record(t1, state, gamma, true)?;
    }
    Ok(())
}

/// Runs the full readout protocol for a Bloch preparation
/// `cos(theta/2)|vac> + e^{i phi} sin(theta/2)|1>`: probe connected over
/// `[0, t_star]`, last bond opened afterwards, charge collected until
/// `t_star + t_tail`.
pub fn evolve_readout<T: Float>(
    theta: T,
    phi: T,
    params: &ChainParams<T>,
    rp: &ReadoutParams<T>,
) -> Result<ReadoutResult<T>> {
    params.validate()?;
    rp.validate()?;
    let model = CapacitanceModel::build(params.length, params.c_ratio)?;
    let h = build_hamiltonian(params, &model)?;
    let h_conn = embed_complex(h.matrix());
    let h_disc = embed_complex(&disconnect_last_bond(h.matrix()));
    let gamma = rp.gamma_qp;

    let mut state = bloch_blocks(params.length, theta, phi)?;
    let initial_pair = state.charge_trace();

    let total_steps = ((rp.t_star + rp.t_tail) / rp.dt)
        .to_f64()
        .expect("finite step count") as usize;
    let mut recorder = Recorder::new(total_steps / 256);
    recorder.record(T::zero(), &state, gamma, true)?;

    integrate_stage(
        &mut state,
        &h_conn,
        gamma,
        T::zero(),
        rp.t_star,
        rp.dt,
        &mut recorder,
    )?;
    let rho_ll_star = state.rho_ll();
    let p_qp_star = state.p_qp;
    let emitted_before_disconnect = state.q;

    integrate_stage(
        &mut state,
        &h_disc,
        gamma,
        rp.t_star,
        rp.t_star + rp.t_tail,
        rp.dt,
        &mut recorder,
    )?;

    let emitted_total = state.q;
    let budget = real::<T>(2.0) * initial_pair + real::<T>(1e-8);
    if emitted_total > budget {
        return Err(Error::NumericalFailure(format!(
            "collected charge {emitted_total} exceeds the available 2 x {initial_pair}"
        )));
    }

    let protocol_warning = if gamma * rp.t_star > real::<T>(0.2) {
        Some(format!(
            "gamma_qp * t_star = {} is not small; charge leaks out during the \
             transfer and the fidelity estimate degrades",
            gamma * rp.t_star
        ))
    } else {
        None
    };

    let final_state = DensityMatrix::from_matrix(StateBasis::Readout, state.assemble())?;
    Ok(ReadoutResult {
        times: recorder.times,
        current: recorder.current,
        p_vac: recorder.p_vac,
        p_qp: recorder.p_qp,
        rho_ll: recorder.rho_ll,
        snapshot_times: recorder.snapshot_times,
        snapshots: recorder.snapshots,
        rho_ll_star,
        p_qp_star,
        emitted_before_disconnect,
        integrated_current: emitted_total / rp.t_pulse,
        approx_integrated_current: (real::<T>(2.0) * rho_ll_star + p_qp_star) / rp.t_pulse,
        protocol_warning,
        worst_trace_error: recorder.worst_trace_error,
        worst_min_eigenvalue: recorder.worst_min_eigenvalue,
        final_state,
    })
}

/// One matched pair of a collected-charge peak and an isolated-chain
/// fidelity peak.
#[derive(Debug, Clone, Copy)]
pub struct PeakPair<T: Float> {
    pub t_current: T,
    pub t_fidelity: T,
    /// `t_current - t_fidelity`.
    pub offset: T,
}

/// Collected charge as a function of the disconnect time.
#[derive(Debug, Clone)]
pub struct ReadoutSweep<T: Float> {
    pub t_star: Vec<T>,
    pub integrated_current: Vec<T>,
    pub approx_integrated_current: Vec<T>,
    /// Bloch-averaged transfer fidelity of the isolated chain (no probe),
    /// for comparison against the charge curve.
    pub fidelity_isolated: Vec<T>,
    pub rho_ll: Vec<T>,
    pub p_qp: Vec<T>,
    pub peak_pairs: Vec<PeakPair<T>>,
}

fn smooth_peak_indices<T: Float>(values: &[T], relative_floor: T, min_separation: T, grid: &[T]) -> Vec<usize> {
    let n = values.len();
    let mut maxima = Vec::new();
    for i in 1..n.saturating_sub(1) {
        if values[i] > values[i - 1] && values[i] > values[i + 1] {
            maxima.push(i);
        }
    }
    let top = maxima
        .iter()
        .map(|&i| values[i])
        .fold(T::zero(), |a, b| a.max(b));
    let floor = top * relative_floor;
    maxima.retain(|&i| values[i] >= floor);

    maxima.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .expect("finite peak values")
    });
    let mut kept: Vec<usize> = Vec::new();
    for &i in &maxima {
        if kept
            .iter()
            .all(|&j| (grid[i] - grid[j]).abs() >= min_separation)
        {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    kept
}

/// Sweeps the disconnect time over a grid with a single connected pass.
///
/// The collected tail after a disconnect at `t_star` is
/// `2 rho_LL(t_star) + p_qp(t_star)` exactly, so no tail integration is
/// needed. `rp.t_star` is superseded by the grid; `gamma_qp`, `t_pulse`,
/// and `dt` are taken from `rp`. Peaks of the charge curve are paired with
/// the nearest peaks of the isolated-chain fidelity.
pub fn current_vs_tstar_sweep<T: Float>(
    params: &ChainParams<T>,
    rp: &ReadoutParams<T>,
    t_stars: &[T],
    theta: T,
    phi: T,
) -> Result<ReadoutSweep<T>> {
    params.validate()?;
    rp.validate()?;
    if t_stars.len() < 2 {
        return Err(Error::InvalidParameter(
            "the disconnect grid needs at least two points".into(),
        ));
    }
    if !t_stars[0].is_finite() || t_stars[0] < T::zero() {
        return Err(Error::InvalidParameter(
            "disconnect times must be finite and non-negative".into(),
        ));
    }
    for w in t_stars.windows(2) {
        if !w[1].is_finite() || w[1] <= w[0] {
            return Err(Error::InvalidParameter(
                "disconnect times must increase strictly".into(),
            ));
        }
    }

    let model = CapacitanceModel::build(params.length, params.c_ratio)?;
    let h = build_hamiltonian(params, &model)?;
    let h_conn = embed_complex(h.matrix());
    let gamma = rp.gamma_qp;
    let evolution = TransferEvolution::new(&h)?;

    let mut state = bloch_blocks(params.length, theta, phi)?;
    let total_steps = (*t_stars.last().unwrap() / rp.dt)
        .to_f64()
        .expect("finite step count") as usize;
    let mut recorder = Recorder::new(total_steps / 256);
    recorder.record(T::zero(), &state, gamma, true)?;

    let two = real::<T>(2.0);
    let mut sweep = ReadoutSweep {
        t_star: Vec::with_capacity(t_stars.len()),
        integrated_current: Vec::with_capacity(t_stars.len()),
        approx_integrated_current: Vec::with_capacity(t_stars.len()),
        fidelity_isolated: Vec::with_capacity(t_stars.len()),
        rho_ll: Vec::with_capacity(t_stars.len()),
        p_qp: Vec::with_capacity(t_stars.len()),
        peak_pairs: Vec::new(),
    };
    let mut envelope = Vec::with_capacity(t_stars.len());

    let mut t_prev = T::zero();
    for &t_star in t_stars {
        integrate_stage(
            &mut state,
            &h_conn,
            gamma,
            t_prev,
            t_star,
            rp.dt,
            &mut recorder,
        )?;
        t_prev = t_star;

        let rho_ll = state.rho_ll();
        let tail = two * rho_ll + state.p_qp;
        let f = evolution.amplitude(t_star);
        sweep.t_star.push(t_star);
        sweep.integrated_current.push((state.q + tail) / rp.t_pulse);
        sweep.approx_integrated_current.push(tail / rp.t_pulse);
        sweep.fidelity_isolated.push(fidelity_closed_form(f)?);
        sweep.rho_ll.push(rho_ll);
        sweep.p_qp.push(state.p_qp);
        envelope.push(f.norm_sqr().sqrt());
    }

    let charge_peaks = smooth_peak_indices(
        &sweep.integrated_current,
        real::<T>(0.25),
        real::<T>(2.0),
        &sweep.t_star,
    );
    let fidelity_peaks =
        lobe_peak_indices(&envelope, &sweep.fidelity_isolated, real::<T>(0.25))?;
    for &ci in &charge_peaks {
        let t_c = sweep.t_star[ci];
        let nearest = fidelity_peaks
            .iter()
            .map(|&fi| sweep.t_star[fi])
            .min_by(|a, b| {
                (*a - t_c)
                    .abs()
                    .partial_cmp(&(*b - t_c).abs())
                    .expect("finite peak times")
            });
        if let Some(t_f) = nearest {
            sweep.peak_pairs.push(PeakPair {
                t_current: t_c,
                t_fidelity: t_f,
                offset: t_c - t_f,
            });
        }
    }

    Ok(sweep)
}

/// Least-squares exponential rate over the window `[t_from, t_to]`:
/// fits `ln v = a - rate * t` and returns `rate`.
pub fn fit_decay_rate<T: Float>(times: &[T], values: &[T], t_from: T, t_to: T) -> Result<T> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch {
            what: "decay fit samples",
            expected: times.len(),
            got: values.len(),
        });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values.iter()) {
        if t < t_from || t > t_to {
            continue;
        }
        if !v.is_finite() || v <= T::zero() {
            return Err(Error::InvalidParameter(format!(
                "decay fit needs positive samples, got {v} at t = {t}"
            )));
        }
        xs.push(t);
        ys.push(v.ln());
    }
    if xs.len() < 2 {
        return Err(Error::InvalidParameter(
            "decay fit window holds fewer than two samples".into(),
        ));
    }
    let n = real_of::<T>(xs.len());
    let mean_x = xs.iter().fold(T::zero(), |a, &b| a + b) / n;
    let mean_y = ys.iter().fold(T::zero(), |a, &b| a + b) / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (&x, &y) in xs.iter().zip(ys.iter()) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx <= T::zero() {
        return Err(Error::InvalidParameter(
            "decay fit window has no time spread".into(),
        ));
    }
    Ok(-(sxy / sxx))
}
