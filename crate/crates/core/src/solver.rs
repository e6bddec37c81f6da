//! Time integration of the projected coefficient SDE system for nonlocal,
//! regularized and local Cahn-Hilliard dynamics.
//!
//! Per cosine mode `i != 0` the stabilized IMEX Euler-Maruyama update reads
//!
//! ```text
//! alpha_i+ = [alpha_i - dt l_i (beta_i - S_i alpha_i) + (G dW)_i] / (1 + dt l_i S_i)
//! ```
//!
//! with `beta` the coefficients of the chemical potential at the current
//! state. The implicit shift `S_i` is the model's diagonal linear symbol
//! plus a scalar stabilization: `S_i = sigma(i) + S0` for the nonlocal model
//! (`sigma` the kernel symbol, which tends to `l_i` as eps -> 0) and
//! `S_i = l_i + S0` for the local model. Mode 0 only feels the noise, so
//! mean-zero channels conserve mass to the bit.

use thiserror::Error;

use crate::diagnostics::{
    channel_bilinear_forms, local_energy, local_trace_rate, nonlocal_trace_rate, EnsembleStats,
    ItoLedger, PathRecord,
};
use crate::kernel::{convolve, nonlocal_energy, KernelGrid};
use crate::noise::{NoiseSpec, WienerIncrement};
use crate::potential::{Potential, PotentialError};
use crate::spectral::{CosineBasis, Field, GridSpec, SpectralField};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("solution left the finite range at step {step}")]
    NonFinite { step: usize },
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

#[derive(Clone, Copy)]
pub enum Model<'a> {
    Nonlocal(&'a KernelGrid),
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ImexEm,
    ExplicitEm,
}

#[derive(Clone, Copy)]
pub struct SolverConfig<'a> {
    pub model: Model<'a>,
    /// Yosida level; 0 runs the raw potential.
    pub lambda: f64,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Scalar stabilization added to the implicit shift; `None` picks
    /// `max |F''|` on [-2, 2].
    pub stabilization: Option<f64>,
    /// Record cadence in steps; 0 picks `max(1, steps/512)`.
    pub record_every: usize,
    /// Retained modes per axis; `None` keeps the full grid.
    pub modes_cutoff: Option<usize>,
    /// Track the stochastic-integral / trace ledger for the energy residual.
    pub track_ito: bool,
    /// Sub-increments summed per step, for runs sharing a finer Brownian
    /// path (1 = plain keying).
    pub noise_refine: u64,
}

impl<'a> SolverConfig<'a> {
    pub fn new(model: Model<'a>, dt: f64, t_end: f64) -> Self {
        Self {
            model,
            lambda: 0.0,
            dt,
            t_end,
            scheme: Scheme::ImexEm,
            stabilization: None,
            record_every: 0,
            modes_cutoff: None,
            track_ito: false,
            noise_refine: 1,
        }
    }
}

/// Coefficient state of one path.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub alpha: SpectralField,
    pub t: f64,
    pub step: usize,
}

/// Default scalar stabilization: `max |F''|` over [-2, 2].
pub fn default_stabilization(pot: &Potential) -> f64 {
    (0..=400)
        .map(|i| {
            let s = -2.0 + i as f64 / 100.0;
            pot.ddf(s).abs()
        })
        .fold(0.0, f64::max)
}

/// Stability factor of the fully explicit scheme,
/// `dt * l_max * (a_max + max|F''|)`; above ~2 the scheme is expected to
/// blow up. Advisory only.
pub fn explicit_stability_factor(cfg: &SolverConfig, pot: &Potential, grid: &GridSpec) -> f64 {
    let eig = crate::spectral::ModeEigenvalues::new(grid);
    let a_max = match cfg.model {
        Model::Nonlocal(k) => k.max_a(),
        Model::Local => eig.max(),
    };
    cfg.dt * eig.max() * (a_max + default_stabilization(pot))
}

/// Chemical potential at a nodal state: `a phi - K*phi + F'_lam(phi)` for
/// the nonlocal model, `-Delta phi + F'_lam(phi)` for the local one.
pub fn assemble_mu(
    phi: &Field,
    model: &Model,
    pot: &Potential,
    lambda: f64,
    basis: &CosineBasis,
) -> Field {
    let spectral;
    let state = match model {
        Model::Local => {
            spectral = basis.to_spectral(phi);
            Some(&spectral)
        }
        Model::Nonlocal(_) => None,
    };
    mu_from_state(phi, state, model, pot, lambda, basis)
}

fn mu_from_state(
    phi: &Field,
    state: Option<&SpectralField>,
    model: &Model,
    pot: &Potential,
    lambda: f64,
    basis: &CosineBasis,
) -> Field {
    let reg = pot.regularized(lambda);
    match model {
        Model::Nonlocal(kernel) => {
            let conv = convolve(kernel, phi);
            let values = kernel
                .a_field()
                .values
                .iter()
                .zip(&phi.values)
                .zip(&conv.values)
                .map(|((&a, &v), &c)| a * v - c + reg.df_lambda(v))
                .collect();
            Field { grid: phi.grid.clone(), values }
        }
        Model::Local => {
            let alpha = state.expect("local model needs the coefficient state");
            let neg_lap = SpectralField {
                grid: alpha.grid.clone(),
                coeffs: alpha
                    .coeffs
                    .iter()
                    .zip(&basis.eigenvalues().ell)
                    .map(|(&c, &e)| e * c)
                    .collect(),
            };
            let lap_phys = basis.to_physical(&neg_lap);
            let values = lap_phys
                .values
                .iter()
                .zip(&phi.values)
                .map(|(&l, &v)| l + reg.df_lambda(v))
                .collect();
            Field { grid: phi.grid.clone(), values }
        }
    }
}

/// One solver instance bound to a configuration: precomputed shift, masks
/// and channel data. Immutable during stepping; shareable across paths.
pub struct StepEngine<'a> {
    pub cfg: SolverConfig<'a>,
    pub basis: &'a CosineBasis,
    pot: &'a Potential,
    noise: &'a NoiseSpec,
    /// Implicit shift per mode.
    shift: Vec<f64>,
    retained: Vec<bool>,
    /// `B(e_k, e_k)` (nonlocal) or `l_k` (local) per channel, for the trace
    /// ledger.
    channel_quad: Vec<f64>,
    /// Channel mode shapes, materialized once for the ledger.
    channel_fields: Vec<Field>,
}

impl<'a> StepEngine<'a> {
    pub fn new(
        cfg: SolverConfig<'a>,
        basis: &'a CosineBasis,
        pot: &'a Potential,
        noise: &'a NoiseSpec,
    ) -> Self {
        let grid = basis.grid();
        let ell = &basis.eigenvalues().ell;
        let s0 = cfg.stabilization.unwrap_or_else(|| default_stabilization(pot));
        let shift: Vec<f64> = match cfg.model {
            Model::Nonlocal(k) => k.symbol().iter().map(|&s| s + s0).collect(),
            Model::Local => ell.iter().map(|&e| e + s0).collect(),
        };
        let retained = match cfg.modes_cutoff {
            None => vec![true; grid.total_points()],
            Some(cut) => retained_mask(grid, cut),
        };
        let (channel_quad, channel_fields) = if cfg.track_ito {
            let fields: Vec<Field> = noise.channels().iter().map(|c| c.field.clone()).collect();
            let quad = match cfg.model {
                Model::Nonlocal(k) => channel_bilinear_forms(k, &fields),
                Model::Local => noise.channels().iter().map(|c| c.ell).collect(),
            };
            (quad, fields)
        } else {
            (Vec::new(), Vec::new())
        };
        Self { cfg, basis, pot, noise, shift, retained, channel_quad, channel_fields }
    }

    pub fn project(&self, alpha: &mut SpectralField) {
        for (c, &keep) in alpha.coeffs.iter_mut().zip(&self.retained) {
            if !keep {
                *c = 0.0;
            }
        }
    }

    /// Advance one step of size `inc.dt`; accumulates the per-step integrals
    /// into `acc`. The state is the pre-step state on entry.
    pub fn step(
        &self,
        state: &mut SolverState,
        inc: &WienerIncrement,
        acc: &mut StepAccumulators,
    ) -> Result<(), SolverError> {
        let dt = inc.dt;
        let ell = &self.basis.eigenvalues().ell;
        let phi = self.basis.to_physical(&state.alpha);
        let mu = mu_from_state(
            &phi,
            Some(&state.alpha),
            &self.cfg.model,
            self.pot,
            self.cfg.lambda,
            self.basis,
        );
        let beta = self.basis.to_spectral(&mu);

        let grad_mu_sq: f64 = beta
            .coeffs
            .iter()
            .zip(ell)
            .map(|(&b, &e)| e * b * b)
            .sum();
        let grad_phi_sq: f64 = state
            .alpha
            .coeffs
            .iter()
            .zip(ell)
            .map(|(&a, &e)| e * a * a)
            .sum();
        acc.grad_mu_sq_integral += dt * grad_mu_sq;
        acc.grad_phi_sq_integral += dt * grad_phi_sq;

        let amps = self.noise.channel_amplitudes(&state.alpha);
        if self.cfg.track_ito {
            for ((ch, &a), &dw) in self.noise.channels().iter().zip(&amps).zip(&inc.dw) {
                if self.retained[ch.mode] {
                    acc.stoch_integral += a * dw * beta.coeffs[ch.mode];
                }
            }
            let rate = match self.cfg.model {
                Model::Nonlocal(_) => nonlocal_trace_rate(
                    &phi,
                    self.pot,
                    self.cfg.lambda,
                    &self.channel_fields,
                    &self.channel_quad,
                    &amps,
                ),
                Model::Local => local_trace_rate(
                    &phi,
                    self.pot,
                    self.cfg.lambda,
                    &self.channel_fields,
                    &self.channel_quad,
                    &amps,
                ),
            };
            acc.trace_term += dt * rate;
        }

        let mut noise_coeff = vec![0.0; state.alpha.coeffs.len()];
        for ((ch, &a), &dw) in self.noise.channels().iter().zip(&amps).zip(&inc.dw) {
            if self.retained[ch.mode] {
                noise_coeff[ch.mode] += a * dw;
            }
        }

        for i in 0..state.alpha.coeffs.len() {
            if !self.retained[i] {
                continue;
            }
            let a = state.alpha.coeffs[i];
            if i == 0 {
                state.alpha.coeffs[0] = a + noise_coeff[0];
                continue;
            }
            let b = beta.coeffs[i];
            let g = noise_coeff[i];
            state.alpha.coeffs[i] = match self.cfg.scheme {
                Scheme::ImexEm => {
                    let s = self.shift[i];
                    (a - dt * ell[i] * (b - s * a) + g) / (1.0 + dt * ell[i] * s)
                }
                Scheme::ExplicitEm => a - dt * ell[i] * b + g,
            };
        }
        state.t += dt;
        state.step += 1;
        if !state.alpha.is_finite() {
            return Err(SolverError::NonFinite { step: state.step });
        }
        Ok(())
    }

    /// Model-matching free energy at a nodal state.
    pub fn energy(&self, phi: &Field) -> f64 {
        match self.cfg.model {
            Model::Nonlocal(k) => nonlocal_energy(k, phi, self.pot, self.cfg.lambda),
            Model::Local => local_energy(self.basis, phi, self.pot, self.cfg.lambda),
        }
    }
}

fn retained_mask(grid: &GridSpec, cutoff: usize) -> Vec<bool> {
    match grid.dim() {
        1 => (0..grid.points(0)).map(|j| j < cutoff).collect(),
        _ => {
            let (n0, n1) = (grid.points(0), grid.points(1));
            let mut mask = vec![false; n0 * n1];
            for j0 in 0..n0 {
                for j1 in 0..n1 {
                    mask[j0 * n1 + j1] = j0 < cutoff && j1 < cutoff;
                }
            }
            mask
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct StepAccumulators {
    pub grad_mu_sq_integral: f64,
    pub grad_phi_sq_integral: f64,
    pub stoch_integral: f64,
    pub trace_term: f64,
}

/// Step sizes covering `[0, t_end]`: uniform `dt` with a truncated final
/// step when `t_end` is not a multiple (a single truncated step when
/// `dt > t_end`).
pub fn step_sizes(dt: f64, t_end: f64) -> Vec<f64> {
    assert!(dt > 0.0, "dt must be positive");
    if t_end <= 0.0 {
        return Vec::new();
    }
    let n_full = (t_end / dt + 1e-9).floor() as usize;
    let mut sizes = vec![dt; n_full];
    let rem = t_end - n_full as f64 * dt;
    if rem > 1e-9 * dt {
        sizes.push(rem);
    }
    sizes
}

fn record_cadence(record_every: usize, steps: usize) -> usize {
    if record_every > 0 {
        record_every
    } else {
        (steps / 512).max(1)
    }
}

/// Integrate one path. Deterministic in `(master_seed, path_index)`.
pub fn run_path(
    cfg: SolverConfig,
    basis: &CosineBasis,
    pot: &Potential,
    noise: &NoiseSpec,
    initial: &Field,
    master_seed: u64,
    path_index: u64,
) -> Result<PathRecord, SolverError> {
    let engine = StepEngine::new(cfg, basis, pot, noise);
    let mut state = SolverState { alpha: basis.to_spectral(initial), t: 0.0, step: 0 };
    engine.project(&mut state.alpha);
    let alpha0_mode0 = state.alpha.coeffs[0];

    let sizes = step_sizes(cfg.dt, cfg.t_end);
    let cadence = record_cadence(cfg.record_every, sizes.len());
    let mut acc = StepAccumulators::default();

    let mut rec = RecordBuilder::new(&engine, cfg.track_ito);
    rec.push(&engine, &state, &acc);

    for (k, &h) in sizes.iter().enumerate() {
        let inc = if cfg.noise_refine > 1 {
            noise.sample_increment_aggregated(master_seed, path_index, k as u64, h, cfg.noise_refine)
        } else {
            noise.sample_increment(master_seed, path_index, k as u64, h)
        };
        engine.step(&mut state, &inc, &mut acc)?;
        if noise.mean_zero_enforced() {
            debug_assert!(
                (state.alpha.coeffs[0] - alpha0_mode0).abs()
                    <= 1e-13 * (1.0 + alpha0_mode0.abs()),
                "mode-0 drifted under mean-zero noise"
            );
        }
        if (k + 1) % cadence == 0 || k + 1 == sizes.len() {
            rec.push(&engine, &state, &acc);
        }
    }
    Ok(rec.finish(&engine, &state))
}

struct RecordBuilder {
    times: Vec<f64>,
    mass: Vec<f64>,
    energy: Vec<f64>,
    h_norm: Vec<f64>,
    v_seminorm: Vec<f64>,
    vstar_norm: Vec<f64>,
    grad_mu: Vec<f64>,
    grad_phi: Vec<f64>,
    ledger: Option<ItoLedger>,
}

impl RecordBuilder {
    fn new(_engine: &StepEngine, track: bool) -> Self {
        Self {
            times: Vec::new(),
            mass: Vec::new(),
            energy: Vec::new(),
            h_norm: Vec::new(),
            v_seminorm: Vec::new(),
            vstar_norm: Vec::new(),
            grad_mu: Vec::new(),
            grad_phi: Vec::new(),
            ledger: track.then(ItoLedger::default),
        }
    }

    fn push(&mut self, engine: &StepEngine, state: &SolverState, acc: &StepAccumulators) {
        let basis = engine.basis;
        let phi = basis.to_physical(&state.alpha);
        self.times.push(state.t);
        self.mass
            .push(state.alpha.coeffs[0] / basis.grid().volume().sqrt());
        self.energy.push(engine.energy(&phi));
        self.h_norm.push(state.alpha.norm_h());
        self.v_seminorm.push(basis.seminorm_v_spectral(&state.alpha));
        self.vstar_norm.push(basis.norm_vstar_spectral(&state.alpha));
        self.grad_mu.push(acc.grad_mu_sq_integral);
        self.grad_phi.push(acc.grad_phi_sq_integral);
        if let Some(ledger) = &mut self.ledger {
            ledger.stoch_integral.push(acc.stoch_integral);
            ledger.trace_term.push(acc.trace_term);
        }
    }

    fn finish(self, engine: &StepEngine, state: &SolverState) -> PathRecord {
        PathRecord {
            times: self.times,
            mass: self.mass,
            energy: self.energy,
            h_norm: self.h_norm,
            v_seminorm: self.v_seminorm,
            vstar_norm: self.vstar_norm,
            grad_mu_sq_integral: self.grad_mu,
            grad_phi_sq_integral: self.grad_phi,
            ledger: self.ledger,
            final_field: engine.basis.to_physical(&state.alpha),
        }
    }
}

/// Distances between two runs driven by the same Wiener path.
#[derive(Debug, Clone, Default)]
pub struct PairSummary {
    /// `sup_t ||A - B||_{V*}` over record times.
    pub sup_vstar: f64,
    /// `sup_t ||A - B||_H` over record times.
    pub sup_h: f64,
    /// `int_0^T ||A - B||_H^2 dt` accumulated every step.
    pub l2h_sq_integral: f64,
    /// Cubic-eigenvalue regularity proxy of run B,
    /// `int_0^T sum_j l_j^3 alpha_j^2 dt`.
    pub h3_proxy_b: f64,
}

/// Run two configurations in lockstep on one Brownian path and accumulate
/// their distance functionals. The two runs share draws but apply their own
/// state-dependent channel amplitudes.
#[allow(clippy::too_many_arguments)]
pub fn run_pair(
    cfg_a: SolverConfig,
    cfg_b: SolverConfig,
    basis: &CosineBasis,
    pot: &Potential,
    noise: &NoiseSpec,
    initial_a: &Field,
    initial_b: &Field,
    master_seed: u64,
    path_index: u64,
) -> Result<PairSummary, SolverError> {
    assert_eq!(cfg_a.dt, cfg_b.dt, "paired runs must share the time grid");
    assert_eq!(cfg_a.t_end, cfg_b.t_end, "paired runs must share the horizon");
    assert_eq!(
        cfg_a.noise_refine, cfg_b.noise_refine,
        "paired runs must share the Brownian refinement"
    );
    let engine_a = StepEngine::new(cfg_a, basis, pot, noise);
    let engine_b = StepEngine::new(cfg_b, basis, pot, noise);
    let mut state_a = SolverState { alpha: basis.to_spectral(initial_a), t: 0.0, step: 0 };
    let mut state_b = SolverState { alpha: basis.to_spectral(initial_b), t: 0.0, step: 0 };
    engine_a.project(&mut state_a.alpha);
    engine_b.project(&mut state_b.alpha);

    let sizes = step_sizes(cfg_a.dt, cfg_a.t_end);
    let cadence = record_cadence(cfg_a.record_every, sizes.len());
    let mut acc_a = StepAccumulators::default();
    let mut acc_b = StepAccumulators::default();
    let mut out = PairSummary::default();
    let ell = &basis.eigenvalues().ell;

    let measure_sup = |sa: &SolverState, sb: &SolverState, out: &mut PairSummary| {
        let diff = SpectralField {
            grid: sa.alpha.grid.clone(),
            coeffs: sa
                .alpha
                .coeffs
                .iter()
                .zip(&sb.alpha.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        };
        out.sup_vstar = out.sup_vstar.max(basis.norm_vstar_spectral(&diff));
        out.sup_h = out.sup_h.max(diff.norm_h());
    };
    measure_sup(&state_a, &state_b, &mut out);

    for (k, &h) in sizes.iter().enumerate() {
        let inc = if cfg_a.noise_refine > 1 {
            noise.sample_increment_aggregated(master_seed, path_index, k as u64, h, cfg_a.noise_refine)
        } else {
            noise.sample_increment(master_seed, path_index, k as u64, h)
        };
        // Pre-step distance feeds the left-endpoint time integral.
        let d2: f64 = state_a
            .alpha
            .coeffs
            .iter()
            .zip(&state_b.alpha.coeffs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        out.l2h_sq_integral += h * d2;
        out.h3_proxy_b += h
            * state_b
                .alpha
                .coeffs
                .iter()
                .zip(ell)
                .map(|(&a, &e)| e * e * e * a * a)
                .sum::<f64>();
        engine_a.step(&mut state_a, &inc, &mut acc_a)?;
        engine_b.step(&mut state_b, &inc, &mut acc_b)?;
        if (k + 1) % cadence == 0 || k + 1 == sizes.len() {
            measure_sup(&state_a, &state_b, &mut out);
        }
    }
    Ok(out)
}

/// Integrate `n_paths` independent paths, parallelized over path index with
/// results aggregated in index order. Statistics are identical for any
/// worker count.
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble(
    cfg: SolverConfig,
    basis: &CosineBasis,
    pot: &Potential,
    noise: &NoiseSpec,
    initial: &Field,
    master_seed: u64,
    n_paths: usize,
    workers: usize,
    p: f64,
) -> Result<(Vec<PathRecord>, EnsembleStats), SolverError> {
    let results = crate::util::parallel_map(n_paths, workers, |i| {
        run_path(cfg, basis, pot, noise, initial, master_seed, i as u64)
    });
    let mut records = Vec::with_capacity(n_paths);
    for r in results {
        records.push(r?);
    }
    let stats = EnsembleStats::from_records(&records, p).expect("n_paths >= 1");
    Ok((records, stats))
}

/// Smooth random initial datum: prescribed mean plus seeded coefficients on
/// the lowest `modes` nonzero cosine modes with polynomial eigenvalue decay.
pub fn smooth_random_field(
    basis: &CosineBasis,
    mean_value: f64,
    amplitude: f64,
    modes: usize,
    decay: f64,
    seed: u64,
) -> Field {
    let grid = basis.grid();
    let mut u = SpectralField::zeros(grid.clone());
    u.coeffs[0] = mean_value * grid.volume().sqrt();
    let eig = basis.eigenvalues();
    let order = sorted_nonzero_modes(basis);
    let ell1 = eig.min_positive();
    for (k, &m) in order.iter().take(modes).enumerate() {
        let xi = crate::noise::standard_normal(seed, u64::MAX, k as u64, 0);
        u.coeffs[m] = amplitude * xi * (1.0 + eig.ell[m] / ell1).powf(-decay);
    }
    basis.to_physical(&u)
}

/// Mean-zero direction field for perturbation studies.
pub fn perturbation_field(
    basis: &CosineBasis,
    amplitude: f64,
    modes: usize,
    decay: f64,
    seed: u64,
) -> Field {
    smooth_random_field(basis, 0.0, amplitude, modes, decay, seed)
}

/// Constant plus independent per-node noise with the sample mean removed,
/// for spinodal-style initial data.
pub fn spinodal_field(grid: &GridSpec, mean_value: f64, amplitude: f64, seed: u64) -> Field {
    let n = grid.total_points();
    let mut values: Vec<f64> = (0..n)
        .map(|i| amplitude * crate::noise::standard_normal(seed, u64::MAX - 1, i as u64, 0))
        .collect();
    let m = values.iter().sum::<f64>() / n as f64;
    for v in &mut values {
        *v += mean_value - m;
    }
    Field::new(grid.clone(), values)
}

fn sorted_nonzero_modes(basis: &CosineBasis) -> Vec<usize> {
    let eig = basis.eigenvalues();
    let mut order: Vec<usize> = (1..basis.grid().total_points()).collect();
    order.sort_by(|&a, &b| {
        eig.ell[a]
            .partial_cmp(&eig.ell[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    order
}
