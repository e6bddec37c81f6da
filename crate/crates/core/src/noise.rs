//! Truncated cylindrical Wiener process and the multiplicative diffusion
//! operator acting on it.
//!
//! The diffusion is a channel model: channel `k` rides on one cosine mode,
//! `G(psi)[u_k] = b_k * sat(<psi, e_k>_H) * e_k`, with per-mode amplitudes
//! `b_k = b0 (1 + l_k)^{-decay}` and a bounded, 1-Lipschitz saturation. With
//! mean-zero channels the dynamics conserves mass pathwise; disabling that
//! flag injects the constant mode as the first channel (a deliberate
//! negative control).
//!
//! Increments come from a counter-based generator keyed by
//! `(master seed, path, step, mode)`: the same coordinates give the same
//! draw regardless of scheduling or worker count, which is what lets the
//! shared-noise studies compare solvers on one Brownian path.

use thiserror::Error;

use crate::spectral::{mean, norm_h, CosineBasis, Field, GridSpec, ModeEigenvalues, SpectralField};

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("amplitude decay must be >= 1 so that b_k <= b0 (1 + l_k)^-1, got {0}")]
    BadDecay(f64),
    #[error("b0 must be nonnegative and finite, got {0}")]
    BadAmplitude(f64),
    #[error("grid has only {available} nonzero modes, cannot host {requested} channels")]
    TooManyChannels { requested: usize, available: usize },
}

/// Pointwise saturation applied to the channel's sensing functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Saturation {
    Tanh,
    /// Clamp to [-1, 1].
    Clamp,
    /// Identity on [-M, M], clamped outside.
    IdentityBounded(f64),
    /// Constant 1: the diffusion no longer depends on the state. Used by the
    /// stochastic-integral variance checks.
    One,
}

impl Saturation {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Saturation::Tanh => x.tanh(),
            Saturation::Clamp => x.clamp(-1.0, 1.0),
            Saturation::IdentityBounded(m) => x.clamp(-m, m),
            Saturation::One => 1.0,
        }
    }

    /// Supremum of the saturation magnitude.
    pub fn bound(&self) -> f64 {
        match *self {
            Saturation::IdentityBounded(m) => m,
            _ => 1.0,
        }
    }

    /// Lipschitz constant of the saturation.
    pub fn slope(&self) -> f64 {
        match *self {
            Saturation::One => 0.0,
            _ => 1.0,
        }
    }
}

/// One retained noise channel.
#[derive(Debug, Clone)]
pub struct Channel {
    /// Linear index of the carrying cosine mode (also the RNG mode key).
    pub mode: usize,
    /// Eigenvalue of that mode.
    pub ell: f64,
    /// Amplitude `b_k`.
    pub amp: f64,
    /// The mode sampled on the grid.
    pub field: Field,
}

/// Truncated cylindrical Wiener model and the diffusion operator.
pub struct NoiseSpec {
    grid: GridSpec,
    channels: Vec<Channel>,
    saturation: Saturation,
    mean_zero_enforced: bool,
    b0: f64,
    decay: f64,
}

impl NoiseSpec {
    /// Build a spec with `modes_m` channels on the lowest nonzero cosine
    /// modes (sorted by eigenvalue, then index). With
    /// `mean_zero_enforced = false` the constant mode is injected first.
    pub fn new(
        grid: &GridSpec,
        modes_m: usize,
        b0: f64,
        decay: f64,
        saturation: Saturation,
        mean_zero_enforced: bool,
    ) -> Result<Self, NoiseError> {
        if b0.is_nan() || b0 < 0.0 || b0.is_infinite() {
            return Err(NoiseError::BadAmplitude(b0));
        }
        if decay < 1.0 {
            return Err(NoiseError::BadDecay(decay));
        }
        let eig = ModeEigenvalues::new(grid);
        let mut order: Vec<usize> = (1..grid.total_points()).collect();
        order.sort_by(|&a, &b| eig.ell[a].partial_cmp(&eig.ell[b]).unwrap().then(a.cmp(&b)));
        let mut mode_ids: Vec<usize> = Vec::with_capacity(modes_m);
        if !mean_zero_enforced && modes_m > 0 {
            mode_ids.push(0);
        }
        mode_ids.extend(order.iter().copied().take(modes_m - mode_ids.len()));
        if mode_ids.len() < modes_m {
            return Err(NoiseError::TooManyChannels {
                requested: modes_m,
                available: grid.total_points() - 1,
            });
        }
        let basis = CosineBasis::new(grid);
        let channels = mode_ids
            .into_iter()
            .map(|mode| {
                let ell = eig.ell[mode];
                let mut u = SpectralField::zeros(grid.clone());
                u.coeffs[mode] = 1.0;
                Channel {
                    mode,
                    ell,
                    amp: b0 * (1.0 + ell).powf(-decay),
                    field: basis.to_physical(&u),
                }
            })
            .collect();
        Ok(Self {
            grid: grid.clone(),
            channels,
            saturation,
            mean_zero_enforced,
            b0,
            decay,
        })
    }

    /// Deterministic dynamics: no channels.
    pub fn deterministic(grid: &GridSpec) -> Self {
        Self {
            grid: grid.clone(),
            channels: Vec::new(),
            saturation: Saturation::Tanh,
            mean_zero_enforced: true,
            b0: 0.0,
            decay: 1.0,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn modes(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn saturation(&self) -> Saturation {
        self.saturation
    }

    pub fn mean_zero_enforced(&self) -> bool {
        self.mean_zero_enforced
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// Per-channel scalar amplitudes `b_k * sat(<psi, e_k>)` for a state
    /// given in coefficients. The sensing functional of channel `k` is the
    /// coefficient at its carrying mode.
    pub fn channel_amplitudes(&self, state: &SpectralField) -> Vec<f64> {
        self.channels
            .iter()
            .map(|c| c.amp * self.saturation.apply(state.coeffs[c.mode]))
            .collect()
    }

    /// The full diffusion applied to a nodal state: `m` channel fields
    /// `G(psi)[u_k] = b_k sat(<psi, e_k>) e_k`.
    pub fn apply_g(&self, psi: &Field) -> Vec<Field> {
        assert_eq!(psi.grid, self.grid, "state grid must match noise grid");
        let quad = self.grid.cell_volume();
        self.channels
            .iter()
            .map(|c| {
                let p: f64 = quad
                    * psi
                        .values
                        .iter()
                        .zip(&c.field.values)
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                let s = c.amp * self.saturation.apply(p);
                c.field.map(|v| s * v)
            })
            .collect()
    }

    /// Validate the structural hypotheses of the channel model and report
    /// the witnessed constants.
    pub fn validate_assumptions(&self) -> NoiseReport {
        let sat_bound = self.saturation.bound();
        let slope = self.saturation.slope();
        let max_b = self.channels.iter().map(|c| c.amp).fold(0.0, f64::max);
        let sum_b2_linf: f64 = self
            .channels
            .iter()
            .map(|c| {
                let sup = c.field.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
                c.amp * c.amp * sup * sup
            })
            .sum();
        let sum_b2_v: f64 = self
            .channels
            .iter()
            .map(|c| c.amp * c.amp * (1.0 + c.ell))
            .sum();
        let worst_mean = self
            .channels
            .iter()
            .map(|c| mean(&c.field).abs() / norm_h(&c.field).max(1e-300))
            .fold(0.0, f64::max);
        NoiseReport {
            modes: self.channels.len(),
            lipschitz_h: slope * max_b,
            bound_h_linf: sat_bound * sum_b2_linf.sqrt(),
            bound_v: sat_bound * sum_b2_v.sqrt(),
            lipschitz_vstar: slope * max_b,
            mean_zero_ok: self.channels.is_empty() || worst_mean <= 1e-13,
            worst_channel_mean: worst_mean,
        }
    }

    /// m iid N(0, dt) draws keyed by `(master_seed, path, step, mode)`.
    pub fn sample_increment(
        &self,
        master_seed: u64,
        path: u64,
        step: u64,
        dt: f64,
    ) -> WienerIncrement {
        let sd = dt.sqrt();
        let dw = self
            .channels
            .iter()
            .map(|c| sd * standard_normal(master_seed, path, step, c.mode as u64))
            .collect();
        WienerIncrement { dw, dt }
    }

    /// Increment over a coarse step of length `dt` assembled from `factor`
    /// consecutive fine draws, so runs at different time resolutions share
    /// one Brownian path.
    pub fn sample_increment_aggregated(
        &self,
        master_seed: u64,
        path: u64,
        coarse_step: u64,
        dt: f64,
        factor: u64,
    ) -> WienerIncrement {
        let sd = (dt / factor as f64).sqrt();
        let dw = self
            .channels
            .iter()
            .map(|c| {
                (0..factor)
                    .map(|q| {
                        sd * standard_normal(
                            master_seed,
                            path,
                            coarse_step * factor + q,
                            c.mode as u64,
                        )
                    })
                    .sum()
            })
            .collect();
        WienerIncrement { dw, dt }
    }
}

/// Constants witnessing the diffusion hypotheses for a concrete spec.
#[derive(Debug, Clone)]
pub struct NoiseReport {
    pub modes: usize,
    /// H-Lipschitz constant of the diffusion.
    pub lipschitz_h: f64,
    /// Bound on the Hilbert-Schmidt norm into sup-norm space.
    pub bound_h_linf: f64,
    /// Bound on the Hilbert-Schmidt norm into V.
    pub bound_v: f64,
    /// Lipschitz constant in the dual norm (mass-conservation regime).
    pub lipschitz_vstar: f64,
    /// All channels mean-zero (pathwise mass conservation holds).
    pub mean_zero_ok: bool,
    pub worst_channel_mean: f64,
}

/// One batch of Wiener increments for a step.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrement {
    pub dw: Vec<f64>,
    pub dt: f64,
}

impl WienerIncrement {
    pub fn zero(dt: f64) -> Self {
        Self { dw: Vec::new(), dt }
    }
}

#[inline]
fn splitmix(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Counter-based standard normal draw: a pure function of the key tuple.
pub fn standard_normal(master_seed: u64, path: u64, step: u64, mode: u64) -> f64 {
    let mut s = master_seed ^ 0x9E37_79B9_7F4A_7C15;
    s = splitmix(s.wrapping_add(path.wrapping_mul(0xD1B5_4A32_D192_ED03)));
    s = splitmix(s.wrapping_add(step.wrapping_mul(0x8CB9_2BA7_2F3D_8DD7)));
    s = splitmix(s.wrapping_add(mode.wrapping_mul(0xA24B_AED4_963E_E407)));
    let u1 = ((s >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    let s2 = splitmix(s ^ 0x6A09_E667_F3BC_C909);
    let u2 = ((s2 >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyed_draws_are_reproducible() {
        let a = standard_normal(42, 3, 1000, 5);
        let b = standard_normal(42, 3, 1000, 5);
        assert_eq!(a, b);
        assert_ne!(a, standard_normal(42, 3, 1000, 6));
        assert_ne!(a, standard_normal(42, 3, 1001, 5));
        assert_ne!(a, standard_normal(42, 4, 1000, 5));
        assert_ne!(a, standard_normal(43, 3, 1000, 5));
    }

    #[test]
    fn draw_moments_and_cross_correlation() {
        let n = 100_000;
        let mut sum = [0.0f64; 2];
        let mut sumsq = [0.0f64; 2];
        let mut cross = 0.0f64;
        for i in 0..n {
            let x = standard_normal(7, 0, i as u64, 1);
            let y = standard_normal(7, 0, i as u64, 2);
            sum[0] += x;
            sum[1] += y;
            sumsq[0] += x * x;
            sumsq[1] += y * y;
            cross += x * y;
        }
        let nf = n as f64;
        for j in 0..2 {
            let m = sum[j] / nf;
            let v = sumsq[j] / nf - m * m;
            assert!(m.abs() < 4.0 / nf.sqrt(), "mean {m}");
            assert!((v - 1.0).abs() < 0.05, "variance {v}");
        }
        let corr = (cross / nf - sum[0] / nf * sum[1] / nf)
            / ((sumsq[0] / nf).sqrt() * (sumsq[1] / nf).sqrt());
        assert!(corr.abs() <= 0.02, "cross-mode correlation {corr}");
    }

    #[test]
    fn increments_have_dt_variance() {
        let grid = GridSpec::unit(1, 32).unwrap();
        let spec = NoiseSpec::new(&grid, 1, 1.0, 1.0, Saturation::One, true).unwrap();
        let dt = 0.01;
        let n = 100_000u64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for step in 0..n {
            let inc = spec.sample_increment(9, 0, step, dt);
            sum += inc.dw[0];
            sumsq += inc.dw[0] * inc.dw[0];
        }
        let m = sum / n as f64;
        let v = sumsq / n as f64 - m * m;
        assert!(m.abs() < 4.0 * (dt / n as f64).sqrt());
        assert!((v - dt).abs() < 0.05 * dt);
    }

    #[test]
    fn empty_and_mean_zero_channels() {
        let grid = GridSpec::unit(2, 16).unwrap();
        let det = NoiseSpec::deterministic(&grid);
        let psi = Field::constant(grid.clone(), 0.3);
        assert!(det.apply_g(&psi).is_empty());
        let rep = det.validate_assumptions();
        assert_eq!(rep.lipschitz_h, 0.0);
        assert!(rep.mean_zero_ok);

        let spec = NoiseSpec::new(&grid, 6, 0.5, 1.0, Saturation::Tanh, true).unwrap();
        for ch in spec.apply_g(&psi) {
            assert!(mean(&ch).abs() <= 1e-14);
        }
        assert!(spec.validate_assumptions().mean_zero_ok);
    }

    #[test]
    fn constant_channel_breaks_mean_zero() {
        let grid = GridSpec::unit(1, 32).unwrap();
        let spec = NoiseSpec::new(&grid, 4, 0.5, 1.0, Saturation::Tanh, false).unwrap();
        assert_eq!(spec.channels()[0].mode, 0);
        let rep = spec.validate_assumptions();
        assert!(!rep.mean_zero_ok);
    }

    #[test]
    fn empirical_lipschitz_ratio_below_reported() {
        let grid = GridSpec::unit(1, 64).unwrap();
        let spec = NoiseSpec::new(&grid, 8, 0.7, 1.0, Saturation::Tanh, true).unwrap();
        let lg = spec.validate_assumptions().lipschitz_h;
        let quad = grid.cell_volume();
        for trial in 0..100u64 {
            let f1 = Field::from_fn(grid.clone(), |x| {
                standard_normal(11, trial, (x[0] * 1e6) as u64, 0)
            });
            let f2 = Field::from_fn(grid.clone(), |x| {
                standard_normal(12, trial, (x[0] * 1e6) as u64, 0)
            });
            let g1 = spec.apply_g(&f1);
            let g2 = spec.apply_g(&f2);
            let dg: f64 = g1
                .iter()
                .zip(&g2)
                .map(|(a, b)| {
                    quad * a
                        .values
                        .iter()
                        .zip(&b.values)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                })
                .sum::<f64>()
                .sqrt();
            let df = norm_h(&f1.add_scaled(&f2, -1.0));
            assert!(dg <= lg * df * (1.0 + 1e-12), "ratio {} > {}", dg / df, lg);
        }
    }

    #[test]
    fn amplitude_decay_respects_bound() {
        let grid = GridSpec::unit(1, 32).unwrap();
        assert!(NoiseSpec::new(&grid, 4, 0.5, 0.5, Saturation::Tanh, true).is_err());
        let spec = NoiseSpec::new(&grid, 4, 0.5, 1.5, Saturation::Tanh, true).unwrap();
        for c in spec.channels() {
            assert!(c.amp <= 0.5 / (1.0 + c.ell) + 1e-15);
        }
    }
}
