//! Scalar functionals, balance residuals and moment estimators built on the
//! per-path records the solver produces.

use thiserror::Error;

use crate::kernel::{bilinear_b, KernelGrid};
use crate::potential::Potential;
use crate::spectral::{CosineBasis, Field};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("record carries no stochastic ledger; rerun with ledger tracking enabled")]
    MissingLedger,
    #[error("moment estimation needs at least one path")]
    NoPaths,
}

/// Stochastic bookkeeping accumulated step by step during a run: the
/// discrete stochastic integral `(mu, G dW)_H` and the second-derivative
/// trace term of the energy functional.
#[derive(Debug, Clone, Default)]
pub struct ItoLedger {
    /// Accumulated stochastic integral at record times.
    pub stoch_integral: Vec<f64>,
    /// Accumulated trace term at record times.
    pub trace_term: Vec<f64>,
}

/// Per-path diagnostic time series at record cadence.
#[derive(Debug, Clone)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub h_norm: Vec<f64>,
    pub v_seminorm: Vec<f64>,
    pub vstar_norm: Vec<f64>,
    /// Cumulative `int_0^t ||grad mu||^2` at record times.
    pub grad_mu_sq_integral: Vec<f64>,
    /// Cumulative `int_0^t ||grad phi||^2` at record times.
    pub grad_phi_sq_integral: Vec<f64>,
    pub ledger: Option<ItoLedger>,
    pub final_field: Field,
}

impl PathRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sup_h_norm(&self) -> f64 {
        self.h_norm.iter().copied().fold(0.0, f64::max)
    }
}

/// Discrete residual of the energy balance along one path:
/// `r(t) = E(t) + int_0^t ||grad mu||^2 - E(0) - M(t) - Q(t)/2`,
/// with `M` the accumulated stochastic integral and `Q` the accumulated
/// second-derivative trace term. `r(0) = 0`; the rest is the discretization
/// error of the identity.
pub fn ito_energy_residual(record: &PathRecord) -> Result<Vec<f64>, DiagnosticsError> {
    let ledger = record.ledger.as_ref().ok_or(DiagnosticsError::MissingLedger)?;
    let e0 = record.energy[0];
    Ok(record
        .energy
        .iter()
        .zip(&record.grad_mu_sq_integral)
        .zip(ledger.stoch_integral.iter().zip(&ledger.trace_term))
        .map(|((e, d), (m, q))| e + d - e0 - m - 0.5 * q)
        .collect())
}

/// Dual-norm distance `||f - g||_{V*}` (see the spectral module for the
/// mean-penalty convention).
pub fn vstar_distance(basis: &CosineBasis, f: &Field, g: &Field) -> f64 {
    basis.norm_vstar(&f.add_scaled(g, -1.0))
}

/// Second-derivative trace rate of the nonlocal energy at state `phi`:
/// `sum_k [ B(g_k, g_k)/2 + int F''_lam(phi) |g_k|^2 ]` for channel fields
/// `g_k` with scalar amplitudes `amps`. The unscaled channel forms
/// `B(e_k, e_k)` are passed in precomputed.
pub fn nonlocal_trace_rate(
    phi: &Field,
    pot: &Potential,
    lambda: f64,
    channel_fields: &[Field],
    channel_b: &[f64],
    amps: &[f64],
) -> f64 {
    let reg = pot.regularized(lambda);
    let quad = phi.grid.cell_volume();
    let ddf: Vec<f64> = phi.values.iter().map(|&v| reg.ddf_lambda(v)).collect();
    amps.iter()
        .enumerate()
        .map(|(k, &a)| {
            let fk = &channel_fields[k];
            let pot_term: f64 = quad
                * ddf
                    .iter()
                    .zip(&fk.values)
                    .map(|(&d, &e)| d * e * e)
                    .sum::<f64>();
            a * a * (0.5 * channel_b[k] + pot_term)
        })
        .sum()
}

/// Trace rate for the local energy: `sum_k [ ||grad g_k||^2 + int F''_lam
/// |g_k|^2 ]` with `||grad e_k||^2 = l_k` supplied per channel.
pub fn local_trace_rate(
    phi: &Field,
    pot: &Potential,
    lambda: f64,
    channel_fields: &[Field],
    channel_ell: &[f64],
    amps: &[f64],
) -> f64 {
    let reg = pot.regularized(lambda);
    let quad = phi.grid.cell_volume();
    let ddf: Vec<f64> = phi.values.iter().map(|&v| reg.ddf_lambda(v)).collect();
    amps.iter()
        .enumerate()
        .map(|(k, &a)| {
            let fk = &channel_fields[k];
            let pot_term: f64 = quad
                * ddf
                    .iter()
                    .zip(&fk.values)
                    .map(|(&d, &e)| d * e * e)
                    .sum::<f64>();
            a * a * (channel_ell[k] + pot_term)
        })
        .sum()
}

/// Local free energy `E_L = ||grad phi||^2 / 2 + int F_lambda(phi)`,
/// gradient part spectral.
pub fn local_energy(basis: &CosineBasis, phi: &Field, pot: &Potential, lambda: f64) -> f64 {
    let reg = pot.regularized(lambda);
    let quad = phi.grid.cell_volume();
    let grad = basis.seminorm_v(phi);
    0.5 * grad * grad + quad * phi.values.iter().map(|&v| reg.f_lambda(v)).sum::<f64>()
}

/// `B(e_k, e_k)` for every channel of a noise spec against a kernel; the
/// per-step trace computation rescales these by the squared amplitudes.
pub fn channel_bilinear_forms(kernel: &KernelGrid, channel_fields: &[Field]) -> Vec<f64> {
    channel_fields.iter().map(|f| bilinear_b(kernel, f, f)).collect()
}

/// Sample moment estimate of order `p`: `(mean of v^p)^(1/p)` with a
/// delta-method standard error. One path gives a zero standard error.
pub fn moment_estimate(values: &[f64], p: f64) -> Result<(f64, f64), DiagnosticsError> {
    if values.is_empty() {
        return Err(DiagnosticsError::NoPaths);
    }
    let n = values.len() as f64;
    let powered: Vec<f64> = values.iter().map(|&v| v.powf(p)).collect();
    let m = powered.iter().sum::<f64>() / n;
    let est = m.powf(1.0 / p);
    if values.len() == 1 {
        return Ok((est, 0.0));
    }
    let var = powered.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    let se_mean = (var / n).sqrt();
    let se = if m > 0.0 {
        (1.0 / p) * m.powf(1.0 / p - 1.0) * se_mean
    } else {
        0.0
    };
    Ok((est, se))
}

/// Cross-path moment summaries of the solution and potential norms.
#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub n_paths: usize,
    pub p: f64,
    /// `E[sup_t ||phi||_H^p]^(1/p)` with standard error.
    pub sup_h: (f64, f64),
    /// `E[(int ||grad phi||^2)^(p/2)]^(2/p)`-style estimate of the
    /// time-integrated gradient, reported as the p/2-moment of the integral.
    pub int_grad_phi: (f64, f64),
    /// Same for `int ||grad mu||^2`.
    pub int_grad_mu: (f64, f64),
}

impl EnsembleStats {
    pub fn from_records(records: &[PathRecord], p: f64) -> Result<Self, DiagnosticsError> {
        if records.is_empty() {
            return Err(DiagnosticsError::NoPaths);
        }
        let sup_h: Vec<f64> = records.iter().map(|r| r.sup_h_norm()).collect();
        let ig_phi: Vec<f64> = records
            .iter()
            .map(|r| *r.grad_phi_sq_integral.last().unwrap_or(&0.0))
            .collect();
        let ig_mu: Vec<f64> = records
            .iter()
            .map(|r| *r.grad_mu_sq_integral.last().unwrap_or(&0.0))
            .collect();
        Ok(Self {
            n_paths: records.len(),
            p,
            sup_h: moment_estimate(&sup_h, p)?,
            int_grad_phi: moment_estimate(&ig_phi, p / 2.0)?,
            int_grad_mu: moment_estimate(&ig_mu, p / 2.0)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::standard_normal;
    use crate::spectral::GridSpec;

    #[test]
    fn moment_single_and_identical_paths() {
        let (est, se) = moment_estimate(&[2.0], 4.0).unwrap();
        assert_eq!(est, 2.0);
        assert_eq!(se, 0.0);
        let (est, se) = moment_estimate(&[1.5; 10], 2.0).unwrap();
        assert!((est - 1.5).abs() < 1e-12);
        assert!(se.abs() < 1e-12);
        assert!(moment_estimate(&[], 2.0).is_err());
    }

    #[test]
    fn moment_matches_lognormal_closed_form() {
        // X = exp(Z), Z ~ N(0, sigma^2): E[X^p] = exp(p^2 sigma^2 / 2).
        let sigma: f64 = 0.3;
        let p = 2.0;
        let n = 10_000u64;
        let xs: Vec<f64> = (0..n)
            .map(|i| (sigma * standard_normal(77, i, 0, 0)).exp())
            .collect();
        let (est, se) = moment_estimate(&xs, p).unwrap();
        let exact = (p * p * sigma * sigma / 2.0f64).exp().powf(1.0 / p);
        assert!(
            (est - exact).abs() <= 3.0 * se.max(1e-6),
            "est {est} exact {exact} se {se}"
        );
    }

    #[test]
    fn vstar_distance_basic_properties() {
        let grid = GridSpec::unit(1, 64).unwrap();
        let basis = CosineBasis::new(&grid);
        let f = Field::from_fn(grid.clone(), |x| (std::f64::consts::PI * x[0]).cos() + 0.4);
        assert_eq!(vstar_distance(&basis, &f, &f), 0.0);
        let g = Field::from_fn(grid.clone(), |x| x[0] * x[0]);
        let h = Field::from_fn(grid, |x| (x[0] - 0.3).abs());
        let fg = vstar_distance(&basis, &f, &g);
        let gh = vstar_distance(&basis, &g, &h);
        let fh = vstar_distance(&basis, &f, &h);
        assert!(fh <= fg + gh + 1e-12);
    }
}
