//! Interaction kernels generated by mollifier families, fast convolution on
//! the box, the nonlocal diffusion operator and the nonlocal energy.
//!
//! The kernel has the form `K_eps(x) = rho_eps(|x|) / |x|^2` with the
//! mollifier normalized so that the second moment of `K_eps` is exactly 2 per
//! direction; the induced operator `L_eps u = (K*1) u - K*u` then converges to
//! the negative Neumann Laplacian with unit constant as `eps -> 0`.
//! Convolutions are restricted to the box (zero-padded linear convolution, no
//! periodic wrap), so the mass function `a = K*1` dips near the boundary.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::potential::Potential;
use crate::spectral::{inner_h, Field, GridSpec};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("mollifier dimension must be 1, 2 or 3, got {0}")]
    UnsupportedDim(usize),
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("unresolved kernel: epsilon = {epsilon} below 2 * grid spacing = {min}")]
    UnresolvedKernel { epsilon: f64, min: f64 },
}

/// `C_n = int_{S^{n-1}} |e_1 . sigma|^2 dH^{n-1}`, the sphere moment fixing
/// the mollifier normalization. Closed forms; the tests re-derive these by
/// quadrature over the sphere.
pub fn cn_constant(n: usize) -> Result<f64, KernelError> {
    match n {
        // S^0 = {-1, +1}, both contributing |sigma|^2 = 1.
        1 => Ok(2.0),
        2 => Ok(std::f64::consts::PI),
        3 => Ok(4.0 * std::f64::consts::PI / 3.0),
        _ => Err(KernelError::UnsupportedDim(n)),
    }
}

fn gamma_half_integer(n_plus_2_over_2: f64) -> f64 {
    // Gamma((n+2)/2) for n in {1,2,3}.
    let sqrt_pi = std::f64::consts::PI.sqrt();
    if (n_plus_2_over_2 - 1.5).abs() < 1e-12 {
        sqrt_pi / 2.0
    } else if (n_plus_2_over_2 - 2.0).abs() < 1e-12 {
        1.0
    } else {
        3.0 * sqrt_pi / 4.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MollifierFamily {
    /// `rho_eps(r) = B_n r^2 eps^{-(n+2)} exp(-r^2/eps^2)`; the `r^2` cancels
    /// the kernel singularity, so `K_eps` is a bounded Gaussian.
    GaussianR2,
    /// `rho_eps(r) = c_{n,eps} 1_{[eps/2, eps]}(r)`; compactly supported,
    /// vanishing near the origin.
    Annular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierSpec {
    pub family: MollifierFamily,
    pub epsilon: f64,
    /// Normalization dimension n (usually the grid dimension).
    pub dim_n: usize,
}

impl MollifierSpec {
    pub fn new(family: MollifierFamily, epsilon: f64, dim_n: usize) -> Result<Self, KernelError> {
        if epsilon.is_nan() || epsilon <= 0.0 || epsilon.is_infinite() {
            return Err(KernelError::BadEpsilon(epsilon));
        }
        if !(1..=3).contains(&dim_n) {
            return Err(KernelError::UnsupportedDim(dim_n));
        }
        Ok(Self { family, epsilon, dim_n })
    }

    fn gaussian_bn(&self) -> f64 {
        let cn = cn_constant(self.dim_n).expect("validated at construction");
        4.0 / (cn * gamma_half_integer((self.dim_n as f64 + 2.0) / 2.0))
    }

    fn annular_cn_eps(&self) -> f64 {
        let n = self.dim_n as f64;
        let cn = cn_constant(self.dim_n).expect("validated at construction");
        2.0 * n / (cn * self.epsilon.powf(n) * (1.0 - 0.5f64.powf(n)))
    }

    /// Radial mollifier density `rho_eps(r)`, `r >= 0`.
    pub fn rho(&self, r: f64) -> f64 {
        let eps = self.epsilon;
        match self.family {
            MollifierFamily::GaussianR2 => {
                self.gaussian_bn() * r * r * eps.powi(-(self.dim_n as i32 + 2))
                    * (-r * r / (eps * eps)).exp()
            }
            MollifierFamily::Annular => {
                if r >= eps / 2.0 && r <= eps {
                    self.annular_cn_eps()
                } else {
                    0.0
                }
            }
        }
    }

    /// Kernel value `K_eps(x) = rho_eps(|x|)/|x|^2` from the squared radius.
    pub fn kernel_value(&self, r2: f64) -> f64 {
        let eps = self.epsilon;
        match self.family {
            MollifierFamily::GaussianR2 => {
                self.gaussian_bn() * eps.powi(-(self.dim_n as i32 + 2)) * (-r2 / (eps * eps)).exp()
            }
            MollifierFamily::Annular => {
                if r2 >= eps * eps / 4.0 && r2 <= eps * eps {
                    self.annular_cn_eps() / r2
                } else {
                    0.0
                }
            }
        }
    }

    /// Relative residual of the moment identity
    /// `int_0^inf rho_eps(r) r^{n-1} dr = 2/C_n`, evaluated by adaptive
    /// quadrature (piecewise for the discontinuous annular density).
    pub fn normalization_residual(&self) -> f64 {
        let target = 2.0 / cn_constant(self.dim_n).expect("validated");
        let integral = self.radial_moment_integral(0.0);
        (integral - target).abs() / target
    }

    /// `int_delta^inf rho_eps(r) r^{n-1} dr`, the vanishing-tail functional.
    pub fn tail_mass(&self, delta: f64) -> f64 {
        self.radial_moment_integral(delta)
    }

    fn radial_moment_integral(&self, lower: f64) -> f64 {
        let n = self.dim_n as f64;
        let f = |r: f64| self.rho(r) * r.powf(n - 1.0);
        let eps = self.epsilon;
        match self.family {
            MollifierFamily::GaussianR2 => {
                // Integrand is negligible beyond ~10 eps.
                let upper = (12.0 * eps).max(lower + eps);
                crate::util::adaptive_quad(&f, lower, upper, 1e-12)
            }
            MollifierFamily::Annular => {
                let a = lower.max(eps / 2.0);
                let b = eps;
                if a >= b {
                    0.0
                } else {
                    crate::util::adaptive_quad(&f, a, b, 1e-12)
                }
            }
        }
    }
}

/// Kernel sampled on the difference grid of a box, with everything the solver
/// needs precomputed: the zero-padded FFT image, the mass function `a = K*1`,
/// the L1 norm and the per-mode diagonal symbol of the operator.
pub struct KernelGrid {
    grid: GridSpec,
    spec: MollifierSpec,
    /// Kernel values on the difference grid, row-major over offsets
    /// `o_a in [-(N_a - 1), N_a - 1]`.
    samples: Vec<f64>,
    quad_weight: f64,
    a_field: Field,
    l1_norm: f64,
    /// Diagonal spectral symbol `sigma(j) = Khat(0) - Khat(xi_j)` of the
    /// free-space operator on cosine modes; tends to `l_j` as eps -> 0 and is
    /// the implicit shift the IMEX scheme uses.
    symbol: Vec<f64>,
    padded: Vec<usize>,
    fft_fwd: Vec<Arc<dyn Fft<f64>>>,
    fft_inv: Vec<Arc<dyn Fft<f64>>>,
    kernel_hat: Vec<Complex<f64>>,
}

/// Sample the kernel on the difference grid and precompute the convolution
/// plan. Fails if the grid cannot resolve the kernel (`eps < 2 * spacing`).
pub fn build_kernel(spec: &MollifierSpec, grid: &GridSpec) -> Result<KernelGrid, KernelError> {
    let min = 2.0 * grid.max_spacing();
    if spec.epsilon < min {
        return Err(KernelError::UnresolvedKernel { epsilon: spec.epsilon, min });
    }
    let dim = grid.dim();
    let diff_dims: Vec<usize> = (0..dim).map(|a| 2 * grid.points(a) - 1).collect();
    let total: usize = diff_dims.iter().product();
    let mut samples = vec![0.0; total];
    match dim {
        1 => {
            let n = grid.points(0);
            let h = grid.spacing(0);
            for (idx, s) in samples.iter_mut().enumerate() {
                let o = idx as isize - (n as isize - 1);
                let z = o as f64 * h;
                *s = spec.kernel_value(z * z);
            }
        }
        _ => {
            let (n0, n1) = (grid.points(0), grid.points(1));
            let (h0, h1) = (grid.spacing(0), grid.spacing(1));
            for i in 0..diff_dims[0] {
                let z0 = (i as isize - (n0 as isize - 1)) as f64 * h0;
                for j in 0..diff_dims[1] {
                    let z1 = (j as isize - (n1 as isize - 1)) as f64 * h1;
                    samples[i * diff_dims[1] + j] = spec.kernel_value(z0 * z0 + z1 * z1);
                }
            }
        }
    }

    let quad_weight = grid.cell_volume();
    let l1_norm = quad_weight * samples.iter().map(|s| s.abs()).sum::<f64>();

    // Zero-padded circular embedding; P >= 2N - 1 keeps the linear
    // convolution alias-free on the output window [0, N).
    let padded: Vec<usize> = (0..dim)
        .map(|a| (2 * grid.points(a) - 1).next_power_of_two())
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let fft_fwd: Vec<Arc<dyn Fft<f64>>> = padded.iter().map(|&p| planner.plan_fft_forward(p)).collect();
    let fft_inv: Vec<Arc<dyn Fft<f64>>> = padded.iter().map(|&p| planner.plan_fft_inverse(p)).collect();

    let ptotal: usize = padded.iter().product();
    let mut kernel_hat = vec![Complex::new(0.0, 0.0); ptotal];
    match dim {
        1 => {
            let n = grid.points(0);
            let p = padded[0];
            for (idx, &s) in samples.iter().enumerate() {
                let o = idx as isize - (n as isize - 1);
                kernel_hat[o.rem_euclid(p as isize) as usize].re = s;
            }
        }
        _ => {
            let (n0, n1) = (grid.points(0), grid.points(1));
            let (p0, p1) = (padded[0], padded[1]);
            for i in 0..diff_dims[0] {
                let w0 = (i as isize - (n0 as isize - 1)).rem_euclid(p0 as isize) as usize;
                for j in 0..diff_dims[1] {
                    let w1 = (j as isize - (n1 as isize - 1)).rem_euclid(p1 as isize) as usize;
                    kernel_hat[w0 * p1 + w1].re = samples[i * diff_dims[1] + j];
                }
            }
        }
    }
    fft_nd(&mut kernel_hat, &padded, &fft_fwd);

    let symbol = discrete_symbol(grid, &samples, &diff_dims, quad_weight);

    let mut k = KernelGrid {
        grid: grid.clone(),
        spec: *spec,
        samples,
        quad_weight,
        a_field: Field::zeros(grid.clone()),
        l1_norm,
        symbol,
        padded,
        fft_fwd,
        fft_inv,
        kernel_hat,
    };
    k.a_field = convolve(&k, &Field::constant(grid.clone(), 1.0));
    Ok(k)
}

/// Per-mode symbol of the free-space operator on the cosine eigenbasis:
/// `sigma(j) = q * sum_z K(z) (1 - prod_a cos(pi j_a o_a / N_a))`, computed
/// by separable cosine sums over the difference grid.
fn discrete_symbol(grid: &GridSpec, samples: &[f64], diff_dims: &[usize], quad: f64) -> Vec<f64> {
    let dim = grid.dim();
    // Per-axis table: cos(pi * j * o / N) for j in [0, N), o in [-(N-1), N-1].
    let tables: Vec<Vec<f64>> = (0..dim)
        .map(|a| {
            let n = grid.points(a);
            let d = diff_dims[a];
            let mut t = vec![0.0; n * d];
            for j in 0..n {
                for io in 0..d {
                    let o = io as isize - (n as isize - 1);
                    t[j * d + io] = (std::f64::consts::PI * j as f64 * o as f64 / n as f64).cos();
                }
            }
            t
        })
        .collect();
    match dim {
        1 => {
            let n = grid.points(0);
            let d = diff_dims[0];
            let khat0: f64 = samples.iter().sum::<f64>() * quad;
            (0..n)
                .map(|j| {
                    let row = &tables[0][j * d..(j + 1) * d];
                    let khat: f64 = row.iter().zip(samples).map(|(c, s)| c * s).sum::<f64>() * quad;
                    khat0 - khat
                })
                .collect()
        }
        _ => {
            let (n0, n1) = (grid.points(0), grid.points(1));
            let (d0, d1) = (diff_dims[0], diff_dims[1]);
            // Contract the inner axis first: partial[j1][o0] = sum_o1 K cos.
            let mut partial = vec![0.0; n1 * d0];
            for j1 in 0..n1 {
                let row = &tables[1][j1 * d1..(j1 + 1) * d1];
                for o0 in 0..d0 {
                    let k_row = &samples[o0 * d1..(o0 + 1) * d1];
                    partial[j1 * d0 + o0] = row.iter().zip(k_row).map(|(c, s)| c * s).sum();
                }
            }
            let khat0: f64 = samples.iter().sum::<f64>() * quad;
            let mut symbol = vec![0.0; n0 * n1];
            for j0 in 0..n0 {
                let row0 = &tables[0][j0 * d0..(j0 + 1) * d0];
                for j1 in 0..n1 {
                    let p = &partial[j1 * d0..(j1 + 1) * d0];
                    let khat: f64 = row0.iter().zip(p).map(|(c, s)| c * s).sum::<f64>() * quad;
                    symbol[j0 * n1 + j1] = khat0 - khat;
                }
            }
            symbol
        }
    }
}

fn fft_nd(data: &mut [Complex<f64>], dims: &[usize], ffts: &[Arc<dyn Fft<f64>>]) {
    match dims.len() {
        1 => ffts[0].process(data),
        _ => {
            let (p0, p1) = (dims[0], dims[1]);
            for row in data.chunks_exact_mut(p1) {
                ffts[1].process(row);
            }
            let mut col = vec![Complex::new(0.0, 0.0); p0];
            for c in 0..p1 {
                for r in 0..p0 {
                    col[r] = data[r * p1 + c];
                }
                ffts[0].process(&mut col);
                for r in 0..p0 {
                    data[r * p1 + c] = col[r];
                }
            }
        }
    }
}

impl std::fmt::Debug for KernelGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelGrid")
            .field("spec", &self.spec)
            .field("grid", &self.grid)
            .field("l1_norm", &self.l1_norm)
            .finish_non_exhaustive()
    }
}

impl KernelGrid {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn spec(&self) -> &MollifierSpec {
        &self.spec
    }

    /// `a = K*1`, the kernel mass seen from each node.
    pub fn a_field(&self) -> &Field {
        &self.a_field
    }

    /// `||K||_{L^1}` over the difference grid (midpoint rule).
    pub fn l1_norm(&self) -> f64 {
        self.l1_norm
    }

    pub fn min_a(&self) -> f64 {
        self.a_field.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_a(&self) -> f64 {
        self.a_field.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Diagonal free-space symbol per cosine mode (the IMEX implicit shift).
    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    /// Kernel value at a difference-grid offset (test hook).
    pub fn sample_at(&self, offsets: &[isize]) -> f64 {
        match *offsets {
            [o] => {
                let n = self.grid.points(0) as isize;
                self.samples[(o + n - 1) as usize]
            }
            [o0, o1] => {
                let (n0, n1) = (self.grid.points(0) as isize, self.grid.points(1) as isize);
                let d1 = (2 * n1 - 1) as usize;
                self.samples[(o0 + n0 - 1) as usize * d1 + (o1 + n1 - 1) as usize]
            }
            _ => unreachable!("grids are 1d or 2d"),
        }
    }
}

/// `(K*f)(x_i) = q * sum_j K(x_i - x_j) f(x_j)`, restricted to the box, via
/// zero-padded FFT. Matches the direct double loop to roundoff.
pub fn convolve(k: &KernelGrid, f: &Field) -> Field {
    assert_eq!(f.grid, k.grid, "field grid must match kernel grid");
    let ptotal: usize = k.padded.iter().product();
    let mut buf = vec![Complex::new(0.0, 0.0); ptotal];
    match k.grid.dim() {
        1 => {
            for (i, &v) in f.values.iter().enumerate() {
                buf[i].re = v;
            }
        }
        _ => {
            let n1 = k.grid.points(1);
            let p1 = k.padded[1];
            for i in 0..k.grid.points(0) {
                for j in 0..n1 {
                    buf[i * p1 + j].re = f.values[i * n1 + j];
                }
            }
        }
    }
    fft_nd(&mut buf, &k.padded, &k.fft_fwd);
    for (b, kh) in buf.iter_mut().zip(&k.kernel_hat) {
        *b *= kh;
    }
    fft_nd(&mut buf, &k.padded, &k.fft_inv);
    let scale = k.quad_weight / ptotal as f64;
    let mut out = Field::zeros(k.grid.clone());
    match k.grid.dim() {
        1 => {
            for (i, o) in out.values.iter_mut().enumerate() {
                *o = buf[i].re * scale;
            }
        }
        _ => {
            let n1 = k.grid.points(1);
            let p1 = k.padded[1];
            for i in 0..k.grid.points(0) {
                for j in 0..n1 {
                    out.values[i * n1 + j] = buf[i * p1 + j].re * scale;
                }
            }
        }
    }
    out
}

/// Nonlocal diffusion operator `L u = a u - K*u`. Annihilates constants and
/// has exactly zero mean by kernel symmetry.
pub fn nonlocal_op(k: &KernelGrid, f: &Field) -> Field {
    let conv = convolve(k, f);
    let values = k
        .a_field
        .values
        .iter()
        .zip(&f.values)
        .zip(&conv.values)
        .map(|((&a, &v), &c)| a * v - c)
        .collect();
    Field { grid: f.grid.clone(), values }
}

/// Interaction form `B(h,g) = int int K(x-y)(h(x)-h(y))(g(x)-g(y))`, computed
/// through the convolution identity `B = 2 (1, K*(hg))_H - 2 (h, K*g)_H`.
pub fn bilinear_b(k: &KernelGrid, h: &Field, g: &Field) -> f64 {
    assert_eq!(h.grid, g.grid, "field grids must match");
    let hg = Field {
        grid: h.grid.clone(),
        values: h.values.iter().zip(&g.values).map(|(a, b)| a * b).collect(),
    };
    let one = Field::constant(h.grid.clone(), 1.0);
    2.0 * inner_h(&one, &convolve(k, &hg)) - 2.0 * inner_h(h, &convolve(k, g))
}

/// Nonlocal free energy `E(f) = B(f,f)/4 + int F_lambda(f)`; `lambda = 0`
/// uses the raw potential.
pub fn nonlocal_energy(k: &KernelGrid, f: &Field, pot: &Potential, lambda: f64) -> f64 {
    let reg = pot.regularized(lambda);
    let quad = f.grid.cell_volume();
    let potential: f64 = f.values.iter().map(|&v| reg.f_lambda(v)).sum::<f64>() * quad;
    0.25 * bilinear_b(k, f, f) + potential
}

/// Fraction of each extent treated as boundary layer by the consistency
/// diagnostic. At eps = 0.2 the Gaussian tail reaches deep into the unit box;
/// only the central window past 0.45 shows the clean Taylor regime.
pub const CONSISTENCY_INTERIOR_MARGIN: f64 = 0.45;

/// Max-norm error of `L_eps u` against `-Delta u` for the product-cosine
/// probe `u = prod_a cos(pi x_a / L_a)`, measured on interior nodes at
/// distance >= `margin_frac * L_a` from the boundary per axis.
pub fn consistency_error(k: &KernelGrid, margin_frac: f64) -> f64 {
    let grid = &k.grid;
    let u = Field::from_fn(grid.clone(), |x| {
        (0..x.len())
            .map(|a| (std::f64::consts::PI * x[a] / grid.extent(a)).cos())
            .product()
    });
    let lap_coeff: f64 = (0..grid.dim())
        .map(|a| (std::f64::consts::PI / grid.extent(a)).powi(2))
        .sum();
    let lu = nonlocal_op(k, &u);
    let mut max_err: f64 = 0.0;
    let interior = |axis: usize, i: usize| {
        let x = grid.node(axis, i);
        let l = grid.extent(axis);
        x >= margin_frac * l && x <= (1.0 - margin_frac) * l
    };
    match grid.dim() {
        1 => {
            for i in 0..grid.points(0) {
                if interior(0, i) {
                    let err = (lu.values[i] - lap_coeff * u.values[i]).abs();
                    max_err = max_err.max(err);
                }
            }
        }
        _ => {
            let n1 = grid.points(1);
            for i in 0..grid.points(0) {
                for j in 0..n1 {
                    if interior(0, i) && interior(1, j) {
                        let idx = i * n1 + j;
                        let err = (lu.values[idx] - lap_coeff * u.values[idx]).abs();
                        max_err = max_err.max(err);
                    }
                }
            }
        }
    }
    max_err
}

/// Compatibility margin `min_a + inf F''` against the configured coercivity
/// constant; nonnegative margin minus `c0` means the kernel/potential pair is
/// admissible.
pub fn coercivity_compatibility(k: &KernelGrid, pot: &Potential) -> f64 {
    k.min_a() - pot.alpha() - pot.c0()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Potential;
    use crate::spectral::mean;

    #[test]
    fn cn_closed_forms() {
        assert_eq!(cn_constant(1).unwrap(), 2.0);
        assert!((cn_constant(2).unwrap() - std::f64::consts::PI).abs() < 1e-15);
        assert!((cn_constant(3).unwrap() - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-15);
        assert!(cn_constant(4).is_err());
    }

    #[test]
    fn gaussian_peak_value() {
        // B_2 = 4 / (pi * Gamma(2)) = 4/pi, so K_eps(0) = (4/pi) eps^-4.
        let eps = 0.1;
        let spec = MollifierSpec::new(MollifierFamily::GaussianR2, eps, 2).unwrap();
        let expect = 4.0 / std::f64::consts::PI * eps.powi(-4);
        assert!((spec.kernel_value(0.0) - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn annular_support() {
        let eps = 0.2;
        let spec = MollifierSpec::new(MollifierFamily::Annular, eps, 2).unwrap();
        assert_eq!(spec.kernel_value((0.4 * eps) * (0.4 * eps)), 0.0);
        assert_eq!(spec.kernel_value((1.1 * eps) * (1.1 * eps)), 0.0);
        assert!(spec.kernel_value((0.7 * eps) * (0.7 * eps)) > 0.0);
    }

    #[test]
    fn resolution_guard() {
        let g = GridSpec::unit(1, 16).unwrap(); // spacing 1/16
        let spec = MollifierSpec::new(MollifierFamily::GaussianR2, 0.05, 1).unwrap();
        assert!(matches!(
            build_kernel(&spec, &g),
            Err(KernelError::UnresolvedKernel { .. })
        ));
    }

    #[test]
    fn convolving_one_gives_a_and_constants_die() {
        let g = GridSpec::unit(2, 24).unwrap();
        let spec = MollifierSpec::new(MollifierFamily::GaussianR2, 0.15, 2).unwrap();
        let k = build_kernel(&spec, &g).unwrap();
        let c = Field::constant(g.clone(), 2.5);
        let conv = convolve(&k, &c);
        for (v, a) in conv.values.iter().zip(&k.a_field().values) {
            assert!((v - 2.5 * a).abs() < 1e-12 * k.max_a());
        }
        let lc = nonlocal_op(&k, &c);
        for v in &lc.values {
            assert!(v.abs() < 1e-10 * k.max_a());
        }
        // Positivity: K >= 0, f >= 0 -> K*f >= 0.
        assert!(conv.values.iter().all(|&v| v >= 0.0));
        assert!(k.a_field().values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn nonlocal_op_is_mean_free() {
        let g = GridSpec::unit(2, 20).unwrap();
        let spec = MollifierSpec::new(MollifierFamily::GaussianR2, 0.2, 2).unwrap();
        let k = build_kernel(&spec, &g).unwrap();
        let f = Field::from_fn(g, |x| (3.1 * x[0]).sin() + 0.7 * (x[0] * x[1]).cos());
        let lu = nonlocal_op(&k, &f);
        assert!(mean(&lu).abs() < 1e-12 * k.max_a());
    }

    #[test]
    fn bilinear_vanishes_on_constants() {
        let g = GridSpec::unit(1, 32).unwrap();
        let spec = MollifierSpec::new(MollifierFamily::GaussianR2, 0.2, 1).unwrap();
        let k = build_kernel(&spec, &g).unwrap();
        let c = Field::constant(g.clone(), 1.3);
        let f = Field::from_fn(g, |x| x[0] * x[0]);
        assert!(bilinear_b(&k, &c, &f).abs() < 1e-10);
        assert!(bilinear_b(&k, &f, &f) >= 0.0);
    }

    #[test]
    fn energy_trivial_values() {
        let g = GridSpec::unit(1, 32).unwrap();
        let spec = MollifierSpec::new(MollifierFamily::GaussianR2, 0.2, 1).unwrap();
        let k = build_kernel(&spec, &g).unwrap();
        let pot = Potential::quartic(1.0).unwrap();
        // f = 1: B(1,1) = 0 and F(1) = 0.
        let e1 = nonlocal_energy(&k, &Field::constant(g.clone(), 1.0), &pot, 0.0);
        assert!(e1.abs() < 1e-10);
        // f = 0: E = |O| F(0) = 1/4.
        let e0 = nonlocal_energy(&k, &Field::constant(g, 0.0), &pot, 0.0);
        assert!((e0 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn sample_symmetry() {
        for family in [MollifierFamily::GaussianR2, MollifierFamily::Annular] {
            let g = GridSpec::unit(2, 16).unwrap();
            let spec = MollifierSpec::new(family, 0.3, 2).unwrap();
            let k = build_kernel(&spec, &g).unwrap();
            for o0 in -3..=3isize {
                for o1 in -3..=3isize {
                    assert_eq!(k.sample_at(&[o0, o1]), k.sample_at(&[-o0, -o1]));
                }
            }
        }
    }
}
