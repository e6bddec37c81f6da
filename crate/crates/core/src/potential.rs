//! Regular double-well potentials, their convex splitting and the Yosida
//! regularization layer.
//!
//! A potential `F` with `inf F'' = -alpha` is split as
//! `F(s) = Psi(s) - gamma s^2 / 2` with `gamma > alpha`, so `Psi` is strongly
//! convex and `Psi'` is maximal monotone. The resolvent
//! `J_lam = (I + lam Psi')^{-1}` and the Yosida approximation
//! `Psi'_lam = (id - J_lam)/lam` then give the Lipschitz surrogate
//! `F'_lam = Psi'_lam - gamma id` used by the regularized dynamics.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("gamma = {gamma} must exceed alpha = {alpha} for a strictly convex split")]
    GammaNotAboveAlpha { gamma: f64, alpha: f64 },
    #[error("convex-split feasibility violated: (gamma-alpha)^2/(1+gamma-alpha) = {lhs:.3e} exceeds c0/2 = {rhs:.3e}")]
    SplitInfeasible { lhs: f64, rhs: f64 },
    #[error("coercivity constant c0 must be positive, got {0}")]
    BadC0(f64),
    #[error("polynomial potential must be nonnegative with F'(0) = 0; violated near s = {0}")]
    NotAdmissible(f64),
    #[error("resolvent Newton iteration did not converge after {max_iter} steps (residual {residual:.3e})")]
    NoConvergence { max_iter: usize, residual: f64 },
    #[error("lambda must lie in [0, 1], got {0}")]
    BadLambda(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    /// `F(s) = (s^2 - 1)^2 / 4`.
    Quartic,
    /// Even polynomial `F(s) = sum_k c_k s^(2k)` with the listed
    /// coefficients `c_0, c_1, ...`.
    EvenPolynomial(Vec<f64>),
}

/// A regular double-well potential together with its convex split.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    kind: PotentialKind,
    gamma: f64,
    alpha: f64,
    c0: f64,
}

impl Potential {
    /// Quartic double well with the gamma selection rule: `gamma - alpha` is
    /// the largest `x <= 1/2` with `x^2/(1+x) <= c0/2`.
    pub fn quartic(c0: f64) -> Result<Self, PotentialError> {
        Self::with_auto_gamma(PotentialKind::Quartic, c0)
    }

    /// Quartic double well with an explicit split parameter.
    pub fn quartic_with_gamma(c0: f64, gamma: f64) -> Result<Self, PotentialError> {
        Self::build(PotentialKind::Quartic, c0, Some(gamma))
    }

    pub fn even_polynomial(coeffs: Vec<f64>, c0: f64) -> Result<Self, PotentialError> {
        Self::with_auto_gamma(PotentialKind::EvenPolynomial(coeffs), c0)
    }

    fn with_auto_gamma(kind: PotentialKind, c0: f64) -> Result<Self, PotentialError> {
        Self::build(kind, c0, None)
    }

    fn build(kind: PotentialKind, c0: f64, gamma: Option<f64>) -> Result<Self, PotentialError> {
        if c0.is_nan() || c0 <= 0.0 || c0.is_infinite() {
            return Err(PotentialError::BadC0(c0));
        }
        let alpha = match &kind {
            PotentialKind::Quartic => 1.0, // inf (3s^2 - 1) = -1
            PotentialKind::EvenPolynomial(c) => {
                admissibility_check(c)?;
                estimate_alpha(c)
            }
        };
        let gamma = match gamma {
            Some(g) => g,
            // Largest x with x^2/(1+x) = c0/2 solves x^2 - (c0/2)x - c0/2 = 0;
            // capped at 1/2 so the split stays mild.
            None => {
                let half = c0 / 2.0;
                let root = 0.5 * (half + (half * half + 4.0 * half).sqrt());
                alpha + root.min(0.5)
            }
        };
        if gamma <= alpha {
            return Err(PotentialError::GammaNotAboveAlpha { gamma, alpha });
        }
        let x = gamma - alpha;
        let lhs = x * x / (1.0 + x);
        if lhs > c0 / 2.0 + 1e-12 {
            return Err(PotentialError::SplitInfeasible { lhs, rhs: c0 / 2.0 });
        }
        Ok(Self { kind, gamma, alpha, c0 })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `-inf F''` (1 for the quartic well).
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn f(&self, s: f64) -> f64 {
        match &self.kind {
            PotentialKind::Quartic => {
                let q = s * s - 1.0;
                q * q / 4.0
            }
            PotentialKind::EvenPolynomial(c) => {
                let s2 = s * s;
                let mut acc = 0.0;
                for &ck in c.iter().rev() {
                    acc = acc * s2 + ck;
                }
                acc
            }
        }
    }

    pub fn df(&self, s: f64) -> f64 {
        match &self.kind {
            PotentialKind::Quartic => s * s * s - s,
            PotentialKind::EvenPolynomial(c) => {
                let s2 = s * s;
                let mut acc = 0.0;
                for (k, &ck) in c.iter().enumerate().rev() {
                    if k > 0 {
                        acc = acc * s2 + 2.0 * k as f64 * ck;
                    }
                }
                acc * s
            }
        }
    }

    pub fn ddf(&self, s: f64) -> f64 {
        match &self.kind {
            PotentialKind::Quartic => 3.0 * s * s - 1.0,
            PotentialKind::EvenPolynomial(c) => {
                let s2 = s * s;
                let mut acc = 0.0;
                for (k, &ck) in c.iter().enumerate().rev() {
                    if k > 0 {
                        let k = k as f64;
                        acc = acc * s2 + 2.0 * k * (2.0 * k - 1.0) * ck;
                    }
                }
                acc
            }
        }
    }

    /// Convex part derivative `Psi'(s) = F'(s) + gamma s`.
    pub fn dpsi(&self, s: f64) -> f64 {
        self.df(s) + self.gamma * s
    }

    /// `Psi''(s) = F''(s) + gamma >= gamma - alpha > 0`.
    pub fn ddpsi(&self, s: f64) -> f64 {
        self.ddf(s) + self.gamma
    }

    /// `Psi(s) = F(s) + gamma s^2 / 2`.
    pub fn psi(&self, s: f64) -> f64 {
        self.f(s) + 0.5 * self.gamma * s * s
    }

    /// View of the potential at regularization level `lambda`.
    pub fn regularized(&self, lambda: f64) -> Regularized<'_> {
        Regularized { pot: self, yos: YosidaParams::new(lambda).expect("lambda validated by caller") }
    }

    pub fn regularized_with(&self, yos: YosidaParams) -> Regularized<'_> {
        Regularized { pot: self, yos }
    }

    /// Empirical growth constant: max over `[-range, range]` of
    /// `(|F'| + |F''|) / (1 + F)`.
    pub fn growth_constant(&self, range: f64, samples: usize) -> f64 {
        (0..=samples)
            .map(|i| {
                let s = -range + 2.0 * range * i as f64 / samples as f64;
                (self.df(s).abs() + self.ddf(s).abs()) / (1.0 + self.f(s))
            })
            .fold(0.0, f64::max)
    }

    /// Empirical curvature-growth constant: max over `[-range, range]` of
    /// `F''(s) / (1 + |s|^q)`.
    pub fn curvature_growth_constant(&self, q: f64, range: f64, samples: usize) -> f64 {
        (0..=samples)
            .map(|i| {
                let s = -range + 2.0 * range * i as f64 / samples as f64;
                self.ddf(s) / (1.0 + s.abs().powf(q))
            })
            .fold(0.0, f64::max)
    }
}

fn admissibility_check(coeffs: &[f64]) -> Result<(), PotentialError> {
    // F'(0) = 0 holds for any even polynomial; check F >= 0 on a wide grid
    // and a positive leading coefficient so F -> +inf.
    if coeffs.last().is_none_or(|&c| c <= 0.0) {
        return Err(PotentialError::NotAdmissible(f64::INFINITY));
    }
    let scale: f64 = 10.0 + coeffs.iter().map(|c| c.abs()).sum::<f64>();
    let probe = |s: f64| {
        let s2 = s * s;
        let mut acc = 0.0;
        for &ck in coeffs.iter().rev() {
            acc = acc * s2 + ck;
        }
        acc
    };
    for i in 0..=20_000 {
        let s = -scale + 2.0 * scale * i as f64 / 20_000.0;
        if probe(s) < -1e-12 {
            return Err(PotentialError::NotAdmissible(s));
        }
    }
    Ok(())
}

fn estimate_alpha(coeffs: &[f64]) -> f64 {
    // -inf F'' over a grid wide enough that the positive leading term wins.
    let scale: f64 = 10.0 + coeffs.iter().map(|c| c.abs()).sum::<f64>();
    let ddf = |s: f64| {
        let s2 = s * s;
        let mut acc = 0.0;
        for (k, &ck) in coeffs.iter().enumerate().rev() {
            if k > 0 {
                let k = k as f64;
                acc = acc * s2 + 2.0 * k * (2.0 * k - 1.0) * ck;
            }
        }
        acc
    };
    let mut inf = f64::INFINITY;
    for i in 0..=200_000 {
        let s = -scale + 2.0 * scale * i as f64 / 200_000.0;
        inf = inf.min(ddf(s));
    }
    (-inf).max(0.0)
}

/// Regularization parameters: `lambda = 0` disables the Yosida layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YosidaParams {
    pub lambda: f64,
    pub newton_tol: f64,
    pub max_iter: usize,
}

impl YosidaParams {
    pub fn new(lambda: f64) -> Result<Self, PotentialError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(PotentialError::BadLambda(lambda));
        }
        Ok(Self { lambda, newton_tol: 1e-12, max_iter: 100 })
    }

    pub fn disabled() -> Self {
        Self { lambda: 0.0, newton_tol: 1e-12, max_iter: 100 }
    }
}

/// A potential viewed at a fixed regularization level.
pub struct Regularized<'a> {
    pot: &'a Potential,
    yos: YosidaParams,
}

impl Regularized<'_> {
    pub fn lambda(&self) -> f64 {
        self.yos.lambda
    }

    /// Resolvent `J_lam(s)`: the unique root of `x + lam Psi'(x) = s`, by
    /// safeguarded Newton with a bisection fallback.
    pub fn resolvent(&self, s: f64) -> Result<f64, PotentialError> {
        let lam = self.yos.lambda;
        let g = |x: f64| x + lam * self.pot.dpsi(x) - s;
        // Psi' is monotone, so g is strictly increasing; grow a bracket from
        // the natural first guess.
        let mut lo = s - lam * self.pot.dpsi(s).abs() - 1.0;
        let mut hi = s + lam * self.pot.dpsi(s).abs() + 1.0;
        let mut grow = 1.0;
        while g(lo) > 0.0 {
            lo -= grow;
            grow *= 2.0;
        }
        grow = 1.0;
        while g(hi) < 0.0 {
            hi += grow;
            grow *= 2.0;
        }
        let mut x = s / (1.0 + lam * self.pot.gamma);
        if x < lo || x > hi {
            x = 0.5 * (lo + hi);
        }
        let mut residual = g(x);
        for _ in 0..self.yos.max_iter {
            if residual.abs() <= self.yos.newton_tol * (1.0 + s.abs()) {
                return Ok(x);
            }
            if residual > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let slope = 1.0 + lam * self.pot.ddpsi(x);
            let mut next = x - residual / slope;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            x = next;
            residual = g(x);
        }
        Err(PotentialError::NoConvergence { max_iter: self.yos.max_iter, residual })
    }

    /// Yosida approximation `Psi'_lam(s) = (s - J_lam(s)) / lam`; the raw
    /// `Psi'` when `lambda = 0`.
    pub fn dpsi_lambda(&self, s: f64) -> Result<f64, PotentialError> {
        if self.yos.lambda == 0.0 {
            return Ok(self.pot.dpsi(s));
        }
        Ok((s - self.resolvent(s)?) / self.yos.lambda)
    }

    /// `Psi''_lam(s) = Psi''(J)/(1 + lam Psi''(J))`, via the resolvent.
    pub fn ddpsi_lambda(&self, s: f64) -> Result<f64, PotentialError> {
        if self.yos.lambda == 0.0 {
            return Ok(self.pot.ddpsi(s));
        }
        let j = self.resolvent(s)?;
        let d = self.pot.ddpsi(j);
        Ok(d / (1.0 + self.yos.lambda * d))
    }

    /// `F'_lam(s) = Psi'_lam(s) - gamma s`.
    pub fn df_lambda(&self, s: f64) -> f64 {
        if self.yos.lambda == 0.0 {
            return self.pot.df(s);
        }
        self.dpsi_lambda(s).expect("monotone resolvent converges") - self.pot.gamma * s
    }

    /// `F''_lam(s) = Psi''_lam(s) - gamma`.
    pub fn ddf_lambda(&self, s: f64) -> f64 {
        if self.yos.lambda == 0.0 {
            return self.pot.ddf(s);
        }
        self.ddpsi_lambda(s).expect("monotone resolvent converges") - self.pot.gamma
    }

    /// `F_lam(s) = F(0) + int_0^s Psi'_lam - gamma s^2/2`, the integral by
    /// adaptive Gauss quadrature.
    pub fn f_lambda(&self, s: f64) -> f64 {
        if self.yos.lambda == 0.0 {
            return self.pot.f(s);
        }
        let integrand = |x: f64| self.dpsi_lambda(x).expect("monotone resolvent converges");
        let integral = crate::util::adaptive_quad(&integrand, 0.0, s, 1e-10);
        self.pot.f(0.0) + integral - 0.5 * self.pot.gamma * s * s
    }

    /// `Psi_lam(s) = Psi(0) + int_0^s Psi'_lam`.
    pub fn psi_lambda(&self, s: f64) -> f64 {
        self.f_lambda(s) + 0.5 * self.pot.gamma * s * s
    }
}

/// `inf_s Psi''_lam(s) - gamma + min_a`, estimated by centered finite
/// differences of `Psi'_lam` on a dense grid over `[-range, range]`. A value
/// of at least `c0/2` certifies the regularized coercivity condition.
pub fn coercivity_margin(
    pot: &Potential,
    min_a: f64,
    yos: YosidaParams,
    range: f64,
    samples: usize,
) -> f64 {
    let reg = pot.regularized_with(yos);
    let h = 1e-5;
    let mut inf = f64::INFINITY;
    for i in 0..=samples {
        let s = -range + 2.0 * range * i as f64 / samples as f64;
        let d2 = if yos.lambda == 0.0 {
            pot.ddpsi(s)
        } else {
            let up = reg.dpsi_lambda(s + h).expect("resolvent converges");
            let dn = reg.dpsi_lambda(s - h).expect("resolvent converges");
            (up - dn) / (2.0 * h)
        };
        inf = inf.min(d2);
    }
    inf - pot.gamma + min_a
}
