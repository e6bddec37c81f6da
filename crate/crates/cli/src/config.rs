//! Flat INI-style run configuration: `key = value` lines grouped in
//! `[grid]`, `[kernel]`, `[potential]`, `[noise]`, `[solver]` and
//! `[experiment]` sections, plus top-level `master_seed` and `out_dir`.
//! Unknown keys are hard errors so typos cannot silently fall back to
//! defaults.

use std::path::PathBuf;

use nlch_core::experiments::{InitialConfig, InitialRule, NoiseConfig, StudySetup};
use nlch_core::kernel::{build_kernel, KernelGrid, MollifierFamily, MollifierSpec};
use nlch_core::noise::Saturation;
use nlch_core::potential::Potential;
use nlch_core::spectral::GridSpec;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("validation failed [{assumption}]: {detail}")]
    Validation { assumption: &'static str, detail: String },
}

impl ConfigError {
    fn at(line: usize, msg: impl Into<String>) -> Self {
        ConfigError::Parse { line, msg: msg.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub dim: usize,
    pub points: usize,
    pub extent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSection {
    pub family: MollifierFamily,
    pub epsilon: f64,
    pub dim_n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSection {
    pub kind: String,
    pub poly_coeffs: Vec<f64>,
    pub c0: f64,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSection {
    pub modes: usize,
    pub b0: f64,
    pub decay: f64,
    pub saturation: Saturation,
    pub mean_zero: bool,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSection {
    pub model: ModelKind,
    pub lambda: f64,
    pub dt: f64,
    pub t_end: f64,
    pub scheme: SchemeKind,
    pub stabilization: Option<f64>,
    pub record_every: usize,
    pub modes_cutoff: Option<usize>,
    pub track_ito: bool,
    pub initial_mean: f64,
    pub initial_amplitude: f64,
    pub initial_modes: usize,
    pub initial_decay: f64,
    pub initial_seed: u64,
    pub initial_kind: InitialKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Nonlocal,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    ImexEm,
    ExplicitEm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialKind {
    Smooth,
    Spinodal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSection {
    pub epsilons: Vec<f64>,
    pub deltas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub paths: usize,
    pub p: f64,
    /// Scale of the sqrt(eps) initial perturbation rule; 0 keeps the datum
    /// identical across the epsilon grid.
    pub perturbation: f64,
    pub direction_seed: u64,
    pub direction_modes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub master_seed: u64,
    pub out_dir: PathBuf,
    pub grid: GridSection,
    pub kernel: KernelSection,
    pub potential: PotentialSection,
    pub noise: NoiseSection,
    pub solver: SolverSection,
    pub experiment: ExperimentSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 42,
            out_dir: PathBuf::from("runs/out"),
            grid: GridSection { dim: 1, points: 128, extent: 1.0 },
            kernel: KernelSection {
                family: MollifierFamily::GaussianR2,
                epsilon: 0.1,
                dim_n: None,
            },
            potential: PotentialSection {
                kind: "quartic".into(),
                poly_coeffs: Vec::new(),
                c0: 1.0,
                gamma: None,
            },
            noise: NoiseSection {
                modes: 8,
                b0: 0.5,
                decay: 1.0,
                saturation: Saturation::Tanh,
                mean_zero: true,
                seed: None,
            },
            solver: SolverSection {
                model: ModelKind::Nonlocal,
                lambda: 0.0,
                dt: 1e-4,
                t_end: 0.1,
                scheme: SchemeKind::ImexEm,
                stabilization: None,
                record_every: 0,
                modes_cutoff: None,
                track_ito: true,
                initial_mean: 0.1,
                initial_amplitude: 0.3,
                initial_modes: 16,
                initial_decay: 1.0,
                initial_seed: 1,
                initial_kind: InitialKind::Smooth,
            },
            experiment: ExperimentSection {
                epsilons: vec![0.4, 0.2, 0.1, 0.05],
                deltas: vec![1e-1, 1e-2, 1e-3],
                lambdas: vec![1e-1, 1e-2, 1e-3],
                paths: 16,
                p: 4.0,
                perturbation: 1.0,
                direction_seed: 99,
                direction_modes: 8,
            },
        }
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| ConfigError::at(line, format!("cannot parse value for '{key}': '{v}'")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::at(line, format!("cannot parse boolean '{key}': '{v}'"))),
    }
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',')
        .map(|s| parse_num::<f64>(line, key, s.trim()))
        .collect()
}

/// Parse `key = value` text into a fully defaulted configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        if let Some(name) = stripped.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(line, "unterminated section header"))?;
            match name {
                "grid" | "kernel" | "potential" | "noise" | "solver" | "experiment" => {
                    section = name.to_string();
                }
                other => return Err(ConfigError::at(line, format!("unknown section [{other}]"))),
            }
            continue;
        }
        let (key, value) = stripped
            .split_once('=')
            .ok_or_else(|| ConfigError::at(line, "expected 'key = value'"))?;
        let key = key.trim();
        let v = value.trim();
        match (section.as_str(), key) {
            ("", "master_seed") => cfg.master_seed = parse_num(line, key, v)?,
            ("", "out_dir") => cfg.out_dir = PathBuf::from(v),
            ("grid", "dim") => cfg.grid.dim = parse_num(line, key, v)?,
            ("grid", "points") => cfg.grid.points = parse_num(line, key, v)?,
            ("grid", "extent") => cfg.grid.extent = parse_num(line, key, v)?,
            ("kernel", "family") => {
                cfg.kernel.family = match v {
                    "gaussian_r2" => MollifierFamily::GaussianR2,
                    "annular" => MollifierFamily::Annular,
                    _ => return Err(ConfigError::at(line, format!("unknown kernel family '{v}'"))),
                }
            }
            ("kernel", "epsilon") => cfg.kernel.epsilon = parse_num(line, key, v)?,
            ("kernel", "dim_n") => {
                cfg.kernel.dim_n = if v == "auto" { None } else { Some(parse_num(line, key, v)?) }
            }
            ("potential", "kind") => {
                if v == "quartic" {
                    cfg.potential.kind = "quartic".into();
                } else if let Some(list) = v.strip_prefix("poly:") {
                    cfg.potential.kind = "poly".into();
                    cfg.potential.poly_coeffs = parse_list(line, key, list)?;
                } else {
                    return Err(ConfigError::at(line, format!("unknown potential kind '{v}'")));
                }
            }
            ("potential", "c0") => cfg.potential.c0 = parse_num(line, key, v)?,
            ("potential", "gamma") => {
                cfg.potential.gamma = if v == "auto" { None } else { Some(parse_num(line, key, v)?) }
            }
            ("noise", "modes") => cfg.noise.modes = parse_num(line, key, v)?,
            ("noise", "b0") => cfg.noise.b0 = parse_num(line, key, v)?,
            ("noise", "decay") => cfg.noise.decay = parse_num(line, key, v)?,
            ("noise", "saturation") => {
                cfg.noise.saturation = match v {
                    "tanh" => Saturation::Tanh,
                    "clamp" => Saturation::Clamp,
                    "one" => Saturation::One,
                    other => {
                        if let Some(m) = other.strip_prefix("identity:") {
                            Saturation::IdentityBounded(parse_num(line, key, m)?)
                        } else {
                            return Err(ConfigError::at(
                                line,
                                format!("unknown saturation '{v}' (tanh | clamp | identity:M | one)"),
                            ));
                        }
                    }
                }
            }
            ("noise", "mean_zero") => cfg.noise.mean_zero = parse_bool(line, key, v)?,
            ("noise", "seed") => {
                cfg.noise.seed = if v == "auto" { None } else { Some(parse_num(line, key, v)?) }
            }
            ("solver", "model") => {
                cfg.solver.model = match v {
                    "nonlocal" => ModelKind::Nonlocal,
                    "local" => ModelKind::Local,
                    _ => return Err(ConfigError::at(line, format!("unknown model '{v}'"))),
                }
            }
            ("solver", "lambda") => cfg.solver.lambda = parse_num(line, key, v)?,
            ("solver", "dt") => cfg.solver.dt = parse_num(line, key, v)?,
            ("solver", "t_end") => cfg.solver.t_end = parse_num(line, key, v)?,
            ("solver", "scheme") => {
                cfg.solver.scheme = match v {
                    "imex_em" => SchemeKind::ImexEm,
                    "explicit_em" => SchemeKind::ExplicitEm,
                    _ => return Err(ConfigError::at(line, format!("unknown scheme '{v}'"))),
                }
            }
            ("solver", "stabilization") => {
                cfg.solver.stabilization =
                    if v == "auto" { None } else { Some(parse_num(line, key, v)?) }
            }
            ("solver", "record_every") => cfg.solver.record_every = parse_num(line, key, v)?,
            ("solver", "modes_cutoff") => {
                let n: usize = parse_num(line, key, v)?;
                cfg.solver.modes_cutoff = if n == 0 { None } else { Some(n) };
            }
            ("solver", "track_ito") => cfg.solver.track_ito = parse_bool(line, key, v)?,
            ("solver", "initial_mean") => cfg.solver.initial_mean = parse_num(line, key, v)?,
            ("solver", "initial_amplitude") => {
                cfg.solver.initial_amplitude = parse_num(line, key, v)?
            }
            ("solver", "initial_modes") => cfg.solver.initial_modes = parse_num(line, key, v)?,
            ("solver", "initial_decay") => cfg.solver.initial_decay = parse_num(line, key, v)?,
            ("solver", "initial_seed") => cfg.solver.initial_seed = parse_num(line, key, v)?,
            ("solver", "initial_kind") => {
                cfg.solver.initial_kind = match v {
                    "smooth" => InitialKind::Smooth,
                    "spinodal" => InitialKind::Spinodal,
                    _ => return Err(ConfigError::at(line, format!("unknown initial kind '{v}'"))),
                }
            }
            ("experiment", "epsilons") => cfg.experiment.epsilons = parse_list(line, key, v)?,
            ("experiment", "deltas") => cfg.experiment.deltas = parse_list(line, key, v)?,
            ("experiment", "lambdas") => cfg.experiment.lambdas = parse_list(line, key, v)?,
            ("experiment", "paths") => cfg.experiment.paths = parse_num(line, key, v)?,
            ("experiment", "p") => cfg.experiment.p = parse_num(line, key, v)?,
            ("experiment", "perturbation") => cfg.experiment.perturbation = parse_num(line, key, v)?,
            ("experiment", "direction_seed") => {
                cfg.experiment.direction_seed = parse_num(line, key, v)?
            }
            ("experiment", "direction_modes") => {
                cfg.experiment.direction_modes = parse_num(line, key, v)?
            }
            (sec, key) => {
                let loc = if sec.is_empty() { "top level".to_string() } else { format!("[{sec}]") };
                return Err(ConfigError::at(line, format!("unknown key '{key}' in {loc}")));
            }
        }
    }
    Ok(cfg)
}

/// Render the fully resolved configuration back to config syntax.
pub fn render_config(cfg: &RunConfig) -> String {
    let family = match cfg.kernel.family {
        MollifierFamily::GaussianR2 => "gaussian_r2",
        MollifierFamily::Annular => "annular",
    };
    let kind = if cfg.potential.kind == "quartic" {
        "quartic".to_string()
    } else {
        format!(
            "poly:{}",
            cfg.potential
                .poly_coeffs
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        )
    };
    let sat = match cfg.noise.saturation {
        Saturation::Tanh => "tanh".to_string(),
        Saturation::Clamp => "clamp".to_string(),
        Saturation::IdentityBounded(m) => format!("identity:{m}"),
        Saturation::One => "one".to_string(),
    };
    let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    format!(
        "master_seed = {}\nout_dir = {}\n\n[grid]\ndim = {}\npoints = {}\nextent = {}\n\n\
         [kernel]\nfamily = {}\nepsilon = {}\ndim_n = {}\n\n\
         [potential]\nkind = {}\nc0 = {}\ngamma = {}\n\n\
         [noise]\nmodes = {}\nb0 = {}\ndecay = {}\nsaturation = {}\nmean_zero = {}\nseed = {}\n\n\
         [solver]\nmodel = {}\nlambda = {}\ndt = {}\nt_end = {}\nscheme = {}\nstabilization = {}\n\
         record_every = {}\nmodes_cutoff = {}\ntrack_ito = {}\ninitial_mean = {}\n\
         initial_amplitude = {}\ninitial_modes = {}\ninitial_decay = {}\ninitial_seed = {}\n\
         initial_kind = {}\n\n\
         [experiment]\nepsilons = {}\ndeltas = {}\nlambdas = {}\npaths = {}\np = {}\n\
         perturbation = {}\ndirection_seed = {}\ndirection_modes = {}\n",
        cfg.master_seed,
        cfg.out_dir.display(),
        cfg.grid.dim,
        cfg.grid.points,
        cfg.grid.extent,
        family,
        cfg.kernel.epsilon,
        cfg.kernel.dim_n.map_or("auto".into(), |n| n.to_string()),
        kind,
        cfg.potential.c0,
        cfg.potential.gamma.map_or("auto".into(), |g| g.to_string()),
        cfg.noise.modes,
        cfg.noise.b0,
        cfg.noise.decay,
        sat,
        cfg.noise.mean_zero,
        cfg.noise.seed.map_or("auto".into(), |s| s.to_string()),
        match cfg.solver.model {
            ModelKind::Nonlocal => "nonlocal",
            ModelKind::Local => "local",
        },
        cfg.solver.lambda,
        cfg.solver.dt,
        cfg.solver.t_end,
        match cfg.solver.scheme {
            SchemeKind::ImexEm => "imex_em",
            SchemeKind::ExplicitEm => "explicit_em",
        },
        cfg.solver.stabilization.map_or("auto".into(), |s| s.to_string()),
        cfg.solver.record_every,
        cfg.solver.modes_cutoff.unwrap_or(0),
        cfg.solver.track_ito,
        cfg.solver.initial_mean,
        cfg.solver.initial_amplitude,
        cfg.solver.initial_modes,
        cfg.solver.initial_decay,
        cfg.solver.initial_seed,
        match cfg.solver.initial_kind {
            InitialKind::Smooth => "smooth",
            InitialKind::Spinodal => "spinodal",
        },
        list(&cfg.experiment.epsilons),
        list(&cfg.experiment.deltas),
        list(&cfg.experiment.lambdas),
        cfg.experiment.paths,
        cfg.experiment.p,
        cfg.experiment.perturbation,
        cfg.experiment.direction_seed,
        cfg.experiment.direction_modes,
    )
}

/// One structural-hypothesis check with its witnessed value.
#[derive(Debug, Clone)]
pub struct AssumptionCheck {
    pub id: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug)]
pub struct ValidatedRun {
    pub grid: GridSpec,
    pub potential: Potential,
    pub kernel: Option<KernelGrid>,
    pub checks: Vec<AssumptionCheck>,
    pub warnings: Vec<String>,
}

impl RunConfig {
    pub fn build_grid(&self) -> Result<GridSpec, ConfigError> {
        GridSpec::new(
            &vec![self.grid.points; self.grid.dim],
            &vec![self.grid.extent; self.grid.dim],
        )
        .map_err(|e| ConfigError::Validation { assumption: "grid-shape", detail: e.to_string() })
    }

    pub fn build_potential(&self) -> Result<Potential, ConfigError> {
        let res = if self.potential.kind == "quartic" {
            match self.potential.gamma {
                Some(g) => Potential::quartic_with_gamma(self.potential.c0, g),
                None => Potential::quartic(self.potential.c0),
            }
        } else {
            Potential::even_polynomial(self.potential.poly_coeffs.clone(), self.potential.c0)
        };
        res.map_err(|e| ConfigError::Validation {
            assumption: "convex-split-feasibility",
            detail: e.to_string(),
        })
    }

    pub fn noise_config(&self) -> NoiseConfig {
        NoiseConfig {
            modes: self.noise.modes,
            b0: self.noise.b0,
            decay: self.noise.decay,
            saturation: self.noise.saturation,
            mean_zero: self.noise.mean_zero,
        }
    }

    pub fn initial_config(&self) -> InitialConfig {
        InitialConfig {
            mean: self.solver.initial_mean,
            amplitude: self.solver.initial_amplitude,
            modes: self.solver.initial_modes,
            decay: self.solver.initial_decay,
            seed: self.solver.initial_seed,
        }
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise.seed.unwrap_or(self.master_seed)
    }

    pub fn initial_rule(&self) -> InitialRule {
        if self.experiment.perturbation == 0.0 {
            InitialRule::Identical
        } else {
            InitialRule::SqrtEpsPerturbed { scale: self.experiment.perturbation }
        }
    }

    pub fn study_setup(&self) -> Result<StudySetup, ConfigError> {
        Ok(StudySetup {
            grid: self.build_grid()?,
            family: self.kernel.family,
            potential: self.build_potential()?,
            noise: self.noise_config(),
            initial: self.initial_config(),
            dt: self.solver.dt,
            t_end: self.solver.t_end,
            lambda: self.solver.lambda,
            stabilization: self.solver.stabilization,
            record_every: self.solver.record_every,
            master_seed: self.noise_seed(),
            n_paths: self.experiment.paths,
            p: self.experiment.p,
            workers: 1,
        })
    }

    /// Run every applicable structural check; the first hard failure aborts
    /// with the assumption named.
    pub fn validate(&self, needs_kernel: bool) -> Result<ValidatedRun, ConfigError> {
        let mut checks = Vec::new();
        let mut warnings = Vec::new();
        let grid = self.build_grid()?;
        let potential = self.build_potential()?;

        if self.solver.dt.is_nan() || self.solver.dt <= 0.0 {
            return Err(ConfigError::Validation {
                assumption: "time-grid",
                detail: format!("dt must be positive, got {}", self.solver.dt),
            });
        }
        if !(0.0..=1.0).contains(&self.solver.lambda) {
            return Err(ConfigError::Validation {
                assumption: "regularization-range",
                detail: format!("lambda must lie in [0, 1], got {}", self.solver.lambda),
            });
        }

        checks.push(AssumptionCheck {
            id: "convex-split-feasibility",
            passed: true,
            detail: format!(
                "gamma = {:.6}, alpha = {:.6}, (gamma-alpha)^2/(1+gamma-alpha) <= c0/2",
                potential.gamma(),
                potential.alpha()
            ),
        });
        let cf = potential.growth_constant(5.0, 2000);
        checks.push(AssumptionCheck {
            id: "potential-growth",
            passed: cf.is_finite(),
            detail: format!("empirical growth constant {cf:.4} on [-5, 5]"),
        });
        // Quadratic curvature growth is the exponent the two-dimensional
        // runs need; it covers d = 1 as well.
        let q = 2.0;
        let cq = potential.curvature_growth_constant(q, 5.0, 2000);
        checks.push(AssumptionCheck {
            id: "potential-curvature-growth",
            passed: cq.is_finite(),
            detail: format!("F'' <= {cq:.4} (1 + |s|^{q}) on [-5, 5]"),
        });

        let kernel = if needs_kernel {
            let dim_n = self.kernel.dim_n.unwrap_or(grid.dim());
            let spec = MollifierSpec::new(self.kernel.family, self.kernel.epsilon, dim_n)
                .map_err(|e| ConfigError::Validation {
                    assumption: "kernel-family",
                    detail: e.to_string(),
                })?;
            let kernel = build_kernel(&spec, &grid).map_err(|e| ConfigError::Validation {
                assumption: "kernel-resolution",
                detail: e.to_string(),
            })?;
            checks.push(AssumptionCheck {
                id: "kernel-positivity",
                passed: kernel.min_a() >= 0.0,
                detail: format!("min a = {:.6}, max a = {:.6}", kernel.min_a(), kernel.max_a()),
            });
            let margin = nlch_core::kernel::coercivity_compatibility(&kernel, &potential);
            let check = AssumptionCheck {
                id: "potential-coercivity-compatibility",
                passed: margin >= 0.0,
                detail: format!(
                    "min a + inf F'' - c0 = {margin:.6} (needs >= 0 for c0 = {})",
                    potential.c0()
                ),
            };
            if !check.passed {
                return Err(ConfigError::Validation {
                    assumption: "potential-coercivity-compatibility",
                    detail: check.detail,
                });
            }
            checks.push(check);
            Some(kernel)
        } else {
            None
        };

        if self.noise.modes > 0 {
            let noise = self.noise_config().build(&grid).map_err(|e| ConfigError::Validation {
                assumption: "noise-amplitude-decay",
                detail: e.to_string(),
            })?;
            let rep = noise.validate_assumptions();
            checks.push(AssumptionCheck {
                id: "noise-bounded",
                passed: rep.bound_h_linf.is_finite(),
                detail: format!(
                    "L_G = {:.6}, sup-channel bound {:.6}",
                    rep.lipschitz_h, rep.bound_h_linf
                ),
            });
            checks.push(AssumptionCheck {
                id: "noise-v-bound",
                passed: rep.bound_v.is_finite(),
                detail: format!("V-channel bound {:.6}", rep.bound_v),
            });
            checks.push(AssumptionCheck {
                id: "noise-mean-zero",
                passed: rep.mean_zero_ok,
                detail: format!("worst channel mean {:.3e}", rep.worst_channel_mean),
            });
            if !rep.mean_zero_ok {
                warnings.push(
                    "noise channels are not mean-zero: pathwise mass conservation is lost".into(),
                );
            }
        }

        if self.solver.scheme == SchemeKind::ExplicitEm {
            use nlch_core::solver::{explicit_stability_factor, Model, Scheme, SolverConfig};
            let model = match &kernel {
                Some(k) => Model::Nonlocal(k),
                None => Model::Local,
            };
            let mut scfg = SolverConfig::new(model, self.solver.dt, self.solver.t_end);
            scfg.scheme = Scheme::ExplicitEm;
            let factor = explicit_stability_factor(&scfg, &potential, &grid);
            warnings.push(if factor > 2.0 {
                format!("explicit scheme stability factor {factor:.2} exceeds 2; expect blow-up")
            } else {
                format!("explicit scheme selected (stability factor {factor:.2})")
            });
        }
        Ok(ValidatedRun { grid, potential, kernel, checks, warnings })
    }
}
