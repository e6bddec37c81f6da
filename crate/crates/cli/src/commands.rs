//! Subcommand implementations. Each run validates the configuration, emits
//! a starting manifest, writes its CSVs atomically and finalizes the
//! manifest with checksums.

use std::path::{Path, PathBuf};

use serde_json::json;
use thiserror::Error;

use nlch_core::diagnostics::ito_energy_residual;
use nlch_core::experiments::{
    cdep_study, rate_study, yosida_study, ExperimentError, RateStudyConfig,
};
use nlch_core::kernel::{
    build_kernel, consistency_error, MollifierFamily, MollifierSpec, CONSISTENCY_INTERIOR_MARGIN,
};
use nlch_core::potential::Potential;
use nlch_core::solver::{
    perturbation_field, run_ensemble, smooth_random_field, spinodal_field, Model, Scheme,
    SolverConfig, SolverError,
};
use nlch_core::spectral::{mean, CosineBasis, Field};

use crate::config::{
    parse_config, render_config, ConfigError, InitialKind, ModelKind, RunConfig, SchemeKind,
};
use crate::csvio::{fmt_f64, write_atomic, CsvTable};
use crate::manifest::Manifest;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("acceptance band failed: {0}")]
    Band(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("selftest failed: {0}")]
    Selftest(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Band(_) => 4,
            CliError::Io(_) | CliError::Selftest(_) => 1,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Solver(SolverError::NonFinite { step }) => {
                CliError::Numeric(format!("solution left the finite range at step {step}"))
            }
            ExperimentError::Kernel(k) => CliError::Config(ConfigError::Validation {
                assumption: "kernel-resolution",
                detail: k.to_string(),
            }),
            ExperimentError::Noise(n) => CliError::Config(ConfigError::Validation {
                assumption: "noise-amplitude-decay",
                detail: n.to_string(),
            }),
            ExperimentError::NonMeanZeroDirection(m) => {
                CliError::Config(ConfigError::Validation {
                    assumption: "direction-mean-zero",
                    detail: format!("perturbation direction has mean {m:.3e}"),
                })
            }
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::NonFinite { step } => {
                CliError::Numeric(format!("solution left the finite range at step {step}"))
            }
            SolverError::Potential(p) => CliError::Numeric(p.to_string()),
        }
    }
}

/// Command-line overrides applied on top of the parsed configuration.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub paths: Option<usize>,
}

pub fn load_config(path: Option<&Path>, ov: &Overrides) -> Result<RunConfig, CliError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = ov.seed {
        cfg.master_seed = seed;
        cfg.noise.seed = None;
    }
    if let Some(dir) = &ov.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(paths) = ov.paths {
        cfg.experiment.paths = paths;
    }
    Ok(cfg)
}

fn initial_field(cfg: &RunConfig, basis: &CosineBasis) -> Field {
    match cfg.solver.initial_kind {
        InitialKind::Smooth => smooth_random_field(
            basis,
            cfg.solver.initial_mean,
            cfg.solver.initial_amplitude,
            cfg.solver.initial_modes,
            cfg.solver.initial_decay,
            cfg.solver.initial_seed,
        ),
        InitialKind::Spinodal => spinodal_field(
            basis.grid(),
            cfg.solver.initial_mean,
            cfg.solver.initial_amplitude,
            cfg.solver.initial_seed,
        ),
    }
}

pub fn simulate(cfg: &RunConfig, workers: usize, print_only: bool) -> Result<(), CliError> {
    if print_only {
        print!("{}", render_config(cfg));
        return Ok(());
    }
    let needs_kernel = cfg.solver.model == ModelKind::Nonlocal;
    let validated = cfg.validate(needs_kernel)?;
    for w in &validated.warnings {
        eprintln!("warning: {w}");
    }
    let mut manifest = Manifest::start(
        &cfg.out_dir,
        "simulate",
        &render_config(cfg),
        cfg.master_seed,
        &validated.checks,
        &validated.warnings,
    )?;

    let basis = CosineBasis::new(&validated.grid);
    let noise = cfg
        .noise_config()
        .build(&validated.grid)
        .map_err(|e| ConfigError::Validation {
            assumption: "noise-amplitude-decay",
            detail: e.to_string(),
        })?;
    let phi0 = initial_field(cfg, &basis);
    let model = match (&cfg.solver.model, &validated.kernel) {
        (ModelKind::Nonlocal, Some(k)) => Model::Nonlocal(k),
        _ => Model::Local,
    };
    let mut scfg = SolverConfig::new(model, cfg.solver.dt, cfg.solver.t_end);
    scfg.lambda = cfg.solver.lambda;
    scfg.scheme = match cfg.solver.scheme {
        SchemeKind::ImexEm => Scheme::ImexEm,
        SchemeKind::ExplicitEm => Scheme::ExplicitEm,
    };
    scfg.stabilization = cfg.solver.stabilization;
    scfg.record_every = cfg.solver.record_every;
    scfg.modes_cutoff = cfg.solver.modes_cutoff;
    scfg.track_ito = cfg.solver.track_ito;

    let (records, stats) = run_ensemble(
        scfg,
        &basis,
        &validated.potential,
        &noise,
        &phi0,
        cfg.noise_seed(),
        cfg.experiment.paths.max(1),
        workers,
        cfg.experiment.p,
    )?;

    for (i, rec) in records.iter().enumerate() {
        let residual = rec
            .ledger
            .as_ref()
            .map(|_| ito_energy_residual(rec).expect("ledger present"));
        let mut table = CsvTable::new(&[
            "t",
            "mass",
            "energy",
            "h_norm",
            "v_seminorm",
            "vstar_norm",
            "grad_mu_sq_cum",
            "ito_residual",
        ]);
        for r in 0..rec.len() {
            table.push_row(vec![
                fmt_f64(rec.times[r]),
                fmt_f64(rec.mass[r]),
                fmt_f64(rec.energy[r]),
                fmt_f64(rec.h_norm[r]),
                fmt_f64(rec.v_seminorm[r]),
                fmt_f64(rec.vstar_norm[r]),
                fmt_f64(rec.grad_mu_sq_integral[r]),
                fmt_f64(residual.as_ref().map_or(f64::NAN, |v| v[r])),
            ]);
        }
        let path = cfg.out_dir.join(format!("timeseries_{i:03}.csv"));
        let bytes = table.render().into_bytes();
        write_atomic(&path, &bytes)?;
        manifest.add_output(&path, &bytes);
    }

    manifest.set_results(json!({
        "n_paths": stats.n_paths,
        "p": stats.p,
        "sup_h": { "estimate": stats.sup_h.0, "stderr": stats.sup_h.1 },
        "int_grad_phi": { "estimate": stats.int_grad_phi.0, "stderr": stats.int_grad_phi.1 },
        "int_grad_mu": { "estimate": stats.int_grad_mu.0, "stderr": stats.int_grad_mu.1 },
        "final_mass": mean(&records[0].final_field),
    }));
    manifest.finish()?;
    Ok(())
}

/// Acceptance band for the fitted nonlocal-to-local rate.
pub const RATE_SLOPE_BAND: (f64, f64) = (0.35, 1.0);

pub fn rate_study_cmd(cfg: &RunConfig, workers: usize, strict: bool) -> Result<(), CliError> {
    if cfg.noise.modes > 0 && !cfg.noise.mean_zero {
        return Err(ConfigError::Validation {
            assumption: "noise-mean-zero",
            detail: "the rate study requires mass-conserving noise channels".into(),
        }
        .into());
    }
    let validated = cfg.validate(false)?;
    let mut manifest = Manifest::start(
        &cfg.out_dir,
        "rate-study",
        &render_config(cfg),
        cfg.master_seed,
        &validated.checks,
        &validated.warnings,
    )?;
    let mut setup = cfg.study_setup()?;
    setup.workers = workers;
    let study = RateStudyConfig {
        base: setup,
        epsilons: cfg.experiment.epsilons.clone(),
        initial_rule: cfg.initial_rule(),
    };
    let out = rate_study(&study)?;

    let mut table = CsvTable::new(&[
        "epsilon",
        "err_vstar",
        "err_vstar_se",
        "err_l2h",
        "err_l2h_se",
        "err",
        "stderr",
        "excluded",
    ]);
    for row in &out.rows {
        table.push_row(vec![
            fmt_f64(row.epsilon),
            fmt_f64(row.err_vstar),
            fmt_f64(row.err_vstar_se),
            fmt_f64(row.err_l2h),
            fmt_f64(row.err_l2h_se),
            fmt_f64(row.err),
            fmt_f64(row.stderr),
            row.excluded.to_string(),
        ]);
    }
    let path = cfg.out_dir.join("rate.csv");
    let bytes = table.render().into_bytes();
    write_atomic(&path, &bytes)?;
    manifest.add_output(&path, &bytes);

    let in_band = out
        .slope
        .map(|s| s >= RATE_SLOPE_BAND.0 && s <= RATE_SLOPE_BAND.1)
        .unwrap_or(false);
    let verdict = out.monotone && in_band;
    manifest.set_results(json!({
        "slope": out.slope,
        "slope_stderr": out.slope_stderr,
        "monotone": out.monotone,
        "floor": out.floor,
        "h3_proxy": out.h3_proxy,
        "band": [RATE_SLOPE_BAND.0, RATE_SLOPE_BAND.1],
        "verdict": if verdict { "pass" } else { "fail" },
    }));
    manifest.finish()?;
    println!(
        "rate study: slope = {:?} (band [{}, {}]), monotone = {}",
        out.slope, RATE_SLOPE_BAND.0, RATE_SLOPE_BAND.1, out.monotone
    );
    if strict && !verdict {
        return Err(CliError::Band(format!(
            "slope {:?} / monotone {} outside the acceptance band",
            out.slope, out.monotone
        )));
    }
    Ok(())
}

pub fn cdep_study_cmd(cfg: &RunConfig, workers: usize, strict: bool) -> Result<(), CliError> {
    let validated = cfg.validate(true)?;
    let mut manifest = Manifest::start(
        &cfg.out_dir,
        "cdep-study",
        &render_config(cfg),
        cfg.master_seed,
        &validated.checks,
        &validated.warnings,
    )?;
    let mut setup = cfg.study_setup()?;
    setup.workers = workers;
    let basis = CosineBasis::new(&setup.grid);
    let direction = perturbation_field(
        &basis,
        1.0,
        cfg.experiment.direction_modes,
        cfg.solver.initial_decay,
        cfg.experiment.direction_seed,
    );
    let out = cdep_study(&setup, cfg.kernel.epsilon, &cfg.experiment.deltas, &direction)?;

    let mut table = CsvTable::new(&["delta", "rho", "stderr"]);
    for row in &out.rows {
        table.push_row(vec![fmt_f64(row.delta), fmt_f64(row.rho), fmt_f64(row.stderr)]);
    }
    let path = cfg.out_dir.join("cdep.csv");
    let bytes = table.render().into_bytes();
    write_atomic(&path, &bytes)?;
    manifest.add_output(&path, &bytes);

    let verdict = out.spread < 2.0;
    manifest.set_results(json!({
        "spread": out.spread,
        "verdict": if verdict { "pass" } else { "fail" },
    }));
    manifest.finish()?;
    println!("cdep study: amplification spread = {:.4} (needs < 2)", out.spread);
    if strict && !verdict {
        return Err(CliError::Band(format!("amplification spread {} >= 2", out.spread)));
    }
    Ok(())
}

pub fn yosida_study_cmd(cfg: &RunConfig, workers: usize, strict: bool) -> Result<(), CliError> {
    let validated = cfg.validate(true)?;
    let mut manifest = Manifest::start(
        &cfg.out_dir,
        "yosida-study",
        &render_config(cfg),
        cfg.master_seed,
        &validated.checks,
        &validated.warnings,
    )?;
    let mut setup = cfg.study_setup()?;
    setup.workers = workers;
    let mut lambdas = cfg.experiment.lambdas.clone();
    lambdas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let rows = yosida_study(&setup, cfg.kernel.epsilon, &lambdas)?;

    let mut table = CsvTable::new(&["lambda", "sup_h_distance"]);
    for row in &rows {
        table.push_row(vec![fmt_f64(row.lambda), fmt_f64(row.sup_h)]);
    }
    let path = cfg.out_dir.join("yosida.csv");
    let bytes = table.render().into_bytes();
    write_atomic(&path, &bytes)?;
    manifest.add_output(&path, &bytes);

    let verdict = rows.windows(2).all(|w| w[1].sup_h < w[0].sup_h);
    manifest.set_results(json!({
        "monotone": verdict,
        "verdict": if verdict { "pass" } else { "fail" },
    }));
    manifest.finish()?;
    println!("yosida study: distances monotone = {verdict}");
    if strict && !verdict {
        return Err(CliError::Band("regularization distances not monotone".into()));
    }
    Ok(())
}

pub fn kernel_check_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let validated = cfg.validate(false)?;
    let mut manifest = Manifest::start(
        &cfg.out_dir,
        "kernel-check",
        &render_config(cfg),
        cfg.master_seed,
        &validated.checks,
        &validated.warnings,
    )?;
    let dim_n = cfg.kernel.dim_n.unwrap_or(validated.grid.dim());
    let mut table = CsvTable::new(&[
        "family",
        "epsilon",
        "n",
        "normalization_residual",
        "consistency_error",
        "min_a",
    ]);
    let family_name = match cfg.kernel.family {
        MollifierFamily::GaussianR2 => "gaussian_r2",
        MollifierFamily::Annular => "annular",
    };
    for &eps in &cfg.experiment.epsilons {
        let spec = MollifierSpec::new(cfg.kernel.family, eps, dim_n)
            .map_err(|e| ConfigError::Validation {
                assumption: "kernel-family",
                detail: e.to_string(),
            })?;
        let kernel = build_kernel(&spec, &validated.grid).map_err(|e| {
            ConfigError::Validation { assumption: "kernel-resolution", detail: e.to_string() }
        })?;
        table.push_row(vec![
            family_name.to_string(),
            fmt_f64(eps),
            dim_n.to_string(),
            fmt_f64(spec.normalization_residual()),
            fmt_f64(consistency_error(&kernel, CONSISTENCY_INTERIOR_MARGIN)),
            fmt_f64(kernel.min_a()),
        ]);
    }
    let path = cfg.out_dir.join("kernel_check.csv");
    let bytes = table.render().into_bytes();
    write_atomic(&path, &bytes)?;
    manifest.add_output(&path, &bytes);
    manifest.set_results(json!({ "rows": cfg.experiment.epsilons.len() }));
    manifest.finish()?;
    Ok(())
}

/// Quick structural checks of the closed-form examples; one line per check.
pub fn selftest() -> Result<(), CliError> {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        println!("{} {name}", if ok { "pass" } else { "FAIL" });
        if !ok {
            failures.push(name.to_string());
        }
    };

    use nlch_core::spectral::{norm_h, GridSpec};
    let grid = GridSpec::unit(1, 64).unwrap();
    let basis = CosineBasis::new(&grid);
    let c = Field::constant(grid.clone(), 3.0);
    let u = basis.to_spectral(&c);
    check("constant field projects to mode zero", (u.coeffs[0] - 3.0).abs() < 1e-12);

    let f = Field::from_fn(grid.clone(), |x| (std::f64::consts::PI * x[0]).cos());
    let rt = basis.to_physical(&basis.to_spectral(&f));
    let err = f
        .values
        .iter()
        .zip(&rt.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check("transform round trip", err < 1e-12);
    check(
        "cosine norm closed form",
        (norm_h(&f) - 1.0 / 2f64.sqrt()).abs() < 1e-12,
    );

    let spec = MollifierSpec::new(MollifierFamily::GaussianR2, 0.2, 1).unwrap();
    let kernel = build_kernel(&spec, &grid).unwrap();
    let lc = nlch_core::kernel::nonlocal_op(&kernel, &c);
    let worst = lc.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    check("nonlocal operator annihilates constants", worst < 1e-8 * kernel.max_a());
    check(
        "mollifier normalization",
        spec.normalization_residual() < 1e-6,
    );

    let pot = Potential::quartic(1.0).unwrap();
    check("double well minima", pot.f(1.0).abs() < 1e-15 && pot.f(-1.0).abs() < 1e-15);
    check("critical point at origin", pot.df(0.0) == 0.0);
    let reg = pot.regularized(0.5);
    check("resolvent fixes the origin", reg.resolvent(0.0).unwrap() == 0.0);

    let a = nlch_core::noise::standard_normal(1, 2, 3, 4);
    let b = nlch_core::noise::standard_normal(1, 2, 3, 4);
    check("keyed draws deterministic", a == b);

    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Selftest(failures.join(", ")))
    }
}
