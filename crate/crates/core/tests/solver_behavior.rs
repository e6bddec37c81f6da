//! Dynamics-level behavior: dissipation, regularization and Galerkin
//! consistency, strong-order refinement and the energy-balance ledger.

use nlch_core::diagnostics::{ito_energy_residual, nonlocal_trace_rate};
use nlch_core::experiments::{
    refinement_study, yosida_study, InitialConfig, NoiseConfig, StudySetup,
};
use nlch_core::kernel::{build_kernel, MollifierFamily, MollifierSpec};
use nlch_core::noise::{NoiseSpec, Saturation};
use nlch_core::potential::Potential;
use nlch_core::solver::{run_path, smooth_random_field, Model, SolverConfig};
use nlch_core::spectral::{CosineBasis, Field, GridSpec};

fn setup() -> (GridSpec, CosineBasis, Potential) {
    let grid = GridSpec::unit(1, 64).unwrap();
    let basis = CosineBasis::new(&grid);
    let pot = Potential::quartic(1.0).unwrap();
    (grid, basis, pot)
}

#[test]
fn deterministic_energy_dissipates_both_models() {
    let (grid, basis, pot) = setup();
    let noise = NoiseSpec::deterministic(&grid);
    let phi0 = smooth_random_field(&basis, 0.1, 0.4, 12, 1.0, 3);
    let spec = MollifierSpec::new(MollifierFamily::GaussianR2, 0.2, 1).unwrap();
    let kernel = build_kernel(&spec, &grid).unwrap();
    for model in [Model::Nonlocal(&kernel), Model::Local] {
        let cfg = SolverConfig::new(model, 1e-4, 0.03);
        let rec = run_path(cfg, &basis, &pot, &noise, &phi0, 1, 0).unwrap();
        for w in rec.energy.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs()),
                "energy increased: {} -> {}",
                w[0],
                w[1]
            );
        }
        // It actually decays from this initial condition.
        assert!(rec.energy.last().unwrap() < &rec.energy[0]);
    }
}

#[test]
fn regularized_energy_dissipates_too() {
    let (grid, basis, pot) = setup();
    let noise = NoiseSpec::deterministic(&grid);
    let phi0 = smooth_random_field(&basis, 0.1, 0.4, 12, 1.0, 3);
    let spec = MollifierSpec::new(MollifierFamily::GaussianR2, 0.2, 1).unwrap();
    let kernel = build_kernel(&spec, &grid).unwrap();
    let mut cfg = SolverConfig::new(Model::Nonlocal(&kernel), 2e-4, 0.02);
    cfg.lambda = 0.1;
    let rec = run_path(cfg, &basis, &pot, &noise, &phi0, 1, 0).unwrap();
    for w in rec.energy.windows(2) {
        assert!(w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs()));
    }
}

fn small_study(grid_points: usize) -> StudySetup {
    StudySetup {
        grid: GridSpec::unit(1, grid_points).unwrap(),
        family: MollifierFamily::GaussianR2,
        potential: Potential::quartic(1.0).unwrap(),
        noise: NoiseConfig {
            modes: 4,
            b0: 0.3,
            decay: 1.0,
            saturation: Saturation::Tanh,
            mean_zero: true,
        },
        initial: InitialConfig { mean: 0.1, amplitude: 0.35, modes: 10, decay: 1.0, seed: 5 },
        dt: 2e-4,
        t_end: 0.02,
        lambda: 0.0,
        stabilization: None,
        record_every: 0,
        master_seed: 99,
        n_paths: 1,
        p: 4.0,
        workers: 2,
    }
}

#[test]
fn yosida_distance_shrinks_with_lambda() {
    let base = small_study(64);
    let rows = yosida_study(&base, 0.2, &[1e-1, 1e-2, 1e-3]).unwrap();
    assert!(rows[0].sup_h > rows[1].sup_h, "{rows:?}");
    assert!(rows[1].sup_h > rows[2].sup_h, "{rows:?}");
    assert!(rows[2].sup_h > 0.0);
}

#[test]
fn galerkin_mode_doubling_cauchy() {
    let mut base = small_study(64);
    base.initial.modes = 24;
    let out = refinement_study(&base, 0.2, &[4, 8, 16, 32], 0).unwrap();
    let diffs: Vec<f64> = out.mode_rows.iter().filter_map(|r| r.diff).collect();
    for w in diffs.windows(2) {
        assert!(w[1] <= w[0], "mode-doubling differences not decreasing: {diffs:?}");
    }
}

#[test]
fn strong_dt_refinement_in_euler_maruyama_band() {
    let mut base = small_study(64);
    base.dt = 1e-3;
    base.t_end = 0.05;
    let out = refinement_study(&base, 0.2, &[], 3).unwrap();
    let ratios: Vec<f64> = out.dt_rows.iter().filter_map(|r| r.ratio).collect();
    assert_eq!(ratios.len(), 2);
    for r in &ratios {
        assert!(
            (1.3..=2.2).contains(r),
            "dt-halving ratio {r} outside the strong-order band; all {ratios:?}"
        );
    }
}

#[test]
fn trace_rate_matches_brute_force_on_held_state() {
    // Frozen state: Q(t) accumulated by the ledger equals t times the rate,
    // and the rate itself matches an independent double-sum + quadrature.
    let (grid, basis, pot) = setup();
    let spec = MollifierSpec::new(MollifierFamily::GaussianR2, 0.2, 1).unwrap();
    let kernel = build_kernel(&spec, &grid).unwrap();
    let noise = NoiseSpec::new(&grid, 3, 0.5, 1.0, Saturation::One, true).unwrap();
    let phi = smooth_random_field(&basis, 0.1, 0.4, 10, 1.0, 7);
    let alpha = basis.to_spectral(&phi);
    let amps = noise.channel_amplitudes(&alpha);
    let fields: Vec<Field> = noise.channels().iter().map(|c| c.field.clone()).collect();
    let channel_b = nlch_core::diagnostics::channel_bilinear_forms(&kernel, &fields);
    let rate = nonlocal_trace_rate(&phi, &pot, 0.0, &fields, &channel_b, &amps);

    // Brute force: direct double sums for B(g_k, g_k), midpoint quadrature
    // for the curvature term.
    let quad = grid.cell_volume();
    let n = grid.points(0);
    let mut oracle = 0.0;
    for (k, ch) in noise.channels().iter().enumerate() {
        let g: Vec<f64> = ch.field.values.iter().map(|v| amps[k] * v).collect();
        let mut b = 0.0;
        for i in 0..n {
            for j in 0..n {
                let kv = kernel.sample_at(&[i as isize - j as isize]);
                b += kv * (g[i] - g[j]) * (g[i] - g[j]);
            }
        }
        b *= quad * quad;
        let curv: f64 = quad
            * phi
                .values
                .iter()
                .zip(&g)
                .map(|(&p, &gv)| pot.ddf(p) * gv * gv)
                .sum::<f64>();
        oracle += 0.5 * b + curv;
    }
    assert!(
        (rate - oracle).abs() <= 1e-8 * (1.0 + oracle.abs()),
        "trace rate {rate} vs oracle {oracle}"
    );
}

#[test]
fn residual_ledger_zero_at_start_and_deterministic_defect_shrinks() {
    let (grid, basis, pot) = setup();
    let spec = MollifierSpec::new(MollifierFamily::GaussianR2, 0.2, 1).unwrap();
    let kernel = build_kernel(&spec, &grid).unwrap();
    let noise = NoiseSpec::deterministic(&grid);
    let phi0 = smooth_random_field(&basis, 0.1, 0.3, 8, 1.0, 11);
    let mut max_r = Vec::new();
    for level in 0..2 {
        let mut cfg = SolverConfig::new(Model::Nonlocal(&kernel), 1e-3 / (1 << level) as f64, 0.02);
        cfg.track_ito = true;
        let rec = run_path(cfg, &basis, &pot, &noise, &phi0, 1, 0).unwrap();
        let r = ito_energy_residual(&rec).unwrap();
        assert_eq!(r[0], 0.0);
        max_r.push(r.iter().map(|v| v.abs()).fold(0.0, f64::max));
    }
    // G = 0: the residual is the dissipation defect and shrinks with dt.
    assert!(max_r[1] < max_r[0], "defect did not shrink: {max_r:?}");
}

#[test]
fn two_dimensional_dynamics_conserve_mass_and_dissipate() {
    let grid = GridSpec::unit(2, 24).unwrap();
    let basis = CosineBasis::new(&grid);
    let pot = Potential::quartic(1.0).unwrap();
    let spec = MollifierSpec::new(MollifierFamily::GaussianR2, 0.25, 2).unwrap();
    let kernel = build_kernel(&spec, &grid).unwrap();
    let phi0 = smooth_random_field(&basis, 0.2, 0.3, 6, 1.0, 13);

    // Deterministic: energy dissipates in 2D for both models.
    let det = NoiseSpec::deterministic(&grid);
    for model in [Model::Nonlocal(&kernel), Model::Local] {
        let cfg = SolverConfig::new(model, 2e-4, 0.01);
        let rec = run_path(cfg, &basis, &pot, &det, &phi0, 1, 0).unwrap();
        for w in rec.energy.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs()));
        }
    }

    // Stochastic with mean-zero channels: mass exact, state finite.
    let noise = NoiseSpec::new(&grid, 5, 0.4, 1.0, Saturation::Tanh, true).unwrap();
    let cfg = SolverConfig::new(Model::Nonlocal(&kernel), 2e-4, 0.01);
    let rec = run_path(cfg, &basis, &pot, &noise, &phi0, 3, 1).unwrap();
    let m0 = rec.mass[0];
    for m in &rec.mass {
        assert!((m - m0).abs() <= 1e-13 * (1.0 + m0.abs()));
    }
    assert!(rec.final_field.is_finite());

    // Galerkin cutoff in 2D: retained block only.
    let mut cut = SolverConfig::new(Model::Nonlocal(&kernel), 2e-4, 0.005);
    cut.modes_cutoff = Some(6);
    let rec = run_path(cut, &basis, &pot, &noise, &phi0, 3, 1).unwrap();
    let alpha = basis.to_spectral(&rec.final_field);
    let n1 = grid.points(1);
    for j0 in 0..grid.points(0) {
        for j1 in 0..n1 {
            if j0 >= 6 || j1 >= 6 {
                assert!(
                    alpha.coeffs[j0 * n1 + j1].abs() < 1e-12,
                    "mode ({j0},{j1}) escaped the cutoff"
                );
            }
        }
    }
}

#[test]
fn local_energy_spectral_matches_quadrature() {
    // E_L = ||grad phi||^2/2 + int F(phi): the gradient term is computed
    // spectrally; the oracle samples the sine-series derivative at the
    // midpoints and integrates by quadrature.
    let grid = GridSpec::unit(1, 128).unwrap();
    let basis = CosineBasis::new(&grid);
    let pot = Potential::quartic(1.0).unwrap();
    let phi = smooth_random_field(&basis, 0.2, 0.5, 20, 1.0, 17);
    let fast = nlch_core::diagnostics::local_energy(&basis, &phi, &pot, 0.0);

    let alpha = basis.to_spectral(&phi);
    let n = grid.points(0);
    let (l, h) = (grid.extent(0), grid.spacing(0));
    let mut grad_sq = 0.0;
    for i in 0..n {
        let x = grid.node(0, i);
        let mut g = 0.0;
        for j in 1..n {
            let k = std::f64::consts::PI * j as f64 / l;
            g -= alpha.coeffs[j] * k * (2.0 / l).sqrt() * (k * x).sin();
        }
        grad_sq += h * g * g;
    }
    let oracle =
        0.5 * grad_sq + h * phi.values.iter().map(|&v| pot.f(v)).sum::<f64>();
    assert!(
        (fast - oracle).abs() <= 1e-10 * (1.0 + oracle.abs()),
        "spectral {fast} vs quadrature {oracle}"
    );
}

#[test]
fn annular_kernel_dynamics_dissipate() {
    let grid = GridSpec::unit(1, 64).unwrap();
    let basis = CosineBasis::new(&grid);
    let pot = Potential::quartic(1.0).unwrap();
    let spec = MollifierSpec::new(MollifierFamily::Annular, 0.2, 1).unwrap();
    let kernel = build_kernel(&spec, &grid).unwrap();
    let det = NoiseSpec::deterministic(&grid);
    let phi0 = smooth_random_field(&basis, 0.1, 0.4, 10, 1.0, 21);
    let cfg = SolverConfig::new(Model::Nonlocal(&kernel), 1e-4, 0.02);
    let rec = run_path(cfg, &basis, &pot, &det, &phi0, 1, 0).unwrap();
    for w in rec.energy.windows(2) {
        assert!(w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs()));
    }
}

#[test]
fn scheme_gap_is_first_order_in_dt() {
    // The explicit and IMEX updates differ by the implicit-shift splitting,
    // an O(dt) perturbation: the gap between the two trajectories halves
    // with dt.
    use nlch_core::solver::Scheme;
    let grid = GridSpec::unit(1, 16).unwrap();
    let basis = CosineBasis::new(&grid);
    let pot = Potential::quartic(1.0).unwrap();
    let noise = NoiseSpec::new(&grid, 2, 0.3, 1.0, Saturation::Tanh, true).unwrap();
    let phi0 = smooth_random_field(&basis, 0.1, 0.2, 4, 1.0, 9);
    let t_end = 4e-5;
    let gap_at = |dt: f64, refine: u64| {
        let mut imex = SolverConfig::new(Model::Local, dt, t_end);
        imex.scheme = Scheme::ImexEm;
        imex.noise_refine = refine;
        let mut expl = SolverConfig::new(Model::Local, dt, t_end);
        expl.scheme = Scheme::ExplicitEm;
        expl.noise_refine = refine;
        let ra = run_path(imex, &basis, &pot, &noise, &phi0, 5, 0).unwrap();
        let rb = run_path(expl, &basis, &pot, &noise, &phi0, 5, 0).unwrap();
        nlch_core::spectral::norm_h(&ra.final_field.add_scaled(&rb.final_field, -1.0))
    };
    let coarse = gap_at(2e-7, 2);
    let fine = gap_at(1e-7, 1);
    let ratio = coarse / fine;
    assert!(
        (1.5..=2.5).contains(&ratio),
        "scheme gap not first order: {coarse:.3e} / {fine:.3e} = {ratio:.3}"
    );
}

#[test]
fn missing_ledger_is_an_error() {
    let (grid, basis, pot) = setup();
    let noise = NoiseSpec::deterministic(&grid);
    let phi0 = Field::constant(grid, 0.3);
    let cfg = SolverConfig::new(Model::Local, 1e-3, 0.01);
    let rec = run_path(cfg, &basis, &pot, &noise, &phi0, 1, 0).unwrap();
    assert!(ito_energy_residual(&rec).is_err());
}
