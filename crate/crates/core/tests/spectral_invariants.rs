//! Transform-level invariants: Parseval, inverse pairs, norm equivalence and
//! quadrature cross-checks of the spectral norms.

use nlch_core::spectral::{
    inner_h, mean, norm_h, CosineBasis, Field, GridSpec, SpectralField,
};

fn seeded_field(grid: &GridSpec, seed: u64) -> Field {
    Field::new(
        grid.clone(),
        (0..grid.total_points())
            .map(|i| nlch_core::noise::standard_normal(seed, 0, i as u64, 0))
            .collect(),
    )
}

#[test]
fn parseval_on_random_fields() {
    for (dim, n) in [(1usize, 96usize), (2, 20)] {
        let grid = GridSpec::unit(dim, n).unwrap();
        let basis = CosineBasis::new(&grid);
        for seed in 0..100u64 {
            let f = seeded_field(&grid, seed + 1000 * dim as u64);
            let u = basis.to_spectral(&f);
            let quad_norm = norm_h(&f);
            let spec_norm = u.norm_h();
            assert!(
                (quad_norm - spec_norm).abs() <= 1e-12 * quad_norm,
                "Parseval violated: {quad_norm} vs {spec_norm} (seed {seed}, dim {dim})"
            );
        }
    }
}

#[test]
fn laplacian_and_inverse_compose_to_identity() {
    let grid = GridSpec::unit(2, 24).unwrap();
    let basis = CosineBasis::new(&grid);
    for seed in 0..20u64 {
        let mut f = seeded_field(&grid, 50 + seed);
        let m = mean(&f);
        f = f.map(|v| v - m);
        let u = basis.to_spectral(&f);
        let au = basis.laplacian(&u);
        let minus_au = SpectralField {
            grid: au.grid.clone(),
            coeffs: au.coeffs.iter().map(|c| -c).collect(),
        };
        let back = basis.inverse_neumann_laplacian(&minus_au, 1e-8).unwrap();
        let scale = u.norm_h();
        for (a, b) in back.coeffs.iter().zip(&u.coeffs) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn eigenvalues_zero_at_origin_and_monotone_per_axis() {
    let grid = GridSpec::new(&[16, 24], &[1.0, 2.0]).unwrap();
    let eig = nlch_core::spectral::ModeEigenvalues::new(&grid);
    assert_eq!(eig.ell[0], 0.0);
    for (i, &e) in eig.ell.iter().enumerate() {
        if i != 0 {
            assert!(e > 0.0);
        }
    }
    let (n0, n1) = (grid.points(0), grid.points(1));
    for j0 in 0..n0 {
        for j1 in 0..n1 {
            if j0 + 1 < n0 {
                assert!(eig.ell[(j0 + 1) * n1 + j1] >= eig.ell[j0 * n1 + j1]);
            }
            if j1 + 1 < n1 {
                assert!(eig.ell[j0 * n1 + j1 + 1] >= eig.ell[j0 * n1 + j1]);
            }
        }
    }
}

#[test]
fn vstar_dominated_by_h_norm() {
    let grid = GridSpec::unit(1, 64).unwrap();
    let basis = CosineBasis::new(&grid);
    let ell1 = basis.eigenvalues().min_positive();
    let bound = (1.0 / ell1.sqrt()).max(grid.volume().sqrt());
    for seed in 0..100u64 {
        let f = seeded_field(&grid, 400 + seed);
        assert!(basis.norm_vstar(&f) <= bound * norm_h(&f) * (1.0 + 1e-12));
    }
}

#[test]
fn vstar_matches_gradient_quadrature_oracle() {
    // For mean-zero f, ||f||_{V*} = ||grad N f||_H. The oracle evaluates the
    // gradient of N f as a sine series at the midpoints and integrates by
    // quadrature, independently of the spectral shortcut.
    let grid = GridSpec::unit(1, 128).unwrap();
    let basis = CosineBasis::new(&grid);
    let mut f = seeded_field(&grid, 7);
    let m = mean(&f);
    f = f.map(|v| v - m);
    let u = basis.to_spectral(&f);
    let nf = basis.inverse_neumann_laplacian(&u, 1e-8).unwrap();
    let n = grid.points(0);
    let l = grid.extent(0);
    let h = grid.spacing(0);
    // d/dx of sqrt(c_j/L) cos(j pi x / L) = -(j pi / L) sqrt(c_j/L) sin(...)
    let mut grad_sq = 0.0;
    for i in 0..n {
        let x = grid.node(0, i);
        let mut g = 0.0;
        for j in 1..n {
            let k = std::f64::consts::PI * j as f64 / l;
            g -= nf.coeffs[j] * k * (2.0 / l).sqrt() * (k * x).sin();
        }
        grad_sq += h * g * g;
    }
    let oracle = grad_sq.sqrt();
    let fast = basis.norm_vstar(&f);
    assert!(
        (fast - oracle).abs() <= 1e-10 * oracle,
        "spectral {fast} vs quadrature {oracle}"
    );
}

#[test]
fn norm_h_closed_form_by_quadrature() {
    // ||cos(pi x)||^2 = int_0^1 cos^2 = 1/2, checked against a fine
    // independent Riemann sum rather than the grid quadrature.
    let mut acc = 0.0;
    let m = 200_000;
    for i in 0..m {
        let x = (i as f64 + 0.5) / m as f64;
        acc += (std::f64::consts::PI * x).cos().powi(2) / m as f64;
    }
    let grid = GridSpec::unit(1, 256).unwrap();
    let f = Field::from_fn(grid, |x| (std::f64::consts::PI * x[0]).cos());
    assert!((norm_h(&f) - acc.sqrt()).abs() < 1e-10);
    assert!((norm_h(&f) - 1.0 / 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn inner_product_bilinearity() {
    let grid = GridSpec::unit(1, 64).unwrap();
    let f = seeded_field(&grid, 1);
    let g = seeded_field(&grid, 2);
    let h = seeded_field(&grid, 3);
    let lhs = inner_h(&f.add_scaled(&g, 2.0), &h);
    let rhs = inner_h(&f, &h) + 2.0 * inner_h(&g, &h);
    assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
}
