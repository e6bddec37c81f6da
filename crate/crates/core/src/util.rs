//! Small numerical helpers shared across modules.

/// 7-point Gauss-Legendre nodes (positive half) and weights on [-1, 1].
const GL7_X: [f64; 3] = [
    0.4058451513773972,
    0.7415311855993944,
    0.9491079123427585,
];
const GL7_W0: f64 = 0.4179591836734694;
const GL7_W: [f64; 3] = [
    0.3818300505051189,
    0.2797053914892767,
    0.1294849661688697,
];

fn gauss7(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = GL7_W0 * f(c);
    for (&x, &w) in GL7_X.iter().zip(&GL7_W) {
        s += w * (f(c + h * x) + f(c - h * x));
    }
    s * h
}

fn adapt(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = gauss7(f, a, m);
    let right = gauss7(f, m, b);
    let refined = left + right;
    if depth == 0 || (refined - whole).abs() <= tol * (1.0 + refined.abs()) {
        refined
    } else {
        adapt(f, a, m, left, 0.5 * tol, depth - 1) + adapt(f, m, b, right, 0.5 * tol, depth - 1)
    }
}

/// Adaptive Gauss quadrature of `f` over `[a, b]` with interval halving.
pub fn adaptive_quad(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    adapt(f, a, b, gauss7(f, a, b), tol, 40)
}

/// Apply `f` to `0..n` on up to `workers` threads with round-robin index
/// assignment; results come back in index order, so the output is identical
/// for any worker count.
pub fn parallel_map<T: Send>(n: usize, workers: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let w = workers.max(1).min(n.max(1));
    if w <= 1 {
        return (0..n).map(f).collect();
    }
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(w);
        for t in 0..w {
            let f = &f;
            handles.push(scope.spawn(move || {
                let mut part = Vec::new();
                let mut i = t;
                while i < n {
                    part.push((i, f(i)));
                    i += w;
                }
                part
            }));
        }
        for h in handles {
            for (i, v) in h.join().expect("worker panicked") {
                slots[i] = Some(v);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("all indices filled")).collect()
}

/// Least-squares slope of `ln y` against `ln x`, with its standard error.
/// Inputs must be positive.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points for a slope");
    let lx: Vec<f64> = xs.iter().map(|&x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|&y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    if lx.len() == 2 {
        return (slope, 0.0);
    }
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(&x, &y)| {
            let r = y - my - slope * (x - mx);
            r * r
        })
        .sum();
    let se = (ss_res / (n - 2.0) / sxx).sqrt();
    (slope, se)
}
