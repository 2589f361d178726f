//! Composite Gauss–Legendre quadrature on graded panels.

use std::sync::OnceLock;

const ORDER: usize = 20;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(ORDER))
}

/// Integrates `f` over consecutive panels `[b[i], b[i+1]]` with the 20-point rule.
pub fn integrate_panels<F: Fn(f64) -> f64>(f: F, breakpoints: &[f64]) -> f64 {
    let (nodes, weights) = rule();
    let mut total = 0.0;
    for w in breakpoints.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut panel = 0.0;
        for (x, wt) in nodes.iter().zip(weights) {
            panel += wt * f(mid + half * x);
        }
        total += half * panel;
    }
    total
}

/// Breakpoints on `[0, end]` that resolve a feature of width `scale` at the
/// origin (geometric refinement) and oscillations with panel width at most
/// `max_width`. Every value in `extra` is inserted as an additional breakpoint.
pub fn graded_breakpoints(end: f64, scale: f64, max_width: f64, extra: &[f64]) -> Vec<f64> {
    let mut points = vec![0.0];
    let mut x = 0.0;
    if scale > 0.0 {
        let mut width = scale.min(max_width);
        while x + width < end && width < max_width {
            x += width;
            points.push(x);
            width = (2.0 * width).min(max_width);
        }
    }
    let remaining = end - x;
    let panels = (remaining / max_width).ceil().max(1.0) as usize;
    for i in 1..=panels {
        points.push(x + remaining * i as f64 / panels as f64);
    }
    for &e in extra {
        if e > 0.0 && e < end {
            points.push(e);
        }
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * end.max(1.0));
    points
}
