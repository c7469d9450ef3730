//! Fixed-grid quadrature helpers shared by the solvers.

/// Weights of the composite Simpson rule on `n_nodes` equispaced nodes.
///
/// With an odd number of intervals the last three intervals use the 3/8
/// rule; two nodes fall back to the trapezoid rule.
pub fn uniform_weights(n_nodes: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n_nodes];
    match n_nodes {
        0 => {}
        1 => {}
        2 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        }
        3 => {
            w[0] = h / 3.0;
            w[1] = 4.0 * h / 3.0;
            w[2] = h / 3.0;
        }
        4 => {
            let c = 3.0 * h / 8.0;
            w[0] = c;
            w[1] = 3.0 * c;
            w[2] = 3.0 * c;
            w[3] = c;
        }
        _ => {
            let intervals = n_nodes - 1;
            let simpson_end = if intervals.is_multiple_of(2) {
                intervals
            } else {
                intervals - 3
            };
            for i in (0..simpson_end).step_by(2) {
                w[i] += h / 3.0;
                w[i + 1] += 4.0 * h / 3.0;
                w[i + 2] += h / 3.0;
            }
            if simpson_end < intervals {
                let c = 3.0 * h / 8.0;
                let i = simpson_end;
                w[i] += c;
                w[i + 1] += 3.0 * c;
                w[i + 2] += 3.0 * c;
                w[i + 3] += c;
            }
        }
    }
    w
}

/// Integral of equispaced samples with [`uniform_weights`].
pub fn integrate_uniform(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    uniform_weights(values.len(), h)
        .iter()
        .zip(values)
        .map(|(w, v)| w * v)
        .sum()
}

/// Composite trapezoid rule on equispaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

/// Integral of `f` over `[a, b]` by composite Simpson with step at most `max_step`.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, max_step: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut n = ((b - a) / max_step).ceil() as usize;
    n = n.max(2);
    if n % 2 == 1 {
        n += 1;
    }
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    acc * h / 3.0
}

/// Tail integrals `out[l] = ∫_{x_l}^{x_last} f` on an equispaced grid.
///
/// Each panel uses the four-point cubic rule (fourth order); the two end
/// panels use the shifted one-sided stencil.
pub fn reverse_cumulative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    let panel = |i: usize| -> f64 {
        // integral over [x_i, x_{i+1}]
        if n < 4 {
            return 0.5 * h * (values[i] + values[i + 1]);
        }
        if i == 0 {
            h * (9.0 * values[0] + 19.0 * values[1] - 5.0 * values[2] + values[3]) / 24.0
        } else if i + 2 >= n {
            h * (9.0 * values[i + 1] + 19.0 * values[i] - 5.0 * values[i - 1] + values[i - 2])
                / 24.0
        } else {
            h * (-values[i - 1] + 13.0 * values[i] + 13.0 * values[i + 1] - values[i + 2]) / 24.0
        }
    };
    for i in (0..n - 1).rev() {
        out[i] = out[i + 1] + panel(i);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_integrate_cubics_exactly() {
        for n in 2..12 {
            let h = 0.3;
            let xs: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
            let ys: Vec<f64> = xs.iter().map(|x| x * x * x - 2.0 * x + 1.0).collect();
            let b = xs[n - 1];
            let exact = b.powi(4) / 4.0 - b * b + b;
            let got = integrate_uniform(&ys, h);
            let tol = if n == 2 { 1.0 } else { 1e-12 };
            assert!((got - exact).abs() < tol, "n={n}: {got} vs {exact}");
        }
    }

    #[test]
    fn reverse_cumulative_is_fourth_order() {
        let max_err = |n: usize| {
            let h = 5.0 / n as f64;
            let xs: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
            let ys: Vec<f64> = xs.iter().map(|x| (-x).exp()).collect();
            let tails = reverse_cumulative(&ys, h);
            xs.iter()
                .zip(&tails)
                .map(|(x, t)| (t - ((-x).exp() - (-5.0f64).exp())).abs())
                .fold(0.0, f64::max)
        };
        let (coarse, fine) = (max_err(100), max_err(200));
        assert!(fine < 1e-8, "{fine}");
        let order = (coarse / fine).log2();
        assert!(order > 3.7, "observed order {order}");
    }

    #[test]
    fn simpson_on_sine() {
        let v = simpson(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-2);
        assert!((v - 2.0).abs() < 1e-8);
    }
}
