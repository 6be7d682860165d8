//! Derivative-free simplex minimization (Nelder-Mead).
//!
//! Small, deterministic, and allocation-light; used by the Bell-threshold
//! optimizer with grid-seeded restarts.

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the simplex diameter.
    pub x_tol: f64,
    /// Convergence threshold on the function-value spread.
    pub f_tol: f64,
    /// Initial simplex step per coordinate.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iterations: 4000,
            x_tol: 1e-10,
            f_tol: 1e-12,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f_min: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimize `f` starting from `x0`.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadResult {
    let n = x0.len();
    assert!(n >= 1, "need at least one dimension");
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut evals = 0usize;
    let mut eval = |x: &[f64]| {
        evals += 1;
        f(x)
    };

    // Initial simplex: x0 plus one step along each axis.
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += opts.initial_step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();

    let mut iterations = 0usize;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        // Order the simplex by value.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
        let simplex_sorted: Vec<Vec<f64>> = order.iter().map(|&i| simplex[i].clone()).collect();
        let values_sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        simplex = simplex_sorted;
        values = values_sorted;

        let spread = values[n] - values[0];
        let diameter = (1..=n)
            .map(|i| {
                simplex[i]
                    .iter()
                    .zip(simplex[0].iter())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0_f64, f64::max)
            })
            .fold(0.0_f64, f64::max);
        if spread <= opts.f_tol && diameter <= opts.x_tol {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for v in simplex.iter().take(n) {
            for (c, x) in centroid.iter_mut().zip(v.iter()) {
                *c += x / n as f64;
            }
        }

        let worst = simplex[n].clone();
        let reflected: Vec<f64> = centroid
            .iter()
            .zip(worst.iter())
            .map(|(c, w)| c + alpha * (c - w))
            .collect();
        let f_reflected = eval(&reflected);

        if f_reflected < values[0] {
            let expanded: Vec<f64> = centroid
                .iter()
                .zip(worst.iter())
                .map(|(c, w)| c + gamma * (c - w))
                .collect();
            let f_expanded = eval(&expanded);
            if f_expanded < f_reflected {
                simplex[n] = expanded;
                values[n] = f_expanded;
            } else {
                simplex[n] = reflected;
                values[n] = f_reflected;
            }
            continue;
        }
        if f_reflected < values[n - 1] {
            simplex[n] = reflected;
            values[n] = f_reflected;
            continue;
        }
        // Contraction (outside if the reflection improved on the worst).
        let (base, f_base) = if f_reflected < values[n] {
            (reflected.clone(), f_reflected)
        } else {
            (worst.clone(), values[n])
        };
        let contracted: Vec<f64> = centroid
            .iter()
            .zip(base.iter())
            .map(|(c, b)| c + rho * (b - c))
            .collect();
        let f_contracted = eval(&contracted);
        if f_contracted < f_base {
            simplex[n] = contracted;
            values[n] = f_contracted;
            continue;
        }
        // Shrink toward the best vertex.
        let best = simplex[0].clone();
        for i in 1..=n {
            for (x, b) in simplex[i].iter_mut().zip(best.iter()) {
                *x = b + sigma * (*x - b);
            }
            values[i] = eval(&simplex[i]);
        }
    }

    let mut best = 0;
    for i in 1..=n {
        if values[i] < values[best] {
            best = i;
        }
    }
    NelderMeadResult {
        x: simplex[best].clone(),
        f_min: values[best],
        iterations,
        evaluations: evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic_bowl() {
        let f = |x: &[f64]| (x[0] - 1.5).powi(2) + 3.0 * (x[1] + 0.5).powi(2);
        let r = nelder_mead(f, &[0.0, 0.0], &NelderMeadOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 1.5).abs() < 1e-6);
        assert!((r.x[1] + 0.5).abs() < 1e-6);
    }

    #[test]
    fn minimizes_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions {
            max_iterations: 20000,
            ..NelderMeadOptions::default()
        };
        let r = nelder_mead(f, &[-1.2, 1.0], &opts);
        assert!(r.f_min < 1e-10, "f_min = {}", r.f_min);
    }

    #[test]
    fn deterministic_across_runs() {
        let f = |x: &[f64]| x[0].sin() + (x[1] * 0.7).cos() + 0.1 * x[0] * x[0];
        let a = nelder_mead(f, &[2.0, 2.0], &NelderMeadOptions::default());
        let b = nelder_mead(f, &[2.0, 2.0], &NelderMeadOptions::default());
        assert_eq!(a.x, b.x);
        assert_eq!(a.f_min, b.f_min);
    }
}
