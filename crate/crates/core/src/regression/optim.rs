/// Outcome of a Nelder–Mead minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimize `f` from `x0` with an axis-aligned initial simplex of size
/// `step`. Stops when the spread of function values over the simplex drops
/// below `tol` or after `max_iter` iterations. Return `+∞` from `f` to mark
/// infeasible points.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    step: &[f64],
    tol: f64,
    max_iter: usize,
) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += step[i];
        let fx = eval(&x);
        simplex.push((x, fx));
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        if best.is_finite() && worst.is_finite() && worst - best < tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; dim];
        for (x, _) in &simplex[..dim] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / dim as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let xr = along(-1.0);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = along(-0.5);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < fr.min(worst) {
            simplex[dim] = (xc, fc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let xs: Vec<f64> = x_best
                .iter()
                .zip(&v.0)
                .map(|(b, x)| b + 0.5 * (x - b))
                .collect();
            let fs = eval(&xs);
            *v = (xs, fs);
        }
    }

    let (x, f) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        f,
        iterations,
        evaluations,
        converged,
    }
}
