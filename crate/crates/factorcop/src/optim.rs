//! Derivative-free optimization and numerical differentiation.
//!
//! All model fitting in this crate runs through [`minimize`], a Nelder-Mead
//! simplex with deterministic restarts. Likelihood surfaces here are smooth
//! and low-dimensional (at most ~8 parameters), where the simplex is
//! dependable and spares us analytic gradients of quadrature sums.

use crate::linalg::Mat;
use crate::real::Real;

#[derive(Debug, Clone)]
pub struct NelderMead<T> {
    /// Convergence tolerance on the relative objective spread of the simplex.
    pub ftol_rel: T,
    /// Iteration budget per start; the caller-facing budget is `500 * dim`.
    pub max_iter: usize,
    /// Initial simplex step relative to `max(1, |x0_i|)`.
    pub init_step: T,
    /// Extra polish/restart rounds from the best point found.
    pub restarts: usize,
}

impl<T: Real> Default for NelderMead<T> {
    fn default() -> Self {
        NelderMead {
            ftol_rel: T::of(1e-8),
            max_iter: 0, // 0 means 500 * dim
            init_step: T::of(0.2),
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimOutcome<T> {
    pub x: Vec<T>,
    pub fval: T,
    pub n_eval: usize,
    pub converged: bool,
}

/// Minimizes `f` starting from `x0`.
pub fn minimize<T: Real>(
    cfg: &NelderMead<T>,
    f: &mut dyn FnMut(&[T]) -> T,
    x0: &[T],
) -> OptimOutcome<T> {
    let dim = x0.len();
    let max_iter = if cfg.max_iter == 0 {
        500 * dim.max(1)
    } else {
        cfg.max_iter
    };
    let mut n_eval = 0usize;
    let mut eval = |x: &[T], n_eval: &mut usize| -> T {
        *n_eval += 1;
        let v = f(x);
        if v.is_nan() {
            T::infinity()
        } else {
            v
        }
    };

    let mut best_x = x0.to_vec();
    let mut best_f = eval(&best_x, &mut n_eval);
    let mut converged = false;

    // deterministic restart ladder: full step, quarter step, expanded step
    let steps: Vec<T> = (0..=cfg.restarts)
        .map(|r| match r {
            0 => cfg.init_step,
            1 => cfg.init_step * T::of(0.25),
            2 => cfg.init_step * T::of(2.0),
            _ => cfg.init_step * T::of(0.05),
        })
        .collect();

    for (round, &step) in steps.iter().enumerate() {
        let (x, fv, conv) = simplex_run(
            &mut eval,
            &mut n_eval,
            &best_x,
            step,
            cfg.ftol_rel,
            max_iter,
        );
        let improved = fv < best_f - cfg.ftol_rel * (best_f.abs() + T::of(1e-12));
        if fv < best_f {
            best_f = fv;
            best_x = x;
        }
        if conv {
            converged = true;
            // a converged round that found nothing new means we are done
            if round > 0 && !improved {
                break;
            }
        }
    }

    OptimOutcome {
        x: best_x,
        fval: best_f,
        n_eval,
        converged,
    }
}

fn simplex_run<T: Real>(
    eval: &mut impl FnMut(&[T], &mut usize) -> T,
    n_eval: &mut usize,
    x0: &[T],
    step: T,
    ftol_rel: T,
    max_iter: usize,
) -> (Vec<T>, T, bool) {
    let dim = x0.len();
    if dim == 0 {
        return (vec![], eval(x0, n_eval), true);
    }
    // simplex vertices and values
    let mut xs: Vec<Vec<T>> = Vec::with_capacity(dim + 1);
    xs.push(x0.to_vec());
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += step * x0[i].abs().max(T::one());
        xs.push(v);
    }
    let mut fs: Vec<T> = xs.iter().map(|x| eval(x, n_eval)).collect();

    let alpha = T::one();
    let gamma = T::two();
    let rho = T::half();
    let sigma = T::half();
    let mut converged = false;

    for _ in 0..max_iter {
        // order ascending by objective
        let mut idx: Vec<usize> = (0..=dim).collect();
        idx.sort_by(|&a, &b| {
            fs[a]
                .partial_cmp(&fs[b])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let reorder_x: Vec<Vec<T>> = idx.iter().map(|&i| xs[i].clone()).collect();
        let reorder_f: Vec<T> = idx.iter().map(|&i| fs[i]).collect();
        xs = reorder_x;
        fs = reorder_f;

        let spread = (fs[dim] - fs[0]).abs();
        if spread <= ftol_rel * (fs[0].abs() + T::of(1e-12)) {
            converged = true;
            break;
        }

        // centroid of everything but the worst vertex
        let mut centroid = vec![T::zero(); dim];
        for x in xs.iter().take(dim) {
            for (c, &v) in centroid.iter_mut().zip(x) {
                *c += v;
            }
        }
        let inv = T::one() / T::of(dim as f64);
        for c in &mut centroid {
            *c *= inv;
        }

        let reflect: Vec<T> = centroid
            .iter()
            .zip(&xs[dim])
            .map(|(&c, &w)| c + alpha * (c - w))
            .collect();
        let f_reflect = eval(&reflect, n_eval);

        if f_reflect < fs[0] {
            let expand: Vec<T> = centroid
                .iter()
                .zip(&reflect)
                .map(|(&c, &r)| c + gamma * (r - c))
                .collect();
            let f_expand = eval(&expand, n_eval);
            if f_expand < f_reflect {
                xs[dim] = expand;
                fs[dim] = f_expand;
            } else {
                xs[dim] = reflect;
                fs[dim] = f_reflect;
            }
        } else if f_reflect < fs[dim - 1] {
            xs[dim] = reflect;
            fs[dim] = f_reflect;
        } else {
            // contraction, outside or inside
            let (point, f_point) = if f_reflect < fs[dim] {
                let outside: Vec<T> = centroid
                    .iter()
                    .zip(&reflect)
                    .map(|(&c, &r)| c + rho * (r - c))
                    .collect();
                let fv = eval(&outside, n_eval);
                (outside, fv)
            } else {
                let inside: Vec<T> = centroid
                    .iter()
                    .zip(&xs[dim])
                    .map(|(&c, &w)| c + rho * (w - c))
                    .collect();
                let fv = eval(&inside, n_eval);
                (inside, fv)
            };
            if f_point < fs[dim].min(f_reflect) {
                xs[dim] = point;
                fs[dim] = f_point;
            } else {
                // shrink toward the best vertex
                let best = xs[0].clone();
                for k in 1..=dim {
                    for (v, &b) in xs[k].iter_mut().zip(&best) {
                        *v = b + sigma * (*v - b);
                    }
                    fs[k] = eval(&xs[k].clone(), n_eval);
                }
            }
        }
    }

    let mut best = 0;
    for k in 1..=dim {
        if fs[k] < fs[best] {
            best = k;
        }
    }
    (xs[best].clone(), fs[best], converged)
}

/// Central-difference gradient with per-coordinate relative steps.
pub fn gradient<T: Real>(f: &mut dyn FnMut(&[T]) -> T, x: &[T], rel_step: T) -> Vec<T> {
    let mut g = vec![T::zero(); x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = rel_step * x[i].abs().max(T::one());
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (T::two() * h);
    }
    g
}

/// Central-difference Hessian (symmetric stencil).
pub fn hessian<T: Real>(f: &mut dyn FnMut(&[T]) -> T, x: &[T], rel_step: T) -> Mat<T> {
    let n = x.len();
    let mut h_mat = Mat::zeros(n, n);
    let f0 = f(x);
    let steps: Vec<T> = x
        .iter()
        .map(|&v| rel_step * v.abs().max(T::one()))
        .collect();
    let mut xp = x.to_vec();
    for i in 0..n {
        xp[i] = x[i] + steps[i];
        let fp = f(&xp);
        xp[i] = x[i] - steps[i];
        let fm = f(&xp);
        xp[i] = x[i];
        h_mat[(i, i)] = (fp - T::two() * f0 + fm) / (steps[i] * steps[i]);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            xp[i] = x[i] + steps[i];
            xp[j] = x[j] + steps[j];
            let fpp = f(&xp);
            xp[j] = x[j] - steps[j];
            let fpm = f(&xp);
            xp[i] = x[i] - steps[i];
            let fmm = f(&xp);
            xp[j] = x[j] + steps[j];
            let fmp = f(&xp);
            xp[i] = x[i];
            xp[j] = x[j];
            let v = (fpp - fpm - fmp + fmm) / (T::of(4.0) * steps[i] * steps[j]);
            h_mat[(i, j)] = v;
            h_mat[(j, i)] = v;
        }
    }
    h_mat
}

/// Standard errors from the inverse of the negated Hessian of a
/// log-likelihood at its maximum.
pub fn se_from_neg_hessian<T: Real>(hess: &Mat<T>, context: &str) -> crate::Result<Vec<T>> {
    let neg = hess.scale(-T::one());
    let cov = neg.inverse(context)?;
    Ok(cov
        .diag()
        .into_iter()
        .map(|v| if v > T::zero() { v.sqrt() } else { T::nan() })
        .collect())
}
