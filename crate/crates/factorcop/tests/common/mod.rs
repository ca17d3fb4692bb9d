//! Shared brute-force oracles for the integration suites. Everything here
//! is deliberately independent of the production code paths it checks:
//! densities are written from the textbook formulas and integrals run on
//! plain tensor grids.

#![allow(dead_code)]

use factorcop::special::{ln_gamma, norm_quantile, t_quantile};

/// Multivariate normal log-density via an explicit Cholesky factorization.
pub fn mvn_logpdf(y: &[f64], mean: &[f64], cov: &[Vec<f64>]) -> f64 {
    let n = y.len();
    let mut l = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = cov[i][j];
            let (li, lj) = (&l[i], &l[j]);
            for (a, b) in li.iter().zip(lj).take(j) {
                s -= a * b;
            }
            if i == j {
                l[i][j] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    // solve L z = (y - mean)
    let mut z = vec![0.0f64; n];
    for i in 0..n {
        let mut s = y[i] - mean[i];
        for k in 0..i {
            s -= l[i][k] * z[k];
        }
        z[i] = s / l[i][i];
    }
    let logdet: f64 = l
        .iter()
        .enumerate()
        .map(|(i, row)| row[i].ln())
        .sum::<f64>()
        * 2.0;
    let quad: f64 = z.iter().map(|v| v * v).sum();
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad)
}

/// Two-sided Kolmogorov-Smirnov statistic of already-sorted values against
/// the uniform distribution.
pub fn ks_statistic(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let mut ks = 0.0f64;
    for (i, &u) in sorted.iter().enumerate() {
        let hi = (i + 1) as f64 / n;
        let lo = i as f64 / n;
        ks = ks.max((hi - u).abs()).max((u - lo).abs());
    }
    ks
}

/// Textbook bivariate normal density.
pub fn binorm_pdf(x: f64, y: f64, rho: f64) -> f64 {
    let omr2 = 1.0 - rho * rho;
    (-(x * x - 2.0 * rho * x * y + y * y) / (2.0 * omr2)).exp()
        / (2.0 * std::f64::consts::PI * omr2.sqrt())
}

/// Textbook bivariate t density with unit scales.
pub fn bit_pdf(x: f64, y: f64, rho: f64, nu: f64) -> f64 {
    let omr2 = 1.0 - rho * rho;
    let q = (x * x - 2.0 * rho * x * y + y * y) / (nu * omr2);
    let ln = ln_gamma((nu + 2.0) / 2.0)
        - ln_gamma(nu / 2.0)
        - (nu * std::f64::consts::PI).ln()
        - 0.5 * omr2.ln()
        - (nu + 2.0) / 2.0 * (1.0 + q).ln();
    ln.exp()
}

/// Nodes and weights of a composite Gauss-Legendre rule over `[a, b]`
/// split into `segments` pieces with `n` nodes each.
pub fn composite_gl(a: f64, b: f64, segments: usize, n: usize) -> Vec<(f64, f64)> {
    let base =
        factorcop::quadrature::make_quadrature::<f64>(factorcop::quadrature::QuadMode::Legendre, n)
            .unwrap();
    let mut grid = Vec::with_capacity(segments * n);
    let width = (b - a) / segments as f64;
    for s in 0..segments {
        let lo = a + s as f64 * width;
        for (&v, &w) in base.nodes.iter().zip(&base.weights) {
            grid.push((lo + width * v, w * width));
        }
    }
    grid
}

/// Composite rule over `(-inf, z]` with geometric segments: dense around
/// the density bulk, wide panels for the polynomial t tails.
pub fn tail_aware_gl(z: f64, n: usize) -> Vec<(f64, f64)> {
    let edges: [f64; 11] = [
        -3e4, -600.0, -60.0, -12.0, -6.0, -3.0, 0.0, 3.0, 6.0, 12.0, 60.0,
    ];
    let mut grid = Vec::new();
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1].min(z));
        if b <= a {
            break;
        }
        grid.extend(composite_gl(a, b, 2, n));
    }
    grid
}

/// Bivariate CDF of a standard elliptical pair by 2D quadrature of the
/// density over the quadrant; `nu = None` selects the normal.
pub fn elliptical_cdf(z1: f64, z2: f64, rho: f64, nu: Option<f64>) -> f64 {
    let gx = tail_aware_gl(z1.min(12.0), 20);
    let gy = tail_aware_gl(z2.min(12.0), 20);
    let mut total = 0.0;
    for &(x, wx) in &gx {
        for &(y, wy) in &gy {
            let f = match nu {
                None => binorm_pdf(x, y, rho),
                Some(nu) => bit_pdf(x, y, rho, nu),
            };
            total += wx * wy * f;
        }
    }
    total
}

/// Brute-force integral of `f` over the unit square through the probit
/// substitution `v = Phi(z)`, which keeps the grid away from boundary
/// singularities of copula integrands.
pub fn unit_square_integral(mut f: impl FnMut(f64, f64) -> f64) -> f64 {
    let grid = composite_gl(-8.5, 8.5, 17, 24);
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut total = 0.0;
    for &(z1, w1) in &grid {
        let v1 = factorcop::special::norm_cdf(z1);
        let j1 = w1 * phi(z1);
        for &(z2, w2) in &grid {
            let v2 = factorcop::special::norm_cdf(z2);
            total += j1 * w2 * phi(z2) * f(v1, v2);
        }
    }
    total
}

/// h-function oracle `dC(u1, v)/dv` by central finite differences of the
/// quadrant-integrated CDF.
pub fn hfun_oracle(u1: f64, v: f64, rho: f64, nu: Option<f64>) -> f64 {
    let q = |p: f64| match nu {
        None => norm_quantile(p),
        Some(nu) => t_quantile(p, nu),
    };
    let h = 1e-5;
    let z1 = q(u1);
    let up = elliptical_cdf(z1, q(v + h), rho, nu);
    let dn = elliptical_cdf(z1, q(v - h), rho, nu);
    (up - dn) / (2.0 * h)
}
