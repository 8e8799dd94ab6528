use nalgebra::{DMatrix, SymmetricEigen};

fn gamma0(alpha: f64, beta: f64) -> f64 {
    2f64.powf(alpha + beta + 1.0) / (alpha + beta + 1.0) * libm::tgamma(alpha + 1.0)
        * libm::tgamma(beta + 1.0)
        / libm::tgamma(alpha + beta + 1.0)
}

/// Orthonormal Jacobi polynomial `P_n^{(alpha,beta)}` evaluated at `x`.
pub fn jacobi_p(x: f64, alpha: f64, beta: f64, n: usize) -> f64 {
    let g0 = gamma0(alpha, beta);
    let p0 = 1.0 / g0.sqrt();
    if n == 0 {
        return p0;
    }
    let g1 = (alpha + 1.0) * (beta + 1.0) / (alpha + beta + 3.0) * g0;
    let mut p1 = ((alpha + beta + 2.0) * x / 2.0 + (alpha - beta) / 2.0) / g1.sqrt();
    if n == 1 {
        return p1;
    }
    let mut pm = p0;
    let mut aold = 2.0 / (2.0 + alpha + beta)
        * ((alpha + 1.0) * (beta + 1.0) / (alpha + beta + 3.0)).sqrt();
    for i in 1..n {
        let i = i as f64;
        let h1 = 2.0 * i + alpha + beta;
        let anew = 2.0 / (h1 + 2.0)
            * ((i + 1.0) * (i + 1.0 + alpha + beta) * (i + 1.0 + alpha) * (i + 1.0 + beta)
                / (h1 + 1.0)
                / (h1 + 3.0))
                .sqrt();
        let bnew = -(alpha * alpha - beta * beta) / h1 / (h1 + 2.0);
        let pn = (-aold * pm + (x - bnew) * p1) / anew;
        pm = p1;
        p1 = pn;
        aold = anew;
    }
    p1
}

/// Derivative of [`jacobi_p`].
pub fn grad_jacobi_p(x: f64, alpha: f64, beta: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let nf = n as f64;
    (nf * (nf + alpha + beta + 1.0)).sqrt() * jacobi_p(x, alpha + 1.0, beta + 1.0, n - 1)
}

/// Gauss–Jacobi quadrature with `n + 1` points for the weight `(1-x)^alpha (1+x)^beta`.
pub fn jacobi_gq(alpha: f64, beta: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 0 {
        return (vec![(alpha - beta) / (alpha + beta + 2.0)], vec![2.0]);
    }
    let m = n + 1;
    let mut j = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        let h1 = 2.0 * i as f64 + alpha + beta;
        j[(i, i)] = if alpha + beta < 10.0 * f64::EPSILON && i == 0 {
            0.0
        } else {
            -(alpha * alpha - beta * beta) / (h1 + 2.0) / h1
        };
        if i + 1 < m {
            let k = (i + 1) as f64;
            let off = 2.0 / (h1 + 2.0)
                * (k * (k + alpha + beta) * (k + alpha) * (k + beta) / (h1 + 1.0) / (h1 + 3.0))
                    .sqrt();
            j[(i, i + 1)] = off;
            j[(i + 1, i)] = off;
        }
    }
    let eig = SymmetricEigen::new(j);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let g0 = gamma0(alpha, beta);
    let x = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let w = order
        .iter()
        .map(|&i| eig.eigenvectors[(0, i)].powi(2) * g0)
        .collect();
    (x, w)
}

/// Gauss–Lobatto points (`n + 1` of them, endpoints included).
pub fn jacobi_gl(alpha: f64, beta: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![-1.0, 1.0];
    }
    let (xi, _) = jacobi_gq(alpha + 1.0, beta + 1.0, n - 2);
    let mut x = Vec::with_capacity(n + 1);
    x.push(-1.0);
    x.extend(xi);
    x.push(1.0);
    x
}

/// `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    jacobi_gq(0.0, 0.0, n - 1)
}
