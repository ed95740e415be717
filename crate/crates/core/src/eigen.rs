//! Dense symmetric generalized eigenproblems with a positive semidefinite,
//! possibly singular, right-hand matrix.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenpairs of `A x = lambda M x`, sorted descending. Directions in the
/// kernel of `M` come first with `lambda = +inf`.
#[derive(Debug, Clone)]
pub struct GeneralizedEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub kernel_dim: usize,
}

/// Relative size below which an eigenvalue of `M` is treated as zero.
pub const KERNEL_TOL: f64 = 1e-10;

/// Solves `A x = lambda M x` for symmetric positive semidefinite `A`, `M`.
///
/// The kernel of `M` is split off first. The finite pairs are computed on the
/// complement after eliminating the kernel component through `A`, so each
/// returned finite pair satisfies the original pencil, not only its projection.
pub fn deflated_generalized_eigen(a: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<GeneralizedEigen> {
    let n = m.nrows();
    if a.shape() != (n, n) || m.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.nrows() });
    }
    if n == 0 {
        return Ok(GeneralizedEigen { values: Vec::new(), vectors: DMatrix::zeros(0, 0), kernel_dim: 0 });
    }
    let m_sym = (m + m.transpose()) * 0.5;
    let a_sym = (a + a.transpose()) * 0.5;
    let (mu, v) = sorted_eigen(m_sym, false);
    let mu_max = mu.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    if mu_max == 0.0 {
        return Err(Error::Indefinite(0.0));
    }
    if let Some(&neg) = mu.iter().find(|&&x| x < -1e-8 * mu_max) {
        return Err(Error::Indefinite(neg));
    }

    let kernel_dim = mu.iter().take_while(|&&x| x <= KERNEL_TOL * mu_max).count();
    let kernel = v.columns(0, kernel_dim).into_owned();
    let range = v.columns(kernel_dim, n - kernel_dim).into_owned();
    let scale = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n - kernel_dim,
        mu[kernel_dim..].iter().map(|x| 1.0 / x.sqrt()),
    ));

    // lift[c] = range c - kernel * A_kk^{-1} A_kc c
    let lift = if kernel_dim > 0 {
        let a_kk = kernel.transpose() * &a_sym * &kernel;
        let a_kc = kernel.transpose() * &a_sym * &range;
        let correction = pseudo_solve(&a_kk, &a_kc);
        &range - &kernel * correction
    } else {
        range
    };
    let schur = lift.transpose() * &a_sym * &lift;
    let reduced = &scale * schur * &scale;
    let (lambda, z) = sorted_eigen((&reduced + reduced.transpose()) * 0.5, true);
    let finite = lift * scale * z;

    let mut vectors = DMatrix::zeros(n, n);
    vectors.columns_mut(0, kernel_dim).copy_from(&kernel);
    vectors.columns_mut(kernel_dim, n - kernel_dim).copy_from(&finite);
    let values = std::iter::repeat_n(f64::INFINITY, kernel_dim).chain(lambda).collect();
    Ok(GeneralizedEigen { values, vectors, kernel_dim })
}

/// Eigen-decomposition of a symmetric matrix, sorted ascending or descending.
fn sorted_eigen(m: DMatrix<f64>, descending: bool) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    if descending {
        order.reverse();
    }
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// `A^+ B` for a small symmetric positive semidefinite `A`.
fn pseudo_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sorted_eigen(a.clone(), true);
    let top = values.first().copied().unwrap_or(0.0);
    let inv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        values.len(),
        values.iter().map(|&x| if x > 1e-14 * top && x > 0.0 { 1.0 / x } else { 0.0 }),
    ));
    &vectors * inv * vectors.transpose() * b
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> DMatrix<f64> {
        let b = DMatrix::from_fn(rank, n, |_, _| rng.random_range(-1.0..1.0));
        b.transpose() * b
    }

    fn residual(a: &DMatrix<f64>, m: &DMatrix<f64>, e: &GeneralizedEigen) -> f64 {
        let mut worst = 0.0f64;
        for k in e.kernel_dim..e.values.len() {
            let x = e.vectors.column(k);
            let r = a * x - m * x * e.values[k];
            worst = worst.max(r.norm() / (a.norm() * x.norm()));
        }
        worst
    }

    #[test]
    fn regular_pencil_matches_cholesky_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_psd(&mut rng, 8, 8);
        let m = random_psd(&mut rng, 8, 8) + DMatrix::identity(8, 8);
        let e = deflated_generalized_eigen(&a, &m).unwrap();
        assert_eq!(e.kernel_dim, 0);
        // independent route: L^{-1} A L^{-T}
        let l = m.clone().cholesky().unwrap().l();
        let li = l.try_inverse().unwrap();
        let mut reference: Vec<f64> =
            SymmetricEigen::new(&li * &a * li.transpose()).eigenvalues.iter().copied().collect();
        reference.sort_by(|x, y| y.total_cmp(x));
        for (x, y) in e.values.iter().zip(&reference) {
            assert!((x - y).abs() < 1e-10 * reference[0]);
        }
        assert!(residual(&a, &m, &e) < 1e-12);
    }

    #[test]
    fn singular_mass_gives_infinite_modes_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10;
        // M annihilates the constant vector
        let mut m = random_psd(&mut rng, n, n);
        let ones = DMatrix::from_element(n, 1, 1.0 / (n as f64).sqrt());
        let p = DMatrix::identity(n, n) - &ones * ones.transpose();
        m = &p * m * &p;
        let a = random_psd(&mut rng, n, n);
        let e = deflated_generalized_eigen(&a, &m).unwrap();
        assert_eq!(e.kernel_dim, 1);
        assert!(e.values[0].is_infinite());
        assert!(e.values[1..].windows(2).all(|w| w[0] >= w[1]));
        assert!(e.values[1..].iter().all(|&x| x >= -1e-10));
        assert!(residual(&a, &m, &e) < 1e-10);
        let k = e.vectors.column(0);
        assert!((k.dot(&ones.column(0)).abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn indefinite_mass_rejected() {
        let a = DMatrix::identity(2, 2);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(deflated_generalized_eigen(&a, &m), Err(Error::Indefinite(_))));
    }
}
