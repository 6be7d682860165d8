//! Dense complex linear algebra for small operators.
//!
//! The state engine works with matrices of dimension at most a few hundred
//! (64 in every production path), so a cyclic Jacobi eigensolver with complex
//! rotations is both simple and exact enough: the eigenvector matrix is a
//! product of unitaries and stays orthonormal to machine precision, which is
//! what the unitarity guarantee of the evolution operator rests on.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tolerances::UNITARITY_TOL;

pub type CVec = Array1<Complex64>;
pub type CMat = Array2<Complex64>;

pub fn identity(n: usize) -> CMat {
    Array2::from_diag_elem(n, Complex64::new(1.0, 0.0))
}

pub fn dagger(m: &CMat) -> CMat {
    m.t().mapv(|z| z.conj())
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// `max |M - M†|` over all entries.
pub fn hermiticity_deviation(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            dev = dev.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    dev
}

fn offdiag_norm_sq(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[[i, j]].norm_sqr();
            }
        }
    }
    s
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the unitary matrix whose
/// columns are the matching eigenvectors, i.e. `H = V diag(λ) V†`.
/// The input is symmetrized first; callers are expected to have checked
/// Hermiticity against their own tolerance.
pub fn hermitian_eig(h: &CMat) -> (Array1<f64>, CMat) {
    let n = h.nrows();
    assert_eq!(n, h.ncols(), "hermitian_eig requires a square matrix");
    let mut a = h.mapv(|z| z);
    // Symmetrize to wash out representation noise.
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[[i, j]] + a[[j, i]].conj());
            a[[i, j]] = m;
            a[[j, i]] = m.conj();
        }
        a[[i, i]] = Complex64::new(a[[i, i]].re, 0.0);
    }
    let mut v = identity(n);
    let scale: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().max(f64::MIN_POSITIVE);
    let stop = scale * 1e-30;

    for _sweep in 0..100 {
        if offdiag_norm_sq(&a) <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                let g = apq.norm();
                if g <= 1e-300 {
                    continue;
                }
                let app = a[[p, p]].re;
                let aqq = a[[q, q]].re;
                let phase = apq / g;
                let tau = (app - aqq) / (2.0 * g);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Unitary plane rotation:
                //   U[p,p]=c, U[p,q]=-s e^{i phi}, U[q,p]=s e^{-i phi}, U[q,q]=c
                let upq = -phase * s;
                let uqp = phase.conj() * s;
                // A <- A U (columns p, q)
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = akp * c + akq * uqp;
                    a[[k, q]] = akp * upq + akq * c;
                }
                // A <- U† A (rows p, q)
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = apk * c + aqk * uqp.conj();
                    a[[q, k]] = apk * upq.conj() + aqk * c;
                }
                // V <- V U
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = vkp * c + vkq * uqp;
                    v[[k, q]] = vkp * upq + vkq * c;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a[[i, i]].re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| diag[i]));
    let mut vectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[[row, col]] = v[[row, src]];
        }
    }
    (eigenvalues, vectors)
}

/// Eigenvalues only, ascending.
pub fn hermitian_eigenvalues(h: &CMat) -> Array1<f64> {
    hermitian_eig(h).0
}

/// `exp(-i H t)` for Hermitian `H`, via eigendecomposition.
///
/// Fails if the reconstructed operator is not unitary to [`UNITARITY_TOL`].
pub fn expi_hermitian(h: &CMat, t: f64) -> Result<CMat> {
    let n = h.nrows();
    let (lambda, v) = hermitian_eig(h);
    let vh = dagger(&v);
    let mut phases = Array2::zeros((n, n));
    for i in 0..n {
        phases[[i, i]] = Complex64::from_polar(1.0, -lambda[i] * t);
    }
    let u = v.dot(&phases).dot(&vh);
    let dev = max_abs(&(dagger(&u).dot(&u) - identity(n)));
    if dev > UNITARITY_TOL {
        return Err(Error::UnitarityLoss { deviation: dev });
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_hermitian(n: usize, rng: &mut StdRng) -> CMat {
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            m[[i, i]] = Complex64::new(rng.gen_range(-1.0..1.0), 0.0);
            for j in (i + 1)..n {
                let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                m[[i, j]] = z;
                m[[j, i]] = z.conj();
            }
        }
        m
    }

    #[test]
    fn jacobi_reconstructs_random_hermitian() {
        let mut rng = StdRng::seed_from_u64(11);
        for &n in &[2usize, 5, 16, 64] {
            let h = random_hermitian(n, &mut rng);
            let (lambda, v) = hermitian_eig(&h);
            let mut d: CMat = Array2::zeros((n, n));
            for i in 0..n {
                d[[i, i]] = Complex64::new(lambda[i], 0.0);
            }
            let rebuilt = v.dot(&d).dot(&dagger(&v));
            assert!(max_abs(&(rebuilt - h)) < 1e-11, "n={n}");
            let ortho = dagger(&v).dot(&v) - identity(n);
            assert!(max_abs(&ortho) < 1e-12, "n={n}");
        }
    }

    #[test]
    fn eigenvalues_sorted() {
        let mut rng = StdRng::seed_from_u64(3);
        let h = random_hermitian(12, &mut rng);
        let lambda = hermitian_eigenvalues(&h);
        for w in lambda.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn exponential_of_zero_time_is_identity() {
        let mut rng = StdRng::seed_from_u64(5);
        let h = random_hermitian(8, &mut rng);
        let u = expi_hermitian(&h, 0.0).unwrap();
        assert!(max_abs(&(u - identity(8))) < 1e-13);
    }

    #[test]
    fn exponential_is_unitary_for_random_generators() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let h = random_hermitian(16, &mut rng);
            let t: f64 = rng.gen_range(-3.0..3.0);
            let u = expi_hermitian(&h, t).unwrap();
            let dev = max_abs(&(dagger(&u).dot(&u) - identity(16)));
            assert!(dev <= UNITARITY_TOL);
        }
    }

    #[test]
    fn pauli_y_rotation_matches_closed_form() {
        // exp(-i σ_y g) = [[cos g, -sin g], [sin g, cos g]]
        let mut h: CMat = Array2::zeros((2, 2));
        h[[0, 1]] = Complex64::new(0.0, -1.0);
        h[[1, 0]] = Complex64::new(0.0, 1.0);
        let g = 0.3_f64;
        let u = expi_hermitian(&h, g).unwrap();
        let expect = [
            [g.cos(), -g.sin()],
            [g.sin(), g.cos()],
        ];
        for i in 0..2 {
            for j in 0..2 {
                assert!((u[[i, j]] - Complex64::new(expect[i][j], 0.0)).norm() < 1e-14);
            }
        }
    }
}
