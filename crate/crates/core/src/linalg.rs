//! Dense linear-algebra contract used by every other module.
//!
//! All kernels run in `f64` with [`Parallelism::None`], so results are
//! bit-reproducible regardless of how many threads the caller is running on.
//! Callers parallelize across tasks instead.

use faer::dyn_stack::{GlobalPodBuffer, PodStack, StackReq};
use faer::linalg::cholesky::llt::compute::{cholesky_in_place, cholesky_in_place_req, LltParams, LltRegularization};
use faer::linalg::matmul::matmul as faer_matmul;
use faer::linalg::svd::{compute_svd, compute_svd_req, ComputeVectors, SvdParams};
use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Mat, MatRef, Parallelism};

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry precondition of [`solve_spd`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Singular value decomposition `m = U · diag(s) · Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat<f64>,
    /// Nonincreasing, nonnegative.
    pub singular_values: Vec<f64>,
    pub v_transpose: Mat<f64>,
}

impl Svd {
    /// Rebuilds `U · diag(s) · Vᵀ` using the leading `min(rows, cols)` factors.
    pub fn reconstruct(&self) -> Mat<f64> {
        let k = self.singular_values.len();
        let mut us = self.u.as_ref().subcols(0, k).to_owned();
        for (j, &s) in self.singular_values.iter().enumerate() {
            for i in 0..us.nrows() {
                us[(i, j)] *= s;
            }
        }
        matmul(us.as_ref(), self.v_transpose.as_ref().subrows(0, k))
    }
}

/// Full SVD of an arbitrary finite matrix, singular values sorted descending.
pub fn svd(m: MatRef<'_, f64>) -> Result<Svd> {
    ensure_finite(m, "svd input")?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::InvalidInput("svd of an empty matrix".into()));
    }
    let (rows, cols) = (m.nrows(), m.ncols());
    let k = rows.min(cols);
    let mut s_col = Mat::<f64>::zeros(k, 1);
    let mut u_in = Mat::<f64>::zeros(rows, rows);
    let mut v_in = Mat::<f64>::zeros(cols, cols);
    let req = compute_svd_req::<f64>(
        rows,
        cols,
        ComputeVectors::Full,
        ComputeVectors::Full,
        Parallelism::None,
        SvdParams::default(),
    )
    .map_err(|_| Error::InvalidInput("svd workspace size overflows".into()))?;
    let mut buf = GlobalPodBuffer::new(req);
    compute_svd(
        m,
        s_col.as_mut().col_mut(0),
        Some(u_in.as_mut()),
        Some(v_in.as_mut()),
        Parallelism::None,
        PodStack::new(&mut buf),
        SvdParams::default(),
    );
    let s: Vec<f64> = (0..k).map(|i| s_col[(i, 0)].max(0.0)).collect();
    let mut order: Vec<usize> = (0..s.len()).collect();
    // Stable sort keeps the backend's order whenever it is already descending.
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));

    let mut u = u_in.to_owned();
    let mut v_transpose = v_in.transpose().to_owned();
    for (dst, &src) in order.iter().enumerate() {
        if dst != src {
            u.as_mut().col_mut(dst).copy_from(u_in.as_ref().col(src));
            v_transpose.as_mut().row_mut(dst).copy_from(v_in.as_ref().col(src).transpose());
        }
    }
    let singular_values = order.iter().map(|&i| s[i]).collect();
    Ok(Svd {
        u,
        singular_values,
        v_transpose,
    })
}

/// Solves `X · A = B` for symmetric positive definite `A` via Cholesky.
///
/// `A` must be symmetric to [`SYMMETRY_TOL`] relative to its largest entry.
/// Matrices whose smallest Cholesky pivot is negligible next to the largest
/// diagonal entry are reported as [`Error::SingularSystem`] rather than
/// solved with a meaningless result.
pub fn solve_spd(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimMismatch(format!(
            "SPD matrix must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if b.ncols() != n {
        return Err(Error::DimMismatch(format!(
            "right-hand side has {} columns, system has dimension {n}",
            b.ncols()
        )));
    }
    ensure_finite(a, "SPD matrix")?;
    ensure_finite(b, "right-hand side")?;

    let scale = max_abs(a);
    if scale == 0.0 {
        return Err(Error::SingularSystem("matrix is identically zero".into()));
    }
    for j in 0..n {
        for i in (j + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::SingularSystem(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let mut l = a.to_owned();
    let req = cholesky_in_place_req::<f64>(n, Parallelism::None, LltParams::default())
        .map_err(|_| Error::InvalidInput("cholesky workspace size overflows".into()))?;
    let mut buf = GlobalPodBuffer::new(req.or(StackReq::empty()));
    cholesky_in_place(
        l.as_mut(),
        LltRegularization::default(),
        Parallelism::None,
        PodStack::new(&mut buf),
        LltParams::default(),
    )
    .map_err(|_| Error::SingularSystem("matrix is not positive definite".into()))?;
    let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0_f64, f64::max);
    let min_pivot = (0..n).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    let floor = 64.0 * n as f64 * f64::EPSILON * max_diag;
    if !(min_pivot > floor) {
        return Err(Error::SingularSystem(format!(
            "matrix is numerically singular (pivot {min_pivot:e} vs diagonal {max_diag:e})"
        )));
    }

    // X·A = B  <=>  A·Xᵀ = Bᵀ since A is symmetric.
    // Only the lower triangle of `l` holds the factor.
    let mut xt = b.transpose().to_owned();
    solve_lower_triangular_in_place(l.as_ref(), xt.as_mut(), Parallelism::None);
    solve_upper_triangular_in_place(l.as_ref().transpose(), xt.as_mut(), Parallelism::None);
    Ok(xt.transpose().to_owned())
}

/// Deterministic single-threaded `a · b`.
pub fn matmul(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
    let mut out = Mat::<f64>::zeros(a.nrows(), b.ncols());
    faer_matmul(out.as_mut(), a, b, None, 1.0, Parallelism::None);
    out
}

/// `a · bᵀ`.
pub fn matmul_nt(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    matmul(a, b.transpose())
}

/// `z · zᵀ`, symmetrized so that the result is exactly symmetric.
pub fn gram(z: MatRef<'_, f64>) -> Mat<f64> {
    let mut g = matmul_nt(z, z);
    symmetrize(&mut g);
    g
}

pub(crate) fn symmetrize(m: &mut Mat<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn frobenius(m: MatRef<'_, f64>) -> f64 {
    m.norm_l2()
}

/// `‖a − b‖_F`.
pub fn frobenius_distance(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let d = a[(i, j)] - b[(i, j)];
            acc += d * d;
        }
    }
    acc.sqrt()
}

/// `‖mᵀm − I‖_F`, zero for an orthogonal matrix.
pub fn orthogonality_defect(m: MatRef<'_, f64>) -> f64 {
    let mut mtm = matmul(m.transpose(), m);
    for i in 0..mtm.nrows() {
        mtm[(i, i)] -= 1.0;
    }
    mtm.norm_l2()
}

pub(crate) fn max_abs(m: MatRef<'_, f64>) -> f64 {
    let mut best = 0.0_f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            best = best.max(m[(i, j)].abs());
        }
    }
    best
}

pub(crate) fn ensure_finite(m: MatRef<'_, f64>, what: &str) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{what} has a non-finite entry at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

pub(crate) fn trace(m: MatRef<'_, f64>) -> f64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

/// In-place `acc += alpha · m`.
pub(crate) fn axpy(acc: &mut Mat<f64>, alpha: f64, m: MatRef<'_, f64>) {
    for j in 0..acc.ncols() {
        for i in 0..acc.nrows() {
            acc[(i, j)] += alpha * m[(i, j)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn svd_of_identity() {
        let svd = svd(Mat::<f64>::identity(3, 3).as_ref()).unwrap();
        assert_eq!(svd.singular_values.len(), 3);
        for s in &svd.singular_values {
            assert!((s - 1.0).abs() < 1e-14);
        }
        let r = svd.reconstruct();
        assert!(frobenius_distance(r.as_ref(), Mat::<f64>::identity(3, 3).as_ref()) < 1e-14);
    }

    #[test]
    fn svd_of_diagonal_sorts_descending() {
        let mut m = Mat::<f64>::zeros(3, 3);
        m[(0, 0)] = 1.0;
        m[(1, 1)] = 3.0;
        m[(2, 2)] = 2.0;
        let svd = svd(m.as_ref()).unwrap();
        for (got, want) in svd.singular_values.iter().zip([3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-14);
        }
        assert!(frobenius_distance(svd.reconstruct().as_ref(), m.as_ref()) < 1e-13);
    }

    #[test]
    fn svd_reconstructs_random_matrices() {
        for (seed, (r, c)) in [(8, 8), (5, 9), (9, 4), (64, 64)].into_iter().enumerate() {
            let m = random(r, c, seed as u64);
            let svd = svd(m.as_ref()).unwrap();
            let rel = frobenius_distance(svd.reconstruct().as_ref(), m.as_ref()) / frobenius(m.as_ref());
            assert!(rel < 1e-8, "{r}x{c}: {rel}");
            // entrywise check against the input
            let rec = svd.reconstruct();
            for j in 0..c {
                for i in 0..r {
                    assert!((rec[(i, j)] - m[(i, j)]).abs() < 1e-8);
                }
            }
            assert!(orthogonality_defect(svd.u.as_ref()) < 1e-10);
            assert!(orthogonality_defect(svd.v_transpose.transpose()) < 1e-10);
            assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
            assert!(svd.singular_values.iter().all(|&s| s >= 0.0));
        }
    }

    #[test]
    fn svd_rejects_nan() {
        let mut m = Mat::<f64>::identity(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(svd(m.as_ref()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn solve_identity_and_scalar() {
        let b = random(3, 3, 1);
        let x = solve_spd(Mat::<f64>::identity(3, 3).as_ref(), b.as_ref()).unwrap();
        assert!(frobenius_distance(x.as_ref(), b.as_ref()) < 1e-15);

        let two = Mat::<f64>::from_fn(4, 4, |i, j| if i == j { 2.0 } else { 0.0 });
        let x = solve_spd(two.as_ref(), Mat::<f64>::identity(4, 4).as_ref()).unwrap();
        let half = Mat::<f64>::from_fn(4, 4, |i, j| if i == j { 0.5 } else { 0.0 });
        assert!(frobenius_distance(x.as_ref(), half.as_ref()) < 1e-15);
    }

    #[test]
    fn solve_random_spd_residual() {
        for (seed, n) in [(3u64, 5usize), (4, 32), (5, 100)] {
            let m = random(n, n, seed);
            let mut a = matmul(m.transpose(), m.as_ref());
            symmetrize(&mut a);
            for i in 0..n {
                a[(i, i)] += 1.0;
            }
            let b = random(7, n, seed + 100);
            let x = solve_spd(a.as_ref(), b.as_ref()).unwrap();
            let xa = matmul(x.as_ref(), a.as_ref());
            let rel = frobenius_distance(xa.as_ref(), b.as_ref()) / frobenius(b.as_ref());
            assert!(rel <= 1e-8, "n={n}: {rel}");
        }
    }

    #[test]
    fn solve_rejects_non_spd() {
        let b = Mat::<f64>::identity(2, 2);
        let mut indefinite = Mat::<f64>::identity(2, 2);
        indefinite[(1, 1)] = -1.0;
        assert!(matches!(
            solve_spd(indefinite.as_ref(), b.as_ref()),
            Err(Error::SingularSystem(_))
        ));

        let mut asym = Mat::<f64>::identity(2, 2);
        asym[(0, 1)] = 0.5;
        assert!(matches!(solve_spd(asym.as_ref(), b.as_ref()), Err(Error::SingularSystem(_))));

        // rank one: z zᵀ with a single sample
        let z = random(3, 1, 9);
        let g = gram(z.as_ref());
        assert!(matches!(
            solve_spd(g.as_ref(), Mat::<f64>::identity(3, 3).as_ref()),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn gram_is_exactly_symmetric() {
        let z = random(16, 40, 11);
        let g = gram(z.as_ref());
        for j in 0..16 {
            for i in 0..16 {
                assert_eq!(g[(i, j)].to_bits(), g[(j, i)].to_bits());
            }
        }
    }
}
