//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::Scalar;

/// Sorted (ascending) eigenvalues of the symmetric part of `m`.
pub fn sym_eigenvalues<T: Scalar>(m: &DMatrix<T>) -> Vec<T> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let s = symmetrize(m);
    let mut ev: Vec<T> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

pub fn lambda_min<T: Scalar>(m: &DMatrix<T>) -> T {
    sym_eigenvalues(m).first().copied().unwrap_or_else(T::zero)
}

pub fn lambda_max<T: Scalar>(m: &DMatrix<T>) -> T {
    sym_eigenvalues(m).last().copied().unwrap_or_else(T::zero)
}

pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// Largest absolute entry.
pub fn max_abs<T: Scalar>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

pub fn max_abs_vec<T: Scalar>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

/// Column-stacking vectorization.
pub fn vec_of<T: Scalar>(m: &DMatrix<T>) -> DVector<T> {
    DVector::from_column_slice(m.as_slice())
}

/// Orthonormal basis of the null space of `m` (columns), using a singular
/// value threshold relative to the largest singular value.
pub fn null_space<T: Scalar>(m: &DMatrix<T>, rel_tol: T) -> DMatrix<T> {
    let cols = m.ncols();
    if cols == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m.nrows() == 0 || max_abs(m) == T::zero() {
        return DMatrix::identity(cols, cols);
    }
    // Pad wide inputs with zero rows so the SVD returns a full V.
    let padded = if m.nrows() < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), m.shape()).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = nalgebra::SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sigma_max = svd.singular_values.iter().fold(T::zero(), |a, b| a.max(*b));
    let thresh = rel_tol * sigma_max;
    let keep: Vec<usize> = (0..cols)
        .filter(|&i| svd.singular_values[i] <= thresh)
        .collect();
    let mut out = DMatrix::zeros(cols, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        out.set_column(k, &v_t.row(i).transpose());
    }
    out
}

/// Reduced row echelon form of the rows of `basis^T`, re-orthonormalized.
/// Makes a null-space basis independent of the decomposition that produced it.
pub fn canonical_basis<T: Scalar>(basis: &DMatrix<T>, tol: T) -> DMatrix<T> {
    let dim = basis.nrows();
    let k = basis.ncols();
    let mut r = basis.transpose();
    let mut row = 0;
    for col in 0..dim {
        if row == k {
            break;
        }
        let (piv, val) = (row..k)
            .map(|i| (i, r[(i, col)].abs()))
            .fold((row, T::zero()), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= tol {
            continue;
        }
        r.swap_rows(row, piv);
        let p = r[(row, col)];
        for j in 0..dim {
            r[(row, j)] /= p;
        }
        for i in 0..k {
            if i != row {
                let f = r[(i, col)];
                if f != T::zero() {
                    for j in 0..dim {
                        let v = r[(row, j)];
                        r[(i, j)] -= f * v;
                    }
                }
            }
        }
        row += 1;
    }
    // Clean round-off so zero patterns stay exact.
    for v in r.iter_mut() {
        if v.abs() <= tol {
            *v = T::zero();
        }
    }
    gram_schmidt(&r.transpose())
}

/// Orthonormalizes the columns of `m` in order (modified Gram-Schmidt).
pub fn gram_schmidt<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let mut q = m.clone();
    for j in 0..q.ncols() {
        for i in 0..j {
            let proj = q.column(i).dot(&q.column(j));
            let qi = q.column(i).clone_owned();
            let mut cj = q.column_mut(j);
            cj.axpy(-proj, &qi, T::one());
        }
        let nrm = q.column(j).norm();
        if nrm > T::zero() {
            q.column_mut(j).scale_mut(T::one() / nrm);
        }
    }
    q
}
