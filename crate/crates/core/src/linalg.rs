//! Small complex linear-algebra helpers shared by the precoding modules.

use nalgebra::{Complex, DMatrix, DVector};

pub type C64 = Complex<f64>;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// `exp(j * phase)`.
#[inline]
pub fn cis(phase: f64) -> C64 {
    Complex::from_polar(1.0, phase)
}

/// Real inner product `Re Tr(A^H B)` for Hermitian arguments.
pub fn inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// `Re Tr(A B)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// `v v^H`.
pub fn outer(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted in
/// descending order.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let eig = hermitian_part(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn norm_sqr(v: &CVector) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// `|a^H b|^2`.
pub fn gain(a: &CVector, b: &CVector) -> f64 {
    a.dotc(b).norm_sqr()
}

/// Sum of vectors that does not depend on their order: each component's
/// terms are added in a canonical sorted order, so any permutation of
/// `terms` gives a bit-identical result.
pub fn canonical_sum(terms: &[CVector]) -> CVector {
    let Some(first) = terms.first() else {
        return CVector::zeros(0);
    };
    if terms.len() == 1 {
        return first.clone();
    }
    let mut out = CVector::zeros(first.len());
    let mut buf: Vec<C64> = Vec::with_capacity(terms.len());
    for i in 0..first.len() {
        buf.clear();
        buf.extend(terms.iter().map(|t| t[i]));
        buf.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let mut acc = buf[0];
        for v in &buf[1..] {
            acc += v;
        }
        out[i] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_sum_ignores_order() {
        let terms: Vec<CVector> = (0..7)
            .map(|i| {
                CVector::from_fn(3, |j, _| {
                    c(
                        (i * 3 + j) as f64 * 0.1 + 1e-17 * i as f64,
                        1.0 / (i + j + 1) as f64,
                    )
                })
            })
            .collect();
        let mut rev = terms.clone();
        rev.reverse();
        rev.swap(1, 4);
        assert_eq!(canonical_sum(&terms), canonical_sum(&rev));
        let plain: CVector = terms.iter().fold(CVector::zeros(3), |a, t| a + t);
        assert!((canonical_sum(&terms) - plain).norm() < 1e-12);
        assert_eq!(canonical_sum(&terms[..1]), terms[0]);
    }
}
