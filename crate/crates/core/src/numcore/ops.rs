use alloc::format;
use alloc::vec::Vec;

use super::Matrix;
use crate::error::{Error, Result};

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.rows() {
        return Err(Error::Shape(format!(
            "matmul {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = Matrix::zeros(n, m);
    for i in 0..n {
        let arow = a.row(i);
        let orow = out.row_mut(i);
        for (p, &av) in arow.iter().enumerate().take(k) {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(b.row(p)) {
                *o += av * bv;
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ` without materialising the transpose.
pub fn matmul_transb(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::Shape(format!(
            "matmul_transb {:?} x {:?}ᵀ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(Matrix::from_fn(a.rows(), b.rows(), |i, j| dot(a.row(i), b.row(j))))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Max-shifted log-sum-exp.
pub fn log_sum_exp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Domain("log-sum-exp of an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("log-sum-exp of a non-finite value".into()));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = v.iter().map(|x| libm::exp(x - max)).sum();
    Ok(max + libm::log(sum))
}

/// Max-shifted softmax.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Domain("softmax of an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("softmax of a non-finite value".into()));
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|x| libm::exp(x - max)).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= sum);
    Ok(out)
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("cosine of lengths {} and {}", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Counts key rows touched by each attention call.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ComputeMeter {
    pub key_rows_per_call: Vec<usize>,
}

impl ComputeMeter {
    pub fn calls(&self) -> usize {
        self.key_rows_per_call.len()
    }
}

/// `softmax(q kᵀ / √dim) · v`.
pub fn attention(q: &Matrix, k: &Matrix, v: &Matrix, dim: usize) -> Result<Matrix> {
    attention_metered(q, k, v, dim, None)
}

pub fn attention_metered(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
    dim: usize,
    meter: Option<&mut ComputeMeter>,
) -> Result<Matrix> {
    if k.rows() == 0 {
        return Err(Error::EmptyContext);
    }
    if q.cols() != dim || k.cols() != dim {
        return Err(Error::Shape(format!(
            "attention expects q/k width {dim}, got {} and {}",
            q.cols(),
            k.cols()
        )));
    }
    if k.rows() != v.rows() {
        return Err(Error::Shape(format!(
            "{} keys but {} values",
            k.rows(),
            v.rows()
        )));
    }
    if let Some(m) = meter {
        m.key_rows_per_call.push(k.rows());
    }
    let scale = 1.0 / libm::sqrt(dim as f64);
    let logits = matmul_transb(q, k)?.scale(scale);
    let mut weights = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        let p = softmax(logits.row(r))?;
        weights.row_mut(r).copy_from_slice(&p);
    }
    matmul(&weights, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_fixtures() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&Matrix::identity(2), &a).unwrap(), a);
        let b = m(&[&[0.0], &[1.0]]);
        assert_eq!(matmul(&a, &b).unwrap(), m(&[&[2.0], &[4.0]]));
        assert_eq!(matmul(&Matrix::zeros(2, 2), &a).unwrap(), Matrix::zeros(2, 2));
        assert!(matches!(matmul(&b, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn softmax_fixtures() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        p.iter().for_each(|x| assert!((x - 1.0 / 3.0).abs() < 1e-15));
        let p = softmax(&[libm::log(2.0), 0.0]).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let p = softmax(&[3.0, 1003.0]).unwrap();
        assert!(p[0] < 1e-300 && (p[1] - 1.0).abs() < 1e-15);
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn cosine_fixtures() {
        assert!((cosine(&[0.3, -2.0], &[0.3, -2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::DegenerateVector));
    }

    #[test]
    fn attention_singleton_and_symmetric_keys() {
        let q = m(&[&[0.3, -1.0], &[2.0, 0.5]]);
        let k = m(&[&[1.0, 1.0]]);
        let v = m(&[&[4.0, -2.0]]);
        let out = attention(&q, &k, &v, 2).unwrap();
        for r in out.iter_rows() {
            assert_eq!(r, &[4.0, -2.0]);
        }
        let k2 = m(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let v2 = m(&[&[4.0, -2.0], &[0.0, 2.0]]);
        let out = attention(&q, &k2, &v2, 2).unwrap();
        for r in out.iter_rows() {
            assert!((r[0] - 2.0).abs() < 1e-15 && r[1].abs() < 1e-15);
        }
        assert_eq!(
            attention(&q, &Matrix::zeros(0, 2), &Matrix::zeros(0, 2), 2),
            Err(Error::EmptyContext)
        );
    }

    #[test]
    fn attention_matches_naive_loops() {
        // 3 queries, 4 keys, width 4.
        let q = Matrix::from_fn(3, 4, |r, c| ((r * 7 + c * 3) % 5) as f64 * 0.37 - 0.6);
        let k = Matrix::from_fn(4, 4, |r, c| ((r * 5 + c * 2) % 7) as f64 * 0.21 - 0.5);
        let v = Matrix::from_fn(4, 4, |r, c| ((r + c * 3) % 4) as f64 - 1.5);
        let out = attention(&q, &k, &v, 4).unwrap();
        for i in 0..3 {
            let mut w = [0.0; 4];
            let mut total = 0.0;
            for j in 0..4 {
                let mut s = 0.0;
                for c in 0..4 {
                    s += q[(i, c)] * k[(j, c)];
                }
                w[j] = libm::exp(s / 2.0);
                total += w[j];
            }
            for c in 0..4 {
                let mut acc = 0.0;
                for j in 0..4 {
                    acc += w[j] / total * v[(j, c)];
                }
                assert!((out[(i, c)] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_meter_counts_key_rows() {
        let q = Matrix::from_fn(2, 3, |r, c| (r + c) as f64);
        let k = Matrix::from_fn(5, 3, |r, c| (r * c) as f64 * 0.1);
        let mut meter = ComputeMeter::default();
        attention_metered(&q, &k, &k, 3, Some(&mut meter)).unwrap();
        assert_eq!(meter.key_rows_per_call, vec![5]);
    }

    proptest::proptest! {
        #[test]
        fn softmax_sums_to_one(v in proptest::collection::vec(-700.0f64..700.0, 1..32)) {
            let p = softmax(&v).unwrap();
            proptest::prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            proptest::prop_assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
        }

        #[test]
        fn softmax_ignores_shifts(v in proptest::collection::vec(-50.0f64..50.0, 1..16), c in -100.0f64..100.0) {
            let a = softmax(&v).unwrap();
            let b = softmax(&v.iter().map(|x| x + c).collect::<Vec<_>>()).unwrap();
            for (x, y) in a.iter().zip(&b) {
                proptest::prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
