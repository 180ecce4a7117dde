//! Dense matrix primitives, stable activations, seeded randomness and a
//! finite-difference gradient oracle.

mod matrix;
mod rng;
mod scalar;

pub use matrix::Matrix;
pub use rng::{derive_seed, sample_standard_normal, SeededRng};
pub use scalar::Scalar;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn softplus_scalar<T: Scalar>(x: T) -> T {
    if x > T::softplus_cutoff() {
        x
    } else {
        // log1p(e^x) = max(x, 0) + log1p(e^{-|x|})
        x.max(T::zero()) + (-x.abs()).exp().ln_1p()
    }
}

#[inline]
pub fn logistic<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn softplus<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| softplus_scalar(v)).collect()
}

/// Derivative of [`softplus`], the logistic function.
pub fn softplus_grad<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| logistic(v)).collect()
}

pub fn logsumexp<T: Scalar>(v: &[T]) -> T {
    let m = v.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    if m == T::neg_infinity() {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}

pub fn log_softmax<T: Scalar>(v: &[T]) -> Vec<T> {
    let lse = logsumexp(v);
    v.iter().map(|&x| x - lse).collect()
}

pub fn softmax<T: Scalar>(v: &[T]) -> Vec<T> {
    let m = v.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let mut out: Vec<T> = v.iter().map(|&x| (x - m).exp()).collect();
    let s: T = out.iter().copied().sum();
    out.iter_mut().for_each(|x| *x = *x / s);
    out
}

/// Central differences `(f(x + h eᵢ) - f(x - h eᵢ)) / 2h` for every coordinate.
pub fn finite_difference_gradient<T: Scalar>(
    mut f: impl FnMut(&[T]) -> T,
    x: &[T],
    h: T,
) -> Vec<T> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (T::two() * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softplus_values() {
        assert!((softplus(&[0.0f64])[0] - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(&[100.0f64])[0] - 100.0).abs() < 1e-12);
        assert_eq!(softplus_grad(&[0.0f64])[0], 0.5);
        assert!(softplus(&[-800.0f64])[0] >= 0.0);
        assert!(softplus(&[-800.0f64])[0].is_finite());
    }

    #[test]
    fn log_softmax_values() {
        let u = log_softmax(&[0.0f64, 0.0]);
        assert!(u.iter().all(|&x| (x + std::f64::consts::LN_2).abs() < 1e-15));
        let v = log_softmax(&[1.0f64, 2.0, 3.0]);
        let expected = [-2.407606, -1.407606, -0.407606];
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).abs() < 1e-6);
        }
        let big = log_softmax(&[1000.0f64, 0.0]);
        assert!(big.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn fd_polynomial_and_constant() {
        let g = finite_difference_gradient(|x: &[f64]| x[0] * x[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-6);
        let g = finite_difference_gradient(|_: &[f64]| 4.2, &[1.0, 2.0, 3.0], 1e-5);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fd_matches_softplus_grad() {
        let x = [0.0f64; 4];
        let g = finite_difference_gradient(|v: &[f64]| softplus(v).iter().sum(), &x, 1e-5);
        for gi in g {
            assert!((gi - 0.5).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn log_softmax_normalises(v in proptest::collection::vec(-50.0f64..50.0, 1..30)) {
            let s: f64 = log_softmax(&v).iter().map(|x| x.exp()).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn log_softmax_shift_invariant(v in proptest::collection::vec(-20.0f64..20.0, 1..10), c in -100.0f64..100.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let a = log_softmax(&v);
            let b = log_softmax(&shifted);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn matmul_is_associative(seed in 0u64..1000) {
            let mut rng = SeededRng::new(seed);
            let (p, q, r, s) = (1 + rng.below(5), 1 + rng.below(5), 1 + rng.below(5), 1 + rng.below(5));
            let mut draw = |rows, cols| {
                Matrix::new(rows, cols, sample_standard_normal::<f64>(&mut rng, rows * cols)).unwrap()
            };
            let a = draw(p, q);
            let b = draw(q, r);
            let c = draw(r, s);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let scale = left.data().iter().fold(1.0f64, |m, x| m.max(x.abs()));
            prop_assert!(left.max_abs_diff(&right) <= 1e-9 * scale);
        }

        #[test]
        fn outputs_stay_finite(v in proptest::collection::vec(-700.0f64..700.0, 1..20)) {
            prop_assert!(softplus(&v).iter().all(|x| x.is_finite()));
            prop_assert!(softplus_grad(&v).iter().all(|x| x.is_finite()));
            prop_assert!(log_softmax(&v).iter().all(|x| x.is_finite()));
            prop_assert!(softmax(&v).iter().all(|x| x.is_finite()));
        }
    }
}
