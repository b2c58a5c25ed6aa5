//! Dense tensors, reverse-mode gradients, losses and the Adam optimizer.

mod adam;
mod tape;
mod tensor;

pub use adam::Adam;
pub use tape::{Binary, Tape, Unary, Var};
pub use tensor::Tensor;

pub(crate) use tape::sigmoid;

/// Uniform `[-1/√fan_in, 1/√fan_in]` initialization for a `rows × fan_in` weight.
pub fn init_weight<R: rand::Rng + ?Sized>(rows: usize, fan_in: usize, rng: &mut R) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::uniform(rows, fan_in, bound, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity_and_by_hand() {
        let mut tape = Tape::new();
        let i = tape.constant(Tensor::identity(2));
        let a = tape.constant(t(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]));
        let out = tape.matmul(i, a).unwrap();
        assert_eq!(tape.value(out), tape.value(a));
        let x = tape.constant(t(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let y = tape.constant(t(&[&[5.0], &[6.0]]));
        let z = tape.matmul(x, y).unwrap();
        assert_eq!(tape.value(z).data(), &[17.0, 39.0]);
        assert!(matches!(tape.matmul(y, y), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[&[0.0, 0.0]]));
        let s = tape.softmax_rows(x).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5, 0.5]);
        let y = tape.constant(t(&[&[3.0, -1.0, 700.0], &[-2.0, 0.5, 0.25]]));
        let s = tape.softmax_rows(y).unwrap();
        for r in tape.value(s).row_iter() {
            assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn cross_entropy_examples() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::filled(3, 4, 0.25));
        let l = tape.cross_entropy(p, &[0, 1, 3], &[0, 1, 2]).unwrap();
        assert!((tape.value(l).item().unwrap() - 4f64.ln()).abs() < 1e-15);

        let q = tape.constant(t(&[&[1.0 - 1e-12, 1e-12], &[1e-12, 1.0 - 1e-12]]));
        let l = tape.cross_entropy(q, &[0, 1], &[0, 1]).unwrap();
        assert!(tape.value(l).item().unwrap() <= 1e-11);

        let r = tape.constant(t(&[&[0.5, 0.5], &[0.9, 0.1]]));
        let l = tape.cross_entropy(r, &[0, 1], &[0]).unwrap();
        assert_eq!(tape.value(l).item().unwrap(), -(0.5f64.ln()));
        assert!(tape.cross_entropy(r, &[0, 2], &[1]).is_err());
    }

    #[test]
    fn cross_entropy_gradient_is_masked() {
        let mut tape = Tape::new();
        let p = tape.param(t(&[&[0.5, 0.5], &[0.9, 0.1]]));
        let l = tape.cross_entropy(p, &[0, 1], &[0]).unwrap();
        tape.backward(l).unwrap();
        let g = tape.grad(p);
        assert_eq!(g.row(1), &[0.0, 0.0]);
        assert_eq!(g.get(0, 0), -2.0);
    }

    #[test]
    fn bce_examples() {
        let mut tape = Tape::new();
        let s = tape.constant(Tensor::scalar(0.0));
        let l = tape.bce_logits(s, &Tensor::scalar(1.0)).unwrap();
        assert!((tape.value(l).item().unwrap() - 2f64.ln()).abs() < 1e-15);
        let s = tape.constant(Tensor::scalar(20.0));
        let l = tape.bce_logits(s, &Tensor::scalar(1.0)).unwrap();
        assert!(tape.value(l).item().unwrap() <= 1e-8);
        let s = tape.constant(t(&[&[0.0, 0.0]]));
        let l = tape.bce_logits(s, &t(&[&[1.0, 0.0]])).unwrap();
        assert!((tape.value(l).item().unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(tape.bce_logits(s, &t(&[&[0.5, 0.0]])).is_err());
    }

    #[test]
    fn backward_simple_rules() {
        let mut tape = Tape::new();
        let w = tape.param(t(&[&[1.0, -2.0], &[3.0, 0.5]]));
        let s = tape.sum(w).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w), Tensor::filled(2, 2, 1.0));

        let mut tape = Tape::new();
        let wv = t(&[&[1.0, -2.0], &[3.0, 0.5]]);
        let w = tape.param(wv.clone());
        let sq = tape.hadamard(w, w).unwrap();
        let s = tape.sum(sq).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w), wv.map(|x| 2.0 * x));
        // a second call accumulates
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(w), wv.map(|x| 4.0 * x));
        tape.zero_grad();
        assert_eq!(tape.grad(w), Tensor::zeros(2, 2));
    }

    #[test]
    fn unused_leaf_gets_exact_zero() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::filled(2, 2, 1.0));
        let b = tape.param(Tensor::filled(3, 1, 5.0));
        let s = tape.sum(a).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(b), Tensor::zeros(3, 1));
    }

    #[test]
    fn backward_needs_scalar() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::zeros(2, 2));
        assert!(tape.backward(a).is_err());
    }

    #[test]
    fn non_finite_names_the_op() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::scalar(1e300));
        let b = tape.hadamard(a, a);
        assert!(matches!(b, Err(Error::NonFinite { op: "hadamard" })));
        let c = tape.constant(Tensor::scalar(1.0));
        assert!(tape.artanh(c).is_err());
    }

    #[test]
    fn broadcasting_reduces_gradients() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]));
        let b = tape.param(t(&[&[10.0, 20.0]]));
        let c = tape.param(t(&[&[1.0], &[2.0], &[3.0]]));
        let y = tape.add(x, b).unwrap();
        let z = tape.hadamard(y, c).unwrap();
        let s = tape.sum(z).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(b).data(), &[6.0, 6.0]);
        assert_eq!(tape.grad(c).data(), &[33.0, 37.0, 41.0]);
    }

    #[test]
    fn series_branches_are_continuous() {
        let fs = [
            Unary::SinhcSqrt,
            Unary::CoshSqrt,
            Unary::TanhcSqrt { t_max: 6.0 },
            Unary::ArtanhcSqrt,
            Unary::AsinhcSqrt,
        ];
        for f in fs {
            let below = f.eval(1e-3 * (1.0 - 1e-12));
            let above = f.eval(1e-3 * (1.0 + 1e-12));
            assert!((below - above).abs() < 1e-13, "{f:?}");
        }
        let below = Unary::ArcoshRatio.eval(1.0 + 1e-3 * (1.0 - 1e-12));
        let above = Unary::ArcoshRatio.eval(1.0 + 1e-3 * (1.0 + 1e-12));
        assert!((below - above).abs() < 1e-13);
    }
}
