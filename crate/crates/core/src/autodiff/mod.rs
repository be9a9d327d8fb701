//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] is built fresh for every forward pass. Operations append nodes
//! and return [`Var`] handles; [`Tape::backward`] sweeps the list in reverse
//! and accumulates gradients on leaves created with [`Tape::param`].
//!
//! ```
//! use timecatcher_core::autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let w = tape.param(Tensor::from_vec(vec![1.0, -2.0])).unwrap();
//! let sq = tape.mul(w, w).unwrap();
//! let loss = tape.sum_all(sq).unwrap();
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(w).unwrap().data(), &[2.0, -4.0]);
//! ```

pub(crate) mod kernels;
mod tape;
mod tensor;

pub use tape::{softplus_scalar, Tape, Var};
pub(crate) use tape::sign as tape_sign;
pub use tensor::Tensor;

/// Output length of a strided, padded 1-D convolution, or `None` when it would be < 1.
pub fn conv1d_output_len(t_in: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    kernels::Conv1dGeom::output_len(t_in, kernel, stride, padding)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn add_componentwise_and_identity() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2], &[1.0, 2.0])).unwrap();
        let b = tape.constant(t(&[2], &[3.0, 4.0])).unwrap();
        let c = tape.add(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[4.0, 6.0]);

        let x = tape.constant(t(&[2, 2], &[0.5, -1.0, 2.0, 3.0])).unwrap();
        let z = tape.constant(Tensor::zeros([2, 2])).unwrap();
        let y = tape.add(x, z).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn broadcast_must_be_trailing() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros([2, 3])).unwrap();
        let ok = tape.constant(Tensor::ones([3])).unwrap();
        let bad = tape.constant(Tensor::ones([2])).unwrap();
        assert!(tape.add(a, ok).is_ok());
        assert!(matches!(tape.add(a, bad), Err(Error::Dimension(_))));
        assert!(matches!(tape.mul(ok, a), Err(Error::Dimension(_))));
    }

    #[test]
    fn broadcast_gradient_is_summed() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::from_fn([2, 3], |i| i as f64)).unwrap();
        let b = tape.param(t(&[3], &[1.0, 2.0, 3.0])).unwrap();
        let p = tape.mul(a, b).unwrap();
        let loss = tape.sum_all(p).unwrap();
        tape.backward(loss).unwrap();
        // d/db_j Σ_i a_ij b_j = Σ_i a_ij
        assert_eq!(tape.grad(b).unwrap().data(), &[3.0, 5.0, 7.0]);
        assert_eq!(tape.grad(a).unwrap().data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn matmul_examples() {
        let mut tape = Tape::new();
        let i2 = tape.constant(Tensor::eye(2)).unwrap();
        let m = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0])).unwrap();
        let p = tape.matmul(i2, m).unwrap();
        assert_eq!(tape.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);
        let v = tape.constant(t(&[2, 1], &[5.0, 6.0])).unwrap();
        let q = tape.matmul(m, v).unwrap();
        assert_eq!(tape.value(q).shape(), &[2, 1]);
        assert_eq!(tape.value(q).data(), &[17.0, 39.0]);
        assert!(matches!(tape.matmul(v, v), Err(Error::Dimension(_))));
        // [[1,2],[3,4]] · [[5,6]]ᵀ
        let w = tape.constant(t(&[1, 2], &[5.0, 6.0])).unwrap();
        let r = tape.matmul_nt(m, w).unwrap();
        assert_eq!(tape.value(r).data(), &[17.0, 39.0]);
        assert!(matches!(tape.matmul_nt(m, v), Err(Error::Dimension(_))));
    }

    #[test]
    fn conv1d_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 1, 3], &[1.0, 2.0, 3.0])).unwrap();
        let id = tape.constant(t(&[1, 1, 1], &[1.0])).unwrap();
        let y = tape.conv1d(x, id, None, 1, 0).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0]);
        let pair = tape.constant(t(&[1, 1, 2], &[1.0, 1.0])).unwrap();
        let y = tape.conv1d(x, pair, None, 1, 0).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 5.0]);
        let wide = tape.constant(Tensor::ones([1, 1, 6])).unwrap();
        assert!(matches!(tape.conv1d(x, wide, None, 1, 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn conv1d_padding_and_stride() {
        // x = [1,2,3,4], kernel [1,0,-1], padding 1, stride 2:
        // padded = [0,1,2,3,4,0]; outputs at 0 and 2: 0-2 = -2, 2-4 = -2
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 1, 4], &[1.0, 2.0, 3.0, 4.0])).unwrap();
        let k = tape.constant(t(&[1, 1, 3], &[1.0, 0.0, -1.0])).unwrap();
        let b = tape.constant(t(&[1], &[0.5])).unwrap();
        let y = tape.conv1d(x, k, Some(b), 2, 1).unwrap();
        assert_eq!(tape.value(y).data(), &[-1.5, -1.5]);
    }

    #[test]
    fn elementwise_closed_forms() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2], &[-1.0, 2.0])).unwrap();
        let r = tape.relu(x);
        assert_eq!(tape.value(r).data(), &[0.0, 2.0]);
        let z = tape.constant(Tensor::scalar(0.0)).unwrap();
        let sp = tape.softplus(z);
        assert!((tape.value(sp).item().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let big = tape.constant(Tensor::scalar(1000.0)).unwrap();
        let sp = tape.softplus(big);
        assert_eq!(tape.value(sp).item().unwrap(), 1000.0);
        let s = tape.constant(t(&[3], &[-0.5, 0.0, 4.0])).unwrap();
        let sg = tape.sign(s);
        assert_eq!(tape.value(sg).data(), &[-1.0, 0.0, 1.0]);
        let neg = tape.constant(t(&[2], &[1.0, 0.0])).unwrap();
        assert!(matches!(tape.log(neg), Err(Error::Domain(_))));
    }

    #[test]
    fn sign_and_detach_block_gradient() {
        let mut tape = Tape::new();
        let w = tape.param(t(&[2], &[0.3, -0.7])).unwrap();
        let s = tape.sign(w);
        let d = tape.detach(w);
        assert!(!tape.requires_grad(s));
        assert!(!tape.requires_grad(d));
        let p = tape.mul(s, d).unwrap();
        let loss = tape.sum_all(p).unwrap();
        tape.backward(loss).unwrap();
        assert!(tape.grad(w).is_none());
    }

    #[test]
    fn abs_subgradient_zero_at_kink() {
        let mut tape = Tape::new();
        let w = tape.param(t(&[3], &[-2.0, 0.0, 3.0])).unwrap();
        let a = tape.abs(w);
        let loss = tape.sum_all(a).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn reductions_and_shape_ops() {
        let mut tape = Tape::new();
        let x = tape.param(t(&[3], &[1.0, 2.0, 3.0])).unwrap();
        let m = tape.mean_all(x).unwrap();
        assert_eq!(tape.value(m).item().unwrap(), 2.0);

        let y = tape.param(Tensor::from_fn([2, 3, 4], |i| (i as f64).sin())).unwrap();
        let s01 = tape.sum(y, &[0, 2]).unwrap();
        assert_eq!(tape.value(s01).shape(), &[3]);
        let r = tape.reshape(y, &[6, 4]).unwrap();
        let back = tape.reshape(r, &[2, 3, 4]).unwrap();
        assert_eq!(tape.value(back), tape.value(y));
        assert!(tape.sum(y, &[3]).is_err());
        assert!(tape.slice(y, 1, 2, 4).is_err());

        let total = tape.sum_all(y).unwrap();
        tape.backward(total).unwrap();
        assert!(tape.grad(y).unwrap().data().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn slice_concat_round_trip() {
        let mut tape = Tape::new();
        let y = tape.constant(Tensor::from_fn([2, 5, 3], |i| i as f64)).unwrap();
        let a = tape.slice(y, 1, 0, 2).unwrap();
        let b = tape.slice(y, 1, 2, 5).unwrap();
        let c = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(tape.value(c), tape.value(y));
    }

    #[test]
    fn backward_rejects_non_scalar_and_accumulates() {
        let mut tape = Tape::new();
        let w = tape.param(t(&[2], &[1.0, -2.0])).unwrap();
        let sq = tape.mul(w, w).unwrap();
        assert!(matches!(tape.backward(sq), Err(Error::Contract(_))));
        let loss = tape.sum_all(sq).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[2.0, -4.0]);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[4.0, -8.0]);
        tape.zero_grad();
        assert!(tape.grad(w).is_none());
    }

    #[test]
    fn ema_rejects_bad_alpha() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::ones([4])).unwrap();
        assert!(matches!(tape.ema_trend(x, 0.0, 0), Err(Error::Parameter(_))));
        assert!(matches!(tape.ema_trend(x, 1.5, 0), Err(Error::Parameter(_))));
        assert!(tape.ema_trend(x, 1.0, 0).is_ok());
    }
}
