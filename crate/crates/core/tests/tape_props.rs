use hgin_core::kernels::{ConvGeometry, Padding};
use hgin_core::{Tape, Tensor};
use proptest::prelude::*;

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Backward through conv2d is the exact adjoint of the forward map.
    #[test]
    fn conv_backward_is_adjoint(
        h in 1usize..9, w in 1usize..9, cin in 1usize..4, cout in 1usize..4,
        k in prop::sample::select(vec![1usize, 3, 5]), stride in 1usize..3, dilation in 1usize..3,
        seed in values(64),
    ) {
        let x = Tensor::from_fn(&[1, h, w, cin], |i| seed[i % 64]);
        let kern = Tensor::from_fn(&[k, k, cin, cout], |i| seed[(i * 7 + 3) % 64]);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let kv = tape.constant(kern.clone());
        let y = tape.conv2d(xv, kv, None, stride, dilation, Padding::Same).unwrap();
        let (oh, ow) = (h.div_ceil(stride), w.div_ceil(stride));
        prop_assert_eq!(tape.shape(y), &[1, oh, ow, cout]);
        let probe = Tensor::from_fn(tape.shape(y), |i| seed[(i * 5 + 1) % 64]);
        let pv = tape.constant(probe.clone());
        let prod = tape.mul(y, pv).unwrap();
        let loss = tape.sum(prod);
        let grads = tape.backward(loss).unwrap();
        let lhs = dot(tape.value(y), &probe);
        prop_assert!((dot(grads.wrt(xv).unwrap(), &x) - lhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        prop_assert!((dot(grads.wrt(kv).unwrap(), &kern) - lhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn same_padding_output_size(n in 1usize..40, k in 1usize..8, stride in 1usize..4, dilation in 1usize..4) {
        let g = ConvGeometry::new(&[1, n, n, 1], &[k, k, 1, 1], stride, dilation, Padding::Same).unwrap();
        prop_assert_eq!(g.output_shape(), [1, n.div_ceil(stride), n.div_ceil(stride), 1]);
    }

    #[test]
    fn matmul_gradients_match_transposes(a in values(6), b in values(12)) {
        let at = Tensor::new(&[2, 3], a).unwrap();
        let bt = Tensor::new(&[3, 4], b).unwrap();
        let mut tape = Tape::new();
        let av = tape.constant(at.clone());
        let bv = tape.constant(bt.clone());
        let c = tape.matmul(av, bv).unwrap();
        let loss = tape.sum(c);
        let g = tape.backward(loss).unwrap();
        let ones = Tensor::ones(&[2, 4]);
        prop_assert_eq!(g.wrt(av).unwrap(), &ones.matmul(&bt.transpose2().unwrap()).unwrap());
        prop_assert_eq!(g.wrt(bv).unwrap(), &at.transpose2().unwrap().matmul(&ones).unwrap());
    }

    /// Smooth unary ops agree with central differences.
    #[test]
    fn smooth_unary_derivatives(x in -3.0f64..3.0, op in 0usize..6) {
        let f = |tape: &mut Tape, v| match op {
            0 => tape.exp(v),
            1 => tape.tanh(v),
            2 => tape.sigmoid(v),
            3 => tape.softplus(v),
            4 => tape.elu(v),
            _ => tape.powf(v, 3.0),
        };
        let eval = |x: f64| {
            let mut t = Tape::new();
            let v = t.constant(Tensor::scalar(x));
            let y = f(&mut t, v);
            t.value(y).item().unwrap()
        };
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::scalar(x));
        let y = f(&mut tape, v);
        let g = tape.backward(y).unwrap().wrt(v).unwrap().item().unwrap();
        let h = 1e-6;
        let numeric = (eval(x + h) - eval(x - h)) / (2.0 * h);
        prop_assert!((g - numeric).abs() <= 1e-6 * (1.0 + g.abs()), "op {} at {}: {} vs {}", op, x, g, numeric);
    }

    #[test]
    fn upsample_then_pool_is_pool(h in 1usize..6, w in 1usize..6, c in 1usize..3, v in values(36)) {
        let x = Tensor::from_fn(&[1, h, w, c], |i| v[i % 36]);
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let up = tape.upsample_nearest(xv, 2).unwrap();
        let a = tape.global_avg_pool(up).unwrap();
        let b = tape.global_avg_pool(xv).unwrap();
        prop_assert!(tape.value(a).zip_map(tape.value(b), |p, q| (p - q).abs()).unwrap().max_abs() < 1e-12);
    }
}
