use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::check;
use super::ops;
use super::*;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn probe(rng: &mut ChaCha8Rng, t: &Tape, v: Var) -> Tensor {
    rand_tensor(rng, t.value(v).shape())
}

#[test]
fn conv_shapes_follow_cnn_and_extraction_tables() {
    let spec = ConvSpec::time(1, 9, 32).with_stride_w(2);
    let x = Tensor::zeros(&[1, 6, 128]);
    let y = ops::conv2d(&x, spec, &Tensor::zeros(&[32, 1, 1, 9]), &Tensor::zeros(&[32])).unwrap();
    assert_eq!(y.shape(), &[32, 6, 64]);

    let spec = ConvSpec::time(1, 16, 64);
    let x = Tensor::zeros(&[1, 6, 1024]);
    let y = ops::conv2d(&x, spec, &Tensor::zeros(&[64, 1, 1, 16]), &Tensor::zeros(&[64])).unwrap();
    assert_eq!(y.shape(), &[64, 6, 1024]);
}

#[test]
fn unit_kernel_conv_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_tensor(&mut rng, &[1, 6, 20]);
    let y = ops::conv2d(
        &x,
        ConvSpec::time(1, 1, 1),
        &Tensor::full(&[1, 1, 1, 1], 1.0),
        &Tensor::zeros(&[1]),
    )
    .unwrap();
    assert_eq!(y, x);
}

#[test]
fn conv_rejects_bad_weights_and_oversized_kernels() {
    let x = Tensor::zeros(&[2, 6, 10]);
    let spec = ConvSpec::time(1, 3, 4);
    let err = ops::conv2d(&x, spec, &Tensor::zeros(&[4, 1, 1, 3]), &Tensor::zeros(&[4]));
    assert!(matches!(err, Err(crate::GaitError::Shape(_))));
    let spec = ConvSpec {
        kernel_h: 7,
        kernel_w: 1,
        out_channels: 1,
        stride_h: 1,
        stride_w: 1,
        pad_mode: PadMode::Valid,
    };
    let err = ops::conv2d(&x, spec, &Tensor::zeros(&[1, 2, 7, 1]), &Tensor::zeros(&[1]));
    assert!(matches!(err, Err(crate::GaitError::Shape(_))));
}

#[test]
fn maxpool_examples() {
    let y = ops::maxpool2d(&Tensor::zeros(&[32, 6, 64]), 1, 2, 2).unwrap();
    assert_eq!(y.shape(), &[32, 6, 32]);

    let c = ops::maxpool2d(&Tensor::full(&[2, 3, 8], 4.5), 1, 2, 2).unwrap();
    assert!(c.data().iter().all(|&v| v == 4.5));

    let x = Tensor::new(vec![1, 1, 4], vec![3.0, 1.0, 4.0, 1.0]).unwrap();
    let y = ops::maxpool2d(&x, 1, 2, 2).unwrap();
    assert_eq!(y.data(), &[3.0, 4.0]);

    assert!(ops::maxpool2d(&Tensor::zeros(&[1, 1, 1]), 1, 2, 2).is_err());
}

#[test]
fn maxpool_gradient_goes_to_first_argmax() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::new(vec![1, 1, 1, 4], vec![2.0, 2.0, 1.0, 5.0]).unwrap());
    let y = tape.maxpool2d(x, 1, 2, 2).unwrap();
    let l = tape.weighted_sum(y, Tensor::full(&[1, 1, 1, 2], 1.0)).unwrap();
    let g = tape.backward(l).unwrap().wrt(x);
    assert_eq!(g.data(), &[1.0, 0.0, 0.0, 1.0]);
}

#[test]
fn upconv_shapes() {
    let y = ops::transposed_conv_time(
        &Tensor::zeros(&[256, 6, 256]),
        &Tensor::zeros(&[256, 128, 1, 2]),
        &Tensor::zeros(&[128]),
    )
    .unwrap();
    assert_eq!(y.shape(), &[128, 6, 512]);
    let y = ops::transposed_conv_time(
        &Tensor::zeros(&[64, 6, 512]),
        &Tensor::zeros(&[64, 64, 1, 2]),
        &Tensor::zeros(&[64]),
    )
    .unwrap();
    assert_eq!(y.shape(), &[64, 6, 1024]);
}

#[test]
fn upconv_matches_hand_unrolled_adjoint() {
    // Stride-2 1×2 conv with unit weights maps [y0,y1,y2,y3] -> [y0+y1, y2+y3].
    // Its adjoint maps [x0,x1] -> [x0,x0,x1,x1].
    let x = Tensor::new(vec![1, 1, 2], vec![0.7, -1.3]).unwrap();
    let w = Tensor::full(&[1, 1, 1, 2], 1.0);
    let up = ops::transposed_conv_time(&x, &w, &Tensor::zeros(&[1])).unwrap();
    assert_eq!(up.data(), &[0.7, 0.7, -1.3, -1.3]);

    // <up(x), y> == <x, conv(y)> for random weights.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_tensor(&mut rng, &[3, 2, 5]);
    let w = rand_tensor(&mut rng, &[3, 4, 1, 2]);
    let y = rand_tensor(&mut rng, &[4, 2, 10]);
    let up = ops::transposed_conv_time(&x, &w, &Tensor::zeros(&[4])).unwrap();
    let spec = ConvSpec {
        kernel_h: 1,
        kernel_w: 2,
        out_channels: 3,
        stride_h: 1,
        stride_w: 2,
        pad_mode: PadMode::Valid,
    };
    let down = ops::conv2d(&y, spec, &w, &Tensor::zeros(&[3])).unwrap();
    let lhs: f64 = up.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
    let rhs: f64 = x.data().iter().zip(down.data()).map(|(a, b)| a * b).sum();
    assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
}

#[test]
fn affine_examples() {
    let x = Tensor::from_vec(vec![1.0, 2.0]);
    let w = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let y = ops::affine(&x, &w, &Tensor::from_vec(vec![1.0, 1.0])).unwrap();
    assert_eq!(y.data(), &[2.0, 3.0]);
    let y = ops::affine(&x, &w, &Tensor::zeros(&[2])).unwrap();
    assert_eq!(y.data(), x.data());

    let feat = Tensor::zeros(&[3072]);
    let y = ops::affine(&feat, &Tensor::zeros(&[3072, 118]), &Tensor::zeros(&[118])).unwrap();
    assert_eq!(y.shape(), &[118]);
    assert!(ops::affine(&feat, &Tensor::zeros(&[3071, 118]), &Tensor::zeros(&[118])).is_err());
}

#[test]
fn activation_examples() {
    let x = Tensor::from_vec(vec![-1.0, 2.0]);
    assert_eq!(ops::activation(Activation::Relu, &x).data(), &[0.0, 2.0]);
    let s = ops::activation(Activation::Sigmoid, &Tensor::scalar(0.0));
    assert_eq!(s.data(), &[0.5]);

    let mut tape = Tape::new();
    let v = tape.param(Tensor::scalar(0.0));
    let y = tape.tanh(v).unwrap();
    let g = tape.backward(y).unwrap().wrt(v).data()[0];
    let eps = 1e-5;
    let fd = ((eps as f64).tanh() - (-eps as f64).tanh()) / (2.0 * eps);
    assert_eq!(g, 1.0);
    assert!((g - fd).abs() < 1e-8);
}

#[test]
fn concat_examples() {
    let a = Tensor::zeros(&[128, 6, 512]);
    let y = ops::concat(&[&a, &a], 0).unwrap();
    assert_eq!(y.shape(), &[256, 6, 512]);
    let one = ops::concat(&[&a], 0).unwrap();
    assert_eq!(one, a);
    let f1 = Tensor::zeros(&[1024]);
    let f2 = Tensor::zeros(&[2048]);
    assert_eq!(ops::concat(&[&f1, &f2], 0).unwrap().shape(), &[3072]);
    assert!(ops::concat(&[&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[3, 3])], 1).is_err());
}

#[test]
fn softmax_examples() {
    let y = ops::softmax(&Tensor::from_vec(vec![0.0, 0.0]));
    assert_eq!(y.data(), &[0.5, 0.5]);
    let y = ops::softmax(&Tensor::from_vec(vec![1000.0, 0.0]));
    assert!(y.data()[0] > 1.0 - 1e-12 && y.data()[1] < 1e-12);
    assert!(y.data().iter().all(|v| v.is_finite()));

    let y = ops::softmax(&Tensor::from_vec(vec![1.0, 2.0, 3.0]));
    let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
    for (i, v) in y.data().iter().enumerate() {
        assert_abs_diff_eq!(*v, ((i + 1) as f64).exp() / z, epsilon = 1e-12);
    }
}

#[test]
fn softmax_cross_entropy_gradient_matches_finite_difference() {
    let logits = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
    let target = Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
    let r = check(&[logits], 1e-5, |t, v| {
        let p = t.softmax(v[0])?;
        t.binary_ce(p, target.clone(), 1.0)
    })
    .unwrap();
    assert!(r.max_rel_err < 1e-6, "{r:?}");
}

#[test]
fn unused_parameter_has_zero_gradient() {
    let mut tape = Tape::new();
    let a = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
    let unused = tape.param(Tensor::from_vec(vec![3.0, 4.0, 5.0]));
    let l = tape.weighted_sum(a, Tensor::from_vec(vec![1.0, 1.0])).unwrap();
    let g = tape.backward(l).unwrap();
    assert_eq!(g.wrt(unused).data(), &[0.0, 0.0, 0.0]);
}

#[test]
fn backward_requires_scalar_loss() {
    let mut tape = Tape::new();
    let a = tape.param(Tensor::from_vec(vec![1.0, 2.0]));
    let y = tape.relu(a).unwrap();
    assert!(matches!(tape.backward(y), Err(crate::GaitError::Usage(_))));
}

#[test]
fn conv_weight_gradient_on_tiny_input() {
    let x = Tensor::new(vec![1, 1, 1, 4], vec![0.3, -0.2, 0.9, 0.5]).unwrap();
    let w = Tensor::new(vec![1, 1, 1, 3], vec![0.1, -0.4, 0.25]).unwrap();
    let b = Tensor::from_vec(vec![0.05]);
    let probe = Tensor::new(vec![1, 1, 1, 4], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
    let r = check(&[x, w, b], 1e-5, |t, v| {
        let y = t.conv2d(v[0], v[1], v[2], ConvSpec::time(1, 3, 1))?;
        t.weighted_sum(y, probe.clone())
    })
    .unwrap();
    assert!(r.max_rel_err < 1e-6, "{r:?}");
}

#[test]
fn non_finite_output_is_a_numeric_fault() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::from_vec(vec![1e308, 1e308]));
    let b = tape.constant(Tensor::from_vec(vec![1e308, 1e308]));
    assert!(matches!(tape.add(a, b), Err(crate::GaitError::Numeric(_))));
}

#[test]
fn every_op_passes_gradient_check_on_random_points() {
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_tensor(&mut rng, &[2, 2, 3, 7]);
        let w = rand_tensor(&mut rng, &[3, 2, 2, 3]);
        let b = rand_tensor(&mut rng, &[3]);
        let spec = ConvSpec::time(2, 3, 3).with_stride_w(2);
        let mut t = Tape::new();
        let (xv, wv, bv) = (t.constant(x.clone()), t.constant(w.clone()), t.constant(b.clone()));
        let y = t.conv2d(xv, wv, bv, spec).unwrap();
        let p = probe(&mut rng, &t, y);
        let r = check(&[x, w, b], 1e-5, |t, v| {
            let y = t.conv2d(v[0], v[1], v[2], spec)?;
            t.weighted_sum(y, p.clone())
        })
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "conv seed {seed}: {r:?}");

        let a = rand_tensor(&mut rng, &[3, 4]);
        let m = rand_tensor(&mut rng, &[4, 5]);
        let bias = rand_tensor(&mut rng, &[5]);
        let p = rand_tensor(&mut rng, &[3, 5]);
        let r = check(&[a, m, bias], 1e-5, |t, v| {
            let z = t.affine(v[0], v[1], v[2])?;
            let s = t.sigmoid(z)?;
            let h = t.tanh(s)?;
            let q = t.mul(h, s)?;
            t.weighted_sum(q, p.clone())
        })
        .unwrap();
        assert!(r.max_rel_err < 1e-4, "affine seed {seed}: {r:?}");
    }
}

proptest! {
    #[test]
    fn concat_then_narrow_recovers_parts(
        sizes in proptest::collection::vec(1usize..4, 1..4),
        axis in 0usize..3,
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parts: Vec<Tensor> = sizes
            .iter()
            .map(|&s| {
                let mut shape = vec![2, 3, 2];
                shape[axis] = s;
                rand_tensor(&mut rng, &shape)
            })
            .collect();
        let refs: Vec<&Tensor> = parts.iter().collect();
        let whole = Tensor::concat(&refs, axis).unwrap();
        let mut start = 0;
        for p in &parts {
            let len = p.shape()[axis];
            prop_assert_eq!(&whole.narrow(axis, start, len).unwrap(), p);
            start += len;
        }
    }

    #[test]
    fn softmax_sums_to_one_and_is_permutation_equivariant(
        logits in proptest::collection::vec(-50.0f64..50.0, 1..12),
        rot in 0usize..12,
    ) {
        let y = ops::softmax(&Tensor::from_vec(logits.clone()));
        prop_assert!((y.sum() - 1.0).abs() < 1e-12);
        prop_assert!(y.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let k = logits.len();
        let r = rot % k;
        let mut rotated = logits.clone();
        rotated.rotate_left(r);
        let yr = ops::softmax(&Tensor::from_vec(rotated));
        let mut expect = y.data().to_vec();
        expect.rotate_left(r);
        for (a, b) in yr.data().iter().zip(&expect) {
            prop_assert!((a - b).abs() < 1e-15);
        }
    }
}
