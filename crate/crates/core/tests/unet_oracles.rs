mod common;

use proptest::prelude::*;
use strokepatch::train::{adam_update, AdamConfig};
use strokepatch::unet::{conv2d_same, instance_norm2d, mse_loss, ParamTensor, Tensor};

fn tensor(c: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
    Tensor::from_vec(c, h, w, common::uniform_vec(c * h * w, -1.0, 1.0, seed)).unwrap()
}

#[test]
fn conv_matches_direct_loops() {
    let x = tensor(2, 5, 5, 1);
    let w = common::uniform_vec(3 * 2 * 9, -1.0, 1.0, 2);
    let b = common::uniform_vec(3, -1.0, 1.0, 3);
    let weight = ParamTensor::new(vec![3, 2, 3, 3], w.clone()).unwrap();
    let bias = ParamTensor::new(vec![3], b.clone()).unwrap();
    let got = conv2d_same(&x, &weight, Some(&bias)).unwrap();
    let want = common::naive_conv3(&x.data, 2, 5, 5, &w, 3, &b);
    assert_eq!((got.c, got.h, got.w), (3, 5, 5));
    for (g, e) in got.data.iter().zip(&want) {
        assert!((g - e).abs() < 1e-5);
    }

    let f = |v: &[f64]| v.iter().map(|&a| a as f32).collect::<Vec<f32>>();
    let x32 = Tensor::from_vec(2, 5, 5, f(&x.data)).unwrap();
    let w32 = ParamTensor::new(vec![3, 2, 3, 3], f(&w)).unwrap();
    let b32 = ParamTensor::new(vec![3], f(&b)).unwrap();
    let got32 = conv2d_same(&x32, &w32, Some(&b32)).unwrap();
    for (g, e) in got32.data.iter().zip(&want) {
        assert!((*g as f64 - e).abs() < 1e-5);
    }
}

#[test]
fn pointwise_conv_is_a_channel_mix() {
    let x = tensor(2, 3, 4, 4);
    let weight = ParamTensor::new(vec![1, 2, 1, 1], vec![0.5, -2.0]).unwrap();
    let got = conv2d_same(&x, &weight, None).unwrap();
    for i in 0..12 {
        let want = 0.5 * x.data[i] - 2.0 * x.data[12 + i];
        assert!((got.data[i] - want).abs() < 1e-12);
    }
}

#[test]
fn norm_of_two_level_channel() {
    let x = Tensor::from_vec(1, 2, 2, vec![0.0, 2.0, 0.0, 2.0]).unwrap();
    let y = instance_norm2d(&x, &[1.0], &[0.0], 0.0).unwrap();
    assert_eq!(y.data, vec![-1.0, 1.0, -1.0, 1.0]);
}

#[test]
fn norm_matches_direct_computation() {
    let x = tensor(3, 6, 7, 5);
    let gamma = common::uniform_vec(3, 0.5, 2.0, 6);
    let beta = common::uniform_vec(3, -1.0, 1.0, 7);
    let got = instance_norm2d(&x, &gamma, &beta, 1e-5).unwrap();
    let want = common::naive_instance_norm(&x.data, 3, 42, &gamma, &beta, 1e-5);
    for (g, e) in got.data.iter().zip(&want) {
        assert!((g - e).abs() < 1e-10);
    }
}

#[test]
fn norm_affine_is_applied_after_standardizing() {
    let x = tensor(1, 8, 8, 8);
    let base = instance_norm2d(&x, &[1.0], &[0.0], 1e-5).unwrap();
    let out = instance_norm2d(&x, &[2.0], &[3.0], 1e-5).unwrap();
    for (o, b) in out.data.iter().zip(&base.data) {
        assert_eq!(*o, 2.0 * b + 3.0);
    }
}

#[test]
fn mse_matches_loop() {
    let ys: Vec<Tensor<f64>> = (0..3).map(|s| tensor(3, 4, 5, 10 + s)).collect();
    let ts: Vec<Tensor<f64>> = (0..3).map(|s| tensor(3, 4, 5, 20 + s)).collect();
    let rec = mse_loss(&ys, &ts).unwrap();
    let mut sum = 0.0;
    let mut n = 0usize;
    for (y, t) in ys.iter().zip(&ts) {
        for (a, b) in y.data.iter().zip(&t.data) {
            sum += (a - b) * (a - b);
            n += 1;
        }
    }
    let want = sum / n as f64;
    assert!((rec.value() - want).abs() < 1e-7);
    for (k, g) in rec.output_grads().iter().enumerate() {
        for i in 0..g.data.len() {
            let d = 2.0 * (ys[k].data[i] - ts[k].data[i]) / n as f64;
            assert!((g.data[i] - d).abs() < 1e-12);
        }
    }
}

#[test]
fn mse_extremes() {
    let y = tensor(3, 4, 4, 30);
    assert_eq!(mse_loss(&[y.clone()], &[y]).unwrap().value(), 0.0);
    let zeros = Tensor::<f32>::zeros(3, 4, 4);
    let ones = Tensor::from_vec(3, 4, 4, vec![1.0f32; 48]).unwrap();
    assert_eq!(mse_loss(&[zeros], &[ones]).unwrap().value(), 1.0);
}

#[test]
fn adam_follows_scalar_recurrence() {
    let cfg = AdamConfig::default();
    let mut p = vec![3.0f64, -1.5];
    let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
    for t in 1..=25u64 {
        let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
        adam_update(&mut p, &g, &mut m, &mut v, t, 0.05, &cfg);
    }
    let want = [
        common::scalar_adam(3.0, |x| 2.0 * x, 25, 0.05),
        common::scalar_adam(-1.5, |x| 2.0 * x, 25, 0.05),
    ];
    for (a, b) in p.iter().zip(want) {
        assert!((a - b).abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn norm_output_is_standardized(seed in 0u64..10_000, c in 1usize..4, h in 8usize..16, w in 8usize..16, scale in 0.1f64..50.0, shift in -10.0f64..10.0) {
        let mut x = tensor(c, h, w, seed);
        for v in &mut x.data {
            *v = *v * scale + shift;
        }
        let y = instance_norm2d(&x, &vec![1.0; c], &vec![0.0; c], 1e-5).unwrap();
        let hw = (h * w) as f64;
        for ch in 0..c {
            let p = y.plane(ch);
            let mean = p.iter().sum::<f64>() / hw;
            let std = (p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / hw).sqrt();
            prop_assert!(mean.abs() < 1e-5);
            prop_assert!((std - 1.0).abs() < 1e-3, "std {}", std);
        }
    }

    #[test]
    fn conv_is_linear_in_input(seed in 0u64..10_000, a in -2.0f64..2.0) {
        let x = tensor(2, 4, 6, seed);
        let weight = ParamTensor::new(vec![2, 2, 3, 3], common::uniform_vec(36, -1.0, 1.0, seed + 1)).unwrap();
        let mut ax = x.clone();
        ax.data.iter_mut().for_each(|v| *v *= a);
        let y = conv2d_same(&x, &weight, None).unwrap();
        let ay = conv2d_same(&ax, &weight, None).unwrap();
        for (p, q) in ay.data.iter().zip(&y.data) {
            prop_assert!((p - a * q).abs() < 1e-9);
        }
    }
}
