mod common;

use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use strokepatch::imageops::{
    add_noise, crop, gaussian_blur, pad_to_multiple, resize, resize_to, sample_noise, BlurKernel,
};
use strokepatch::rng::{stream, Domain};
use strokepatch::{Dims, ImageTensor, NoiseSpec};

fn image(c: usize, h: usize, w: usize, seed: u64, lo: f64, hi: f64) -> ImageTensor {
    let data = common::uniform_vec(c * h * w, lo, hi, seed).into_iter().map(|v| v as f32).collect();
    ImageTensor::from_vec(c, h, w, data).unwrap()
}

#[test]
fn blur_impulse_is_outer_product_of_taps() {
    let mut img = ImageTensor::zeros(1, 31, 31);
    img.set(0, 15, 15, 1.0);
    let out = gaussian_blur(&img, 5.0).unwrap();
    let taps = common::gaussian_taps(5.0);
    let half = (taps.len() / 2) as i64;
    for y in 0..31i64 {
        for x in 0..31i64 {
            let (dy, dx) = (y - 15, x - 15);
            let want = if dy.abs() <= half && dx.abs() <= half {
                taps[(dy + half) as usize] * taps[(dx + half) as usize]
            } else {
                0.0
            };
            let got = out.get(0, y as usize, x as usize) as f64;
            assert!((got - want).abs() < 1e-6, "({y},{x}) {got} vs {want}");
        }
    }
}

#[test]
fn kernel_taps_match_the_definition() {
    for radius in [0.5, 2.5, 5.0, 7.3] {
        let k = BlurKernel::gaussian(radius).unwrap();
        let want = common::gaussian_taps(radius);
        assert_eq!(k.weights().len(), want.len());
        for (a, b) in k.weights().iter().zip(&want) {
            assert!((*a as f64 - b).abs() < 1e-7);
        }
    }
}

#[test]
fn ramp_upscale_matches_half_pixel_bilinear() {
    let img = ImageTensor::from_vec(1, 1, 4, vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]).unwrap();
    let out = resize(&img, 2.0).unwrap();
    assert_eq!((out.height(), out.width()), (2, 8));
    // Output i samples source coordinate i/2 - 1/4, clamped to [0, 3].
    let want = [0.0, 1.0 / 12.0, 0.25, 5.0 / 12.0, 7.0 / 12.0, 0.75, 11.0 / 12.0, 1.0];
    for row in 0..2 {
        for (i, w) in want.iter().enumerate() {
            assert!((out.get(0, row, i) as f64 - w).abs() < 1e-6);
        }
    }
}

#[test]
fn resize_round_trip_dims_and_constants() {
    let img = ImageTensor::filled(3, 600, 800, 0.25);
    let half = resize(&img, 0.5).unwrap();
    assert_eq!(half.dims(), Dims::new(300, 400));
    assert!(half.data().iter().all(|&v| (v - 0.25).abs() < 1e-7));
    let back = resize_to(&half, img.dims()).unwrap();
    assert_eq!(back.dims(), img.dims());
}

#[test]
fn reflect_pad_three_by_five() {
    let img = ImageTensor::from_vec(1, 3, 5, (0..15).map(|v| v as f32).collect()).unwrap();
    let (padded, orig) = pad_to_multiple(&img, 4).unwrap();
    assert_eq!(orig, Dims::new(3, 5));
    assert_eq!((padded.height(), padded.width()), (4, 8));
    // Source row/column for each padded index, mirrored without repeating the edge.
    let rows = [0, 1, 2, 1];
    let cols = [0, 1, 2, 3, 4, 3, 2, 1];
    for (y, &sy) in rows.iter().enumerate() {
        for (x, &sx) in cols.iter().enumerate() {
            assert_eq!(padded.get(0, y, x), (sy * 5 + sx) as f32);
        }
    }
    assert_eq!(crop(&padded, orig).unwrap(), img);
}

#[test]
fn crop_is_the_top_left_sub_array() {
    let img = image(2, 7, 9, 4, 0.0, 1.0);
    let out = crop(&img, Dims::new(4, 6)).unwrap();
    for c in 0..2 {
        for y in 0..4 {
            for x in 0..6 {
                assert_eq!(out.get(c, y, x), img.data()[(c * 7 + y) * 9 + x]);
            }
        }
    }
}

#[test]
fn heavy_noise_saturates_mid_gray() {
    let img = ImageTensor::filled(1, 1000, 1000, 0.5);
    let spec = NoiseSpec::gaussian(500.0);
    let out = add_noise(&img, &spec, &mut stream(1, Domain::Corrupt, 0));
    let n = out.data().len() as f64;
    let saturated = out.data().iter().filter(|&&v| v == 0.0 || v == 1.0).count() as f64 / n;
    let sigma = 500.0 / 255.0;
    let normal = Normal::new(0.0, 1.0).unwrap();
    let closed_form = 2.0 * normal.cdf(-0.5 / sigma);
    assert!(saturated > 0.6, "{saturated}");
    assert!((saturated - closed_form).abs() < 0.005, "{saturated} vs {closed_form}");
}

#[test]
fn gaussian_noise_standard_deviation() {
    let draws = sample_noise(&NoiseSpec::gaussian(25.5), 1_000_000, &mut stream(2, Domain::Corrupt, 0));
    let n = draws.len() as f64;
    let mean = draws.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = draws.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    assert!((0.099..=0.101).contains(&std), "{std}");
    assert!(mean.abs() < 1e-3);
}

#[test]
fn noise_field_is_independent_of_channel_content() {
    // Values far from the clamp bounds so the noise field is recoverable.
    let img = image(3, 8, 8, 5, 0.4, 0.6);
    let plane = 64;
    let mut perm = img.clone();
    for c in 0..3 {
        let src = (c + 1) % 3;
        perm.data_mut()[c * plane..(c + 1) * plane].copy_from_slice(&img.data()[src * plane..(src + 1) * plane]);
    }
    let spec = NoiseSpec::gaussian(5.0);
    let a = add_noise(&img, &spec, &mut stream(3, Domain::Corrupt, 0));
    let b = add_noise(&perm, &spec, &mut stream(3, Domain::Corrupt, 0));
    for i in 0..img.data().len() {
        let na = a.data()[i] - img.data()[i];
        let nb = b.data()[i] - perm.data()[i];
        assert!((na - nb).abs() < 1e-6);
    }
}

#[test]
fn blur_preserves_mean_with_constant_border() {
    let mut img = ImageTensor::filled(1, 48, 48, 0.3);
    let inner = image(1, 24, 24, 6, 0.0, 1.0);
    for y in 0..24 {
        for x in 0..24 {
            img.set(0, y + 12, x + 12, inner.get(0, y, x));
        }
    }
    let out = gaussian_blur(&img, 5.0).unwrap();
    assert!((out.mean() - img.mean()).abs() < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn blur_is_linear(seed in 0u64..1000, a in -3.0f32..3.0, c in -3.0f32..3.0, radius in 0.5f64..6.0) {
        let x = image(2, 13, 11, seed, -2.0, 2.0);
        let y = image(2, 13, 11, seed + 1, -2.0, 2.0);
        let mix: Vec<f32> = x.data().iter().zip(y.data()).map(|(p, q)| a * p + c * q).collect();
        let mix = ImageTensor::from_vec(2, 13, 11, mix).unwrap();
        let lhs = gaussian_blur(&mix, radius).unwrap();
        let bx = gaussian_blur(&x, radius).unwrap();
        let by = gaussian_blur(&y, radius).unwrap();
        for i in 0..lhs.data().len() {
            let rhs = a * bx.data()[i] + c * by.data()[i];
            prop_assert!((lhs.data()[i] - rhs).abs() < 1e-5);
        }
    }

    #[test]
    fn crop_undoes_padding(seed in 0u64..1000, h in 1usize..20, w in 1usize..20, m in 1usize..9) {
        let img = image(3, h, w, seed, 0.0, 1.0);
        let (padded, orig) = pad_to_multiple(&img, m).unwrap();
        prop_assert_eq!(padded.height() % m, 0);
        prop_assert_eq!(padded.width() % m, 0);
        prop_assert!(padded.height() < h + m && padded.width() < w + m);
        prop_assert_eq!(crop(&padded, orig).unwrap(), img);
    }

    #[test]
    fn noise_stays_in_unit_range(seed in 0u64..1000, sigma in 0.0f64..600.0, uniform in any::<bool>()) {
        let img = image(3, 6, 6, seed, 0.0, 1.0);
        let spec = if uniform { NoiseSpec::uniform(sigma) } else { NoiseSpec::gaussian(sigma) };
        let out = add_noise(&img, &spec, &mut stream(seed, Domain::Corrupt, 1));
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
