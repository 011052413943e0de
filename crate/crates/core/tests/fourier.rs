use std::f64::consts::{PI, TAU};

use dcg_core::fourier::{amplitude_mix, amplitude_mix_unclipped, augment_batch, dft2, idft2, mix_amplitudes, mixed_spectrum};
use dcg_core::{DomainId, IdAllocator, ImageShape, Sample, SampleId};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn image(rng: &mut impl Rng, shape: ImageShape) -> Vec<f64> {
    (0..shape.len()).map(|_| rng.gen_range(0.0..1.0)).collect()
}

fn wrapped(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

#[test]
fn mixing_keeps_the_phase_of_the_first_image() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let shape = ImageShape::new(3, 8, 8);
    for _ in 0..20 {
        let xi = image(&mut rng, shape);
        let xj = image(&mut rng, shape);
        let pi = dft2(&xi, shape).unwrap().polar();
        for lambda in [0.25, 0.5, 0.75] {
            let out = amplitude_mix_unclipped(&xi, &xj, shape, lambda).unwrap();
            let po = dft2(&out, shape).unwrap().polar();
            for k in 0..shape.len() {
                if po.amplitude[k] > 1e-9 {
                    assert!(wrapped(po.phase[k], pi.phase[k]) < 1e-6, "bin {k}");
                }
            }
        }
    }
}

#[test]
fn mixed_amplitude_is_the_interpolation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let shape = ImageShape::new(3, 16, 16);
    for _ in 0..10 {
        let xi = image(&mut rng, shape);
        let xj = image(&mut rng, shape);
        let lambda = rng.gen_range(0.0..1.0);
        let ai = dft2(&xi, shape).unwrap().polar().amplitude;
        let aj = dft2(&xj, shape).unwrap().polar().amplitude;
        let mixed = mixed_spectrum(&xi, &xj, shape, lambda).unwrap();
        for k in 0..shape.len() {
            let expected = (1.0 - lambda) * ai[k] + lambda * aj[k];
            assert!((mixed.amplitude[k] - expected).abs() <= 1e-12);
        }
        assert_eq!(mixed.amplitude, mix_amplitudes(&ai, &aj, lambda));
    }
}

#[test]
fn parseval_holds() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for shape in [ImageShape::new(3, 16, 16), ImageShape::new(1, 8, 4), ImageShape::new(2, 6, 5)] {
        let x = image(&mut rng, shape);
        let energy: f64 = x.iter().map(|v| v * v).sum::<f64>() * shape.plane() as f64;
        let spectral: f64 = dft2(&x, shape).unwrap().polar().amplitude.iter().map(|a| a * a).sum();
        assert!((energy - spectral).abs() / energy < 1e-8);
    }
}

#[test]
fn identity_mix_reproduces_the_image() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let shape = ImageShape::new(3, 16, 16);
    let mut ids = IdAllocator::new();
    let a = Sample::original(SampleId(1), image(&mut rng, shape), shape, 2, DomainId(0)).unwrap();
    let b = Sample::original(SampleId(2), image(&mut rng, shape), shape, 5, DomainId(1)).unwrap();
    let out = amplitude_mix(&a, &b, 0.0, &mut ids).unwrap();
    let err = out.features.iter().zip(&a.features).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(err < 1e-8);
    assert_eq!(out.label, 2);
    let full = amplitude_mix_unclipped(&a.features, &b.features, shape, 1.0).unwrap();
    let amp_full = dft2(&full, shape).unwrap().polar().amplitude;
    let amp_b = dft2(&b.features, shape).unwrap().polar().amplitude;
    assert!(amp_full.iter().zip(&amp_b).all(|(x, y)| (x - y).abs() < 1e-8));
}

#[test]
fn naive_and_radix_paths_agree() {
    // 6x6 takes the naive path, 8x8 the radix-2 one
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for shape in [ImageShape::new(1, 6, 6), ImageShape::new(1, 8, 8)] {
        let x = image(&mut rng, shape);
        let s = dft2(&x, shape).unwrap();
        let (h, w) = (shape.height, shape.width);
        for u in 0..h {
            for v in 0..w {
                let (mut re, mut im) = (0.0, 0.0);
                for r in 0..h {
                    for c in 0..w {
                        let ang = -2.0 * PI * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                        re += x[r * w + c] * ang.cos();
                        im += x[r * w + c] * ang.sin();
                    }
                }
                assert!((s.re[u * w + v] - re).abs() < 1e-10);
                assert!((s.im[u * w + v] - im).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn batch_of_sixteen_yields_sixteen_new_domains() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let shape = ImageShape::new(1, 4, 4);
    let batch: Vec<Sample> = (0..16)
        .map(|i| Sample::original(SampleId(i), image(&mut rng, shape), shape, 0, DomainId((i % 3) as u32)).unwrap())
        .collect();
    let aug = augment_batch(&batch, &mut rng, 1.0, &mut IdAllocator::new()).unwrap();
    assert_eq!(aug.len(), 16);
    let domains: std::collections::BTreeSet<_> = aug.iter().map(|s| s.domain).collect();
    assert_eq!(domains.len(), 16);
    assert!(domains.iter().all(|d| d.0 >= 3));
    // every original appears once as phase parent
    let parents: std::collections::BTreeSet<_> = aug.iter().map(|s| s.provenance().unwrap().parents.0).collect();
    assert_eq!(parents.len(), 16);
}

proptest! {
    #[test]
    fn round_trip(seed in 0u64..1000, h in 1usize..9, w in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = ImageShape::new(2, h, w);
        let x = image(&mut rng, shape);
        let back = idft2(&dft2(&x, shape).unwrap());
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10);
    }

    #[test]
    fn polar_round_trip(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = ImageShape::new(3, 8, 8);
        let x = image(&mut rng, shape);
        let pair = dft2(&x, shape).unwrap().polar();
        prop_assert!(pair.phase.iter().all(|p| *p > -PI && *p <= PI));
        let back = idft2(&pair.to_spectrum());
        let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-8);
    }

    #[test]
    fn augmented_pixels_stay_in_range(seed in 0u64..200, eta in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = ImageShape::new(3, 4, 4);
        let batch: Vec<Sample> = (0..5)
            .map(|i| Sample::original(SampleId(i), image(&mut rng, shape), shape, i as usize, DomainId(0)).unwrap())
            .collect();
        let aug = augment_batch(&batch, &mut rng, eta, &mut IdAllocator::new()).unwrap();
        prop_assert_eq!(aug.len(), 5);
        for s in &aug {
            prop_assert!(s.features.iter().all(|v| (0.0..=1.0).contains(v)));
            let p = s.provenance().unwrap();
            prop_assert!(p.lambda >= 0.0 && p.lambda <= eta);
            prop_assert_eq!(s.label, p.parents.0 .0 as usize);
        }
    }
}
