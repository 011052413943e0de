//! Fourier-amplitude domain augmentation.
//!
//! An image's 2-D spectrum is split into amplitude (low-level style) and
//! phase (structure). Mixing the amplitude of two images while keeping the
//! phase of the first yields a sample that keeps the first image's content
//! under a new style, and the result is treated as its own domain.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{DcgError, Result};
use crate::sample::{IdAllocator, ImageShape, Origin, Provenance, Sample};

/// Complex spectrum, row-major `channels x height x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub shape: ImageShape,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// Polar form of a [`Spectrum`]. Phase lies in `(-pi, pi]`, with 0 wherever
/// the amplitude is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumPair {
    pub shape: ImageShape,
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
}

impl Spectrum {
    pub fn polar(&self) -> SpectrumPair {
        let (amplitude, phase) = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(&re, &im)| {
                let amp = re.hypot(im);
                let mut ph = if amp == 0.0 { 0.0 } else { im.atan2(re) };
                if ph <= -PI {
                    ph = PI;
                }
                (amp, ph)
            })
            .unzip();
        SpectrumPair {
            shape: self.shape,
            amplitude,
            phase,
        }
    }
}

impl SpectrumPair {
    pub fn to_spectrum(&self) -> Spectrum {
        let (re, im) = self
            .amplitude
            .iter()
            .zip(&self.phase)
            .map(|(&a, &p)| (a * p.cos(), a * p.sin()))
            .unzip();
        Spectrum {
            shape: self.shape,
            re,
            im,
        }
    }
}

/// In-place iterative radix-2 FFT. `re.len()` must be a power of two.
/// The inverse is unnormalized.
fn fft_radix2(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    let bits = n.trailing_zeros();
    if bits > 0 {
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let (ws, wc) = (step * k as f64).sin_cos();
                let a = start + k;
                let b = a + half;
                let tr = re[b] * wc - im[b] * ws;
                let ti = re[b] * ws + im[b] * wc;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
}

/// Direct O(n^2) DFT for lengths that are not powers of two. Unnormalized.
fn dft_naive(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut out_re = vec![0.0; n];
    let mut out_im = vec![0.0; n];
    for k in 0..n {
        for t in 0..n {
            let angle = sign * 2.0 * PI * ((k * t) % n) as f64 / n as f64;
            let (s, c) = angle.sin_cos();
            out_re[k] += re[t] * c - im[t] * s;
            out_im[k] += re[t] * s + im[t] * c;
        }
    }
    re.copy_from_slice(&out_re);
    im.copy_from_slice(&out_im);
}

/// 1-D transform of one line, picking the radix-2 path when possible.
pub fn dft1(re: &mut [f64], im: &mut [f64], inverse: bool) {
    if re.len().is_power_of_two() {
        fft_radix2(re, im, inverse);
    } else {
        dft_naive(re, im, inverse);
    }
}

fn transform_planes(spec: &mut Spectrum, inverse: bool) {
    let ImageShape { channels, height, width } = spec.shape;
    let plane = height * width;
    let mut col_re = vec![0.0; height];
    let mut col_im = vec![0.0; height];
    for c in 0..channels {
        let base = c * plane;
        for y in 0..height {
            let row = base + y * width..base + (y + 1) * width;
            let (re, im) = (&mut spec.re[row.clone()], &mut spec.im[row]);
            dft1(re, im, inverse);
        }
        for x in 0..width {
            for y in 0..height {
                col_re[y] = spec.re[base + y * width + x];
                col_im[y] = spec.im[base + y * width + x];
            }
            dft1(&mut col_re, &mut col_im, inverse);
            for y in 0..height {
                spec.re[base + y * width + x] = col_re[y];
                spec.im[base + y * width + x] = col_im[y];
            }
        }
    }
}

/// Unnormalized forward 2-D DFT of every channel.
pub fn dft2(features: &[f64], shape: ImageShape) -> Result<Spectrum> {
    if shape.is_empty() {
        return Err(DcgError::contract("dft2 of an empty image"));
    }
    if features.len() != shape.len() {
        return Err(DcgError::contract(format!(
            "{} values for image shape {shape:?}",
            features.len()
        )));
    }
    let mut spec = Spectrum {
        shape,
        re: features.to_vec(),
        im: vec![0.0; features.len()],
    };
    transform_planes(&mut spec, false);
    Ok(spec)
}

/// Inverse 2-D DFT (scaled by `1 / (H W)`), returning the real part.
pub fn idft2(spectrum: &Spectrum) -> Vec<f64> {
    let mut work = spectrum.clone();
    transform_planes(&mut work, true);
    let scale = 1.0 / spectrum.shape.plane() as f64;
    work.re.iter().map(|v| v * scale).collect()
}

/// `(1 - lambda) * a_i + lambda * a_j`, elementwise.
pub fn mix_amplitudes(a_i: &[f64], a_j: &[f64], lambda: f64) -> Vec<f64> {
    a_i.iter()
        .zip(a_j)
        .map(|(&x, &y)| (1.0 - lambda) * x + lambda * y)
        .collect()
}

fn check_mix(x_i: &[f64], x_j: &[f64], shape: ImageShape, lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(DcgError::contract(format!("mix coefficient {lambda} outside [0, 1]")));
    }
    if x_i.len() != shape.len() || x_j.len() != shape.len() {
        return Err(DcgError::contract("amplitude mix of differently shaped images"));
    }
    Ok(())
}

/// Mixed spectrum: interpolated amplitude, phase of `x_i`.
pub fn mixed_spectrum(x_i: &[f64], x_j: &[f64], shape: ImageShape, lambda: f64) -> Result<SpectrumPair> {
    check_mix(x_i, x_j, shape, lambda)?;
    let si = dft2(x_i, shape)?.polar();
    let sj = dft2(x_j, shape)?.polar();
    Ok(SpectrumPair {
        shape,
        amplitude: mix_amplitudes(&si.amplitude, &sj.amplitude, lambda),
        phase: si.phase,
    })
}

/// Inverse transform of the mixed spectrum, before clipping.
pub fn amplitude_mix_unclipped(x_i: &[f64], x_j: &[f64], shape: ImageShape, lambda: f64) -> Result<Vec<f64>> {
    Ok(idft2(&mixed_spectrum(x_i, x_j, shape, lambda)?.to_spectrum()))
}

/// Augmented sample with the content (phase and label) of `x_i` and an
/// amplitude interpolated towards `x_j`, clipped to `[0, 1]`, in a fresh domain.
pub fn amplitude_mix(x_i: &Sample, x_j: &Sample, lambda: f64, ids: &mut IdAllocator) -> Result<Sample> {
    if x_i.shape != x_j.shape {
        return Err(DcgError::contract(format!(
            "amplitude mix of shapes {:?} and {:?}",
            x_i.shape, x_j.shape
        )));
    }
    let features = amplitude_mix_unclipped(&x_i.features, &x_j.features, x_i.shape, lambda)?
        .into_iter()
        .map(|v| v.clamp(0.0, 1.0))
        .collect();
    Ok(Sample {
        id: ids.sample(),
        features,
        shape: x_i.shape,
        label: x_i.label,
        domain: ids.domain(),
        origin: Origin::Augmented(Provenance {
            parents: (x_i.id, x_j.id),
            parent_domains: (x_i.domain, x_j.domain),
            lambda,
        }),
    })
}

/// Randomly pairs the batch and emits both mixing directions of every pair,
/// one `lambda ~ U(0, eta)` per pair. Each output sits in its own domain, so
/// the output has as many samples (and domains) as the input.
///
/// With an odd batch the leftover sample is mixed with a random partner in
/// one direction only.
pub fn augment_batch<R: Rng>(
    batch: &[Sample],
    rng: &mut R,
    eta: f64,
    ids: &mut IdAllocator,
) -> Result<Vec<Sample>> {
    if batch.len() < 2 {
        return Err(DcgError::contract(format!(
            "augmentation needs at least two samples, got {}",
            batch.len()
        )));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(DcgError::contract(format!("eta {eta} outside [0, 1]")));
    }
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.shuffle(rng);
    let draw = |rng: &mut R| if eta > 0.0 { rng.gen_range(0.0..eta) } else { 0.0 };
    let mut out = Vec::with_capacity(batch.len());
    for pair in order.chunks(2) {
        match *pair {
            [i, j] => {
                let lambda = draw(rng);
                out.push(amplitude_mix(&batch[i], &batch[j], lambda, ids)?);
                out.push(amplitude_mix(&batch[j], &batch[i], lambda, ids)?);
            }
            [i] => {
                let mut j = rng.gen_range(0..batch.len() - 1);
                if j >= i {
                    j += 1;
                }
                let lambda = draw(rng);
                out.push(amplitude_mix(&batch[i], &batch[j], lambda, ids)?);
            }
            _ => unreachable!("chunks(2)"),
        }
    }
    Ok(out)
}
