//! Seeded multi-domain image datasets. Class identity is a glyph shape shared
//! by every domain; domain identity is colour and stripe texture.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DcgError, Result};
use crate::sample::{DomainId, ImageShape, Sample, SampleId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub id: DomainId,
    pub name: String,
    /// Background colour per channel, each in `[0, 1]`.
    pub hue: [f64; 3],
    /// Stripe cycles across the image, in `[0, width / 2]`.
    pub stripe_frequency: f64,
    /// Stripe direction in radians, in `[0, π)`.
    pub stripe_orientation: f64,
    /// Standard deviation of per-pixel Gaussian noise, in `[0, 0.5]`.
    pub amplitude_noise: f64,
}

impl DomainSpec {
    fn validate(&self, width: usize) -> Result<()> {
        let ok = self.hue.iter().all(|h| (0.0..=1.0).contains(h))
            && (0.0..=width as f64 / 2.0).contains(&self.stripe_frequency)
            && (0.0..std::f64::consts::PI).contains(&self.stripe_orientation)
            && (0.0..=0.5).contains(&self.amplitude_noise);
        if ok {
            Ok(())
        } else {
            Err(DcgError::contract(format!("domain {} has out-of-range style parameters", self.id)))
        }
    }

    fn same_style(&self, other: &Self) -> bool {
        self.hue == other.hue
            && self.stripe_frequency == other.stripe_frequency
            && self.stripe_orientation == other.stripe_orientation
            && self.amplitude_noise == other.amplitude_noise
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub classes: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub domains: Vec<DomainSpec>,
    pub samples_per_domain: usize,
    /// Fraction of labels replaced by a different class.
    pub label_noise: f64,
    /// Fraction of samples that are exact copies of another sample.
    pub duplicate_fraction: f64,
    pub seed: u64,
}

const STROKES: usize = 8;
const MAX_CLASSES: usize = 56;

impl DatasetManifest {
    /// Seven classes over four styles loosely modelled on photo, art,
    /// cartoon and sketch, 3×16×16, 200 samples each.
    pub fn benchmark(seed: u64) -> Self {
        use std::f64::consts::PI;
        let d = |id, name: &str, hue, f, o, n| DomainSpec {
            id: DomainId(id),
            name: name.into(),
            hue,
            stripe_frequency: f,
            stripe_orientation: o,
            amplitude_noise: n,
        };
        Self {
            classes: 7,
            channels: 3,
            height: 16,
            width: 16,
            domains: vec![
                d(0, "photo", [0.75, 0.55, 0.35], 1.0, 0.0, 0.05),
                d(1, "art", [0.30, 0.55, 0.80], 3.0, PI / 4.0, 0.08),
                d(2, "cartoon", [0.85, 0.80, 0.20], 2.0, PI / 2.0, 0.03),
                d(3, "sketch", [0.55, 0.55, 0.55], 5.0, 3.0 * PI / 4.0, 0.10),
            ],
            samples_per_domain: 200,
            label_noise: 0.0,
            duplicate_fraction: 0.0,
            seed,
        }
    }

    pub fn shape(&self) -> ImageShape {
        ImageShape::new(self.channels, self.height, self.width)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.classes > MAX_CLASSES {
            return Err(DcgError::contract(format!("class count {} outside 2..={MAX_CLASSES}", self.classes)));
        }
        if self.channels == 0 || self.channels > 3 || self.height < 4 || self.width < 4 {
            return Err(DcgError::contract(format!("unsupported image shape {:?}", self.shape())));
        }
        if self.domains.is_empty() || self.samples_per_domain == 0 {
            return Err(DcgError::contract("manifest needs at least one domain and one sample per domain"));
        }
        for (name, v) in [("label_noise", self.label_noise), ("duplicate_fraction", self.duplicate_fraction)] {
            if !(0.0..=0.5).contains(&v) {
                return Err(DcgError::contract(format!("{name} = {v} outside [0, 0.5]")));
            }
        }
        for (i, a) in self.domains.iter().enumerate() {
            a.validate(self.width)?;
            if a.id.0 >= crate::sample::AUGMENTED_DOMAIN_BASE {
                return Err(DcgError::contract(format!("domain id {} is reserved for augmented domains", a.id)));
            }
            for b in &self.domains[..i] {
                if a.id == b.id {
                    return Err(DcgError::contract(format!("duplicate domain id {}", a.id)));
                }
                if a.same_style(b) {
                    return Err(DcgError::contract(format!("domains {} and {} share one style", b.id, a.id)));
                }
            }
        }
        Ok(())
    }
}

/// Evaluation-only ground truth. Training code never reads it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HiddenFlags {
    pub noisy: Vec<bool>,
    pub duplicate: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainData {
    pub spec: DomainSpec,
    pub samples: Vec<Sample>,
    pub hidden: HiddenFlags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub domains: Vec<DomainData>,
}

impl Dataset {
    pub fn domain(&self, id: DomainId) -> Option<&DomainData> {
        self.domains.iter().find(|d| d.spec.id == id)
    }

    pub fn domain_ids(&self) -> Vec<DomainId> {
        self.domains.iter().map(|d| d.spec.id).collect()
    }

    pub fn len(&self) -> usize {
        self.domains.iter().map(|d| d.samples.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn sample_id(domain: DomainId, index: usize) -> SampleId {
    SampleId(((domain.0 as u64) << 32) | index as u64)
}

/// Binary glyph mask of every class, row-major `height × width`. Each class
/// is a distinct set of three strokes.
pub fn class_masks(manifest: &DatasetManifest) -> Vec<Vec<bool>> {
    let mut triples = Vec::new();
    for a in 0..STROKES {
        for b in a + 1..STROKES {
            for c in b + 1..STROKES {
                triples.push([a, b, c]);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed);
    triples.shuffle(&mut rng);
    triples
        .iter()
        .take(manifest.classes)
        .map(|t| {
            let mut m = vec![false; manifest.height * manifest.width];
            for &s in t {
                draw_stroke(&mut m, manifest.height, manifest.width, s);
            }
            m
        })
        .collect()
}

fn draw_stroke(mask: &mut [bool], h: usize, w: usize, stroke: usize) {
    let (lo_r, hi_r) = (h / 5, h - 1 - h / 5);
    let (lo_c, hi_c) = (w / 5, w - 1 - w / 5);
    let mid_r = h / 2;
    let mid_c = w / 2;
    let mut set = |r: usize, c: usize| {
        for dr in 0..2 {
            let rr = (r + dr).min(h - 1);
            mask[rr * w + c] = true;
        }
    };
    match stroke {
        0 => (lo_c..=hi_c).for_each(|c| set(lo_r, c)),
        1 => (lo_c..=hi_c).for_each(|c| set(hi_r - 1, c)),
        2 => (lo_c..=hi_c).for_each(|c| set(mid_r - 1, c)),
        3 | 4 | 5 => {
            let c = [lo_c, hi_c - 1, mid_c - 1][stroke - 3];
            for r in lo_r..=hi_r {
                mask[r * w + c] = true;
                mask[r * w + c + 1] = true;
            }
        }
        _ => {
            let n = (hi_r - lo_r).min(hi_c - lo_c);
            for t in 0..=n {
                let r = lo_r + t;
                let c = if stroke == 6 { lo_c + t } else { hi_c - t };
                set(r, c);
            }
        }
    }
}

fn domain_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Renders one styled sample of class `label`.
fn render<R: Rng>(spec: &DomainSpec, mask: &[bool], shape: ImageShape, rng: &mut R) -> Result<Vec<f64>> {
    let (h, w) = (shape.height, shape.width);
    let dy = rng.gen_range(-1i64..=1);
    let dx = rng.gen_range(-1i64..=1);
    let stripe_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let ink_gain = rng.gen_range(0.9..1.1);
    let noise = Normal::new(0.0, spec.amplitude_noise.max(1e-12))
        .map_err(|e| DcgError::contract(format!("noise level: {e}")))?;
    let (cos, sin) = (spec.stripe_orientation.cos(), spec.stripe_orientation.sin());
    let mut out = vec![0.0; shape.len()];
    for ch in 0..shape.channels {
        let hue = spec.hue[ch];
        let ink = if hue < 0.5 { hue + 0.45 } else { hue - 0.45 };
        for r in 0..h {
            for c in 0..w {
                let u = (c as f64 * cos + r as f64 * sin) / w as f64;
                let stripe = 0.5 + 0.5 * (std::f64::consts::TAU * spec.stripe_frequency * u + stripe_phase).sin();
                let background = hue * (0.6 + 0.4 * stripe);
                let (sr, sc) = (r as i64 - dy, c as i64 - dx);
                let inked = (0..h as i64).contains(&sr)
                    && (0..w as i64).contains(&sc)
                    && mask[sr as usize * w + sc as usize];
                let v = if inked { hue + (ink - hue) * ink_gain } else { background };
                let n = if spec.amplitude_noise > 0.0 { noise.sample(rng) } else { 0.0 };
                out[ch * h * w + r * w + c] = (v + n).clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}

/// Generates every domain of `manifest` from its seed.
pub fn generate(manifest: &DatasetManifest) -> Result<Dataset> {
    manifest.validate()?;
    let masks = class_masks(manifest);
    let shape = manifest.shape();
    let n = manifest.samples_per_domain;
    let mut domains = Vec::with_capacity(manifest.domains.len());
    for (di, spec) in manifest.domains.iter().enumerate() {
        let mut rng = domain_rng(manifest.seed, di);
        let n_dup = (manifest.duplicate_fraction * n as f64).round() as usize;
        let n_dup = n_dup.min(n - 1);
        let n_unique = n - n_dup;

        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n_unique {
            let label = i % manifest.classes;
            features.push(render(spec, &masks[label], shape, &mut rng)?);
            labels.push(label);
        }
        let mut duplicate = vec![false; n_unique];
        for _ in 0..n_dup {
            let src = rng.gen_range(0..n_unique);
            features.push(features[src].clone());
            labels.push(labels[src]);
            duplicate.push(true);
        }

        let n_noisy = (manifest.label_noise * n as f64).round() as usize;
        let mut noisy = vec![false; n];
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for &i in order.iter().take(n_noisy) {
            let shift = rng.gen_range(1..manifest.classes);
            labels[i] = (labels[i] + shift) % manifest.classes;
            noisy[i] = true;
        }

        let samples = features
            .into_iter()
            .zip(&labels)
            .enumerate()
            .map(|(i, (f, &y))| Sample::original(sample_id(spec.id, i), f, shape, y, spec.id))
            .collect::<Result<Vec<_>>>()?;
        domains.push(DomainData {
            spec: spec.clone(),
            samples,
            hidden: HiddenFlags { noisy, duplicate },
        });
    }
    Ok(Dataset {
        manifest: manifest.clone(),
        domains,
    })
}

/// Splits off the held-out target domain.
pub fn leave_one_out(dataset: &Dataset, held_out: DomainId) -> Result<(Vec<&DomainData>, &DomainData)> {
    let target = dataset
        .domain(held_out)
        .ok_or_else(|| DcgError::contract(format!("no domain {held_out} in the dataset")))?;
    let sources = dataset.domains.iter().filter(|d| d.spec.id != held_out).collect();
    Ok((sources, target))
}

#[derive(Serialize, Deserialize)]
struct LabelFile {
    ids: Vec<SampleId>,
    labels: Vec<usize>,
    noisy: Vec<bool>,
    duplicate: Vec<bool>,
}

/// Writes `manifest.json`, `domain_<id>.f64` and `labels_<id>.json`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&dataset.manifest)?)?;
    for d in &dataset.domains {
        let mut blob = Vec::with_capacity(d.samples.len() * dataset.manifest.shape().len() * 8);
        for s in &d.samples {
            for v in &s.features {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(dir.join(format!("domain_{}.f64", d.spec.id)), blob)?;
        let labels = LabelFile {
            ids: d.samples.iter().map(|s| s.id).collect(),
            labels: d.samples.iter().map(|s| s.label).collect(),
            noisy: d.hidden.noisy.clone(),
            duplicate: d.hidden.duplicate.clone(),
        };
        fs::write(dir.join(format!("labels_{}.json", d.spec.id)), serde_json::to_string(&labels)?)?;
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    manifest.validate()?;
    let shape = manifest.shape();
    let mut domains = Vec::new();
    for spec in &manifest.domains {
        let blob_path = dir.join(format!("domain_{}.f64", spec.id));
        let blob = fs::read(&blob_path)?;
        let labels_path = dir.join(format!("labels_{}.json", spec.id));
        let labels: LabelFile = serde_json::from_str(&fs::read_to_string(&labels_path)?)?;
        let n = labels.labels.len();
        let format_err = |path: &Path, detail: String| DcgError::Format {
            path: path.display().to_string(),
            detail,
        };
        if blob.len() != n * shape.len() * 8 {
            return Err(format_err(&blob_path, format!("{} bytes for {n} samples", blob.len())));
        }
        if labels.ids.len() != n || labels.noisy.len() != n || labels.duplicate.len() != n {
            return Err(format_err(&labels_path, "column lengths differ".into()));
        }
        let values: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let samples = values
            .chunks_exact(shape.len())
            .zip(&labels.ids)
            .zip(&labels.labels)
            .map(|((f, &id), &y)| {
                if y >= manifest.classes {
                    return Err(format_err(&labels_path, format!("label {y} out of range")));
                }
                Sample::original(id, f.to_vec(), shape, y, spec.id)
            })
            .collect::<Result<Vec<_>>>()?;
        domains.push(DomainData {
            spec: spec.clone(),
            samples,
            hidden: HiddenFlags {
                noisy: labels.noisy,
                duplicate: labels.duplicate,
            },
        });
    }
    Ok(Dataset { manifest, domains })
}
