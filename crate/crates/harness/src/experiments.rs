//! Multi-run experiments: ablation table, diversity sweep, sensitivity grid,
//! discussion variants and the label-noise filter report.
//!
//! Every experiment is a list of independent `(config, held-out, seed)` jobs
//! run across worker threads. Accuracies are averaged over held-out domains
//! per seed, then summarized over seeds with population std.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use dcg_core::data::Dataset;
use dcg_core::filter::FilterScope;
use dcg_core::{DomainId, SplitMode};
use serde::{Deserialize, Serialize};

use crate::config::{TrainConfig, Variant};
use crate::error::{HarnessError, Result};
use crate::metrics::mean_std;
use crate::train::{train, RunOutput};

pub const SWEEP_NS: [usize; 6] = [0, 4, 8, 16, 32, 64];
pub const SENSITIVITY_OMEGAS: [f64; 5] = [0.01, 0.05, 0.1, 0.5, 1.0];
pub const SENSITIVITY_KS: [usize; 5] = [1, 3, 5, 7, 9];
/// Cells within this many accuracy points of the best cell form the stable region.
pub const STABLE_MARGIN: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct Job {
    pub config: TrainConfig,
    pub held_out: DomainId,
    pub seed: u64,
}

/// Runs jobs on up to `available_parallelism` threads; results keep job order.
pub fn run_jobs<T, F>(dataset: &Dataset, jobs: &[Job], reduce: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Job, RunOutput) -> T + Sync,
{
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let out = train(&job.config, dataset, job.held_out, job.seed).map(|o| reduce(job, o));
                log::info!("{} holdout {} seed {} done", job.config.variant, job.held_out, job.seed);
                slots.lock().expect("worker panicked")[i] = Some(out);
            });
        }
    });
    slots.into_inner().expect("worker panicked").into_iter().map(|s| s.expect("job not run")).collect()
}

fn jobs_for(config: &TrainConfig, held_out: &[DomainId]) -> Vec<Job> {
    let mut jobs = Vec::new();
    for &h in held_out {
        for &seed in &config.seeds {
            jobs.push(Job { config: config.clone(), held_out: h, seed });
        }
    }
    jobs
}

fn check_domains(dataset: &Dataset, held_out: &[DomainId]) -> Result<()> {
    if held_out.is_empty() {
        return Err(HarnessError::Config("no held-out domains".into()));
    }
    for h in held_out {
        if dataset.domain(*h).is_none() {
            return Err(HarnessError::Config(format!("unknown held-out domain {h}")));
        }
    }
    Ok(())
}

/// Accuracy of one configuration, per held-out domain and per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigScores {
    pub label: String,
    pub held_out: Vec<DomainId>,
    pub seeds: Vec<u64>,
    /// `accuracy[h][s]` for held-out `h` and seed `s`.
    pub accuracy: Vec<Vec<f64>>,
}

impl ConfigScores {
    /// Held-out average for each seed.
    pub fn per_seed(&self) -> Vec<f64> {
        (0..self.seeds.len())
            .map(|s| self.accuracy.iter().map(|row| row[s]).sum::<f64>() / self.accuracy.len() as f64)
            .collect()
    }

    pub fn domain_summary(&self, h: usize) -> (f64, f64) {
        mean_std(&self.accuracy[h])
    }

    pub fn summary(&self) -> (f64, f64) {
        mean_std(&self.per_seed())
    }
}

/// Trains every labelled configuration on every held-out domain and seed.
pub fn score_configs(dataset: &Dataset, configs: &[(String, TrainConfig)], held_out: &[DomainId]) -> Result<Vec<ConfigScores>> {
    check_domains(dataset, held_out)?;
    let mut jobs = Vec::new();
    for (_, c) in configs {
        c.validate()?;
        jobs.extend(jobs_for(c, held_out));
    }
    let accs = run_jobs(dataset, &jobs, |_, o| o.result.final_accuracy)?;
    let mut it = accs.into_iter();
    Ok(configs
        .iter()
        .map(|(label, c)| {
            let accuracy = held_out.iter().map(|_| it.by_ref().take(c.seeds.len()).collect()).collect();
            ConfigScores {
                label: label.clone(),
                held_out: held_out.to_vec(),
                seeds: c.seeds.clone(),
                accuracy,
            }
        })
        .collect())
}

/// Writes a table with one row per configuration: label, one `mean ± std`
/// cell per held-out domain, then the average. Accuracies in percent.
pub fn write_score_table(dataset: &Dataset, rows: &[ConfigScores], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if let Some(first) = rows.first() {
        let mut header = vec!["variant".to_string()];
        for h in &first.held_out {
            header.push(dataset.domain(*h).map(|d| d.spec.name.clone()).unwrap_or_else(|| h.to_string()));
        }
        header.push("avg".into());
        w.write_record(&header)?;
    }
    let cell = |(m, s): (f64, f64)| format!("{:.2} ± {:.2}", 100.0 * m, 100.0 * s);
    for r in rows {
        let mut rec = vec![r.label.clone()];
        rec.extend((0..r.held_out.len()).map(|h| cell(r.domain_summary(h))));
        rec.push(cell(r.summary()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn variant_configs(base: &TrainConfig, variants: &[Variant]) -> Vec<(String, TrainConfig)> {
    variants
        .iter()
        .map(|&v| {
            let c = TrainConfig {
                variant: v,
                omega: None,
                k: None,
                split_mode: SplitMode::ByParent,
                filter_scope: FilterScope::All,
                augment_cap: if v.augments() { base.augment_cap } else { None },
                ..base.clone()
            };
            (v.name().to_string(), c)
        })
        .collect()
}

/// The ablation table over `variants` (all eight by default).
pub fn ablate(base: &TrainConfig, dataset: &Dataset, variants: &[Variant], held_out: &[DomainId]) -> Result<Vec<ConfigScores>> {
    score_configs(dataset, &variant_configs(base, variants), held_out)
}

/// Full DCG against its three discussion variants.
pub fn discussion_configs(base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    let full = TrainConfig {
        variant: Variant::FullDcg,
        split_mode: SplitMode::ByParent,
        filter_scope: FilterScope::All,
        ..base.clone()
    };
    vec![
        ("full-DCG".into(), full.clone()),
        ("random-meta-split".into(), TrainConfig { split_mode: SplitMode::Random, ..full.clone() }),
        ("filter-only-on-aug".into(), TrainConfig { filter_scope: FilterScope::AugmentedOnly, ..full.clone() }),
        ("filter-only-on-ori".into(), TrainConfig { filter_scope: FilterScope::OriginalsOnly, ..full }),
    ]
}

pub fn discussion(base: &TrainConfig, dataset: &Dataset, held_out: &[DomainId]) -> Result<Vec<ConfigScores>> {
    score_configs(dataset, &discussion_configs(base), held_out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCell {
    pub omega: f64,
    pub k: usize,
    pub mean: f64,
    pub std: f64,
    pub stable: bool,
}

/// Full DCG accuracy over the `omegas × ks` grid.
pub fn sensitivity(
    base: &TrainConfig,
    dataset: &Dataset,
    omegas: &[f64],
    ks: &[usize],
    held_out: &[DomainId],
) -> Result<Vec<SensitivityCell>> {
    if omegas.is_empty() || ks.is_empty() {
        return Err(HarnessError::Config("sensitivity grids must be non-empty".into()));
    }
    let mut configs = Vec::new();
    for &omega in omegas {
        for &k in ks {
            let c = TrainConfig {
                variant: Variant::FullDcg,
                omega: Some(omega),
                k: Some(k),
                ..base.clone()
            };
            configs.push((format!("omega={omega},k={k}"), c));
        }
    }
    let scores = score_configs(dataset, &configs, held_out)?;
    let mut cells: Vec<SensitivityCell> = configs
        .iter()
        .zip(&scores)
        .map(|((_, c), s)| {
            let (mean, std) = s.summary();
            SensitivityCell { omega: c.omega(), k: c.k(), mean, std, stable: false }
        })
        .collect();
    let best = cells.iter().map(|c| c.mean).fold(f64::NEG_INFINITY, f64::max);
    for c in &mut cells {
        c.stable = 100.0 * (best - c.mean) <= STABLE_MARGIN;
    }
    Ok(cells)
}

pub fn write_sensitivity_csv(cells: &[SensitivityCell], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

/// Spearman rank correlation with average ranks for ties. NaN when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}

/// Adjacent steps where the curve strictly drops.
pub fn decreasing_steps(curve: &[f64]) -> usize {
    curve.windows(2).filter(|w| w[1] < w[0]).count()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub variant: Variant,
    /// `per_seed[s][n]`: held-out averaged accuracy for seed `s` at cap `ns[n]`.
    pub per_seed: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub spearman: Vec<f64>,
    pub decreasing: Vec<usize>,
    pub median_spearman: f64,
    pub median_decreasing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub ns: Vec<usize>,
    pub held_out: Vec<DomainId>,
    pub seeds: Vec<u64>,
    pub curves: Vec<SweepCurve>,
}

/// Accuracy against the augmented-pool cap `N`. The comparison curve is
/// aug-only under the same cap, since the baseline variant never augments.
pub fn diversity_sweep(
    base: &TrainConfig,
    dataset: &Dataset,
    ns: &[usize],
    variants: &[Variant],
    held_out: &[DomainId],
) -> Result<SweepReport> {
    if ns.windows(2).any(|w| w[1] < w[0]) {
        return Err(HarnessError::Config("N values must be sorted ascending".into()));
    }
    if variants.iter().any(|v| !v.augments()) {
        return Err(HarnessError::Config("the diversity sweep needs augmenting variants".into()));
    }
    let mut configs = Vec::new();
    for &v in variants {
        for &n in ns {
            let mut c = variant_configs(base, &[v]).remove(0).1;
            c.augment_cap = Some(n);
            configs.push((format!("{v},N={n}"), c));
        }
    }
    let scores = score_configs(dataset, &configs, held_out)?;
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let curves = variants
        .iter()
        .enumerate()
        .map(|(vi, &variant)| {
            let rows = &scores[vi * ns.len()..(vi + 1) * ns.len()];
            let by_n: Vec<Vec<f64>> = rows.iter().map(|r| r.per_seed()).collect();
            let per_seed: Vec<Vec<f64>> =
                (0..base.seeds.len()).map(|s| by_n.iter().map(|v| v[s]).collect()).collect();
            let mean = rows.iter().map(|r| r.summary().0).collect();
            let spearman: Vec<f64> = per_seed.iter().map(|c| spearman(&xs, c)).collect();
            let decreasing: Vec<usize> = per_seed.iter().map(|c| decreasing_steps(c)).collect();
            SweepCurve {
                variant,
                median_spearman: median(&spearman),
                median_decreasing: median(&decreasing.iter().map(|&d| d as f64).collect::<Vec<_>>()),
                per_seed,
                mean,
                spearman,
                decreasing,
            }
        })
        .collect();
    Ok(SweepReport {
        ns: ns.to_vec(),
        held_out: held_out.to_vec(),
        seeds: base.seeds.clone(),
        curves,
    })
}

/// Mean curves as SVG polylines, with the x axis on the rank of `N`.
pub fn sweep_svg(report: &SweepReport) -> String {
    let (w, h, pad) = (480.0, 320.0, 40.0);
    let all: Vec<f64> = report.curves.iter().flat_map(|c| c.mean.iter().copied()).collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let steps = (report.ns.len().max(2) - 1) as f64;
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    for (i, n) in report.ns.iter().enumerate() {
        let x = pad + (w - 2.0 * pad) * i as f64 / steps;
        svg += &format!("<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{n}</text>\n", h - pad / 2.0);
    }
    for (ci, c) in report.curves.iter().enumerate() {
        let pts: Vec<String> = c
            .mean
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let x = pad + (w - 2.0 * pad) * i as f64 / steps;
                let y = h - pad - (h - 2.0 * pad) * (a - lo) / span;
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let color = colors[ci % colors.len()];
        svg += &format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n\
             <text x=\"{pad}\" y=\"{:.1}\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            pts.join(" "),
            pad / 2.0 + 12.0 * ci as f64,
            c.variant
        );
    }
    svg += "</svg>\n";
    svg
}

/// Mean top-k frequency of noisy versus clean originals in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub seed: u64,
    pub noisy_scored: usize,
    pub clean_scored: usize,
    pub noisy_frequency: f64,
    pub clean_frequency: f64,
}

impl NoiseReport {
    pub fn ratio(&self) -> f64 {
        self.noisy_frequency / self.clean_frequency
    }
}

/// Trains a filtering configuration and compares how often originals with
/// corrupted labels land in the discard set, over originals scored at least once.
pub fn filter_noise_report(config: &TrainConfig, dataset: &Dataset, held_out: DomainId) -> Result<Vec<NoiseReport>> {
    if config.k() == 0 {
        return Err(HarnessError::Config("the noise report needs a filtering configuration".into()));
    }
    let jobs = jobs_for(config, &[held_out]);
    let noisy: std::collections::HashMap<_, _> = dataset
        .domains
        .iter()
        .flat_map(|d| d.samples.iter().zip(&d.hidden.noisy).map(|(s, &n)| (s.id, n)))
        .collect();
    run_jobs(dataset, &jobs, |job, out| {
        let (mut nf, mut cf, mut nn, mut cn) = (0.0, 0.0, 0, 0);
        for (id, c) in out.history.counts() {
            let Some(&is_noisy) = noisy.get(id) else { continue };
            if c.scored == 0 {
                continue;
            }
            if is_noisy {
                nf += c.top_frequency();
                nn += 1;
            } else {
                cf += c.top_frequency();
                cn += 1;
            }
        }
        NoiseReport {
            seed: job.seed,
            noisy_scored: nn,
            clean_scored: cn,
            noisy_frequency: nf / nn.max(1) as f64,
            clean_frequency: cf / cn.max(1) as f64,
        }
    })
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        let x = [0.0, 1.0, 2.0, 3.0];
        assert!((spearman(&x, &[0.1, 0.2, 0.3, 0.4]) - 1.0).abs() < 1e-15);
        assert!((spearman(&x, &[0.4, 0.3, 0.2, 0.1]) + 1.0).abs() < 1e-15);
        // ranks of y: 1, 2.5, 2.5, 4
        let r = spearman(&x, &[1.0, 2.0, 2.0, 3.0]);
        let expected = 4.5 / (5.0f64 * 4.5).sqrt();
        assert!((r - expected).abs() < 1e-12);
        assert!(spearman(&x, &[1.0; 4]).is_nan());
    }

    #[test]
    fn steps_and_medians() {
        assert_eq!(decreasing_steps(&[0.5, 0.4, 0.4, 0.6, 0.3]), 2);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
