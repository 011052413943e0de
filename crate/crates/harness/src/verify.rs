//! The `verify-oracles` report.

use dcg_autodiff::{finite_difference_check, AutodiffError, Graph, Tensor, Var};
use dcg_core::model::{cross_entropy, forward};
use dcg_core::oracles::{
    case_sign_check, cholesky_definite, pipeline_vs_oracle, random_positive_definite, random_symmetric, svd_split,
    subspace_sign_checks, QuadraticSurrogate,
};
use dcg_core::{CoalitionSizes, DcgError, LayerSpec, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub trials: usize,
    /// Worst observed error, or failing-trial count for counting checks.
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckRow {
    fn at_most(name: &str, trials: usize, measured: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            trials,
            measured,
            threshold,
            pass: measured <= threshold,
        }
    }

    fn below(name: &str, trials: usize, measured: f64, threshold: f64) -> Self {
        Self {
            pass: measured < threshold,
            ..Self::at_most(name, trials, measured, threshold)
        }
    }
}

fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn mlp_loss<'g>(spec: &LayerSpec, x: &Tensor, y: &[usize], g: &'g Graph, p: &[Var<'g>]) -> dcg_autodiff::Result<Var<'g>> {
    let loss = || cross_entropy(forward(spec, p, g.constant(x.clone()))?, y);
    loss().map_err(|e| match e {
        DcgError::Autodiff(e) => e,
        other => AutodiffError::Contract(other.to_string()),
    })
}

/// Worst relative finite-difference error over `instances` random MLP losses.
pub fn mlp_gradient_check(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (n, d, classes) = (6, 5, 3);
        let spec = LayerSpec::new(d, vec![rng.gen_range(3..8)], classes);
        let params = ModelParams::init(&spec, &mut rng)?;
        let x = Tensor::matrix(n, d, random_vec(&mut rng, n * d))?;
        let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let err = finite_difference_check(|g, p| mlp_loss(&spec, &x, &y, g, p), params.tensors(), 1e-5)?;
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Runs every oracle comparison with fixed seeds.
pub fn verify_oracles(trials: usize) -> Result<Vec<CheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0dc9);
    let mut rows = Vec::new();

    rows.push(CheckRow::below("mlp-finite-difference", 20, mlp_gradient_check(20, 1)?, 1e-6));

    let mut worst: f64 = 0.0;
    for d in [1, 2, 4, 8] {
        let h = random_symmetric(d, &mut rng);
        let grads = (0..16).map(|_| random_vec(&mut rng, d)).collect();
        let alpha = rng.gen_range(0.01..1.0);
        let s = QuadraticSurrogate::new(h, grads, alpha)?;
        worst = worst.max(pipeline_vs_oracle(&s, CoalitionSizes::new(3, 2, 3), trials.div_ceil(4), &mut rng)?.max_discrepancy);
    }
    rows.push(CheckRow::at_most("regularizer-vs-closed-form", trials, worst, 1e-9));

    let mut inconsistent = 0;
    let case_trials = 10 * trials;
    for t in 0..case_trials {
        let d = [2, 4, 8][t % 3];
        let pd = random_positive_definite(d, 0.05, &mut rng);
        let h = if t % 2 == 0 { pd } else { pd.scaled(-1.0) };
        let (gi, gj) = (random_vec(&mut rng, d), random_vec(&mut rng, d));
        inconsistent += !case_sign_check(&h, &gi, &gj, rng.gen_range(0.01..1.0))?.consistent as usize;
    }
    rows.push(CheckRow::at_most("definite-case-signs", case_trials, inconsistent as f64, 0.0));

    let (mut inconsistent, mut recon, mut chol): (usize, f64, f64) = (0, 0.0, 0.0);
    for t in 0..trials {
        let d = [2, 4, 8, 16][t % 4];
        let h = random_symmetric(d, &mut rng);
        let split = svd_split(&h)?;
        recon = recon.max(split.positive.add(&split.negative).max_abs_diff(&h));
        let (gi, gj) = (random_vec(&mut rng, d), random_vec(&mut rng, d));
        let (p, n) = subspace_sign_checks(&h, &gi, &gj, 0.5)?;
        inconsistent += p.iter().chain(n.iter()).filter(|r| !r.consistent).count();
        let pd = random_positive_definite(d, 0.1, &mut rng);
        let l = cholesky_definite(&pd)?;
        chol = chol.max(l.transpose().matmul(&l).max_abs_diff(&pd));
    }
    rows.push(CheckRow::at_most("subspace-case-signs", trials, inconsistent as f64, 0.0));
    rows.push(CheckRow::at_most("eigen-split-reconstruction", trials, recon, 1e-10));
    rows.push(CheckRow::at_most("cholesky-reconstruction", trials, chol, 1e-10));
    Ok(rows)
}

pub fn format_table(rows: &[CheckRow]) -> String {
    let mut out = format!("{:<28} {:>7} {:>12} {:>10}  result\n", "check", "trials", "measured", "threshold");
    for r in rows {
        out += &format!(
            "{:<28} {:>7} {:>12.3e} {:>10.1e}  {}\n",
            r.name,
            r.trials,
            r.measured,
            r.threshold,
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    out
}
