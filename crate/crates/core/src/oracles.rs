//! Exact checks of the regularizer on a quadratic surrogate model.
//!
//! Meta-train losses are linear, `ℓ_i(θ) = g_iᵀθ`, and the meta-test loss is
//! `G(θ) = ½ θᵀHθ`. Every third derivative vanishes, so the supermodularity
//! gap has the closed form `α² (Σ_{S\T} g)ᵀ H (Σ_{T\S} g)`.

use std::collections::BTreeSet;

use dcg_autodiff::{Graph, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DcgError, Result};
use crate::game::{sample_coalitions, supermodularity_loss, CoalitionGame, CoalitionQuad, CoalitionSizes, GameConfig};
use crate::sample::SampleId;

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || data.len() != n * n {
            return Err(DcgError::contract(format!("{} entries for a {n}x{n} matrix", data.len())));
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in d.iter().enumerate() {
            data[i * n + i] = *v;
        }
        Self { n, data }
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n + c]
    }

    fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n + c] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for r in 0..self.n {
            for c in 0..self.n {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self.get(r, k);
                for c in 0..n {
                    out.data[r * n + c] += a * other.get(k, c);
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|r| dot(&self.data[r * self.n..(r + 1) * self.n], v)).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.transpose()) <= tol
    }

    pub fn quadratic_form(&self, a: &[f64], b: &[f64]) -> f64 {
        dot(a, &self.apply(b))
    }

    fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.n, self.n, self.data.clone()).expect("square matrix is a valid tensor")
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Linear meta-train losses `g_iᵀθ` (sample `i` has id `i`) and meta-test
/// loss `½ θᵀHθ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSurrogate {
    pub h: Matrix,
    pub grads: Vec<Vec<f64>>,
    pub alpha: f64,
}

impl QuadraticSurrogate {
    pub fn new(h: Matrix, grads: Vec<Vec<f64>>, alpha: f64) -> Result<Self> {
        if !h.is_symmetric(1e-12) {
            return Err(DcgError::contract("surrogate Hessian is not symmetric"));
        }
        if grads.iter().any(|g| g.len() != h.n) {
            return Err(DcgError::contract("gradient dimension differs from the Hessian"));
        }
        if !(alpha > 0.0) {
            return Err(DcgError::contract("alpha must be positive"));
        }
        Ok(Self { h, grads, alpha })
    }

    pub fn dim(&self) -> usize {
        self.h.n
    }

    pub fn ids(&self) -> Vec<SampleId> {
        (0..self.grads.len() as u64).map(SampleId).collect()
    }

    fn index(&self, id: SampleId) -> Result<usize> {
        let i = id.0 as usize;
        if i < self.grads.len() {
            Ok(i)
        } else {
            Err(DcgError::contract(format!("surrogate has no sample {id}")))
        }
    }

    fn sum_grads<'a>(&self, ids: impl IntoIterator<Item = &'a SampleId>) -> Result<Vec<f64>> {
        let mut s = vec![0.0; self.dim()];
        for id in ids {
            for (a, b) in s.iter_mut().zip(&self.grads[self.index(*id)?]) {
                *a += b;
            }
        }
        Ok(s)
    }
}

/// `α² (Σ_{i∈S\T} g_i)ᵀ H (Σ_{j∈T\S} g_j)`.
pub fn closed_form_gap(surrogate: &QuadraticSurrogate, s: &[SampleId], t: &[SampleId]) -> Result<f64> {
    let s: BTreeSet<_> = s.iter().copied().collect();
    let t: BTreeSet<_> = t.iter().copied().collect();
    let a = surrogate.sum_grads(s.difference(&t))?;
    let c = surrogate.sum_grads(t.difference(&s))?;
    Ok(surrogate.alpha * surrogate.alpha * surrogate.h.quadratic_form(&a, &c))
}

/// The surrogate wired into the game: parameters are one vector `θ ∈ R^d`.
/// Each sample's loss is scaled by its entry of `weights`, a column that may
/// be grad-tracked to act as a one-pixel input.
pub struct QuadraticGame<'g> {
    h: Var<'g>,
    grads: Var<'g>,
    weights: Var<'g>,
    n: usize,
    d: usize,
}

impl<'g> QuadraticGame<'g> {
    pub fn new(graph: &'g Graph, surrogate: &QuadraticSurrogate) -> Result<Self> {
        let n = surrogate.grads.len();
        let weights = graph.constant(Tensor::matrix(n, 1, vec![1.0; n])?);
        Self::with_weights(graph, surrogate, weights)
    }

    pub fn with_weights(graph: &'g Graph, surrogate: &QuadraticSurrogate, weights: Var<'g>) -> Result<Self> {
        let n = surrogate.grads.len();
        let d = surrogate.dim();
        if n == 0 {
            return Err(DcgError::contract("surrogate has no samples"));
        }
        if weights.shape() != [n, 1] {
            return Err(DcgError::contract(format!("weights must be [{n}, 1]")));
        }
        let flat: Vec<f64> = surrogate.grads.iter().flatten().copied().collect();
        Ok(Self {
            h: graph.constant(surrogate.h.to_tensor()),
            grads: graph.constant(Tensor::matrix(n, d, flat)?),
            weights,
            n,
            d,
        })
    }

    fn theta(&self, params: &[Var<'g>]) -> Result<Var<'g>> {
        match params {
            [theta] if theta.shape() == [self.d] => Ok(theta.reshape(&[self.d, 1])?),
            _ => Err(DcgError::contract(format!("surrogate expects one parameter of shape [{}]", self.d))),
        }
    }
}

impl<'g> CoalitionGame<'g> for QuadraticGame<'g> {
    fn coalition_loss(&self, params: &[Var<'g>], members: &[SampleId]) -> Result<Var<'g>> {
        let theta = self.theta(params)?;
        let rows = members
            .iter()
            .map(|id| {
                let i = id.0 as usize;
                if i < self.n {
                    Ok(i)
                } else {
                    Err(DcgError::contract(format!("surrogate has no sample {id}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let linear = self.grads.select_rows(&rows)?.matmul(theta)?;
        Ok(linear.mul(self.weights.select_rows(&rows)?)?.sum()?)
    }

    fn meta_test_loss(&self, params: &[Var<'g>]) -> Result<Var<'g>> {
        let theta = self.theta(params)?;
        Ok(theta.dot(self.h.matmul(theta)?)?.scale(0.5)?)
    }
}

/// Upper-triangular `L` with positive diagonal and `LᵀL = h`.
pub fn cholesky_definite(h: &Matrix) -> Result<Matrix> {
    let n = h.n;
    // Standard lower factor `M Mᵀ = h`; then `L = Mᵀ`.
    let mut m = Matrix::zeros(n);
    for j in 0..n {
        let mut d = h.get(j, j);
        for k in 0..j {
            d -= m.get(j, k) * m.get(j, k);
        }
        if !(d > 0.0) {
            return Err(DcgError::NotDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        m.set(j, j, djj);
        for i in j + 1..n {
            let mut s = h.get(i, j);
            for k in 0..j {
                s -= m.get(i, k) * m.get(j, k);
            }
            m.set(i, j, s / djj);
        }
    }
    Ok(m.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Definiteness {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub definiteness: Definiteness,
    /// `∇̃_iᵀ∇̃_j` with `∇̃ = L g` and `LᵀL = ±H`.
    pub transformed_inner: f64,
    /// Closed-form gap for single-sample wings `{i}` and `{j}`.
    pub gap: f64,
    pub consistent: bool,
}

/// Relative tolerance under which a value counts as zero on both sides.
const SIGN_TOL: f64 = 1e-12;

fn case_report(definiteness: Definiteness, transformed_inner: f64, gap: f64, scale: f64) -> CaseReport {
    let tol = SIGN_TOL * scale;
    let predicted_nonpositive = match definiteness {
        Definiteness::Positive => 2.0 * transformed_inner <= tol,
        Definiteness::Negative => transformed_inner >= -tol,
    };
    let consistent = gap.abs() <= tol || predicted_nonpositive == (gap <= 0.0);
    CaseReport {
        definiteness,
        transformed_inner,
        gap,
        consistent,
    }
}

fn sign_scale(alpha: f64, h: &Matrix, g_i: &[f64], g_j: &[f64]) -> f64 {
    (alpha * alpha).max(1.0) * h.frobenius().max(1.0) * norm(g_i).max(1e-300) * norm(g_j).max(1e-300)
}

/// Checks the sign relation between the gap and the inner product of the
/// Cholesky-transformed gradients. `H` must be definite.
pub fn case_sign_check(h: &Matrix, g_i: &[f64], g_j: &[f64], alpha: f64) -> Result<CaseReport> {
    let (definiteness, l) = match cholesky_definite(h) {
        Ok(l) => (Definiteness::Positive, l),
        Err(DcgError::NotDefinite { .. }) => (Definiteness::Negative, cholesky_definite(&h.scaled(-1.0))?),
        Err(e) => return Err(e),
    };
    let ti = l.apply(g_i);
    let tj = l.apply(g_j);
    let gap = alpha * alpha * h.quadratic_form(g_i, g_j);
    Ok(case_report(definiteness, dot(&ti, &tj), gap, sign_scale(alpha, h, g_i, g_j)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns.
    pub vectors: Matrix,
}

/// Cyclic Jacobi rotations until the off-diagonal norm drops below `1e-12`.
pub fn jacobi_eigen(h: &Matrix) -> Result<Eigen> {
    if !h.is_symmetric(1e-12) {
        return Err(DcgError::contract("Jacobi eigensolver needs a symmetric matrix"));
    }
    let n = h.n;
    let mut a = h.clone();
    let mut v = Matrix::identity(n);
    let off = |a: &Matrix| {
        let mut s = 0.0;
        for r in 0..n {
            for c in 0..n {
                if r != c {
                    s += a.get(r, c) * a.get(r, c);
                }
            }
        }
        s.sqrt()
    };
    for _sweep in 0..100 {
        if off(&a) < 1e-12 {
            return Ok(Eigen {
                values: (0..n).map(|i| a.get(i, i)).collect(),
                vectors: v,
            });
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    Err(DcgError::Numeric("Jacobi eigensolver did not converge".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefiniteSplit {
    /// Positive semidefinite part.
    pub positive: Matrix,
    /// Negative semidefinite part.
    pub negative: Matrix,
    pub eigen: Eigen,
}

/// `H = H₊ + H₋` from the eigendecomposition.
pub fn svd_split(h: &Matrix) -> Result<DefiniteSplit> {
    let eigen = jacobi_eigen(h)?;
    let part = |keep: fn(f64) -> f64| {
        let d: Vec<f64> = eigen.values.iter().map(|&l| keep(l)).collect();
        eigen
            .vectors
            .matmul(&Matrix::diagonal(&d))
            .matmul(&eigen.vectors.transpose())
    };
    Ok(DefiniteSplit {
        positive: part(|l| l.max(0.0)),
        negative: part(|l| l.min(0.0)),
        eigen,
    })
}

/// Sign checks restricted to the positive and negative eigen-subspaces of
/// `H`. The factor of each part is `diag(√|λ|) Vᵀ` over that subspace. A
/// part with no eigenvalues yields `None`.
pub fn subspace_sign_checks(
    h: &Matrix,
    g_i: &[f64],
    g_j: &[f64],
    alpha: f64,
) -> Result<(Option<CaseReport>, Option<CaseReport>)> {
    let split = svd_split(h)?;
    let n = h.n;
    let check = |positive: bool, part: &Matrix| -> Option<CaseReport> {
        let idx: Vec<usize> = (0..n)
            .filter(|&k| {
                let l = split.eigen.values[k];
                if positive {
                    l > 0.0
                } else {
                    l < 0.0
                }
            })
            .collect();
        if idx.is_empty() {
            return None;
        }
        let transform = |g: &[f64]| -> Vec<f64> {
            idx.iter()
                .map(|&k| {
                    let col: Vec<f64> = (0..n).map(|r| split.eigen.vectors.get(r, k)).collect();
                    split.eigen.values[k].abs().sqrt() * dot(&col, g)
                })
                .collect()
        };
        let inner = dot(&transform(g_i), &transform(g_j));
        let gap = alpha * alpha * part.quadratic_form(g_i, g_j);
        let definiteness = if positive { Definiteness::Positive } else { Definiteness::Negative };
        Some(case_report(definiteness, inner, gap, sign_scale(alpha, h, g_i, g_j)))
    };
    Ok((check(true, &split.positive), check(false, &split.negative)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub trials: usize,
    pub max_discrepancy: f64,
    /// Largest closed-form gap magnitude seen, for scale.
    pub max_gap: f64,
}

/// Runs the game pipeline on random quads and compares its raw gap with
/// [`closed_form_gap`].
pub fn pipeline_vs_oracle<R: Rng>(
    surrogate: &QuadraticSurrogate,
    sizes: CoalitionSizes,
    trials: usize,
    rng: &mut R,
) -> Result<OracleComparison> {
    let ids = surrogate.ids();
    let mut max_discrepancy: f64 = 0.0;
    let mut max_gap: f64 = 0.0;
    for _ in 0..trials {
        let quad = sample_coalitions(&ids, sizes, rng)?;
        let theta: Vec<f64> = (0..surrogate.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pipeline = pipeline_gap(surrogate, &quad, &theta, true)?;
        let oracle = closed_form_gap(surrogate, &quad.s, &quad.t)?;
        max_discrepancy = max_discrepancy.max((pipeline - oracle).abs());
        max_gap = max_gap.max(oracle.abs());
    }
    Ok(OracleComparison {
        trials,
        max_discrepancy,
        max_gap,
    })
}

/// Raw supermodularity gap of `quad` computed by the game pipeline at `θ`.
pub fn pipeline_gap(surrogate: &QuadraticSurrogate, quad: &CoalitionQuad, theta: &[f64], second_order: bool) -> Result<f64> {
    let graph = Graph::new();
    let game = QuadraticGame::new(&graph, surrogate)?;
    let params = [graph.param(Tensor::vector(theta.to_vec())?)];
    let config = GameConfig {
        alpha: surrogate.alpha,
        meta_test_domains: 1,
        sizes: CoalitionSizes::new(0, 1, 0),
        second_order,
    };
    Ok(supermodularity_loss(&game, &params, quad, &config)?.raw_gap)
}

/// Random matrix with entries in `[-1, 1)`.
pub fn random_symmetric<R: Rng>(n: usize, rng: &mut R) -> Matrix {
    let mut m = Matrix::zeros(n);
    for r in 0..n {
        for c in r..n {
            let v = rng.gen_range(-1.0..1.0);
            m.set(r, c, v);
            m.set(c, r, v);
        }
    }
    m
}

/// `AᵀA + shift·I` for a random `A`; positive definite for `shift > 0`.
pub fn random_positive_definite<R: Rng>(n: usize, shift: f64, rng: &mut R) -> Matrix {
    let a = Matrix {
        n,
        data: (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    };
    a.transpose().matmul(&a).add(&Matrix::identity(n).scaled(shift))
}
