//! One training iteration cast as a convex game between domains.
//!
//! The payoff of a coalition `O` of meta-train samples is `v(O) = -G(θ')`,
//! the meta-test loss after one virtual gradient step on `O`. A convex game
//! satisfies `v(S ∪ T) + v(S ∩ T) >= v(S) + v(T)`; the regularizer penalizes
//! violations of that inequality only.

use std::collections::{BTreeSet, HashMap};

use dcg_autodiff::Var;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::batch::BatchInputs;
use crate::error::{DcgError, Result};
use crate::model::LayerSpec;
use crate::sample::{DomainId, Sample, SampleId};

/// How augmented samples are routed into the meta split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Keep an augmented sample in meta-train only when both parents are in
    /// meta-train domains; drop it otherwise.
    #[default]
    ByParent,
    /// Assign each augmented sample to meta-train or meta-test at random,
    /// ignoring its parents.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaSplit {
    pub train_domains: Vec<DomainId>,
    pub test_domains: Vec<DomainId>,
    pub meta_train: Vec<SampleId>,
    pub meta_test: Vec<SampleId>,
    pub meta_train_aug: Vec<SampleId>,
}

impl MetaSplit {
    /// `meta_train ∪ meta_train_aug`, the coalition player pool.
    pub fn pool(&self) -> Vec<SampleId> {
        self.meta_train
            .iter()
            .chain(&self.meta_train_aug)
            .copied()
            .collect()
    }
}

/// Splits the domains present in `originals` into `P - v` meta-train and `v`
/// meta-test domains, chosen uniformly.
pub fn meta_split<R: Rng>(
    originals: &[Sample],
    augmented: &[Sample],
    v: usize,
    mode: SplitMode,
    rng: &mut R,
) -> Result<MetaSplit> {
    let domains: Vec<DomainId> = originals
        .iter()
        .map(|s| s.domain)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let p = domains.len();
    if p < 2 {
        return Err(DcgError::contract(format!(
            "meta split needs at least two source domains, found {p}"
        )));
    }
    if v == 0 || v >= p {
        return Err(DcgError::contract(format!(
            "meta-test domain count {v} must satisfy 1 <= V < P = {p}"
        )));
    }
    let mut picked: Vec<usize> = index::sample(rng, p, v).into_vec();
    picked.sort_unstable();
    let test_domains: Vec<DomainId> = picked.iter().map(|&i| domains[i]).collect();
    let train_domains: Vec<DomainId> = domains
        .iter()
        .copied()
        .filter(|d| !test_domains.contains(d))
        .collect();

    let mut meta_train = Vec::new();
    let mut meta_test = Vec::new();
    for s in originals {
        if test_domains.contains(&s.domain) {
            meta_test.push(s.id);
        } else {
            meta_train.push(s.id);
        }
    }

    let mut meta_train_aug = Vec::new();
    let train_share = (p - v) as f64 / p as f64;
    for s in augmented {
        let prov = s.provenance().ok_or_else(|| {
            DcgError::contract(format!("sample {} in the augmented pool is an original", s.id))
        })?;
        match mode {
            SplitMode::ByParent => {
                let (a, b) = prov.parent_domains;
                if train_domains.contains(&a) && train_domains.contains(&b) {
                    meta_train_aug.push(s.id);
                }
            }
            SplitMode::Random => {
                if rng.gen_bool(train_share) {
                    meta_train_aug.push(s.id);
                } else {
                    meta_test.push(s.id);
                }
            }
        }
    }

    Ok(MetaSplit {
        train_domains,
        test_domains,
        meta_train,
        meta_test,
        meta_train_aug,
    })
}

/// Sizes of the disjoint draws behind a coalition quad: `S = A ∪ B`,
/// `T = B ∪ C`, with `B` the shared core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoalitionSizes {
    pub s_wing: usize,
    pub core: usize,
    pub t_wing: usize,
}

impl CoalitionSizes {
    pub fn new(s_wing: usize, core: usize, t_wing: usize) -> Self {
        Self { s_wing, core, t_wing }
    }

    /// `ceil(batch / 4)` for each part.
    pub fn for_batch(batch: usize) -> Self {
        let q = batch.div_ceil(4).max(1);
        Self::new(q, q, q)
    }

    pub fn total(&self) -> usize {
        self.s_wing + self.core + self.t_wing
    }

    /// Largest sizes not exceeding `self` that fit a pool of `pool` players,
    /// shrinking the three parts as evenly as possible and keeping a core of
    /// at least one. `None` for an empty pool.
    pub fn fit(&self, pool: usize) -> Option<Self> {
        if pool == 0 {
            return None;
        }
        let mut s = *self;
        s.core = s.core.max(1);
        while s.total() > pool {
            if s.s_wing >= s.t_wing && s.s_wing >= s.core && s.s_wing > 0 {
                s.s_wing -= 1;
            } else if s.t_wing >= s.core && s.t_wing > 0 {
                s.t_wing -= 1;
            } else if s.core > 1 {
                s.core -= 1;
            } else if s.s_wing > 0 {
                s.s_wing -= 1;
            } else {
                s.t_wing -= 1;
            }
        }
        Some(s)
    }
}

/// The four coalitions of one regularizer evaluation. Every member list is
/// sorted by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoalitionQuad {
    pub s: Vec<SampleId>,
    pub t: Vec<SampleId>,
    pub union: Vec<SampleId>,
    pub intersection: Vec<SampleId>,
}

impl CoalitionQuad {
    /// Builds the quad from explicit `S` and `T`.
    pub fn from_sets(s: &[SampleId], t: &[SampleId]) -> Result<Self> {
        let s: BTreeSet<_> = s.iter().copied().collect();
        let t: BTreeSet<_> = t.iter().copied().collect();
        let union: Vec<_> = s.union(&t).copied().collect();
        let intersection: Vec<_> = s.intersection(&t).copied().collect();
        if intersection.is_empty() {
            return Err(DcgError::contract("coalitions S and T must intersect"));
        }
        Ok(Self {
            s: s.into_iter().collect(),
            t: t.into_iter().collect(),
            union,
            intersection,
        })
    }

    /// Samples that take part in any coalition.
    pub fn participants(&self) -> &[SampleId] {
        &self.union
    }
}

/// Draws disjoint `A`, `B`, `C` from `pool` and returns the quad with
/// `S = A ∪ B`, `T = B ∪ C`, so `S ∩ T = B`.
pub fn sample_coalitions<R: Rng>(pool: &[SampleId], sizes: CoalitionSizes, rng: &mut R) -> Result<CoalitionQuad> {
    if sizes.core == 0 {
        return Err(DcgError::contract("coalition core must be non-empty"));
    }
    if pool.len() < sizes.total() {
        return Err(DcgError::contract(format!(
            "pool of {} players is too small for coalition sizes {sizes:?}",
            pool.len()
        )));
    }
    let distinct: BTreeSet<_> = pool.iter().collect();
    if distinct.len() != pool.len() {
        return Err(DcgError::contract("coalition pool contains duplicate ids"));
    }
    let draw: Vec<SampleId> = index::sample(rng, pool.len(), sizes.total())
        .into_iter()
        .map(|i| pool[i])
        .collect();
    let (a, rest) = draw.split_at(sizes.s_wing);
    let (b, c) = rest.split_at(sizes.core);
    let s: Vec<_> = a.iter().chain(b).copied().collect();
    let t: Vec<_> = b.iter().chain(c).copied().collect();
    CoalitionQuad::from_sets(&s, &t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    /// Virtual step size.
    pub alpha: f64,
    /// Number of meta-test domains.
    pub meta_test_domains: usize,
    pub sizes: CoalitionSizes,
    /// Keep the virtual gradient on the graph so the regularizer's gradient
    /// includes the Hessian term.
    pub second_order: bool,
}

impl GameConfig {
    pub fn validate(&self, source_domains: usize) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(DcgError::contract(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.meta_test_domains == 0 || self.meta_test_domains >= source_domains {
            return Err(DcgError::contract(format!(
                "V = {} must satisfy 1 <= V < P = {source_domains}",
                self.meta_test_domains
            )));
        }
        Ok(())
    }
}

/// The model side of the game: a summed training loss over any coalition
/// and a meta-test objective.
pub trait CoalitionGame<'g> {
    /// `F(O) = Σ_{x ∈ O} ℓ(f(x, θ), y)`.
    fn coalition_loss(&self, params: &[Var<'g>], members: &[SampleId]) -> Result<Var<'g>>;

    /// `G(θ)`, mean loss over the meta-test samples.
    fn meta_test_loss(&self, params: &[Var<'g>]) -> Result<Var<'g>>;
}

/// The MLP classifier playing the game on one mini-batch.
pub struct MlpGame<'a, 'g> {
    spec: &'a LayerSpec,
    batch: &'a BatchInputs<'g>,
    meta_test_rows: Vec<usize>,
}

impl<'a, 'g> MlpGame<'a, 'g> {
    pub fn new(spec: &'a LayerSpec, batch: &'a BatchInputs<'g>, meta_test: &[SampleId]) -> Result<Self> {
        if meta_test.is_empty() {
            return Err(DcgError::contract("meta-test set is empty"));
        }
        Ok(Self {
            spec,
            batch,
            meta_test_rows: batch.rows_of(meta_test)?,
        })
    }
}

impl<'g> CoalitionGame<'g> for MlpGame<'_, 'g> {
    fn coalition_loss(&self, params: &[Var<'g>], members: &[SampleId]) -> Result<Var<'g>> {
        let rows = self.batch.rows_of(members)?;
        Ok(self.batch.row_losses(self.spec, params, &rows)?.sum()?)
    }

    fn meta_test_loss(&self, params: &[Var<'g>]) -> Result<Var<'g>> {
        Ok(self
            .batch
            .row_losses(self.spec, params, &self.meta_test_rows)?
            .mean()?)
    }
}

pub fn coalition_loss<'g, G: CoalitionGame<'g>>(game: &G, params: &[Var<'g>], members: &[SampleId]) -> Result<Var<'g>> {
    if members.is_empty() {
        return Err(DcgError::contract("coalition is empty"));
    }
    game.coalition_loss(params, members)
}

pub fn meta_test_loss<'g, G: CoalitionGame<'g>>(game: &G, virtual_params: &[Var<'g>]) -> Result<Var<'g>> {
    game.meta_test_loss(virtual_params)
}

/// `θ' = θ - α ∇θ F(O)`. In second-order mode the gradient stays on the
/// graph; otherwise it enters as a constant.
pub fn virtual_update<'g, G: CoalitionGame<'g>>(
    game: &G,
    params: &[Var<'g>],
    members: &[SampleId],
    alpha: f64,
    second_order: bool,
) -> Result<Vec<Var<'g>>> {
    if !(alpha > 0.0) {
        return Err(DcgError::contract(format!("alpha must be positive, got {alpha}")));
    }
    let first = params
        .first()
        .ok_or_else(|| DcgError::contract("virtual update needs parameters"))?;
    let graph = first.graph();
    let loss = coalition_loss(game, params, members)?;
    let grads = graph.backward(loss, params, second_order)?.vars();
    params
        .iter()
        .zip(grads)
        .map(|(p, g)| {
            if !g.value().is_finite() {
                return Err(DcgError::Numeric("non-finite virtual gradient".into()));
            }
            Ok(p.sub(g.scale(alpha)?)?)
        })
        .collect()
}

/// Meta-test losses after the four virtual updates, all from the same θ.
#[derive(Debug, Clone, Copy)]
pub struct CoalitionValues<'g> {
    pub union: Var<'g>,
    pub intersection: Var<'g>,
    pub s: Var<'g>,
    pub t: Var<'g>,
}

impl<'g> CoalitionValues<'g> {
    /// `G(∪) + G(∩) - G(S) - G(T)`. Positive means supermodularity is violated.
    pub fn gap(&self) -> Result<Var<'g>> {
        Ok(self.union.add(self.intersection)?.sub(self.s)?.sub(self.t)?)
    }

    pub fn as_array(&self) -> Result<[f64; 4]> {
        Ok([
            self.union.item()?,
            self.intersection.item()?,
            self.s.item()?,
            self.t.item()?,
        ])
    }
}

pub fn coalition_values<'g, G: CoalitionGame<'g>>(
    game: &G,
    params: &[Var<'g>],
    quad: &CoalitionQuad,
    alpha: f64,
    second_order: bool,
) -> Result<CoalitionValues<'g>> {
    let value = |members: &[SampleId]| -> Result<Var<'g>> {
        let theta = virtual_update(game, params, members, alpha, second_order)?;
        meta_test_loss(game, &theta)
    };
    Ok(CoalitionValues {
        union: value(&quad.union)?,
        intersection: value(&quad.intersection)?,
        s: value(&quad.s)?,
        t: value(&quad.t)?,
    })
}

/// A regularizer value together with the diagnostics behind it.
#[derive(Debug, Clone, Copy)]
pub struct Regularizer<'g> {
    pub loss: Var<'g>,
    /// Unclamped supermodularity gap.
    pub raw_gap: f64,
    /// `[G(∪), G(∩), G(S), G(T)]`.
    pub meta_test: [f64; 4],
}

impl Regularizer<'_> {
    /// True when the clamp zeroed the supermodularity loss.
    pub fn clamped(&self) -> bool {
        self.raw_gap <= 0.0
    }
}

/// `L_sm = max(0, G(∪) + G(∩) - G(S) - G(T))`.
pub fn supermodularity_loss<'g, G: CoalitionGame<'g>>(
    game: &G,
    params: &[Var<'g>],
    quad: &CoalitionQuad,
    config: &GameConfig,
) -> Result<Regularizer<'g>> {
    let values = coalition_values(game, params, quad, config.alpha, config.second_order)?;
    let gap = values.gap()?;
    Ok(Regularizer {
        loss: gap.relu()?,
        raw_gap: gap.item()?,
        meta_test: values.as_array()?,
    })
}

/// Ablation counterpart: the plain sum of the four meta-test losses.
pub fn maml_regularizer<'g, G: CoalitionGame<'g>>(
    game: &G,
    params: &[Var<'g>],
    quad: &CoalitionQuad,
    config: &GameConfig,
) -> Result<Regularizer<'g>> {
    let values = coalition_values(game, params, quad, config.alpha, config.second_order)?;
    let loss = values.union.add(values.intersection)?.add(values.s)?.add(values.t)?;
    Ok(Regularizer {
        loss,
        raw_gap: values.gap()?.item()?,
        meta_test: values.as_array()?,
    })
}

/// Indexes a sample slice by id.
pub fn by_id(samples: &[Sample]) -> HashMap<SampleId, &Sample> {
    samples.iter().map(|s| (s.id, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::augment_batch;
    use crate::model::{sample_losses, ModelParams};
    use crate::sample::{IdAllocator, ImageShape};
    use dcg_autodiff::{Graph, Tensor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn originals(domains: &[u32], per_domain: usize, rng: &mut ChaCha8Rng) -> Vec<Sample> {
        let shape = ImageShape::new(1, 2, 2);
        let mut out = Vec::new();
        for &d in domains {
            for i in 0..per_domain {
                let f = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
                out.push(
                    Sample::original(SampleId(((d as u64) << 32) | i as u64), f, shape, i % 3, DomainId(d))
                        .unwrap(),
                );
            }
        }
        out
    }

    fn ids(v: &[u64]) -> Vec<SampleId> {
        v.iter().map(|&i| SampleId(i)).collect()
    }

    #[test]
    fn split_keeps_children_of_meta_train_parents_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let orig = originals(&[0, 1, 2], 4, &mut rng);
        let aug = augment_batch(&orig, &mut rng, 1.0, &mut IdAllocator::new()).unwrap();
        for seed in 0..50 {
            let split = meta_split(&orig, &aug, 1, SplitMode::ByParent, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(split.test_domains.len(), 1);
            assert_eq!(split.train_domains.len(), 2);
            let index = by_id(&aug);
            for id in &split.meta_train_aug {
                let (a, b) = index[id].provenance().unwrap().parent_domains;
                assert!(split.train_domains.contains(&a) && split.train_domains.contains(&b));
            }
            // every dropped child has a meta-test parent
            for s in &aug {
                let (a, b) = s.provenance().unwrap().parent_domains;
                let kept = split.meta_train_aug.contains(&s.id);
                assert_eq!(kept, !split.test_domains.contains(&a) && !split.test_domains.contains(&b));
            }
            let orig_index = by_id(&orig);
            assert!(split.meta_test.iter().all(|id| split.test_domains.contains(&orig_index[id].domain)));
        }
    }

    #[test]
    fn split_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let orig = originals(&[0, 1, 2], 3, &mut rng);
        let split = meta_split(&orig, &[], 2, SplitMode::ByParent, &mut rng).unwrap();
        assert_eq!(split.train_domains.len(), 1);
        assert!(split.meta_train_aug.is_empty());
        assert!(meta_split(&orig, &[], 3, SplitMode::ByParent, &mut rng).is_err());
        let one = originals(&[0], 3, &mut rng);
        assert!(meta_split(&one, &[], 1, SplitMode::ByParent, &mut rng).is_err());
    }

    #[test]
    fn random_split_may_leak() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let orig = originals(&[0, 1, 2], 6, &mut rng);
        let aug = augment_batch(&orig, &mut rng, 1.0, &mut IdAllocator::new()).unwrap();
        let index = by_id(&aug);
        let mut leaked = 0;
        for seed in 0..20 {
            let split = meta_split(&orig, &aug, 1, SplitMode::Random, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            leaked += split
                .meta_train_aug
                .iter()
                .filter(|id| {
                    let (a, b) = index[*id].provenance().unwrap().parent_domains;
                    split.test_domains.contains(&a) || split.test_domains.contains(&b)
                })
                .count();
            assert_eq!(split.meta_train_aug.len() + split.meta_test.len() - split.meta_test.iter().filter(|id| !index.contains_key(id)).count(), aug.len());
        }
        assert!(leaked > 0);
    }

    #[test]
    fn coalition_set_arithmetic() {
        let pool = ids(&(0..12).collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = sample_coalitions(&pool, CoalitionSizes::new(2, 2, 2), &mut rng).unwrap();
        assert_eq!((q.s.len(), q.t.len(), q.intersection.len(), q.union.len()), (4, 4, 2, 6));

        let q = sample_coalitions(&pool, CoalitionSizes::new(0, 3, 0), &mut rng).unwrap();
        assert_eq!(q.s, q.t);
        assert_eq!(q.s, q.union);
        assert_eq!(q.s, q.intersection);

        assert!(sample_coalitions(&pool[..5], CoalitionSizes::new(2, 2, 2), &mut rng).is_err());
        assert!(sample_coalitions(&pool, CoalitionSizes::new(2, 0, 2), &mut rng).is_err());
    }

    #[test]
    fn coalitions_replay() {
        let pool = ids(&(0..20).collect::<Vec<_>>());
        let draw = || sample_coalitions(&pool, CoalitionSizes::new(3, 2, 4), &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        assert_eq!(draw(), draw());
    }

    #[test]
    fn sizes_fit_small_pools() {
        let s = CoalitionSizes::for_batch(16);
        assert_eq!(s, CoalitionSizes::new(4, 4, 4));
        assert_eq!(s.fit(20), Some(s));
        let f = s.fit(7).unwrap();
        assert!(f.total() <= 7 && f.core >= 1);
        assert_eq!(s.fit(1), Some(CoalitionSizes::new(0, 1, 0)));
        assert_eq!(s.fit(0), None);
    }

    struct Fixture {
        spec: LayerSpec,
        params: ModelParams,
        samples: Vec<Sample>,
    }

    fn fixture(seed: u64) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = originals(&[0, 1, 2], 4, &mut rng);
        let spec = LayerSpec::new(4, vec![5], 3);
        let params = ModelParams::init(&spec, &mut rng).unwrap();
        Fixture { spec, params, samples }
    }

    #[test]
    fn coalition_loss_sums_members() {
        let fx = fixture(5);
        let g = Graph::new();
        let batch = BatchInputs::new(&g, &fx.samples, false).unwrap();
        let game = MlpGame::new(&fx.spec, &batch, &[fx.samples[0].id]).unwrap();
        let p = fx.params.constants(&g);
        let a = fx.samples[1].id;
        let single = coalition_loss(&game, &p, &[a]).unwrap().item().unwrap();
        let doubled = coalition_loss(&game, &p, &[a, a]).unwrap().item().unwrap();
        assert!((doubled - 2.0 * single).abs() < 1e-12);
        let direct = sample_losses(
            crate::model::forward(&fx.spec, &p, g.constant(Tensor::matrix(1, 4, fx.samples[1].features.clone()).unwrap())).unwrap(),
            &[fx.samples[1].label],
        )
        .unwrap()
        .item()
        .unwrap();
        assert!((single - direct).abs() < 1e-12);
        assert!(coalition_loss(&game, &p, &[]).is_err());
    }

    #[test]
    fn inclusion_exclusion_of_summed_losses() {
        let fx = fixture(6);
        let g = Graph::new();
        let batch = BatchInputs::new(&g, &fx.samples, false).unwrap();
        let game = MlpGame::new(&fx.spec, &batch, &[fx.samples[0].id]).unwrap();
        let p = fx.params.constants(&g);
        let pool: Vec<_> = fx.samples.iter().map(|s| s.id).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let q = sample_coalitions(&pool, CoalitionSizes::new(3, 2, 3), &mut rng).unwrap();
            let f = |m: &[SampleId]| coalition_loss(&game, &p, m).unwrap().item().unwrap();
            let lhs = f(&q.union) + f(&q.intersection);
            let rhs = f(&q.s) + f(&q.t);
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn meta_test_loss_is_a_mean() {
        let fx = fixture(7);
        let g = Graph::new();
        let mut doubled = fx.samples.clone();
        for s in &fx.samples {
            let mut c = s.clone();
            c.id = SampleId(s.id.0 + 1_000_000);
            doubled.push(c);
        }
        let batch = BatchInputs::new(&g, &doubled, false).unwrap();
        let p = fx.params.constants(&g);
        let one = MlpGame::new(&fx.spec, &batch, &[fx.samples[2].id]).unwrap();
        let direct = coalition_loss(&one, &p, &[fx.samples[2].id]).unwrap().item().unwrap();
        assert!((one.meta_test_loss(&p).unwrap().item().unwrap() - direct).abs() < 1e-12);

        let base: Vec<_> = fx.samples[..4].iter().map(|s| s.id).collect();
        let mut dup = base.clone();
        dup.extend(base.iter().map(|id| SampleId(id.0 + 1_000_000)));
        let g1 = MlpGame::new(&fx.spec, &batch, &base).unwrap().meta_test_loss(&p).unwrap().item().unwrap();
        let g2 = MlpGame::new(&fx.spec, &batch, &dup).unwrap().meta_test_loss(&p).unwrap().item().unwrap();
        assert!((g1 - g2).abs() < 1e-12);
        assert!(MlpGame::new(&fx.spec, &batch, &[]).is_err());
    }

    #[test]
    fn virtual_update_moves_against_gradient() {
        let fx = fixture(8);
        let g = Graph::new();
        let batch = BatchInputs::new(&g, &fx.samples, false).unwrap();
        let game = MlpGame::new(&fx.spec, &batch, &[fx.samples[0].id]).unwrap();
        let p = fx.params.track(&g);
        let members = [fx.samples[1].id, fx.samples[5].id];
        let loss = coalition_loss(&game, &p, &members).unwrap();
        let grads = g.backward(loss, &p, false).unwrap().tensors();
        let theta = virtual_update(&game, &p, &members, 0.1, false).unwrap();
        for ((t, p0), gr) in theta.iter().zip(fx.params.tensors()).zip(&grads) {
            for ((a, b), c) in t.value().data().iter().zip(p0.data()).zip(gr.data()) {
                assert!((a - (b - 0.1 * c)).abs() < 1e-15);
            }
        }
        assert!(virtual_update(&game, &p, &members, 0.0, false).is_err());
    }

    #[test]
    fn degenerate_quad_has_zero_gap() {
        let fx = fixture(9);
        let g = Graph::new();
        let batch = BatchInputs::new(&g, &fx.samples, false).unwrap();
        let game = MlpGame::new(&fx.spec, &batch, &[fx.samples[0].id, fx.samples[4].id]).unwrap();
        let p = fx.params.track(&g);
        let members = [fx.samples[1].id, fx.samples[2].id];
        let quad = CoalitionQuad::from_sets(&members, &members).unwrap();
        let cfg = GameConfig {
            alpha: 0.1,
            meta_test_domains: 1,
            sizes: CoalitionSizes::new(0, 2, 0),
            second_order: true,
        };
        let reg = supermodularity_loss(&game, &p, &quad, &cfg).unwrap();
        assert_eq!(reg.raw_gap, 0.0);
        assert_eq!(reg.loss.item().unwrap(), 0.0);

        let maml = maml_regularizer(&game, &p, &quad, &cfg).unwrap();
        let single = reg.meta_test[0];
        assert!((maml.loss.item().unwrap() - 4.0 * single).abs() < 1e-12);
        assert!(maml.loss.item().unwrap() >= 0.0);
    }

    #[test]
    fn first_and_second_order_agree_on_value() {
        let fx = fixture(10);
        let pool: Vec<_> = fx.samples[4..].iter().map(|s| s.id).collect();
        let meta_test: Vec<_> = fx.samples[..4].iter().map(|s| s.id).collect();
        let quad = sample_coalitions(&pool, CoalitionSizes::new(2, 2, 2), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let value = |second_order: bool| {
            let g = Graph::new();
            let batch = BatchInputs::new(&g, &fx.samples, false).unwrap();
            let game = MlpGame::new(&fx.spec, &batch, &meta_test).unwrap();
            let p = fx.params.track(&g);
            let cfg = GameConfig {
                alpha: 0.5,
                meta_test_domains: 1,
                sizes: CoalitionSizes::new(2, 2, 2),
                second_order,
            };
            let reg = supermodularity_loss(&game, &p, &quad, &cfg).unwrap();
            (reg.raw_gap, reg.loss.item().unwrap())
        };
        let (a, la) = value(true);
        let (b, lb) = value(false);
        assert!((a - b).abs() < 1e-12 && (la - lb).abs() < 1e-12);
        assert!(la >= 0.0);
    }
}
