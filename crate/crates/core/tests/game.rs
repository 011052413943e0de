use dcg_autodiff::{Graph, Tensor, Var};
use dcg_core::fourier::augment_batch;
use dcg_core::game::{
    by_id, coalition_loss, maml_regularizer, meta_split, sample_coalitions, supermodularity_loss, virtual_update,
};
use dcg_core::model::{self, ModelParams};
use dcg_core::oracles::{closed_form_gap, random_positive_definite, random_symmetric, Matrix, QuadraticGame, QuadraticSurrogate};
use dcg_core::{
    BatchInputs, CoalitionGame, CoalitionQuad, CoalitionSizes, DomainId, GameConfig, IdAllocator, ImageShape,
    LayerSpec, MlpGame, Result, Sample, SampleId, SplitMode,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Episode {
    spec: LayerSpec,
    params: ModelParams,
    samples: Vec<Sample>,
    meta_test: Vec<SampleId>,
    quad: CoalitionQuad,
}

/// A random batch of three domains plus its augmentations, split and
/// coalitioned the way one training iteration would be.
fn episode(seed: u64) -> Episode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = ImageShape::new(1, 4, 4);
    let originals: Vec<Sample> = (0..12u64)
        .map(|i| {
            let f = (0..shape.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            Sample::original(SampleId(i), f, shape, (i % 3) as usize, DomainId((i % 3) as u32)).unwrap()
        })
        .collect();
    let augmented = augment_batch(&originals, &mut rng, 1.0, &mut IdAllocator::new()).unwrap();
    let split = meta_split(&originals, &augmented, 1, SplitMode::ByParent, &mut rng).unwrap();
    let pool = split.pool();
    let sizes = CoalitionSizes::new(2, 2, 2).fit(pool.len()).unwrap();
    let quad = sample_coalitions(&pool, sizes, &mut rng).unwrap();
    let spec = LayerSpec::new(shape.len(), vec![6], 3);
    let params = ModelParams::init(&spec, &mut rng).unwrap();
    let mut samples = originals;
    samples.extend(augmented);
    Episode {
        spec,
        params,
        samples,
        meta_test: split.meta_test,
        quad,
    }
}

fn config(alpha: f64, second_order: bool) -> GameConfig {
    GameConfig {
        alpha,
        meta_test_domains: 1,
        sizes: CoalitionSizes::new(2, 2, 2),
        second_order,
    }
}

/// Raw gap through the game module.
fn pipeline(ep: &Episode, alpha: f64, second_order: bool) -> (f64, f64) {
    let g = Graph::new();
    let batch = BatchInputs::new(&g, &ep.samples, false).unwrap();
    let game = MlpGame::new(&ep.spec, &batch, &ep.meta_test).unwrap();
    let p = ep.params.track(&g);
    let reg = supermodularity_loss(&game, &p, &ep.quad, &config(alpha, second_order)).unwrap();
    (reg.raw_gap, reg.loss.item().unwrap())
}

fn rows_of(samples: &[Sample], ids: &[SampleId]) -> (Tensor, Vec<usize>) {
    let index = by_id(samples);
    let width = samples[0].features.len();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for id in ids {
        data.extend_from_slice(&index[id].features);
        labels.push(index[id].label);
    }
    (Tensor::matrix(ids.len(), width, data).unwrap(), labels)
}

/// The same gap, evaluating each branch on its own graph from a fresh copy
/// of the parameters and stepping in plain arithmetic.
fn independent_gap(ep: &Episode, alpha: f64) -> f64 {
    let (test_x, test_y) = rows_of(&ep.samples, &ep.meta_test);
    let branch = |members: &[SampleId]| -> f64 {
        let theta = ep.params.clone();
        let g = Graph::new();
        let p = theta.track(&g);
        let (x, y) = rows_of(&ep.samples, members);
        let logits = model::forward(&ep.spec, &p, g.constant(x)).unwrap();
        let f = model::cross_entropy_sum(logits, &y).unwrap();
        let grads = g.backward(f, &p, false).unwrap().tensors();
        let stepped: Vec<Tensor> = theta
            .tensors()
            .iter()
            .zip(&grads)
            .map(|(t, gr)| {
                let v = t.data().iter().zip(gr.data()).map(|(a, b)| a - alpha * b).collect();
                Tensor::new(t.shape().to_vec(), v).unwrap()
            })
            .collect();
        let moved = ModelParams::from_tensors(&ep.spec, stepped).unwrap();
        let h = Graph::new();
        let logits = model::forward(&ep.spec, &moved.constants(&h), h.constant(test_x.clone())).unwrap();
        model::cross_entropy(logits, &test_y).unwrap().item().unwrap()
    };
    branch(&ep.quad.union) + branch(&ep.quad.intersection) - branch(&ep.quad.s) - branch(&ep.quad.t)
}

#[test]
fn clamp_matches_independent_recompute() {
    let mut positive = 0;
    for seed in 0..200 {
        let ep = episode(seed);
        let alpha = 0.5;
        let (raw, loss) = pipeline(&ep, alpha, true);
        let reference = independent_gap(&ep, alpha);
        assert!((raw - reference).abs() < 1e-10, "seed {seed}: {raw} vs {reference}");
        assert!(loss >= 0.0);
        assert!((loss - reference.max(0.0)).abs() < 1e-10);
        positive += (reference > 0.0) as usize;
    }
    // both sides of the clamp are exercised
    assert!(positive > 0 && positive < 200, "{positive}");
}

#[test]
fn first_and_second_order_values_agree() {
    for seed in 0..30 {
        let ep = episode(seed);
        let a = pipeline(&ep, 0.3, true);
        let b = pipeline(&ep, 0.3, false);
        assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
    }
}

#[test]
fn second_order_mode_changes_only_the_gradient() {
    let ep = (0..50).map(episode).find(|ep| pipeline(ep, 0.5, true).0 > 0.0).unwrap();
    let grads = |second_order: bool| {
        let g = Graph::new();
        let batch = BatchInputs::new(&g, &ep.samples, false).unwrap();
        let game = MlpGame::new(&ep.spec, &batch, &ep.meta_test).unwrap();
        let p = ep.params.track(&g);
        let reg = supermodularity_loss(&game, &p, &ep.quad, &config(0.5, second_order)).unwrap();
        g.backward(reg.loss, &p, false).unwrap().tensors()
    };
    let diff: f64 = grads(true).iter().zip(&grads(false)).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max);
    assert!(diff > 1e-9);
}

#[test]
fn quadratic_law_holds_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..50 {
        let d = [2, 3, 5][trial % 3];
        let h = random_symmetric(d, &mut rng);
        let grads = (0..10).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let s = QuadraticSurrogate::new(h, grads, rng.gen_range(0.01..1.0)).unwrap();
        let quad = sample_coalitions(&s.ids(), CoalitionSizes::new(3, 2, 3), &mut rng).unwrap();
        let g = Graph::new();
        let game = QuadraticGame::new(&g, &s).unwrap();
        let theta: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let p = [g.param(Tensor::vector(theta).unwrap())];
        let cfg = GameConfig { alpha: s.alpha, ..config(1.0, true) };
        let raw = supermodularity_loss(&game, &p, &quad, &cfg).unwrap().raw_gap;
        let oracle = closed_form_gap(&s, &quad.s, &quad.t).unwrap();
        assert!((raw - oracle).abs() <= 1e-9, "{raw} vs {oracle}");
    }
}

#[test]
fn orthogonal_wings_and_aligned_wings() {
    let h = Matrix::diagonal(&[2.0, 2.0]);
    // sample 0: wing of S; 1: wing of T; 2: core
    let aligned = QuadraticSurrogate::new(h, vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0]], 0.1).unwrap();
    let quad = CoalitionQuad::from_sets(&[SampleId(0), SampleId(2)], &[SampleId(1), SampleId(2)]).unwrap();
    let g = Graph::new();
    let game = QuadraticGame::new(&g, &aligned).unwrap();
    let p = [g.param(Tensor::vector(vec![0.3, -0.4]).unwrap())];
    let reg = supermodularity_loss(&game, &p, &quad, &config(0.1, true)).unwrap();
    assert!((reg.raw_gap - 0.02).abs() < 1e-12);
    assert!((reg.loss.item().unwrap() - 0.02).abs() < 1e-12);

    let opposed =
        QuadraticSurrogate::new(Matrix::diagonal(&[2.0, 2.0]), vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 0.0]], 0.1)
            .unwrap();
    let game = QuadraticGame::new(&g, &opposed).unwrap();
    let reg = supermodularity_loss(&game, &p, &quad, &config(0.1, true)).unwrap();
    assert!(reg.raw_gap < 0.0);
    assert_eq!(reg.loss.item().unwrap(), 0.0);
}

/// `F(O) = Σ_{i∈O} ½ θᵀ H_i θ`, a game with curved coalition losses.
struct CurvedGame<'g> {
    hs: Vec<Var<'g>>,
}

impl<'g> CoalitionGame<'g> for CurvedGame<'g> {
    fn coalition_loss(&self, params: &[Var<'g>], members: &[SampleId]) -> Result<Var<'g>> {
        let theta = params[0].reshape(&[params[0].shape()[0], 1])?;
        let mut total: Option<Var<'g>> = None;
        for id in members {
            let term = theta.dot(self.hs[id.0 as usize].matmul(theta)?)?.scale(0.5)?;
            total = Some(match total {
                Some(t) => t.add(term)?,
                None => term,
            });
        }
        Ok(total.expect("non-empty coalition"))
    }

    fn meta_test_loss(&self, params: &[Var<'g>]) -> Result<Var<'g>> {
        Ok(params[0].dot(params[0])?)
    }
}

#[test]
fn virtual_step_jacobian_is_identity_minus_alpha_h() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let d = 4;
    let h = random_positive_definite(d, 0.1, &mut rng);
    let g = Graph::new();
    let game = CurvedGame { hs: vec![g.constant(h.to_tensor())] };
    let theta: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let p = [g.param(Tensor::vector(theta).unwrap())];
    let alpha = 0.05;
    let moved = virtual_update(&game, &p, &[SampleId(0)], alpha, true).unwrap()[0];
    for row in 0..d {
        let mut e = vec![0.0; d];
        e[row] = 1.0;
        let component = moved.dot(g.constant(Tensor::vector(e).unwrap())).unwrap();
        let jac = g.backward(component, &p, false).unwrap().tensors().remove(0);
        for col in 0..d {
            let expected = if row == col { 1.0 } else { 0.0 } - alpha * h.get(row, col);
            assert!((jac.data()[col] - expected).abs() < 1e-12);
        }
    }
    // first-order mode treats the step as a constant shift
    let moved = virtual_update(&game, &p, &[SampleId(0)], alpha, false).unwrap()[0];
    let jac = g.backward(moved.sum().unwrap(), &p, false).unwrap().tensors().remove(0);
    assert!(jac.data().iter().all(|v| (v - 1.0).abs() < 1e-15));
}

#[test]
fn virtual_step_examples() {
    let s = QuadraticSurrogate::new(
        Matrix::identity(2),
        vec![vec![1.0, 2.0], vec![0.5, -1.0], vec![0.0, 0.0]],
        0.1,
    )
    .unwrap();
    let g = Graph::new();
    let game = QuadraticGame::new(&g, &s).unwrap();
    let p = [g.param(Tensor::vector(vec![0.7, -0.2]).unwrap())];
    let moved = virtual_update(&game, &p, &[SampleId(0), SampleId(1)], 0.1, true).unwrap()[0];
    let v = moved.value();
    assert!((v.data()[0] - (0.7 - 0.1 * 1.5)).abs() < 1e-15);
    assert!((v.data()[1] - (-0.2 - 0.1 * 1.0)).abs() < 1e-15);
    let still = virtual_update(&game, &p, &[SampleId(2)], 0.1, true).unwrap()[0];
    assert_eq!(still.value(), p[0].value());
}

#[test]
fn inclusion_exclusion_over_random_quads() {
    for seed in 0..100 {
        let ep = episode(seed);
        let g = Graph::new();
        let batch = BatchInputs::new(&g, &ep.samples, false).unwrap();
        let game = MlpGame::new(&ep.spec, &batch, &ep.meta_test).unwrap();
        let p = ep.params.constants(&g);
        let f = |m: &[SampleId]| coalition_loss(&game, &p, m).unwrap().item().unwrap();
        let q = &ep.quad;
        assert!((f(&q.union) + f(&q.intersection) - f(&q.s) - f(&q.t)).abs() < 1e-10);
    }
}

#[test]
fn split_never_leaks_over_many_seeds() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let shape = ImageShape::new(1, 2, 2);
    let originals: Vec<Sample> = (0..16u64)
        .map(|i| Sample::original(SampleId(i), vec![0.5; 4], shape, 0, DomainId((i % 4) as u32)).unwrap())
        .collect();
    let mut ids = IdAllocator::new();
    let mut leaks = 0;
    for seed in 0..1000 {
        let mut rng_s = ChaCha8Rng::seed_from_u64(seed);
        let aug = augment_batch(&originals, &mut rng_s, 1.0, &mut ids).unwrap();
        let v = rng.gen_range(1..4);
        let split = meta_split(&originals, &aug, v, SplitMode::ByParent, &mut rng_s).unwrap();
        let index = by_id(&aug);
        leaks += split
            .meta_train_aug
            .iter()
            .filter(|id| {
                let (a, b) = index[*id].provenance().unwrap().parent_domains;
                split.test_domains.contains(&a) || split.test_domains.contains(&b)
            })
            .count();
        assert!(split.train_domains.iter().all(|d| !split.test_domains.contains(d)));
    }
    assert_eq!(leaks, 0);
}

#[test]
fn maml_regularizer_is_the_plain_sum() {
    for seed in 0..10 {
        let ep = episode(seed);
        let g = Graph::new();
        let batch = BatchInputs::new(&g, &ep.samples, false).unwrap();
        let game = MlpGame::new(&ep.spec, &batch, &ep.meta_test).unwrap();
        let p = ep.params.track(&g);
        let reg = maml_regularizer(&game, &p, &ep.quad, &config(0.2, true)).unwrap();
        let sum: f64 = reg.meta_test.iter().sum();
        assert!((reg.loss.item().unwrap() - sum).abs() < 1e-12);
        assert!(reg.loss.item().unwrap() >= 0.0);
        let raw = reg.meta_test[0] + reg.meta_test[1] - reg.meta_test[2] - reg.meta_test[3];
        assert!((reg.raw_gap - raw).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn supermodularity_loss_is_never_negative(seed in 0u64..10_000, alpha in 0.001f64..2.0) {
        let ep = episode(seed);
        let (raw, loss) = pipeline(&ep, alpha, true);
        prop_assert!(loss >= 0.0);
        prop_assert_eq!(loss, raw.max(0.0));
    }
}
