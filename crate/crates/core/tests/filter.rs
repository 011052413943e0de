use std::collections::HashMap;

use dcg_autodiff::Graph;
use dcg_core::filter::{filtered_supervision, score_samples, select_discard, select_discard_scoped, FilterHistory, FilterScope, ScoreBoard};
use dcg_core::fourier::augment_batch;
use dcg_core::game::{by_id, coalition_loss, meta_split, sample_coalitions, supermodularity_loss};
use dcg_core::model::ModelParams;
use dcg_core::{
    BatchInputs, CoalitionSizes, DomainId, GameConfig, IdAllocator, ImageShape, LayerSpec, MlpGame, Sample, SampleId,
    SplitMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn originals(rng: &mut ChaCha8Rng, n: u64, shape: ImageShape) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let f = (0..shape.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            Sample::original(SampleId(i), f, shape, (i % 3) as usize, DomainId((i % 3) as u32)).unwrap()
        })
        .collect()
}

#[test]
fn clamped_regularizer_scores_zero_and_discards_nothing() {
    let shape = ImageShape::new(1, 3, 3);
    let spec = LayerSpec::new(9, vec![5], 3);
    let mut clamped_seen = 0;
    let mut active_seen = 0;
    for seed in 0..60 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let orig = originals(&mut rng, 12, shape);
        let aug = augment_batch(&orig, &mut rng, 1.0, &mut IdAllocator::new()).unwrap();
        let split = meta_split(&orig, &aug, 1, SplitMode::ByParent, &mut rng).unwrap();
        let pool = split.pool();
        let quad = sample_coalitions(&pool, CoalitionSizes::new(2, 2, 2).fit(pool.len()).unwrap(), &mut rng).unwrap();
        let params = ModelParams::init(&spec, &mut rng).unwrap();
        let mut all = orig.clone();
        all.extend(aug);

        let g = Graph::new();
        let batch = BatchInputs::new(&g, &all, true).unwrap();
        let game = MlpGame::new(&spec, &batch, &split.meta_test).unwrap();
        let p = params.track(&g);
        let cfg = GameConfig { alpha: 0.5, meta_test_domains: 1, sizes: CoalitionSizes::new(2, 2, 2), second_order: true };
        let reg = supermodularity_loss(&game, &p, &quad, &cfg).unwrap();
        let board = score_samples(reg.loss, &batch, quad.participants()).unwrap();
        assert_eq!(board.len(), quad.participants().len());
        if reg.clamped() {
            clamped_seen += 1;
            assert!(board.iter().all(|(_, s)| s == 0.0));
            assert!(select_discard(&board, 5).is_empty());
        } else {
            active_seen += 1;
            assert!(!board.is_silent());
            assert_eq!(select_discard(&board, 3).len(), 3);
        }
    }
    assert!(clamped_seen > 0 && active_seen > 0);
}

#[test]
fn zero_image_scores_zero() {
    let shape = ImageShape::new(1, 2, 2);
    let spec = LayerSpec::new(4, vec![3], 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut orig = originals(&mut rng, 6, shape);
    orig[0].features = vec![0.0; 4];
    let params = ModelParams::init(&spec, &mut rng).unwrap();
    let g = Graph::new();
    let batch = BatchInputs::new(&g, &orig, true).unwrap();
    let game = MlpGame::new(&spec, &batch, &[orig[5].id]).unwrap();
    let loss = coalition_loss(&game, &params.constants(&g), &[orig[0].id, orig[1].id]).unwrap();
    let board = score_samples(loss, &batch, &[orig[0].id, orig[1].id]).unwrap();
    assert_eq!(board.get(orig[0].id), Some(0.0));
    assert_ne!(board.get(orig[1].id), Some(0.0));
}

#[test]
fn supervision_examples() {
    let shape = ImageShape::new(1, 2, 2);
    let spec = LayerSpec::new(4, vec![3], 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let orig = originals(&mut rng, 16, shape);
    let params = ModelParams::init(&spec, &mut rng).unwrap();
    let g = Graph::new();
    let p = params.constants(&g);

    let pair = BatchInputs::new(&g, &orig[..2], false).unwrap();
    let losses = pair.row_losses(&spec, &p, &[0, 1]).unwrap().value();
    let worst = if losses.data()[0] > losses.data()[1] { 0 } else { 1 };
    let kept = filtered_supervision(&spec, &p, &pair, &[orig[worst].id]).unwrap().item().unwrap();
    assert!((kept - losses.data()[1 - worst]).abs() < 1e-15);
    let plain = filtered_supervision(&spec, &p, &pair, &[]).unwrap().item().unwrap();
    assert!((plain - (losses.data()[0] + losses.data()[1]) / 2.0).abs() < 1e-15);
    assert!(filtered_supervision(&spec, &p, &pair, &[orig[0].id, orig[1].id]).is_err());

    // 16 originals + 16 augmented, five discarded
    let aug = augment_batch(&orig, &mut rng, 1.0, &mut IdAllocator::new()).unwrap();
    let mut all = orig.clone();
    all.extend(aug);
    let batch = BatchInputs::new(&g, &all, false).unwrap();
    let drop: Vec<SampleId> = all.iter().step_by(6).take(5).map(|s| s.id).collect();
    let filtered = filtered_supervision(&spec, &p, &batch, &drop).unwrap().item().unwrap();
    let rows: Vec<usize> = (0..32).filter(|r| r % 6 != 0 || *r >= 30).collect();
    assert_eq!(rows.len(), 27);
    let expected = batch.row_losses(&spec, &p, &rows).unwrap().mean().unwrap().item().unwrap();
    assert!((filtered - expected).abs() < 1e-14);
}

#[test]
fn scoped_selection_respects_origin() {
    let shape = ImageShape::new(1, 2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let orig = originals(&mut rng, 6, shape);
    let aug = augment_batch(&orig, &mut rng, 1.0, &mut IdAllocator::new()).unwrap();
    let mut all = orig.clone();
    all.extend(aug);
    let index = by_id(&all);
    let board = ScoreBoard::from_scores(all.iter().map(|s| (s.id, rng.gen_range(-1.0..1.0))));
    let only_aug = select_discard_scoped(&board, 4, FilterScope::AugmentedOnly, &index);
    assert_eq!(only_aug.len(), 4);
    assert!(only_aug.iter().all(|id| index[id].is_augmented()));
    let only_ori = select_discard_scoped(&board, 4, FilterScope::OriginalsOnly, &index);
    assert!(only_ori.iter().all(|id| !index[id].is_augmented()));
    assert_eq!(select_discard_scoped(&board, 4, FilterScope::All, &index), select_discard(&board, 4));
}

#[test]
fn history_tallies_frequencies() {
    let shape = ImageShape::new(1, 1, 1);
    let samples: Vec<Sample> =
        (0..3).map(|i| Sample::original(SampleId(i), vec![0.5], shape, 0, DomainId(0)).unwrap()).collect();
    let index: HashMap<_, _> = samples.iter().map(|s| (s.id, s)).collect();
    let mut h = FilterHistory::new(2);
    for round in 0..4 {
        let board = ScoreBoard::from_scores([(SampleId(0), 1.0), (SampleId(1), -1.0), (SampleId(2), round as f64 - 1.5)]);
        let top = select_discard(&board, 1);
        let bottom = dcg_core::filter::select_bottom(&board, 1);
        h.record(&board, &top, &bottom, &index);
    }
    let c = &h.counts()[&SampleId(0)];
    assert_eq!((c.scored, c.top, c.bottom), (4, 3, 0));
    assert_eq!(h.counts()[&SampleId(2)].top, 1);
    assert!((c.top_frequency() - 0.75).abs() < 1e-15);
    assert_eq!(h.snapshots().len(), 2);
    assert_eq!(h.extremes(5, false)[0], (SampleId(0), 3));
}
