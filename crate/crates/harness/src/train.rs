//! One leave-one-domain-out training run.

use std::collections::{BTreeMap, HashMap, HashSet};

use dcg_autodiff::{Graph, Tensor, Var};
use dcg_core::data::{leave_one_out, Dataset};
use dcg_core::filter::{filtered_supervision, select_bottom, select_discard_scoped, FilterHistory, ScoreBoard};
use dcg_core::fourier::{amplitude_mix, augment_batch};
use dcg_core::game::{maml_regularizer, meta_split, sample_coalitions, supermodularity_loss};
use dcg_core::model::{accuracy, sgd_step};
use dcg_core::{
    BatchInputs, DomainId, GameConfig, IdAllocator, LayerSpec, MlpGame, ModelParams, OptimizerState, Regularizer,
    Sample, SampleId,
};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{RegKind, TrainConfig};
use crate::error::{HarnessError, Result};
use crate::metrics::{EpochMetrics, RunResult, SCHEMA_VERSION};

/// Snapshots kept for the filtered-sample dump.
pub const SNAPSHOT_CAP: usize = 256;

pub struct RunOutput {
    pub result: RunResult,
    pub params: ModelParams,
    pub history: FilterHistory,
}

/// Independent random streams of one run.
struct Streams {
    init: ChaCha8Rng,
    batches: ChaCha8Rng,
    augment: ChaCha8Rng,
    game: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |s| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(s);
            r
        };
        Self {
            init: stream(0),
            batches: stream(1),
            augment: stream(2),
            game: stream(3),
        }
    }
}

/// Held-out ids and domain; every training-side sample is checked against them.
struct Isolation {
    domain: DomainId,
    ids: HashSet<SampleId>,
    checks: u64,
}

impl Isolation {
    fn check(&mut self, samples: &[Sample]) -> Result<()> {
        for s in samples {
            let mut leaked = s.domain == self.domain || self.ids.contains(&s.id);
            if let Some(p) = s.provenance() {
                leaked |= p.parent_domains.0 == self.domain
                    || p.parent_domains.1 == self.domain
                    || self.ids.contains(&p.parents.0)
                    || self.ids.contains(&p.parents.1);
            }
            if leaked {
                return Err(HarnessError::Isolation(format!("sample {} touches domain {}", s.id, self.domain)));
            }
        }
        self.checks += 1;
        Ok(())
    }
}

#[derive(Default)]
struct EpochTally {
    loss_sum: f64,
    iterations: usize,
    reg_sum: f64,
    gap_sum: f64,
    clamped: usize,
    games: usize,
    skipped: usize,
    discarded_original: usize,
    discarded_augmented: usize,
}

fn features_matrix(samples: &[&Sample]) -> Result<(Tensor, Vec<usize>)> {
    let width = samples.first().map(|s| s.features.len()).unwrap_or(0);
    let data = samples.iter().flat_map(|s| s.features.iter().copied()).collect();
    Ok((Tensor::matrix(samples.len(), width, data)?, samples.iter().map(|s| s.label).collect()))
}

/// Fixed pool of `n` augmented samples from random source pairs.
fn augmented_pool(sources: &[&Sample], n: usize, eta: f64, rng: &mut ChaCha8Rng, ids: &mut IdAllocator) -> Result<Vec<Sample>> {
    let mut pool = Vec::with_capacity(n);
    for _ in 0..n {
        let i = rng.gen_range(0..sources.len());
        let mut j = rng.gen_range(0..sources.len() - 1);
        if j >= i {
            j += 1;
        }
        let lambda = if eta > 0.0 { rng.gen_range(0.0..eta) } else { 0.0 };
        pool.push(amplitude_mix(sources[i], sources[j], lambda, ids)?);
    }
    Ok(pool)
}

fn add_scaled(into: &mut [Vec<f64>], grads: &[Tensor], c: f64) {
    for (acc, g) in into.iter_mut().zip(grads) {
        for (a, v) in acc.iter_mut().zip(g.data()) {
            *a += c * v;
        }
    }
}

fn regularizer<'g>(
    kind: RegKind,
    game: &MlpGame<'_, 'g>,
    params: &[Var<'g>],
    quad: &dcg_core::CoalitionQuad,
    config: &GameConfig,
) -> Result<Regularizer<'g>> {
    Ok(match kind {
        RegKind::Supermodular => supermodularity_loss(game, params, quad, config)?,
        RegKind::Maml => maml_regularizer(game, params, quad, config)?,
    })
}

/// True when the regularizer's value and every gradient are exactly zero.
fn is_flat(kind: RegKind, reg: &Regularizer<'_>) -> bool {
    kind == RegKind::Supermodular && reg.clamped()
}

/// Trains on every domain except `held_out` and evaluates on it.
pub fn train(config: &TrainConfig, dataset: &Dataset, held_out: DomainId, seed: u64) -> Result<RunOutput> {
    config.validate()?;
    let (sources, target) = leave_one_out(dataset, held_out).map_err(|e| HarnessError::Config(e.to_string()))?;
    if sources.len() < 2 {
        return Err(HarnessError::Config(format!(
            "holding out domain {held_out} leaves {} source domain(s); the meta split needs at least two",
            sources.len()
        )));
    }
    if config.meta_test_domains >= sources.len() {
        return Err(HarnessError::Config(format!(
            "meta_test_domains = {} must be below the {} source domains",
            config.meta_test_domains,
            sources.len()
        )));
    }
    let source_samples: Vec<&Sample> = sources.iter().flat_map(|d| d.samples.iter()).collect();
    let iterations = source_samples.len() / config.batch_size;
    if iterations == 0 {
        return Err(HarnessError::Config(format!(
            "{} source samples do not fill one batch of {}",
            source_samples.len(),
            config.batch_size
        )));
    }
    let target_refs: Vec<&Sample> = target.samples.iter().collect();
    let (target_x, target_y) = features_matrix(&target_refs)?;
    let mut isolation = Isolation {
        domain: held_out,
        ids: target.samples.iter().map(|s| s.id).collect(),
        checks: 0,
    };

    let manifest = &dataset.manifest;
    let spec = LayerSpec::new(manifest.shape().len(), config.hidden.clone(), manifest.classes);
    let mut rngs = Streams::new(seed);
    let mut params = ModelParams::init(&spec, &mut rngs.init)?;
    let mut opt = OptimizerState::new(&params, config.lr, config.momentum, config.weight_decay)
        .with_schedule(config.lr_decay, config.lr_decay_at);
    let mut ids = IdAllocator::new();
    let pool = match config.augment_cap {
        Some(n) if config.variant.augments() => {
            Some(augmented_pool(&source_samples, n, config.eta, &mut rngs.augment, &mut ids)?)
        }
        _ => None,
    };
    let mut history = FilterHistory::new(SNAPSHOT_CAP);
    let omega = config.omega();
    let k = config.k();
    let loss_kind = config.variant.regularizer().filter(|_| omega > 0.0);
    let filter_kind = config.variant.filter_source().filter(|_| k > 0);

    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let fraction = epoch as f64 / config.epochs as f64;
        let lr = opt.lr_at(fraction);
        let mut order: Vec<usize> = (0..source_samples.len()).collect();
        order.shuffle(&mut rngs.batches);
        let mut tally = EpochTally::default();

        for chunk in order.chunks_exact(config.batch_size) {
            let batch: Vec<Sample> = chunk.iter().map(|&i| source_samples[i].clone()).collect();
            let augmented = if !config.variant.augments() {
                Vec::new()
            } else if let Some(pool) = &pool {
                let n = config.batch_size.min(pool.len());
                index::sample(&mut rngs.augment, pool.len(), n).into_iter().map(|i| pool[i].clone()).collect()
            } else {
                augment_batch(&batch, &mut rngs.augment, config.eta, &mut ids)?
            };
            isolation.check(&batch)?;
            isolation.check(&augmented)?;

            let mut all: Vec<&Sample> = batch.iter().collect();
            all.extend(augmented.iter());
            let index: HashMap<SampleId, &Sample> = all.iter().map(|s| (s.id, *s)).collect();

            let graph = Graph::new();
            let inputs = BatchInputs::new(&graph, all.iter().copied(), filter_kind.is_some())?;
            let p = params.track(&graph);
            let mut discard: Vec<SampleId> = Vec::new();
            let mut reg_grads: Option<Vec<Tensor>> = None;

            if config.plays_game() {
                let domains: std::collections::BTreeSet<DomainId> = batch.iter().map(|s| s.domain).collect();
                let split = if domains.len() > config.meta_test_domains {
                    Some(meta_split(&batch, &augmented, config.meta_test_domains, config.split_mode, &mut rngs.game)?)
                } else {
                    None
                };
                let players = split.as_ref().map(|s| s.pool()).unwrap_or_default();
                let sizes = config.sizes().fit(players.len());
                match (split, sizes) {
                    (Some(split), Some(sizes)) if !split.meta_test.is_empty() => {
                        let quad = sample_coalitions(&players, sizes, &mut rngs.game)?;
                        let game = MlpGame::new(&spec, &inputs, &split.meta_test)?;
                        let gcfg = GameConfig {
                            alpha: lr,
                            meta_test_domains: config.meta_test_domains,
                            sizes,
                            second_order: config.second_order,
                        };
                        let mut regs: BTreeMap<RegKind, Regularizer<'_>> = BTreeMap::new();
                        for kind in loss_kind.iter().chain(filter_kind.iter()) {
                            if !regs.contains_key(kind) {
                                regs.insert(*kind, regularizer(*kind, &game, &p, &quad, &gcfg)?);
                            }
                        }
                        let reported = loss_kind.or(filter_kind).expect("game needs a regularizer");
                        tally.games += 1;
                        tally.reg_sum += regs[&reported].loss.item()?;
                        tally.gap_sum += regs[&reported].raw_gap;
                        tally.clamped += regs[&reported].clamped() as usize;

                        if let Some(fk) = filter_kind {
                            let reg = &regs[&fk];
                            let participants = quad.participants();
                            let shared = loss_kind == Some(fk) && !is_flat(fk, reg);
                            let board = if is_flat(fk, reg) {
                                ScoreBoard::from_scores(participants.iter().map(|&id| (id, 0.0)))
                            } else {
                                let mut wrt = vec![inputs.inputs()];
                                if shared {
                                    wrt.extend(p.iter().copied());
                                }
                                let mut g = graph.backward(reg.loss, &wrt, false)?.tensors();
                                let gx = g.remove(0);
                                if shared {
                                    reg_grads = Some(g);
                                }
                                ScoreBoard::from_input_gradient(&inputs, &gx, participants)?
                            };
                            discard = select_discard_scoped(&board, k, config.filter_scope, &index);
                            let bottom = select_bottom(&board, k);
                            history.record(&board, &discard, &bottom, &index);
                            for id in &discard {
                                if index[id].is_augmented() {
                                    tally.discarded_augmented += 1;
                                } else {
                                    tally.discarded_original += 1;
                                }
                            }
                        }
                        if let Some(lk) = loss_kind {
                            let reg = &regs[&lk];
                            if reg_grads.is_none() && !is_flat(lk, reg) {
                                reg_grads = Some(graph.backward(reg.loss, &p, false)?.tensors());
                            }
                        }
                    }
                    _ => tally.skipped += 1,
                }
            }

            let sup = filtered_supervision(&spec, &p, &inputs, &discard)?;
            tally.loss_sum += sup.item()?;
            tally.iterations += 1;
            let sup_grads = graph.backward(sup, &p, false)?.tensors();
            let grads = match &reg_grads {
                None => sup_grads,
                Some(rg) => {
                    let mut acc: Vec<Vec<f64>> = sup_grads.iter().map(|t| t.to_vec()).collect();
                    add_scaled(&mut acc, rg, omega);
                    acc.into_iter()
                        .zip(&sup_grads)
                        .map(|(v, t)| Tensor::new(t.shape().to_vec(), v))
                        .collect::<std::result::Result<Vec<_>, _>>()?
                }
            };
            sgd_step(&mut params, &grads, &mut opt, fraction)?;
        }

        let heldout_accuracy = accuracy(&params, &target_x, &target_y)?;
        let games = tally.games.max(1) as f64;
        let record = EpochMetrics {
            epoch,
            lr,
            train_loss: tally.loss_sum / tally.iterations as f64,
            reg_mean: tally.reg_sum / games,
            raw_gap_mean: tally.gap_sum / games,
            clamp_fraction: tally.clamped as f64 / games,
            game_iterations: tally.games,
            skipped_games: tally.skipped,
            discarded_original: tally.discarded_original,
            discarded_augmented: tally.discarded_augmented,
            heldout_accuracy,
        };
        log::debug!("{} seed {seed} holdout {held_out}: {record:?}", config.variant);
        epochs.push(record);
    }

    let (source_x, source_y) = features_matrix(&source_samples)?;
    let source_accuracy = accuracy(&params, &source_x, &source_y)?;
    let mut top_histogram: BTreeMap<u64, u64> = BTreeMap::new();
    for c in history.counts().values() {
        *top_histogram.entry(c.top).or_default() += 1;
    }
    let result = RunResult {
        schema_version: SCHEMA_VERSION,
        variant: config.variant,
        seed,
        held_out,
        omega,
        k,
        config: config.clone(),
        iterations_per_epoch: iterations,
        isolation_checks: isolation.checks,
        final_accuracy: epochs.last().map(|e| e.heldout_accuracy).unwrap_or(0.0),
        source_accuracy,
        filter_top_histogram: top_histogram,
        epochs,
    };
    Ok(RunOutput { result, params, history })
}
