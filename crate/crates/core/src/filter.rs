//! Input×Gradient scoring of coalition participants and the filtered
//! supervision loss.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use dcg_autodiff::{Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::batch::BatchInputs;
use crate::error::{DcgError, Result};
use crate::model::LayerSpec;
use crate::sample::{DomainId, ImageShape, Sample, SampleId};

/// Per-sample scores `x · ∇x L` for one iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreBoard {
    scores: BTreeMap<SampleId, f64>,
}

impl ScoreBoard {
    pub fn from_scores(scores: impl IntoIterator<Item = (SampleId, f64)>) -> Self {
        Self {
            scores: scores.into_iter().collect(),
        }
    }

    /// Builds scores from the batch input matrix and its gradient, keeping
    /// only `participants`.
    pub fn from_input_gradient(
        batch: &BatchInputs<'_>,
        gradient: &Tensor,
        participants: &[SampleId],
    ) -> Result<Self> {
        let inputs = batch.inputs().value();
        if gradient.shape() != inputs.shape() {
            return Err(DcgError::contract(format!(
                "input gradient shape {:?} does not match inputs {:?}",
                gradient.shape(),
                inputs.shape()
            )));
        }
        let width = inputs.shape()[1];
        let x = inputs.data();
        let g = gradient.data();
        let mut scores = BTreeMap::new();
        for &id in participants {
            let r = batch.row_of(id)?;
            let span = r * width..(r + 1) * width;
            let s: f64 = x[span.clone()].iter().zip(&g[span]).map(|(a, b)| a * b).sum();
            scores.insert(id, s);
        }
        Ok(Self { scores })
    }

    pub fn get(&self, id: SampleId) -> Option<f64> {
        self.scores.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SampleId, f64)> + '_ {
        self.scores.iter().map(|(&k, &v)| (k, v))
    }

    /// No score carries information: every entry is exactly zero.
    pub fn is_silent(&self) -> bool {
        self.scores.values().all(|&s| s == 0.0)
    }

    /// Ids ordered by descending score, ties by ascending id.
    fn ranked(&self) -> Vec<(SampleId, f64)> {
        let mut v: Vec<_> = self.iter().collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }

    /// Restricts the board to ids accepted by `keep`.
    pub fn restricted(&self, keep: impl Fn(SampleId) -> bool) -> Self {
        Self {
            scores: self.scores.iter().filter(|(k, _)| keep(**k)).map(|(&k, &v)| (k, v)).collect(),
        }
    }
}

/// Scores the participants of `loss` by Input×Gradient. The batch inputs
/// must be grad-tracked.
pub fn score_samples<'g>(loss: Var<'g>, batch: &BatchInputs<'g>, participants: &[SampleId]) -> Result<ScoreBoard> {
    let inputs = batch.inputs();
    if !inputs.is_tracked() {
        return Err(DcgError::contract("scoring needs grad-tracked batch inputs"));
    }
    let grads = loss.graph().backward(loss, &[inputs], false)?;
    let g = grads.tensors().remove(0);
    ScoreBoard::from_input_gradient(batch, &g, participants)
}

/// The `k` top-scoring ids. Empty when every score is zero. A `k` larger
/// than the board is clamped.
pub fn select_discard(board: &ScoreBoard, k: usize) -> Vec<SampleId> {
    if k == 0 || board.is_silent() {
        return Vec::new();
    }
    let k = clamp_k(board, k);
    board.ranked().into_iter().take(k).map(|(id, _)| id).collect()
}

/// The `k` lowest-scoring ids, ties by ascending id.
pub fn select_bottom(board: &ScoreBoard, k: usize) -> Vec<SampleId> {
    if k == 0 || board.is_silent() {
        return Vec::new();
    }
    let k = clamp_k(board, k);
    let mut v: Vec<_> = board.iter().collect();
    v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    v.into_iter().take(k).map(|(id, _)| id).collect()
}

fn clamp_k(board: &ScoreBoard, k: usize) -> usize {
    if k > board.len() {
        log::warn!("k = {k} exceeds the {} scored samples; clamping", board.len());
        board.len()
    } else {
        k
    }
}

/// Which samples the filter may discard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterScope {
    #[default]
    All,
    AugmentedOnly,
    OriginalsOnly,
}

impl FilterScope {
    pub fn admits(&self, sample: &Sample) -> bool {
        match self {
            Self::All => true,
            Self::AugmentedOnly => sample.is_augmented(),
            Self::OriginalsOnly => !sample.is_augmented(),
        }
    }
}

/// `select_discard` over the part of the board admitted by `scope`.
pub fn select_discard_scoped(
    board: &ScoreBoard,
    k: usize,
    scope: FilterScope,
    samples: &HashMap<SampleId, &Sample>,
) -> Vec<SampleId> {
    if scope == FilterScope::All {
        return select_discard(board, k);
    }
    let sub = board.restricted(|id| samples.get(&id).is_some_and(|s| scope.admits(s)));
    select_discard(&sub, k)
}

/// Mean cross-entropy over the batch minus `discard`.
pub fn filtered_supervision<'g>(
    spec: &LayerSpec,
    params: &[Var<'g>],
    batch: &BatchInputs<'g>,
    discard: &[SampleId],
) -> Result<Var<'g>> {
    let drop: BTreeSet<_> = discard.iter().collect();
    let rows: Vec<usize> = batch
        .ids()
        .iter()
        .enumerate()
        .filter(|(_, id)| !drop.contains(id))
        .map(|(r, _)| r)
        .collect();
    if rows.is_empty() {
        return Err(DcgError::contract("every batch sample was filtered; k must be below the batch size"));
    }
    Ok(batch.row_losses(spec, params, &rows)?.mean()?)
}

/// Cumulative per-sample filter statistics over a training run.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct FilterCounts {
    pub scored: u64,
    pub top: u64,
    pub bottom: u64,
}

impl FilterCounts {
    /// Fraction of the iterations in which the sample was scored that put it
    /// in the discard set.
    pub fn top_frequency(&self) -> f64 {
        if self.scored == 0 {
            0.0
        } else {
            self.top as f64 / self.scored as f64
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SampleSnapshot {
    pub id: SampleId,
    pub domain: DomainId,
    pub augmented: bool,
    pub label: usize,
    pub shape: ImageShape,
    pub features: Vec<f64>,
}

impl SampleSnapshot {
    pub fn of(sample: &Sample) -> Self {
        Self {
            id: sample.id,
            domain: sample.domain,
            augmented: sample.is_augmented(),
            label: sample.label,
            shape: sample.shape,
            features: sample.features.clone(),
        }
    }
}

/// Top/bottom-k tallies, plus the images behind them. Augmented samples are
/// transient, so their pixels are kept at first sight, up to a cap.
#[derive(Debug, Clone, Default)]
pub struct FilterHistory {
    counts: BTreeMap<SampleId, FilterCounts>,
    snapshots: BTreeMap<SampleId, SampleSnapshot>,
    snapshot_cap: usize,
}

impl FilterHistory {
    pub fn new(snapshot_cap: usize) -> Self {
        Self {
            snapshot_cap,
            ..Self::default()
        }
    }

    pub fn record(
        &mut self,
        board: &ScoreBoard,
        top: &[SampleId],
        bottom: &[SampleId],
        samples: &HashMap<SampleId, &Sample>,
    ) {
        for (id, _) in board.iter() {
            self.counts.entry(id).or_default().scored += 1;
        }
        for id in top {
            self.counts.entry(*id).or_default().top += 1;
            self.snapshot(*id, samples);
        }
        for id in bottom {
            self.counts.entry(*id).or_default().bottom += 1;
            self.snapshot(*id, samples);
        }
    }

    fn snapshot(&mut self, id: SampleId, samples: &HashMap<SampleId, &Sample>) {
        if self.snapshots.contains_key(&id) || self.snapshots.len() >= self.snapshot_cap {
            return;
        }
        if let Some(s) = samples.get(&id) {
            self.snapshots.insert(id, SampleSnapshot::of(s));
        }
    }

    pub fn counts(&self) -> &BTreeMap<SampleId, FilterCounts> {
        &self.counts
    }

    pub fn snapshots(&self) -> &BTreeMap<SampleId, SampleSnapshot> {
        &self.snapshots
    }

    /// Snapshotted ids with the most top-k (or bottom-k) hits, ties by id.
    pub fn extremes(&self, n: usize, bottom: bool) -> Vec<(SampleId, u64)> {
        let mut v: Vec<(SampleId, u64)> = self
            .snapshots
            .keys()
            .map(|id| {
                let c = &self.counts[id];
                (*id, if bottom { c.bottom } else { c.top })
            })
            .filter(|(_, c)| *c > 0)
            .collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v.truncate(n);
        v
    }
}
