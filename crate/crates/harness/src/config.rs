use std::fmt;
use std::str::FromStr;

use dcg_core::filter::FilterScope;
use dcg_core::{CoalitionSizes, SplitMode};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

/// Which regularizer feeds the loss or the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegKind {
    Supermodular,
    Maml,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "aug-only")]
    AugOnly,
    #[serde(rename = "aug+Lsm")]
    AugLsm,
    #[serde(rename = "aug+Lmaml")]
    AugLmaml,
    #[serde(rename = "aug+Fsm")]
    AugFsm,
    #[serde(rename = "aug+Fmaml")]
    AugFmaml,
    #[serde(rename = "aug+Lmaml+Fmaml")]
    AugLmamlFmaml,
    #[serde(rename = "full-DCG")]
    FullDcg,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::Baseline,
        Variant::AugOnly,
        Variant::AugLsm,
        Variant::AugLmaml,
        Variant::AugFsm,
        Variant::AugFmaml,
        Variant::AugLmamlFmaml,
        Variant::FullDcg,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::AugOnly => "aug-only",
            Self::AugLsm => "aug+Lsm",
            Self::AugLmaml => "aug+Lmaml",
            Self::AugFsm => "aug+Fsm",
            Self::AugFmaml => "aug+Fmaml",
            Self::AugLmamlFmaml => "aug+Lmaml+Fmaml",
            Self::FullDcg => "full-DCG",
        }
    }

    pub fn augments(&self) -> bool {
        *self != Self::Baseline
    }

    /// Regularizer added to the loss.
    pub fn regularizer(&self) -> Option<RegKind> {
        match self {
            Self::AugLsm | Self::FullDcg => Some(RegKind::Supermodular),
            Self::AugLmaml | Self::AugLmamlFmaml => Some(RegKind::Maml),
            _ => None,
        }
    }

    /// Regularizer whose input gradient scores samples for the filter.
    pub fn filter_source(&self) -> Option<RegKind> {
        match self {
            Self::AugFsm | Self::FullDcg => Some(RegKind::Supermodular),
            Self::AugFmaml | Self::AugLmamlFmaml => Some(RegKind::Maml),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown variant {s:?}")))
    }
}

pub const DEFAULT_OMEGA: f64 = 0.1;
pub const DEFAULT_K: usize = 5;

/// Training configuration. Field names match the flat JSON config file.
/// `omega` and `k` default per variant: 0.1 and 5 where the variant has a
/// regularizer or filter, 0 otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_decay: f64,
    pub lr_decay_at: f64,
    pub omega: Option<f64>,
    pub k: Option<usize>,
    pub eta: f64,
    pub meta_test_domains: usize,
    pub coalition_sizes: Option<CoalitionSizes>,
    pub seeds: Vec<u64>,
    pub variant: Variant,
    /// Size of a fixed augmented pool; `None` regenerates augmentations
    /// from every mini-batch.
    pub augment_cap: Option<usize>,
    pub hidden: Vec<usize>,
    pub second_order: bool,
    pub split_mode: SplitMode,
    pub filter_scope: FilterScope,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            lr: 0.001,
            momentum: 0.9,
            weight_decay: 5e-4,
            lr_decay: 0.1,
            lr_decay_at: 0.8,
            omega: None,
            k: None,
            eta: 1.0,
            meta_test_domains: 1,
            coalition_sizes: None,
            seeds: vec![0, 1, 2],
            variant: Variant::FullDcg,
            augment_cap: None,
            hidden: vec![128, 64],
            second_order: true,
            split_mode: SplitMode::ByParent,
            filter_scope: FilterScope::All,
        }
    }
}

impl TrainConfig {
    pub fn for_variant(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn omega(&self) -> f64 {
        self.omega
            .unwrap_or(if self.variant.regularizer().is_some() { DEFAULT_OMEGA } else { 0.0 })
    }

    pub fn k(&self) -> usize {
        self.k
            .unwrap_or(if self.variant.filter_source().is_some() { DEFAULT_K } else { 0 })
    }

    pub fn sizes(&self) -> CoalitionSizes {
        self.coalition_sizes.unwrap_or_else(|| CoalitionSizes::for_batch(self.batch_size))
    }

    /// True when the iteration needs the coalition game at all.
    pub fn plays_game(&self) -> bool {
        (self.variant.regularizer().is_some() && self.omega() > 0.0)
            || (self.variant.filter_source().is_some() && self.k() > 0)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.epochs == 0 {
            return fail("epochs must be positive".into());
        }
        if self.batch_size < 2 {
            return fail(format!("batch_size {} must be at least 2", self.batch_size));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr {} must be positive", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay {} must be non-negative", self.weight_decay));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) || !(0.0..=1.0).contains(&self.lr_decay_at) {
            return fail("lr_decay must be in (0, 1] and lr_decay_at in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return fail(format!("eta {} outside [0, 1]", self.eta));
        }
        if self.meta_test_domains == 0 {
            return fail("meta_test_domains must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        if self.hidden.contains(&0) {
            return fail("hidden widths must be positive".into());
        }
        if let Some(w) = self.omega {
            if !(w >= 0.0 && w.is_finite()) {
                return fail(format!("omega {w} must be non-negative"));
            }
            if w > 0.0 && self.variant.regularizer().is_none() {
                return fail(format!("variant {} has no regularizer but omega = {w}", self.variant));
            }
        }
        if let Some(k) = self.k {
            if k > 0 && self.variant.filter_source().is_none() {
                return fail(format!("variant {} has no filter but k = {k}", self.variant));
            }
        }
        if self.k() >= self.batch_size {
            return fail(format!("k = {} must be below batch_size = {}", self.k(), self.batch_size));
        }
        if self.k() > 0 && !self.second_order {
            return fail("first-order mode leaves input gradients of the regularizer at zero; filtering needs second_order".into());
        }
        if self.augment_cap.is_some() && !self.variant.augments() {
            return fail(format!("variant {} does not augment but augment_cap is set", self.variant));
        }
        if self.split_mode != SplitMode::ByParent && !self.variant.augments() {
            return fail("split_mode only applies to augmenting variants".into());
        }
        if self.filter_scope != FilterScope::All && self.variant.filter_source().is_none() {
            return fail(format!("variant {} has no filter to scope", self.variant));
        }
        if let Some(s) = self.coalition_sizes {
            if s.core == 0 {
                return fail("coalition core size must be positive".into());
            }
        }
        Ok(())
    }
}
