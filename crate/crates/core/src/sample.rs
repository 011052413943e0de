//! Labeled image samples and their provenance.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{DcgError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleId(pub u64);

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DomainId(pub u32);

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }
}

/// Where an augmented sample came from. The phase parent comes first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub parents: (SampleId, SampleId),
    pub parent_domains: (DomainId, DomainId),
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Origin {
    Original,
    Augmented(Provenance),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: SampleId,
    pub features: Vec<f64>,
    pub shape: ImageShape,
    pub label: usize,
    pub domain: DomainId,
    pub origin: Origin,
}

impl Sample {
    pub fn original(
        id: SampleId,
        features: Vec<f64>,
        shape: ImageShape,
        label: usize,
        domain: DomainId,
    ) -> Result<Self> {
        if features.len() != shape.len() || shape.is_empty() {
            return Err(DcgError::contract(format!(
                "sample {id}: {} features for shape {shape:?}",
                features.len()
            )));
        }
        Ok(Self {
            id,
            features,
            shape,
            label,
            domain,
            origin: Origin::Original,
        })
    }

    pub fn is_augmented(&self) -> bool {
        matches!(self.origin, Origin::Augmented(_))
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        match &self.origin {
            Origin::Augmented(p) => Some(p),
            Origin::Original => None,
        }
    }
}

/// Hands out fresh sample and domain ids for synthesized samples.
#[derive(Debug, Clone)]
pub struct IdAllocator {
    next_sample: u64,
    next_domain: u32,
}

/// First id used for augmented samples; original ids stay below it.
pub const AUGMENTED_ID_BASE: u64 = 1 << 48;
/// First domain id used for augmented domains.
pub const AUGMENTED_DOMAIN_BASE: u32 = 1 << 16;

impl Default for IdAllocator {
    fn default() -> Self {
        Self {
            next_sample: AUGMENTED_ID_BASE,
            next_domain: AUGMENTED_DOMAIN_BASE,
        }
    }
}

impl IdAllocator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sample(&mut self) -> SampleId {
        let id = SampleId(self.next_sample);
        self.next_sample += 1;
        id
    }

    pub fn domain(&mut self) -> DomainId {
        let id = DomainId(self.next_domain);
        self.next_domain += 1;
        id
    }
}
