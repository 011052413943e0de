use std::collections::HashMap;

use dcg_autodiff::{Graph, Tensor, Var};

use crate::error::{DcgError, Result};
use crate::model::{self, LayerSpec};
use crate::sample::{Sample, SampleId};

/// A mini-batch placed on a graph as one `rows x features` input matrix.
pub struct BatchInputs<'g> {
    inputs: Var<'g>,
    labels: Vec<usize>,
    ids: Vec<SampleId>,
    rows: HashMap<SampleId, usize>,
}

impl<'g> BatchInputs<'g> {
    /// With `track_inputs` the input matrix is a grad-tracked leaf, so
    /// gradients with respect to individual samples can be taken.
    pub fn new<'s>(
        graph: &'g Graph,
        samples: impl IntoIterator<Item = &'s Sample>,
        track_inputs: bool,
    ) -> Result<Self> {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        let mut ids = Vec::new();
        let mut rows = HashMap::new();
        let mut width = None;
        for s in samples {
            match width {
                None => width = Some(s.features.len()),
                Some(w) if w != s.features.len() => {
                    return Err(DcgError::contract("batch mixes feature widths"));
                }
                _ => {}
            }
            if rows.insert(s.id, ids.len()).is_some() {
                return Err(DcgError::contract(format!("sample {} appears twice in a batch", s.id)));
            }
            data.extend_from_slice(&s.features);
            labels.push(s.label);
            ids.push(s.id);
        }
        let width = width.ok_or_else(|| DcgError::contract("empty batch"))?;
        let tensor = Tensor::matrix(ids.len(), width, data)?;
        let inputs = if track_inputs {
            graph.param(tensor)
        } else {
            graph.constant(tensor)
        };
        Ok(Self {
            inputs,
            labels,
            ids,
            rows,
        })
    }

    pub fn inputs(&self) -> Var<'g> {
        self.inputs
    }

    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row_of(&self, id: SampleId) -> Result<usize> {
        self.rows
            .get(&id)
            .copied()
            .ok_or_else(|| DcgError::contract(format!("sample {id} is not in the batch")))
    }

    pub fn rows_of(&self, ids: &[SampleId]) -> Result<Vec<usize>> {
        ids.iter().map(|&id| self.row_of(id)).collect()
    }

    /// Per-sample losses of the given rows (repeats allowed).
    pub fn row_losses(&self, spec: &LayerSpec, params: &[Var<'g>], rows: &[usize]) -> Result<Var<'g>> {
        if rows.is_empty() {
            return Err(DcgError::contract("loss over an empty sample set"));
        }
        let x = self.inputs.select_rows(rows)?;
        let labels: Vec<usize> = rows.iter().map(|&r| self.labels[r]).collect();
        let logits = model::forward(spec, params, x)?;
        model::sample_losses(logits, &labels)
    }
}
