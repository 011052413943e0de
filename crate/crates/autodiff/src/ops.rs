use crate::error::{AutodiffError, Result};
use crate::graph::Var;

/// Operation selector for [`forward_op`].
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    Add,
    Sub,
    Scale(f64),
    MatMul,
    Relu,
    LogSumExp,
    Gather(Vec<usize>),
    Sum,
    Mean,
    Mul,
}

impl OpKind {
    fn arity(&self) -> usize {
        match self {
            OpKind::Add | OpKind::Sub | OpKind::MatMul | OpKind::Mul => 2,
            _ => 1,
        }
    }
}

/// Applies one primitive by kind. Equivalent to calling the method on [`Var`].
pub fn forward_op<'g>(kind: &OpKind, inputs: &[Var<'g>]) -> Result<Var<'g>> {
    if inputs.len() != kind.arity() {
        return Err(AutodiffError::Contract(format!(
            "{kind:?} takes {} inputs, got {}",
            kind.arity(),
            inputs.len()
        )));
    }
    let a = inputs[0];
    match kind {
        OpKind::Add => a.add(inputs[1]),
        OpKind::Sub => a.sub(inputs[1]),
        OpKind::Mul => a.mul(inputs[1]),
        OpKind::MatMul => a.matmul(inputs[1]),
        OpKind::Scale(c) => a.scale(*c),
        OpKind::Relu => a.relu(),
        OpKind::LogSumExp => a.logsumexp_rows(),
        OpKind::Gather(idx) => a.gather(idx),
        OpKind::Sum => a.sum(),
        OpKind::Mean => a.mean(),
    }
}
