/// Which operator an application used.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CallKind {
    Forward,
    Adjoint,
}

/// One application of `A`, `A^T` or a restricted/sketched version.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatorCall {
    pub kind: CallKind,
    /// Fraction of the full operator's rows touched (`1/m` for a subset).
    pub row_fraction: f64,
    /// Compute relative to the full grid (`1/factor` for a sketched grid).
    pub grid_cost: f64,
}

impl OperatorCall {
    pub fn cost(&self) -> f64 {
        self.row_fraction * self.grid_cost
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CallTrace {
    pub calls: Vec<OperatorCall>,
}

impl CallTrace {
    pub fn push(&mut self, kind: CallKind, row_fraction: f64, grid_cost: f64) {
        self.calls.push(OperatorCall {
            kind,
            row_fraction,
            grid_cost,
        });
    }

    pub fn extend(&mut self, other: &CallTrace) {
        self.calls.extend_from_slice(&other.calls);
    }

    pub fn count(&self, kind: CallKind) -> f64 {
        self.calls.iter().filter(|c| c.kind == kind).map(OperatorCall::cost).sum()
    }
}

/// Full-operator-equivalent number of `A` and `A^T` applications.
pub fn count_operator_calls(trace: &CallTrace) -> f64 {
    trace.calls.iter().map(OperatorCall::cost).sum()
}
