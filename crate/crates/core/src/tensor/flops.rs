//! Per-thread operation tally used to check the analytic cost model.
//!
//! Every forward kernel reports its work here: matrix products as
//! multiply-adds, everything else as elementwise operations weighted by a
//! small per-element cost. Backward passes are not counted.

use std::cell::Cell;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FlopTally {
    /// Multiply-adds performed by matrix products.
    pub matmul_macs: u64,
    /// Weighted elementwise work (normalisation, softmax, activations, ...).
    pub elementwise: u64,
}

impl FlopTally {
    pub fn total(&self) -> u64 {
        self.matmul_macs + self.elementwise
    }
}

thread_local! {
    static TALLY: Cell<FlopTally> = const { Cell::new(FlopTally { matmul_macs: 0, elementwise: 0 }) };
}

pub(crate) fn record_macs(n: u64) {
    TALLY.with(|t| {
        let mut v = t.get();
        v.matmul_macs += n;
        t.set(v);
    });
}

pub(crate) fn record_elementwise(n: u64) {
    TALLY.with(|t| {
        let mut v = t.get();
        v.elementwise += n;
        t.set(v);
    });
}

pub fn reset() {
    TALLY.with(|t| t.set(FlopTally::default()));
}

pub fn snapshot() -> FlopTally {
    TALLY.with(Cell::get)
}

/// Runs `f` with a fresh tally on the current thread and returns what it
/// recorded. The previous tally is restored afterwards.
pub fn measure<R>(f: impl FnOnce() -> R) -> (R, FlopTally) {
    let saved = snapshot();
    reset();
    let out = f();
    let counted = snapshot();
    TALLY.with(|t| t.set(saved));
    (out, counted)
}
