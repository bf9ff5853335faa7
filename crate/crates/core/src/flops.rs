//! FLOP accounting per received vector.
//!
//! Conventions: complex multiply 6, complex add 2, an `m×k` by `k×n`
//! product `8mkn`, a Hermitian solve `(8/3)n³` plus `8n²` per right-hand
//! side, slicing 4 comparisons per symbol. Filters are recomputed for every
//! received vector; only the decoupling stage can be cached.

use std::fmt;

use serde::Serialize;

use crate::channel::SystemTopology;
use crate::detect::{DetectionMode, DetectorFamily, DetectorSpec, FilterKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Decoupling,
    Projection,
    Filtering,
    Ordering,
    Slicing,
    Cancellation,
    BranchSelection,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Decoupling,
        Stage::Projection,
        Stage::Filtering,
        Stage::Ordering,
        Stage::Slicing,
        Stage::Cancellation,
        Stage::BranchSelection,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Stage::Decoupling => "decoupling",
            Stage::Projection => "projection",
            Stage::Filtering => "filtering",
            Stage::Ordering => "ordering",
            Stage::Slicing => "slicing",
            Stage::Cancellation => "cancellation",
            Stage::BranchSelection => "branch_selection",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// FLOPs split by pipeline stage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlopLedger {
    counts: [f64; 7],
}

impl FlopLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, stage: Stage, flops: f64) {
        debug_assert!(flops >= 0.0);
        self.counts[stage as usize] += flops;
    }

    pub fn get(&self, stage: Stage) -> f64 {
        self.counts[stage as usize]
    }

    pub fn stages(&self) -> impl Iterator<Item = (Stage, f64)> + '_ {
        Stage::ALL.iter().map(|&s| (s, self.get(s)))
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn merge(&mut self, other: &FlopLedger) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn scaled(&self, factor: f64) -> FlopLedger {
        FlopLedger {
            counts: self.counts.map(|c| c * factor),
        }
    }
}

/// Householder QR of an `n_tn×n_r` matrix: `16(n_r²n_tn − n_tn²n_r + n_tn³/3)`.
pub fn qr_flops(n_tn: usize, n_r: usize) -> Result<f64> {
    if n_tn > n_r {
        return Err(Error::Dimension(format!(
            "QR of a {n_tn}x{n_r} matrix needs rows <= columns"
        )));
    }
    let (t, r) = (n_tn as f64, n_r as f64);
    Ok(16.0 * (r * r * t - t * t * r + t * t * t / 3.0))
}

fn product(m: f64, k: f64, n: f64) -> f64 {
    8.0 * m * k * n
}

fn hermitian_solve(n: f64, rhs: f64) -> f64 {
    8.0 / 3.0 * n * n * n + 8.0 * n * n * rhs
}

fn gram_and_solve(c: f64, m: f64, rhs: f64, kind: FilterKind) -> f64 {
    let regularize = if kind == FilterKind::Mmse {
        2.0 * c
    } else {
        0.0
    };
    product(c, m, c) + regularize + hermitian_solve(c, rhs)
}

fn linear(ledger: &mut FlopLedger, m: usize, c: usize, kind: FilterKind) {
    let (m, c) = (m as f64, c as f64);
    // Matched filter Hᴴy, then one solve against it.
    ledger.add(
        Stage::Filtering,
        product(c, m, 1.0) + gram_and_solve(c, m, 1.0, kind),
    );
    ledger.add(Stage::Slicing, 4.0 * c);
}

fn norm_ordering(ledger: &mut FlopLedger, m: usize, c: usize) {
    let (m, c) = (m as f64, c as f64);
    ledger.add(Stage::Ordering, product(1.0, m, c) + c * c);
}

fn successive(ledger: &mut FlopLedger, m: usize, c: usize, kind: FilterKind) {
    let mf = m as f64;
    for remaining in (1..=c).rev() {
        let r = remaining as f64;
        // Deflated Gram, solve for the first unit vector, w = H_rem·x, w·y.
        let filter = gram_and_solve(r, mf, 1.0, kind) + product(mf, r, 1.0) + 8.0 * mf;
        ledger.add(Stage::Filtering, filter);
        ledger.add(Stage::Slicing, 4.0);
        if remaining > 1 {
            ledger.add(Stage::Cancellation, 8.0 * mf);
        }
    }
}

fn branch_count(spec: &DetectorSpec, c: usize) -> usize {
    spec.branches.unwrap_or(c).clamp(1, c.max(1))
}

/// Detection cost of one `m×c` system.
fn detection(ledger: &mut FlopLedger, spec: &DetectorSpec, m: usize, c: usize) {
    if c == 0 {
        return;
    }
    let family = spec.family;
    match family {
        DetectorFamily::Zf | DetectorFamily::Mmse => linear(ledger, m, c, family.filter()),
        DetectorFamily::SicZf | DetectorFamily::SicMmse => {
            if spec.ordering() == crate::detect::Ordering::NormDescending {
                norm_ordering(ledger, m, c);
            }
            successive(ledger, m, c, family.filter());
        }
        DetectorFamily::MbSic => {
            let branches = branch_count(spec, c);
            norm_ordering(ledger, m, c);
            let mut one = FlopLedger::new();
            successive(&mut one, m, c, FilterKind::Mmse);
            ledger.merge(&one.scaled(branches as f64));
            let (mf, cf, l) = (m as f64, c as f64, branches as f64);
            // Residual y − H·ŝ and its squared norm per branch, then L comparisons.
            ledger.add(
                Stage::BranchSelection,
                l * (product(mf, cf, 1.0) + 2.0 * mf + 4.0 * mf) + l,
            );
        }
    }
}

/// Per-received-vector FLOPs of `spec` on `topology`. With
/// `cache_decouplers` the channel inversion, QR factors and equivalent
/// channels are treated as stored across vectors.
pub fn pipeline_flops(
    spec: &DetectorSpec,
    topology: &SystemTopology,
    cache_decouplers: bool,
) -> FlopLedger {
    let mut ledger = FlopLedger::new();
    let n_r = topology.n_r();
    let n_t = topology.n_t();
    match spec.mode {
        DetectionMode::Coupled => detection(&mut ledger, spec, n_r, n_t),
        DetectionMode::Decoupled => {
            let sizes = topology.class_sizes();
            if !cache_decouplers {
                let (r, t) = (n_r as f64, n_t as f64);
                let inversion = product(t, r, t) + 2.0 * t + hermitian_solve(t, r);
                let per_class: f64 = sizes
                    .iter()
                    .map(|&tn| {
                        let tf = tn as f64;
                        qr_flops(tn, n_r).unwrap_or(0.0) + product(tf, r, tf)
                    })
                    .sum();
                ledger.add(Stage::Decoupling, inversion + per_class);
            }
            for &tn in &sizes {
                ledger.add(Stage::Projection, product(tn as f64, n_r as f64, 1.0));
                detection(&mut ledger, spec, tn, tn);
            }
        }
    }
    ledger
}
