//! Decoupled signal detection: splits the coupled uplink into one
//! equivalent single-class system per user class.
//!
//! The regularized inverse `H† = Hᴴ(HHᴴ + σ²I)⁻¹` is partitioned into row
//! blocks `Ḧ_n`, one per class. Each block is factored `Ḧ_n = R_n·Q_n` and the
//! orthonormal rows `Q_n` serve as the class projector: `y_n = Q_n·y` sees
//! the class channel `Ȟ_n = Q_n·H_n` and (almost) nothing of the others.

use std::collections::HashMap;
use std::sync::Arc;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::numerics::{
    hcat, left_null_space_basis_with, qr_row_basis_with, regularized_pseudo_inverse, ComplexMatrix,
    ComplexVector, Tolerances,
};

/// Projector and equivalent channel of one class.
#[derive(Debug, Clone)]
pub struct DecoupledClass {
    pub class_index: usize,
    /// `Q_n`, `N_{t_n}×N_r` with orthonormal rows.
    pub projector: ComplexMatrix,
    /// `Ȟ_n = Q_n·H_n`, square.
    pub equivalent_channel: ComplexMatrix,
    /// `R_n` with `Ḧ_n = R_n·Q_n` (lower triangular).
    pub triangular_factor: ComplexMatrix,
}

impl DecoupledClass {
    pub fn project(&self, y: &ComplexVector) -> Result<ComplexVector> {
        project_received(y, &self.projector)
    }
}

/// Output of the QR decoupler for every class of one realization.
#[derive(Debug, Clone)]
pub struct DecoupledClassSet {
    classes: Vec<DecoupledClass>,
    sigma2: f64,
    n_r: usize,
}

impl DecoupledClassSet {
    pub fn classes(&self) -> &[DecoupledClass] {
        &self.classes
    }

    pub fn class(&self, n: usize) -> &DecoupledClass {
        &self.classes[n]
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Regularization `σ_n²/σ_s²` used in the channel inversion.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }
}

/// `H̃_n`: every class block except class `n` (0-based), in class order.
pub fn interferer_matrix(realization: &ChannelRealization, n: usize) -> Result<ComplexMatrix> {
    let len = realization.n_classes();
    if n >= len {
        return Err(Error::Index { index: n, len });
    }
    let blocks = realization.per_class();
    let others: Vec<&ComplexMatrix> = blocks
        .iter()
        .enumerate()
        .filter(|&(m, _)| m != n)
        .map(|(_, b)| b)
        .collect();
    Ok(hcat(realization.n_r(), &others))
}

pub fn decouple_qr(realization: &ChannelRealization, sigma2: f64) -> Result<DecoupledClassSet> {
    decouple_qr_with(realization, sigma2, &Tolerances::default())
}

pub fn decouple_qr_with(
    realization: &ChannelRealization,
    sigma2: f64,
    tol: &Tolerances,
) -> Result<DecoupledClassSet> {
    let h = realization.h();
    let inverse = regularized_pseudo_inverse(h, sigma2)?;
    let classes = realization
        .class_sizes()
        .iter()
        .enumerate()
        .map(|(n, &size)| {
            let offset = realization.class_offset(n);
            let block = inverse.rows(offset, size).into_owned();
            let factor = qr_row_basis_with(&block, tol)?;
            let equivalent_channel = &factor.q * h.columns(offset, size);
            Ok(DecoupledClass {
                class_index: n,
                projector: factor.q,
                equivalent_channel,
                triangular_factor: factor.r,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DecoupledClassSet {
        classes,
        sigma2,
        n_r: realization.n_r(),
    })
}

/// Null-space projector of one class from the SVD route.
#[derive(Debug, Clone)]
pub struct SvdDecoupledClass {
    pub class_index: usize,
    /// `Ũ₀ᴴ`, `(N_r − r_n)×N_r`.
    pub projector: ComplexMatrix,
    /// `Ũ₀ᴴ·H_n`, `(N_r − r_n)×N_{t_n}`.
    pub equivalent_channel: ComplexMatrix,
    /// Numerical rank `r_n` of the interferer matrix.
    pub interferer_rank: usize,
}

pub fn decouple_svd(realization: &ChannelRealization) -> Result<Vec<SvdDecoupledClass>> {
    decouple_svd_with(realization, &Tolerances::default())
}

pub fn decouple_svd_with(
    realization: &ChannelRealization,
    tol: &Tolerances,
) -> Result<Vec<SvdDecoupledClass>> {
    let n_r = realization.n_r();
    (0..realization.n_classes())
        .map(|n| {
            let interferers = interferer_matrix(realization, n)?;
            let projector = left_null_space_basis_with(&interferers, tol)?;
            if projector.nrows() == 0 {
                return Err(Error::Dimension(format!(
                    "interferers of class {} span all {n_r} receive dimensions",
                    n + 1
                )));
            }
            let equivalent_channel = &projector * realization.class_block(n);
            Ok(SvdDecoupledClass {
                class_index: n,
                interferer_rank: n_r - projector.nrows(),
                projector,
                equivalent_channel,
            })
        })
        .collect()
}

/// `y_n = Q_n·y`.
pub fn project_received(y: &ComplexVector, projector: &ComplexMatrix) -> Result<ComplexVector> {
    if projector.ncols() != y.len() {
        return Err(Error::Dimension(format!(
            "projector has {} columns, received vector has {} entries",
            projector.ncols(),
            y.len()
        )));
    }
    Ok(projector * y)
}

/// `‖Q_n·H̃_n‖_F / ‖H̃_n‖_F` per class; zero when there are no interferers.
pub fn residual_metric(
    set: &DecoupledClassSet,
    realization: &ChannelRealization,
) -> Result<Vec<f64>> {
    if set.len() != realization.n_classes() || set.n_r() != realization.n_r() {
        return Err(Error::Dimension(
            "decoupled set does not match the realization".into(),
        ));
    }
    set.classes()
        .iter()
        .map(|class| {
            let interferers = interferer_matrix(realization, class.class_index)?;
            let scale = interferers.norm();
            Ok(if interferers.ncols() == 0 || scale == 0.0 {
                0.0
            } else {
                (&class.projector * &interferers).norm() / scale
            })
        })
        .collect()
}

/// Decoupler outputs memoized per `(realization id, σ²)`.
#[derive(Debug, Default)]
pub struct DecouplerCache {
    entries: HashMap<(u64, u64), Arc<DecoupledClassSet>>,
}

impl DecouplerCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_compute(
        &mut self,
        realization_id: u64,
        realization: &ChannelRealization,
        sigma2: f64,
        tol: &Tolerances,
    ) -> Result<Arc<DecoupledClassSet>> {
        let key = (realization_id, sigma2.to_bits());
        if let Some(hit) = self.entries.get(&key) {
            return Ok(Arc::clone(hit));
        }
        let set = Arc::new(decouple_qr_with(realization, sigma2, tol)?);
        self.entries.insert(key, Arc::clone(&set));
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}
