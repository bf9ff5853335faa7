//! Symbol mapping and the detector family: linear ZF/MMSE, ordered SIC,
//! and multi-branch SIC with minimum-residual selection.
//!
//! Detectors work on any `m×c` channel with `m ≥ c`, so the same code runs
//! on a decoupled square `Ȟ_n` and on the full coupled `H`. Filters depend
//! only on the channel, so each detector is split into a plan built once
//! per channel and a cheap per-vector `detect` step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{hermitian_solve, ComplexMatrix, ComplexVector, C64};

/// A labelled complex constellation. Point `i` carries the bit label `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    name: &'static str,
    points: Vec<C64>,
    bits_per_symbol: u32,
}

impl Constellation {
    pub fn bpsk() -> Self {
        Self {
            name: "bpsk",
            points: vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)],
            bits_per_symbol: 1,
        }
    }

    /// Gray-mapped QPSK: bits `(b1, b0)` ↦ `((1−2b1) + j(1−2b0))/√2`.
    pub fn qpsk() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let points = (0..4u32)
            .map(|i| {
                let (b1, b0) = ((i >> 1) & 1, i & 1);
                C64::new(a * (1.0 - 2.0 * b1 as f64), a * (1.0 - 2.0 * b0 as f64))
            })
            .collect();
        Self {
            name: "qpsk",
            points,
            bits_per_symbol: 2,
        }
    }

    /// Gray-mapped square 16-QAM with unit average energy.
    pub fn qam16() -> Self {
        let level = |bits: u32| match bits {
            0b00 => -3.0,
            0b01 => -1.0,
            0b11 => 1.0,
            _ => 3.0,
        };
        let scale = 1.0 / 10f64.sqrt();
        let points = (0..16u32)
            .map(|i| C64::new(scale * level(i >> 2), scale * level(i & 0b11)))
            .collect();
        Self {
            name: "16qam",
            points,
            bits_per_symbol: 4,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "bpsk" => Some(Self::bpsk()),
            "qpsk" => Some(Self::qpsk()),
            "16qam" | "qam16" => Some(Self::qam16()),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> C64 {
        self.points[index]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `M`, with `O = 2^M` points.
    pub fn bits_per_symbol(&self) -> u32 {
        self.bits_per_symbol
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// Number of differing label bits between two points.
    pub fn bit_errors(&self, a: usize, b: usize) -> u32 {
        ((a ^ b) as u32).count_ones()
    }

    /// Closest point; ties go to the lowest index.
    pub fn slice(&self, z: C64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_dist {
                best = i;
                best_dist = d;
            }
        }
        best
    }

    pub fn map(&self, symbols: &[usize]) -> ComplexVector {
        ComplexVector::from_iterator(symbols.len(), symbols.iter().map(|&i| self.points[i]))
    }
}

/// Closest constellation point to `z`.
pub fn slice(z: C64, constellation: &Constellation) -> usize {
    constellation.slice(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Zf,
    Mmse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorFamily {
    Zf,
    Mmse,
    SicZf,
    SicMmse,
    MbSic,
}

impl DetectorFamily {
    pub fn label(self) -> &'static str {
        match self {
            DetectorFamily::Zf => "zf",
            DetectorFamily::Mmse => "mmse",
            DetectorFamily::SicZf => "sic-zf",
            DetectorFamily::SicMmse => "sic-mmse",
            DetectorFamily::MbSic => "mb-sic",
        }
    }

    /// Filter used by the linear detector or by every SIC stage.
    pub fn filter(self) -> FilterKind {
        match self {
            DetectorFamily::Zf | DetectorFamily::SicZf => FilterKind::Zf,
            _ => FilterKind::Mmse,
        }
    }

    pub fn is_successive(self) -> bool {
        !matches!(self, DetectorFamily::Zf | DetectorFamily::Mmse)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ordering {
    /// Natural column order.
    None,
    /// Strongest column first.
    NormDescending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionMode {
    Decoupled,
    Coupled,
}

impl DetectionMode {
    pub fn label(self) -> &'static str {
        match self {
            DetectionMode::Decoupled => "decoupled",
            DetectionMode::Coupled => "coupled",
        }
    }
}

/// Which detector to run and on which system.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub family: DetectorFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordering: Option<Ordering>,
    /// MB-SIC branch count; defaults to the number of columns detected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branches: Option<usize>,
    pub mode: DetectionMode,
}

impl DetectorSpec {
    pub fn new(family: DetectorFamily, mode: DetectionMode) -> Self {
        Self {
            family,
            ordering: None,
            branches: None,
            mode,
        }
    }

    pub fn with_branches(mut self, branches: usize) -> Self {
        self.branches = Some(branches);
        self
    }

    pub fn ordering(&self) -> Ordering {
        self.ordering.unwrap_or(if self.family.is_successive() {
            Ordering::NormDescending
        } else {
            Ordering::None
        })
    }

    pub fn validate(&self) -> Result<()> {
        match (self.family, self.branches) {
            (DetectorFamily::MbSic, Some(0)) => {
                return Err(Error::Validation("mb-sic needs at least one branch".into()))
            }
            (DetectorFamily::MbSic, _) => {}
            (family, Some(_)) => {
                return Err(Error::Validation(format!(
                    "branches only apply to mb-sic, not {}",
                    family.label()
                )))
            }
            _ => {}
        }
        if self.family == DetectorFamily::MbSic && self.ordering() != Ordering::NormDescending {
            return Err(Error::Validation(
                "mb-sic uses norm-descending ordering on its first branch".into(),
            ));
        }
        if !self.family.is_successive() && self.ordering() != Ordering::None {
            return Err(Error::Validation(format!(
                "{} does not take an ordering",
                self.family.label()
            )));
        }
        Ok(())
    }

    /// `sic-mmse/decoupled`-style label.
    pub fn label(&self) -> String {
        match (self.family, self.branches) {
            (DetectorFamily::MbSic, Some(l)) => format!("mb-sic-l{l}"),
            (family, _) => family.label().to_string(),
        }
    }
}

fn check_channel(h: &ComplexMatrix) -> Result<()> {
    if h.ncols() == 0 || h.nrows() < h.ncols() {
        return Err(Error::Dimension(format!(
            "detection needs a tall channel, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    Ok(())
}

/// ZF `(ȞᴴȞ)⁻¹Ȟᴴ` or MMSE `(ȞᴴȞ + σ²I)⁻¹Ȟᴴ`.
pub fn linear_receive_matrix(
    h: &ComplexMatrix,
    sigma2: f64,
    kind: FilterKind,
) -> Result<ComplexMatrix> {
    check_channel(h)?;
    let h_adj = h.adjoint();
    let mut gram = &h_adj * h;
    if kind == FilterKind::Mmse {
        for i in 0..gram.nrows() {
            gram[(i, i)] += C64::new(sigma2, 0.0);
        }
    }
    let w = hermitian_solve(&gram, &h_adj, "linear receive filter")?;
    if kind == FilterKind::Zf {
        // A rank-deficient Gram can slip past the factorization; check W·H = I.
        let err = (&w * h - ComplexMatrix::identity(h.ncols(), h.ncols())).norm();
        if !(err <= 1e-6 * (h.ncols() as f64).sqrt()) {
            return Err(Error::SingularMatrix("zero-forcing filter"));
        }
    }
    Ok(w)
}

/// Component-wise hard decision of `W·y`.
pub fn detect_linear(
    y: &ComplexVector,
    w: &ComplexMatrix,
    constellation: &Constellation,
) -> Result<Vec<usize>> {
    if w.ncols() != y.len() {
        return Err(Error::Dimension(format!(
            "filter has {} columns, received vector has {} entries",
            w.ncols(),
            y.len()
        )));
    }
    Ok((w * y).iter().map(|&z| constellation.slice(z)).collect())
}

/// Column indices sorted by descending Euclidean norm, ties by index.
pub fn norm_ordering(h: &ComplexMatrix) -> Vec<usize> {
    let norms: Vec<f64> = h.column_iter().map(|c| c.norm_squared()).collect();
    let mut order: Vec<usize> = (0..h.ncols()).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    order
}

fn ordering_for(h: &ComplexMatrix, ordering: Ordering) -> Vec<usize> {
    match ordering {
        Ordering::None => (0..h.ncols()).collect(),
        Ordering::NormDescending => norm_ordering(h),
    }
}

#[derive(Debug, Clone)]
struct SicStage {
    column: usize,
    filter: ComplexVector,
}

/// Per-stage filters of a successive canceller for one channel and order.
#[derive(Debug, Clone)]
pub struct SicPlan {
    h: ComplexMatrix,
    stages: Vec<SicStage>,
}

impl SicPlan {
    /// Builds the stage filters. At each stage the filter is recomputed on
    /// the columns not yet detected.
    pub fn new(h: &ComplexMatrix, sigma2: f64, kind: FilterKind, order: &[usize]) -> Result<Self> {
        check_channel(h)?;
        let c = h.ncols();
        let mut seen = vec![false; c];
        if order.len() != c
            || order
                .iter()
                .any(|&j| j >= c || std::mem::replace(&mut seen[j], true))
        {
            return Err(Error::Dimension(format!(
                "order {order:?} is not a permutation of {c} columns"
            )));
        }
        let gram = h.adjoint() * h;
        let reg = match kind {
            FilterKind::Zf => 0.0,
            FilterKind::Mmse => sigma2,
        };
        let mut stages = Vec::with_capacity(c);
        for (i, &column) in order.iter().enumerate() {
            let remaining = &order[i..];
            let size = remaining.len();
            let mut sub =
                ComplexMatrix::from_fn(size, size, |a, b| gram[(remaining[a], remaining[b])]);
            for d in 0..size {
                sub[(d, d)] += C64::new(reg, 0.0);
            }
            let mut unit = ComplexMatrix::zeros(size, 1);
            unit[(0, 0)] = C64::new(1.0, 0.0);
            let x = hermitian_solve(&sub, &unit, "SIC stage filter")?;
            // Row 0 of (G + σ²I)⁻¹H_remᴴ equals (H_rem·x)ᴴ.
            let mut combined = ComplexVector::zeros(h.nrows());
            for (a, &col) in remaining.iter().enumerate() {
                combined.axpy(x[(a, 0)], &h.column(col), C64::new(1.0, 0.0));
            }
            if kind == FilterKind::Zf {
                let gain = combined.dotc(&h.column(column));
                if !(gain.norm() > 0.5) || !gain.re.is_finite() {
                    return Err(Error::SingularMatrix("SIC zero-forcing stage"));
                }
            }
            stages.push(SicStage {
                column,
                filter: combined.conjugate(),
            });
        }
        Ok(Self {
            h: h.clone(),
            stages,
        })
    }

    pub fn order(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.column).collect()
    }

    /// Detects a vector; output in natural column order.
    pub fn detect(&self, y: &ComplexVector, constellation: &Constellation) -> Vec<usize> {
        let mut residual = y.clone();
        let mut out = vec![0; self.stages.len()];
        for stage in &self.stages {
            let z = stage.filter.dot(&residual);
            let symbol = constellation.slice(z);
            out[stage.column] = symbol;
            residual.axpy(
                -constellation.point(symbol),
                &self.h.column(stage.column),
                C64::new(1.0, 0.0),
            );
        }
        out
    }
}

pub fn detect_sic(
    y: &ComplexVector,
    h: &ComplexMatrix,
    sigma2: f64,
    constellation: &Constellation,
    ordering: Ordering,
    kind: FilterKind,
) -> Result<Vec<usize>> {
    check_dims(y, h)?;
    let plan = SicPlan::new(h, sigma2, kind, &ordering_for(h, ordering))?;
    Ok(plan.detect(y, constellation))
}

fn check_dims(y: &ComplexVector, h: &ComplexMatrix) -> Result<()> {
    if y.len() != h.nrows() {
        return Err(Error::Dimension(format!(
            "received vector has {} entries, channel has {} rows",
            y.len(),
            h.nrows()
        )));
    }
    Ok(())
}

/// `‖y − H·x‖²` for constellation indices `x`.
pub fn residual_norm(
    y: &ComplexVector,
    h: &ComplexMatrix,
    symbols: &[usize],
    constellation: &Constellation,
) -> f64 {
    (y - h * constellation.map(symbols)).norm_squared()
}

/// Branch orderings: branch 1 is the norm ordering, branch `l ≥ 2` is the
/// natural column order shifted left by `l − 1` positions.
pub fn branch_orderings(h: &ComplexMatrix, branches: usize) -> Vec<Vec<usize>> {
    let n = h.ncols();
    (0..branches)
        .map(|l| {
            if l == 0 {
                return norm_ordering(h);
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.rotate_left(l % n.max(1));
            order
        })
        .collect()
}

/// Outcome of a multi-branch run.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchDecision {
    pub symbols: Vec<usize>,
    /// 0-based index of the winning branch.
    pub branch: usize,
    pub residual: f64,
}

/// Multi-branch SIC with MMSE stages.
#[derive(Debug, Clone)]
pub struct MbSicPlan {
    h: ComplexMatrix,
    branches: Vec<(usize, SicPlan)>,
}

impl MbSicPlan {
    pub fn new(h: &ComplexMatrix, sigma2: f64, branches: usize) -> Result<Self> {
        check_channel(h)?;
        if branches == 0 || branches > h.ncols() {
            return Err(Error::Dimension(format!(
                "branch count {branches} outside 1..={}",
                h.ncols()
            )));
        }
        let mut built = Vec::with_capacity(branches);
        let mut last_err = None;
        for (l, order) in branch_orderings(h, branches).into_iter().enumerate() {
            match SicPlan::new(h, sigma2, FilterKind::Mmse, &order) {
                Ok(plan) => built.push((l, plan)),
                Err(e) => last_err = Some(e),
            }
        }
        if built.is_empty() {
            return Err(last_err.unwrap_or(Error::SingularMatrix("MB-SIC branches")));
        }
        Ok(Self {
            h: h.clone(),
            branches: built,
        })
    }

    pub fn detect(&self, y: &ComplexVector, constellation: &Constellation) -> BranchDecision {
        let mut best: Option<BranchDecision> = None;
        for (l, plan) in &self.branches {
            let symbols = plan.detect(y, constellation);
            let residual = residual_norm(y, &self.h, &symbols, constellation);
            if best.as_ref().is_none_or(|b| residual < b.residual) {
                best = Some(BranchDecision {
                    symbols,
                    branch: *l,
                    residual,
                });
            }
        }
        best.expect("at least one branch")
    }

    /// Per-branch decisions, for inspection.
    pub fn candidates(
        &self,
        y: &ComplexVector,
        constellation: &Constellation,
    ) -> Vec<BranchDecision> {
        self.branches
            .iter()
            .map(|(l, plan)| {
                let symbols = plan.detect(y, constellation);
                let residual = residual_norm(y, &self.h, &symbols, constellation);
                BranchDecision {
                    symbols,
                    branch: *l,
                    residual,
                }
            })
            .collect()
    }
}

pub fn detect_mb_sic(
    y: &ComplexVector,
    h: &ComplexMatrix,
    sigma2: f64,
    constellation: &Constellation,
    branches: usize,
) -> Result<Vec<usize>> {
    check_dims(y, h)?;
    Ok(MbSicPlan::new(h, sigma2, branches)?
        .detect(y, constellation)
        .symbols)
}

/// A detector prepared for one channel matrix.
#[derive(Debug, Clone)]
pub enum DetectorPlan {
    Linear(ComplexMatrix),
    Sic(SicPlan),
    MbSic(MbSicPlan),
}

impl DetectorPlan {
    pub fn build(spec: &DetectorSpec, h: &ComplexMatrix, sigma2: f64) -> Result<Self> {
        let family = spec.family;
        Ok(match family {
            DetectorFamily::Zf | DetectorFamily::Mmse => {
                DetectorPlan::Linear(linear_receive_matrix(h, sigma2, family.filter())?)
            }
            DetectorFamily::SicZf | DetectorFamily::SicMmse => DetectorPlan::Sic(SicPlan::new(
                h,
                sigma2,
                family.filter(),
                &ordering_for(h, spec.ordering()),
            )?),
            DetectorFamily::MbSic => {
                let branches = spec.branches.unwrap_or(h.ncols()).min(h.ncols());
                DetectorPlan::MbSic(MbSicPlan::new(h, sigma2, branches)?)
            }
        })
    }

    pub fn detect(&self, y: &ComplexVector, constellation: &Constellation) -> Vec<usize> {
        match self {
            DetectorPlan::Linear(w) => (w * y).iter().map(|&z| constellation.slice(z)).collect(),
            DetectorPlan::Sic(plan) => plan.detect(y, constellation),
            DetectorPlan::MbSic(plan) => plan.detect(y, constellation).symbols,
        }
    }
}

/// Runs `spec` on the full coupled system `y = H·s + n`.
pub fn detect_coupled(
    y: &ComplexVector,
    h: &ComplexMatrix,
    sigma2: f64,
    spec: &DetectorSpec,
    constellation: &Constellation,
) -> Result<Vec<usize>> {
    check_dims(y, h)?;
    Ok(DetectorPlan::build(spec, h, sigma2)?.detect(y, constellation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::complex_normal;
    use crate::testutil::{random_matrix, rng};
    use rand::Rng;

    fn diag(values: &[f64]) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    fn random_symbols(rng: &mut impl Rng, c: &Constellation, n: usize) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..c.len())).collect()
    }

    /// Exhaustive minimum-distance search over every symbol vector.
    fn ml_detect(y: &ComplexVector, h: &ComplexMatrix, c: &Constellation) -> Vec<usize> {
        let n = h.ncols();
        let total = c.len().pow(n as u32);
        let mut best = (f64::INFINITY, vec![0; n]);
        for code in 0..total {
            let mut rest = code;
            let cand: Vec<usize> = (0..n)
                .map(|_| {
                    let s = rest % c.len();
                    rest /= c.len();
                    s
                })
                .collect();
            let d = residual_norm(y, h, &cand, c);
            if d < best.0 {
                best = (d, cand);
            }
        }
        best.1
    }

    #[test]
    fn constellations_have_unit_energy() {
        for c in [
            Constellation::bpsk(),
            Constellation::qpsk(),
            Constellation::qam16(),
        ] {
            assert!((c.average_energy() - 1.0).abs() < 1e-12, "{}", c.name());
            assert_eq!(c.len(), 1 << c.bits_per_symbol());
        }
    }

    #[test]
    fn qpsk_gray_labels() {
        let c = Constellation::qpsk();
        let a = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(c.point(0), C64::new(a, a));
        assert_eq!(c.point(1), C64::new(a, -a));
        assert_eq!(c.point(2), C64::new(-a, a));
        assert_eq!(c.point(3), C64::new(-a, -a));
        // Neighbours differ in one bit.
        assert_eq!(c.bit_errors(0, 1), 1);
        assert_eq!(c.bit_errors(0, 2), 1);
        assert_eq!(c.bit_errors(0, 3), 2);
    }

    #[test]
    fn slicing_cases() {
        let c = Constellation::qpsk();
        assert_eq!(slice(c.point(3), &c), 3);
        assert_eq!(slice(C64::new(0.9, 0.1), &c), 0);
        assert_eq!(slice(C64::new(0.0, 0.0), &c), 0);
        // Exhaustive check of the 0.9 + 0.1j case.
        let z = C64::new(0.9, 0.1);
        let dists: Vec<f64> = c.points().iter().map(|p| (z - p).norm()).collect();
        assert!(dists[0] < dists[1] && dists[0] < dists[2] && dists[0] < dists[3]);
    }

    #[test]
    fn linear_filters_on_identity() {
        let eye = ComplexMatrix::identity(2, 2);
        let zf = linear_receive_matrix(&eye, 0.0, FilterKind::Zf).unwrap();
        assert!((zf - &eye).norm() < 1e-14);
        let mmse = linear_receive_matrix(&eye, 1.0, FilterKind::Mmse).unwrap();
        assert!((mmse - eye.scale(0.5)).norm() < 1e-14);
    }

    #[test]
    fn zf_inverts_random_square_channel() {
        let h = random_matrix(&mut rng(1), 4, 4);
        let w = linear_receive_matrix(&h, 0.0, FilterKind::Zf).unwrap();
        assert!((w * &h - ComplexMatrix::identity(4, 4)).norm() <= 1e-10);
    }

    #[test]
    fn zf_rejects_rank_deficient_channel() {
        let mut h = ComplexMatrix::zeros(3, 2);
        h[(0, 0)] = C64::new(1.0, 0.0);
        h[(0, 1)] = C64::new(2.0, 0.0);
        assert!(matches!(
            linear_receive_matrix(&h, 0.0, FilterKind::Zf),
            Err(Error::SingularMatrix(_))
        ));
    }

    #[test]
    fn linear_detection_noiseless_and_zero_input() {
        let c = Constellation::qpsk();
        let mut rng = rng(2);
        let h = random_matrix(&mut rng, 4, 4);
        let s = random_symbols(&mut rng, &c, 4);
        let y = &h * c.map(&s);
        let w = linear_receive_matrix(&h, 0.0, FilterKind::Zf).unwrap();
        assert_eq!(detect_linear(&y, &w, &c).unwrap(), s);
        assert_eq!(
            detect_linear(&ComplexVector::zeros(4), &w, &c).unwrap(),
            vec![0; 4]
        );
    }

    #[test]
    fn linear_detection_at_high_snr() {
        let c = Constellation::qpsk();
        let mut rng = rng(3);
        // 30 dB per-bit SNR with N_t = 4, M = 2.
        let sigma_n2: f64 = 4.0 / (2.0 * 1000.0);
        let mut errors = 0;
        let trials = 10_000;
        for _ in 0..trials {
            let h = random_matrix(&mut rng, 4, 4);
            let s = random_symbols(&mut rng, &c, 4);
            let noise =
                ComplexVector::from_fn(4, |_, _| complex_normal(&mut rng) * sigma_n2.sqrt());
            let y = &h * c.map(&s) + noise;
            let w = linear_receive_matrix(&h, sigma_n2, FilterKind::Mmse).unwrap();
            let got = detect_linear(&y, &w, &c).unwrap();
            errors += got.iter().zip(&s).filter(|(a, b)| a != b).count();
        }
        let ser = errors as f64 / (4 * trials) as f64;
        assert!(ser < 1e-2, "{ser}");
    }

    #[test]
    fn sic_noiseless_is_exact_for_any_ordering() {
        let c = Constellation::qpsk();
        let mut rng = rng(4);
        let h = random_matrix(&mut rng, 5, 4);
        let s = random_symbols(&mut rng, &c, 4);
        let y = &h * c.map(&s);
        for ordering in [Ordering::None, Ordering::NormDescending] {
            for kind in [FilterKind::Zf, FilterKind::Mmse] {
                assert_eq!(detect_sic(&y, &h, 0.0, &c, ordering, kind).unwrap(), s);
            }
        }
        assert_eq!(detect_mb_sic(&y, &h, 0.0, &c, 4).unwrap(), s);
    }

    #[test]
    fn norm_ordering_detects_strongest_first() {
        let h = diag(&[3.0, 1.0]);
        assert_eq!(norm_ordering(&h), vec![0, 1]);
        let plan = SicPlan::new(&h, 0.0, FilterKind::Mmse, &norm_ordering(&h)).unwrap();
        assert_eq!(plan.order(), vec![0, 1]);
        assert_eq!(norm_ordering(&diag(&[1.0, 3.0])), vec![1, 0]);
    }

    #[test]
    fn sic_rejects_bad_order() {
        let h = diag(&[1.0, 1.0]);
        assert!(SicPlan::new(&h, 0.0, FilterKind::Mmse, &[0, 0]).is_err());
        assert!(SicPlan::new(&h, 0.0, FilterKind::Mmse, &[0]).is_err());
    }

    #[test]
    fn sic_beats_linear_mmse_on_paired_trials() {
        let c = Constellation::qpsk();
        let mut rng = rng(5);
        let sigma_n2: f64 = 2.0 / (2.0 * 1000.0);
        let (mut sic_err, mut lin_err) = (0usize, 0usize);
        for _ in 0..100_000 {
            let h = random_matrix(&mut rng, 2, 2);
            let s = random_symbols(&mut rng, &c, 2);
            let noise =
                ComplexVector::from_fn(2, |_, _| complex_normal(&mut rng) * sigma_n2.sqrt());
            let y = &h * c.map(&s) + noise;
            let w = linear_receive_matrix(&h, sigma_n2, FilterKind::Mmse).unwrap();
            let lin = detect_linear(&y, &w, &c).unwrap();
            let sic = detect_sic(
                &y,
                &h,
                sigma_n2,
                &c,
                Ordering::NormDescending,
                FilterKind::Mmse,
            )
            .unwrap();
            lin_err += lin.iter().zip(&s).filter(|(a, b)| a != b).count();
            sic_err += sic.iter().zip(&s).filter(|(a, b)| a != b).count();
        }
        assert!(sic_err <= lin_err, "sic {sic_err} vs mmse {lin_err}");
    }

    #[test]
    fn single_branch_equals_norm_ordered_sic() {
        let c = Constellation::qpsk();
        let mut rng = rng(6);
        for _ in 0..200 {
            let h = random_matrix(&mut rng, 3, 3);
            let y = ComplexVector::from_fn(3, |_, _| complex_normal(&mut rng));
            let mb = detect_mb_sic(&y, &h, 0.1, &c, 1).unwrap();
            let sic =
                detect_sic(&y, &h, 0.1, &c, Ordering::NormDescending, FilterKind::Mmse).unwrap();
            assert_eq!(mb, sic);
        }
    }

    #[test]
    fn mb_sic_selection_never_worse_than_first_branch() {
        let c = Constellation::qpsk();
        let mut rng = rng(7);
        for _ in 0..500 {
            let h = random_matrix(&mut rng, 4, 4);
            let y = ComplexVector::from_fn(4, |_, _| complex_normal(&mut rng));
            let plan = MbSicPlan::new(&h, 0.2, 4).unwrap();
            let best = plan.detect(&y, &c);
            let cands = plan.candidates(&y, &c);
            assert_eq!(cands[0].branch, 0);
            assert!(best.residual <= cands[0].residual);
            assert!(cands.iter().all(|b| best.residual <= b.residual));
        }
    }

    #[test]
    fn branch_orderings_shift_the_natural_order() {
        let h = diag(&[1.0, 3.0, 2.0, 0.5]);
        let orders = branch_orderings(&h, 4);
        assert_eq!(
            orders,
            vec![
                vec![1, 2, 0, 3],
                vec![1, 2, 3, 0],
                vec![2, 3, 0, 1],
                vec![3, 0, 1, 2]
            ]
        );
        for order in &orders {
            let mut sorted = order.clone();
            sorted.sort();
            assert_eq!(sorted, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn mb_sic_agrees_with_ml_at_high_snr() {
        let c = Constellation::qpsk();
        let mut rng = rng(8);
        let sigma_n2: f64 = 2.0 / (2.0 * 1000.0);
        let trials = 10_000;
        let mut agree = 0;
        for _ in 0..trials {
            let h = random_matrix(&mut rng, 2, 2);
            let s = random_symbols(&mut rng, &c, 2);
            let noise =
                ComplexVector::from_fn(2, |_, _| complex_normal(&mut rng) * sigma_n2.sqrt());
            let y = &h * c.map(&s) + noise;
            let mb = detect_mb_sic(&y, &h, sigma_n2, &c, 2).unwrap();
            if mb == ml_detect(&y, &h, &c) {
                agree += 1;
            }
        }
        assert!(agree as f64 >= 0.99 * trials as f64, "{agree}");
    }

    #[test]
    fn coupled_detection_noiseless_zf() {
        let c = Constellation::qpsk();
        let mut rng = rng(9);
        let h = random_matrix(&mut rng, 8, 6);
        let s = random_symbols(&mut rng, &c, 6);
        let y = &h * c.map(&s);
        for family in [
            DetectorFamily::Zf,
            DetectorFamily::Mmse,
            DetectorFamily::SicZf,
            DetectorFamily::SicMmse,
            DetectorFamily::MbSic,
        ] {
            let spec = DetectorSpec::new(family, DetectionMode::Coupled);
            assert_eq!(
                detect_coupled(&y, &h, 0.0, &spec, &c).unwrap(),
                s,
                "{family:?}"
            );
        }
    }

    #[test]
    fn coupled_mmse_sanity_on_wide_array() {
        let c = Constellation::qpsk();
        let mut rng = rng(10);
        // 8 streams into 16 antennas, 12 dB per-bit SNR.
        let sigma_n2: f64 = 8.0 / (2.0 * 10f64.powf(1.2));
        let spec = DetectorSpec::new(DetectorFamily::Mmse, DetectionMode::Coupled);
        let (mut bits, mut errors) = (0u64, 0u64);
        for _ in 0..2000 {
            let h = random_matrix(&mut rng, 16, 8);
            let s = random_symbols(&mut rng, &c, 8);
            let noise =
                ComplexVector::from_fn(16, |_, _| complex_normal(&mut rng) * sigma_n2.sqrt());
            let y = &h * c.map(&s) + noise;
            let got = detect_coupled(&y, &h, sigma_n2, &spec, &c).unwrap();
            errors += got
                .iter()
                .zip(&s)
                .map(|(&a, &b)| c.bit_errors(a, b) as u64)
                .sum::<u64>();
            bits += 16;
        }
        let ber = errors as f64 / bits as f64;
        assert!(ber.is_finite() && ber < 0.5, "{ber}");
    }

    #[test]
    fn spec_validation() {
        let mb = DetectorSpec::new(DetectorFamily::MbSic, DetectionMode::Decoupled);
        assert!(mb.validate().is_ok());
        assert!(mb.clone().with_branches(0).validate().is_err());
        let mut natural = mb.clone();
        natural.ordering = Some(Ordering::None);
        assert!(natural.validate().is_err());
        assert!(
            DetectorSpec::new(DetectorFamily::Zf, DetectionMode::Coupled)
                .with_branches(2)
                .validate()
                .is_err()
        );
    }

    proptest::proptest! {
        #[test]
        fn slicing_is_idempotent(re in -3.0f64..3.0, im in -3.0f64..3.0) {
            for c in [Constellation::qpsk(), Constellation::qam16()] {
                let once = c.slice(C64::new(re, im));
                proptest::prop_assert_eq!(c.slice(c.point(once)), once);
            }
        }

        #[test]
        fn branch_outputs_unpermute_consistently(seed in 0u64..500) {
            let mut rng = rng(seed);
            let c = Constellation::qpsk();
            let h = random_matrix(&mut rng, 3, 3);
            let s = random_symbols(&mut rng, &c, 3);
            let y = &h * c.map(&s);
            for order in branch_orderings(&h, 3) {
                // Detect on the permuted channel H·P, then map back with P.
                let permuted = ComplexMatrix::from_fn(3, 3, |i, j| h[(i, order[j])]);
                let x = detect_sic(&y, &permuted, 0.0, &c, Ordering::None, FilterKind::Mmse).unwrap();
                let mut back = vec![0; 3];
                for (j, &col) in order.iter().enumerate() {
                    back[col] = x[j];
                }
                proptest::prop_assert_eq!(&back, &s);
            }
        }
    }
}
