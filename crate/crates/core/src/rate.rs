//! Achievable sum rates and linear/SIC lower bounds, for the decoupled
//! per-class systems and for the coupled baseline. Rates are in bits/s/Hz.

use rayon::prelude::*;

use crate::channel::ChannelRealization;
use crate::detect::{linear_receive_matrix, FilterKind};
use crate::dsd::{interferer_matrix, DecoupledClass, DecoupledClassSet};
use crate::error::{Error, Result};
use crate::numerics::{
    general_solve, hermitian_eigenvalues, hermitian_solve, log2_det_hpd, ComplexMatrix, C64,
};

/// Relative agreement required between the eigenvalue and log-det routes.
pub const LOG_DET_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// `R_n` per class.
    pub per_class: Vec<f64>,
    /// `R = Σ_n R_n`.
    pub total: f64,
    /// Same total from `log₂ det K_y / det K_n`.
    pub total_log_det: f64,
    /// Coupled baseline `R̄` on the same channel.
    pub coupled: f64,
    /// `λ_{i,n}` per class, descending.
    pub eigenvalues: Vec<Vec<f64>>,
}

fn check_powers(sigma_s2: f64, sigma_n2: f64) -> Result<()> {
    if !(sigma_s2 >= 0.0 && sigma_s2.is_finite()) {
        return Err(Error::Numeric(format!(
            "signal power {sigma_s2} must be finite and >= 0"
        )));
    }
    if !(sigma_n2 > 0.0 && sigma_n2.is_finite()) {
        return Err(Error::Numeric(format!(
            "noise power {sigma_n2} must be finite and > 0"
        )));
    }
    Ok(())
}

fn add_diagonal(m: &mut ComplexMatrix, value: f64) {
    for i in 0..m.nrows().min(m.ncols()) {
        m[(i, i)] += C64::new(value, 0.0);
    }
}

fn log2_sum(eigenvalues: &[f64]) -> f64 {
    eigenvalues.iter().map(|&l| (1.0 + l.max(0.0)).log2()).sum()
}

/// `K_nn = σ_s²·Q_n(H̃_nH̃_nᴴ)Q_nᴴ + σ_n²·I`, where `H̃_n` stacks the other
/// classes' channels.
pub fn class_noise_covariance(
    projector: &ComplexMatrix,
    interferers: &ComplexMatrix,
    sigma_s2: f64,
    sigma_n2: f64,
) -> Result<ComplexMatrix> {
    if projector.ncols() != interferers.nrows() {
        return Err(Error::Dimension(format!(
            "projector has {} columns, interferers have {} rows",
            projector.ncols(),
            interferers.nrows()
        )));
    }
    let leak = projector * interferers;
    let mut k = (&leak * leak.adjoint()).scale(sigma_s2);
    add_diagonal(&mut k, sigma_n2);
    Ok(k)
}

fn class_covariance(
    class: &DecoupledClass,
    realization: &ChannelRealization,
    sigma_s2: f64,
    sigma_n2: f64,
) -> Result<ComplexMatrix> {
    let interferers = interferer_matrix(realization, class.class_index)?;
    class_noise_covariance(&class.projector, &interferers, sigma_s2, sigma_n2)
}

fn check_set(set: &DecoupledClassSet, realization: &ChannelRealization) -> Result<()> {
    if set.len() != realization.n_classes() || set.n_r() != realization.n_r() {
        return Err(Error::Dimension(
            "decoupled set does not match the realization".into(),
        ));
    }
    Ok(())
}

/// Eigenvalues of `σ_s²·Ȟᴴ K⁻¹ Ȟ`.
fn sinr_eigenvalues(h_eq: &ComplexMatrix, k: &ComplexMatrix, sigma_s2: f64) -> Result<Vec<f64>> {
    let x = hermitian_solve(k, h_eq, "class noise covariance")?;
    let b = (h_eq.adjoint() * x).scale(sigma_s2);
    hermitian_eigenvalues(&b)
}

/// Sum rate of the decoupled classes, from the eigenvalues of
/// `B_nᴴB_n = (σ_s²/σ_n²)·Ȟ_nᴴ[(σ_s²/σ_n²)·Q_n(Σ_{m≠n}H_mH_mᴴ)Q_nᴴ + I]⁻¹Ȟ_n`,
/// cross-checked against the log-det form.
pub fn dsd_sum_rate(
    realization: &ChannelRealization,
    set: &DecoupledClassSet,
    sigma_s2: f64,
    sigma_n2: f64,
) -> Result<RateReport> {
    check_set(set, realization)?;
    check_powers(sigma_s2, sigma_n2)?;
    let ratio = sigma_s2 / sigma_n2;
    let mut per_class = Vec::with_capacity(set.len());
    let mut eigenvalues = Vec::with_capacity(set.len());
    let mut total_log_det = 0.0;
    for class in set.classes() {
        let h_eq = &class.equivalent_channel;
        let interferers = interferer_matrix(realization, class.class_index)?;
        let leak = &class.projector * &interferers;
        let mut bracket = (&leak * leak.adjoint()).scale(ratio);
        add_diagonal(&mut bracket, 1.0);
        let x = hermitian_solve(&bracket, h_eq, "rate bracket")?;
        let lambdas = hermitian_eigenvalues(&(h_eq.adjoint() * x).scale(ratio))?;
        per_class.push(log2_sum(&lambdas));
        eigenvalues.push(lambdas);

        let k_nn = bracket.scale(sigma_n2);
        let k_yy = (h_eq * h_eq.adjoint()).scale(sigma_s2) + &k_nn;
        total_log_det += log2_det_hpd(&k_yy, "received covariance")?
            - log2_det_hpd(&k_nn, "class noise covariance")?;
    }
    let total: f64 = per_class.iter().sum();
    if (total - total_log_det).abs() > LOG_DET_TOLERANCE * total.abs().max(1.0) {
        return Err(Error::Numeric(format!(
            "eigenvalue sum rate {total} disagrees with log-det form {total_log_det}"
        )));
    }
    Ok(RateReport {
        per_class,
        total,
        total_log_det,
        coupled: coupled_sum_rate(realization.h(), sigma_s2, sigma_n2)?,
        eigenvalues,
    })
}

/// `R̄ = Σ log₂(1 + λ_i)` over the eigenvalues of `(σ_s²/σ_n²)·HᴴH`.
pub fn coupled_sum_rate(h: &ComplexMatrix, sigma_s2: f64, sigma_n2: f64) -> Result<f64> {
    check_powers(sigma_s2, sigma_n2)?;
    if h.is_empty() {
        return Err(Error::Dimension("empty channel".into()));
    }
    let gram = (h.adjoint() * h).scale(sigma_s2 / sigma_n2);
    Ok(log2_sum(&hermitian_eigenvalues(&gram)?))
}

/// Per-stream lower bounds of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBound {
    /// `log₂(1 + SINR)` per stream, grouped by class in column order.
    pub per_stream: Vec<Vec<f64>>,
    pub per_class: Vec<f64>,
    pub total: f64,
}

impl LowerBound {
    fn from_streams(per_stream: Vec<Vec<f64>>) -> Self {
        let per_class: Vec<f64> = per_stream.iter().map(|s| s.iter().sum()).collect();
        let total = per_class.iter().sum();
        Self {
            per_stream,
            per_class,
            total,
        }
    }

    /// Aggregates streams into users given each user's antenna count.
    pub fn per_user(&self, tx_antennas: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
        if tx_antennas.len() != self.per_stream.len() {
            return Err(Error::Dimension("class count mismatch".into()));
        }
        tx_antennas
            .iter()
            .zip(&self.per_stream)
            .map(|(users, streams)| {
                if users.iter().sum::<usize>() != streams.len() {
                    return Err(Error::Dimension("stream count mismatch".into()));
                }
                let mut offset = 0;
                Ok(users
                    .iter()
                    .map(|&t| {
                        let r = streams[offset..offset + t].iter().sum();
                        offset += t;
                        r
                    })
                    .collect())
            })
            .collect()
    }
}

/// Covariance of the noise plus residual leakage seen by a detector.
#[derive(Debug, Clone, Copy)]
pub enum NoiseCovariance<'a> {
    /// `σ²·I`.
    White(f64),
    Full(&'a ComplexMatrix),
}

/// SINR of every row of `w` against the matching column of `h_eq`, with the
/// other columns as interference.
fn stream_sinrs(
    w: &ComplexMatrix,
    h_eq: &ComplexMatrix,
    k: NoiseCovariance,
    sigma_s2: f64,
) -> Vec<f64> {
    let gains = w * h_eq;
    let noise: Vec<f64> = match k {
        NoiseCovariance::White(sigma2) => w.row_iter().map(|r| sigma2 * r.norm_squared()).collect(),
        NoiseCovariance::Full(k) => {
            let wk = w * k;
            wk.row_iter()
                .zip(w.row_iter())
                .map(|(a, b)| {
                    a.iter()
                        .zip(b.iter())
                        .map(|(x, y)| x * y.conj())
                        .sum::<C64>()
                        .norm()
                })
                .collect()
        }
    };
    (0..w.nrows())
        .map(|i| {
            let row = gains.row(i);
            let signal = row[i].norm_sqr();
            let intra = row.iter().map(|g| g.norm_sqr()).sum::<f64>() - signal;
            sigma_s2 * signal / (sigma_s2 * intra.max(0.0) + noise[i])
        })
        .collect()
}

/// Linear-detector rates of every column of `h_eq` under the true
/// covariance `k`. The filter itself assumes white noise of power `σ_n²`.
pub fn linear_stream_rates(
    h_eq: &ComplexMatrix,
    k: NoiseCovariance,
    kind: FilterKind,
    sigma_s2: f64,
    sigma_n2: f64,
) -> Result<Vec<f64>> {
    check_powers(sigma_s2, sigma_n2)?;
    if sigma_s2 == 0.0 {
        return Ok(vec![0.0; h_eq.ncols()]);
    }
    let w = linear_receive_matrix(h_eq, sigma_n2 / sigma_s2, kind)?;
    Ok(stream_sinrs(&w, h_eq, k, sigma_s2)
        .into_iter()
        .map(|sinr| (1.0 + sinr).log2())
        .collect())
}

/// Successive-cancellation bound: after each layer the detected column is
/// removed, filters are recomputed, and the stream with the highest SINR
/// goes next. Rates are returned in natural column order.
pub fn sic_stream_rates(
    h_eq: &ComplexMatrix,
    k: NoiseCovariance,
    kind: FilterKind,
    sigma_s2: f64,
    sigma_n2: f64,
) -> Result<Vec<f64>> {
    check_powers(sigma_s2, sigma_n2)?;
    let c = h_eq.ncols();
    let mut rates = vec![0.0; c];
    if sigma_s2 == 0.0 {
        return Ok(rates);
    }
    let mut remaining: Vec<usize> = (0..c).collect();
    while !remaining.is_empty() {
        let sub = h_eq.select_columns(&remaining);
        let w = linear_receive_matrix(&sub, sigma_n2 / sigma_s2, kind)?;
        let (best_pos, best_sinr) = stream_sinrs(&w, &sub, k, sigma_s2)
            .into_iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, cur| {
                if cur.1 > acc.1 {
                    cur
                } else {
                    acc
                }
            });
        rates[remaining[best_pos]] = (1.0 + best_sinr).log2();
        remaining.remove(best_pos);
    }
    Ok(rates)
}

fn decoupled_bound<F>(
    realization: &ChannelRealization,
    set: &DecoupledClassSet,
    sigma_s2: f64,
    sigma_n2: f64,
    streams: F,
) -> Result<LowerBound>
where
    F: Fn(&ComplexMatrix, NoiseCovariance) -> Result<Vec<f64>>,
{
    check_set(set, realization)?;
    check_powers(sigma_s2, sigma_n2)?;
    let per_stream = set
        .classes()
        .iter()
        .map(|class| {
            let k = class_covariance(class, realization, sigma_s2, sigma_n2)?;
            streams(&class.equivalent_channel, NoiseCovariance::Full(&k))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LowerBound::from_streams(per_stream))
}

/// Instantaneous linear-detector bound of one realization; its mean over
/// channel draws (see [`expected_rate`]) is the achievable-rate bound.
pub fn linear_rate_lower_bound(
    realization: &ChannelRealization,
    set: &DecoupledClassSet,
    kind: FilterKind,
    sigma_s2: f64,
    sigma_n2: f64,
) -> Result<LowerBound> {
    decoupled_bound(realization, set, sigma_s2, sigma_n2, |h, k| {
        linear_stream_rates(h, k, kind, sigma_s2, sigma_n2)
    })
}

pub fn sic_rate_lower_bound(
    realization: &ChannelRealization,
    set: &DecoupledClassSet,
    kind: FilterKind,
    sigma_s2: f64,
    sigma_n2: f64,
) -> Result<LowerBound> {
    decoupled_bound(realization, set, sigma_s2, sigma_n2, |h, k| {
        sic_stream_rates(h, k, kind, sigma_s2, sigma_n2)
    })
}

/// Linear bound with all classes detected jointly on `H`.
pub fn coupled_linear_lower_bound(
    h: &ComplexMatrix,
    kind: FilterKind,
    sigma_s2: f64,
    sigma_n2: f64,
) -> Result<LowerBound> {
    let k = NoiseCovariance::White(sigma_n2);
    Ok(LowerBound::from_streams(vec![linear_stream_rates(
        h, k, kind, sigma_s2, sigma_n2,
    )?]))
}

pub fn coupled_sic_lower_bound(
    h: &ComplexMatrix,
    kind: FilterKind,
    sigma_s2: f64,
    sigma_n2: f64,
) -> Result<LowerBound> {
    Ok(LowerBound::from_streams(vec![white_sic_stream_rates(
        h, kind, sigma_s2, sigma_n2,
    )?]))
}

/// [`sic_stream_rates`] for the case where the filter's noise model is the
/// true one. Each stream's SINR then follows from the diagonal of
/// `(HᴴH + δI)⁻¹` restricted to the streams still undetected.
pub fn white_sic_stream_rates(
    h: &ComplexMatrix,
    kind: FilterKind,
    sigma_s2: f64,
    sigma_n2: f64,
) -> Result<Vec<f64>> {
    check_powers(sigma_s2, sigma_n2)?;
    let c = h.ncols();
    let mut rates = vec![0.0; c];
    if sigma_s2 == 0.0 || c == 0 {
        return Ok(rates);
    }
    let delta = sigma_n2 / sigma_s2;
    let mut gram = h.adjoint() * h;
    if kind == FilterKind::Mmse {
        for i in 0..c {
            gram[(i, i)] += C64::new(delta, 0.0);
        }
    }
    let sinr = |b: f64| match kind {
        FilterKind::Mmse => 1.0 / (delta * b) - 1.0,
        FilterKind::Zf => 1.0 / (delta * b),
    };
    let mut remaining: Vec<usize> = (0..c).collect();
    while !remaining.is_empty() {
        let n = remaining.len();
        let sub = gram.select_rows(&remaining).select_columns(&remaining);
        let inv = hermitian_solve(&sub, &ComplexMatrix::identity(n, n), "SIC rate Gram")?;
        let (p, best) =
            (0..n)
                .map(|i| (i, sinr(inv[(i, i)].re)))
                .fold((0, f64::NEG_INFINITY), |acc, cur| {
                    if cur.1 > acc.1 {
                        cur
                    } else {
                        acc
                    }
                });
        if !best.is_finite() {
            return Err(Error::SingularMatrix("SIC rate Gram"));
        }
        rates[remaining[p]] = (1.0 + best.max(0.0)).log2();
        remaining.remove(p);
    }
    Ok(rates)
}

/// Mean of `per_draw(i)` over `i = 0..n_realizations`, evaluated in
/// parallel and summed in index order.
pub fn expected_rate<F>(n_realizations: usize, per_draw: F) -> Result<f64>
where
    F: Fn(usize) -> Result<f64> + Sync + Send,
{
    if n_realizations == 0 {
        return Err(Error::Validation("need at least one realization".into()));
    }
    let values = (0..n_realizations)
        .into_par_iter()
        .map(&per_draw)
        .collect::<Result<Vec<_>>>()?;
    Ok(values.iter().sum::<f64>() / n_realizations as f64)
}

/// Eigenvalues before and after a square linear filter.
#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceCheck {
    pub before: Vec<f64>,
    pub after: Vec<f64>,
    pub max_rel_diff: f64,
}

/// Compares the spectrum of `σ_s²·ȞᴴK⁻¹Ȟ` with that of
/// `σ_s²·ĀᴴK̄⁻¹Ā` where `Ā = WȞ` and `K̄ = WKWᴴ`.
pub fn filter_invariance(
    class: &DecoupledClass,
    filter: &ComplexMatrix,
    k_nn: &ComplexMatrix,
    sigma_s2: f64,
) -> Result<InvarianceCheck> {
    let h_eq = &class.equivalent_channel;
    let n = h_eq.nrows();
    if filter.shape() != (n, n) || k_nn.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "filter {:?} and covariance {:?} must be {n}x{n}",
            filter.shape(),
            k_nn.shape()
        )));
    }
    // Refuse singular filters instead of silently pseudo-inverting them.
    general_solve(filter, &ComplexMatrix::identity(n, n), "detection filter")?;
    let before = sinr_eigenvalues(h_eq, k_nn, sigma_s2)?;
    let a_bar = filter * h_eq;
    let k_bar = filter * k_nn * filter.adjoint();
    let after = sinr_eigenvalues(&a_bar, &k_bar, sigma_s2)?;
    let max_rel_diff = before
        .iter()
        .zip(&after)
        .map(|(a, b)| {
            let scale = a.abs().max(b.abs());
            if scale == 0.0 {
                0.0
            } else {
                (a - b).abs() / scale
            }
        })
        .fold(0.0, f64::max);
    Ok(InvarianceCheck {
        before,
        after,
        max_rel_diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsd::decouple_qr;
    use crate::testutil::{random_matrix, rng};

    fn realization(seed: u64, n_r: usize, sizes: &[usize]) -> ChannelRealization {
        let h = random_matrix(&mut rng(seed), n_r, sizes.iter().sum());
        ChannelRealization::from_matrix(h, sizes.to_vec()).unwrap()
    }

    #[test]
    fn covariance_without_interferers_is_white() {
        let q = ComplexMatrix::identity(2, 4).scale(1.0);
        let k = class_noise_covariance(&q, &ComplexMatrix::zeros(4, 0), 1.0, 0.3).unwrap();
        assert!((k - ComplexMatrix::identity(2, 2).scale(0.3)).norm() < 1e-15);
    }

    #[test]
    fn covariance_is_white_after_exact_nulling() {
        let real = realization(1, 8, &[2, 3]);
        let set = decouple_qr(&real, 0.0).unwrap();
        for class in set.classes() {
            let k = class_covariance(class, &real, 1.0, 0.2).unwrap();
            let n = k.nrows();
            assert!((k - ComplexMatrix::identity(n, n).scale(0.2)).norm() <= 1e-10 * 0.2);
        }
    }

    #[test]
    fn covariance_is_shifted_psd() {
        let real = realization(2, 6, &[2, 2, 1]);
        let set = decouple_qr(&real, 0.5).unwrap();
        for class in set.classes() {
            let k = class_covariance(class, &real, 1.0, 0.7).unwrap();
            let eig = hermitian_eigenvalues(&k).unwrap();
            assert!(*eig.last().unwrap() >= 0.7 - 1e-10);
        }
    }

    #[test]
    fn identity_equivalent_channel_gives_one_bit_per_stream() {
        let real =
            ChannelRealization::from_matrix(ComplexMatrix::identity(4, 4), vec![2, 2]).unwrap();
        let set = decouple_qr(&real, 0.0).unwrap();
        let report = dsd_sum_rate(&real, &set, 1.0, 1.0).unwrap();
        for r in &report.per_class {
            assert!((r - 2.0).abs() < 1e-12);
        }
        assert!((report.total - 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_matches_coupled_rate() {
        for seed in 0..20 {
            let real = realization(100 + seed, 8, &[5]);
            let set = decouple_qr(&real, 0.0).unwrap();
            let report = dsd_sum_rate(&real, &set, 1.0, 0.4).unwrap();
            assert!((report.total - report.coupled).abs() <= 1e-8 * report.coupled);
        }
    }

    #[test]
    fn eigen_route_agrees_with_log_det() {
        for seed in 0..20 {
            let real = realization(200 + seed, 8, &[3, 3]);
            let set = decouple_qr(&real, 0.3).unwrap();
            let report = dsd_sum_rate(&real, &set, 1.0, 0.3).unwrap();
            assert!((report.total - report.total_log_det).abs() <= 1e-8 * report.total);
            assert!(report.total <= report.coupled + 1e-8);
        }
    }

    #[test]
    fn coupled_rate_cases() {
        let eye = ComplexMatrix::identity(2, 2);
        assert!((coupled_sum_rate(&eye, 1.0, 1.0).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(
            coupled_sum_rate(&ComplexMatrix::zeros(3, 2), 1.0, 1.0).unwrap(),
            0.0
        );
        let h = random_matrix(&mut rng(3), 6, 4);
        let ratio = 2.5;
        let mut m = (h.adjoint() * &h).scale(ratio);
        add_diagonal(&mut m, 1.0);
        let log_det = log2_det_hpd(&m, "test").unwrap();
        assert!((coupled_sum_rate(&h, ratio, 1.0).unwrap() - log_det).abs() <= 1e-8 * log_det);
    }

    #[test]
    fn zero_signal_power_gives_zero_rates() {
        let real = realization(4, 6, &[2, 2]);
        let set = decouple_qr(&real, 0.1).unwrap();
        let report = dsd_sum_rate(&real, &set, 0.0, 1.0).unwrap();
        assert_eq!(report.total, 0.0);
        assert_eq!(report.coupled, 0.0);
        let lb = linear_rate_lower_bound(&real, &set, FilterKind::Mmse, 0.0, 1.0).unwrap();
        assert_eq!(lb.total, 0.0);
        let sic = sic_rate_lower_bound(&real, &set, FilterKind::Mmse, 0.0, 1.0).unwrap();
        assert_eq!(sic.total, 0.0);
    }

    #[test]
    fn scalar_channel_bound_reduces_to_shannon() {
        // ȟ = 1, ratio 1: log2(1 + 1) = 1 bit.
        let one = ComplexMatrix::identity(1, 1);
        let k = NoiseCovariance::White(1.0);
        for kind in [FilterKind::Zf, FilterKind::Mmse] {
            let r = linear_stream_rates(&one, k, kind, 1.0, 1.0).unwrap();
            assert!((r[0] - 1.0).abs() < 1e-14, "{kind:?}");
        }
        // Random scalar channel: no interference terms, bound is log2(1 + ρ|h|²).
        let h = random_matrix(&mut rng(5), 1, 1);
        let r = linear_stream_rates(&h, NoiseCovariance::White(0.5), FilterKind::Mmse, 1.0, 0.5)
            .unwrap();
        assert!((r[0] - (1.0 + 2.0 * h[(0, 0)].norm_sqr()).log2()).abs() < 1e-12);
        let s =
            sic_stream_rates(&h, NoiseCovariance::White(0.5), FilterKind::Mmse, 1.0, 0.5).unwrap();
        assert!((s[0] - r[0]).abs() < 1e-14);
    }

    #[test]
    fn white_sic_matches_recomputed_filters() {
        for (seed, kind) in [
            (40, FilterKind::Mmse),
            (41, FilterKind::Zf),
            (42, FilterKind::Mmse),
        ] {
            let h = random_matrix(&mut rng(seed), 10, 6);
            let slow = sic_stream_rates(&h, NoiseCovariance::White(0.3), kind, 1.2, 0.3).unwrap();
            let fast = white_sic_stream_rates(&h, kind, 1.2, 0.3).unwrap();
            for (a, b) in slow.iter().zip(&fast) {
                assert!((a - b).abs() < 1e-9, "{kind:?}: {slow:?} vs {fast:?}");
            }
        }
    }

    #[test]
    fn diagonal_channel_sic_equals_linear() {
        let mut h = ComplexMatrix::zeros(3, 3);
        for (i, g) in [2.0, 0.5, 1.2].iter().enumerate() {
            h[(i, i)] = C64::new(*g, 0.0);
        }
        let full = ComplexMatrix::identity(3, 3).scale(0.4);
        let lin = linear_stream_rates(&h, NoiseCovariance::White(0.4), FilterKind::Mmse, 1.0, 0.4)
            .unwrap();
        let sic =
            sic_stream_rates(&h, NoiseCovariance::Full(&full), FilterKind::Mmse, 1.0, 0.4).unwrap();
        for (a, b) in lin.iter().zip(&sic) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bound_ordering_on_average() {
        let sigma_n2 = 0.5;
        let draws = 500;
        let mut sums = [0.0; 4];
        for seed in 0..draws {
            let real = realization(1000 + seed, 8, &[2, 2]);
            let set = decouple_qr(&real, sigma_n2).unwrap();
            sums[0] += linear_rate_lower_bound(&real, &set, FilterKind::Zf, 1.0, sigma_n2)
                .unwrap()
                .total;
            sums[1] += linear_rate_lower_bound(&real, &set, FilterKind::Mmse, 1.0, sigma_n2)
                .unwrap()
                .total;
            sums[2] += sic_rate_lower_bound(&real, &set, FilterKind::Mmse, 1.0, sigma_n2)
                .unwrap()
                .total;
            sums[3] += dsd_sum_rate(&real, &set, 1.0, sigma_n2).unwrap().total;
        }
        assert!(
            sums[0] <= sums[1] && sums[1] <= sums[2] && sums[2] <= sums[3] * (1.0 + 1e-3),
            "{sums:?}"
        );
    }

    #[test]
    fn rates_grow_with_snr() {
        let real = realization(6, 8, &[2, 3]);
        let mut last = (0.0, 0.0);
        for sigma_n2 in [4.0, 1.0, 0.25, 0.05] {
            let set = decouple_qr(&real, sigma_n2).unwrap();
            let r = dsd_sum_rate(&real, &set, 1.0, sigma_n2).unwrap();
            assert!(r.total >= last.0 && r.coupled >= last.1);
            last = (r.total, r.coupled);
        }
    }

    #[test]
    fn per_user_aggregation() {
        let lb = LowerBound::from_streams(vec![vec![1.0, 2.0, 3.0], vec![4.0]]);
        assert_eq!(
            lb.per_user(&[vec![2, 1], vec![1]]).unwrap(),
            vec![vec![3.0, 3.0], vec![4.0]]
        );
        assert!(lb.per_user(&[vec![1, 1], vec![1]]).is_err());
    }

    #[test]
    fn invariance_under_identity_scaled_and_zf_filters() {
        let real = realization(7, 8, &[3, 3]);
        let set = decouple_qr(&real, 0.2).unwrap();
        let class = set.class(0);
        let k = class_covariance(class, &real, 1.0, 0.2).unwrap();
        let eye = ComplexMatrix::identity(3, 3);
        let same = filter_invariance(class, &eye, &k, 1.0).unwrap();
        assert_eq!(same.before, same.after);
        let scaled = filter_invariance(class, &eye.scale(-2.5), &k, 1.0).unwrap();
        assert!(scaled.max_rel_diff <= 1e-12);
        let zf = linear_receive_matrix(&class.equivalent_channel, 0.0, FilterKind::Zf).unwrap();
        assert!(filter_invariance(class, &zf, &k, 1.0).unwrap().max_rel_diff <= 1e-8);
    }

    #[test]
    fn invariance_rejects_singular_filter() {
        let real = realization(8, 6, &[2, 2]);
        let set = decouple_qr(&real, 0.2).unwrap();
        let k = class_covariance(set.class(0), &real, 1.0, 0.2).unwrap();
        assert!(matches!(
            filter_invariance(set.class(0), &ComplexMatrix::zeros(2, 2), &k, 1.0),
            Err(Error::SingularMatrix(_))
        ));
    }

    #[test]
    fn expected_rate_is_order_independent_mean() {
        let mean = expected_rate(10, |i| Ok(i as f64)).unwrap();
        assert_eq!(mean, 4.5);
        assert!(expected_rate(0, |_| Ok(0.0)).is_err());
    }
}
