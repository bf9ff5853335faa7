//! Heterogeneous-network channel synthesis.
//!
//! The receive array is split into antenna groups: `N_B` antennas at the base
//! station followed by `D` remote radio heads of `Q` antennas each. Every
//! user sees an independent Kronecker-correlated Rayleigh block per group,
//! scaled by a per-group large-scale gain `γ = sqrt(L / d^τ) · 10^(μϑ/10)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{psd_sqrt, ComplexMatrix, C64};
use crate::rng::{complex_normal, substream};

/// Classes, users, and the receive antenna layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemTopology {
    tx_antennas: Vec<Vec<usize>>,
    n_b: usize,
    n_heads: usize,
    q: usize,
}

impl SystemTopology {
    /// `tx_antennas[n][k]` is the antenna count of user `k` in class `n`.
    pub fn new(tx_antennas: Vec<Vec<usize>>, n_b: usize, n_heads: usize, q: usize) -> Result<Self> {
        if tx_antennas.is_empty() {
            return Err(Error::Validation(
                "topology needs at least one class".into(),
            ));
        }
        if let Some(n) = tx_antennas.iter().position(|c| c.is_empty()) {
            return Err(Error::Validation(format!("class {} has no users", n + 1)));
        }
        if tx_antennas.iter().flatten().any(|&t| t == 0) {
            return Err(Error::Validation(
                "every user needs at least one antenna".into(),
            ));
        }
        if n_heads > 0 && q == 0 {
            return Err(Error::Validation(
                "remote radio heads need Q >= 1 antennas".into(),
            ));
        }
        let topo = Self {
            tx_antennas,
            n_b,
            n_heads,
            q,
        };
        if topo.n_r() == 0 {
            return Err(Error::Validation("no receive antennas".into()));
        }
        if topo.n_t() > topo.n_r() {
            return Err(Error::Dimension(format!(
                "N_t = {} exceeds N_r = {}",
                topo.n_t(),
                topo.n_r()
            )));
        }
        Ok(topo)
    }

    /// Every user in every class transmits with `tx_per_user` antennas.
    pub fn uniform(
        users_per_class: &[usize],
        tx_per_user: usize,
        n_b: usize,
        n_heads: usize,
        q: usize,
    ) -> Result<Self> {
        Self::new(
            users_per_class
                .iter()
                .map(|&k| vec![tx_per_user; k])
                .collect(),
            n_b,
            n_heads,
            q,
        )
    }

    pub fn n_classes(&self) -> usize {
        self.tx_antennas.len()
    }

    pub fn users_per_class(&self) -> Vec<usize> {
        self.tx_antennas.iter().map(Vec::len).collect()
    }

    /// `K`.
    pub fn n_users(&self) -> usize {
        self.tx_antennas.iter().map(Vec::len).sum()
    }

    pub fn tx_antennas(&self) -> &[Vec<usize>] {
        &self.tx_antennas
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n_r(&self) -> usize {
        self.n_b + self.n_heads * self.q
    }

    pub fn n_t(&self) -> usize {
        self.tx_antennas.iter().flatten().sum()
    }

    /// `N_{t_n}` for every class.
    pub fn class_sizes(&self) -> Vec<usize> {
        self.tx_antennas.iter().map(|c| c.iter().sum()).collect()
    }

    /// Antenna counts per receive group: `[N_B, Q, …, Q]`.
    pub fn group_sizes(&self) -> Vec<usize> {
        std::iter::once(self.n_b)
            .chain(std::iter::repeat_n(self.q, self.n_heads))
            .collect()
    }

    pub fn is_distributed(&self) -> bool {
        self.n_heads > 0
    }
}

/// Large-scale statistics of the links towards one kind of antenna group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkProfile {
    /// Closed interval for the power path loss `L`, drawn uniformly.
    pub power_loss: [f64; 2],
    /// Closed interval for the relative distance `d`.
    pub distance: [f64; 2],
    /// Grid step of the discrete uniform distance draw; 0 draws continuously.
    #[serde(default = "default_distance_step")]
    pub distance_step: f64,
    /// Shadowing spread `μ` in dB.
    pub shadow_db: f64,
    /// Neighbouring receive antenna correlation.
    pub rho_rx: f64,
}

fn default_distance_step() -> f64 {
    0.01
}

impl LinkProfile {
    fn validate(&self, what: &str) -> Result<()> {
        for (name, [lo, hi]) in [("power_loss", self.power_loss), ("distance", self.distance)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::Validation(format!(
                    "{what}.{name} must be a positive interval, got [{lo}, {hi}]"
                )));
            }
        }
        if !(self.distance_step >= 0.0 && self.distance_step.is_finite()) {
            return Err(Error::Validation(format!(
                "{what}.distance_step must be >= 0"
            )));
        }
        if !(self.shadow_db >= 0.0 && self.shadow_db.is_finite()) {
            return Err(Error::Validation(format!("{what}.shadow_db must be >= 0")));
        }
        if !(0.0..1.0).contains(&self.rho_rx) {
            return Err(Error::Validation(format!(
                "{what}.rho_rx = {} outside [0, 1)",
                self.rho_rx
            )));
        }
        Ok(())
    }

    fn draw_distance<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let [lo, hi] = self.distance;
        if self.distance_step == 0.0 || lo == hi {
            return if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            };
        }
        let steps = ((hi - lo) / self.distance_step + 1e-9).floor() as u64;
        lo + self.distance_step * rng.random_range(0..=steps) as f64
    }

    fn draw_power_loss<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let [lo, hi] = self.power_loss;
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    }
}

/// Path-loss exponent and correlation for the whole cell, with separate
/// link statistics for the base station and the remote radio heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LargeScaleProfile {
    /// `τ`, between 2 and 4.
    pub path_loss_exponent: f64,
    /// Neighbouring transmit antenna correlation, used when a user has
    /// more than one antenna.
    pub rho_tx: f64,
    pub bs: LinkProfile,
    /// Defaults to the base-station statistics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rrh: Option<LinkProfile>,
}

impl LargeScaleProfile {
    pub fn validate(&self) -> Result<()> {
        if !(2.0..=4.0).contains(&self.path_loss_exponent) {
            return Err(Error::Validation(format!(
                "path_loss_exponent = {} outside [2, 4]",
                self.path_loss_exponent
            )));
        }
        if !(0.0..1.0).contains(&self.rho_tx) {
            return Err(Error::Validation(format!(
                "rho_tx = {} outside [0, 1)",
                self.rho_tx
            )));
        }
        self.bs.validate("bs")?;
        if let Some(rrh) = &self.rrh {
            rrh.validate("rrh")?;
        }
        Ok(())
    }

    /// Statistics of group `j` (0 is the base station).
    pub fn link(&self, group: usize) -> &LinkProfile {
        match (group, &self.rrh) {
            (0, _) | (_, None) => &self.bs,
            (_, Some(rrh)) => rrh,
        }
    }
}

/// Exponential correlation matrix with entries `ρ^((i−j)²)`.
pub fn exp_correlation(n_a: usize, rho: f64) -> Result<ComplexMatrix> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidCorrelation(rho));
    }
    Ok(ComplexMatrix::from_fn(n_a, n_a, |i, j| {
        let lag = i.abs_diff(j) as i32;
        C64::new(rho.powi(lag * lag), 0.0)
    }))
}

/// `γ = sqrt(L / d^τ) · 10^(μϑ/10)`.
pub fn link_gain(power_loss: f64, distance: f64, tau: f64, shadow_db: f64, theta: f64) -> f64 {
    (power_loss / distance.powf(tau)).sqrt() * 10f64.powf(shadow_db * theta / 10.0)
}

/// Large-scale draw for a single user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserLargeScale {
    /// `γ^j` for `j = 1 … D+1`.
    pub head_gains: Vec<f64>,
    /// Diagonal of `Υ`, length `N_r`.
    pub diagonal: Vec<f64>,
}

fn expand_gains(group_sizes: &[usize], gains: &[f64]) -> Vec<f64> {
    group_sizes
        .iter()
        .zip(gains)
        .flat_map(|(&size, &g)| std::iter::repeat_n(g, size))
        .collect()
}

/// Draws `γ^j` for every antenna group of one user and lays them out on
/// the diagonal of `Υ`.
pub fn sample_large_scale<R: Rng + ?Sized>(
    topology: &SystemTopology,
    profile: &LargeScaleProfile,
    rng: &mut R,
) -> UserLargeScale {
    let groups = topology.group_sizes();
    let head_gains: Vec<f64> = (0..groups.len())
        .map(|j| {
            let link = profile.link(j);
            let power_loss = link.draw_power_loss(rng);
            let distance = link.draw_distance(rng);
            let theta: f64 = rng.sample(StandardNormal);
            link_gain(
                power_loss,
                distance,
                profile.path_loss_exponent,
                link.shadow_db,
                theta,
            )
        })
        .collect();
    UserLargeScale {
        diagonal: expand_gains(&groups, &head_gains),
        head_gains,
    }
}

/// `R_r^{1/2} · G · R_t^{1/2}`.
pub fn kronecker_channel(
    rx_sqrt: &ComplexMatrix,
    small_scale: &ComplexMatrix,
    tx_sqrt: &ComplexMatrix,
) -> ComplexMatrix {
    rx_sqrt * small_scale * tx_sqrt
}

/// Draws one correlated Rayleigh block with i.i.d. `CN(0,1)` core.
pub fn sample_user_head_channel<R: Rng + ?Sized>(
    rx_sqrt: &ComplexMatrix,
    tx_sqrt: &ComplexMatrix,
    rng: &mut R,
) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(rx_sqrt.ncols(), tx_sqrt.nrows(), |_, _| complex_normal(rng));
    kronecker_channel(rx_sqrt, &g, tx_sqrt)
}

/// One draw of the composite channel `H = [H_1 … H_N]`.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    h: ComplexMatrix,
    class_sizes: Vec<usize>,
    large_scale: Vec<Vec<UserLargeScale>>,
}

impl ChannelRealization {
    /// Wraps an existing composite matrix whose columns are grouped by class.
    pub fn from_matrix(h: ComplexMatrix, class_sizes: Vec<usize>) -> Result<Self> {
        let total: usize = class_sizes.iter().sum();
        if total != h.ncols() || class_sizes.is_empty() || class_sizes.contains(&0) {
            return Err(Error::Dimension(format!(
                "class sizes {class_sizes:?} do not partition {} columns",
                h.ncols()
            )));
        }
        crate::numerics::ensure_finite(&h, "channel")?;
        Ok(Self {
            h,
            class_sizes,
            large_scale: Vec::new(),
        })
    }

    /// Stacks per-class blocks side by side.
    pub fn from_blocks(blocks: &[ComplexMatrix]) -> Result<Self> {
        let rows = blocks.first().map_or(0, |b| b.nrows());
        if blocks.iter().any(|b| b.nrows() != rows) {
            return Err(Error::Dimension("class blocks differ in row count".into()));
        }
        let refs: Vec<&ComplexMatrix> = blocks.iter().collect();
        Self::from_matrix(
            crate::numerics::hcat(rows, &refs),
            blocks.iter().map(|b| b.ncols()).collect(),
        )
    }

    pub fn h(&self) -> &ComplexMatrix {
        &self.h
    }

    pub fn n_r(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.h.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_sizes.len()
    }

    pub fn class_sizes(&self) -> &[usize] {
        &self.class_sizes
    }

    /// First column of class `n` (0-based).
    pub fn class_offset(&self, n: usize) -> usize {
        self.class_sizes[..n].iter().sum()
    }

    /// `H_n`, copied out of `H`.
    pub fn class_block(&self, n: usize) -> ComplexMatrix {
        self.h
            .columns(self.class_offset(n), self.class_sizes[n])
            .into_owned()
    }

    pub fn per_class(&self) -> Vec<ComplexMatrix> {
        (0..self.n_classes()).map(|n| self.class_block(n)).collect()
    }

    /// Large-scale draws, indexed `[class][user]`. Empty for channels
    /// built from raw matrices.
    pub fn large_scale(&self) -> &[Vec<UserLargeScale>] {
        &self.large_scale
    }
}

/// Precomputed correlation roots for repeated sampling on a fixed topology.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    topology: SystemTopology,
    profile: LargeScaleProfile,
    rx_sqrt: Vec<ComplexMatrix>,
    tx_sqrt: Vec<(usize, ComplexMatrix)>,
}

const STREAM_LARGE_SCALE: u64 = 1;
const STREAM_SMALL_SCALE: u64 = 2;

impl ChannelSampler {
    pub fn new(topology: &SystemTopology, profile: &LargeScaleProfile) -> Result<Self> {
        profile.validate()?;
        let rx_sqrt = topology
            .group_sizes()
            .iter()
            .enumerate()
            .map(|(j, &size)| psd_sqrt(&exp_correlation(size, profile.link(j).rho_rx)?))
            .collect::<Result<Vec<_>>>()?;
        let mut sizes: Vec<usize> = topology.tx_antennas().iter().flatten().copied().collect();
        sizes.sort_unstable();
        sizes.dedup();
        let tx_sqrt = sizes
            .into_iter()
            .map(|t| Ok((t, psd_sqrt(&exp_correlation(t, profile.rho_tx)?)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            topology: topology.clone(),
            profile: profile.clone(),
            rx_sqrt,
            tx_sqrt,
        })
    }

    pub fn topology(&self) -> &SystemTopology {
        &self.topology
    }

    fn tx_root(&self, t: usize) -> &ComplexMatrix {
        &self
            .tx_sqrt
            .iter()
            .find(|(size, _)| *size == t)
            .expect("transmit root precomputed for every antenna count")
            .1
    }

    /// Draws a realization. One 64-bit key is taken from `rng`; every
    /// (user, head) pair then gets its own substream.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        let key: u64 = rng.random();
        let topo = &self.topology;
        let n_r = topo.n_r();
        let groups = topo.group_sizes();
        let mut h = ComplexMatrix::zeros(n_r, topo.n_t());
        let mut large_scale = Vec::with_capacity(topo.n_classes());
        let mut column = 0;
        let mut user_index = 0u64;
        for class in topo.tx_antennas() {
            let mut class_ls = Vec::with_capacity(class.len());
            for &n_tx in class {
                let mut ls_rng = substream(key, &[STREAM_LARGE_SCALE, user_index]);
                let ls = sample_large_scale(topo, &self.profile, &mut ls_rng);
                let tx_root = self.tx_root(n_tx);
                let mut row = 0;
                for (j, &size) in groups.iter().enumerate() {
                    if size == 0 {
                        continue;
                    }
                    let mut ss_rng = substream(key, &[STREAM_SMALL_SCALE, user_index, j as u64]);
                    let block = sample_user_head_channel(&self.rx_sqrt[j], tx_root, &mut ss_rng);
                    h.view_mut((row, column), (size, n_tx))
                        .copy_from(&block.scale(ls.head_gains[j]));
                    row += size;
                }
                class_ls.push(ls);
                column += n_tx;
                user_index += 1;
            }
            large_scale.push(class_ls);
        }
        ChannelRealization {
            h,
            class_sizes: topo.class_sizes(),
            large_scale,
        }
    }
}

/// Draws a full realization for `topology` under `profile`.
pub fn assemble_realization<R: Rng + ?Sized>(
    topology: &SystemTopology,
    profile: &LargeScaleProfile,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if topology.n_t() > topology.n_r() {
        return Err(Error::Dimension(format!(
            "N_t = {} exceeds N_r = {}",
            topology.n_t(),
            topology.n_r()
        )));
    }
    Ok(ChannelSampler::new(topology, profile)?.sample(rng))
}
