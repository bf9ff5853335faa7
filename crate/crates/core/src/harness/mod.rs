//! Scenario-driven sweeps: Monte Carlo BER, averaged rates and FLOP tables.
//!
//! Every random draw comes from a substream keyed by the master seed and
//! the realization index, so results do not depend on the worker count.
//! Channels depend only on `(seed, realization)`, which gives common random
//! numbers across SNR points.

mod output;
pub mod presets;
mod scenario;

use rand::Rng;
use rayon::prelude::*;

pub use output::{emit_csv, format_decimal, ClassId, ResultRow, SweepResult, CSV_HEADER};
pub use scenario::{
    load_scenario, AntennaLayout, ClassSpec, Scenario, ScenarioKind, Sweep, SweepAxis, SweepPoint,
    TopologySpec, Trials, UniformClasses,
};

use crate::channel::{ChannelRealization, ChannelSampler};
use crate::detect::{Constellation, DetectionMode, DetectorPlan, DetectorSpec};
use crate::dsd::decouple_qr;
use crate::error::{Error, Result};
use crate::flops::{pipeline_flops, Stage};
use crate::numerics::ComplexVector;
use crate::rate::{
    coupled_linear_lower_bound, coupled_sic_lower_bound, dsd_sum_rate, linear_rate_lower_bound,
    sic_rate_lower_bound,
};
use crate::rng::{complex_normal, substream};

const STREAM_CHANNEL: u64 = 1;
const STREAM_DATA: u64 = 2;

/// Detector label used for the sum-rate rows.
pub const SUM_RATE: &str = "sum-rate";

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub workers: usize,
    pub full_scale: bool,
    /// Replaces the scenario seed.
    pub seed: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            full_scale: false,
            seed: None,
        }
    }
}

impl RunOptions {
    pub fn with_workers(workers: usize) -> Self {
        Self {
            workers,
            ..Self::default()
        }
    }
}

/// `σ_n² = N_t·σ_s² / (M·10^(SNR/10))`, SNR per information bit.
pub fn noise_variance(snr_db: f64, n_t: usize, bits_per_symbol: u32, sigma_s2: f64) -> f64 {
    n_t as f64 * sigma_s2 / (bits_per_symbol as f64 * 10f64.powf(snr_db / 10.0))
}

/// Inverse of [`noise_variance`].
pub fn snr_db(sigma_n2: f64, n_t: usize, bits_per_symbol: u32, sigma_s2: f64) -> f64 {
    10.0 * (n_t as f64 * sigma_s2 / (bits_per_symbol as f64 * sigma_n2)).log10()
}

fn with_context(error: Error, context: impl FnOnce() -> String) -> Error {
    if error.is_validation() {
        error
    } else {
        Error::Numeric(format!("{}: {error}", context()))
    }
}

fn with_pool<T: Send>(options: &RunOptions, job: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if options.workers == 0 {
        return Err(Error::Validation("worker count must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| Error::Numeric(format!("cannot start worker pool: {e}")))?
        .install(job)
}

/// Dispatches on the scenario kind.
pub fn run(scenario: &Scenario, options: &RunOptions) -> Result<SweepResult> {
    match scenario.kind {
        ScenarioKind::Ber => run_ber_sweep(scenario, options),
        ScenarioKind::Rate => run_rate_sweep(scenario, options),
        ScenarioKind::Flops => run_flop_sweep(scenario),
    }
}

/// Noise power, signal power and filter regularization at one point.
struct Powers {
    sigma_s2: f64,
    sigma_n2: f64,
    regularization: f64,
}

fn powers(scenario: &Scenario, point: &SweepPoint, constellation: &Constellation) -> Powers {
    let sigma_s2 = scenario.signal_power;
    let sigma_n2 = scenario.noise_override.unwrap_or_else(|| {
        let snr = point.snr_db.expect("validated scenario has an SNR");
        noise_variance(
            snr,
            point.topology.n_t(),
            constellation.bits_per_symbol(),
            sigma_s2,
        )
    });
    let regularization = if sigma_s2 > 0.0 {
        sigma_n2 / sigma_s2
    } else {
        0.0
    };
    Powers {
        sigma_s2,
        sigma_n2,
        regularization,
    }
}

fn prepare(scenario: &Scenario, options: &RunOptions) -> Result<(u64, Constellation)> {
    scenario.validate()?;
    let constellation = scenario
        .constellation()?
        .ok_or_else(|| Error::Validation("missing constellation".into()))?;
    Ok((options.seed.unwrap_or(scenario.seed), constellation))
}

fn sample_channel(sampler: &ChannelSampler, seed: u64, r: usize) -> ChannelRealization {
    sampler.sample(&mut substream(seed, &[STREAM_CHANNEL, r as u64]))
}

enum Prepared {
    Coupled(DetectorPlan),
    Decoupled(Vec<DetectorPlan>),
}

struct BerPoint<'a> {
    sampler: ChannelSampler,
    specs: &'a [DetectorSpec],
    constellation: &'a Constellation,
    powers: Powers,
    vectors: usize,
    seed: u64,
}

impl BerPoint<'_> {
    /// Bit errors per detector and class for realization `r`.
    fn realization(&self, r: usize) -> Result<Vec<Vec<u64>>> {
        let real = sample_channel(&self.sampler, self.seed, r);
        let reg = self.powers.regularization;
        let n_classes = real.n_classes();
        let set = if self
            .specs
            .iter()
            .any(|s| s.mode == DetectionMode::Decoupled)
        {
            Some(decouple_qr(&real, reg)?)
        } else {
            None
        };
        let plans = self
            .specs
            .iter()
            .map(|spec| {
                Ok(match spec.mode {
                    DetectionMode::Coupled => {
                        Prepared::Coupled(DetectorPlan::build(spec, real.h(), reg)?)
                    }
                    DetectionMode::Decoupled => Prepared::Decoupled(
                        set.as_ref()
                            .expect("decoupled set built")
                            .classes()
                            .iter()
                            .map(|c| DetectorPlan::build(spec, &c.equivalent_channel, reg))
                            .collect::<Result<_>>()?,
                    ),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| with_context(e, || format!("realization {r}")))?;

        let constellation = self.constellation;
        let amplitude = self.powers.sigma_s2.sqrt();
        let sigma_n = self.powers.sigma_n2.sqrt();
        let offsets: Vec<usize> = (0..n_classes).map(|n| real.class_offset(n)).collect();
        let sizes = real.class_sizes().to_vec();
        let mut errors = vec![vec![0u64; n_classes]; self.specs.len()];
        let mut rng = substream(self.seed, &[STREAM_DATA, r as u64]);
        let count = |errors: &mut [u64], n: usize, sent: &[usize], detected: &[usize]| {
            errors[n] += sent
                .iter()
                .zip(detected)
                .map(|(&a, &b)| constellation.bit_errors(a, b) as u64)
                .sum::<u64>();
        };
        for _ in 0..self.vectors {
            let symbols: Vec<usize> = (0..real.n_t())
                .map(|_| rng.random_range(0..constellation.len()))
                .collect();
            let noise =
                ComplexVector::from_fn(real.n_r(), |_, _| complex_normal(&mut rng) * sigma_n);
            let y = real.h() * constellation.map(&symbols).scale(amplitude) + noise;
            for (plan, errs) in plans.iter().zip(errors.iter_mut()) {
                match plan {
                    Prepared::Coupled(plan) => {
                        let detected = plan.detect(&y, constellation);
                        for n in 0..n_classes {
                            let range = offsets[n]..offsets[n] + sizes[n];
                            count(errs, n, &symbols[range.clone()], &detected[range]);
                        }
                    }
                    Prepared::Decoupled(class_plans) => {
                        let set = set.as_ref().expect("decoupled set built");
                        for (n, class_plan) in class_plans.iter().enumerate() {
                            let y_n = &set.class(n).projector * &y;
                            let detected = class_plan.detect(&y_n, constellation);
                            count(
                                errs,
                                n,
                                &symbols[offsets[n]..offsets[n] + sizes[n]],
                                &detected,
                            );
                        }
                    }
                }
            }
        }
        Ok(errors)
    }
}

/// Monte Carlo BER per detector, mode and class at every sweep point.
pub fn run_ber_sweep(scenario: &Scenario, options: &RunOptions) -> Result<SweepResult> {
    let (seed, constellation) = prepare(scenario, options)?;
    if scenario.kind != ScenarioKind::Ber {
        return Err(Error::Validation("not a BER scenario".into()));
    }
    let (realizations, vectors) = scenario.trials.scale(options.full_scale);
    let profile = scenario
        .profile
        .as_ref()
        .expect("validated BER scenario has a profile");
    let bits = constellation.bits_per_symbol() as u64;
    let mut result = SweepResult::new(scenario.sweep.axis);
    for &value in &scenario.sweep.values {
        let point = scenario.point(value)?;
        let topology = &point.topology;
        let setup = BerPoint {
            sampler: ChannelSampler::new(topology, profile)?,
            specs: &scenario.detectors,
            constellation: &constellation,
            powers: powers(scenario, &point, &constellation),
            vectors,
            seed,
        };
        let per_realization = with_pool(options, || {
            (0..realizations)
                .into_par_iter()
                .map(|r| setup.realization(r))
                .collect::<Result<Vec<_>>>()
        })
        .map_err(|e| with_context(e, || format!("{} = {value}", scenario.sweep.axis)))?;

        let class_bits: Vec<u64> = topology
            .class_sizes()
            .iter()
            .map(|&t| (realizations * vectors * t) as u64 * bits)
            .collect();
        let total_bits: u64 = class_bits.iter().sum();
        for (d, spec) in scenario.detectors.iter().enumerate() {
            let mut class_errors = vec![0u64; class_bits.len()];
            for counts in &per_realization {
                for (acc, e) in class_errors.iter_mut().zip(&counts[d]) {
                    *acc += e;
                }
            }
            let row = |class_id, errors: u64, trials: u64, flops| ResultRow {
                sweep_value: value,
                detector: spec.label(),
                mode: spec.mode.label().to_string(),
                class_id,
                metric: "ber".into(),
                value: errors as f64 / trials as f64,
                trials: Some(trials),
                errors: Some(errors),
                flops,
            };
            for (n, (&e, &b)) in class_errors.iter().zip(&class_bits).enumerate() {
                result.rows.push(row(ClassId::Class(n), e, b, None));
            }
            let flops = pipeline_flops(spec, topology, scenario.cache_decouplers).total();
            result.rows.push(row(
                ClassId::All,
                class_errors.iter().sum(),
                total_bits,
                Some(flops),
            ));
        }
    }
    result.sort();
    result.validate()?;
    Ok(result)
}

struct RateSample {
    dsd: Vec<f64>,
    coupled: f64,
    /// Per detector: per-class values (decoupled) or the single total.
    bounds: Vec<Vec<f64>>,
}

fn rate_realization(
    real: &ChannelRealization,
    specs: &[DetectorSpec],
    powers: &Powers,
) -> Result<RateSample> {
    let (s2, n2) = (powers.sigma_s2, powers.sigma_n2);
    let set = decouple_qr(real, powers.regularization)?;
    let report = dsd_sum_rate(real, &set, s2, n2)?;
    let bounds = specs
        .iter()
        .map(|spec| {
            let kind = spec.family.filter();
            let successive = spec.family.is_successive();
            Ok(match (spec.mode, successive) {
                (DetectionMode::Decoupled, false) => {
                    linear_rate_lower_bound(real, &set, kind, s2, n2)?.per_class
                }
                (DetectionMode::Decoupled, true) => {
                    sic_rate_lower_bound(real, &set, kind, s2, n2)?.per_class
                }
                (DetectionMode::Coupled, false) => {
                    vec![coupled_linear_lower_bound(real.h(), kind, s2, n2)?.total]
                }
                (DetectionMode::Coupled, true) => {
                    vec![coupled_sic_lower_bound(real.h(), kind, s2, n2)?.total]
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateSample {
        dsd: report.per_class,
        coupled: report.coupled,
        bounds,
    })
}

fn mean_of(samples: &[RateSample], pick: impl Fn(&RateSample) -> f64) -> f64 {
    samples.iter().map(pick).sum::<f64>() / samples.len() as f64
}

/// Sum rates and detector lower bounds averaged over channel draws.
pub fn run_rate_sweep(scenario: &Scenario, options: &RunOptions) -> Result<SweepResult> {
    let (seed, constellation) = prepare(scenario, options)?;
    if scenario.kind != ScenarioKind::Rate {
        return Err(Error::Validation("not a rate scenario".into()));
    }
    let (realizations, _) = scenario.trials.scale(options.full_scale);
    let profile = scenario
        .profile
        .as_ref()
        .expect("validated rate scenario has a profile");
    let mut result = SweepResult::new(scenario.sweep.axis);
    for &value in &scenario.sweep.values {
        let point = scenario.point(value)?;
        let sampler = ChannelSampler::new(&point.topology, profile)?;
        let powers = powers(scenario, &point, &constellation);
        let samples = with_pool(options, || {
            (0..realizations)
                .into_par_iter()
                .map(|r| {
                    let real = sample_channel(&sampler, seed, r);
                    rate_realization(&real, &scenario.detectors, &powers)
                        .map_err(|e| with_context(e, || format!("realization {r}")))
                })
                .collect::<Result<Vec<_>>>()
        })
        .map_err(|e| with_context(e, || format!("{} = {value}", scenario.sweep.axis)))?;

        let n_classes = point.topology.n_classes();
        let row = |detector: &str, mode: DetectionMode, class_id, value_: f64| ResultRow {
            sweep_value: value,
            detector: detector.to_string(),
            mode: mode.label().to_string(),
            class_id,
            metric: "rate".into(),
            value: value_,
            trials: Some(realizations as u64),
            errors: None,
            flops: None,
        };
        for n in 0..n_classes {
            let v = mean_of(&samples, |s| s.dsd[n]);
            result.rows.push(row(
                SUM_RATE,
                DetectionMode::Decoupled,
                ClassId::Class(n),
                v,
            ));
        }
        let total = mean_of(&samples, |s| s.dsd.iter().sum());
        result
            .rows
            .push(row(SUM_RATE, DetectionMode::Decoupled, ClassId::All, total));
        let coupled = mean_of(&samples, |s| s.coupled);
        result
            .rows
            .push(row(SUM_RATE, DetectionMode::Coupled, ClassId::All, coupled));
        for (d, spec) in scenario.detectors.iter().enumerate() {
            let label = spec.label();
            if spec.mode == DetectionMode::Decoupled {
                for n in 0..n_classes {
                    let v = mean_of(&samples, |s| s.bounds[d][n]);
                    result
                        .rows
                        .push(row(&label, spec.mode, ClassId::Class(n), v));
                }
            }
            let v = mean_of(&samples, |s| s.bounds[d].iter().sum());
            result.rows.push(row(&label, spec.mode, ClassId::All, v));
        }
    }
    result.sort();
    result.validate()?;
    Ok(result)
}

/// Per-vector FLOP ledgers of every detector at every sweep point.
pub fn run_flop_sweep(scenario: &Scenario) -> Result<SweepResult> {
    scenario.validate()?;
    let mut result = SweepResult::new(scenario.sweep.axis);
    for &value in &scenario.sweep.values {
        let point = scenario.point(value)?;
        for spec in &scenario.detectors {
            let ledger = pipeline_flops(spec, &point.topology, scenario.cache_decouplers);
            let row = |metric: String, v: f64, flops| ResultRow {
                sweep_value: value,
                detector: spec.label(),
                mode: spec.mode.label().to_string(),
                class_id: ClassId::All,
                metric,
                value: v,
                trials: None,
                errors: None,
                flops,
            };
            result
                .rows
                .push(row("flops".into(), ledger.total(), Some(ledger.total())));
            for stage in Stage::ALL {
                result
                    .rows
                    .push(row(format!("flops_{stage}"), ledger.get(stage), None));
            }
        }
    }
    result.sort();
    result.validate()?;
    Ok(result)
}
