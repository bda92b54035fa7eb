//! Full Micro–Macro trials: Alice's projection, Bob's conditional
//! Macro-state, the lossy detection chain and coincidence accumulation.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concurrence::{bell_diagonal_state, wootters_concurrence};
use crate::detection::{
    ideal_difference_discriminator, ideal_parity_discriminator, orthogonality_filter, pm_response,
    thin_binomial, DetectionEvent, DetectionParams, OfOutcome, Threshold,
};
use crate::error::{Error, Result};
use crate::gain::GainParams;
use crate::macrostate::{FockOccupation, MacroLabel};
use crate::sampling::{
    conditional_mixture, sample_alice, sample_linear_occupation, sample_occupation, splitmix64,
    AliceOutcome, MarginalTables, RngStream,
};
use crate::stats::{
    estimate_visibility, filtering_probability, s_statistic, BasisIndex, CoincidenceCounts,
    VisibilityEstimate,
};

const CHUNK: u64 = 8192;
const CALIBRATION_DOMAIN: u64 = 0xca11_b4a7_e000_0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discriminator {
    OrthogonalityFilter,
    IdealParity,
    IdealDifference,
}

/// Great circle of the Poincaré sphere on which both parties analyze.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisPlane {
    /// Equatorial polarizations `(H + e^{iφ}V)/√2`.
    #[default]
    Equatorial,
    /// The H/V meridian; phases are polar angles with `0 = H`. Bob's
    /// analyzer must sit at `0` or `π`.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub gain: GainParams,
    pub detection: DetectionParams,
    pub phi_b: f64,
    pub phi_a_list: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub discriminator: Discriminator,
    pub plane: AnalysisPlane,
    /// Replace Alice's recorded outcome with an independent fair coin.
    pub decorrelated: bool,
    /// Trials used to measure the mean arm signal for relative thresholds.
    pub calibration_trials: u64,
    pub tail_epsilon: f64,
}

impl ExperimentConfig {
    /// Reference working point: g = 4.4, 2 % detection efficiency,
    /// noiseless photomultipliers, threshold 8× the mean arm signal.
    pub fn operating_point() -> Self {
        Self {
            gain: GainParams::new(4.4).expect("valid gain"),
            detection: DetectionParams {
                eta_b: 0.02,
                eta_a: 1.0,
                pm_noise: 0.0,
                threshold: Threshold::MeanSignalMultiple(8.0),
            },
            phi_b: 0.0,
            phi_a_list: (0..12).map(|k| k as f64 * PI / 6.0).collect(),
            trials: 1_000_000,
            seed: 2007,
            discriminator: Discriminator::OrthogonalityFilter,
            plane: AnalysisPlane::Equatorial,
            decorrelated: false,
            calibration_trials: 100_000,
            tail_epsilon: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.detection.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if !self.phi_b.is_finite() || self.phi_a_list.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("analysis phases must be finite".into()));
        }
        if self.plane == AnalysisPlane::Linear {
            let r = self.phi_b.rem_euclid(PI);
            if r > 1e-12 && PI - r > 1e-12 {
                return Err(Error::Config(
                    "on the linear plane Bob analyzes at phi_b = 0 (H) or pi (V)".into(),
                ));
            }
        }
        Ok(())
    }

    /// Same configuration analyzed in one of the standard bases, with
    /// Alice aligned to Bob.
    pub fn aligned_in(&self, basis: BasisIndex) -> Self {
        let mut c = self.clone();
        match basis.equatorial_phase() {
            Some(phi) => {
                c.plane = AnalysisPlane::Equatorial;
                c.phi_b = phi;
            }
            None => {
                c.plane = AnalysisPlane::Linear;
                c.phi_b = 0.0;
            }
        }
        c.phi_a_list = vec![c.phi_b];
        c
    }
}

/// One trial through the whole pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRecord {
    pub triggered: bool,
    pub alice: AliceOutcome,
    pub bob: OfOutcome,
    /// Emitted photons `(π_φB, π_φB⊥)` before loss.
    pub emitted: FockOccupation,
    pub detected: FockOccupation,
    pub event: DetectionEvent,
}

/// Signal sums kept alongside the coincidence counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SignalTally {
    pub triggered: u64,
    /// `Σ (I_+ + I_−)` over triggered trials.
    pub sum_signal: f64,
    /// `Σ (I_+ + I_−)²` over triggered trials.
    pub sum_signal_sq: f64,
    pub accepted: u64,
    /// `Σ (I_+ + I_−)` over conclusive trials.
    pub sum_signal_accepted: f64,
}

impl SignalTally {
    fn merge(&mut self, other: &Self) {
        self.triggered += other.triggered;
        self.sum_signal += other.sum_signal;
        self.sum_signal_sq += other.sum_signal_sq;
        self.accepted += other.accepted;
        self.sum_signal_accepted += other.sum_signal_accepted;
    }

    /// Mean detected signal per arm.
    pub fn mean_arm_signal(&self) -> Option<f64> {
        (self.triggered > 0).then(|| 0.5 * self.sum_signal / self.triggered as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanPoint {
    pub phi_a: f64,
    pub counts: CoincidenceCounts,
    pub signal: SignalTally,
}

impl ScanPoint {
    /// Source photon number inferred from the detected signal,
    /// `⟨I_+ + I_−⟩ / η`, over conclusive (`accepted_only`) or all
    /// triggered trials.
    pub fn inferred_source_photons(&self, eta: f64, accepted_only: bool) -> Result<f64> {
        let (n, sum) = if accepted_only {
            (self.signal.accepted, self.signal.sum_signal_accepted)
        } else {
            (self.signal.triggered, self.signal.sum_signal)
        };
        if n == 0 || eta <= 0.0 {
            return Err(Error::NoData);
        }
        Ok(sum / n as f64 / eta)
    }

    /// Standard error of the unfiltered inferred photon number.
    pub fn inferred_source_photons_stderr(&self, eta: f64) -> Result<f64> {
        let n = self.signal.triggered;
        if n < 2 || eta <= 0.0 {
            return Err(Error::NoData);
        }
        let n_f = n as f64;
        let mean = self.signal.sum_signal / n_f;
        let var = (self.signal.sum_signal_sq / n_f - mean * mean).max(0.0) * n_f / (n_f - 1.0);
        Ok((var / n_f).sqrt() / eta)
    }
}

/// Mean of `(I_+ + I_−)/η` over the selected records.
pub fn inferred_source_photons(
    records: &[TrialRecord],
    eta: f64,
    accepted_only: bool,
) -> Result<f64> {
    let selected: Vec<f64> = records
        .iter()
        .filter(|r| r.triggered && (!accepted_only || r.bob.is_conclusive()))
        .map(|r| r.event.detected_plus + r.event.detected_minus)
        .collect();
    if selected.is_empty() || eta <= 0.0 {
        return Err(Error::NoData);
    }
    Ok(selected.iter().sum::<f64>() / selected.len() as f64 / eta)
}

struct RawTrial {
    triggered: bool,
    alice: AliceOutcome,
    emitted: FockOccupation,
    detected: FockOccupation,
    event: DetectionEvent,
    decoy: Option<AliceOutcome>,
}

/// A configured experiment: sampling tables built and the filter
/// threshold resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    tables: MarginalTables,
    threshold: f64,
    mean_arm_signal: Option<f64>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let tables = MarginalTables::build(config.gain, config.tail_epsilon)?;
        let mut exp = Self {
            config,
            tables,
            threshold: 0.0,
            mean_arm_signal: None,
        };
        match exp.config.detection.threshold {
            Threshold::Absolute(t) => exp.threshold = t,
            Threshold::MeanSignalMultiple(m) => {
                let mean = exp.calibrate_mean_arm_signal()?;
                exp.mean_arm_signal = Some(mean);
                exp.threshold = m * mean;
            }
        }
        Ok(exp)
    }

    /// Builds with a fixed absolute threshold, skipping calibration.
    pub fn with_absolute_threshold(mut config: ExperimentConfig, threshold: f64) -> Result<Self> {
        config.detection.threshold = Threshold::Absolute(threshold);
        Self::new(config)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn tables(&self) -> &MarginalTables {
        &self.tables
    }

    /// Resolved threshold in detected-signal units.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Calibrated mean arm signal, when the threshold is relative.
    pub fn mean_arm_signal(&self) -> Option<f64> {
        self.mean_arm_signal
    }

    fn calibrate_mean_arm_signal(&self) -> Result<f64> {
        let n = self.config.calibration_trials.max(1);
        let domain = CALIBRATION_DOMAIN ^ self.point_domain(self.config.phi_b);
        let tally = self.accumulate(
            self.config.phi_b,
            n,
            domain,
            |trial, tally: &mut SignalTally| {
                if trial.triggered {
                    tally.triggered += 1;
                    tally.sum_signal += trial.event.detected_plus + trial.event.detected_minus;
                }
            },
        );
        tally.mean_arm_signal().ok_or(Error::NoData)
    }

    fn point_domain(&self, phi_a: f64) -> u64 {
        let plane = match self.config.plane {
            AnalysisPlane::Equatorial => 0,
            AnalysisPlane::Linear => 1,
        };
        splitmix64(phi_a.to_bits())
            ^ splitmix64(self.config.phi_b.to_bits()).rotate_left(17)
            ^ plane
    }

    fn simulate<R: Rng + ?Sized>(&self, phi_a: f64, rng: &mut R) -> RawTrial {
        let cfg = &self.config;
        let det = &cfg.detection;
        let triggered = det.eta_a >= 1.0 || rng.random::<f64>() < det.eta_a;
        let alice = sample_alice(phi_a, rng);
        let weights = conditional_mixture(phi_a, alice, cfg.phi_b);
        let parallel = rng.random::<f64>() < weights.w_parallel;
        let emitted = match cfg.plane {
            AnalysisPlane::Equatorial => {
                let label = if parallel {
                    MacroLabel::plus(cfg.phi_b)
                } else {
                    MacroLabel::perp(cfg.phi_b)
                };
                sample_occupation(label, &self.tables, rng)
            }
            AnalysisPlane::Linear => sample_linear_occupation(parallel, &self.tables, rng),
        };
        let detected = FockOccupation::new(
            thin_binomial(emitted.p, det.eta_b, rng),
            thin_binomial(emitted.q, det.eta_b, rng),
        );
        let event = DetectionEvent::new(
            pm_response(detected.p, det, rng),
            pm_response(detected.q, det, rng),
        );
        let decoy = cfg.decorrelated.then(|| sample_alice(phi_a, rng));
        RawTrial {
            triggered,
            alice,
            emitted,
            detected,
            event,
            decoy,
        }
    }

    fn classify(&self, trial: &RawTrial, threshold: f64) -> OfOutcome {
        match self.config.discriminator {
            Discriminator::OrthogonalityFilter => orthogonality_filter(&trial.event, threshold),
            Discriminator::IdealParity => {
                OfOutcome::from_sign(ideal_parity_discriminator(trial.detected))
            }
            Discriminator::IdealDifference => {
                OfOutcome::from_sign(ideal_difference_discriminator(trial.detected).unwrap_or(0))
            }
        }
    }

    /// Runs one trial at Alice phase `phi_a`.
    pub fn run_trial<R: Rng + ?Sized>(&self, phi_a: f64, rng: &mut R) -> TrialRecord {
        let raw = self.simulate(phi_a, rng);
        TrialRecord {
            triggered: raw.triggered,
            alice: raw.decoy.unwrap_or(raw.alice),
            bob: self.classify(&raw, self.threshold),
            emitted: raw.emitted,
            detected: raw.detected,
            event: raw.event,
        }
    }

    /// Deterministic parallel fold over `n` trials at one Alice phase:
    /// fixed chunks, one stream per trial, partials combined in chunk order
    /// so the result does not depend on the worker count.
    fn accumulate<T, F>(&self, phi_a: f64, n: u64, domain: u64, step: F) -> T
    where
        T: Default + Send + Mergeable,
        F: Fn(&RawTrial, &mut T) + Sync,
    {
        let seed = self.config.seed;
        let chunks = n.div_ceil(CHUNK);
        let partials: Vec<T> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = T::default();
                for t in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    let mut rng = RngStream::in_domain(seed, domain, t).rng();
                    let trial = self.simulate(phi_a, &mut rng);
                    step(&trial, &mut acc);
                }
                acc
            })
            .collect();
        let mut total = T::default();
        for p in &partials {
            total.merge_from(p);
        }
        total
    }

    /// Accumulates `config.trials` trials at `phi_a`, classifying every
    /// trial against each threshold. The trial pool is shared, so results
    /// for different thresholds are nested.
    pub fn run_point_thresholds(&self, phi_a: f64, thresholds: &[f64]) -> Vec<ScanPoint> {
        let domain = self.point_domain(phi_a);
        let k = thresholds.len();
        let acc = self.accumulate(
            phi_a,
            self.config.trials,
            domain,
            |trial, acc: &mut PointAcc| {
                if acc.points.is_empty() {
                    acc.points = vec![(CoincidenceCounts::default(), SignalTally::default()); k];
                }
                let alice = trial.decoy.unwrap_or(trial.alice);
                let signal = trial.event.detected_plus + trial.event.detected_minus;
                for (slot, &th) in acc.points.iter_mut().zip(thresholds) {
                    if !trial.triggered {
                        slot.0.record(None);
                        continue;
                    }
                    let bob = self.classify(trial, th);
                    slot.0.record(Some((alice, bob)));
                    slot.1.triggered += 1;
                    slot.1.sum_signal += signal;
                    slot.1.sum_signal_sq += signal * signal;
                    if bob.is_conclusive() {
                        slot.1.accepted += 1;
                        slot.1.sum_signal_accepted += signal;
                    }
                }
            },
        );
        let mut points = acc.points;
        if points.is_empty() {
            points = vec![(CoincidenceCounts::default(), SignalTally::default()); k];
        }
        points
            .into_iter()
            .map(|(counts, signal)| ScanPoint {
                phi_a,
                counts,
                signal,
            })
            .collect()
    }

    /// Accumulates `config.trials` trials at `phi_a` with the resolved threshold.
    pub fn run_point(&self, phi_a: f64) -> ScanPoint {
        self.run_point_thresholds(phi_a, &[self.threshold])
            .pop()
            .expect("one threshold")
    }

    /// Counts for every Alice phase in the configured scan.
    pub fn run_fringe_scan(&self) -> Result<Vec<ScanPoint>> {
        if self.config.phi_a_list.is_empty() {
            return Err(Error::Config("the phase scan list is empty".into()));
        }
        Ok(self
            .config
            .phi_a_list
            .iter()
            .map(|&phi| self.run_point(phi))
            .collect())
    }
}

#[derive(Default)]
struct PointAcc {
    points: Vec<(CoincidenceCounts, SignalTally)>,
}

trait Mergeable {
    fn merge_from(&mut self, other: &Self);
}

impl Mergeable for SignalTally {
    fn merge_from(&mut self, other: &Self) {
        self.merge(other);
    }
}

impl Mergeable for PointAcc {
    fn merge_from(&mut self, other: &Self) {
        if self.points.is_empty() {
            self.points = other.points.clone();
            return;
        }
        for (a, b) in self.points.iter_mut().zip(&other.points) {
            a.0.merge(&b.0);
            a.1.merge(&b.1);
        }
    }
}

/// Runs a fringe scan for a configuration.
pub fn run_fringe_scan(config: &ExperimentConfig) -> Result<Vec<ScanPoint>> {
    Experiment::new(config.clone())?.run_fringe_scan()
}

/// `(φ_A, n)` pairs for one coincidence channel of a scan.
pub fn fringe_channel(
    points: &[ScanPoint],
    alice: AliceOutcome,
    bob: OfOutcome,
) -> Vec<(f64, f64)> {
    points
        .iter()
        .map(|pt| {
            let c = &pt.counts;
            let n = match (alice, bob) {
                (AliceOutcome::Plus, OfOutcome::Plus) => c.n_pp,
                (AliceOutcome::Plus, OfOutcome::Minus) => c.n_pm,
                (AliceOutcome::Perp, OfOutcome::Plus) => c.n_mp,
                (AliceOutcome::Perp, OfOutcome::Minus) => c.n_mm,
                (_, OfOutcome::Inconclusive) => c.n_inconclusive,
            };
            (pt.phi_a, n as f64)
        })
        .collect()
}

/// Both equatorial bases analyzed at aligned phases with one common
/// absolute threshold (calibrated on the diagonal basis when relative).
struct BasisPair {
    circular: Experiment,
    diagonal: Experiment,
}

impl BasisPair {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        let diagonal = Experiment::new(config.aligned_in(BasisIndex::Diagonal))?;
        let mut circular_cfg = config.aligned_in(BasisIndex::Circular);
        circular_cfg.detection.threshold = Threshold::Absolute(diagonal.threshold());
        let circular = Experiment::new(circular_cfg)?;
        Ok(Self { circular, diagonal })
    }

    fn resolve(&self, threshold: f64) -> f64 {
        match self.diagonal.config.detection.threshold {
            Threshold::MeanSignalMultiple(_) => {
                threshold * self.diagonal.mean_arm_signal.unwrap_or(0.0)
            }
            Threshold::Absolute(_) => threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// Threshold as given (a multiple of the mean arm signal when the
    /// configuration's threshold is relative).
    pub threshold: f64,
    pub threshold_absolute: f64,
    pub p_filter: f64,
    pub p_filter_stderr: f64,
    pub v2: Option<VisibilityEstimate>,
    pub v3: Option<VisibilityEstimate>,
    pub s: Option<(f64, f64)>,
    pub counts_circular: CoincidenceCounts,
    pub counts_diagonal: CoincidenceCounts,
}

/// Acceptance probability and visibilities as a function of threshold,
/// from one shared trial pool per basis.
pub fn threshold_sweep(config: &ExperimentConfig, thresholds: &[f64]) -> Result<Vec<SweepRow>> {
    if thresholds.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::Config(
            "thresholds must be finite and nonnegative".into(),
        ));
    }
    if thresholds.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("thresholds must be sorted ascending".into()));
    }
    let pair = BasisPair::new(config)?;
    let absolute: Vec<f64> = thresholds.iter().map(|&t| pair.resolve(t)).collect();
    let circ = pair
        .circular
        .run_point_thresholds(pair.circular.config.phi_b, &absolute);
    let diag = pair
        .diagonal
        .run_point_thresholds(pair.diagonal.config.phi_b, &absolute);
    let mut rows = Vec::with_capacity(thresholds.len());
    for (k, &t) in thresholds.iter().enumerate() {
        let mut pooled = circ[k].counts;
        pooled.merge(&diag[k].counts);
        let (p, p_err) = filtering_probability(&pooled).unwrap_or((0.0, 0.0));
        let v2 = estimate_visibility(&circ[k].counts, BasisIndex::Circular).ok();
        let v3 = estimate_visibility(&diag[k].counts, BasisIndex::Diagonal).ok();
        let s = match (v2, v3) {
            (Some(a), Some(b)) => Some(s_statistic(&[a, b])?),
            _ => None,
        };
        rows.push(SweepRow {
            threshold: t,
            threshold_absolute: absolute[k],
            p_filter: p,
            p_filter_stderr: p_err,
            v2,
            v3,
            s,
            counts_circular: circ[k].counts,
            counts_diagonal: diag[k].counts,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcurrenceReport {
    /// Wootters concurrence of the Bell-diagonal state `(0, V₂, V₃)`, when
    /// that state is physical.
    pub bell_diagonal: Option<f64>,
    /// Why the `(0, V₂, V₃)` reconstruction failed, if it did.
    pub bell_diagonal_error: Option<String>,
    /// Smallest `V₁` that makes the Bell-diagonal state physical,
    /// `max(0, V₂ + V₃ − 1)`.
    pub completed_v1: f64,
    /// Concurrence of `(completed_v1, V₂, V₃)`: the least concurrence of
    /// any Bell-diagonal state with these two visibilities.
    pub completed: Option<f64>,
    /// Experimentally quoted lower bound `C ≥ 0.10 ± 0.02`, carried for
    /// comparison only.
    pub reported_value: f64,
    pub reported_stderr: f64,
}

impl ConcurrenceReport {
    pub fn from_visibilities(v2: f64, v3: f64) -> Self {
        let (bell_diagonal, bell_diagonal_error) = match bell_diagonal_state(0.0, v2, v3) {
            Ok(rho) => (Some(wootters_concurrence(&rho)), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let completed_v1 = (v2 + v3 - 1.0).clamp(0.0, 1.0);
        let completed = bell_diagonal_state(completed_v1, v2, v3)
            .ok()
            .map(|rho| wootters_concurrence(&rho));
        Self {
            bell_diagonal,
            bell_diagonal_error,
            completed_v1,
            completed,
            reported_value: 0.10,
            reported_stderr: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessReport {
    pub v2: VisibilityEstimate,
    pub v3: VisibilityEstimate,
    pub s: f64,
    pub s_stderr: f64,
    /// `(S − 1)/σ_S`.
    pub significance: f64,
    pub violated: bool,
    pub p_filter: f64,
    pub p_filter_stderr: f64,
    /// Inferred source photons over conclusive trials.
    pub inferred_n: Option<f64>,
    /// Inferred source photons over all triggered trials.
    pub inferred_n_unfiltered: Option<f64>,
    pub inferred_n_unfiltered_stderr: Option<f64>,
    pub threshold: f64,
    pub mean_arm_signal: Option<f64>,
    pub counts_circular: CoincidenceCounts,
    pub counts_diagonal: CoincidenceCounts,
    pub concurrence: ConcurrenceReport,
}

/// Runs both equatorial bases at aligned phases and evaluates the
/// separability bound `V₂ + V₃ ≤ 1`. Violation requires `S − 1 > 3σ`.
pub fn run_witness(config: &ExperimentConfig) -> Result<WitnessReport> {
    let pair = BasisPair::new(config)?;
    let circ = pair.circular.run_point(pair.circular.config.phi_b);
    let diag = pair.diagonal.run_point(pair.diagonal.config.phi_b);
    let v2 = estimate_visibility(&circ.counts, BasisIndex::Circular)?;
    let v3 = estimate_visibility(&diag.counts, BasisIndex::Diagonal)?;
    let (s, s_stderr) = s_statistic(&[v2, v3])?;
    let mut pooled = circ.counts;
    pooled.merge(&diag.counts);
    let (p_filter, p_filter_stderr) = filtering_probability(&pooled)?;
    let mut signal = circ.signal;
    signal.merge(&diag.signal);
    let eta = config.detection.eta_b;
    let pooled_point = ScanPoint {
        phi_a: 0.0,
        counts: pooled,
        signal,
    };
    let significance = if s_stderr > 0.0 {
        (s - 1.0) / s_stderr
    } else if s > 1.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    Ok(WitnessReport {
        v2,
        v3,
        s,
        s_stderr,
        significance,
        violated: significance > 3.0,
        p_filter,
        p_filter_stderr,
        inferred_n: pooled_point.inferred_source_photons(eta, true).ok(),
        inferred_n_unfiltered: pooled_point.inferred_source_photons(eta, false).ok(),
        inferred_n_unfiltered_stderr: pooled_point.inferred_source_photons_stderr(eta).ok(),
        threshold: pair.diagonal.threshold(),
        mean_arm_signal: pair.diagonal.mean_arm_signal(),
        counts_circular: circ.counts,
        counts_diagonal: diag.counts,
        concurrence: ConcurrenceReport::from_visibilities(v2.value, v3.value),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal(g: f64, trials: u64) -> ExperimentConfig {
        ExperimentConfig {
            gain: GainParams::new(g).unwrap(),
            detection: DetectionParams::new(1.0, 1.0, 0.0, Threshold::Absolute(0.0)).unwrap(),
            phi_b: 0.0,
            phi_a_list: vec![0.0],
            trials,
            seed: 42,
            discriminator: Discriminator::IdealParity,
            plane: AnalysisPlane::Equatorial,
            decorrelated: false,
            calibration_trials: 10_000,
            tail_epsilon: 1e-12,
        }
    }

    #[test]
    fn unamplified_singlet_is_anticorrelated() {
        let exp = Experiment::new(ideal(0.0, 20_000)).unwrap();
        let c = exp.run_point(0.0).counts;
        assert_eq!(c.n_pp + c.n_mm, 0);
        assert_eq!(c.n_pm + c.n_mp, 20_000);
    }

    #[test]
    fn same_seed_same_record() {
        let exp = Experiment::new(ExperimentConfig::operating_point()).unwrap();
        let a = exp.run_trial(0.3, &mut RngStream::new(5, 9).rng());
        let b = exp.run_trial(0.3, &mut RngStream::new(5, 9).rng());
        assert_eq!(a, b);
    }

    #[test]
    fn counts_do_not_depend_on_thread_count() {
        let mut cfg = ExperimentConfig::operating_point();
        cfg.trials = 50_000;
        cfg.calibration_trials = 20_000;
        cfg.phi_a_list = vec![0.0, 1.0, 2.0];
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_fringe_scan(&cfg).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn ideal_parity_gives_unit_visibility() {
        for g in [0.5, 1.0, 1.6] {
            for basis in [BasisIndex::Circular, BasisIndex::Diagonal] {
                let cfg = ideal(g, 20_000).aligned_in(basis);
                let exp = Experiment::new(cfg.clone()).unwrap();
                let v = estimate_visibility(&exp.run_point(cfg.phi_b).counts, basis).unwrap();
                assert_eq!(v.value, 1.0, "g={g}");
            }
        }
    }

    #[test]
    fn ideal_fringe_minimum_vanishes() {
        // Alice plus, Bob plus is forbidden at φ_A = φ_B
        let exp = Experiment::new(ideal(1.0, 20_000)).unwrap();
        let pt = exp.run_point(0.0);
        assert_eq!(pt.counts.n_pp, 0);
        let opposite = exp.run_point(PI);
        assert_eq!(opposite.counts.n_pm, 0);
    }

    #[test]
    fn linear_plane_with_ideal_difference() {
        let mut cfg = ideal(1.6, 20_000);
        cfg.plane = AnalysisPlane::Linear;
        cfg.discriminator = Discriminator::IdealDifference;
        let exp = Experiment::new(cfg).unwrap();
        let v = estimate_visibility(&exp.run_point(0.0).counts, BasisIndex::Linear).unwrap();
        assert_eq!(v.value, 1.0);
    }

    #[test]
    fn linear_plane_rejects_equatorial_bob() {
        let mut cfg = ideal(1.0, 10);
        cfg.plane = AnalysisPlane::Linear;
        cfg.phi_b = 0.5 * PI;
        assert!(matches!(Experiment::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn decorrelated_witness_does_not_fire() {
        let mut cfg = ideal(1.0, 20_000);
        cfg.decorrelated = true;
        let r = run_witness(&cfg).unwrap();
        assert!(!r.violated);
        assert!(r.s < 3.0 * r.s_stderr, "S = {} ± {}", r.s, r.s_stderr);
    }

    #[test]
    fn ideal_witness_fires_with_s_near_two() {
        let r = run_witness(&ideal(1.0, 20_000)).unwrap();
        assert!(r.violated);
        assert!((r.s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn inferred_photons_without_gain_is_one() {
        let cfg = ideal(0.0, 1000);
        let exp = Experiment::new(cfg).unwrap();
        let pt = exp.run_point(0.0);
        assert_eq!(pt.inferred_source_photons(1.0, true).unwrap(), 1.0);
        let mut rng = RngStream::new(1, 1).rng();
        let recs: Vec<_> = (0..100).map(|_| exp.run_trial(0.0, &mut rng)).collect();
        assert_eq!(inferred_source_photons(&recs, 1.0, true).unwrap(), 1.0);
        assert!(matches!(
            inferred_source_photons(&[], 1.0, true),
            Err(Error::NoData)
        ));
    }

    #[test]
    fn sweep_acceptance_is_nested() {
        let mut cfg = ExperimentConfig::operating_point();
        cfg.trials = 100_000;
        cfg.calibration_trials = 20_000;
        let rows = threshold_sweep(&cfg, &[0.0, 1.0, 2.0, 4.0]).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].p_filter < w[0].p_filter);
            assert!(w[1].counts_diagonal.conclusive() <= w[0].counts_diagonal.conclusive());
        }
        assert!(threshold_sweep(&cfg, &[2.0, 1.0]).is_err());
        assert!(threshold_sweep(&cfg, &[-1.0]).is_err());
    }

    #[test]
    fn sweep_visibility_rises_and_bases_agree() {
        let mut cfg = ExperimentConfig::operating_point();
        cfg.trials = 300_000;
        cfg.calibration_trials = 20_000;
        let rows = threshold_sweep(&cfg, &[0.0, 1.0, 2.0, 4.0, 6.0]).unwrap();
        let pick = |r: &SweepRow| [r.v2.unwrap(), r.v3.unwrap()];
        for w in rows.windows(2) {
            for (a, b) in pick(&w[0]).iter().zip(pick(&w[1])) {
                let sigma = a.stderr.hypot(b.stderr);
                assert!(b.value >= a.value - 2.0 * sigma, "{a:?} -> {b:?}");
            }
        }
        for r in &rows {
            let [v2, v3] = pick(r);
            assert!((v2.value - v3.value).abs() <= 2.0 * v2.stderr.hypot(v3.stderr), "{r:?}");
        }
    }

    #[test]
    fn zero_threshold_is_majority_vote() {
        let mut cfg = ExperimentConfig::operating_point();
        cfg.trials = 20_000;
        cfg.detection.threshold = Threshold::Absolute(0.0);
        cfg.discriminator = Discriminator::OrthogonalityFilter;
        let of = Experiment::new(cfg.clone()).unwrap().run_point(0.0);
        cfg.discriminator = Discriminator::IdealDifference;
        let vote = Experiment::new(cfg).unwrap().run_point(0.0);
        assert_eq!(of.counts, vote.counts);
    }

    #[test]
    fn empty_scan_is_rejected() {
        let mut cfg = ideal(1.0, 10);
        cfg.phi_a_list.clear();
        assert!(matches!(run_fringe_scan(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn concurrence_report_for_experimental_visibilities() {
        let r = ConcurrenceReport::from_visibilities(0.540, 0.55);
        assert!(r.bell_diagonal.is_none());
        assert!(r.bell_diagonal_error.is_some());
        assert!((r.completed_v1 - 0.09).abs() < 1e-12);
        assert!((r.completed.unwrap() - 0.09).abs() < 1e-9);
    }
}
