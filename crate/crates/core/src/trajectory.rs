//! Two-resolution simulation: a "true" trajectory at the fine step δt
//! generates the homodyne record, which is binned and fed to every coarse
//! map at step Δt.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{CMatrix, Complex, StateVector};
use crate::maps::{BinnedRecord, MapError, MapKind, MapOptions, PreparedMap, MIN_RECORD_WEIGHT};
use crate::metrics::trae_pure;
use crate::records::{bin_record, steps_per_bin, FineRecordSegment, RecordError, RngStream};
use crate::setup::MeasurementSetup;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Chain {
    True,
    Map(MapKind),
}

impl fmt::Display for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Chain::True => f.write_str("true"),
            Chain::Map(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("invalid protocol: {0}")]
    Config(String),
    #[error("trajectory aborted in bin {bin}: {chain} chain hit a record of weight {weight:e}")]
    Aborted {
        bin: usize,
        chain: Chain,
        weight: f64,
    },
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Step sizes, horizon and ensemble size, all in units of the reference
/// rate `γ` of the setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub gamma_dt_bin: f64,
    pub gamma_dt_fine: f64,
    pub total_time_in_gamma: f64,
    pub realizations: usize,
    pub seed: u64,
    pub map_kinds: Vec<MapKind>,
    /// Prepend `1 - iHΔt - H²Δt²/2` to the single-record maps and the true
    /// stepper. Has no effect when `H = 0`.
    pub hamiltonian_prefactor: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            gamma_dt_bin: 1e-2,
            gamma_dt_fine: 1e-4,
            total_time_in_gamma: 1.0,
            realizations: 5000,
            seed: 1,
            map_kinds: MapKind::ALL.to_vec(),
            hamiltonian_prefactor: true,
        }
    }
}

impl ProtocolConfig {
    /// Ensemble size used for quick runs.
    pub const DESK_REALIZATIONS: usize = 500;

    pub fn desk() -> Self {
        Self {
            realizations: Self::DESK_REALIZATIONS,
            ..Self::default()
        }
    }

    pub fn n_per_bin(&self) -> Result<usize, TrajectoryError> {
        Ok(steps_per_bin(self.gamma_dt_bin, self.gamma_dt_fine)?)
    }

    pub fn n_bins(&self) -> Result<usize, TrajectoryError> {
        steps_per_bin(self.total_time_in_gamma, self.gamma_dt_bin).map_err(|_| {
            TrajectoryError::Config(format!(
                "total time {} is not a whole number of bins of {}",
                self.total_time_in_gamma, self.gamma_dt_bin
            ))
        })
    }

    pub fn dt_bin(&self, gamma: f64) -> f64 {
        self.gamma_dt_bin / gamma
    }

    pub fn dt_fine(&self, gamma: f64) -> f64 {
        self.gamma_dt_fine / gamma
    }

    pub fn validate(&self) -> Result<(), TrajectoryError> {
        self.n_per_bin()?;
        self.n_bins()?;
        if self.realizations == 0 {
            return Err(TrajectoryError::Config(
                "at least one realization is required".into(),
            ));
        }
        Ok(())
    }

    fn map_options(&self) -> MapOptions {
        MapOptions {
            hamiltonian_prefactor: self.hamiltonian_prefactor,
        }
    }
}

/// How the coarse chains are advanced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainMode {
    /// Each map evolves its own state from bin to bin.
    SelfPropagating,
    /// Each bin starts from the true state, so errors are one-step errors.
    Reanchored,
}

/// States at bin boundaries (length `N + 1`) and the binned records
/// (length `N`).
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRun {
    pub mode: ChainMode,
    pub true_states: Vec<StateVector>,
    pub coarse_states: BTreeMap<MapKind, Vec<StateVector>>,
    pub records: Vec<BinnedRecord>,
}

impl TrajectoryRun {
    pub fn n_bins(&self) -> usize {
        self.records.len()
    }
}

/// Rouchon-Ralph stepper at the fine resolution. Samples the record from
/// the current state and updates it in place.
#[derive(Clone, Debug)]
pub struct TrueStepper {
    map: PreparedMap,
    c: CMatrix,
    dt_fine: f64,
    sq: f64,
    out: Vec<Complex>,
    tmp: Vec<Complex>,
}

impl TrueStepper {
    pub fn new(
        setup: &MeasurementSetup,
        dt_fine: f64,
        opts: MapOptions,
    ) -> Result<Self, TrajectoryError> {
        if !(dt_fine > 0.0 && dt_fine.is_finite()) {
            return Err(RecordError::NonPositiveStep(dt_fine).into());
        }
        let map = PreparedMap::with_options(MapKind::RouchonRalph, setup, dt_fine, opts)?;
        let d = setup.dim();
        Ok(Self {
            map,
            c: setup.c().clone(),
            dt_fine,
            sq: dt_fine.sqrt(),
            out: vec![Complex::new(0.0, 0.0); d],
            tmp: vec![Complex::new(0.0, 0.0); d],
        })
    }

    pub fn dt_fine(&self) -> f64 {
        self.dt_fine
    }

    #[inline]
    fn mean_current(&mut self, psi: &[Complex]) -> f64 {
        self.c.apply_into(psi, &mut self.tmp);
        let z: Complex = psi.iter().zip(&self.tmp).map(|(a, b)| a.conj() * b).sum();
        2.0 * z.re
    }

    /// Applies `M_R(√δt y)` to `psi` in place, normalising. Returns the
    /// squared norm before normalisation.
    #[inline]
    pub fn apply_sample(&mut self, psi: &mut [Complex], y: f64) -> f64 {
        let w = self
            .map
            .apply_into(self.sq * y, 0.0, psi, &mut self.out, &mut self.tmp);
        if w >= MIN_RECORD_WEIGHT {
            let s = 1.0 / w.sqrt();
            for (p, o) in psi.iter_mut().zip(&self.out) {
                *p = *o * s;
            }
        }
        w
    }

    /// Draws `y` from the current state, then updates the state with it.
    #[inline]
    pub fn step(&mut self, psi: &mut [Complex], rng: &mut RngStream) -> (f64, f64) {
        let mu = self.mean_current(psi);
        let y = crate::records::sample_fine_increment(mu, self.dt_fine, rng);
        let w = self.apply_sample(psi, y);
        (y, w)
    }
}

/// One fine step of the true evolution. Returns the new state and the
/// sampled current.
pub fn step_true(
    setup: &MeasurementSetup,
    psi: &StateVector,
    dt_fine: f64,
    rng: &mut RngStream,
) -> Result<(StateVector, f64), TrajectoryError> {
    let mut stepper = TrueStepper::new(setup, dt_fine, MapOptions::default())?;
    let mut amps = psi.as_slice().to_vec();
    let (y, w) = stepper.step(&mut amps, rng);
    if !(w >= MIN_RECORD_WEIGHT) {
        return Err(TrajectoryError::Aborted {
            bin: 0,
            chain: Chain::True,
            weight: w,
        });
    }
    Ok((StateVector::new(amps).map_err(MapError::from)?, y))
}

/// The state conditioned on every fine sample of a bin: the ordered
/// product of fine Rouchon-Ralph operators applied to `psi`.
pub fn fully_conditioned_oracle(
    setup: &MeasurementSetup,
    seg: &FineRecordSegment,
    psi: &StateVector,
) -> Result<StateVector, TrajectoryError> {
    let mut stepper = TrueStepper::new(setup, seg.dt_fine(), MapOptions::default())?;
    let mut amps = psi.as_slice().to_vec();
    for &y in seg.samples() {
        let w = stepper.apply_sample(&mut amps, y);
        if !(w >= MIN_RECORD_WEIGHT) {
            return Err(TrajectoryError::Aborted {
                bin: 0,
                chain: Chain::True,
                weight: w,
            });
        }
    }
    Ok(StateVector::new(amps).map_err(MapError::from)?)
}

/// Setup, protocol and prepared operators shared by every trajectory of
/// an ensemble.
#[derive(Clone, Debug)]
pub struct TrajectoryEngine {
    setup: MeasurementSetup,
    cfg: ProtocolConfig,
    n_per_bin: usize,
    n_bins: usize,
    dt_bin: f64,
    stepper: TrueStepper,
    maps: Vec<PreparedMap>,
}

impl TrajectoryEngine {
    pub fn new(setup: &MeasurementSetup, cfg: &ProtocolConfig) -> Result<Self, TrajectoryError> {
        cfg.validate()?;
        let gamma = setup.gamma();
        let dt_bin = cfg.dt_bin(gamma);
        let opts = cfg.map_options();
        let stepper = TrueStepper::new(setup, cfg.dt_fine(gamma), opts)?;
        let mut kinds = cfg.map_kinds.clone();
        kinds.sort();
        kinds.dedup();
        let maps = kinds
            .iter()
            .map(|&k| PreparedMap::with_options(k, setup, dt_bin, opts))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            setup: setup.clone(),
            cfg: cfg.clone(),
            n_per_bin: cfg.n_per_bin()?,
            n_bins: cfg.n_bins()?,
            dt_bin,
            stepper,
            maps,
        })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.cfg
    }

    pub fn setup(&self) -> &MeasurementSetup {
        &self.setup
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn kinds(&self) -> Vec<MapKind> {
        self.maps.iter().map(|m| m.kind()).collect()
    }

    /// Runs trajectory `index` with its own random stream.
    pub fn run(&self, index: u64, mode: ChainMode) -> Result<TrajectoryRun, TrajectoryError> {
        let mut rng = RngStream::new(self.cfg.seed, index);
        let mut stepper = self.stepper.clone();
        let d = self.setup.dim();
        let psi0 = self.setup.initial_state().clone();
        let mut amps = psi0.as_slice().to_vec();
        let mut samples = vec![0.0; self.n_per_bin];
        let mut out = vec![Complex::new(0.0, 0.0); d];
        let mut tmp = vec![Complex::new(0.0, 0.0); d];

        let mut true_states = Vec::with_capacity(self.n_bins + 1);
        true_states.push(psi0.clone());
        let mut coarse: Vec<Vec<StateVector>> = self
            .maps
            .iter()
            .map(|_| {
                let mut v = Vec::with_capacity(self.n_bins + 1);
                v.push(psi0.clone());
                v
            })
            .collect();
        let mut records = Vec::with_capacity(self.n_bins);

        for bin in 0..self.n_bins {
            let start = true_states[bin].clone();
            for s in samples.iter_mut() {
                let (y, w) = stepper.step(&mut amps, &mut rng);
                if !(w >= MIN_RECORD_WEIGHT) {
                    return Err(TrajectoryError::Aborted {
                        bin,
                        chain: Chain::True,
                        weight: w,
                    });
                }
                *s = y;
            }
            let seg = FineRecordSegment::new(
                bin as f64 * self.dt_bin,
                stepper.dt_fine(),
                samples.clone(),
            )?;
            let rec = bin_record(&seg);
            for (map, chain) in self.maps.iter().zip(coarse.iter_mut()) {
                let from = match mode {
                    ChainMode::SelfPropagating => &chain[bin],
                    ChainMode::Reanchored => &start,
                };
                let phi = if map.kind().uses_phi() { rec.phi } else { 0.0 };
                let w = map.apply_into(rec.i, phi, from.as_slice(), &mut out, &mut tmp);
                if !(w >= MIN_RECORD_WEIGHT) {
                    return Err(TrajectoryError::Aborted {
                        bin,
                        chain: Chain::Map(map.kind()),
                        weight: w,
                    });
                }
                let s = 1.0 / w.sqrt();
                let next: Vec<Complex> = out.iter().map(|z| *z * s).collect();
                chain.push(StateVector::new(next).map_err(MapError::from)?);
            }
            true_states.push(StateVector::new(amps.clone()).map_err(MapError::from)?);
            records.push(rec);
        }

        Ok(TrajectoryRun {
            mode,
            true_states,
            coarse_states: self.kinds().into_iter().zip(coarse).collect(),
            records,
        })
    }

    /// Runs trajectories `0..realizations` in parallel and maps each through
    /// `f`. Results are in index order regardless of scheduling.
    pub fn run_ensemble<T, F>(&self, mode: ChainMode, f: F) -> Vec<Result<T, TrajectoryError>>
    where
        T: Send,
        F: Fn(&TrajectoryRun) -> T + Sync,
    {
        (0..self.cfg.realizations as u64)
            .into_par_iter()
            .map(|k| self.run(k, mode).map(|run| f(&run)))
            .collect()
    }
}

/// Convenience wrapper around [`TrajectoryEngine::run`] with self-propagating chains.
pub fn run_trajectory(
    setup: &MeasurementSetup,
    cfg: &ProtocolConfig,
    traj_index: u64,
) -> Result<TrajectoryRun, TrajectoryError> {
    TrajectoryEngine::new(setup, cfg)?.run(traj_index, ChainMode::SelfPropagating)
}

/// One-bin error study: many independent records, each starting from
/// the setup's initial state, comparing every map with the fully
/// conditioned state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleBinConfig {
    pub dt_bin: f64,
    pub dt_fine: f64,
    pub records: usize,
    pub seed: u64,
    pub map_kinds: Vec<MapKind>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingleBinResult {
    pub dt_bin: f64,
    /// TrAE against the oracle for each record, in record order.
    pub errors: BTreeMap<MapKind, Vec<f64>>,
    pub aborted: usize,
}

impl SingleBinResult {
    pub fn median(&self, kind: MapKind) -> Option<f64> {
        self.errors
            .get(&kind)
            .and_then(|v| crate::metrics::median(v))
    }
}

/// Runs the single-bin study in parallel; records whose oracle or map
/// update is degenerate are counted as aborted.
pub fn single_bin_errors(
    setup: &MeasurementSetup,
    cfg: &SingleBinConfig,
) -> Result<SingleBinResult, TrajectoryError> {
    let n = steps_per_bin(cfg.dt_bin, cfg.dt_fine)?;
    if cfg.records == 0 {
        return Err(TrajectoryError::Config(
            "at least one record is required".into(),
        ));
    }
    let stepper = TrueStepper::new(setup, cfg.dt_fine, MapOptions::default())?;
    let mut kinds = cfg.map_kinds.clone();
    kinds.sort();
    kinds.dedup();
    let maps = kinds
        .iter()
        .map(|&k| PreparedMap::new(k, setup, cfg.dt_bin))
        .collect::<Result<Vec<_>, _>>()?;
    let psi0 = setup.initial_state();
    let d = setup.dim();

    let per_record: Vec<Option<Vec<f64>>> = (0..cfg.records as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = RngStream::new(cfg.seed, r);
            let mut stepper = stepper.clone();
            let mut amps = psi0.as_slice().to_vec();
            let mut samples = Vec::with_capacity(n);
            for _ in 0..n {
                let (y, w) = stepper.step(&mut amps, &mut rng);
                if !(w >= MIN_RECORD_WEIGHT) {
                    return None;
                }
                samples.push(y);
            }
            let oracle = StateVector::new(amps).ok()?;
            let seg = FineRecordSegment::new(0.0, cfg.dt_fine, samples).ok()?;
            let rec = bin_record(&seg);
            let mut out = vec![Complex::new(0.0, 0.0); d];
            let mut tmp = vec![Complex::new(0.0, 0.0); d];
            maps.iter()
                .map(|m| {
                    let phi = if m.kind().uses_phi() { rec.phi } else { 0.0 };
                    let w = m.apply_into(rec.i, phi, psi0.as_slice(), &mut out, &mut tmp);
                    if !(w >= MIN_RECORD_WEIGHT) {
                        return None;
                    }
                    let s = 1.0 / w.sqrt();
                    let psi = StateVector::new(out.iter().map(|z| *z * s).collect()).ok()?;
                    trae_pure(&psi, &oracle).ok()
                })
                .collect()
        })
        .collect();

    let mut errors: BTreeMap<MapKind, Vec<f64>> = kinds.iter().map(|&k| (k, Vec::new())).collect();
    let mut aborted = 0;
    for rec in per_record {
        match rec {
            Some(errs) => {
                for (k, e) in kinds.iter().zip(errs) {
                    errors.get_mut(k).expect("kind present").push(e);
                }
            }
            None => aborted += 1,
        }
    }
    if aborted > 0 {
        log::warn!(
            "single-bin study at dt = {}: {aborted} records aborted",
            cfg.dt_bin
        );
    }
    Ok(SingleBinResult {
        dt_bin: cfg.dt_bin,
        errors,
        aborted,
    })
}
