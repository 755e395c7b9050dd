//! Error measures between state estimates, ensemble reductions and
//! power-law fits.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{
    clamp_unit, hermitian_eigenvalues, pure_overlap_sq, CMatrix, LinalgError, StateVector,
};
use crate::maps::MapKind;
use crate::trajectory::TrajectoryRun;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("input must be Hermitian (defect {0:e})")]
    NotHermitian(f64),
    #[error("nothing to reduce")]
    Empty,
    #[error("a scaling fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("scaling fit needs positive values, got ({dt}, {error})")]
    NonPositive { dt: f64, error: f64 },
    #[error("step sizes must be distinct")]
    DuplicateStep,
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("map {0} missing from the run")]
    MissingMap(MapKind),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

const HERMITIAN_TOL: f64 = 1e-10;

/// `D = √(1 - |⟨a|b⟩|²)`, the trace distance between pure states.
pub fn trae_pure(a: &StateVector, b: &StateVector) -> Result<f64, LinalgError> {
    Ok(clamp_unit(1.0 - pure_overlap_sq(a, b)?).sqrt())
}

/// `σ² = 2(1 - |⟨a|b⟩|²)`, so that `2D² = σ²`.
pub fn trse_pure(a: &StateVector, b: &StateVector) -> Result<f64, LinalgError> {
    Ok(2.0 * clamp_unit(1.0 - pure_overlap_sq(a, b)?))
}

/// Half the trace norm of `rho - sigma`.
pub fn trae_mixed(rho: &CMatrix, sigma: &CMatrix) -> Result<f64, MetricsError> {
    for m in [rho, sigma] {
        let defect = m.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(MetricsError::NotHermitian(defect));
        }
    }
    let diff = rho - sigma;
    let d = diff.dim();
    let sym = CMatrix::from_fn(d, |i, j| (diff.get(i, j) + diff.get(j, i).conj()) * 0.5);
    Ok(0.5
        * hermitian_eigenvalues(&sym)?
            .iter()
            .map(|x| x.abs())
            .sum::<f64>())
}

fn states_for<'a>(
    run: &'a TrajectoryRun,
    kind: MapKind,
) -> Result<&'a [StateVector], MetricsError> {
    run.coarse_states
        .get(&kind)
        .map(Vec::as_slice)
        .ok_or(MetricsError::MissingMap(kind))
}

/// `σ²_{A;k} = (1/N) Σ_{j=1}^{N} σ²_A(t_j)`: the squared error averaged over
/// bin ends. Take the square root for the per-trajectory `σ`.
pub fn time_avg_trse(run: &TrajectoryRun, kind: MapKind) -> Result<f64, MetricsError> {
    let coarse = states_for(run, kind)?;
    let n = run.n_bins();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    let mut acc = 0.0;
    for j in 1..=n {
        acc += trse_pure(&coarse[j], &run.true_states[j])?;
    }
    Ok(acc / n as f64)
}

/// Per-trajectory errors for one map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryErrors {
    /// Time-averaged squared error `σ²_{A;k}`.
    pub sigma2_time_avg: f64,
    /// `D_A(t_j)` averaged over the bins.
    pub mean_trae: f64,
}

pub fn trajectory_errors(
    run: &TrajectoryRun,
    kind: MapKind,
) -> Result<TrajectoryErrors, MetricsError> {
    let coarse = states_for(run, kind)?;
    let n = run.n_bins();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    let mut d = 0.0;
    for j in 1..=n {
        d += trae_pure(&coarse[j], &run.true_states[j])?;
    }
    Ok(TrajectoryErrors {
        sigma2_time_avg: time_avg_trse(run, kind)?,
        mean_trae: d / n as f64,
    })
}

/// Logarithmically spaced histogram bins.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            lo: 1e-7,
            hi: 1e-1,
            bins: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl HistogramSpec {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.lo > 0.0 && self.hi > self.lo && self.bins > 0 && self.hi.is_finite()) {
            return Err(MetricsError::Invalid(format!(
                "histogram needs 0 < lo < hi and bins > 0, got [{}, {}] with {} bins",
                self.lo, self.hi, self.bins
            )));
        }
        Ok(())
    }

    pub fn edges(&self) -> Vec<f64> {
        let (a, b) = (self.lo.log10(), self.hi.log10());
        (0..=self.bins)
            .map(|k| 10f64.powf(a + (b - a) * k as f64 / self.bins as f64))
            .collect()
    }

    /// Counts values per bin. Values outside the range, including zero,
    /// go to the first or last bin so that every value is counted.
    pub fn histogram(&self, values: &[f64]) -> Result<Histogram, MetricsError> {
        self.validate()?;
        let (a, b) = (self.lo.log10(), self.hi.log10());
        let mut counts = vec![0u64; self.bins];
        for &v in values {
            let k = if v <= self.lo {
                0
            } else {
                let pos = (v.log10() - a) / (b - a) * self.bins as f64;
                (pos.floor().max(0.0) as usize).min(self.bins - 1)
            };
            counts[k] += 1;
        }
        Ok(Histogram {
            edges: self.edges(),
            counts,
        })
    }
}

/// Ensemble statistics for one map.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub kind: MapKind,
    /// `σ_{A;k}`, one per completed trajectory, in trajectory order.
    pub sigma_time_avg: Vec<f64>,
    /// Mean of `σ_{A;k}` (the root is taken before averaging).
    pub mtrse: f64,
    /// Mean of `D_A` over trajectories and bins.
    pub mtrae: f64,
    pub histogram: Histogram,
    pub aborted_count: usize,
}

/// Order-independent mean: the values are summed in sorted order.
fn stable_mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn ensemble_reduce(
    kind: MapKind,
    per_traj: &[TrajectoryErrors],
    aborted_count: usize,
    spec: &HistogramSpec,
) -> Result<ErrorSummary, MetricsError> {
    if per_traj.is_empty() {
        return Err(MetricsError::Empty);
    }
    let sigma: Vec<f64> = per_traj
        .iter()
        .map(|e| e.sigma2_time_avg.max(0.0).sqrt())
        .collect();
    let traes: Vec<f64> = per_traj.iter().map(|e| e.mean_trae).collect();
    Ok(ErrorSummary {
        kind,
        mtrse: stable_mean(&sigma),
        mtrae: stable_mean(&traes),
        histogram: spec.histogram(&sigma)?,
        sigma_time_avg: sigma,
        aborted_count,
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Least-squares line through `(log dt, log error)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingFit {
    pub dt_values: Vec<f64>,
    pub error_values: Vec<f64>,
    pub slope: f64,
    /// Natural log of the prefactor.
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_scaling(points: &[(f64, f64)]) -> Result<ScalingFit, MetricsError> {
    if points.len() < 3 {
        return Err(MetricsError::TooFewPoints(points.len()));
    }
    for &(dt, error) in points {
        if !(dt > 0.0 && error > 0.0 && dt.is_finite() && error.is_finite()) {
            return Err(MetricsError::NonPositive { dt, error });
        }
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(MetricsError::DuplicateStep);
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(ScalingFit {
        dt_values: pts.iter().map(|p| p.0).collect(),
        error_values: pts.iter().map(|p| p.1).collect(),
        slope,
        intercept,
        r_squared,
    })
}

/// `measured / ((2/3)√N · per_step_d)`: how well a random-walk model of
/// error accumulation explains the time-averaged error. Returns 1 when
/// both errors vanish. The 2/3 prefactor assumes many bins.
pub fn appendix_b_ratio(
    per_step_d: f64,
    n_bins: usize,
    measured_dbar: f64,
) -> Result<f64, MetricsError> {
    if n_bins == 0 {
        return Err(MetricsError::Invalid("N must be at least 1".into()));
    }
    if n_bins == 1 {
        log::warn!("accumulation model assumes many bins; N = 1 is only indicative");
    }
    if per_step_d == 0.0 && measured_dbar == 0.0 {
        return Ok(1.0);
    }
    Ok(measured_dbar / (2.0 / 3.0 * (n_bins as f64).sqrt() * per_step_d))
}
