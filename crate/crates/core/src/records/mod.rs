//! Fine-grained homodyne records and their reduction to the binned pair
//! `(I, phi)`.

mod io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::linalg::StateVector;
use crate::maps::BinnedRecord;
use crate::setup::MeasurementSetup;

pub use io::{RecordFile, RECORD_MAGIC};

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("time step must be positive and finite, got {0}")]
    NonPositiveStep(f64),
    #[error("record segment has no samples")]
    EmptySegment,
    #[error("bin width {dt_bin} is not an integer multiple of the fine step {dt_fine}")]
    NonIntegerRatio { dt_bin: f64, dt_fine: f64 },
    #[error("record sample {index} is not finite")]
    NonFiniteSample { index: usize },
    #[error("not a record file (bad magic)")]
    BadMagic,
    #[error("record file is inconsistent: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Relative slack allowed when checking that a bin holds a whole number of
/// fine steps.
const RATIO_TOL: f64 = 1e-9;

/// Number of fine steps per bin, or an error when `dt_bin / dt_fine` is
/// not an integer.
pub fn steps_per_bin(dt_bin: f64, dt_fine: f64) -> Result<usize, RecordError> {
    for dt in [dt_bin, dt_fine] {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(RecordError::NonPositiveStep(dt));
        }
    }
    let ratio = dt_bin / dt_fine;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > RATIO_TOL * n {
        return Err(RecordError::NonIntegerRatio { dt_bin, dt_fine });
    }
    Ok(n as usize)
}

/// Seeded ChaCha8 generator with an independent stream per worker.
/// Normals come from the Ziggurat sampler in `rand_distr`.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// One homodyne sample `y = mu + N(0, 1)/√δt`, so that `y δt = mu δt + δW`.
#[inline]
pub fn sample_fine_increment(mu: f64, dt_fine: f64, rng: &mut RngStream) -> f64 {
    mu + rng.standard_normal() / dt_fine.sqrt()
}

/// The fine samples `y_k` of one bin.
#[derive(Clone, Debug, PartialEq)]
pub struct FineRecordSegment {
    t0: f64,
    dt_fine: f64,
    samples: Vec<f64>,
}

impl FineRecordSegment {
    pub fn new(t0: f64, dt_fine: f64, samples: Vec<f64>) -> Result<Self, RecordError> {
        if !(dt_fine > 0.0 && dt_fine.is_finite()) {
            return Err(RecordError::NonPositiveStep(dt_fine));
        }
        if samples.is_empty() {
            return Err(RecordError::EmptySegment);
        }
        if let Some(index) = samples.iter().position(|y| !y.is_finite()) {
            return Err(RecordError::NonFiniteSample { index });
        }
        Ok(Self {
            t0,
            dt_fine,
            samples,
        })
    }

    /// As [`new`](Self::new), also checking that the samples fill a bin of
    /// width `dt_bin` exactly.
    pub fn for_bin(
        t0: f64,
        dt_fine: f64,
        dt_bin: f64,
        samples: Vec<f64>,
    ) -> Result<Self, RecordError> {
        let n = steps_per_bin(dt_bin, dt_fine)?;
        if n != samples.len() {
            return Err(RecordError::NonIntegerRatio { dt_bin, dt_fine });
        }
        Self::new(t0, dt_fine, samples)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt_fine(&self) -> f64 {
        self.dt_fine
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn count(&self) -> usize {
        self.samples.len()
    }

    pub fn dt_bin(&self) -> f64 {
        self.count() as f64 * self.dt_fine
    }
}

/// Reduces a segment to `(I, phi)`:
/// `I/√Δt = (1/n) Σ y_k` and `phi √Δt/(2√3) = (1/n) Σ y_k (k δt - Δt/2)`,
/// with `k` the left endpoint of each fine step.
pub fn bin_record(seg: &FineRecordSegment) -> BinnedRecord {
    let n = seg.count() as f64;
    let dt_fine = seg.dt_fine;
    let dt = seg.dt_bin();
    let half = 0.5 * dt;
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (k, &y) in seg.samples.iter().enumerate() {
        sum += y;
        weighted += y * (k as f64 * dt_fine - half);
    }
    let sq = dt.sqrt();
    BinnedRecord {
        i: sq * (sum / n),
        phi: 2.0 * 3f64.sqrt() * (weighted / n) / sq,
        t: seg.t0,
        dt_bin: dt,
    }
}

/// Draws `(I, phi)` directly at the coarse step: `I` normal with mean
/// `√(η Δt) ⟨c + c†⟩`, `phi` standard normal and independent. Only
/// accurate to leading order in the mean; intended for tests.
pub fn sample_binned_direct(
    setup: &MeasurementSetup,
    psi: &StateVector,
    t: f64,
    dt_bin: f64,
    rng: &mut RngStream,
) -> Result<BinnedRecord, crate::Error> {
    if !(dt_bin > 0.0 && dt_bin.is_finite()) {
        return Err(RecordError::NonPositiveStep(dt_bin).into());
    }
    let mu = homodyne_mean(setup, psi)?;
    let i = (setup.eta() * dt_bin).sqrt() * mu + rng.standard_normal();
    let phi = rng.standard_normal();
    Ok(BinnedRecord { i, phi, t, dt_bin })
}

/// `⟨ψ|c + c†|ψ⟩ = 2 Re⟨c⟩`.
pub fn homodyne_mean(
    setup: &MeasurementSetup,
    psi: &StateVector,
) -> Result<f64, crate::linalg::LinalgError> {
    Ok(2.0 * psi.expectation(setup.c())?.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::setup::ExampleId;

    #[test]
    fn zero_samples_bin_to_zero() {
        let seg = FineRecordSegment::new(0.0, 1e-4, vec![0.0; 100]).unwrap();
        let rec = bin_record(&seg);
        assert_eq!((rec.i, rec.phi), (0.0, 0.0));
        assert!((rec.dt_bin - 1e-2).abs() < 1e-15);
    }

    #[test]
    fn constant_samples_match_brute_force() {
        let a = 1.7;
        let dt_fine = 1e-4;
        let n = 100;
        let seg = FineRecordSegment::new(0.3, dt_fine, vec![a; n]).unwrap();
        let rec = bin_record(&seg);
        let dt = n as f64 * dt_fine;
        // Brute-force sum of k δt - Δt/2, compared with the closed form -n δt/2.
        let brute: f64 = (0..n).map(|k| k as f64 * dt_fine - dt / 2.0).sum();
        assert!((brute + n as f64 * dt_fine / 2.0).abs() < 1e-15);
        assert!((rec.i - a * dt.sqrt()).abs() < 1e-14);
        let want_phi = -a * (3.0 * dt).sqrt() / n as f64;
        assert!(
            (rec.phi - want_phi).abs() < 1e-13,
            "{} vs {want_phi}",
            rec.phi
        );
        assert!((rec.y() - a).abs() < 1e-12);
    }

    #[test]
    fn segment_validation() {
        assert!(matches!(
            FineRecordSegment::new(0.0, 1e-4, vec![]),
            Err(RecordError::EmptySegment)
        ));
        assert!(FineRecordSegment::new(0.0, 0.0, vec![1.0]).is_err());
        assert!(FineRecordSegment::new(0.0, 1e-4, vec![f64::NAN]).is_err());
        assert!(FineRecordSegment::for_bin(0.0, 1e-4, 1e-2, vec![0.0; 100]).is_ok());
        assert!(FineRecordSegment::for_bin(0.0, 1e-4, 1e-2, vec![0.0; 99]).is_err());
    }

    #[test]
    fn ratio_must_be_integer() {
        assert_eq!(steps_per_bin(1e-2, 1e-4).unwrap(), 100);
        assert_eq!(steps_per_bin(6.3e-2, 1e-6).unwrap(), 63_000);
        assert!(steps_per_bin(1e-2, 3e-4).is_err());
        assert!(steps_per_bin(1e-4, 1e-2).is_err());
        assert!(steps_per_bin(-1.0, 1e-2).is_err());
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let mut c = RngStream::new(7, 4);
        let xa: Vec<f64> = (0..100).map(|_| a.standard_normal()).collect();
        let xb: Vec<f64> = (0..100).map(|_| b.standard_normal()).collect();
        let xc: Vec<f64> = (0..100).map(|_| c.standard_normal()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn fine_increment_statistics() {
        let dt = 1e-4;
        let mut rng = RngStream::new(11, 0);
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let y = sample_fine_increment(0.0, dt, &mut rng);
            s += y;
            s2 += (y * dt).powi(2);
        }
        let mean = s / n as f64;
        // Standard error of the mean is 1/√(dt n) = 0.1.
        assert!(mean.abs() < 3.0 * 0.1, "{mean}");
        assert!((s2 / n as f64 / dt - 1.0).abs() < 0.01);
    }

    #[test]
    fn direct_sampling_mean() {
        let gamma = 1.0;
        let dt = 0.01;
        let setup = ExampleId::QubitZ.setup(gamma).unwrap();
        let excited = StateVector::basis(2, 0);
        let mut rng = RngStream::new(5, 0);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| {
                sample_binned_direct(&setup, &excited, 0.0, dt, &mut rng)
                    .unwrap()
                    .i
            })
            .sum::<f64>()
            / n as f64;
        // ⟨c + c†⟩ = 2√(γ/2) = √(2γ).
        let want = dt.sqrt() * (2.0 * gamma).sqrt();
        assert!((mean - want).abs() < 0.01, "{mean} vs {want}");

        let plus = StateVector::from_real(&[1.0, 1.0])
            .unwrap()
            .normalized()
            .unwrap();
        let mean: f64 = (0..n)
            .map(|_| {
                sample_binned_direct(&setup, &plus, 0.0, dt, &mut rng)
                    .unwrap()
                    .i
            })
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 0.01);
    }
}
