//! Density-matrix form of the two-record map, valid for inefficient
//! detection and additional unmonitored channels.

use super::{BinnedRecord, MapError};
use crate::linalg::{hermitian_eigenvalues, CMatrix, Complex};
use crate::setup::MeasurementSetup;

const DENSITY_TOL: f64 = 1e-10;

/// Most negative eigenvalue tolerated by [`apply_superoperator_phi`].
pub const NEGATIVITY_TOL: f64 = 1e-8;

fn dissipator(l: &CMatrix, rho: &CMatrix) -> CMatrix {
    let ld = l.adjoint();
    let ldl = &ld * l;
    let mut out = &(l * rho) * &ld;
    out.add_scaled(Complex::new(-0.5, 0.0), &(&ldl * rho));
    out.add_scaled(Complex::new(-0.5, 0.0), &(rho * &ldl));
    out
}

/// `𝓛ρ = -i[H, ρ] + D[c]ρ + Σ_k D[L_k]ρ`
pub fn lindbladian(setup: &MeasurementSetup, rho: &CMatrix) -> CMatrix {
    let h = setup.h();
    let mut out = dissipator(setup.c(), rho);
    out.add_scaled(Complex::new(0.0, -1.0), &(h * rho));
    out.add_scaled(Complex::new(0.0, 1.0), &(rho * h));
    for l in setup.extra_lindblads() {
        out += &dissipator(l, rho);
    }
    out
}

/// `𝓒ρ = √η (cρ + ρc†)`
pub fn measurement_superoperator(setup: &MeasurementSetup, rho: &CMatrix) -> CMatrix {
    let c = setup.c();
    (&(c * rho) + &(rho * &c.adjoint())).scale_re(setup.eta().sqrt())
}

/// `[[𝓛𝓒]]ρ = 𝓛𝓒ρ - 𝓒𝓛ρ`
pub fn lc_commutator(setup: &MeasurementSetup, rho: &CMatrix) -> CMatrix {
    let lc = lindbladian(setup, &measurement_superoperator(setup, rho));
    let cl = measurement_superoperator(setup, &lindbladian(setup, rho));
    &lc - &cl
}

/// `{{𝓛𝓒}}ρ = 𝓛𝓒ρ + 𝓒𝓛ρ`
pub fn lc_anticommutator(setup: &MeasurementSetup, rho: &CMatrix) -> CMatrix {
    let lc = lindbladian(setup, &measurement_superoperator(setup, rho));
    let cl = measurement_superoperator(setup, &lindbladian(setup, rho));
    &lc + &cl
}

pub(crate) fn check_density(rho: &CMatrix) -> Result<(), MapError> {
    let tr = rho.trace();
    if rho.hermiticity_defect() > DENSITY_TOL
        || (tr.re - 1.0).abs() > DENSITY_TOL
        || tr.im.abs() > DENSITY_TOL
    {
        return Err(MapError::InvalidDensityMatrix);
    }
    Ok(())
}

/// Applies the two-record superoperator through order `(Δt)^{3/2}` and
/// renormalises by the trace. Returns the updated state and the trace weight.
///
/// The truncated expansion can push eigenvalues slightly below zero, most
/// visibly for pure inputs; anything below `-1e-8` is reported as
/// [`MapError::NegativeEigenvalue`].
pub fn apply_superoperator_phi(
    setup: &MeasurementSetup,
    rec: &BinnedRecord,
    rho: &CMatrix,
) -> Result<(CMatrix, f64), MapError> {
    apply_superoperator_phi_with(setup, rec, rho, NEGATIVITY_TOL)
}

/// As [`apply_superoperator_phi`] with a caller-chosen negativity
/// tolerance; pass `f64::INFINITY` to skip the check.
pub fn apply_superoperator_phi_with(
    setup: &MeasurementSetup,
    rec: &BinnedRecord,
    rho: &CMatrix,
    negativity_tol: f64,
) -> Result<(CMatrix, f64), MapError> {
    check_density(rho)?;
    if !(rec.dt_bin > 0.0) {
        return Err(MapError::NonPositiveBin(rec.dt_bin));
    }
    let dt = rec.dt_bin;
    let i = rec.i;
    let r = |x: f64| Complex::new(x, 0.0);

    let c1 = measurement_superoperator(setup, rho);
    let c2 = measurement_superoperator(setup, &c1);
    let c3 = measurement_superoperator(setup, &c2);
    let l0 = lindbladian(setup, rho);
    let lc = lindbladian(setup, &c1);
    let cl = measurement_superoperator(setup, &l0);

    let mut out = rho.clone();
    out.add_scaled(r(dt.sqrt() * i), &c1);
    out.add_scaled(r(dt), &l0);
    out.add_scaled(r(dt * 0.5 * (i * i - 1.0)), &c2);
    let half32 = 0.5 * dt.powf(1.5);
    out.add_scaled(r(half32 * i), &(&lc + &cl));
    out.add_scaled(r(half32 * (i * i * i - 3.0 * i) / 3.0), &c3);
    out.add_scaled(r(-half32 * rec.phi / 3f64.sqrt()), &(&lc - &cl));

    let weight = out.trace().re;
    if !(weight > 0.0) {
        return Err(MapError::ImpossibleRecord(weight));
    }
    let d = out.dim();
    let normalised = CMatrix::from_fn(d, |a, b| {
        (out.get(a, b) + out.get(b, a).conj()) * (0.5 / weight)
    });
    if negativity_tol.is_finite() {
        let min_eig = hermitian_eigenvalues(&normalised)?[0];
        if min_eig < -negativity_tol {
            return Err(MapError::NegativeEigenvalue(min_eig));
        }
    }
    Ok((normalised, weight))
}

/// Leading difference between the two-record and robinet superoperators,
/// `-(phi / 2√3) (Δt)^{3/2} [[𝓛𝓒]]ρ`.
pub fn error_superoperator_faucet(
    setup: &MeasurementSetup,
    rec: &BinnedRecord,
    rho: &CMatrix,
) -> CMatrix {
    let scale = -rec.phi / (2.0 * 3f64.sqrt()) * rec.dt_bin.powf(1.5);
    lc_commutator(setup, rho).scale_re(scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::StateVector;
    use crate::maps::{apply_pure_map, build_map, MapKind};
    use crate::metrics::trae_mixed;
    use crate::setup::{sigma_minus, ExampleId};

    #[test]
    fn trivial_coupling_leaves_state_alone() {
        let c = CMatrix::zeros(2);
        let psi = StateVector::from_real(&[0.6, 0.8]).unwrap();
        let setup = MeasurementSetup::pure(c, psi.clone(), 1.0).unwrap();
        let rho = psi.projector();
        let rec = BinnedRecord::new(0.7, -0.2, 0.0, 0.05).unwrap();
        let (out, w) = apply_superoperator_phi(&setup, &rec, &rho).unwrap();
        assert!(out.max_abs_diff(&rho) < 1e-15);
        assert!((w - 1.0).abs() < 1e-15);
    }

    #[test]
    fn agrees_with_pure_map_to_second_order() {
        let setup = ExampleId::Spin32Lowering.setup(1.0).unwrap();
        let psi = setup.initial_state().clone();
        let mut dists = Vec::new();
        let dts = [1e-3, 1e-2, 1e-1];
        for &dt in &dts {
            let rec = BinnedRecord::new(0.8, -1.1, 0.0, dt).unwrap();
            let m = build_map(MapKind::Phi, &setup, &rec).unwrap();
            let (pure, _) = apply_pure_map(&m, &psi).unwrap();
            let (mixed, _) =
                apply_superoperator_phi_with(&setup, &rec, &psi.projector(), f64::INFINITY)
                    .unwrap();
            dists.push(trae_mixed(&mixed, &pure.projector()).unwrap());
        }
        let slope = (dists[1] / dists[0]).log10();
        assert!(slope >= 1.9, "slope {slope}, distances {dists:?}");
    }

    #[test]
    fn pure_input_trips_negativity_check_at_large_step() {
        let setup = ExampleId::Spin32Lowering.setup(1.0).unwrap();
        let rho = setup.initial_state().projector();
        let rec = BinnedRecord::new(0.8, -1.1, 0.0, 0.05).unwrap();
        assert!(matches!(
            apply_superoperator_phi(&setup, &rec, &rho),
            Err(MapError::NegativeEigenvalue(_))
        ));
        let mixed = CMatrix::identity(4).scale_re(0.25);
        assert!(apply_superoperator_phi(&setup, &rec, &mixed).is_ok());
    }

    #[test]
    fn error_superoperator_vanishes_for_qnd() {
        for ex in [ExampleId::QubitZ, ExampleId::Spin1Z] {
            let setup = ex.setup(1.0).unwrap();
            let rho = setup.initial_state().projector();
            let rec = BinnedRecord::new(0.4, 1.5, 0.0, 0.01).unwrap();
            assert!(error_superoperator_faucet(&setup, &rec, &rho).max_abs_entry() < 1e-15);
        }
    }

    #[test]
    fn error_superoperator_zero_for_zero_phi() {
        let setup = ExampleId::QubitFluorescence.setup(1.0).unwrap();
        let rho = setup.initial_state().projector();
        let rec = BinnedRecord::new(0.4, 0.0, 0.0, 0.01).unwrap();
        assert_eq!(
            error_superoperator_faucet(&setup, &rec, &rho).max_abs_entry(),
            0.0
        );
    }

    #[test]
    fn error_superoperator_for_decay() {
        let psi = StateVector::basis(2, 0);
        let setup = MeasurementSetup::pure(sigma_minus(), psi.clone(), 1.0).unwrap();
        let rec = BinnedRecord::new(0.0, 1.0, 0.0, 0.01).unwrap();
        let e = error_superoperator_faucet(&setup, &rec, &psi.projector());
        assert!(e.max_abs_entry() > 1e-5);
        assert!(e.trace().norm() < 1e-12);
        // From |+x⟩ the trace is -(phi/2√3)Δt^{3/2}·(1/2), so it is not traceless in general.
        let plus = StateVector::from_real(&[1.0, 1.0])
            .unwrap()
            .normalized()
            .unwrap();
        let setup = MeasurementSetup::pure(sigma_minus(), plus.clone(), 1.0).unwrap();
        let e = error_superoperator_faucet(&setup, &rec, &plus.projector());
        let want = -0.5 / (2.0 * 3f64.sqrt()) * 0.01f64.powf(1.5);
        assert!((e.trace().re - want).abs() < 1e-15, "{}", e.trace());
    }

    #[test]
    fn rejects_invalid_density() {
        let setup = ExampleId::QubitZ.setup(1.0).unwrap();
        let rec = BinnedRecord::new(0.0, 0.0, 0.0, 0.01).unwrap();
        assert!(matches!(
            apply_superoperator_phi(&setup, &rec, &CMatrix::identity(2)),
            Err(MapError::InvalidDensityMatrix)
        ));
    }

    #[test]
    fn inefficiency_mixes_the_state() {
        let setup = ExampleId::QubitFluorescence
            .setup(1.0)
            .unwrap()
            .with_eta(0.5)
            .unwrap();
        let rho = setup.initial_state().projector();
        let rec = BinnedRecord::new(0.3, 0.2, 0.0, 0.01).unwrap();
        let (out, _) = apply_superoperator_phi(&setup, &rec, &rho).unwrap();
        let purity = (&out * &out).trace().re;
        assert!(purity < 1.0 - 1e-4 && purity > 0.9, "{purity}");
    }
}
