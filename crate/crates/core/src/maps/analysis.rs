//! Quadrature checks on ensemble properties of the maps: Kraus
//! completeness, agreement with the Lindblad flow, and the small purity
//! loss left after discarding the phi record.

use super::superop::{check_density, lc_commutator, lindbladian};
use super::{MapError, MapKind, PreparedMap};
use crate::linalg::{hermitian_eigenvalues, CMatrix, Complex, LinalgError, StateVector};
use crate::quadrature::NormalRule;
use crate::setup::MeasurementSetup;

/// Smallest quadrature order accepted by the residual functions.
pub const MIN_QUAD_ORDER: usize = 20;

/// Tuning for [`completeness_residual_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompletenessOptions {
    pub quad_order: usize,
    /// Relative change allowed when the order is doubled.
    pub resolution_tolerance: f64,
    /// Changes below this absolute size are treated as rounding.
    pub absolute_floor: f64,
}

impl Default for CompletenessOptions {
    fn default() -> Self {
        Self {
            quad_order: crate::quadrature::DEFAULT_ORDER,
            resolution_tolerance: 0.01,
            absolute_floor: 1e-14,
        }
    }
}

/// Largest absolute eigenvalue of a Hermitian matrix. The input is
/// symmetrised first, so tiny anti-Hermitian rounding is ignored.
pub fn operator_norm(a: &CMatrix) -> Result<f64, LinalgError> {
    let d = a.dim();
    let sym = CMatrix::from_fn(d, |i, j| (a.get(i, j) + a.get(j, i).conj()) * 0.5);
    let eig = hermitian_eigenvalues(&sym)?;
    Ok(eig.iter().fold(0.0, |m, &x| f64::max(m, x.abs())))
}

fn check_order(order: usize) -> Result<(), MapError> {
    if order < MIN_QUAD_ORDER {
        return Err(MapError::QuadratureOrderTooLow(order));
    }
    Ok(())
}

/// `E_{I,[phi]}[f(M(I, phi))]` under the ostensible Gaussians.
fn record_average(
    map: &PreparedMap,
    order: usize,
    mut f: impl FnMut(&CMatrix) -> CMatrix,
) -> CMatrix {
    let rule = NormalRule::new(order);
    let d = map.eval(0.0, 0.0).dim();
    let mut acc = CMatrix::zeros(d);
    let phis: Vec<(f64, f64)> = if map.kind().uses_phi() {
        rule.points().to_vec()
    } else {
        vec![(0.0, 1.0)]
    };
    for &(i, wi) in rule.points() {
        for &(phi, wp) in &phis {
            let m = map.eval(i, phi);
            acc.add_scaled(Complex::new(wi * wp, 0.0), &f(&m));
        }
    }
    acc
}

fn completeness_at(
    kind: MapKind,
    setup: &MeasurementSetup,
    dt: f64,
    order: usize,
) -> Result<f64, MapError> {
    let map = PreparedMap::new(kind, setup, dt)?;
    let mut avg = record_average(&map, order, |m| &m.adjoint() * m);
    avg -= &CMatrix::identity(setup.dim());
    Ok(operator_norm(&avg)?)
}

/// `‖E[M†M] - 1‖` for one map, with an under-resolution check at twice the order.
pub fn completeness_residual(
    kind: MapKind,
    setup: &MeasurementSetup,
    dt: f64,
    quad_order: usize,
) -> Result<f64, MapError> {
    completeness_residual_with(
        kind,
        setup,
        dt,
        CompletenessOptions {
            quad_order,
            ..CompletenessOptions::default()
        },
    )
}

pub fn completeness_residual_with(
    kind: MapKind,
    setup: &MeasurementSetup,
    dt: f64,
    opts: CompletenessOptions,
) -> Result<f64, MapError> {
    check_order(opts.quad_order)?;
    let coarse = completeness_at(kind, setup, dt, opts.quad_order)?;
    let fine_order = 2 * opts.quad_order;
    let fine = completeness_at(kind, setup, dt, fine_order)?;
    let change = (coarse - fine).abs();
    if change > opts.absolute_floor && change > opts.resolution_tolerance * fine.abs() {
        return Err(MapError::QuadratureUnderResolved {
            order: opts.quad_order,
            fine_order,
            coarse,
            fine,
        });
    }
    Ok(coarse)
}

fn require_monitored_only(setup: &MeasurementSetup) -> Result<(), MapError> {
    if setup.eta() < 1.0 {
        return Err(MapError::InefficientPureMap(MapKind::Phi, setup.eta()));
    }
    if !setup.extra_lindblads().is_empty() {
        return Err(MapError::UnmonitoredChannels(setup.extra_lindblads().len()));
    }
    Ok(())
}

/// `‖E[M_Φ ρ M_Φ†] - (ρ + Δt𝓛ρ + Δt²𝓛²ρ/2)‖` with the average taken over
/// both records. Requires unit efficiency and no extra channels, since
/// the Kraus operators only describe the monitored one.
pub fn lindblad_consistency_residual(
    setup: &MeasurementSetup,
    rho: &CMatrix,
    dt: f64,
    quad_order: usize,
) -> Result<f64, MapError> {
    check_order(quad_order)?;
    check_density(rho)?;
    require_monitored_only(setup)?;
    let map = PreparedMap::new(MapKind::Phi, setup, dt)?;
    let avg = record_average(&map, quad_order, |m| &(m * rho) * &m.adjoint());
    let l1 = lindbladian(setup, rho);
    let l2 = lindbladian(setup, &l1);
    let mut target = rho.clone();
    target.add_scaled(Complex::new(dt, 0.0), &l1);
    target.add_scaled(Complex::new(0.5 * dt * dt, 0.0), &l2);
    Ok(operator_norm(&(&avg - &target))?)
}

/// `‖E_I[M_🚰 ρ M_🚰†] - E_I[M_W ρ M_W†]‖`: the extra robinet terms should
/// not affect the averaged evolution through second order.
pub fn robinet_average_difference(
    setup: &MeasurementSetup,
    rho: &CMatrix,
    dt: f64,
    quad_order: usize,
) -> Result<f64, MapError> {
    check_order(quad_order)?;
    check_density(rho)?;
    let sandwich = |kind| -> Result<CMatrix, MapError> {
        let map = PreparedMap::new(kind, setup, dt)?;
        Ok(record_average(&map, quad_order, |m| {
            &(m * rho) * &m.adjoint()
        }))
    };
    let diff = &sandwich(MapKind::RobinetTruncated)? - &sandwich(MapKind::Wonglakhon)?;
    Ok(operator_norm(&diff)?)
}

/// Mixture of the normalised two-record updates of `psi` over
/// `phi ~ N(0, 1)` at fixed `I`.
pub fn phi_averaged_state(
    setup: &MeasurementSetup,
    psi: &StateVector,
    i: f64,
    dt: f64,
    quad_order: usize,
) -> Result<CMatrix, MapError> {
    check_order(quad_order)?;
    let map = PreparedMap::new(MapKind::Phi, setup, dt)?;
    let d = psi.dim();
    let mut out = vec![Complex::new(0.0, 0.0); d];
    let mut tmp = vec![Complex::new(0.0, 0.0); d];
    let mut acc = CMatrix::zeros(d);
    for &(phi, w) in NormalRule::new(quad_order).points() {
        let norm2 = map.apply_into(i, phi, psi.as_slice(), &mut out, &mut tmp);
        if !(norm2 >= super::MIN_RECORD_WEIGHT) {
            return Err(MapError::ImpossibleRecord(norm2));
        }
        let post = StateVector::new(out.clone())?;
        acc.add_scaled(Complex::new(w / norm2, 0.0), &post.projector());
    }
    Ok(acc)
}

/// `1 - Tr[ρ̄²]` for the phi-averaged state.
pub fn purity_deficit(
    setup: &MeasurementSetup,
    psi: &StateVector,
    i: f64,
    dt: f64,
    quad_order: usize,
) -> Result<f64, MapError> {
    let rho = phi_averaged_state(setup, psi, i, dt, quad_order)?;
    Ok(1.0 - (&rho * &rho).trace().re)
}

/// `(Δt³/12) Tr[([[𝓛𝓒]]ρ₀)²]`.
pub fn predicted_purity_deficit(setup: &MeasurementSetup, rho0: &CMatrix, dt: f64) -> f64 {
    let x = lc_commutator(setup, rho0);
    dt.powi(3) / 12.0 * (&x * &x).trace().re
}

/// Like [`predicted_purity_deficit`], but with the trace of `[[𝓛𝓒]]ρ₀`
/// projected out (`X - ρ₀ Tr X`). The two coincide when `Tr X = 0`; the
/// corrected form also covers states where the correction shifts the
/// record weight.
pub fn trace_corrected_purity_deficit(setup: &MeasurementSetup, rho0: &CMatrix, dt: f64) -> f64 {
    let mut x = lc_commutator(setup, rho0);
    let t = x.trace();
    x.add_scaled(-t, rho0);
    dt.powi(3) / 12.0 * (&x * &x).trace().re
}
