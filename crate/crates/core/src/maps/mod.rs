//! Finite-Δt measurement operators for the five conditional maps, their
//! Kraus-completeness and ensemble-average properties, and the
//! density-matrix superoperator of the two-record map.
//!
//! Records are the dimensionless binned current `I` and, for
//! [`MapKind::Phi`], the linearly weighted record `phi`. Both have standard
//! normal ostensible distributions.

mod analysis;
mod superop;
mod table;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{anticommutator, commutator, CMatrix, Complex, LinalgError, StateVector};
use crate::quadrature::standard_normal_density;
use crate::setup::MeasurementSetup;

pub use analysis::{
    completeness_residual, completeness_residual_with, lindblad_consistency_residual,
    operator_norm, phi_averaged_state, predicted_purity_deficit, purity_deficit,
    robinet_average_difference, trace_corrected_purity_deficit, CompletenessOptions,
    MIN_QUAD_ORDER,
};
pub use superop::{
    apply_superoperator_phi, apply_superoperator_phi_with, error_superoperator_faucet,
    lc_anticommutator, lc_commutator, lindbladian, measurement_superoperator, NEGATIVITY_TOL,
};
pub use table::{table1_term, table_cells_for, TableCell, TableColumn};

/// Squared norm below which a record is treated as impossible.
pub const MIN_RECORD_WEIGHT: f64 = 1e-30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("map {0} does not use the phi record, but phi = {1}")]
    PhiNotUsed(MapKind, f64),
    #[error("pure-state map {0} requires unit efficiency (eta = {1})")]
    InefficientPureMap(MapKind, f64),
    #[error("bin width must be positive, got {0}")]
    NonPositiveBin(f64),
    #[error("Table I has no cell for column {column:?} at order {twice_order}/2")]
    UnknownCell {
        column: TableColumn,
        twice_order: u8,
    },
    #[error("record has negligible probability weight ({0:e})")]
    ImpossibleRecord(f64),
    #[error("updated density matrix has eigenvalue {0:e}; step size too large")]
    NegativeEigenvalue(f64),
    #[error("quadrature under-resolved: order {order} gives {coarse:e}, order {fine_order} gives {fine:e}")]
    QuadratureUnderResolved {
        order: usize,
        fine_order: usize,
        coarse: f64,
        fine: f64,
    },
    #[error("quadrature order {0} below the minimum of 20")]
    QuadratureOrderTooLow(usize),
    #[error("{0} unmonitored Lindblad channel(s) are not described by the Kraus operators")]
    UnmonitoredChannels(usize),
    #[error("density matrix must be Hermitian with unit trace")]
    InvalidDensityMatrix,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// The conditional maps compared throughout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MapKind {
    Ito,
    RouchonRalph,
    Wonglakhon,
    /// Robinet map truncated at `(Δt)²`.
    RobinetTruncated,
    /// Two-record map conditioned on `(I, phi)`.
    Phi,
}

impl MapKind {
    pub const ALL: [MapKind; 5] = [
        MapKind::Ito,
        MapKind::RouchonRalph,
        MapKind::Wonglakhon,
        MapKind::RobinetTruncated,
        MapKind::Phi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MapKind::Ito => "ito",
            MapKind::RouchonRalph => "rouchon-ralph",
            MapKind::Wonglakhon => "wonglakhon",
            MapKind::RobinetTruncated => "robinet",
            MapKind::Phi => "phi",
        }
    }

    pub fn uses_phi(self) -> bool {
        matches!(self, MapKind::Phi)
    }
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unknown map kind `{0}`")]
pub struct UnknownMapKind(pub String);

impl FromStr for MapKind {
    type Err = UnknownMapKind;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        let kind = match key.as_str() {
            "ito" | "i" => MapKind::Ito,
            "rouchon-ralph" | "rouchon_ralph" | "rr" | "r" => MapKind::RouchonRalph,
            "wonglakhon" | "w" => MapKind::Wonglakhon,
            "robinet" | "faucet" | "robinet-truncated" => MapKind::RobinetTruncated,
            "phi" => MapKind::Phi,
            _ => return Err(UnknownMapKind(s.to_string())),
        };
        Ok(kind)
    }
}

/// One Δt bin of coarse-grained measurement data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinnedRecord {
    /// Dimensionless binned current, `I = √Δt · Y`.
    pub i: f64,
    /// Dimensionless linearly weighted record, `phi = 2√3 Δt^{-3/2} Z`.
    pub phi: f64,
    /// Bin start time.
    pub t: f64,
    pub dt_bin: f64,
}

impl BinnedRecord {
    pub fn new(i: f64, phi: f64, t: f64, dt_bin: f64) -> Result<Self, MapError> {
        if !(dt_bin > 0.0 && dt_bin.is_finite()) {
            return Err(MapError::NonPositiveBin(dt_bin));
        }
        Ok(Self { i, phi, t, dt_bin })
    }

    /// Record for the single-record maps.
    pub fn current_only(i: f64, t: f64, dt_bin: f64) -> Result<Self, MapError> {
        Self::new(i, 0.0, t, dt_bin)
    }

    /// Mean current over the bin, `Y = I / √Δt`.
    pub fn y(&self) -> f64 {
        self.i / self.dt_bin.sqrt()
    }

    /// `Z = ∫ y_s (s - t - Δt/2) ds = phi · Δt^{3/2} / (2√3)`.
    pub fn z(&self) -> f64 {
        self.phi * self.dt_bin.powf(1.5) / (2.0 * 3f64.sqrt())
    }

    pub fn from_yz(y: f64, z: f64, t: f64, dt_bin: f64) -> Result<Self, MapError> {
        let i = y * dt_bin.sqrt();
        let phi = 2.0 * 3f64.sqrt() * z / dt_bin.powf(1.5);
        Self::new(i, phi, t, dt_bin)
    }

    /// Same bin with the phi record dropped.
    pub fn without_phi(&self) -> Self {
        Self { phi: 0.0, ..*self }
    }

    /// The record a given map consumes.
    pub fn for_kind(&self, kind: MapKind) -> Self {
        if kind.uses_phi() {
            *self
        } else {
            self.without_phi()
        }
    }
}

/// Ostensible density of `I`.
pub fn ostensible_density_i(i: f64) -> f64 {
    standard_normal_density(i)
}

/// Ostensible density of `phi`.
pub fn ostensible_density_phi(phi: f64) -> f64 {
    standard_normal_density(phi)
}

/// Options for [`build_map_with`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MapOptions {
    /// Left-multiply the single-record maps by `1 - iHΔt - H²Δt²/2`.
    /// The single-record maps are otherwise built with `H = 0`.
    pub hamiltonian_prefactor: bool,
}

/// Operator products shared by all map constructions.
#[derive(Clone, Debug)]
pub(crate) struct CouplingOps {
    pub c: CMatrix,
    pub cd: CMatrix,
    pub cdc: CMatrix,
    pub c2: CMatrix,
    pub c3: CMatrix,
    pub c4: CMatrix,
    pub h: CMatrix,
}

impl CouplingOps {
    pub fn new(c: &CMatrix, h: &CMatrix) -> Self {
        let cd = c.adjoint();
        let cdc = &cd * c;
        let c2 = c * c;
        let c3 = &c2 * c;
        let c4 = &c3 * c;
        Self {
            c: c.clone(),
            cd,
            cdc,
            c2,
            c3,
            c4,
            h: h.clone(),
        }
    }

    /// `c†c³ + c c†c² + c²c†c`
    pub fn robinet_mixed(&self) -> CMatrix {
        let a = &self.cd * &self.c3;
        let b = &(&self.c * &self.cd) * &self.c2;
        let d = &self.c2 * &self.cdc;
        &(&a + &b) + &d
    }

    /// `iH + c†c/2`
    pub fn effective_drift(&self) -> CMatrix {
        &self.h.scale(Complex::new(0.0, 1.0)) + &self.cdc.scale_re(0.5)
    }
}

fn check_step(setup: &MeasurementSetup, dt: f64) {
    let stiffness = dt * setup.coupling_rate();
    if stiffness > 1.0 {
        log::warn!("Δt·‖c‖² = {stiffness:.3} exceeds 1; finite-Δt expansions are unreliable");
    }
}

fn validate(kind: MapKind, setup: &MeasurementSetup, rec: &BinnedRecord) -> Result<(), MapError> {
    if !(rec.dt_bin > 0.0 && rec.dt_bin.is_finite()) {
        return Err(MapError::NonPositiveBin(rec.dt_bin));
    }
    if !kind.uses_phi() && rec.phi != 0.0 {
        return Err(MapError::PhiNotUsed(kind, rec.phi));
    }
    if !kind.uses_phi() && setup.eta() < 1.0 {
        return Err(MapError::InefficientPureMap(kind, setup.eta()));
    }
    Ok(())
}

fn hamiltonian_prefactor(h: &CMatrix, dt: f64) -> CMatrix {
    let d = h.dim();
    let mut p = CMatrix::identity(d);
    p.add_scaled(Complex::new(0.0, -dt), h);
    p.add_scaled(Complex::new(-0.5 * dt * dt, 0.0), &(h * h));
    p
}

/// Measurement operator `M_A` for one record, with the single-record maps
/// built under the `H = 0` convention.
pub fn build_map(
    kind: MapKind,
    setup: &MeasurementSetup,
    rec: &BinnedRecord,
) -> Result<CMatrix, MapError> {
    build_map_with(kind, setup, rec, MapOptions::default())
}

pub fn build_map_with(
    kind: MapKind,
    setup: &MeasurementSetup,
    rec: &BinnedRecord,
    opts: MapOptions,
) -> Result<CMatrix, MapError> {
    validate(kind, setup, rec)?;
    check_step(setup, rec.dt_bin);
    let dt = rec.dt_bin;
    let i = rec.i;
    let sq = dt.sqrt();
    let dt32 = dt * sq;
    let d = setup.dim();
    let one = CMatrix::identity(d);

    if kind == MapKind::Phi {
        let c = setup.c().scale_re(setup.eta().sqrt());
        let ops = CouplingOps::new(&c, setup.h());
        let drift = ops.effective_drift();
        let i_unit = Complex::new(0.0, 1.0);
        // -Δt/2 [c†c - c²(I²-1) + 2iH]: the Hamiltonian enters as -iHΔt.
        let mut bracket = ops.cdc.clone();
        bracket.add_scaled(Complex::new(-(i * i - 1.0), 0.0), &ops.c2);
        bracket.add_scaled(i_unit * 2.0, &ops.h);
        let mut stoch = anticommutator(&ops.c, &drift)?.scale_re(i);
        stoch.add_scaled(
            Complex::new(rec.phi / 3f64.sqrt(), 0.0),
            &commutator(&ops.c, &drift)?,
        );
        stoch.add_scaled(Complex::new(-(i * i * i - 3.0 * i) / 3.0, 0.0), &ops.c3);
        let half_cdc = ops.cdc.scale_re(0.5);
        let det2 = &(&half_cdc * &half_cdc) - &(&ops.h * &ops.h);

        let mut m = one;
        m.add_scaled(Complex::new(i * sq, 0.0), &ops.c);
        m.add_scaled(Complex::new(-0.5 * dt, 0.0), &bracket);
        m.add_scaled(Complex::new(-0.5 * dt32, 0.0), &stoch);
        m.add_scaled(Complex::new(0.5 * dt * dt, 0.0), &det2);
        return Ok(m);
    }

    let ops = CouplingOps::new(setup.c(), setup.h());
    // Itô: 1 + I c √Δt - c†c Δt / 2
    let mut m = one;
    m.add_scaled(Complex::new(i * sq, 0.0), &ops.c);
    m.add_scaled(Complex::new(-0.5 * dt, 0.0), &ops.cdc);
    if kind != MapKind::Ito {
        // Rouchon-Ralph: + c²(I²-1)Δt/2
        m.add_scaled(Complex::new(0.5 * (i * i - 1.0) * dt, 0.0), &ops.c2);
    }
    if matches!(kind, MapKind::Wonglakhon | MapKind::RobinetTruncated) {
        // Wonglakhon: - (I/4) Δt^{3/2} {c, c†c} + Δt² (c†c)² / 8
        m.add_scaled(
            Complex::new(-0.25 * i * dt32, 0.0),
            &anticommutator(&ops.c, &ops.cdc)?,
        );
        m.add_scaled(Complex::new(dt * dt / 8.0, 0.0), &(&ops.cdc * &ops.cdc));
    }
    if kind == MapKind::RobinetTruncated {
        let h3 = i * i * i - 3.0 * i;
        let h4 = i.powi(4) - 6.0 * i * i + 3.0;
        m.add_scaled(Complex::new(dt32 / 6.0 * h3, 0.0), &ops.c3);
        let mut quad = ops.c4.scale_re(0.5 * h4);
        quad.add_scaled(Complex::new(-(i * i - 1.0), 0.0), &ops.robinet_mixed());
        m.add_scaled(Complex::new(dt * dt / 12.0, 0.0), &quad);
    }
    if opts.hamiltonian_prefactor && setup.has_hamiltonian() {
        m = &hamiltonian_prefactor(setup.h(), dt) * &m;
    }
    Ok(m)
}

/// A map with its record-independent operator coefficients precomputed:
/// `M(I, phi) = Σ_p I^p A_p + phi B`.
#[derive(Clone, Debug)]
pub struct PreparedMap {
    kind: MapKind,
    dt: f64,
    coeffs: Vec<CMatrix>,
    phi_coeff: Option<CMatrix>,
}

impl PreparedMap {
    pub fn new(kind: MapKind, setup: &MeasurementSetup, dt: f64) -> Result<Self, MapError> {
        Self::with_options(kind, setup, dt, MapOptions::default())
    }

    pub fn with_options(
        kind: MapKind,
        setup: &MeasurementSetup,
        dt: f64,
        opts: MapOptions,
    ) -> Result<Self, MapError> {
        validate(
            kind,
            setup,
            &BinnedRecord {
                i: 0.0,
                phi: 0.0,
                t: 0.0,
                dt_bin: dt,
            },
        )?;
        check_step(setup, dt);
        let d = setup.dim();
        let sq = dt.sqrt();
        let dt32 = dt * sq;
        let dt2 = dt * dt;
        let zero = CMatrix::zeros(d);
        let mut a = vec![zero.clone(); 5];
        let r = |x: f64| Complex::new(x, 0.0);

        let c = if kind == MapKind::Phi {
            setup.c().scale_re(setup.eta().sqrt())
        } else {
            setup.c().clone()
        };
        let ops = CouplingOps::new(&c, setup.h());

        a[0] = CMatrix::identity(d);
        a[0].add_scaled(r(-0.5 * dt), &ops.cdc);
        a[1].add_scaled(r(sq), &ops.c);
        let mut phi_coeff = None;

        if kind != MapKind::Ito {
            a[0].add_scaled(r(-0.5 * dt), &ops.c2);
            a[2].add_scaled(r(0.5 * dt), &ops.c2);
        }
        match kind {
            MapKind::Ito | MapKind::RouchonRalph => {}
            MapKind::Wonglakhon | MapKind::RobinetTruncated => {
                a[1].add_scaled(r(-0.25 * dt32), &anticommutator(&ops.c, &ops.cdc)?);
                a[0].add_scaled(r(dt2 / 8.0), &(&ops.cdc * &ops.cdc));
                if kind == MapKind::RobinetTruncated {
                    // (Δt^{3/2}/6)(I³ - 3I)c³
                    a[3].add_scaled(r(dt32 / 6.0), &ops.c3);
                    a[1].add_scaled(r(-0.5 * dt32), &ops.c3);
                    // (Δt²/24)(I⁴ - 6I² + 3)c⁴ - (Δt²/12)(I² - 1)Q
                    let q = ops.robinet_mixed();
                    a[4].add_scaled(r(dt2 / 24.0), &ops.c4);
                    a[2].add_scaled(r(-dt2 / 4.0), &ops.c4);
                    a[0].add_scaled(r(dt2 / 8.0), &ops.c4);
                    a[2].add_scaled(r(-dt2 / 12.0), &q);
                    a[0].add_scaled(r(dt2 / 12.0), &q);
                }
            }
            MapKind::Phi => {
                let drift = ops.effective_drift();
                a[0].add_scaled(Complex::new(0.0, -dt), &ops.h);
                let half_cdc = ops.cdc.scale_re(0.5);
                a[0].add_scaled(r(0.5 * dt2), &(&half_cdc * &half_cdc));
                a[0].add_scaled(r(-0.5 * dt2), &(&ops.h * &ops.h));
                a[1].add_scaled(r(-0.5 * dt32), &anticommutator(&ops.c, &drift)?);
                a[3].add_scaled(r(dt32 / 6.0), &ops.c3);
                a[1].add_scaled(r(-0.5 * dt32), &ops.c3);
                phi_coeff = Some(commutator(&ops.c, &drift)?.scale_re(-0.5 * dt32 / 3f64.sqrt()));
            }
        }
        if kind != MapKind::Phi && opts.hamiltonian_prefactor && setup.has_hamiltonian() {
            let p = hamiltonian_prefactor(setup.h(), dt);
            for m in &mut a {
                *m = &p * &*m;
            }
        }
        while a.len() > 1 && a.last().is_some_and(|m| m.max_abs_entry() == 0.0) {
            a.pop();
        }
        Ok(Self {
            kind,
            dt,
            coeffs: a,
            phi_coeff,
        })
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn eval(&self, i: f64, phi: f64) -> CMatrix {
        let mut m = self.coeffs[0].clone();
        let mut ip = 1.0;
        for a in &self.coeffs[1..] {
            ip *= i;
            m.add_scaled(Complex::new(ip, 0.0), a);
        }
        if let Some(b) = &self.phi_coeff {
            m.add_scaled(Complex::new(phi, 0.0), b);
        }
        m
    }

    /// Writes `M(I, phi)|ψ⟩` into `out` and returns its squared norm.
    /// `tmp` is scratch of the same length.
    #[inline]
    pub fn apply_into(
        &self,
        i: f64,
        phi: f64,
        psi: &[Complex],
        out: &mut [Complex],
        tmp: &mut [Complex],
    ) -> f64 {
        self.coeffs[0].apply_into(psi, out);
        let mut ip = 1.0;
        for a in &self.coeffs[1..] {
            ip *= i;
            a.apply_into(psi, tmp);
            for (o, t) in out.iter_mut().zip(tmp.iter()) {
                *o += *t * ip;
            }
        }
        if let Some(b) = &self.phi_coeff {
            b.apply_into(psi, tmp);
            for (o, t) in out.iter_mut().zip(tmp.iter()) {
                *o += *t * phi;
            }
        }
        out.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Normalised post-measurement state and record weight.
    pub fn apply(
        &self,
        rec: &BinnedRecord,
        psi: &StateVector,
    ) -> Result<(StateVector, f64), MapError> {
        let d = psi.dim();
        if d != self.coeffs[0].dim() {
            return Err(LinalgError::DimensionMismatch {
                left: self.coeffs[0].dim(),
                right: d,
            }
            .into());
        }
        let phi = if self.kind.uses_phi() { rec.phi } else { 0.0 };
        let mut out = vec![Complex::new(0.0, 0.0); d];
        let mut tmp = vec![Complex::new(0.0, 0.0); d];
        let w = self.apply_into(rec.i, phi, psi.as_slice(), &mut out, &mut tmp);
        finish_pure(out, w)
    }
}

fn finish_pure(amps: Vec<Complex>, weight: f64) -> Result<(StateVector, f64), MapError> {
    if !(weight >= MIN_RECORD_WEIGHT) {
        return Err(MapError::ImpossibleRecord(weight));
    }
    let mut psi = StateVector::new(amps)?;
    psi.normalize()?;
    Ok((psi, weight))
}

/// `(M|ψ⟩/‖M|ψ⟩‖, ⟨ψ|M†M|ψ⟩)`.
pub fn apply_pure_map(m: &CMatrix, psi: &StateVector) -> Result<(StateVector, f64), MapError> {
    let out = m.apply(psi)?;
    let w = out.norm_sqr();
    finish_pure(out.as_slice().to_vec(), w)
}
