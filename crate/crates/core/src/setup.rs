//! Physical scenario: coupling operator, Hamiltonian, efficiency, extra
//! decoherence and initial state, plus the five benchmark presets.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::linalg::{CMatrix, LinalgError, StateVector};

const HERMITIAN_TOL: f64 = 1e-12;
const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetupError {
    #[error("Hamiltonian is not Hermitian (max |H - H†| = {0:e})")]
    NonHermitianHamiltonian(f64),
    #[error("efficiency {0} outside (0, 1]")]
    EfficiencyOutOfRange(f64),
    #[error("initial state is not normalised (norm {0})")]
    NotNormalized(f64),
    #[error("reference rate gamma must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("unknown example id `{0}`")]
    UnknownExample(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Everything needed to define the conditional dynamics of one monitored system.
#[derive(Clone, Debug)]
pub struct MeasurementSetup {
    c: CMatrix,
    h: CMatrix,
    eta: f64,
    extra_lindblads: Vec<CMatrix>,
    initial_state: StateVector,
    gamma: f64,
}

impl MeasurementSetup {
    pub fn new(
        c: CMatrix,
        h: CMatrix,
        eta: f64,
        extra_lindblads: Vec<CMatrix>,
        initial_state: StateVector,
        gamma: f64,
    ) -> Result<Self, SetupError> {
        let dim = c.dim();
        let same = |d: usize| {
            if d != dim {
                Err(LinalgError::DimensionMismatch {
                    left: dim,
                    right: d,
                })
            } else {
                Ok(())
            }
        };
        same(h.dim())?;
        same(initial_state.dim())?;
        for l in &extra_lindblads {
            same(l.dim())?;
        }
        let defect = h.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(SetupError::NonHermitianHamiltonian(defect));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(SetupError::EfficiencyOutOfRange(eta));
        }
        let norm = initial_state.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(SetupError::NotNormalized(norm));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(SetupError::NonPositiveGamma(gamma));
        }
        Ok(Self {
            c,
            h,
            eta,
            extra_lindblads,
            initial_state,
            gamma,
        })
    }

    /// Unit-efficiency measurement of `c` with no Hamiltonian and no extra channels.
    pub fn pure(c: CMatrix, initial_state: StateVector, gamma: f64) -> Result<Self, SetupError> {
        let h = CMatrix::zeros(c.dim());
        Self::new(c, h, 1.0, Vec::new(), initial_state, gamma)
    }

    pub fn dim(&self) -> usize {
        self.c.dim()
    }
    pub fn c(&self) -> &CMatrix {
        &self.c
    }
    pub fn h(&self) -> &CMatrix {
        &self.h
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn extra_lindblads(&self) -> &[CMatrix] {
        &self.extra_lindblads
    }
    pub fn initial_state(&self) -> &StateVector {
        &self.initial_state
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_initial_state(mut self, psi: StateVector) -> Result<Self, SetupError> {
        if psi.dim() != self.dim() {
            return Err(LinalgError::DimensionMismatch {
                left: self.dim(),
                right: psi.dim(),
            }
            .into());
        }
        let norm = psi.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(SetupError::NotNormalized(norm));
        }
        self.initial_state = psi;
        Ok(self)
    }

    pub fn with_eta(self, eta: f64) -> Result<Self, SetupError> {
        Self::new(
            self.c,
            self.h,
            eta,
            self.extra_lindblads,
            self.initial_state,
            self.gamma,
        )
    }

    pub fn with_hamiltonian(self, h: CMatrix) -> Result<Self, SetupError> {
        Self::new(
            self.c,
            h,
            self.eta,
            self.extra_lindblads,
            self.initial_state,
            self.gamma,
        )
    }

    pub fn with_extra_lindblads(self, extra: Vec<CMatrix>) -> Result<Self, SetupError> {
        Self::new(
            self.c,
            self.h,
            self.eta,
            extra,
            self.initial_state,
            self.gamma,
        )
    }

    /// Largest singular value of `c`, squared (the stiffness rate of the measurement).
    pub fn coupling_rate(&self) -> f64 {
        let cdc = &self.c.adjoint() * &self.c;
        crate::linalg::hermitian_eigenvalues(&cdc)
            .map(|e| e.last().copied().unwrap_or(0.0).max(0.0))
            .unwrap_or_else(|_| cdc.frobenius_norm())
    }

    pub fn has_hamiltonian(&self) -> bool {
        self.h.max_abs_entry() > 0.0
    }
}

pub fn sigma_z() -> CMatrix {
    CMatrix::diagonal(&[1.0, -1.0]).expect("static matrix")
}

/// Qubit lowering operator, mapping the excited state `|0⟩` to `|1⟩`.
pub fn sigma_minus() -> CMatrix {
    CMatrix::from_real_rows(&[[0.0, 0.0], [1.0, 0.0]]).expect("static matrix")
}

pub fn spin1_lowering() -> CMatrix {
    CMatrix::from_real_rows(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        .expect("static matrix")
}

pub fn spin1_z() -> CMatrix {
    CMatrix::diagonal(&[1.0, 0.0, -1.0]).expect("static matrix")
}

pub fn spin32_lowering() -> CMatrix {
    let r3 = 3f64.sqrt();
    CMatrix::from_real_rows(&[
        [0.0, 0.0, 0.0, 0.0],
        [r3, 0.0, 0.0, 0.0],
        [0.0, 2.0, 0.0, 0.0],
        [0.0, 0.0, r3, 0.0],
    ])
    .expect("static matrix")
}

/// Diagonal observable spanning `[-1, 1]`: σz for a qubit, Sz for spin 1.
pub fn z_observable(dim: usize) -> CMatrix {
    if dim == 1 {
        return CMatrix::identity(1);
    }
    let span = (dim - 1) as f64;
    let diag: Vec<f64> = (0..dim).map(|k| (span - 2.0 * k as f64) / span).collect();
    CMatrix::diagonal(&diag).expect("dim checked")
}

/// The five benchmark systems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExampleId {
    /// `c = √(γ/2) σz`, qubit in `|+x⟩`.
    QubitZ,
    /// `c = √γ σ-`, qubit in `|+x⟩`.
    QubitFluorescence,
    /// `c = √γ S-`, spin 1 in `|+x⟩`.
    Spin1Lowering,
    /// `c = √(γ/2) Sz`, spin 1 in `|+x⟩`.
    Spin1Z,
    /// `c = √γ L-`, spin 3/2 in `|+x⟩`.
    Spin32Lowering,
}

impl ExampleId {
    pub const ALL: [ExampleId; 5] = [
        ExampleId::QubitZ,
        ExampleId::QubitFluorescence,
        ExampleId::Spin1Lowering,
        ExampleId::Spin1Z,
        ExampleId::Spin32Lowering,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExampleId::QubitZ => "qubit-z",
            ExampleId::QubitFluorescence => "qubit-fluorescence",
            ExampleId::Spin1Lowering => "spin1-lowering",
            ExampleId::Spin1Z => "spin1-z",
            ExampleId::Spin32Lowering => "spin32-lowering",
        }
    }

    /// 1-based example number as listed in the benchmark table.
    pub fn number(self) -> usize {
        match self {
            ExampleId::QubitZ => 1,
            ExampleId::QubitFluorescence => 2,
            ExampleId::Spin1Lowering => 3,
            ExampleId::Spin1Z => 4,
            ExampleId::Spin32Lowering => 5,
        }
    }

    pub fn coupling(self, gamma: f64) -> CMatrix {
        match self {
            ExampleId::QubitZ => sigma_z().scale_re((gamma / 2.0).sqrt()),
            ExampleId::QubitFluorescence => sigma_minus().scale_re(gamma.sqrt()),
            ExampleId::Spin1Lowering => spin1_lowering().scale_re(gamma.sqrt()),
            ExampleId::Spin1Z => spin1_z().scale_re((gamma / 2.0).sqrt()),
            ExampleId::Spin32Lowering => spin32_lowering().scale_re(gamma.sqrt()),
        }
    }

    pub fn initial_state(self) -> StateVector {
        let amps: Vec<f64> = match self {
            ExampleId::QubitZ | ExampleId::QubitFluorescence => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                vec![s, s]
            }
            ExampleId::Spin1Lowering | ExampleId::Spin1Z => vec![0.5, 0.5 * 2f64.sqrt(), 0.5],
            ExampleId::Spin32Lowering => {
                let n = 1.0 / 8f64.sqrt();
                let r3 = 3f64.sqrt();
                vec![n, n * r3, n * r3, n]
            }
        };
        StateVector::from_real(&amps).expect("static state")
    }

    pub fn setup(self, gamma: f64) -> Result<MeasurementSetup, SetupError> {
        MeasurementSetup::pure(self.coupling(gamma), self.initial_state(), gamma)
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExampleId {
    type Err = SetupError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExampleId::ALL
            .into_iter()
            .find(|e| e.name() == s.trim())
            .ok_or_else(|| SetupError::UnknownExample(s.to_string()))
    }
}
