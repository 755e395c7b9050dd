//! Algebraic and quadrature invariants of the maps for one setup.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use super::{BenchError, ExperimentConfig};
use crate::linalg::{commutator, CMatrix};
use crate::maps::{
    build_map, completeness_residual, lindblad_consistency_residual, predicted_purity_deficit,
    purity_deficit, robinet_average_difference, table1_term, table_cells_for,
    trace_corrected_purity_deficit, BinnedRecord, MapKind, PreparedMap,
};
use crate::metrics::fit_scaling;
use crate::records::RngStream;
use crate::setup::MeasurementSetup;

/// Residuals below this are treated as exactly zero, so no slope is fitted.
const EXACT_FLOOR: f64 = 1e-13;
const QUAD_ORDER: usize = 40;
const LEDGER_RECORDS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{}: {verdict} ({})", self.name, self.detail)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CheckReport {
    pub lines: Vec<CheckLine>,
}

impl CheckReport {
    pub fn failures(&self) -> usize {
        self.lines.iter().filter(|l| !l.pass).count()
    }

    pub fn line(&self, name: &str) -> Option<&CheckLine> {
        self.lines.iter().find(|l| l.name == name)
    }

    fn push(&mut self, name: &str, pass: bool, detail: String) {
        self.lines.push(CheckLine {
            name: name.to_string(),
            pass,
            detail,
        });
    }
}

/// Step sizes `γΔt` for the slope checks.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckGrid {
    pub gamma_dts: Vec<f64>,
}

impl Default for CheckGrid {
    fn default() -> Self {
        Self {
            gamma_dts: vec![1e-3, 1e-2, 1e-1],
        }
    }
}

fn random_records(kind: MapKind, seed: u64, n: usize) -> Vec<BinnedRecord> {
    let mut rng = RngStream::new(seed, kind as u64);
    (0..n)
        .map(|_| {
            let i = 1.5 * rng.standard_normal();
            let phi = if kind.uses_phi() {
                1.5 * rng.standard_normal()
            } else {
                0.0
            };
            let dt = 10f64.powf(-3.0 + 2.0 * rng.standard_normal().abs().min(1.0));
            BinnedRecord {
                i,
                phi,
                t: 0.0,
                dt_bin: dt,
            }
        })
        .collect()
}

fn is_negligible(m: &CMatrix, scale: f64) -> bool {
    m.max_abs_entry() <= 1e-14 * scale.max(1.0)
}

fn slope_line(
    report: &mut CheckReport,
    name: &str,
    dts: &[f64],
    values: &[f64],
    accept: impl Fn(f64) -> bool,
    target: &str,
) -> Result<(), BenchError> {
    if values.iter().all(|&v| v < EXACT_FLOOR) {
        report.push(
            name,
            true,
            format!("residual below {EXACT_FLOOR:e} on the whole grid"),
        );
        return Ok(());
    }
    let pts: Vec<(f64, f64)> = dts.iter().copied().zip(values.iter().copied()).collect();
    match fit_scaling(&pts) {
        Ok(fit) => report.push(
            name,
            accept(fit.slope),
            format!(
                "slope {:.3}, target {target}, values {}",
                fit.slope,
                fmt_values(values)
            ),
        ),
        Err(e) => report.push(name, false, format!("cannot fit: {e}")),
    }
    Ok(())
}

fn fmt_values(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn core<T, E: Into<crate::Error>>(r: Result<T, E>) -> Result<T, BenchError> {
    r.map_err(|e| BenchError::Core(e.into()))
}

/// Runs every invariant that applies to `setup`.
pub fn run_checks(setup: &MeasurementSetup, grid: &CheckGrid) -> Result<CheckReport, BenchError> {
    let mut report = CheckReport::default();
    let gamma = setup.gamma();
    let dts: Vec<f64> = grid.gamma_dts.iter().map(|g| g / gamma).collect();
    // Single-record maps and the term ledger use unit efficiency and H = 0.
    let bare = core(
        setup
            .clone()
            .with_eta(1.0)
            .and_then(|s| s.with_hamiltonian(CMatrix::zeros(setup.dim()))),
    )?;
    let c = bare.c();
    let c_scale = c.max_abs_entry().max(1.0);

    // Term ledger.
    let mut worst = 0.0f64;
    for kind in MapKind::ALL {
        for rec in random_records(kind, 0x7ab1e, LEDGER_RECORDS) {
            let m = core(build_map(kind, &bare, &rec))?;
            let mut sum = CMatrix::zeros(bare.dim());
            for cell in table_cells_for(kind) {
                sum += &core(table1_term(cell.column, cell.twice_order, &rec, &bare))?;
            }
            worst = worst.max(m.max_abs_diff(&sum) / m.max_abs_entry().max(1.0));
        }
    }
    report.push(
        "Table I ledger",
        worst <= 1e-14,
        format!("max relative entry diff {worst:.1e}"),
    );

    // Operator identities for special coupling classes.
    let c2 = c * c;
    let c3 = &c2 * c;
    if is_negligible(&c2, c_scale.powi(2)) {
        for (a, b, name) in [
            (MapKind::Ito, MapKind::RouchonRalph, "M_I == M_R"),
            (
                MapKind::Wonglakhon,
                MapKind::RobinetTruncated,
                "M_W == M_robinet",
            ),
        ] {
            let mut diff = 0.0f64;
            for rec in random_records(a, 0x1d, LEDGER_RECORDS) {
                let ma = core(build_map(a, &bare, &rec))?;
                let mb = core(build_map(b, &bare, &rec))?;
                diff = diff.max(ma.max_abs_diff(&mb));
            }
            report.push(name, diff <= 1e-15, format!("max entry diff {diff:e}"));
        }
    } else if is_negligible(&c3, c_scale.powi(3)) {
        let rec0 = BinnedRecord {
            i: 0.7,
            phi: 0.0,
            t: 0.0,
            dt_bin: 1.0,
        };
        let mut scaled = Vec::new();
        for &dt in &dts {
            let rec = BinnedRecord { dt_bin: dt, ..rec0 };
            let d = &core(build_map(MapKind::Wonglakhon, &bare, &rec))?
                - &core(build_map(MapKind::RobinetTruncated, &bare, &rec))?;
            scaled.push(d.scale_re(1.0 / (dt * dt)));
        }
        let spread = scaled
            .iter()
            .map(|m| m.max_abs_diff(&scaled[0]))
            .fold(0.0, f64::max);
        let size = scaled[0].max_abs_entry();
        report.push(
            "M_W - M_robinet is pure (dt)^2",
            spread <= 1e-9 * size.max(1.0),
            format!("spread of difference/dt^2 {spread:.1e} against size {size:.3e}"),
        );
    }
    let normal = commutator(c, &c.adjoint()).map_err(crate::Error::from)?;
    let h_comm = commutator(setup.h(), setup.c()).map_err(crate::Error::from)?;
    if is_negligible(&normal, c_scale.powi(2))
        && is_negligible(&h_comm, c_scale * setup.h().max_abs_entry())
    {
        let mut diff = 0.0f64;
        for &dt in &dts {
            let map = core(PreparedMap::new(MapKind::Phi, setup, dt))?;
            for i in [-1.3, 0.0, 0.4, 2.1] {
                diff = diff.max(map.eval(i, 1.0).max_abs_diff(&map.eval(i, 0.0)));
            }
        }
        report.push(
            "Phi phi-independence",
            diff <= 1e-15,
            format!("max d/dphi entry {diff:e}"),
        );
    }

    // Completeness.
    let ito: Vec<f64> = core(
        dts.iter()
            .map(|&dt| completeness_residual(MapKind::Ito, &bare, dt, QUAD_ORDER))
            .collect(),
    )?;
    slope_line(
        &mut report,
        "Ito completeness slope",
        &grid.gamma_dts,
        &ito,
        |s| (s - 2.0).abs() <= 0.1,
        "2 +- 0.1",
    )?;
    let phi: Vec<f64> = core(
        dts.iter()
            .map(|&dt| completeness_residual(MapKind::Phi, setup, dt, QUAD_ORDER))
            .collect(),
    )?;
    slope_line(
        &mut report,
        "Phi completeness slope",
        &grid.gamma_dts,
        &phi,
        |s| s > 2.0,
        "> 2",
    )?;

    let rho0 = setup.initial_state().projector();
    let robinet: Vec<f64> = core(
        dts.iter()
            .map(|&dt| robinet_average_difference(&bare, &rho0, dt, QUAD_ORDER))
            .collect(),
    )?;
    slope_line(
        &mut report,
        "robinet terms average out",
        &grid.gamma_dts,
        &robinet,
        |s| s > 2.0,
        "> 2",
    )?;

    if setup.eta() == 1.0 && setup.extra_lindblads().is_empty() {
        let lind: Vec<f64> = core(
            dts.iter()
                .map(|&dt| lindblad_consistency_residual(setup, &rho0, dt, QUAD_ORDER))
                .collect(),
        )?;
        slope_line(
            &mut report,
            "Lindblad consistency slope",
            &grid.gamma_dts,
            &lind,
            |s| s > 2.0,
            "> 2",
        )?;

        let psi = setup.initial_state();
        let measured: Vec<f64> = core(
            dts.iter()
                .map(|&dt| purity_deficit(setup, psi, 0.0, dt, QUAD_ORDER))
                .collect(),
        )?;
        let predicted: Vec<f64> = dts
            .iter()
            .map(|&dt| trace_corrected_purity_deficit(setup, &rho0, dt))
            .collect();
        if predicted.iter().all(|&p| p < 1e-20) {
            let worst = measured.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            report.push(
                "purity deficit vanishes",
                worst < 1e-12,
                format!("max deficit {worst:.1e}"),
            );
        } else {
            let mid = dts.len() / 2;
            let ratio = measured[mid] / predicted[mid];
            report.push(
                "purity deficit magnitude",
                (ratio - 1.0).abs() <= 0.1,
                format!(
                    "measured/predicted {ratio:.4} at gamma*dt = {} (uncorrected prediction {:.3e})",
                    grid.gamma_dts[mid],
                    predicted_purity_deficit(setup, &rho0, dts[mid])
                ),
            );
            slope_line(
                &mut report,
                "purity deficit slope",
                &grid.gamma_dts,
                &measured,
                |s| (s - 3.0).abs() <= 0.15,
                "3 +- 0.15",
            )?;
        }
    }
    Ok(report)
}

/// Runs the checks for a configuration, printing one line per check.
/// Any failure yields [`BenchError::InvariantFailure`].
pub fn cmd_check(cfg: &ExperimentConfig, out: &mut impl Write) -> Result<CheckReport, BenchError> {
    let report = run_checks(&cfg.setup, &CheckGrid::default())?;
    for line in &report.lines {
        writeln!(out, "{line}").map_err(|source| BenchError::Io {
            path: "<stdout>".into(),
            source,
        })?;
    }
    match report.failures() {
        0 => Ok(report),
        n => Err(BenchError::InvariantFailure(n)),
    }
}
