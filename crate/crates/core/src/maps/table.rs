//! Term-by-term ledger of the measurement operators (Hamiltonian set to zero,
//! unit efficiency). Each cell is returned with its `(Δt)^order` factor
//! applied, so a map is the sum of its cells.

use serde::Serialize;

use super::{BinnedRecord, CouplingOps, MapError, MapKind};
use crate::linalg::{anticommutator, commutator, CMatrix, Complex};
use crate::setup::MeasurementSetup;

/// Columns of the ledger: which maps share a term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum TableColumn {
    AllMaps,
    /// Shared by Φ, robinet, Wonglakhon and Rouchon-Ralph.
    PhiRobinetWR,
    /// Shared by Φ, robinet and Wonglakhon.
    PhiRobinetW,
    /// Shared by Φ and robinet.
    PhiRobinet,
    RobinetOnly,
    PhiOnly,
}

/// A non-empty cell: column plus twice the power of Δt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct TableCell {
    pub column: TableColumn,
    pub twice_order: u8,
}

const CELLS: [TableCell; 9] = [
    TableCell {
        column: TableColumn::AllMaps,
        twice_order: 0,
    },
    TableCell {
        column: TableColumn::AllMaps,
        twice_order: 1,
    },
    TableCell {
        column: TableColumn::AllMaps,
        twice_order: 2,
    },
    TableCell {
        column: TableColumn::PhiRobinetWR,
        twice_order: 2,
    },
    TableCell {
        column: TableColumn::PhiRobinetW,
        twice_order: 3,
    },
    TableCell {
        column: TableColumn::PhiRobinetW,
        twice_order: 4,
    },
    TableCell {
        column: TableColumn::PhiRobinet,
        twice_order: 3,
    },
    TableCell {
        column: TableColumn::RobinetOnly,
        twice_order: 4,
    },
    TableCell {
        column: TableColumn::PhiOnly,
        twice_order: 3,
    },
];

fn columns_for(kind: MapKind) -> &'static [TableColumn] {
    use TableColumn::*;
    match kind {
        MapKind::Ito => &[AllMaps],
        MapKind::RouchonRalph => &[AllMaps, PhiRobinetWR],
        MapKind::Wonglakhon => &[AllMaps, PhiRobinetWR, PhiRobinetW],
        MapKind::RobinetTruncated => &[AllMaps, PhiRobinetWR, PhiRobinetW, PhiRobinet, RobinetOnly],
        MapKind::Phi => &[AllMaps, PhiRobinetWR, PhiRobinetW, PhiRobinet, PhiOnly],
    }
}

/// Every ledger cell contributing to `kind`.
pub fn table_cells_for(kind: MapKind) -> Vec<TableCell> {
    let cols = columns_for(kind);
    CELLS
        .into_iter()
        .filter(|cell| cols.contains(&cell.column))
        .collect()
}

/// One ledger cell as a matrix, including its `(Δt)^{twice_order/2}` factor.
pub fn table1_term(
    column: TableColumn,
    twice_order: u8,
    rec: &BinnedRecord,
    setup: &MeasurementSetup,
) -> Result<CMatrix, MapError> {
    use TableColumn::*;
    let ops = CouplingOps::new(setup.c(), &CMatrix::zeros(setup.dim()));
    let i = rec.i;
    let phi = rec.phi;
    let r = |x: f64| Complex::new(x, 0.0);
    let term = match (column, twice_order) {
        (AllMaps, 0) => CMatrix::identity(setup.dim()),
        (AllMaps, 1) => ops.c.scale_re(i),
        (AllMaps, 2) => ops.cdc.scale_re(-0.5),
        (PhiRobinetWR, 2) => ops.c2.scale_re(0.5 * (i * i - 1.0)),
        (PhiRobinetW, 3) => anticommutator(&ops.c, &ops.cdc)?.scale_re(-0.25 * i),
        (PhiRobinetW, 4) => (&ops.cdc * &ops.cdc).scale_re(1.0 / 8.0),
        (PhiRobinet, 3) => ops.c3.scale_re((i * i * i - 3.0 * i) / 6.0),
        (RobinetOnly, 4) => {
            let mut m = ops.robinet_mixed().scale_re(-(i * i - 1.0) / 12.0);
            m.add_scaled(r((i.powi(4) - 6.0 * i * i + 3.0) / 24.0), &ops.c4);
            m
        }
        (PhiOnly, 3) => commutator(&ops.c, &ops.cdc)?.scale_re(-phi / (4.0 * 3f64.sqrt())),
        _ => {
            return Err(MapError::UnknownCell {
                column,
                twice_order,
            })
        }
    };
    Ok(term.scale_re(rec.dt_bin.powf(f64::from(twice_order) / 2.0)))
}
