use serde::{Deserialize, Serialize};

use crate::budget::{sentinel, Component, Node, NodePowerTable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellDeviation {
    pub node: Node,
    pub component: Component,
    #[serde(with = "sentinel")]
    pub measured_dbm: f64,
    #[serde(with = "sentinel")]
    pub analytic_dbm: f64,
    /// `|measured − analytic|`; zero when both are absent, infinite when
    /// exactly one is.
    #[serde(with = "sentinel")]
    pub deviation_db: f64,
    pub tolerance_db: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableComparison {
    pub cells: Vec<CellDeviation>,
}

impl TableComparison {
    pub fn all_pass(&self) -> bool {
        self.cells.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellDeviation> {
        self.cells.iter().filter(|c| !c.pass)
    }

    pub fn max_deviation_db(&self, component: Component) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.component == component)
            .map(|c| c.deviation_db)
            .fold(0.0, f64::max)
    }
}

/// Cell-wise comparison with one tolerance for every cell.
pub fn compare_with_budget(
    measured: &NodePowerTable,
    analytic: &NodePowerTable,
    tol_db: f64,
) -> Result<TableComparison> {
    compare_with_budget_by(measured, analytic, |_| tol_db)
}

/// Cell-wise comparison with a per-component tolerance.
pub fn compare_with_budget_by(
    measured: &NodePowerTable,
    analytic: &NodePowerTable,
    tol_db: impl Fn(Component) -> f64,
) -> Result<TableComparison> {
    let m: Vec<Node> = measured.nodes().collect();
    let a: Vec<Node> = analytic.nodes().collect();
    if m != a {
        return Err(Error::SchemaMismatch(format!(
            "measured nodes {m:?} vs analytic nodes {a:?}"
        )));
    }
    let mut cells = Vec::with_capacity(m.len() * Component::ALL.len());
    for (rm, ra) in measured.rows.iter().zip(&analytic.rows) {
        for c in Component::ALL {
            let (x, y) = (rm.powers.get(c), ra.powers.get(c));
            let deviation_db = if x == f64::NEG_INFINITY && y == f64::NEG_INFINITY {
                0.0
            } else {
                (x - y).abs()
            };
            let tolerance_db = tol_db(c);
            cells.push(CellDeviation {
                node: rm.node,
                component: c,
                measured_dbm: x,
                analytic_dbm: y,
                deviation_db,
                tolerance_db,
                pass: deviation_db <= tolerance_db,
            });
        }
    }
    Ok(TableComparison { cells })
}
