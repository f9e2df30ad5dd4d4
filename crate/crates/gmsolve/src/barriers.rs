//! Comparison barriers for the singular system and the constants that scale
//! them into trapping boxes.
//!
//! Two auxiliary Dirichlet problems per component:
//!
//! ```text
//!   -Δ y_i + y_i = d(x)^(a_i - b_i)                       in Ω
//!   -Δ z_i + z_i = d(x)^(a_i - b_i)  off the layer, -1 inside it
//! ```
//!
//! with the layer Ω_δ = {d < δ}. The pair brackets the boundary distance,
//! c^{-1} d <= z_i <= y_i <= c d, for a constant c > 1 that this module
//! computes rather than assumes. A second constant C scales the pair into
//! the trapping box [C^{-1}z_1, Cy_1] x [C^{-1}z_2, Cy_2]: `calibrate_big_c`
//! certifies, node by node, that C^{-1}z_i is a subsolution and Cy_i a
//! supersolution of its equation against every field pair inside the box
//! (extremal substitution, split on the sign of a_i), and fails loudly when
//! the grid or the layer width makes no such constant exist.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{Field, Grid, GridError};
use crate::nonlinearity::Exponents;
use crate::operator::{EllipticOperator, OperatorError};

#[derive(Debug, Error)]
pub enum BarrierError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solve(#[from] OperatorError),
    #[error("z_{component} is nonpositive at node {node} (value {value:.3e}); the layer width delta is too large for this grid")]
    NonPositiveZ {
        component: usize,
        node: usize,
        value: f64,
    },
    #[error("trapping-box calibration failed at cap C = {cap:.3e}: worst slack {slack:.3e} at node {node} (chain {chain})")]
    CalibrationFailed {
        cap: f64,
        node: usize,
        slack: f64,
        chain: String,
    },
}

/// The barrier quadruple with its calibrated constants.
#[derive(Debug)]
pub struct BarrierSet {
    pub y1: Field,
    pub y2: Field,
    pub z1: Field,
    pub z2: Field,
    /// Ordering constant: c^{-1} d <= z_i <= y_i <= c d nodewise.
    pub c: f64,
    /// Trapping-box scale certified by `calibrate_big_c`.
    pub big_c: f64,
    pub delta: f64,
}

/// Outcome of one nodewise certification sweep at a fixed C.
#[derive(Debug, Clone, Serialize)]
pub struct Certification {
    pub big_c: f64,
    pub pass: bool,
    /// Smallest inequality margin across all four chains and nodes.
    pub worst_slack: f64,
    pub worst_node: usize,
    pub worst_chain: String,
}

fn singular_rhs(grid: &Arc<Grid>, exponent: f64) -> Field {
    let mut rhs = Field::zeros(grid);
    for &id in &grid.interior_ids {
        rhs.values_mut()[id] = grid.d[id].powf(exponent);
    }
    rhs
}

fn layered_rhs(grid: &Arc<Grid>, exponent: f64, delta: f64) -> Result<Field, GridError> {
    let mask = grid.boundary_layer_mask(delta)?;
    let mut rhs = singular_rhs(grid, exponent);
    for &id in &grid.interior_ids {
        if mask[id] {
            rhs.values_mut()[id] = -1.0;
        }
    }
    Ok(rhs)
}

/// Solves the upper barrier problem for component i.
///
/// The right-hand side d^(a_i-b_i) is evaluated nodewise; interior nodes
/// have d >= h, so the singular exponent stays finite on the grid.
pub fn solve_y(op: &EllipticOperator, exps: &Exponents, i: usize) -> Result<Field, BarrierError> {
    let (a, b) = exps.pair(i);
    let rhs = singular_rhs(op.grid(), a - b);
    Ok(op.solve(&rhs)?)
}

/// Solves the lower barrier problem for component i (right-hand side -1 on
/// the layer). Errors if the result is nonpositive anywhere on the interior,
/// which means delta is too large for this grid.
pub fn solve_z(
    op: &EllipticOperator,
    exps: &Exponents,
    delta: f64,
    i: usize,
) -> Result<Field, BarrierError> {
    let (a, b) = exps.pair(i);
    let rhs = layered_rhs(op.grid(), a - b, delta)?;
    let z = op.solve(&rhs)?;
    for &id in &op.grid().interior_ids {
        let v = z.values()[id];
        if v <= 0.0 {
            return Err(BarrierError::NonPositiveZ {
                component: i,
                node: id,
                value: v,
            });
        }
    }
    Ok(z)
}

/// Smallest constant (plus a guard) making the discrete ordering
/// c^{-1} d <= z <= y <= c d hold nodewise for one barrier pair.
pub fn estimate_c(y: &Field, z: &Field, d: &Field) -> Result<f64, BarrierError> {
    let grid = y.grid();
    let mut c: f64 = 1.0 + 1e-12;
    for &id in &grid.interior_ids {
        let zv = z.values()[id];
        if zv <= 0.0 {
            return Err(BarrierError::NonPositiveZ {
                component: 0,
                node: id,
                value: zv,
            });
        }
        let dv = d.values()[id];
        c = c.max(y.values()[id] / dv).max(dv / zv);
    }
    Ok(c)
}

struct Chains<'a> {
    grid: &'a Arc<Grid>,
    exps: &'a Exponents,
    y1: &'a Field,
    y2: &'a Field,
    z1: &'a Field,
    z2: &'a Field,
    rhs_z: [Field; 2],
    rhs_y: [Field; 2],
}

impl<'a> Chains<'a> {
    /// Checks the four sub/supersolution chains at a given C and returns the
    /// worst margin. For each component i:
    ///
    ///   lower:  C^{-1} rhs_z_i  <=  min over the box of u^{a_i}/v^{b_i}
    ///   upper:  C      rhs_y_i  >=  max over the box of u^{a_i}/v^{b_i}
    ///
    /// where the box extrema substitute the extremal fields, split on the
    /// sign of a_i (e.g. the minimum takes u = C^{-1}z_1 for a_i >= 0 and
    /// u = Cy_1 for a_i <= 0, always v = Cy_2).
    fn certify(&self, big_c: f64) -> Certification {
        let mut worst_slack = f64::INFINITY;
        let mut worst_node = 0;
        let mut worst_lower = true;
        let mut worst_i = 1;
        for i in [1usize, 2] {
            let (a, b) = self.exps.pair(i);
            for &id in &self.grid.interior_ids {
                let y1v = self.y1.values()[id];
                let y2v = self.y2.values()[id];
                let z1v = self.z1.values()[id];
                let z2v = self.z2.values()[id];
                let box_min = if a >= 0.0 {
                    (z1v / big_c).powf(a) / (big_c * y2v).powf(b)
                } else {
                    (big_c * y1v).powf(a) / (big_c * y2v).powf(b)
                };
                let box_max = if a >= 0.0 {
                    (big_c * y1v).powf(a) / (z2v / big_c).powf(b)
                } else {
                    (z1v / big_c).powf(a) / (z2v / big_c).powf(b)
                };
                let lower_slack = box_min - self.rhs_z[i - 1].values()[id] / big_c;
                let upper_slack = big_c * self.rhs_y[i - 1].values()[id] - box_max;
                if lower_slack < worst_slack {
                    worst_slack = lower_slack;
                    worst_node = id;
                    worst_lower = true;
                    worst_i = i;
                }
                if upper_slack < worst_slack {
                    worst_slack = upper_slack;
                    worst_node = id;
                    worst_lower = false;
                    worst_i = i;
                }
            }
        }
        Certification {
            big_c,
            pass: worst_slack >= 0.0,
            worst_slack,
            worst_node,
            worst_chain: format!(
                "{} i={worst_i}",
                if worst_lower { "lower" } else { "upper" }
            ),
        }
    }
}

fn chains<'a>(
    grid: &'a Arc<Grid>,
    exps: &'a Exponents,
    y1: &'a Field,
    y2: &'a Field,
    z1: &'a Field,
    z2: &'a Field,
    delta: f64,
) -> Result<Chains<'a>, BarrierError> {
    let e1 = exps.alpha1 - exps.beta1;
    let e2 = exps.alpha2 - exps.beta2;
    Ok(Chains {
        grid,
        exps,
        y1,
        y2,
        z1,
        z2,
        rhs_z: [layered_rhs(grid, e1, delta)?, layered_rhs(grid, e2, delta)?],
        rhs_y: [singular_rhs(grid, e1), singular_rhs(grid, e2)],
    })
}

/// Re-runs the nodewise certification sweep at an arbitrary C.
#[allow(clippy::too_many_arguments)]
pub fn certify_big_c(
    grid: &Arc<Grid>,
    exps: &Exponents,
    y1: &Field,
    y2: &Field,
    z1: &Field,
    z2: &Field,
    delta: f64,
    big_c: f64,
) -> Result<Certification, BarrierError> {
    Ok(chains(grid, exps, y1, y2, z1, z2, delta)?.certify(big_c))
}

/// Doubling search for the trapping-box scale: starting at C = 2, returns
/// the first power-of-two C whose four chains certify nodewise. Only an
/// upper certificate is needed; certification is monotone in C, so doubling
/// suffices and minimality is not claimed.
pub fn calibrate_big_c(
    grid: &Arc<Grid>,
    exps: &Exponents,
    y1: &Field,
    y2: &Field,
    z1: &Field,
    z2: &Field,
    delta: f64,
) -> Result<(f64, Certification), BarrierError> {
    let ch = chains(grid, exps, y1, y2, z1, z2, delta)?;
    let cap = (2.0f64).powi(30);
    let mut big_c = 2.0;
    let mut last = ch.certify(big_c);
    while !last.pass {
        big_c *= 2.0;
        if big_c > cap {
            return Err(BarrierError::CalibrationFailed {
                cap,
                node: last.worst_node,
                slack: last.worst_slack,
                chain: last.worst_chain,
            });
        }
        last = ch.certify(big_c);
    }
    Ok((big_c, last))
}

impl BarrierSet {
    /// Builds the full barrier quadruple and calibrates both constants.
    pub fn build(
        op: &EllipticOperator,
        exps: &Exponents,
        delta: f64,
    ) -> Result<BarrierSet, BarrierError> {
        let grid = op.grid();
        let y1 = solve_y(op, exps, 1)?;
        let y2 = solve_y(op, exps, 2)?;
        let z1 = solve_z(op, exps, delta, 1)?;
        let z2 = solve_z(op, exps, delta, 2)?;
        let d = grid.distance_field();
        let c = estimate_c(&y1, &z1, &d)?.max(estimate_c(&y2, &z2, &d)?);
        let (big_c, _) = calibrate_big_c(grid, exps, &y1, &y2, &z1, &z2, delta)?;
        Ok(BarrierSet {
            y1,
            y2,
            z1,
            z2,
            c,
            big_c,
            delta,
        })
    }

    /// Checks the discrete ordering c^{-1} d <= z_i <= y_i <= c d at every
    /// interior node; returns the worst margin and its node.
    pub fn ordering_slack(&self) -> (f64, usize) {
        let grid = self.y1.grid();
        let mut worst = f64::INFINITY;
        let mut node = 0;
        for &id in &grid.interior_ids {
            let d = grid.d[id];
            for (y, z) in [(&self.y1, &self.z1), (&self.y2, &self.z2)] {
                let yv = y.values()[id];
                let zv = z.values()[id];
                for s in [zv - d / self.c, yv - zv, self.c * d - yv] {
                    if s < worst {
                        worst = s;
                        node = id;
                    }
                }
            }
        }
        (worst, node)
    }
}
