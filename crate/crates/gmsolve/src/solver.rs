//! Fixed points of (u, v) -> (-Δ+I)^{-1} F(u, v) on three branches, plus the
//! epsilon continuation that drives the regularized system to the singular
//! limit.
//!
//! The constant-sign branches run a damped Picard iteration through the
//! resolvent, clipped into their trapping boxes while in transit; the boxes
//! are forward-invariant at the fixed point, so the clip goes quiet at
//! convergence and the reported residual is that of the unclipped equation.
//!
//! The sign-changing branch cannot use one global resolvent iteration: the
//! two lobes couple through the resolvent's nonlocal tails and the iterate
//! drifts onto a constant-sign branch (the crossing is only neutrally
//! pinned). Instead the seed's sign pattern partitions the interior into
//! lobes separated by exact-zero nodes; each lobe is a positive problem for
//! the component magnitudes, solved with the lobe-restricted resolvent, and
//! the signed glue satisfies the full discrete system: the stencil at a
//! separator sees only the zero value there, and the right-hand side
//! vanishes with sgn(0) = 0. Every converged nodal result is re-verified
//! against the full operator with the true sign-carrying right-hand side.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::barriers::BarrierSet;
use crate::grid::{Field, Grid, NormKind};
use crate::nonlinearity::{self, Exponents, NonlinearityError};
use crate::operator::{EllipticOperator, OperatorError};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Nonlinearity(#[from] NonlinearityError),
    #[error("branch {branch:?} did not converge: update {update:.3e}, residual {residual:.3e} after {iterations} iterations")]
    NonConvergence {
        branch: Branch,
        update: f64,
        residual: f64,
        iterations: usize,
    },
    #[error("iterate left the trapping box at node {node} with clipping disabled")]
    BoxViolation { node: usize },
    #[error("nodal branch requires eps > 0, got {0}")]
    NodalNeedsEps(f64),
    #[error("seed sign pattern has no sign change; nodal branch cannot start")]
    DegenerateSeed,
    #[error("continuation schedule must be strictly decreasing inside (0, 1)")]
    BadSchedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Positive,
    Negative,
    Nodal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Positive,
    Negative,
    Nodal,
    Other,
}

/// How to seed the iteration.
#[derive(Debug, Clone)]
pub enum SeedSpec {
    /// Geometric midpoint of the trapping box, sqrt(lo * hi) nodewise.
    BarrierMidpoint,
    /// Negated positive-branch midpoint seed (negative branch).
    Mirrored,
    /// kappa times the second eigenfunction shape, both components.
    Eigen2 { kappa: f64 },
    /// Caller-provided fields.
    Explicit { u: Field, v: Field },
    /// Warm start from a previous solution (keeps its sign pattern).
    Prior { u: Field, v: Field },
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub eps: f64,
    /// Damping in (0, 1].
    pub omega: f64,
    pub tol_update: f64,
    pub tol_residual: f64,
    pub max_iter: usize,
    pub branch: Branch,
    pub clip_to_box: bool,
    pub seed: SeedSpec,
}

impl SolveConfig {
    pub fn new(branch: Branch) -> SolveConfig {
        SolveConfig {
            eps: 0.0,
            omega: 0.5,
            tol_update: 1e-10,
            tol_residual: 1e-10,
            max_iter: 5000,
            branch,
            clip_to_box: true,
            seed: match branch {
                Branch::Positive => SeedSpec::BarrierMidpoint,
                Branch::Negative => SeedSpec::Mirrored,
                Branch::Nodal => SeedSpec::Eigen2 { kappa: 0.1 },
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IterRecord {
    pub update_sup: f64,
    pub residual_sup: f64,
}

/// Nodewise bound check of the computed solution against its branch box.
#[derive(Debug, Clone, Serialize)]
pub enum BoxCheck {
    /// Constant-sign branches: strict bounds, worst margins recorded.
    Strict {
        pass: bool,
        lower_margin: f64,
        upper_margin: f64,
        worst_node: usize,
    },
    /// Nodal branch: largest constant with |u| <= z1/C and |v| <= z2/C
    /// nodewise; admissible iff it exceeds 1.
    Nodal {
        pass: bool,
        ratio_u: f64,
        ratio_v: f64,
        box_constant_sup: f64,
    },
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: Field,
    pub v: Field,
    /// Sup norm of (u - (-Δ+I)^{-1}F1, v - (-Δ+I)^{-1}F2) at the final
    /// iterate (resolvent form, unclipped).
    pub residual_sup: f64,
    /// Strong-form residual sup, bounded by residual_sup times the operator
    /// norm; recorded for the weak-form identity.
    pub strong_residual_sup: f64,
    pub iterations: usize,
    pub classification: Classification,
    pub converged: bool,
    pub trace: Vec<IterRecord>,
    pub synchronous_fraction: f64,
    pub near_zero_nodes: usize,
    pub box_check: BoxCheck,
    pub eps: f64,
    pub branch: Branch,
}

/// Scale-aware sign threshold: 1e-6 of the larger component sup norm.
pub fn tol_sign_for(u: &Field, v: &Field) -> f64 {
    1e-6 * u.sup().max(v.sup())
}

/// Classifies a solution pair and measures the synchronous-sign share over
/// nodes where both components clear the sign threshold.
pub fn classify(u: &Field, v: &Field, tol_sign: f64) -> (Classification, f64) {
    let grid = u.grid();
    let mut u_pos = true;
    let mut u_neg = true;
    let mut v_pos = true;
    let mut v_neg = true;
    let mut u_has_pos = false;
    let mut u_has_neg = false;
    let mut v_has_pos = false;
    let mut v_has_neg = false;
    let mut sync = 0usize;
    let mut considered = 0usize;
    for &id in &grid.interior_ids {
        let uu = u.values()[id];
        let vv = v.values()[id];
        u_pos &= uu > tol_sign;
        u_neg &= uu < -tol_sign;
        v_pos &= vv > tol_sign;
        v_neg &= vv < -tol_sign;
        u_has_pos |= uu > tol_sign;
        u_has_neg |= uu < -tol_sign;
        v_has_pos |= vv > tol_sign;
        v_has_neg |= vv < -tol_sign;
        if uu.abs().min(vv.abs()) > tol_sign {
            considered += 1;
            if uu * vv > 0.0 {
                sync += 1;
            }
        }
    }
    let class = if u_pos && v_pos {
        Classification::Positive
    } else if u_neg && v_neg {
        Classification::Negative
    } else if u_has_pos && u_has_neg && v_has_pos && v_has_neg {
        Classification::Nodal
    } else {
        Classification::Other
    };
    let fraction = if considered == 0 {
        0.0
    } else {
        sync as f64 / considered as f64
    };
    (class, fraction)
}

fn count_near_zero(u: &Field, v: &Field, tol_sign: f64) -> usize {
    u.grid()
        .interior_ids
        .iter()
        .filter(|&&id| u.values()[id].abs().min(v.values()[id].abs()) <= tol_sign)
        .count()
}

/// Trapping box per component: lo <= field <= hi nodewise.
#[derive(Debug, Clone)]
pub struct BranchBox {
    pub lo1: Field,
    pub hi1: Field,
    pub lo2: Field,
    pub hi2: Field,
}

impl BranchBox {
    /// Positive box [C^{-1}z_i, C y_i]; mirrored for the negative branch.
    pub fn for_branch(branch: Branch, barriers: &BarrierSet) -> Option<BranchBox> {
        let c = barriers.big_c;
        match branch {
            Branch::Positive => Some(BranchBox {
                lo1: barriers.z1.scaled(1.0 / c),
                hi1: barriers.y1.scaled(c),
                lo2: barriers.z2.scaled(1.0 / c),
                hi2: barriers.y2.scaled(c),
            }),
            Branch::Negative => Some(BranchBox {
                lo1: barriers.y1.scaled(-c),
                hi1: barriers.z1.scaled(-1.0 / c),
                lo2: barriers.y2.scaled(-c),
                hi2: barriers.z2.scaled(-1.0 / c),
            }),
            Branch::Nodal => None,
        }
    }
}

fn clip_into(f: &mut Field, lo: &Field, hi: &Field) {
    let n = f.values().len();
    for id in 0..n {
        let l = lo.values()[id];
        let h = hi.values()[id];
        let v = &mut f.values_mut()[id];
        *v = v.max(l).min(h);
    }
}

fn check_in_box(f: &Field, lo: &Field, hi: &Field) -> Option<usize> {
    for id in 0..f.values().len() {
        let v = f.values()[id];
        if v < lo.values()[id] || v > hi.values()[id] {
            return Some(id);
        }
    }
    None
}

/// One damped Picard sweep through the resolvent.
///
/// Returns the relaxed (and, when enabled, box-clipped) next pair together
/// with the update sup and the resolvent residual of the *current* pair.
pub fn picard_step(
    u: &Field,
    v: &Field,
    config: &SolveConfig,
    op: &EllipticOperator,
    exps: &Exponents,
    boxes: Option<&BranchBox>,
) -> Result<(Field, Field, f64, f64), SolverError> {
    let (f1, f2) = nonlinearity::eval_f_eps(u, v, config.eps, exps)?;
    let w1 = op.solve(&f1)?;
    let w2 = op.solve(&f2)?;
    let residual = u.sup_diff(&w1).max(v.sup_diff(&w2));
    let om = config.omega;
    let mut un = Field::new(
        u.grid(),
        u.values()
            .iter()
            .zip(w1.values())
            .map(|(a, b)| (1.0 - om) * a + om * b)
            .collect(),
    );
    let mut vn = Field::new(
        v.grid(),
        v.values()
            .iter()
            .zip(w2.values())
            .map(|(a, b)| (1.0 - om) * a + om * b)
            .collect(),
    );
    if let Some(bx) = boxes {
        if config.clip_to_box {
            clip_into(&mut un, &bx.lo1, &bx.hi1);
            clip_into(&mut vn, &bx.lo2, &bx.hi2);
        } else if let Some(node) =
            check_in_box(&un, &bx.lo1, &bx.hi1).or_else(|| check_in_box(&vn, &bx.lo2, &bx.hi2))
        {
            return Err(SolverError::BoxViolation { node });
        }
    }
    let update = un.sup_diff(u).max(vn.sup_diff(v));
    Ok((un, vn, update, residual))
}

fn midpoint_seed(bx: &BranchBox, grid: &Arc<Grid>) -> (Field, Field) {
    let geo = |lo: &Field, hi: &Field| {
        Field::new(
            grid,
            lo.values()
                .iter()
                .zip(hi.values())
                .map(|(&l, &h)| {
                    let p = l * h;
                    if p > 0.0 {
                        p.sqrt() * l.signum()
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
    };
    (geo(&bx.lo1, &bx.hi1), geo(&bx.lo2, &bx.hi2))
}

/// Computes a fixed point on the requested branch.
pub fn solve_branch(
    config: &SolveConfig,
    op: &EllipticOperator,
    barriers: &BarrierSet,
    exps: &Exponents,
) -> Result<SolveResult, SolverError> {
    match config.branch {
        Branch::Positive | Branch::Negative => solve_constant_sign(config, op, barriers, exps),
        Branch::Nodal => solve_nodal(config, op, barriers, exps),
    }
}

fn solve_constant_sign(
    config: &SolveConfig,
    op: &EllipticOperator,
    barriers: &BarrierSet,
    exps: &Exponents,
) -> Result<SolveResult, SolverError> {
    let grid = op.grid();
    let bx = BranchBox::for_branch(config.branch, barriers).expect("constant-sign box");
    let (mut u, mut v) = match &config.seed {
        SeedSpec::BarrierMidpoint | SeedSpec::Eigen2 { .. } => midpoint_seed(&bx, grid),
        SeedSpec::Mirrored => {
            let pos = BranchBox::for_branch(Branch::Positive, barriers).unwrap();
            let (su, sv) = midpoint_seed(&pos, grid);
            (su.scaled(-1.0), sv.scaled(-1.0))
        }
        SeedSpec::Explicit { u, v } | SeedSpec::Prior { u, v } => (u.clone(), v.clone()),
    };
    // start inside the box regardless of the seed's quality
    clip_into(&mut u, &bx.lo1, &bx.hi1);
    clip_into(&mut v, &bx.lo2, &bx.hi2);

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=config.max_iter {
        let (un, vn, update, residual) = picard_step(&u, &v, config, op, exps, Some(&bx))?;
        trace.push(IterRecord {
            update_sup: update,
            residual_sup: residual,
        });
        u = un;
        v = vn;
        iterations = it;
        if update <= config.tol_update && residual <= config.tol_residual {
            converged = true;
            break;
        }
    }
    finish_result(
        config.branch,
        config.eps,
        config.tol_residual,
        op,
        barriers,
        exps,
        u,
        v,
        iterations,
        converged,
        trace,
    )
}

/// Connected same-sign lobes of a sign pattern over the grid graph.
struct LobeSplit {
    /// Each lobe: its interior node ids (ascending) and common sign.
    lobes: Vec<(Vec<usize>, f64)>,
}

/// Derives the sign pattern from a seed shape. Nodes within 1e-8 of zero
/// (relative to the sup) become separators; any remaining edge between
/// opposite signs gets its smaller endpoint demoted to a separator so that
/// lobes never touch.
fn sign_pattern(shape: &Field) -> LobeSplit {
    let grid = shape.grid();
    let sup = shape.sup();
    let tol = 1e-8 * sup;
    let mut sign = vec![0.0f64; grid.num_nodes()];
    for &id in &grid.interior_ids {
        let v = shape.values()[id];
        if v > tol {
            sign[id] = 1.0;
        } else if v < -tol {
            sign[id] = -1.0;
        }
    }
    for &id in &grid.interior_ids {
        for nb in grid.neighbors(id).into_iter().flatten() {
            if sign[id] * sign[nb] < 0.0 {
                let demote = if shape.values()[id].abs() <= shape.values()[nb].abs() {
                    id
                } else {
                    nb
                };
                sign[demote] = 0.0;
            }
        }
    }
    // flood-fill same-sign components
    let mut seen = vec![false; grid.num_nodes()];
    let mut lobes = Vec::new();
    for &start in &grid.interior_ids {
        if seen[start] || sign[start] == 0.0 {
            continue;
        }
        let s = sign[start];
        let mut stack = vec![start];
        let mut nodes = Vec::new();
        seen[start] = true;
        while let Some(id) = stack.pop() {
            nodes.push(id);
            for nb in grid.neighbors(id).into_iter().flatten() {
                if !seen[nb] && sign[nb] == s {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        nodes.sort_unstable();
        lobes.push((nodes, s));
    }
    lobes.sort_by_key(|(nodes, _)| nodes[0]);
    LobeSplit { lobes }
}

/// Sign-changing branch: per-lobe positive problems glued along exact-zero
/// separators, iterated in lockstep so the trace mirrors the other branches.
fn solve_nodal(
    config: &SolveConfig,
    op: &EllipticOperator,
    barriers: &BarrierSet,
    exps: &Exponents,
) -> Result<SolveResult, SolverError> {
    if config.eps.is_nan() || config.eps <= 0.0 {
        return Err(SolverError::NodalNeedsEps(config.eps));
    }
    let grid = op.grid();
    let shape = match &config.seed {
        SeedSpec::Eigen2 { kappa } => {
            let pair = op.principal_eigenpair(1e-12)?;
            op.second_eigen_shape(&pair.phi1, 1e-12)?.scaled(*kappa)
        }
        SeedSpec::Explicit { u, .. } | SeedSpec::Prior { u, .. } => u.clone(),
        SeedSpec::BarrierMidpoint | SeedSpec::Mirrored => return Err(SolverError::DegenerateSeed),
    };
    let split = sign_pattern(&shape);
    let has_pos = split.lobes.iter().any(|(_, s)| *s > 0.0);
    let has_neg = split.lobes.iter().any(|(_, s)| *s < 0.0);
    if !(has_pos && has_neg) {
        return Err(SolverError::DegenerateSeed);
    }

    // magnitude seeds per lobe, from the seed pair when warm-starting
    let (mag_u0, mag_v0): (Field, Field) = match &config.seed {
        SeedSpec::Prior { u, v } | SeedSpec::Explicit { u, v } => (u.clone(), v.clone()),
        _ => (shape.clone(), shape.clone()),
    };

    struct Lobe {
        op: EllipticOperator,
        nodes: Vec<usize>,
        p: Vec<f64>,
        q: Vec<f64>,
        rail1: Vec<f64>,
        rail2: Vec<f64>,
    }
    let mut lobes: Vec<Lobe> = split
        .lobes
        .iter()
        .map(|(nodes, _)| {
            let lop = EllipticOperator::restricted(grid, nodes.clone());
            let floor = 1e-3 * config.eps.min(1.0);
            let p = nodes
                .iter()
                .map(|&id| mag_u0.values()[id].abs().max(floor))
                .collect();
            let q = nodes
                .iter()
                .map(|&id| mag_v0.values()[id].abs().max(floor))
                .collect();
            let rail1 = nodes
                .iter()
                .map(|&id| barriers.big_c * barriers.y1.values()[id])
                .collect();
            let rail2 = nodes
                .iter()
                .map(|&id| barriers.big_c * barriers.y2.values()[id])
                .collect();
            Lobe {
                op: lop,
                nodes: nodes.clone(),
                p,
                q,
                rail1,
                rail2,
            }
        })
        .collect();

    let om = config.omega;
    let (a1, b1) = exps.pair(1);
    let (a2, b2) = exps.pair(2);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=config.max_iter {
        let mut update = 0.0f64;
        let mut residual = 0.0f64;
        for lobe in &mut lobes {
            let m = lobe.nodes.len();
            let mut fp = vec![0.0; m];
            let mut fq = vec![0.0; m];
            for k in 0..m {
                let au = lobe.p[k] + config.eps;
                let av = lobe.q[k] + config.eps;
                fp[k] = au.powf(a1) / av.powf(b1);
                fq[k] = au.powf(a2) / av.powf(b2);
            }
            let wp = lobe.op.solve_vec(&fp)?;
            let wq = lobe.op.solve_vec(&fq)?;
            for k in 0..m {
                residual = residual
                    .max((lobe.p[k] - wp[k]).abs())
                    .max((lobe.q[k] - wq[k]).abs());
                let mut pn = (1.0 - om) * lobe.p[k] + om * wp[k];
                let mut qn = (1.0 - om) * lobe.q[k] + om * wq[k];
                pn = pn.max(0.0);
                qn = qn.max(0.0);
                if config.clip_to_box {
                    pn = pn.min(lobe.rail1[k]);
                    qn = qn.min(lobe.rail2[k]);
                }
                update = update
                    .max((pn - lobe.p[k]).abs())
                    .max((qn - lobe.q[k]).abs());
                lobe.p[k] = pn;
                lobe.q[k] = qn;
            }
        }
        trace.push(IterRecord {
            update_sup: update,
            residual_sup: residual,
        });
        iterations = it;
        if update <= config.tol_update && residual <= config.tol_residual {
            converged = true;
            break;
        }
    }

    // signed glue; separators and boundary stay exactly zero
    let mut u = Field::zeros(grid);
    let mut v = Field::zeros(grid);
    for (lobe, (_, s)) in lobes.iter().zip(&split.lobes) {
        for (k, &id) in lobe.nodes.iter().enumerate() {
            u.values_mut()[id] = s * lobe.p[k];
            v.values_mut()[id] = s * lobe.q[k];
        }
    }
    finish_result(
        config.branch,
        config.eps,
        config.tol_residual,
        op,
        barriers,
        exps,
        u,
        v,
        iterations,
        converged,
        trace,
    )
}

/// Re-derives a full result record from given solution fields: the
/// unclipped residual against the full operator, classification, and box
/// check. Used to re-verify fields loaded back from disk.
#[allow(clippy::too_many_arguments)]
pub fn assess_fields(
    u: Field,
    v: Field,
    eps: f64,
    branch: Branch,
    tol_residual: f64,
    op: &EllipticOperator,
    barriers: &BarrierSet,
    exps: &Exponents,
) -> Result<SolveResult, SolverError> {
    finish_result(
        branch,
        eps,
        tol_residual,
        op,
        barriers,
        exps,
        u,
        v,
        0,
        true,
        Vec::new(),
    )
}

/// Final bookkeeping shared by all branches: the unclipped residual against
/// the full operator, strong-form residual, classification, and box check.
#[allow(clippy::too_many_arguments)]
fn finish_result(
    branch: Branch,
    eps: f64,
    tol_residual: f64,
    op: &EllipticOperator,
    barriers: &BarrierSet,
    exps: &Exponents,
    u: Field,
    v: Field,
    iterations: usize,
    mut converged: bool,
    trace: Vec<IterRecord>,
) -> Result<SolveResult, SolverError> {
    let (f1, f2) = nonlinearity::eval_f_eps(&u, &v, eps, exps)?;
    let w1 = op.solve(&f1)?;
    let w2 = op.solve(&f2)?;
    let residual_sup = u.sup_diff(&w1).max(v.sup_diff(&w2));
    let strong_residual_sup = op.apply(&u).sub(&f1).sup().max(op.apply(&v).sub(&f2).sup());
    converged = converged && residual_sup <= tol_residual;
    if !converged {
        let last = trace.last().map(|r| r.update_sup).unwrap_or(f64::NAN);
        return Err(SolverError::NonConvergence {
            branch,
            update: last,
            residual: residual_sup,
            iterations,
        });
    }
    let tol_sign = tol_sign_for(&u, &v);
    let (classification, synchronous_fraction) = classify(&u, &v, tol_sign);
    let near_zero_nodes = count_near_zero(&u, &v, tol_sign);
    let box_check = match branch {
        Branch::Positive | Branch::Negative => {
            let bx = BranchBox::for_branch(branch, barriers).unwrap();
            let grid = op.grid();
            let mut lower = f64::INFINITY;
            let mut upper = f64::INFINITY;
            let mut worst = 0;
            for &id in &grid.interior_ids {
                for (f, lo, hi) in [(&u, &bx.lo1, &bx.hi1), (&v, &bx.lo2, &bx.hi2)] {
                    let lm = f.values()[id] - lo.values()[id];
                    let um = hi.values()[id] - f.values()[id];
                    if lm < lower {
                        lower = lm;
                        worst = id;
                    }
                    if um < upper {
                        upper = um;
                        worst = id;
                    }
                }
            }
            BoxCheck::Strict {
                pass: lower > 0.0 && upper > 0.0,
                lower_margin: lower,
                upper_margin: upper,
                worst_node: worst,
            }
        }
        Branch::Nodal => {
            let grid = op.grid();
            let mut ratio_u = 0.0f64;
            let mut ratio_v = 0.0f64;
            for &id in &grid.interior_ids {
                ratio_u = ratio_u.max(u.values()[id].abs() / barriers.z1.values()[id]);
                ratio_v = ratio_v.max(v.values()[id].abs() / barriers.z2.values()[id]);
            }
            let worst = ratio_u.max(ratio_v);
            BoxCheck::Nodal {
                pass: worst < 1.0,
                ratio_u,
                ratio_v,
                box_constant_sup: 1.0 / worst,
            }
        }
    };
    Ok(SolveResult {
        u,
        v,
        residual_sup,
        strong_residual_sup,
        iterations,
        classification,
        converged,
        trace,
        synchronous_fraction,
        near_zero_nodes,
        box_check,
        eps,
        branch,
    })
}

#[derive(Debug)]
pub struct ContinuationTrace {
    /// The eps values actually run (strictly decreasing).
    pub eps_schedule: Vec<f64>,
    pub results: Vec<SolveResult>,
    /// H1 norms of consecutive solution differences, (u, v) per stage pair.
    pub h1_diffs: Vec<(f64, f64)>,
    /// Set when a stage failed; the trace is truncated there.
    pub failure: Option<(usize, String)>,
    /// True when the run stopped early on a small H1 Cauchy difference.
    pub stopped_early: bool,
}

impl ContinuationTrace {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn final_result(&self) -> Option<&SolveResult> {
        self.results.last()
    }
}

/// Geometric default schedule 2^-1 .. 2^-14.
pub fn default_schedule() -> Vec<f64> {
    (1..=14).map(|k| (2.0f64).powi(-k)).collect()
}

/// Runs the nodal branch down an eps schedule with warm starts, recording
/// the H1 Cauchy differences between consecutive stages. Stops early when
/// the difference drops below `early_stop_h1` (if set); a nonconvergent
/// stage truncates the trace and marks the failure.
pub fn continuation(
    schedule: &[f64],
    base: &SolveConfig,
    op: &EllipticOperator,
    barriers: &BarrierSet,
    exps: &Exponents,
    early_stop_h1: Option<f64>,
) -> Result<ContinuationTrace, SolverError> {
    if schedule.is_empty()
        || schedule.windows(2).any(|w| w[1] >= w[0])
        || schedule.iter().any(|&e| !(e > 0.0 && e < 1.0))
    {
        return Err(SolverError::BadSchedule);
    }
    let mut trace = ContinuationTrace {
        eps_schedule: Vec::new(),
        results: Vec::new(),
        h1_diffs: Vec::new(),
        failure: None,
        stopped_early: false,
    };
    let mut cfg = base.clone();
    cfg.branch = Branch::Nodal;
    for (k, &eps) in schedule.iter().enumerate() {
        cfg.eps = eps;
        if let Some(prev) = trace.results.last() {
            cfg.seed = SeedSpec::Prior {
                u: prev.u.clone(),
                v: prev.v.clone(),
            };
        }
        match solve_branch(&cfg, op, barriers, exps) {
            Ok(res) => {
                if let Some(prev) = trace.results.last() {
                    let du = res.u.sub(&prev.u).norm(NormKind::H1);
                    let dv = res.v.sub(&prev.v).norm(NormKind::H1);
                    trace.h1_diffs.push((du, dv));
                }
                trace.eps_schedule.push(eps);
                trace.results.push(res);
                if let (Some(th), Some(&(du, dv))) = (early_stop_h1, trace.h1_diffs.last()) {
                    if du.max(dv) < th {
                        trace.stopped_early = true;
                        break;
                    }
                }
            }
            Err(e) => {
                trace.failure = Some((k, e.to_string()));
                break;
            }
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;

    fn setup() -> (Arc<Grid>, EllipticOperator, Exponents, BarrierSet) {
        let g = Grid::build_shared(Domain::Interval { length: 1.0 }, 101).unwrap();
        let op = EllipticOperator::assemble(&g);
        let exps = Exponents::validate(-0.4, -0.3, 0.5, 0.4).unwrap();
        let bs = BarrierSet::build(&op, &exps, 4.0 * g.hx).unwrap();
        (g, op, exps, bs)
    }

    #[test]
    fn resolvent_of_constant_rhs_is_picard_stationary() {
        // with a constant right-hand side the map is affine and u = K(1) is
        // its fixed point: one more application reproduces it bitwise
        let (g, op, _, _) = setup();
        let mut one = Field::zeros(&g);
        for &id in &g.interior_ids {
            one.values_mut()[id] = 1.0;
        }
        let w = op.solve(&one).unwrap();
        let w2 = op.solve(&one).unwrap();
        assert_eq!(w.sup_diff(&w2), 0.0);
    }

    #[test]
    fn positive_branch_converges_and_stays_in_box() {
        let (_, op, exps, bs) = setup();
        let cfg = SolveConfig::new(Branch::Positive);
        let res = solve_branch(&cfg, &op, &bs, &exps).unwrap();
        assert!(res.converged);
        assert!(res.residual_sup <= 1e-10);
        assert_eq!(res.classification, Classification::Positive);
        match res.box_check {
            BoxCheck::Strict { pass, .. } => assert!(pass),
            _ => panic!("wrong box check"),
        }
        assert!(res.trace.len() >= 2);
        assert!(res.trace.last().unwrap().update_sup < res.trace[0].update_sup);
    }

    #[test]
    fn negative_branch_mirrors_positive() {
        let (_, op, exps, bs) = setup();
        let pos = solve_branch(&SolveConfig::new(Branch::Positive), &op, &bs, &exps).unwrap();
        let neg = solve_branch(&SolveConfig::new(Branch::Negative), &op, &bs, &exps).unwrap();
        assert_eq!(neg.classification, Classification::Negative);
        let mirror_u = pos.u.scaled(-1.0).sup_diff(&neg.u);
        let mirror_v = pos.v.scaled(-1.0).sup_diff(&neg.v);
        assert!(mirror_u <= 1e-8, "mirror u {mirror_u}");
        assert!(mirror_v <= 1e-8, "mirror v {mirror_v}");
    }

    #[test]
    fn mirror_residual_property() {
        // negating a converged positive solution satisfies the negative
        // branch's equation to the residual tolerance (odd symmetry)
        let (_, op, exps, bs) = setup();
        let pos = solve_branch(&SolveConfig::new(Branch::Positive), &op, &bs, &exps).unwrap();
        let mu = pos.u.scaled(-1.0);
        let mv = pos.v.scaled(-1.0);
        let (f1, f2) = nonlinearity::eval_f_eps(&mu, &mv, 0.0, &exps).unwrap();
        let w1 = op.solve(&f1).unwrap();
        let w2 = op.solve(&f2).unwrap();
        let res = mu.sup_diff(&w1).max(mv.sup_diff(&w2));
        assert!(res <= 1e-9, "mirror residual {res}");
    }

    #[test]
    fn box_preservation_under_one_unclipped_step() {
        let (_, op, exps, bs) = setup();
        let cfg = SolveConfig::new(Branch::Positive);
        let res = solve_branch(&cfg, &op, &bs, &exps).unwrap();
        let mut unclipped = cfg.clone();
        unclipped.clip_to_box = false;
        let bx = BranchBox::for_branch(Branch::Positive, &bs).unwrap();
        let (un, vn, _, _) =
            picard_step(&res.u, &res.v, &unclipped, &op, &exps, Some(&bx)).unwrap();
        assert!(check_in_box(&un, &bx.lo1, &bx.hi1).is_none());
        assert!(check_in_box(&vn, &bx.lo2, &bx.hi2).is_none());
    }

    #[test]
    fn nodal_branch_changes_sign_and_solves_full_system() {
        let (g, op, exps, bs) = setup();
        let mut cfg = SolveConfig::new(Branch::Nodal);
        cfg.eps = 0.1;
        let res = solve_branch(&cfg, &op, &bs, &exps).unwrap();
        assert!(res.converged);
        assert_eq!(res.classification, Classification::Nodal);
        assert_eq!(res.synchronous_fraction, 1.0);
        match res.box_check {
            BoxCheck::Nodal {
                pass,
                ratio_u,
                ratio_v,
                ..
            } => {
                assert!(pass, "ratios {ratio_u} {ratio_v}");
            }
            _ => panic!("wrong box check"),
        }
        // separator node carries exact zeros
        let mid = g.num_nodes() / 2;
        assert_eq!(res.u.values()[mid], 0.0);
        assert_eq!(res.v.values()[mid], 0.0);
    }

    #[test]
    fn nodal_requires_positive_eps() {
        let (_, op, exps, bs) = setup();
        let cfg = SolveConfig::new(Branch::Nodal);
        assert!(matches!(
            solve_branch(&cfg, &op, &bs, &exps),
            Err(SolverError::NodalNeedsEps(_))
        ));
    }

    #[test]
    fn continuation_warm_starts_and_records_diffs() {
        let (_, op, exps, bs) = setup();
        let mut cfg = SolveConfig::new(Branch::Nodal);
        cfg.max_iter = 20000;
        let schedule: Vec<f64> = (1..=6).map(|k| (2.0f64).powi(-k)).collect();
        let trace = continuation(&schedule, &cfg, &op, &bs, &exps, None).unwrap();
        assert!(trace.completed(), "failure: {:?}", trace.failure);
        assert_eq!(trace.results.len(), 6);
        assert_eq!(trace.h1_diffs.len(), 5);
        assert!(trace
            .h1_diffs
            .iter()
            .all(|&(a, b)| a.is_finite() && b.is_finite()));
        // warm-started stages take no more iterations than a cold start here
        let cold_iters = {
            let mut c = cfg.clone();
            c.eps = schedule[3];
            solve_branch(&c, &op, &bs, &exps).unwrap().iterations
        };
        let warm_iters = trace.results[3].iterations;
        assert!(
            warm_iters <= cold_iters,
            "warm {warm_iters} vs cold {cold_iters}"
        );
    }

    #[test]
    fn bad_schedules_are_rejected() {
        let (_, op, exps, bs) = setup();
        let cfg = SolveConfig::new(Branch::Nodal);
        for s in [vec![], vec![0.5, 0.5], vec![0.25, 0.5], vec![1.5, 0.5]] {
            assert!(matches!(
                continuation(&s, &cfg, &op, &bs, &exps, None),
                Err(SolverError::BadSchedule)
            ));
        }
    }

    #[test]
    fn undamped_iteration_still_converges_on_the_positive_branch() {
        // the linearized map has negative spectrum here, so omega = 1
        // oscillates toward the fixed point instead of sliding; it still
        // converges and agrees with the damped solution
        let (_, op, exps, bs) = setup();
        let mut cfg = SolveConfig::new(Branch::Positive);
        cfg.omega = 1.0;
        let res = solve_branch(&cfg, &op, &bs, &exps).unwrap();
        assert!(res.converged);
        assert_eq!(res.classification, Classification::Positive);
        let damped = solve_branch(&SolveConfig::new(Branch::Positive), &op, &bs, &exps).unwrap();
        assert!(res.u.sup_diff(&damped.u) <= 1e-8);
    }

    #[test]
    fn branches_also_converge_for_positive_alphas() {
        // convergence here is not guaranteed in general; this pins the
        // observed behavior on the second reference exponent set
        let g = Grid::build_shared(Domain::Interval { length: 1.0 }, 101).unwrap();
        let op = EllipticOperator::assemble(&g);
        let exps = Exponents::validate(0.3, 0.2, 0.5, 0.6).unwrap();
        let bs = BarrierSet::build(&op, &exps, 4.0 * g.hx).unwrap();
        let pos = solve_branch(&SolveConfig::new(Branch::Positive), &op, &bs, &exps).unwrap();
        assert_eq!(pos.classification, Classification::Positive);
        let mut cfg = SolveConfig::new(Branch::Nodal);
        cfg.eps = 0.1;
        let nodal = solve_branch(&cfg, &op, &bs, &exps).unwrap();
        assert_eq!(nodal.classification, Classification::Nodal);
        assert_eq!(nodal.synchronous_fraction, 1.0);
    }

    #[test]
    fn continuation_truncates_on_a_failed_stage() {
        let (_, op, exps, bs) = setup();
        let mut cfg = SolveConfig::new(Branch::Nodal);
        cfg.max_iter = 1;
        let schedule = vec![0.5, 0.25];
        let trace = continuation(&schedule, &cfg, &op, &bs, &exps, None).unwrap();
        assert!(!trace.completed());
        let (stage, msg) = trace.failure.as_ref().unwrap();
        assert_eq!(*stage, 0);
        assert!(msg.contains("did not converge"), "{msg}");
        assert!(trace.results.is_empty());
    }

    #[test]
    fn unclipped_step_reports_box_violations() {
        let (_, op, exps, bs) = setup();
        let mut cfg = SolveConfig::new(Branch::Positive);
        cfg.clip_to_box = false;
        let bx = BranchBox::for_branch(Branch::Positive, &bs).unwrap();
        // a seed far above the box stays outside after one damped step
        let u = bx.hi1.scaled(10.0);
        let v = bx.hi2.scaled(10.0);
        assert!(matches!(
            picard_step(&u, &v, &cfg, &op, &exps, Some(&bx)),
            Err(SolverError::BoxViolation { .. })
        ));
    }

    #[test]
    fn classify_examples() {
        let g = Grid::build_shared(Domain::Interval { length: 1.0 }, 101).unwrap();
        let one = Field::from_fn(&g, |x, _| if x == 0.0 || x == 1.0 { 0.0 } else { 1.0 });
        let (c, _) = classify(&one, &one, 1e-6);
        assert_eq!(c, Classification::Positive);

        let s2 = Field::from_fn(&g, |x, _| (2.0 * std::f64::consts::PI * x).sin());
        let (c, f) = classify(&s2, &s2, 1e-6);
        assert_eq!(c, Classification::Nodal);
        assert_eq!(f, 1.0);

        let anti = s2.scaled(-1.0);
        let (c, f) = classify(&s2, &anti, 1e-6);
        assert_eq!(c, Classification::Nodal);
        assert_eq!(f, 0.0);

        let z = Field::zeros(&g);
        let (c, _) = classify(&z, &z, 1e-6);
        assert_eq!(c, Classification::Other);
    }
}
