//! The property-checking harness: every claimed bound, sign statement, and
//! convergence behavior of the computed solutions becomes a nodewise or
//! norm-based pass/fail record with its worst case attached.
//!
//! Strict lower/upper bounds on the constant-sign branches are checked as
//! strict inequalities at interior nodes (the continuous statement also
//! constrains boundary derivatives, which the grid cannot express; the
//! interior check is the operational stand-in). "Almost everywhere" sign
//! statements become all-nodes statements outside an explicitly reported
//! near-zero set. Multi-start uniqueness draws its randomness from a seeded
//! generator so reports reproduce bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::barriers::BarrierSet;
use crate::grid::Field;
use crate::nonlinearity::Exponents;
use crate::operator::EllipticOperator;
use crate::solver::{
    solve_branch, Branch, BranchBox, ContinuationTrace, SeedSpec, SolveConfig, SolveResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckOutcome {
    Pass,
    Fail,
    /// A prerequisite failed (e.g. a start did not converge); neither pass
    /// nor fail.
    Inconclusive,
    /// The check's hypothesis is not met on this configuration.
    Skipped,
}

/// One verified property with its worst case and tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    /// The mathematical property being checked, in words.
    pub property: String,
    pub outcome: CheckOutcome,
    pub worst_node: Option<usize>,
    /// Smallest margin by which the property holds (negative = violated).
    pub slack: f64,
    pub tolerance: f64,
    pub info: String,
}

impl CheckRecord {
    pub fn passed(&self) -> bool {
        matches!(self.outcome, CheckOutcome::Pass | CheckOutcome::Skipped)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckRecord>,
    pub overall_pass: bool,
}

impl VerificationReport {
    pub fn new(checks: Vec<CheckRecord>) -> VerificationReport {
        let overall_pass = checks.iter().all(|c| c.passed());
        VerificationReport {
            checks,
            overall_pass,
        }
    }

    /// Plain-text table, one row per check.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24} {:<14} {:>12}  {}\n",
            "check", "outcome", "slack", "detail"
        ));
        for c in &self.checks {
            out.push_str(&format!(
                "{:<24} {:<14} {:>12.3e}  {}\n",
                c.name,
                format!("{:?}", c.outcome).to_lowercase(),
                c.slack,
                c.info
            ));
        }
        out.push_str(&format!(
            "overall: {}\n",
            if self.overall_pass { "PASS" } else { "FAIL" }
        ));
        out
    }
}

/// Pointwise solution bounds against the branch's barrier box.
///
/// Positive/negative branches demand strict inequalities at every interior
/// node; the sign-changing branch is checked against the family of shrunk
/// lower-barrier boxes, reporting the largest admissible constant (the box
/// holds for every constant between 1 and that value; the check passes when
/// such a constant above 1 exists).
pub fn check_bounds(result: &SolveResult, barriers: &BarrierSet, branch: Branch) -> CheckRecord {
    let grid = result.u.grid();
    match branch {
        Branch::Positive | Branch::Negative => {
            let bx = BranchBox::for_branch(branch, barriers).expect("constant-sign box");
            let mut slack = f64::INFINITY;
            let mut worst = 0;
            for &id in &grid.interior_ids {
                for (f, lo, hi) in [(&result.u, &bx.lo1, &bx.hi1), (&result.v, &bx.lo2, &bx.hi2)] {
                    let m =
                        (f.values()[id] - lo.values()[id]).min(hi.values()[id] - f.values()[id]);
                    if m < slack {
                        slack = m;
                        worst = id;
                    }
                }
            }
            let name = match branch {
                Branch::Positive => "bounds_positive",
                _ => "bounds_negative",
            };
            CheckRecord {
                name: name.into(),
                property: "strict barrier bounds C^-1 z < |solution| < C y at interior nodes"
                    .into(),
                outcome: if slack > 0.0 {
                    CheckOutcome::Pass
                } else {
                    CheckOutcome::Fail
                },
                worst_node: Some(worst),
                slack,
                tolerance: 0.0,
                info: format!("C = {}", barriers.big_c),
            }
        }
        Branch::Nodal => {
            let mut ratio = 0.0f64;
            let mut worst = 0;
            for &id in &grid.interior_ids {
                for (f, z) in [(&result.u, &barriers.z1), (&result.v, &barriers.z2)] {
                    let r = f.values()[id].abs() / z.values()[id];
                    if r > ratio {
                        ratio = r;
                        worst = id;
                    }
                }
            }
            let c_sup = 1.0 / ratio;
            CheckRecord {
                name: "bounds_nodal".into(),
                property:
                    "solution inside [-z_i/C, z_i/C] nodewise for every constant C in (1, C_sup]"
                        .into(),
                outcome: if ratio < 1.0 {
                    CheckOutcome::Pass
                } else {
                    CheckOutcome::Fail
                },
                worst_node: Some(worst),
                slack: 1.0 - ratio,
                tolerance: 0.0,
                info: format!("largest admissible box constant C_sup = {c_sup:.6}"),
            }
        }
    }
}

/// Multi-start agreement on a constant-sign branch (uniqueness evidence).
///
/// Requires both exponents alpha_i <= 0 (otherwise skipped); runs `n_starts`
/// solves from random seeds inside the trapping box and passes when all
/// converged results agree pairwise within 1e-6 sup.
pub fn check_uniqueness(
    branch: Branch,
    n_starts: usize,
    rng_seed: u64,
    op: &EllipticOperator,
    barriers: &BarrierSet,
    exps: &Exponents,
    base: &SolveConfig,
) -> CheckRecord {
    let name = match branch {
        Branch::Positive => "uniqueness_positive",
        Branch::Negative => "uniqueness_negative",
        Branch::Nodal => "uniqueness_nodal",
    };
    let property = "all randomized starts inside the box converge to one solution".to_string();
    if !exps.alpha_nonpositive {
        return CheckRecord {
            name: name.into(),
            property,
            outcome: CheckOutcome::Skipped,
            worst_node: None,
            slack: f64::NAN,
            tolerance: 1e-6,
            info: "hypothesis not met: requires alpha_i <= 0".into(),
        };
    }
    let bx = match BranchBox::for_branch(branch, barriers) {
        Some(b) => b,
        None => {
            return CheckRecord {
                name: name.into(),
                property,
                outcome: CheckOutcome::Skipped,
                worst_node: None,
                slack: f64::NAN,
                tolerance: 1e-6,
                info: "uniqueness of the nodal branch is not claimed".into(),
            }
        }
    };
    let grid = op.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut results: Vec<SolveResult> = Vec::new();
    for start in 0..n_starts {
        let mut u = Field::zeros(grid);
        let mut v = Field::zeros(grid);
        for &id in &grid.interior_ids {
            let t1: f64 = rng.gen();
            let t2: f64 = rng.gen();
            u.values_mut()[id] =
                bx.lo1.values()[id] + t1 * (bx.hi1.values()[id] - bx.lo1.values()[id]);
            v.values_mut()[id] =
                bx.lo2.values()[id] + t2 * (bx.hi2.values()[id] - bx.lo2.values()[id]);
        }
        let mut cfg = base.clone();
        cfg.branch = branch;
        cfg.seed = SeedSpec::Explicit { u, v };
        match solve_branch(&cfg, op, barriers, exps) {
            Ok(res) => results.push(res),
            Err(e) => {
                return CheckRecord {
                    name: name.into(),
                    property,
                    outcome: CheckOutcome::Inconclusive,
                    worst_node: None,
                    slack: f64::NAN,
                    tolerance: 1e-6,
                    info: format!("start {start} did not converge: {e}"),
                }
            }
        }
    }
    let mut worst = 0.0f64;
    for i in 0..results.len() {
        for j in i + 1..results.len() {
            worst = worst
                .max(results[i].u.sup_diff(&results[j].u))
                .max(results[i].v.sup_diff(&results[j].v));
        }
    }
    CheckRecord {
        name: name.into(),
        property,
        outcome: if worst <= 1e-6 {
            CheckOutcome::Pass
        } else {
            CheckOutcome::Fail
        },
        worst_node: None,
        slack: 1e-6 - worst,
        tolerance: 1e-6,
        info: format!("{n_starts} starts, max pairwise sup distance {worst:.3e}"),
    }
}

/// Synchronous-sign property of a nodal pair: u v > 0 wherever both
/// components clear the sign threshold, and each component takes both signs.
/// The excluded near-zero node count is reported, never hidden.
pub fn check_synchronous_sign(result: &SolveResult, tol_sign: f64) -> CheckRecord {
    let grid = result.u.grid();
    let mut sync_ok = true;
    let mut worst_node = None;
    let mut worst = f64::INFINITY;
    let mut near_zero = 0usize;
    let mut u_pos = false;
    let mut u_neg = false;
    let mut v_pos = false;
    let mut v_neg = false;
    let mut considered = 0usize;
    let mut sync_count = 0usize;
    for &id in &grid.interior_ids {
        let uu = result.u.values()[id];
        let vv = result.v.values()[id];
        u_pos |= uu > tol_sign;
        u_neg |= uu < -tol_sign;
        v_pos |= vv > tol_sign;
        v_neg |= vv < -tol_sign;
        if uu.abs().min(vv.abs()) > tol_sign {
            considered += 1;
            let prod = uu * vv;
            if prod > 0.0 {
                sync_count += 1;
            } else {
                sync_ok = false;
            }
            if prod < worst {
                worst = prod;
                worst_node = Some(id);
            }
        } else {
            near_zero += 1;
        }
    }
    let both_signs = u_pos && u_neg && v_pos && v_neg;
    let fraction = if considered == 0 {
        0.0
    } else {
        sync_count as f64 / considered as f64
    };
    CheckRecord {
        name: "synchronous_sign".into(),
        property: "u v > 0 at every node where both components clear the sign threshold, and both components change sign".into(),
        outcome: if sync_ok && both_signs {
            CheckOutcome::Pass
        } else {
            CheckOutcome::Fail
        },
        worst_node,
        slack: if worst.is_finite() { worst } else { 0.0 },
        tolerance: tol_sign,
        info: format!(
            "synchronous fraction {fraction:.4}, near-zero interior nodes {near_zero} of {}",
            grid.interior_ids.len()
        ),
    }
}

/// Convergence of the regularized family: the H1 Cauchy differences must be
/// decreasing over the last three stage pairs, with the final difference
/// below 1e-6.
pub fn check_convergence(trace: &ContinuationTrace) -> CheckRecord {
    check_convergence_data(&trace.h1_diffs, trace.results.len())
}

/// Data-level form of [`check_convergence`], usable on a reloaded summary.
pub fn check_convergence_data(h1_diffs: &[(f64, f64)], stages: usize) -> CheckRecord {
    let name = "h1_convergence".to_string();
    let property =
        "H1 Cauchy differences decreasing over the last 3 stages, final < 1e-6".to_string();
    let diffs: Vec<f64> = h1_diffs.iter().map(|&(a, b)| a.max(b)).collect();
    if stages < 4 || diffs.len() < 3 {
        return CheckRecord {
            name,
            property,
            outcome: CheckOutcome::Inconclusive,
            worst_node: None,
            slack: f64::NAN,
            tolerance: 1e-6,
            info: format!("only {stages} stages available, need at least 4"),
        };
    }
    let tail = &diffs[diffs.len() - 3..];
    // zero diffs count as converged rather than as a failed ratio
    let decreasing = tail.windows(2).all(|w| w[1] < w[0] || w[1] == 0.0);
    let final_diff = *diffs.last().unwrap();
    let pass = decreasing && final_diff < 1e-6;
    CheckRecord {
        name,
        property,
        outcome: if pass {
            CheckOutcome::Pass
        } else {
            CheckOutcome::Fail
        },
        worst_node: None,
        slack: 1e-6 - final_diff,
        tolerance: 1e-6,
        info: format!(
            "final diff {final_diff:.3e}, tail {:?}, stages {stages}",
            tail.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>()
        ),
    }
}

/// Pairwise distinctness of the three solutions (and that the nodal one is
/// not a sign flip of the positive one).
pub fn check_distinctness(
    pos: &SolveResult,
    neg: &SolveResult,
    nodal: &SolveResult,
) -> CheckRecord {
    let scale = pos.u.sup();
    let threshold = 0.1 * scale;
    let mut dists = [
        ("pos-neg u", pos.u.sup_diff(&neg.u)),
        ("pos-neg v", pos.v.sup_diff(&neg.v)),
        ("pos-nodal u", pos.u.sup_diff(&nodal.u)),
        ("pos-nodal v", pos.v.sup_diff(&nodal.v)),
        ("neg-nodal u", neg.u.sup_diff(&nodal.u)),
        ("neg-nodal v", neg.v.sup_diff(&nodal.v)),
        (
            "nodal-vs-minus-pos u",
            nodal.u.sup_diff(&pos.u.scaled(-1.0)),
        ),
        (
            "nodal-vs-minus-pos v",
            nodal.v.sup_diff(&pos.v.scaled(-1.0)),
        ),
    ];

    dists.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let (worst_name, worst) = dists[0];
    CheckRecord {
        name: "distinctness".into(),
        property: "pairwise sup distances of the three solutions exceed 0.1 of the positive scale"
            .into(),
        outcome: if worst > threshold {
            CheckOutcome::Pass
        } else {
            CheckOutcome::Fail
        },
        worst_node: None,
        slack: worst - threshold,
        tolerance: threshold,
        info: format!("smallest distance {worst:.4e} at {worst_name}"),
    }
}

/// Weak-form identity at a converged pair: testing the equation against
/// every interior hat function reproduces the strong residual scaled by the
/// nodal measure, so the weak residual must sit at measure * strong bound.
pub fn check_weak_form(
    result: &SolveResult,
    op: &EllipticOperator,
    exps: &Exponents,
) -> CheckRecord {
    let grid = result.u.grid();
    let w = grid.measure();
    let (f1, f2) = match crate::nonlinearity::eval_f_eps(&result.u, &result.v, result.eps, exps) {
        Ok(p) => p,
        Err(e) => {
            return CheckRecord {
                name: "weak_form".into(),
                property: "weak-form identity against all hat functions".into(),
                outcome: CheckOutcome::Inconclusive,
                worst_node: None,
                slack: f64::NAN,
                tolerance: 0.0,
                info: e.to_string(),
            }
        }
    };
    let au = op.apply(&result.u);
    let av = op.apply(&result.v);
    let mut worst = 0.0f64;
    let mut worst_node = 0;
    for &id in &grid.interior_ids {
        let r1 = w * (au.values()[id] - f1.values()[id]).abs();
        let r2 = w * (av.values()[id] - f2.values()[id]).abs();
        let r = r1.max(r2);
        if r > worst {
            worst = r;
            worst_node = id;
        }
    }
    // tolerance: the resolvent residual amplified by the operator norm, in
    // the measure-weighted scaling of the weak form
    let tol = w * result.residual_sup.max(1e-10) * op.norm_bound();
    CheckRecord {
        name: "weak_form".into(),
        property: "measure-weighted equation residual against every hat function".into(),
        outcome: if worst <= tol {
            CheckOutcome::Pass
        } else {
            CheckOutcome::Fail
        },
        worst_node: Some(worst_node),
        slack: tol - worst,
        tolerance: tol,
        info: format!("worst weak residual {worst:.3e}"),
    }
}
