//! Exponent validation and evaluation of the singular, regularized, and
//! homotopy right-hand sides.
//!
//! The system couples the components through signs and power laws:
//!
//! ```text
//!   F1 = sgn(v) (|u|+e)^a1 / (|v|+e)^b1
//!   F2 = sgn(u) (|u|+e)^a2 / (|v|+e)^b2
//! ```
//!
//! with e = 0 giving the singular right-hand side proper. sgn(0) = 0
//! throughout, so the zero pair is visibly not a solution and evaluation at
//! vanishing nodes never produces a spurious sign. With e = 0 a vanishing
//! node is a hard error rather than something to clamp over: silently
//! clamping would mask a violation of the nonvanishing property the solver
//! is supposed to certify.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Field;

#[derive(Debug, Error)]
pub enum NonlinearityError {
    #[error("exponent conditions violated: {}", .0.join("; "))]
    InvalidExponents(Vec<String>),
    #[error("singular evaluation: component vanishes at interior node {node} with eps = 0")]
    Singularity { node: usize },
}

/// The four exponents, validated against the admissibility conditions
/// a_i in (-1,1), b_i in (0,1), a_i + b_i < 1, -1 < a_i - b_i < 0.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Exponents {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Both alphas nonpositive: gates the uniqueness and nodal sign claims.
    pub alpha_nonpositive: bool,
}

impl Exponents {
    pub fn validate(a1: f64, a2: f64, b1: f64, b2: f64) -> Result<Exponents, NonlinearityError> {
        let mut bad = Vec::new();
        for (name, a, b) in [("1", a1, b1), ("2", a2, b2)] {
            if !a.is_finite() || !b.is_finite() {
                bad.push(format!("alpha{name} = {a}, beta{name} = {b}: not finite"));
                continue;
            }
            if a <= -1.0 || a >= 1.0 {
                bad.push(format!("alpha{name} = {a} not in (-1, 1)"));
            }
            if b <= 0.0 || b >= 1.0 {
                bad.push(format!("beta{name} = {b} not in (0, 1)"));
            }
            if a + b >= 1.0 {
                bad.push(format!("alpha{name}+beta{name} = {} not < 1", a + b));
            }
            if a - b >= 0.0 {
                bad.push(format!("alpha{name}-beta{name} = {} not < 0", a - b));
            }
            if a - b <= -1.0 {
                bad.push(format!("alpha{name}-beta{name} = {} not > -1", a - b));
            }
        }
        if !bad.is_empty() {
            return Err(NonlinearityError::InvalidExponents(bad));
        }
        Ok(Exponents {
            alpha1: a1,
            alpha2: a2,
            beta1: b1,
            beta2: b2,
            alpha_nonpositive: a1 <= 0.0 && a2 <= 0.0,
        })
    }

    pub fn pair(&self, i: usize) -> (f64, f64) {
        match i {
            1 => (self.alpha1, self.beta1),
            2 => (self.alpha2, self.beta2),
            _ => panic!("component index must be 1 or 2"),
        }
    }
}

/// Parameters of the homotopy right-hand side connecting the regularized
/// system (t = 1) to a solvable or unsolvable base problem (t = 0).
#[derive(Debug, Clone, Copy)]
pub struct HomotopyParams {
    /// Homotopy parameter in [0, 1].
    pub t: f64,
    pub theta: Theta,
    /// Regularization, strictly inside (0, 1).
    pub epsilon: f64,
    /// Principal eigenvalue of -Δ+I, fed to the theta = 1 base term.
    pub lambda1: f64,
}

/// The homotopy's branch selector; exactly 0 or 1 by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theta {
    Zero,
    One,
}

impl HomotopyParams {
    pub fn new(t: f64, theta: Theta, epsilon: f64, lambda1: f64) -> HomotopyParams {
        assert!((0.0..=1.0).contains(&t), "t must lie in [0,1]");
        assert!(
            epsilon > 0.0 && epsilon < 1.0,
            "epsilon must lie strictly inside (0,1)"
        );
        HomotopyParams {
            t,
            theta,
            epsilon,
            lambda1,
        }
    }
}

pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Evaluates the (regularized) right-hand side pair nodewise.
///
/// With eps = 0 every interior node must carry nonvanishing u and v; the
/// first offending node is reported otherwise.
pub fn eval_f_eps(
    u: &Field,
    v: &Field,
    eps: f64,
    exps: &Exponents,
) -> Result<(Field, Field), NonlinearityError> {
    assert!(u.same_grid(v), "component fields on different grids");
    assert!(eps >= 0.0);
    let grid = u.grid().clone();
    if eps == 0.0 {
        for &id in &grid.interior_ids {
            if u.values()[id] == 0.0 || v.values()[id] == 0.0 {
                return Err(NonlinearityError::Singularity { node: id });
            }
        }
    }
    let mut f1 = Field::zeros(&grid);
    let mut f2 = Field::zeros(&grid);
    for &id in &grid.interior_ids {
        let uu = u.values()[id];
        let vv = v.values()[id];
        let au = uu.abs() + eps;
        let av = vv.abs() + eps;
        f1.values_mut()[id] = sgn(vv) * au.powf(exps.alpha1) / av.powf(exps.beta1);
        f2.values_mut()[id] = sgn(uu) * au.powf(exps.alpha2) / av.powf(exps.beta2);
    }
    Ok((f1, f2))
}

/// Evaluates the homotopy right-hand side pair nodewise:
///
/// ```text
///   F1 = t sgn(v)(|u|+e)^a1/(|v|+e)^b1 + (1-t) s (1 + theta l1 u+)
///   F2 = t sgn(u)(|u|+e)^a2/(|v|+e)^b2 + (1-t) s'(1 + theta l1 v+)
/// ```
///
/// where the base-term sign factor is sgn(v) (resp. sgn(u)) when theta = 0
/// and the constant 1 when theta = 1, so the theta = 1, t = 0 case reduces
/// to the decoupled pair (1 + l1 u+, 1 + l1 v+), which never vanishes.
pub fn eval_homotopy(
    u: &Field,
    v: &Field,
    params: &HomotopyParams,
    exps: &Exponents,
) -> (Field, Field) {
    assert!(u.same_grid(v));
    let grid = u.grid().clone();
    let e = params.epsilon;
    let t = params.t;
    let l1 = params.lambda1;
    let mut f1 = Field::zeros(&grid);
    let mut f2 = Field::zeros(&grid);
    for &id in &grid.interior_ids {
        let uu = u.values()[id];
        let vv = v.values()[id];
        let au = uu.abs() + e;
        let av = vv.abs() + e;
        let sing1 = sgn(vv) * au.powf(exps.alpha1) / av.powf(exps.beta1);
        let sing2 = sgn(uu) * au.powf(exps.alpha2) / av.powf(exps.beta2);
        let (s1, s2, th) = match params.theta {
            Theta::Zero => (sgn(vv), sgn(uu), 0.0),
            Theta::One => (1.0, 1.0, 1.0),
        };
        f1.values_mut()[id] = t * sing1 + (1.0 - t) * s1 * (1.0 + th * l1 * uu.max(0.0));
        f2.values_mut()[id] = t * sing2 + (1.0 - t) * s2 * (1.0 + th * l1 * vv.max(0.0));
    }
    (f1, f2)
}
