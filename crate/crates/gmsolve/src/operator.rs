//! The discrete operator -Δ + I with homogeneous Dirichlet conditions:
//! matrix-free stencil application, a conjugate-gradient resolvent, and the
//! principal eigenpair by inverse power iteration.
//!
//! Unknowns live on a chosen node subset (the interior by default) with the
//! Dirichlet data eliminated, which keeps the matrix symmetric positive
//! definite and the discrete maximum principle exact. The same structure
//! restricted to a sub-region (Dirichlet zero on its complement) drives the
//! per-lobe solves of the nodal branch.

use std::sync::Arc;

use thiserror::Error;

use crate::grid::{Field, Grid};

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("linear solve did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    SolveNonConvergence { residual: f64, iterations: usize },
    #[error("eigen iteration did not converge within {0} iterations")]
    EigenNonConvergence(usize),
    #[error("eigenfunction lost positivity at node {0}")]
    EigenNotPositive(usize),
}

/// Relative residual target for the inner conjugate-gradient solves. Inner
/// solves must sit far below the outer fixed-point tolerances, so CG is
/// driven to near the attainable floor.
const CG_RTOL: f64 = 1e-14;
/// Relative residual that still counts as a successful solve when the
/// iteration cap is reached first.
const CG_RTOL_ACCEPT: f64 = 1e-12;

/// -Δ + I on a node subset, 3-point (1D) or 5-point (2D) stencil, with zero
/// Dirichlet data on all other nodes eliminated.
#[derive(Debug)]
pub struct EllipticOperator {
    grid: Arc<Grid>,
    /// Nodes carrying unknowns, ascending.
    unknowns: Vec<usize>,
    /// Unknown-indexed neighbor slots (usize::MAX where the neighbor is a
    /// Dirichlet node or absent).
    nbrs: Vec<[usize; 4]>,
    diag: f64,
    inv_hx2: f64,
    inv_hy2: f64,
}

impl EllipticOperator {
    /// Assembles the operator with unknowns on the grid interior.
    pub fn assemble(grid: &Arc<Grid>) -> EllipticOperator {
        Self::restricted(grid, grid.interior_ids.clone())
    }

    /// Assembles the operator with unknowns on an arbitrary interior subset;
    /// the complement acts as homogeneous Dirichlet data.
    pub fn restricted(grid: &Arc<Grid>, mut unknown_ids: Vec<usize>) -> EllipticOperator {
        unknown_ids.sort_unstable();
        unknown_ids.dedup();
        debug_assert!(unknown_ids.iter().all(|&id| grid.is_interior(id)));
        let mut slot = vec![usize::MAX; grid.num_nodes()];
        for (k, &id) in unknown_ids.iter().enumerate() {
            slot[id] = k;
        }
        let inv_hx2 = 1.0 / (grid.hx * grid.hx);
        let inv_hy2 = if grid.ny > 1 {
            1.0 / (grid.hy * grid.hy)
        } else {
            0.0
        };
        let diag = 2.0 * inv_hx2 + if grid.ny > 1 { 2.0 * inv_hy2 } else { 0.0 } + 1.0;
        let nbrs = unknown_ids
            .iter()
            .map(|&id| {
                let nb = grid.neighbors(id);
                [
                    nb[0].map_or(usize::MAX, |n| slot[n]),
                    nb[1].map_or(usize::MAX, |n| slot[n]),
                    nb[2].map_or(usize::MAX, |n| slot[n]),
                    nb[3].map_or(usize::MAX, |n| slot[n]),
                ]
            })
            .collect();
        EllipticOperator {
            grid: Arc::clone(grid),
            unknowns: unknown_ids,
            nbrs,
            diag,
            inv_hx2,
            inv_hy2,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn unknown_ids(&self) -> &[usize] {
        &self.unknowns
    }

    pub fn num_unknowns(&self) -> usize {
        self.unknowns.len()
    }

    /// Infinity-norm bound of the matrix, used to scale strong-form residuals.
    pub fn norm_bound(&self) -> f64 {
        self.diag + 2.0 * self.inv_hx2 + 2.0 * self.inv_hy2
    }

    /// y = A x on packed unknown vectors.
    pub fn apply_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.unknowns.len());
        for (k, nb) in self.nbrs.iter().enumerate() {
            let mut acc = self.diag * x[k];
            if nb[0] != usize::MAX {
                acc -= self.inv_hx2 * x[nb[0]];
            }
            if nb[1] != usize::MAX {
                acc -= self.inv_hx2 * x[nb[1]];
            }
            if nb[2] != usize::MAX {
                acc -= self.inv_hy2 * x[nb[2]];
            }
            if nb[3] != usize::MAX {
                acc -= self.inv_hy2 * x[nb[3]];
            }
            y[k] = acc;
        }
    }

    /// Applies the operator to a field (values off the unknown set are
    /// treated as Dirichlet zeros) and returns the result as a field that is
    /// zero off the unknown set.
    pub fn apply(&self, f: &Field) -> Field {
        let x = self.pack(f);
        let mut y = vec![0.0; x.len()];
        self.apply_vec(&x, &mut y);
        self.unpack(&y)
    }

    fn pack(&self, f: &Field) -> Vec<f64> {
        self.unknowns.iter().map(|&id| f.values()[id]).collect()
    }

    fn unpack(&self, x: &[f64]) -> Field {
        let mut out = Field::zeros(&self.grid);
        for (k, &id) in self.unknowns.iter().enumerate() {
            out.values_mut()[id] = x[k];
        }
        out
    }

    /// Solves A u = rhs by conjugate gradients on the unknown set.
    ///
    /// The iteration cap is 10x the number of unknowns; failure to reach a
    /// relative residual of 1e-12 by then is reported as nonconvergence with
    /// the last residual attached.
    pub fn solve(&self, rhs: &Field) -> Result<Field, OperatorError> {
        let b = self.pack(rhs);
        let x = self.solve_vec(&b)?;
        Ok(self.unpack(&x))
    }

    /// Packed-vector form of [`EllipticOperator::solve`].
    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>, OperatorError> {
        let m = b.len();
        debug_assert_eq!(m, self.unknowns.len());
        let nb = l2(b);
        let mut x = vec![0.0; m];
        if nb == 0.0 {
            return Ok(x);
        }
        let mut r = b.to_vec();
        let mut p = r.clone();
        let mut ap = vec![0.0; m];
        let mut rs = dot(&r, &r);
        let cap = 10 * m;
        let target = CG_RTOL * nb;
        let mut it = 0;
        while it < cap {
            if rs.sqrt() <= target {
                return Ok(x);
            }
            self.apply_vec(&p, &mut ap);
            let alpha = rs / dot(&p, &ap);
            for k in 0..m {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            let rs_new = dot(&r, &r);
            let beta = rs_new / rs;
            rs = rs_new;
            for k in 0..m {
                p[k] = r[k] + beta * p[k];
            }
            it += 1;
        }
        let rel = rs.sqrt() / nb;
        if rel <= CG_RTOL_ACCEPT {
            Ok(x)
        } else {
            Err(OperatorError::SolveNonConvergence {
                residual: rel,
                iterations: it,
            })
        }
    }

    /// Rayleigh quotient <A w, w> / <w, w> over the unknown set.
    pub fn rayleigh(&self, w: &Field) -> f64 {
        let x = self.pack(w);
        let mut ax = vec![0.0; x.len()];
        self.apply_vec(&x, &mut ax);
        dot(&ax, &x) / dot(&x, &x)
    }

    /// Principal eigenpair by inverse power iteration from a positive start.
    ///
    /// Stops when successive Rayleigh quotients differ by at most `tol`.
    /// The eigenfunction comes back positive on the unknown set and
    /// sup-normalized to 1.
    pub fn principal_eigenpair(&self, tol: f64) -> Result<EigenPair, OperatorError> {
        let m = self.num_unknowns();
        let mut w = vec![1.0; m];
        let mut lambda = f64::INFINITY;
        let cap = 10_000;
        let mut iterations = 0;
        for it in 1..=cap {
            let mut next = self.solve_vec(&w)?;
            let nrm = l2(&next);
            for v in next.iter_mut() {
                *v /= nrm;
            }
            let mut aw = vec![0.0; m];
            self.apply_vec(&next, &mut aw);
            let rq = dot(&aw, &next) / dot(&next, &next);
            w = next;
            iterations = it;
            if (rq - lambda).abs() <= tol {
                lambda = rq;
                break;
            }
            lambda = rq;
            if it == cap {
                return Err(OperatorError::EigenNonConvergence(cap));
            }
        }
        let sup = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let sign = if w.iter().sum::<f64>() >= 0.0 {
            1.0
        } else {
            -1.0
        };
        for v in w.iter_mut() {
            *v *= sign / sup;
        }
        if let Some(k) = w.iter().position(|&v| v <= 0.0) {
            return Err(OperatorError::EigenNotPositive(self.unknowns[k]));
        }
        Ok(EigenPair {
            lambda1: lambda,
            phi1: self.unpack(&w),
            iterations,
        })
    }

    /// Shape of the second eigenfunction (one nodal line), produced by
    /// inverse power iteration deflated against the principal eigenfunction.
    /// Crate-internal: it exists only to seed the sign-changing branch.
    /// Sup-normalized, sign fixed so the lowest-coordinate lobe is negative.
    pub(crate) fn second_eigen_shape(
        &self,
        phi1: &Field,
        tol: f64,
    ) -> Result<Field, OperatorError> {
        let m = self.num_unknowns();
        let p1 = self.pack(phi1);
        let p1n = dot(&p1, &p1);
        // antisymmetric start along the longest axis picks the first excited
        // mode on non-square boxes
        let (cx, cy) = match self.grid.domain {
            crate::grid::Domain::Interval { length } => (length / 2.0, 0.0),
            crate::grid::Domain::Rectangle { lx, ly } => (lx / 2.0, ly / 2.0),
        };
        let along_x = match self.grid.domain {
            crate::grid::Domain::Interval { .. } => true,
            crate::grid::Domain::Rectangle { lx, ly } => lx >= ly,
        };
        let mut w: Vec<f64> = self
            .unknowns
            .iter()
            .map(|&id| {
                let (x, y) = self.grid.coords[id];
                if along_x {
                    x - cx
                } else {
                    y - cy
                }
            })
            .collect();
        let mut lambda = f64::INFINITY;
        let cap = 10_000;
        for it in 0..cap {
            let mut next = self.solve_vec(&w)?;
            let proj = dot(&next, &p1) / p1n;
            for (v, q) in next.iter_mut().zip(&p1) {
                *v -= proj * q;
            }
            let nrm = l2(&next);
            for v in next.iter_mut() {
                *v /= nrm;
            }
            let mut aw = vec![0.0; m];
            self.apply_vec(&next, &mut aw);
            let rq = dot(&aw, &next) / dot(&next, &next);
            let done = (rq - lambda).abs() <= tol;
            w = next;
            lambda = rq;
            if done {
                break;
            }
            if it + 1 == cap {
                return Err(OperatorError::EigenNonConvergence(cap));
            }
        }
        let sup = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let first = w
            .iter()
            .find(|v| v.abs() > 1e-8 * sup)
            .copied()
            .unwrap_or(1.0);
        let sign = if first < 0.0 { 1.0 } else { -1.0 };
        for v in w.iter_mut() {
            *v *= sign / sup;
        }
        Ok(self.unpack(&w))
    }
}

/// Smallest Dirichlet eigenvalue of -Δ+I and its positive eigenfunction.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda1: f64,
    pub phi1: Field,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use rand::{Rng, SeedableRng};

    fn interval_op(n: usize) -> (Arc<Grid>, EllipticOperator) {
        let g = Grid::build_shared(Domain::Interval { length: 1.0 }, n).unwrap();
        let op = EllipticOperator::assemble(&g);
        (g, op)
    }

    #[test]
    fn apply_is_exact_on_quadratics() {
        // f = x(1-x): -f'' + f = 2 + x(1-x); the second difference of a
        // quadratic is exact, so the stencil reproduces it to rounding.
        let (g, op) = interval_op(41);
        let f = Field::from_fn(&g, |x, _| x * (1.0 - x));
        let af = op.apply(&f);
        for &id in &g.interior_ids {
            let x = g.coords[id].0;
            let exact = 2.0 + x * (1.0 - x);
            assert!(
                (af.values()[id] - exact).abs() < 1e-10,
                "node {id}: {} vs {exact}",
                af.values()[id]
            );
        }
    }

    #[test]
    fn apply_is_exact_on_separable_quadratics_2d() {
        // f = x(1-x) y(1-y) vanishes on the boundary and each axis factor is
        // quadratic, so the 5-point stencil reproduces -Δf + f exactly:
        // -Δf = 2y(1-y) + 2x(1-x)
        let g = Grid::build_shared(Domain::Rectangle { lx: 1.0, ly: 1.0 }, 17).unwrap();
        let op = EllipticOperator::assemble(&g);
        let f = Field::from_fn(&g, |x, y| x * (1.0 - x) * y * (1.0 - y));
        let af = op.apply(&f);
        for &id in &g.interior_ids {
            let (x, y) = g.coords[id];
            let exact = 2.0 * y * (1.0 - y) + 2.0 * x * (1.0 - x) + f.values()[id];
            assert!(
                (af.values()[id] - exact).abs() < 1e-10,
                "node {id}: {} vs {exact}",
                af.values()[id]
            );
        }
    }

    #[test]
    fn apply_zero_is_zero() {
        let (g, op) = interval_op(11);
        let z = Field::zeros(&g);
        assert_eq!(op.apply(&z).sup(), 0.0);
    }

    #[test]
    fn stencil_is_symmetric() {
        let g = Grid::build_shared(Domain::Rectangle { lx: 1.0, ly: 0.7 }, 9).unwrap();
        let op = EllipticOperator::assemble(&g);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut rand_field = || {
            let mut f = Field::zeros(&g);
            for &id in &g.interior_ids {
                f.values_mut()[id] = rng.gen_range(-1.0..1.0);
            }
            f
        };
        let f = rand_field();
        let h = rand_field();
        let afh: f64 = op
            .apply(&f)
            .values()
            .iter()
            .zip(h.values())
            .map(|(a, b)| a * b)
            .sum();
        let fah: f64 = f
            .values()
            .iter()
            .zip(op.apply(&h).values())
            .map(|(a, b)| a * b)
            .sum();
        assert!((afh - fah).abs() <= 1e-12 * afh.abs().max(1.0));
    }

    #[test]
    fn resolvent_matches_analytic_torsion_solution() {
        // -u'' + u = 1 on (0,1): u = 1 - cosh(x-1/2)/cosh(1/2)
        let (g, op) = interval_op(201);
        let mut rhs = Field::zeros(&g);
        for &id in &g.interior_ids {
            rhs.values_mut()[id] = 1.0;
        }
        let u = op.solve(&rhs).unwrap();
        let mut err = 0.0f64;
        for (id, &(x, _)) in g.coords.iter().enumerate() {
            let exact = 1.0 - ((x - 0.5).cosh() / 0.5f64.cosh());
            err = err.max((u.values()[id] - exact).abs());
        }
        assert!(err <= 1e-4, "sup error {err}");
        let mid = u.values()[g.num_nodes() / 2];
        assert!((mid - 0.113181).abs() < 1e-4);
    }

    #[test]
    fn resolvent_of_zero_and_linearity() {
        let (g, op) = interval_op(41);
        let z = Field::zeros(&g);
        assert_eq!(op.solve(&z).unwrap().sup(), 0.0);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut f = Field::zeros(&g);
        let mut h = Field::zeros(&g);
        for &id in &g.interior_ids {
            f.values_mut()[id] = rng.gen_range(-1.0..1.0);
            h.values_mut()[id] = rng.gen_range(-1.0..1.0);
        }
        let (a, b) = (1.7, -0.3);
        let mut comb = Field::zeros(&g);
        for id in 0..g.num_nodes() {
            comb.values_mut()[id] = a * f.values()[id] + b * h.values()[id];
        }
        let lhs = op.solve(&comb).unwrap();
        let uf = op.solve(&f).unwrap();
        let uh = op.solve(&h).unwrap();
        let mut dev = 0.0f64;
        for id in 0..g.num_nodes() {
            dev = dev.max((lhs.values()[id] - a * uf.values()[id] - b * uh.values()[id]).abs());
        }
        assert!(dev <= 1e-10, "linearity deviation {dev}");
    }

    #[test]
    fn discrete_maximum_and_comparison_principles() {
        let (g, op) = interval_op(31);
        let mut rhs1 = Field::zeros(&g);
        let mut rhs2 = Field::zeros(&g);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for &id in &g.interior_ids {
            let r = rng.gen_range(0.0..1.0);
            rhs1.values_mut()[id] = r;
            rhs2.values_mut()[id] = r + rng.gen_range(0.0..0.5);
        }
        let u1 = op.solve(&rhs1).unwrap();
        let u2 = op.solve(&rhs2).unwrap();
        for &id in &g.interior_ids {
            assert!(u1.values()[id] > 0.0, "positivity at {id}");
            assert!(
                u2.values()[id] >= u1.values()[id] - 1e-12,
                "comparison at {id}"
            );
        }
    }

    #[test]
    fn principal_eigenpair_on_unit_interval() {
        let g = Grid::build_shared(Domain::Interval { length: 1.0 }, 401).unwrap();
        let op = EllipticOperator::assemble(&g);
        let pair = op.principal_eigenpair(1e-12).unwrap();
        let analytic = 1.0 + std::f64::consts::PI.powi(2);
        assert!(
            (pair.lambda1 - analytic).abs() < 5e-3,
            "lambda1 {} vs {analytic}",
            pair.lambda1
        );
        assert!(pair.lambda1 > 1.0);
        // positive on interior, sup-normalized, peak at the midpoint
        let vals = pair.phi1.values();
        for &id in &g.interior_ids {
            assert!(vals[id] > 0.0);
        }
        let mid = g.num_nodes() / 2;
        assert_eq!(vals[mid], 1.0);
        // Rayleigh self-consistency
        assert!((op.rayleigh(&pair.phi1) - pair.lambda1).abs() <= 1e-10);
    }

    #[test]
    fn eigenvalue_error_shrinks_at_second_order() {
        let analytic = 1.0 + std::f64::consts::PI.powi(2);
        let errs: Vec<f64> = [101usize, 201]
            .iter()
            .map(|&n| {
                let g = Grid::build_shared(Domain::Interval { length: 1.0 }, n).unwrap();
                let op = EllipticOperator::assemble(&g);
                (op.principal_eigenpair(1e-13).unwrap().lambda1 - analytic).abs()
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!((3.5..4.5).contains(&ratio), "O(h^2) ratio {ratio}");
    }

    #[test]
    fn principal_eigenpair_on_unit_square() {
        // lambda1 = 1 + 2 pi^2 on the unit square
        let g = Grid::build_shared(Domain::Rectangle { lx: 1.0, ly: 1.0 }, 41).unwrap();
        let op = EllipticOperator::assemble(&g);
        let pair = op.principal_eigenpair(1e-12).unwrap();
        let analytic = 1.0 + 2.0 * std::f64::consts::PI.powi(2);
        assert!(
            (pair.lambda1 - analytic).abs() / analytic < 1e-2,
            "lambda1 {} vs {analytic}",
            pair.lambda1
        );
        for &id in &g.interior_ids {
            assert!(pair.phi1.values()[id] > 0.0);
        }
    }

    #[test]
    fn second_shape_changes_sign_once_in_1d() {
        let (g, op) = interval_op(101);
        let pair = op.principal_eigenpair(1e-12).unwrap();
        let psi = op.second_eigen_shape(&pair.phi1, 1e-12).unwrap();
        let vals = psi.values();
        let mut flips = 0;
        let mut last = 0.0f64;
        for &id in &g.interior_ids {
            let v = vals[id];
            if v.abs() > 1e-6 {
                if last != 0.0 && v.signum() != last.signum() {
                    flips += 1;
                }
                last = v;
            }
        }
        assert_eq!(flips, 1, "one interior sign change");
        // Rayleigh close to the second analytic eigenvalue 1 + 4 pi^2
        let rq = op.rayleigh(&psi);
        let second = 1.0 + 4.0 * std::f64::consts::PI.powi(2);
        assert!((rq - second).abs() / second < 1e-2, "rq {rq}");
    }

    #[test]
    fn operator_and_fields_are_share_safe() {
        // immutable after assembly: parallel solves on one operator are part
        // of the contract
        fn assert_share<T: Send + Sync>() {}
        assert_share::<Grid>();
        assert_share::<Field>();
        assert_share::<EllipticOperator>();

        let (g, op) = interval_op(41);
        let op = std::sync::Arc::new(op);
        let mut rhs = Field::zeros(&g);
        for &id in &g.interior_ids {
            rhs.values_mut()[id] = 1.0;
        }
        let rhs = std::sync::Arc::new(rhs);
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let op = std::sync::Arc::clone(&op);
                let rhs = std::sync::Arc::clone(&rhs);
                std::thread::spawn(move || op.solve(&rhs).unwrap().sup())
            })
            .collect();
        let sups: Vec<f64> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert!(sups.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn restricted_operator_solves_on_a_lobe() {
        // Dirichlet problem on half the interval matches the solve on the
        // restricted unknown set.
        let g = Grid::build_shared(Domain::Interval { length: 1.0 }, 41).unwrap();
        let mid = g.num_nodes() / 2;
        let right: Vec<usize> = g
            .interior_ids
            .iter()
            .copied()
            .filter(|&id| id > mid)
            .collect();
        let op = EllipticOperator::restricted(&g, right.clone());
        let b = vec![1.0; right.len()];
        let x = op.solve_vec(&b).unwrap();
        // compare with a grid built on (0, 1/2): same h, same torsion values
        let gh = Grid::build_shared(Domain::Interval { length: 0.5 }, 21).unwrap();
        let oph = EllipticOperator::assemble(&gh);
        let mut rhs = Field::zeros(&gh);
        for &id in &gh.interior_ids {
            rhs.values_mut()[id] = 1.0;
        }
        let uh = oph.solve(&rhs).unwrap();
        for (k, &id) in right.iter().enumerate() {
            let local = id - mid; // 1..=19 on the half grid
            assert!(
                (x[k] - uh.values()[local]).abs() < 1e-11,
                "lobe solve node {id}"
            );
        }
    }
}
