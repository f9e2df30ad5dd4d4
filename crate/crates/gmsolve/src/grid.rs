//! Discrete domain: uniform tensor grids on intervals and rectangles, the
//! exact boundary-distance function, the near-boundary layer, and discrete
//! norms.
//!
//! Only boxes are supported; the distance to the boundary is then the
//! closed-form minimum over edges, so the pointwise inequalities the rest of
//! the crate checks are exact nodewise statements, not quadrature artifacts.

use std::io::{BufRead, Write};
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("node count per axis must be at least 3, got {0}")]
    BadNodeCount(usize),
    #[error("domain extents must be strictly positive, got {0}")]
    BadExtent(f64),
    #[error("boundary layer width {delta} outside (0, {max}) for this domain")]
    BadDelta { delta: f64, max: f64 },
    #[error("field defined on a different grid")]
    GridMismatch,
    #[error("csv read: {0}")]
    Csv(String),
}

/// Box domain: an interval (0, L) or a rectangle (0, Lx) x (0, Ly).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Interval { length: f64 },
    Rectangle { lx: f64, ly: f64 },
}

impl Domain {
    pub fn validate(&self) -> Result<(), GridError> {
        for e in self.extents() {
            if !e.is_finite() || e <= 0.0 {
                return Err(GridError::BadExtent(e));
            }
        }
        Ok(())
    }

    fn extents(&self) -> Vec<f64> {
        match *self {
            Domain::Interval { length } => vec![length],
            Domain::Rectangle { lx, ly } => vec![lx, ly],
        }
    }

    pub fn min_extent(&self) -> f64 {
        self.extents().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn is_1d(&self) -> bool {
        matches!(self, Domain::Interval { .. })
    }
}

/// Uniform tensor grid with an interior/boundary partition and the exact
/// distance-to-boundary at every node.
///
/// Nodes are stored row-major: in 2D, id = j*nx + i with x varying fastest.
/// Fields keep one value per node; Dirichlet data lives on `boundary_ids`.
#[derive(Debug)]
pub struct Grid {
    pub domain: Domain,
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    /// Node coordinates; y is 0 for intervals.
    pub coords: Vec<(f64, f64)>,
    pub interior_ids: Vec<usize>,
    pub boundary_ids: Vec<usize>,
    /// Distance to the boundary; exactly 0 on boundary nodes.
    pub d: Vec<f64>,
}

impl Grid {
    /// Builds a uniform grid with `n` nodes per axis.
    pub fn build(domain: Domain, n: usize) -> Result<Grid, GridError> {
        domain.validate()?;
        if n < 3 {
            return Err(GridError::BadNodeCount(n));
        }
        let (nx, ny, lx, ly) = match domain {
            Domain::Interval { length } => (n, 1, length, 0.0),
            Domain::Rectangle { lx, ly } => (n, n, lx, ly),
        };
        let hx = lx / (nx - 1) as f64;
        let hy = if ny > 1 { ly / (ny - 1) as f64 } else { 0.0 };

        let total = nx * ny;
        let mut coords = Vec::with_capacity(total);
        let mut interior_ids = Vec::new();
        let mut boundary_ids = Vec::new();
        let mut d = Vec::with_capacity(total);
        for j in 0..ny {
            for i in 0..nx {
                let x = i as f64 * hx;
                let y = j as f64 * hy;
                coords.push((x, y));
                let on_boundary = i == 0 || i == nx - 1 || (ny > 1 && (j == 0 || j == ny - 1));
                let id = j * nx + i;
                if on_boundary {
                    boundary_ids.push(id);
                    d.push(0.0);
                } else {
                    interior_ids.push(id);
                    let mut dist = x.min(lx - x);
                    if ny > 1 {
                        dist = dist.min(y).min(ly - y);
                    }
                    d.push(dist.max(0.0));
                }
            }
        }
        Ok(Grid {
            domain,
            nx,
            ny,
            hx,
            hy,
            coords,
            interior_ids,
            boundary_ids,
            d,
        })
    }

    pub fn build_shared(domain: Domain, n: usize) -> Result<Arc<Grid>, GridError> {
        Ok(Arc::new(Grid::build(domain, n)?))
    }

    pub fn num_nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_interior(&self, id: usize) -> bool {
        self.d[id] > 0.0
    }

    /// Nodewise measure weight: h in 1D, hx*hy in 2D.
    pub fn measure(&self) -> f64 {
        if self.ny > 1 {
            self.hx * self.hy
        } else {
            self.hx
        }
    }

    /// Grid-graph neighbors of a node (left, right, down, up).
    pub fn neighbors(&self, id: usize) -> [Option<usize>; 4] {
        let i = id % self.nx;
        let j = id / self.nx;
        [
            (i > 0).then(|| id - 1),
            (i + 1 < self.nx).then(|| id + 1),
            (self.ny > 1 && j > 0).then(|| id - self.nx),
            (self.ny > 1 && j + 1 < self.ny).then(|| id + self.nx),
        ]
    }

    /// Mask of interior nodes with d(x) < delta (the near-boundary layer).
    ///
    /// delta must lie strictly between 0 and half the minimum extent,
    /// otherwise the layer would swallow the whole interior.
    pub fn boundary_layer_mask(&self, delta: f64) -> Result<Vec<bool>, GridError> {
        let max = self.domain.min_extent() / 2.0;
        if !(delta > 0.0 && delta < max) {
            return Err(GridError::BadDelta { delta, max });
        }
        Ok((0..self.num_nodes())
            .map(|id| self.is_interior(id) && self.d[id] < delta)
            .collect())
    }

    /// The boundary distance as a field.
    pub fn distance_field(self: &Arc<Grid>) -> Field {
        Field::new(self, self.d.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    Sup,
    L2,
    H1,
}

/// A grid function: one real value per node.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    /// Wraps values (one per node). Panics on length mismatch or non-finite
    /// entries; finiteness at every node is a type invariant.
    pub fn new(grid: &Arc<Grid>, values: Vec<f64>) -> Field {
        assert_eq!(values.len(), grid.num_nodes(), "field length mismatch");
        assert!(
            values.iter().all(|v| v.is_finite()),
            "field carries non-finite values"
        );
        Field {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn zeros(grid: &Arc<Grid>) -> Field {
        Field {
            grid: Arc::clone(grid),
            values: vec![0.0; grid.num_nodes()],
        }
    }

    /// Evaluates `f(x, y)` at every node.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Field {
        let values = grid.coords.iter().map(|&(x, y)| f(x, y)).collect();
        Field::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid)
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::Sup => self.values.iter().fold(0.0, |m, v| m.max(v.abs())),
            NormKind::L2 => {
                let w = self.grid.measure();
                (self.values.iter().map(|v| w * v * v).sum::<f64>()).sqrt()
            }
            NormKind::H1 => {
                let l2 = self.norm(NormKind::L2);
                (self.h1_seminorm_sq() + l2 * l2).sqrt()
            }
        }
    }

    pub fn sup(&self) -> f64 {
        self.norm(NormKind::Sup)
    }

    /// Squared H1 seminorm from forward differences over grid edges; the
    /// Dirichlet zero extension contributes nothing beyond the boundary.
    fn h1_seminorm_sq(&self) -> f64 {
        let g = &self.grid;
        let w = g.measure();
        let mut acc = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx.saturating_sub(1) {
                let id = j * g.nx + i;
                let fd = (self.values[id + 1] - self.values[id]) / g.hx;
                acc += w * fd * fd;
            }
        }
        if g.ny > 1 {
            for j in 0..g.ny - 1 {
                for i in 0..g.nx {
                    let id = j * g.nx + i;
                    let fd = (self.values[id + g.nx] - self.values[id]) / g.hy;
                    acc += w * fd * fd;
                }
            }
        }
        acc
    }

    pub fn sup_diff(&self, other: &Field) -> f64 {
        assert!(self.same_grid(other));
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn sub(&self, other: &Field) -> Field {
        assert!(self.same_grid(other));
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Field::new(&self.grid, values)
    }

    pub fn scaled(&self, s: f64) -> Field {
        Field::new(&self.grid, self.values.iter().map(|v| s * v).collect())
    }

    /// Writes `x[,y],value` rows, row-major, with round-trip-exact decimals.
    /// A leading comment line carries the config hash when one is given.
    pub fn write_csv(&self, w: &mut dyn Write, config_hash: Option<&str>) -> std::io::Result<()> {
        if let Some(h) = config_hash {
            writeln!(w, "# config_hash={h}")?;
        }
        let two_d = self.grid.ny > 1;
        writeln!(w, "{}", if two_d { "x,y,value" } else { "x,value" })?;
        for (id, &(x, y)) in self.grid.coords.iter().enumerate() {
            if two_d {
                writeln!(w, "{:.17e},{:.17e},{:.17e}", x, y, self.values[id])?;
            } else {
                writeln!(w, "{:.17e},{:.17e}", x, self.values[id])?;
            }
        }
        Ok(())
    }

    /// Reads a field previously written by [`Field::write_csv`] back onto
    /// `grid` (row order must match; comment lines and header are skipped).
    pub fn read_csv(grid: &Arc<Grid>, r: &mut dyn BufRead) -> Result<Field, GridError> {
        let mut values = Vec::with_capacity(grid.num_nodes());
        for line in r.lines() {
            let line = line.map_err(|e| GridError::Csv(e.to_string()))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') || t.starts_with('x') {
                continue;
            }
            let last = t
                .rsplit(',')
                .next()
                .ok_or_else(|| GridError::Csv(format!("malformed row: {t}")))?;
            let v: f64 = last
                .trim()
                .parse()
                .map_err(|_| GridError::Csv(format!("bad value in row: {t}")))?;
            values.push(v);
        }
        if values.len() != grid.num_nodes() {
            return Err(GridError::Csv(format!(
                "expected {} rows, found {}",
                grid.num_nodes(),
                values.len()
            )));
        }
        Ok(Field::new(grid, values))
    }
}
