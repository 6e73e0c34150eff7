//! Cell-centered structured grids on intervals and rectangles, with the
//! conservative difference operators shared by every solver.
//!
//! Boundary handling is homogeneous Neumann via ghost-cell reflection: a
//! ghost value equals its interior neighbor, so every boundary face carries
//! exactly zero flux. This makes the discrete divergence theorem
//! `∫ div F = 0` structural rather than approximate, and the 3/5-point
//! Laplacian is exactly `divergence ∘ gradient_faces`.

use thiserror::Error;

use crate::exec::{fill_bands, ExecMode};
use crate::numeric::{pairwise_sum, pairwise_sum_by};

/// Spatial dimension of the domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dim {
    One,
    Two,
}

/// Errors from grid construction and field reductions.
#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid needs at least 4 cells per axis, got nx={nx}, ny={ny}")]
    TooFewCells { nx: usize, ny: usize },
    #[error("domain side lengths must be positive and finite, got lx={lx}, ly={ly}")]
    BadLength { lx: f64, ly: f64 },
    #[error("field has {got} values but the grid has {want} cells")]
    WrongCellCount { got: usize, want: usize },
    #[error("field contains a non-finite value at cell {index}")]
    NonFinite { index: usize },
    #[error("exponent p={p} is outside [1, ∞]")]
    BadExponent { p: f64 },
    #[error("fields live on different grids")]
    GridMismatch,
}

/// Uniform cell-centered discretization of an interval or rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    dim: Dim,
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    dx: f64,
    dy: f64,
}

impl GridSpec {
    /// 1D interval `[0, lx]` with `nx` cells.
    pub fn line(nx: usize, lx: f64) -> Result<Self, GridError> {
        if nx < 4 {
            return Err(GridError::TooFewCells { nx, ny: 1 });
        }
        if !(lx.is_finite() && lx > 0.0) {
            return Err(GridError::BadLength { lx, ly: 1.0 });
        }
        Ok(Self {
            dim: Dim::One,
            nx,
            ny: 1,
            lx,
            ly: 1.0,
            dx: lx / nx as f64,
            dy: 1.0,
        })
    }

    /// 2D rectangle `[0, lx] × [0, ly]` with `nx × ny` cells.
    pub fn rect(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self, GridError> {
        if nx < 4 || ny < 4 {
            return Err(GridError::TooFewCells { nx, ny });
        }
        if !(lx.is_finite() && lx > 0.0 && ly.is_finite() && ly > 0.0) {
            return Err(GridError::BadLength { lx, ly });
        }
        Ok(Self {
            dim: Dim::Two,
            nx,
            ny,
            lx,
            ly,
            dx: lx / nx as f64,
            dy: ly / ny as f64,
        })
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    /// 1 or 2.
    pub fn dim_count(&self) -> usize {
        match self.dim {
            Dim::One => 1,
            Dim::Two => 2,
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// |Ω|: lx in 1D, lx·ly in 2D (ly = 1 in 1D so lx·ly works everywhere).
    pub fn measure(&self) -> f64 {
        self.lx * self.ly
    }

    /// Volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy
    }

    /// Smallest cell extent, the `h` of stability bounds.
    pub fn h_min(&self) -> f64 {
        match self.dim {
            Dim::One => self.dx,
            Dim::Two => self.dx.min(self.dy),
        }
    }

    /// Flat index of cell `(i, j)`.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    /// x-coordinate of the center of column `i`.
    pub fn cell_x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    /// y-coordinate of the center of row `j`.
    pub fn cell_y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dy
    }
}

/// A scalar field, one value per cell center.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_cells()],
        }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.n_cells()],
        }
    }

    /// Sample `f(x, y)` at cell centers (y is 0.5 in 1D).
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.ny {
            let y = grid.cell_y(j);
            for i in 0..grid.nx {
                values.push(f(grid.cell_x(i), y));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.n_cells() {
            return Err(GridError::WrongCellCount {
                got: values.len(),
                want: grid.n_cells(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Err if any cell is NaN or infinite.
    pub fn check_finite(&self) -> Result<(), GridError> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(index) => Err(GridError::NonFinite { index }),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Discrete `∫_Ω f`: midpoint rule, exact for cellwise-affine data.
    pub fn integrate(&self) -> Result<f64, GridError> {
        self.check_finite()?;
        Ok(pairwise_sum(&self.values) * self.grid.cell_volume())
    }

    /// `(∫ |f|^p)^(1/p)` for finite p ≥ 1, or max |f| for `p = f64::INFINITY`.
    pub fn lp_norm(&self, p: f64) -> Result<f64, GridError> {
        self.check_finite()?;
        if p == f64::INFINITY {
            return Ok(self.values.iter().fold(0.0, |m, v| m.max(v.abs())));
        }
        if !(p >= 1.0) {
            return Err(GridError::BadExponent { p });
        }
        let vals = &self.values;
        let sum = pairwise_sum_by(vals.len(), &|i| vals[i].abs().powf(p));
        Ok((sum * self.grid.cell_volume()).powf(1.0 / p))
    }

    /// Face-normal central differences; boundary faces are exactly zero
    /// (ghost reflection).
    pub fn gradient_faces(&self) -> FaceField {
        self.gradient_faces_mode(ExecMode::default())
    }

    pub fn gradient_faces_mode(&self, mode: ExecMode) -> FaceField {
        let g = self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let v = &self.values;
        let mut out = FaceField::zeros(g);
        fill_bands(mode, &mut out.fx, nx + 1, |start, band| {
            for (k, o) in band.iter_mut().enumerate() {
                let f = start + k;
                let (i, j) = (f % (nx + 1), f / (nx + 1));
                *o = if i == 0 || i == nx {
                    0.0
                } else {
                    (v[j * nx + i] - v[j * nx + i - 1]) / g.dx
                };
            }
        });
        if ny > 1 {
            fill_bands(mode, &mut out.fy, nx, |start, band| {
                for (k, o) in band.iter_mut().enumerate() {
                    let f = start + k;
                    let (i, j) = (f % nx, f / nx);
                    *o = if j == 0 || j == ny {
                        0.0
                    } else {
                        (v[j * nx + i] - v[(j - 1) * nx + i]) / g.dy
                    };
                }
            });
        }
        out
    }

    /// Second-order Neumann Laplacian. Bitwise equal to
    /// `divergence(gradient_faces(f))` by construction (same expressions in
    /// the same order, fused to skip the face allocation).
    pub fn laplacian(&self) -> Field {
        self.laplacian_mode(ExecMode::default())
    }

    pub fn laplacian_mode(&self, mode: ExecMode) -> Field {
        let g = self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let v = &self.values;
        let mut out = Field::zeros(g);
        fill_bands(mode, &mut out.values, nx, |start, band| {
            for (k, o) in band.iter_mut().enumerate() {
                let c = start + k;
                let (i, j) = (c % nx, c / nx);
                let gxl = if i == 0 { 0.0 } else { (v[c] - v[c - 1]) / g.dx };
                let gxr = if i == nx - 1 {
                    0.0
                } else {
                    (v[c + 1] - v[c]) / g.dx
                };
                let xterm = (gxr - gxl) / g.dx;
                *o = if ny > 1 {
                    let gyl = if j == 0 { 0.0 } else { (v[c] - v[c - nx]) / g.dy };
                    let gyr = if j == ny - 1 {
                        0.0
                    } else {
                        (v[c + nx] - v[c]) / g.dy
                    };
                    xterm + (gyr - gyl) / g.dy
                } else {
                    xterm
                };
            }
        });
        out
    }

    /// `∫ |∇f|^q` with the gradient reconstructed at cell centers by
    /// averaging each cell's interior faces (boundary cells average over
    /// their single interior face, keeping `f(x) = x` at exactly unit
    /// gradient everywhere).
    pub fn grad_norm_q(&self, q: f64) -> Result<f64, GridError> {
        if !(q > 1.0) {
            return Err(GridError::BadExponent { p: q });
        }
        let g = self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let v = &self.values;
        let cell_grad = |c: usize| -> f64 {
            let (i, j) = (c % nx, c / nx);
            let gx = match i {
                0 => (v[c + 1] - v[c]) / g.dx,
                _ if i == nx - 1 => (v[c] - v[c - 1]) / g.dx,
                _ => ((v[c + 1] - v[c]) / g.dx + (v[c] - v[c - 1]) / g.dx) / 2.0,
            };
            if ny == 1 {
                gx.abs()
            } else {
                let gy = match j {
                    0 => (v[c + nx] - v[c]) / g.dy,
                    _ if j == ny - 1 => (v[c] - v[c - nx]) / g.dy,
                    _ => ((v[c + nx] - v[c]) / g.dy + (v[c] - v[c - nx]) / g.dy) / 2.0,
                };
                gx.hypot(gy)
            }
        };
        let sum = pairwise_sum_by(v.len(), &|c| cell_grad(c).powf(q));
        Ok(sum * g.cell_volume())
    }
}

/// One value per cell face and axis. Boundary faces are pinned to zero,
/// which encodes the no-flux boundary condition.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField {
    grid: GridSpec,
    /// x-normal faces, `(nx+1) × ny`, index `j*(nx+1) + i`.
    fx: Vec<f64>,
    /// y-normal faces, `nx × (ny+1)`, index `j*nx + i`. All zero in 1D.
    fy: Vec<f64>,
}

impl FaceField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            fx: vec![0.0; (grid.nx + 1) * grid.ny],
            fy: vec![0.0; grid.nx * (grid.ny + 1)],
        }
    }

    /// Build from face-value functions; boundary faces stay zero regardless
    /// of what the functions return there.
    pub fn from_fn(
        grid: GridSpec,
        fx: impl Fn(usize, usize) -> f64,
        fy: impl Fn(usize, usize) -> f64,
    ) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.ny {
            for i in 1..grid.nx {
                out.fx[j * (grid.nx + 1) + i] = fx(i, j);
            }
        }
        if grid.ny > 1 {
            for j in 1..grid.ny {
                for i in 0..grid.nx {
                    out.fy[j * grid.nx + i] = fy(i, j);
                }
            }
        }
        out
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// x-face `i` of row `j` (face `i` sits between cells `i-1` and `i`).
    #[inline]
    pub fn fx(&self, i: usize, j: usize) -> f64 {
        self.fx[j * (self.grid.nx + 1) + i]
    }

    /// y-face `j` of column `i`.
    #[inline]
    pub fn fy(&self, i: usize, j: usize) -> f64 {
        self.fy[j * self.grid.nx + i]
    }

    pub(crate) fn fx_slice(&self) -> &[f64] {
        &self.fx
    }

    pub(crate) fn fy_slice(&self) -> &[f64] {
        &self.fy
    }

    pub(crate) fn fx_mut(&mut self) -> &mut Vec<f64> {
        &mut self.fx
    }

    pub(crate) fn fy_mut(&mut self) -> &mut Vec<f64> {
        &mut self.fy
    }

    /// Largest |face value| over both axes.
    pub fn max_abs(&self) -> f64 {
        let mx = self.fx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.fy.iter().fold(mx, |m, v| m.max(v.abs()))
    }

    /// Conservative divergence: net outward flux per cell volume.
    pub fn divergence(&self) -> Field {
        self.divergence_mode(ExecMode::default())
    }

    pub fn divergence_mode(&self, mode: ExecMode) -> Field {
        let g = self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let (fx, fy) = (&self.fx, &self.fy);
        let mut out = Field::zeros(g);
        fill_bands(mode, &mut out.values, nx, |start, band| {
            for (k, o) in band.iter_mut().enumerate() {
                let c = start + k;
                let (i, j) = (c % nx, c / nx);
                let xterm = (fx[j * (nx + 1) + i + 1] - fx[j * (nx + 1) + i]) / g.dx;
                *o = if ny > 1 {
                    xterm + (fy[(j + 1) * nx + i] - fy[j * nx + i]) / g.dy
                } else {
                    xterm
                };
            }
        });
        out
    }
}
