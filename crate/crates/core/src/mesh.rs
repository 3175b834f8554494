//! Normalized 1D mesh, cell-averaged fields and the two-point flux operator.
//!
//! The domain is the unit interval split into `n` equal cells, so `|Ω| = 1`
//! and the cell width is `h = 1/n`. A [`Field`] holds one value per cell; the
//! grid is implied by its length, which is why two fields are compatible
//! exactly when their lengths agree.
//!
//! The drift-diffusion flux `∇f + f∇V = μ∇(f/μ)` with `μ = e^{-V}` is
//! discretized on edges as
//!
//! ```text
//! F_{i+1/2} = μ_{i+1/2} ((f/μ)_{i+1} - (f/μ)_i) / h,   μ_{i+1/2} = sqrt(μ_i μ_{i+1})
//! ```
//!
//! with zero flux through both boundary edges. The divergence telescopes, so
//! `Σ_i div_i = 0`, and any `f ∝ μ` is an exact steady state.

use std::f64::consts::PI;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform cell-centered grid on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    n_cells: usize,
    h: f64,
    centers: Vec<f64>,
}

impl Grid1D {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::TooFewCells(n_cells));
        }
        let h = 1.0 / n_cells as f64;
        let centers = (0..n_cells).map(|i| (i as f64 + 0.5) * h).collect();
        Ok(Self {
            n_cells,
            h,
            centers,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Samples `f` at every cell center.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            values: self.centers.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn constant(&self, c: f64) -> Field {
        Field {
            values: vec![c; self.n_cells],
        }
    }
}

/// Builds the uniform grid with `n_cells` cells.
pub fn build_grid(n_cells: usize) -> Result<Grid1D> {
    Grid1D::new(n_cells)
}

/// Per-cell samples of a scalar quantity on the uniform unit grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Field {
    values: Vec<f64>,
}

impl Field {
    /// Wraps `values`; rejects fewer than two cells and non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::TooFewCells(values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { values })
    }

    /// Unchecked constructor for values produced by the solver itself.
    pub(crate) fn from_vec(values: Vec<f64>) -> Self {
        debug_assert!(values.len() >= 2);
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Cell width implied by the number of cells.
    pub fn h(&self) -> f64 {
        1.0 / self.values.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.values.iter()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_vec(self.values.iter().map(|&v| f(v)).collect())
    }

    /// Cellwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        check_same_grid(self, other)?;
        Ok(Field::from_vec(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn average(&self) -> f64 {
        cell_average(self)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .fold(f64::NEG_INFINITY, |m, &v| if v > m { v } else { m })
    }

    pub fn min(&self) -> f64 {
        self.values
            .iter()
            .fold(f64::INFINITY, |m, &v| if v < m { v } else { m })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl Index<usize> for Field {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl<'a> IntoIterator for &'a Field {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;

    fn into_iter(self) -> Self::IntoIter {
        self.values.iter()
    }
}

pub(crate) fn check_same_grid(a: &Field, b: &Field) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// Average over the unit domain, `h · Σ f_i`.
pub fn cell_average(f: &Field) -> f64 {
    f.h() * f.values.iter().sum::<f64>()
}

/// `h · Σ |f_i - g_i|`.
pub fn l1_distance(f: &Field, g: &Field) -> Result<f64> {
    check_same_grid(f, g)?;
    Ok(f.h()
        * f.values
            .iter()
            .zip(&g.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

/// `h · Σ (f_i - g_i)²`, the squared discrete L² distance.
pub fn l2_distance_sq(f: &Field, g: &Field) -> Result<f64> {
    check_same_grid(f, g)?;
    Ok(f.h()
        * f.values
            .iter()
            .zip(&g.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>())
}

/// `‖f - f̄‖²` in the discrete L² norm.
pub fn variance(f: &Field) -> f64 {
    let mean = f.average();
    f.h()
        * f.values
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
}

/// `‖∇f‖²` with the edge difference quotient: `Σ_edges (f_{i+1} - f_i)² / h`.
pub fn gradient_norm_sq(f: &Field) -> f64 {
    let h = f.h();
    f.values
        .windows(2)
        .map(|w| (w[1] - w[0]) * (w[1] - w[0]))
        .sum::<f64>()
        / h
}

/// Edge value of the mobility weight.
#[inline]
pub fn edge_mean(a: f64, b: f64) -> f64 {
    (a * b).sqrt()
}

fn check_positive(mu: &Field) -> Result<()> {
    match mu.values.iter().position(|&m| !(m > 0.0)) {
        Some(cell) => Err(Error::NonPositiveWeight {
            cell,
            value: mu.values[cell],
        }),
        None => Ok(()),
    }
}

/// Cellwise divergence of the no-flux two-point flux `μ∇(f/μ)`.
pub fn discrete_flux_divergence(f: &Field, mu: &Field) -> Result<Field> {
    check_same_grid(f, mu)?;
    check_positive(mu)?;
    let op = FluxOperator::new(mu)?;
    Ok(op.apply(f))
}

/// Precomputed coefficients of the no-flux two-point flux operator for a fixed
/// weight `μ`.
#[derive(Debug, Clone)]
pub struct FluxOperator {
    /// `μ_{i+1/2} / h²` for the `n - 1` interior edges.
    edge: Vec<f64>,
    inv_mu: Vec<f64>,
}

impl FluxOperator {
    pub fn new(mu: &Field) -> Result<Self> {
        check_positive(mu)?;
        let h = mu.h();
        let edge = mu
            .values
            .windows(2)
            .map(|w| edge_mean(w[0], w[1]) / (h * h))
            .collect();
        let inv_mu = mu.values.iter().map(|m| 1.0 / m).collect();
        Ok(Self { edge, inv_mu })
    }

    pub fn n_cells(&self) -> usize {
        self.inv_mu.len()
    }

    /// `(F_{i+1/2} - F_{i-1/2}) / h` with boundary fluxes set to zero.
    pub fn apply(&self, f: &Field) -> Field {
        let mut out = vec![0.0; f.len()];
        self.apply_into(f.values(), &mut out);
        Field::from_vec(out)
    }

    pub(crate) fn apply_into(&self, f: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (e, &w) in self.edge.iter().enumerate() {
            // flux already divided by h once more
            let flux = w * (f[e + 1] * self.inv_mu[e + 1] - f[e] * self.inv_mu[e]);
            out[e] += flux;
            out[e + 1] -= flux;
        }
    }

    /// Assembles `I - dt·L + dt·diag(k)` as (sub, diag, sup) bands.
    pub(crate) fn assemble_implicit(
        &self,
        dt: f64,
        sink: &[f64],
        sub: &mut [f64],
        diag: &mut [f64],
        sup: &mut [f64],
    ) {
        let n = self.inv_mu.len();
        for i in 0..n {
            diag[i] = 1.0 + dt * sink[i];
        }
        for (e, &w) in self.edge.iter().enumerate() {
            let a = dt * w;
            // row e gets +a·u_e - a·u_{e+1}; row e+1 the mirror
            diag[e] += a * self.inv_mu[e];
            sup[e] = -a * self.inv_mu[e + 1];
            diag[e + 1] += a * self.inv_mu[e + 1];
            sub[e] = -a * self.inv_mu[e];
        }
    }
}

/// One tridiagonal system: `sub[i]` couples row `i + 1` to column `i`,
/// `sup[i]` couples row `i` to column `i + 1`.
pub(crate) struct TridiagonalSystem<'a> {
    pub sub: &'a [f64],
    pub diag: &'a [f64],
    pub sup: &'a [f64],
    pub rhs: &'a [f64],
}

/// Forward state of the elimination of one system. The pivots are kept as
/// ratios `θ_i / θ_{i-1}` of the leading principal minors, which obey the
/// division-free recurrence `θ_i = d_i θ_{i-1} - a_i c_i θ_{i-2}`; the
/// divisions that remain are off the dependency chain.
struct Elimination {
    theta_prev: f64,
    theta: f64,
    inv_pivot: f64,
    y: f64,
}

// powers of two, so rescaling leaves the ratios exact
const THETA_MAX: f64 = 4.149515568880993e180; // 2^600
const THETA_SHRINK: f64 = 2.409919865102884e-181; // 2^-600

impl Elimination {
    fn start(s: &TridiagonalSystem) -> Self {
        let inv_pivot = 1.0 / s.diag[0];
        Self {
            theta_prev: 1.0,
            theta: s.diag[0],
            inv_pivot,
            y: s.rhs[0] * inv_pivot,
        }
    }

    /// Eliminates a row with sub-diagonal `a`, diagonal `d` and right-hand
    /// side `r`, where `c` is the super-diagonal entry of the row above.
    /// Returns the upper factor of the row above and the forward-substituted
    /// right-hand side.
    #[inline(always)]
    fn row(&mut self, a: f64, c: f64, d: f64, r: f64) -> (f64, f64) {
        let theta = d * self.theta - (a * c) * self.theta_prev;
        let upper = c * self.inv_pivot;
        self.inv_pivot = self.theta / theta;
        self.y = (r - a * self.y) * self.inv_pivot;
        self.theta_prev = self.theta;
        self.theta = theta;
        // θ grows by at least the smallest pivot per row (≥ 1 for the
        // M-matrices assembled here)
        if self.theta > THETA_MAX {
            self.theta *= THETA_SHRINK;
            self.theta_prev *= THETA_SHRINK;
        }
        (upper, self.y)
    }
}

/// Solves two independent diagonally dominant tridiagonal systems in one
/// sweep, so the two elimination chains overlap. `scratch_*` must hold `n`
/// entries.
pub(crate) fn solve_tridiagonal_pair(
    x: TridiagonalSystem,
    y: TridiagonalSystem,
    out_x: &mut [f64],
    out_y: &mut [f64],
    scratch_x: &mut [f64],
    scratch_y: &mut [f64],
) {
    let n = x.diag.len();
    let mut ex = Elimination::start(&x);
    let mut ey = Elimination::start(&y);
    // bounds-checked once here rather than per row
    let (xa, xc, xd, xr) = (
        &x.sub[..n - 1],
        &x.sup[..n - 1],
        &x.diag[1..n],
        &x.rhs[1..n],
    );
    let (ya, yc, yd, yr) = (
        &y.sub[..n - 1],
        &y.sup[..n - 1],
        &y.diag[1..n],
        &y.rhs[1..n],
    );
    let (ox, oy) = (&mut out_x[..n], &mut out_y[..n]);
    let (sx, sy) = (&mut scratch_x[..n], &mut scratch_y[..n]);
    ox[0] = ex.y;
    oy[0] = ey.y;
    for i in 0..n - 1 {
        (sx[i + 1], ox[i + 1]) = ex.row(xa[i], xc[i], xd[i], xr[i]);
        (sy[i + 1], oy[i + 1]) = ey.row(ya[i], yc[i], yd[i], yr[i]);
    }
    for i in (0..n - 1).rev() {
        ox[i] -= sx[i + 1] * ox[i + 1];
        oy[i] -= sy[i + 1] * oy[i + 1];
    }
}

/// Closed-form potential families evaluated at cell centers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialFamily {
    /// `V ≡ A`.
    Constant,
    /// `V = A (1 + cos 2πx) / 2`, a single well centered at `x = 1/2`.
    CosineWell,
    /// `V = A (1 + cos 4πx) / 2`, wells at `x = 1/4` and `x = 3/4`.
    DoubleWell,
    /// `V = 2A |x - 1/2|`.
    PiecewiseLinear,
}

impl PotentialFamily {
    pub const ALL: [PotentialFamily; 4] = [
        PotentialFamily::Constant,
        PotentialFamily::CosineWell,
        PotentialFamily::DoubleWell,
        PotentialFamily::PiecewiseLinear,
    ];

    pub fn eval(self, x: f64, amplitude: f64) -> f64 {
        match self {
            PotentialFamily::Constant => amplitude,
            PotentialFamily::CosineWell => 0.5 * amplitude * (1.0 + (2.0 * PI * x).cos()),
            PotentialFamily::DoubleWell => 0.5 * amplitude * (1.0 + (4.0 * PI * x).cos()),
            PotentialFamily::PiecewiseLinear => 2.0 * amplitude * (x - 0.5).abs(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PotentialFamily::Constant => "constant",
            PotentialFamily::CosineWell => "cosine_well",
            PotentialFamily::DoubleWell => "double_well",
            PotentialFamily::PiecewiseLinear => "piecewise_linear",
        }
    }
}

impl std::str::FromStr for PotentialFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        PotentialFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown potential family `{s}`"))
    }
}

/// A named potential family with its amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub family: PotentialFamily,
    pub amplitude: f64,
}

impl Potential {
    pub fn new(family: PotentialFamily, amplitude: f64) -> Self {
        Self { family, amplitude }
    }

    pub fn zero() -> Self {
        Self::new(PotentialFamily::Constant, 0.0)
    }

    pub fn sample(&self, grid: &Grid1D) -> Field {
        grid.sample(|x| self.family.eval(x, self.amplitude))
    }
}

/// Electron and hole potentials together with their Boltzmann weights
/// `μ = e^{-V}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialPair {
    pub v_n: Field,
    pub v_p: Field,
    /// `max(‖V_n‖∞, ‖V_p‖∞)`.
    pub v_sup: f64,
    pub mu_n: Field,
    pub mu_p: Field,
}

impl PotentialPair {
    pub fn new(v_n: Field, v_p: Field) -> Result<Self> {
        check_same_grid(&v_n, &v_p)?;
        let v_sup = v_n.sup_norm().max(v_p.sup_norm());
        let mu_n = v_n.map(|v| (-v).exp());
        let mu_p = v_p.map(|v| (-v).exp());
        check_positive(&mu_n)?;
        check_positive(&mu_p)?;
        Ok(Self {
            v_n,
            v_p,
            v_sup,
            mu_n,
            mu_p,
        })
    }

    pub fn from_potentials(grid: &Grid1D, n: Potential, p: Potential) -> Result<Self> {
        Self::new(n.sample(grid), p.sample(grid))
    }

    /// `V_n = V_p ≡ 0`.
    pub fn flat(grid: &Grid1D) -> Self {
        Self::new(grid.constant(0.0), grid.constant(0.0)).expect("flat potential is valid")
    }

    pub fn n_cells(&self) -> usize {
        self.v_n.len()
    }

    pub fn mu_n_bar(&self) -> f64 {
        self.mu_n.average()
    }

    pub fn mu_p_bar(&self) -> f64 {
        self.mu_p.average()
    }
}
