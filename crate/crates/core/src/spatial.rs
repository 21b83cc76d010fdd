//! Second-order finite-volume semi-discretization.
//!
//! The convective part uses a minmod-limited linear reconstruction and the
//! local Lax-Friedrichs flux; the source is integrated with the midpoint rule
//! on cell averages. Together they form the explicit operator `-F(U)`. The
//! diffusive flux `G_{i+1/2} = g((u_{i+1} - u_i)/ds, s_{i+1/2})` gives the
//! implicit operator `S(U)`, a tridiagonal matrix plus a boundary vector.
//!
//! Boundaries use one ghost cell per side. A Dirichlet value `u_b` sets the
//! ghost average to `2 u_b - u_first`, and the exterior interface state to
//! `u_b` itself; a transmissive side copies the first interior average.

use crate::error::{Error, Result};
use crate::mesh::{Grid, State};
use crate::models::{Boundary, ConservativeModel};
use crate::num::{lit, Real};

/// `sign(a) min(|a|, |b|)` when `a` and `b` share a sign, else zero.
#[inline]
pub fn minmod<T: Real>(a: T, b: T) -> T {
    if a * b <= T::zero() {
        T::zero()
    } else if a > T::zero() {
        a.min(b)
    } else {
        a.max(b)
    }
}

/// Ghost-cell average for one boundary.
#[inline]
pub fn ghost_value<T: Real>(boundary: Boundary<T>, first: T) -> T {
    match boundary {
        Boundary::Dirichlet(v) => lit::<T>(2.0) * v - first,
        Boundary::Transmissive => first,
    }
}

/// Reconstructed traces at every interface.
///
/// Interface `j` sits at `edges[j]`, between cells `j - 1` and `j`.
/// `left[j]` is `u⁻`, the trace from cell `j - 1`; `right[j]` is `u⁺`, the
/// trace from cell `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceStates<T> {
    pub left: Vec<T>,
    pub right: Vec<T>,
}

/// Minmod-limited linear reconstruction of `values` on `grid`.
pub fn reconstruct<T: Real>(
    values: &[T],
    left_bc: Boundary<T>,
    right_bc: Boundary<T>,
) -> InterfaceStates<T> {
    let n = values.len();
    let half = lit::<T>(0.5);
    let ghost_l = ghost_value(left_bc, values[0]);
    let ghost_r = ghost_value(right_bc, values[n - 1]);
    let at = |i: isize| -> T {
        if i < 0 {
            ghost_l
        } else if i as usize >= n {
            ghost_r
        } else {
            values[i as usize]
        }
    };
    let mut left = vec![T::zero(); n + 1];
    let mut right = vec![T::zero(); n + 1];
    for i in 0..n {
        let ii = i as isize;
        let u = values[i];
        let slope = minmod(u - at(ii - 1), at(ii + 1) - u);
        right[i] = u - half * slope;
        left[i + 1] = u + half * slope;
    }
    left[0] = exterior_trace(left_bc, ghost_l);
    right[n] = exterior_trace(right_bc, ghost_r);
    InterfaceStates { left, right }
}

fn exterior_trace<T: Real>(boundary: Boundary<T>, ghost: T) -> T {
    match boundary {
        Boundary::Dirichlet(v) => v,
        Boundary::Transmissive => ghost,
    }
}

/// Local Lax-Friedrichs flux at the interface point `s`, with the wave speed
/// taken at the mean of the two traces.
#[inline]
pub fn llf_flux<T: Real, M: ConservativeModel<T> + ?Sized>(
    model: &M,
    s: T,
    u_left: T,
    u_right: T,
) -> T {
    let half = lit::<T>(0.5);
    let alpha = model.flux_derivative(half * (u_left + u_right), s).abs();
    half * (model.flux(u_left, s) + model.flux(u_right, s)) - half * alpha * (u_right - u_left)
}

/// `G` at interior interface `index` (between cells `index - 1` and `index`).
pub fn diffusive_flux<T: Real, M: ConservativeModel<T> + ?Sized>(
    model: &M,
    grid: &Grid<T>,
    state: &State<T>,
    index: usize,
) -> Result<T> {
    let n = grid.n_cells();
    if index == 0 || index >= n {
        return Err(Error::InterfaceOutOfRange {
            index,
            max: n - 1,
        });
    }
    let u = state.values();
    Ok(model.diffusive_flux((u[index] - u[index - 1]) / grid.ds(), grid.edges()[index]))
}

fn check_len<T: Real>(grid: &Grid<T>, values: &[T]) -> Result<()> {
    if values.len() != grid.n_cells() {
        return Err(Error::StateLength {
            expected: grid.n_cells(),
            got: values.len(),
        });
    }
    Ok(())
}

/// Boundary data both operators are closed with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Closure<T> {
    pub left: Boundary<T>,
    pub right: Boundary<T>,
}

impl<T: Real> Closure<T> {
    /// The model's own boundary conditions at time `t`.
    pub fn at<M: ConservativeModel<T> + ?Sized>(model: &M, t: T) -> Self {
        Self {
            left: model.left_boundary(t),
            right: model.right_boundary(t),
        }
    }
}

/// `-(F_{i+1/2} - F_{i-1/2})/ds + h(u_i)` for every cell at time `t`.
pub fn explicit_rhs<T: Real, M: ConservativeModel<T> + ?Sized>(
    model: &M,
    grid: &Grid<T>,
    values: &[T],
    t: T,
) -> Result<Vec<T>> {
    explicit_rhs_closed(model, grid, values, &Closure::at(model, t))
}

/// [`explicit_rhs`] with explicit boundary data.
pub fn explicit_rhs_closed<T: Real, M: ConservativeModel<T> + ?Sized>(
    model: &M,
    grid: &Grid<T>,
    values: &[T],
    closure: &Closure<T>,
) -> Result<Vec<T>> {
    check_len(grid, values)?;
    let traces = reconstruct(values, closure.left, closure.right);
    let fluxes: Vec<T> = grid
        .edges()
        .iter()
        .zip(traces.left.iter().zip(&traces.right))
        .map(|(&s, (&ul, &ur))| llf_flux(model, s, ul, ur))
        .collect();
    let ds = grid.ds();
    let out: Vec<T> = values
        .iter()
        .zip(fluxes.windows(2))
        .map(|(&u, f)| -(f[1] - f[0]) / ds + model.source(u))
        .collect();
    if let Some(cell) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::Blowup { cell, stage: None });
    }
    Ok(out)
}

/// Entries `0` and `n - 1` of [`explicit_rhs_closed`], computed from the
/// boundary stencils only.
pub fn boundary_explicit_rates<T: Real, M: ConservativeModel<T> + ?Sized>(
    model: &M,
    grid: &Grid<T>,
    values: &[T],
    closure: &Closure<T>,
) -> Result<(T, T)> {
    check_len(grid, values)?;
    let n = values.len();
    let k = n.min(3);
    let head = reconstruct(&values[..k], closure.left, Boundary::Transmissive);
    let tail = reconstruct(&values[n - k..], Boundary::Transmissive, closure.right);
    let edges = grid.edges();
    let ds = grid.ds();
    // Cell 0 needs interfaces 0 and 1; with k = 3 neither depends on the
    // artificial transmissive side. Likewise for the last cell.
    let f0 = llf_flux(model, edges[0], head.left[0], head.right[0]);
    let f1 = llf_flux(model, edges[1], head.left[1], head.right[1]);
    let g0 = llf_flux(model, edges[n - 1], tail.left[k - 1], tail.right[k - 1]);
    let g1 = llf_flux(model, edges[n], tail.left[k], tail.right[k]);
    let first = -(f1 - f0) / ds + model.source(values[0]);
    let last = -(g1 - g0) / ds + model.source(values[n - 1]);
    if !first.is_finite() {
        return Err(Error::Blowup { cell: 0, stage: None });
    }
    if !last.is_finite() {
        return Err(Error::Blowup { cell: n - 1, stage: None });
    }
    Ok((first, last))
}

/// Tridiagonal system `sub[i] x[i-1] + diag[i] x[i] + sup[i] x[i+1]`.
/// `sub[0]` and `sup[n-1]` are unused and kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal<T> {
    pub sub: Vec<T>,
    pub diag: Vec<T>,
    pub sup: Vec<T>,
}

impl<T: Real> Tridiagonal<T> {
    pub fn identity(n: usize) -> Self {
        Self {
            sub: vec![T::zero(); n],
            diag: vec![T::one(); n],
            sup: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v = v + self.sub[i] * x[i - 1];
                }
                if i + 1 < n {
                    v = v + self.sup[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    /// `I - c * self`.
    pub fn identity_minus(&self, c: T) -> Self {
        Self {
            sub: self.sub.iter().map(|&a| -c * a).collect(),
            diag: self.diag.iter().map(|&a| T::one() - c * a).collect(),
            sup: self.sup.iter().map(|&a| -c * a).collect(),
        }
    }
}

/// Linear diffusion operator `S(U) = M U + b(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionOperator<T> {
    pub matrix: Tridiagonal<T>,
    pub rhs_boundary: Vec<T>,
}

impl<T: Real> DiffusionOperator<T> {
    pub fn apply(&self, values: &[T]) -> Vec<T> {
        let mut out = self.matrix.apply(values);
        for (o, &b) in out.iter_mut().zip(&self.rhs_boundary) {
            *o = *o + b;
        }
        out
    }
}

/// Diffusivities `η` at every interface; errors for nonlinear `g`.
fn interface_diffusivities<T: Real, M: ConservativeModel<T> + ?Sized>(
    model: &M,
    grid: &Grid<T>,
) -> Result<Vec<T>> {
    grid.edges()
        .iter()
        .map(|&s| {
            model.diffusivity(s).ok_or_else(|| {
                Error::UnsupportedModel(
                    "implicit diffusion needs g(u_s, s) linear in u_s".into(),
                )
            })
        })
        .collect()
}

/// Assembles `S` at time `t`.
pub fn assemble_diffusion<T: Real, M: ConservativeModel<T> + ?Sized>(
    model: &M,
    grid: &Grid<T>,
    t: T,
) -> Result<DiffusionOperator<T>> {
    let eta = interface_diffusivities(model, grid)?;
    let n = grid.n_cells();
    let inv_ds2 = T::one() / (grid.ds() * grid.ds());
    let two = lit::<T>(2.0);
    let mut sub = vec![T::zero(); n];
    let mut diag = vec![T::zero(); n];
    let mut sup = vec![T::zero(); n];
    for i in 0..n {
        if i > 0 {
            sub[i] = eta[i] * inv_ds2;
            diag[i] = diag[i] - eta[i] * inv_ds2;
        }
        if i + 1 < n {
            sup[i] = eta[i + 1] * inv_ds2;
            diag[i] = diag[i] - eta[i + 1] * inv_ds2;
        }
    }
    // Boundary interfaces: the ghost-cell gradient (u_first - ghost)/ds.
    let mut rhs_boundary = vec![T::zero(); n];
    if let Boundary::Dirichlet(v) = model.left_boundary(t) {
        diag[0] = diag[0] - two * eta[0] * inv_ds2;
        rhs_boundary[0] = two * eta[0] * inv_ds2 * v;
    }
    if let Boundary::Dirichlet(v) = model.right_boundary(t) {
        diag[n - 1] = diag[n - 1] - two * eta[n] * inv_ds2;
        rhs_boundary[n - 1] = rhs_boundary[n - 1] + two * eta[n] * inv_ds2 * v;
    }
    Ok(DiffusionOperator {
        matrix: Tridiagonal { sub, diag, sup },
        rhs_boundary,
    })
}

/// Boundary vector `b(t)` of the diffusion operator without rebuilding the matrix.
pub fn diffusion_boundary<T: Real, M: ConservativeModel<T> + ?Sized>(
    model: &M,
    grid: &Grid<T>,
    t: T,
) -> Vec<T> {
    diffusion_boundary_closed(model, grid, &Closure::at(model, t))
}

/// [`diffusion_boundary`] with explicit boundary data.
pub fn diffusion_boundary_closed<T: Real, M: ConservativeModel<T> + ?Sized>(
    model: &M,
    grid: &Grid<T>,
    closure: &Closure<T>,
) -> Vec<T> {
    let n = grid.n_cells();
    let inv_ds2 = T::one() / (grid.ds() * grid.ds());
    let two = lit::<T>(2.0);
    let eta_at = |s: T| model.diffusivity(s).unwrap_or(T::zero());
    let mut b = vec![T::zero(); n];
    if let Boundary::Dirichlet(v) = closure.left {
        b[0] = two * eta_at(grid.s_min()) * inv_ds2 * v;
    }
    if let Boundary::Dirichlet(v) = closure.right {
        b[n - 1] = b[n - 1] + two * eta_at(grid.s_max()) * inv_ds2 * v;
    }
    b
}
