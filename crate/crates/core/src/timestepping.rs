//! IMEX Runge-Kutta and explicit SSP-RK2 integrators for the split system
//! `dU/dt = E(U, t) + S(U, t)`, where `E = -F` collects convection and
//! reaction (explicit) and `S` is the linear diffusion (implicit).

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Grid, State};
use crate::models::{Boundary, ConservativeModel};
use crate::num::{lit, Real};
use crate::spatial::{self, Closure, DiffusionOperator, Tridiagonal};

/// Time integrator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// IMEX-SSP2(2,2,2): explicit convection/reaction, implicit diffusion.
    Imex,
    /// Heun's SSP-RK2 on the full right-hand side.
    Explicit,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Imex => "imex",
            Scheme::Explicit => "explicit",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "imex" => Ok(Scheme::Imex),
            "explicit" => Ok(Scheme::Explicit),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Explicit and implicit Butcher tableaus of an IMEX Runge-Kutta pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherPair<T> {
    pub explicit_a: Vec<Vec<T>>,
    pub explicit_weights: Vec<T>,
    pub explicit_nodes: Vec<T>,
    pub implicit_a: Vec<Vec<T>>,
    pub implicit_weights: Vec<T>,
    pub implicit_nodes: Vec<T>,
}

impl<T: Real> ButcherPair<T> {
    /// Checks shape, strict lower triangularity of the explicit matrix, a
    /// diagonally implicit implicit matrix, unit weight sums and row sums
    /// equal to nodes.
    pub fn validate(&self) -> Result<()> {
        let rho = self.stages();
        let bad = |m: &str| Err(Error::Config(format!("butcher tableau: {m}")));
        let square = |a: &Vec<Vec<T>>| a.len() == rho && a.iter().all(|r| r.len() == rho);
        if rho == 0
            || !square(&self.explicit_a)
            || !square(&self.implicit_a)
            || [&self.explicit_weights, &self.explicit_nodes, &self.implicit_weights, &self.implicit_nodes]
                .iter()
                .any(|v| v.len() != rho)
        {
            return bad("inconsistent stage counts");
        }
        let tol = lit::<T>(64.0) * T::epsilon();
        for k in 0..rho {
            if (k..rho).any(|l| self.explicit_a[k][l] != T::zero()) {
                return bad("explicit matrix must be strictly lower triangular");
            }
            if (k + 1..rho).any(|l| self.implicit_a[k][l] != T::zero()) {
                return bad("implicit matrix must be lower triangular");
            }
            let row_e: T = self.explicit_a[k].iter().copied().sum();
            let row_i: T = self.implicit_a[k].iter().copied().sum();
            if (row_e - self.explicit_nodes[k]).abs() > tol
                || (row_i - self.implicit_nodes[k]).abs() > tol
            {
                return bad("row sums must equal nodes");
            }
        }
        let we: T = self.explicit_weights.iter().copied().sum();
        let wi: T = self.implicit_weights.iter().copied().sum();
        if (we - T::one()).abs() > tol || (wi - T::one()).abs() > tol {
            return bad("weights must sum to one");
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.explicit_weights.len()
    }
}

/// IMEX-SSP2(2,2,2), L-stable, `γ = 1 - 1/√2`.
pub fn imex_ssp2_tableau<T: Real>() -> ButcherPair<T> {
    let gamma = T::one() - T::FRAC_1_SQRT_2();
    let (z, o, h) = (T::zero(), T::one(), lit::<T>(0.5));
    ButcherPair {
        explicit_a: vec![vec![z, z], vec![o, z]],
        explicit_weights: vec![h, h],
        explicit_nodes: vec![z, o],
        implicit_a: vec![vec![gamma, z], vec![o - gamma - gamma, gamma]],
        implicit_weights: vec![h, h],
        implicit_nodes: vec![gamma, o - gamma],
    }
}

/// Maximum wave speed `α = |∂f/∂u|` and diffusivity `η = |∂g/∂u_s|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityEstimate<T> {
    pub alpha_max: T,
    pub eta_max: T,
}

impl<T: Real> StabilityEstimate<T> {
    /// Samples `α` at every interface with the averages of the two adjacent
    /// cells, and `η` at every interface.
    pub fn from_model<M: ConservativeModel<T> + ?Sized>(
        model: &M,
        grid: &Grid<T>,
        state: &State<T>,
    ) -> Result<Self> {
        let u = state.values();
        let n = u.len();
        let mut alpha = T::zero();
        let mut eta = T::zero();
        for (j, &s) in grid.edges().iter().enumerate() {
            for &v in [u[j.saturating_sub(1)], u[j.min(n - 1)]].iter() {
                alpha = alpha.max(model.flux_derivative(v, s).abs());
            }
            let e = model.diffusivity(s).ok_or_else(|| {
                Error::UnsupportedModel("diffusive flux is nonlinear in u_s".into())
            })?;
            eta = eta.max(e.abs());
        }
        if !(alpha.is_finite() && eta.is_finite()) {
            return Err(Error::StepPlan("non-finite stability estimate".into()));
        }
        Ok(Self {
            alpha_max: alpha,
            eta_max: eta,
        })
    }
}

/// A uniform partition of `[0, T]` into `n_steps` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPlan<T> {
    pub dt: T,
    pub n_steps: usize,
    pub scheme: Scheme,
}

impl<T: Real> StepPlan<T> {
    pub fn new(horizon: T, n_steps: usize, scheme: Scheme) -> Result<Self> {
        if horizon.is_nan() || horizon <= T::zero() || n_steps == 0 {
            return Err(Error::StepPlan(format!(
                "need T > 0 and at least one step (T={horizon}, n={n_steps})"
            )));
        }
        Ok(Self {
            dt: horizon / T::from_usize(n_steps).unwrap(),
            n_steps,
            scheme,
        })
    }
}

/// Largest stable step for `scheme`, rounded down so the steps tile `[0, T]`.
///
/// IMEX obeys only the convective bound `α dt/ds ≤ cfl`; the explicit scheme
/// also needs `η dt/ds² ≤ cfl/2`.
pub fn select_dt<T: Real>(
    est: &StabilityEstimate<T>,
    grid: &Grid<T>,
    horizon: T,
    cfl: T,
    scheme: Scheme,
) -> Result<StepPlan<T>> {
    if !(cfl > T::zero() && cfl <= T::one()) {
        return Err(Error::StepPlan(format!("cfl must lie in (0, 1], got {cfl}")));
    }
    if horizon.is_nan() || horizon <= T::zero() {
        return Err(Error::StepPlan(format!("T must be positive, got {horizon}")));
    }
    let ds = grid.ds();
    let mut raw = T::infinity();
    if est.alpha_max > T::zero() {
        raw = raw.min(ds / est.alpha_max);
    }
    if scheme == Scheme::Explicit && est.eta_max > T::zero() {
        raw = raw.min(ds * ds / (lit::<T>(2.0) * est.eta_max));
    }
    if raw.is_infinite() {
        return StepPlan::new(horizon, 1, scheme);
    }
    let steps = (horizon / (cfl * raw)).ceil();
    let n_steps = steps
        .to_usize()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::StepPlan(format!("step count {steps} out of range")))?;
    StepPlan::new(horizon, n_steps, scheme)
}

/// Thomas algorithm. Fails on a zero (or non-finite) pivot.
pub fn tridiag_solve<T: Real>(system: &Tridiagonal<T>, rhs: &[T]) -> Result<Vec<T>> {
    let n = system.len();
    if rhs.len() != n {
        return Err(Error::StateLength {
            expected: n,
            got: rhs.len(),
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let mut pivot = system.diag[0];
    if pivot == T::zero() || !pivot.is_finite() {
        return Err(Error::SingularSystem(0));
    }
    c[0] = system.sup[0] / pivot;
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = system.diag[i] - system.sub[i] * c[i - 1];
        if pivot == T::zero() || !pivot.is_finite() {
            return Err(Error::SingularSystem(i));
        }
        c[i] = if i + 1 < n { system.sup[i] / pivot } else { T::zero() };
        d[i] = (rhs[i] - system.sub[i] * d[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        d[i] = d[i] - c[i] * d[i + 1];
    }
    Ok(d)
}

/// A semi-discrete system split into an explicit and a linear implicit part.
///
/// Every operator evaluation is closed with boundary data of type
/// [`SplitSystem::Closure`]; systems without boundaries use `()`.
pub trait SplitSystem<T: Real> {
    type Closure: Copy;

    /// Closure of a full-operator evaluation at time `t`.
    fn closure(&self, t: T) -> Self::Closure;

    /// One closure per IMEX stage of a step of size `dt` from `(u, t)`.
    fn stage_closures(
        &self,
        tableau: &ButcherPair<T>,
        u: &[T],
        t: T,
        dt: T,
    ) -> Result<Vec<Self::Closure>>;

    /// Non-stiff part `E(U)`.
    fn explicit_part(&self, u: &[T], closure: &Self::Closure) -> Result<Vec<T>>;

    /// Stiff part `S(U)`.
    fn implicit_part(&self, u: &[T], closure: &Self::Closure) -> Vec<T>;

    /// Solves `x - c S(x) = rhs`.
    fn solve_implicit(&self, c: T, rhs: &[T], closure: &Self::Closure) -> Result<Vec<T>>;
}

fn first_non_finite<T: Real>(v: &[T]) -> Option<usize> {
    v.iter().position(|x| !x.is_finite())
}

/// One IMEX Runge-Kutta step from `(u, t)`.
pub fn imex_step<T: Real, S: SplitSystem<T> + ?Sized>(
    system: &S,
    tableau: &ButcherPair<T>,
    u: &[T],
    t: T,
    dt: T,
) -> Result<Vec<T>> {
    let rho = tableau.stages();
    let closures = system.stage_closures(tableau, u, t, dt)?;
    let mut explicit_evals: Vec<Vec<T>> = Vec::with_capacity(rho);
    let mut implicit_evals: Vec<Vec<T>> = Vec::with_capacity(rho);
    for (k, closure) in closures.iter().enumerate() {
        let mut rhs = u.to_vec();
        for l in 0..k {
            let (ae, ai) = (dt * tableau.explicit_a[k][l], dt * tableau.implicit_a[k][l]);
            for ((r, &e), &s) in rhs.iter_mut().zip(&explicit_evals[l]).zip(&implicit_evals[l]) {
                *r = *r + ae * e + ai * s;
            }
        }
        let diag = tableau.implicit_a[k][k];
        let stage = if diag != T::zero() {
            system.solve_implicit(dt * diag, &rhs, closure)?
        } else {
            rhs
        };
        if let Some(cell) = first_non_finite(&stage) {
            return Err(Error::Blowup { cell, stage: Some(k) });
        }
        let e = system
            .explicit_part(&stage, closure)
            .map_err(|err| tag_stage(err, k))?;
        explicit_evals.push(e);
        implicit_evals.push(system.implicit_part(&stage, closure));
    }
    let mut out = u.to_vec();
    for k in 0..rho {
        let (we, wi) = (dt * tableau.explicit_weights[k], dt * tableau.implicit_weights[k]);
        for ((o, &e), &s) in out.iter_mut().zip(&explicit_evals[k]).zip(&implicit_evals[k]) {
            *o = *o + we * e + wi * s;
        }
    }
    if let Some(cell) = first_non_finite(&out) {
        return Err(Error::Blowup { cell, stage: None });
    }
    Ok(out)
}

fn tag_stage(err: Error, k: usize) -> Error {
    match err {
        Error::Blowup { cell, .. } => Error::Blowup { cell, stage: Some(k) },
        other => other,
    }
}

/// One Heun (SSP-RK2) step on `E + S`, both evaluated explicitly.
pub fn heun_step<T: Real, S: SplitSystem<T> + ?Sized>(
    system: &S,
    u: &[T],
    t: T,
    dt: T,
) -> Result<Vec<T>> {
    let full = |v: &[T], at: T, k: usize| -> Result<Vec<T>> {
        let closure = system.closure(at);
        let mut e = system
            .explicit_part(v, &closure)
            .map_err(|err| tag_stage(err, k))?;
        for (x, s) in e.iter_mut().zip(system.implicit_part(v, &closure)) {
            *x = *x + s;
        }
        Ok(e)
    };
    let k1 = full(u, t, 0)?;
    let u1: Vec<T> = u.iter().zip(&k1).map(|(&a, &k)| a + dt * k).collect();
    if let Some(cell) = first_non_finite(&u1) {
        return Err(Error::Blowup { cell, stage: Some(1) });
    }
    let k2 = full(&u1, t + dt, 1)?;
    let half = lit::<T>(0.5) * dt;
    let out: Vec<T> = u
        .iter()
        .zip(k1.iter().zip(&k2))
        .map(|(&a, (&p, &q))| a + half * (p + q))
        .collect();
    if let Some(cell) = first_non_finite(&out) {
        return Err(Error::Blowup { cell, stage: None });
    }
    Ok(out)
}

/// The finite-volume discretization of a conservative model on one grid.
pub struct FvSystem<'a, T: Real, M: ConservativeModel<T> + ?Sized> {
    model: &'a M,
    grid: &'a Grid<T>,
    diffusion: DiffusionOperator<T>,
}

impl<'a, T: Real, M: ConservativeModel<T> + ?Sized> FvSystem<'a, T, M> {
    /// Assembles the diffusion matrix once; the boundary vector is refreshed
    /// at every evaluation.
    pub fn new(model: &'a M, grid: &'a Grid<T>) -> Result<Self> {
        let diffusion = spatial::assemble_diffusion(model, grid, T::zero())?;
        Ok(Self {
            model,
            grid,
            diffusion,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        self.grid
    }

    pub fn diffusion(&self) -> &DiffusionOperator<T> {
        &self.diffusion
    }

    pub fn step_imex(&self, state: &State<T>, tableau: &ButcherPair<T>, dt: T) -> Result<State<T>> {
        let next = imex_step(self, tableau, state.values(), state.time(), dt)?;
        Ok(State::from_parts(next, state.time() + dt))
    }

    pub fn step_explicit(&self, state: &State<T>, dt: T) -> Result<State<T>> {
        let next = heun_step(self, state.values(), state.time(), dt)?;
        Ok(State::from_parts(next, state.time() + dt))
    }

    /// Runs `plan` from `state0` and reports the elapsed wall time.
    pub fn integrate(&self, state0: &State<T>, plan: &StepPlan<T>) -> Result<(State<T>, Duration)> {
        if state0.len() != self.grid.n_cells() {
            return Err(Error::StateLength {
                expected: self.grid.n_cells(),
                got: state0.len(),
            });
        }
        let tableau = imex_ssp2_tableau::<T>();
        let start = Instant::now();
        let mut u = state0.values().to_vec();
        let t0 = state0.time();
        for step in 0..plan.n_steps {
            let t = t0 + T::from_usize(step).unwrap() * plan.dt;
            u = match plan.scheme {
                Scheme::Imex => imex_step(self, &tableau, &u, t, plan.dt)?,
                Scheme::Explicit => heun_step(self, &u, t, plan.dt)?,
            };
        }
        let elapsed = start.elapsed();
        let t_end = t0 + T::from_usize(plan.n_steps).unwrap() * plan.dt;
        Ok((State::from_parts(u, t_end), elapsed))
    }
}

/// Stiff share `S_b = ġ - E_b` of the boundary rate over one step.
fn stiff_boundary_rate<T: Real>(start: Boundary<T>, end: Boundary<T>, explicit_rate: T, dt: T) -> T {
    match (start, end) {
        (Boundary::Dirichlet(g0), Boundary::Dirichlet(g1)) => (g1 - g0) / dt - explicit_rate,
        _ => T::zero(),
    }
}

fn shift_boundary<T: Real>(b: Boundary<T>, by: T) -> Boundary<T> {
    match b {
        Boundary::Dirichlet(v) => Boundary::Dirichlet(v + by),
        other => other,
    }
}

impl<T: Real, M: ConservativeModel<T> + ?Sized> SplitSystem<T> for FvSystem<'_, T, M> {
    type Closure = Closure<T>;

    fn closure(&self, t: T) -> Closure<T> {
        Closure::at(self.model, t)
    }

    /// Dirichlet data of stage `k` is `g(t + c̃_k dt) + (c_k - c̃_k) dt S_b`:
    /// an implicit stage advances the boundary with its stiff share only,
    /// so pinning it to `g` at a stage time leaves a layer of width
    /// `sqrt(η dt)` at time-dependent boundaries.
    fn stage_closures(
        &self,
        tableau: &ButcherPair<T>,
        u: &[T],
        t: T,
        dt: T,
    ) -> Result<Vec<Closure<T>>> {
        let start = Closure::at(self.model, t);
        let end = Closure::at(self.model, t + dt);
        let (e_first, e_last) = spatial::boundary_explicit_rates(self.model, self.grid, u, &start)?;
        let s_left = stiff_boundary_rate(start.left, end.left, e_first, dt);
        let s_right = stiff_boundary_rate(start.right, end.right, e_last, dt);
        Ok((0..tableau.stages())
            .map(|k| {
                let lag = (tableau.implicit_nodes[k] - tableau.explicit_nodes[k]) * dt;
                let at = Closure::at(self.model, t + tableau.explicit_nodes[k] * dt);
                Closure {
                    left: shift_boundary(at.left, lag * s_left),
                    right: shift_boundary(at.right, lag * s_right),
                }
            })
            .collect())
    }

    fn explicit_part(&self, u: &[T], closure: &Closure<T>) -> Result<Vec<T>> {
        spatial::explicit_rhs_closed(self.model, self.grid, u, closure)
    }

    fn implicit_part(&self, u: &[T], closure: &Closure<T>) -> Vec<T> {
        let mut out = self.diffusion.matrix.apply(u);
        for (o, b) in out
            .iter_mut()
            .zip(spatial::diffusion_boundary_closed(self.model, self.grid, closure))
        {
            *o = *o + b;
        }
        out
    }

    fn solve_implicit(&self, c: T, rhs: &[T], closure: &Closure<T>) -> Result<Vec<T>> {
        let system = self.diffusion.matrix.identity_minus(c);
        let mut b = rhs.to_vec();
        for (x, bc) in b
            .iter_mut()
            .zip(spatial::diffusion_boundary_closed(self.model, self.grid, closure))
        {
            *x = *x + c * bc;
        }
        tridiag_solve(&system, &b)
    }
}
