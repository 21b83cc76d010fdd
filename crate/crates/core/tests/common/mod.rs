//! Oracles and toy systems shared by the integration tests and the
//! acceptance runner.
#![allow(dead_code)]

use fvimex::analytics::{
    bs_call, bs_put, down_and_in_call, down_and_out_call, norm_cdf, xva_call, GreekSet,
};
use fvimex::mesh::{Grid, PiecewiseLinear, State};
use fvimex::models::{
    black_scholes_barrier_model, xva_model, Boundary, ConservativeModel, MarketData,
    PricingModel,
};
use fvimex::spatial::{
    assemble_diffusion, diffusion_boundary_closed, explicit_rhs_closed, llf_flux, reconstruct,
    Closure, Tridiagonal,
};
use fvimex::timestepping::{
    heun_step, imex_ssp2_tableau, imex_step, tridiag_solve, ButcherPair, FvSystem, SplitSystem,
};
use fvimex::Result;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// A conservative model assembled from plain functions.
pub struct FnModel {
    pub flux: fn(f64, f64) -> f64,
    pub dflux: fn(f64, f64) -> f64,
    pub eta: fn(f64) -> f64,
    pub source: fn(f64) -> f64,
    pub left: Boundary<f64>,
    pub right: Boundary<f64>,
    pub domain: (f64, f64),
    pub payoff: PiecewiseLinear<f64>,
}

impl FnModel {
    /// `u_t = η u_ss` on `[0, 1]` with homogeneous Dirichlet data.
    pub fn heat() -> Self {
        Self {
            flux: |_, _| 0.0,
            dflux: |_, _| 0.0,
            eta: |_| 1.0,
            source: |_| 0.0,
            left: Boundary::Dirichlet(0.0),
            right: Boundary::Dirichlet(0.0),
            domain: (0.0, 1.0),
            payoff: PiecewiseLinear::zero(),
        }
    }

    /// Inviscid Burgers closed with zero boundary values.
    pub fn burgers() -> Self {
        Self {
            flux: |u, _| 0.5 * u * u,
            dflux: |u, _| u,
            eta: |_| 0.0,
            ..Self::heat()
        }
    }
}

impl ConservativeModel<f64> for FnModel {
    fn flux(&self, u: f64, s: f64) -> f64 {
        (self.flux)(u, s)
    }
    fn flux_derivative(&self, u: f64, s: f64) -> f64 {
        (self.dflux)(u, s)
    }
    fn diffusivity(&self, s: f64) -> Option<f64> {
        Some((self.eta)(s))
    }
    fn source(&self, u: f64) -> f64 {
        (self.source)(u)
    }
    fn left_boundary(&self, _t: f64) -> Boundary<f64> {
        self.left
    }
    fn right_boundary(&self, _t: f64) -> Boundary<f64> {
        self.right
    }
    fn domain(&self) -> (f64, f64) {
        self.domain
    }
    fn payoff(&self) -> &PiecewiseLinear<f64> {
        &self.payoff
    }
}

/// `y' = -y` split evenly between the explicit and the implicit part.
pub struct Decay;

impl SplitSystem<f64> for Decay {
    type Closure = ();

    fn closure(&self, _t: f64) {}

    fn stage_closures(&self, tab: &ButcherPair<f64>, _: &[f64], _: f64, _: f64) -> Result<Vec<()>> {
        Ok(vec![(); tab.stages()])
    }

    fn explicit_part(&self, u: &[f64], _: &()) -> Result<Vec<f64>> {
        Ok(u.iter().map(|y| -0.5 * y).collect())
    }

    fn implicit_part(&self, u: &[f64], _: &()) -> Vec<f64> {
        u.iter().map(|y| -0.5 * y).collect()
    }

    fn solve_implicit(&self, c: f64, rhs: &[f64], _: &()) -> Result<Vec<f64>> {
        Ok(rhs.iter().map(|r| r / (1.0 + 0.5 * c)).collect())
    }
}

/// Error at `t = 1` of `y' = -y, y(0) = 1` after `n` steps of one scheme.
pub fn decay_error(imex: bool, n: usize) -> f64 {
    let tab = imex_ssp2_tableau::<f64>();
    let dt = 1.0 / n as f64;
    let mut y = vec![1.0];
    for k in 0..n {
        let t = k as f64 * dt;
        y = if imex {
            imex_step(&Decay, &tab, &y, t, dt).unwrap()
        } else {
            heun_step(&Decay, &y, t, dt).unwrap()
        };
    }
    (y[0] - (-1.0f64).exp()).abs()
}

/// Error ratios `e(dt)/e(dt/2)` for IMEX and Heun on the decay problem.
pub fn decay_ratios() -> (f64, f64) {
    let ratio = |imex| decay_error(imex, 20) / decay_error(imex, 40);
    (ratio(true), ratio(false))
}

/// Outcome of the pure-diffusion stability runs.
#[derive(Debug, Clone, Copy)]
pub struct Dichotomy {
    /// Largest `‖U‖∞ / ‖U₀‖∞` over 100 IMEX steps at 100× the diffusive bound.
    pub imex_growth: f64,
    /// First Heun step at 4× the bound where the norm grew by 10³, if any.
    pub explicit_blowup_step: Option<usize>,
}

pub fn diffusion_dichotomy() -> Dichotomy {
    let model = FnModel::heat();
    let grid = Grid::new(0.0, 1.0, 50).unwrap();
    let ds = grid.ds();
    let bound = ds * ds / 2.0;
    let u0: Vec<f64> = grid
        .centers()
        .iter()
        .enumerate()
        .map(|(i, &s)| (std::f64::consts::PI * s).sin() + if i % 2 == 0 { 0.1 } else { -0.1 })
        .collect();
    let state0 = State::new(&grid, u0, 0.0).unwrap();
    let norm0 = state0.max_abs();
    let system = FvSystem::new(&model, &grid).unwrap();
    let tab = imex_ssp2_tableau::<f64>();

    let mut state = state0.clone();
    let mut imex_growth: f64 = 1.0;
    for _ in 0..100 {
        state = system.step_imex(&state, &tab, 100.0 * bound).unwrap();
        imex_growth = imex_growth.max(state.max_abs() / norm0);
    }

    let mut state = state0;
    let mut explicit_blowup_step = None;
    for step in 1..=200 {
        match system.step_explicit(&state, 4.0 * bound) {
            Ok(next) if next.max_abs() < 1e3 * norm0 => state = next,
            _ => {
                explicit_blowup_step = Some(step);
                break;
            }
        }
    }
    Dichotomy {
        imex_growth,
        explicit_blowup_step,
    }
}

/// Gaussian elimination with partial pivoting on a dense copy.
pub fn dense_solve(system: &Tridiagonal<f64>, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut a = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        a[i][i] = system.diag[i];
        if i > 0 {
            a[i][i - 1] = system.sub[i];
        }
        if i + 1 < n {
            a[i][i + 1] = system.sup[i];
        }
        a[i][n] = rhs[i];
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for row in rest.iter_mut() {
            let m = row[col] / pivot_row[col];
            for (x, p) in row.iter_mut().zip(pivot_row).skip(col) {
                *x -= m * p;
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let tail: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (a[i][n] - tail) / a[i][i];
    }
    x
}

pub fn random_dominant_tridiagonal(rng: &mut StdRng, n: usize) -> Tridiagonal<f64> {
    let mut t = Tridiagonal::identity(n);
    for i in 0..n {
        let lo: f64 = if i > 0 { rng.gen_range(-1.0..1.0) } else { 0.0 };
        let hi: f64 = if i + 1 < n { rng.gen_range(-1.0..1.0) } else { 0.0 };
        let margin = rng.gen_range(0.1..2.0);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        t.sub[i] = lo;
        t.sup[i] = hi;
        t.diag[i] = sign * (lo.abs() + hi.abs() + margin);
    }
    t
}

/// Largest `‖x_thomas - x_dense‖∞ / ‖x_dense‖∞` over random systems.
pub fn tridiag_worst(systems: usize, n: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..systems {
        let t = random_dominant_tridiagonal(&mut rng, n);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let x = tridiag_solve(&t, &b).unwrap();
        let y = dense_solve(&t, &b);
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = x.iter().zip(&y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        worst = worst.max(diff / scale);
    }
    worst
}

/// `∫_{-∞}^x φ` by composite Simpson on `[-40, x]`.
pub fn simpson_norm_cdf(x: f64) -> f64 {
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let a = -40.0;
    if x <= a {
        return 0.0;
    }
    let panels = (((x - a) / 1e-3).ceil() as usize).max(2) & !1;
    let h = (x - a) / panels as f64;
    let mut sum = phi(a) + phi(x);
    for k in 1..panels {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * phi(a + k as f64 * h);
    }
    sum * h / 3.0
}

/// Largest `|Φ(x) - quadrature(x)|` on a grid over `[-10, 10]`.
pub fn norm_cdf_worst() -> f64 {
    (0..=400)
        .map(|k| -10.0 + 0.05 * k as f64)
        .map(|x| (norm_cdf(x) - simpson_norm_cdf(x)).abs())
        .fold(0.0, f64::max)
}

/// Random market data in the range the suite exercises.
pub fn random_market(rng: &mut StdRng) -> MarketData<f64> {
    let mut m = MarketData::barrier_defaults();
    m.sigma = rng.gen_range(0.1..0.5);
    m.r = rng.gen_range(0.0..0.08);
    m.q = rng.gen_range(0.0..0.04);
    m.strike = rng.gen_range(50.0..150.0);
    m
}

/// Largest `|C - P - (s e^{-qt} - K e^{-rt})| / K`.
pub fn put_call_parity_worst(points: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let m = random_market(&mut rng);
        let k = m.strike;
        let s = k * rng.gen_range(0.3..3.0);
        let t = rng.gen_range(0.05..5.0);
        let c = bs_call(s, k, t, &m).unwrap().price;
        let p = bs_put(s, k, t, &m).unwrap().price;
        let forward = s * (-m.q * t).exp() - k * (-m.r * t).exp();
        worst = worst.max((c - p - forward).abs() / k);
    }
    worst
}

/// Random barrier market with `B` on either side of `K`, and a spot above `B`.
pub fn random_barrier_point(rng: &mut StdRng) -> (MarketData<f64>, f64, f64) {
    let mut m = random_market(rng);
    let b = m.strike * rng.gen_range(0.5..1.5);
    m.barrier = Some(b);
    let s = b * rng.gen_range(1.01..2.5);
    let t = rng.gen_range(0.1..3.0);
    (m, s, t)
}

/// Largest `|vanilla - DI - DO| / K` over price, delta and gamma.
pub fn in_out_parity_worst(points: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let (m, s, t) = random_barrier_point(&mut rng);
        let k = m.strike;
        let c = bs_call(s, k, t, &m).unwrap();
        let di = down_and_in_call(s, k, t, &m).unwrap();
        let dout = down_and_out_call(s, k, t, &m).unwrap();
        let gap = c - di - dout;
        worst = worst.max(gap.price.abs().max(gap.delta.abs()).max(gap.gamma.abs()) / k);
    }
    worst
}

pub type Pricer = fn(f64, f64, f64, &MarketData<f64>) -> fvimex::Result<GreekSet<f64>>;

/// Error of analytic Greeks against five-point central differences of the
/// price with `h = 1e-4 s`, as `|fd - a| / (|a| + 1e6 ν + 1e-12)` where `ν`
/// bounds the rounding error of the stencil. A value below `1e-6` means the
/// Greek agrees to `1e-6` relative wherever rounding allows it; Greeks below
/// `1e-12` are compared in absolute terms.
pub fn greeks_fd_worst(points: usize, seed: u64) -> f64 {
    let pricers: [(Pricer, bool); 5] = [
        (bs_call, false),
        (bs_put, false),
        (xva_call, false),
        (down_and_in_call, true),
        (down_and_out_call, true),
    ];
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        for &(price, barrier) in &pricers {
            let (m, s, t) = if barrier {
                random_barrier_point(&mut rng)
            } else {
                let m = MarketData {
                    barrier: None,
                    lambda_c: 0.05,
                    recovery_c: 0.4,
                    funding_spread: 0.02,
                    ..random_market(&mut rng)
                };
                (m, m.strike * rng.gen_range(0.6..1.6), rng.gen_range(0.1..3.0))
            };
            let (e, fd) = fd_greeks(price, s, t, &m);
            worst = worst.max(e).max(fd);
        }
    }
    worst
}

/// Effective relative errors of delta and gamma at one point.
pub fn fd_greeks(price: Pricer, s: f64, t: f64, m: &MarketData<f64>) -> (f64, f64) {
    let k = m.strike;
    let h = 1e-4 * s;
    let p = |x: f64| price(x, k, t, m).unwrap().price;
    let g = price(s, k, t, m).unwrap();
    let (p1, m1, p2, m2) = (p(s + h), p(s - h), p(s + 2.0 * h), p(s - 2.0 * h));
    let delta = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h);
    let gamma = (16.0 * (p1 + m1) - (p2 + m2) - 30.0 * g.price) / (12.0 * h * h);
    let level = f64::EPSILON * (g.price.abs() + s * g.delta.abs());
    let (nu_d, nu_g) = (4.0 * level / h, 16.0 * level / (h * h));
    (
        (delta - g.delta).abs() / (g.delta.abs() + 1e6 * nu_d + 1e-12),
        (gamma - g.gamma).abs() / (g.gamma.abs() + 1e6 * nu_g + 1e-12),
    )
}

/// `|u_t - L(u)| / max(|u_t|, |L(u)|)` for a closed form substituted into
/// its model's PDE, `u_t` by central differences in time.
pub fn pde_residual(model: &dyn PricingModel<f64>, s: f64, t: f64) -> f64 {
    let h = 1e-4 * t;
    let g = model.exact(s, t).unwrap();
    let u_t = (model.exact(s, t + h).unwrap().price - model.exact(s, t - h).unwrap().price)
        / (2.0 * h);
    let rhs = model.pde_rhs(s, g.price, g.delta, g.gamma);
    (u_t - rhs).abs() / u_t.abs().max(rhs.abs()).max(1e-12)
}

/// Worst PDE residual of the XVA closed form over random points.
pub fn xva_residual_worst(points: usize, seed: u64) -> f64 {
    let model = xva_model(MarketData::xva_defaults()).unwrap();
    let mut rng = rng(seed);
    (0..points)
        .map(|_| {
            let s = rng.gen_range(5.0..45.0);
            let t = rng.gen_range(0.1..5.0);
            pde_residual(&model, s, t)
        })
        .fold(0.0, f64::max)
}

/// Worst PDE residual of the down-and-out closed form over random points.
pub fn barrier_residual_worst(points: usize, seed: u64) -> f64 {
    let model = black_scholes_barrier_model(MarketData::barrier_defaults()).unwrap();
    let mut rng = rng(seed);
    (0..points)
        .map(|_| {
            let s = rng.gen_range(205.0..700.0);
            let t = rng.gen_range(0.1..1.0);
            pde_residual(&model, s, t)
        })
        .fold(0.0, f64::max)
}

/// Largest `|llf(u, u) - f(u)|` in units of `ε |f(u)|` for both pricing models.
pub fn llf_consistency_worst(points: usize, seed: u64) -> f64 {
    let barrier = black_scholes_barrier_model(MarketData::barrier_defaults()).unwrap();
    let xva = xva_model(MarketData::xva_defaults()).unwrap();
    let models: [&dyn ConservativeModel<f64>; 3] = [&barrier, &xva, &FnModel::burgers()];
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        for m in models {
            let u = rng.gen_range(-1e3..1e3);
            let s = rng.gen_range(0.0..1e3);
            let exact = m.flux(u, s);
            let got = llf_flux(m, s, u, u);
            if exact != 0.0 {
                worst = worst.max((got - exact).abs() / (f64::EPSILON * exact.abs()));
            }
        }
    }
    worst
}

/// Interface traces outside the envelope of their 3-cell stencil.
pub fn envelope_violations(trials: usize, seed: u64) -> usize {
    let mut rng = rng(seed);
    let mut bad = 0;
    for _ in 0..trials {
        let n: usize = rng.gen_range(3..16);
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let st = reconstruct(&u, Boundary::Transmissive, Boundary::Transmissive);
        for i in 0..n {
            let lo_i = i.saturating_sub(1);
            let hi_i = (i + 1).min(n - 1);
            let lo = u[lo_i].min(u[i]).min(u[hi_i]);
            let hi = u[lo_i].max(u[i]).max(u[hi_i]);
            for v in [st.right[i], st.left[i + 1]] {
                if v < lo || v > hi {
                    bad += 1;
                }
            }
        }
    }
    bad
}

/// `|Σ rhs_i ds| / Σ |rhs_i| ds` for Burgers with compactly supported data.
pub fn conservation_worst(trials: usize, seed: u64) -> f64 {
    let model = FnModel::burgers();
    let grid = Grid::new(0.0, 1.0, 64).unwrap();
    let closure = Closure::at(&model, 0.0);
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let u: Vec<f64> = (0..64)
            .map(|i| if (4..60).contains(&i) { rng.gen_range(-5.0..5.0) } else { 0.0 })
            .collect();
        let rhs = explicit_rhs_closed(&model, &grid, &u, &closure).unwrap();
        let total: f64 = rhs.iter().sum::<f64>() * grid.ds();
        let scale: f64 = rhs.iter().map(|v| v.abs()).sum::<f64>() * grid.ds();
        worst = worst.max(total.abs() / scale);
    }
    worst
}

/// Smooth advection-diffusion-reaction test: `f = (1 + s) u`,
/// `η = 0.1 (1 + s)`, `h = -u/2`, on `[0, 1]` with `u = e^s`.
pub fn smooth_adr() -> FnModel {
    FnModel {
        flux: |u, s| (1.0 + s) * u,
        dflux: |_, s| 1.0 + s,
        eta: |s| 0.1 * (1.0 + s),
        source: |u| -0.5 * u,
        left: Boundary::Dirichlet(1.0),
        right: Boundary::Dirichlet(std::f64::consts::E),
        domain: (0.0, 1.0),
        payoff: PiecewiseLinear::zero(),
    }
}

/// L1 error of the semi-discrete operator applied to the cell averages of
/// `e^s`, against `-(f)_s + (η u_s)_s + h` at the centers, over the cells
/// from `skip` to `n - skip`.
pub fn operator_error(n: usize, skip: usize) -> f64 {
    let model = smooth_adr();
    let grid = Grid::new(0.0, 1.0, n).unwrap();
    let ds = grid.ds();
    let avg: Vec<f64> = grid
        .edges()
        .windows(2)
        .map(|e: &[f64]| (e[1].exp() - e[0].exp()) / ds)
        .collect();
    let closure = Closure::at(&model, 0.0);
    let e = explicit_rhs_closed(&model, &grid, &avg, &closure).unwrap();
    let d = assemble_diffusion(&model, &grid, 0.0).unwrap();
    let b = diffusion_boundary_closed(&model, &grid, &closure);
    let s_part = d.matrix.apply(&avg);
    grid.centers()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i >= skip && i + skip < n)
        .map(|(i, &s)| {
            let u = s.exp();
            // -((1+s)u)' + (0.1(1+s)u')' - u/2 with u = u' = u''.
            let exact = -(u + (1.0 + s) * u) + 0.1 * (u + (1.0 + s) * u) - 0.5 * u;
            (e[i] + s_part[i] + b[i] - exact).abs() * ds
        })
        .sum()
}
