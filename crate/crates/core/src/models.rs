//! Pricing problems written in conservative form
//! `u_t + f(u, s)_s = g(u_s, s)_s + h(u)`.

use serde::{Deserialize, Serialize};

use crate::analytics::{self, GreekSet};
use crate::error::{Error, Result};
use crate::mesh::PiecewiseLinear;
use crate::num::{lit, Real};

/// Boundary closure on one side of the domain at a given time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary<T> {
    /// Prescribed value of the solution at the boundary point.
    Dirichlet(T),
    /// Zero-gradient outflow: the ghost cell copies the first interior average.
    Transmissive,
}

/// The functions `f`, `g`, `h` of a conservative-form PDE together with its
/// initial datum, boundary closures and truncated domain.
pub trait ConservativeModel<T: Real>: Send + Sync {
    /// Convective flux `f(u, s)`.
    fn flux(&self, u: T, s: T) -> T;

    /// `∂f/∂u`.
    fn flux_derivative(&self, u: T, s: T) -> T;

    /// Diffusive flux `g(u_s, s)`.
    fn diffusive_flux(&self, u_s: T, s: T) -> T {
        match self.diffusivity(s) {
            Some(eta) => eta * u_s,
            None => T::nan(),
        }
    }

    /// `η(s)` when `g(u_s, s) = η(s) u_s`; `None` for a diffusive flux that
    /// is nonlinear in `u_s`.
    fn diffusivity(&self, s: T) -> Option<T>;

    /// Reaction term `h(u)`.
    fn source(&self, u: T) -> T;

    fn left_boundary(&self, t: T) -> Boundary<T>;

    fn right_boundary(&self, t: T) -> Boundary<T>;

    fn domain(&self) -> (T, T);

    fn payoff(&self) -> &PiecewiseLinear<T>;
}

/// A conservative model that also knows its closed-form solution and the
/// non-conservative form of its PDE.
pub trait PricingModel<T: Real>: ConservativeModel<T> {
    /// Maturity at which errors are measured.
    fn maturity(&self) -> T;

    /// Closed-form value and Greeks at time-to-maturity `t`.
    fn exact(&self, s: T, t: T) -> Result<GreekSet<T>>;

    /// Right-hand side of the PDE in its original form, `u_t = L(u)`,
    /// evaluated from pointwise derivatives.
    fn pde_rhs(&self, s: T, u: T, u_s: T, u_ss: T) -> T;
}

/// Market and contract data shared by both pricing problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketData<T> {
    pub sigma: T,
    pub r: T,
    pub q: T,
    /// Maturity in years.
    pub maturity: T,
    pub strike: T,
    pub barrier: Option<T>,
    pub recovery_b: T,
    pub recovery_c: T,
    pub lambda_b: T,
    pub lambda_c: T,
    pub funding_spread: T,
}

impl<T: Real> MarketData<T> {
    /// Down-and-out call test data: σ=0.2, r=0.05, q=0, T=1, K=70, B=200.
    pub fn barrier_defaults() -> Self {
        Self {
            sigma: lit(0.2),
            r: lit(0.05),
            q: T::zero(),
            maturity: T::one(),
            strike: lit(70.0),
            barrier: Some(lit(200.0)),
            recovery_b: T::zero(),
            recovery_c: T::zero(),
            lambda_b: T::zero(),
            lambda_c: T::zero(),
            funding_spread: T::zero(),
        }
    }

    /// Counterparty-risk call data with `λ_B = 0.04` and `s_F = (1 - R_B) λ_B`.
    pub fn xva_defaults() -> Self {
        let mut m = Self {
            sigma: lit(0.3),
            r: lit(0.02),
            q: T::zero(),
            maturity: lit(5.0),
            strike: lit(15.0),
            barrier: None,
            recovery_b: lit(0.4),
            recovery_c: lit(0.4),
            lambda_b: lit(0.04),
            lambda_c: lit(0.05),
            funding_spread: T::zero(),
        };
        m.funding_spread = m.own_default_spread();
        m
    }

    /// `(1 - R_B) λ_B`, the default funding spread.
    pub fn own_default_spread(&self) -> T {
        (T::one() - self.recovery_b) * self.lambda_b
    }

    /// Decay rate applied to positive exposure: `(1 - R_C) λ_C + s_F`.
    pub fn positive_exposure_rate(&self) -> T {
        (T::one() - self.recovery_c) * self.lambda_c + self.funding_spread
    }

    /// Decay rate applied to negative exposure: `(1 - R_B) λ_B`.
    pub fn negative_exposure_rate(&self) -> T {
        (T::one() - self.recovery_b) * self.lambda_b
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        let all = [
            self.sigma,
            self.r,
            self.q,
            self.maturity,
            self.strike,
            self.recovery_b,
            self.recovery_c,
            self.lambda_b,
            self.lambda_c,
            self.funding_spread,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return bad("market data must be finite");
        }
        if self.sigma <= T::zero() {
            return bad("sigma must be positive");
        }
        if self.maturity <= T::zero() {
            return bad("T must be positive");
        }
        if self.strike <= T::zero() {
            return bad("K must be positive");
        }
        for (name, rr) in [("R_B", self.recovery_b), ("R_C", self.recovery_c)] {
            if rr < T::zero() || rr > T::one() {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.lambda_b < T::zero() || self.lambda_c < T::zero() {
            return bad("default intensities must be nonnegative");
        }
        if let Some(b) = self.barrier {
            if !b.is_finite() || b < T::zero() {
                return bad("B must be finite and nonnegative");
            }
        }
        Ok(())
    }

    fn bs_flux_coefficient(&self) -> T {
        self.sigma * self.sigma - self.r + self.q
    }

    fn bs_source_coefficient(&self) -> T {
        self.sigma * self.sigma - lit::<T>(2.0) * self.r + self.q
    }

    fn half_variance(&self) -> T {
        lit::<T>(0.5) * self.sigma * self.sigma
    }

    /// `½σ²s²u_ss + (r - q) s u_s - r u`.
    fn black_scholes_operator(&self, s: T, u: T, u_s: T, u_ss: T) -> T {
        self.half_variance() * s * s * u_ss + (self.r - self.q) * s * u_s - self.r * u
    }
}

/// Down-and-out call under Black-Scholes on `[B, 5B]`.
#[derive(Debug, Clone)]
pub struct BarrierCall<T> {
    market: MarketData<T>,
    payoff: PiecewiseLinear<T>,
    domain: (T, T),
}

/// Builds the down-and-out call problem. The barrier must be set and positive.
pub fn black_scholes_barrier_model<T: Real>(market: MarketData<T>) -> Result<BarrierCall<T>> {
    market.validate()?;
    let barrier = market
        .barrier
        .ok_or_else(|| Error::Config("barrier model requires B".into()))?;
    if barrier <= T::zero() {
        return Err(Error::Config("barrier model requires B > 0".into()));
    }
    Ok(BarrierCall {
        payoff: PiecewiseLinear::knock_out_call(market.strike, barrier),
        domain: (barrier, lit::<T>(5.0) * barrier),
        market,
    })
}

impl<T: Real> BarrierCall<T> {
    pub fn market(&self) -> &MarketData<T> {
        &self.market
    }

    pub fn barrier(&self) -> T {
        self.domain.0
    }
}

impl<T: Real> ConservativeModel<T> for BarrierCall<T> {
    fn flux(&self, u: T, s: T) -> T {
        self.market.bs_flux_coefficient() * s * u
    }

    fn flux_derivative(&self, _u: T, s: T) -> T {
        self.market.bs_flux_coefficient() * s
    }

    fn diffusivity(&self, s: T) -> Option<T> {
        Some(self.market.half_variance() * s * s)
    }

    fn source(&self, u: T) -> T {
        self.market.bs_source_coefficient() * u
    }

    fn left_boundary(&self, _t: T) -> Boundary<T> {
        Boundary::Dirichlet(T::zero())
    }

    fn right_boundary(&self, t: T) -> Boundary<T> {
        let m = &self.market;
        let s_bar = self.domain.1;
        Boundary::Dirichlet(s_bar * (-m.q * t).exp() - m.strike * (-m.r * t).exp())
    }

    fn domain(&self) -> (T, T) {
        self.domain
    }

    fn payoff(&self) -> &PiecewiseLinear<T> {
        &self.payoff
    }
}

impl<T: Real> PricingModel<T> for BarrierCall<T> {
    fn maturity(&self) -> T {
        self.market.maturity
    }

    fn exact(&self, s: T, t: T) -> Result<GreekSet<T>> {
        analytics::down_and_out_call(s, self.market.strike, t, &self.market)
    }

    fn pde_rhs(&self, s: T, u: T, u_s: T, u_ss: T) -> T {
        self.market.black_scholes_operator(s, u, u_s, u_ss)
    }
}

/// How the far-field boundary of the counterparty-risk call is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FarField {
    /// Closed-form value of the adjusted call at `s_max`.
    #[default]
    ClosedForm,
    /// Discounted forward intrinsic value `s e^{-(q+β)t} - K e^{-(r+β)t}`.
    Intrinsic,
}

/// Call with counterparty-risk and funding adjustments, nonlinear source term.
#[derive(Debug, Clone)]
pub struct XvaCall<T> {
    market: MarketData<T>,
    payoff: PiecewiseLinear<T>,
    domain: (T, T),
    far_field: FarField,
}

/// Multiple of the strike used as the upper domain truncation.
pub const XVA_DOMAIN_STRIKES: f64 = 4.0;

/// Builds the counterparty-risk call problem on `[0, 4K]`.
pub fn xva_model<T: Real>(market: MarketData<T>) -> Result<XvaCall<T>> {
    xva_model_with(market, FarField::default())
}

pub fn xva_model_with<T: Real>(market: MarketData<T>, far_field: FarField) -> Result<XvaCall<T>> {
    market.validate()?;
    Ok(XvaCall {
        payoff: PiecewiseLinear::call(market.strike),
        domain: (T::zero(), lit::<T>(XVA_DOMAIN_STRIKES) * market.strike),
        market,
        far_field,
    })
}

impl<T: Real> XvaCall<T> {
    pub fn market(&self) -> &MarketData<T> {
        &self.market
    }

    pub fn far_field(&self) -> FarField {
        self.far_field
    }
}

impl<T: Real> ConservativeModel<T> for XvaCall<T> {
    fn flux(&self, u: T, s: T) -> T {
        self.market.bs_flux_coefficient() * s * u
    }

    fn flux_derivative(&self, _u: T, s: T) -> T {
        self.market.bs_flux_coefficient() * s
    }

    fn diffusivity(&self, s: T) -> Option<T> {
        Some(self.market.half_variance() * s * s)
    }

    fn source(&self, u: T) -> T {
        let m = &self.market;
        m.bs_source_coefficient() * u
            - m.negative_exposure_rate() * u.min(T::zero())
            - m.positive_exposure_rate() * u.max(T::zero())
    }

    fn left_boundary(&self, _t: T) -> Boundary<T> {
        Boundary::Dirichlet(T::zero())
    }

    fn right_boundary(&self, t: T) -> Boundary<T> {
        let m = &self.market;
        let s_bar = self.domain.1;
        let value = match self.far_field {
            FarField::ClosedForm => analytics::xva_call(s_bar, m.strike, t, m)
                .map(|g| g.price)
                .unwrap_or_else(|_| T::nan()),
            FarField::Intrinsic => {
                let beta = m.positive_exposure_rate();
                s_bar * (-(m.q + beta) * t).exp() - m.strike * (-(m.r + beta) * t).exp()
            }
        };
        Boundary::Dirichlet(value)
    }

    fn domain(&self) -> (T, T) {
        self.domain
    }

    fn payoff(&self) -> &PiecewiseLinear<T> {
        &self.payoff
    }
}

impl<T: Real> PricingModel<T> for XvaCall<T> {
    fn maturity(&self) -> T {
        self.market.maturity
    }

    fn exact(&self, s: T, t: T) -> Result<GreekSet<T>> {
        analytics::xva_call(s, self.market.strike, t, &self.market)
    }

    fn pde_rhs(&self, s: T, u: T, u_s: T, u_ss: T) -> T {
        let m = &self.market;
        m.black_scholes_operator(s, u, u_s, u_ss)
            - m.negative_exposure_rate() * u.min(T::zero())
            - m.positive_exposure_rate() * u.max(T::zero())
    }
}

/// A twice-differentiable test function with its first two derivatives.
pub struct TestFunction<'a, T> {
    pub value: &'a dyn Fn(T) -> T,
    pub d1: &'a dyn Fn(T) -> T,
    pub d2: &'a dyn Fn(T) -> T,
}

/// Compares `-f(u)_s + g(u_s)_s + h(u)` against the PDE's original form at
/// `samples` evenly spaced points of the model domain.
///
/// The `s`-derivatives of the flux compositions are taken with fourth-order
/// central differences; the result is the largest discrepancy relative to the
/// magnitude of the individual terms of the original form.
pub fn verify_conservative_rewrite<T: Real, M: PricingModel<T> + ?Sized>(
    model: &M,
    u: &TestFunction<'_, T>,
    samples: usize,
) -> T {
    let (lo, hi) = model.domain();
    let width = hi - lo;
    let step = width * lit::<T>(1e-3);
    let conv = |s: T| model.flux((u.value)(s), s);
    let diff = |s: T| model.diffusive_flux((u.d1)(s), s);
    let d_ds = |f: &dyn Fn(T) -> T, s: T| {
        let (h, h2) = (step, step + step);
        (f(s - h2) - lit::<T>(8.0) * f(s - h) + lit::<T>(8.0) * f(s + h) - f(s + h2))
            / (lit::<T>(12.0) * h)
    };
    let n = samples.max(2);
    let mut worst = T::zero();
    for k in 0..n {
        // Stay off the domain ends so the stencil never leaves it.
        let frac = T::from_usize(k).unwrap() / T::from_usize(n - 1).unwrap();
        let s = lo + lit::<T>(0.01) * width + frac * lit::<T>(0.98) * width;
        let (v, v1, v2) = ((u.value)(s), (u.d1)(s), (u.d2)(s));
        let conservative = -d_ds(&conv, s) + d_ds(&diff, s) + model.source(v);
        let original = model.pde_rhs(s, v, v1, v2);
        let m = model_scale(model, s, v, v1, v2);
        let rel = (conservative - original).abs() / m;
        if rel > worst {
            worst = rel;
        }
    }
    worst
}

fn model_scale<T: Real, M: PricingModel<T> + ?Sized>(model: &M, s: T, u: T, u_s: T, u_ss: T) -> T {
    let eta = model.diffusivity(s).unwrap_or(T::zero());
    let a = model.flux_derivative(u, s);
    T::one() + (eta * u_ss).abs() + (a * u_s).abs() + (s * u_s).abs() + u.abs()
}
