//! Closed-form prices and Greeks: Black-Scholes vanillas, continuously
//! monitored down barriers and the positive-exposure adjusted call.
//!
//! All functions take time to maturity `t` (years) and read `σ`, `r`, `q`,
//! the barrier and the credit data from [`MarketData`].

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};
use crate::models::MarketData;
use crate::num::{lit, to_f64, Real};

/// Price with first and second derivative in the underlying.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GreekSet<T> {
    pub price: T,
    pub delta: T,
    pub gamma: T,
}

impl<T: Real> GreekSet<T> {
    pub fn new(price: T, delta: T, gamma: T) -> Self {
        Self { price, delta, gamma }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }
}

impl<T: Real> Add for GreekSet<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.price + o.price, self.delta + o.delta, self.gamma + o.gamma)
    }
}

impl<T: Real> Sub for GreekSet<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.price - o.price, self.delta - o.delta, self.gamma - o.gamma)
    }
}

impl<T: Real> Mul<T> for GreekSet<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        Self::new(self.price * k, self.delta * k, self.gamma * k)
    }
}

/// Standard normal CDF, `½ erfc(-x/√2)`.
pub fn norm_cdf<T: Real>(x: T) -> T {
    let x = to_f64(x);
    lit(0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2))
}

/// Standard normal density.
pub fn norm_pdf<T: Real>(x: T) -> T {
    let inv_sqrt_2pi = T::one() / (T::PI() + T::PI()).sqrt();
    inv_sqrt_2pi * (-lit::<T>(0.5) * x * x).exp()
}

/// `(d1, d2)` with `ν = r - q + σ²/2`.
pub fn d1_d2<T: Real>(s: T, strike: T, t: T, market: &MarketData<T>) -> Result<(T, T)> {
    if !(s > T::zero() && strike > T::zero() && t > T::zero()) {
        return Err(Error::Domain(format!(
            "d1/d2 need s > 0, K > 0, t > 0 (got s={s}, K={strike}, t={t})"
        )));
    }
    let sig_rt = market.sigma * t.sqrt();
    let nu = market.r - market.q + lit::<T>(0.5) * market.sigma * market.sigma;
    let d1 = ((s / strike).ln() + nu * t) / sig_rt;
    Ok((d1, d1 - sig_rt))
}

fn check_inputs<T: Real>(s: T, strike: T, t: T) -> Result<()> {
    for (name, v) in [("s", s), ("K", strike), ("t", t)] {
        if v.is_nan() || v < T::zero() {
            return Err(Error::Domain(format!("{name} must be nonnegative, got {v}")));
        }
    }
    Ok(())
}

/// European call.
pub fn bs_call<T: Real>(s: T, strike: T, t: T, market: &MarketData<T>) -> Result<GreekSet<T>> {
    check_inputs(s, strike, t)?;
    let div = (-market.q * t).exp();
    if strike == T::zero() {
        return Ok(GreekSet::new(s * div, div, T::zero()));
    }
    if t == T::zero() || s == T::zero() {
        let itm = s > strike;
        return Ok(GreekSet::new(
            (s - strike).max(T::zero()),
            if itm { T::one() } else { T::zero() },
            T::zero(),
        ));
    }
    let (d1, d2) = d1_d2(s, strike, t, market)?;
    let disc = (-market.r * t).exp();
    Ok(GreekSet::new(
        s * div * norm_cdf(d1) - strike * disc * norm_cdf(d2),
        div * norm_cdf(d1),
        div * norm_pdf(d1) / (s * market.sigma * t.sqrt()),
    ))
}

/// European put.
pub fn bs_put<T: Real>(s: T, strike: T, t: T, market: &MarketData<T>) -> Result<GreekSet<T>> {
    check_inputs(s, strike, t)?;
    let div = (-market.q * t).exp();
    if strike == T::zero() {
        return Ok(GreekSet::zero());
    }
    if t == T::zero() || s == T::zero() {
        let itm = s < strike;
        let disc = if s == T::zero() { (-market.r * t).exp() } else { T::one() };
        return Ok(GreekSet::new(
            (strike * disc - s).max(T::zero()),
            if itm { -T::one() } else { T::zero() },
            T::zero(),
        ));
    }
    let (d1, d2) = d1_d2(s, strike, t, market)?;
    let disc = (-market.r * t).exp();
    Ok(GreekSet::new(
        strike * disc * norm_cdf(-d2) - s * div * norm_cdf(-d1),
        -div * norm_cdf(-d1),
        div * norm_pdf(d1) / (s * market.sigma * t.sqrt()),
    ))
}

fn barrier_of<T: Real>(market: &MarketData<T>) -> Result<T> {
    match market.barrier {
        Some(b) if b > T::zero() => Ok(b),
        _ => Err(Error::Domain("barrier price needs B > 0".into())),
    }
}

/// `λ = (2/σ²)(r - q - σ²/2)`.
fn barrier_exponent<T: Real>(market: &MarketData<T>) -> T {
    let var = market.sigma * market.sigma;
    lit::<T>(2.0) / var * (market.r - market.q - lit::<T>(0.5) * var)
}

/// Down-and-in call, continuously monitored, with analytic Greeks.
///
/// Writing `K̄ = max(B, K)`, `z = B²/s`:
///
/// ```text
/// C_DI = (B/s)^λ [ C(z, K̄) + (K̄ - K) e^{-rt} N(d2(z, K̄)) ]
///      + [ P(s, K) - P(s, B) + (B - K) e^{-rt} N(-d2(s, B)) ] 1{B > K}
/// ```
pub fn down_and_in_call<T: Real>(
    s: T,
    strike: T,
    t: T,
    market: &MarketData<T>,
) -> Result<GreekSet<T>> {
    let b = barrier_of(market)?;
    check_inputs(s, strike, t)?;
    if s < b {
        return Err(Error::Domain(format!("spot {s} below barrier {b}: already knocked")));
    }
    if t == T::zero() {
        return Ok(if s == b {
            bs_call(s, strike, t, market)?
        } else {
            GreekSet::zero()
        });
    }
    let sig_rt = market.sigma * t.sqrt();
    let disc = (-market.r * t).exp();
    let lambda = barrier_exponent(market);
    let k_bar = b.max(strike);
    let two = lit::<T>(2.0);

    // Reflected term, first as a function of z = B²/s.
    let z = b * b / s;
    let cz = bs_call(z, k_bar, t, market)?;
    let (_, d2z) = d1_d2(z, k_bar, t, market)?;
    let jump = (k_bar - strike) * disc;
    let pz = norm_pdf(d2z);
    let x = cz.price + jump * norm_cdf(d2z);
    let x_z = cz.delta + jump * pz / (z * sig_rt);
    let x_zz = cz.gamma - jump * pz / (z * z * sig_rt) * (T::one() + d2z / sig_rt);
    // Chain rule through z(s): z' = -z/s, z'' = 2z/s².
    let x_s = -x_z * z / s;
    let x_ss = x_zz * (z / s) * (z / s) + x_z * two * z / (s * s);
    let p = (b / s).powf(lambda);
    let p_s = -lambda * p / s;
    let p_ss = lambda * (lambda + T::one()) * p / (s * s);
    let mut out = GreekSet::new(
        p * x,
        p_s * x + p * x_s,
        p_ss * x + two * p_s * x_s + p * x_ss,
    );

    if b > strike {
        let pk = bs_put(s, strike, t, market)?;
        let pb = bs_put(s, b, t, market)?;
        let (_, d2b) = d1_d2(s, b, t, market)?;
        let w = (b - strike) * disc;
        let pdf = norm_pdf(d2b);
        out = out
            + (pk - pb)
            + GreekSet::new(
                w * norm_cdf(-d2b),
                -w * pdf / (s * sig_rt),
                w * pdf / (s * s * sig_rt) * (T::one() + d2b / sig_rt),
            );
    }
    Ok(out)
}

/// Down-and-out call by in-out parity.
pub fn down_and_out_call<T: Real>(
    s: T,
    strike: T,
    t: T,
    market: &MarketData<T>,
) -> Result<GreekSet<T>> {
    let b = barrier_of(market)?;
    check_inputs(s, strike, t)?;
    if s < b {
        return Err(Error::Domain(format!("spot {s} below barrier {b}: already knocked")));
    }
    if s == b {
        // Knocked out on the barrier itself.
        let di = down_and_in_call(s, strike, t, market)?;
        let vanilla = bs_call(s, strike, t, market)?;
        return Ok(GreekSet::new(T::zero(), vanilla.delta - di.delta, vanilla.gamma - di.gamma));
    }
    Ok(bs_call(s, strike, t, market)? - down_and_in_call(s, strike, t, market)?)
}

/// Down-and-in call price with the bracket terms exactly as they appear in
/// the commonly quoted form
///
/// ```text
/// (B/s)^λ [ C(z, K̄) + (K̄ - K) N(d1(z, K̄)) ]
///   + [ P(s,K) - P(s,B) + (B - K) e^{-rt} / (σ s √t) N(-d1(s, B)) ] 1{B > K}
/// ```
///
/// This variant does not reproduce the vanilla price on the barrier for `B > K` and is kept
/// only for comparison against [`down_and_in_call`].
pub fn down_and_in_call_quoted<T: Real>(
    s: T,
    strike: T,
    t: T,
    market: &MarketData<T>,
) -> Result<T> {
    let b = barrier_of(market)?;
    if s < b || t <= T::zero() {
        return Err(Error::Domain("quoted variant needs s >= B and t > 0".into()));
    }
    let k_bar = b.max(strike);
    let z = b * b / s;
    let lambda = barrier_exponent(market);
    let (d1z, _) = d1_d2(z, k_bar, t, market)?;
    let mut v = (b / s).powf(lambda)
        * (bs_call(z, k_bar, t, market)?.price + (k_bar - strike) * norm_cdf(d1z));
    if b > strike {
        let (d1b, _) = d1_d2(s, b, t, market)?;
        v = v + bs_put(s, strike, t, market)?.price - bs_put(s, b, t, market)?.price
            + (b - strike) * (-market.r * t).exp() / (market.sigma * s * t.sqrt())
                * norm_cdf(-d1b);
    }
    Ok(v)
}

/// Adjusted call value when the exposure stays nonnegative:
/// `C_BS e^{-βt}` with `β = (1 - R_C) λ_C + s_F`.
pub fn xva_call<T: Real>(s: T, strike: T, t: T, market: &MarketData<T>) -> Result<GreekSet<T>> {
    let decay = (-market.positive_exposure_rate() * t).exp();
    Ok(bs_call(s, strike, t, market)? * decay)
}
