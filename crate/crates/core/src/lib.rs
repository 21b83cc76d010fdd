//! Finite-volume IMEX Runge-Kutta solvers for one-dimensional parabolic
//! option-pricing PDEs written in conservative form
//! `u_t + f(u, s)_s = g(u_s, s)_s + h(u)`.
//!
//! The numerical kernels are generic over the scalar type ([`Real`], `f32`
//! or `f64`); the experiment driver and the command line run in `f64`.

pub mod analytics;
pub mod cli;
pub mod error;
pub mod harness;
pub mod mesh;
pub mod models;
pub mod num;
pub mod spatial;
pub mod timestepping;

pub use analytics::GreekSet;
pub use error::{Error, Result};
pub use mesh::{Grid, PiecewiseLinear, State};
pub use models::{ConservativeModel, FarField, MarketData, PricingModel};
pub use num::Real;
pub use timestepping::{FvSystem, Scheme, StepPlan};

pub type Grid64 = Grid<f64>;
pub type State64 = State<f64>;
pub type MarketData64 = MarketData<f64>;
pub type GreekSet64 = GreekSet<f64>;
pub type Grid32 = Grid<f32>;
pub type State32 = State<f32>;
pub type MarketData32 = MarketData<f32>;
pub type GreekSet32 = GreekSet<f32>;
