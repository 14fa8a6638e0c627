//! Range-penalized random-walk polymer in a random environment: exact range
//! laws, quenched partition functions, limiting variational problems and the
//! process couplings behind them.

pub mod numeric;
pub mod rangelaw;
pub mod rng;
pub mod stats;
pub mod env;
pub mod stochproc;
pub mod varprob;
pub mod polymer;
pub mod experiments;
pub mod io;
pub mod acceptance;
