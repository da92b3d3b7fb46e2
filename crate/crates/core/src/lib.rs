//! Design-time safety toolkit for control-affine systems whose actuators may be
//! compromised.
//!
//! Given dynamics `ẋ = f(x) + g_v(x) u_v + g_s(x) u_s + d`, a spherical safe set
//! `S = {B ≤ 0}` and input boxes, the crate searches for a shrunken sublevel set
//! `S_c = {B ≤ -c}` and a tolerable box `Ũ_v` for the vulnerable inputs such that
//! `S_c` stays forward invariant no matter what the attacker plays inside `Ũ_v`.
//! The certificate is checked on a finite boundary mesh with a Lipschitz slack
//! ([`viability::certify`]), then enforced online by a CBF/CLF quadratic program
//! ([`qpcontrol`]) and exercised in closed loop ([`sim`]).

pub mod config;
pub mod error;
pub mod geometry;
pub mod output;
pub mod plant;
pub mod qpcontrol;
pub mod sim;
pub mod viability;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
