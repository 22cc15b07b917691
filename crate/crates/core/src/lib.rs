//! Spectral simulator and verification harness for the stochastic heat
//! equation ∂ₜu = ½Δ_M u + σ(t,x,u)Ẇ driven by colored noise on compact model
//! manifolds (circle, flat torus, unit sphere).

pub mod analysis;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod noise;
pub mod numerics;
pub mod output;
pub mod solver;

pub use error::{Error, Result};
