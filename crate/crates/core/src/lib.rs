//! Pre-training a transformer-encoder forecaster and fine-tuning it with
//! policy-gradient reinforcement learning (PPO, centralized multi-agent PPO
//! and group relative policy optimization).
//!
//! The math is generic over the element type ([`numerics::Scalar`], `f32` or
//! `f64`); the aliases below fix it to `f64`, which the experiment code uses.

pub mod algorithms;
pub mod backbone;
pub mod data;
pub mod envs;
pub mod finetune;
pub mod nn;
pub mod numerics;
pub mod rng;

pub use numerics::Scalar;

pub type Tensor = numerics::Tensor<f64>;
pub type Graph = numerics::Graph<f64>;
pub type Backbone = backbone::Backbone<f64>;
pub type Backbone32 = backbone::Backbone<f32>;
pub type Param = numerics::Param<f64>;
pub type ActorCritic = algorithms::ActorCritic<f64>;
pub type Agent = finetune::Agent<f64>;
