pub mod corpus;
pub mod error;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod scheduler;

pub use error::{Error, Result};

pub type Tensor32 = numerics::Tensor<f32>;
pub type Tensor64 = numerics::Tensor<f64>;
pub type Graph32 = numerics::Graph<f32>;
pub type Graph64 = numerics::Graph<f64>;
pub type ParamStore32 = numerics::ParamStore<f32>;
pub type ParamStore64 = numerics::ParamStore<f64>;
pub type Model32 = model::Model<f32>;
pub type Model64 = model::Model<f64>;
pub type Trainer32 = scheduler::Trainer<f32>;
pub type Trainer64 = scheduler::Trainer<f64>;
pub type Adam32 = numerics::Adam<f32>;
pub type Adam64 = numerics::Adam<f64>;
