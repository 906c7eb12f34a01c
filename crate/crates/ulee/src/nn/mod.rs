//! From-scratch differentiable building blocks: flat parameter storage,
//! layers with explicit backward passes, and gradient-check utilities.

pub mod gradcheck;
pub mod ops;
pub mod params;

pub use ops::{Conv3x3, Embedding, GruCache, GruCell, Linear, MlpCache, MlpHead};
pub use params::{BlockId, FlatParams, ParamLayout};
