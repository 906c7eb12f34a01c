//! Policy optimization: GAE, Adam, and the clipped-surrogate update over
//! recurrent rollouts.

pub mod adam;
pub mod gae;
pub mod ppo;

pub use adam::{clip_global_norm, AdamState};
pub use gae::{compute_gae, lifetime_return};
pub use ppo::{ppo_update, sample_loss, PpoConfig, PpoStats, Rollout};
