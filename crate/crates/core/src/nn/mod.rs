//! Dense-network numerics: feed-forward networks with analytic
//! backpropagation, Adam, soft target updates, replay storage and parameter
//! files.

pub mod adam;
pub mod io;
pub mod mlp;
pub mod replay;

pub use adam::{AdamConfig, AdamState};
pub use io::{load_params, load_params_matching, save_params};
pub use mlp::{soft_update, Activation, Dense, ForwardCache, Gradients, Mlp};
pub use replay::{Batch, ReplayBuffer};
