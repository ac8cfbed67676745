//! Robustness-optimal policy synthesis for a fragment of linear temporal logic on
//! finite deterministic systems, with a least-restrictive specification filter.

pub mod demo;
pub mod filter;
pub mod formula;
pub mod oracle;
pub mod policy;
pub mod robustness;
pub mod score;
pub mod system;
pub mod value;

pub use formula::Formula;
pub use score::{fin, Score};
pub use system::{TransitionSystem, Trace};
