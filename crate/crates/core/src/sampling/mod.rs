//! Selection rules (ego, snowball wave, k-hop union), the simple random
//! walk, and brute-force oracles for selector invariance and conditional
//! exchangeability.

pub mod exchangeability;
pub mod invariance;
mod selectors;
mod walk;

pub use invariance::{verify_invariant_selector, InvarianceOutcome};
pub use selectors::{ego_select, k_hop_union, snowball_wave, SelectionResult, SelectionRule};
pub use walk::{
    choose_walk_start, random_walk, random_walk_with_policy, StartPolicy, WalkTrace,
};
