//! Per-agent random streams.
//!
//! Every agent draws from its own ChaCha8 stream. The 256-bit key is
//! expanded from the master seed (`SeedableRng::seed_from_u64`) and the
//! stream is selected with the 64-bit ChaCha stream id, so agent `i` of a
//! run always receives the same stream regardless of how many workers
//! execute the ensemble or in which order. ChaCha8 is counter based: each
//! stream has a 2^68-byte period before its block counter wraps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type AgentRng = ChaCha8Rng;

/// Stream for agent `agent_index` under `master_seed`.
pub fn derive_rng(master_seed: u64, agent_index: u64) -> AgentRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(agent_index);
    rng
}

/// Stream for agent `agent_index` of ensemble `member` in a multi-run sweep.
/// Members occupy disjoint 2^32-wide blocks of stream ids.
pub fn derive_member_rng(master_seed: u64, member: u32, agent_index: u32) -> AgentRng {
    derive_rng(master_seed, ((member as u64) << 32) | agent_index as u64)
}
