//! Seed derivation.
//!
//! Every random stream in a run is seeded by mixing the master seed with a
//! path of role identifiers through SplitMix64. The scheme is fixed so runs
//! reproduce across hosts and thread schedules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Role tags; the numeric values are part of the reproducibility contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Role {
    Partition = 1,
    Chain = 2,
    Merge = 3,
    Simulate = 4,
    Replication = 5,
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mix `master` with a role and a path of indices.
pub fn derive(master: u64, role: Role, path: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ splitmix64(role as u64));
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x5851_F42D_4C95_7F2D)));
    }
    h
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, role: Role, path: &[u64]) -> ChaCha8Rng {
    rng(derive(master, role, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_and_distinct() {
        // frozen: changing these breaks reproducibility of published runs
        assert_eq!(derive(0, Role::Chain, &[]), derive(0, Role::Chain, &[]));
        let a = derive(42, Role::Chain, &[0]);
        let b = derive(42, Role::Chain, &[1]);
        let c = derive(42, Role::Merge, &[0]);
        let d = derive(43, Role::Chain, &[0]);
        assert!(a != b && a != c && a != d && b != c);
        assert_ne!(derive(1, Role::Merge, &[1, 2]), derive(1, Role::Merge, &[2, 1]));
    }
}
