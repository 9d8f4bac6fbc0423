use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::interest::InterestProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMode {
    /// The `n` heaviest clusters, ties to the lower id.
    Top,
    /// Weighted sampling without replacement in proportion to η.
    Sample,
}

impl std::str::FromStr for SelectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top" => Ok(Self::Top),
            "sample" => Ok(Self::Sample),
            other => Err(Error::Config(format!("unknown selection mode {other:?}"))),
        }
    }
}

/// Picks `n` clusters from a profile. Once the positive-weight support is
/// exhausted, zero-weight clusters follow in ascending id order.
pub fn select_clusters(profile: &InterestProfile, n: usize, mode: SelectionMode, seed: u64) -> Result<Vec<u32>> {
    if n == 0 {
        return Err(Error::invalid("must select at least one cluster"));
    }
    let mut ranked: Vec<(u32, f64)> = match mode {
        SelectionMode::Top => profile.weights.clone(),
        SelectionMode::Sample => {
            // Efraimidis–Spirakis keys: the largest ln(u)/w are a weighted
            // sample without replacement.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            profile
                .weights
                .iter()
                .map(|&(c, w)| {
                    let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                    (c, u.ln() / w)
                })
                .collect()
        }
    };
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut out: Vec<u32> = ranked.iter().take(n).map(|r| r.0).collect();
    if out.len() < n {
        let mut fill = (0..profile.num_clusters as u32).filter(|c| profile.weight(*c) <= 0.0);
        while out.len() < n {
            match fill.next() {
                Some(c) => out.push(c),
                None => break,
            }
        }
    }
    Ok(out)
}

/// Independent per-user seed derived from a run seed (splitmix64 finalizer).
pub fn user_seed(seed: u64, user: usize) -> u64 {
    let mut z = seed ^ (user as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
