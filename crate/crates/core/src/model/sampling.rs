use rand::Rng;

use crate::error::{Error, Result};
use crate::ingest::UserItems;

/// Draws `n` distinct items uniformly from those the user has not engaged
/// in `train`, by rejection.
pub fn sample_negatives<R: Rng>(train: &UserItems, num_items: usize, user: usize, n: usize, rng: &mut R) -> Result<Vec<u32>> {
    let seen = train.items(user);
    let available = num_items - seen.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if available == 0 {
        return Err(Error::invalid(format!("user {user} has engaged every item; no negatives")));
    }
    if n > available {
        return Err(Error::invalid(format!(
            "user {user}: {n} negatives requested but only {available} unseen items"
        )));
    }
    let mut out: Vec<u32> = Vec::with_capacity(n);
    if available * 4 < num_items {
        // dense user: enumerate the complement instead of rejecting
        let complement: Vec<u32> = (0..num_items as u32).filter(|i| seen.binary_search(i).is_err()).collect();
        while out.len() < n {
            let c = complement[rng.random_range(0..complement.len())];
            if !out.contains(&c) {
                out.push(c);
            }
        }
        return Ok(out);
    }
    while out.len() < n {
        let c = rng.random_range(0..num_items as u32);
        if seen.binary_search(&c).is_err() && !out.contains(&c) {
            out.push(c);
        }
    }
    Ok(out)
}
