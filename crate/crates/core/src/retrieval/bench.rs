use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::RankedList;

/// Wall-clock cost of producing ranked lists for a set of users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub strategy: String,
    pub users: usize,
    /// Sum over repetitions.
    pub total_seconds: f64,
    /// Median seconds of one repetition over all users.
    pub median_seconds: f64,
    /// Candidates scored in one repetition, summed over users.
    pub candidates_scored: u64,
    pub repetitions: usize,
    pub per_repetition_seconds: Vec<f64>,
}

impl TimingReport {
    pub fn mean_candidates_per_user(&self) -> f64 {
        if self.users == 0 {
            0.0
        } else {
            self.candidates_scored as f64 / self.users as f64
        }
    }
}

/// Times `recommend` over `users` on the calling thread, `repetitions` times.
/// Embeddings must already be computed; only ranking is timed.
pub fn benchmark_inference<F>(strategy: &str, users: &[usize], repetitions: usize, mut recommend: F) -> TimingReport
where
    F: FnMut(usize) -> RankedList,
{
    let repetitions = repetitions.max(1);
    let mut times = Vec::with_capacity(repetitions);
    let mut candidates = 0u64;
    for rep in 0..repetitions {
        let mut scored = 0u64;
        let start = Instant::now();
        for &u in users {
            let list = recommend(u);
            scored += list.candidates_scored as u64;
            std::hint::black_box(&list);
        }
        times.push(start.elapsed().as_secs_f64());
        if rep == 0 {
            candidates = scored;
        }
    }
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    TimingReport {
        strategy: strategy.to_string(),
        users: users.len(),
        total_seconds: times.iter().sum(),
        median_seconds: median,
        candidates_scored: candidates,
        repetitions,
        per_repetition_seconds: times,
    }
}
