use crate::ingest::UserItems;
use crate::retrieval::RankedList;

/// Ranks items by train-set interaction count, ties to the lower item id.
#[derive(Debug, Clone)]
pub struct MostPopular {
    counts: Vec<usize>,
    ranking: Vec<u32>,
}

impl MostPopular {
    pub fn fit(train: &UserItems, num_items: usize) -> Self {
        let counts = item_counts(train, num_items);
        let mut ranking: Vec<u32> = (0..num_items as u32).collect();
        ranking.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
        Self { counts, ranking }
    }

    pub fn ranking(&self) -> &[u32] {
        &self.ranking
    }

    pub fn count(&self, item: u32) -> usize {
        self.counts[item as usize]
    }

    /// Top-`k` popular items not in the sorted `exclude` list.
    pub fn recommend(&self, user: usize, exclude: &[u32], k: usize) -> RankedList {
        let mut list = RankedList::empty(user);
        for &i in &self.ranking {
            if list.items.len() == k {
                break;
            }
            list.candidates_scored += 1;
            if exclude.binary_search(&i).is_ok() {
                continue;
            }
            list.items.push(i);
            list.scores.push(self.counts[i as usize] as f32);
        }
        list
    }
}

pub fn item_counts(train: &UserItems, num_items: usize) -> Vec<usize> {
    let mut counts = vec![0usize; num_items];
    for u in 0..train.num_users() {
        for &i in train.items(u) {
            counts[i as usize] += 1;
        }
    }
    counts
}
