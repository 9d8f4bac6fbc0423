use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::parse_kv_line;

/// Item to interest-cluster assignment with dense cluster ids `0..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    assignment: Vec<u32>,
    members: Vec<Vec<u32>>,
    pub resolution: f64,
    pub seed: u64,
}

impl Clustering {
    /// Renumbers arbitrary labels densely, in order of each cluster's smallest item.
    pub fn from_labels(labels: &[usize], resolution: f64, seed: u64) -> Self {
        let mut remap = std::collections::HashMap::new();
        let assignment: Vec<u32> = labels
            .iter()
            .map(|l| {
                let next = remap.len() as u32;
                *remap.entry(*l).or_insert(next)
            })
            .collect();
        let mut members = vec![Vec::new(); remap.len()];
        for (item, &c) in assignment.iter().enumerate() {
            members[c as usize].push(item as u32);
        }
        Self {
            assignment,
            members,
            resolution,
            seed,
        }
    }

    pub fn num_items(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.members.len()
    }

    pub fn cluster_of(&self, item: usize) -> u32 {
        self.assignment[item]
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    /// Items in `cluster`, ascending.
    pub fn members(&self, cluster: usize) -> &[u32] {
        &self.members[cluster]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }
}

/// `# K=<k> resolution=<r> seed=<s>` then `item<TAB>cluster` lines.
pub fn write_clustering(path: &Path, preamble: &[String], c: &Clustering) -> Result<()> {
    let ctx = || format!("write {}", path.display());
    let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        for line in preamble {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "# K={} resolution={} seed={}", c.num_clusters(), c.resolution, c.seed)?;
        for (item, cluster) in c.assignment.iter().enumerate() {
            writeln!(w, "{item}\t{cluster}")?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(ctx(), e))
}

pub fn read_clustering(path: &Path) -> Result<Clustering> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut labels = Vec::new();
    let mut meta = None;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if let Some(c) = line.strip_prefix('#') {
            let kv = parse_kv_line(c);
            if let (Some(k), Some(r), Some(s)) = (kv.get("K"), kv.get("resolution"), kv.get("seed")) {
                let parse_err = || Error::parse(n + 1, "bad clustering header");
                meta = Some((
                    k.parse::<usize>().map_err(|_| parse_err())?,
                    r.parse::<f64>().map_err(|_| parse_err())?,
                    s.parse::<u64>().map_err(|_| parse_err())?,
                ));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let (item, cluster) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(n + 1, "expected item<TAB>cluster"))?;
        if item.parse::<usize>().ok() != Some(labels.len()) {
            return Err(Error::parse(n + 1, "item indices must be dense and ascending"));
        }
        labels.push(
            cluster
                .parse::<usize>()
                .map_err(|_| Error::parse(n + 1, "bad cluster id"))?,
        );
    }
    let (k, resolution, seed) = meta.ok_or_else(|| Error::parse(1, "missing `# K=` header"))?;
    if labels.iter().any(|&l| l >= k) {
        return Err(Error::parse(0, "cluster id outside [0, K)"));
    }
    let mut members = vec![Vec::new(); k];
    for (item, &l) in labels.iter().enumerate() {
        members[l].push(item as u32);
    }
    if members.iter().any(Vec::is_empty) {
        return Err(Error::parse(0, "cluster ids are not dense"));
    }
    Ok(Clustering {
        assignment: labels.iter().map(|&l| l as u32).collect(),
        members,
        resolution,
        seed,
    })
}
