//! Interaction-log ingestion: parsing, degree filtering, dense re-indexing,
//! per-user train/validation/test splits and temporal prefixes.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One raw engagement event as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRecord {
    pub user: String,
    pub item: String,
    /// Original rating or count; binarized away by [`build_dataset`].
    pub value: f64,
    pub timestamp: i64,
}

/// An observed (label 1) engagement between dense user and item indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    pub timestamp: i64,
}

/// Bijection between raw string ids and dense indices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdMap {
    raw: Vec<String>,
    index: HashMap<String, u32>,
}

impl IdMap {
    pub fn from_raw(raw: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(raw.len());
        for (i, id) in raw.iter().enumerate() {
            if index.insert(id.clone(), i as u32).is_some() {
                return Err(Error::invalid(format!("duplicate raw id {id:?}")));
            }
        }
        Ok(Self { raw, index })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn raw(&self, index: u32) -> &str {
        &self.raw[index as usize]
    }

    pub fn index(&self, raw: &str) -> Option<u32> {
        self.index.get(raw).copied()
    }

    pub fn raw_ids(&self) -> &[String] {
        &self.raw
    }
}

/// Binarized, deduplicated, degree-filtered interaction set.
///
/// Interactions are sorted by `(user, item)`; every pair appears once.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub num_users: usize,
    pub num_items: usize,
    pub interactions: Vec<Interaction>,
    pub user_ids: IdMap,
    pub item_ids: IdMap,
    pub min_user_degree: usize,
    pub min_item_degree: usize,
}

/// Column names for generic CSV ingestion.
#[derive(Debug, Clone)]
pub struct CsvColumns {
    pub user: String,
    pub item: String,
    /// Defaults to 1.0 when unmapped.
    pub value: Option<String>,
    /// Defaults to 0 when unmapped.
    pub timestamp: Option<String>,
}

pub fn parse_movielens(path: &Path) -> Result<Vec<InteractionRecord>> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let records = parse_movielens_reader(BufReader::new(file))?;
    if records.is_empty() {
        return Err(Error::NoRecords(path.display().to_string()));
    }
    Ok(records)
}

/// Parses `UserID::MovieID::Rating::Timestamp` lines. Blank lines are skipped.
pub fn parse_movielens_reader<R: BufRead>(reader: R) -> Result<Vec<InteractionRecord>> {
    let mut records = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io(format!("read line {line_no}"), e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                line_no,
                format!("expected 4 `::`-separated fields, found {}", fields.len()),
            ));
        }
        records.push(make_record(line_no, fields[0], fields[1], fields[2], fields[3])?);
    }
    if records.is_empty() {
        return Err(Error::NoRecords("input".into()));
    }
    Ok(records)
}

fn make_record(line: usize, user: &str, item: &str, value: &str, ts: &str) -> Result<InteractionRecord> {
    let user = user.trim();
    let item = item.trim();
    if user.is_empty() || item.is_empty() {
        return Err(Error::parse(line, "empty user or item id"));
    }
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("bad value {value:?}")))?;
    let timestamp: i64 = ts
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("bad timestamp {ts:?}")))?;
    if timestamp < 0 {
        return Err(Error::parse(line, "negative timestamp"));
    }
    Ok(InteractionRecord {
        user: user.to_string(),
        item: item.to_string(),
        value,
        timestamp,
    })
}

pub fn parse_csv(path: &Path, columns: &CsvColumns) -> Result<Vec<InteractionRecord>> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    parse_csv_reader(file, columns)
}

pub fn parse_csv_reader<R: std::io::Read>(reader: R, columns: &CsvColumns) -> Result<Vec<InteractionRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(1, format!("header: {e}")))?
        .clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::parse(1, format!("missing column {name:?}")))
    };
    let user_col = find(&columns.user)?;
    let item_col = find(&columns.item)?;
    let value_col = columns.value.as_deref().map(find).transpose()?;
    let ts_col = columns.timestamp.as_deref().map(find).transpose()?;

    let mut records = Vec::new();
    for (n, row) in rdr.records().enumerate() {
        let line_no = n + 2;
        let row = row.map_err(|e| Error::parse(line_no, e.to_string()))?;
        let get = |col: usize| row.get(col).unwrap_or("");
        let value = value_col.map(get).unwrap_or("1");
        let ts = ts_col.map(get).unwrap_or("0");
        records.push(make_record(line_no, get(user_col), get(item_col), value, ts)?);
    }
    if records.is_empty() {
        return Err(Error::NoRecords("csv input".into()));
    }
    Ok(records)
}

/// Sorted unique raw ids; numeric order when every id parses as an integer.
fn sorted_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut ids: Vec<String> = ids.map(str::to_string).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.iter().all(|s| s.parse::<u64>().is_ok()) {
        ids.sort_by_key(|s| s.parse::<u64>().unwrap_or(0));
    }
    ids
}

pub fn build_dataset(
    records: &[InteractionRecord],
    min_user_degree: usize,
    min_item_degree: usize,
) -> Result<Dataset> {
    // Collapse duplicates, keeping the latest timestamp.
    let mut latest: HashMap<(&str, &str), i64> = HashMap::with_capacity(records.len());
    for r in records {
        latest
            .entry((r.user.as_str(), r.item.as_str()))
            .and_modify(|t| *t = (*t).max(r.timestamp))
            .or_insert(r.timestamp);
    }
    let mut pairs: Vec<(&str, &str, i64)> = latest.into_iter().map(|((u, i), t)| (u, i, t)).collect();

    loop {
        let mut user_deg: HashMap<&str, usize> = HashMap::new();
        let mut item_deg: HashMap<&str, usize> = HashMap::new();
        for &(u, i, _) in &pairs {
            *user_deg.entry(u).or_default() += 1;
            *item_deg.entry(i).or_default() += 1;
        }
        let before = pairs.len();
        pairs.retain(|(u, i, _)| user_deg[u] >= min_user_degree && item_deg[i] >= min_item_degree);
        if pairs.len() == before {
            break;
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no interactions survive degree filtering (users >= {min_user_degree}, items >= {min_item_degree})"
        )));
    }

    let user_ids = IdMap::from_raw(sorted_ids(pairs.iter().map(|p| p.0)))?;
    let item_ids = IdMap::from_raw(sorted_ids(pairs.iter().map(|p| p.1)))?;
    let mut interactions: Vec<Interaction> = pairs
        .iter()
        .map(|&(u, i, t)| Interaction {
            user: user_ids.index(u).unwrap(),
            item: item_ids.index(i).unwrap(),
            timestamp: t,
        })
        .collect();
    interactions.sort_unstable();

    Ok(Dataset {
        num_users: user_ids.len(),
        num_items: item_ids.len(),
        interactions,
        user_ids,
        item_ids,
        min_user_degree,
        min_item_degree,
    })
}

impl Dataset {
    /// Raw records (value 1.0) reproducing this dataset.
    pub fn to_records(&self) -> Vec<InteractionRecord> {
        self.interactions
            .iter()
            .map(|x| InteractionRecord {
                user: self.user_ids.raw(x.user).to_string(),
                item: self.item_ids.raw(x.item).to_string(),
                value: 1.0,
                timestamp: x.timestamp,
            })
            .collect()
    }

    pub fn user_items(&self) -> UserItems {
        UserItems::new(self.num_users, &self.interactions)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::invalid(format!("{name} fraction {f} outside (0,1)")));
            }
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Per-user (train, val, test) counts for `n` interactions.
    ///
    /// Largest-remainder rounding; ties go to train, then val, then test.
    /// Val and test are topped up to one interaction from train when empty.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let fracs = [self.train, self.val, self.test];
        let raw: Vec<f64> = fracs.iter().map(|f| f * n as f64).collect();
        let mut counts: Vec<usize> = raw.iter().map(|r| (r + 1e-9).floor() as usize).collect();
        let mut rest = n - counts.iter().sum::<usize>();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| {
            let ra = raw[a] - counts[a] as f64;
            let rb = raw[b] - counts[b] as f64;
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for &slot in order.iter().cycle() {
            if rest == 0 {
                break;
            }
            counts[slot] += 1;
            rest -= 1;
        }
        for slot in [1, 2] {
            if counts[slot] == 0 && counts[0] > 1 {
                counts[slot] += 1;
                counts[0] -= 1;
            }
        }
        (counts[0], counts[1], counts[2])
    }
}

/// Disjoint train/validation/test partition of a dataset's interactions.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<Interaction>,
    pub val: Vec<Interaction>,
    pub test: Vec<Interaction>,
}

pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    // Interactions are sorted by user, so each user is a contiguous run.
    for run in dataset.interactions.chunk_by(|a, b| a.user == b.user) {
        if run.len() < 3 {
            return Err(Error::invalid(format!(
                "user {} has {} interactions; at least 3 are needed to populate all splits",
                dataset.user_ids.raw(run[0].user),
                run.len()
            )));
        }
        let mut shuffled = run.to_vec();
        shuffled.shuffle(&mut rng);
        let (n_train, n_val, _) = spec.counts(run.len());
        let (train, rest) = shuffled.split_at(n_train);
        let (val, test) = rest.split_at(n_val);
        out.train.extend_from_slice(train);
        out.val.extend_from_slice(val);
        out.test.extend_from_slice(test);
    }
    for part in [&mut out.train, &mut out.val, &mut out.test] {
        part.sort_unstable();
    }
    Ok(out)
}

/// Keeps interactions at or before the `fraction`-quantile timestamp, then
/// re-applies the dataset's degree thresholds.
pub fn temporal_prefix(dataset: &Dataset, fraction: f64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("prefix fraction {fraction} outside (0,1]")));
    }
    if fraction == 1.0 {
        return Ok(dataset.clone());
    }
    let mut times: Vec<i64> = dataset.interactions.iter().map(|x| x.timestamp).collect();
    times.sort_unstable();
    let rank = ((fraction * times.len() as f64).ceil() as usize).clamp(1, times.len());
    let cutoff = times[rank - 1];
    let kept: Vec<InteractionRecord> = dataset
        .to_records()
        .into_iter()
        .filter(|r| r.timestamp <= cutoff)
        .collect();
    build_dataset(&kept, dataset.min_user_degree, dataset.min_item_degree)
}

/// Compressed per-user sorted item lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserItems {
    offsets: Vec<usize>,
    items: Vec<u32>,
}

impl UserItems {
    pub fn new(num_users: usize, interactions: &[Interaction]) -> Self {
        let mut counts = vec![0usize; num_users + 1];
        for x in interactions {
            counts[x.user as usize + 1] += 1;
        }
        for u in 0..num_users {
            counts[u + 1] += counts[u];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut items = vec![0u32; interactions.len()];
        for x in interactions {
            let slot = &mut cursor[x.user as usize];
            items[*slot] = x.item;
            *slot += 1;
        }
        for u in 0..num_users {
            let list = &mut items[offsets[u]..offsets[u + 1]];
            list.sort_unstable();
        }
        let mut out = Self { offsets, items };
        out.dedup();
        out
    }

    fn dedup(&mut self) {
        let mut items = Vec::with_capacity(self.items.len());
        let mut offsets = vec![0usize];
        for u in 0..self.num_users() {
            let start = items.len();
            for &i in &self.items[self.offsets[u]..self.offsets[u + 1]] {
                if items.len() == start || *items.last().unwrap() != i {
                    items.push(i);
                }
            }
            offsets.push(items.len());
        }
        self.items = items;
        self.offsets = offsets;
    }

    pub fn num_users(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn items(&self, user: usize) -> &[u32] {
        &self.items[self.offsets[user]..self.offsets[user + 1]]
    }

    pub fn degree(&self, user: usize) -> usize {
        self.offsets[user + 1] - self.offsets[user]
    }

    pub fn contains(&self, user: usize, item: u32) -> bool {
        self.items(user).binary_search(&item).is_ok()
    }

    pub fn total(&self) -> usize {
        self.items.len()
    }
}

/// Writes `users=<n> items=<m> interactions=<k>` followed by
/// `user<TAB>item<TAB>timestamp` lines. `preamble` lines are written first
/// as `# ` comments.
pub fn write_interactions(
    path: &Path,
    preamble: &[String],
    num_users: usize,
    num_items: usize,
    interactions: &[Interaction],
) -> Result<()> {
    let ctx = || format!("write {}", path.display());
    let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        for line in preamble {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "users={num_users} items={num_items} interactions={}", interactions.len())?;
        for x in interactions {
            writeln!(w, "{}\t{}\t{}", x.user, x.item, x.timestamp)?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(ctx(), e))
}

/// Parsed interaction file: header counts, `# key=value` comment pairs and rows.
#[derive(Debug, Clone)]
pub struct InteractionFile {
    pub num_users: usize,
    pub num_items: usize,
    pub interactions: Vec<Interaction>,
    pub comments: Vec<String>,
}

pub fn read_interactions(path: &Path) -> Result<InteractionFile> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut comments = Vec::new();
    let mut header: Option<(usize, usize, usize)> = None;
    let mut interactions = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if let Some(c) = line.strip_prefix('#') {
            comments.push(c.trim().to_string());
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            let kv = parse_kv_line(&line);
            let get = |k: &str| -> Result<usize> {
                kv.get(k)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::parse(line_no, format!("header missing {k}")))
            };
            header = Some((get("users")?, get("items")?, get("interactions")?));
            continue;
        }
        let mut f = line.split('\t');
        let mut next = |what: &str| -> Result<&str> {
            f.next().ok_or_else(|| Error::parse(line_no, format!("missing {what}")))
        };
        let user = next("user")?.parse().map_err(|_| Error::parse(line_no, "bad user index"))?;
        let item = next("item")?.parse().map_err(|_| Error::parse(line_no, "bad item index"))?;
        let timestamp = next("timestamp")?
            .parse()
            .map_err(|_| Error::parse(line_no, "bad timestamp"))?;
        interactions.push(Interaction { user, item, timestamp });
    }
    let (num_users, num_items, k) =
        header.ok_or_else(|| Error::parse(1, format!("{}: missing header", path.display())))?;
    if k != interactions.len() {
        return Err(Error::parse(
            0,
            format!("{}: header says {k} interactions, found {}", path.display(), interactions.len()),
        ));
    }
    if let Some(x) = interactions
        .iter()
        .find(|x| x.user as usize >= num_users || x.item as usize >= num_items)
    {
        return Err(Error::parse(0, format!("index out of range: {x:?}")));
    }
    Ok(InteractionFile {
        num_users,
        num_items,
        interactions,
        comments,
    })
}

pub(crate) fn parse_kv_line(line: &str) -> HashMap<String, String> {
    line.split_whitespace()
        .filter_map(|tok| tok.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Two-column `index<TAB>raw_id` sidecar.
pub fn write_id_map(path: &Path, preamble: &[String], ids: &IdMap) -> Result<()> {
    let ctx = || format!("write {}", path.display());
    let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        for line in preamble {
            writeln!(w, "# {line}")?;
        }
        for (i, raw) in ids.raw_ids().iter().enumerate() {
            writeln!(w, "{i}\t{raw}")?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(ctx(), e))
}

pub fn read_id_map(path: &Path) -> Result<IdMap> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    let mut raw = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("read {}", path.display()), e))?;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let (idx, id) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(n + 1, "expected index<TAB>id"))?;
        if idx.parse::<usize>().ok() != Some(raw.len()) {
            return Err(Error::parse(n + 1, "indices must be dense and ascending"));
        }
        raw.push(id.to_string());
    }
    IdMap::from_raw(raw)
}

/// Writes the dataset file plus `<stem>.users.tsv` / `<stem>.items.tsv` sidecars.
pub fn write_dataset(path: &Path, preamble: &[String], dataset: &Dataset) -> Result<()> {
    let mut lines = preamble.to_vec();
    lines.push(format!(
        "min_user_degree={} min_item_degree={}",
        dataset.min_user_degree, dataset.min_item_degree
    ));
    write_interactions(path, &lines, dataset.num_users, dataset.num_items, &dataset.interactions)?;
    write_id_map(&sidecar(path, "users"), preamble, &dataset.user_ids)?;
    write_id_map(&sidecar(path, "items"), preamble, &dataset.item_ids)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = read_interactions(path)?;
    let user_ids = read_id_map(&sidecar(path, "users"))?;
    let item_ids = read_id_map(&sidecar(path, "items"))?;
    if user_ids.len() != file.num_users || item_ids.len() != file.num_items {
        return Err(Error::parse(0, "id map sizes disagree with dataset header"));
    }
    let mut min_user_degree = 0;
    let mut min_item_degree = 0;
    for c in &file.comments {
        let kv = parse_kv_line(c);
        if let Some(v) = kv.get("min_user_degree").and_then(|v| v.parse().ok()) {
            min_user_degree = v;
        }
        if let Some(v) = kv.get("min_item_degree").and_then(|v| v.parse().ok()) {
            min_item_degree = v;
        }
    }
    let mut interactions = file.interactions;
    interactions.sort_unstable();
    Ok(Dataset {
        num_users: file.num_users,
        num_items: file.num_items,
        interactions,
        user_ids,
        item_ids,
        min_user_degree,
        min_item_degree,
    })
}

pub fn sidecar(path: &Path, kind: &str) -> std::path::PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    path.with_file_name(format!("{stem}.{kind}.tsv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(u: &str, i: &str, t: i64) -> InteractionRecord {
        InteractionRecord {
            user: u.into(),
            item: i.into(),
            value: 1.0,
            timestamp: t,
        }
    }

    #[test]
    fn parses_movielens_line() {
        let recs = parse_movielens_reader("1::1193::5::978300760\n".as_bytes()).unwrap();
        assert_eq!(
            recs,
            vec![InteractionRecord {
                user: "1".into(),
                item: "1193".into(),
                value: 5.0,
                timestamp: 978300760
            }]
        );
    }

    #[test]
    fn empty_movielens_is_error() {
        let err = parse_movielens_reader("".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("no records"), "{err}");
    }

    #[test]
    fn malformed_line_names_line_number() {
        let err = parse_movielens_reader("1::2::3::4\n1::2::3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_movielens_reader("1::2::x::4\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    fn cols() -> CsvColumns {
        CsvColumns {
            user: "user_id".into(),
            item: "recipe_id".into(),
            value: Some("rating".into()),
            timestamp: Some("ts".into()),
        }
    }

    #[test]
    fn csv_with_mapped_columns() {
        let text = "user_id,recipe_id,rating,ts\na,x,5,10\nb,y,4,11\na,y,3,12\n";
        let recs = parse_csv_reader(text.as_bytes(), &cols()).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[2], InteractionRecord { user: "a".into(), item: "y".into(), value: 3.0, timestamp: 12 });
    }

    #[test]
    fn csv_missing_item_column() {
        let text = "user_id,rating,ts\na,5,10\n";
        assert!(parse_csv_reader(text.as_bytes(), &cols()).is_err());
    }

    #[test]
    fn csv_keeps_duplicates() {
        let mut text = String::from("user_id,recipe_id,rating,ts\n");
        for k in 0..10 {
            text.push_str(&format!("u{},i{},1,{}\n", k % 3, k % 2, k));
        }
        let recs = parse_csv_reader(text.as_bytes(), &cols()).unwrap();
        assert_eq!(recs.len(), 10);
    }

    #[test]
    fn single_heavy_user_survives() {
        let recs: Vec<_> = (0..25).map(|i| rec("u", &i.to_string(), i)).collect();
        let ds = build_dataset(&recs, 20, 1).unwrap();
        assert_eq!(ds.num_users, 1);
        assert_eq!(ds.interactions.len(), 25);
    }

    #[test]
    fn light_user_filtered_to_empty() {
        let recs: Vec<_> = (0..5).map(|i| rec("u", &i.to_string(), i)).collect();
        let err = build_dataset(&recs, 20, 1).unwrap_err();
        assert!(err.to_string().contains("empty dataset"), "{err}");
    }

    /// Repeated single passes over (user, item) pairs until nothing changes.
    fn brute_filter(pairs: &[(String, String)], mu: usize, mi: usize) -> Vec<(String, String)> {
        let mut cur = pairs.to_vec();
        loop {
            let next: Vec<_> = cur
                .iter()
                .filter(|(u, i)| {
                    cur.iter().filter(|(v, _)| v == u).count() >= mu
                        && cur.iter().filter(|(_, j)| j == i).count() >= mi
                })
                .cloned()
                .collect();
            if next.len() == cur.len() {
                return cur;
            }
            cur = next;
        }
    }

    #[test]
    fn toy_filtering_matches_brute_force() {
        // 6 users x 8 items; thresholds (3, 2) need more than one pass.
        let edges = [
            ("u1", ["a", "b", "c", "d"].as_slice()),
            ("u2", &["a", "b", "c"]),
            ("u3", &["a", "e", "f"]),
            ("u4", &["b", "g"]),
            ("u5", &["c", "d", "h"]),
            ("u6", &["e", "a", "b", "d"]),
        ];
        let mut recs = Vec::new();
        let mut pairs = Vec::new();
        for (u, items) in edges {
            for i in items {
                recs.push(rec(u, i, 1));
                pairs.push((u.to_string(), i.to_string()));
            }
        }
        let ds = build_dataset(&recs, 3, 2).unwrap();
        let mut got: Vec<(String, String)> = ds
            .interactions
            .iter()
            .map(|x| (ds.user_ids.raw(x.user).to_string(), ds.item_ids.raw(x.item).to_string()))
            .collect();
        let mut want = brute_filter(&pairs, 3, 2);
        got.sort();
        want.sort();
        assert_eq!(got, want);
        // second pass over the output is a fixed point
        let again = build_dataset(&ds.to_records(), 3, 2).unwrap();
        assert_eq!(again, ds);
    }

    #[test]
    fn duplicates_keep_latest_timestamp() {
        let recs = vec![rec("1", "1", 5), rec("1", "1", 9), rec("1", "1", 7)];
        let ds = build_dataset(&recs, 1, 1).unwrap();
        assert_eq!(ds.interactions, vec![Interaction { user: 0, item: 0, timestamp: 9 }]);
    }

    #[test]
    fn numeric_ids_sort_numerically() {
        let recs = vec![rec("10", "x", 0), rec("2", "x", 0), rec("1", "x", 0)];
        let ds = build_dataset(&recs, 1, 1).unwrap();
        assert_eq!(ds.user_ids.raw_ids(), &["1", "2", "10"]);
    }

    #[test]
    fn split_counts() {
        let spec = SplitSpec::default();
        assert_eq!(spec.counts(10), (8, 1, 1));
        assert_eq!(spec.counts(7), (5, 1, 1));
        assert_eq!(spec.counts(3), (1, 1, 1));
        assert_eq!(spec.counts(20), (16, 2, 2));
    }

    fn user_with(n: usize) -> Dataset {
        let recs: Vec<_> = (0..n).map(|i| rec("u", &i.to_string(), i as i64)).collect();
        build_dataset(&recs, 1, 1).unwrap()
    }

    #[test]
    fn split_ten_interactions() {
        let ds = user_with(10);
        let spec = SplitSpec { seed: 7, ..Default::default() };
        let s = split(&ds, &spec).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
        assert_eq!(s, split(&ds, &spec).unwrap());
    }

    #[test]
    fn split_rejects_sparse_user() {
        let ds = user_with(2);
        assert!(split(&ds, &SplitSpec::default()).is_err());
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let ds = user_with(10);
        let spec = SplitSpec { train: 0.7, val: 0.1, test: 0.1, seed: 0 };
        assert!(split(&ds, &spec).is_err());
    }

    #[test]
    fn prefix_identity_and_half() {
        let recs: Vec<_> = (0..10).map(|i| rec(&format!("u{}", i % 2), &format!("i{i}"), 100 + i as i64)).collect();
        let ds = build_dataset(&recs, 1, 1).unwrap();
        assert_eq!(temporal_prefix(&ds, 1.0).unwrap(), ds);
        let half = temporal_prefix(&ds, 0.5).unwrap();
        let mut ts: Vec<i64> = half.interactions.iter().map(|x| x.timestamp).collect();
        ts.sort();
        assert_eq!(ts, vec![100, 101, 102, 103, 104]);
        assert!(temporal_prefix(&ds, 0.0).is_err());
        assert!(temporal_prefix(&ds, 1.5).is_err());
    }

    #[test]
    fn dataset_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dataset.tsv");
        let recs: Vec<_> = (0..12).map(|i| rec(&format!("u{}", i % 3), &format!("i{}", i % 5), i)).collect();
        let ds = build_dataset(&recs, 2, 1).unwrap();
        write_dataset(&path, &["command=test".into()], &ds).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains(&format!("users={} items={} interactions={}", ds.num_users, ds.num_items, ds.interactions.len())));
        assert_eq!(read_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn user_items_dedups_and_sorts() {
        let xs = [
            Interaction { user: 1, item: 4, timestamp: 0 },
            Interaction { user: 1, item: 2, timestamp: 0 },
            Interaction { user: 1, item: 4, timestamp: 1 },
            Interaction { user: 0, item: 3, timestamp: 0 },
        ];
        let ui = UserItems::new(3, &xs);
        assert_eq!(ui.items(0), &[3]);
        assert_eq!(ui.items(1), &[2, 4]);
        assert_eq!(ui.items(2), &[] as &[u32]);
        assert!(ui.contains(1, 2) && !ui.contains(1, 3));
        assert_eq!(ui.total(), 3);
    }
}
