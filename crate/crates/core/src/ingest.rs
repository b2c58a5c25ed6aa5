//! Raw message records to a homogeneous message graph.
//!
//! Every message becomes a node. Two messages are linked when they share an
//! associated user: the author, a mentioned user or the retweeted user. Node
//! features are the mean token embedding of the text followed by a 2-d
//! time encoding.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use chrono::{DateTime, NaiveTime, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::fmt;

/// One social message.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageRecord {
    pub message_id: String,
    pub text: String,
    pub user_id: String,
    pub mentioned_users: Vec<String>,
    pub retweeted_user: Option<String>,
    pub timestamp: DateTime<Utc>,
    pub location: Option<String>,
    pub event_label: Option<u64>,
}

impl MessageRecord {
    /// Author, mentions and retweet source.
    pub fn associated_users(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.user_id.as_str())
            .chain(self.mentioned_users.iter().map(String::as_str))
            .chain(self.retweeted_user.as_deref())
    }
}

#[derive(Deserialize)]
struct RawRecord {
    message_id: String,
    text: String,
    user_id: String,
    timestamp: String,
    #[serde(default)]
    mentioned_users: Vec<String>,
    #[serde(default)]
    retweeted_user: Option<String>,
    #[serde(default)]
    location: Option<String>,
    #[serde(default)]
    event_label: Option<u64>,
}

/// Parses one JSON object per line. Blank lines are skipped.
pub fn parse_messages<R: BufRead>(reader: R) -> Result<Vec<MessageRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
        let timestamp = DateTime::parse_from_rfc3339(&raw.timestamp)
            .map_err(|e| Error::Parse { line: lineno, message: format!("bad timestamp `{}`: {e}", raw.timestamp) })?
            .with_timezone(&Utc);
        if !seen.insert(raw.message_id.clone()) {
            return Err(Error::DuplicateId(raw.message_id));
        }
        out.push(MessageRecord {
            message_id: raw.message_id,
            text: raw.text,
            user_id: raw.user_id,
            mentioned_users: raw.mentioned_users,
            retweeted_user: raw.retweeted_user,
            timestamp,
            location: raw.location,
            event_label: raw.event_label,
        });
    }
    Ok(out)
}

/// Precomputed token vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddingTable {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl TokenEmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        TokenEmbeddingTable { dimension, vectors: HashMap::new() }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::invalid(format!(
                "embedding has {} entries, table dimension is {}",
                vector.len(),
                self.dimension
            )));
        }
        self.vectors.insert(token.into(), vector);
        Ok(())
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    /// Table vector, or a deterministic unit vector derived from the token's
    /// SHA-256 digest when the token is unknown.
    pub fn embed_token(&self, token: &str) -> Vec<f64> {
        if let Some(v) = self.get(token) {
            return v.to_vec();
        }
        let digest = Sha256::digest(token.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let mut v: Vec<f64> = (0..self.dimension).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
        v
    }

    /// Reads the tab-separated format: a `dimension <d>` header, then one
    /// token per line followed by exactly `d` reals.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((_, l)) => {
                    let l = l?;
                    if !l.trim().is_empty() {
                        break l;
                    }
                }
                None => return Err(Error::Parse { line: 1, message: "missing `dimension <d>` header".into() }),
            }
        };
        let dimension = header
            .trim()
            .strip_prefix("dimension")
            .and_then(|d| d.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::Parse { line: 1, message: format!("bad header `{header}`") })?;
        let mut table = TokenEmbeddingTable::new(dimension);
        for (i, line) in lines {
            let line = line?;
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let token = fields.next().unwrap_or_default().to_string();
            let values = fields
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
            if values.len() != dimension {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {dimension} values, found {}", values.len()),
                });
            }
            table.vectors.insert(token, values);
        }
        Ok(table)
    }
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// `(day position within the dataset span, time of day)`, both in `[0, 1]`.
pub fn time_encode(ts: DateTime<Utc>, min: DateTime<Utc>, max: DateTime<Utc>) -> Result<[f64; 2]> {
    if ts < min || ts > max {
        return Err(Error::invalid(format!("timestamp {ts} outside [{min}, {max}]")));
    }
    let day = |t: DateTime<Utc>| t.date_naive().signed_duration_since(chrono::NaiveDate::default()).num_days();
    let span = day(max) - day(min);
    let day_pos = if span == 0 { 0.0 } else { (day(ts) - day(min)) as f64 / span as f64 };
    let secs = ts.time().signed_duration_since(NaiveTime::MIN).num_milliseconds() as f64 / 1000.0;
    Ok([day_pos, secs / 86_400.0])
}

/// Mean token embedding followed by the time encoding.
pub fn embed_message(
    rec: &MessageRecord,
    table: &TokenEmbeddingTable,
    min: DateTime<Utc>,
    max: DateTime<Utc>,
) -> Result<Vec<f64>> {
    let d = table.dimension();
    let mut out = vec![0.0; d];
    let tokens = tokenize(&rec.text);
    for t in &tokens {
        for (o, x) in out.iter_mut().zip(table.embed_token(t)) {
            *o += x;
        }
    }
    if !tokens.is_empty() {
        let n = tokens.len() as f64;
        out.iter_mut().for_each(|x| *x /= n);
    }
    out.extend(time_encode(rec.timestamp, min, max)?);
    Ok(out)
}

/// Homogeneous message graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageGraph {
    pub features: Tensor,
    /// Undirected, stored once with `i < j`, sorted and deduplicated.
    pub edges: Vec<(usize, usize)>,
    /// Dense class ids `0..C`.
    pub labels: Option<Vec<usize>>,
    pub node_ids: Vec<String>,
}

impl MessageGraph {
    /// Checks the structural invariants and normalises the edge list.
    pub fn new(
        features: Tensor,
        edges: Vec<(usize, usize)>,
        labels: Option<Vec<usize>>,
        node_ids: Vec<String>,
    ) -> Result<Self> {
        let n = features.rows();
        let mut norm = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a == b {
                return Err(Error::invalid(format!("self-loop on node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a}, {b}) out of range for {n} nodes")));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        norm.dedup();
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::invalid(format!("{} labels for {n} nodes", l.len())));
            }
        }
        if node_ids.len() != n {
            return Err(Error::invalid(format!("{} node ids for {n} nodes", node_ids.len())));
        }
        if !features.is_finite() {
            return Err(Error::invalid("non-finite feature"));
        }
        Ok(MessageGraph { features, edges: norm, labels, node_ids })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.as_ref().map_or(0, |l| l.iter().max().map_or(0, |m| m + 1))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GraphFile {
            num_nodes: self.num_nodes(),
            feature_dim: self.feature_dim(),
            features: self.features.data().to_vec(),
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
            labels: self.labels.clone(),
            node_ids: self.node_ids.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        if file.features.len() != file.num_nodes * file.feature_dim {
            return Err(Error::invalid("feature list length does not match num_nodes x feature_dim"));
        }
        let features = Tensor::new(file.num_nodes, file.feature_dim, file.features)?;
        let edges = file.edges.into_iter().map(|[a, b]| (a, b)).collect();
        MessageGraph::new(features, edges, file.labels, file.node_ids)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        MessageGraph::from_json(&text).map_err(|e| e.in_file(path))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fmt::write_atomic(path, self.to_json()?.as_bytes())
    }
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    num_nodes: usize,
    feature_dim: usize,
    #[serde(serialize_with = "fmt::reals")]
    features: Vec<f64>,
    edges: Vec<[usize; 2]>,
    labels: Option<Vec<usize>>,
    node_ids: Vec<String>,
}

/// Builds the message graph from parsed records.
pub fn build_message_graph(records: &[MessageRecord], table: &TokenEmbeddingTable) -> Result<MessageGraph> {
    if records.is_empty() {
        return Err(Error::invalid("no records"));
    }
    let min = records.iter().map(|r| r.timestamp).min().expect("nonempty");
    let max = records.iter().map(|r| r.timestamp).max().expect("nonempty");
    let rows = records
        .iter()
        .map(|r| embed_message(r, table, min, max))
        .collect::<Result<Vec<_>>>()?;
    let features = Tensor::from_rows(&rows)?;

    let mut by_user: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let mut users: Vec<&str> = r.associated_users().collect();
        users.sort_unstable();
        users.dedup();
        for u in users {
            by_user.entry(u).or_default().push(i);
        }
    }
    let mut edges = Vec::new();
    for nodes in by_user.values() {
        for (a, &i) in nodes.iter().enumerate() {
            for &j in &nodes[a + 1..] {
                edges.push((i, j));
            }
        }
    }

    let labeled = records.iter().filter(|r| r.event_label.is_some()).count();
    let labels = if labeled == 0 {
        None
    } else if labeled == records.len() {
        let raw: Vec<u64> = records.iter().map(|r| r.event_label.expect("checked")).collect();
        Some(densify_labels(&raw))
    } else {
        return Err(Error::invalid(format!(
            "{labeled} of {} records carry an event label; labels must be all or nothing",
            records.len()
        )));
    };
    let node_ids = records.iter().map(|r| r.message_id.clone()).collect();
    MessageGraph::new(features, edges, labels, node_ids)
}

/// Maps arbitrary ids to `0..C` in ascending id order.
pub fn densify_labels(raw: &[u64]) -> Vec<usize> {
    let mut ids: Vec<u64> = raw.to_vec();
    ids.sort_unstable();
    ids.dedup();
    raw.iter().map(|x| ids.binary_search(x).expect("present")).collect()
}

/// Disjoint train / test / validation index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub val: Vec<usize>,
}

/// Seeded shuffle of `0..n` cut into `⌊n·train⌋`, `⌊n·test⌋` and the rest.
pub fn split_dataset(n: usize, train: f64, test: f64, val: f64, seed: u64) -> Result<Split> {
    if n == 0 {
        return Err(Error::invalid("cannot split an empty dataset"));
    }
    if [train, test, val].iter().any(|f| !(0.0..=1.0).contains(f)) || (train + test + val - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split fractions {train}, {test}, {val} must be in [0,1] and sum to 1")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = |f: f64| ((n as f64 * f) + 1e-9).floor() as usize;
    let n_train = cut(train).min(n);
    let n_test = cut(test).min(n - n_train);
    let val = idx.split_off(n_train + n_test);
    let test = idx.split_off(n_train);
    Ok(Split { train: idx, test, val })
}
