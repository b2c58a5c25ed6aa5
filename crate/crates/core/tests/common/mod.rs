//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use hsed::diffcore::{Tape, Tensor, Var};
use hsed::ingest::MessageRecord;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(rows, cols, data).unwrap()
}

/// Random simple graph on `n` nodes, each pair kept with probability `p`.
pub fn random_edges(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                out.push((i, j));
            }
        }
    }
    out
}

// ---- gradients ----

/// `|a - n| / max(|a|, |n|, 1e-4)`.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

fn scalar_of(tape: &mut Tape, out: Var, proj: &Tensor) -> Var {
    if tape.shape(out) == (1, 1) {
        return out;
    }
    let p = tape.constant(proj.clone());
    let h = tape.hadamard(out, p).unwrap();
    tape.sum(h).unwrap()
}

/// Largest relative error between tape gradients and central differences
/// (step `1e-6`) of `f`, reduced to a scalar by a fixed random projection.
pub fn grad_check<F>(inputs: &[Tensor], seed: u64, f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars);
    let (r, c) = tape.shape(out);
    let proj = uniform(r, c, 1.0, &mut rng(seed));
    let loss = scalar_of(&mut tape, out, &proj);
    tape.backward(loss).unwrap();
    let analytic: Vec<Tensor> = vars.iter().map(|&v| tape.grad(v)).collect();

    let eval = |xs: &[Tensor]| -> f64 {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.param(x.clone())).collect();
        let o = f(&mut t, &vs);
        let l = scalar_of(&mut t, o, &proj);
        t.value(l).item().unwrap()
    };
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        for idx in 0..input.data().len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[idx] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[idx] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[k].data()[idx], numeric));
        }
    }
    worst
}

// ---- metrics ----

fn counts(xs: &[usize]) -> HashMap<usize, f64> {
    let mut m = HashMap::new();
    for &x in xs {
        *m.entry(x).or_insert(0.0) += 1.0;
    }
    m
}

pub fn entropy(xs: &[usize]) -> f64 {
    let n = xs.len() as f64;
    counts(xs).values().map(|&c| -(c / n) * (c / n).ln()).sum()
}

/// Mutual information straight from the joint and marginal frequencies.
pub fn mutual_info(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let pa = counts(a);
    let pb = counts(b);
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0.0) += 1.0;
    }
    joint
        .iter()
        .map(|(&(x, y), &c)| c / n * ((c / n) / ((pa[&x] / n) * (pb[&y] / n))).ln())
        .sum()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn sizes(xs: &[usize]) -> Vec<usize> {
    let mut s: Vec<usize> = counts(xs).values().map(|&c| c as usize).collect();
    s.sort_unstable();
    s
}

/// Expected MI over every relabelling of `b`'s items, which is the
/// fixed-marginal hypergeometric null. Cached by cluster sizes.
#[derive(Default)]
pub struct EmiOracle {
    cache: HashMap<(Vec<usize>, Vec<usize>), f64>,
    perms: HashMap<usize, Vec<Vec<usize>>>,
}

impl EmiOracle {
    pub fn emi(&mut self, a: &[usize], b: &[usize]) -> f64 {
        let key = (sizes(a), sizes(b));
        if let Some(&v) = self.cache.get(&key) {
            return v;
        }
        let n = a.len();
        let perms = self.perms.entry(n).or_insert_with(|| permutations(n));
        let total: f64 = perms
            .iter()
            .map(|p| {
                let shuffled: Vec<usize> = p.iter().map(|&i| b[i]).collect();
                mutual_info(a, &shuffled)
            })
            .sum();
        let v = total / perms.len() as f64;
        self.cache.insert(key, v);
        v
    }
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let n = a.len();
    (0..n).all(|i| (0..n).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

pub fn nmi_oracle(a: &[usize], b: &[usize]) -> f64 {
    let mean = (entropy(a) + entropy(b)) / 2.0;
    if mean == 0.0 {
        return 1.0;
    }
    mutual_info(a, b) / mean
}

pub fn ami_oracle(a: &[usize], b: &[usize], emi: &mut EmiOracle) -> f64 {
    let (ha, hb) = (entropy(a), entropy(b));
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    let e = emi.emi(a, b);
    let denom = (ha + hb) / 2.0 - e;
    if denom.abs() < 1e-12 {
        return if same_partition(a, b) { 1.0 } else { 0.0 };
    }
    (mutual_info(a, b) - e) / denom
}

/// Pair-counting ARI over all `i < j`.
pub fn ari_oracle(a: &[usize], b: &[usize]) -> f64 {
    let (mut ss, mut sd, mut ds, mut dd) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => ss += 1.0,
                (true, false) => sd += 1.0,
                (false, true) => ds += 1.0,
                (false, false) => dd += 1.0,
            }
        }
    }
    let den = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
    if den == 0.0 {
        return 1.0;
    }
    2.0 * (ss * dd - sd * ds) / den
}

pub fn accuracy_oracle(truth: &[usize], pred: &[usize]) -> f64 {
    truth.iter().zip(pred).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

fn class_counts(truth: &[usize], pred: &[usize], c: usize) -> (f64, f64, f64) {
    let tp = truth.iter().zip(pred).filter(|&(&t, &p)| t == c && p == c).count() as f64;
    let fp = truth.iter().zip(pred).filter(|&(&t, &p)| t != c && p == c).count() as f64;
    let fn_ = truth.iter().zip(pred).filter(|&(&t, &p)| t == c && p != c).count() as f64;
    (tp, fp, fn_)
}

fn f1(tp: f64, fp: f64, fn_: f64) -> f64 {
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn classes(truth: &[usize], pred: &[usize]) -> BTreeSet<usize> {
    truth.iter().chain(pred).copied().collect()
}

/// F1 of summed per-class counts.
pub fn micro_f1_oracle(truth: &[usize], pred: &[usize]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for c in classes(truth, pred) {
        let (a, b, d) = class_counts(truth, pred, c);
        tp += a;
        fp += b;
        fn_ += d;
    }
    f1(tp, fp, fn_)
}

pub fn macro_f1_oracle(truth: &[usize], pred: &[usize]) -> f64 {
    let cs = classes(truth, pred);
    cs.iter()
        .map(|&c| {
            let (tp, fp, fn_) = class_counts(truth, pred, c);
            f1(tp, fp, fn_)
        })
        .sum::<f64>()
        / cs.len() as f64
}

/// Every labeling of `n` items over `0..k`.
pub fn all_labelings(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..k).map(move |c| {
                    let mut q = p.clone();
                    q.push(c);
                    q
                })
            })
            .collect();
    }
    out
}

// ---- flat layers ----

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// `act(X Wᵀ + b)` with explicit loops.
pub fn dense_layer(x: &Tensor, w: &Tensor, b: &Tensor, act: fn(f64) -> f64) -> Vec<Vec<f64>> {
    (0..x.rows())
        .map(|i| {
            (0..w.rows())
                .map(|o| {
                    let s: f64 = (0..x.cols()).map(|j| x.get(i, j) * w.get(o, j)).sum();
                    act(s + b.get(0, o))
                })
                .collect()
        })
        .collect()
}

/// `D^{-1/2} (A + I) D^{-1/2}` built from an adjacency matrix.
pub fn normalized_adjacency(edges: &[(usize, usize)], n: usize) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for &(i, j) in edges {
        a[i][j] = 1.0;
        a[j][i] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    (0..n).map(|i| (0..n).map(|j| a[i][j] / (deg[i] * deg[j]).sqrt()).collect()).collect()
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|r| (0..b[0].len()).map(|j| r.iter().zip(b).map(|(x, row)| x * row[j]).sum()).collect())
        .collect()
}

pub fn max_abs_diff(t: &Tensor, expected: &[Vec<f64>]) -> f64 {
    assert_eq!(t.rows(), expected.len());
    let mut worst: f64 = 0.0;
    for (i, row) in expected.iter().enumerate() {
        assert_eq!(t.cols(), row.len());
        for (j, &e) in row.iter().enumerate() {
            worst = worst.max((t.get(i, j) - e).abs());
        }
    }
    worst
}

// ---- ingestion ----

/// Pairs of messages whose user sets (author, mentions, retweet source)
/// intersect, checked pair by pair.
pub fn shared_user_edges(records: &[MessageRecord]) -> BTreeSet<(usize, usize)> {
    let users: Vec<BTreeSet<&str>> = records
        .iter()
        .map(|r| {
            let mut s: BTreeSet<&str> = r.mentioned_users.iter().map(String::as_str).collect();
            s.insert(&r.user_id);
            if let Some(u) = &r.retweeted_user {
                s.insert(u);
            }
            s
        })
        .collect();
    let mut out = BTreeSet::new();
    for i in 0..records.len() {
        for j in i + 1..records.len() {
            if !users[i].is_disjoint(&users[j]) {
                out.insert((i, j));
            }
        }
    }
    out
}

/// Ten handcrafted messages in the JSON-lines input format.
pub const TEN_MESSAGES: &str = r#"{"message_id": "m0", "text": "Storm hits the coast", "user_id": "alice", "timestamp": "2012-10-29T08:00:00Z", "mentioned_users": ["bob"], "event_label": 1}
{"message_id": "m1", "text": "the storm is getting worse", "user_id": "bob", "timestamp": "2012-10-29T09:30:00Z", "event_label": 1}
{"message_id": "m2", "text": "Coast flooding photos", "user_id": "carol", "timestamp": "2012-10-29T12:15:00Z", "retweeted_user": "alice", "event_label": 1}
{"message_id": "m3", "text": "election night results", "user_id": "dave", "timestamp": "2012-11-06T22:00:00Z", "mentioned_users": ["erin", "frank"], "event_label": 2}
{"message_id": "m4", "text": "results are in!", "user_id": "erin", "timestamp": "2012-11-06T23:45:00Z", "event_label": 2}
{"message_id": "m5", "text": "who won the election", "user_id": "gina", "timestamp": "2012-11-07T01:10:00Z", "event_label": 2}
{"message_id": "m6", "text": "Marathon cancelled after the storm", "user_id": "hank", "timestamp": "2012-11-02T18:00:00Z", "mentioned_users": ["gina"], "retweeted_user": "ivan", "event_label": 3}
{"message_id": "m7", "text": "marathon runners volunteer", "user_id": "ivan", "timestamp": "2012-11-03T07:20:00Z", "location": "New York", "event_label": 3}
{"message_id": "m8", "text": "volunteer sign up here", "user_id": "judy", "timestamp": "2012-11-03T10:05:00Z", "event_label": 3}
{"message_id": "m9", "text": "quiet day", "user_id": "kim", "timestamp": "2012-11-04T15:00:00Z", "mentioned_users": ["judy", "judy"], "event_label": 4}
"#;

/// A `dimension 300` table covering some of the tokens above.
pub fn table_300() -> String {
    let mut out = String::from("dimension 300\n");
    for (k, token) in ["storm", "coast", "election", "results", "marathon", "volunteer", "the"].iter().enumerate() {
        let values: Vec<String> = (0..300).map(|i| format!("{}", ((i * 7 + k * 13) % 17) as f64 / 17.0 - 0.5)).collect();
        out.push_str(token);
        out.push('\t');
        out.push_str(&values.join("\t"));
        out.push('\n');
    }
    out
}
