//! Partition-agreement and classification metrics on hard assignments.
//!
//! Entropies use natural logarithms. NMI and AMI normalise by the
//! arithmetic mean of the two entropies.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground truth and predicted class ids for the same items.
#[derive(Debug, Clone, Copy)]
pub struct LabelPair<'a> {
    pub truth: &'a [usize],
    pub predicted: &'a [usize],
}

impl<'a> LabelPair<'a> {
    pub fn new(truth: &'a [usize], predicted: &'a [usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::invalid(format!(
                "label length mismatch: {} vs {}",
                truth.len(),
                predicted.len()
            )));
        }
        if truth.is_empty() {
            return Err(Error::invalid("empty labeling"));
        }
        Ok(LabelPair { truth, predicted })
    }
}

struct Contingency {
    n: usize,
    table: Vec<Vec<usize>>,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl Contingency {
    fn new(p: LabelPair<'_>) -> Self {
        let dense = |xs: &[usize]| {
            let mut ids = BTreeMap::new();
            let mapped: Vec<usize> = xs
                .iter()
                .map(|x| {
                    let next = ids.len();
                    *ids.entry(*x).or_insert(next)
                })
                .collect();
            (mapped, ids.len())
        };
        let (u, nu) = dense(p.truth);
        let (v, nv) = dense(p.predicted);
        let mut table = vec![vec![0; nv]; nu];
        for (&i, &j) in u.iter().zip(&v) {
            table[i][j] += 1;
        }
        let rows = table.iter().map(|r| r.iter().sum()).collect();
        let cols = (0..nv).map(|j| table.iter().map(|r| r[j]).sum()).collect();
        Contingency { n: u.len(), table, rows, cols }
    }

    fn entropy(counts: &[usize], n: usize) -> f64 {
        let n = n as f64;
        -counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * p.ln()
            })
            .sum::<f64>()
    }

    fn mutual_information(&self) -> f64 {
        let n = self.n as f64;
        let mut mi = 0.0;
        for (i, row) in self.table.iter().enumerate() {
            for (j, &nij) in row.iter().enumerate() {
                if nij > 0 {
                    let nij = nij as f64;
                    mi += nij / n * (n * nij / (self.rows[i] as f64 * self.cols[j] as f64)).ln();
                }
            }
        }
        mi.max(0.0)
    }

    /// Expected mutual information under the hypergeometric model.
    fn expected_mutual_information(&self) -> f64 {
        let n = self.n;
        let lf = log_factorials(n);
        let nf = n as f64;
        let mut emi = 0.0;
        for &a in &self.rows {
            for &b in &self.cols {
                let lo = (a + b).saturating_sub(n).max(1);
                let hi = a.min(b);
                for nij in lo..=hi {
                    let x = nij as f64;
                    let term = x / nf * (nf * x / (a as f64 * b as f64)).ln();
                    let lp = lf[a] + lf[b] + lf[n - a] + lf[n - b]
                        - lf[n]
                        - lf[nij]
                        - lf[a - nij]
                        - lf[b - nij]
                        - lf[n + nij - a - b];
                    emi += term * lp.exp();
                }
            }
        }
        emi
    }

    /// True when both labelings induce the same partition.
    fn identical(&self) -> bool {
        self.rows.len() == self.cols.len()
            && self.table.iter().all(|r| r.iter().filter(|&&c| c > 0).count() == 1)
            && (0..self.cols.len()).all(|j| self.table.iter().filter(|r| r[j] > 0).count() == 1)
    }
}

fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    for k in 1..=n {
        out.push(out[k - 1] + (k as f64).ln());
    }
    out
}

/// Normalised mutual information.
pub fn nmi(p: LabelPair<'_>) -> f64 {
    let c = Contingency::new(p);
    let hu = Contingency::entropy(&c.rows, c.n);
    let hv = Contingency::entropy(&c.cols, c.n);
    let mean = (hu + hv) / 2.0;
    if mean == 0.0 {
        // both single-cluster
        return 1.0;
    }
    (c.mutual_information() / mean).clamp(0.0, 1.0)
}

/// Adjusted mutual information.
pub fn ami(p: LabelPair<'_>) -> f64 {
    let c = Contingency::new(p);
    let hu = Contingency::entropy(&c.rows, c.n);
    let hv = Contingency::entropy(&c.cols, c.n);
    if hu == 0.0 && hv == 0.0 {
        return 1.0;
    }
    let mi = c.mutual_information();
    let emi = c.expected_mutual_information();
    let denom = (hu + hv) / 2.0 - emi;
    if denom.abs() < 1e-15 {
        return if c.identical() { 1.0 } else { 0.0 };
    }
    ((mi - emi) / denom).clamp(-1.0, 1.0)
}

/// Adjusted Rand index. Needs at least two items.
pub fn ari(p: LabelPair<'_>) -> Result<f64> {
    if p.truth.len() < 2 {
        return Err(Error::invalid("ARI needs at least two items"));
    }
    let c = Contingency::new(p);
    // Exact integer pair counts, so the one division is correctly rounded.
    let pairs = |x: &usize| (*x as i128) * (*x as i128 - 1) / 2;
    let index: i128 = c.table.iter().flatten().map(pairs).sum();
    let sa: i128 = c.rows.iter().map(pairs).sum();
    let sb: i128 = c.cols.iter().map(pairs).sum();
    let total = pairs(&c.n);
    let num = 2 * total * index - 2 * sa * sb;
    let den = total * (sa + sb) - 2 * sa * sb;
    if den == 0 {
        return Ok(if c.identical() { 1.0 } else { 0.0 });
    }
    Ok(num as f64 / den as f64)
}

pub fn accuracy(p: LabelPair<'_>) -> f64 {
    let hits = p.truth.iter().zip(p.predicted).filter(|(a, b)| a == b).count();
    hits as f64 / p.truth.len() as f64
}

/// F1 from global counts. With one label per item this equals accuracy.
pub fn micro_f1(p: LabelPair<'_>) -> f64 {
    let tp = p.truth.iter().zip(p.predicted).filter(|(a, b)| a == b).count() as f64;
    let wrong = p.truth.len() as f64 - tp;
    // every miss is one false positive and one false negative
    let denom = 2.0 * tp + 2.0 * wrong;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * tp / denom
    }
}

/// Unweighted mean of per-class F1 over every class seen in either labeling.
pub fn macro_f1(p: LabelPair<'_>) -> f64 {
    let mut classes: Vec<usize> = p.truth.iter().chain(p.predicted).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let mut tp = 0.0;
            let mut fp = 0.0;
            let mut fn_ = 0.0;
            for (&t, &y) in p.truth.iter().zip(p.predicted) {
                match (t == c, y == c) {
                    (true, true) => tp += 1.0,
                    (false, true) => fp += 1.0,
                    (true, false) => fn_ += 1.0,
                    _ => {}
                }
            }
            let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            }
        })
        .sum();
    total / classes.len() as f64
}

/// Metric bundle written after every run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: f64,
    pub nmi: f64,
    pub ami: f64,
    pub ari: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub wall_seconds: f64,
}

impl EvalReport {
    /// All metrics for one labeling pair; `wall_seconds` is left at zero.
    pub fn compute(truth: &[usize], predicted: &[usize]) -> Result<Self> {
        let p = LabelPair::new(truth, predicted)?;
        Ok(EvalReport {
            acc: accuracy(p),
            nmi: nmi(p),
            ami: ami(p),
            ari: if truth.len() >= 2 { ari(p)? } else { 0.0 },
            micro_f1: micro_f1(p),
            macro_f1: macro_f1(p),
            wall_seconds: 0.0,
        })
    }

    /// Metric lines in a fixed order. Timing is excluded so the block is
    /// reproducible byte for byte.
    pub fn to_text(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut r = EvalReport::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected `key = value`".into(),
            })?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("bad number `{}`", v.trim()),
            })?;
            let slot = match k.trim() {
                "acc" => &mut r.acc,
                "nmi" => &mut r.nmi,
                "ami" => &mut r.ami,
                "ari" => &mut r.ari,
                "micro_f1" => &mut r.micro_f1,
                "macro_f1" => &mut r.macro_f1,
                "wall_seconds" => &mut r.wall_seconds,
                other => {
                    return Err(Error::Parse { line: i + 1, message: format!("unknown metric `{other}`") })
                }
            };
            *slot = v;
        }
        Ok(r)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "acc = {:.6}", self.acc)?;
        writeln!(f, "nmi = {:.6}", self.nmi)?;
        writeln!(f, "ami = {:.6}", self.ami)?;
        writeln!(f, "ari = {:.6}", self.ari)?;
        writeln!(f, "micro_f1 = {:.6}", self.micro_f1)?;
        writeln!(f, "macro_f1 = {:.6}", self.macro_f1)
    }
}
