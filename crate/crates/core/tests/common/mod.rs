#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{Days, NaiveDate};
use corrnet::corrwin::{CorrelationMatrix, Window};
use corrnet::ingest::{AssetRecord, ReturnPanel};
use corrnet::network::{CorrelationNetwork, PairState};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn d(s: &str) -> NaiveDate {
    corrnet::ingest::parse_date(s).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(r: &mut ChaCha8Rng) -> f64 {
    (r.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

pub fn below(r: &mut ChaCha8Rng, n: usize) -> usize {
    (r.next_u64() % n as u64) as usize
}

pub fn ids(n: usize) -> Vec<AssetRecord> {
    (0..n)
        .map(|i| AssetRecord::unclassified(format!("a{i:02}")))
        .collect()
}

pub fn daily(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    (0..n).map(|k| start + Days::new(k as u64)).collect()
}

pub fn span(dates: &[NaiveDate]) -> Window {
    Window::new(dates[0], dates[dates.len() - 1] + Days::new(1))
}

/// Textbook one-pass Pearson formula, used as an independent oracle.
pub fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt()
}

/// Gap-free panel from per-asset columns.
pub fn panel(columns: &[Vec<f64>]) -> ReturnPanel {
    let n_t = columns[0].len();
    ReturnPanel::from_columns(daily(d("2001-01-01"), n_t), ids(columns.len()), columns).unwrap()
}

/// Symmetric matrix from a strict upper triangle listed row by row.
pub fn matrix(n: usize, upper: &[Option<f64>]) -> CorrelationMatrix {
    let mut rho = vec![None; n * n];
    let mut k = 0;
    for i in 0..n {
        rho[i * n + i] = Some(1.0);
        for j in (i + 1)..n {
            rho[i * n + j] = upper[k];
            rho[j * n + i] = upper[k];
            k += 1;
        }
    }
    let w = Window::new(d("2003-01-01"), d("2004-01-01"));
    CorrelationMatrix::from_values(w, ids(n), rho).unwrap()
}

/// Network with every pair defined and exactly `links` linked.
pub fn network(nodes: Vec<AssetRecord>, links: &[(usize, usize)]) -> CorrelationNetwork {
    let n = nodes.len();
    let mut states = vec![PairState::Absent; n * n];
    for i in 0..n {
        states[i * n + i] = PairState::Undefined;
    }
    for &(i, j) in links {
        states[i * n + j] = PairState::Linked;
        states[j * n + i] = PairState::Linked;
    }
    let w = Window::new(d("2003-01-01"), d("2004-01-01"));
    CorrelationNetwork::from_states(w, nodes, states, |_, _| 0.5).unwrap()
}

/// Unbiased mean and variance of raw values.
pub fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (m, ss / (n - 1.0))
}

/// Every file below `root`, keyed by relative path.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}
