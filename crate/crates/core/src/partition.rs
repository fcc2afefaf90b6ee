//! Non-iid partitioning of labeled items across clients and rounds.
//!
//! Clients draw a class mixture from `Dirichlet(α·p)`, where `p` holds the
//! pool's class fractions, and then fill their subset one item at a time.
//! When a class runs out, it is dropped and the mixture is renormalized over
//! the surviving classes.
//!
//! Manifests serialize to a line-oriented text file:
//!
//! ```text
//! # client,round,items
//! 0,0,17 4 93
//! 0,1,8 61 2
//! ```
//!
//! One line per subset: the client index, the subset's position in that
//! client's sequence, then the item ids separated by single spaces.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use std::collections::HashMap;
use std::io::{BufRead, Write};

/// Items grouped by class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPool {
    classes: Vec<Vec<u64>>,
    priors: Vec<f64>,
}

impl LabeledPool {
    pub fn new(classes: Vec<Vec<u64>>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::invalid("pool needs at least one class"));
        }
        if classes.iter().any(|c| c.is_empty()) {
            return Err(Error::invalid("every class must contain at least one item"));
        }
        let total: usize = classes.iter().map(Vec::len).sum();
        let priors = classes.iter().map(|c| c.len() as f64 / total as f64).collect();
        Ok(Self { classes, priors })
    }

    /// `n_classes` classes of `per_class` items with ids `0..n_classes·per_class`.
    pub fn balanced(n_classes: usize, per_class: usize) -> Result<Self> {
        let classes = (0..n_classes)
            .map(|c| ((c * per_class) as u64..((c + 1) * per_class) as u64).collect())
            .collect();
        Self::new(classes)
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn classes(&self) -> &[Vec<u64>] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn total(&self) -> usize {
        self.classes.iter().map(Vec::len).sum()
    }

    pub fn class_of(&self) -> HashMap<u64, usize> {
        let mut out = HashMap::new();
        for (c, items) in self.classes.iter().enumerate() {
            for &id in items {
                out.insert(id, c);
            }
        }
        out
    }

    /// Regroups `items` by the class they have in this pool; classes with no
    /// items are left out.
    fn restrict(&self, items: &[u64], class_of: &HashMap<u64, usize>) -> Result<Self> {
        let mut groups = vec![Vec::new(); self.classes.len()];
        for id in items {
            let c = class_of
                .get(id)
                .ok_or_else(|| Error::invalid(format!("item {id} is not in the pool")))?;
            groups[*c].push(*id);
        }
        Self::new(groups.into_iter().filter(|g| !g.is_empty()).collect())
    }
}

/// Ordered subsets per client.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionManifest {
    pub clients: Vec<Vec<Vec<u64>>>,
    pub alpha: f64,
    pub beta: Option<f64>,
    pub subset_size: usize,
}

impl PartitionManifest {
    pub fn num_subsets(&self) -> usize {
        self.clients.iter().map(Vec::len).sum()
    }

    /// All subsets in (client, position) order.
    pub fn subsets(&self) -> impl Iterator<Item = (usize, usize, &Vec<u64>)> {
        self.clients
            .iter()
            .enumerate()
            .flat_map(|(c, subs)| subs.iter().enumerate().map(move |(r, s)| (c, r, s)))
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# client,round,items")?;
        for (c, r, items) in self.subsets() {
            let ids: Vec<String> = items.iter().map(u64::to_string).collect();
            writeln!(out, "{c},{r},{}", ids.join(" "))?;
        }
        Ok(())
    }

    /// Reads the subset lines back; metadata is not part of the file.
    pub fn read_subsets<R: BufRead>(input: R) -> Result<Vec<Vec<Vec<u64>>>> {
        let mut clients: Vec<Vec<Vec<u64>>> = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let parse_err = |message: &str| Error::Parse {
                line: lineno + 1,
                column: 1,
                message: message.to_string(),
            };
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, ',');
            let c: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err("bad client index"))?;
            let r: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err("bad round index"))?;
            let items = parts
                .next()
                .ok_or_else(|| parse_err("missing items"))?
                .split_whitespace()
                .map(|s| s.parse::<u64>().map_err(|_| parse_err("bad item id")))
                .collect::<Result<Vec<_>>>()?;
            if clients.len() <= c {
                clients.resize(c + 1, Vec::new());
            }
            if clients[c].len() != r {
                return Err(parse_err("subsets must appear in order"));
            }
            clients[c].push(items);
        }
        Ok(clients)
    }
}

/// Draws `θ ~ Dirichlet(conc)` in log space so tiny concentrations do not
/// underflow to an all-zero vector.
pub fn sample_dirichlet<R: Rng + ?Sized>(conc: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut logs = Vec::with_capacity(conc.len());
    for &a in conc {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::invalid(format!("Dirichlet concentration must be positive, got {a}")));
        }
        let lg = if a >= 1.0 {
            Gamma::new(a, 1.0).map_err(|e| Error::invalid(e.to_string()))?.sample(rng).ln()
        } else {
            // Gamma(a) = Gamma(a + 1)·U^{1/a}
            let g = Gamma::new(a + 1.0, 1.0).map_err(|e| Error::invalid(e.to_string()))?.sample(rng);
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            g.ln() + u.ln() / a
        };
        logs.push(lg);
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Zeroes entry `i` and rescales the rest to sum to one, keeping their ratios.
pub fn renormalize(theta: &[f64], i: usize) -> Result<Vec<f64>> {
    if i >= theta.len() {
        return Err(Error::invalid(format!("class {i} out of range")));
    }
    let rest: f64 = theta.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).sum();
    if !(rest > 0.0) {
        return Err(Error::invalid("no weight left outside the removed class"));
    }
    Ok(theta
        .iter()
        .enumerate()
        .map(|(j, &v)| if j == i { 0.0 } else { v / rest })
        .collect())
}

fn draw_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..total);
    let mut last = 0;
    for (j, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = j;
        if u < w {
            return j;
        }
        u -= w;
    }
    last
}

/// Gives each of `m` clients exactly `n` distinct items with a
/// `Dirichlet(α·p)` class mixture.
pub fn dirichlet_split<R: Rng + ?Sized>(
    pool: &LabeledPool,
    m: usize,
    n: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<PartitionManifest> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    if m * n > pool.total() {
        return Err(Error::Exhausted(format!(
            "{m} clients × {n} items exceeds the pool of {}",
            pool.total()
        )));
    }
    let mut remaining = pool.classes.clone();
    let conc: Vec<f64> = pool.priors.iter().map(|p| alpha * p).collect();
    let mut clients = Vec::with_capacity(m);
    for _ in 0..m {
        let mut theta = sample_dirichlet(&conc, rng)?;
        for (c, items) in remaining.iter().enumerate() {
            if items.is_empty() && theta[c] > 0.0 {
                theta = drop_class(&theta, c, &remaining, &pool.priors)?;
            }
        }
        let mut subset = Vec::with_capacity(n);
        while subset.len() < n {
            let c = draw_index(&theta, rng);
            let items = &mut remaining[c];
            let k = rng.random_range(0..items.len());
            subset.push(items.swap_remove(k));
            if items.is_empty() && subset.len() < n {
                theta = drop_class(&theta, c, &remaining, &pool.priors)?;
            }
        }
        clients.push(vec![subset]);
    }
    Ok(PartitionManifest {
        clients,
        alpha,
        beta: None,
        subset_size: n,
    })
}

/// Renormalizes away class `c`; when the mixture had no mass on any
/// surviving class, falls back to the pool priors of the survivors.
fn drop_class(theta: &[f64], c: usize, remaining: &[Vec<u64>], priors: &[f64]) -> Result<Vec<f64>> {
    match renormalize(theta, c) {
        Ok(t) => Ok(t),
        Err(_) => {
            let alive: Vec<f64> = priors
                .iter()
                .zip(remaining)
                .map(|(&p, items)| if items.is_empty() { 0.0 } else { p })
                .collect();
            let s: f64 = alive.iter().sum();
            if s == 0.0 {
                return Err(Error::Exhausted("every class is empty".into()));
            }
            Ok(alive.into_iter().map(|p| p / s).collect())
        }
    }
}

/// Splits the pool across `m` clients with concentration `alpha`, then each
/// client's `n` items into `t` equal round subsets with concentration `beta`.
pub fn hierarchical_split<R: Rng + ?Sized>(
    pool: &LabeledPool,
    m: usize,
    t: usize,
    n: usize,
    alpha: f64,
    beta: f64,
    rng: &mut R,
) -> Result<PartitionManifest> {
    if t == 0 || n % t != 0 {
        return Err(Error::config(format!(
            "{n} items per client do not split into {t} equal subsets"
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    let top = dirichlet_split(pool, m, n, alpha, rng)?;
    let class_of = pool.class_of();
    let mut clients = Vec::with_capacity(m);
    for subsets in &top.clients {
        let local = pool.restrict(&subsets[0], &class_of)?;
        let inner = dirichlet_split(&local, t, n / t, beta, rng)?;
        clients.push(inner.clients.into_iter().map(|mut s| s.remove(0)).collect());
    }
    Ok(PartitionManifest {
        clients,
        alpha,
        beta: Some(beta),
        subset_size: n / t,
    })
}

/// Indices of the round-`t` window: `window` consecutive positions starting
/// at `(t·step) mod len`, wrapping to the start of the sequence.
pub fn overlap_window_indices(len: usize, window: usize, step: usize, t: usize) -> Result<Vec<usize>> {
    if step == 0 {
        return Err(Error::invalid("window step must be at least 1"));
    }
    if window == 0 || window > len {
        return Err(Error::invalid(format!(
            "window of {window} does not fit a sequence of {len}"
        )));
    }
    let start = ((t as u128 * step as u128) % len as u128) as usize;
    Ok((0..window).map(|j| (start + j) % len).collect())
}

pub fn overlap_window<T: Clone>(sequence: &[T], window: usize, step: usize, t: usize) -> Result<Vec<T>> {
    Ok(overlap_window_indices(sequence.len(), window, step, t)?
        .into_iter()
        .map(|i| sequence[i].clone())
        .collect())
}
