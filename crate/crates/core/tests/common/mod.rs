//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use homophily::features::{AxisSpec, FeatureTable};
use homophily::ingest::InteractionGraph;
use homophily::sampler::{Example, LabeledDataset, Mode, RejectionStats};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn node(i: usize) -> String {
    format!("n{i}")
}

/// Graph on nodes `n0..n{n-1}` with the given arcs and reply counts.
pub fn graph(n: usize, arcs: &[(usize, usize, u64)]) -> InteractionGraph {
    let nodes: BTreeSet<String> = (0..n).map(node).collect();
    let mut g = InteractionGraph::new("test", nodes);
    for &(u, v, c) in arcs {
        g.add_replies(&node(u), &node(v), "Business", c);
    }
    g
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// One representative per isomorphism class of directed graphs on exactly
/// `n` nodes without isolated nodes, as arc lists.
pub fn digraph_classes(n: usize) -> Vec<Vec<(usize, usize)>> {
    let slots: Vec<(usize, usize)> = (0..n).flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v))).collect();
    let slot_of = |u: usize, v: usize| slots.iter().position(|&s| s == (u, v)).unwrap();
    let perm_maps: Vec<Vec<usize>> = permutations(n)
        .into_iter()
        .map(|p| slots.iter().map(|&(u, v)| slot_of(p[u], p[v])).collect())
        .collect();
    let mut out = Vec::new();
    'mask: for mask in 1u32..(1u32 << slots.len()) {
        let mut touched = 0u32;
        for (i, &(u, v)) in slots.iter().enumerate() {
            if mask >> i & 1 == 1 {
                touched |= 1 << u | 1 << v;
            }
        }
        if touched != (1 << n) - 1 {
            continue;
        }
        for map in &perm_maps {
            let mut image = 0u32;
            for (i, &j) in map.iter().enumerate() {
                image |= (mask >> i & 1) << j;
            }
            if image < mask {
                continue 'mask;
            }
        }
        out.push(slots.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &s)| s).collect());
    }
    out
}

/// Product distribution `out(u)·in(v)` restricted to ordered non-links with
/// `u ≠ v`, normalized; `None` when that set carries no mass.
pub fn exact_negative_distribution(n: usize, arcs: &[(usize, usize, u64)]) -> Option<BTreeMap<(usize, usize), f64>> {
    let mut out_w = vec![0u64; n];
    let mut in_w = vec![0u64; n];
    let links: HashSet<(usize, usize)> = arcs.iter().map(|&(u, v, _)| (u, v)).collect();
    for &(u, v, c) in arcs {
        out_w[u] += c;
        in_w[v] += c;
    }
    let mut mass = BTreeMap::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && !links.contains(&(u, v)) && out_w[u] * in_w[v] > 0 {
                mass.insert((u, v), (out_w[u] * in_w[v]) as f64);
            }
        }
    }
    let z: f64 = mass.values().sum();
    if z == 0.0 {
        return None;
    }
    Some(mass.into_iter().map(|(k, m)| (k, m / z)).collect())
}

/// Pearson statistic and degrees of freedom, pooling cells whose expected
/// count is below 5.
pub fn chi_square(observed: &[u64], probs: &[f64]) -> (f64, usize) {
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    let (mut pooled_o, mut pooled_e) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * total as f64;
        if e < 5.0 {
            pooled_o += o as f64;
            pooled_e += e;
        } else {
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pooled_e > 0.0 {
        stat += (pooled_o - pooled_e).powi(2) / pooled_e;
        cells += 1;
    }
    (stat, cells.saturating_sub(1))
}

pub fn chi_square_sf(stat: f64, dof: usize) -> f64 {
    if dof == 0 {
        return 1.0;
    }
    ChiSquared::new(dof as f64).unwrap().sf(stat)
}

/// Central differences of `f` at `theta`.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(theta.len());
    let mut t = theta.to_vec();
    for j in 0..theta.len() {
        let x = t[j];
        t[j] = x + h;
        let up = f(&t);
        t[j] = x - h;
        let down = f(&t);
        t[j] = x;
        g.push((up - down) / (2.0 * h));
    }
    g
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn axes(n: usize) -> Vec<AxisSpec> {
    (0..n).map(|a| AxisSpec::new(&format!("axis{a}"), &format!("A{a}lo"), &format!("A{a}hi"))).collect()
}

/// Users with one uniformly random state (neither, low, high) per axis.
pub fn random_features<R: Rng>(rng: &mut R, n_users: usize, n_axes: usize) -> FeatureTable {
    let bits: BTreeMap<String, Vec<u8>> = (0..n_users)
        .map(|i| {
            let mut x = vec![0u8; 2 * n_axes];
            for a in 0..n_axes {
                match rng.random_range(0..3) {
                    1 => x[2 * a] = 1,
                    2 => x[2 * a + 1] = 1,
                    _ => {}
                }
            }
            (format!("u{i}"), x)
        })
        .collect();
    FeatureTable::from_bits(axes(n_axes), bits).unwrap()
}

/// Random ordered pairs of distinct users with random labels and topics;
/// no balance or link structure implied.
pub fn random_dataset<R: Rng>(rng: &mut R, n_users: usize, m: usize, topics: &[&str]) -> LabeledDataset {
    let examples = (0..m)
        .map(|_| {
            let u = rng.random_range(0..n_users);
            let mut v = rng.random_range(0..n_users - 1);
            if v >= u {
                v += 1;
            }
            let topic = if topics.is_empty() { "NA".to_string() } else { topics[rng.random_range(0..topics.len())].to_string() };
            Example { u: format!("u{u}"), v: format!("u{v}"), topic, y: rng.random_range(0..2) }
        })
        .collect();
    LabeledDataset {
        mode: if topics.is_empty() { Mode::Sd } else { Mode::Sdt },
        seed: 0,
        examples,
        rejection_stats: RejectionStats::default(),
    }
}
