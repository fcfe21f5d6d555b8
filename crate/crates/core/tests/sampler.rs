mod common;

use std::collections::BTreeMap;

use homophily::sampler::{
    build_balanced_dataset, build_balanced_dataset_streams, positives, sample_negatives, Mode, NullSampler, Proclivity,
    TopicDist,
};
use homophily::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn index_of(sampler: &NullSampler, n: usize) -> Vec<usize> {
    (0..n).map(|i| sampler.user(i)[1..].parse().unwrap()).collect()
}

#[test]
fn star_graph_negatives_follow_restricted_product() {
    // Center n0 replies to each of four leaves.
    let arcs: Vec<(usize, usize, u64)> = (1..5).map(|l| (0, l, l as u64)).collect();
    let g = graph(5, &arcs);
    let exact = exact_negative_distribution(5, &arcs);
    // Only n0 posts and it already replies to every leaf.
    assert!(exact.is_none());
    let err = sample_negatives(&g, &Proclivity::from_graph(&g), 10, None, 1).unwrap_err();
    assert!(matches!(err, Error::NearCompleteGraph { .. }));

    // With one leaf replying back, non-links exist among leaves.
    let mut arcs = arcs;
    arcs.push((3, 0, 2));
    arcs.push((4, 2, 1));
    let g = graph(5, &arcs);
    let exact = exact_negative_distribution(5, &arcs).unwrap();
    let negs = sample_negatives(&g, &Proclivity::from_graph(&g), 100_000, None, 42).unwrap();
    let mut counts: BTreeMap<(usize, usize), u64> = exact.keys().map(|&k| (k, 0)).collect();
    for e in &negs {
        let u: usize = e.u[1..].parse().unwrap();
        let v: usize = e.v[1..].parse().unwrap();
        *counts.get_mut(&(u, v)).expect("negative outside the non-link support") += 1;
    }
    let observed: Vec<u64> = counts.values().copied().collect();
    let probs: Vec<f64> = exact.values().copied().collect();
    let (stat, dof) = chi_square(&observed, &probs);
    assert!(chi_square_sf(stat, dof) > 0.01, "chi2 {stat} on {dof}");
}

#[test]
fn pre_rejection_source_frequencies_match_out_weight() {
    let arcs = [(0, 1, 5), (1, 2, 1), (2, 0, 3), (3, 1, 2), (4, 0, 1), (1, 4, 4)];
    let g = graph(5, &arcs);
    let p = Proclivity::from_graph(&g);
    let sampler = NullSampler::new(&g, &p).unwrap();
    let idx = index_of(&sampler, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut src = [0u64; 5];
    let mut dst = [0u64; 5];
    for _ in 0..100_000 {
        let (u, v) = sampler.draw_pair(&mut rng);
        src[idx[u]] += 1;
        dst[idx[v]] += 1;
    }
    let mut out_w = [0u64; 5];
    let mut in_w = [0u64; 5];
    for &(u, v, c) in &arcs {
        out_w[u] += c;
        in_w[v] += c;
    }
    for (obs, w) in [(src, out_w), (dst, in_w)] {
        let total: u64 = w.iter().sum();
        let probs: Vec<f64> = w.iter().map(|&x| x as f64 / total as f64).collect();
        let (stat, dof) = chi_square(&obs, &probs);
        assert!(chi_square_sf(stat, dof) > 0.01, "chi2 {stat} on {dof}");
    }
}

#[test]
fn six_node_graphs_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut stat, mut dof, mut tested) = (0.0, 0, 0);
    while tested < 40 {
        let mut arcs = Vec::new();
        for u in 0..6 {
            for v in 0..6 {
                if u != v && rng.random_bool(0.35) {
                    arcs.push((u, v, rng.random_range(1..6)));
                }
            }
        }
        let Some(exact) = exact_negative_distribution(6, &arcs) else { continue };
        let g = graph(6, &arcs);
        let sampler = match NullSampler::new(&g, &Proclivity::from_graph(&g)) {
            Ok(s) => s,
            Err(Error::DegenerateWeights(_)) => continue,
            Err(e) => panic!("{e}"),
        };
        let idx = index_of(&sampler, 6);
        let (pairs, stats) = sampler.sample_indices(20_000, &mut rng).unwrap();
        let z: f64 = {
            let mut out_w = [0u64; 6];
            let mut in_w = [0u64; 6];
            for &(u, v, c) in &arcs {
                out_w[u] += c;
                in_w[v] += c;
            }
            let total = out_w.iter().sum::<u64>() as f64 * in_w.iter().sum::<u64>() as f64;
            let mass: f64 = exact.keys().map(|&(u, v)| (out_w[u] * in_w[v]) as f64).sum();
            mass / total
        };
        assert!((stats.acceptance_probability - z).abs() < 1e-12);
        let mut counts: BTreeMap<(usize, usize), u64> = exact.keys().map(|&k| (k, 0)).collect();
        for (a, b) in pairs {
            *counts.get_mut(&(idx[a], idx[b])).expect("sampled a link or self pair") += 1;
        }
        let observed: Vec<u64> = counts.values().copied().collect();
        let probs: Vec<f64> = exact.values().copied().collect();
        let (s, d) = chi_square(&observed, &probs);
        stat += s;
        dof += d;
        tested += 1;
    }
    assert!(chi_square_sf(stat, dof) > 0.01, "combined chi2 {stat} on {dof}");
}

#[test]
fn sdt_negative_topics_follow_positive_topic_frequencies() {
    let nodes = 8;
    let mut g = graph(nodes, &[]);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for u in 0..nodes {
        for v in 0..nodes {
            if u != v && rng.random_bool(0.3) {
                let t = ["Business", "Crime", "Tech"][rng.random_range(0..3)];
                g.add_replies(&node(u), &node(v), t, rng.random_range(1..4));
            }
        }
    }
    let pos = positives(&g, Mode::Sdt);
    let dist = TopicDist::empirical(&pos);
    let negs = sample_negatives(&g, &Proclivity::from_graph(&g), 60_000, Some(&dist), 9).unwrap();
    let total: f64 = dist.weights.iter().sum();
    let probs: Vec<f64> = dist.weights.iter().map(|w| w / total).collect();
    let observed: Vec<u64> = dist.topics.iter().map(|t| negs.iter().filter(|e| &e.topic == t).count() as u64).collect();
    assert_eq!(observed.iter().sum::<u64>(), 60_000);
    let (stat, dof) = chi_square(&observed, &probs);
    assert!(chi_square_sf(stat, dof) > 0.01);
}

#[test]
fn datasets_are_balanced_deterministic_and_leak_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..30 {
        let n = rng.random_range(3..12);
        let mut arcs = Vec::new();
        for u in 0..n {
            for v in 0..n {
                if u != v && rng.random_bool(0.3) {
                    arcs.push((u, v, rng.random_range(1..4)));
                }
            }
        }
        let g = graph(n, &arcs);
        let p = Proclivity::from_graph(&g);
        for mode in [Mode::Sd, Mode::Sdt] {
            match build_balanced_dataset(&g, &p, mode, trial) {
                Ok(d) => {
                    assert_eq!(d.n_positive() * 2, d.len());
                    d.validate_against(&g).unwrap();
                    assert_eq!(d, build_balanced_dataset(&g, &p, mode, trial).unwrap());
                    let split = build_balanced_dataset_streams(&g, &p, mode, trial, 3).unwrap();
                    assert_eq!(split, build_balanced_dataset_streams(&g, &p, mode, trial, 3).unwrap());
                    assert_eq!(split.n_positive() * 2, split.len());
                    split.validate_against(&g).unwrap();
                }
                Err(Error::NearCompleteGraph { .. }) => assert!(exact_negative_distribution(n, &arcs).is_none()),
                Err(Error::DegenerateWeights(_)) => assert!(arcs.is_empty()),
                Err(e) => panic!("{e}"),
            }
        }
    }
}
