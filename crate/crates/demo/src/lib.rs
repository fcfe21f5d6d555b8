//! Browser bindings: planted-parameter recovery, the null-sampler explorer
//! and quantile binarization. Every entry point returns a JSON string.

use std::collections::{BTreeMap, BTreeSet};

use homophily::features::{quantile_binarize, Pole};
use homophily::inference::fit;
use homophily::ingest::InteractionGraph;
use homophily::sampler::{sample_negatives, Proclivity};
use homophily::synth::{generate, PlantedConfig};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn to_js(r: Result<Value, String>) -> Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

/// Simulates the diagonal pattern at `strength`, fits it and reports the
/// planted and fitted 8×8 matrices with p-values.
pub fn recovery(n_users: usize, n_candidates: usize, strength: f64, seed: u64) -> Result<Value, String> {
    let config = PlantedConfig::diagonal_pattern(n_users, n_candidates, strength, seed);
    let out = generate(&config).map_err(|e| e.to_string())?;
    let r = fit(&out.dataset, &out.features, config.mode(), 1e-6).map_err(|e| e.to_string())?;
    let grid = |f: &dyn Fn(&homophily::inference::Coefficient) -> Value| -> Vec<Vec<Value>> {
        r.w.iter().map(|row| row.iter().map(f).collect()).collect()
    };
    Ok(json!({
        "features": r.feature_names,
        "planted": config.w_true,
        "estimate": grid(&|c| json!(c.estimate)),
        "p": grid(&|c| json!(c.p)),
        "ci95": grid(&|c| json!(c.ci95)),
        "n_examples": r.n_examples,
        "n_iter": r.n_iter,
        "converged": r.converged,
        "loglik": r.loglik,
    }))
}

fn parse_arcs(text: &str) -> Result<InteractionGraph, String> {
    let mut arcs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            [] => continue,
            [u, v] => arcs.push((u.to_string(), v.to_string(), 1)),
            [u, v, c] => {
                let c: u64 = c.parse().map_err(|_| format!("line {}: bad count `{c}`", i + 1))?;
                arcs.push((u.to_string(), v.to_string(), c));
            }
            _ => return Err(format!("line {}: expected `source target [count]`", i + 1)),
        }
    }
    let nodes: BTreeSet<String> = arcs.iter().flat_map(|(u, v, _)| [u.clone(), v.clone()]).collect();
    let mut g = InteractionGraph::new("demo", nodes);
    for (u, v, c) in &arcs {
        if u == v {
            return Err(format!("self-loop on `{u}`"));
        }
        if *c > 0 {
            g.add_replies(u, v, "NA", *c);
        }
    }
    Ok(g)
}

/// Draws `draws` negatives for the graph given as `source target [count]`
/// lines and compares pair frequencies with the exact conditional law.
pub fn null_sampler(arcs: &str, draws: usize, seed: u64) -> Result<Value, String> {
    let g = parse_arcs(arcs)?;
    let p = Proclivity::from_graph(&g);
    let negs = sample_negatives(&g, &p, draws, None, seed).map_err(|e| e.to_string())?;
    let mut counts: BTreeMap<(&str, &str), u64> = BTreeMap::new();
    for e in &negs {
        *counts.entry((e.u.as_str(), e.v.as_str())).or_default() += 1;
    }
    let total_out: u64 = p.out_weight.iter().sum();
    let total_in: u64 = p.in_weight.iter().sum();
    let mut rows = Vec::new();
    let mut mass = 0.0;
    for (i, u) in p.users.iter().enumerate() {
        for (j, v) in p.users.iter().enumerate() {
            let w = (p.out_weight[i] * p.in_weight[j]) as f64;
            if i != j && w > 0.0 && !g.has_arc(u, v) {
                mass += w;
                rows.push((u.as_str(), v.as_str(), w));
            }
        }
    }
    let pairs: Vec<Value> = rows
        .iter()
        .map(|&(u, v, w)| {
            json!({
                "u": u,
                "v": v,
                "exact": w / mass,
                "empirical": *counts.get(&(u, v)).unwrap_or(&0) as f64 / draws as f64,
            })
        })
        .collect();
    let weights: Vec<Value> = p
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| json!({"user": u, "out": p.out_weight[i], "in": p.in_weight[i]}))
        .collect();
    Ok(json!({
        "acceptance": mass / (total_out as f64 * total_in as f64),
        "draws": draws,
        "pairs": pairs,
        "weights": weights,
    }))
}

/// Ranks `user score` lines and labels the lowest and highest `⌊q·n⌋`.
pub fn binarize(scores: &str, q: f64) -> Result<Value, String> {
    let mut raw = BTreeMap::new();
    for (i, line) in scores.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            [] => continue,
            [u, s] => {
                let s: f64 = s.parse().map_err(|_| format!("line {}: bad score `{s}`", i + 1))?;
                if raw.insert(u.to_string(), Some(s)).is_some() {
                    return Err(format!("line {}: duplicate user `{u}`", i + 1));
                }
            }
            _ => return Err(format!("line {}: expected `user score`", i + 1)),
        }
    }
    let bins = quantile_binarize(&raw, q).map_err(|e| e.to_string())?;
    let mut users: Vec<Value> = bins
        .iter()
        .map(|(u, b)| {
            json!({
                "user": u,
                "score": raw[u],
                "quantile": b.quantile,
                "pole": match b.pole {
                    Some(Pole::Low) => "low",
                    Some(Pole::High) => "high",
                    None => "",
                },
            })
        })
        .collect();
    users.sort_by(|a, b| a["quantile"].as_f64().partial_cmp(&b["quantile"].as_f64()).unwrap());
    Ok(json!({ "per_pole": (q * raw.len() as f64).floor(), "users": users }))
}

#[wasm_bindgen(js_name = recovery)]
pub fn recovery_js(n_users: u32, n_candidates: u32, strength: f64, seed: u32) -> Result<String, JsValue> {
    to_js(recovery(n_users as usize, n_candidates as usize, strength, u64::from(seed)))
}

#[wasm_bindgen(js_name = nullSampler)]
pub fn null_sampler_js(arcs: &str, draws: u32, seed: u32) -> Result<String, JsValue> {
    to_js(null_sampler(arcs, draws as usize, u64::from(seed)))
}

#[wasm_bindgen(js_name = binarize)]
pub fn binarize_js(scores: &str, q: f64) -> Result<String, JsValue> {
    to_js(binarize(scores, q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovery_reports_full_matrices() {
        let v = recovery(1500, 12_000, 0.8, 1).unwrap();
        assert_eq!(v["estimate"].as_array().unwrap().len(), 8);
        assert_eq!(v["planted"][6][6], -0.8);
        assert!(v["estimate"][0][0].as_f64().unwrap() > 0.0);
        assert!(v["p"][0][0].as_f64().unwrap() < 0.05);
    }

    #[test]
    fn null_sampler_frequencies_sum_to_one() {
        let v = null_sampler("a b 2\nb c\nc a 3\nd a\n", 20_000, 4).unwrap();
        let pairs = v["pairs"].as_array().unwrap();
        let exact: f64 = pairs.iter().map(|p| p["exact"].as_f64().unwrap()).sum();
        let emp: f64 = pairs.iter().map(|p| p["empirical"].as_f64().unwrap()).sum();
        assert!((exact - 1.0).abs() < 1e-12);
        assert!((emp - 1.0).abs() < 1e-12);
        assert!(pairs.iter().all(|p| p["u"] != p["v"]));
        assert!(pairs.iter().all(|p| (p["exact"].as_f64().unwrap() - p["empirical"].as_f64().unwrap()).abs() < 0.02));
        assert!(null_sampler("a b\nb a\n", 10, 1).is_err());
        assert!(null_sampler("a b x\n", 10, 1).is_err());
    }

    #[test]
    fn binarize_labels_each_pole() {
        let v = binarize("a 1\nb 2\nc 3\nd 4\ne 5\nf 6\ng 7\nh 8\n", 0.25).unwrap();
        let poles: Vec<&str> = v["users"].as_array().unwrap().iter().map(|u| u["pole"].as_str().unwrap()).collect();
        assert_eq!(poles, ["low", "low", "", "", "", "", "high", "high"]);
        assert!(binarize("a 1\nb 2\n", 0.25).is_err());
    }
}
