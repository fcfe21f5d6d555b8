//! Sparse design for the feature-feature model.
//!
//! Column 0 is the intercept, columns `1 .. 1+|F|²` hold the outer product
//! `x_u ⊗ x_v` (row-major, entry `(h, k)` at `1 + h·|F| + k`), and the
//! remaining `|F|·|T|` columns hold the shared topic terms `(x_u + x_v)_h`
//! in the column of the example's topic (entry `(h, t)` at
//! `1 + |F|² + h·|T| + t`).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::sampler::{LabeledDataset, Mode};
use crate::topic::{canonical_order, is_sentinel};

/// `x_u ⊗ x_v` flattened row-major.
pub fn outer_kernel(x_u: &[u8], x_v: &[u8]) -> Result<Vec<u8>> {
    if x_u.len() != x_v.len() {
        return Err(Error::Dimension { expected: x_u.len(), got: x_v.len() });
    }
    Ok(x_u.iter().flat_map(|&a| x_v.iter().map(move |&b| a * b)).collect())
}

/// Topic block for one example: `(x_u + x_v)` in the column of `topic`,
/// zeros elsewhere; the sentinel topic gives an all-zero block.
pub fn topic_terms(x_u: &[u8], x_v: &[u8], topic: &str, topics: &[String]) -> Result<Vec<u8>> {
    if x_u.len() != x_v.len() {
        return Err(Error::Dimension { expected: x_u.len(), got: x_v.len() });
    }
    let nt = topics.len();
    let mut block = vec![0u8; x_u.len() * nt];
    if is_sentinel(topic) {
        return Ok(block);
    }
    let t = topics.iter().position(|x| x == topic).ok_or_else(|| Error::UnknownTopic(topic.to_string()))?;
    for h in 0..x_u.len() {
        block[h * nt + t] = x_u[h] + x_v[h];
    }
    Ok(block)
}

/// Coefficient layout shared by the design, the fit and its report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub feature_names: Vec<String>,
    pub topics: Vec<String>,
}

impl Layout {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_coef(&self) -> usize {
        let nf = self.n_features();
        1 + nf * nf + nf * self.topics.len()
    }

    pub fn w_col(&self, h: usize, k: usize) -> usize {
        1 + h * self.n_features() + k
    }

    pub fn q_col(&self, h: usize, t: usize) -> usize {
        let nf = self.n_features();
        1 + nf * nf + h * self.topics.len() + t
    }

    pub fn column_name(&self, j: usize) -> String {
        let nf = self.n_features();
        if j == 0 {
            "beta0".into()
        } else if j < 1 + nf * nf {
            let i = j - 1;
            format!("W[{},{}]", self.feature_names[i / nf], self.feature_names[i % nf])
        } else {
            let i = j - 1 - nf * nf;
            let nt = self.topics.len();
            format!("Q[{},{}]", self.feature_names[i / nt], self.topics[i % nt])
        }
    }
}

/// A distinct design row with its multiplicity.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    /// Nonzero entries `(column, value)` in ascending column order,
    /// intercept first.
    pub entries: Vec<(usize, f64)>,
    pub y: u8,
    pub weight: f64,
}

/// Design matrix with identical rows merged, in order of first appearance.
#[derive(Debug, Clone)]
pub struct Design {
    pub layout: Layout,
    pub rows: Vec<Row>,
    pub n_examples: usize,
}

impl Design {
    /// Builds the design for `dataset`. In sdt mode the topic set is the
    /// canonically ordered set of non-sentinel topics in the dataset.
    pub fn build(dataset: &LabeledDataset, features: &FeatureTable, mode: Mode) -> Result<Self> {
        let topics = match mode {
            Mode::Sd => Vec::new(),
            Mode::Sdt => canonical_order(dataset.examples.iter().map(|e| e.topic.as_str())),
        };
        let layout = Layout { feature_names: features.feature_names(), topics };
        let nf = layout.n_features();

        let mut index: HashMap<(&[u8], &[u8], usize, u8), usize> = HashMap::new();
        let mut rows: Vec<Row> = Vec::new();
        for e in &dataset.examples {
            let xu = features.bits(&e.u).ok_or_else(|| Error::MissingFeatures(e.u.clone()))?;
            let xv = features.bits(&e.v).ok_or_else(|| Error::MissingFeatures(e.v.clone()))?;
            let t = match mode {
                Mode::Sd => usize::MAX,
                Mode::Sdt if is_sentinel(&e.topic) => usize::MAX,
                Mode::Sdt => layout
                    .topics
                    .iter()
                    .position(|x| *x == e.topic)
                    .ok_or_else(|| Error::UnknownTopic(e.topic.clone()))?,
            };
            let key = (xu, xv, t, e.y);
            if let Some(&i) = index.get(&key) {
                rows[i].weight += 1.0;
                continue;
            }
            let mut entries = vec![(0usize, 1.0)];
            for h in 0..nf {
                if xu[h] == 0 {
                    continue;
                }
                for k in 0..nf {
                    if xv[k] != 0 {
                        entries.push((layout.w_col(h, k), 1.0));
                    }
                }
            }
            if t != usize::MAX {
                for h in 0..nf {
                    let c = xu[h] + xv[h];
                    if c != 0 {
                        entries.push((layout.q_col(h, t), f64::from(c)));
                    }
                }
            }
            index.insert(key, rows.len());
            rows.push(Row { entries, y: e.y, weight: 1.0 });
        }
        Ok(Design { layout, rows, n_examples: dataset.examples.len() })
    }

    /// Columns that are nonzero in at least one row.
    pub fn active_columns(&self) -> Vec<bool> {
        let mut active = vec![false; self.layout.n_coef()];
        for r in &self.rows {
            for &(j, _) in &r.entries {
                active[j] = true;
            }
        }
        active
    }

    pub fn linear_predictor(row: &Row, theta: &[f64]) -> f64 {
        row.entries.iter().fold(0.0, |acc, &(j, x)| acc + x * theta[j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(n: usize, i: usize) -> Vec<u8> {
        let mut v = vec![0; n];
        v[i] = 1;
        v
    }

    #[test]
    fn outer_kernel_cases() {
        assert_eq!(outer_kernel(&[0; 8], &[1, 0, 1, 0, 1, 0, 0, 1]).unwrap(), vec![0; 64]);
        let k = outer_kernel(&e(8, 2), &e(8, 5)).unwrap();
        assert_eq!(k.iter().filter(|&&x| x == 1).count(), 1);
        assert_eq!(k[2 * 8 + 5], 1);
        assert_eq!(outer_kernel(&[1; 8], &[1; 8]).unwrap(), vec![1; 64]);
        assert!(matches!(outer_kernel(&[1; 8], &[1; 7]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn topic_terms_cases() {
        let topics: Vec<String> = ["Business", "Crime", "Tech"].iter().map(|s| s.to_string()).collect();
        let b = topic_terms(&e(8, 3), &e(8, 3), "Crime", &topics).unwrap();
        assert_eq!(b[3 * 3 + 1], 2);
        assert_eq!(b.iter().map(|&x| x as u32).sum::<u32>(), 2);
        assert_eq!(topic_terms(&[1; 8], &[1; 8], "NA", &topics).unwrap(), vec![0; 24]);
        let b = topic_terms(&e(8, 0), &e(8, 6), "Tech", &topics).unwrap();
        assert_eq!((b[2], b[6 * 3 + 2]), (1, 1));
        assert_eq!(b.iter().map(|&x| x as u32).sum::<u32>(), 2);
        assert!(matches!(topic_terms(&e(8, 0), &e(8, 0), "Sports", &topics), Err(Error::UnknownTopic(_))));
    }

    #[test]
    fn column_names() {
        let l = Layout { feature_names: vec!["A".into(), "B".into()], topics: vec!["T1".into()] };
        assert_eq!(l.n_coef(), 7);
        assert_eq!(l.column_name(l.w_col(1, 0)), "W[B,A]");
        assert_eq!(l.column_name(l.q_col(1, 0)), "Q[B,T1]");
    }

    proptest! {
        #[test]
        fn topic_block_is_sum_of_endpoint_blocks(
            xu in prop::collection::vec(0u8..2, 8),
            xv in prop::collection::vec(0u8..2, 8),
            t in 0usize..3,
        ) {
            let topics: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
            let zero = vec![0u8; 8];
            let both = topic_terms(&xu, &xv, &topics[t], &topics).unwrap();
            let bu = topic_terms(&xu, &zero, &topics[t], &topics).unwrap();
            let bv = topic_terms(&zero, &xv, &topics[t], &topics).unwrap();
            for i in 0..both.len() {
                prop_assert_eq!(both[i], bu[i] + bv[i]);
                prop_assert!(both[i] == 0 || i % 3 == t);
            }
        }
    }
}
