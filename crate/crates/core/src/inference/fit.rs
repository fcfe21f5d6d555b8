use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::{Design, Layout};
use super::wald::{wald_p_value, Z_95};
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::sampler::{LabeledDataset, Mode};

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub ridge: f64,
    pub max_iter: usize,
    /// Stop once the largest coefficient change falls below this.
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { ridge: 1e-6, max_iter: 100, tol: 1e-8, max_halvings: 40 }
    }
}

/// Penalized Bernoulli log-likelihood of the design and its derivatives.
/// The intercept is never penalized.
pub struct Objective<'a> {
    pub design: &'a Design,
    pub ridge: f64,
}

impl Objective<'_> {
    pub fn loglik(&self, theta: &[f64]) -> f64 {
        let ll = self.unpenalized(theta);
        let pen: f64 = theta[1..].iter().map(|t| t * t).sum();
        ll - 0.5 * self.ridge * pen
    }

    pub fn unpenalized(&self, theta: &[f64]) -> f64 {
        self.design.rows.iter().fold(0.0, |acc, r| {
            let eta = Design::linear_predictor(r, theta);
            // y·log σ(η) + (1−y)·log(1−σ(η)) = −softplus(∓η)
            let term = if r.y == 1 { -softplus(-eta) } else { -softplus(eta) };
            acc + r.weight * term
        })
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; theta.len()];
        for r in &self.design.rows {
            let resid = r.weight * (f64::from(r.y) - sigmoid(Design::linear_predictor(r, theta)));
            for &(j, x) in &r.entries {
                g[j] += x * resid;
            }
        }
        for j in 1..theta.len() {
            g[j] -= self.ridge * theta[j];
        }
        g
    }

    /// Penalized observed information restricted to `cols`.
    pub fn information(&self, theta: &[f64], cols: &[usize]) -> DMatrix<f64> {
        let n = cols.len();
        let mut pos = vec![usize::MAX; theta.len()];
        for (i, &j) in cols.iter().enumerate() {
            pos[j] = i;
        }
        let mut h = DMatrix::<f64>::zeros(n, n);
        for r in &self.design.rows {
            let p = sigmoid(Design::linear_predictor(r, theta));
            let w = r.weight * p * (1.0 - p);
            for &(a, xa) in &r.entries {
                let ia = pos[a];
                for &(b, xb) in &r.entries {
                    h[(ia, pos[b])] += w * xa * xb;
                }
            }
        }
        for (i, &j) in cols.iter().enumerate() {
            if j != 0 {
                h[(i, i)] += self.ridge;
            }
        }
        h
    }
}

/// One reported coefficient. Inactive coefficients (design column
/// identically zero) are reported as 0 with p = 1 and no standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub estimate: f64,
    pub se: Option<f64>,
    pub p: f64,
    pub ci95: Option<[f64; 2]>,
    pub active: bool,
}

impl Coefficient {
    fn inactive() -> Self {
        Coefficient { estimate: 0.0, se: None, p: 1.0, ci95: None, active: false }
    }

    fn from_estimate(estimate: f64, se: f64) -> Result<Self> {
        Ok(Coefficient {
            estimate,
            se: Some(se),
            p: wald_p_value(estimate, se)?,
            ci95: Some([estimate - Z_95 * se, estimate + Z_95 * se]),
            active: true,
        })
    }

    pub fn is_significant(&self, alpha: f64) -> bool {
        self.active && self.p < alpha
    }
}

/// Point estimates in matrix form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub feature_names: Vec<String>,
    pub topics: Vec<String>,
    pub beta0: f64,
    /// `|F| × |F|`
    pub w: Vec<Vec<f64>>,
    /// `|F| × |T|`
    pub q: Vec<Vec<f64>>,
}

impl Params {
    pub fn zeros(feature_names: Vec<String>, topics: Vec<String>) -> Self {
        let nf = feature_names.len();
        let nt = topics.len();
        Params { beta0: 0.0, w: vec![vec![0.0; nf]; nf], q: vec![vec![0.0; nt]; nf], feature_names, topics }
    }
}

/// Output of [`fit`]; serialized as `fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub mode: Mode,
    pub feature_names: Vec<String>,
    pub topics: Vec<String>,
    pub beta0: Coefficient,
    /// `|F| × |F|`, row = source feature, column = target feature.
    #[serde(rename = "W")]
    pub w: Vec<Vec<Coefficient>>,
    /// `|F| × |T|`; empty rows in sd mode.
    #[serde(rename = "Q")]
    pub q: Vec<Vec<Coefficient>>,
    /// Penalized log-likelihood at the estimate.
    pub loglik: f64,
    pub loglik_unpenalized: f64,
    pub n_iter: usize,
    pub converged: bool,
    pub max_abs_gradient: f64,
    pub ridge: f64,
    pub n_examples: usize,
    /// Penalized log-likelihood after each accepted iteration, starting at θ = 0.
    pub loglik_trace: Vec<f64>,
    /// Inverse penalized information over all coefficients, in design
    /// column order; zero rows and columns for inactive coefficients.
    #[serde(skip)]
    pub covariance: Option<DMatrix<f64>>,
}

impl FitResult {
    pub fn params(&self) -> Params {
        Params {
            feature_names: self.feature_names.clone(),
            topics: self.topics.clone(),
            beta0: self.beta0.estimate,
            w: self.w.iter().map(|r| r.iter().map(|c| c.estimate).collect()).collect(),
            q: self.q.iter().map(|r| r.iter().map(|c| c.estimate).collect()).collect(),
        }
    }

    /// All W and Q coefficients with their names, intercept excluded.
    pub fn named_coefficients(&self) -> Vec<(String, &Coefficient)> {
        let mut out = Vec::new();
        for (h, row) in self.w.iter().enumerate() {
            for (k, c) in row.iter().enumerate() {
                out.push((format!("W[{},{}]", self.feature_names[h], self.feature_names[k]), c));
            }
        }
        for (h, row) in self.q.iter().enumerate() {
            for (t, c) in row.iter().enumerate() {
                out.push((format!("Q[{},{}]", self.feature_names[h], self.topics[t]), c));
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

fn ill_conditioned(h: &DMatrix<f64>, cols: &[usize], layout: &Layout) -> Error {
    let eig = h.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut names = Vec::new();
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev <= 1e-12 * max {
            for (r, &c) in cols.iter().enumerate() {
                let name = layout.column_name(c);
                if eig.eigenvectors[(r, i)].abs() > 0.1 && !names.contains(&name) {
                    names.push(name);
                }
            }
        }
    }
    if names.is_empty() {
        names = cols.iter().map(|&c| layout.column_name(c)).collect();
    }
    Error::IllConditioned { columns: names }
}

/// Maximizes the ridge-penalized log-likelihood of the design by Newton
/// iterations with step-halving.
pub fn fit_design(design: &Design, mode: Mode, opts: &FitOptions) -> Result<FitResult> {
    if design.n_examples == 0 {
        return Err(Error::Config("cannot fit an empty dataset".into()));
    }
    let layout = &design.layout;
    let p = layout.n_coef();
    let active = design.active_columns();
    let cols: Vec<usize> = (0..p).filter(|&j| active[j]).collect();
    let obj = Objective { design, ridge: opts.ridge };

    let mut theta = vec![0.0; p];
    let mut ll = obj.loglik(&theta);
    let mut trace = vec![ll];
    let mut step_converged = false;
    let mut n_iter = 0;

    while n_iter < opts.max_iter {
        n_iter += 1;
        let g = obj.gradient(&theta);
        let h = obj.information(&theta, &cols);
        let g_act = DVector::from_iterator(cols.len(), cols.iter().map(|&j| g[j]));
        let chol = h.clone().cholesky().ok_or_else(|| ill_conditioned(&h, &cols, layout))?;
        let step = chol.solve(&g_act);
        let full_change = step.amax();

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut cand = theta.clone();
            for (i, &j) in cols.iter().enumerate() {
                cand[j] += scale * step[i];
            }
            let ll_c = obj.loglik(&cand);
            if ll_c >= ll {
                accepted = Some((cand, ll_c));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((cand, ll_c)) => {
                theta = cand;
                ll = ll_c;
                trace.push(ll);
                if scale * full_change < opts.tol {
                    step_converged = true;
                    break;
                }
            }
            None => {
                // No ascent possible along the Newton direction: at the optimum
                // up to rounding when the step is already below tolerance.
                step_converged = full_change < opts.tol;
                break;
            }
        }
    }

    let g = obj.gradient(&theta);
    let max_abs_gradient = cols.iter().map(|&j| g[j].abs()).fold(0.0, f64::max);
    let converged = step_converged && max_abs_gradient < 1e-6 * (design.n_examples as f64).max(1.0);

    let h = obj.information(&theta, &cols);
    let chol = h.clone().cholesky().ok_or_else(|| ill_conditioned(&h, &cols, layout))?;
    let cov_act = chol.inverse();
    let mut cov = DMatrix::<f64>::zeros(p, p);
    for (a, &ja) in cols.iter().enumerate() {
        for (b, &jb) in cols.iter().enumerate() {
            cov[(ja, jb)] = cov_act[(a, b)];
        }
    }

    let coef = |j: usize| -> Result<Coefficient> {
        if active[j] {
            Coefficient::from_estimate(theta[j], cov[(j, j)].sqrt())
        } else {
            Ok(Coefficient::inactive())
        }
    };
    let nf = layout.n_features();
    let nt = layout.topics.len();
    let mut w = Vec::with_capacity(nf);
    let mut q = Vec::with_capacity(nf);
    for h in 0..nf {
        w.push((0..nf).map(|k| coef(layout.w_col(h, k))).collect::<Result<Vec<_>>>()?);
        q.push((0..nt).map(|t| coef(layout.q_col(h, t))).collect::<Result<Vec<_>>>()?);
    }

    Ok(FitResult {
        mode,
        feature_names: layout.feature_names.clone(),
        topics: layout.topics.clone(),
        beta0: coef(0)?,
        w,
        q,
        loglik: ll,
        loglik_unpenalized: obj.unpenalized(&theta),
        n_iter,
        converged,
        max_abs_gradient,
        ridge: opts.ridge,
        n_examples: design.n_examples,
        loglik_trace: trace,
        covariance: Some(cov),
    })
}

/// Fits the sd (W only) or sdt (W and Q) model to a labeled dataset.
pub fn fit(dataset: &LabeledDataset, features: &FeatureTable, mode: Mode, ridge: f64) -> Result<FitResult> {
    fit_with(dataset, features, mode, &FitOptions { ridge, ..FitOptions::default() })
}

pub fn fit_with(dataset: &LabeledDataset, features: &FeatureTable, mode: Mode, opts: &FitOptions) -> Result<FitResult> {
    if dataset.is_empty() {
        return Err(Error::Config("cannot fit an empty dataset".into()));
    }
    let design = Design::build(dataset, features, mode)?;
    fit_design(&design, mode, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::AxisSpec;
    use crate::sampler::Example;
    use std::collections::BTreeMap;

    fn one_axis_table(users: &[(&str, [u8; 2])]) -> FeatureTable {
        let bits: BTreeMap<String, Vec<u8>> = users.iter().map(|(u, b)| (u.to_string(), b.to_vec())).collect();
        FeatureTable::from_bits(vec![AxisSpec::new("a", "Lo", "Hi")], bits).unwrap()
    }

    fn ex(u: &str, v: &str, y: u8) -> Example {
        Example { u: u.into(), v: v.into(), topic: "NA".into(), y }
    }

    #[test]
    fn all_zero_features_give_zero_coefficients() {
        let ft = one_axis_table(&[("a", [0, 0]), ("b", [0, 0]), ("c", [0, 0])]);
        let examples = vec![ex("a", "b", 1), ex("b", "c", 1), ex("c", "a", 0), ex("a", "c", 0)];
        let ds = LabeledDataset { mode: Mode::Sd, seed: 0, examples, rejection_stats: Default::default() };
        let r = fit(&ds, &ft, Mode::Sd, 1e-6).unwrap();
        assert!(r.beta0.estimate.abs() < 1e-10);
        assert!(r.converged);
        for row in &r.w {
            for c in row {
                assert!(!c.active);
                assert_eq!(c.estimate, 0.0);
                assert_eq!(c.p, 1.0);
            }
        }
    }

    #[test]
    fn single_covariate_matches_log_odds() {
        // 30 of 40 pairs between Hi users are links, 10 of 40 others are.
        let ft = one_axis_table(&[("h1", [0, 1]), ("h2", [0, 1]), ("z1", [0, 0]), ("z2", [0, 0])]);
        let mut examples = Vec::new();
        for i in 0..40 {
            examples.push(ex("h1", "h2", u8::from(i < 30)));
            examples.push(ex("z1", "z2", u8::from(i < 10)));
        }
        let ds = LabeledDataset { mode: Mode::Sd, seed: 0, examples, rejection_stats: Default::default() };
        let r = fit(&ds, &ft, Mode::Sd, 0.0).unwrap();
        let b0 = (10.0f64 / 30.0).ln();
        let w = (30.0f64 / 10.0).ln() - b0;
        assert!((r.beta0.estimate - b0).abs() < 1e-9);
        assert!((r.w[1][1].estimate - w).abs() < 1e-9);
        // Wald se for a 2×2 table: sqrt(1/a + 1/b + 1/c + 1/d)
        let se = (1.0 / 30.0 + 1.0 / 10.0 + 1.0 / 10.0 + 1.0 / 30.0f64).sqrt();
        assert!((r.w[1][1].se.unwrap() - se).abs() < 1e-9);
        assert!(r.converged);
        for pair in r.loglik_trace.windows(2) {
            assert!(pair[1] >= pair[0]);
        }
    }

    #[test]
    fn separation_with_ridge_still_returns() {
        let ft = one_axis_table(&[("h1", [0, 1]), ("h2", [0, 1]), ("z1", [0, 0]), ("z2", [0, 0])]);
        let mut examples = vec![ex("h1", "h2", 1); 5];
        examples.extend(vec![ex("z1", "z2", 0); 5]);
        examples.push(ex("z2", "z1", 1));
        examples.push(ex("z1", "z2", 1));
        let ds = LabeledDataset { mode: Mode::Sd, seed: 0, examples, rejection_stats: Default::default() };
        let r = fit(&ds, &ft, Mode::Sd, 1e-6).unwrap();
        assert!(r.w[1][1].estimate > 5.0);
        assert!(r.loglik.is_finite());
    }

    #[test]
    fn collinear_without_ridge_names_columns() {
        // Every example pairs two Hi users, so W[Hi,Hi] duplicates the intercept.
        let ft = one_axis_table(&[("h1", [0, 1]), ("h2", [0, 1])]);
        let examples = vec![ex("h1", "h2", 1), ex("h2", "h1", 0), ex("h1", "h2", 0)];
        let ds = LabeledDataset { mode: Mode::Sd, seed: 0, examples, rejection_stats: Default::default() };
        let err = fit(&ds, &ft, Mode::Sd, 0.0).unwrap_err();
        match err {
            Error::IllConditioned { columns } => {
                assert!(columns.contains(&"beta0".to_string()));
                assert!(columns.contains(&"W[Hi,Hi]".to_string()));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_user_is_an_error() {
        let ft = one_axis_table(&[("a", [0, 0])]);
        let ds = LabeledDataset {
            mode: Mode::Sd,
            seed: 0,
            examples: vec![ex("a", "ghost", 1), ex("ghost", "a", 0)],
            rejection_stats: Default::default(),
        };
        assert!(matches!(fit(&ds, &ft, Mode::Sd, 1e-6), Err(Error::MissingFeatures(_))));
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-16);
        assert!((sigmoid(-800.0)).abs() < 1e-300);
    }
}
