//! Replicated experiments, the exact small-tree oracle and goodness-of-fit
//! statistics.
//!
//! Replicate `r` of sub-experiment `tag` always draws from
//! `SeededRng::replicate(seed, tag, r)`, and replicate outputs are merged in
//! index order, so reports do not depend on the thread count.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::embed::{self, EmbedError, Pdbp};
use crate::gen::{grow_urt, rewire_from_urt, GenError, Model, TwoTypeInit};
use crate::params::TwoTypeParams;
use crate::rng::SeededRng;
use crate::stats::{degree_histogram, height, max_out_degree};
use crate::theory::{self, Component, LimitLaw};
use crate::tree::RecursiveTree;

/// Largest size accepted by [`enumerate_exact`].
pub const MAX_EXACT_SIZE: usize = 7;

#[derive(Debug, Error)]
pub enum McError {
    #[error("exact enumeration supports n <= {MAX_EXACT_SIZE}, got {0}")]
    TooLargeForEnumeration(usize),
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

// ---------------------------------------------------------------------------
// Statistics

/// Total variation distance between two sub-probability vectors. Missing
/// mass on either side goes to a shared "other" bucket.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    let at = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
    let body: f64 = (0..len).map(|k| (at(a, k) - at(b, k)).abs()).sum();
    let other = ((1.0 - a.iter().sum::<f64>()) - (1.0 - b.iter().sum::<f64>())).abs();
    0.5 * (body + other)
}

/// Total variation distance between two keyed distributions.
/// Summed in key order, so the result does not depend on hash order.
pub fn tv_distance_keyed<K: Hash + Ord>(a: &HashMap<K, f64>, b: &HashMap<K, f64>) -> f64 {
    let keys: BTreeSet<&K> = a.keys().chain(b.keys()).collect();
    let at = |m: &HashMap<K, f64>, k: &K| m.get(k).copied().unwrap_or(0.0);
    0.5 * keys.into_iter().map(|k| (at(a, k) - at(b, k)).abs()).sum::<f64>()
}

/// Kolmogorov-Smirnov distance between a sample and a continuous cdf.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

pub fn ks_exp1(samples: &[f64]) -> f64 {
    ks_statistic(samples, |x| if x <= 0.0 { 0.0 } else { -(-x).exp_m1() })
}

/// Pearson chi-square statistic and p-value; cells with zero expected
/// probability are skipped.
pub fn chi_square(observed: &[u64], probs: &[f64]) -> (f64, f64) {
    let total: u64 = observed.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0;
    for (&o, &p) in observed.iter().zip(probs) {
        if p > 0.0 {
            let e = total as f64 * p;
            stat += (o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    let df = (cells.max(2) - 1) as f64;
    (stat, 1.0 - ChiSquared::new(df).expect("df > 0").cdf(stat))
}

/// Average ranks, ties sharing the mean rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &m in &idx[i..=j] {
            out[m] = rank;
        }
        i = j + 1;
    }
    out
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

// ---------------------------------------------------------------------------
// Theory hook

/// Limiting out-degree law of a model.
pub fn limit_law(model: &Model) -> LimitLaw {
    match model {
        Model::Urt => LimitLaw::from_components(vec![Component::Geometric { weight: 1.0, rate: 1.0 }]),
        Model::Cmrt2 { params, .. } => theory::limit_degree_two_type(params),
        Model::CmrtK(p) => theory::limit_degree_k_type(p),
        Model::Cwrt(p) => theory::limit_degree_cwrt(p),
        Model::Cmpa(p) => theory::limit_degree_cmpa(p),
    }
}

// ---------------------------------------------------------------------------
// Exact enumeration

/// Exact law of the labelled typed tree of size `n`, by expanding every
/// branch of the growth rule.
pub fn enumerate_exact(model: &Model, n: usize) -> Result<Vec<(RecursiveTree, f64)>, McError> {
    if n > MAX_EXACT_SIZE {
        return Err(McError::TooLargeForEnumeration(n));
    }
    let min = model.min_size();
    if n < min {
        return Err(GenError::TooSmall { n, min }.into());
    }
    let mut level = initial_trees(model, n);
    while level[0].0.len() < n {
        let mut next: HashMap<RecursiveTree, f64> = HashMap::new();
        for (tree, prob) in &level {
            for (ty, parent, step) in transitions(model, tree) {
                let mut child = tree.clone();
                child.push(ty, Some(parent));
                *next.entry(child).or_insert(0.0) += prob * step;
            }
        }
        level = next.into_iter().collect();
        // Fixed order keeps the floating-point sums identical across runs.
        level.sort_by(|a, b| a.0.parents_raw().cmp(b.0.parents_raw()).then(a.0.types().cmp(b.0.types())));
    }
    Ok(level)
}

fn initial_trees(model: &Model, n: usize) -> Vec<(RecursiveTree, f64)> {
    match model {
        Model::Urt => {
            vec![(RecursiveTree::from_parts(vec![None], vec![0], 1, 1, vec![]).expect("single vertex"), 1.0)]
        }
        Model::Cmrt2 { init: TwoTypeInit::Canonical, .. } => {
            vec![(crate::gen::Growth::canonical_pair(n).tree, 1.0)]
        }
        _ => {
            let k = model.num_types();
            let perms = permutations(k);
            let shapes = recursive_parent_lists(k);
            let prob = 1.0 / (perms.len() * shapes.len()) as f64;
            let mut out = Vec::new();
            for perm in &perms {
                for parents in &shapes {
                    let tree = RecursiveTree::from_parts(parents.clone(), perm.clone(), k as u16, k, vec![])
                        .expect("valid initial tree");
                    out.push((tree, prob));
                }
            }
            out
        }
    }
}

fn permutations(k: usize) -> Vec<Vec<u16>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(k - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, (k - 1) as u16);
            out.push(p);
        }
    }
    out
}

/// Every parent list of a recursive tree on `k` vertices.
fn recursive_parent_lists(k: usize) -> Vec<Vec<Option<usize>>> {
    let mut out = vec![vec![None]];
    for m in 1..k {
        out = out
            .into_iter()
            .flat_map(|list| {
                (0..m).map(move |u| {
                    let mut l = list.clone();
                    l.push(Some(u));
                    l
                })
            })
            .collect();
    }
    out
}

/// All `(child type, parent, probability)` moves from `tree`.
fn transitions(model: &Model, tree: &RecursiveTree) -> Vec<(u16, u32, f64)> {
    let k = tree.num_types();
    let m = tree.len();
    let counts = tree.type_counts();
    let mut out = Vec::new();
    match model {
        Model::Urt => {
            for v in 0..m {
                out.push((0, v as u32, 1.0 / m as f64));
            }
        }
        _ => {
            for i in 0..k {
                for v in 0..m {
                    let j = tree.vtype(v);
                    let prob = match model {
                        Model::Cmrt2 { params, .. } => {
                            let pi = if i == 0 { params.p() } else { 1.0 - params.p() };
                            let qij = if i == j { params.q() } else { 1.0 - params.q() };
                            pi * qij / counts[j] as f64
                        }
                        Model::CmrtK(p) => p.p()[i] * p.q().get(i, j) / counts[j] as f64,
                        Model::Cwrt(p) => {
                            let norm: f64 = (0..k).map(|l| p.omega().get(i, l) * counts[l] as f64).sum();
                            p.p()[i] * p.omega().get(i, j) / norm
                        }
                        Model::Cmpa(p) => {
                            let a = p.alpha().get(i, j);
                            let weight: f64 = (0..m)
                                .filter(|&u| tree.vtype(u) == j)
                                .map(|u| tree.out_degree(u) as f64 + a)
                                .sum();
                            p.base().p()[i] * p.base().q().get(i, j) * (tree.out_degree(v) as f64 + a) / weight
                        }
                        Model::Urt => unreachable!(),
                    };
                    if prob > 0.0 {
                        out.push((i as u16, v as u32, prob));
                    }
                }
            }
        }
    }
    out
}

/// Canonical key of the typed tree up to relabelling of non-root vertices.
/// Roots keep their positions, so the key still records which root is which.
pub fn typed_shape(tree: &RecursiveTree) -> String {
    let n = tree.len();
    let mut kids: Vec<Vec<String>> = vec![Vec::new(); n];
    let mut canon: Vec<String> = vec![String::new(); n];
    for v in (0..n).rev() {
        let mut parts = std::mem::take(&mut kids[v]);
        parts.sort();
        let mut s = String::new();
        if tree.is_root(v) {
            write!(s, "(r{}", v).unwrap();
        } else {
            s.push('(');
        }
        write!(s, "t{}", tree.vtype(v)).unwrap();
        for p in parts {
            s.push_str(&p);
        }
        s.push(')');
        match tree.parent(v) {
            Some(u) => kids[u].push(s),
            None => canon[v] = s,
        }
    }
    let mut key: String = canon.concat();
    for (a, b) in tree.root_edges() {
        write!(key, "|{a}-{b}").unwrap();
    }
    key
}

fn empirical_shapes(keys: Vec<String>) -> HashMap<String, f64> {
    let w = 1.0 / keys.len() as f64;
    let mut out = HashMap::new();
    for k in keys {
        *out.entry(k).or_insert(0.0) += w;
    }
    out
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum Threshold {
    /// Pass when the statistic is strictly below `max`.
    Below { max: f64 },
    /// Pass when the statistic lies in `[lo, hi]`.
    Band { lo: f64, hi: f64 },
    /// Pass when the statistic is strictly above `min`.
    Above { min: f64 },
}

impl Threshold {
    pub fn admits(&self, x: f64) -> bool {
        if !x.is_finite() {
            return false;
        }
        match *self {
            Threshold::Below { max } => x < max,
            Threshold::Band { lo, hi } => lo <= x && x <= hi,
            Threshold::Above { min } => x > min,
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Threshold::Below { max } => write!(f, "< {max}"),
            Threshold::Band { lo, hi } => write!(f, "in [{lo}, {hi}]"),
            Threshold::Above { min } => write!(f, "> {min}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    /// What `statistic` measures, e.g. `tv`, `ks`, `ratio`.
    pub kind: String,
    pub statistic: f64,
    pub threshold: Threshold,
    pub pass: bool,
    pub replicates: usize,
    pub n: usize,
    /// Supporting numbers, keyed for stable output.
    pub details: BTreeMap<String, f64>,
}

impl CheckResult {
    fn new(name: impl Into<String>, kind: &str, statistic: f64, threshold: Threshold, replicates: usize, n: usize) -> Self {
        Self {
            name: name.into(),
            kind: kind.to_string(),
            statistic,
            pass: threshold.admits(statistic),
            threshold,
            replicates,
            n,
            details: BTreeMap::new(),
        }
    }

    fn detail(mut self, key: impl Into<String>, value: f64) -> Self {
        self.details.insert(key.into(), value);
        self
    }

    /// Extra pass condition beyond the threshold.
    fn require(mut self, key: &str, ok: bool) -> Self {
        self.details.insert(key.to_string(), if ok { 1.0 } else { 0.0 });
        self.pass &= ok;
        self
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {} = {:.6} (want {}), n = {}, R = {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.kind,
            self.statistic,
            self.threshold,
            self.n,
            self.replicates
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub name: String,
    pub seed: u64,
    pub model: String,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

impl FitReport {
    pub fn new(name: impl Into<String>, seed: u64, model: &Model, checks: Vec<CheckResult>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        Self { name: name.into(), seed, model: model.name().to_string(), checks, pass }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("report {} (model {}, seed {})\n", self.name, self.model, self.seed);
        for c in &self.checks {
            s.push_str(&c.line());
            s.push('\n');
            for (k, v) in &c.details {
                writeln!(s, "    {k} = {v}").unwrap();
            }
        }
        writeln!(s, "{}", if self.pass { "ALL PASS" } else { "SOME CHECKS FAILED" }).unwrap();
        s
    }
}

// ---------------------------------------------------------------------------
// Checks

/// Runs `f` once per replicate stream in parallel, results in replicate order.
pub fn replicate_map<T: Send>(seed: u64, tag: u32, reps: usize, f: impl Fn(&mut rand_chacha::ChaCha8Rng) -> T + Sync) -> Vec<T> {
    (0..reps as u32).into_par_iter().map(|r| f(&mut SeededRng::replicate(seed, tag, r).rng())).collect()
}

/// Out-degree counts pooled over `reps` trees of size `n`.
pub fn pooled_degree_counts(model: &Model, n: usize, reps: usize, seed: u64, tag: u32) -> Result<Vec<u64>, McError> {
    let hists = replicate_map(seed, tag, reps, |rng| model.generate(n, rng).map(|t| degree_histogram(&t).counts));
    let mut pooled: Vec<u64> = Vec::new();
    for h in hists {
        let h = h?;
        if h.len() > pooled.len() {
            pooled.resize(h.len(), 0);
        }
        for (k, c) in h.into_iter().enumerate() {
            pooled[k] += c;
        }
    }
    Ok(pooled)
}

/// Average out-degree fractions against the limiting law.
pub fn check_degree_law(model: &Model, n: usize, reps: usize, tolerance: f64, seed: u64, tag: u32) -> Result<CheckResult, McError> {
    let pooled = pooled_degree_counts(model, n, reps, seed, tag)?;
    let total = (n * reps) as f64;
    let emp: Vec<f64> = pooled.iter().map(|&c| c as f64 / total).collect();
    let law = limit_law(model);
    let theory = law.pmf_vec(emp.len().saturating_sub(1).min(law.k_max()));
    let tv = tv_distance(&emp, &theory);
    Ok(CheckResult::new(format!("degree-law {}", model.name()), "tv", tv, Threshold::Below { max: tolerance }, reps, n)
        .detail("leaf_fraction", emp[0])
        .detail("leaf_fraction_theory", theory[0]))
}

/// OLS slope of `ln(N_k / total)` on `ln k` over the nonzero counts with
/// `k_lo <= k <= k_hi`.
pub fn tail_slope(counts: &[u64], total: f64, k_lo: usize, k_hi: usize) -> f64 {
    let pts: Vec<(f64, f64)> = (k_lo..=k_hi.min(counts.len().saturating_sub(1)))
        .filter(|&k| counts[k] > 0)
        .map(|k| ((k as f64).ln(), (counts[k] as f64 / total).ln()))
        .collect();
    ols_slope(&pts)
}

/// Empirical log-log slope of the degree law against the CMPA exponent.
pub fn check_tail_slope(model: &Model, n: usize, reps: usize, k_range: (usize, usize), tolerance: f64, seed: u64, tag: u32) -> Result<CheckResult, McError> {
    let Model::Cmpa(params) = model else {
        return Err(McError::Spec("tail slope needs a cmpa model".into()));
    };
    let exponent = theory::tail_exponent_cmpa(params)
        .ok_or_else(|| McError::Spec("tail exponent undefined: some type is never a parent".into()))?;
    let pooled = pooled_degree_counts(model, n, reps, seed, tag)?;
    let slope = tail_slope(&pooled, (n * reps) as f64, k_range.0, k_range.1);
    let err = (slope - exponent).abs();
    Ok(CheckResult::new("tail-slope cmpa", "abs-slope-error", err, Threshold::Below { max: tolerance }, reps, n)
        .detail("slope", slope)
        .detail("exponent", exponent))
}

/// Key of the labelled typed tree.
pub fn labelled_key(tree: &RecursiveTree) -> String {
    let mut key = String::with_capacity(4 * tree.len());
    for v in 0..tree.len() {
        match tree.parent(v) {
            Some(u) => write!(key, "{u}:{} ", tree.vtype(v)).unwrap(),
            None => write!(key, "-:{} ", tree.vtype(v)).unwrap(),
        }
    }
    key
}

fn project(entries: &[(RecursiveTree, f64)], key: impl Fn(&RecursiveTree) -> String) -> HashMap<String, f64> {
    let mut out = HashMap::new();
    for (t, p) in entries {
        *out.entry(key(t)).or_insert(0.0) += p;
    }
    out
}

/// Compares the exact law, the discrete generator and the continuous-time
/// embedding on typed shapes of size `n`. Labelled-tree distances are
/// reported alongside as details.
pub fn check_embedding_equivalence(model: &Model, n: usize, reps: usize, tolerance: f64, seed: u64, tag: u32) -> Result<Vec<CheckResult>, McError> {
    let table = enumerate_exact(model, n)?;
    let gen: Result<Vec<RecursiveTree>, GenError> =
        replicate_map(seed, tag, reps, |rng| model.generate(n, rng)).into_iter().collect();
    let emb: Result<Vec<RecursiveTree>, EmbedError> =
        replicate_map(seed, tag + 1, reps, |rng| embed::run_until(model, n, false, rng).map(|r| r.tree))
            .into_iter()
            .collect();
    let (gen, emb) = (gen?, emb?);
    let laws = |key: fn(&RecursiveTree) -> String| {
        (
            project(&table, key),
            empirical_shapes(gen.iter().map(key).collect()),
            empirical_shapes(emb.iter().map(key).collect()),
        )
    };
    let (exact, gen_s, emb_s) = laws(typed_shape);
    let (exact_l, gen_l, emb_l) = laws(labelled_key);
    let name = |pair: &str| format!("embedding {} n={n} {pair}", model.name());
    let below = Threshold::Below { max: tolerance };
    let mass: f64 = table.iter().map(|e| e.1).sum();
    Ok(vec![
        CheckResult::new(name("exact-gen"), "tv", tv_distance_keyed(&exact, &gen_s), below, reps, n)
            .detail("shapes", exact.len() as f64)
            .detail("labelled_trees", table.len() as f64)
            .detail("exact_mass", mass)
            .detail("labelled_tv", tv_distance_keyed(&exact_l, &gen_l)),
        CheckResult::new(name("exact-embed"), "tv", tv_distance_keyed(&exact, &emb_s), below, reps, n)
            .detail("labelled_tv", tv_distance_keyed(&exact_l, &emb_l)),
        CheckResult::new(name("gen-embed"), "tv", tv_distance_keyed(&gen_s, &emb_s), below, reps, n)
            .detail("labelled_tv", tv_distance_keyed(&gen_l, &emb_l)),
    ])
}

/// Rewiring a uniform tree of size `n - 1` against the exact `p = 1` law.
pub fn check_rewiring(q: f64, n: usize, reps: usize, tolerance: f64, seed: u64, tag: u32) -> Result<CheckResult, McError> {
    let model = Model::cmrt2(1.0, q).map_err(|e| McError::Spec(e.to_string()))?;
    let exact = project(&enumerate_exact(&model, n)?, typed_shape);
    let keys: Result<Vec<String>, GenError> = replicate_map(seed, tag, reps, |rng| {
        let urt = grow_urt(n - 1, rng)?;
        rewire_from_urt(&urt, q, rng).map(|t| typed_shape(&t))
    })
    .into_iter()
    .collect();
    let tv = tv_distance_keyed(&exact, &empirical_shapes(keys?));
    Ok(CheckResult::new(format!("rewiring q={q} n={n}"), "tv", tv, Threshold::Below { max: tolerance }, reps, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioStatistic {
    /// `M_n / log2 n`.
    MaxDegreeOverLog2,
    /// `M_n / n`.
    MaxDegreeOverN,
    /// `H_n / ln n`.
    HeightOverLn,
}

impl RatioStatistic {
    pub fn eval(self, tree: &RecursiveTree) -> f64 {
        let n = tree.len() as f64;
        match self {
            RatioStatistic::MaxDegreeOverLog2 => max_out_degree(tree) as f64 / n.log2(),
            RatioStatistic::MaxDegreeOverN => max_out_degree(tree) as f64 / n,
            RatioStatistic::HeightOverLn => height(tree) as f64 / n.ln(),
        }
    }

    fn label(self) -> &'static str {
        match self {
            RatioStatistic::MaxDegreeOverLog2 => "M_n/log2(n)",
            RatioStatistic::MaxDegreeOverN => "M_n/n",
            RatioStatistic::HeightOverLn => "H_n/ln(n)",
        }
    }
}

/// Per-size replicate means and standard errors of a ratio statistic.
/// `(n, mean, standard error, replicate values)` for one schedule size.
pub type SeriesPoint = (usize, f64, f64, Vec<f64>);

pub fn ratio_series(model: &Model, stat: RatioStatistic, schedule: &[usize], reps: usize, seed: u64, tag: u32) -> Result<Vec<SeriesPoint>, McError> {
    let mut out = Vec::new();
    for (idx, &n) in schedule.iter().enumerate() {
        let vals: Result<Vec<f64>, GenError> =
            replicate_map(seed, tag + idx as u32, reps, |rng| model.generate(n, rng).map(|t| stat.eval(&t)))
                .into_iter()
                .collect();
        let vals = vals?;
        let (m, se) = mean_se(&vals);
        out.push((n, m, se, vals));
    }
    Ok(out)
}

/// Final-size mean in `band`; with `trend`, the distance of the mean from
/// `limit` must strictly decrease along the schedule (Spearman of -1).
#[allow(clippy::too_many_arguments)]
pub fn check_asymptotic_ratio(
    model: &Model,
    stat: RatioStatistic,
    schedule: &[usize],
    reps: usize,
    band: (f64, f64),
    limit: f64,
    trend: bool,
    seed: u64,
    tag: u32,
) -> Result<CheckResult, McError> {
    let series = ratio_series(model, stat, schedule, reps, seed, tag)?;
    assess_ratio(model, stat, &series, band, limit, trend)
}

/// The pass/fail part of [`check_asymptotic_ratio`] for a precomputed series.
pub fn assess_ratio(
    model: &Model,
    stat: RatioStatistic,
    series: &[SeriesPoint],
    band: (f64, f64),
    limit: f64,
    trend: bool,
) -> Result<CheckResult, McError> {
    let (n_last, mean_last, _, vals) = series.last().ok_or_else(|| McError::Spec("empty schedule".into()))?;
    let mut res = CheckResult::new(
        format!("ratio {} {}", model.name(), stat.label()),
        "ratio",
        *mean_last,
        Threshold::Band { lo: band.0, hi: band.1 },
        vals.len(),
        *n_last,
    );
    for (n, m, se, _) in series {
        res = res.detail(format!("mean@{n}"), *m).detail(format!("se@{n}"), *se);
    }
    if trend && series.len() >= 2 {
        let ns: Vec<f64> = series.iter().map(|s| s.0 as f64).collect();
        let dist: Vec<f64> = series.iter().map(|s| (s.1 - limit).abs()).collect();
        let rho = spearman(&ns, &dist);
        res = res.detail("spearman_distance_vs_n", rho).require("trend_toward_limit", rho <= -1.0 + 1e-12);
    }
    Ok(res)
}

/// Replicate values of `Z(t)` at a fixed time.
pub fn z_at_time(params: &TwoTypeParams, t: f64, reps: usize, seed: u64, tag: u32) -> Result<Vec<f64>, McError> {
    let model = Model::Cmrt2 { params: *params, init: TwoTypeInit::Canonical };
    let p = params.p();
    replicate_map(seed, tag, reps, |rng| {
        let mut proc = Pdbp::new(&model, false, rng)?;
        proc.run_until_time(t, rng)?;
        let s = proc.state();
        Ok(p * s.count(1) as f64 - (1.0 - p) * s.count(0) as f64)
    })
    .into_iter()
    .collect()
}

/// Replicate values of `e^{-T_n} n_A(T_n)`.
pub fn scaled_type_a_at_size(params: &TwoTypeParams, n: usize, reps: usize, seed: u64, tag: u32) -> Result<Vec<f64>, McError> {
    let model = Model::Cmrt2 { params: *params, init: TwoTypeInit::Canonical };
    replicate_map(seed, tag, reps, |rng| Ok(embed::run_until(&model, n, false, rng)?.stopping.w_type0))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MartingaleTolerances {
    /// `|mean Z - (2p-1)|` must be below this many standard errors.
    #[serde(default = "default_se_multiplier")]
    pub se_multiplier: f64,
    /// Relative tolerance on the mean of `Z^2`.
    #[serde(default = "default_relative")]
    pub second_moment: f64,
    /// KS bound against `Exp(1)`.
    #[serde(default = "default_relative")]
    pub ks: f64,
}

fn default_se_multiplier() -> f64 {
    3.0
}

fn default_relative() -> f64 {
    0.05
}

impl Default for MartingaleTolerances {
    fn default() -> Self {
        Self { se_multiplier: 3.0, second_moment: 0.05, ks: 0.05 }
    }
}

/// Mean of `Z(t)`, mean of `Z(t)^2`, and the law of `e^{-T_n} n_A(T_n)`.
#[allow(clippy::too_many_arguments)]
pub fn check_martingales(
    params: &TwoTypeParams,
    t: f64,
    z_reps: usize,
    n: usize,
    w_reps: usize,
    tol: MartingaleTolerances,
    seed: u64,
    tag: u32,
) -> Result<Vec<CheckResult>, McError> {
    let p = params.p();
    let z = z_at_time(params, t, z_reps, seed, tag)?;
    let (z_mean, z_se) = mean_se(&z);
    let z0 = 2.0 * p - 1.0;
    let z_err = (z_mean - z0).abs() / z_se;
    let z2: Vec<f64> = z.iter().map(|x| x * x).collect();
    let (z2_mean, z2_se) = mean_se(&z2);
    let z2_theory = (1.0 - p) * t.exp_m1() + z0 * z0;
    let z2_rel = (z2_mean / z2_theory - 1.0).abs();
    let w = scaled_type_a_at_size(params, n, w_reps, seed, tag + 1)?;
    let ks = ks_exp1(&w);
    let (w_mean, _) = mean_se(&w);
    Ok(vec![
        CheckResult::new(format!("martingale mean Z(t={t:.4})"), "abs-error-in-se", z_err, Threshold::Below { max: tol.se_multiplier }, z_reps, 0)
            .detail("mean", z_mean)
            .detail("se", z_se)
            .detail("expected", z0),
        CheckResult::new(format!("martingale mean Z^2(t={t:.4})"), "relative-error", z2_rel, Threshold::Below { max: tol.second_moment }, z_reps, 0)
            .detail("mean", z2_mean)
            .detail("se", z2_se)
            .detail("expected", z2_theory),
        CheckResult::new("martingale W ~ Exp(1)", "ks", ks, Threshold::Below { max: tol.ks }, w_reps, n)
            .detail("mean", w_mean),
    ])
}

// ---------------------------------------------------------------------------
// Spec files

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CheckSpec {
    DegreeLaw {
        n: usize,
        tolerance: f64,
        replicates: Option<usize>,
    },
    TailSlope {
        n: usize,
        tolerance: f64,
        k_min: usize,
        k_max: usize,
        replicates: Option<usize>,
    },
    EmbeddingEquivalence {
        n: usize,
        tolerance: f64,
        replicates: Option<usize>,
    },
    Rewiring {
        q: f64,
        n: usize,
        tolerance: f64,
        replicates: Option<usize>,
    },
    Ratio {
        statistic: RatioStatistic,
        schedule: Vec<usize>,
        band: [f64; 2],
        limit: f64,
        #[serde(default)]
        trend: bool,
        replicates: Option<usize>,
    },
    Martingales {
        time: f64,
        n: usize,
        #[serde(default)]
        tolerances: MartingaleTolerances,
        replicates: Option<usize>,
        w_replicates: Option<usize>,
    },
}

/// A declarative experiment: one model, a replicate count, and checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub model: Model,
    pub checks: Vec<CheckSpec>,
}

fn default_replicates() -> usize {
    1
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, McError> {
        let spec: Self = toml::from_str(text).map_err(|e| McError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), McError> {
        let bad = |msg: String| Err(McError::Spec(msg));
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.checks.is_empty() {
            return bad("no checks listed".into());
        }
        let tol_ok = |t: f64| t.is_finite() && t >= 0.0;
        let min = self.model.min_size();
        for (idx, c) in self.checks.iter().enumerate() {
            let at = |msg: &str| McError::Spec(format!("check {}: {msg}", idx + 1));
            let (sizes, tols, reps): (Vec<usize>, Vec<f64>, Vec<Option<usize>>) = match c {
                CheckSpec::DegreeLaw { n, tolerance, replicates } => (vec![*n], vec![*tolerance], vec![*replicates]),
                CheckSpec::TailSlope { n, tolerance, k_min, k_max, replicates } => {
                    if !matches!(self.model, Model::Cmpa(_)) {
                        return Err(at("tail-slope needs a cmpa model"));
                    }
                    if k_min == &0 || k_min >= k_max {
                        return Err(at("need 0 < k_min < k_max"));
                    }
                    (vec![*n], vec![*tolerance], vec![*replicates])
                }
                CheckSpec::EmbeddingEquivalence { n, tolerance, replicates } => {
                    if *n > MAX_EXACT_SIZE {
                        return Err(at(&format!("embedding-equivalence needs n <= {MAX_EXACT_SIZE}")));
                    }
                    (vec![*n], vec![*tolerance], vec![*replicates])
                }
                CheckSpec::Rewiring { q, n, tolerance, replicates } => {
                    if !(0.0..=1.0).contains(q) {
                        return Err(at("q must lie in [0, 1]"));
                    }
                    if *n < 2 || *n > MAX_EXACT_SIZE {
                        return Err(at(&format!("rewiring needs 2 <= n <= {MAX_EXACT_SIZE}")));
                    }
                    (vec![], vec![*tolerance], vec![*replicates])
                }
                CheckSpec::Ratio { schedule, band, limit, replicates, .. } => {
                    if schedule.is_empty() {
                        return Err(at("empty schedule"));
                    }
                    if band[0].partial_cmp(&band[1]).is_none_or(|o| o.is_gt()) || !limit.is_finite() {
                        return Err(at("band must satisfy lo <= hi and limit must be finite"));
                    }
                    (schedule.clone(), vec![], vec![*replicates])
                }
                CheckSpec::Martingales { time, n, tolerances, replicates, w_replicates } => {
                    if !matches!(self.model, Model::Cmrt2 { .. }) {
                        return Err(at("martingales need a cmrt2 model"));
                    }
                    if !(time.is_finite() && *time >= 0.0) {
                        return Err(at("time must be finite and non-negative"));
                    }
                    (vec![*n], vec![tolerances.se_multiplier, tolerances.second_moment, tolerances.ks], vec![*replicates, *w_replicates])
                }
            };
            if let Some(&n) = sizes.iter().find(|&&n| n < min) {
                return Err(at(&format!("size {n} is below the model minimum {min}")));
            }
            if tols.iter().any(|&t| !tol_ok(t)) {
                return Err(at("tolerances must be finite and non-negative"));
            }
            if reps.contains(&Some(0)) {
                return Err(at("replicates must be at least 1"));
            }
        }
        Ok(())
    }

    /// Runs every check. Check `i` draws from replicate tags starting at `16 i`.
    pub fn run(&self) -> Result<FitReport, McError> {
        self.validate()?;
        let mut results = Vec::new();
        for (idx, check) in self.checks.iter().enumerate() {
            let tag = 16 * idx as u32;
            let reps = |r: &Option<usize>| r.unwrap_or(self.replicates);
            let seed = self.seed;
            match check {
                CheckSpec::DegreeLaw { n, tolerance, replicates } => {
                    results.push(check_degree_law(&self.model, *n, reps(replicates), *tolerance, seed, tag)?)
                }
                CheckSpec::TailSlope { n, tolerance, k_min, k_max, replicates } => results.push(check_tail_slope(
                    &self.model,
                    *n,
                    reps(replicates),
                    (*k_min, *k_max),
                    *tolerance,
                    seed,
                    tag,
                )?),
                CheckSpec::EmbeddingEquivalence { n, tolerance, replicates } => results.extend(
                    check_embedding_equivalence(&self.model, *n, reps(replicates), *tolerance, seed, tag)?,
                ),
                CheckSpec::Rewiring { q, n, tolerance, replicates } => {
                    results.push(check_rewiring(*q, *n, reps(replicates), *tolerance, seed, tag)?)
                }
                CheckSpec::Ratio { statistic, schedule, band, limit, trend, replicates } => {
                    results.push(check_asymptotic_ratio(
                        &self.model,
                        *statistic,
                        schedule,
                        reps(replicates),
                        (band[0], band[1]),
                        *limit,
                        *trend,
                        seed,
                        tag,
                    )?)
                }
                CheckSpec::Martingales { time, n, tolerances, replicates, w_replicates } => {
                    let Model::Cmrt2 { params, .. } = &self.model else { unreachable!("validated") };
                    results.extend(check_martingales(
                        params,
                        *time,
                        reps(replicates),
                        *n,
                        w_replicates.unwrap_or(reps(replicates)),
                        *tolerances,
                        seed,
                        tag,
                    )?)
                }
            }
        }
        Ok(FitReport::new(&self.name, self.seed, &self.model, results))
    }
}
