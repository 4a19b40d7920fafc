//! Degree histograms, maximal degree and height.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::tree::RecursiveTree;

/// Out-degree counts `N_k(n)`, overall and per type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeHistogram {
    pub n: usize,
    /// `counts[k] = N_k(n)`.
    #[serde(rename = "N_k")]
    pub counts: Vec<u64>,
    /// `per_type[i][k] = N_{k,i}(n)`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_type: Vec<Vec<u64>>,
}

impl DegreeHistogram {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let n = counts.iter().sum::<u64>() as usize;
        Self { n, counts, per_type: Vec::new() }
    }

    pub fn count(&self, k: usize) -> u64 {
        self.counts.get(k).copied().unwrap_or(0)
    }

    /// Leaf fraction `N_0 / n`.
    pub fn m1(&self) -> f64 {
        self.count(0) as f64 / self.n as f64
    }

    /// `(N_0 - N_1) / n`.
    pub fn m2(&self) -> f64 {
        (self.count(0) as f64 - self.count(1) as f64) / self.n as f64
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.n as f64).collect()
    }

    /// `sum_k k N_k`, i.e. the number of parent-child edges.
    pub fn degree_sum(&self) -> u64 {
        self.counts.iter().enumerate().map(|(k, &c)| k as u64 * c).sum()
    }
}

pub fn degree_histogram(tree: &RecursiveTree) -> DegreeHistogram {
    let max = tree.out_degrees().iter().copied().max().unwrap_or(0) as usize;
    let mut counts = vec![0u64; max + 1];
    let mut per_type = vec![vec![0u64; max + 1]; tree.num_types()];
    for (v, &d) in tree.out_degrees().iter().enumerate() {
        counts[d as usize] += 1;
        per_type[tree.vtype(v)][d as usize] += 1;
    }
    DegreeHistogram { n: tree.len(), counts, per_type }
}

/// Which edges count towards a vertex's degree.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DegreeConvention {
    /// Number of children.
    #[default]
    Out,
    /// Children, plus the parent edge, plus incident root edges.
    Total,
}

pub fn max_out_degree(tree: &RecursiveTree) -> usize {
    tree.out_degrees().iter().copied().max().unwrap_or(0) as usize
}

pub fn max_degree(tree: &RecursiveTree, convention: DegreeConvention) -> usize {
    match convention {
        DegreeConvention::Out => max_out_degree(tree),
        DegreeConvention::Total => {
            let mut deg: Vec<usize> = tree.out_degrees().iter().map(|&d| d as usize).collect();
            for (v, d) in deg.iter_mut().enumerate() {
                if tree.parent(v).is_some() {
                    *d += 1;
                }
            }
            for &(a, b) in tree.root_edges() {
                deg[a as usize] += 1;
                deg[b as usize] += 1;
            }
            deg.into_iter().max().unwrap_or(0)
        }
    }
}

/// Maximum over vertices of the graph distance to the nearest root, by a
/// multi-source breadth-first search over all tree and root edges.
pub fn height(tree: &RecursiveTree) -> usize {
    let n = tree.len();
    // Children in CSR form.
    let mut start = vec![0u32; n + 1];
    for v in 0..n {
        start[v + 1] = start[v] + tree.out_degree(v) as u32;
    }
    let mut fill = start.clone();
    let mut child = vec![0u32; n.saturating_sub(1)];
    for v in 0..n {
        if let Some(u) = tree.parent(v) {
            child[fill[u] as usize] = v as u32;
            fill[u] += 1;
        }
    }
    let mut root_adj: Vec<Vec<u32>> = vec![Vec::new(); tree.num_roots()];
    for &(a, b) in tree.root_edges() {
        root_adj[a as usize].push(b);
        root_adj[b as usize].push(a);
    }

    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::with_capacity(n);
    for r in 0..tree.num_roots() {
        dist[r] = 0;
        queue.push_back(r as u32);
    }
    let mut best = 0;
    while let Some(v) = queue.pop_front() {
        let v = v as usize;
        let d = dist[v];
        best = best.max(d);
        let kids = &child[start[v] as usize..start[v + 1] as usize];
        let parent = tree.parent(v).map(|u| u as u32);
        let roots = root_adj.get(v).map(Vec::as_slice).unwrap_or(&[]);
        for &u in kids.iter().chain(parent.iter()).chain(roots) {
            if dist[u as usize] == u32::MAX {
                dist[u as usize] = d + 1;
                queue.push_back(u);
            }
        }
    }
    best as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSummary {
    pub n: usize,
    #[serde(rename = "K")]
    pub num_types: usize,
    #[serde(rename = "M_n")]
    pub max_degree: usize,
    #[serde(rename = "H_n")]
    pub height: usize,
    #[serde(rename = "N_k")]
    pub counts: Vec<u64>,
    pub m1: f64,
    pub m2: f64,
    pub type_counts: Vec<usize>,
}

pub fn summarize(tree: &RecursiveTree, convention: DegreeConvention) -> TreeSummary {
    let hist = degree_histogram(tree);
    TreeSummary {
        n: tree.len(),
        num_types: tree.num_types(),
        max_degree: max_degree(tree, convention),
        height: height(tree),
        m1: hist.m1(),
        m2: hist.m2(),
        counts: hist.counts,
        type_counts: tree.type_counts(),
    }
}
