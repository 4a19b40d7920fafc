//! Discrete-time growth of uniform, community modulated, community weighted
//! and preferential attachment recursive trees.
//!
//! All generators draw from a caller-supplied RNG, so a fixed
//! [`SeededRng`](crate::rng::SeededRng) reproduces a tree bit for bit.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::{CmpaParams, CwrtParams, KTypeParams, TwoTypeParams};
use crate::tree::RecursiveTree;

pub use crate::tree::{TreeError, NO_PARENT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("size {n} is below the minimum {min} for this model")]
    TooSmall { n: usize, min: usize },
    #[error("size {0} does not fit in 32-bit vertex labels")]
    TooLarge(usize),
    #[error("rewiring needs a single-root, single-type uniform tree")]
    NotUniformTree,
    #[error("q must lie in [0, 1], got {0}")]
    BadProbability(f64),
}

/// How the two-type model starts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwoTypeInit {
    /// Root 1 of type A and root 2 of type B joined by a non-parental edge.
    #[default]
    Canonical,
    /// The K-type start: a size-2 uniform tree with randomly permuted types
    /// whose single edge is a parent-child edge.
    PermutedUrt,
}

/// Any of the supported growth rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Model {
    Urt,
    Cmrt2 {
        #[serde(flatten)]
        params: TwoTypeParams,
        #[serde(default)]
        init: TwoTypeInit,
    },
    CmrtK(KTypeParams),
    Cwrt(CwrtParams),
    Cmpa(CmpaParams),
}

impl Model {
    pub fn cmrt2(p: f64, q: f64) -> Result<Self, crate::params::ParamError> {
        Ok(Model::Cmrt2 { params: TwoTypeParams::new(p, q)?, init: TwoTypeInit::Canonical })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::Urt => "urt",
            Model::Cmrt2 { .. } => "cmrt2",
            Model::CmrtK(_) => "cmrt-k",
            Model::Cwrt(_) => "cwrt",
            Model::Cmpa(_) => "cmpa",
        }
    }

    pub fn num_types(&self) -> usize {
        match self {
            Model::Urt => 1,
            Model::Cmrt2 { .. } => 2,
            Model::CmrtK(p) => p.num_types(),
            Model::Cwrt(p) => p.num_types(),
            Model::Cmpa(p) => p.num_types(),
        }
    }

    /// Size of the initial tree.
    pub fn min_size(&self) -> usize {
        match self {
            Model::Urt => 1,
            _ => self.num_types(),
        }
    }

    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<RecursiveTree, GenError> {
        match self {
            Model::Urt => grow_urt(n, rng),
            Model::Cmrt2 { params, init } => grow_cmrt2_with(params, *init, n, rng),
            Model::CmrtK(p) => grow_cmrt_k(p, n, rng),
            Model::Cwrt(p) => grow_cwrt(p, n, rng),
            Model::Cmpa(p) => grow_cmpa(p, n, rng),
        }
    }
}

fn check_size(n: usize, min: usize) -> Result<(), GenError> {
    if n < min {
        return Err(GenError::TooSmall { n, min });
    }
    if n >= NO_PARENT as usize {
        return Err(GenError::TooLarge(n));
    }
    Ok(())
}

/// Growing tree plus per-type registries for O(1) draws within a type.
pub(crate) struct Growth {
    pub(crate) tree: RecursiveTree,
    /// Vertices of each type, in birth order.
    pub(crate) members: Vec<Vec<u32>>,
    /// For each type, the parent endpoint of every parental edge whose parent
    /// has that type. A uniform entry is a vertex drawn proportionally to its
    /// out-degree.
    pub(crate) edge_parents: Option<Vec<Vec<u32>>>,
}

impl Growth {
    fn empty(n: usize, k: usize, track_edges: bool) -> Self {
        Self {
            tree: RecursiveTree::with_capacity(n, k),
            members: vec![Vec::new(); k],
            edge_parents: track_edges.then(|| vec![Vec::new(); k]),
        }
    }

    /// Vertex 1 of type A, vertex 2 of type B, joined by a root edge.
    pub(crate) fn canonical_pair(n: usize) -> Self {
        let mut g = Self::empty(n, 2, false);
        g.attach(0, None);
        g.attach(1, None);
        g.tree.set_roots(2);
        g.tree.add_root_edge(0, 1);
        g
    }

    /// Uniform recursive tree on `k` vertices with a uniformly permuted type
    /// assignment; all `k` vertices are roots.
    pub(crate) fn permuted_urt<R: Rng + ?Sized>(n: usize, k: usize, track_edges: bool, rng: &mut R) -> Self {
        let mut types: Vec<u16> = (0..k as u16).collect();
        types.shuffle(rng);
        let mut g = Self::empty(n, k, track_edges);
        for (m, &ty) in types.iter().enumerate() {
            let parent = (m > 0).then(|| rng.random_range(0..m as u32));
            g.attach(ty, parent);
        }
        g.tree.set_roots(k);
        g
    }

    /// Registries for an existing tree, which keeps its roots and root edges.
    pub(crate) fn from_tree(tree: &RecursiveTree, track_edges: bool) -> Self {
        let mut g = Self::empty(tree.len(), tree.num_types(), track_edges);
        for v in 0..tree.len() {
            g.attach(tree.vtype(v) as u16, tree.parent(v).map(|u| u as u32));
        }
        g.tree.set_roots(tree.num_roots());
        for &(a, b) in tree.root_edges() {
            g.tree.add_root_edge(a, b);
        }
        g
    }

    pub(crate) fn attach(&mut self, ty: u16, parent: Option<u32>) -> u32 {
        let v = self.tree.push(ty, parent);
        self.members[ty as usize].push(v);
        if let (Some(u), Some(edges)) = (parent, self.edge_parents.as_mut()) {
            edges[self.tree.vtype(u as usize)].push(u);
        }
        v
    }

    pub(crate) fn uniform_in<R: Rng + ?Sized>(&self, ty: usize, rng: &mut R) -> u32 {
        let m = &self.members[ty];
        assert!(!m.is_empty(), "target type {ty} has no vertices");
        m[rng.random_range(0..m.len())]
    }

    /// Draws a type-`ty` vertex with probability proportional to
    /// `out_degree + offset`.
    pub(crate) fn preferential_in<R: Rng + ?Sized>(&self, ty: usize, offset: f64, rng: &mut R) -> u32 {
        let edges = &self.edge_parents.as_ref().expect("edge tracking disabled")[ty];
        let uniform_mass = offset * self.members[ty].len() as f64;
        let total = uniform_mass + edges.len() as f64;
        if rng.random::<f64>() * total < uniform_mass {
            self.uniform_in(ty, rng)
        } else {
            edges[rng.random_range(0..edges.len())]
        }
    }
}

pub fn grow_urt<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<RecursiveTree, GenError> {
    check_size(n, 1)?;
    let mut tree = RecursiveTree::with_capacity(n, 1);
    tree.push(0, None);
    tree.set_roots(1);
    for m in 1..n as u32 {
        tree.push(0, Some(rng.random_range(0..m)));
    }
    Ok(tree)
}

/// Canonical two-type growth started from the A-B root pair.
pub fn grow_cmrt2<R: Rng + ?Sized>(
    params: &TwoTypeParams,
    n: usize,
    rng: &mut R,
) -> Result<RecursiveTree, GenError> {
    grow_cmrt2_with(params, TwoTypeInit::Canonical, n, rng)
}

pub fn grow_cmrt2_with<R: Rng + ?Sized>(
    params: &TwoTypeParams,
    init: TwoTypeInit,
    n: usize,
    rng: &mut R,
) -> Result<RecursiveTree, GenError> {
    check_size(n, 2)?;
    let mut g = match init {
        TwoTypeInit::Canonical => Growth::canonical_pair(n),
        TwoTypeInit::PermutedUrt => Growth::permuted_urt(n, 2, false, rng),
    };
    for _ in 2..n {
        let ty: u16 = if rng.random_bool(params.p()) { 0 } else { 1 };
        let target = if rng.random_bool(params.q()) { ty } else { 1 - ty };
        let parent = g.uniform_in(target as usize, rng);
        g.attach(ty, Some(parent));
    }
    Ok(g.tree)
}

/// Row-wise samplers for the type and target-type draws.
pub(crate) struct TypeSampler {
    types: WeightedIndex<f64>,
    targets: Vec<WeightedIndex<f64>>,
}

impl TypeSampler {
    pub(crate) fn new(params: &KTypeParams) -> Self {
        let k = params.num_types();
        Self {
            types: WeightedIndex::new(params.p()).expect("validated probability vector"),
            targets: (0..k)
                .map(|i| WeightedIndex::new(params.q().row(i)).expect("validated stochastic row"))
                .collect(),
        }
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let ty = self.types.sample(rng);
        (ty, self.targets[ty].sample(rng))
    }
}

pub fn grow_cmrt_k<R: Rng + ?Sized>(
    params: &KTypeParams,
    n: usize,
    rng: &mut R,
) -> Result<RecursiveTree, GenError> {
    let k = params.num_types();
    check_size(n, k)?;
    let sampler = TypeSampler::new(params);
    let mut g = Growth::permuted_urt(n, k, false, rng);
    for _ in k..n {
        let (ty, target) = sampler.draw(rng);
        let parent = g.uniform_in(target, rng);
        g.attach(ty as u16, Some(parent));
    }
    Ok(g.tree)
}

pub fn grow_cwrt<R: Rng + ?Sized>(
    params: &CwrtParams,
    n: usize,
    rng: &mut R,
) -> Result<RecursiveTree, GenError> {
    let k = params.num_types();
    check_size(n, k)?;
    let types = WeightedIndex::new(params.p()).expect("validated probability vector");
    let omega = params.omega();
    let mut g = Growth::permuted_urt(n, k, false, rng);
    let mut cumulative = vec![0.0; k];
    for _ in k..n {
        let ty = types.sample(rng);
        // Target type j with probability w_ij n_j / sum_l w_il n_l.
        let mut total = 0.0;
        for (j, c) in cumulative.iter_mut().enumerate() {
            total += omega.get(ty, j) * g.members[j].len() as f64;
            *c = total;
        }
        let u = rng.random::<f64>() * total;
        let target = cumulative.iter().position(|&c| u < c).unwrap_or(k - 1);
        let parent = g.uniform_in(target, rng);
        g.attach(ty as u16, Some(parent));
    }
    Ok(g.tree)
}

pub fn grow_cmpa<R: Rng + ?Sized>(
    params: &CmpaParams,
    n: usize,
    rng: &mut R,
) -> Result<RecursiveTree, GenError> {
    let k = params.num_types();
    check_size(n, k)?;
    let sampler = TypeSampler::new(params.base());
    let mut g = Growth::permuted_urt(n, k, true, rng);
    for _ in k..n {
        let (ty, target) = sampler.draw(rng);
        let parent = g.preferential_in(target, params.alpha().get(ty, target), rng);
        g.attach(ty as u16, Some(parent));
    }
    Ok(g.tree)
}

/// Builds a two-type tree with `p = 1` from a uniform recursive tree: a
/// type-B root is inserted as vertex 2 next to the uniform root, and every
/// parent-child edge is independently redirected to it with probability
/// `1 - q`. Uniform vertex `v > 1` becomes vertex `v + 1`.
pub fn rewire_from_urt<R: Rng + ?Sized>(
    urt: &RecursiveTree,
    q: f64,
    rng: &mut R,
) -> Result<RecursiveTree, GenError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(GenError::BadProbability(q));
    }
    if urt.num_roots() != 1 || urt.num_types() != 1 {
        return Err(GenError::NotUniformTree);
    }
    let n = urt.len();
    check_size(n + 1, 2)?;
    let mut g = Growth::canonical_pair(n + 1);
    let relabel = |v: usize| if v == 0 { 0 } else { v as u32 + 1 };
    for v in 1..n {
        let parent = if rng.random_bool(1.0 - q) {
            1
        } else {
            relabel(urt.parent(v).expect("non-root vertex has a parent"))
        };
        g.attach(0, Some(parent));
    }
    Ok(g.tree)
}
