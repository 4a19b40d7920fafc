//! Labelled recursive trees with vertex types.
//!
//! Vertices are indexed `0..n` in birth order; vertex `v` carries the label
//! `v + 1` in every external format. Roots always occupy the first indices.
//! Parent links always point to an older vertex.

use thiserror::Error;

pub const NO_PARENT: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("tree must contain at least one vertex")]
    Empty,
    #[error("vertex {child} has parent {parent}, which is not older")]
    NotRecursive { child: usize, parent: usize },
    #[error("vertex {0} has no parent but is not a root")]
    Orphan(usize),
    #[error("vertex {vertex} has type {ty} but only {num_types} types exist")]
    TypeOutOfRange { vertex: usize, ty: u16, num_types: u16 },
    #[error("roots must be the first vertices in birth order, found root {0} out of place")]
    RootsNotPrefix(usize),
    #[error("root edge {0}-{1} must join two distinct roots")]
    BadRootEdge(usize, usize),
    #[error("length mismatch between parent and type arrays ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RecursiveTree {
    parent: Vec<u32>,
    vtype: Vec<u16>,
    children: Vec<u32>,
    num_types: u16,
    num_roots: usize,
    root_edges: Vec<(u32, u32)>,
}

impl RecursiveTree {
    pub(crate) fn with_capacity(n: usize, num_types: usize) -> Self {
        Self {
            parent: Vec::with_capacity(n),
            vtype: Vec::with_capacity(n),
            children: Vec::with_capacity(n),
            num_types: num_types as u16,
            num_roots: 0,
            root_edges: Vec::new(),
        }
    }

    /// Appends a vertex and returns its index.
    pub(crate) fn push(&mut self, ty: u16, parent: Option<u32>) -> u32 {
        let v = self.parent.len() as u32;
        debug_assert!(ty < self.num_types);
        match parent {
            Some(u) => {
                debug_assert!(u < v);
                self.children[u as usize] += 1;
                self.parent.push(u);
            }
            None => self.parent.push(NO_PARENT),
        }
        self.vtype.push(ty);
        self.children.push(0);
        v
    }

    /// Marks the first `count` vertices as roots.
    pub(crate) fn set_roots(&mut self, count: usize) {
        self.num_roots = count;
    }

    pub(crate) fn add_root_edge(&mut self, a: u32, b: u32) {
        self.root_edges.push((a, b));
    }

    /// Builds a tree from raw arrays, checking every structural invariant.
    pub fn from_parts(
        parents: Vec<Option<usize>>,
        vtype: Vec<u16>,
        num_types: u16,
        num_roots: usize,
        root_edges: Vec<(usize, usize)>,
    ) -> Result<Self, TreeError> {
        if parents.is_empty() {
            return Err(TreeError::Empty);
        }
        if parents.len() != vtype.len() {
            return Err(TreeError::LengthMismatch(parents.len(), vtype.len()));
        }
        let n = parents.len();
        let mut tree = Self::with_capacity(n, num_types as usize);
        for (v, (&parent, &ty)) in parents.iter().zip(&vtype).enumerate() {
            if ty >= num_types {
                return Err(TreeError::TypeOutOfRange { vertex: v, ty, num_types });
            }
            match parent {
                Some(u) if u >= v => return Err(TreeError::NotRecursive { child: v, parent: u }),
                None if v >= num_roots => {
                    return Err(TreeError::Orphan(v));
                }
                _ => {}
            }
            tree.push(ty, parent.map(|u| u as u32));
        }
        if num_roots > n {
            return Err(TreeError::RootsNotPrefix(num_roots - 1));
        }
        tree.num_roots = num_roots.max(1);
        if tree.parent[0] != NO_PARENT {
            return Err(TreeError::Orphan(0));
        }
        for (a, b) in root_edges {
            if a == b || a >= tree.num_roots || b >= tree.num_roots {
                return Err(TreeError::BadRootEdge(a, b));
            }
            tree.add_root_edge(a as u32, b as u32);
        }
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn num_types(&self) -> usize {
        self.num_types as usize
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        match self.parent[v] {
            NO_PARENT => None,
            u => Some(u as usize),
        }
    }

    pub fn vtype(&self, v: usize) -> usize {
        self.vtype[v] as usize
    }

    pub fn types(&self) -> &[u16] {
        &self.vtype
    }

    /// Raw parent array, [`NO_PARENT`] for parentless vertices.
    pub fn parents_raw(&self) -> &[u32] {
        &self.parent
    }

    pub fn num_roots(&self) -> usize {
        self.num_roots
    }

    pub fn is_root(&self, v: usize) -> bool {
        v < self.num_roots
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.children[v] as usize
    }

    pub fn out_degrees(&self) -> &[u32] {
        &self.children
    }

    /// Non-parental edges between roots (the canonical A-B root edge).
    pub fn root_edges(&self) -> &[(u32, u32)] {
        &self.root_edges
    }

    pub fn parental_edge_count(&self) -> usize {
        self.parent.iter().filter(|&&u| u != NO_PARENT).count()
    }

    pub fn type_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_types()];
        for &t in &self.vtype {
            counts[t as usize] += 1;
        }
        counts
    }

    /// Re-checks recursivity, root placement and the children counts.
    pub fn validate(&self) -> Result<(), TreeError> {
        if self.is_empty() {
            return Err(TreeError::Empty);
        }
        let mut children = vec![0u32; self.len()];
        for v in 0..self.len() {
            if self.vtype[v] >= self.num_types {
                return Err(TreeError::TypeOutOfRange {
                    vertex: v,
                    ty: self.vtype[v],
                    num_types: self.num_types,
                });
            }
            match self.parent(v) {
                Some(u) if u >= v => return Err(TreeError::NotRecursive { child: v, parent: u }),
                Some(u) => children[u] += 1,
                None if !self.is_root(v) => return Err(TreeError::Orphan(v)),
                None => {}
            }
        }
        assert_eq!(children, self.children, "children counts out of sync");
        for &(a, b) in &self.root_edges {
            if a == b || !self.is_root(a as usize) || !self.is_root(b as usize) {
                return Err(TreeError::BadRootEdge(a as usize, b as usize));
            }
        }
        Ok(())
    }
}
