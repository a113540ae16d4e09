//! Signed rooted trees, signed forests and leafy forests.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub type VertexId = u32;

/// Edge sign, always `1` or `-1`.
pub type Sign = i8;

pub const MAX_ENUMERATED_VERTICES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("max_vertices must lie in 1..={max}, got {got}")]
    Capacity { got: usize, max: usize },
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("invalid tree: {0}")]
    Invalid(String),
    #[error("marked vertex {0} is not a leaf")]
    MarkedNotLeaf(VertexId),
    #[error("bad canonical encoding: {0}")]
    Encoding(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: VertexId,
    pub to: VertexId,
    pub sign: Option<Sign>,
}

/// A rooted tree with optional edge signs.
///
/// As a standalone tree, root-adjacent edges are unsigned and all others are signed.
/// As a component of a [`SignedForest`] every edge is signed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedRootedTree {
    pub vertices: Vec<VertexId>,
    pub root: VertexId,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SignedForest {
    pub components: Vec<SignedRootedTree>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LeafyForest {
    pub forest: SignedForest,
    pub marked: BTreeSet<VertexId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexChain {
    pub vertices: Vec<VertexId>,
    /// `signs[j]` is the sign of the edge `vertices[j] -> vertices[j+1]`.
    pub signs: Vec<Sign>,
}

impl VertexChain {
    pub fn depth(&self) -> usize {
        self.signs.len()
    }
}

fn is_sign(s: Sign) -> bool {
    s == 1 || s == -1
}

impl SignedRootedTree {
    pub fn single(root: VertexId) -> Self {
        Self { vertices: vec![root], root, edges: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.vertices.contains(&v)
    }

    pub fn parent_edge(&self, v: VertexId) -> Option<&Edge> {
        self.edges.iter().find(|e| e.to == v)
    }

    /// Children of `v` in increasing id order.
    pub fn children(&self, v: VertexId) -> Vec<(VertexId, Option<Sign>)> {
        let mut out: Vec<_> = self.edges.iter().filter(|e| e.from == v).map(|e| (e.to, e.sign)).collect();
        out.sort();
        out
    }

    fn check_shape(&self) -> Result<(), TreeError> {
        let set: BTreeSet<_> = self.vertices.iter().copied().collect();
        if set.len() != self.vertices.len() {
            return Err(TreeError::Invalid("duplicate vertex id".into()));
        }
        if !set.contains(&self.root) {
            return Err(TreeError::Invalid(format!("root {} not among vertices", self.root)));
        }
        if self.edges.len() + 1 != self.vertices.len() {
            return Err(TreeError::Invalid("edge count must be vertex count minus one".into()));
        }
        let mut parent = BTreeMap::new();
        for e in &self.edges {
            if !set.contains(&e.from) {
                return Err(TreeError::UnknownVertex(e.from));
            }
            if !set.contains(&e.to) {
                return Err(TreeError::UnknownVertex(e.to));
            }
            if e.to == self.root {
                return Err(TreeError::Invalid("root has a parent".into()));
            }
            if parent.insert(e.to, e.from).is_some() {
                return Err(TreeError::Invalid(format!("vertex {} has two parents", e.to)));
            }
        }
        for &v in &self.vertices {
            let mut cur = v;
            let mut steps = 0;
            while cur != self.root {
                cur =
                    *parent.get(&cur).ok_or_else(|| TreeError::Invalid(format!("vertex {v} not connected to root")))?;
                steps += 1;
                if steps > self.vertices.len() {
                    return Err(TreeError::Invalid("cycle".into()));
                }
            }
        }
        Ok(())
    }

    /// Validate as a standalone signed rooted tree.
    pub fn validate(&self) -> Result<(), TreeError> {
        self.check_shape()?;
        for e in &self.edges {
            match (e.from == self.root, e.sign) {
                (true, Some(_)) => {
                    return Err(TreeError::Invalid(format!("root edge {}->{} carries a sign", e.from, e.to)))
                }
                (false, None) => return Err(TreeError::Invalid(format!("edge {}->{} needs a sign", e.from, e.to))),
                (false, Some(s)) if !is_sign(s) => return Err(TreeError::Invalid(format!("sign {s} is not +1 or -1"))),
                _ => {}
            }
        }
        Ok(())
    }

    /// Validate as a forest component: every edge signed.
    pub fn validate_component(&self) -> Result<(), TreeError> {
        self.check_shape()?;
        for e in &self.edges {
            match e.sign {
                Some(s) if is_sign(s) => {}
                _ => return Err(TreeError::Invalid(format!("forest edge {}->{} needs a sign", e.from, e.to))),
            }
        }
        Ok(())
    }

    /// Subtree hanging below `v`, `v` becoming its root.
    pub fn subtree(&self, v: VertexId) -> SignedRootedTree {
        let mut vertices = vec![v];
        let mut edges = Vec::new();
        let mut i = 0;
        while i < vertices.len() {
            let u = vertices[i];
            for e in self.edges.iter().filter(|e| e.from == u) {
                vertices.push(e.to);
                edges.push(*e);
            }
            i += 1;
        }
        vertices.sort();
        edges.sort();
        SignedRootedTree { vertices, root: v, edges }
    }

    fn encode_from(&self, v: VertexId) -> String {
        let mut parts: Vec<String> = self
            .children(v)
            .into_iter()
            .map(|(c, s)| {
                let prefix = match s {
                    Some(1) => "+",
                    Some(_) => "-",
                    None => "",
                };
                format!("{prefix}{}", self.encode_from(c))
            })
            .collect();
        parts.sort();
        format!("({})", parts.concat())
    }

    /// Rebuild a tree from a canonical encoding; ids follow preorder from 0.
    pub fn from_canonical(code: &str) -> Result<Self, TreeError> {
        let bytes = code.as_bytes();
        let mut pos = 0usize;
        let mut tree = SignedRootedTree { vertices: vec![0], root: 0, edges: Vec::new() };
        parse_node(bytes, &mut pos, 0, &mut tree)?;
        if pos != bytes.len() {
            return Err(TreeError::Encoding(format!("trailing input at {pos}")));
        }
        Ok(tree)
    }
}

fn parse_node(b: &[u8], pos: &mut usize, id: VertexId, tree: &mut SignedRootedTree) -> Result<(), TreeError> {
    if b.get(*pos) != Some(&b'(') {
        return Err(TreeError::Encoding(format!("expected '(' at {}", *pos)));
    }
    *pos += 1;
    loop {
        let sign = match b.get(*pos) {
            Some(b')') => {
                *pos += 1;
                return Ok(());
            }
            Some(b'+') => {
                *pos += 1;
                Some(1)
            }
            Some(b'-') => {
                *pos += 1;
                Some(-1)
            }
            Some(b'(') => None,
            _ => return Err(TreeError::Encoding(format!("unexpected input at {}", *pos))),
        };
        let child = tree.vertices.len() as VertexId;
        tree.vertices.push(child);
        tree.edges.push(Edge { from: id, to: child, sign });
        parse_node(b, pos, child, tree)?;
    }
}

/// Canonical text encoding; equal exactly for root- and sign-preserving isomorphic trees.
pub fn canonical_form(tree: &SignedRootedTree) -> String {
    tree.encode_from(tree.root)
}

/// One representative per isomorphism class, ordered by size then encoding.
pub fn enumerate_signed_rooted_trees(max_vertices: usize) -> Result<Vec<SignedRootedTree>, TreeError> {
    if max_vertices == 0 || max_vertices > MAX_ENUMERATED_VERTICES {
        return Err(TreeError::Capacity { got: max_vertices, max: MAX_ENUMERATED_VERTICES });
    }
    let mut layer: BTreeSet<String> = BTreeSet::from(["()".to_string()]);
    let mut out = Vec::new();
    for size in 1..=max_vertices {
        if size > 1 {
            let mut next = BTreeSet::new();
            for code in &layer {
                let t = SignedRootedTree::from_canonical(code)?;
                let fresh = t.vertices.len() as VertexId;
                for &v in &t.vertices {
                    let signs: &[Option<Sign>] = if v == t.root { &[None] } else { &[Some(1), Some(-1)] };
                    for &sign in signs {
                        let mut g = t.clone();
                        g.vertices.push(fresh);
                        g.edges.push(Edge { from: v, to: fresh, sign });
                        next.insert(canonical_form(&g));
                    }
                }
            }
            layer = next;
        }
        for code in &layer {
            out.push(SignedRootedTree::from_canonical(code)?);
        }
    }
    Ok(out)
}

impl SignedForest {
    /// Forest of isolated vertices.
    pub fn from_singletons(ids: &[VertexId]) -> Self {
        Self { components: ids.iter().map(|&v| SignedRootedTree::single(v)).collect() }
    }

    pub fn validate(&self) -> Result<(), TreeError> {
        let mut seen = BTreeSet::new();
        for c in &self.components {
            c.validate_component()?;
            for &v in &c.vertices {
                if !seen.insert(v) {
                    return Err(TreeError::Invalid(format!("vertex {v} in two components")));
                }
            }
        }
        Ok(())
    }

    /// All vertex ids in increasing order; this order fixes coordinates.
    pub fn vertices(&self) -> Vec<VertexId> {
        let mut v: Vec<_> = self.components.iter().flat_map(|c| c.vertices.iter().copied()).collect();
        v.sort();
        v
    }

    pub fn len(&self) -> usize {
        self.components.iter().map(|c| c.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn component_of(&self, v: VertexId) -> Option<&SignedRootedTree> {
        self.components.iter().find(|c| c.contains(v))
    }

    pub fn is_leaf(&self, v: VertexId) -> bool {
        self.component_of(v).is_some_and(|c| c.children(v).is_empty())
    }
}

/// Forest obtained by removing the root; components ordered by root id.
pub fn delete_root(tree: &SignedRootedTree) -> SignedForest {
    let components = tree.children(tree.root).into_iter().map(|(c, _)| tree.subtree(c)).collect();
    SignedForest { components }
}

/// Inverse of [`delete_root`]: hang every component under a fresh root.
pub fn attach_root(forest: &SignedForest, root: VertexId) -> Result<SignedRootedTree, TreeError> {
    if forest.vertices().contains(&root) {
        return Err(TreeError::Invalid(format!("root id {root} already used")));
    }
    let mut vertices = vec![root];
    let mut edges = Vec::new();
    for c in &forest.components {
        vertices.extend(&c.vertices);
        edges.extend(&c.edges);
        edges.push(Edge { from: root, to: c.root, sign: None });
    }
    vertices.sort();
    edges.sort();
    Ok(SignedRootedTree { vertices, root, edges })
}

/// Unique chain from the component root down to `v`.
pub fn chain_to_root(forest: &SignedForest, v: VertexId) -> Result<VertexChain, TreeError> {
    let comp = forest.component_of(v).ok_or(TreeError::UnknownVertex(v))?;
    let mut vertices = vec![v];
    let mut signs = Vec::new();
    let mut cur = v;
    while let Some(e) = comp.parent_edge(cur) {
        signs.push(e.sign.unwrap_or(1));
        vertices.push(e.from);
        cur = e.from;
    }
    vertices.reverse();
    signs.reverse();
    Ok(VertexChain { vertices, signs })
}

impl LeafyForest {
    pub fn validate(&self) -> Result<(), TreeError> {
        self.forest.validate()?;
        for &m in &self.marked {
            if self.forest.component_of(m).is_none() {
                return Err(TreeError::UnknownVertex(m));
            }
            if !self.forest.is_leaf(m) {
                return Err(TreeError::MarkedNotLeaf(m));
            }
        }
        Ok(())
    }
}

/// Extension F⁺ with one new `+1` child above each marked leaf.
///
/// New ids continue after the largest existing id, in marked-id order. The
/// returned map sends each marked leaf to its new child.
pub fn leafy_extend_with_map(lf: &LeafyForest) -> Result<(SignedForest, BTreeMap<VertexId, VertexId>), TreeError> {
    lf.validate()?;
    let mut next = lf.forest.vertices().last().map_or(0, |m| m + 1);
    let mut out = lf.forest.clone();
    let mut added = BTreeMap::new();
    for &m in &lf.marked {
        let comp = out.components.iter_mut().find(|c| c.contains(m)).expect("validated");
        comp.vertices.push(next);
        comp.edges.push(Edge { from: m, to: next, sign: Some(1) });
        added.insert(m, next);
        next += 1;
    }
    Ok((out, added))
}

pub fn leafy_extend(lf: &LeafyForest) -> Result<SignedForest, TreeError> {
    leafy_extend_with_map(lf).map(|(f, _)| f)
}

/// Wire format shared by the CLI and reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeJson {
    pub vertices: Vec<VertexId>,
    pub root: VertexId,
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub marked: Vec<VertexId>,
}

impl TreeJson {
    pub fn from_tree(tree: &SignedRootedTree, marked: &BTreeSet<VertexId>) -> Self {
        Self {
            vertices: tree.vertices.clone(),
            root: tree.root,
            edges: tree.edges.clone(),
            marked: marked.iter().copied().collect(),
        }
    }

    pub fn tree(&self) -> Result<SignedRootedTree, TreeError> {
        let t = SignedRootedTree { vertices: self.vertices.clone(), root: self.root, edges: self.edges.clone() };
        t.validate()?;
        Ok(t)
    }

    /// The leafy forest below the root.
    pub fn leafy(&self) -> Result<LeafyForest, TreeError> {
        let t = self.tree()?;
        let lf = LeafyForest { forest: delete_root(&t), marked: self.marked.iter().copied().collect() };
        if lf.marked.contains(&t.root) {
            return Err(TreeError::Invalid("the root cannot be marked".into()));
        }
        lf.validate()?;
        Ok(lf)
    }
}
