//! Taxonomy tree model, conflict resolution and the iterative expansion
//! driver.
//!
//! Nodes live in an arena and are addressed by [`NodeId`]. Deleted nodes stay
//! in the arena marked dead, so ids remain stable for the whole run.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expansion::{select_quality_features, EnsembleConfig, Expander};
use crate::similarity::SimilarityModel;
use crate::TermId;

#[derive(Debug, Error, PartialEq)]
pub enum TaxonomyError {
    #[error("invalid taxonomy JSON: {0}")]
    Json(String),
    #[error("term {0:?} appears more than once")]
    DuplicateTerm(String),
    #[error("term {term:?} is blacklisted under {parent:?}")]
    Blacklisted { parent: String, term: String },
    #[error("reserved term {0:?} used below the root")]
    ReservedTerm(String),
    #[error("node is not alive")]
    DeadNode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Seed,
    Width,
    Depth,
}

#[derive(Debug, Clone)]
pub struct TaxoNode {
    pub term: TermId,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub children_blacklist: BTreeSet<TermId>,
    pub origin: Origin,
    pub iteration_added: u32,
    /// Admission score: mean reciprocal rank for width expansion, parenthood
    /// similarity for depth expansion.
    pub confidence: Option<f64>,
    alive: bool,
}

#[derive(Debug, Clone)]
pub struct Taxonomy {
    nodes: Vec<TaxoNode>,
}

impl Default for Taxonomy {
    fn default() -> Self {
        Self::new()
    }
}

impl Taxonomy {
    pub fn new() -> Self {
        Taxonomy {
            nodes: vec![TaxoNode {
                term: TermId::from(TermId::ROOT),
                parent: None,
                children: Vec::new(),
                children_blacklist: BTreeSet::new(),
                origin: Origin::Seed,
                iteration_added: 0,
                confidence: None,
                alive: true,
            }],
        }
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn node(&self, id: NodeId) -> &TaxoNode {
        &self.nodes[id.0]
    }

    pub fn term(&self, id: NodeId) -> &TermId {
        &self.nodes[id.0].term
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].children
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id.0].parent
    }

    pub fn is_alive(&self, id: NodeId) -> bool {
        self.nodes[id.0].alive
    }

    pub fn blacklist(&self, id: NodeId) -> &BTreeSet<TermId> {
        &self.nodes[id.0].children_blacklist
    }

    pub fn child_terms(&self, id: NodeId) -> Vec<TermId> {
        self.children(id).iter().map(|&c| self.term(c).clone()).collect()
    }

    /// Attaches a new child. Fails when the term is already a child of
    /// `parent` or is on its blacklist.
    pub fn add_child(
        &mut self,
        parent: NodeId,
        term: TermId,
        origin: Origin,
        iteration: u32,
        confidence: Option<f64>,
    ) -> Result<NodeId, TaxonomyError> {
        if !self.is_alive(parent) {
            return Err(TaxonomyError::DeadNode);
        }
        if term.is_root() {
            return Err(TaxonomyError::ReservedTerm(term.to_string()));
        }
        if self.blacklist(parent).contains(&term) {
            return Err(TaxonomyError::Blacklisted {
                parent: self.term(parent).to_string(),
                term: term.to_string(),
            });
        }
        if self.children(parent).iter().any(|&c| *self.term(c) == term) {
            return Err(TaxonomyError::DuplicateTerm(term.to_string()));
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(TaxoNode {
            term,
            parent: Some(parent),
            children: Vec::new(),
            children_blacklist: BTreeSet::new(),
            origin,
            iteration_added: iteration,
            confidence,
            alive: true,
        });
        self.nodes[parent.0].children.push(id);
        Ok(id)
    }

    pub fn blacklist_term(&mut self, parent: NodeId, term: TermId) {
        self.nodes[parent.0].children_blacklist.insert(term);
    }

    /// Detaches `id` from its parent and marks its whole subtree dead.
    pub fn remove_subtree(&mut self, id: NodeId) {
        if !self.is_alive(id) || id == self.root() {
            return;
        }
        if let Some(p) = self.parent(id) {
            self.nodes[p.0].children.retain(|&c| c != id);
        }
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            self.nodes[n.0].alive = false;
            stack.extend(self.nodes[n.0].children.iter().copied());
        }
    }

    /// Moves `id` with its subtree under `new_parent`, appended last.
    pub fn move_subtree(&mut self, id: NodeId, new_parent: NodeId) -> Result<(), TaxonomyError> {
        if !self.is_alive(id) || !self.is_alive(new_parent) {
            return Err(TaxonomyError::DeadNode);
        }
        let term = self.term(id).clone();
        if self.children(new_parent).iter().any(|&c| *self.term(c) == term && c != id) {
            return Err(TaxonomyError::DuplicateTerm(term.to_string()));
        }
        if let Some(p) = self.parent(id) {
            self.nodes[p.0].children.retain(|&c| c != id);
        }
        self.nodes[id.0].parent = Some(new_parent);
        self.nodes[new_parent.0].children.push(id);
        Ok(())
    }

    /// Live nodes in breadth-first order from the root, children in list order.
    pub fn bfs(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut q = VecDeque::from([self.root()]);
        while let Some(n) = q.pop_front() {
            out.push(n);
            q.extend(self.children(n).iter().copied());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.bfs().len()
    }

    pub fn is_empty(&self) -> bool {
        self.children(self.root()).is_empty()
    }

    pub fn depth(&self, mut id: NodeId) -> usize {
        let mut d = 0;
        while let Some(p) = self.parent(id) {
            d += 1;
            id = p;
        }
        d
    }

    /// Strict ancestors of `id`, nearest first.
    pub fn ancestors(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cur = self.parent(id);
        while let Some(p) = cur {
            out.push(p);
            cur = self.parent(p);
        }
        out
    }

    pub fn is_ancestor(&self, a: NodeId, b: NodeId) -> bool {
        self.ancestors(b).contains(&a)
    }

    /// Live nodes grouped by depth; index 0 holds only the root.
    pub fn levels(&self) -> Vec<Vec<NodeId>> {
        let mut levels: Vec<Vec<NodeId>> = Vec::new();
        let mut q = VecDeque::from([(self.root(), 0usize)]);
        while let Some((n, d)) = q.pop_front() {
            if levels.len() <= d {
                levels.push(Vec::new());
            }
            levels[d].push(n);
            q.extend(self.children(n).iter().map(|&c| (c, d + 1)));
        }
        levels
    }

    /// Term → live positions, positions in BFS order.
    pub fn term_index(&self) -> BTreeMap<TermId, Vec<NodeId>> {
        let mut idx: BTreeMap<TermId, Vec<NodeId>> = BTreeMap::new();
        for n in self.bfs() {
            if n != self.root() {
                idx.entry(self.term(n).clone()).or_default().push(n);
            }
        }
        idx
    }

    pub fn terms(&self) -> HashSet<TermId> {
        self.bfs().into_iter().map(|n| self.term(n).clone()).collect()
    }

    pub fn find(&self, term: &str) -> Vec<NodeId> {
        self.bfs().into_iter().filter(|&n| self.term(n).as_str() == term && n != self.root()).collect()
    }

    pub fn conflicts(&self) -> Vec<Conflict> {
        self.term_index()
            .into_iter()
            .filter(|(_, p)| p.len() >= 2)
            .map(|(term, positions)| Conflict { term, positions })
            .collect()
    }

    /// Direct `(parent, child)` term pairs, BFS order, including root edges.
    pub fn edges(&self) -> Vec<(TermId, TermId)> {
        self.bfs()
            .into_iter()
            .filter_map(|n| self.parent(n).map(|p| (self.term(p).clone(), self.term(n).clone())))
            .collect()
    }

    /// Checks tree shape, term uniqueness and blacklist consistency.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = HashSet::new();
        for n in self.bfs() {
            if !seen.insert(self.term(n).clone()) {
                return Err(format!("term {} occurs more than once", self.term(n)));
            }
            for &c in self.children(n) {
                if self.parent(c) != Some(n) {
                    return Err(format!("parent link of {} is inconsistent", self.term(c)));
                }
                if !self.is_alive(c) {
                    return Err(format!("dead node {} is still attached", self.term(c)));
                }
                if self.blacklist(n).contains(self.term(c)) {
                    return Err(format!("{} is blacklisted under {}", self.term(c), self.term(n)));
                }
            }
        }
        Ok(())
    }

    /// Sorted `(parent, child)` term pairs; two trees with equal structure
    /// produce equal vectors.
    pub fn structure(&self) -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = self.edges().into_iter().map(|(p, c)| (p.to_string(), c.to_string())).collect();
        v.sort();
        v
    }

    fn to_json_node(&self, id: NodeId) -> NodeJson {
        let n = self.node(id);
        NodeJson {
            term: n.term.clone(),
            origin: Some(n.origin),
            iteration_added: Some(n.iteration_added),
            confidence: n.confidence,
            blacklist: n.children_blacklist.iter().cloned().collect(),
            children: n.children.iter().map(|&c| self.to_json_node(c)).collect(),
        }
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self.to_json_node(self.root())).expect("taxonomy serializes")
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json_node(self.root())).expect("taxonomy serializes");
        s.push('\n');
        s
    }

    /// Parses the nested format. Accepts a root object named `Root`, a single
    /// top-level node (wrapped under an implicit root) or an array of
    /// top-level nodes. Missing metadata defaults to a seed node at
    /// iteration 0.
    pub fn from_json_str(s: &str) -> Result<Self, TaxonomyError> {
        let doc: TaxonomyDoc = serde_json::from_str(s).map_err(|e| TaxonomyError::Json(e.to_string()))?;
        let mut tax = Taxonomy::new();
        let top = match doc {
            TaxonomyDoc::Forest(nodes) => nodes,
            TaxonomyDoc::Tree(node) if node.term.is_root() => {
                tax.nodes[0].children_blacklist = node.blacklist.into_iter().collect();
                node.children
            }
            TaxonomyDoc::Tree(node) => vec![node],
        };
        let root = tax.root();
        for n in top {
            tax.attach_json(root, n)?;
        }
        let idx = tax.term_index();
        if let Some((t, _)) = idx.iter().find(|(_, p)| p.len() > 1) {
            return Err(TaxonomyError::DuplicateTerm(t.to_string()));
        }
        Ok(tax)
    }

    fn attach_json(&mut self, parent: NodeId, n: NodeJson) -> Result<(), TaxonomyError> {
        let id = self.add_child(
            parent,
            n.term,
            n.origin.unwrap_or(Origin::Seed),
            n.iteration_added.unwrap_or(0),
            n.confidence,
        )?;
        self.nodes[id.0].children_blacklist = n.blacklist.into_iter().collect();
        for c in n.children {
            self.attach_json(id, c)?;
        }
        Ok(())
    }

    /// Graphviz rendering: one node statement per term, then parent → child
    /// edges.
    pub fn to_dot(&self) -> String {
        fn quote(s: &str) -> String {
            format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
        }
        let order = self.bfs();
        let mut out = String::from("digraph taxonomy {\n");
        for &n in &order {
            let _ = writeln!(out, "  {};", quote(self.term(n)));
        }
        for (p, c) in self.edges() {
            let _ = writeln!(out, "  {} -> {};", quote(&p), quote(&c));
        }
        out.push_str("}\n");
        out
    }

    /// Copy with only seed-origin nodes (the initial taxonomy).
    pub fn seed_only(&self) -> Taxonomy {
        let mut out = Taxonomy::new();
        let mut stack = vec![(self.root(), out.root())];
        while let Some((src, dst)) = stack.pop() {
            for &c in self.children(src) {
                let n = self.node(c);
                if n.origin == Origin::Seed {
                    let id = out
                        .add_child(dst, n.term.clone(), Origin::Seed, n.iteration_added, n.confidence)
                        .expect("source tree is valid");
                    stack.push((c, id));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NodeJson {
    term: TermId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin: Option<Origin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    iteration_added: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    blacklist: Vec<TermId>,
    #[serde(default)]
    children: Vec<NodeJson>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TaxonomyDoc {
    Tree(NodeJson),
    Forest(Vec<NodeJson>),
}

/// A term occupying several positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Conflict {
    pub term: TermId,
    pub positions: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionRule {
    SeedPosition,
    Ancestor,
    Confidence,
}

/// What one conflict resolution did, for logs and manifests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Resolution {
    pub term: TermId,
    pub rule: ResolutionRule,
    pub kept_under: TermId,
    pub removed_under: Vec<TermId>,
    pub cut_siblings: Vec<TermId>,
}

/// Live siblings of `id`, excluding itself.
pub fn siblings(tax: &Taxonomy, id: NodeId) -> Vec<NodeId> {
    match tax.parent(id) {
        Some(p) => tax.children(p).iter().copied().filter(|&c| c != id).collect(),
        None => Vec::new(),
    }
}

/// Reference edges for depth expansion of `target`: every edge below a
/// sibling of `target` whose endpoints both have embeddings.
pub fn depth_reference_edges(tax: &Taxonomy, model: &SimilarityModel, target: NodeId) -> Vec<(TermId, TermId)> {
    let emb = model.embeddings;
    let mut edges = Vec::new();
    for s in siblings(tax, target) {
        if !emb.contains(tax.term(s)) {
            continue;
        }
        for &c in tax.children(s) {
            if emb.contains(tax.term(c)) {
                edges.push((tax.term(s).clone(), tax.term(c).clone()));
            }
        }
    }
    edges
}

/// Reference edges for scoring `node` under its parent: the edges from every
/// child of the grandparent to its children, minus edges ending in `node`'s
/// own term.
pub fn confidence_reference_edges(tax: &Taxonomy, model: &SimilarityModel, node: NodeId) -> Vec<(TermId, TermId)> {
    let emb = model.embeddings;
    let Some(grand) = tax.parent(node).and_then(|p| tax.parent(p)) else {
        return Vec::new();
    };
    let term = tax.term(node);
    let mut edges = Vec::new();
    for &q in tax.children(grand) {
        if !emb.contains(tax.term(q)) {
            continue;
        }
        for &c in tax.children(q) {
            if tax.term(c) != term && emb.contains(tax.term(c)) {
                edges.push((tax.term(q).clone(), tax.term(c).clone()));
            }
        }
    }
    edges
}

/// Joint similarity of a node with its siblings and its parent:
/// mean sibling similarity (over patterns selected from the siblings) times
/// parenthood similarity. Falls back to parenthood similarity alone without
/// siblings; 0 when the parent offset cannot be scored. Clamped at 0.
pub fn node_confidence(tax: &Taxonomy, model: &SimilarityModel, top_features: usize, node: NodeId) -> f64 {
    let Some(parent) = tax.parent(node) else {
        return 0.0;
    };
    let refs = confidence_reference_edges(tax, model, node);
    let par = match model.par_sim(tax.term(parent), tax.term(node), &refs) {
        Ok(v) => v.max(0.0),
        Err(_) => return 0.0,
    };
    let sibs: Vec<TermId> = siblings(tax, node).into_iter().map(|s| tax.term(s).clone()).collect();
    if sibs.is_empty() {
        return par;
    }
    let sk = select_quality_features(model.features, &sibs, top_features);
    let term = tax.term(node);
    let mean = sibs.iter().map(|s| model.sib_sim(term, s, &sk)).sum::<f64>() / sibs.len() as f64;
    mean * par
}

/// Resolves every conflict so that each term keeps a single position.
///
/// Per conflicting term: a seed position wins outright; otherwise positions
/// descended from another conflicting position drop out; among the rest the
/// highest [`node_confidence`] wins (ties: earlier iteration, then parent
/// term). Each losing position loses its subtree and every sibling added
/// after it, and its term goes on the parent's blacklist.
pub fn resolve_conflicts(tax: &mut Taxonomy, model: &SimilarityModel, top_features: usize) -> Vec<Resolution> {
    let mut log = Vec::new();
    while let Some(conflict) = tax.conflicts().into_iter().next() {
        log.push(resolve_one(tax, model, top_features, conflict));
    }
    log
}

fn resolve_one(tax: &mut Taxonomy, model: &SimilarityModel, top_features: usize, conflict: Conflict) -> Resolution {
    let positions = conflict.positions;
    let (winner, rule) = if let Some(&seed) = positions.iter().find(|&&p| tax.node(p).origin == Origin::Seed) {
        (seed, ResolutionRule::SeedPosition)
    } else {
        let survivors: Vec<NodeId> = positions
            .iter()
            .copied()
            .filter(|&p| !positions.iter().any(|&q| q != p && tax.is_ancestor(q, p)))
            .collect();
        if survivors.len() == 1 {
            (survivors[0], ResolutionRule::Ancestor)
        } else {
            let best = survivors
                .iter()
                .map(|&p| (p, node_confidence(tax, model, top_features, p)))
                .max_by(|a, b| {
                    a.1.partial_cmp(&b.1)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then_with(|| tax.node(b.0).iteration_added.cmp(&tax.node(a.0).iteration_added))
                        .then_with(|| parent_term(tax, b.0).cmp(parent_term(tax, a.0)))
                })
                .map(|(p, _)| p)
                .expect("at least two survivors");
            (best, ResolutionRule::Confidence)
        }
    };

    let mut removed_under = Vec::new();
    let mut cut_siblings = Vec::new();
    for &loser in &positions {
        if loser == winner || !tax.is_alive(loser) {
            continue;
        }
        let parent = tax.parent(loser).expect("non-root position");
        let key = |tax: &Taxonomy, n: NodeId| {
            let pos = tax.children(parent).iter().position(|&c| c == n).unwrap_or(usize::MAX);
            (tax.node(n).iteration_added, pos)
        };
        let loser_key = key(tax, loser);
        let later: Vec<NodeId> = tax
            .children(parent)
            .iter()
            .copied()
            .filter(|&s| {
                s != loser
                    && tax.node(s).origin != Origin::Seed
                    && key(tax, s) > loser_key
                    && s != winner
                    && !tax.is_ancestor(s, winner)
            })
            .collect();
        for s in later {
            cut_siblings.push(tax.term(s).clone());
            tax.remove_subtree(s);
        }
        tax.remove_subtree(loser);
        tax.blacklist_term(parent, conflict.term.clone());
        removed_under.push(tax.term(parent).clone());
    }
    let kept_under = parent_term(tax, winner).clone();
    Resolution {
        term: conflict.term,
        rule,
        kept_under,
        removed_under,
        cut_siblings,
    }
}

fn parent_term(tax: &Taxonomy, n: NodeId) -> &TermId {
    tax.term(tax.parent(n).unwrap_or(tax.root()))
}

/// Result of [`TreeExpander::expand`].
#[derive(Debug, Clone)]
pub struct ExpansionRun {
    pub taxonomy: Taxonomy,
    /// Tree after each iteration's conflict resolution.
    pub snapshots: Vec<Taxonomy>,
    pub resolutions: Vec<Vec<Resolution>>,
}

/// Iterative hierarchical expansion: breadth-first over the tree, depth
/// expansion for childless nodes followed by width expansion of every
/// node's children, then conflict resolution once per iteration.
pub struct TreeExpander<'a> {
    expander: Expander<'a>,
    rng: ChaCha8Rng,
}

impl<'a> TreeExpander<'a> {
    pub fn new(model: SimilarityModel<'a>, cfg: &'a EnsembleConfig) -> Self {
        TreeExpander {
            expander: Expander::new(model, cfg),
            rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
        }
    }

    pub fn model(&self) -> &SimilarityModel<'a> {
        &self.expander.model
    }

    pub fn expand(&mut self, seed: &Taxonomy, max_iter: u32) -> ExpansionRun {
        let mut tax = seed.clone();
        let mut snapshots = Vec::new();
        let mut resolutions = Vec::new();
        for iter in 1..=max_iter {
            self.grow(&mut tax, iter);
            resolutions.push(self.resolve(&mut tax));
            snapshots.push(tax.clone());
        }
        ExpansionRun {
            taxonomy: tax,
            snapshots,
            resolutions,
        }
    }

    pub fn resolve(&self, tax: &mut Taxonomy) -> Vec<Resolution> {
        resolve_conflicts(tax, &self.expander.model, self.expander.cfg.top_features)
    }

    /// One breadth-first growth pass without conflict resolution.
    pub fn grow(&mut self, tax: &mut Taxonomy, iter: u32) {
        let model = self.expander.model;
        let candidates = model.features.candidate_terms();
        let mut on_tree = tax.terms();
        let mut queue = VecDeque::from([tax.root()]);
        while let Some(node) = queue.pop_front() {
            if !tax.is_alive(node) {
                continue;
            }
            if tax.children(node).is_empty() && model.embeddings.contains(tax.term(node)) {
                let refs = depth_reference_edges(tax, &model, node);
                if !refs.is_empty() {
                    let mut exclude = on_tree.clone();
                    exclude.extend(tax.blacklist(node).iter().cloned());
                    let picked = self
                        .expander
                        .depth_expand(tax.term(node), &refs, candidates, &exclude)
                        .unwrap_or_default();
                    for (term, score) in picked {
                        if tax.add_child(node, term.clone(), Origin::Depth, iter, Some(score)).is_ok() {
                            on_tree.insert(term);
                        }
                    }
                }
            }
            let seeds = tax.child_terms(node);
            if !seeds.is_empty() {
                let mut exclude: HashSet<TermId> = tax.blacklist(node).iter().cloned().collect();
                exclude.insert(tax.term(node).clone());
                exclude.extend(tax.ancestors(node).into_iter().map(|a| tax.term(a).clone()));
                for a in self.expander.width_expand(&seeds, &exclude, &mut self.rng) {
                    if tax.add_child(node, a.term.clone(), Origin::Width, iter, Some(a.mrr)).is_ok() {
                        on_tree.insert(a.term);
                    }
                }
            }
            queue.extend(tax.children(node).iter().copied());
        }
    }
}
