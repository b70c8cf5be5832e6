//! Global structure adjustment between contiguous tree levels.
//!
//! For a parent level with `p` nodes and the child level below it with `n`
//! nodes, the assignment scores `F` (n × p) minimize
//!
//! ```text
//! ½ Σ_ij W_ij ‖F_i/√D_ii − F_j/√D_jj‖² + μ1 Σ_i ‖F_i − Yc_i/‖Yc_i‖₁‖² + μ2 Σ_i ‖F_i − Ys_i‖²
//! ```
//!
//! where `W` is sibling similarity between children, `Yc` parenthood
//! similarity and `Ys` the current assignment. The minimizer is
//! `F* = (I − αS)⁻¹ (β1·Yc_norm + β2·Ys)` with `S = D^{-1/2} W D^{-1/2}`,
//! `α = 1/(1+μ1+μ2)`, `β1 = μ1/(1+μ1+μ2)`, `β2 = μ2/(1+μ1+μ2)`. Each child is
//! then moved under its row argmax.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::expansion::select_quality_features;
use crate::similarity::{ReferenceOffset, SimilarityModel};
use crate::taxonomy::{NodeId, Origin, Taxonomy};
use crate::TermId;

const ITERATIVE_TOLERANCE: f64 = 1e-9;
const ITERATIVE_MAX_STEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeConfig {
    pub mu1: f64,
    pub mu2: f64,
    /// Size of the skip-pattern pool behind the sibling-similarity matrix.
    pub top_features: usize,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            mu1: 0.1,
            mu2: 0.01,
            top_features: 200,
        }
    }
}

/// Matrices for one parent-level / child-level pair.
#[derive(Debug, Clone)]
pub struct AssignmentMatrices {
    pub parents: Vec<TermId>,
    pub children: Vec<TermId>,
    /// n × n sibling similarity, zero diagonal.
    pub w: DMatrix<f64>,
    /// n × p raw parenthood similarity.
    pub yc: DMatrix<f64>,
    /// n × p current assignment, one 1 per row.
    pub ys: DMatrix<f64>,
    pub mu1: f64,
    pub mu2: f64,
}

impl AssignmentMatrices {
    pub fn alpha(&self) -> f64 {
        1.0 / (1.0 + self.mu1 + self.mu2)
    }

    pub fn beta1(&self) -> f64 {
        self.mu1 / (1.0 + self.mu1 + self.mu2)
    }

    pub fn beta2(&self) -> f64 {
        self.mu2 / (1.0 + self.mu1 + self.mu2)
    }

    /// `D^{-1/2} W D^{-1/2}`; rows and columns of isolated children are 0.
    pub fn normalized_similarity(&self) -> DMatrix<f64> {
        let n = self.w.nrows();
        let inv_sqrt: Vec<f64> = (0..n)
            .map(|i| {
                let d: f64 = self.w.row(i).sum();
                if d > 0.0 {
                    1.0 / d.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        DMatrix::from_fn(n, n, |i, j| inv_sqrt[i] * self.w[(i, j)] * inv_sqrt[j])
    }

    /// `Yc` with negatives clamped to 0 and rows scaled to unit L1 norm;
    /// all-zero rows stay zero.
    pub fn yc_normalized(&self) -> DMatrix<f64> {
        let mut out = self.yc.map(|x| x.max(0.0));
        for mut row in out.row_iter_mut() {
            let s: f64 = row.sum();
            if s > 0.0 {
                row /= s;
            }
        }
        out
    }

    /// `β1·Yc_norm + β2·Ys`.
    pub fn target(&self) -> DMatrix<f64> {
        self.yc_normalized() * self.beta1() + &self.ys * self.beta2()
    }

    /// Tab-separated dump with row and column labels.
    pub fn to_tsv(m: &DMatrix<f64>, rows: &[TermId], cols: &[TermId]) -> String {
        let mut out = String::new();
        for c in cols {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
        for (i, r) in rows.iter().enumerate() {
            out.push_str(r);
            for j in 0..m.ncols() {
                let _ = write!(out, "\t{}", m[(i, j)]);
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the matrices for `children` (each with the index of its current
/// parent in `parents`). `W` uses the top `top_features` patterns by summed
/// weight over all children; `Yc` uses every current level edge with
/// embeddings as reference edges.
pub fn build_matrices(
    model: &SimilarityModel,
    parents: &[TermId],
    children: &[(TermId, usize)],
    cfg: &OptimizeConfig,
) -> AssignmentMatrices {
    let n = children.len();
    let p = parents.len();
    let child_terms: Vec<TermId> = children.iter().map(|(t, _)| t.clone()).collect();
    let sk = select_quality_features(model.features, &child_terms, cfg.top_features);
    let weights: Vec<Vec<f64>> = child_terms.iter().map(|t| model.subset_weights(t, &sk)).collect();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let s = model.sib_sim_with(&child_terms[i], &weights[i], &child_terms[j], &weights[j]);
            w[(i, j)] = s;
            w[(j, i)] = s;
        }
    }
    let edges: Vec<(TermId, TermId)> = children
        .iter()
        .map(|(c, j)| (parents[*j].clone(), c.clone()))
        .filter(|(pa, c)| model.embeddings.contains(pa) && model.embeddings.contains(c))
        .collect();
    let reference = ReferenceOffset::from_edges(model.embeddings, &edges).ok();
    let mut yc = DMatrix::zeros(n, p);
    if let Some(reference) = &reference {
        for (i, c) in child_terms.iter().enumerate() {
            for (j, pa) in parents.iter().enumerate() {
                yc[(i, j)] = model.par_sim_with(pa, c, reference).unwrap_or(0.0);
            }
        }
    }
    let mut ys = DMatrix::zeros(n, p);
    for (i, (_, j)) in children.iter().enumerate() {
        ys[(i, *j)] = 1.0;
    }
    AssignmentMatrices {
        parents: parents.to_vec(),
        children: child_terms,
        w,
        yc,
        ys,
        mu1: cfg.mu1,
        mu2: cfg.mu2,
    }
}

/// Closed-form assignment scores. Falls back to fixed-point iteration when
/// the linear system is singular.
pub fn solve(m: &AssignmentMatrices) -> DMatrix<f64> {
    let n = m.w.nrows();
    let s = m.normalized_similarity();
    let system = DMatrix::<f64>::identity(n, n) - &s * m.alpha();
    let target = m.target();
    match system.lu().solve(&target) {
        Some(f) if f.iter().all(|x| x.is_finite()) => f,
        _ => solve_iterative(m),
    }
}

/// Iterates `F ← αSF + β1·Yc_norm + β2·Ys` until the max-abs change drops
/// below 1e-9.
pub fn solve_iterative(m: &AssignmentMatrices) -> DMatrix<f64> {
    let s = m.normalized_similarity() * m.alpha();
    let target = m.target();
    let mut f = target.clone();
    for _ in 0..ITERATIVE_MAX_STEPS {
        let next = &s * &f + &target;
        let delta = (&next - &f).amax();
        f = next;
        if delta < ITERATIVE_TOLERANCE {
            break;
        }
    }
    f
}

/// Argmax parent of row `i`; ties prefer the current parent, then the
/// lexicographically smallest parent term. Parents in `barred` are skipped.
pub fn best_parent(f: &DMatrix<f64>, i: usize, current: usize, parents: &[TermId], barred: &[bool]) -> usize {
    let mut best = current;
    for j in 0..f.ncols() {
        if j == current || barred[j] {
            continue;
        }
        let (a, b) = (f[(i, j)], f[(i, best)]);
        if a > b || (a == b && best != current && parents[j] < parents[best]) {
            best = j;
        }
    }
    best
}

/// One child moved during reassignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Move {
    pub child: TermId,
    pub from: TermId,
    pub to: TermId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    pub parents: usize,
    pub children: usize,
    pub moves: Vec<Move>,
}

/// Parent nodes at `level` and the matrices for their children.
pub fn level_matrices(
    tax: &Taxonomy,
    model: &SimilarityModel,
    level: usize,
    cfg: &OptimizeConfig,
) -> Option<(Vec<NodeId>, Vec<NodeId>, AssignmentMatrices)> {
    let levels = tax.levels();
    let parent_nodes = levels.get(level)?.clone();
    let child_nodes: Vec<NodeId> = parent_nodes.iter().flat_map(|&p| tax.children(p).iter().copied()).collect();
    if parent_nodes.is_empty() || child_nodes.is_empty() {
        return None;
    }
    let parents: Vec<TermId> = parent_nodes.iter().map(|&p| tax.term(p).clone()).collect();
    let children: Vec<(TermId, usize)> = child_nodes
        .iter()
        .map(|&c| {
            let parent = tax.parent(c).expect("child has a parent");
            let j = parent_nodes.iter().position(|&p| p == parent).expect("parent on level");
            (tax.term(c).clone(), j)
        })
        .collect();
    let m = build_matrices(model, &parents, &children, cfg);
    Some((parent_nodes, child_nodes, m))
}

/// Reassigns the children of `level` (parents at `level`, children one
/// below) to their argmax parents, moving whole subtrees. Seed children stay
/// put, and a child is never moved under a parent that blacklists it.
pub fn reassign(tax: &mut Taxonomy, model: &SimilarityModel, level: usize, cfg: &OptimizeConfig) -> LevelReport {
    let mut report = LevelReport {
        level,
        parents: 0,
        children: 0,
        moves: Vec::new(),
    };
    if level == 0 {
        return report;
    }
    let Some((parent_nodes, child_nodes, m)) = level_matrices(tax, model, level, cfg) else {
        return report;
    };
    report.parents = parent_nodes.len();
    report.children = child_nodes.len();
    if parent_nodes.len() < 2 {
        return report;
    }
    let f = solve(&m);
    for (i, &c) in child_nodes.iter().enumerate() {
        if tax.node(c).origin == Origin::Seed {
            continue;
        }
        let current = (0..m.parents.len()).find(|&j| m.ys[(i, j)] == 1.0).expect("one current parent");
        let barred: Vec<bool> = parent_nodes.iter().map(|&p| tax.blacklist(p).contains(tax.term(c))).collect();
        let best = best_parent(&f, i, current, &m.parents, &barred);
        if best != current && tax.move_subtree(c, parent_nodes[best]).is_ok() {
            report.moves.push(Move {
                child: tax.term(c).clone(),
                from: m.parents[current].clone(),
                to: m.parents[best].clone(),
            });
        }
    }
    report
}

/// Runs [`reassign`] over every contiguous level pair, top-down.
pub fn optimize(tax: &mut Taxonomy, model: &SimilarityModel, cfg: &OptimizeConfig) -> Vec<LevelReport> {
    let depth = tax.levels().len();
    (1..depth.saturating_sub(1)).map(|level| reassign(tax, model, level, cfg)).collect()
}
