//! Property tests over randomly generated corpora, trees and matrices.

mod common;

use std::collections::HashSet;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taxogrow::corpus::{association_weight, build_feature_store, count_parallel, FeatureCounter, FeatureStore, SentenceRecord};
use taxogrow::embeddings::{cosine, EmbeddingStore};
use taxogrow::eval::{evaluate, PairSet};
use taxogrow::expansion::{select_quality_features, EnsembleConfig, Expander};
use taxogrow::global_opt::{self, AssignmentMatrices, OptimizeConfig};
use taxogrow::similarity::SimilarityModel;
use taxogrow::taxonomy::{resolve_conflicts, NodeId, Origin, Taxonomy, TreeExpander};
use taxogrow::typestore::{TypeRecord, TypeStore};
use taxogrow::TermId;

use common::random_corpus;

struct World {
    sentences: Vec<SentenceRecord>,
    features: FeatureStore,
    types: TypeStore,
    emb: EmbeddingStore,
    terms: Vec<TermId>,
}

impl World {
    fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sentences = random_corpus(&mut rng, 24, 8, 160);
        let features = build_feature_store(sentences.iter(), false);
        let terms = features.candidate_terms().to_vec();
        let mut records = Vec::new();
        for t in &terms {
            for l in ["person", "place", "thing"] {
                if rng.random_bool(0.4) {
                    records.push(TypeRecord {
                        term: t.clone(),
                        type_label: l.into(),
                        confidence: rng.random_range(0.1..1.0),
                    });
                }
            }
        }
        let types = TypeStore::from_records(records, features.vocab_size()).unwrap();
        let mut emb = EmbeddingStore::new(4);
        for t in &terms {
            let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            emb.insert(t.clone(), &v).unwrap();
        }
        World {
            sentences,
            features,
            types,
            emb,
            terms,
        }
    }

    fn model(&self) -> SimilarityModel<'_> {
        SimilarityModel::new(&self.features, &self.types, &self.emb)
    }
}

/// Two seed parents with seed children first, then expanded nodes, with
/// some terms placed twice.
fn random_tree(terms: &[TermId], rng: &mut ChaCha8Rng, duplicates: usize) -> Taxonomy {
    let mut tax = Taxonomy::new();
    let root = tax.root();
    let mut parents = Vec::new();
    for t in &terms[..2] {
        parents.push(tax.add_child(root, t.clone(), Origin::Seed, 0, None).unwrap());
    }
    let mut nodes = parents.clone();
    for (i, t) in terms[2..6].iter().enumerate() {
        nodes.push(tax.add_child(parents[i % 2], t.clone(), Origin::Seed, 0, None).unwrap());
    }
    for t in &terms[6..] {
        let p = nodes[rng.random_range(0..nodes.len())];
        if let Ok(n) = tax.add_child(p, t.clone(), Origin::Width, 1, Some(0.5)) {
            nodes.push(n);
        }
    }
    for _ in 0..duplicates {
        let t = terms[rng.random_range(0..terms.len())].clone();
        let p = nodes[rng.random_range(0..nodes.len())];
        if let Ok(n) = tax.add_child(p, t, Origin::Width, 2, Some(0.5)) {
            nodes.push(n);
        }
    }
    tax
}

fn random_matrices(rng: &mut ChaCha8Rng, n: usize, p: usize, mu2: f64) -> AssignmentMatrices {
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rng.random_range(0.0..2.0);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    let yc = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
    let mut ys = DMatrix::zeros(n, p);
    for i in 0..n {
        ys[(i, rng.random_range(0..p))] = 1.0;
    }
    AssignmentMatrices {
        parents: (0..p).map(|j| TermId::from(format!("P{j}"))).collect(),
        children: (0..n).map(|i| TermId::from(format!("C{i}"))).collect(),
        w,
        yc,
        ys,
        mu1: 0.1,
        mu2,
    }
}

fn sorted_counts(c: &FeatureCounter) -> Vec<(String, String, u32)> {
    let mut v: Vec<_> = c.sorted_counts().into_iter().map(|(t, p, n)| (t.to_string(), p.to_string(), n)).collect();
    v.sort();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_is_nonnegative_and_monotone(x1 in 0.0f64..1e4, dx in 0.0f64..1e4, extra in 0.0f64..1e5, vocab in 1usize..1_000_000) {
        let x2 = x1 + dx;
        let total = x2 + extra;
        let (a, b) = (association_weight(x1, total, vocab), association_weight(x2, total, vocab));
        prop_assert!(a >= 0.0 && b >= 0.0);
        prop_assert!(a <= b + 1e-12);
        prop_assert_eq!(association_weight(0.0, total, vocab), 0.0);
    }

    #[test]
    fn parallel_counting_matches_sequential(seed in any::<u64>(), chunk in 1usize..64) {
        let w = World::new(seed);
        let mut seq = FeatureCounter::new(false);
        for s in &w.sentences {
            seq.add_sentence(s);
        }
        let par = count_parallel(&w.sentences, false, chunk);
        prop_assert_eq!(sorted_counts(&seq), sorted_counts(&par));
    }

    #[test]
    fn store_totals_are_column_sums(seed in any::<u64>()) {
        let w = World::new(seed);
        let mut sums = vec![0u64; w.features.num_patterns()];
        for (_, p, x) in w.features.cells() {
            sums[p.0 as usize] += x as u64;
        }
        for (p, s) in sums.iter().enumerate() {
            prop_assert_eq!(w.features.total(taxogrow::corpus::PatternId(p as u32)), *s);
        }
    }

    #[test]
    fn sibling_similarities_are_symmetric_and_bounded(seed in any::<u64>(), i in 0usize..24, j in 0usize..24, k in 1usize..60) {
        let w = World::new(seed);
        let model = w.model();
        let (a, b) = (&w.terms[i % w.terms.len()], &w.terms[j % w.terms.len()]);
        let sk = select_quality_features(&w.features, &w.terms[..4], k);
        let s_ab = model.sib_sim_sk(a, b, &sk);
        prop_assert!((0.0..=1.0).contains(&s_ab));
        prop_assert!((s_ab - model.sib_sim_sk(b, a, &sk)).abs() < 1e-12);
        let full = model.sib_sim(a, b, &sk);
        prop_assert!((0.0..=2.0 + 1e-12).contains(&full));
        prop_assert!((full - model.sib_sim(b, a, &sk)).abs() < 1e-12);
    }

    #[test]
    fn type_similarity_is_symmetric_and_bounded(seed in any::<u64>(), i in 0usize..24, j in 0usize..24) {
        let w = World::new(seed);
        let (a, b) = (&w.terms[i % w.terms.len()], &w.terms[j % w.terms.len()]);
        let s = w.types.type_similarity(a, b);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
        prop_assert!((s - w.types.type_similarity(b, a)).abs() < 1e-12);
    }

    #[test]
    fn cosine_is_symmetric_bounded_and_scale_invariant(
        u in prop::collection::vec(-10.0f64..10.0, 6),
        v in prop::collection::vec(-10.0f64..10.0, 6),
        scale in 0.01f64..100.0,
    ) {
        prop_assume!(u.iter().any(|x| x.abs() > 1e-3) && v.iter().any(|x| x.abs() > 1e-3));
        let c = cosine(&u, &v).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&c));
        prop_assert!((c - cosine(&v, &u).unwrap()).abs() < 1e-12);
        let scaled: Vec<f64> = u.iter().map(|x| x * scale).collect();
        prop_assert!((c - cosine(&scaled, &v).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn parenthood_similarity_ignores_translation(seed in any::<u64>(), shift in prop::collection::vec(-5.0f64..5.0, 4)) {
        let w = World::new(seed);
        let mut moved = EmbeddingStore::new(4);
        for t in &w.terms {
            let v: Vec<f64> = w.emb.get(t).unwrap().iter().zip(&shift).map(|(a, b)| a + b).collect();
            moved.insert(t.clone(), &v).unwrap();
        }
        let shifted = SimilarityModel::new(&w.features, &w.types, &moved);
        let t = &w.terms;
        let refs = vec![(t[0].clone(), t[1].clone()), (t[2].clone(), t[3].clone())];
        let a = w.model().par_sim(&t[4], &t[5], &refs);
        let b = shifted.par_sim(&t[4], &t[5], &refs);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-9),
            (a, b) => prop_assert_eq!(a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn assignment_scores_ignore_similarity_scale(seed in any::<u64>(), n in 2usize..8, p in 2usize..5, scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrices(&mut rng, n, p, 0.01);
        let mut scaled = m.clone();
        scaled.w *= scale;
        let (f, g) = (global_opt::solve(&m), global_opt::solve(&scaled));
        prop_assert!((&f - &g).amax() < 1e-8);
        prop_assert!((&f - global_opt::solve_iterative(&m)).amax() < 1e-6);
    }

    #[test]
    fn heavy_assignment_prior_keeps_current_parents(seed in any::<u64>(), n in 2usize..8, p in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_matrices(&mut rng, n, p, 1e6);
        let f = global_opt::solve(&m);
        let barred = vec![false; p];
        for i in 0..n {
            let current = (0..p).find(|&j| m.ys[(i, j)] == 1.0).unwrap();
            prop_assert_eq!(global_opt::best_parent(&f, i, current, &m.parents, &barred), current);
        }
    }

    #[test]
    fn reassignment_keeps_terms_and_seed_edges(seed in any::<u64>()) {
        let w = World::new(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut tax = random_tree(&w.terms, &mut rng, 0);
        let before = tax.clone();
        let seed_edges: HashSet<(String, String)> = before.seed_only().structure().into_iter().collect();
        let cfg = OptimizeConfig { top_features: 40, ..Default::default() };
        global_opt::optimize(&mut tax, &w.model(), &cfg);
        prop_assert!(tax.check_invariants().is_ok());
        prop_assert_eq!(tax.terms(), before.terms());
        let after: HashSet<(String, String)> = tax.structure().into_iter().collect();
        prop_assert!(seed_edges.is_subset(&after));
    }

    #[test]
    fn random_edits_preserve_invariants_and_round_trip(seed in any::<u64>(), ops in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tax = Taxonomy::new();
        let mut next = 0;
        for _ in 0..ops {
            let live = tax.bfs();
            let pick = live[rng.random_range(0..live.len())];
            match rng.random_range(0..4) {
                0 | 1 => {
                    if tax.terms().len() < 30 {
                        let _ = tax.add_child(pick, format!("t{next}").into(), Origin::Width, 1, Some(0.5));
                        next += 1;
                    }
                }
                2 if pick != tax.root() => tax.remove_subtree(pick),
                _ => {
                    let target = live[rng.random_range(0..live.len())];
                    if pick != tax.root() && target != pick && !tax.is_ancestor(pick, target) {
                        let _ = tax.move_subtree(pick, target);
                    }
                }
            }
            prop_assert!(tax.check_invariants().is_ok());
        }
        let back = Taxonomy::from_json_str(&tax.to_json_string()).unwrap();
        prop_assert_eq!(back.structure(), tax.structure());
        prop_assert_eq!(back.to_json_string(), tax.to_json_string());
    }

    #[test]
    fn conflict_resolution_leaves_one_position_per_term(seed in any::<u64>(), dups in 1usize..8) {
        let w = World::new(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd0b);
        let mut tax = random_tree(&w.terms, &mut rng, dups);
        let seeds: Vec<NodeId> = tax.bfs().into_iter().filter(|&n| tax.node(n).origin == Origin::Seed).collect();
        resolve_conflicts(&mut tax, &w.model(), 40);
        prop_assert!(tax.conflicts().is_empty());
        prop_assert!(tax.check_invariants().is_ok());
        for t in tax.terms() {
            prop_assert!(tax.find(t.as_str()).len() <= 1);
        }
        for n in seeds {
            prop_assert!(tax.is_alive(n));
        }
    }

    #[test]
    fn edges_are_ancestor_pairs_and_scores_mirror(seed in any::<u64>()) {
        let w = World::new(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_tree(&w.terms, &mut rng, 0);
        let b = random_tree(&w.terms, &mut rng, 0);
        prop_assert!(PairSet::edges(&a).is_subset(&PairSet::ancestors(&a)));
        let (ab, ba) = (evaluate(&a, &b), evaluate(&b, &a));
        prop_assert!((ab.ancestor.precision - ba.ancestor.recall).abs() < 1e-12);
        prop_assert!((ab.edge.f1 - ba.edge.f1).abs() < 1e-12);
        prop_assert_eq!(evaluate(&a, &a).ancestor.f1, 1.0);
    }

    #[test]
    fn width_expansion_is_disjoint_deterministic_and_gated(seed in any::<u64>(), rng_seed in any::<u64>()) {
        let w = World::new(seed);
        let cfg = EnsembleConfig { top_features: 60, num_subsets: 6, subset_size: 30, mrr_rank_threshold: 4, ..Default::default() };
        let ex = Expander::new(w.model(), &cfg);
        let seeds = w.terms[..3].to_vec();
        let exclude: HashSet<TermId> = w.terms[3..6].iter().cloned().collect();
        let a = ex.width_expand(&seeds, &exclude, &mut ChaCha8Rng::seed_from_u64(rng_seed));
        let b = ex.width_expand(&seeds, &exclude, &mut ChaCha8Rng::seed_from_u64(rng_seed));
        prop_assert_eq!(&a, &b);
        for adm in &a {
            prop_assert!(!seeds.contains(&adm.term) && !exclude.contains(&adm.term));
            prop_assert!(adm.mrr > 0.25 && adm.mrr <= 1.0 + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn expansion_never_drops_seed_nodes(seed in any::<u64>(), rng_seed in 0u64..100) {
        let w = World::new(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seed_tree = random_tree(&w.terms[..8], &mut rng, 0).seed_only();
        let seed_edges = seed_tree.structure();
        let cfg = EnsembleConfig { top_features: 60, num_subsets: 6, subset_size: 30, mrr_rank_threshold: 5, rng_seed, max_admitted: Some(4) };
        let run = TreeExpander::new(w.model(), &cfg).expand(&seed_tree, 2);
        for snap in &run.snapshots {
            prop_assert!(snap.check_invariants().is_ok());
            let edges: HashSet<(String, String)> = snap.structure().into_iter().collect();
            for e in &seed_edges {
                prop_assert!(edges.contains(e), "seed edge {:?} lost", e);
            }
        }
    }
}
