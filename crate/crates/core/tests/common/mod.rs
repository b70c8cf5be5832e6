//! Planted scenarios shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taxogrow::corpus::{build_feature_store, EntitySpan, FeatureStore, SentenceRecord};
use taxogrow::embeddings::EmbeddingStore;
use taxogrow::pipeline::RunConfig;
use taxogrow::taxonomy::Taxonomy;
use taxogrow::typestore::TypeStore;
use taxogrow::TermId;

/// A sentence with a single-token entity at `at`.
pub fn sentence(tokens: &[&str], at: usize) -> SentenceRecord {
    let pos = (0..tokens.len()).map(|i| if i == at { "NNP" } else { "XX" }.to_string()).collect();
    SentenceRecord {
        tokens: tokens.iter().map(|s| s.to_string()).collect(),
        pos,
        entities: vec![EntitySpan {
            start: at,
            end: at + 1,
            term: TermId::from(tokens[at]),
        }],
    }
}

pub fn unit(dim: usize, axis: usize, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[axis] = scale;
    v
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn mean(vs: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; vs[0].len()];
    for v in vs {
        for (a, b) in m.iter_mut().zip(v) {
            *a += b / vs.len() as f64;
        }
    }
    m
}

/// Corpus, embeddings and trees for one planted instance.
pub struct Scenario {
    pub sentences: Vec<SentenceRecord>,
    pub embeddings: Vec<(TermId, Vec<f64>)>,
    pub seed: Taxonomy,
    pub gold: Taxonomy,
}

impl Scenario {
    pub fn features(&self) -> FeatureStore {
        build_feature_store(self.sentences.iter(), false)
    }

    pub fn embedding_store(&self) -> EmbeddingStore {
        let mut e = EmbeddingStore::new(self.embeddings[0].1.len());
        for (t, v) in &self.embeddings {
            e.insert(t.clone(), v).unwrap();
        }
        e
    }

    /// Writes corpus, embeddings, seed and gold files into `dir` and
    /// returns a config pointing at them with outputs in `dir/out`.
    pub fn write_inputs(&self, dir: &Path) -> RunConfig {
        fs::create_dir_all(dir).unwrap();
        let corpus: PathBuf = dir.join("corpus.jsonl");
        let mut text = String::new();
        for s in &self.sentences {
            text.push_str(&serde_json::to_string(s).unwrap());
            text.push('\n');
        }
        fs::write(&corpus, text).unwrap();
        let emb = dir.join("embeddings.txt");
        fs::write(&emb, self.embedding_store().to_text()).unwrap();
        let seed = dir.join("seed.json");
        fs::write(&seed, self.seed.to_json_string()).unwrap();
        let gold = dir.join("gold.json");
        fs::write(&gold, self.gold.to_json_string()).unwrap();
        RunConfig {
            corpus: Some(corpus),
            embeddings: Some(emb),
            seed_taxonomy: Some(seed),
            gold: Some(gold),
            output_dir: dir.join("out"),
            ..Default::default()
        }
    }
}

pub fn empty_types(f: &FeatureStore) -> TypeStore {
    TypeStore::empty(f.vocab_size())
}

fn distractors(sentences: &mut Vec<SentenceRecord>, embeddings: &mut Vec<(TermId, Vec<f64>)>, n: usize, dim: usize, axes: (usize, usize)) {
    for i in 0..n {
        let name = format!("item{i:02}");
        let s = if i % 2 == 0 {
            sentence(&["we", "saw", "a", &name, "near", "the", "river"], 3)
        } else {
            sentence(&["the", "old", &name, "was", "sold", "today"], 2)
        };
        sentences.push(s);
        let v = add(&unit(dim, axes.0 + i % 4, 10.0), &unit(dim, axes1(axes, i), 0.5));
        embeddings.push((TermId::from(name), v));
    }
}

fn axes1(axes: (usize, usize), i: usize) -> usize {
    axes.1 + i % 3
}

pub const COUNTRIES: [&str; 3] = ["Ardenia", "Borovia", "Calvia"];
pub const STATES: [[&str; 4]; 3] = [
    ["Lumen", "Orlin", "Tessa", "Varos"],
    ["Dravo", "Kesk", "Mirna", "Polj"],
    ["Quint", "Sorra", "Velm", "Yarrow"],
];

fn country_sentences(out: &mut Vec<SentenceRecord>, country: &str) {
    out.push(sentence(&["the", "country", "of", country, "signed", "treaties"], 3));
    out.push(sentence(&["leaders", "from", country, "attended", "summits", "."], 2));
}

fn state_sentences(out: &mut Vec<SentenceRecord>, state: &str, country_token: &str) {
    out.push(sentence(&["the", "province", "of", state, country_token, "is", "large"], 3));
    out.push(sentence(&["tourists", "in", country_token, state, "enjoy", "food", "."], 3));
}

/// Three countries with four states each. Skip-patterns of a state always
/// contain its country's name; embeddings put each country on its own axis
/// and each parent at its children's centroid plus a fixed offset.
pub fn planted_countries() -> Scenario {
    const DIM: usize = 16;
    const STATE_AXIS: usize = 3;
    const OFFSET_AXIS: usize = 4;
    let offset = unit(DIM, OFFSET_AXIS, 5.0);
    let mut sentences = Vec::new();
    let mut embeddings = Vec::new();
    for (k, country) in COUNTRIES.iter().enumerate() {
        country_sentences(&mut sentences, country);
        let token = country.to_lowercase();
        let mut vs = Vec::new();
        for (j, state) in STATES[k].iter().enumerate() {
            state_sentences(&mut sentences, state, &token);
            let v = add(
                &add(&unit(DIM, k, 10.0), &unit(DIM, STATE_AXIS, 1.0)),
                &unit(DIM, 12 + j, 0.3),
            );
            embeddings.push((TermId::from(*state), v.clone()));
            vs.push(v);
        }
        embeddings.push((TermId::from(*country), add(&mean(&vs), &offset)));
    }
    distractors(&mut sentences, &mut embeddings, 30, DIM, (5, 9));

    let seed = Taxonomy::from_json_str(&format!(
        r#"[{{"term":"{}","children":[{{"term":"{}"}},{{"term":"{}"}}]}},
            {{"term":"{}","children":[{{"term":"{}"}},{{"term":"{}"}}]}}]"#,
        COUNTRIES[0], STATES[0][0], STATES[0][1], COUNTRIES[1], STATES[1][0], STATES[1][1]
    ))
    .unwrap();
    let gold_json: Vec<String> = COUNTRIES
        .iter()
        .zip(STATES.iter())
        .map(|(c, ss)| {
            let kids: Vec<String> = ss.iter().map(|s| format!(r#"{{"term":"{s}"}}"#)).collect();
            format!(r#"{{"term":"{c}","children":[{}]}}"#, kids.join(","))
        })
        .collect();
    let gold = Taxonomy::from_json_str(&format!("[{}]", gold_json.join(","))).unwrap();
    Scenario {
        sentences,
        embeddings,
        seed,
        gold,
    }
}

/// Two countries where one state ("Texas") carries the skip-patterns of
/// both. Its embedding sits closer to the US states; "Coahuila" occurs far
/// more often than the other Mexican states, which lowers its skip-pattern
/// similarity to them.
pub fn texas() -> Scenario {
    const DIM: usize = 16;
    const STATE_AXIS: usize = 2;
    const OFFSET_AXIS: usize = 3;
    const COAHUILA_AXIS: usize = 4;
    let offset = unit(DIM, OFFSET_AXIS, 5.0);
    let state = |k: usize, j: usize| add(&add(&unit(DIM, k, 10.0), &unit(DIM, STATE_AXIS, 1.0)), &unit(DIM, 9 + j, 0.3));
    let mut sentences = Vec::new();
    let mut embeddings = Vec::new();
    country_sentences(&mut sentences, "US");
    country_sentences(&mut sentences, "Mexico");

    let us = ["California", "Illinois", "Ohio"];
    let mx = ["Sonora", "Chihuahua"];
    let mut us_vs = Vec::new();
    for (j, s) in us.iter().enumerate() {
        state_sentences(&mut sentences, s, "usa");
        let v = state(0, j);
        embeddings.push((TermId::from(*s), v.clone()));
        us_vs.push(v);
    }
    let mut mx_vs = Vec::new();
    for (j, s) in mx.iter().enumerate() {
        state_sentences(&mut sentences, s, "mexico");
        let v = state(1, j);
        embeddings.push((TermId::from(*s), v.clone()));
        mx_vs.push(v);
    }
    for _ in 0..20 {
        state_sentences(&mut sentences, "Coahuila", "mexico");
    }
    let coahuila = add(&state(1, 2), &unit(DIM, COAHUILA_AXIS, 7.0));
    embeddings.push(("Coahuila".into(), coahuila.clone()));
    mx_vs.push(coahuila);

    state_sentences(&mut sentences, "Texas", "usa");
    state_sentences(&mut sentences, "Texas", "mexico");
    let texas = add(&add(&unit(DIM, 0, 7.0), &unit(DIM, 1, 5.0)), &unit(DIM, STATE_AXIS, 1.0));
    embeddings.push(("Texas".into(), texas));

    embeddings.push(("US".into(), add(&mean(&us_vs), &offset)));
    embeddings.push(("Mexico".into(), add(&mean(&mx_vs), &offset)));
    distractors(&mut sentences, &mut embeddings, 40, DIM, (5, 13));

    let seed = Taxonomy::from_json_str(
        r#"[{"term":"US","children":[{"term":"California"},{"term":"Illinois"}]},
            {"term":"Mexico","children":[{"term":"Sonora"},{"term":"Chihuahua"}]}]"#,
    )
    .unwrap();
    let gold = Taxonomy::from_json_str(
        r#"[{"term":"US","children":[{"term":"California"},{"term":"Illinois"},{"term":"Ohio"},{"term":"Texas"}]},
            {"term":"Mexico","children":[{"term":"Sonora"},{"term":"Chihuahua"},{"term":"Coahuila"}]}]"#,
    )
    .unwrap();
    Scenario {
        sentences,
        embeddings,
        seed,
        gold,
    }
}

pub const REGIONS: [(&str, [&str; 6]); 3] = [
    ("Italy", ["Lazio", "Sicily", "Tuscany", "Umbria", "Veneto", "Molise"]),
    ("Spain", ["Catalonia", "Galicia", "Aragon", "Murcia", "Navarre", "Asturias"]),
    ("France", ["Brittany", "Normandy", "Alsace", "Corsica", "Burgundy", "Provence"]),
];

/// Three countries with six regions each. The returned tree attaches
/// "Molise" to Spain instead of Italy; in every country the first two
/// regions are seeds and the rest were added by expansion. Each country's
/// regions live on their own axis. `noise` scales a uniform perturbation of
/// every embedding coordinate.
pub fn molise(noise: f64, trial: u64) -> (Scenario, Taxonomy) {
    const DIM: usize = 14;
    const OFFSET_AXIS: usize = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(trial);
    let mut jitter = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| x + noise * rng.random_range(-1.0..1.0)).collect() };
    let offset = unit(DIM, OFFSET_AXIS, 5.0);
    let mut sentences = Vec::new();
    let mut embeddings = Vec::new();
    for (k, (country, regions)) in REGIONS.iter().enumerate() {
        country_sentences(&mut sentences, country);
        let token = country.to_lowercase();
        let mut vs = Vec::new();
        for (j, r) in regions.iter().enumerate() {
            state_sentences(&mut sentences, r, &token);
            let v = add(&unit(DIM, k, 10.0), &unit(DIM, 5 + j, 0.3));
            vs.push(v.clone());
            embeddings.push((TermId::from(*r), jitter(v)));
        }
        embeddings.push((TermId::from(*country), jitter(add(&mean(&vs), &offset))));
    }
    distractors(&mut sentences, &mut embeddings, 20, DIM, (5, 11));

    let tree_json = |misplaced: bool| {
        let parts: Vec<String> = REGIONS
            .iter()
            .map(|(c, rs)| {
                let mut kids: Vec<String> = Vec::new();
                for (j, r) in rs.iter().enumerate() {
                    if misplaced && *r == "Molise" {
                        continue;
                    }
                    if j < 2 {
                        kids.push(format!(r#"{{"term":"{r}","origin":"seed"}}"#));
                    } else {
                        kids.push(format!(r#"{{"term":"{r}","origin":"width","iteration_added":1}}"#));
                    }
                }
                if misplaced && *c == "Spain" {
                    kids.push(r#"{"term":"Molise","origin":"width","iteration_added":1}"#.to_string());
                }
                format!(r#"{{"term":"{c}","origin":"seed","children":[{}]}}"#, kids.join(","))
            })
            .collect();
        Taxonomy::from_json_str(&format!("[{}]", parts.join(","))).unwrap()
    };
    let gold = tree_json(false);
    let broken = tree_json(true);
    let seed = gold.seed_only();
    (
        Scenario {
            sentences,
            embeddings,
            seed,
            gold,
        },
        broken,
    )
}

/// Random corpus over a small vocabulary for formula oracles.
pub fn random_corpus(rng: &mut ChaCha8Rng, terms: usize, words: usize, sentences: usize) -> Vec<SentenceRecord> {
    let word = |i: usize| format!("w{i}");
    let term = |i: usize| format!("T{i}");
    (0..sentences)
        .map(|_| {
            let len = rng.random_range(2..9);
            let at = rng.random_range(0..len);
            let toks: Vec<String> = (0..len)
                .map(|i| {
                    if i == at {
                        term(rng.random_range(0..terms))
                    } else {
                        word(rng.random_range(0..words))
                    }
                })
                .collect();
            let refs: Vec<&str> = toks.iter().map(String::as_str).collect();
            sentence(&refs, at)
        })
        .collect()
}
