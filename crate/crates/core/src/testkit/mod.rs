//! Planted-topic corpora with known labels and a known evolution graph, plus
//! clustering agreement metrics.
//!
//! Every topic is a weighted mix of "atoms", each atom owning a block of
//! exclusive synthetic words. A document of length `L` draws each token from its
//! topic's atoms with probability `separation` and from a shared pool
//! otherwise. Transitions between epochs rewire atoms:
//!
//! * survive: the same mix;
//! * merge: the average of the source mixes;
//! * split: one new facet atom per target; the target mix is 0.3 source + 0.7
//!   facet, and source documents are dealt facets in the split proportions
//!   (each such document mixes 0.5 source with 0.5 of its facet);
//! * born: a fresh atom.
//!
//! With `overlap > 0` every document hands that share of its topic mix to the
//! other topics of its epoch, in equal parts.

mod ari;
mod words;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ari::adjusted_rand_index;
pub use words::synthetic_word;

use crate::dynamics::{Strength, Thresholds};
use crate::ingest::Document;
use crate::{Error, Result};

const SPLIT_SOURCE_SHARE: f64 = 0.5;
const SPLIT_TARGET_SHARE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSpec {
    pub name: String,
    pub docs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSpec {
    pub label: String,
    pub topics: Vec<TopicSpec>,
}

/// What happens to a topic between one epoch and the next. Topics of the
/// next epoch that no transition points at are born there; topics without a
/// transition die.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transition {
    Survive {
        #[serde(default)]
        into: Option<String>,
    },
    Split {
        into: Vec<String>,
        proportions: Vec<f64>,
    },
    Merge {
        into: String,
    },
    Die,
}

fn default_terms_per_atom() -> usize {
    24
}

fn default_shared_terms() -> usize {
    80
}

fn default_separation() -> f64 {
    0.6
}

fn default_doc_length() -> [usize; 2] {
    [30, 120]
}

/// A generator scenario; see the module docs for the sampling model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedScenario {
    #[serde(default = "default_terms_per_atom")]
    pub terms_per_atom: usize,
    #[serde(default = "default_shared_terms")]
    pub shared_terms: usize,
    /// Share of each document's tokens drawn from its topic's own words.
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Share of each document's topic mix spread over the other topics of the epoch.
    #[serde(default)]
    pub overlap: f64,
    /// Inclusive token-count range.
    #[serde(default = "default_doc_length")]
    pub doc_length: [usize; 2],
    pub epochs: Vec<EpochSpec>,
    /// `transitions[t]` maps topic names of epoch `t` to their fate in `t + 1`.
    #[serde(default)]
    pub transitions: Vec<BTreeMap<String, Transition>>,
}

impl PlantedScenario {
    /// One epoch, `k` topics of `docs_per_topic` documents over about `p` terms, a
    /// fraction `separation` of which is topic-exclusive.
    pub fn static_topics(k: usize, docs_per_topic: usize, p: usize, separation: f64) -> Self {
        let terms_per_atom = ((separation * p as f64) / k as f64).round().max(1.0) as usize;
        PlantedScenario {
            terms_per_atom,
            shared_terms: p.saturating_sub(k * terms_per_atom).max(1),
            separation,
            overlap: 0.0,
            doc_length: default_doc_length(),
            epochs: vec![EpochSpec {
                label: "all".into(),
                topics: (0..k)
                    .map(|i| TopicSpec {
                        name: format!("T{i}"),
                        docs: docs_per_topic,
                    })
                    .collect(),
            }],
            transitions: Vec::new(),
        }
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let s: PlantedScenario = serde_json::from_str(raw).map_err(|e| Error::Parse(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("scenario: {m}")));
        if self.epochs.is_empty() {
            return bad("no epochs".into());
        }
        if !(self.separation > 0.0 && self.separation <= 1.0) {
            return bad(format!("separation {} outside (0, 1]", self.separation));
        }
        if self.terms_per_atom == 0 || (self.separation < 1.0 && self.shared_terms == 0) {
            return bad("word pools must be nonempty".into());
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return bad(format!("overlap {} outside [0, 1)", self.overlap));
        }
        let [lo, hi] = self.doc_length;
        if lo == 0 || lo > hi {
            return bad(format!("bad document length range [{lo}, {hi}]"));
        }
        for e in &self.epochs {
            let mut names = BTreeSet::new();
            if e.topics.is_empty() {
                return bad(format!("epoch {} has no topics", e.label));
            }
            for t in &e.topics {
                if t.docs == 0 {
                    return bad(format!("topic {} in epoch {} has no documents", t.name, e.label));
                }
                if !names.insert(t.name.as_str()) {
                    return bad(format!("duplicate topic {} in epoch {}", t.name, e.label));
                }
            }
        }
        if self.transitions.len() != self.epochs.len() - 1 {
            return bad(format!(
                "{} epochs need {} transition maps, found {}",
                self.epochs.len(),
                self.epochs.len() - 1,
                self.transitions.len()
            ));
        }
        for (t, map) in self.transitions.iter().enumerate() {
            let here = &self.epochs[t];
            let next = &self.epochs[t + 1];
            let mut kinds: BTreeMap<&str, (&str, usize)> = BTreeMap::new();
            for (src, tr) in map {
                if !here.topics.iter().any(|x| &x.name == src) {
                    return bad(format!("transition from unknown topic {src} in epoch {}", here.label));
                }
                let targets: Vec<&str> = match tr {
                    Transition::Survive { into } => vec![into.as_deref().unwrap_or(src)],
                    Transition::Merge { into } => vec![into.as_str()],
                    Transition::Split { into, proportions } => {
                        if into.len() != proportions.len() || into.is_empty() {
                            return bad(format!("split of {src}: targets and proportions differ in length"));
                        }
                        let sum: f64 = proportions.iter().sum();
                        if (sum - 1.0).abs() > 1e-9 || proportions.iter().any(|p| *p < 0.0) {
                            return bad(format!("split of {src}: proportions sum to {sum}"));
                        }
                        into.iter().map(String::as_str).collect()
                    }
                    Transition::Die => vec![],
                };
                let kind = match tr {
                    Transition::Survive { .. } => "survive",
                    Transition::Merge { .. } => "merge",
                    Transition::Split { .. } => "split",
                    Transition::Die => "die",
                };
                for target in targets {
                    if !next.topics.iter().any(|x| x.name == target) {
                        return bad(format!("unknown target {target} in epoch {}", next.label));
                    }
                    let e = kinds.entry(target).or_insert((kind, 0));
                    e.1 += 1;
                    if e.0 != kind || (kind != "merge" && e.1 > 1) {
                        return bad(format!("target {target} is reached by conflicting transitions"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Atom weights of one topic or document.
type Mix = Vec<(usize, f64)>;

fn blend(parts: &[(&Mix, f64)]) -> Mix {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for (mix, w) in parts {
        for &(a, v) in mix.iter() {
            *acc.entry(a).or_default() += w * v;
        }
    }
    acc.into_iter().collect()
}

/// Split counts in proportion, largest remainder first, ties to the earlier target.
fn allocate(total: usize, proportions: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = proportions.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (raw[a] - raw[a].floor(), raw[b] - raw[b].floor());
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for i in order {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Planted edge between topic `from` of epoch `epoch` and topic `to` of the next.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthEdge {
    pub epoch: usize,
    pub from: usize,
    pub to: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedEpoch {
    pub label: String,
    pub topics: Vec<String>,
    pub documents: Vec<Document>,
    /// Index into `topics` per document.
    pub labels: Vec<usize>,
    /// Token count per document.
    pub lengths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub epochs: Vec<GeneratedEpoch>,
    pub truth: Vec<TruthEdge>,
}

impl Generated {
    /// All documents with contiguous ids, epoch by epoch.
    pub fn documents(&self) -> Vec<Document> {
        self.epochs.iter().flat_map(|e| e.documents.iter().cloned()).collect()
    }

    /// Planted edges that clear the dashed threshold, with their strength.
    pub fn truth_edges(&self, thresholds: Thresholds) -> Vec<(usize, usize, usize, Strength)> {
        let mut out: Vec<_> = self
            .truth
            .iter()
            .filter_map(|e| thresholds.classify(e.fraction).map(|s| (e.epoch, e.from, e.to, s)))
            .collect();
        out.sort_by_key(|&(t, u, v, _)| (t, u, v));
        out
    }
}

struct Plan {
    /// Per epoch, per topic: the document mixes in generation order.
    docs: Vec<Vec<Vec<Mix>>>,
    truth: Vec<TruthEdge>,
    n_atoms: usize,
}

fn plan(s: &PlantedScenario) -> Plan {
    let mut n_atoms = 0;
    let mut fresh = || {
        n_atoms += 1;
        vec![(n_atoms - 1, 1.0)]
    };
    let mut mixes: Vec<Vec<Mix>> = vec![s.epochs[0].topics.iter().map(|_| fresh()).collect()];
    // per epoch, per topic: facet atoms and document counts for a split
    let mut facets: Vec<Vec<Option<Vec<(Mix, usize)>>>> = Vec::new();
    let mut truth = Vec::new();
    for (t, map) in s.transitions.iter().enumerate() {
        let here = &s.epochs[t];
        let next = &s.epochs[t + 1];
        let index = |name: &str| next.topics.iter().position(|x| x.name == name).expect("validated");
        let mut next_mix: Vec<Option<Mix>> = vec![None; next.topics.len()];
        let mut merges: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut facet_here: Vec<Option<Vec<(Mix, usize)>>> = vec![None; here.topics.len()];
        for (u, topic) in here.topics.iter().enumerate() {
            match map.get(&topic.name) {
                Some(Transition::Survive { into }) => {
                    let v = index(into.as_deref().unwrap_or(&topic.name));
                    next_mix[v] = Some(mixes[t][u].clone());
                    truth.push(TruthEdge { epoch: t, from: u, to: v, fraction: 1.0 });
                }
                Some(Transition::Merge { into }) => merges.entry(index(into)).or_default().push(u),
                Some(Transition::Split { into, proportions }) => {
                    let counts = allocate(topic.docs, proportions);
                    let mut f = Vec::new();
                    for (name, &c) in into.iter().zip(&counts) {
                        let v = index(name);
                        let facet = fresh();
                        next_mix[v] = Some(blend(&[(&mixes[t][u], SPLIT_TARGET_SHARE), (&facet, 1.0 - SPLIT_TARGET_SHARE)]));
                        truth.push(TruthEdge {
                            epoch: t,
                            from: u,
                            to: v,
                            fraction: c as f64 / topic.docs as f64,
                        });
                        f.push((facet, c));
                    }
                    facet_here[u] = Some(f);
                }
                Some(Transition::Die) | None => {}
            }
        }
        for (v, sources) in merges {
            let w = 1.0 / sources.len() as f64;
            let parts: Vec<(&Mix, f64)> = sources.iter().map(|&u| (&mixes[t][u], w)).collect();
            next_mix[v] = Some(blend(&parts));
            for u in sources {
                truth.push(TruthEdge { epoch: t, from: u, to: v, fraction: 1.0 });
            }
        }
        let next_mix = next_mix.into_iter().map(|m| m.unwrap_or_else(&mut fresh)).collect();
        mixes.push(next_mix);
        facets.push(facet_here);
    }
    facets.push(vec![None; s.epochs.last().expect("validated").topics.len()]);

    let docs = s
        .epochs
        .iter()
        .enumerate()
        .map(|(t, e)| {
            e.topics
                .iter()
                .enumerate()
                .map(|(u, topic)| {
                    let own: Vec<Mix> = match &facets[t][u] {
                        None => vec![mixes[t][u].clone(); topic.docs],
                        Some(f) => f
                            .iter()
                            .flat_map(|(facet, c)| {
                                let m = blend(&[(&mixes[t][u], SPLIT_SOURCE_SHARE), (facet, 1.0 - SPLIT_SOURCE_SHARE)]);
                                std::iter::repeat_n(m, *c)
                            })
                            .collect(),
                    };
                    let others: Vec<&Mix> = (0..e.topics.len()).filter(|&v| v != u).map(|v| &mixes[t][v]).collect();
                    if s.overlap == 0.0 || others.is_empty() {
                        return own;
                    }
                    let w = s.overlap / others.len() as f64;
                    own.iter()
                        .map(|m| {
                            let mut parts = vec![(m, 1.0 - s.overlap)];
                            parts.extend(others.iter().map(|&o| (o, w)));
                            blend(&parts)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Plan { docs, truth, n_atoms }
}

fn sample_doc(s: &PlantedScenario, mix: &Mix, rng: &mut ChaCha8Rng) -> (String, usize) {
    let len = rng.random_range(s.doc_length[0]..=s.doc_length[1]);
    let total: f64 = mix.iter().map(|m| m.1).sum();
    let mut words = Vec::with_capacity(len);
    for _ in 0..len {
        let id = if rng.random::<f64>() < s.separation {
            let mut x = rng.random::<f64>() * total;
            let mut atom = mix.last().expect("nonempty mix").0;
            for &(a, w) in mix {
                if x < w {
                    atom = a;
                    break;
                }
                x -= w;
            }
            s.shared_terms + atom * s.terms_per_atom + rng.random_range(0..s.terms_per_atom)
        } else {
            rng.random_range(0..s.shared_terms)
        };
        words.push(synthetic_word(id));
    }
    (words.join(" "), len)
}

/// Sample the scenario. Output is a pure function of `(scenario, seed)`.
pub fn generate(scenario: &PlantedScenario, seed: u64) -> Result<Generated> {
    scenario.validate()?;
    let plan = plan(scenario);
    log::debug!("scenario uses {} atoms", plan.n_atoms);
    let mut next_id = 0;
    let mut epochs = Vec::with_capacity(scenario.epochs.len());
    for (t, spec) in scenario.epochs.iter().enumerate() {
        let jobs: Vec<(usize, &Mix)> = plan.docs[t]
            .iter()
            .enumerate()
            .flat_map(|(u, mixes)| mixes.iter().map(move |m| (u, m)))
            .collect();
        let sampled: Vec<(usize, String, usize)> = jobs
            .par_iter()
            .enumerate()
            .map(|(i, &(u, mix))| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(((t as u64) << 32) | i as u64);
                let (text, len) = sample_doc(scenario, mix, &mut rng);
                (u, text, len)
            })
            .collect();
        let mut order: Vec<usize> = (0..sampled.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((1u64 << 63) | t as u64);
        order.shuffle(&mut rng);
        let mut documents = Vec::with_capacity(order.len());
        let mut labels = Vec::with_capacity(order.len());
        let mut lengths = Vec::with_capacity(order.len());
        for i in order {
            let (u, text, len) = &sampled[i];
            documents.push(Document {
                doc_id: next_id,
                text: text.clone(),
                epoch: Some(spec.label.clone()),
                journal: None,
            });
            next_id += 1;
            labels.push(*u);
            lengths.push(*len);
        }
        epochs.push(GeneratedEpoch {
            label: spec.label.clone(),
            topics: spec.topics.iter().map(|x| x.name.clone()).collect(),
            documents,
            labels,
            lengths,
        });
    }
    Ok(Generated {
        epochs,
        truth: plan.truth,
    })
}
