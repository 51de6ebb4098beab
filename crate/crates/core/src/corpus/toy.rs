//! Synthetic desk-scale corpus: a template grammar for captions, a separate
//! template grammar for exemplar sentences, and feature vectors that encode
//! the latent scene so semantics are recoverable from the "video".
//!
//! Every noun/verb/adjective slot in a template draws from a pool that is
//! disjoint from the pools of the other same-tag slots of that template, so
//! a sentence is always exactly reconstructible from its word multiset plus
//! its template. Word pools are disjoint across tags, which makes POS
//! tagging of generated captions a lookup.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::corpus::sample::{Exemplar, FeatureSource, Sample};
use crate::error::{CoreError, Result};
use crate::syntree::{parse_bracketed, ParseTree};

pub const SUBJECTS: &[&str] = &[
    "dog", "cat", "man", "woman", "bird", "horse", "child", "robot", "chef", "dancer", "monkey",
    "player", "girl", "boy", "artist", "farmer", "singer", "teacher", "clown", "puppy",
];
pub const OBJECTS: &[&str] = &[
    "ball", "car", "book", "guitar", "kite", "drum", "bottle", "apple", "banana", "rope", "crate",
    "hat", "cake", "phone", "broom", "wheel", "stick", "leaf", "coin", "bell",
];
pub const PLACES: &[&str] = &[
    "park", "garden", "kitchen", "street", "beach", "yard", "river", "forest", "market", "bridge",
];
pub const VERBS_TRANS: &[&str] = &[
    "chases", "kicks", "throws", "watches", "holds", "lifts", "pushes", "pulls", "rides",
    "paints", "draws", "catches", "carries", "hits", "hugs", "follows", "finds", "feeds",
    "cleans", "grabs",
];
pub const VERBS_INTRANS: &[&str] = &[
    "runs", "walks", "jumps", "sleeps", "sits", "stands", "spins", "waves", "smiles", "laughs",
];
pub const SIZES: &[&str] = &[
    "big", "small", "tall", "tiny", "huge", "wide", "thin", "heavy", "round", "soft",
];
pub const COLORS: &[&str] = &[
    "red", "blue", "green", "black", "white", "yellow", "purple", "orange", "brown", "pink",
];
pub const DTS_A: &[&str] = &["the", "this", "that", "each", "every"];
pub const DTS_B: &[&str] = &["a", "one", "some", "another", "any"];
pub const INS_LOC: &[&str] = &["near", "under", "over", "behind", "beside", "above"];
pub const INS_MISC: &[&str] = &["with", "without", "toward", "from", "into", "onto"];
pub const PRPS: &[&str] = &["his", "her", "my", "your", "their", "its"];
pub const CDS: &[&str] = &["two", "three", "four", "five", "six", "seven"];
pub const RBS: &[&str] = &["quickly", "slowly", "gently", "quietly", "loudly", "calmly"];
pub const CCS: &[&str] = &["and", "or", "but"];

/// Caption templates. Leaf labels are `TAG:pool` slot markers.
const CAPTION_TEMPLATES: &[&str] = &[
    "(ROOT (S (NP (DT:da) (NN:subj)) (VP (VBZ:verb) (NP (DT:db) (NN:obj)))))",
    "(ROOT (S (NP (DT:da) (JJ:mod) (NN:subj)) (VP (VBZ:verb) (NP (DT:db) (NN:obj)))))",
    "(ROOT (S (NP (DT:da) (NN:subj)) (VP (VBZ:verb) (NP (DT:db) (JJ:mod) (NN:obj)))))",
    "(ROOT (S (NP (NN:subj)) (VP (VBZ:verb) (NP (DT:db) (NN:obj)))))",
    "(ROOT (S (NP (DT:da) (NN:subj)) (VP (VBZ:verb) (PP (IN:inl) (NP (DT:db) (NN:obj))))))",
    "(ROOT (S (NP (DT:da) (JJ:mod) (NN:subj)) (VP (VBZ:verb) (PP (IN:inl) (NP (DT:db) (NN:obj))))))",
];

/// Exemplar templates: longer, structurally varied, 8-11 words.
const EXEMPLAR_TEMPLATES: &[&str] = &[
    "(ROOT (S (NP (DT:da) (JJ:size) (NN:subj)) (VP (VBZ:vt) (NP (DT:db) (JJ:color) (NN:obj)) (PP (IN:inl) (NP (PRP$:prp) (NN:place))))))",
    "(ROOT (S (NP (PRP$:prp) (JJ:size) (NN:subj)) (VP (RB:rb) (VBZ:vt) (NP (CD:cd) (JJ:color) (NN:obj)))))",
    "(ROOT (S (S (NP (DT:da) (NN:subj)) (VP (VBZ:vt) (NP (DT:db) (NN:obj)))) (CC:cc) (S (NP (PRP$:prp) (NN:place)) (VP (RB:rb) (VBZ:vi)))))",
    "(ROOT (S (PP (IN:inl) (NP (DT:da) (JJ:size) (NN:place))) (NP (DT:db) (NN:subj)) (VP (VBZ:vi) (RB:rb))))",
    "(ROOT (S (NP (NP (DT:da) (NN:subj)) (PP (IN:inl) (NP (DT:db) (NN:place)))) (VP (VBZ:vt) (NP (CD:cd) (JJ:color) (NN:obj)))))",
    "(ROOT (S (NP (CD:cd) (JJ:size) (NN:subj)) (VP (VBZ:vt) (NP (DT:db) (NN:obj)) (PP (IN:inm) (NP (PRP$:prp) (JJ:color) (NN:place))))))",
    "(ROOT (S (NP (DT:da) (NN:subj)) (VP (RB:rb) (VBZ:vi) (PP (IN:inl) (NP (DT:db) (JJ:size) (NN:place))) (PP (IN:inm) (NP (PRP$:prp) (NN:obj))))))",
    "(ROOT (S (NP (PRP$:prp) (NN:subj)) (VP (VP (VBZ:vt) (NP (DT:da) (NN:obj))) (CC:cc) (VP (VBZ:vi) (RB:rb)))))",
];

/// A latent scene: the semantics carried by the synthetic features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scene {
    pub subject: usize,
    pub verb: usize,
    pub object: usize,
    pub modifier: usize,
}

impl Scene {
    pub fn subject_word(&self) -> &'static str {
        SUBJECTS[self.subject]
    }
    pub fn verb_word(&self) -> &'static str {
        VERBS_TRANS[self.verb]
    }
    pub fn object_word(&self) -> &'static str {
        OBJECTS[self.object]
    }
    pub fn modifier_word(&self) -> &'static str {
        modifier_pool()[self.modifier]
    }
}

fn modifier_pool() -> Vec<&'static str> {
    SIZES.iter().chain(COLORS.iter()).copied().collect()
}

/// Toy corpus generation knobs.
#[derive(Debug, Clone)]
pub struct ToyConfig {
    pub n_samples: usize,
    pub exemplars_per_sample: usize,
    pub seed: u64,
    pub feature_dim: usize,
    pub frames_per_sample: usize,
    pub noise_sigma: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            n_samples: 2000,
            exemplars_per_sample: 20,
            seed: 1,
            feature_dim: 32,
            frames_per_sample: 8,
            noise_sigma: 0.05,
        }
    }
}

/// The fixed random projection from scene one-hots to feature space.
/// Derived from the corpus seed on a dedicated RNG stream, so the mapping is
/// shared by every sample of a corpus.
pub struct SceneProjector {
    /// feature_dim x onehot_dim
    matrix: Vec<Vec<f64>>,
    feature_dim: usize,
}

const ONEHOT_DIM: usize = 80; // 20 subjects + 20 verbs + 20 objects + 20 modifiers

impl SceneProjector {
    pub fn new(seed: u64, feature_dim: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(0xFEA7);
        let matrix = (0..feature_dim)
            .map(|_| (0..ONEHOT_DIM).map(|_| rng.gen_range(-0.5..0.5) * 2.0).collect())
            .collect();
        SceneProjector {
            matrix,
            feature_dim,
        }
    }

    /// Noise-free projected scene vector.
    pub fn project(&self, scene: &Scene) -> Vec<f64> {
        let hot = [
            scene.subject,
            20 + scene.verb,
            40 + scene.object,
            60 + scene.modifier,
        ];
        (0..self.feature_dim)
            .map(|i| hot.iter().map(|&h| self.matrix[i][h]).sum())
            .collect()
    }

    /// One frame: the projection plus Gaussian noise.
    pub fn frame(&self, scene: &Scene, sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
        self.project(scene)
            .into_iter()
            .map(|v| v + sigma * gaussian(rng))
            .collect()
    }
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

struct Slot {
    tag: String,
    pool: String,
}

/// A template: its skeleton tree (slot markers at leaves) plus the slot list
/// in leaf order.
pub struct Template {
    skeleton: ParseTree,
    slots: Vec<Slot>,
    /// POS tags in leaf order; templates are identified by this sequence.
    pos_seq: Vec<String>,
}

impl Template {
    fn compile(src: &str) -> Template {
        let skeleton = parse_bracketed(src).expect("static template parses");
        let mut slots = Vec::new();
        collect_slots(&skeleton, &mut slots);
        let pos_seq = slots.iter().map(|s| s.tag.clone()).collect();
        Template {
            skeleton,
            slots,
            pos_seq,
        }
    }

    pub fn pos_seq(&self) -> &[String] {
        &self.pos_seq
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Instantiate with the given words (one per slot).
    pub fn realize(&self, words: &[String]) -> ParseTree {
        assert_eq!(words.len(), self.slots.len());
        let mut idx = 0;
        fill(&self.skeleton, words, &mut idx)
    }
}

fn collect_slots(t: &ParseTree, out: &mut Vec<Slot>) {
    if t.children.is_empty() {
        let (tag, pool) = t
            .label
            .split_once(':')
            .expect("slot leaves are TAG:pool markers");
        out.push(Slot {
            tag: tag.to_string(),
            pool: pool.to_string(),
        });
    }
    for c in &t.children {
        collect_slots(c, out);
    }
}

fn fill(t: &ParseTree, words: &[String], idx: &mut usize) -> ParseTree {
    if t.children.is_empty() {
        let tag = t.label.split_once(':').unwrap().0;
        let w = &words[*idx];
        *idx += 1;
        return ParseTree::word_leaf(tag, w);
    }
    ParseTree {
        label: t.label.clone(),
        children: t.children.iter().map(|c| fill(c, words, idx)).collect(),
        word: None,
    }
}

fn pool_words(pool: &str, scene: Option<&Scene>) -> Vec<&'static str> {
    match pool {
        "subj" => match scene {
            Some(s) => vec![s.subject_word()],
            None => SUBJECTS.to_vec(),
        },
        "obj" => match scene {
            Some(s) => vec![s.object_word()],
            None => OBJECTS.to_vec(),
        },
        "verb" | "vt" => match (pool, scene) {
            ("verb", Some(s)) => vec![s.verb_word()],
            _ => VERBS_TRANS.to_vec(),
        },
        "mod" => match scene {
            Some(s) => vec![s.modifier_word()],
            None => modifier_pool(),
        },
        "place" => PLACES.to_vec(),
        "vi" => VERBS_INTRANS.to_vec(),
        "size" => SIZES.to_vec(),
        "color" => COLORS.to_vec(),
        "da" => DTS_A.to_vec(),
        "db" => DTS_B.to_vec(),
        "inl" => INS_LOC.to_vec(),
        "inm" => INS_MISC.to_vec(),
        "prp" => PRPS.to_vec(),
        "cd" => CDS.to_vec(),
        "rb" => RBS.to_vec(),
        "cc" => CCS.to_vec(),
        other => panic!("unknown pool {other}"),
    }
}

/// Compiled caption and exemplar grammars.
pub struct ToyGrammar {
    pub caption_templates: Vec<Template>,
    pub exemplar_templates: Vec<Template>,
}

impl ToyGrammar {
    pub fn new() -> Self {
        ToyGrammar {
            caption_templates: CAPTION_TEMPLATES.iter().map(|s| Template::compile(s)).collect(),
            exemplar_templates: EXEMPLAR_TEMPLATES
                .iter()
                .map(|s| Template::compile(s))
                .collect(),
        }
    }

    /// POS tag of a toy word (pools are disjoint across tags).
    pub fn pos_tag(word: &str) -> Option<&'static str> {
        if SUBJECTS.contains(&word) || OBJECTS.contains(&word) || PLACES.contains(&word) {
            Some("NN")
        } else if VERBS_TRANS.contains(&word) || VERBS_INTRANS.contains(&word) {
            Some("VBZ")
        } else if SIZES.contains(&word) || COLORS.contains(&word) {
            Some("JJ")
        } else if DTS_A.contains(&word) || DTS_B.contains(&word) {
            Some("DT")
        } else if INS_LOC.contains(&word) || INS_MISC.contains(&word) {
            Some("IN")
        } else if PRPS.contains(&word) {
            Some("PRP$")
        } else if CDS.contains(&word) {
            Some("CD")
        } else if RBS.contains(&word) {
            Some("RB")
        } else if CCS.contains(&word) {
            Some("CC")
        } else {
            None
        }
    }

    /// Parse a toy word sequence: tag each word, match the tag sequence
    /// against both grammars, and instantiate the matching template. Falls
    /// back to a flat tree when no template matches (or a word is unknown).
    pub fn parse(&self, words: &[String]) -> ParseTree {
        let tags: Option<Vec<&str>> = words.iter().map(|w| Self::pos_tag(w)).collect();
        if let Some(tags) = tags {
            for tpl in self.caption_templates.iter().chain(&self.exemplar_templates) {
                if tpl.pos_seq.len() == tags.len()
                    && tpl.pos_seq.iter().zip(&tags).all(|(a, b)| a == b)
                {
                    return tpl.realize(words);
                }
            }
        }
        self.flat_parse(words)
    }

    /// Flat fallback: (ROOT (S (TAG w) ...)), UNK tag for unknown words.
    pub fn flat_parse(&self, words: &[String]) -> ParseTree {
        let leaves = words
            .iter()
            .map(|w| ParseTree::word_leaf(Self::pos_tag(w).unwrap_or("UNK"), w))
            .collect();
        ParseTree::node("ROOT", vec![ParseTree::node("S", leaves)])
    }

    /// POS tags for a generated word sequence (UNK for unknown words).
    pub fn tag_words(words: &[String]) -> Vec<String> {
        words
            .iter()
            .map(|w| Self::pos_tag(w).unwrap_or("UNK").to_string())
            .collect()
    }
}

impl Default for ToyGrammar {
    fn default() -> Self {
        Self::new()
    }
}

/// Realize a template by drawing each slot from its pool (scene-bound slots
/// take the scene word).
fn realize_random(
    tpl: &Template,
    scene: Option<&Scene>,
    rng: &mut impl Rng,
) -> (Vec<String>, Vec<String>, ParseTree) {
    let mut words = Vec::with_capacity(tpl.slots.len());
    for slot in &tpl.slots {
        let pool = pool_words(&slot.pool, scene);
        words.push(pool[rng.gen_range(0..pool.len())].to_string());
    }
    let tree = tpl.realize(&words);
    let tags = tpl.pos_seq.clone();
    (words, tags, tree)
}

/// Generate a toy corpus: deterministic given the config.
pub fn generate_toy_corpus(cfg: &ToyConfig) -> Result<Vec<Sample>> {
    if cfg.n_samples == 0 {
        return Err(CoreError::domain("toy corpus needs at least one sample"));
    }
    let grammar = ToyGrammar::new();
    let projector = SceneProjector::new(cfg.seed, cfg.feature_dim);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0xC0);

    let n_mod = modifier_pool().len();
    let mut out = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        let scene = Scene {
            subject: rng.gen_range(0..SUBJECTS.len()),
            verb: rng.gen_range(0..VERBS_TRANS.len()),
            object: rng.gen_range(0..OBJECTS.len()),
            modifier: rng.gen_range(0..n_mod),
        };
        let tpl = &grammar.caption_templates[rng.gen_range(0..grammar.caption_templates.len())];
        let (caption, caption_pos, caption_parse) = realize_random(tpl, Some(&scene), &mut rng);

        let features: Vec<Vec<f64>> = (0..cfg.frames_per_sample)
            .map(|_| projector.frame(&scene, cfg.noise_sigma, &mut rng))
            .collect();

        let mut exemplars = Vec::with_capacity(cfg.exemplars_per_sample);
        for _ in 0..cfg.exemplars_per_sample {
            let etpl =
                &grammar.exemplar_templates[rng.gen_range(0..grammar.exemplar_templates.len())];
            let (words, pos, parse) = realize_random(etpl, None, &mut rng);
            exemplars.push(Exemplar { words, parse, pos });
        }

        out.push(Sample {
            id: format!("toy-{i:05}"),
            features,
            feature_source: FeatureSource::Inline,
            valid_frames: cfg.frames_per_sample,
            caption,
            caption_parse,
            caption_pos,
            exemplars,
            extra: serde_json::Map::new(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::vocab::cosine;

    #[test]
    fn all_pools_are_disjoint() {
        let mut all: Vec<&str> = Vec::new();
        for pool in [
            SUBJECTS,
            OBJECTS,
            PLACES,
            VERBS_TRANS,
            VERBS_INTRANS,
            SIZES,
            COLORS,
            DTS_A,
            DTS_B,
            INS_LOC,
            INS_MISC,
            PRPS,
            CDS,
            RBS,
            CCS,
        ] {
            all.extend_from_slice(pool);
        }
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), n, "pools share a word");
    }

    #[test]
    fn template_pos_sequences_are_unique() {
        let g = ToyGrammar::new();
        let mut seqs: Vec<Vec<String>> = g
            .caption_templates
            .iter()
            .chain(&g.exemplar_templates)
            .map(|t| t.pos_seq.clone())
            .collect();
        let n = seqs.len();
        assert_eq!(n, 14);
        seqs.sort();
        seqs.dedup();
        assert_eq!(seqs.len(), n, "two templates share a POS sequence");
    }

    #[test]
    fn templates_have_per_tag_disjoint_pools() {
        let g = ToyGrammar::new();
        for tpl in g.caption_templates.iter().chain(&g.exemplar_templates) {
            let mut keys: Vec<&str> = tpl.slots.iter().map(|s| s.pool.as_str()).collect();
            let n = keys.len();
            keys.sort_unstable();
            keys.dedup();
            assert_eq!(keys.len(), n, "template reuses a pool");
        }
    }

    #[test]
    fn exemplar_lengths_are_in_band() {
        let g = ToyGrammar::new();
        for tpl in &g.exemplar_templates {
            assert!(
                (8..=30).contains(&tpl.len()),
                "exemplar template length {}",
                tpl.len()
            );
        }
        for tpl in &g.caption_templates {
            assert!(tpl.len() >= 4, "caption templates stay >= 4 words for the n-gram kernel");
        }
    }

    #[test]
    fn corpus_is_deterministic() {
        let cfg = ToyConfig {
            n_samples: 5,
            exemplars_per_sample: 3,
            ..Default::default()
        };
        let a = generate_toy_corpus(&cfg).unwrap();
        let b = generate_toy_corpus(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn caption_parse_leaf_count_matches_caption() {
        let cfg = ToyConfig {
            n_samples: 50,
            exemplars_per_sample: 4,
            ..Default::default()
        };
        for s in generate_toy_corpus(&cfg).unwrap() {
            assert_eq!(s.caption_parse.leaf_count(), s.caption.len());
            assert_eq!(s.caption_parse.words(), s.caption);
            assert_eq!(s.caption_pos.len(), s.caption.len());
            for e in &s.exemplars {
                assert_eq!(e.parse.leaf_count(), e.words.len());
                assert_eq!(e.parse.words(), e.words);
            }
        }
    }

    #[test]
    fn every_caption_reparses_to_its_stored_tree() {
        let g = ToyGrammar::new();
        let cfg = ToyConfig {
            n_samples: 100,
            exemplars_per_sample: 2,
            ..Default::default()
        };
        for s in generate_toy_corpus(&cfg).unwrap() {
            assert_eq!(g.parse(&s.caption), s.caption_parse, "caption {:?}", s.caption);
            for e in &s.exemplars {
                assert_eq!(g.parse(&e.words), e.parse);
            }
        }
    }

    #[test]
    fn same_scene_features_are_nearly_parallel() {
        let cfg = ToyConfig::default();
        let projector = SceneProjector::new(cfg.seed, cfg.feature_dim);
        let scene = Scene {
            subject: 3,
            verb: 5,
            object: 7,
            modifier: 11,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let mean = |rng: &mut ChaCha20Rng| {
            let frames: Vec<Vec<f64>> = (0..8)
                .map(|_| projector.frame(&scene, cfg.noise_sigma, rng))
                .collect();
            let mut m = vec![0.0; cfg.feature_dim];
            for f in &frames {
                for (a, &v) in m.iter_mut().zip(f) {
                    *a += v / 8.0;
                }
            }
            m
        };
        let a = mean(&mut rng);
        let b = mean(&mut rng);
        assert!(cosine(&a, &b) >= 0.95, "cos = {}", cosine(&a, &b));
    }

    #[test]
    fn unparseable_sequence_gets_flat_tree() {
        let g = ToyGrammar::new();
        let words: Vec<String> = vec!["dog".into(), "dog".into(), "dog".into()];
        let t = g.parse(&words);
        assert_eq!(t.label, "ROOT");
        assert_eq!(t.leaf_count(), 3);
        assert_eq!(t.words(), words);
    }
}
