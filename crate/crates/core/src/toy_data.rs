//! Seeded generators for the bundled toy datasets: identity (copy) pairs,
//! a three-rule reformulation grammar, and the demo anchor log / document
//! corpus / relevance judgments. Everything is deterministic per seed.

use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::anchor_corpus::TrainingPair;
use crate::text_codec::Alphabet;
use crate::toy_retrieval::Document;

/// Random identity pairs over the full standard alphabet. First and last
/// characters are never spaces so the strings survive normalization.
pub fn copy_pairs(n: usize, min_len: usize, max_len: usize, seed: u64) -> Vec<TrainingPair> {
    assert!(min_len >= 1 && min_len <= max_len);
    let alphabet = Alphabet::standard();
    let symbols = alphabet.symbols();
    let non_space: Vec<char> = symbols.iter().copied().filter(|c| *c != ' ').collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(min_len..=max_len);
            let s: String = (0..len)
                .map(|i| {
                    if i == 0 || i + 1 == len {
                        *non_space.choose(&mut rng).unwrap()
                    } else {
                        symbols[rng.random_range(0..symbols.len())]
                    }
                })
                .collect();
            TrainingPair {
                source: s.clone(),
                target: s,
            }
        })
        .collect()
}

/// Filler words: appear in any rule's source but never trigger one.
pub const FILLERS: [&str; 20] = [
    "river", "garden", "bridge", "castle", "market", "harbor", "meadow", "temple", "canyon",
    "valley", "forest", "island", "desert", "spring", "lantern", "marble", "copper", "willow",
    "falcon", "orchid",
];

/// Marked head nouns and the context word each one attracts.
pub const MARKED_HEADS: [(&str, &str); 8] = [
    ("zephyr", "wind"),
    ("cobalt", "mine"),
    ("sonata", "piano"),
    ("raptor", "nest"),
    ("ember", "fire"),
    ("quartz", "stone"),
    ("violet", "bloom"),
    ("comet", "orbit"),
];

/// Dictionary of synonym substitutions.
pub const SYNONYMS: [(&str, &str); 8] = [
    ("auto", "car"),
    ("cheap", "budget"),
    ("fast", "quick"),
    ("house", "home"),
    ("photo", "picture"),
    ("begin", "start"),
    ("large", "big"),
    ("doctor", "physician"),
];

/// The article dropped by the deletion rule.
pub const ARTICLE: &str = "the";

/// Reformulation pairs drawn from three disjoint rules, mirroring the
/// behaviors a trained model exhibits on real anchors:
///
/// 1. drop a leading article: `the W1 W2 -> W1 W2`
/// 2. append a fixed context word to a marked head noun:
///    `[W] HEAD -> [W] HEAD CTX`
/// 3. substitute a dictionary synonym: `... A ... -> ... B ...`
///
/// The word classes are disjoint, so every source determines its rule and
/// its target uniquely.
pub fn grammar_pairs(n: usize, seed: u64) -> Vec<TrainingPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let filler = |rng: &mut ChaCha8Rng| *FILLERS.choose(rng).unwrap();
            match rng.random_range(0..3) {
                0 => {
                    let (w1, w2) = (filler(&mut rng), filler(&mut rng));
                    TrainingPair {
                        source: format!("{ARTICLE} {w1} {w2}"),
                        target: format!("{w1} {w2}"),
                    }
                }
                1 => {
                    let (head, ctx) = *MARKED_HEADS.choose(&mut rng).unwrap();
                    if rng.random_bool(0.5) {
                        let w = filler(&mut rng);
                        TrainingPair {
                            source: format!("{w} {head}"),
                            target: format!("{w} {head} {ctx}"),
                        }
                    } else {
                        TrainingPair {
                            source: head.to_string(),
                            target: format!("{head} {ctx}"),
                        }
                    }
                }
                _ => {
                    let (from, to) = *SYNONYMS.choose(&mut rng).unwrap();
                    let w = filler(&mut rng);
                    if rng.random_bool(0.5) {
                        TrainingPair {
                            source: format!("{from} {w}"),
                            target: format!("{to} {w}"),
                        }
                    } else {
                        TrainingPair {
                            source: format!("{w} {from}"),
                            target: format!("{w} {to}"),
                        }
                    }
                }
            }
        })
        .collect()
}

/// Topic head words for the demo collection.
pub const DEMO_HEADS: [&str; 10] = [
    "zephyr", "cobalt", "sonata", "raptor", "ember", "quartz", "violet", "comet", "lagoon",
    "prism",
];

/// Topic tail words and the ill-formed replacement users type for each.
pub const DEMO_TAILS: [(&str, &str); 10] = [
    ("harbor", "haven"),
    ("valley", "vale"),
    ("meadow", "field"),
    ("canyon", "gorge"),
    ("bridge", "span"),
    ("castle", "fort"),
    ("garden", "grove"),
    ("temple", "shrine"),
    ("island", "isle"),
    ("forest", "woods"),
];

const DEMO_ADDONS: [&str; 4] = ["guide", "map", "tour", "info"];

/// Everything the end-to-end demo consumes, generated from one seed.
pub struct DemoData {
    /// TSV anchor log, roughly two thousand sessions over 100 topics.
    pub anchor_log: String,
    /// About 500 documents: three per topic plus filler.
    pub corpus: Vec<Document>,
    /// TREC qrels over the demo queries (includes a few negative spam
    /// judgments).
    pub qrels: String,
    /// (qid, ill-formed original query) pairs, one per topic.
    pub queries: Vec<(String, String)>,
}

/// Build the demo collection. Topics are head–tail word pairs; users link
/// to a topic's pages with the canonical anchor, a dropped-tail variant, an
/// added-word variant, an ill-formed tail replacement, and assorted junk
/// that the mining filters must remove.
pub fn demo_data(seed: u64) -> DemoData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut anchor_log = String::new();
    let mut corpus = Vec::new();
    let mut qrels = String::new();
    let mut queries = Vec::new();

    let mut doc_no = 0usize;
    for (ti, (head, (tail, ill_tail))) in DEMO_HEADS
        .iter()
        .flat_map(|h| DEMO_TAILS.iter().map(move |t| (*h, *t)))
        .enumerate()
    {
        let canonical = format!("{head} {tail}");
        let dropped = head.to_string();
        let added = format!("{head} {tail} {}", DEMO_ADDONS[ti % DEMO_ADDONS.len()]);
        let ill = format!("{head} {ill_tail}");

        // Pages of this topic and the anchors pointing at them.
        let pages = rng.random_range(16..=22);
        for p in 0..pages {
            let url = format!("u{ti:03}x{p:02}");
            let mut push = |anchor: &str, freq: u64| {
                let _ = writeln!(anchor_log, "{url}\t{anchor}\t{freq}");
            };
            push(&canonical, rng.random_range(6..=12));
            if rng.random_bool(0.8) {
                push(&dropped, rng.random_range(2..=4));
            }
            if rng.random_bool(0.6) {
                push(&added, rng.random_range(2..=3));
            }
            if rng.random_bool(0.8) {
                push(&ill, rng.random_range(2..=4));
            }
            // Junk the filters must drop: a singleton typo, an over-long
            // anchor, and an unrelated phrase.
            if rng.random_bool(0.3) {
                push(&format!("{head}{tail}"), 1);
            }
            if rng.random_bool(0.15) {
                let long = format!("{} {}", canonical, "click here for more ".repeat(3));
                push(long.trim(), 3);
            }
            if rng.random_bool(0.2) {
                push("completely unrelated anchor words", 4);
            }
        }

        // Three documents about the topic; the first is the best match.
        let mut topic_docs = Vec::new();
        for d in 0..3 {
            let mut words = Vec::new();
            for _ in 0..rng.random_range(3..=5) {
                words.push(head);
            }
            for _ in 0..rng.random_range(2..=4) {
                words.push(tail);
            }
            if d > 0 {
                // Secondary documents dilute the topic with filler.
                for _ in 0..rng.random_range(6..=10) {
                    words.push(FILLERS.choose(&mut rng).unwrap());
                }
            } else {
                words.push(DEMO_ADDONS[ti % DEMO_ADDONS.len()]);
            }
            let id = format!("d{doc_no:04}");
            doc_no += 1;
            corpus.push(Document::new(&id, words.join(" ")));
            topic_docs.push(id);
        }

        let qid = format!("q{ti:03}");
        for (d, doc) in topic_docs.iter().enumerate() {
            let grade = if d == 0 { 2 } else { 1 };
            let _ = writeln!(qrels, "{qid} 0 {doc} {grade}");
        }
        // The ill-formed original: tail replaced for most topics, dropped
        // for the rest (those originals are ambiguous across topics).
        let original = if ti % 10 < 7 { ill } else { dropped };
        queries.push((qid, original));
    }

    // Filler documents plus a few spam entries with negative judgments.
    for f in 0..180 {
        let words: Vec<&str> = (0..rng.random_range(8..=16))
            .map(|_| *FILLERS.choose(&mut rng).unwrap())
            .collect();
        let id = format!("d{doc_no:04}");
        doc_no += 1;
        corpus.push(Document::new(&id, words.join(" ")));
        if f < 5 {
            let qid = format!("q{:03}", f * 17 % 100);
            let _ = writeln!(qrels, "{qid} 0 {id} -2");
        }
    }

    DemoData {
        anchor_log,
        corpus,
        qrels,
        queries,
    }
}
