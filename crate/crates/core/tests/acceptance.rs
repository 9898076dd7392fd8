//! Acceptance checks, one PASS/FAIL line each. Oracles here are written
//! from the definitions and share no scoring code with the library.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use coft::eval::{segment_prf, token_f1, NoiseMix, SegmentJudgment};
use coft::pipeline::{InputRecord, KgConfig, Pipeline, PipelineConfig};
use coft::recaller::{filter_in_context, EntityCandidate, EntitySource};
use coft::scorer::{contextual_weights, self_information_of_span, NgramModel, NgramProvider, TokenScore};
use coft::segmentation::{segment_document, Span};
use coft::selector::{
    apply_highlights, dynamic_threshold, joint_promote, select_units, strip_highlights, ContextStats, Granularity,
    UnitScore,
};

const FILLER: [&str; 20] = [
    "lorem", "ipsum", "dolor", "amet", "magna", "porta", "velit", "nulla", "massa", "felis", "justo", "metus", "risus",
    "augue", "dapibus", "tellus", "mauris", "cursus", "sapien", "lectus",
];
const ENTITY_WORDS: [&str; 15] = [
    "orion", "vega", "sirius", "altair", "deneb", "rigel", "spica", "mira", "castor", "pollux", "capella", "antares",
    "nova", "lyra", "draco",
];

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn within(limit: Duration, started: Instant) {
    let took = started.elapsed();
    assert!(took < limit, "took {took:?}, limit {limit:?}");
}

// ---- criterion 1 ----------------------------------------------------------

struct OracleBigram {
    pairs: HashMap<(String, String), f64>,
    history: HashMap<String, f64>,
    vocab: usize,
}

fn plain_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

impl OracleBigram {
    fn train(corpus: &str) -> Self {
        let words = plain_words(corpus);
        let mut pairs = HashMap::new();
        let mut history = HashMap::new();
        for (i, w) in words.iter().enumerate() {
            let next = words.get(i + 1).cloned().unwrap_or_else(|| "<unk>".into());
            *pairs.entry((w.clone(), next)).or_insert(0.0) += 1.0;
            *history.entry(w.clone()).or_insert(0.0) += 1.0;
        }
        let mut types: Vec<&String> = words.iter().collect();
        types.sort();
        types.dedup();
        OracleBigram {
            pairs,
            history,
            vocab: types.len() + 1,
        }
    }

    fn p(&self, h: &str, t: &str) -> f64 {
        let c_ht = self.pairs.get(&(h.to_string(), t.to_string())).copied().unwrap_or(0.0);
        let c_h = self.history.get(h).copied().unwrap_or(0.0);
        (c_ht + 1.0) / (c_h + self.vocab as f64)
    }
}

struct Generated {
    query: String,
    text: String,
    entities: Vec<Vec<&'static str>>,
}

fn generate(rng: &mut ChaCha8Rng) -> Generated {
    let mut pool = ENTITY_WORDS.to_vec();
    pool.shuffle(rng);
    let n_entities = rng.random_range(1..=5);
    let mut entities = Vec::new();
    for _ in 0..n_entities {
        let len = rng.random_range(1..=3).min(pool.len());
        entities.push(pool.drain(..len).collect::<Vec<_>>());
    }
    let budget = rng.random_range(5..=50);
    let mut sentences: Vec<Vec<&str>> = vec![Vec::new()];
    let mut used = 0;
    while used < budget {
        let item: Vec<&str> = if rng.random_bool(0.3) {
            entities[rng.random_range(0..entities.len())].clone()
        } else {
            vec![FILLER[rng.random_range(0..FILLER.len())]]
        };
        if used + item.len() > budget {
            break;
        }
        used += item.len();
        sentences.last_mut().unwrap().extend(item);
        if rng.random_bool(0.2) {
            sentences.push(Vec::new());
        }
    }
    let text = sentences
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| format!("{}.", s.join(" ")))
        .collect::<Vec<_>>()
        .join(" ");
    let query = (0..3)
        .map(|_| FILLER[rng.random_range(0..FILLER.len())])
        .collect::<Vec<_>>()
        .join(" ");
    Generated { query, text, entities }
}

/// Weights recomputed from raw word lists: (tf_isf, self_info, weight) per entity.
fn oracle_weights(g: &Generated, lm: &OracleBigram) -> BTreeMap<String, (f64, f64, f64)> {
    let sentences: Vec<Vec<String>> = g.text.split(". ").map(plain_words).filter(|s| !s.is_empty()).collect();
    let doc_words: Vec<String> = sentences.concat();
    let total = doc_words.len() as f64;

    let mut history = plain_words(&g.query).last().unwrap().clone();
    let mut info = Vec::new();
    for w in &doc_words {
        info.push(-lm.p(&history, w).log2());
        history = w.clone();
    }

    let mut out = BTreeMap::new();
    for entity in &g.entities {
        let n = entity.len();
        let mut per_sentence = Vec::new();
        let mut occurrence_info = Vec::new();
        let mut offset = 0;
        for s in &sentences {
            let mut hits = 0;
            for i in 0..s.len().saturating_sub(n - 1) {
                if s[i..i + n].iter().zip(entity).all(|(a, b)| a == b) {
                    hits += 1;
                    occurrence_info.push(info[offset + i..offset + i + n].iter().sum::<f64>());
                }
            }
            per_sentence.push((hits, s.len()));
            offset += s.len();
        }
        let f_doc: usize = per_sentence.iter().map(|(h, _)| h).sum();
        if f_doc == 0 {
            continue;
        }
        let tf_isf: f64 = per_sentence
            .iter()
            .filter(|(h, _)| *h > 0)
            .map(|&(h, len)| (h as f64 / len as f64) * (total / (f_doc as f64 + 1.0)).log2())
            .sum();
        let self_info = occurrence_info.iter().sum::<f64>() / occurrence_info.len() as f64;
        out.insert(entity.join(" "), (tf_isf, self_info, tf_isf * self_info));
    }
    out
}

fn scoring_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut compared = 0;
    for _ in 0..60 {
        let g = generate(&mut rng);
        let corpus = format!("{} {} lorem ipsum sirius dolor", g.query, g.text);
        let provider = NgramProvider::new(NgramModel::train(&corpus).unwrap());
        let oracle = oracle_weights(&g, &OracleBigram::train(&corpus));

        let doc = segment_document("d", &g.text);
        let raw: Vec<EntityCandidate> = g
            .entities
            .iter()
            .map(|e| EntityCandidate::new(&e.join(" "), EntitySource::QueryEntity))
            .collect();
        let candidates = filter_in_context(&raw, std::slice::from_ref(&doc));
        let got = contextual_weights(&g.query, &doc, &candidates, &provider).unwrap();

        assert_eq!(got.len(), oracle.len(), "entity sets differ for {:?}", g.text);
        for w in got {
            let (tf, si, weight) = oracle[&w.entity];
            for (lib, ora) in [(w.tf_isf, tf), (w.self_info, si), (w.weight, weight)] {
                assert!(
                    (lib - ora).abs() <= 1e-9,
                    "{} in {:?}: {lib} vs {ora}",
                    w.entity,
                    g.text
                );
            }
            compared += 1;
        }
    }
    assert!(compared >= 60);
    within(Duration::from_secs(5), started);
}

// ---- criterion 2 ----------------------------------------------------------

fn additivity() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let n = rng.random_range(1..=20);
        let probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        let tokens: Vec<TokenScore> = probs
            .iter()
            .enumerate()
            .map(|(i, p)| TokenScore {
                text: "t".into(),
                span: Span::new(2 * i, 2 * i + 1),
                logprob2: p.log2(),
            })
            .collect();
        let span = Span::new(0, 2 * n - 1);
        let summed = self_information_of_span(&tokens, span);
        let product = -probs.iter().product::<f64>().log2();
        assert!(((summed - product) / product).abs() <= 1e-12, "{summed} vs {product}");
    }
    within(Duration::from_secs(1), started);
}

// ---- criterion 3 ----------------------------------------------------------

fn dynamic_threshold_examples() {
    let ctx = |length, informativeness| ContextStats {
        length,
        informativeness,
    };
    let taus: Vec<f64> = dynamic_threshold(&[ctx(100.0, 10.0), ctx(200.0, 30.0), ctx(300.0, 20.0)])
        .unwrap()
        .iter()
        .map(|t| t.tau)
        .collect();
    assert_eq!(taus, [0.05, 0.75, 0.75]);
    assert_eq!(dynamic_threshold(&[ctx(42.0, 7.0)]).unwrap()[0].tau, 0.5);
}

// ---- criterion 4 ----------------------------------------------------------

fn selection_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..1000 {
        let n: usize = rng.random_range(1..=60);
        let mut weights: Vec<f64> = (1..=n).map(|i| i as f64 * 0.37 + 0.01).collect();
        weights.shuffle(&mut rng);
        let units: Vec<UnitScore> = weights
            .iter()
            .enumerate()
            .map(|(i, &weight)| UnitScore {
                granularity: Granularity::Word,
                span: Span::new(2 * i, 2 * i + 1),
                weight,
                entity_hits: 1,
                rank_index: 0,
            })
            .collect();
        let tenths = trial % 10 + 1;
        let tau = tenths as f64 / 10.0;
        let expected = ((tenths * n).div_ceil(10)).max(1);
        assert_eq!(select_units(&units, tau).len(), expected, "tau {tau}, n {n}");
    }
}

// ---- criterion 5 ----------------------------------------------------------

const ALPHABET: [char; 14] = ['a', 'b', 'Z', ' ', ' ', '\n', '.', ',', 'é', '日', '-', '_', '\'', '\t'];

fn markup_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut with_spans = 0;
    for _ in 0..1000 {
        let len = rng.random_range(0..40);
        let text: String = (0..len)
            .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())])
            .collect();
        let bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).chain([text.len()]).collect();
        let mut cuts: Vec<usize> = (0..rng.random_range(0..8))
            .map(|_| bounds[rng.random_range(0..bounds.len())])
            .collect();
        cuts.sort();
        cuts.dedup();
        let spans: Vec<Span> = cuts
            .chunks_exact(2)
            .filter_map(|c| {
                let slice = &text[c[0]..c[1]];
                let lead = slice.len() - slice.trim_start().len();
                let trimmed = slice.trim();
                (!trimmed.is_empty()).then(|| Span::new(c[0] + lead, c[0] + lead + trimmed.len()))
            })
            .collect();
        with_spans += usize::from(!spans.is_empty());
        let marked = apply_highlights(&text, &spans, "**").unwrap();
        assert_eq!(strip_highlights(&marked, "**").unwrap(), text, "{marked:?}");
    }
    assert!(with_spans > 500);
}

// ---- criterion 6 ----------------------------------------------------------

fn nuclear_walkthrough() {
    let config = PipelineConfig {
        kg: KgConfig::Fixture {
            path: Some(fixtures().join("walkthrough_kg.json")),
        },
        ..Default::default()
    };
    let pipeline = Pipeline::new(config).unwrap();
    let record: InputRecord = serde_json::from_value(serde_json::json!({
        "id": "walkthrough",
        "query": "Which country or city has the maximum number of nuclear power plants?",
        "refs": [{"id": "ref", "text": "The nuclear power plants in the United States play a crucial role in providing electricity."}]
    }))
    .unwrap();
    let out = pipeline.run_record(&record).unwrap();
    let text = &out.refs[0].highlighted_text;
    assert!(text.contains("**nuclear power plants**"), "{text}");
    assert!(text.contains("**United States**"), "{text}");
    assert!(out.candidates.iter().any(|c| c == "united states"));
    assert!(!out.candidates.iter().any(|c| c == "france"), "{:?}", out.candidates);
}

// ---- criterion 7 ----------------------------------------------------------

fn joint_promotion() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..100 {
        let third = 1 + case % 5;
        let n = 3 * third;
        let target: Vec<&str> = (0..n).map(|_| FILLER[rng.random_range(0..FILLER.len())]).collect();
        // three sentences, so one promoted sentence never promotes the paragraph
        let text = format!("Lorem ipsum dolor. {}. Amet magna porta.", target.join(" "));
        let doc = segment_document("j", &text);
        let sentence = doc.sentences[1];
        let words: Vec<Span> = doc.words.iter().copied().filter(|w| sentence.contains(w)).collect();
        assert_eq!(words.len(), n);

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for (picked, promoted) in [(third, false), (third + 1, true)] {
            let mut chosen: Vec<Span> = order[..picked].iter().map(|&i| words[i]).collect();
            chosen.sort();
            let out = joint_promote(&doc, &chosen);
            if promoted {
                assert_eq!(out, vec![sentence], "case {case}: {picked}/{n}");
            } else {
                assert_eq!(out, chosen, "case {case}: {picked}/{n}");
            }
        }
    }
}

// ---- criterion 8 ----------------------------------------------------------

fn noise_mixing() {
    let dir = tempfile::tempdir().unwrap();
    let relevant = dir.path().join("relevant.txt");
    let noisy = dir.path().join("noisy.txt");
    std::fs::write(
        &relevant,
        (0..8).map(|i| format!("relevant doc {i}\n")).collect::<String>(),
    )
    .unwrap();
    std::fs::write(&noisy, (0..8).map(|i| format!("noisy doc {i}\n")).collect::<String>()).unwrap();
    let run = || {
        let out = Command::new(env!("CARGO_BIN_EXE_coft"))
            .args(["mix", "-k", "5", "-r", "0.2", "--seed", "2024", "--relevant"])
            .arg(&relevant)
            .arg("--noisy")
            .arg(&noisy)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let first = run();
    assert_eq!(first, run());
    let mix: NoiseMix = serde_json::from_slice(&first).unwrap();
    assert_eq!(mix.order.len(), 5);
    assert_eq!(mix.order.iter().filter(|d| d.starts_with("noisy")).count(), 1);
    assert_eq!(mix.order.iter().filter(|d| d.starts_with("relevant")).count(), 4);
}

// ---- criterion 9 ----------------------------------------------------------

fn metrics() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let n = rng.random_range(1..=100);
        let judgments: Vec<SegmentJudgment> = (0..n)
            .map(|i| SegmentJudgment {
                id: format!("s{i}"),
                predicted: rng.random_bool(0.5),
                gold: rng.random_bool(0.5),
            })
            .collect();
        for positive in [true, false] {
            let mut matrix = [[0usize; 2]; 2];
            for j in &judgments {
                matrix[usize::from(j.predicted == positive)][usize::from(j.gold == positive)] += 1;
            }
            let (tp, fp, fn_) = (matrix[1][1], matrix[1][0], matrix[0][1]);
            let p = if tp + fp == 0 {
                0.0
            } else {
                tp as f64 / (tp + fp) as f64
            };
            let r = if tp + fn_ == 0 {
                0.0
            } else {
                tp as f64 / (tp + fn_) as f64
            };
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            let got = segment_prf(&judgments, positive).unwrap();
            assert!((got.precision - p).abs() < 1e-12);
            assert!((got.recall - r).abs() < 1e-12);
            assert!((got.f1 - f).abs() < 1e-12);
        }
    }
    assert!((token_f1("barack obama", "obama") - 2.0 / 3.0).abs() <= 1e-12);
}

// ---- criterion 10 ---------------------------------------------------------

fn end_to_end_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |workers: &str, tag: &str| {
        let out = dir.path().join(format!("out-{workers}-{tag}.jsonl"));
        let status = Command::new(env!("CARGO_BIN_EXE_coft"))
            .env("COFT_KG_MODE", "fixture")
            .env("COFT_KG_FIXTURE", fixtures().join("walkthrough_kg.json"))
            .args(["highlight", "--granularity", "word", "--workers", workers, "--in"])
            .arg(fixtures().join("golden_batch.jsonl"))
            .arg("--out")
            .arg(&out)
            .arg("--summary")
            .arg(dir.path().join("summary.json"))
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out).unwrap()
    };
    let outputs = [run("1", "a"), run("1", "b"), run("4", "a"), run("4", "b")];
    for o in &outputs[1..] {
        assert_eq!(o, &outputs[0]);
    }
    assert_eq!(outputs[0], std::fs::read(fixtures().join("golden_out.jsonl")).unwrap());
}

fn main() {
    let criteria: [(&str, fn()); 10] = [
        ("scoring oracle equivalence", scoring_oracle_equivalence),
        ("self-information additivity", additivity),
        ("dynamic threshold", dynamic_threshold_examples),
        ("selection count", selection_count),
        ("markup round trip", markup_round_trip),
        ("nuclear power walkthrough", nuclear_walkthrough),
        ("joint promotion", joint_promotion),
        ("noise mixing", noise_mixing),
        ("metrics", metrics),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    std::panic::set_hook(Box::new(|info| eprintln!("    {info}")));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let ok = catch_unwind(AssertUnwindSafe(check)).is_ok();
        println!("{} criterion {:>2}: {name}", if ok { "PASS" } else { "FAIL" }, i + 1);
        failed += usize::from(!ok);
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
