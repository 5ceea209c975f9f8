//! Acceptance gate. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use grg::corpus::convert::{convert_file, SourceStyle};
use grg::corpus::{load_dataset, write_dataset, Split};
use grg::cost::{flops_encode_corpus, flops_generate, flops_retrieve, Flops};
use grg::embedder::{Embedder, EmbeddingVector, MockEmbedder};
use grg::generator::{assemble_reader_prompt, cosine_loss};
use grg::metrics::{exact_match, f1_score, normalize_answer, recall_at_k};
use grg::retriever::{dense_retrieve, dense_retrieve_vector};
use grg::vindex::{
    cosine_similarity, decode_index, encode_index, load_index, save_index, VectorIndex, INDEX_MAGIC,
};
use grg::Error;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use common::*;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn v(values: &[f64]) -> EmbeddingVector {
    EmbeddingVector::new(values.to_vec()).unwrap()
}

fn hits(docs: Vec<grg::vindex::ScoredDocument>) -> Vec<(String, f64)> {
    docs.into_iter().map(|d| (d.doc_id, d.score)).collect()
}

fn retrieval_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA11CE);
    let mut compared = 0usize;
    for case in 0..200 {
        let n = rng.gen_range(1..=1000);
        let dim = rng.gen_range(1..=64);
        let index = random_index(&mut rng, n, dim);
        let q = random_vector(&mut rng, dim);
        let k = rng.gen_range(1..=n + 3);
        let threshold = if rng.gen_bool(0.3) { -1.0 } else { rng.gen_range(-0.5..0.5) };

        let got = hits(index.retrieve_top_k(&q, k, threshold).map_err(|e| e.to_string())?);
        let want = oracle_cosine_top_k(index.entries(), q.as_slice(), k, threshold);
        same_ranking(&got, &want, 1e-12).map_err(|e| format!("case {case} (cosine): {e}"))?;

        let evidence = dense_retrieve_vector(&index, "q", &q, k).map_err(|e| e.to_string())?;
        let got: Vec<(String, f64)> = evidence
            .documents
            .into_iter()
            .map(|d| (d.doc_id, d.score))
            .collect();
        let want = oracle_dot_top_k(index.entries(), q.as_slice(), k);
        same_ranking(&got, &want, 1e-12).map_err(|e| format!("case {case} (dot): {e}"))?;
        compared += 2;
    }

    // Text path: the question is embedded by the mock encoder.
    let encoder = MockEmbedder::new(32, 512);
    let pool = ["river", "city", "capital", "prize", "physics", "ocean", "river.", "nile", "paris", "gold"];
    for case in 0..20 {
        let texts: Vec<String> = (0..50).map(|_| words(&mut rng, &pool, 6)).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let vectors = encoder.embed_batch(&refs).map_err(|e| e.to_string())?;
        let mut index = VectorIndex::new(32).unwrap();
        index
            .add(texts.iter().zip(vectors).enumerate().map(|(i, (t, vector))| {
                grg::vindex::EmbeddedDocument {
                    doc_id: format!("t{i:03}"),
                    text: t.clone(),
                    vector,
                    source: grg::vindex::Source::Corpus,
                }
            }))
            .unwrap();
        let question = words(&mut rng, &pool, 4);
        let got = dense_retrieve(&index, "q", &question, 7, &encoder).map_err(|e| e.to_string())?;
        let got: Vec<(String, f64)> = got.documents.into_iter().map(|d| (d.doc_id, d.score)).collect();
        let q = encoder.embed_text(&question).map_err(|e| e.to_string())?;
        let want = oracle_dot_top_k(index.entries(), q.as_slice(), 7);
        same_ranking(&got, &want, 1e-12).map_err(|e| format!("text case {case}: {e}"))?;
        compared += 1;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("{compared} rankings identical to brute force in {elapsed:.2?}"))
}

fn cosine_anchors() -> Outcome {
    let c = cosine_similarity(&v(&[1.0, 2.0, 2.0]), &v(&[2.0, 1.0, 2.0])).map_err(|e| e.to_string())?;
    ensure((c - 8.0 / 9.0).abs() <= 1e-12, || format!("cos = {c}, want 8/9"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..1000 {
        let dim = rng.gen_range(1..=64);
        let (a, b) = (random_vector(&mut rng, dim), random_vector(&mut rng, dim));
        let ab = cosine_similarity(&a, &b).unwrap();
        let ba = cosine_similarity(&b, &a).unwrap();
        ensure(ab == ba, || format!("pair {i}: asymmetric {ab} vs {ba}"))?;
        let (alpha, beta) = (rng.gen_range(1e-3..1e3), rng.gen_range(1e-3..1e3));
        let scaled = cosine_similarity(&a.scaled(alpha).unwrap(), &b.scaled(beta).unwrap()).unwrap();
        ensure((scaled - ab).abs() <= 1e-12, || {
            format!("pair {i}: scaled {scaled} vs {ab} (alpha {alpha}, beta {beta})")
        })?;
    }
    Ok("8/9 anchor; symmetry and scale invariance on 1000 pairs".into())
}

fn threshold_semantics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dim = 8;
    let index = random_index(&mut rng, 400, dim);
    let mut returned = 0usize;
    for i in 0..100 {
        // Queries near a stored vector so that some scores clear 0.7.
        let anchor = index.entries()[rng.gen_range(0..index.len())].vector.as_slice().to_vec();
        let q: Vec<f64> = anchor.iter().map(|x| x + rng.gen_range(-0.4..0.4)).collect();
        let q = if q.iter().all(|x| *x == 0.0) { random_vector(&mut rng, dim) } else { v(&q) };
        let k = rng.gen_range(1..=20);
        let got = index.retrieve_top_k(&q, k, 0.7).unwrap();
        returned += got.len();
        if let Some(bad) = got.iter().find(|d| d.score < 0.7) {
            return Err(format!("query {i}: score {} below 0.7", bad.score));
        }
        let want = oracle_cosine_top_k(index.entries(), q.as_slice(), k, 0.7);
        same_ranking(&hits(got.clone()), &want, 1e-12).map_err(|e| format!("query {i}: {e}"))?;

        let (t1, t2) = {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let b: f64 = rng.gen_range(-1.0..1.0);
            (a.min(b), a.max(b))
        };
        let low: Vec<String> = index.retrieve_top_k(&q, k, t1).unwrap().into_iter().map(|d| d.doc_id).collect();
        let high: Vec<String> = index.retrieve_top_k(&q, k, t2).unwrap().into_iter().map(|d| d.doc_id).collect();
        ensure(high.iter().all(|id| low.contains(id)), || {
            format!("query {i}: results at {t2} not a subset of results at {t1}")
        })?;
        let at_k = index.retrieve_top_k(&q, k, t1).unwrap();
        let at_k1 = index.retrieve_top_k(&q, k + 1, t1).unwrap();
        ensure(at_k1.len() >= at_k.len() && at_k1[..at_k.len()] == at_k[..], || {
            format!("query {i}: results at k={k} are not a prefix of k+1")
        })?;
    }
    ensure(returned > 0, || "no query returned anything; fixture too weak".into())?;
    Ok(format!("100 queries, {returned} hits, none below 0.7; monotone in threshold and k"))
}

fn flops_laws() -> Outcome {
    let g = |p, n, t| flops_generate(p, n, t).unwrap();
    let e = |p, n, t| flops_encode_corpus(p, n, t).unwrap();
    let r = |p, q, n, d| flops_retrieve(p, q, n, d).unwrap();
    ensure(g(175_000_000_000, 10, 100) == Flops(175_000_000_000_000), || "175e9,10,100".into())?;
    ensure(g(7_000_000_000, 5, 128) == Flops(4_480_000_000_000), || "7e9,5,128".into())?;
    ensure(e(220_000_000, 21_000_000, 512) == Flops(2_365_440_000_000_000_000), || {
        "corpus encoding anchor".into()
    })?;
    ensure(e(220_000_000, 10, 100) == Flops(220_000_000_000), || "generated encoding anchor".into())?;
    ensure(r(220_000_000, 20, 21_000_000, 768) == Flops(36_635_000_000), || "retrieval anchor".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let (p, n, t) = (rng.gen_range(0..1u64 << 36), rng.gen_range(0..1u64 << 20), rng.gen_range(0..1u64 << 12));
        let c = rng.gen_range(2..10u64);
        for f in [g, e] {
            let base = f(p, n, t).0;
            ensure(f(c * p, n, t).0 == c as u128 * base, || "not linear in params".into())?;
            ensure(f(p, c * n, t).0 == c as u128 * base, || "not linear in count".into())?;
            ensure(f(p, n, c * t).0 == c as u128 * base, || "not linear in tokens".into())?;
            ensure(f(0, n, t).0 == 0 && f(p, 0, t).0 == 0 && f(p, n, 0).0 == 0, || "zero law".into())?;
        }
        // Retrieval is the sum of a query-encoding term and a scan term.
        let (q, d) = (rng.gen_range(0..1u64 << 12), rng.gen_range(1..1u64 << 12));
        let full = r(p, q, n, d).0;
        ensure(full == r(p, q, 0, d).0 + r(0, 0, n, d).0, || "retrieval terms do not add".into())?;
        ensure(r(c * p, q, 0, d).0 == c as u128 * r(p, q, 0, d).0, || "encoding term not linear".into())?;
        ensure(r(p, c * q, 0, d).0 == c as u128 * r(p, q, 0, d).0, || "encoding term not linear in q".into())?;
        ensure(r(0, 0, c * n, d).0 == c as u128 * r(0, 0, n, d).0, || "scan term not linear".into())?;
        ensure(r(0, q, n, d).0 == r(p, 0, n, d).0, || "zero law on encoding term".into())?;
        ensure(r(p, 0, 0, d).0 == 0 && r(0, q, n, 1).0 == n as u128, || "retrieval zero laws".into())?;
    }
    Ok("1.75e14 and 4.48e12 exact; linearity and zero laws on 1000 draws".into())
}

fn cosine_loss_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..100 {
        let dim = rng.gen_range(1..=16);
        let l = cosine_loss(&[random_vector(&mut rng, dim)], &[random_vector(&mut rng, dim)], rng.gen_range(0.01..10.0))
            .unwrap();
        ensure(l == 0.0, || format!("N=1 case {i}: {l}"))?;
    }
    let l = cosine_loss(&[v(&[1.0, 0.0]), v(&[0.0, 1.0])], &[v(&[1.0, 0.0]), v(&[0.0, 1.0])], 1.0).unwrap();
    let e = std::f64::consts::E;
    let want = -(e / (e + 1.0)).ln();
    ensure((l - want).abs() <= 1e-9, || format!("N=2 orthonormal: {l} vs {want}"))?;

    for b in 0..100 {
        let n = rng.gen_range(2..=12);
        let dim = rng.gen_range(2..=16);
        let tau = rng.gen_range(0.05..2.0);
        let h: Vec<EmbeddingVector> = (0..n).map(|_| random_vector(&mut rng, dim)).collect();
        let t: Vec<EmbeddingVector> = (0..n).map(|_| random_vector(&mut rng, dim)).collect();
        let base = cosine_loss(&h, &t, tau).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let hp: Vec<EmbeddingVector> = perm.iter().map(|&i| h[i].clone()).collect();
        let tp: Vec<EmbeddingVector> = perm.iter().map(|&i| t[i].clone()).collect();
        let permuted = cosine_loss(&hp, &tp, tau).unwrap();
        ensure((base - permuted).abs() <= 1e-9, || format!("batch {b}: {base} vs permuted {permuted}"))?;
        ensure(base >= 0.0, || format!("batch {b}: negative loss {base}"))?;
    }
    Ok(format!("N=1 -> 0; N=2 = {l:.5}; permutation invariant on 100 batches"))
}

fn metric_suite() -> Outcome {
    let em = |p: &str, a: &[&str]| exact_match(p, a).unwrap();
    let f1 = |p: &str, a: &[&str]| f1_score(p, a).unwrap();
    ensure(em("Wilhelm Conrad Röntgen", &["Wilhelm Conrad Röntgen"]) == 1.0, || "EM example 1".into())?;
    ensure(em("Sunset Boulevard", &["Sunset Blvd"]) == 0.0, || "EM example 2".into())?;
    ensure(em("the scorpio", &["Scorpio"]) == 1.0, || "EM example 3".into())?;
    ensure(f1("15th century", &["the 15th century"]) == 1.0, || "F1 example 1".into())?;
    ensure(f1("february 4 2018", &["2017"]) == 0.0, || "F1 example 2".into())?;
    ensure((f1("giancarlo", &["giancarlo stanton"]) - 2.0 / 3.0).abs() < 1e-15, || "F1 example 3".into())?;
    ensure(normalize_answer("The Pittsburgh Steelers") == "pittsburgh steelers", || "normalize 1".into())?;
    ensure(normalize_answer("  15th   century. ") == "15th century", || "normalize 2".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..1000 {
        let a = words(&mut rng, WORD_POOL, 6);
        ensure(em(&a, &[&a]) == 1.0, || format!("case {i}: EM not reflexive for {a:?}"))?;
        let n = normalize_answer(&a);
        ensure(normalize_answer(&n) == n, || format!("case {i}: normalization not idempotent for {a:?}"))?;

        let pred = words(&mut rng, WORD_POOL, 4);
        let answers: Vec<String> = (0..rng.gen_range(1..4)).map(|_| words(&mut rng, WORD_POOL, 4)).collect();
        let refs: Vec<&str> = answers.iter().map(String::as_str).collect();
        if em(&pred, &refs) == 1.0 {
            ensure(f1(&pred, &refs) == 1.0, || format!("case {i}: EM=1 but F1<1 for {pred:?}"))?;
        }
        let docs: Vec<String> = (0..6).map(|_| words(&mut rng, WORD_POOL, 8)).collect();
        for k in 1..=6 {
            let lo = recall_at_k(&docs, &refs, k).unwrap();
            let hi = recall_at_k(&docs, &refs, k + 1).unwrap();
            ensure(lo <= hi, || format!("case {i}: recall@{k} > recall@{}", k + 1))?;
        }
    }
    Ok("9 worked examples; reflexivity, EM=>F1, recall monotonicity, idempotence on 1000 cases".into())
}

fn prompt_golden() -> Outcome {
    let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let fixtures: [(&str, Vec<String>, Vec<String>, &str); 10] = [
        ("Q", s(&["R1"]), s(&["G1"]), "Q\nR1\nG1\n</s>"),
        ("Q", s(&[]), s(&["G1"]), "Q\nG1\n</s>"),
        ("Q", s(&["R1"]), s(&[]), "Q\nR1\n</s>"),
        ("Q", s(&["R1", "R2"]), s(&["G1", "G2"]), "Q\nR1\nR2\nG1\nG2\n</s>"),
        ("Q", s(&[]), s(&["G1", "G2", "G3"]), "Q\nG1\nG2\nG3\n</s>"),
        (
            "who got the first nobel prize in physics?",
            s(&["Wilhelm Röntgen received the first prize in 1901."]),
            s(&["The first Nobel Prize in Physics went to Röntgen."]),
            "who got the first nobel prize in physics?\nWilhelm Röntgen received the first prize in 1901.\nThe first Nobel Prize in Physics went to Röntgen.\n</s>",
        ),
        ("Q", s(&["line a\nline b"]), s(&["G1"]), "Q\nline a\nline b\nG1\n</s>"),
        ("Q ", s(&[" R1"]), s(&["G1 "]), "Q \n R1\nG1 \n</s>"),
        ("Q", s(&["</s>"]), s(&["G1"]), "Q\n</s>\nG1\n</s>"),
        ("", s(&["R1"]), s(&[""]), "\nR1\n\n</s>"),
    ];
    for (i, (q, r, g, want)) in fixtures.into_iter().enumerate() {
        let prompt = assemble_reader_prompt(q, r.clone(), g.clone()).map_err(|e| format!("fixture {i}: {e}"))?;
        ensure(prompt.rendered.as_bytes() == want.as_bytes(), || {
            format!("fixture {i}: {:?} != {want:?}", prompt.rendered)
        })?;
        let again = assemble_reader_prompt(q, r, g).unwrap();
        ensure(again == prompt, || format!("fixture {i}: not pure"))?;
    }
    ensure(
        matches!(assemble_reader_prompt("Q", vec![], vec![]), Err(Error::NoEvidence)),
        || "no documents must be an error".into(),
    )?;
    Ok("10 fixtures byte-identical".into())
}

fn grg(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_grg"))
        .args(args)
        .output()
        .map_err(|e| format!("cannot spawn grg: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "grg {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn without_timestamps(manifest: &str) -> Vec<Value> {
    manifest
        .lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            if let Some(obj) = v.as_object_mut() {
                obj.remove("started_at");
                obj.remove("finished_at");
            }
            v
        })
        .collect()
}

fn end_to_end() -> Outcome {
    let data = data_dir();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let index = tmp.path().join("corpus.idx");
    let run_dir = tmp.path().join("run");
    let config = tmp.path().join("run.cfg");
    fs::write(
        &config,
        format!(
            "# 20-question fixture, mock backends\n\
             dataset = {}\n\
             corpus_index = {}\n\
             mock_documents = {}\n\
             output_dir = {}\n\
             seed = 7\n\
             parallelism = 4\n",
            data.join("e2e_questions.jsonl").display(),
            index.display(),
            data.join("e2e_docs.jsonl").display(),
            run_dir.display(),
        ),
    )
    .map_err(|e| e.to_string())?;

    let start = Instant::now();
    grg(&["index", "--corpus", data.join("e2e_corpus.jsonl").to_str().unwrap(), "--out", index.to_str().unwrap()])?;
    grg(&["run", "--config", config.to_str().unwrap()])?;
    let manifest_path = run_dir.join("manifest.jsonl");
    let first = fs::read_to_string(&manifest_path).map_err(|e| e.to_string())?;
    grg(&["run", "--config", config.to_str().unwrap()])?;
    let second = fs::read_to_string(&manifest_path).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;

    let (a, b) = (without_timestamps(&first), without_timestamps(&second));
    ensure(a == b, || "seeded runs differ beyond timestamps".into())?;
    ensure(a.len() == 22, || format!("expected header + 20 questions + summary, got {} lines", a.len()))?;
    let summary = &a[21];
    ensure(summary["failed"] == 0, || format!("failures: {}", summary["failed"]))?;

    let replayed: Value = serde_json::from_str(grg(&["replay", manifest_path.to_str().unwrap()])?.trim())
        .map_err(|e| e.to_string())?;
    ensure(replayed == summary["report"], || {
        format!("replay {replayed} != stored {}", summary["report"])
    })?;
    Ok(format!(
        "20 questions in {elapsed:.2?}; replay = stored {}; runs identical modulo timestamps",
        summary["report"]
    ))
}

fn index_persistence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    for i in 0..100 {
        let n = rng.gen_range(0..200);
        let dim = rng.gen_range(1..=64);
        let index = random_index(&mut rng, n, dim);
        let path = tmp.path().join(format!("{i}.idx"));
        save_index(&index, &path).map_err(|e| e.to_string())?;
        let loaded = load_index(&path).map_err(|e| e.to_string())?;
        ensure(loaded.dim() == index.dim() && loaded.entries() == index.entries(), || {
            format!("index {i}: round trip differs")
        })?;
    }

    let index = random_index(&mut rng, 50, 16);
    let bytes = encode_index(&index).unwrap();
    let mut corrupted = 0;
    for _ in 0..50 {
        let mut bad = bytes.clone();
        let pos = rng.gen_range(INDEX_MAGIC.len()..bytes.len());
        bad[pos] ^= 1 << rng.gen_range(0..8);
        let path = tmp.path().join("bad.idx");
        fs::write(&path, &bad).unwrap();
        match load_index(&path) {
            Err(Error::Checksum { .. }) => corrupted += 1,
            other => return Err(format!("flipped byte {pos}: {other:?}")),
        }
    }
    let truncated = &bytes[..bytes.len() - 7];
    ensure(matches!(decode_index(truncated), Err(Error::Checksum { .. })), || "truncation".into())?;
    Ok(format!("100 round trips entry-identical; {corrupted} corrupted files rejected by checksum"))
}


fn dataset_stats() -> Outcome {
    if let Ok(dir) = std::env::var("GRG_FULL_DATA_DIR") {
        let dir = Path::new(&dir);
        let expected = [
            ("webq", 3417, 361, 2032),
            ("nq", 79168, 8757, 3610),
            ("tqa", 78785, 8837, 11313),
        ];
        for (name, train, dev, test) in expected {
            let ds = load_dataset(dir.join(format!("{name}.jsonl")), name).map_err(|e| e.to_string())?;
            let got = (ds.stats.train_count, ds.stats.dev_count, ds.stats.test_count);
            ensure(got == (train, dev, test), || format!("{name}: {got:?} != {:?}", (train, dev, test)))?;
        }
        return Ok("full WebQ/NQ/TQA splits match published counts".into());
    }

    let src = data_dir().join("webq_sample");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = tmp.path().join("webq.jsonl");
    let parts = [
        ("train.qa.csv", SourceStyle::DprCsv, Split::Train),
        ("dev.json", SourceStyle::DprJson, Split::Dev),
        ("test.jsonl", SourceStyle::GenreadJsonl, Split::Test),
    ];
    for (i, (file, style, split)) in parts.into_iter().enumerate() {
        let examples = convert_file(src.join(file), style, split, "webq").map_err(|e| e.to_string())?;
        write_dataset(&out, &examples, i > 0).map_err(|e| e.to_string())?;
    }
    let converted = load_dataset(&out, "webq").map_err(|e| e.to_string())?;
    let bundled = load_dataset(data_dir().join("webq_sample.jsonl"), "webq").map_err(|e| e.to_string())?;
    for ds in [&converted, &bundled] {
        let s = &ds.stats;
        ensure((s.train_count, s.dev_count, s.test_count) == (35, 5, 10), || {
            format!("counts {}/{}/{}", s.train_count, s.dev_count, s.test_count)
        })?;
    }
    ensure(converted.examples == bundled.examples, || "converted sample differs from bundled file".into())?;
    Ok("full data unavailable (GRG_FULL_DATA_DIR unset); 50-line sample converts and loads as 35/5/10".into())
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("retrieval oracle equivalence", retrieval_oracle),
        ("cosine anchors", cosine_anchors),
        ("threshold semantics", threshold_semantics),
        ("FLOPs anchors", flops_laws),
        ("cosine loss", cosine_loss_laws),
        ("metric suite", metric_suite),
        ("prompt golden test", prompt_golden),
        ("end-to-end determinism", end_to_end),
        ("index persistence", index_persistence),
        ("dataset stats", dataset_stats),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Err(format!("panicked: {msg}"))
            });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name}: {reason}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
