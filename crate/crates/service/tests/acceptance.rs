//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clausewise_core::annotator::annotate_policy;
use clausewise_core::evalkit::{
    compare_distributions, evaluate_clauses, load_corpus, run_ablation, AblationSpec, CorpusEntry, EvalContext,
    LevelCounts, Variant,
};
use clausewise_core::explainer::{check_grounding, generate_explanations, ExplainMode};
use clausewise_core::ingestion::{extract_text, PolicySource};
use clausewise_core::risk::{build_risk_report, discretize, score, Feature};
use clausewise_core::segmenter::segment;
use clausewise_core::{
    CategoryVocabulary, ClauseAnnotation, Dimension, ExplanationTemplates, FeatureVector, Label, LexiconBackend,
    PolicyDocument, RiskLevel, RiskWeights, Segment,
};
use clausewise_service::{api, Analyzer, Config};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;

fn core_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn vector(bits: u16) -> FeatureVector {
    FeatureVector::from_fired(
        Feature::ALL
            .into_iter()
            .enumerate()
            .filter(|(i, _)| bits & (1 << i) != 0)
            .map(|(_, f)| f),
    )
}

fn monotonicity() -> Outcome {
    let w = RiskWeights::embedded();
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let started = Instant::now();
    let mut flips = 0usize;
    for _ in 0..10_000 {
        let bits: u16 = rng.gen_range(0..1 << Feature::ALL.len());
        let base = score(&vector(bits), &w).map_err(|e| e.to_string())?;
        for (i, f) in Feature::ALL.into_iter().enumerate() {
            if bits & (1 << i) != 0 {
                continue;
            }
            flips += 1;
            let flipped = score(&vector(bits | (1 << i)), &w).map_err(|e| e.to_string())?;
            if w.is_harmful(f) && flipped < base {
                return Err(format!("harmful {f} lowered {base} to {flipped} (bits {bits:#b})"));
            }
            if !w.is_harmful(f) && flipped > base {
                return Err(format!("protective {f} raised {base} to {flipped} (bits {bits:#b})"));
            }
        }
    }
    let took = started.elapsed();
    ensure(took < Duration::from_secs(5), || format!("took {took:?}"))?;
    Ok(format!("10000 vectors, {flips} flips, 0 violations, {took:.2?}"))
}

fn scoring_oracle() -> Outcome {
    // Default weights in feature order, copied by hand.
    const WEIGHTS: [i64; 13] = [25, 20, 25, 15, 10, 15, 10, 10, 10, -10, -10, -5, -5];
    let w = RiskWeights::embedded();
    let n = 1u32 << 13;
    for bits in 0..n {
        let mut naive = 0i64;
        for (i, wi) in WEIGHTS.iter().enumerate() {
            if bits & (1 << i) != 0 {
                naive += wi;
            }
        }
        let naive = naive.clamp(0, 100);
        let got = i64::from(score(&vector(bits as u16), &w).map_err(|e| e.to_string())?);
        ensure(got == naive, || {
            format!("vector {bits:#015b}: engine {got}, oracle {naive}")
        })?;
    }
    Ok(format!("{n} vectors agree"))
}

fn thresholds() -> Outcome {
    let w = RiskWeights::embedded();
    let expected = [
        (0, RiskLevel::Low),
        (33, RiskLevel::Low),
        (34, RiskLevel::Medium),
        (66, RiskLevel::Medium),
        (67, RiskLevel::High),
        (100, RiskLevel::High),
    ];
    for (s, level) in expected {
        let got = discretize(s, &w);
        ensure(got == level, || format!("{s} -> {got}, expected {level}"))?;
    }
    Ok("0 33 34 66 67 100 -> Low Low Medium Medium High High".into())
}

fn seg(id: &str) -> Segment {
    Segment {
        id: id.into(),
        text: format!("text of {id}"),
        section_path: vec![],
        start: 0,
        end: 0,
    }
}

fn ann(id: &str, labels: &[(Dimension, &str)]) -> ClauseAnnotation {
    ClauseAnnotation::from_labels(id, labels.iter().map(|(d, l)| Label::new(*d, *l)).collect(), "test")
}

fn entry(gold: Vec<ClauseAnnotation>) -> CorpusEntry {
    CorpusEntry {
        policy_id: "p".into(),
        segments: gold.iter().map(|a| seg(&a.segment_id)).collect(),
        gold,
        risk_level: RiskLevel::Low,
    }
}

fn metric_oracle() -> Outcome {
    use Dimension::*;
    let gold = entry(vec![
        ann("s0", &[(DataType, "email")]),
        ann("s1", &[(SharingRecipient, "advertisers")]),
        ann("s2", &[(TrackingTechnology, "cookies")]),
    ]);
    let pred = vec![
        ann("s0", &[(DataType, "email")]),
        ann(
            "s1",
            &[(SharingRecipient, "advertisers"), (SharingRecipient, "affiliates")],
        ),
        ClauseAnnotation::ambiguous("s2", "test"),
    ];
    let e = evaluate_clauses(&pred, &gold).map_err(|e| e.to_string())?;
    let third = 2.0 / 3.0;
    for (name, v) in [("P", e.micro.precision), ("R", e.micro.recall), ("F1", e.micro.f1)] {
        ensure((v - third).abs() < 1e-12, || format!("fixture {name} = {v}"))?;
    }

    let pool = [
        Label::new(DataType, "email"),
        Label::new(DataType, "location"),
        Label::new(SharingRecipient, "advertisers"),
        Label::new(TrackingTechnology, "cookies"),
        Label::new(UserControl, "opt_out"),
    ];
    let mut rng = StdRng::seed_from_u64(7);
    let subset = |rng: &mut StdRng| -> BTreeSet<Label> { pool.iter().filter(|_| rng.gen_bool(0.4)).cloned().collect() };
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    for case in 0..200 {
        let n = rng.gen_range(1..=4);
        let ids: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
        let g: Vec<BTreeSet<Label>> = ids.iter().map(|_| subset(&mut rng)).collect();
        let p: Vec<BTreeSet<Label>> = ids.iter().map(|_| subset(&mut rng)).collect();
        let gold = entry(
            ids.iter()
                .zip(&g)
                .map(|(id, l)| ClauseAnnotation::from_labels(id.as_str(), l.clone(), "gold"))
                .collect(),
        );
        let pred: Vec<ClauseAnnotation> = ids
            .iter()
            .zip(&p)
            .map(|(id, l)| ClauseAnnotation::from_labels(id.as_str(), l.clone(), "pred"))
            .collect();
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for i in 0..n {
            tp += p[i].intersection(&g[i]).count();
            fp += p[i].difference(&g[i]).count();
            fn_ += g[i].difference(&p[i]).count();
        }
        let prec = ratio(tp, tp + fp);
        let rec = ratio(tp, tp + fn_);
        let f1 = if prec + rec == 0.0 {
            0.0
        } else {
            2.0 * prec * rec / (prec + rec)
        };
        let e = evaluate_clauses(&pred, &gold).map_err(|e| e.to_string())?;
        for (name, got, want) in [
            ("P", e.micro.precision, prec),
            ("R", e.micro.recall, rec),
            ("F1", e.micro.f1, f1),
        ] {
            ensure((got - want).abs() < 1e-12, || {
                format!("case {case}: {name} {got} vs oracle {want}")
            })?;
        }
    }
    Ok("fixture P=R=F1=2/3; 200 random instances match set arithmetic".into())
}

fn lexicon_oracle_corpus() -> Outcome {
    let vocab = CategoryVocabulary::default_vocabulary();
    let weights = RiskWeights::embedded();
    let backend = LexiconBackend::default_lexicon();
    let corpus =
        load_corpus(&core_dir().join("data/corpus/lexicon_oracle.jsonl"), &vocab).map_err(|e| e.to_string())?;
    let ctx = EvalContext {
        vocab: &vocab,
        weights: &weights,
        backend: &backend,
        unconstrained: None,
        summarizer: None,
        parallelism: 1,
    };
    let run = |variant| run_ablation(&corpus, AblationSpec { variant }, &ctx).map_err(|e| e.to_string());
    let full = run(Variant::Full)?;
    let flat = run(Variant::NoSegmentation)?;
    let full_f1 = full.pooled.micro.f1;
    let flat_f1 = flat.pooled.micro.f1;
    ensure(full_f1 == 1.0, || format!("full micro F1 {full_f1}"))?;
    ensure(flat_f1 < full_f1, || {
        format!("no_segmentation F1 {flat_f1} not below full {full_f1}")
    })?;
    Ok(format!(
        "{} policies: full micro F1 {full_f1:.3}, no_segmentation {flat_f1:.3}",
        corpus.len()
    ))
}

fn fixture_policies() -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(core_dir().join("tests/fixtures/policies"))
        .expect("fixture policies")
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html",
        _ => "text/plain",
    }
}

fn load_policy(path: &Path) -> Result<PolicyDocument, String> {
    let body = std::fs::read(path).map_err(|e| e.to_string())?;
    let ct = content_type(path);
    let source = PolicySource::local("fixture.test", ct, &body).map_err(|e| e.to_string())?;
    Ok(PolicyDocument::new(
        source,
        extract_text(&body, ct).map_err(|e| e.to_string())?,
    ))
}

fn grounding() -> Outcome {
    let vocab = CategoryVocabulary::default_vocabulary();
    let weights = RiskWeights::embedded();
    let backend = LexiconBackend::default_lexicon();
    let templates = ExplanationTemplates::embedded();
    let mut total = 0;
    let mut corrupted_caught = 0;
    let mut texts: Vec<(String, Vec<Segment>)> = Vec::new();
    for path in fixture_policies() {
        let doc = load_policy(&path)?;
        texts.push((path.display().to_string(), segment(&doc)));
    }
    let corpus =
        load_corpus(&core_dir().join("data/corpus/lexicon_oracle.jsonl"), &vocab).map_err(|e| e.to_string())?;
    for e in corpus.entries {
        texts.push((e.policy_id, e.segments));
    }
    for (name, segments) in &texts {
        let annotations = annotate_policy(segments, &backend, &vocab, 1)
            .map_err(|e| e.to_string())?
            .annotations;
        let report = build_risk_report(&annotations, &weights).map_err(|e| e.to_string())?;
        let mut explanations =
            generate_explanations(&report, segments, &annotations, &templates, &ExplainMode::Template);
        let violations = check_grounding(&explanations, segments);
        ensure(violations.is_empty(), || format!("{name}: {violations:?}"))?;
        total += explanations.len();
        if let Some(first) = explanations.first_mut() {
            // Swap one character of the quote for one that cannot be there.
            let mut chars: Vec<char> = first.quoted_excerpt.chars().collect();
            let mid = chars.len() / 2;
            chars[mid] = '\u{2603}';
            first.quoted_excerpt = chars.into_iter().collect();
            ensure(!check_grounding(&explanations, segments).is_empty(), || {
                format!("{name}: corrupted excerpt passed")
            })?;
            corrupted_caught += 1;
        }
    }
    ensure(total > 0, || "no explanations generated".into())?;
    Ok(format!(
        "{total} explanations over {} policies grounded; {corrupted_caught} corrupted excerpts caught",
        texts.len()
    ))
}

fn golden_json(doc: &PolicyDocument) -> String {
    let out = serde_json::json!({
        "content_hash": doc.content_hash,
        "section_headers": doc.section_headers,
        "segments": segment(doc),
        "text": doc.text,
    });
    serde_json::to_string_pretty(&out).unwrap() + "\n"
}

fn segmentation_goldens() -> Outcome {
    let files = fixture_policies();
    ensure(files.len() == 10, || {
        format!("{} fixture policies, expected 10", files.len())
    })?;
    for path in &files {
        let a = golden_json(&load_policy(path)?);
        let b = golden_json(&load_policy(path)?);
        ensure(a == b, || format!("{}: runs differ", path.display()))?;
        let golden = core_dir()
            .join("tests/fixtures/golden")
            .join(path.file_stem().unwrap())
            .with_extension("json");
        let expected = std::fs::read_to_string(&golden).map_err(|e| format!("{}: {e}", golden.display()))?;
        ensure(a == expected, || format!("{} differs from its golden", path.display()))?;
        let lower = load_policy(path)?.text.to_lowercase();
        ensure(!lower.contains("<script") && !lower.contains("<style"), || {
            format!("{}: script/style residue", path.display())
        })?;
    }
    Ok(format!(
        "{} fixtures byte-identical to goldens, no script/style residue",
        files.len()
    ))
}

fn distribution() -> Outcome {
    let c = compare_distributions(LevelCounts::new(45, 20, 5), LevelCounts::new(42, 25, 8));
    let d = (c.deltas.low, c.deltas.medium, c.deltas.high);
    ensure(d == (-3, 5, 3), || format!("deltas {d:?}"))?;
    ensure((c.total_a, c.total_b) == (70, 75), || {
        format!("totals {} / {}", c.total_a, c.total_b)
    })?;
    ensure(c.mismatch, || "mismatch flag not set".into())?;
    Ok("deltas (-3, +5, +3), totals 70/75, mismatch flagged".into())
}

fn end_to_end(rt: &tokio::runtime::Runtime) -> Outcome {
    rt.block_on(async {
        let html = std::fs::read_to_string(core_dir().join("tests/fixtures/policies/01_basic.html"))
            .map_err(|e| e.to_string())?;
        let site = axum::Router::new().route(
            "/privacy",
            axum::routing::get(move || {
                let html = html.clone();
                async move { ([(axum::http::header::CONTENT_TYPE, "text/html")], html) }
            }),
        );
        let site_listener = tokio::net::TcpListener::bind("127.0.0.1:0")
            .await
            .map_err(|e| e.to_string())?;
        let site_url = format!("http://{}/privacy", site_listener.local_addr().unwrap());
        tokio::spawn(async move { axum::serve(site_listener, site).await });

        let store = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut config = Config::default();
        config.store.dir = store.path().to_path_buf();
        config.fetch.per_host_delay_ms = 0;
        let analyzer = Arc::new(Analyzer::new(config).map_err(|e| e.to_string())?);
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
            .await
            .map_err(|e| e.to_string())?;
        let base = format!("http://{}", listener.local_addr().unwrap());
        tokio::spawn(api::serve(analyzer, listener, std::future::pending()));

        let client = reqwest::Client::new();
        let body = serde_json::json!({"url": site_url, "backend": "lexicon"});
        let mut ids = Vec::new();
        let mut caches = Vec::new();
        let mut times = Vec::new();
        for _ in 0..2 {
            let started = Instant::now();
            let r = client
                .post(format!("{base}/v1/analyze"))
                .json(&body)
                .send()
                .await
                .map_err(|e| e.to_string())?;
            ensure(r.status() == 200, || format!("status {}", r.status()))?;
            caches.push(
                r.headers()
                    .get("x-cache")
                    .and_then(|v| v.to_str().ok())
                    .unwrap_or_default()
                    .to_string(),
            );
            let v: serde_json::Value = r.json().await.map_err(|e| e.to_string())?;
            times.push(started.elapsed());
            ids.push(v["analysis_id"].as_str().unwrap_or_default().to_string());
        }
        ensure(!ids[0].is_empty() && ids[0] == ids[1], || {
            format!("ids differ: {ids:?}")
        })?;
        ensure(caches == ["miss", "hit"], || format!("cache headers {caches:?}"))?;
        let slowest = *times.iter().max().unwrap();
        ensure(slowest < Duration::from_secs(2), || {
            format!("round trip took {slowest:?}")
        })?;
        Ok(format!(
            "analysis_id {}… stable, second call from store, slowest round trip {slowest:.2?}",
            &ids[0][..12]
        ))
    })
}

fn main() {
    let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
    let checks: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("monotonicity suite", Box::new(monotonicity)),
        ("scoring oracle", Box::new(scoring_oracle)),
        ("threshold boundaries", Box::new(thresholds)),
        ("metric oracle", Box::new(metric_oracle)),
        ("lexicon oracle corpus", Box::new(lexicon_oracle_corpus)),
        ("grounding suite", Box::new(grounding)),
        ("segmentation golden files", Box::new(segmentation_goldens)),
        ("risk distribution comparison", Box::new(distribution)),
        ("end-to-end determinism", Box::new(|| end_to_end(&rt))),
    ];
    let mut failed = 0;
    for (name, check) in &checks {
        match check() {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {name}: {why}");
            }
        }
    }
    println!(
        "{} of {} acceptance criteria passed",
        checks.len() - failed,
        checks.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
