//! Acceptance gate. Runs each criterion serially (timings are part of several
//! of them), prints one PASS/FAIL line per criterion and exits non-zero if any
//! fails. Oracles here are written independently of the library code.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use bundle_miner::assoc::{association, cosine_similarity};
use bundle_miner::cluster::{louvain_seeded, ClusterReport, WeightedGraph};
use bundle_miner::evalkit::{
    anova_paired_arms, generate_random_counterpart, likert_to_score, topic_diagnoses, Arm, SurveyResponse,
};
use bundle_miner::report::topic_table;
use bundle_miner::synth::{align_topics, clustering_agreement, generate_topic_corpus, GroundTruth, TopicCorpusSpec};
use bundle_miner::topics::{fit_lda, select_topic_count, FitParams, TopicModel, DEFAULT_CUTOFF, DEFAULT_TOP_N};
use bundle_miner_cli::{run_subcommand, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn config(pairs: &[(&str, String)]) -> RunConfig {
    let overrides = pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    RunConfig::resolve(&BTreeMap::new(), &overrides).expect("acceptance config resolves")
}

fn run(name: &str, pairs: &[(&str, String)]) -> Result<(), String> {
    run_subcommand(name, &config(pairs)).map(|_| ()).map_err(|e| format!("{name}: {e}"))
}

fn path(p: &Path) -> String {
    p.display().to_string()
}

/// Synth corpus into `dir/data`, then the full pipeline into `dir/run`.
fn synth_and_pipeline(dir: &Path, seed: u64, range: &str, iterations: usize) -> Result<PathBuf, String> {
    let data = dir.join("data");
    let out = dir.join("run");
    run("synth", &[("out_dir", path(&data)), ("seed", seed.to_string())])?;
    run(
        "pipeline",
        &[
            ("events", path(&data.join("events.csv"))),
            ("diagnoses", path(&data.join("diagnoses.csv"))),
            ("codemap", path(&data.join("codemap.csv"))),
            ("out_dir", path(&out)),
            ("k_range", range.to_string()),
            ("q_range", range.to_string()),
            ("iterations", iterations.to_string()),
            ("seed", seed.to_string()),
        ],
    )?;
    Ok(out)
}

// ---------------------------------------------------------------- criterion 1

fn cosine_oracle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn criterion_1() -> Outcome {
    let w = [0.8, 0.9, 0.7, 0.6];
    let p = [1.0, 0.9, 0.0, 0.0];
    let got = cosine_similarity(&w, &p).map_err(|e| e.to_string())?;
    let matrix = association(&[w.to_vec()], &[p.to_vec()]).map_err(|e| e.to_string())?;
    let via_matrix = matrix.values[0][0];
    let oracle = cosine_oracle(&w, &p);
    check(
        (got - 0.7891).abs() <= 1e-4 && (via_matrix - got).abs() < 1e-15 && (oracle - got).abs() < 1e-12,
        format!("association = {got:.6} (matrix {via_matrix:.6}, oracle {oracle:.6}, expected 0.7891)"),
    )
}

// ---------------------------------------------------------------- criterion 2

/// Modularity straight from the definition: (1/2m) sum_ij (A_ij - k_i k_j / 2m) [c_i = c_j].
fn modularity_oracle(n: usize, edges: &[(usize, usize, f64)], labels: &[usize]) -> f64 {
    let mut a = vec![vec![0.0; n]; n];
    for &(i, j, w) in edges {
        a[i][j] += w;
        a[j][i] += w;
    }
    let k: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                q += a[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

/// Every set partition as restricted growth strings.
fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for c in 0..=max + 1 {
            prefix.push(c);
            grow(prefix, max.max(c), n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        grow(&mut vec![0], 0, n, &mut out);
    }
    out
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut graphs = 0;
    let mut worst = f64::INFINITY;
    let mut failures = Vec::new();
    while graphs < 50 {
        let n = rng.random_range(3..=8);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(0.45) {
                    edges.push((i, j, rng.random_range(0.05..1.0)));
                }
            }
        }
        if edges.is_empty() {
            continue;
        }
        let graph = WeightedGraph::from_edges(n, &edges).map_err(|e| e.to_string())?;
        let got = louvain_seeded(&graph, graphs as u64).map_err(|e| e.to_string())?;
        let best = set_partitions(n)
            .iter()
            .map(|p| modularity_oracle(n, &edges, p))
            .fold(f64::NEG_INFINITY, f64::max);
        let reported = modularity_oracle(n, &edges, &got.assignment);
        if (reported - got.modularity).abs() > 1e-9 || got.modularity < 0.99 * best - 1e-12 {
            failures.push(format!("graph {graphs}: {:.6} vs best {best:.6}", got.modularity));
        }
        if best > 1e-9 {
            worst = worst.min(got.modularity / best);
        }
        graphs += 1;
    }

    let pair = WeightedGraph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).map_err(|e| e.to_string())?;
    let q_pair = bundle_miner::cluster::weighted_modularity(&pair, &[0, 0, 1, 1]).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(
        failures.is_empty() && q_pair == 0.5 && elapsed < Duration::from_secs(10),
        format!(
            "50 graphs, worst Q/Q* = {worst:.4}, pair-edge Q = {q_pair}, {:.1}s{}",
            elapsed.as_secs_f64(),
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}

// ---------------------------------------------------------------- criteria 3, 4

fn topic_corpus(seed: u64) -> TopicCorpusSpec {
    TopicCorpusSpec {
        n_docs: 300,
        vocab_size: 30,
        n_topics: 3,
        tokens_per_doc: 50,
        noise_rate: 0.05,
        seed,
    }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut scores = Vec::new();
    for seed in 0..10 {
        let (m, planted) = generate_topic_corpus(&topic_corpus(seed)).map_err(|e| e.to_string())?;
        let params = FitParams { seed, iterations: 500, ..FitParams::default() };
        let model = fit_lda(&m, 3, &params).map_err(|e| e.to_string())?;
        scores.push(align_topics(&model, &planted).map_err(|e| e.to_string())?.score);
    }
    let hits = scores.iter().filter(|&&s| s >= 0.85).count();
    let elapsed = start.elapsed();
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    check(
        hits >= 8 && elapsed < Duration::from_secs(30),
        format!("{hits}/10 seeds align >= 0.85 (min {min:.3}), {:.1}s", elapsed.as_secs_f64()),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut chosen = Vec::new();
    for seed in 0..10 {
        let (m, _) = generate_topic_corpus(&topic_corpus(seed)).map_err(|e| e.to_string())?;
        let params = FitParams { seed, iterations: 500, ..FitParams::default() };
        chosen.push(select_topic_count(&m, 2, 6, &params).map_err(|e| e.to_string())?.chosen_k);
    }
    let hits = chosen.iter().filter(|&&k| k == 3).count();
    let elapsed = start.elapsed();
    check(
        hits >= 8 && elapsed < Duration::from_secs(180),
        format!("{hits}/10 seeds choose k = 3 (chosen {chosen:?}), {:.1}s", elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut aris = Vec::new();
    for seed in 0..10 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let out = synth_and_pipeline(dir.path(), seed, "4..8", 300)?;
        let clusters = ClusterReport::load(&out.join("clusters.json")).map_err(|e| e.to_string())?;
        let model = TopicModel::load(&out.join("phenotype-model.json")).map_err(|e| e.to_string())?;
        let truth = GroundTruth::load(&dir.path().join("data/truth.json")).map_err(|e| e.to_string())?;
        aris.push(clustering_agreement(&clusters, &model, &truth).map_err(|e| e.to_string())?);
    }
    let hits = aris.iter().filter(|&&a| a >= 0.9).count();
    let elapsed = start.elapsed();
    let shown: Vec<String> = aris.iter().map(|a| format!("{a:.2}")).collect();
    check(
        hits >= 8 && elapsed < Duration::from_secs(120),
        format!("{hits}/10 seeds ARI >= 0.9 [{}], {:.1}s", shown.join(" "), elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- criterion 6

/// A model whose terms exercise DOT quoting: quotes, backslashes, spaces.
fn awkward_workflow_model() -> TopicModel {
    let vocab: Vec<String> = [
        "nurse|say \"hi\"",
        "doc\\tor|review",
        "nurse|say \"hi\" -> doc\\tor|review",
        "doc\\tor|review -> nurse|say \"hi\"",
        "a b|c",
        "a b|c -> a b|c",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    TopicModel {
        k: 2,
        alpha: 0.1,
        beta: 0.01,
        seed: 0,
        iterations: 1,
        vocab,
        doc_ids: vec!["d1".into()],
        phi: vec![vec![0.3, 0.2, 0.25, 0.15, 0.05, 0.05], vec![0.005, 0.005, 0.005, 0.005, 0.5, 0.48]],
        theta: vec![vec![0.5, 0.5]],
        empty_docs: vec![],
    }
}

fn criterion_6() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = synth_and_pipeline(dir.path(), 3, "5..7", 200)?;
    let mut tables = 0;
    let mut problems = Vec::new();
    for file in ["workflow-model.json", "phenotype-model.json"] {
        let model = TopicModel::load(&out.join(file)).map_err(|e| e.to_string())?;
        for t in 0..model.k {
            let rows = topic_table(&model, t, DEFAULT_TOP_N, None).map_err(|e| e.to_string())?;
            tables += 1;
            if rows.len() > 10 || rows.iter().any(|r| r.probability < 0.01) {
                problems.push(format!("{file} topic {t}"));
            }
        }
    }
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("report.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    for side in ["workflow_topics", "phenotype_topics"] {
        for topic in report[side].as_array().into_iter().flatten() {
            let terms = topic["terms"].as_array().cloned().unwrap_or_default();
            tables += 1;
            if terms.len() > 10 || terms.iter().any(|r| r["probability"].as_f64().unwrap_or(0.0) < 0.01) {
                problems.push(format!("report {side} {}", topic["id"]));
            }
        }
    }

    let mut dots: Vec<(String, String)> = Vec::new();
    for entry in std::fs::read_dir(out.join("dot")).map_err(|e| e.to_string())? {
        let p = entry.map_err(|e| e.to_string())?.path();
        dots.push((path(&p), std::fs::read_to_string(&p).map_err(|e| e.to_string())?));
    }
    let awkward = awkward_workflow_model();
    for t in 0..awkward.k {
        let text = bundle_miner::report::export_workflow_dot(&awkward, t, DEFAULT_TOP_N, DEFAULT_CUTOFF)
            .map_err(|e| e.to_string())?;
        dots.push((format!("awkward topic {t}"), text));
    }
    for (name, text) in &dots {
        if let Err(e) = graphviz_rust::parse(text) {
            problems.push(format!("{name}: {e}"));
        }
    }
    check(
        problems.is_empty() && !dots.is_empty(),
        format!(
            "{tables} topic tables within 10 rows and >= 0.01, {} DOT files parsed{}",
            dots.len(),
            if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
        ),
    )
}

// ---------------------------------------------------------------- criterion 7

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7, n = 9
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let x = x - 1.0;
    let t = x + 7.5;
    let mut a = C[0];
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Upper tail of F(d1, d2) as 1 minus the density integrated over [0, f] by
/// Simpson's rule, after x = f u^4 to smooth the behaviour at zero.
fn f_tail_oracle(f: f64, d1: f64, d2: f64) -> f64 {
    let ln_b = ln_gamma(d1 / 2.0) + ln_gamma(d2 / 2.0) - ln_gamma((d1 + d2) / 2.0);
    let density = |x: f64| {
        if x <= 0.0 {
            return 0.0;
        }
        ((d1 / 2.0) * (d1 / d2).ln() + (d1 / 2.0 - 1.0) * x.ln() - ((d1 + d2) / 2.0) * (1.0 + d1 * x / d2).ln() - ln_b)
            .exp()
    };
    let g = |u: f64| density(f * u.powi(4)) * 4.0 * f * u.powi(3);
    let n = 40_000;
    let h = 1.0 / n as f64;
    let mut s = g(0.0) + g(1.0);
    for i in 1..n {
        s += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - s * h / 3.0
}

/// Two-group one-way ANOVA by hand.
fn anova_oracle(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let n = (a.len() + b.len()) as f64;
    let grand = (a.iter().sum::<f64>() + b.iter().sum::<f64>()) / n;
    let ssb = a.len() as f64 * (ma - grand).powi(2) + b.len() as f64 * (mb - grand).powi(2);
    let ssw: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() + b.iter().map(|x| (x - mb).powi(2)).sum::<f64>();
    let f = ssb / (ssw / (n - 2.0));
    (f, f_tail_oracle(f, 1.0, n - 2.0))
}

fn responses(cluster: &str, inferred: &[f64], random: &[f64]) -> Vec<SurveyResponse> {
    let mk = |arm, score: &f64, i: usize| SurveyResponse {
        respondent_id: format!("r{i}"),
        cluster_id: cluster.to_string(),
        arm,
        score: *score,
    };
    inferred
        .iter()
        .enumerate()
        .map(|(i, s)| mk(Arm::Inferred, s, i))
        .chain(random.iter().enumerate().map(|(i, s)| mk(Arm::Random, s, i)))
        .collect()
}

fn criterion_7() -> Outcome {
    let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(7_000);
    let mut datasets = Vec::new();
    while datasets.len() < 20 {
        let na = rng.random_range(2..=8);
        let nb = rng.random_range(2..=8);
        let bias = rng.random_range(0..3);
        let a: Vec<f64> = (0..na).map(|_| levels[(rng.random_range(0..5) + bias).min(4)]).collect();
        let b: Vec<f64> = (0..nb).map(|_| levels[rng.random_range(0..5)]).collect();
        let spread = |v: &[f64]| v.iter().any(|x| *x != v[0]);
        if spread(&a) || spread(&b) {
            datasets.push((a, b));
        }
    }
    let mut all = Vec::new();
    for (i, (a, b)) in datasets.iter().enumerate() {
        all.extend(responses(&format!("c{}", i + 1), a, b));
    }
    let results = anova_paired_arms(&all).map_err(|e| e.to_string())?;
    let mut worst_f: f64 = 0.0;
    let mut worst_p: f64 = 0.0;
    for ((a, b), r) in datasets.iter().zip(&results) {
        let (f, p) = anova_oracle(a, b);
        worst_f = worst_f.max((r.result.f_statistic - f).abs());
        worst_p = worst_p.max((r.result.p_value - p).abs());
    }

    let same = [0.25, 0.5, 0.75, 0.5];
    let ident = anova_paired_arms(&responses("c0", &same, &same)).map_err(|e| e.to_string())?;
    let ident_ok = ident[0].result.f_statistic == 0.0 && ident[0].result.p_value == 1.0;

    let likert = [
        ("Not At All Likely", 0.0),
        ("Slightly Likely", 0.25),
        ("Moderately Likely", 0.5),
        ("Very Likely", 0.75),
        ("Completely Likely", 1.0),
    ];
    let likert_ok = likert.iter().all(|(t, v)| likert_to_score(t).ok() == Some(*v));

    check(
        results.len() == 20 && worst_f <= 1e-6 && worst_p <= 1e-6 && ident_ok && likert_ok,
        format!(
            "20 datasets: max |dF| = {worst_f:.1e}, max |dp| = {worst_p:.1e}; identical arms F = {}, p = {}; Likert {}",
            ident[0].result.f_statistic,
            ident[0].result.p_value,
            if likert_ok { "exact" } else { "MISMATCH" }
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

/// 25 topics over 40 codes; topic t keeps 5 + t % 6 entries at or above 0.01.
fn counterpart_model(rng: &mut ChaCha8Rng) -> TopicModel {
    let k = 25;
    let v = 40;
    let phi = (0..k)
        .map(|t| {
            let keep = 5 + t % 6;
            let mut row = vec![0.0; v];
            let mut idx: Vec<usize> = (0..v).collect();
            for i in 0..keep {
                let j = rng.random_range(i..v);
                idx.swap(i, j);
            }
            let tail = 0.004 * (v - keep) as f64;
            let weights: Vec<f64> = (0..keep).map(|_| rng.random_range(0.5..2.0)).collect();
            let total: f64 = weights.iter().sum();
            for (i, &j) in idx.iter().enumerate() {
                row[j] = if i < keep { (1.0 - tail) * weights[i] / total } else { 0.004 };
            }
            row
        })
        .collect();
    TopicModel {
        k,
        alpha: 0.1,
        beta: 0.01,
        seed: 0,
        iterations: 1,
        vocab: (0..v).map(|c| format!("{}", 100 + c)).collect(),
        doc_ids: vec!["h1".into()],
        phi,
        theta: vec![vec![1.0 / k as f64; k]],
        empty_docs: vec![],
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8_000);
    let all: Vec<usize> = (0..25).collect();
    // Inferred clusters are drawn among the smallest topics (5 entries each), so
    // every draw of the same size has enough diagnoses to trim down from.
    let smallest: Vec<usize> = all.iter().copied().filter(|t| t % 6 == 0).collect();
    let mut failures = Vec::new();
    for call in 0..100u64 {
        let model = counterpart_model(&mut rng);
        let m = rng.random_range(1..=smallest.len());
        let inferred: Vec<usize> = rand::seq::index::sample(&mut rng, smallest.len(), m)
            .into_iter()
            .map(|i| smallest[i])
            .collect();
        let want: usize = inferred
            .iter()
            .map(|&t| topic_diagnoses(&model, t).map(|d| d.len()))
            .sum::<Result<usize, _>>()
            .map_err(|e| e.to_string())?;
        match generate_random_counterpart(&inferred, &all, &model, call) {
            Ok(cp) => {
                let disjoint = cp.topics.iter().all(|t| !inferred.contains(&t.topic));
                if cp.topics.len() != m || cp.diagnosis_count() != want || !disjoint {
                    failures.push(format!("call {call}: {} topics / {} diagnoses, want {m} / {want}", cp.topics.len(), cp.diagnosis_count()));
                }
            }
            Err(e) => failures.push(format!("call {call}: {e}")),
        }
    }
    check(
        failures.is_empty(),
        format!(
            "100 calls preserve topic and diagnosis counts{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}

// ---------------------------------------------------------------- criterion 9

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("big");
    // 3 bundles x 3334 patients x 100 events = 1,000,200 events
    run(
        "synth",
        &[
            ("out_dir", path(&data)),
            ("synth.patients_per_bundle", "3334".into()),
            ("synth.tokens_per_patient_seq", "100".into()),
        ],
    )?;
    let events = std::fs::read_to_string(data.join("events.csv")).map_err(|e| e.to_string())?.lines().count() - 1;
    let work = dir.path().join("big-run");
    let inputs = [
        ("events", path(&data.join("events.csv"))),
        ("diagnoses", path(&data.join("diagnoses.csv"))),
        ("codemap", path(&data.join("codemap.csv"))),
        ("out_dir", path(&work)),
    ];
    let start = Instant::now();
    run("ingest", &inputs)?;
    run("mine", &inputs)?;
    let scale = start.elapsed();

    // Same inputs and seeds, two separate output directories.
    let a = synth_and_pipeline(&dir.path().join("a"), 11, "4..6", 200)?;
    let data = dir.path().join("a/data");
    let b = dir.path().join("b");
    run(
        "pipeline",
        &[
            ("events", path(&data.join("events.csv"))),
            ("diagnoses", path(&data.join("diagnoses.csv"))),
            ("codemap", path(&data.join("codemap.csv"))),
            ("out_dir", path(&b)),
            ("k_range", "4..6".into()),
            ("q_range", "4..6".into()),
            ("iterations", "200".into()),
            ("seed", "11".into()),
        ],
    )?;
    let ra = std::fs::read(a.join("report.json")).map_err(|e| e.to_string())?;
    let rb = std::fs::read(b.join("report.json")).map_err(|e| e.to_string())?;
    check(
        events >= 1_000_000 && scale < Duration::from_secs(300) && ra == rb,
        format!(
            "ingest + mine on {events} events in {:.1}s; re-run report.json {} ({} bytes)",
            scale.as_secs_f64(),
            if ra == rb { "byte-identical" } else { "DIFFERS" },
            ra.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 association worked example", criterion_1),
        ("2 modularity oracle", criterion_2),
        ("3 LDA recovery", criterion_3),
        ("4 topic-count selection", criterion_4),
        ("5 end-to-end bundle recovery", criterion_5),
        ("6 reporting contract", criterion_6),
        ("7 ANOVA oracle", criterion_7),
        ("8 counterpart contract", criterion_8),
        ("9 scale and determinism", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL ({detail})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
