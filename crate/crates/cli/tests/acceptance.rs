//! Acceptance suite: one line per criterion, non-zero exit if any fails.
#![allow(clippy::excessive_precision)]

#[path = "../../core/tests/support/oracles.rs"]
mod oracles;
#[path = "../../core/tests/support/responses.rs"]
mod responses;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use autoct_core::agents::AuditLog;
use autoct_core::domain::{load_trials, TrialRecord};
use autoct_core::modeling::{f1, linear_shap, pr_auc, roc_auc, threshold, LogisticRegression};
use autoct_core::pipeline::{run, RunConfig, RunObserver, RunOptions, RunPhase};
use autoct_core::retrieval::{nct_exclusion_search, Document, HashingEmbedder, RetrievalIndex, Source};
use autoct_core::search::{uct, SearchTree};
use autoct_core::testing::{FailAfter, PlantedScenario, ScenarioFiles, PLANTED_FEATURE};
use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(got: f64, want: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || {
        format!("{what}: got {got:.17}, want {want:.17}")
    })
}

// 1

fn random_scored(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.gen_range(1..=20);
    (0..n)
        .map(|_| (f64::from(rng.gen_range(0u8..=8)) / 8.0, rng.gen_bool(0.5)))
        .unzip()
}

fn metric_oracles() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut roc_n, mut pr_n, mut f1_n, mut ties) = (0, 0, 0, 0);
    while roc_n < 200 || pr_n < 200 || f1_n < 200 {
        let (scores, labels) = random_scored(&mut rng);
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if sorted.len() < scores.len() {
            ties += 1;
        }
        if let Some(want) = oracles::roc_pairwise(&scores, &labels) {
            if roc_n < 200 {
                close(
                    roc_auc(&scores, &labels).map_err(|e| e.to_string())?,
                    want,
                    1e-12,
                    "roc_auc",
                )?;
                roc_n += 1;
            }
        }
        if let Some(want) = oracles::ap_sweep(&scores, &labels) {
            if pr_n < 200 {
                close(
                    pr_auc(&scores, &labels).map_err(|e| e.to_string())?,
                    want,
                    1e-12,
                    "pr_auc",
                )?;
                pr_n += 1;
            }
        }
        if f1_n < 200 {
            let pred = threshold(&scores);
            let got: f64 = f1(&pred, &labels).map_err(|e| e.to_string())?;
            close(got, oracles::f1_counts(&pred, &labels), 1e-12, "f1")?;
            f1_n += 1;
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "200 instances per metric within 1e-12 ({ties} with tied scores) in {:.1} ms",
        elapsed.as_secs_f64() * 1e3
    ))
}

// 2

/// (q, n, parent_n, alpha, value) evaluated by hand at 20 significant digits.
const UCT_TABLE: [(f64, u64, u64, f64, f64); 13] = [
    (3.0, 4, 10, 1.0, 1.5087135646925731754),
    (0.5, 1, 1, 1.0, 0.5),
    (2.5, 3, 7, 1.0, 1.6387131917552900850),
    (0.8, 1, 2, 1.0, 1.6325546111576977564),
    (7.3, 10, 25, 1.0, 1.2973513747994447884),
    (1.2, 2, 5, 0.5, 1.0485306444985253701),
    (4.0, 5, 6, 1.414, 1.6464557538036700305),
    (0.0, 3, 9, 2.0, 1.7116170044088793884),
    (9.9, 11, 100, 1.0, 1.5470331020047015245),
    (0.75, 1, 3, 0.0, 0.75),
    (1.0, 1, 1000, 1.0, 3.6282608848784659893),
    (2.6, 3, 4, 1.0, 1.5464446601125393118),
    (2.0, 4, 16, 1.0, 1.3325546111576977563),
];

fn uct_table() -> Outcome {
    for (q, n, parent, alpha, want) in UCT_TABLE {
        close(
            uct(q, n, parent, alpha),
            want,
            1e-9,
            &format!("uct({q}, {n}, {parent}, {alpha})"),
        )?;
    }
    ensure(uct(1.0, 0, 5, 1.0) == f64::MAX, || "n = 0 is not the maximum".into())?;
    Ok(format!("{} tuples within 1e-9, n = 0 gives f64::MAX", UCT_TABLE.len()))
}

// 3

const WORDS: [&str; 12] = [
    "dengue", "vaccine", "trial", "fever", "aspirin", "safety", "dose", "phase", "oncology", "placebo", "children",
    "adults",
];

fn day(d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).expect("date") + chrono::Days::new(u64::from(d))
}

fn phrase(rng: &mut ChaCha8Rng, max: usize) -> String {
    let n = rng.gen_range(1..=max);
    (0..n)
        .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn leakage_random() -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut returned = 0;
    for trial in 0..1000 {
        let n_docs = rng.gen_range(1..25);
        let docs: Vec<Document> = (0..n_docs)
            .map(|i| Document {
                doc_id: format!("NCT{i:08}"),
                source: Source::Nct,
                title: String::new(),
                body: phrase(&mut rng, 7),
                date: day(rng.gen_range(0..3000)),
                nct_id: None,
            })
            .collect();
        let dates: BTreeMap<String, NaiveDate> = docs.iter().map(|d| (d.doc_id.clone(), d.date)).collect();
        let query = phrase(&mut rng, 3);
        let cutoff = day(rng.gen_range(0..3200));
        let k = rng.gen_range(1..10);
        let index =
            RetrievalIndex::build(Source::Nct, docs, Box::new(HashingEmbedder::new(64))).map_err(|e| e.to_string())?;
        let searches = [
            ("bm25", index.bm25_search(&query, k, cutoff)),
            (
                "vector",
                index.vector_search(&query, k, cutoff).map_err(|e| e.to_string())?,
            ),
            (
                "hybrid",
                index.hybrid_search(&query, k, cutoff).map_err(|e| e.to_string())?,
            ),
            (
                "nct_exclusion",
                nct_exclusion_search(&index, &query, k, cutoff).map_err(|e| e.to_string())?,
            ),
        ];
        for (name, hits) in searches {
            for h in hits {
                returned += 1;
                ensure(dates[&h.doc_id] < cutoff, || {
                    format!(
                        "trial {trial}: {name} returned {} dated {} with cutoff {cutoff}",
                        h.doc_id, dates[&h.doc_id]
                    )
                })?;
            }
        }
    }
    Ok(returned)
}

// 4

/// Okapi BM25 (k1 = 1.5, b = 0.75) of the fixed corpus, evaluated by hand.
const BM25_TABLE: [(&str, [Option<f64>; 5]); 2] = [
    (
        "aspirin fever",
        [
            Some(2.0092725119597703441),
            Some(1.1785156079764037595),
            Some(0.6734374902722307197),
            None,
            None,
        ],
    ),
    (
        "dengue vaccine trial",
        [
            None,
            Some(0.4964441454116853995),
            Some(1.7614876734157591357),
            Some(2.0092725119597703441),
            Some(0.6185205746112801698),
        ],
    ),
];

fn bm25_corpus() -> Result<RetrievalIndex, String> {
    let bodies = [
        "aspirin reduces fever",
        "aspirin aspirin trial in children",
        "vaccine trial for dengue fever in adults",
        "dengue vaccine safety",
        "placebo controlled trial",
    ];
    let docs = bodies
        .iter()
        .enumerate()
        .map(|(i, b)| Document {
            doc_id: format!("d{}", i + 1),
            source: Source::Pubmed,
            title: String::new(),
            body: b.to_string(),
            date: NaiveDate::from_ymd_opt(2000, 1, 1).expect("date"),
            nct_id: None,
        })
        .collect();
    RetrievalIndex::build(Source::Pubmed, docs, Box::new(HashingEmbedder::new(64))).map_err(|e| e.to_string())
}

fn bm25_hand_check() -> Outcome {
    let index = bm25_corpus()?;
    let cutoff = NaiveDate::from_ymd_opt(2020, 1, 1).expect("date");
    let mut checked = 0;
    for (query, want) in BM25_TABLE {
        let hits: BTreeMap<String, f64> = index
            .bm25_search(query, 10, cutoff)
            .into_iter()
            .map(|h| (h.doc_id, h.score))
            .collect();
        for (i, w) in want.iter().enumerate() {
            let id = format!("d{}", i + 1);
            match (w, hits.get(&id)) {
                (Some(w), Some(g)) => close(*g, *w, 1e-9, &format!("{query} / {id}"))?,
                (None, None) => {}
                (w, g) => return Err(format!("{query} / {id}: got {g:?}, want {w:?}")),
            }
            checked += 1;
        }
    }
    let mut fused_checked = 0;
    for (query, _) in BM25_TABLE {
        for k in 1..=5 {
            let depth = 2 * k;
            let lists = [
                index.bm25_search(query, depth, cutoff),
                index.vector_search(query, depth, cutoff).map_err(|e| e.to_string())?,
            ];
            let mut manual: BTreeMap<String, f64> = BTreeMap::new();
            for list in &lists {
                for (rank, h) in list.iter().enumerate() {
                    *manual.entry(h.doc_id.clone()).or_insert(0.0) += 1.0 / (60.0 + (rank + 1) as f64);
                }
            }
            let hybrid = index.hybrid_search(query, k, cutoff).map_err(|e| e.to_string())?;
            ensure(hybrid.len() == k.min(manual.len()), || {
                format!("{query} k={k}: {} hits", hybrid.len())
            })?;
            let floor = hybrid.iter().map(|h| h.score).fold(f64::INFINITY, f64::min);
            for h in &hybrid {
                ensure(manual.get(&h.doc_id) == Some(&h.score), || {
                    format!(
                        "{query} k={k} {}: fused {} vs {:?}",
                        h.doc_id,
                        h.score,
                        manual.get(&h.doc_id)
                    )
                })?;
            }
            for (id, s) in &manual {
                if !hybrid.iter().any(|h| &h.doc_id == id) {
                    ensure(*s <= floor, || {
                        format!("{query} k={k}: {id} ({s}) dropped above {floor}")
                    })?;
                }
            }
            fused_checked += 1;
        }
    }
    Ok(format!(
        "{checked} BM25 scores within 1e-9; RRF equal to the manual sum on {fused_checked} fused queries"
    ))
}

// 5, 6, 9 and the end-to-end half of 3 share one scenario.

const ROLLOUTS: usize = 3;
const MAX_CHILDREN: usize = 6;

/// Per-checkpoint bookkeeping checks, and sealing of the test trials while
/// the search runs.
#[derive(Default)]
struct Bookkeeping {
    seal: Option<(Arc<PlantedScenario>, Vec<TrialRecord>)>,
    errors: Mutex<Vec<String>>,
    best: Mutex<Vec<f64>>,
}

impl RunObserver for Bookkeeping {
    fn phase(&self, p: RunPhase) {
        if let Some((scenario, test)) = &self.seal {
            match p {
                RunPhase::Search => scenario.seal(test),
                RunPhase::TestEvaluation => scenario.unseal(),
                RunPhase::Report => {}
            }
        }
    }

    fn checkpoint(&self, tree: &SearchTree, rollout: usize) {
        if let Err(e) = oracles::check_tree(tree, MAX_CHILDREN) {
            self.errors
                .lock()
                .expect("lock")
                .push(format!("after rollout {rollout}: {e}"));
        }
        let mut best = self.best.lock().expect("lock");
        if best.last().is_some_and(|b| tree.best.score < *b) {
            self.errors
                .lock()
                .expect("lock")
                .push(format!("best decreased at rollout {rollout}"));
        }
        best.push(tree.best.score);
    }
}

struct World {
    _tmp: tempfile::TempDir,
    root: PathBuf,
    files: ScenarioFiles,
    index: PathBuf,
    cache: PathBuf,
    /// Sealed-trial violations and audited cutoff violations while recording.
    record_violations: (Vec<String>, usize),
    /// Audited violations and bookkeeping of the in-process replay.
    replay_violations: usize,
    replay_observations: usize,
    replay_bookkeeping: Arc<Bookkeeping>,
    replay_dir: PathBuf,
}

fn autoct() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_autoct"));
    c.env("AUTOCT_LOG", "error");
    c
}

impl World {
    /// Config text for a run into `root/out`, sharing the recorded cache.
    fn config_text(&self, out: &str, mode: &str) -> String {
        self.files
            .config_toml(&self.index, &self.root.join(out), ROLLOUTS, mode)
            .replace("[llm]\n", &format!("[llm]\ncache_dir = \"{}\"\n", self.cache.display()))
    }

    fn config_file(&self, out: &str, mode: &str) -> Result<PathBuf, String> {
        let path = self.root.join(format!("{out}.toml"));
        std::fs::write(&path, self.config_text(out, mode)).map_err(|e| e.to_string())?;
        Ok(path)
    }

    fn config(&self, out: &str, mode: &str) -> Result<RunConfig, String> {
        RunConfig::parse(&self.config_text(out, mode), &self.root).map_err(|e| e.to_string())
    }

    fn build() -> Result<Self, String> {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let root = tmp.path().to_path_buf();
        let files = ScenarioFiles::write(&root.join("data"), 100, 11).map_err(|e| e.to_string())?;
        let index = root.join("index");
        let status = autoct()
            .args(["ingest", "--corpus"])
            .arg(&files.corpus)
            .arg("--out")
            .arg(&index)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || {
            format!("ingest failed: {}", String::from_utf8_lossy(&status.stderr))
        })?;
        let mut world = World {
            _tmp: tmp,
            cache: root.join("shared-cache"),
            root,
            files,
            index,
            record_violations: (Vec::new(), 0),
            replay_violations: 0,
            replay_observations: 0,
            replay_bookkeeping: Arc::default(),
            replay_dir: PathBuf::new(),
        };

        // Record the responses of the synthetic scenario.
        let scenario = Arc::new(PlantedScenario::new(&world.files.trials));
        let test = load_trials(&world.files.test).map_err(|e| e.to_string())?;
        let audit = Arc::new(AuditLog::new());
        let options = RunOptions {
            upstream: Some(scenario.clone()),
            observer: Some(Arc::new(Bookkeeping {
                seal: Some((scenario.clone(), test)),
                ..Default::default()
            })),
            audit: Some(audit.clone()),
        };
        run(&world.config("record", "record")?, None, options).map_err(|e| format!("recording: {e}"))?;
        world.record_violations = (scenario.violations(), audit.violation_count());

        // Replay in process with every tool observation audited.
        let audit = Arc::new(AuditLog::new());
        let options = RunOptions {
            upstream: None,
            observer: Some(world.replay_bookkeeping.clone()),
            audit: Some(audit.clone()),
        };
        let s = run(&world.config("replay", "replay")?, None, options).map_err(|e| format!("replay: {e}"))?;
        world.replay_violations = audit.violation_count();
        world.replay_observations = audit.entries().len();
        world.replay_dir = s.run_dir;
        Ok(world)
    }

    /// `autoct run` on a fresh replay config; returns the run dir and wall time.
    fn cli_run(&self, out: &str) -> Result<(PathBuf, Duration), String> {
        let config = self.config_file(out, "replay")?;
        let started = Instant::now();
        let o = autoct()
            .arg("run")
            .arg("--config")
            .arg(&config)
            .output()
            .map_err(|e| e.to_string())?;
        let elapsed = started.elapsed();
        ensure(o.status.code() == Some(0), || {
            format!(
                "autoct run exited {:?}: {}",
                o.status.code(),
                String::from_utf8_lossy(&o.stderr)
            )
        })?;
        Ok((self.root.join(out), elapsed))
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn leakage(world: &Result<World, String>) -> Outcome {
    let returned = leakage_random()?;
    let w = world.as_ref().map_err(|e| format!("scenario setup: {e}"))?;
    ensure(w.record_violations.0.is_empty(), || {
        format!("sealed trials reached: {:?}", w.record_violations.0)
    })?;
    ensure(w.record_violations.1 == 0, || {
        format!("{} violations while recording", w.record_violations.1)
    })?;
    ensure(w.replay_violations == 0, || {
        format!("{} violations in the replay", w.replay_violations)
    })?;
    ensure(w.replay_observations > 0, || "the replay made no tool calls".into())?;
    Ok(format!(
        "1000 random trials x 4 searches, {returned} hits all before the cutoff; replay audited {} tool observations, 0 violations",
        w.replay_observations
    ))
}

fn planted_end_to_end(world: &Result<World, String>) -> Outcome {
    let w = world.as_ref().map_err(|e| format!("scenario setup: {e}"))?;
    let (dir, elapsed) = w.cli_run("cli-a")?;
    let report = read_json(&dir.join("report/report.json"))?;
    let best_score = report["best_score"].as_f64().ok_or("best_score missing")?;
    let best_node = report["best_node"].as_u64().ok_or("best_node missing")?;
    let test_auc = report["best"]["test"]["roc_auc"]
        .as_f64()
        .ok_or("test roc_auc missing")?;
    let has_planted = report["best"]["plans"].to_string().contains(PLANTED_FEATURE);
    let stats = read_json(&dir.join("run_stats.json"))?;
    let upstream = stats["llm"]["upstream_calls"]
        .as_u64()
        .ok_or("upstream_calls missing")?;
    ensure(best_score == 1.0, || format!("best validation roc_auc {best_score}"))?;
    ensure(best_node as usize <= ROLLOUTS, || format!("best node {best_node}"))?;
    ensure(has_planted, || "best plan set lacks the planted feature".into())?;
    ensure(test_auc == 1.0, || format!("test roc_auc {test_auc}"))?;
    ensure(upstream == 0, || format!("{upstream} upstream calls"))?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "validation roc_auc 1.0 at node {best_node} within {ROLLOUTS} rollouts, test roc_auc 1.0, 0 upstream calls, {:.2} s",
        elapsed.as_secs_f64()
    ))
}

fn bookkeeping(world: &Result<World, String>) -> Outcome {
    let w = world.as_ref().map_err(|e| format!("scenario setup: {e}"))?;
    let b = &w.replay_bookkeeping;
    let errors = b.errors.lock().expect("lock").clone();
    ensure(errors.is_empty(), || errors.join("; "))?;
    let best = b.best.lock().expect("lock").clone();
    ensure(best.len() == ROLLOUTS + 1, || format!("{} checkpoints", best.len()))?;
    let tree =
        SearchTree::from_json(&std::fs::read_to_string(w.replay_dir.join("tree.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    oracles::check_tree(&tree, MAX_CHILDREN)?;
    // The checked trajectory is the one the CLI run of criterion 5 took.
    let cli = w.root.join("cli-a/tree.json");
    if cli.exists() {
        ensure(
            std::fs::read(&cli).ok() == std::fs::read(w.replay_dir.join("tree.json")).ok(),
            || "CLI tree differs from the checked replay".into(),
        )?;
    }
    Ok(format!(
        "n, q and links exact at {} checkpoints; best scores {best:?}",
        best.len()
    ))
}

// 7

fn shap() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.gen_range(1..10);
        let mut v = |lo: f64, hi: f64| (0..d).map(|_| rng.gen_range(lo..hi)).collect::<Vec<f64>>();
        let (w, x, mu) = (v(-5.0, 5.0), v(-10.0, 10.0), v(-10.0, 10.0));
        let b = rng.gen_range(-3.0..3.0);
        let phi = linear_shap(&w, &x, &mu).map_err(|e| e.to_string())?;
        let logit = |r: &[f64]| b + w.iter().zip(r).map(|(a, c)| a * c).sum::<f64>();
        let err = (phi.iter().sum::<f64>() - (logit(&x) - logit(&mu))).abs();
        worst = worst.max(err);
        ensure(err < 1e-9, || format!("local accuracy off by {err}"))?;
    }
    let mut worst_enum: f64 = 0.0;
    for _ in 0..100 {
        let mut v = |lo: f64, hi: f64| (0..3).map(|_| rng.gen_range(lo..hi)).collect::<Vec<f64>>();
        let (w, x, mu) = (v(-5.0, 5.0), v(-10.0, 10.0), v(-10.0, 10.0));
        let b = rng.gen_range(-3.0..3.0);
        let phi = linear_shap(&w, &x, &mu).map_err(|e| e.to_string())?;
        let exact = oracles::shapley_enumerate(3, |m| oracles::linear_coalition_value(&w, b, &x, &mu, m));
        for (p, e) in phi.iter().zip(&exact) {
            worst_enum = worst_enum.max((p - e).abs());
            ensure((p - e).abs() <= 1e-9, || format!("phi {p} vs Shapley {e}"))?;
        }
    }
    Ok(format!(
        "local accuracy on 100 models (max error {worst:.1e}); 100 three-feature models match enumeration (max {worst_enum:.1e})"
    ))
}

// 8

fn logistic() -> Outcome {
    let x = [0.0, 2.0];
    let y = [false, true];
    let rows: Vec<Vec<f64>> = x.iter().map(|v| vec![*v]).collect();
    let fit = LogisticRegression::<f64>::fit(&rows, &y, 1.0).map_err(|e| e.to_string())?;
    let (gw, gb, gl) = oracles::grid_minimize_1d(&x, &y, 1.0);
    let fl = oracles::logistic_loss_1d(fit.weights[0], fit.intercept, &x, &y, 1.0);
    close(fl, gl, 1e-3, "loss against the grid")?;
    ensure(fl <= gl + 1e-12, || format!("fit loss {fl} above grid loss {gl}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.gen_range(1..5);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..rng.gen_range(1..8) {
            let r: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
            rows.extend([r.clone(), r]);
            y.extend([true, false]);
        }
        let fit = LogisticRegression::<f64>::fit(&rows, &y, 1.0).map_err(|e| e.to_string())?;
        let m = fit.weights.iter().fold(0.0f64, |a, w| a.max(w.abs()));
        worst = worst.max(m);
        ensure(m < 1e-6, || format!("symmetric data gave weights {:?}", fit.weights))?;
        let again = LogisticRegression::<f64>::fit(&rows, &y, 1.0).map_err(|e| e.to_string())?;
        ensure(fit == again, || "refit differs".into())?;
    }
    Ok(format!(
        "2-point fit (w {:.4}, b {:.4}) vs grid (w {gw:.4}, b {gb:.4}), loss gap {:.1e}; 20 symmetric datasets |w| <= {worst:.1e}; refits identical",
        fit.weights[0],
        fit.intercept,
        (fl - gl).abs()
    ))
}

// 9

fn tree_files(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).map_err(|e| format!("{}: {e}", d.display()))? {
            let p = e.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).expect("under dir").display().to_string();
                out.insert(rel, std::fs::read(&p).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(out)
}

/// Everything a run writes except its config copies, lock and wall-clock stats.
fn comparable(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = tree_files(dir)?;
    files.retain(|k, _| {
        k == "tree.json"
            || k == "best_model.json"
            || k.starts_with("plans/")
            || k.starts_with("features/")
            || k.starts_with("report/")
    });
    Ok(files)
}

fn same_files(a: &Path, b: &Path) -> Result<usize, String> {
    let (fa, fb) = (comparable(a)?, comparable(b)?);
    ensure(fa.keys().eq(fb.keys()), || {
        format!(
            "file sets differ: {:?} vs {:?}",
            fa.keys().collect::<Vec<_>>(),
            fb.keys().collect::<Vec<_>>()
        )
    })?;
    for (k, v) in &fa {
        ensure(&fb[k] == v, || format!("{k} differs"))?;
    }
    Ok(fa.len())
}

fn determinism(world: &Result<World, String>) -> Outcome {
    let w = world.as_ref().map_err(|e| format!("scenario setup: {e}"))?;
    let a = w.root.join("cli-a");
    let (b, _) = w.cli_run("cli-b")?;
    let compared = same_files(&a, &b)?;
    ensure(
        compared > 0 && comparable(&a)?.keys().any(|k| k.starts_with("features/")),
        || "nothing to compare".into(),
    )?;

    // Kill the CLI once the first checkpoint exists, then resume it.
    let config = w.config_file("cli-killed", "replay")?;
    let dir = w.root.join("cli-killed");
    let mut child = autoct()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .spawn()
        .map_err(|e| e.to_string())?;
    let deadline = Instant::now() + Duration::from_secs(60);
    while !dir.join("tree.json").exists() && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(1));
    }
    let finished_first = child.try_wait().map_err(|e| e.to_string())?.is_some();
    child.kill().ok();
    child.wait().map_err(|e| e.to_string())?;
    let interrupted = !dir.join("report/report.json").exists();
    let o = autoct()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .arg("--resume")
        .arg(&dir)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.success(), || {
        format!("resume failed: {}", String::from_utf8_lossy(&o.stderr))
    })?;
    let resumed = same_files(&a, &dir)?;

    // A backend that fails mid-search, then a resumed run against the same
    // responses.
    let scenario = Arc::new(PlantedScenario::new(&w.files.trials));
    let mut cfg = w.config("flaky", "record")?;
    cfg.llm.cache_dir = None;
    let probe = Arc::new(PlantedScenario::new(&w.files.trials));
    let mut probe_cfg = cfg.clone();
    probe_cfg.data.out_dir = w.root.join("probe");
    run(
        &probe_cfg,
        None,
        RunOptions {
            upstream: Some(probe.clone()),
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let limit = probe.total_calls() / 2;
    let flaky = Arc::new(FailAfter::new(scenario.clone(), limit));
    let err = match run(
        &cfg,
        None,
        RunOptions {
            upstream: Some(flaky),
            ..Default::default()
        },
    ) {
        Ok(_) => return Err("the failing backend did not stop the run".into()),
        Err(e) => e,
    };
    ensure(err.exit_code() == 3, || format!("exit {} for {err}", err.exit_code()))?;
    run(
        &cfg,
        Some(&cfg.data.out_dir),
        RunOptions {
            upstream: Some(scenario),
            ..Default::default()
        },
    )
    .map_err(|e| format!("resume after failure: {e}"))?;
    let after_failure = same_files(&a, &cfg.data.out_dir)?;

    Ok(format!(
        "two replays identical over {compared} files; killed run ({}) resumed to identical {resumed} files; run failed after {limit} calls (exit 3) resumed to identical {after_failure} files",
        if interrupted && !finished_first { "interrupted mid-run" } else { "had already finished" }
    ))
}

// 10

fn example_responses() -> Outcome {
    responses::check_all()
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() -> ExitCode {
    let mut results: Vec<(u8, &str, Outcome)> = vec![
        (1, "metric oracles", guarded(metric_oracles)),
        (2, "uct table", guarded(uct_table)),
    ];
    let world = guarded(World::build);
    results.push((3, "leakage safety", guarded(|| leakage(&world))));
    results.push((4, "bm25 and rrf", guarded(bm25_hand_check)));
    results.push((5, "planted end-to-end", guarded(|| planted_end_to_end(&world))));
    results.push((6, "search bookkeeping", guarded(|| bookkeeping(&world))));
    results.push((7, "linear shap", guarded(shap)));
    results.push((8, "logistic trainer", guarded(logistic)));
    results.push((9, "determinism and resume", guarded(|| determinism(&world))));
    results.push((10, "example responses", guarded(example_responses)));

    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(detail) => println!("criterion {n} ({name}): PASS: {detail}"),
            Err(e) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL: {e}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
