//! Reports rebuilt from the artifacts of a run directory alone.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::store::{BestModel, RunDir, Samples};
use super::PipelineError;
use crate::domain::{MetricKind, PlanSet};
use crate::modeling::{linear_shap, DesignMatrix, MetricReport, Model, ModelKind, TrainedModels};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRow {
    pub id: usize,
    pub parent: Option<usize>,
    pub action: String,
    pub score: f64,
    pub q: f64,
    pub n: u64,
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub f1: f64,
}

impl From<MetricReport<f64>> for MetricSummary {
    fn from(m: MetricReport<f64>) -> Self {
        Self {
            roc_auc: m.roc_auc,
            pr_auc: m.pr_auc,
            f1: m.f1,
        }
    }
}

/// Attribution of one test trial's logit to features, relative to the
/// training means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialShap {
    pub nct_id: String,
    pub label: u8,
    pub base_logit: f64,
    pub logit: f64,
    pub probability: f64,
    /// Per feature, largest magnitude first.
    pub contributions: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestSummary {
    pub node: usize,
    pub plan_set_hash: String,
    pub selected_model: Option<ModelKind>,
    pub degenerate: bool,
    pub validation_scores: BTreeMap<ModelKind, f64>,
    pub validation: Option<MetricSummary>,
    pub test: Option<MetricSummary>,
    /// Selected model's importances per feature, largest first.
    pub feature_importances: Vec<(String, f64)>,
    pub plans: PlanSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: String,
    pub metric: MetricKind,
    pub nodes: Vec<NodeRow>,
    pub best_node: usize,
    pub best_score: f64,
    /// Absent while the run is incomplete.
    pub best: Option<BestSummary>,
    pub shap: Vec<TrialShap>,
}

fn metrics(model: &Model, m: &DesignMatrix, samples: &Samples) -> Result<Option<MetricSummary>, PipelineError> {
    let labels = m.labels_for(|id| samples.label(id))?;
    let scores = model.predict_all(&m.rows);
    // Undefined when the split has a single class; reported as absent.
    Ok(MetricReport::compute(&scores, &labels).ok().map(Into::into))
}

fn sorted_desc(mut v: Vec<(String, f64)>) -> Vec<(String, f64)> {
    v.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));
    v
}

fn shap_rows(models: &TrainedModels, test: &DesignMatrix, samples: &Samples) -> Vec<TrialShap> {
    let (weights, intercept) = match models.models.get(&ModelKind::LogisticRegression) {
        Some(Model::Logistic(lr)) => (lr.weights.clone(), lr.intercept),
        Some(Model::Constant { probability }) => {
            let p = probability.clamp(1e-12, 1.0 - 1e-12);
            (vec![0.0; models.columns.len()], (p / (1.0 - p)).ln())
        }
        _ => return Vec::new(),
    };
    let base_logit = intercept + weights.iter().zip(&models.background).map(|(w, m)| w * m).sum::<f64>();
    test.row_ids
        .iter()
        .zip(&test.rows)
        .map(|(id, row)| {
            let phi = linear_shap(&weights, row, &models.background).expect("aligned columns");
            let mut per_feature: BTreeMap<&str, f64> = BTreeMap::new();
            for (col, p) in models.columns.iter().zip(&phi) {
                *per_feature.entry(col.feature.as_str()).or_insert(0.0) += p;
            }
            let logit = intercept + weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
            TrialShap {
                nct_id: id.clone(),
                label: u8::from(samples.label(id).unwrap_or(false)),
                base_logit,
                logit,
                probability: 1.0 / (1.0 + (-logit).exp()),
                contributions: sorted_desc(per_feature.into_iter().map(|(k, v)| (k.to_string(), v)).collect()),
            }
        })
        .collect()
}

fn read_matrix(dir: &RunDir, rel: &str, models: &TrainedModels) -> Result<Option<DesignMatrix>, PipelineError> {
    let path = dir.path(rel);
    if !path.exists() {
        return Ok(None);
    }
    let f = fs::File::open(&path).map_err(|e| super::store::io_err(&path, e))?;
    DesignMatrix::read_csv(f, &models.columns)
        .map(Some)
        .map_err(|e| dir.corrupt(format!("{rel}: {e}")))
}

/// Rebuild the report of the run in `dir`, checking the stores on the way.
pub fn build_report(dir: &RunDir) -> Result<RunReport, PipelineError> {
    let config: RunConfig = dir
        .read_json("config.json")?
        .ok_or_else(|| dir.corrupt("config.json is missing"))?;
    let samples: Samples = dir
        .read_json("samples.json")?
        .ok_or_else(|| dir.corrupt("samples.json is missing"))?;
    let tree = dir.load_tree()?.ok_or_else(|| dir.corrupt("tree.json is missing"))?;
    let hashes: BTreeSet<&str> = tree.nodes.iter().map(|n| n.plan_set_hash.as_str()).collect();
    for h in &hashes {
        dir.load_plans(h)?;
    }
    let nodes = tree
        .nodes
        .iter()
        .map(|n| NodeRow {
            id: n.id,
            parent: n.parent,
            action: n.action.as_ref().map_or_else(|| "root".to_string(), |a| a.summary()),
            score: n.score,
            q: n.q,
            n: n.n,
            depth: n.depth,
        })
        .collect();

    let mut best = None;
    let mut shap = Vec::new();
    if let Some(bm) = dir.read_json::<BestModel>("best_model.json")? {
        let expected = &tree.node(tree.best.node).plan_set_hash;
        if bm.node != tree.best.node || &bm.plan_set_hash != expected {
            return Err(dir.corrupt(format!(
                "best_model.json is for node {} ({}), tree best is node {} ({expected})",
                bm.node, bm.plan_set_hash, tree.best.node
            )));
        }
        let models = &bm.models;
        let all = read_matrix(dir, &RunDir::features_rel(&bm.plan_set_hash, false), models)?
            .ok_or_else(|| dir.corrupt("features of the best plan set are missing"))?;
        let valid_ids: BTreeSet<String> = samples.valid.iter().map(|t| t.nct_id.clone()).collect();
        let xv = all.subset(&valid_ids);
        let test = read_matrix(dir, &RunDir::features_rel(&bm.plan_set_hash, true), models)?;
        let selected = models.selected_model();
        let validation = match selected {
            Some(m) => metrics(m, &xv, &samples)?,
            None => None,
        };
        let test_metrics = match (selected, &test) {
            (Some(m), Some(t)) => metrics(m, t, &samples)?,
            _ => None,
        };
        if let Some(t) = &test {
            shap = shap_rows(models, t, &samples);
        }
        best = Some(BestSummary {
            node: bm.node,
            plan_set_hash: bm.plan_set_hash.clone(),
            selected_model: models.selected,
            degenerate: models.degenerate,
            validation_scores: models.validation.clone(),
            validation,
            test: test_metrics,
            feature_importances: sorted_desc(models.feature_importances().into_iter().collect()),
            plans: dir.load_plans(&bm.plan_set_hash)?,
        });
    }
    Ok(RunReport {
        task: config.data.task,
        metric: config.data.metric,
        nodes,
        best_node: tree.best.node,
        best_score: tree.best.score,
        best,
        shap,
    })
}

fn metric_line(label: &str, m: &Option<MetricSummary>) -> String {
    match m {
        Some(m) => format!(
            "{label:<11} roc_auc {:.4}  pr_auc {:.4}  f1 {:.4}\n",
            m.roc_auc, m.pr_auc, m.f1
        ),
        None => format!("{label:<11} not available\n"),
    }
}

/// Human-readable summary.
pub fn render_text(r: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Task: {}", r.task);
    let _ = writeln!(s, "Metric: {}", r.metric.as_str());
    let _ = writeln!(s, "\nSearch tree ({} nodes)", r.nodes.len());
    let _ = writeln!(
        s,
        "{:>4} {:>6} {:>5} {:>8} {:>10} {:>4}  action",
        "id", "parent", "depth", "score", "q", "n"
    );
    for n in &r.nodes {
        let parent = n.parent.map_or_else(|| "-".to_string(), |p| p.to_string());
        let _ = writeln!(
            s,
            "{:>4} {:>6} {:>5} {:>8.4} {:>10.4} {:>4}  {}",
            n.id, parent, n.depth, n.score, n.q, n.n, n.action
        );
    }
    let _ = writeln!(
        s,
        "\nBest node: {} (validation {} {:.4})",
        r.best_node,
        r.metric.as_str(),
        r.best_score
    );
    let Some(b) = &r.best else {
        s.push_str("Run incomplete: no evaluated best model yet.\n");
        return s;
    };
    let model = b.selected_model.map_or("none", |k| k.as_str());
    let _ = writeln!(
        s,
        "Selected model: {model}{}",
        if b.degenerate {
            " (single-class training labels)"
        } else {
            ""
        }
    );
    for (k, v) in &b.validation_scores {
        let _ = writeln!(s, "  {:<20} {:.4}", k.as_str(), v);
    }
    s.push('\n');
    s.push_str(&metric_line("Validation", &b.validation));
    s.push_str(&metric_line("Test", &b.test));
    let _ = writeln!(s, "\nFeatures ({})", b.plans.len());
    for p in b.plans.plans() {
        let _ = writeln!(s, "  {}: {}", p.feature_name, p.feature_idea);
    }
    s.push_str("\nFeature importance\n");
    for (f, v) in &b.feature_importances {
        let _ = writeln!(s, "  {f:<32} {v:.4}");
    }
    if !r.shap.is_empty() {
        let mut mean_abs: BTreeMap<&str, f64> = BTreeMap::new();
        for t in &r.shap {
            for (f, v) in &t.contributions {
                *mean_abs.entry(f.as_str()).or_insert(0.0) += v.abs() / r.shap.len() as f64;
            }
        }
        let ranked = sorted_desc(mean_abs.into_iter().map(|(k, v)| (k.to_string(), v)).collect());
        let _ = writeln!(
            s,
            "\nMean |SHAP| over {} test trials (logistic model, logit scale)",
            r.shap.len()
        );
        for (f, v) in ranked {
            let _ = writeln!(s, "  {f:<32} {v:.4}");
        }
    }
    s
}

pub fn find_trial<'a>(r: &'a RunReport, nct_id: &str) -> Option<&'a TrialShap> {
    r.shap.iter().find(|t| t.nct_id == nct_id)
}

/// Narrative for one trial.
pub fn render_trial(t: &TrialShap) -> String {
    let mut s = format!(
        "{}: label {}, predicted probability {:.4} (logit {:.4}, baseline {:.4})\n",
        t.nct_id, t.label, t.probability, t.logit, t.base_logit
    );
    for (f, v) in &t.contributions {
        let dir = if *v >= 0.0 { "raises" } else { "lowers" };
        let _ = writeln!(s, "  {f:<32} {v:+.4}  {dir} the odds of success");
    }
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Horizontal bar chart of one trial's contributions.
pub fn render_svg(t: &TrialShap) -> String {
    const WIDTH: f64 = 640.0;
    const LABEL: f64 = 220.0;
    const ROW: f64 = 24.0;
    const TOP: f64 = 40.0;
    let half = (WIDTH - LABEL - 20.0) / 2.0;
    let center = LABEL + 10.0 + half;
    let max = t.contributions.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    let scale = if max > 0.0 { half / max } else { 0.0 };
    let height = TOP + ROW * t.contributions.len() as f64 + 20.0;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(
        s,
        "<text x=\"10\" y=\"20\" font-size=\"14\">{} (label {}, p = {:.3})</text>",
        xml_escape(&t.nct_id),
        t.label,
        t.probability
    );
    let _ = writeln!(
        s,
        "<line x1=\"{center}\" y1=\"{}\" x2=\"{center}\" y2=\"{}\" stroke=\"#444\"/>",
        TOP - 6.0,
        height - 14.0
    );
    for (i, (f, v)) in t.contributions.iter().enumerate() {
        let y = TOP + ROW * i as f64;
        let w = v.abs() * scale;
        let x = if *v >= 0.0 { center } else { center - w };
        let color = if *v >= 0.0 { "#d6604d" } else { "#4393c3" };
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            LABEL,
            y + 14.0,
            xml_escape(f)
        );
        let _ = writeln!(
            s,
            "<rect x=\"{x:.2}\" y=\"{:.1}\" width=\"{w:.2}\" height=\"{:.1}\" fill=\"{color}\"><title>{v:+.6}</title></rect>",
            y + 3.0,
            ROW - 6.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Write `report/report.txt`, `report/report.json` and per-trial SHAP files.
pub fn write_report(dir: &RunDir, r: &RunReport) -> Result<(), PipelineError> {
    dir.write_bytes("report/report.txt", render_text(r).as_bytes())?;
    dir.write_json("report/report.json", r)?;
    for t in &r.shap {
        dir.write_json(&format!("report/shap/{}.json", t.nct_id), t)?;
        dir.write_bytes(&format!("report/shap/{}.svg", t.nct_id), render_svg(t).as_bytes())?;
    }
    Ok(())
}
