use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::json;

use platoon_core::simulator::write_runs_csv;
use platoon_core::stats::summarize;
use platoon_core::structure::{export_policy_grid, write_grid_csv};
use platoon_core::{
    cardinality, check_all, coupled_experiment, exact_average_cost, optimize_delta,
    reachable_set, value_iterate, EvaluationMode, ExperimentConfig, Mdp, ModelParams, Policy,
    PolicyTable, PropertyReport, SolverOptions,
};

use crate::config::Settings;

/// Confidence level of every reported interval.
pub const CONFIDENCE: f64 = 0.99;

/// Failures that map to distinct exit codes.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    SizeExceeded { cardinality: u128, budget: u64 },
    Violations { count: usize },
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::SizeExceeded { cardinality, budget } => write!(
                f,
                "SIZE_EXCEEDED: state space has {cardinality} states, budget is {budget}"
            ),
            Failure::Violations { count } => write!(f, "{count} structural violations"),
        }
    }
}

impl std::error::Error for Failure {}

fn within_budget(m: &ModelParams, budget: u64) -> bool {
    cardinality(m) <= budget as u128
}

fn require_budget(m: &ModelParams, budget: u64) -> anyhow::Result<()> {
    if within_budget(m, budget) {
        Ok(())
    } else {
        Err(Failure::SizeExceeded {
            cardinality: cardinality(m),
            budget,
        }
        .into())
    }
}

/// Output directory plus the list of files written, for the manifest.
struct Output {
    dir: PathBuf,
    command: &'static str,
    settings: Settings,
    files: Vec<String>,
}

impl Output {
    fn new(command: &'static str, settings: &Settings) -> anyhow::Result<Output> {
        fs::create_dir_all(&settings.out)
            .with_context(|| format!("creating {}", settings.out.display()))?;
        Ok(Output {
            dir: settings.out.clone(),
            command,
            settings: settings.clone(),
            files: Vec::new(),
        })
    }

    /// Opens `name` and writes the provenance header lines.
    fn csv(&mut self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        writeln!(w, "# command: {}", self.command)?;
        writeln!(w, "# config: {}", self.settings.to_json())?;
        self.files.push(name.to_string());
        Ok(w)
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        let text = serde_json::to_string_pretty(value)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, extra: serde_json::Value) -> anyhow::Result<Vec<PathBuf>> {
        let name = format!("{}_manifest.json", self.command);
        let manifest = json!({
            "command": self.command,
            "config": self.settings,
            "files": self.files,
            "notes": extra,
        });
        self.json(&name.clone(), &manifest)?;
        Ok(self.files.iter().map(|f| self.dir.join(f)).collect())
    }
}

fn params_json(m: &ModelParams) -> serde_json::Value {
    serde_json::to_value(m).expect("params serialize")
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub average_cost: f64,
    pub iterations: usize,
    pub files: Vec<PathBuf>,
}

pub fn solve(settings: &Settings) -> anyhow::Result<SolveOutcome> {
    let m = settings.single()?;
    require_budget(&m, settings.budget)?;
    let sol = value_iterate(&m, SolverOptions::default())?;
    let exact = exact_average_cost(&sol.policy)?;
    let mut out = Output::new("solve", settings)?;

    let mut w = out.csv("policy.csv")?;
    sol.policy.write_csv(Some(&sol.values), &mut w)?;
    w.flush()?;

    let reach = reachable_set(&sol.policy);
    let mut w = out.csv("policy_grid.csv")?;
    write_grid_csv(&export_policy_grid(&sol.policy, &reach), &mut w)?;
    w.flush()?;

    out.json(
        "solve_report.json",
        &json!({
            "params": params_json(&m),
            "states": cardinality(&m) as u64,
            "decision_states": sol.policy.mdp().len(),
            "exact_average_cost": exact,
            "report": sol.report,
        }),
    )?;
    for warning in &sol.report.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "solved {} decision states ({} total) in {} sweeps: average cost {exact:.6}, converged={}",
        sol.policy.mdp().len(),
        cardinality(&m),
        sol.report.iterations_run,
        sol.report.converged
    );
    let files = out.finish(json!({ "converged": sol.report.converged }))?;
    Ok(SolveOutcome {
        average_cost: exact,
        iterations: sol.report.iterations_run,
        files,
    })
}

#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub reports: Vec<PropertyReport>,
    pub violations: usize,
    pub files: Vec<PathBuf>,
}

/// Runs the five structure checks on a solved policy or on one loaded from
/// `policy_csv`. Fails with [`Failure::Violations`] only at `L = 3`.
pub fn verify(
    settings: &Settings,
    policy_csv: Option<&Path>,
    exclude_expiring: bool,
) -> anyhow::Result<VerifyOutcome> {
    let m = settings.single()?;
    require_budget(&m, settings.budget)?;
    let table = match policy_csv {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            PolicyTable::read_csv(Mdp::new(m), file)?
        }
        None => value_iterate(&m, SolverOptions::default())?.policy,
    };
    let mut reports = check_all(&table);
    if exclude_expiring {
        reports = reports.iter().map(|r| r.excluding_expiring()).collect();
    }
    let violations: usize = reports.iter().map(|r| r.violations.len()).sum();
    for r in &reports {
        println!(
            "{}) {:?}: {} violations in {} pairs{}",
            r.property.letter(),
            r.property,
            r.violations.len(),
            r.checked,
            if r.advisory { " (advisory)" } else { "" }
        );
    }
    let mut out = Output::new("verify", settings)?;
    out.json("properties.json", &reports)?;
    let files = out.finish(json!({
        "policy_source": policy_csv.map_or("solved".to_string(), |p| p.display().to_string()),
        "exclude_expiring": exclude_expiring,
        "violations": violations,
    }))?;
    if violations > 0 && m.capacity() == 3 {
        return Err(Failure::Violations { count: violations }.into());
    }
    Ok(VerifyOutcome {
        reports,
        violations,
        files,
    })
}

/// One `delta_pred` row per instance of a predictions file.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub params: ModelParams,
    pub delta: u32,
}

#[derive(Debug, serde::Deserialize)]
struct PredictionRow {
    #[serde(rename = "L")]
    capacity: usize,
    #[serde(rename = "T")]
    deadline: u32,
    p: f64,
    #[serde(rename = "C_ex")]
    cex: f64,
    omega: f64,
    gamma: f64,
    delta_pred: u32,
}

/// Reads `L,T,p,C_ex,omega,gamma,delta_pred` rows; `#` lines are skipped.
pub fn read_predictions(path: &Path) -> anyhow::Result<Vec<Prediction>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: PredictionRow = row?;
        let params = ModelParams::new(row.capacity, row.deadline, row.p, row.cex, row.omega, row.gamma)?;
        if row.delta_pred < 1 || row.delta_pred > row.deadline {
            bail!("delta_pred {} outside [1, {}]", row.delta_pred, row.deadline);
        }
        out.push(Prediction {
            params,
            delta: row.delta_pred,
        });
    }
    Ok(out)
}

fn same_instance(a: &ModelParams, b: &ModelParams) -> bool {
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(1.0);
    a.capacity() == b.capacity()
        && a.deadline() == b.deadline()
        && close(a.arrival_prob(), b.arrival_prob())
        && close(a.expiration_cost(), b.expiration_cost())
        && close(a.waiting_cost(), b.waiting_cost())
        && close(a.platoon_scale(), b.platoon_scale())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Optimal,
    Greedy,
    Deadline,
    Delta,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Optimal,
        PolicyKind::Greedy,
        PolicyKind::Deadline,
        PolicyKind::Delta,
    ];

    pub fn parse(text: &str) -> anyhow::Result<PolicyKind> {
        Ok(match text {
            "optimal" => PolicyKind::Optimal,
            "greedy" => PolicyKind::Greedy,
            "deadline" => PolicyKind::Deadline,
            "delta" => PolicyKind::Delta,
            other => bail!("unknown policy {other:?}"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    #[serde(rename = "L")]
    pub capacity: usize,
    #[serde(rename = "T")]
    pub deadline: u32,
    pub p: f64,
    #[serde(rename = "C_ex")]
    pub cex: f64,
    pub omega: f64,
    pub gamma: f64,
    pub policy: String,
    pub mean: f64,
    pub std_dev: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
    pub replications: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub rows: Vec<SummaryRow>,
    pub files: Vec<PathBuf>,
}

/// Coupled runs of the requested policies on every instance of the grid.
/// `optimal` is skipped above the budget; `delta` uses the exact search
/// within the budget and the predictions file otherwise.
pub fn experiment(
    settings: &Settings,
    kinds: &[PolicyKind],
    predictions: Option<&Path>,
) -> anyhow::Result<ExperimentOutcome> {
    let predicted = match predictions {
        Some(path) => read_predictions(path)?,
        None => Vec::new(),
    };
    let config = ExperimentConfig {
        replications: settings.replications,
        slots_per_run: settings.slots,
        master_seed: settings.seed,
    };
    let mut out = Output::new("experiment", settings)?;
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for (idx, m) in settings.instances()?.into_iter().enumerate() {
        let small = within_budget(&m, settings.budget);
        let mut policies = Vec::new();
        let mut labels = Vec::new();
        for kind in kinds {
            match kind {
                PolicyKind::Optimal if small => {
                    let sol = value_iterate(&m, SolverOptions::default())?;
                    if !sol.report.converged {
                        notes.push(format!("instance {idx}: optimal policy did not converge"));
                    }
                    policies.push(Policy::Table(Arc::new(sol.policy)));
                    labels.push("optimal".to_string());
                }
                PolicyKind::Optimal => notes.push(format!(
                    "instance {idx}: optimal skipped, {} states over budget",
                    cardinality(&m)
                )),
                PolicyKind::Greedy => {
                    policies.push(Policy::Greedy);
                    labels.push("greedy".into());
                }
                PolicyKind::Deadline => {
                    policies.push(Policy::Deadline);
                    labels.push("deadline".into());
                }
                PolicyKind::Delta => {
                    let delta = if let Some(p) = predicted.iter().find(|p| same_instance(&p.params, &m)) {
                        notes.push(format!("instance {idx}: delta {} from predictions", p.delta));
                        Some(p.delta)
                    } else if small {
                        let r = optimize_delta(&m, EvaluationMode::Exact, 1..=m.deadline())?;
                        notes.push(format!("instance {idx}: delta {} from exact search", r.best_delta));
                        Some(r.best_delta)
                    } else {
                        notes.push(format!("instance {idx}: delta skipped, no prediction and over budget"));
                        None
                    };
                    if let Some(d) = delta {
                        policies.push(Policy::Delta(d));
                        labels.push(format!("delta{d}"));
                    }
                }
            }
        }
        if policies.is_empty() {
            continue;
        }
        let runs = coupled_experiment(&policies, &m, &config)?;
        let name = format!("runs_{idx}.csv");
        let mut w = out.csv(&name)?;
        writeln!(w, "# instance: {}", params_json(&m))?;
        write_runs_csv(&labels, &runs, m.capacity(), &mut w)?;
        w.flush()?;
        for (label, results) in labels.iter().zip(&runs) {
            let s = summarize(label, results, CONFIDENCE)?;
            println!(
                "L={} {:>10}: {:.5} [{:.5}, {:.5}]",
                m.capacity(),
                label,
                s.mean,
                s.ci_low,
                s.ci_high
            );
            rows.push(SummaryRow {
                capacity: m.capacity(),
                deadline: m.deadline(),
                p: m.arrival_prob(),
                cex: m.expiration_cost(),
                omega: m.waiting_cost(),
                gamma: m.platoon_scale(),
                policy: s.label,
                mean: s.mean,
                std_dev: s.std_dev,
                ci_low: s.ci_low,
                ci_high: s.ci_high,
                confidence: s.confidence,
                replications: s.replications,
            });
        }
    }
    let w = out.csv("summary.csv")?;
    let mut csv = csv::Writer::from_writer(w);
    for row in &rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    drop(csv);
    let files = out.finish(json!(notes))?;
    Ok(ExperimentOutcome { rows, files })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetRow {
    #[serde(rename = "L")]
    pub capacity: usize,
    #[serde(rename = "T")]
    pub deadline: u32,
    pub p: f64,
    #[serde(rename = "C_ex")]
    pub cex: f64,
    pub omega: f64,
    pub gamma: f64,
    pub delta_star: u32,
    pub cost_at_delta_star: f64,
}

#[derive(Debug, Clone)]
pub struct DatasetOutcome {
    pub rows: Vec<DatasetRow>,
    pub skipped: usize,
    pub files: Vec<PathBuf>,
}

/// Labels every instance of the grid within the budget with its best
/// threshold from the exact search.
pub fn dataset(settings: &Settings) -> anyhow::Result<DatasetOutcome> {
    let mut rows = Vec::new();
    let mut skipped = 0;
    for m in settings.instances()? {
        if !within_budget(&m, settings.budget) {
            skipped += 1;
            continue;
        }
        let r = optimize_delta(&m, EvaluationMode::Exact, 1..=m.deadline())?;
        rows.push(DatasetRow {
            capacity: m.capacity(),
            deadline: m.deadline(),
            p: m.arrival_prob(),
            cex: m.expiration_cost(),
            omega: m.waiting_cost(),
            gamma: m.platoon_scale(),
            delta_star: r.best_delta,
            cost_at_delta_star: r.best_cost,
        });
    }
    let mut out = Output::new("dataset", settings)?;
    let w = out.csv("dataset.csv")?;
    let mut csv = csv::Writer::from_writer(w);
    for row in &rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    drop(csv);
    println!("{} rows, {skipped} instances over budget", rows.len());
    let files = out.finish(json!({ "rows": rows.len(), "skipped_over_budget": skipped }))?;
    Ok(DatasetOutcome {
        rows,
        skipped,
        files,
    })
}

#[derive(Debug, Clone)]
pub struct DeltaOutcome {
    pub best_delta: u32,
    pub cost_by_delta: Vec<(u32, f64)>,
    pub files: Vec<PathBuf>,
}

/// Scores every threshold, exactly or by coupled simulation.
pub fn delta_search(settings: &Settings, simulated: bool) -> anyhow::Result<DeltaOutcome> {
    let m = settings.single()?;
    let mode = if simulated {
        EvaluationMode::Simulated {
            replications: settings.replications,
            slots: settings.slots,
            seed: settings.seed,
        }
    } else {
        require_budget(&m, settings.budget)?;
        EvaluationMode::Exact
    };
    let r = optimize_delta(&m, mode, 1..=m.deadline())?;
    let mut out = Output::new("delta-search", settings)?;
    let mut w = out.csv("delta_search.csv")?;
    r.write_csv(&mut w)?;
    w.flush()?;
    println!("best delta {} at average cost {:.6}", r.best_delta, r.best_cost);
    let files = out.finish(serde_json::to_value(&r)?)?;
    Ok(DeltaOutcome {
        best_delta: r.best_delta,
        cost_by_delta: r.cost_by_delta,
        files,
    })
}
