//! The five commands. Each returns the report text; nothing here depends on
//! wall-clock time or thread count, so equal inputs give equal bytes.

use qcga::error_model::CriticalErrors;
use qcga::ga::{run_design, DesignReport};
use qcga::library::{
    builtin_library, load_library_file, notation_with_control, parse_procedure, EntrySource, LibraryEntry,
};
use qcga::objective::{comparison_f1, fitness_f};
use qcga::rules::Procedure;
use qcga::simulator::estimate_performance;
use qcga::stats::{compare_procedures, ComparisonResult};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{JobConfig, OutputFormat};
use crate::CliError;

const TOOL: &str = "qcga";
const VERSION: &str = env!("CARGO_PKG_VERSION");

fn critical(cfg: &JobConfig) -> Result<CriticalErrors, CliError> {
    Ok(CriticalErrors::from_assay(&cfg.assay)?)
}

fn parse_text(text: &str) -> Result<Procedure, CliError> {
    parse_procedure(text).map_err(|e| CliError::Parse(format!("{text:?}: {e}")))
}

/// `# `-prefixed header naming the command and echoing the effective config.
fn csv_header(cfg: &JobConfig, command: &str) -> String {
    let mut out = format!("# {TOOL} {VERSION} {command}\n");
    for line in cfg.to_toml().lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out
}

fn csv_table(cfg: &JobConfig, command: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    let body = w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(csv_header(cfg, command) + &String::from_utf8(body).expect("csv output is UTF-8"))
}

fn document(cfg: &JobConfig, command: &str, payload: Value) -> Result<String, CliError> {
    let mut doc = json!({
        "tool": TOOL,
        "version": VERSION,
        "command": command,
        "config": cfg,
    });
    if let (Some(doc), Value::Object(extra)) = (doc.as_object_mut(), payload) {
        doc.extend(extra);
    }
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

fn value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

pub fn critical_errors(cfg: &JobConfig, format: OutputFormat) -> Result<String, CliError> {
    let c = critical(cfg)?;
    match format {
        OutputFormat::Doc => document(cfg, "critical-errors", json!({ "critical": c })),
        OutputFormat::Csv => csv_table(
            cfg,
            "critical-errors",
            &["sd", "bias", "tea", "alpha", "k_re", "delta_se"],
            vec![vec![
                cfg.assay.sd.to_string(),
                cfg.assay.bias.to_string(),
                cfg.assay.tea.to_string(),
                cfg.assay.alpha.to_string(),
                num(c.k_re),
                num(c.delta_se),
            ]],
        ),
    }
}

pub fn evaluate(cfg: &JobConfig, text: &str, format: OutputFormat) -> Result<String, CliError> {
    let procedure = parse_text(text)?;
    let c = critical(cfg)?;
    let plan = cfg.simulation_plan();
    let est = estimate_performance(&procedure, &plan, &c)?;
    let control = procedure.control.unwrap_or(plan.control);
    let f = fitness_f(&est, &cfg.objective);
    let f1 = comparison_f1(&est);
    match format {
        OutputFormat::Doc => document(
            cfg,
            "evaluate",
            json!({
                "procedure": notation_with_control(&procedure),
                "levels": control.levels,
                "per_level": control.per_level,
                "critical": c,
                "estimate": est,
                "f": f,
                "f1": f1,
            }),
        ),
        OutputFormat::Csv => csv_table(
            cfg,
            "evaluate",
            &["notation", "levels", "per_level", "runs", "p_re", "p_se", "p_fr", "f", "f1"],
            vec![vec![
                procedure.notation(),
                control.levels.to_string(),
                control.per_level.to_string(),
                est.runs_simulated.to_string(),
                num(est.p_re),
                num(est.p_se),
                num(est.p_fr),
                num(f),
                num(f1),
            ]],
        ),
    }
}

/// Library for `list-library` and `compare`: builtin entries (if enabled),
/// then library files in order.
pub fn load_library(cfg: &JobConfig, include_builtin: bool) -> Result<Vec<LibraryEntry>, CliError> {
    let mut entries = if include_builtin { builtin_library() } else { Vec::new() };
    for path in &cfg.library_files {
        entries.extend(load_library_file(path).map_err(|e| match e {
            qcga::Error::InvalidArgument(m) => CliError::Config(m),
            other => other.into(),
        })?);
    }
    Ok(entries)
}

pub fn list_library(cfg: &JobConfig, format: OutputFormat) -> Result<String, CliError> {
    let entries = load_library(cfg, cfg.compare.include_builtin)?;
    match format {
        OutputFormat::Doc => document(cfg, "list-library", json!({ "library": entries })),
        OutputFormat::Csv => csv_table(
            cfg,
            "list-library",
            &["name", "notation", "source", "note"],
            entries
                .iter()
                .map(|e| {
                    vec![
                        e.name.clone(),
                        notation_with_control(&e.procedure),
                        match &e.source {
                            EntrySource::Builtin => "builtin".to_string(),
                            EntrySource::UserFile(f) => f.clone(),
                        },
                        e.note.clone().unwrap_or_default(),
                    ]
                })
                .collect(),
        ),
    }
}

/// Runs the comparison on the configured library plus `extra` procedures.
pub fn comparison(cfg: &JobConfig, extra: &[String], include_builtin: bool) -> Result<ComparisonResult, CliError> {
    let mut procedures: Vec<(String, Procedure)> = Vec::new();
    for text in cfg.compare.procedures.iter().chain(extra) {
        procedures.push((text.trim().to_string(), parse_text(text)?));
    }
    procedures.extend(load_library(cfg, include_builtin)?.into_iter().map(|e| (e.name, e.procedure)));
    if procedures.len() < 2 {
        return Err(CliError::Config(format!("compare needs at least 2 procedures, got {}", procedures.len())));
    }
    let c = critical(cfg)?;
    Ok(compare_procedures(&procedures, &cfg.simulation_plan(), &c, cfg.compare.replicates, cfg.compare.base_seed)?)
}

pub fn compare(
    cfg: &JobConfig,
    extra: &[String],
    include_builtin: bool,
    format: OutputFormat,
) -> Result<String, CliError> {
    let result = comparison(cfg, extra, include_builtin)?;
    match format {
        OutputFormat::Doc => document(
            cfg,
            "compare",
            json!({
                "critical": critical(cfg)?,
                "pairing": "replicate r of every procedure uses stream (base_seed, r)",
                "comparison": result,
            }),
        ),
        OutputFormat::Csv => {
            let rows = result
                .procedures
                .iter()
                .enumerate()
                .map(|(rank, p)| {
                    let t = p.vs_top;
                    vec![
                        (rank + 1).to_string(),
                        p.name.clone(),
                        p.notation.clone(),
                        num(p.p_re.mean),
                        num(p.p_re.sd),
                        num(p.p_se.mean),
                        num(p.p_se.sd),
                        num(p.p_fr.mean),
                        num(p.p_fr.sd),
                        num(p.f1.mean),
                        num(p.f1.sd),
                        t.map_or(String::new(), |t| t.below.to_string()),
                        t.map_or(String::new(), |t| t.above.to_string()),
                        t.map_or(String::new(), |t| t.ties.to_string()),
                        t.map_or(String::new(), |t| t.p_value.to_string()),
                        t.map_or(String::new(), |t| t.ties_only.to_string()),
                    ]
                })
                .collect();
            csv_table(
                cfg,
                "compare",
                &[
                    "rank",
                    "name",
                    "notation",
                    "p_re_mean",
                    "p_re_sd",
                    "p_se_mean",
                    "p_se_sd",
                    "p_fr_mean",
                    "p_fr_sd",
                    "f1_mean",
                    "f1_sd",
                    "top_better",
                    "top_worse",
                    "ties",
                    "p_value",
                    "ties_only",
                ],
                rows,
            )
        }
    }
}

pub fn design_report(cfg: &JobConfig) -> Result<DesignReport, CliError> {
    Ok(run_design(&cfg.layout, &cfg.simulation_plan(), &cfg.assay, &cfg.objective, &cfg.ga)?)
}

pub fn design(cfg: &JobConfig, format: OutputFormat) -> Result<String, CliError> {
    let report = design_report(cfg)?;
    match format {
        OutputFormat::Doc => document(cfg, "design", json!({ "seed": cfg.ga.seed, "report": value(&report) })),
        OutputFormat::Csv => {
            let mut rows: Vec<Vec<String>> = report
                .generations
                .iter()
                .map(|g| {
                    vec![
                        "generation".into(),
                        g.generation.to_string(),
                        g.notation.clone(),
                        g.levels.to_string(),
                        g.per_level.to_string(),
                        num(g.fitness),
                        num(g.f1),
                        num(g.p_re),
                        num(g.p_se),
                        num(g.p_fr),
                        g.genome_hex.clone(),
                        g.replacements.to_string(),
                    ]
                })
                .collect();
            rows.extend(report.best.iter().map(|b| {
                vec![
                    "best".into(),
                    b.generation.to_string(),
                    b.notation.clone(),
                    b.levels.to_string(),
                    b.per_level.to_string(),
                    num(b.fitness),
                    num(b.f1),
                    num(b.estimate.p_re),
                    num(b.estimate.p_se),
                    num(b.estimate.p_fr),
                    b.genome_hex.clone(),
                    String::new(),
                ]
            }));
            let mut text = csv_table(
                cfg,
                "design",
                &[
                    "section",
                    "generation",
                    "notation",
                    "levels",
                    "per_level",
                    "f",
                    "f1",
                    "p_re",
                    "p_se",
                    "p_fr",
                    "genome_hex",
                    "replacements",
                ],
                rows,
            )?;
            let c = report.critical;
            let note = format!("# critical errors: k_re {:.6}, delta_se {:.6}\n", c.k_re, c.delta_se);
            let at = text.find("section,").expect("header row present");
            text.insert_str(at, &note);
            Ok(text)
        }
    }
}
