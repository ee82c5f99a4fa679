use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use advscore::detect::{aggregate, aggregate_classifications, postprocess_frames, CountMode};
use advscore::ingest::{
    infer_counts_manifest, parse_classification_log, parse_count_table, parse_detection_log,
    write_classification_log, write_detection_log, DatasetManifest, Schema,
};
use advscore::model::{
    enumerate_grid, validate_dataset, ClassificationRecord, Condition, ConditionGrid, Factor,
    FrameRecord, FrequencyTable, TestStatistic,
};
use advscore::par::derive_seed;
use advscore::report::{
    align, classification_histogram, format_score, mean_confidence_series_csv, render_counts,
    render_histogram, render_scores, render_targeted, score_series_csv, sha256_hex,
    HistogramSource, ReportBundle,
};
use advscore::score::{score_report, scores_by_level, targeted_scores, TargetedScores};
use advscore::sim::{simulate_classifications, simulate_detections, true_score, ScenarioFile};
use advscore::stats::{
    bootstrap_ci, logit_fit, one_hot_encode, one_sample_t, one_way_anova, BootstrapConfig, LogitFit,
};
use serde::Serialize;

use crate::config::{ConfigFile, ExtraBlock, GridConfig, ManifestConfig, StatsSection};
use crate::error::CliError;
use crate::{
    Cli, Command, DataArgs, GridArgs, LogitArgs, ReportArgs, ScoreArgs, SimulateArgs, TargetedArgs,
    ValidateArgs,
};

/// Writes to stdout; a closed pipe (`| head`) ends the process quietly.
fn emit(args: std::fmt::Arguments) {
    if let Err(e) = std::io::stdout().lock().write_fmt(args) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        panic!("writing stdout: {e}");
    }
}

macro_rules! out {
    ($($t:tt)*) => { emit(format_args!($($t)*)) };
}

macro_rules! outln {
    () => { emit(format_args!("\n")) };
    ($($t:tt)*) => { emit(format_args!("{}\n", format_args!($($t)*))) };
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let strict = cli.strictness();
    match &cli.command {
        Command::Grid(a) => cmd_grid(a),
        Command::Validate(a) => cmd_validate(a, strict),
        Command::Score(a) => cmd_score(a, strict),
        Command::Targeted(a) => cmd_targeted(a, strict),
        Command::Logit(a) => cmd_logit(a, strict),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Report(a) => cmd_report(a, strict),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

fn load_config(path: Option<&PathBuf>) -> Result<Option<ConfigFile>, CliError> {
    path.map(|p| ConfigFile::load(p)).transpose()
}

fn require_config(cfg: Option<ConfigFile>, what: &str) -> Result<ConfigFile, CliError> {
    cfg.ok_or_else(|| CliError::Usage(format!("--config is required for {what}")))
}

/// A count table ready for scoring, with the grid it is scored over.
struct Dataset {
    table: FrequencyTable,
    grid: ConditionGrid,
    inputs: BTreeMap<String, String>,
}

fn load_dataset(args: &DataArgs, strict: Option<bool>) -> Result<Dataset, CliError> {
    let cfg = load_config(args.config.as_ref())?;
    let mut inputs = BTreeMap::new();
    if let Some(p) = &args.config {
        inputs.insert(p.display().to_string(), sha256_hex(&read(p)?));
    }
    match (&args.counts, &args.frames) {
        (Some(path), None) => {
            if args.postprocess || args.count_mode.is_some() {
                return Err(CliError::Usage(
                    "--postprocess and --count-mode apply to --frames only".into(),
                ));
            }
            let bytes = read(path)?;
            inputs.insert(path.display().to_string(), sha256_hex(&bytes));
            let manifest = match &cfg {
                Some(c) => c.manifest(Schema::Counts, strict)?,
                None => {
                    let mut m =
                        infer_counts_manifest(&bytes[..]).map_err(|e| CliError::ingest(path, e))?;
                    m.strict = strict.unwrap_or(true);
                    m
                }
            };
            let table =
                parse_count_table(&bytes[..], &manifest).map_err(|e| CliError::ingest(path, e))?;
            Ok(Dataset {
                table,
                grid: manifest.grid,
                inputs,
            })
        }
        (None, Some(path)) => {
            let cfg = require_config(cfg, "--frames")?;
            let manifest = cfg.manifest(Schema::Detections, strict)?;
            let pp = cfg.postprocess(args.count_mode)?;
            let bytes = read(path)?;
            inputs.insert(path.display().to_string(), sha256_hex(&bytes));
            let mut frames = parse_detection_log(&bytes[..], &manifest)
                .map_err(|e| CliError::ingest(path, e))?;
            if args.postprocess {
                postprocess_frames(&mut frames, &pp);
            }
            let mut table = aggregate(&frames, &manifest.target_class, &pp)?;
            if let Some(alias) = manifest.baseline_alias.clone() {
                table = table.with_alias(alias);
            }
            Ok(Dataset {
                table,
                grid: manifest.grid,
                inputs,
            })
        }
        _ => Err(CliError::Usage(
            "exactly one of --counts or --frames is required".into(),
        )),
    }
}

fn stats_section(cfg: Option<&ConfigFile>) -> StatsSection {
    cfg.and_then(|c| c.stats.clone()).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// grid

fn cmd_grid(a: &GridArgs) -> Result<(), CliError> {
    let cfg = ConfigFile::load(&a.config)?;
    let grid = cfg.full_grid()?;
    let conditions = enumerate_grid(&grid)?;
    if a.count {
        outln!("{}", conditions.len());
    } else if a.json {
        outln!("{}", to_json(&conditions));
    } else {
        for (i, c) in conditions.iter().enumerate() {
            outln!("{i}\t{}", c.label_in(&grid.factors));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// validate

fn cmd_validate(a: &ValidateArgs, strict: Option<bool>) -> Result<(), CliError> {
    let ds = load_dataset(&a.data, strict)?;
    let report = validate_dataset(&ds.table, &ds.grid);
    if a.json {
        outln!("{}", to_json(&report));
    } else {
        outln!(
            "{} conditions x {} subjects, {} cells, {} aliased baseline cells",
            ds.grid.size(),
            ds.table.subjects.len(),
            ds.table.len(),
            report.aliased.len()
        );
        for issue in &report.issues {
            outln!(
                "{}",
                serde_json::to_string(issue).expect("issues serialize")
            );
        }
        if report.is_empty() {
            outln!("ok");
        }
    }
    if report.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(report.issues.len()))
    }
}

// ---------------------------------------------------------------------------
// score

fn bootstrap_config(flags: &crate::StatsArgs, cfg: &StatsSection) -> BootstrapConfig {
    let d = BootstrapConfig::default();
    BootstrapConfig {
        level: flags.level.or(cfg.level).unwrap_or(d.level),
        replicates: flags.replicates.or(cfg.replicates).unwrap_or(d.replicates),
        seed: flags.seed.or(cfg.seed).unwrap_or(d.seed),
    }
}

fn cmd_score(a: &ScoreArgs, strict: Option<bool>) -> Result<(), CliError> {
    let cfg = load_config(a.data.config.as_ref())?;
    let ds = load_dataset(&a.data, strict)?;
    let (table, grid) = (&ds.table, &ds.grid);
    for f in a.marginal.iter().chain(&a.anova) {
        if grid.factor(f).is_none() {
            return Err(CliError::Usage(format!("unknown factor `{f}`")));
        }
    }
    let bcfg = bootstrap_config(&a.stats, &stats_section(cfg.as_ref()));

    let mut reports = Vec::with_capacity(table.subjects.len());
    for subject in &table.subjects {
        let mut r = score_report(table, grid, &subject.label)?;
        if a.bootstrap {
            let values: Vec<f64> = r.per_condition.iter().map(|c| c.score).collect();
            r.ci = Some(bootstrap_ci(&values, &bcfg)?);
            for (i, ls) in r.per_factor.iter_mut().enumerate() {
                let groups = scores_by_level(table, grid, &subject.label, &ls.factor)?;
                let vals = &groups
                    .iter()
                    .find(|(l, _)| *l == ls.level)
                    .expect("level has scores")
                    .1;
                let level_cfg = BootstrapConfig {
                    seed: derive_seed(bcfg.seed, i as u64 + 1),
                    ..bcfg
                };
                ls.ci = Some(bootstrap_ci(vals, &level_cfg)?);
            }
        }
        // The baseline scores 0 everywhere; tests on it are degenerate.
        if !subject.is_baseline() {
            for f in &a.anova {
                let groups: Vec<Vec<f64>> = scores_by_level(table, grid, &subject.label, f)?
                    .into_iter()
                    .map(|(_, v)| v)
                    .collect();
                match one_way_anova(&groups) {
                    Ok(res) => {
                        r.tests.insert(
                            format!("anova:{f}"),
                            TestStatistic {
                                statistic: res.f,
                                p_value: res.p,
                            },
                        );
                    }
                    Err(e) => log::warn!("{}: anova over {f} skipped: {e}", subject.label),
                }
            }
            if a.ttest {
                let values: Vec<f64> = r.per_condition.iter().map(|c| c.score).collect();
                match one_sample_t(&values, 0.0) {
                    Ok(res) => {
                        r.tests.insert(
                            "ttest:mean=0".into(),
                            TestStatistic {
                                statistic: res.t,
                                p_value: res.p,
                            },
                        );
                    }
                    Err(e) => log::warn!("{}: t-test skipped: {e}", subject.label),
                }
            }
        }
        reports.push(r);
    }

    let mut bundle = ReportBundle::from_reports(reports, grid)?;
    bundle.counts_table = Some(render_counts(table, grid)?);
    bundle.metadata.inputs = ds.inputs.clone();
    bundle.metadata.config = serde_json::json!({
        "command": "score",
        "grid": grid,
        "bootstrap": a.bootstrap.then_some(bcfg),
        "anova": a.anova,
        "ttest": a.ttest,
        "postprocess": a.data.postprocess,
        "count_mode": a.data.count_mode,
    });

    let text = score_text(&bundle, &a.marginal, a.bootstrap);
    if a.json {
        outln!("{}", bundle.to_json()?);
    } else {
        out!("{text}");
    }
    if let Some(dir) = &a.out {
        write_score_outputs(dir, &bundle, table, grid, &text)?;
    }
    Ok(())
}

fn score_text(bundle: &ReportBundle, marginals: &[String], with_ci: bool) -> String {
    let mut out = String::new();
    if with_ci {
        let rows: Vec<Vec<String>> = bundle
            .reports
            .iter()
            .map(|r| {
                let ci =
                    r.ci.map(|c| format!("[{}, {}]", format_score(c.lo), format_score(c.hi)))
                        .unwrap_or_default();
                vec![r.subject.label.clone(), format_score(r.overall), ci]
            })
            .collect();
        let w = rows
            .iter()
            .map(|r| r[0].chars().count())
            .max()
            .unwrap_or(0)
            .max(7);
        out.push_str(&format!("{:<w$}  score\n", "subject"));
        for r in rows {
            out.push_str(&format!("{:<w$}  {}  {}\n", r[0], r[1], r[2]).replace("  \n", "\n"));
        }
    } else {
        out.push_str(
            &render_scores(&bundle.reports)
                .expect("bundle has reports")
                .text,
        );
    }
    for f in marginals {
        out.push('\n');
        out.push_str(&bundle.per_factor_tables[f]);
    }
    let mut tests = vec![vec![
        "subject".to_owned(),
        "test".into(),
        "statistic".into(),
        "p".into(),
    ]];
    for r in &bundle.reports {
        for (name, t) in &r.tests {
            tests.push(vec![
                r.subject.label.clone(),
                name.clone(),
                format_score(t.statistic),
                format_p(t.p_value),
            ]);
        }
    }
    if tests.len() > 1 {
        out.push('\n');
        out.push_str(&align(&tests));
    }
    out
}

fn format_p(p: f64) -> String {
    if p < 1e-3 {
        format!("{p:.2e}")
    } else {
        format!("{p:.3}")
    }
}

fn write_score_outputs(
    dir: &Path,
    bundle: &ReportBundle,
    table: &FrequencyTable,
    grid: &ConditionGrid,
    text: &str,
) -> Result<(), CliError> {
    ensure_dir(dir)?;
    write_file(dir, "report.json", bundle.to_json()?.as_bytes())?;
    write_file(dir, "scores.txt", text.as_bytes())?;
    if let Some(c) = &bundle.counts_table {
        write_file(dir, "counts.txt", c.as_bytes())?;
    }
    let subjects: Vec<&str> = table.subjects.iter().map(|s| s.label.as_str()).collect();
    for f in &grid.factors {
        write_file(
            dir,
            &format!("score_by_{}.csv", f.name),
            score_series_csv(table, grid, &subjects, &f.name)?.as_bytes(),
        )?;
        write_file(
            dir,
            &format!("mean_confidence_by_{}.csv", f.name),
            mean_confidence_series_csv(table, grid, &f.name)?.as_bytes(),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// targeted and logit

fn load_classifications(
    config: &Path,
    log: &Path,
    strict: Option<bool>,
) -> Result<(ConfigFile, DatasetManifest, Vec<ClassificationRecord>), CliError> {
    let cfg = ConfigFile::load(config)?;
    let manifest = cfg.manifest(Schema::Classifications, strict)?;
    let file = File::open(log).map_err(|e| CliError::io(log, e))?;
    let records = parse_classification_log(BufReader::new(file), &manifest)
        .map_err(|e| CliError::ingest(log, e))?;
    Ok((cfg, manifest, records))
}

fn model_ids(
    records: &[ClassificationRecord],
    only: Option<&str>,
) -> Result<Vec<String>, CliError> {
    let mut ids: Vec<String> = Vec::new();
    for r in records {
        if !ids.contains(&r.model_id) {
            ids.push(r.model_id.clone());
        }
    }
    match only {
        Some(m) if ids.iter().any(|i| i == m) => Ok(vec![m.to_owned()]),
        Some(m) => Err(CliError::Usage(format!("no records for model `{m}`"))),
        None if ids.is_empty() => Err(CliError::Usage("classification log is empty".into())),
        None => Ok(ids),
    }
}

#[derive(Serialize)]
struct TargetedRow {
    model: String,
    subject: String,
    #[serde(flatten)]
    scores: TargetedScores,
}

fn cmd_targeted(a: &TargetedArgs, strict: Option<bool>) -> Result<(), CliError> {
    if a.source == a.target {
        return Err(CliError::Usage("--source and --target must differ".into()));
    }
    let (_, _, records) = load_classifications(&a.config, &a.classifications, strict)?;
    let mut rows = Vec::new();
    for model in model_ids(&records, a.model.as_deref())? {
        let freqs = aggregate_classifications(&records, &[&a.source, &a.target], Some(&model))?;
        for adv in freqs.subjects.iter().filter(|s| !s.is_baseline()) {
            rows.push(TargetedRow {
                model: model.clone(),
                subject: adv.label.clone(),
                scores: targeted_scores(&freqs, &a.source, &a.target, &adv.label, None)?,
            });
        }
    }
    let single_adv = rows.iter().all(|r| r.subject == rows[0].subject);
    let columns: Vec<(String, TargetedScores)> = rows
        .iter()
        .map(|r| {
            let name = if single_adv {
                r.model.clone()
            } else {
                format!("{}/{}", r.model, r.subject)
            };
            (name, r.scores)
        })
        .collect();
    let text = render_targeted(&columns, &a.source, &a.target)?;
    if a.json {
        outln!("{}", to_json(&rows));
    } else {
        out!("{text}");
    }
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        write_file(dir, "targeted.txt", text.as_bytes())?;
        write_file(dir, "targeted.json", to_json(&rows).as_bytes())?;
    }
    Ok(())
}

/// The data grid plus a factor whose levels are subject labels, so the
/// adversarial object gets its own coefficient.
fn subject_augmented_grid(
    cfg: &ConfigFile,
    data_grid: &ConditionGrid,
    baseline: &str,
    records: &[ClassificationRecord],
) -> Result<(String, ConditionGrid), CliError> {
    let name = cfg.subject_factor().unwrap_or("subject").to_owned();
    let mut seen: Vec<String> = vec![baseline.to_owned()];
    for r in records {
        if !seen.contains(&r.subject.label) {
            seen.push(r.subject.label.clone());
        }
    }
    let levels = match cfg.full_grid()?.factor(&name) {
        Some(f) => {
            if let Some(missing) = seen.iter().find(|s| f.position(s).is_none()) {
                return Err(CliError::Config(format!(
                    "subject `{missing}` is not a level of subject factor `{name}`"
                )));
            }
            f.levels.clone()
        }
        None => seen,
    };
    let mut factors = data_grid.factors.clone();
    if factors.iter().any(|f| f.name == name) {
        return Err(CliError::Config(format!(
            "factor `{name}` already names a scene factor"
        )));
    }
    factors.push(Factor::new(name.clone(), levels.clone())?);
    let extras = data_grid
        .extra_blocks
        .iter()
        .map(|block| {
            block
                .iter()
                .flat_map(|c| {
                    levels
                        .iter()
                        .map(|l| c.clone().with(name.clone(), l.clone()))
                })
                .collect()
        })
        .collect();
    Ok((name, ConditionGrid::with_extras(factors, extras)?))
}

#[derive(Serialize)]
struct LogitOutput {
    model: String,
    rows: usize,
    successes: usize,
    fit: LogitFit,
}

fn cmd_logit(a: &LogitArgs, strict: Option<bool>) -> Result<(), CliError> {
    let (cfg, manifest, records) = load_classifications(&a.config, &a.classifications, strict)?;
    let ridge = a.ridge.or(stats_section(Some(&cfg)).ridge).unwrap_or(0.0);
    let (factor, grid) =
        subject_augmented_grid(&cfg, &manifest.grid, &manifest.baseline_subject, &records)?;
    let mut outputs = Vec::new();
    for model in model_ids(&records, a.model.as_deref())? {
        // Baseline success is the correct class; adversary success is the
        // target class.
        let rows: Vec<(Condition, bool)> = records
            .iter()
            .filter(|r| r.model_id == model)
            .map(|r| {
                let goal = if r.subject.is_baseline() {
                    &a.source
                } else {
                    &a.target
                };
                (
                    r.condition
                        .clone()
                        .with(factor.clone(), r.subject.label.clone()),
                    r.top_class == *goal,
                )
            })
            .collect();
        let successes = rows.iter().filter(|(_, s)| *s).count();
        let design = one_hot_encode(&rows, &grid)?;
        let fit = logit_fit(&design, ridge)?;
        if fit.separation_warning {
            let hint = if ridge == 0.0 {
                "; rerun with --ridge 1e-6"
            } else {
                ""
            };
            eprintln!("warning: model `{model}`: coefficients exceed 15 in magnitude, data look separated{hint}");
        }
        outputs.push(LogitOutput {
            model,
            rows: rows.len(),
            successes,
            fit,
        });
    }
    let text = logit_text(&outputs);
    if a.json {
        outln!("{}", to_json(&outputs));
    } else {
        out!("{text}");
    }
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        write_file(dir, "logit.txt", text.as_bytes())?;
        write_file(dir, "logit.json", to_json(&outputs).as_bytes())?;
    }
    Ok(())
}

fn logit_text(outputs: &[LogitOutput]) -> String {
    let mut out = String::new();
    for o in outputs {
        let f = &o.fit;
        out.push_str(&format!(
            "model {}: {} rows, {} successes, {} after {} iterations, log-likelihood {:.4}, ridge {}\n",
            o.model,
            o.rows,
            o.successes,
            if f.converged { "converged" } else { "not converged" },
            f.iterations,
            f.log_likelihood,
            f.ridge
        ));
        let mut order: Vec<usize> = (0..f.coefficients.len()).collect();
        order.sort_by(|&i, &j| {
            f.coefficients[j]
                .abs()
                .total_cmp(&f.coefficients[i].abs())
                .then(i.cmp(&j))
        });
        let w = f
            .column_names
            .iter()
            .map(|n| n.chars().count())
            .max()
            .unwrap_or(0);
        out.push_str(&format!(
            "  {:<w$}  {:>10}  {:>10}\n",
            "column", "coef", "std_err"
        ));
        for i in order {
            out.push_str(&format!(
                "  {:<w$}  {:>10.4}  {:>10.4}\n",
                f.column_names[i], f.coefficients[i], f.std_errors[i]
            ));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Serialize)]
struct TruthRow {
    subject: String,
    frames: f64,
    detections: f64,
}

fn grid_config(grid: &ConditionGrid) -> GridConfig {
    GridConfig {
        factors: grid.factors.clone(),
        extra_blocks: grid
            .extra_blocks
            .iter()
            .map(|b| ExtraBlock::Conditions {
                conditions: b.clone(),
            })
            .collect(),
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.spec).map_err(|e| CliError::io(&a.spec, e))?;
    let mut file: ScenarioFile = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {}", a.spec.display(), e.message())))?;
    if let Some(seed) = a.seed {
        file.seed = seed;
    }
    let spec = file.into_spec()?;
    ensure_dir(&a.out)?;

    let frames: Vec<FrameRecord> = simulate_detections(&spec)?;
    let path = a.out.join("detections.jsonl");
    let mut w = BufWriter::new(File::create(&path).map_err(|e| CliError::io(&path, e))?);
    write_detection_log(&mut w, &frames)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&path, e))?;

    let has_classes = spec.params.values().all(|p| p.class_dist.is_some());
    if has_classes {
        let recs = simulate_classifications(&spec)?;
        let path = a.out.join("classifications.jsonl");
        let mut w = BufWriter::new(File::create(&path).map_err(|e| CliError::io(&path, e))?);
        write_classification_log(&mut w, &recs)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(&path, e))?;
    }

    let baseline = spec.baseline()?.label.clone();
    let config = ConfigFile {
        grid: grid_config(&spec.grid),
        manifest: Some(ManifestConfig {
            schema: None,
            baseline_subject: baseline,
            target_class: spec.target_class.clone(),
            n_frames_expected: Some(spec.n_frames),
            baseline_alias: None,
            subject_factor: None,
            strict: None,
        }),
        postprocess: None,
        stats: Some(StatsSection {
            seed: Some(spec.seed),
            ..StatsSection::default()
        }),
    };
    write_file(&a.out, "config.toml", config.to_toml()?.as_bytes())?;

    let conditions = enumerate_grid(&spec.grid)?;
    let truth: Vec<TruthRow> = spec
        .subjects
        .iter()
        .map(|s| {
            Ok(TruthRow {
                subject: s.label.clone(),
                frames: true_score(&spec, &s.label, &conditions, CountMode::Frames)?,
                detections: true_score(&spec, &s.label, &conditions, CountMode::Detections)?,
            })
        })
        .collect::<Result<_, CliError>>()?;
    write_file(&a.out, "truth.json", to_json(&truth).as_bytes())?;

    if a.json {
        outln!("{}", to_json(&truth));
    } else {
        outln!(
            "wrote {} frames{} to {}",
            frames.len(),
            if has_classes {
                " and classifications"
            } else {
                ""
            },
            a.out.display()
        );
        let w = truth
            .iter()
            .map(|t| t.subject.chars().count())
            .max()
            .unwrap_or(0)
            .max(7);
        outln!(
            "{:<w$}  {:>12}  {:>12}",
            "subject",
            "true_frames",
            "true_detect"
        );
        for t in &truth {
            outln!(
                "{:<w$}  {:>12.6}  {:>12.6}",
                t.subject,
                t.frames,
                t.detections
            );
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// report

fn cmd_report(a: &ReportArgs, strict: Option<bool>) -> Result<(), CliError> {
    if let Some(log) = &a.classifications {
        let config =
            a.data.config.as_ref().ok_or_else(|| {
                CliError::Usage("--config is required for --classifications".into())
            })?;
        let (_, _, records) = load_classifications(config, log, strict)?;
        let h = classification_histogram(
            HistogramSource::Classifications(&records),
            a.transform.into(),
        );
        return emit_histogram(a, &h);
    }
    if let (Some(path), None) = (&a.data.frames, &a.data.counts) {
        // Histogram over detection classes, plus the count table.
        let cfg = require_config(load_config(a.data.config.as_ref())?, "--frames")?;
        let manifest = cfg.manifest(Schema::Detections, strict)?;
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut frames = parse_detection_log(BufReader::new(file), &manifest)
            .map_err(|e| CliError::ingest(path, e))?;
        if a.data.postprocess {
            postprocess_frames(&mut frames, &cfg.postprocess(a.data.count_mode)?);
        }
        let h = classification_histogram(HistogramSource::Frames(&frames), a.transform.into());
        emit_histogram(a, &h)?;
        outln!();
    }
    let ds = load_dataset(&a.data, strict)?;
    let counts = render_counts(&ds.table, &ds.grid)?;
    let reports = ds
        .table
        .subjects
        .iter()
        .map(|s| score_report(&ds.table, &ds.grid, &s.label))
        .collect::<Result<Vec<_>, _>>()?;
    let mut bundle = ReportBundle::from_reports(reports, &ds.grid)?;
    bundle.counts_table = Some(counts.clone());
    bundle.metadata.inputs = ds.inputs.clone();
    bundle.metadata.config = serde_json::json!({ "command": "report", "grid": ds.grid });
    let scores = render_scores(&bundle.reports)?.text;
    out!("{counts}\n{scores}");
    if let Some(dir) = &a.out {
        write_score_outputs(dir, &bundle, &ds.table, &ds.grid, &scores)?;
    }
    Ok(())
}

fn emit_histogram(a: &ReportArgs, h: &advscore::report::Histogram) -> Result<(), CliError> {
    let text = render_histogram(h);
    out!("{text}");
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        write_file(dir, "histogram.txt", text.as_bytes())?;
        write_file(dir, "histogram.json", to_json(h).as_bytes())?;
    }
    Ok(())
}
