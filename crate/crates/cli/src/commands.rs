use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use log::{error, info, warn};
use tabitd_core::decoder::pretrain as run_pretrain;
use tabitd_core::diff::Tensor2;
use tabitd_core::fusion::{
    encode_record, harmonize, harmonize_split, parse_ids_record, parse_ids_records, parse_ueba_json_line,
    parse_ueba_records, FusedDataset, FusionSchema, ThreatClass, UebaHeader,
};
use tabitd_core::interpret::explain as run_explain;
use tabitd_core::model::TabNetModel;
use tabitd_core::train::{compare_report, evaluate as run_evaluate, reference_table, train as run_train, Divergence, Phase};
use tabitd_core::{Error, Result};
use toml::Value;

use crate::config::{parse_override, RunConfig};
use crate::{
    ConfigArgs, EvaluateArgs, ExplainArgs, FuseArgs, InputKind, OutputFormat, PredictArgs, PretrainArgs, TrainArgs,
    EXIT_OK, EXIT_USAGE,
};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

/// `model.bin` + `.failed` → `model.bin.failed`.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name: OsString = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

/// `fused.tds` → `fused.test.tds`.
pub fn default_test_path(out: &Path) -> PathBuf {
    match (out.file_stem(), out.extension()) {
        (Some(stem), Some(ext)) => {
            let mut name = stem.to_owned();
            name.push(".test.");
            name.push(ext);
            out.with_file_name(name)
        }
        _ => with_suffix(out, ".test"),
    }
}

fn context<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.inspect_err(|_| error!("while reading {}", path.display()))
}

fn load_dataset(path: &Path) -> Result<FusedDataset> {
    context(path, FusedDataset::load(path))
}

fn load_model(path: &Path) -> Result<TabNetModel> {
    context(path, TabNetModel::load(path))
}

pub fn fuse(a: &FuseArgs) -> Result<i32> {
    let schema = match &a.schema {
        Some(p) => {
            info!("schema from file {}", p.display());
            context(p, FusionSchema::from_toml(&read_text(p)?))?
        }
        None => {
            info!("schema from the bundled default");
            FusionSchema::default()
        }
    };
    if a.ids.is_none() && a.ueba.is_none() {
        return Err(Error::Usage("give at least one of --ids and --ueba".into()));
    }
    let open = |p: &Path| File::open(p).map(BufReader::new).map_err(|e| io_err(p, e));
    let ids = match &a.ids {
        Some(p) => context(p, parse_ids_records(open(p)?, &schema))?,
        None => Vec::new(),
    };
    let ueba = match &a.ueba {
        Some(p) => context(p, parse_ueba_records(open(p)?, &schema))?,
        None => Vec::new(),
    };
    info!("parsed {} IDS and {} UEBA records", ids.len(), ueba.len());

    let mut parts: Vec<(&str, PathBuf, FusedDataset)> = Vec::new();
    if a.test_fraction == 0.0 {
        parts.push(("all", a.out.clone(), harmonize(&ids, &ueba, &schema)?));
    } else {
        let (train, test) = harmonize_split(&ids, &ueba, &schema, a.test_fraction, a.seed)?;
        let test_out = a.test_out.clone().unwrap_or_else(|| default_test_path(&a.out));
        parts.push(("train", a.out.clone(), train));
        parts.push(("test", test_out, test));
    }
    for (_, path, data) in &parts {
        data.save(path)?;
        info!("wrote {} rows × {} columns to {}", data.len(), data.width(), path.display());
    }

    let mut s = format!("{:<10}", "class");
    for (name, _, _) in &parts {
        let _ = write!(s, " {name:>8}");
    }
    s.push('\n');
    for c in ThreatClass::ALL {
        let _ = write!(s, "{:<10}", c.name());
        for (_, _, data) in &parts {
            let _ = write!(s, " {:>8}", data.class_counts[c]);
        }
        s.push('\n');
    }
    print!("{s}");
    Ok(EXIT_OK)
}

fn overrides(c: &ConfigArgs, epochs_section: &str) -> Result<Vec<(String, Value)>> {
    let mut out = Vec::new();
    if let Some(seed) = c.seed {
        let seed = i64::try_from(seed).map_err(|_| Error::Usage(format!("seed {seed} is too large")))?;
        out.push(("train.seed".to_string(), Value::Integer(seed)));
    }
    if let Some(epochs) = c.epochs {
        out.push((format!("{epochs_section}.epochs"), Value::Integer(epochs as i64)));
    }
    for raw in &c.set {
        out.push(parse_override(raw)?);
    }
    Ok(out)
}

/// Keeps the last good parameters of a diverged run next to the intended
/// output.
fn keep_failed(out: &Path, d: &Divergence, run: &RunConfig, data: &FusedDataset) {
    error!("{d}");
    let Some(params) = d.checkpoint.clone() else {
        return;
    };
    let s = &run.settings;
    let model = TabNetModel {
        config: s.train.effective(&s.encoder),
        params,
        schema: data.schema.clone(),
        phase: d.phase,
        seed: s.train.seed,
        config_echo: toml::to_string(s).unwrap_or_default(),
    };
    let path = with_suffix(out, ".failed");
    match model.save(&path) {
        Ok(()) => warn!("checkpoint from the start of epoch {} kept at {}", d.epoch, path.display()),
        Err(e) => error!("could not keep the checkpoint: {e}"),
    }
}

fn pretrain_phase(data: &FusedDataset, run: &RunConfig, out: &Path) -> Result<tabitd_core::decoder::PretrainOutcome> {
    let s = &run.settings;
    let enc = s.train.effective(&s.encoder);
    run_pretrain(data, &enc, &s.pretrain, s.train.seed).inspect_err(|e| {
        if let Error::Diverged(d) = e {
            keep_failed(out, d, run, data);
        }
    })
}

pub fn pretrain(a: &PretrainArgs) -> Result<i32> {
    let run = RunConfig::resolve(a.config.config.as_deref(), &overrides(&a.config, "pretrain")?)?;
    run.log();
    let data = load_dataset(&a.data)?;
    let outcome = pretrain_phase(&data, &run, &a.out)?;
    let s = &run.settings;
    let model = TabNetModel {
        config: s.train.effective(&s.encoder),
        params: outcome.encoder,
        schema: data.schema.clone(),
        phase: Phase::Pretrained,
        seed: s.train.seed,
        config_echo: toml::to_string(s).map_err(|e| Error::Config(e.to_string()))?,
    };
    model.save(&a.out)?;
    let mut hist = String::from("epoch,train_loss,holdout_loss\n");
    for (e, (t, h)) in outcome.train_loss.iter().zip(&outcome.holdout_loss).enumerate() {
        let _ = writeln!(hist, "{e},{t},{h}");
    }
    write_file(&with_suffix(&a.out, ".history.csv"), hist)?;
    println!(
        "pretrained encoder written to {} (best holdout loss {:.6} at epoch {})",
        a.out.display(),
        outcome.holdout_loss[outcome.best_epoch],
        outcome.best_epoch
    );
    Ok(EXIT_OK)
}

pub fn train(a: &TrainArgs) -> Result<i32> {
    let mut o = overrides(&a.config, "train")?;
    if let Some(floor) = a.resample {
        o.push(("train.resample.floor_fraction".into(), Value::Float(floor)));
    }
    let run = RunConfig::resolve(a.config.config.as_deref(), &o)?;
    run.log();
    let data = load_dataset(&a.data)?;
    let s = &run.settings;

    let warm = if a.pretrain {
        info!("pretraining on {} rows", data.len());
        Some(pretrain_phase(&data, &run, &a.out)?.encoder)
    } else if let Some(p) = &a.warm_start {
        let m = load_model(p)?;
        m.check_schema(&data.schema)?;
        info!("warm start from {} ({} weights)", p.display(), m.phase);
        Some(m.params)
    } else {
        None
    };

    let outcome = run_train(&data, &s.encoder, &s.train, warm.as_ref()).inspect_err(|e| {
        if let Error::Diverged(d) = e {
            keep_failed(&a.out, d, &run, &data);
        }
    })?;
    outcome.model.save(&a.out)?;
    let h = &outcome.history;
    let mut hist = String::from("epoch,train_loss,validation_loss,validation_macro_f1\n");
    for e in 0..h.train_loss.len() {
        let _ = writeln!(
            hist,
            "{e},{},{},{}",
            h.train_loss[e], h.validation_loss[e], h.validation_macro_f1[e]
        );
    }
    write_file(&with_suffix(&a.out, ".history.csv"), hist)?;
    println!(
        "model written to {} (best validation macro-F1 {:.4} at epoch {})",
        a.out.display(),
        h.validation_macro_f1[h.best_epoch],
        h.best_epoch
    );
    Ok(EXIT_OK)
}

pub fn evaluate(a: &EvaluateArgs) -> Result<i32> {
    if let Some(name) = &a.reference {
        reference_table(name)?;
    }
    let model = load_model(&a.model)?;
    let data = load_dataset(&a.data)?;
    let report = run_evaluate(&model, &data)?;
    let text = report.to_text();
    write_file(&a.out.join("report.txt"), &text)?;
    write_file(
        &a.out.join("report.json"),
        serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?,
    )?;
    write_file(&a.out.join("metrics.csv"), report.plot_csv())?;
    print!("{text}");
    if let Some(name) = &a.reference {
        let delta = compare_report(&report, name)?;
        let csv = delta.to_csv();
        write_file(&a.out.join("delta.csv"), &csv)?;
        println!("\ndelta against {name}\n{csv}");
    }
    Ok(EXIT_OK)
}

pub fn explain(a: &ExplainArgs) -> Result<i32> {
    let model = load_model(&a.model)?;
    let data = load_dataset(&a.data)?;
    model.check_schema(&data.schema)?;
    let report = run_explain(&model, &data.features, a.top_k)?;
    let names = model.schema.column_names();
    write_file(&a.out.join("explanations.txt"), report.to_text(&names, Some(&data.labels)))?;
    write_file(&a.out.join("global_importance.csv"), report.global_csv(&names))?;
    write_file(&a.out.join("m_agg.csv"), report.matrix_csv(&names))?;
    let degenerate: Vec<usize> = (0..report.degenerate.len()).filter(|&r| report.degenerate[r]).collect();
    let listed: Vec<String> = degenerate.iter().map(|r| r.to_string()).collect();
    write_file(&a.out.join("degenerate.txt"), listed.join("\n") + if listed.is_empty() { "" } else { "\n" })?;

    let mut ranked: Vec<usize> = (0..names.len()).collect();
    ranked.sort_by(|&x, &y| {
        report.global_importance[y]
            .total_cmp(&report.global_importance[x])
            .then(x.cmp(&y))
    });
    println!("explained {} samples, top {} features each", data.len(), a.top_k);
    println!("degenerate rows: {}", degenerate.len());
    if !degenerate.is_empty() {
        println!("  {}", listed.join(" "));
    }
    println!("global importance:");
    for &j in ranked.iter().take(a.top_k.max(1)) {
        println!("  {:<28} {:.4}", names[j], report.global_importance[j]);
    }
    Ok(EXIT_OK)
}

enum Parsed {
    Row(Vec<f64>),
    Failed(String),
}

fn parse_input(text: &str, kind: InputKind, schema: &FusionSchema) -> Vec<(usize, Parsed)> {
    let columns = schema.fused_columns();
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    let encode = |r: Result<tabitd_core::fusion::RawRecord>| match r.and_then(|r| encode_record(&r, schema, &columns)) {
        Ok(row) => Parsed::Row(row),
        Err(e) => Parsed::Failed(e.to_string()),
    };
    match kind {
        InputKind::Ids => lines
            .iter()
            .map(|&(n, l)| (n, encode(parse_ids_record(n, l, schema))))
            .collect(),
        InputKind::Ueba => {
            let Some(&(first_no, first)) = lines.first() else {
                return Vec::new();
            };
            if first.trim_start().starts_with('{') {
                lines
                    .iter()
                    .map(|&(n, l)| (n, encode(parse_ueba_json_line(n, l, schema))))
                    .collect()
            } else {
                match UebaHeader::parse(first_no, first, schema) {
                    Ok(h) => lines[1..]
                        .iter()
                        .map(|&(n, l)| (n, encode(h.parse_line(n, l, schema))))
                        .collect(),
                    Err(e) => lines[1..]
                        .iter()
                        .map(|&(n, _)| (n, Parsed::Failed(format!("header: {e}"))))
                        .collect(),
                }
            }
        }
    }
}

pub fn predict(a: &PredictArgs) -> Result<i32> {
    let model = load_model(&a.model)?;
    let text = read_text(&a.input)?;
    let parsed = parse_input(&text, a.source, &model.schema);
    if parsed.is_empty() {
        eprintln!("error: {} holds no records", a.input.display());
        return Ok(EXIT_USAGE);
    }
    let rows: Vec<f64> = parsed
        .iter()
        .filter_map(|(_, p)| match p {
            Parsed::Row(r) => Some(r.as_slice()),
            Parsed::Failed(_) => None,
        })
        .flatten()
        .copied()
        .collect();
    let ok = rows.len() / model.params.input_dim;
    let prediction = model.predict(&Tensor2::from_vec(ok, model.params.input_dim, rows)?)?;

    let mut out = String::new();
    if a.format == OutputFormat::Csv {
        out.push_str("line,predicted");
        for c in ThreatClass::ALL {
            let _ = write!(out, ",p_{}", c.name());
        }
        out.push_str(",error\n");
    }
    let mut k = 0;
    for (line, p) in &parsed {
        match (p, a.format) {
            (Parsed::Row(_), OutputFormat::Csv) => {
                let _ = write!(out, "{line},{}", prediction.labels[k].name());
                for v in prediction.probabilities.row(k) {
                    let _ = write!(out, ",{v}");
                }
                out.push_str(",\n");
                k += 1;
            }
            (Parsed::Row(_), OutputFormat::Jsonl) => {
                let probs: serde_json::Map<String, serde_json::Value> = ThreatClass::ALL
                    .iter()
                    .zip(prediction.probabilities.row(k))
                    .map(|(c, &v)| (c.name().to_string(), v.into()))
                    .collect();
                let rec = serde_json::json!({
                    "line": line,
                    "predicted": prediction.labels[k].name(),
                    "probabilities": probs,
                });
                let _ = writeln!(out, "{rec}");
                k += 1;
            }
            (Parsed::Failed(msg), OutputFormat::Csv) => {
                let quoted = msg.replace('"', "\"\"");
                let _ = write!(out, "{line},");
                out.push_str(&",".repeat(ThreatClass::COUNT));
                let _ = writeln!(out, ",\"{quoted}\"");
            }
            (Parsed::Failed(msg), OutputFormat::Jsonl) => {
                let _ = writeln!(out, "{}", serde_json::json!({ "line": line, "error": msg }));
            }
        }
    }
    let failed = parsed.len() - ok;
    if failed > 0 {
        warn!("{failed} of {} records could not be parsed", parsed.len());
    }
    match &a.out {
        Some(p) => write_file(p, out)?,
        None => std::io::stdout()
            .write_all(out.as_bytes())
            .map_err(|e| io_err(Path::new("<stdout>"), e))?,
    }
    Ok(if ok > 0 { EXIT_OK } else { EXIT_USAGE })
}
