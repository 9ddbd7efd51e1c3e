use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ArgMatches;
use get_core::config::parse_config;
use get_core::corpus::{load_dataset, make_synthetic, write_dataset, ClaimRecord, Lexicon};
use get_core::model::{Example, GetModel};
use get_core::numcore::{checkpoint, ParamStore};
use get_core::pipeline::{build_model, prepare_examples, PredictionRecord};
use get_core::textgraph::{build_graph, GraphRecord};
use get_core::training::{
    cross_validate, evaluate, predict_one, stratified_split, table_header, table_row, train,
    EpochLog, Metrics, TABLE_COLUMNS,
};
use get_core::{Error, HyperParams, Result};
use log::info;

use crate::args::Settings;

const CKPT: &str = "model.ckpt";
const LEXICON: &str = "lexicon.json";
const CONFIG: &str = "config.ini";
const EPOCHS: &str = "epochs.jsonl";
const REPORT: &str = "report.txt";

fn out_path(m: &ArgMatches) -> Option<PathBuf> {
    m.get_one::<String>("out").map(PathBuf::from)
}

fn parse_f64(m: &ArgMatches, id: &str) -> Result<Option<f64>> {
    m.get_one::<String>(id)
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("--{}: cannot parse {v:?}", id.replace('_', "-"))))
        })
        .transpose()
}

/// Opens `path`, or stdout when absent.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn records(s: &Settings) -> Result<Vec<ClaimRecord>> {
    if s.paths.synth {
        return Ok(make_synthetic(&s.synth));
    }
    match (&s.paths.claims, &s.paths.evidences) {
        (Some(c), Some(e)) => {
            let recs = load_dataset(c, e, s.hp.n_evidences)?;
            let n_true = recs.iter().filter(|r| r.label.map(|l| l.as_u8()) == Some(1)).count();
            let n_evi: usize = recs.iter().map(|r| r.evidences.len()).sum();
            info!("loaded {} claims ({n_true} true), {n_evi} evidences", recs.len());
            Ok(recs)
        }
        _ => Err(Error::Config(
            "no data: pass --data synth, --data DIR, or --claims and --evidences".into(),
        )),
    }
}

fn labelled(examples: &[Example]) -> Result<Vec<u8>> {
    examples.iter().map(Example::label_u8).collect()
}

fn subset(examples: &[Example], idx: &[usize]) -> Vec<Example> {
    idx.iter().map(|&i| examples[i].clone()).collect()
}

/// Splits off a stratified validation share for early stopping. With a
/// zero share the training set doubles as validation.
fn fit_val_split(examples: &[Example], hp: &HyperParams, salt: u64) -> Result<(Vec<Example>, Vec<Example>)> {
    let labels = labelled(examples)?;
    let (fit, val) = stratified_split(&labels, hp.val_fraction, hp.seed ^ salt);
    let fit = subset(examples, &fit);
    let val = if val.is_empty() { fit.clone() } else { subset(examples, &val) };
    Ok((fit, val))
}

fn epoch_line(e: &EpochLog) -> String {
    serde_json::to_string(e).expect("epoch log serializes")
}

fn report(rows: &[(&str, Metrics)]) -> String {
    let mut out = format!("{:<8} {}\n", "split", table_header());
    for (name, m) in rows {
        out.push_str(&format!("{name:<8} {}\n", table_row(m)));
    }
    out
}

pub fn train_cmd(m: &ArgMatches) -> Result<()> {
    let s = Settings::resolve(m)?;
    let dir = out_path(m).unwrap_or_else(|| PathBuf::from("run"));
    let test_fraction = parse_f64(m, "test_fraction")?.unwrap_or(0.0);
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config("--test-fraction must be in [0, 1)".into()));
    }
    let recs = records(&s)?;
    let lex = Lexicon::from_records(&recs);
    let examples = prepare_examples(&recs, &lex, &s.hp)?;
    if examples.is_empty() {
        return Err(Error::Data("no usable claims".into()));
    }
    let labels = labelled(&examples)?;
    let (train_idx, test_idx) = stratified_split(&labels, test_fraction, s.hp.seed ^ 0x7e57);
    let train_all = subset(&examples, &train_idx);
    let test = subset(&examples, &test_idx);
    let (fit, val) = fit_val_split(&train_all, &s.hp, 0)?;

    fs::create_dir_all(&dir)?;
    let (model, mut store) = build_model(&s.hp, &lex, s.paths.embeddings.as_deref())?;
    info!("{} parameters in {} tensors", store.num_scalars(), store.len());
    let mut log = BufWriter::new(fs::File::create(dir.join(EPOCHS))?);
    let mut io_err = None;
    let outcome = train(&model, &mut store, &fit, &val, &s.hp, |e| {
        info!(
            "epoch {:>3}  loss {:.4}  val F1-Ma {:.4}",
            e.epoch, e.train_loss, e.val_f1_ma
        );
        if let Err(err) = writeln!(log, "{}", epoch_line(e)) {
            io_err.get_or_insert(err);
        }
    })?;
    if let Some(err) = io_err {
        return Err(err.into());
    }
    log.flush()?;

    checkpoint::save(&dir.join(CKPT), &store)?;
    fs::write(dir.join(LEXICON), serde_json::to_string(&lex).expect("lexicon serializes"))?;
    fs::write(dir.join(CONFIG), s.hp.to_config_string())?;

    let mut rows = vec![
        ("train", evaluate(&model, &store, &fit)?.metrics),
        ("val", evaluate(&model, &store, &val)?.metrics),
    ];
    if !test.is_empty() {
        rows.push(("test", evaluate(&model, &store, &test)?.metrics));
    }
    let text = format!(
        "best epoch {} of {} (val F1-Ma {:.4})\n{}",
        outcome.best_epoch,
        outcome.log.len(),
        outcome.best_val_f1,
        report(&rows)
    );
    fs::write(dir.join(REPORT), &text)?;
    print!("{text}");
    Ok(())
}

/// Reloads a run directory: its config, lexicon and parameters.
fn load_run(dir: &Path) -> Result<(HyperParams, Lexicon, GetModel, ParamStore)> {
    let read = |name: &str| {
        fs::read_to_string(dir.join(name))
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", dir.join(name).display())))
    };
    let mut hp = HyperParams::default();
    let rest = hp.apply_entries(parse_config(&read(CONFIG)?)?)?;
    if let Some(e) = rest.first() {
        return Err(Error::Config(format!("{CONFIG}: unexpected section [{}]", e.section)));
    }
    let lex: Lexicon = serde_json::from_str(&read(LEXICON)?)
        .map_err(|e| Error::Checkpoint(format!("{LEXICON}: {e}")))?;
    let lex = lex.reindex();
    let (model, mut store) = build_model(&hp, &lex, None)?;
    checkpoint::load_into(&dir.join(CKPT), &mut store)?;
    Ok((hp, lex, model, store))
}

/// Data for eval/predict: the run's stored settings fix the architecture;
/// only data location flags are taken from the command line.
fn run_and_data(m: &ArgMatches) -> Result<(HyperParams, Lexicon, GetModel, ParamStore, Vec<ClaimRecord>)> {
    let dir = PathBuf::from(m.get_one::<String>("model").expect("required"));
    let (hp, lex, model, store) = load_run(&dir)?;
    let mut s = Settings::resolve(m)?;
    s.hp = hp.clone();
    let recs = records(&s)?;
    Ok((hp, lex, model, store, recs))
}

pub fn eval_cmd(m: &ArgMatches) -> Result<()> {
    let (hp, lex, model, store, recs) = run_and_data(m)?;
    let examples = prepare_examples(&recs, &lex, &hp)?;
    if examples.is_empty() {
        return Err(Error::Data("no usable claims to evaluate".into()));
    }
    let ev = evaluate(&model, &store, &examples)?;
    print!("{}", report(&[("eval", ev.metrics)]));
    println!("mean loss {:.6}", ev.mean_loss);
    Ok(())
}

pub fn predict_cmd(m: &ArgMatches) -> Result<()> {
    let (hp, lex, model, store, recs) = run_and_data(m)?;
    let examples = prepare_examples(&recs, &lex, &hp)?;
    let mut out = sink(out_path(m).as_deref())?;
    for ex in &examples {
        let pred = predict_one(&model, &store, ex)?;
        let rec = PredictionRecord::new(ex, &pred);
        writeln!(out, "{}", serde_json::to_string(&rec).expect("record serializes"))?;
    }
    out.flush()?;
    Ok(())
}

pub fn cv_cmd(m: &ArgMatches) -> Result<()> {
    let s = Settings::resolve(m)?;
    let folds: usize = m
        .get_one::<String>("folds")
        .expect("defaulted")
        .parse()
        .map_err(|_| Error::Config("--folds must be an integer".into()))?;
    let recs = records(&s)?;
    let lex = Lexicon::from_records(&recs);
    let examples = prepare_examples(&recs, &lex, &s.hp)?;
    let report = cross_validate(
        &examples,
        &s.hp,
        folds,
        || build_model(&s.hp, &lex, s.paths.embeddings.as_deref()),
        |f, e| info!("fold {f} epoch {:>3}  loss {:.4}  val F1-Ma {:.4}", e.epoch, e.train_loss, e.val_f1_ma),
    )?;
    println!("{:<8} {}", "fold", table_header());
    for r in &report.folds {
        println!("{:<8} {}", r.fold, table_row(&r.metrics));
    }
    println!("{:<8} {}", "mean", table_row(&report.mean));
    if let Some(p) = out_path(m) {
        let mut w = sink(Some(&p))?;
        writeln!(w, "fold,{}", TABLE_COLUMNS.join(","))?;
        let rows = report
            .folds
            .iter()
            .map(|r| (r.fold.to_string(), r.metrics))
            .chain(std::iter::once(("mean".to_string(), report.mean)));
        for (name, metrics) in rows {
            writeln!(w, "{name},{}", csv_cols(&metrics))?;
        }
        w.flush()?;
    }
    Ok(())
}

fn csv_cols(m: &Metrics) -> String {
    m.columns().iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(",")
}

pub fn sweep_cmd(m: &ArgMatches) -> Result<()> {
    let s = Settings::resolve(m)?;
    let key = match m.get_one::<String>("param").expect("required").as_str() {
        "r" | "discard_rate" => "discard_rate",
        "T_E" | "claim_layers" => "claim_layers",
        _ => "esm_layers",
    };
    let values: Vec<String> = m
        .get_one::<String>("values")
        .expect("required")
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(Error::Config("--values needs at least one value".into()));
    }
    let test_fraction = parse_f64(m, "test_fraction")?.expect("defaulted");
    if !(0.0 < test_fraction && test_fraction < 1.0) {
        return Err(Error::Config("--test-fraction must be in (0, 1) for sweep".into()));
    }
    // Validate every value before any training starts.
    let grid = values
        .iter()
        .map(|v| {
            let mut hp = s.hp.clone();
            hp.set(key, v)?;
            hp.validate()?;
            Ok((v.clone(), hp))
        })
        .collect::<Result<Vec<_>>>()?;

    let recs = records(&s)?;
    let lex = Lexicon::from_records(&recs);
    let examples = prepare_examples(&recs, &lex, &s.hp)?;
    let labels = labelled(&examples)?;
    let (train_idx, test_idx) = stratified_split(&labels, test_fraction, s.hp.seed ^ 0x7e57);
    let train_all = subset(&examples, &train_idx);
    let test = subset(&examples, &test_idx);

    let mut out = sink(out_path(m).as_deref())?;
    writeln!(out, "{key},best_epoch,{}", TABLE_COLUMNS.join(","))?;
    for (v, hp) in grid {
        let (fit, val) = fit_val_split(&train_all, &hp, 0)?;
        let (model, mut store) = build_model(&hp, &lex, s.paths.embeddings.as_deref())?;
        let outcome = train(&model, &mut store, &fit, &val, &hp, |_| {})?;
        let metrics = evaluate(&model, &store, &test)?.metrics;
        info!("{key} = {v}: test F1-Ma {:.4}", metrics.f1_macro);
        writeln!(out, "{v},{},{}", outcome.best_epoch, csv_cols(&metrics))?;
        out.flush()?;
    }
    Ok(())
}

pub fn dump_graphs_cmd(m: &ArgMatches) -> Result<()> {
    let s = Settings::resolve(m)?;
    let recs = records(&s)?;
    let lex = Lexicon::from_records(&recs);
    let mut out = sink(out_path(m).as_deref())?;
    let mut line = |rec: GraphRecord| -> Result<()> {
        writeln!(out, "{}", serde_json::to_string(&rec).expect("graph serializes"))?;
        Ok(())
    };
    for r in &recs {
        let inst = lex.encode(r, s.hp.max_claim_len, s.hp.max_evidence_len, s.hp.n_evidences);
        let g = build_graph(&inst.claim, s.hp.window)?;
        line(GraphRecord::new(&r.claim_id, "claim", None, &g, &lex.words))?;
        for (i, (seq, _)) in inst.evidences.iter().enumerate() {
            let g = build_graph(seq, s.hp.window)?;
            line(GraphRecord::new(&r.claim_id, "evidence", Some(i), &g, &lex.words))?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn synth_cmd(m: &ArgMatches) -> Result<()> {
    let s = Settings::resolve(m)?;
    let dir = out_path(m).unwrap_or_else(|| PathBuf::from("synth"));
    fs::create_dir_all(&dir)?;
    let recs = make_synthetic(&s.synth);
    write_dataset(&recs, &dir.join("claims.tsv"), &dir.join("evidences.tsv"))?;
    println!("wrote {} claims to {}", recs.len(), dir.display());
    Ok(())
}
