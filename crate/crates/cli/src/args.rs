//! Command-line definition and settings resolution.
//!
//! Precedence, lowest to highest: built-in defaults (the desk profile when
//! the data is synthetic), the `--config` file, `GET_SEED`, then flags.

use std::path::PathBuf;

use clap::{Arg, ArgAction, ArgMatches, Command};
use get_core::config::{parse_config, set_synth, HYPER_KEYS, SYNTH_KEYS};
use get_core::corpus::SynthSpec;
use get_core::{Error, HyperParams, Result};

pub const PATH_KEYS: &[(&str, &str)] = &[
    ("data", "\"synth\" or a directory holding claims.tsv and evidences.tsv"),
    ("claims", "claims TSV: claim_id, label, speaker, text"),
    ("evidences", "evidences TSV: claim_id, publisher, text"),
    ("embeddings", "word vectors in text format (token v1 .. vD per line)"),
];

fn flag(key: &str) -> String {
    key.replace('_', "-")
}

fn key_listing() -> String {
    let mut out = String::from("Config keys ([section] key; each is also a --flag):\n");
    let mut section = "";
    for k in HYPER_KEYS {
        if k.section != section {
            section = k.section;
            out.push_str(&format!("  [{section}]\n"));
        }
        out.push_str(&format!("    {:<20} {}\n", k.key, k.help));
    }
    out.push_str("  [synth]  (flags are --synth-<key>)\n");
    for k in SYNTH_KEYS {
        out.push_str(&format!("    {:<20} {}\n", k.key, k.help));
    }
    out.push_str("  [paths]\n");
    for (k, help) in PATH_KEYS {
        out.push_str(&format!("    {k:<20} {help}\n"));
    }
    out.push_str("\nEnvironment: GET_SEED is used when --seed is absent.\n");
    out.push_str("Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric error.\n");
    out
}

fn common_args(cmd: Command) -> Command {
    let mut cmd = cmd
        .arg(Arg::new("config").long("config").value_name("FILE").help("config file"))
        .arg(
            Arg::new("seed")
                .long("seed")
                .env("GET_SEED")
                .value_name("N")
                .help("seed for init, shuffling, splits and synthetic data"),
        );
    for k in HYPER_KEYS.iter().filter(|k| k.key != "seed") {
        cmd = cmd.arg(
            Arg::new(k.key)
                .long(flag(k.key))
                .value_name("V")
                .help(k.help)
                .help_heading("Model / training"),
        );
    }
    for k in SYNTH_KEYS {
        let id = format!("synth_{}", k.key);
        cmd = cmd.arg(
            Arg::new(id.clone())
                .long(flag(&id))
                .value_name("V")
                .help(k.help)
                .help_heading("Synthetic data"),
        );
    }
    for (k, help) in PATH_KEYS {
        cmd = cmd.arg(
            Arg::new(*k)
                .long(*k)
                .value_name("PATH")
                .help(*help)
                .help_heading("Data"),
        );
    }
    cmd.after_help(key_listing())
}

fn model_dir_arg() -> Arg {
    Arg::new("model")
        .long("model")
        .value_name("DIR")
        .required(true)
        .help("run directory written by train")
}

fn out_arg(help: &'static str) -> Arg {
    Arg::new("out").long("out").short('o').value_name("PATH").help(help)
}

pub fn command() -> Command {
    Command::new("get")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Graph-based evidence-aware claim verification")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("verbose")
                .long("verbose")
                .short('v')
                .action(ArgAction::Count)
                .global(true)
                .help("more log output (repeatable)"),
        )
        .subcommand(common_args(
            Command::new("train")
                .about("train a model and write a run directory")
                .arg(out_arg("run directory (default: run)"))
                .arg(
                    Arg::new("test_fraction")
                        .long("test-fraction")
                        .value_name("F")
                        .help("stratified share held out and reported as test (default 0)"),
                ),
        ))
        .subcommand(common_args(
            Command::new("eval")
                .about("evaluate a trained model on labelled data")
                .arg(model_dir_arg()),
        ))
        .subcommand(common_args(
            Command::new("cv")
                .about("stratified k-fold cross-validation")
                .arg(
                    Arg::new("folds")
                        .long("folds")
                        .short('k')
                        .value_name("K")
                        .default_value("5")
                        .help("number of folds"),
                )
                .arg(out_arg("write per-fold metrics as CSV")),
        ))
        .subcommand(common_args(
            Command::new("predict")
                .about("per-claim predictions with attention weights, one JSON object per line")
                .arg(model_dir_arg())
                .arg(out_arg("output file (default: stdout)")),
        ))
        .subcommand(common_args(
            Command::new("sweep")
                .about("train and test once per value of one hyperparameter; CSV output")
                .arg(
                    Arg::new("param")
                        .long("param")
                        .required(true)
                        .value_parser(["r", "T_E", "T_R", "discard_rate", "claim_layers", "esm_layers"])
                        .help("r = discard_rate, T_E = claim_layers, T_R = esm_layers"),
                )
                .arg(
                    Arg::new("values")
                        .long("values")
                        .required(true)
                        .value_name("LIST")
                        .help("comma-separated values, e.g. 0,0.2,0.4,0.6"),
                )
                .arg(
                    Arg::new("test_fraction")
                        .long("test-fraction")
                        .value_name("F")
                        .default_value("0.25")
                        .help("stratified share held out for testing"),
                )
                .arg(out_arg("CSV file (default: stdout)")),
        ))
        .subcommand(common_args(
            Command::new("dump-graphs")
                .about("write claim and evidence graphs as JSON lines")
                .arg(out_arg("output file (default: stdout)")),
        ))
        .subcommand(common_args(
            Command::new("synth")
                .about("write a synthetic corpus as claims.tsv and evidences.tsv")
                .arg(out_arg("output directory (default: synth)")),
        ))
}

#[derive(Clone, Debug, Default)]
pub struct DataPaths {
    pub synth: bool,
    pub claims: Option<PathBuf>,
    pub evidences: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct Settings {
    pub hp: HyperParams,
    pub synth: SynthSpec,
    pub paths: DataPaths,
}

fn set_path(paths: &mut DataPaths, key: &str, v: &str) -> Result<()> {
    match key {
        "data" if v == "synth" => paths.synth = true,
        "data" => {
            let dir = PathBuf::from(v);
            paths.claims = Some(dir.join("claims.tsv"));
            paths.evidences = Some(dir.join("evidences.tsv"));
        }
        "claims" => paths.claims = Some(v.into()),
        "evidences" => paths.evidences = Some(v.into()),
        "embeddings" => paths.embeddings = Some(v.into()),
        other => return Err(Error::Config(format!("unknown key {other:?} in [paths]"))),
    }
    Ok(())
}

impl Settings {
    pub fn resolve(m: &ArgMatches) -> Result<Self> {
        let file_entries = match m.get_one::<String>("config") {
            Some(p) => parse_config(&std::fs::read_to_string(p).map_err(|e| {
                Error::Config(format!("cannot read config {p}: {e}"))
            })?)?,
            None => Vec::new(),
        };
        let flag_value = |k: &str| m.try_get_one::<String>(k).ok().flatten().cloned();

        // Paths decide the base profile, so they go first.
        let mut paths = DataPaths::default();
        for e in file_entries.iter().filter(|e| e.section == "paths") {
            set_path(&mut paths, &e.key, &e.value)
                .map_err(|err| Error::Config(format!("line {}: {err}", e.line)))?;
        }
        for (k, _) in PATH_KEYS {
            if let Some(v) = flag_value(k) {
                set_path(&mut paths, k, &v)?;
            }
        }

        let mut hp = if paths.synth {
            HyperParams::desk(HyperParams::default().seed)
        } else {
            HyperParams::default()
        };
        let mut synth = SynthSpec::default();
        let mut synth_seed_set = false;
        for e in hp.apply_entries(file_entries)? {
            match e.section.as_str() {
                "synth" => {
                    set_synth(&mut synth, &e.key, &e.value)
                        .map_err(|err| Error::Config(format!("line {}: {err}", e.line)))?;
                    synth_seed_set |= e.key == "seed";
                }
                "paths" => {}
                other => {
                    return Err(Error::Config(format!("line {}: unknown section [{other}]", e.line)))
                }
            }
        }

        if let Some(v) = flag_value("profile") {
            let seed = hp.seed;
            hp.set("profile", &v)?;
            hp.seed = seed;
        }
        for k in HYPER_KEYS.iter().filter(|k| k.key != "profile" && k.key != "seed") {
            if let Some(v) = flag_value(k.key) {
                hp.set(k.key, &v)?;
            }
        }
        if let Some(v) = flag_value("seed") {
            hp.set("seed", &v)?;
        }
        for k in SYNTH_KEYS {
            if let Some(v) = flag_value(&format!("synth_{}", k.key)) {
                set_synth(&mut synth, k.key, &v)?;
                synth_seed_set |= k.key == "seed";
            }
        }
        if !synth_seed_set {
            synth.seed = hp.seed;
        }
        hp.validate()?;
        Ok(Self { hp, synth, paths })
    }
}
