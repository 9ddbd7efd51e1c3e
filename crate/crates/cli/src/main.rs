mod args;
mod commands;

use std::process::ExitCode;

use get_core::Error;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Parse { .. }
        | Error::Data(_)
        | Error::Io(_)
        | Error::Checkpoint(_)
        | Error::CheckpointMismatch(_) => 2,
        Error::NonFinite(_) | Error::Shape { .. } | Error::Model(_) => 3,
    }
}

fn main() -> ExitCode {
    let matches = match args::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match matches.get_count("verbose") {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let (name, sub) = matches.subcommand().expect("subcommand required");
    let result = match name {
        "train" => commands::train_cmd(sub),
        "eval" => commands::eval_cmd(sub),
        "cv" => commands::cv_cmd(sub),
        "predict" => commands::predict_cmd(sub),
        "sweep" => commands::sweep_cmd(sub),
        "dump-graphs" => commands::dump_graphs_cmd(sub),
        "synth" => commands::synth_cmd(sub),
        _ => unreachable!("clap rejects unknown subcommands"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // Downstream reader closed the pipe, e.g. `get dump-graphs | head`.
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
