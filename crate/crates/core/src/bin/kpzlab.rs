use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Command, FromArgMatches};

use kpzlab::harness::{self, ExperimentConfig, ExperimentId, Overrides, RunStatus};
use kpzlab::verification::format_table;

/// Options shared by every experiment subcommand.
#[derive(Debug, Args)]
struct RunArgs {
    /// TOML file with `seed`, `threads`, `out` and per-experiment sections.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Master seed; every random stream derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    threads: Option<usize>,
    /// Output root; the run writes into `<out>/<experiment>/`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parameter override, repeatable: `--set replicas=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
    /// Further parameter overrides as `--key value` or `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    params: Vec<String>,
}

fn cli() -> Command {
    let mut cmd = Command::new("kpzlab")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Numerical experiments on white-noise invariance for KPZ and Burgers")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for id in ExperimentId::ALL {
        cmd = cmd.subcommand(RunArgs::augment_args(Command::new(id.name())).about(id.about()));
    }
    cmd
}

/// Moves known options that followed a free-form `--key value` (and were
/// therefore captured as trailing tokens) back into their fields.
fn reclaim_known_flags(args: &mut RunArgs) -> kpzlab::Result<()> {
    let tokens = std::mem::take(&mut args.params);
    let mut it = tokens.into_iter();
    let missing = |flag: &str| kpzlab::LabError::Config { path: flag.to_string(), reason: "missing value".into() };
    while let Some(tok) = it.next() {
        let (name, inline) = match tok.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (tok.clone(), None),
        };
        let mut value = |flag: &str| inline.clone().or_else(|| it.next()).ok_or_else(|| missing(flag));
        match name.as_str() {
            "--print-config" if inline.is_none() => args.print_config = true,
            "--config" | "-c" => args.config = Some(value("config")?.into()),
            "--out" => args.out = Some(value("out")?.into()),
            "--set" => args.set.push(value("set")?),
            "--seed" => {
                let v = value("seed")?;
                args.seed = Some(v.parse().map_err(|_| kpzlab::LabError::Config { path: "seed".into(), reason: format!("`{v}` is not an integer") })?);
            }
            "--threads" => {
                let v = value("threads")?;
                args.threads = Some(v.parse().map_err(|_| kpzlab::LabError::Config { path: "threads".into(), reason: format!("`{v}` is not an integer") })?);
            }
            _ => {
                args.params.push(tok);
                if inline.is_none() {
                    args.params.extend(it.next());
                }
            }
        }
    }
    Ok(())
}

fn overrides(args: &RunArgs) -> kpzlab::Result<Overrides> {
    let mut values = args.set.iter().map(|s| Overrides::parse_pair(s)).collect::<kpzlab::Result<Vec<_>>>()?;
    values.extend(Overrides::parse_tokens(&args.params)?);
    Ok(Overrides { seed: args.seed, threads: args.threads, out: args.out.clone(), values })
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let Some((name, sub)) = matches.subcommand() else {
        return ExitCode::from(2);
    };
    let id: ExperimentId = name.parse().expect("subcommands are built from experiment names");
    let mut args = match RunArgs::from_arg_matches(sub) {
        Ok(a) => a,
        Err(e) => e.exit(),
    };
    let loaded = reclaim_known_flags(&mut args).and_then(|()| overrides(&args)).and_then(|o| ExperimentConfig::load(id, args.config.as_deref(), &o));
    let cfg = match loaded {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("kpzlab {name}: configuration error: {e}");
            return ExitCode::from(RunStatus::ConfigError.exit_code() as u8);
        }
    };
    if args.print_config {
        print!("{}", cfg.to_toml());
        return ExitCode::SUCCESS;
    }

    let outcome = harness::run_config(&cfg);
    if let Some(o) = &outcome.output {
        print!("{}", format_table(&o.reports));
        if let Some(serde_json::Value::Array(criteria)) = o.summary.get("criteria") {
            for c in criteria {
                let verdict = if c["pass"].as_bool() == Some(true) { "PASS" } else { "FAIL" };
                println!("{} {verdict} {}: {}", c["criterion"].as_str().unwrap_or("?"), c["title"].as_str().unwrap_or(""), c["detail"].as_str().unwrap_or(""));
            }
        }
    }
    if let Some(dir) = &outcome.run_dir {
        println!("run directory: {}", dir.display());
    }
    if let Some(e) = &outcome.error {
        eprintln!("kpzlab {name}: {e}");
    }
    println!("status: {:?} (config {})", outcome.status, &cfg.hash()[..12]);
    ExitCode::from(outcome.exit_code() as u8)
}
