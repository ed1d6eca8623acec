use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use querybridge::io::{load_config, load_instance, scan_dir, LoadedInstance};
use querybridge::remote::{CassetteMode, RemoteProposer, ServiceConfig as RemoteConfig};
use querybridge::report::summary_table;
use querybridge::runner::{exit_code, plan_to_dir, revealed, sweep_to_dir, verify_plan, PlanInput, RunError, SweepOptions};
use querybridge::service::{serve, ServiceConfig};
use querybridge::terminal::TerminalOracle;
use querybridge_core::bench::sweep::KSelection;
use querybridge_core::config::SearchConfig;
use querybridge_core::oracle::{Oracle, ScriptedOracle};
use querybridge_core::proposer::Proposer;
use querybridge_core::search::SearchError;
use querybridge_core::verifier::Acceptance;

#[derive(Parser)]
#[command(name = "querybridge", version, about = "Plan under unknown preconditions by querying and bridging")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    /// Run the session service on this address.
    #[arg(long, value_name = "ADDR")]
    serve: Option<SocketAddr>,
    #[command(flatten)]
    service: ServeArgs,
}

#[derive(Args)]
struct ServeArgs {
    /// Default search config for sessions that carry none.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Session logs go to <out-dir>/sessions.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Seconds to wait for an answer before the session's query times out.
    #[arg(long)]
    query_timeout: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one search.
    Plan(PlanArgs),
    /// Run every instance in a directory across reveal counts and seeds.
    Sweep(SweepArgs),
    /// Check a plan file against an instance.
    Verify(VerifyArgs),
    /// Run the session service.
    Serve {
        #[arg(long, value_name = "ADDR")]
        serve: SocketAddr,
        #[command(flatten)]
        service: ServeArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleMode {
    Scripted,
    Interactive,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "scripted")]
    oracle: OracleMode,
    /// Latent preconditions revealed before the search.
    #[arg(long, default_value_t = 0)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    t_max: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Take hypotheses from this service instead of the instance's domain.
    #[arg(long)]
    proposer_url: Option<String>,
    #[arg(long, default_value = "")]
    proposer_model: String,
    #[arg(long, default_value_t = 30)]
    proposer_timeout: u64,
    /// Replay proposer responses from this cassette.
    #[arg(long, conflicts_with = "record")]
    replay: Option<PathBuf>,
    /// Append proposer exchanges to this cassette.
    #[arg(long)]
    record: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    instances: PathBuf,
    /// `all`, a range `0..5` (inclusive), or a list `0,2,4`.
    #[arg(long, default_value = "all")]
    k: String,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// A range `0..9` (inclusive) or a list `1,2,3`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    t_max: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_list(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().trim_start_matches('=').parse()?);
        if a > b {
            bail!("empty range `{s}`");
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|x| x.trim().parse::<u64>().with_context(|| format!("bad number `{x}`"))).collect()
}

fn k_selection(s: &str) -> Result<KSelection> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(KSelection::All);
    }
    Ok(KSelection::Only(parse_list(s)?.into_iter().map(|k| k as usize).collect()))
}

fn config_for(path: Option<&Path>, li: Option<&LoadedInstance>) -> Result<SearchConfig> {
    Ok(match path {
        Some(p) => load_config(p)?,
        None => li.and_then(|l| l.config.clone()).unwrap_or_default(),
    })
}

fn run_plan(a: PlanArgs) -> Result<i32> {
    let li = load_instance(&a.instance)?;
    let mut cfg = config_for(a.config.as_deref(), Some(&li))?;
    if let Some(t) = a.t_max {
        cfg.t_max = t;
    }
    cfg.validate().context("config")?;
    let (inst, _) = revealed(&li.instance, a.k, a.seed)?;

    let mut remote;
    let mut scripted;
    let proposer: &mut dyn Proposer = match &a.proposer_url {
        Some(url) => {
            let mode = match (&a.replay, &a.record) {
                (Some(p), _) => CassetteMode::Replay(p.clone()),
                (None, Some(p)) => CassetteMode::Record(p.clone()),
                _ => CassetteMode::Off,
            };
            let rc = RemoteConfig { url: url.clone(), model: a.proposer_model.clone(), timeout_secs: a.proposer_timeout };
            remote = RemoteProposer::new(rc, mode)?;
            &mut remote
        }
        None => {
            scripted = li.domain.clone().with_context(|| format!("{}: no domain", li.path.display()))?;
            &mut scripted
        }
    };
    let mut scripted_oracle;
    let mut tty;
    let oracle: &mut dyn Oracle = match a.oracle {
        OracleMode::Scripted => {
            scripted_oracle = ScriptedOracle::new(inst.latent_preconditions.clone());
            &mut scripted_oracle
        }
        OracleMode::Interactive => {
            tty = TerminalOracle::new(std::io::stdin().lock(), std::io::stderr());
            &mut tty
        }
    };
    match plan_to_dir(&inst, &cfg, oracle, proposer, &a.out_dir) {
        Ok(r) => {
            println!("{} after {} expansions, {} queries", r.outcome.status(), r.counters.expansions, r.counters.queries_issued);
            if let Some(chain) = r.outcome.chain() {
                for (i, step) in chain.actions().iter().enumerate() {
                    println!("  {}. {step}", i + 1);
                }
            }
            Ok(exit_code(&r.outcome))
        }
        Err(RunError::Search(SearchError::Refine(e))) => {
            eprintln!("search stopped: {e}; partial trace in {}", a.out_dir.join("trace.jsonl").display());
            Ok(2)
        }
        Err(e) => Err(e.into()),
    }
}

fn run_sweep(a: SweepArgs) -> Result<i32> {
    let (instances, skipped) = scan_dir(&a.instances)?;
    if instances.is_empty() {
        for s in &skipped {
            eprintln!("skipped {s}");
        }
        bail!("{}: no valid instances", a.instances.display());
    }
    let seeds = match (a.seed, &a.seeds) {
        (Some(s), _) => vec![s],
        (None, Some(list)) => parse_list(list)?,
        (None, None) => vec![0],
    };
    let config = a.config.as_deref().map(load_config).transpose()?;
    let opts = SweepOptions { ks: k_selection(&a.k)?, seeds, config, t_max: a.t_max };
    let report = sweep_to_dir(&instances, skipped, &opts, &a.out_dir)?;
    print!("{}", summary_table(&report));
    println!("report written to {}", a.out_dir.join("report.json").display());
    Ok(0)
}

fn run_verify(a: VerifyArgs) -> Result<i32> {
    let li = load_instance(&a.instance)?;
    let cfg = config_for(a.config.as_deref(), Some(&li))?;
    let text = std::fs::read_to_string(&a.plan).with_context(|| a.plan.display().to_string())?;
    let plan: PlanInput = serde_json::from_str(&text).with_context(|| a.plan.display().to_string())?;
    let verdict = verify_plan(&li.instance, &plan, &cfg)?;
    println!("{}", serde_json::to_string_pretty(&verdict)?);
    Ok(match verdict {
        Acceptance::Accepted(_) => 0,
        Acceptance::Rejected(_) => 2,
    })
}

fn run_serve(addr: SocketAddr, s: ServeArgs) -> Result<i32> {
    let search = config_for(s.config.as_deref(), None)?;
    let cfg = ServiceConfig { search, out_dir: s.out_dir, query_timeout: s.query_timeout.map(std::time::Duration::from_secs) };
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(serve(addr, cfg))?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match (cli.command, cli.serve) {
        (Some(Command::Plan(a)), _) => run_plan(a),
        (Some(Command::Sweep(a)), _) => run_sweep(a),
        (Some(Command::Verify(a)), _) => run_verify(a),
        (Some(Command::Serve { serve, service }), _) => run_serve(serve, service),
        (None, Some(addr)) => run_serve(addr, cli.service),
        (None, None) => {
            eprintln!("nothing to do; see --help");
            Ok(1)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
