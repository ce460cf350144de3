//! Command-line entry points: key generation, the server daemon, client
//! operations over the wire protocol, the simulator, and the verification
//! sweeps.

use std::fs;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::RngCore;

use ambigtrace::group::{Group, GroupName, ScalarRange};
use ambigtrace::net;
use ambigtrace::protocol::{
    decode_key_file, decode_token, encode_key_file, encode_token, keygen, make_token, risk_check,
    BroadcastToken,
};
use ambigtrace::rng::{crypto_rng, seeded_rng};
use ambigtrace::server::{Server, ServerConfig};
use ambigtrace::sim::{run_sim, summarize, SimConfig};
use ambigtrace::stats::{
    sampled_theorem1, sampled_theorem2, sampled_theorem3, sweep_theorem1, sweep_theorem2,
    sweep_theorem3, TheoremOutcome,
};
use ambigtrace::wire::LATEST_DAY;

#[derive(Parser)]
#[command(name = "ambigtrace", version, about = "Rerandomized contact-tracing token toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a keypair and write it as a two-line hex key file.
    Keygen(KeygenArgs),
    /// Run the registration/report/fetch server.
    Serve(ServeArgs),
    /// Client operations against a running server.
    #[command(subcommand)]
    Client(ClientCmd),
    /// Contact-graph simulation.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Verification sweeps for the rerandomization guarantees.
    #[command(subcommand)]
    Stats(StatsCmd),
}

#[derive(Args)]
struct KeygenArgs {
    #[arg(long, default_value = "toy")]
    group: GroupName,
    /// Output path; prints to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "large")]
    group: GroupName,
    /// Listen address; AMBIGTRACE_ADDR, then 127.0.0.1:7340, when omitted.
    #[arg(long)]
    addr: Option<String>,
    /// Seed for the batch rerandomization rng (system entropy when omitted).
    #[arg(long)]
    seed: Option<u64>,
    /// Close the day automatically every N seconds.
    #[arg(long)]
    day_seconds: Option<u64>,
}

#[derive(Subcommand)]
enum ClientCmd {
    /// Register the key file's public key under a user id.
    Register(ClientRegisterArgs),
    /// Mint broadcast tokens under the key file (one hex line per token).
    Broadcast(ClientBroadcastArgs),
    /// Report observed tokens (hex lines, as printed by broadcast).
    Report(ClientReportArgs),
    /// Fetch the personalized batch and run the risk check.
    Check(ClientCheckArgs),
}

#[derive(Args)]
struct ClientRegisterArgs {
    #[arg(long, default_value = "large")]
    group: GroupName,
    #[arg(long)]
    addr: Option<String>,
    #[arg(long)]
    user: u64,
    #[arg(long)]
    key: PathBuf,
}

#[derive(Args)]
struct ClientBroadcastArgs {
    #[arg(long, default_value = "large")]
    group: GroupName,
    #[arg(long)]
    key: PathBuf,
    /// How many tokens to mint, each under a fresh exponent.
    #[arg(long, default_value_t = 1)]
    count: u32,
}

#[derive(Args)]
struct ClientReportArgs {
    #[arg(long, default_value = "large")]
    group: GroupName,
    #[arg(long)]
    addr: Option<String>,
    /// File of observed tokens, one hex line each.
    #[arg(long)]
    tokens: PathBuf,
}

#[derive(Args)]
struct ClientCheckArgs {
    #[arg(long, default_value = "large")]
    group: GroupName,
    #[arg(long)]
    addr: Option<String>,
    #[arg(long)]
    user: u64,
    #[arg(long)]
    key: PathBuf,
    /// Day to fetch; the most recently closed day when omitted.
    #[arg(long)]
    day: Option<u32>,
}

#[derive(Subcommand)]
enum SimCmd {
    /// Run a simulation from a JSON config and print per-day CSV.
    Run(SimRunArgs),
}

#[derive(Args)]
struct SimRunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long, default_value = "toy")]
    group: GroupName,
    /// Seed for sampled mode (large group only).
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Scalar draws for the sampled uniformity test.
    #[arg(long, default_value_t = 10240)]
    samples: usize,
    #[arg(long, default_value_t = 0.001)]
    significance: f64,
}

#[derive(Subcommand)]
enum StatsCmd {
    /// Token-front bijection / sampled scalar uniformity.
    T1(StatsArgs),
    /// Honest-token distribution equality.
    T2(StatsArgs),
    /// Dishonest-token uniformity.
    T3(StatsArgs),
    /// Everything above.
    All(StatsArgs),
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Keygen(args) => cmd_keygen(args)?,
        Command::Serve(args) => cmd_serve(args)?,
        Command::Client(cmd) => match cmd {
            ClientCmd::Register(args) => cmd_client_register(args)?,
            ClientCmd::Broadcast(args) => cmd_client_broadcast(args)?,
            ClientCmd::Report(args) => cmd_client_report(args)?,
            ClientCmd::Check(args) => cmd_client_check(args)?,
        },
        Command::Sim(SimCmd::Run(args)) => cmd_sim_run(args)?,
        Command::Stats(cmd) => {
            let (args, t1, t2, t3) = match cmd {
                StatsCmd::T1(a) => (a, true, false, false),
                StatsCmd::T2(a) => (a, false, true, false),
                StatsCmd::T3(a) => (a, false, false, true),
                StatsCmd::All(a) => (a, true, true, true),
            };
            cmd_stats(args, t1, t2, t3)?
        }
    };
    if code != 0 {
        std::process::exit(code);
    }
    Ok(())
}

/// Explicit flag, then AMBIGTRACE_ADDR, then the default.
fn resolve_addr(flag: Option<String>) -> String {
    flag.or_else(|| std::env::var("AMBIGTRACE_ADDR").ok())
        .unwrap_or_else(|| net::DEFAULT_ADDR.to_string())
}

fn load_keys(group: &Group, path: &PathBuf) -> Result<ambigtrace::protocol::KeyPair> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading key file {}", path.display()))?;
    Ok(decode_key_file(group, &text)?)
}

fn cmd_keygen(args: KeygenArgs) -> Result<i32> {
    let group = Group::by_name(args.group);
    let keys = keygen(&group, &mut crypto_rng());
    let text = encode_key_file(&group, &keys);
    match args.out {
        Some(path) => {
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(0)
}

fn cmd_serve(args: ServeArgs) -> Result<i32> {
    let group = Arc::new(Group::by_name(args.group));
    let server = Server::new(group, ServerConfig::default());
    let addr = resolve_addr(args.addr);
    let handle = net::spawn_server(server, &addr)
        .with_context(|| format!("binding {addr}"))?;
    println!("listening on {}", handle.addr);

    if let Some(secs) = args.day_seconds {
        if secs == 0 {
            bail!("--day-seconds must be positive");
        }
        let state = Arc::clone(&handle.state);
        let mut rng: Box<dyn RngCore + Send> = match args.seed {
            Some(s) => Box::new(seeded_rng(s)),
            None => Box::new(crypto_rng()),
        };
        thread::spawn(move || loop {
            thread::sleep(Duration::from_secs(secs));
            let mut srv = state.lock().expect("server mutex poisoned");
            let day = srv.current_day();
            let pool = srv.pool_tokens().len();
            srv.end_of_day(&mut *rng);
            eprintln!("closed day {day} ({pool} pooled tokens)");
        });
    }
    loop {
        thread::park();
    }
}

fn cmd_client_register(args: ClientRegisterArgs) -> Result<i32> {
    let group = Group::by_name(args.group);
    let keys = load_keys(&group, &args.key)?;
    let addr = resolve_addr(args.addr);
    net::register_remote(addr.as_str(), &group, args.user, keys.public)
        .with_context(|| format!("registering with {addr}"))?;
    println!("registered user {}", args.user);
    Ok(0)
}

fn cmd_client_broadcast(args: ClientBroadcastArgs) -> Result<i32> {
    let group = Group::by_name(args.group);
    let keys = load_keys(&group, &args.key)?;
    let mut rng = crypto_rng();
    for _ in 0..args.count {
        let alpha = group.random_scalar(ScalarRange::NonZero, &mut rng);
        let token = make_token(&group, &keys.secret, &alpha)?;
        println!("{}", hex::encode(encode_token(&group, &token)));
    }
    Ok(0)
}

fn cmd_client_report(args: ClientReportArgs) -> Result<i32> {
    let group = Group::by_name(args.group);
    let text = fs::read_to_string(&args.tokens)
        .with_context(|| format!("reading token file {}", args.tokens.display()))?;
    let mut tokens: Vec<BroadcastToken> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bytes = hex::decode(line).with_context(|| format!("token line {}", i + 1))?;
        tokens.push(decode_token(&group, &bytes).with_context(|| format!("token line {}", i + 1))?);
    }
    let addr = resolve_addr(args.addr);
    net::report_remote(addr.as_str(), &group, tokens.clone())
        .with_context(|| format!("reporting to {addr}"))?;
    println!("report submitted ({} tokens)", tokens.len());
    Ok(0)
}

fn cmd_client_check(args: ClientCheckArgs) -> Result<i32> {
    let group = Group::by_name(args.group);
    let keys = load_keys(&group, &args.key)?;
    let addr = resolve_addr(args.addr);
    let day = args.day.unwrap_or(LATEST_DAY);
    let (day, entries) = net::fetch_remote(addr.as_str(), &group, args.user, day)
        .with_context(|| format!("fetching from {addr}"))?;
    let match_count = entries
        .iter()
        .filter(|e| risk_check(&group, &keys.secret, e))
        .count();
    eprintln!("day {day}: {} batch entries", entries.len());
    println!("at_risk={} match_count={match_count}", match_count > 0);
    Ok(0)
}

fn cmd_sim_run(args: SimRunArgs) -> Result<i32> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let mut config: SimConfig =
        serde_json::from_str(&text).context("parsing simulation config")?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let metrics = run_sim(&config)?;
    print!("{}", summarize(&metrics));
    for s in &metrics.adversary {
        eprintln!(
            "# adversary {}: {}/{} linkage guesses correct",
            s.strategy, s.correct, s.opportunities
        );
    }
    Ok(0)
}

fn cmd_stats(args: StatsArgs, t1: bool, t2: bool, t3: bool) -> Result<i32> {
    let group = Group::by_name(args.group);
    let mut rows: Vec<TheoremOutcome> = Vec::new();
    if group.small_order().is_some() {
        if t1 {
            rows.extend(sweep_theorem1(&group)?);
        }
        if t2 {
            rows.extend(sweep_theorem2(&group)?);
        }
        if t3 {
            rows.extend(sweep_theorem3(&group)?);
        }
    } else {
        let mut rng = seeded_rng(args.seed);
        if t1 {
            rows.extend(sampled_theorem1(
                &group,
                &mut rng,
                args.samples,
                256,
                args.significance,
            )?);
        }
        if t2 {
            rows.extend(sampled_theorem2(&group, &mut rng, 64));
        }
        if t3 {
            rows.extend(sampled_theorem3(&group, &mut rng, 64));
        }
    }

    println!("{:<13} {:<58} RESULT", "THEOREM", "PARAMETERS");
    let mut all_pass = true;
    for row in &rows {
        let verdict = if row.pass { "PASS" } else { "FAIL" };
        println!("{:<13} {:<58} {verdict}", row.theorem.to_string(), row.parameters);
        if let Some(c) = &row.counterexample {
            println!("  counterexample: {c}");
        }
        all_pass &= row.pass;
    }
    if all_pass {
        println!("all checks passed ({} rows)", rows.len());
        Ok(0)
    } else {
        eprintln!("verification FAILED");
        Ok(1)
    }
}
