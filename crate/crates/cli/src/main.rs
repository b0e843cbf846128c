//! Operator CLI: scenario runner, state inspection and integrity checks.
//!
//! State persists between invocations as `state.json` inside the `--out`
//! directory; `run` additionally writes the deterministic artifacts
//! (ledger export, graph exports, audit log, report). Errors print a
//! machine-readable `error: category=<cat> ...` line on stderr and exit
//! nonzero.

use clap::{Parser, Subcommand};
use peerchain_core::engine::Engine;
use peerchain_core::errors::{Error, Result};
use peerchain_core::export;
use peerchain_core::graph::ManuscriptId;
use peerchain_core::policy::PolicyConfig;
use peerchain_core::scenario::{parse_script, write_artifacts, ScenarioRunner, SymbolTable};
use peerchain_core::{Address, TokenAmount};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "peerchain",
    about = "Deterministic peer-review publication ledger",
    version
)]
struct Cli {
    /// State and artifact directory.
    #[arg(long, global = true, default_value = "peerchain-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Create a fresh state directory with a genesis-only ecosystem.
    Init {
        /// Flat key=value policy file.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Scenario seed driving all randomness.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Execute a scenario script and write all artifacts.
    Run {
        script: PathBuf,
        /// Policy file overriding the script's policy directives.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Seed overriding the script's seed directive.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print a user's spendable and escrowed balance.
    Balance { user: String },
    /// Print a manuscript node with all components.
    Show { manuscript: String },
    /// Verify ledger and publication graph integrity; nonzero exit on any
    /// violation.
    Verify,
    /// Write a deterministic export (nodelink | dot | ledger | audit).
    Export { format: String },
}

fn state_path(out: &Path) -> PathBuf {
    out.join("state.json")
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io(e.to_string())
}

fn save_state(runner: &ScenarioRunner, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(io_err)?;
    let json = serde_json::to_string_pretty(runner).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(state_path(out), json).map_err(io_err)
}

fn load_state(out: &Path) -> Result<ScenarioRunner> {
    let path = state_path(out);
    let text = std::fs::read_to_string(&path)
        .map_err(|_| Error::Io(format!("no state at {} (run `init` first)", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Io(format!("corrupt state file: {e}")))
}

fn load_policy(path: &Path) -> Result<PolicyConfig> {
    let text = std::fs::read_to_string(path).map_err(io_err)?;
    PolicyConfig::from_config_text(&text)
}

/// Resolve a user by symbolic name or hex address.
fn resolve_user(symbols: &SymbolTable, token: &str) -> Result<(String, Address)> {
    if let Ok(addr) = symbols.user(token) {
        return Ok((token.to_string(), addr));
    }
    if let Some(addr) = Address::from_hex(token) {
        let name = symbols
            .users
            .iter()
            .find(|(_, a)| **a == addr)
            .map(|(n, _)| n.clone())
            .unwrap_or_else(|| token.to_string());
        return Ok((name, addr));
    }
    Err(Error::UnknownAddress(token.to_string()))
}

/// Resolve a manuscript by symbolic name, stable key or current hash.
fn resolve_manuscript(runner: &ScenarioRunner, token: &str) -> Result<ManuscriptId> {
    if let Ok(key) = runner.symbols.manuscript(token) {
        return Ok(key);
    }
    if let Some(hash) = peerchain_core::Hash32::from_hex(token) {
        let id = ManuscriptId(hash);
        if runner.engine.graph().resolve(&id).is_some() {
            return Ok(id);
        }
    }
    Err(Error::UnknownManuscript(token.to_string()))
}

fn cmd_init(out: &Path, policy: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let policy = match policy {
        Some(path) => load_policy(&path)?,
        None => PolicyConfig::default(),
    };
    let engine = Engine::new(seed.unwrap_or(0), policy)?;
    let mut symbols = SymbolTable::default();
    symbols.users.insert("treasury".into(), engine.treasury());
    symbols
        .manuscripts
        .insert("genesis".into(), engine.genesis());
    let runner = ScenarioRunner {
        engine,
        symbols,
        steps_applied: 0,
    };
    save_state(&runner, out)?;
    let report = write_artifacts(&runner, out)?;
    println!("initialized {}", out.display());
    println!("state_digest={}", report.state_digest);
    Ok(())
}

fn cmd_run(
    out: &Path,
    script_path: &Path,
    policy: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<()> {
    let text = std::fs::read_to_string(script_path).map_err(io_err)?;
    let mut script = parse_script(&text)?;
    if let Some(path) = policy {
        script.policy = load_policy(&path)?;
    }
    if let Some(seed) = seed {
        script.seed = seed;
    }
    let (runner, report) = peerchain_core::scenario::run_scenario(&script, out)?;
    save_state(&runner, out)?;
    for line in &report.lines {
        println!("{line}");
    }
    Ok(())
}

fn cmd_balance(out: &Path, user: &str) -> Result<()> {
    let runner = load_state(out)?;
    let (name, addr) = resolve_user(&runner.symbols, user)?;
    let (spendable, escrowed): (TokenAmount, TokenAmount) = runner.engine.balance_of(&addr)?;
    println!("user={name} address={addr} spendable={spendable} escrowed={escrowed}");
    Ok(())
}

fn cmd_show(out: &Path, manuscript: &str) -> Result<()> {
    let runner = load_state(out)?;
    let key = resolve_manuscript(&runner, manuscript)?;
    for line in export::describe_node(&runner.engine, &key)? {
        println!("{line}");
    }
    Ok(())
}

fn cmd_verify(out: &Path) -> Result<i32> {
    let runner = load_state(out)?;
    let mut report = runner.engine.verify_all();
    // exported artifacts, when present, must match the state byte for byte
    let ledger_file = out.join("ledger.txt");
    if ledger_file.exists() {
        let mut expected = runner.engine.ledger().export_lines().join("\n");
        expected.push('\n');
        match std::fs::read_to_string(&ledger_file) {
            Ok(actual) if actual == expected => {}
            Ok(_) => {
                report.ok = false;
                report.violations.push(peerchain_core::ledger::Violation {
                    kind: "export-divergence",
                    detail: format!("{} does not match the stored ledger", ledger_file.display()),
                });
            }
            Err(e) => {
                report.ok = false;
                report.violations.push(peerchain_core::ledger::Violation {
                    kind: "export-unreadable",
                    detail: e.to_string(),
                });
            }
        }
    }
    if report.ok {
        println!("ok");
        Ok(0)
    } else {
        for violation in &report.violations {
            eprintln!("violation: kind={} {}", violation.kind, violation.detail);
        }
        eprintln!(
            "error: category=verification-failed {} violations",
            report.violations.len()
        );
        Ok(1)
    }
}

fn cmd_export(out: &Path, format: &str) -> Result<()> {
    let runner = load_state(out)?;
    let text = export::render_export(&runner.engine, format)?;
    let file = match format {
        "nodelink" => "graph-nodelink.txt",
        "dot" => "graph.dot",
        "ledger" => "ledger.txt",
        "audit" => "audit.txt",
        _ => unreachable!("render_export validated the format"),
    };
    let path = out.join(file);
    std::fs::write(&path, text).map_err(io_err)?;
    println!("{}", path.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Cmd::Init { policy, seed } => cmd_init(&cli.out, policy, seed).map(|_| 0),
        Cmd::Run {
            script,
            policy,
            seed,
        } => cmd_run(&cli.out, &script, policy, seed).map(|_| 0),
        Cmd::Balance { user } => cmd_balance(&cli.out, &user).map(|_| 0),
        Cmd::Show { manuscript } => cmd_show(&cli.out, &manuscript).map(|_| 0),
        Cmd::Verify => cmd_verify(&cli.out),
        Cmd::Export { format } => cmd_export(&cli.out, &format).map(|_| 0),
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: category={} {e}", e.category());
            std::process::exit(1);
        }
    }
}
