//! `tcgw`: run field scenarios, benchmark the ledger, verify pruned archives
//! and answer consumer trace queries.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or input error.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use tcgw_core::bench;
use tcgw_core::canonical;
use tcgw_core::gateway::{verify_pruned_epoch, PrunedEpochCheck};
use tcgw_core::public_chain::{AnchorLookup, DEFAULT_CONFIRMATIONS};
use tcgw_core::workload::{self, ScenarioConfig};
use tcgw_core::{Ledger, PublicChain, WorldState};

const SEED_ENV: &str = "TCGW_SEED";

#[derive(Parser)]
#[command(name = "tcgw", version, about = "Two-tier ledger simulation kit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its report, archives and chains.
    Run {
        /// Scenario JSON; the built-in five-field scenario when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure ledger storage and batch latency; writes table2.csv and fit.json.
    Bench {
        /// Comma-separated ascending transaction counts.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<u64>>,
        #[arg(long, value_enum, default_value_t = Toggle::On)]
        verify_mode: Toggle,
        /// Drops default levels above this count.
        #[arg(long, default_value_t = 100_000)]
        max_level: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check archived epochs against the anchors on a public chain.
    Verify {
        /// Directory of `<channel>.epoch-<k>.tcgw` files (or a run output directory).
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        chain: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CONFIRMATIONS)]
        confirmations: u64,
    },
    /// Print the consumer view of one channel as canonical JSON.
    Trace {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        channel: String,
        /// Live private ledger; adds the in-progress document to the view.
        #[arg(long)]
        private: Option<PathBuf>,
        /// Document to show from the private ledger (default `lot-<channel>`).
        #[arg(long)]
        doc: Option<String>,
        #[arg(long, default_value_t = DEFAULT_CONFIRMATIONS)]
        confirmations: u64,
    },
    /// Dump a ledger file as JSON.
    Inspect { file: PathBuf },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => cmd_run(config.as_deref(), &out),
        Command::Bench {
            levels,
            verify_mode,
            max_level,
            out,
        } => cmd_bench(levels, verify_mode == Toggle::On, max_level, &out),
        Command::Verify {
            archive,
            chain,
            confirmations,
        } => cmd_verify(&archive, &chain, confirmations),
        Command::Trace {
            chain,
            channel,
            private,
            doc,
            confirmations,
        } => cmd_trace(&chain, &channel, private.as_deref(), doc, confirmations),
        Command::Inspect { file } => cmd_inspect(&file),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn verdict(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig> {
    let mut cfg = match path {
        Some(p) => {
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            ScenarioConfig::from_json(&bytes).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ScenarioConfig::default_five_field(),
    };
    if let Ok(raw) = std::env::var(SEED_ENV) {
        let seed: u64 = raw
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={raw:?} is not an integer"))?;
        cfg.override_seeds(seed);
    }
    Ok(cfg)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(config: Option<&Path>, out: &Path) -> Result<ExitCode> {
    let cfg = load_config(config)?;
    let outcome = workload::run_scenario(&cfg)?;

    write(&out.join("config.json"), &cfg.to_canonical_json())?;
    write(&out.join("report.json"), &outcome.report.to_canonical_json())?;
    for archive in &outcome.archives {
        write(
            &out.join("archive").join(archive.file_name()),
            &archive.ledger.to_bytes(),
        )?;
    }
    for node in &outcome.nodes {
        write(
            &out.join("private").join(format!("{}.tcgw", node.channel_id())),
            &node.ledger().to_bytes(),
        )?;
    }
    write(&out.join("public.tcgw"), &outcome.public.ledger().to_bytes())?;

    print!("{}", workload::summary_table(&outcome.report));
    println!("report digest {}", outcome.report.digest());
    if !outcome.report.all_verified {
        eprintln!("verification failed; see report.json");
    }
    Ok(verdict(outcome.report.all_verified))
}

fn cmd_bench(levels: Option<Vec<u64>>, verify_mode: bool, max_level: u64, out: &Path) -> Result<ExitCode> {
    let levels = levels.unwrap_or_else(|| bench::capped_levels(max_level));
    if levels.is_empty() {
        bail!("no levels to measure");
    }
    let points = bench::bench_batch_time(&levels, verify_mode)?;
    let fit = bench::fit_report(&points, 100, verify_mode);

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    bench::emit_csv(&points, &out.join("table2.csv"))?;
    write(&out.join("fit.json"), serde_json::to_string_pretty(&fit)?.as_bytes())?;

    print!("{}", bench::csv_string(&points));
    match &fit.memory {
        Some(m) => println!(
            "memory fit over N >= {}: slope {:.2} B/tx, intercept {:.0} B, R^2 {:.6}",
            fit.min_level, m.slope, m.intercept, m.r_squared
        ),
        None => println!("memory fit: fewer than two levels >= {}", fit.min_level),
    }
    println!("{}", bench::REPORT_NOTE);
    Ok(ExitCode::SUCCESS)
}

fn load_public(path: &Path, confirmations: u64) -> Result<PublicChain> {
    let ledger = Ledger::load(path).with_context(|| format!("loading public chain {}", path.display()))?;
    PublicChain::from_ledger(ledger, confirmations).with_context(|| format!("reading anchors from {}", path.display()))
}

/// `<channel>.epoch-<k>.tcgw` files, ordered by channel then epoch.
fn archive_files(dir: &Path) -> Result<Vec<(String, u64, PathBuf)>> {
    let dir = if dir.join("archive").is_dir() {
        dir.join("archive")
    } else {
        dir.to_path_buf()
    };
    let mut found = Vec::new();
    for entry in fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(stem) = name.strip_suffix(".tcgw") else {
            continue;
        };
        let Some((channel, epoch)) = stem.rsplit_once(".epoch-") else {
            continue;
        };
        let Ok(epoch) = epoch.parse::<u64>() else { continue };
        found.push((channel.to_owned(), epoch, path));
    }
    if found.is_empty() {
        bail!("no archived epochs in {}", dir.display());
    }
    found.sort();
    Ok(found)
}

fn cmd_verify(archive: &Path, chain: &Path, confirmations: u64) -> Result<ExitCode> {
    let files = archive_files(archive)?;
    let public = load_public(chain, confirmations)?;

    let mut first_failure: Option<String> = None;
    let public_report = public.ledger().verify_chain();
    if !public_report.ok {
        println!("public chain: FAIL {public_report:?}");
        first_failure = Some("public chain".into());
    }

    for (channel, epoch, path) in files {
        let check = match (Ledger::load(&path), public.confirmed_anchor(&channel, epoch)) {
            (Err(e), _) => Err(format!("unreadable archive: {e}")),
            (Ok(_), None) => Err("no confirmed anchor on the public chain".to_owned()),
            (Ok(ledger), Some(anchor)) => {
                let PrunedEpochCheck { ok, failures } = verify_pruned_epoch(&ledger, &anchor.summary, &public);
                if ok {
                    Ok(())
                } else {
                    Err(format!("{failures:?}"))
                }
            }
        };
        match check {
            Ok(()) => println!("{channel} epoch {epoch}: ok"),
            Err(why) => {
                println!("{channel} epoch {epoch}: FAIL {why}");
                first_failure.get_or_insert_with(|| format!("{channel} epoch {epoch}"));
            }
        }
    }

    if let Some(first) = &first_failure {
        eprintln!("verification failed; first failure: {first}");
    }
    Ok(verdict(first_failure.is_none()))
}

fn cmd_trace(
    chain: &Path,
    channel: &str,
    private: Option<&Path>,
    doc: Option<String>,
    confirmations: u64,
) -> Result<ExitCode> {
    let public = load_public(chain, confirmations)?;
    let state = match private {
        Some(p) => {
            let ledger = Ledger::load(p).with_context(|| format!("loading {}", p.display()))?;
            Some(WorldState::replay(&ledger).with_context(|| format!("replaying {}", p.display()))?)
        }
        None => None,
    };
    let doc_id = doc.unwrap_or_else(|| format!("lot-{channel}"));
    let document = state.as_ref().and_then(|s| s.read_document(&doc_id));
    let view = public.trace_product(channel, document);
    let mut bytes = canonical::canonical_json(&view)?;
    bytes.push(b'\n');
    emit(&bytes)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_inspect(file: &Path) -> Result<ExitCode> {
    let ledger = Ledger::load(file).with_context(|| format!("loading {}", file.display()))?;
    let report = ledger.verify_chain();
    let (height, head) = ledger.head();
    let blocks: Vec<Value> = ledger
        .blocks()
        .iter()
        .map(|b| {
            let txs: Vec<Value> = b
                .transactions
                .iter()
                .map(|tx| {
                    json!({
                        "tx_id": tx.tx_id,
                        "kind": format!("{:?}", tx.kind),
                        "timestamp": tx.timestamp,
                        "author_id": tx.author_id,
                        "payload": serde_json::from_slice::<Value>(&tx.payload)
                            .unwrap_or_else(|_| Value::String(hex_of(&tx.payload))),
                    })
                })
                .collect();
            json!({
                "height": b.height,
                "previous_hash": b.previous_hash,
                "timestamp": b.timestamp,
                "tx_root": b.tx_root,
                "block_hash": b.block_hash,
                "transactions": txs,
            })
        })
        .collect();
    let dump = json!({
        "chain_id": ledger.chain_id(),
        "genesis_anchor": ledger.genesis_anchor(),
        "height": height,
        "head_hash": head,
        "size_bytes": ledger.size_bytes(),
        "transaction_count": ledger.transaction_count(),
        "verification": {
            "ok": report.ok,
            "first_bad_height": report.first_bad_height,
            "reason": report.reason.map(|r| format!("{r:?}")),
        },
        "blocks": blocks,
    });
    let mut bytes = serde_json::to_vec_pretty(&dump)?;
    bytes.push(b'\n');
    emit(&bytes)?;
    Ok(ExitCode::SUCCESS)
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(bytes: &[u8]) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(bytes).and_then(|()| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn hex_of(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
