// SPDX-License-Identifier: Apache-2.0

//! `verfu`: key generation, campaigns, transcript audits and overhead sweeps.
//!
//! Exit codes: 0 when every verification passed, 1 on a verification
//! failure, 2 on usage, configuration, key or I/O errors.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use verfu_core::audit::{audit_transcript, AuditOptions};
use verfu_core::config::{RunConfig, WorkloadConfig};
use verfu_core::metrics::{write_csv, Role};
use verfu_core::protocol::transcript::{read_jsonl, write_jsonl, Phase};
use verfu_core::protocol::ProtocolError;
use verfu_core::simtrain::{CampaignRun, SimError};
use verfu_core::{ComParams, LhhParams, PaillierPublicKey, PaillierSecretKey, Setup, Trapdoor};

const PK_FILE: &str = "paillier_pk.json";
const SK_FILE: &str = "paillier_sk.json";
const LHH_FILE: &str = "lhh_params.json";
const COM_FILE: &str = "com_params.json";
const TRAPDOOR_FILE: &str = "trapdoor.json";

#[derive(Parser, Debug)]
#[command(name = "verfu", version, about = "Verifiable federated unlearning campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML campaign configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, env = "VERFU_SEED")]
    seed: Option<u64>,
    /// Server behavior, e.g. `honest`, `skip_unlearn`, `partial_unlearn:1/2`.
    #[arg(long)]
    behavior: Option<String>,
    /// Stop at the first failed verification.
    #[arg(long)]
    strict: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate key material into an existing directory.
    Keygen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Also write the commitment trapdoor.
        #[arg(long)]
        emit_trapdoor: bool,
    },
    /// Run a campaign and write transcript, metrics and utility files.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Key directory from `keygen`; keys are derived from the seed otherwise.
        #[arg(long)]
        keys: Option<PathBuf>,
    },
    /// Recompute every verification from a transcript.
    Audit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        keys: Option<PathBuf>,
        /// Write the full report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Summarized overhead across unlearning rates, dimensions and key sizes.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2")]
        rates: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "16,256")]
        dims: Vec<usize>,
        /// Applied to both the Paillier modulus and the group.
        #[arg(long, value_delimiter = ',', default_value = "256")]
        kappas: Vec<u64>,
    },
}

enum Outcome {
    Verified,
    Failed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(Outcome::Verified) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Keygen { common, out, emit_trapdoor } => keygen(&load_config(&common)?, &out, emit_trapdoor),
        Command::Run { common, out, keys } => run(&load_config(&common)?, &out, keys.as_deref()),
        Command::Audit { common, transcript, keys, report } => {
            audit(&load_config(&common)?, &transcript, keys.as_deref(), report.as_deref())
        }
        Command::Bench { common, out, rates, dims, kappas } => bench(&load_config(&common)?, &out, &rates, &dims, &kappas),
    }
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::from_toml_str(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(b) = &c.behavior {
        cfg.behavior = b.clone();
    }
    cfg.strict |= c.strict;
    cfg.validate()?;
    Ok(cfg)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

fn require_dir(dir: &Path) -> Result<()> {
    if !dir.is_dir() {
        bail!("output directory {} does not exist", dir.display());
    }
    Ok(())
}

fn keygen(cfg: &RunConfig, out: &Path, emit_trapdoor: bool) -> Result<Outcome> {
    require_dir(out)?;
    let setup = cfg.setup()?;
    write_json(out, PK_FILE, &setup.params.pk)?;
    write_json(out, SK_FILE, &setup.sk)?;
    write_json(out, LHH_FILE, &setup.params.lhh)?;
    write_json(out, COM_FILE, &setup.params.com)?;
    if emit_trapdoor {
        write_json(out, TRAPDOOR_FILE, setup.trapdoor.as_ref().context("dealer produced no trapdoor")?)?;
    }
    println!("keys written to {}", out.display());
    Ok(Outcome::Verified)
}

fn load_setup(cfg: &RunConfig, keys: Option<&Path>) -> Result<Setup> {
    let Some(dir) = keys else {
        return Ok(cfg.setup()?);
    };
    let pk: PaillierPublicKey = read_json(&dir.join(PK_FILE))?;
    let sk: PaillierSecretKey = read_json(&dir.join(SK_FILE))?;
    let lhh: LhhParams = read_json(&dir.join(LHH_FILE))?;
    let com: ComParams = read_json(&dir.join(COM_FILE))?;
    let td_path = dir.join(TRAPDOOR_FILE);
    let trapdoor: Option<Trapdoor> = if td_path.exists() { Some(read_json(&td_path)?) } else { None };
    if lhh.dim != cfg.dim() {
        bail!("keys hash {} coordinates but the configured workload has {}", lhh.dim, cfg.dim());
    }
    if trapdoor.is_none() && cfg.parsed_behavior()?.needs_trapdoor() {
        bail!("behavior `{}` needs {} in {}", cfg.behavior, TRAPDOOR_FILE, dir.display());
    }
    Setup::from_keys(pk, sk, lhh, com, trapdoor, cfg.codec()?).context("keys do not match the configuration")
}

/// `Ok(None)` when strict mode stopped the campaign at a failed round.
fn execute(cfg: &RunConfig, setup: Setup) -> Result<Option<CampaignRun>> {
    match cfg.execute(setup) {
        Ok(run) => Ok(Some(run)),
        Err(SimError::Protocol(ProtocolError::VerificationFailed { round, devices })) => {
            eprintln!("verification failed in round {round} for devices {devices:?}; stopping (strict)");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn report_failures(run: &CampaignRun) -> Outcome {
    let failed: Vec<_> = run.results.iter().filter(|r| !r.all_verified()).collect();
    if failed.is_empty() {
        return Outcome::Verified;
    }
    eprintln!("verification failed in {} of {} rounds", failed.len(), run.results.len());
    for r in failed {
        eprintln!("  round {}: devices {:?}", r.round, r.failed());
    }
    Outcome::Failed
}

fn run(cfg: &RunConfig, out: &Path, keys: Option<&Path>) -> Result<Outcome> {
    require_dir(out)?;
    let setup = load_setup(cfg, keys)?;
    let Some(run) = execute(cfg, setup)? else {
        return Ok(Outcome::Failed);
    };
    let path = out.join("transcript.jsonl");
    let f = BufWriter::new(File::create(&path).with_context(|| format!("writing {}", path.display()))?);
    write_jsonl(f, run.transcripts.iter().flat_map(|t| &t.records))?;
    let ledger = &run.world.ledger;
    write_csv(create(out, "metrics.csv")?, &ledger.rows(cfg.unlearn_rate))?;
    write_csv(create(out, "summary.csv")?, &ledger.summarize(cfg.unlearn_rate))?;
    write_csv(create(out, "utility.csv")?, &run.utility)?;
    println!(
        "{} rounds, {} devices exited, artifacts in {}",
        run.results.len(),
        run.world.exited.len(),
        out.display()
    );
    Ok(report_failures(&run))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("writing {}", path.display()))?))
}

fn audit(cfg: &RunConfig, transcript: &Path, keys: Option<&Path>, report: Option<&Path>) -> Result<Outcome> {
    let f = File::open(transcript).with_context(|| format!("reading {}", transcript.display()))?;
    let records = read_jsonl(BufReader::new(f))?;
    let setup = load_setup(cfg, keys)?;
    let rep = audit_transcript(&records, &setup.params, &setup.sk, AuditOptions::default());
    if let Some(p) = report {
        let mut text = serde_json::to_string_pretty(&rep)?;
        text.push('\n');
        fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    for r in &rep.rounds {
        let status = if r.passed() { "pass" } else { "FAIL" };
        let failed: Vec<u32> = r.recomputed.iter().filter(|(_, v)| !v.passed()).map(|(id, _)| *id).collect();
        print!("round {}: {status}", r.round);
        if !failed.is_empty() {
            print!(", rejected by {failed:?}");
        }
        if !r.agrees() {
            print!(", recorded verdicts differ");
        }
        println!();
        for issue in &r.issues {
            println!("  {issue}");
        }
    }
    let bad = rep.mismatched_rounds();
    if !bad.is_empty() {
        println!("mismatched rounds: {bad:?}");
    }
    Ok(if rep.all_pass() { Outcome::Verified } else { Outcome::Failed })
}

#[derive(Serialize)]
struct BenchRow {
    dim: usize,
    kappa: u64,
    unlearn_rate: f64,
    role: Role,
    phase: Phase,
    total_bytes: u64,
    total_time_ms: f64,
}

fn bench(base: &RunConfig, out: &Path, rates: &[f64], dims: &[usize], kappas: &[u64]) -> Result<Outcome> {
    require_dir(out)?;
    let amplitude = match base.workload {
        WorkloadConfig::Frozen { amplitude, .. } => amplitude,
        _ => 1.0f64.min(base.bound),
    };
    let mut rows = Vec::new();
    let mut outcome = Outcome::Verified;
    for &kappa in kappas {
        for &dim in dims {
            for &rate in rates {
                let mut cfg = base.clone();
                cfg.unlearn_rate = rate;
                cfg.kappa_paillier = kappa;
                cfg.kappa_group = kappa;
                cfg.workload = WorkloadConfig::Frozen { dim, amplitude };
                cfg.validate().with_context(|| format!("sweep cell rate={rate} dim={dim} kappa={kappa}"))?;
                let Some(run) = execute(&cfg, cfg.setup()?)? else {
                    outcome = Outcome::Failed;
                    continue;
                };
                if let Outcome::Failed = report_failures(&run) {
                    outcome = Outcome::Failed;
                }
                rows.extend(run.world.ledger.summarize(rate).into_iter().map(|s| BenchRow {
                    dim,
                    kappa,
                    unlearn_rate: s.unlearn_rate,
                    role: s.role,
                    phase: s.phase,
                    total_bytes: s.total_bytes,
                    total_time_ms: s.total_time_ms,
                }));
                eprintln!("cell rate={rate} dim={dim} kappa={kappa} done");
            }
        }
    }
    write_csv(create(out, "bench.csv")?, &rows)?;
    println!("{} rows written to {}", rows.len(), out.join("bench.csv").display());
    Ok(outcome)
}
