use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use qkd_core::otp::OtpStore;
use qkd_core::pipeline::KeyStores;
use qkd_core::seed::Seed;
use qkd_core::sweep::{sweep_background, sweep_gate, RunConfig, SweepAxis, SweepRow};

/// Free-space BB84 link simulator and key post-processing driver.
#[derive(Parser, Debug)]
#[command(name = "qkd", version)]
struct Cli {
    #[command(flatten)]
    run: RunArgs,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// key=value configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Sweep axis: background or gate.
    #[arg(long, global = true)]
    sweep: Option<SweepAxis>,
    /// Comma-separated axis values (counts/s or gate ns).
    #[arg(long, global = true, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Comma-separated background grid of a gate sweep.
    #[arg(long, global = true, value_delimiter = ',')]
    backgrounds: Option<Vec<f64>>,
    /// Seconds of transmission per run.
    #[arg(long, global = true)]
    duration: Option<f64>,
    /// Repetitions per point.
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Master seed, 64 hex digits.
    #[arg(long, global = true)]
    seed: Option<String>,
    /// CSV output path; stdout if omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory holding alice.otp and bob.otp; in-memory pads if omitted.
    #[arg(long, global = true)]
    otp: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parameter sweep (the default when no command is given).
    Sweep,
    /// Single point at one background value.
    Run {
        /// Background rate per demultiplexed channel, counts/s.
        #[arg(long, default_value_t = 0.0)]
        background: f64,
    },
    /// Inspect or manage one-time-pad stores.
    Otp {
        #[command(subcommand)]
        action: OtpAction,
    },
}

#[derive(Subcommand, Debug)]
enum OtpAction {
    /// Create matching alice.otp and bob.otp in a directory.
    Init {
        dir: PathBuf,
        #[arg(long, default_value_t = 65536)]
        bytes: usize,
        /// Derive the pad from this seed instead of the OS generator.
        #[arg(long = "pad-seed")]
        pad_seed: Option<String>,
    },
    /// Print the counters of a store file.
    Inspect { path: PathBuf },
    /// Print the consumption ledger of a store file.
    Ledger { path: PathBuf },
    /// Append hex-encoded secret bytes to a store file.
    TopUp {
        path: PathBuf,
        #[arg(long)]
        hex: String,
    },
}

fn build_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::parse(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(axis) = args.sweep {
        cfg.set_axis(axis);
    }
    if let Some(v) = &args.values {
        cfg.values = v.clone();
    }
    if let Some(v) = &args.backgrounds {
        cfg.backgrounds = v.clone();
    }
    if let Some(d) = args.duration {
        cfg.seconds = d;
    }
    if let Some(r) = args.reps {
        cfg.reps = r;
    }
    if let Some(s) = &args.seed {
        cfg.seed = Seed::from_hex(s).context("--seed")?;
    }
    Ok(cfg)
}

fn open_stores(dir: &Path) -> Result<KeyStores> {
    let alice = OtpStore::open(dir.join("alice.otp")).context("opening alice.otp")?;
    let bob = OtpStore::open(dir.join("bob.otp")).context("opening bob.otp")?;
    Ok(KeyStores::new(alice, bob))
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn summarize(rows: &[SweepRow]) {
    let ok = rows.iter().filter(|r| r.report.succeeded()).count();
    eprintln!("{} runs, {} succeeded", rows.len(), ok);
    for r in rows.iter().filter(|r| !r.report.succeeded()) {
        if let Some(f) = &r.report.failure {
            eprintln!(
                "  B={} gate={}ns rep={}: {} failed: {}",
                r.report.background,
                r.report.gate_ns,
                r.rep,
                f.stage.name(),
                f.message
            );
        }
    }
}

fn run_sweep(args: &RunArgs, single: Option<f64>) -> Result<()> {
    let mut cfg = build_config(args)?;
    if let Some(b) = single {
        cfg.axis = SweepAxis::Background;
        cfg.values = vec![b];
    }
    let mut stores = match &args.otp {
        Some(dir) => Some(open_stores(dir)?),
        None => None,
    };
    let out = output(&args.out)?;
    let rows = match cfg.axis {
        SweepAxis::Background => sweep_background(&cfg, stores.as_mut(), out)?,
        SweepAxis::Gate => sweep_gate(&cfg, stores.as_mut(), out)?,
    };
    summarize(&rows);
    Ok(())
}

fn otp(action: OtpAction) -> Result<()> {
    match action {
        OtpAction::Init { dir, bytes, pad_seed } => {
            let mut pad = vec![0u8; bytes];
            match pad_seed {
                Some(s) => rand::RngCore::fill_bytes(&mut Seed::from_hex(&s)?.rng(), &mut pad),
                None => rand::RngCore::fill_bytes(&mut rand::rng(), &mut pad),
            }
            fs::create_dir_all(&dir)?;
            OtpStore::create(dir.join("alice.otp"), pad.clone())?;
            OtpStore::create(dir.join("bob.otp"), pad)?;
            println!(
                "created {} and {} with {bytes} pad bytes",
                dir.join("alice.otp").display(),
                dir.join("bob.otp").display()
            );
        }
        OtpAction::Inspect { path } => {
            let s = OtpStore::open(&path)?;
            println!("pad_len\t{}", s.pad_len());
            println!("consumed\t{}", s.consumed_offset());
            println!("remaining\t{}", s.remaining());
            println!("ledger_entries\t{}", s.ledger().len());
        }
        OtpAction::Ledger { path } => {
            let s = OtpStore::open(&path)?;
            println!("purpose\toffset\tlength\tunix_time");
            for e in s.ledger() {
                println!("{}\t{}\t{}\t{}", e.purpose.name(), e.offset, e.length, e.unix_time);
            }
        }
        OtpAction::TopUp { path, hex } => {
            let bytes = hex::decode(&hex).context("--hex")?;
            let mut s = OtpStore::open(&path)?;
            s.top_up(&bytes)?;
            println!("remaining\t{}", s.remaining());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        None | Some(Command::Sweep) => run_sweep(&cli.run, None),
        Some(Command::Run { background }) => run_sweep(&cli.run, Some(background)),
        Some(Command::Otp { action }) => otp(action),
    }
}
