use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sqkd_core::channel::{
    detection_probability_oracle, parse_eve_strategy, ChannelKind, ChannelModel, ChannelPlan,
    Direction, Link,
};
use sqkd_core::harness::{
    self, serve_participant, BobRole, MessagePayload, Protocol, RunConfig, Transport, OUT_DIR_ENV,
};

#[derive(Parser)]
#[command(name = "sqkd", version, about = "Semi-quantum key distribution simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a session and write its artifacts.
    Run(RunArgs),
    /// Serve one Bob for a single socket session.
    Serve {
        #[arg(long)]
        role: BobRole,
        #[arg(long)]
        listen: String,
        #[arg(long)]
        seed: u64,
    },
    /// Print exact per-category mismatch probabilities for a strategy.
    Oracle {
        #[arg(long, default_value = "none")]
        eve: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Inprocess,
    Socket,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Sqkd,
    Tlsqsc,
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    protocol: Option<ProtocolArg>,
    /// `none`, or `target[:dir]:basis` items separated by commas,
    /// e.g. `bob1:z` or `both:fwd:fourier`.
    #[arg(long)]
    eve: Option<String>,
    /// Loss probability applied to both passes of both links.
    #[arg(long)]
    loss: Option<f64>,
    /// Depolarizing probability on the forward pass of both links.
    #[arg(long)]
    depol: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Message for TLSQSC: `trits:0121...` or plain text.
    #[arg(long)]
    message: Option<String>,
    #[arg(long, value_enum)]
    transport: Option<TransportArg>,
    #[arg(long, default_value = "127.0.0.1:7101")]
    bob1_addr: String,
    #[arg(long, default_value = "127.0.0.1:7102")]
    bob2_addr: String,
    #[arg(long, env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,
}

fn build_config(args: RunArgs) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(n) = args.rounds {
        config.n_rounds = n;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(p) = args.protocol {
        config.protocol = match p {
            ProtocolArg::Sqkd => Protocol::Sqkd,
            ProtocolArg::Tlsqsc => Protocol::Tlsqsc,
        };
    }
    if let Some(t) = args.threshold {
        config.abort_threshold = t;
    }
    if let Some(m) = &args.message {
        config.message = Some(MessagePayload::from_cli(m)?);
    }
    let mut extra = ChannelPlan::identity();
    if let Some(p) = args.loss {
        for link in Link::ALL {
            extra.push(ChannelModel::new(link, Direction::Both, ChannelKind::Loss { p_loss: p })?)?;
        }
    }
    if let Some(p) = args.depol {
        for link in Link::ALL {
            extra.push(ChannelModel::new(
                link,
                Direction::Forward,
                ChannelKind::Depolarize { p_dep: p },
            )?)?;
        }
    }
    if let Some(e) = &args.eve {
        extra.extend(parse_eve_strategy(e)?);
    }
    config.channels.extend(extra);
    match args.transport {
        Some(TransportArg::Socket) => {
            config.transport = Transport::Socket {
                bob1: args.bob1_addr.clone(),
                bob2: args.bob2_addr.clone(),
            }
        }
        Some(TransportArg::Inprocess) => config.transport = Transport::InProcess,
        None => {}
    }
    if args.out_dir.is_some() {
        config.out_dir = args.out_dir;
    }
    config.validate()?;
    Ok(config)
}

fn run(args: RunArgs) -> Result<u8> {
    let config = build_config(args)?;
    let outcome = harness::run(&config)?;
    let r = &outcome.report;
    println!(
        "rounds={} check={} key={} lost={} mismatch1={:.6} mismatch2={:.6} abort={}",
        r.n_rounds,
        r.check_rounds,
        r.key_rounds,
        r.lost_rounds,
        r.check_mismatch_rate.subsystem1,
        r.check_mismatch_rate.subsystem2,
        r.abort
    );
    if let Some(m) = &r.message {
        println!(
            "message length={} ciphertext={} delivered={}",
            m.length, m.ciphertext_emitted, m.delivered_exactly
        );
    }
    if let Some(dir) = &config.out_dir {
        println!("artifacts in {}", dir.display());
    }
    Ok(outcome.exit_code())
}

fn oracle(eve: &str) -> Result<u8> {
    let table = detection_probability_oracle(&parse_eve_strategy(eve)?)?;
    println!("category,subsystem1,subsystem2,either");
    for e in &table.entries {
        let p = e.probabilities;
        println!(
            "{},{:.12},{:.12},{:.12}",
            e.category.label(),
            p.subsystem1,
            p.subsystem2,
            p.either
        );
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Serve { role, listen, seed } => {
            serve_participant(role, &listen, seed).map(|_| 0).map_err(Into::into)
        }
        Command::Oracle { eve } => oracle(&eve),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
