//! Run orchestration: configuration, in-process and socket execution, and
//! the artifacts written after a run.
//!
//! Files written to the output directory:
//!
//! | file | content |
//! |------|---------|
//! | `transcript.jsonl` | one JSON round record per line |
//! | `report.json` | the [`RunReport`] |
//! | `categories.csv` | per-category mismatch counts and rates |
//! | `eve.jsonl` | intercept-resend observations |
//! | `keys/layer{1,2}_<party>.txt` | sifted keys, one trit per character |
//! | `ciphertext.txt`, `decoded.txt` | TLSQSC messaging, when it ran |

pub mod socket;
pub mod wire;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{detection_probability_oracle, ChannelError, ChannelPlan, EveLog};
use crate::messaging::{self, CipherMessage, MessagingError};
use crate::roles::{self, Overrides, RoleError, Transcript};
use crate::sift::{self, KeyMaterial, MessageSummary, RunReport, SiftError};
use crate::trit::{TritError, TritString};

pub use socket::{connect_and_run, serve_on, serve_participant, BobRole, BobSummary};
pub use wire::{WireError, WireMessage};

/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "SQKD_OUT_DIR";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("connection lost: {0}; session incomplete, no key emitted")]
    ConnectionLost(String),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("peer broke protocol: {0}")]
    Protocol(String),
    #[error(transparent)]
    Role(#[from] RoleError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Sift(#[from] SiftError),
    #[error(transparent)]
    Messaging(#[from] MessagingError),
    #[error(transparent)]
    Serde(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    #[default]
    Sqkd,
    Tlsqsc,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Transport {
    #[default]
    InProcess,
    /// Alice connects to Bob processes listening at these addresses.
    Socket { bob1: String, bob2: String },
}

/// Message to send over layer 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessagePayload {
    Trits(TritString),
    /// Bytes encoded six trits each.
    Text(String),
}

impl MessagePayload {
    /// `trits:0121` is a raw trit string; anything else is text.
    pub fn from_cli(s: &str) -> Result<Self, TritError> {
        match s.strip_prefix("trits:") {
            Some(t) => Ok(MessagePayload::Trits(t.parse()?)),
            None => Ok(MessagePayload::Text(s.to_string())),
        }
    }

    pub fn trits(&self) -> TritString {
        match self {
            MessagePayload::Trits(t) => t.clone(),
            MessagePayload::Text(s) => messaging::text_to_trits(s.as_bytes()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_rounds: u64,
    pub seed: u64,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub channels: ChannelPlan,
    #[serde(default)]
    pub abort_threshold: f64,
    #[serde(default)]
    pub message: Option<MessagePayload>,
    #[serde(default)]
    pub transport: Transport,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_rounds: 1000,
            seed: 0,
            protocol: Protocol::Sqkd,
            channels: ChannelPlan::identity(),
            abort_threshold: 0.0,
            message: None,
            transport: Transport::InProcess,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n_rounds == 0 {
            return Err(HarnessError::InvalidConfig("n_rounds must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.abort_threshold) {
            return Err(HarnessError::InvalidConfig(format!(
                "threshold {} is outside [0, 1]",
                self.abort_threshold
            )));
        }
        if self.protocol == Protocol::Tlsqsc && self.message.is_none() {
            return Err(HarnessError::InvalidConfig(
                "TLSQSC needs a message".into(),
            ));
        }
        for m in self.channels.models() {
            m.validate()?;
        }
        Ok(())
    }

    /// Hex SHA-256 over the parameters that determine the protocol outcome.
    /// Transport and output location are excluded.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            n_rounds: u64,
            seed: u64,
            protocol: Protocol,
            channels: &'a ChannelPlan,
            abort_threshold: f64,
            message: Option<String>,
        }
        let canonical = Canonical {
            n_rounds: self.n_rounds,
            seed: self.seed,
            protocol: self.protocol,
            channels: &self.channels,
            abort_threshold: self.abort_threshold,
            message: self.message.as_ref().map(|m| m.trits().to_string()),
        };
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub transcript: Transcript,
    pub eve: EveLog,
    pub keys: KeyMaterial,
    pub cipher: Option<CipherMessage>,
    pub decoded: Option<TritString>,
}

impl RunOutcome {
    /// Process exit status: 0 completed, 2 aborted.
    pub fn exit_code(&self) -> u8 {
        if self.report.abort {
            2
        } else {
            0
        }
    }
}

/// Results of the messaging step as produced by a transport.
#[derive(Debug, Clone, Default)]
pub(crate) struct Delivery {
    pub cipher: Option<CipherMessage>,
    pub decoded: Option<TritString>,
}

/// Sifting, testing, key extraction and reporting over a complete transcript.
pub(crate) fn finalize(
    config: &RunConfig,
    transcript: Transcript,
    eve: EveLog,
    delivery: Delivery,
) -> Result<RunOutcome, HarnessError> {
    let disclosure = roles::disclose(&transcript)?;
    let sifted = sift::sift(&transcript, &disclosure)?;
    let test = sift::eavesdrop_test(&transcript, &sifted.check_rounds, config.abort_threshold)?;
    let keys = sift::extract_keys(&transcript, &sifted.key_rounds)?;
    let mut report = sift::report(&transcript, &sifted, &keys, &test);
    if config.protocol == Protocol::Tlsqsc {
        let message = config.message.as_ref().map(|m| m.trits()).unwrap_or_default();
        report.message = Some(MessageSummary {
            length: message.len(),
            ciphertext_emitted: delivery.cipher.is_some(),
            delivered_exactly: delivery.decoded.as_ref() == Some(&message),
        });
    }
    Ok(RunOutcome {
        report,
        transcript,
        eve,
        keys,
        cipher: delivery.cipher,
        decoded: delivery.decoded,
    })
}

/// Runs the configured protocol end to end and writes artifacts when an
/// output directory is configured.
pub fn run(config: &RunConfig) -> Result<RunOutcome, HarnessError> {
    run_with_overrides(config, &Overrides::default())
}

/// As [`run`], with forced choices for the in-process transport.
pub fn run_with_overrides(
    config: &RunConfig,
    overrides: &Overrides,
) -> Result<RunOutcome, HarnessError> {
    config.validate()?;
    let outcome = match &config.transport {
        Transport::InProcess => run_in_process(config, overrides)?,
        Transport::Socket { bob1, bob2 } => connect_and_run(config, bob1, bob2)?,
    };
    if let Some(dir) = &config.out_dir {
        write_artifacts(&outcome, &config.channels, dir)?;
    }
    Ok(outcome)
}

fn run_in_process(config: &RunConfig, overrides: &Overrides) -> Result<RunOutcome, HarnessError> {
    let digest = config.digest();
    let (transcript, eve) =
        roles::simulate(config.n_rounds, config.seed, &config.channels, overrides, &digest)?;
    let mut delivery = Delivery::default();
    if config.protocol == Protocol::Tlsqsc {
        let message = config.message.as_ref().map(|m| m.trits()).unwrap_or_default();
        let disclosure = roles::disclose(&transcript)?;
        let sifted = sift::sift(&transcript, &disclosure)?;
        let test =
            sift::eavesdrop_test(&transcript, &sifted.check_rounds, config.abort_threshold)?;
        if !test.abort {
            let keys = sift::extract_keys(&transcript, &sifted.key_rounds)?;
            let out = messaging::run_tlsqsc(&message, &keys, &test)?;
            delivery.cipher = Some(out.cipher);
            delivery.decoded = Some(out.decoded);
        }
    }
    finalize(config, transcript, eve, delivery)
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Per-category table as CSV. Oracle columns are filled when the channel
/// plan admits exact enumeration.
pub fn categories_csv(report: &RunReport, channels: &ChannelPlan) -> String {
    let oracle = detection_probability_oracle(channels).ok();
    let mut out = String::from(
        "category,rounds,mismatch_subsystem1,mismatch_subsystem2,mismatch_either,\
         rate_subsystem1,rate_subsystem2,rate_either,oracle_subsystem1,oracle_subsystem2,oracle_either\n",
    );
    for c in &report.categories {
        let (o1, o2, oe) = match &oracle {
            Some(t) => {
                let p = t.get(c.category);
                (
                    format!("{:.12}", p.subsystem1),
                    format!("{:.12}", p.subsystem2),
                    format!("{:.12}", p.either),
                )
            }
            None => Default::default(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{:.12},{:.12},{:.12},{o1},{o2},{oe}\n",
            c.label,
            c.rounds,
            c.mismatch_subsystem1,
            c.mismatch_subsystem2,
            c.mismatch_either,
            c.rate_subsystem1(),
            c.rate_subsystem2(),
            c.rate_either(),
        ));
    }
    out
}

pub fn write_artifacts(
    outcome: &RunOutcome,
    channels: &ChannelPlan,
    dir: &Path,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir.join("keys"))?;
    write_lines(&dir.join("transcript.jsonl"), &outcome.transcript.rounds)?;
    write_lines(&dir.join("eve.jsonl"), &outcome.eve.entries)?;
    let mut report = serde_json::to_string_pretty(&outcome.report)?;
    report.push('\n');
    fs::write(dir.join("report.json"), report)?;
    fs::write(dir.join("categories.csv"), categories_csv(&outcome.report, channels))?;

    let k = &outcome.keys;
    let keys = dir.join("keys");
    for (name, key) in [
        ("layer1_alice.txt", &k.layer1.alice),
        ("layer1_bob1.txt", &k.layer1.bob1),
        ("layer2_alice.txt", &k.layer2.alice),
        ("layer2_bob1.txt", &k.layer2.bob1),
        ("layer2_bob2.txt", &k.layer2.bob2),
    ] {
        fs::write(keys.join(name), format!("{key}\n"))?;
    }
    if let Some(c) = &outcome.cipher {
        fs::write(dir.join("ciphertext.txt"), format!("{}\n", c.ciphertext))?;
    }
    if let Some(d) = &outcome.decoded {
        fs::write(dir.join("decoded.txt"), format!("{d}\n"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::parse_eve_strategy;

    fn cfg(n: u64) -> RunConfig {
        RunConfig {
            n_rounds: n,
            seed: 42,
            ..Default::default()
        }
    }

    #[test]
    fn validation() {
        assert!(cfg(10).validate().is_ok());
        assert!(cfg(0).validate().is_err());
        let mut c = cfg(10);
        c.protocol = Protocol::Tlsqsc;
        assert!(c.validate().is_err());
        let mut c = cfg(10);
        c.abort_threshold = 1.2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_config() {
        let text = r#"
            n_rounds = 500
            seed = 7
            protocol = "tlsqsc"
            abort_threshold = 0.05
            message = { text = "hi" }

            [[channels]]
            link = "to_bob1"
            direction = "forward"
            kind = "intercept_resend"
            basis = "computational"
        "#;
        let c = RunConfig::from_toml(text).unwrap();
        assert_eq!(c.protocol, Protocol::Tlsqsc);
        assert_eq!(c.channels, parse_eve_strategy("bob1:fwd:z").unwrap());
        assert_eq!(c.message, Some(MessagePayload::Text("hi".into())));
        assert!(RunConfig::from_toml("n_rounds = 5\nseed = 1\nbogus = 3").is_err());
    }

    #[test]
    fn digest_ignores_transport_and_output() {
        let a = cfg(10);
        let mut b = cfg(10);
        b.transport = Transport::Socket {
            bob1: "x:1".into(),
            bob2: "y:2".into(),
        };
        b.out_dir = Some("/tmp/x".into());
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), cfg(11).digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn message_payload_from_cli() {
        assert_eq!(
            MessagePayload::from_cli("trits:0120").unwrap(),
            MessagePayload::Trits("0120".parse().unwrap())
        );
        assert_eq!(MessagePayload::from_cli("hello").unwrap().trits().len(), 30);
        assert!(MessagePayload::from_cli("trits:013").is_err());
    }

    #[test]
    fn tlsqsc_attack_emits_no_ciphertext() {
        let mut c = cfg(2000);
        c.protocol = Protocol::Tlsqsc;
        c.message = Some(MessagePayload::Trits("0120".parse().unwrap()));
        c.channels = parse_eve_strategy("bob1:z").unwrap();
        let out = run(&c).unwrap();
        assert!(out.report.abort);
        assert_eq!(out.exit_code(), 2);
        assert!(out.cipher.is_none());
        let m = out.report.message.unwrap();
        assert!(!m.ciphertext_emitted && !m.delivered_exactly);
    }

    #[test]
    fn tlsqsc_insufficient_key_is_an_error() {
        let mut c = cfg(16);
        c.protocol = Protocol::Tlsqsc;
        c.message = Some(MessagePayload::Text("a long message that needs many key trits".into()));
        assert!(matches!(
            run(&c),
            Err(HarnessError::Messaging(MessagingError::KeyExhausted { .. }))
        ));
    }

    #[test]
    fn csv_has_oracle_columns_when_available() {
        let out = run(&cfg(500)).unwrap();
        let csv = categories_csv(&out.report, &ChannelPlan::identity());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 9);
        assert!(lines[1].starts_with("S1-MM,"));
        assert!(lines[1].ends_with(",0.000000000000,0.000000000000,0.000000000000"));
    }
}
