//! Line-delimited wire format for the socket transport.
//!
//! One message per line, a type tag followed by space-separated fields:
//!
//! ```text
//! QUDIT <round> <link> <dir> <dim> <re>,<im> ...
//! LOST <round> <link> <dir>
//! BASIS_DISCLOSURE n=<rounds> s1=<ids> lost=<ids>
//! ACTION_DISCLOSURE link=<link> measured=<ids>
//! CIPHER none | CIPHER text=<trits> rounds=<ids>
//! REPORT link=<link> records=<id:R|id:M|id:M<k>,...> [decoded=<trits>]
//! ```
//!
//! `<ids>` is a comma-separated list, possibly empty. Amplitudes are written
//! with 17 significant digits, which round-trips every `f64` exactly.
//!
//! Amplitudes travel in the clear: the quantum channel is simulated by
//! agreement between cooperating processes and carries no security meaning.

use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::channel::{Direction, Link};
use crate::messaging::CipherMessage;
use crate::qudit::StateVector;
use crate::roles::BobAction;
use crate::trit::TritString;

/// Allowed deviation of a received state's norm from one.
pub const WIRE_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("line {line}: malformed message: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: protocol violation: {reason}")]
    ProtocolViolation { line: usize, reason: String },
}

impl WireError {
    pub fn line(&self) -> usize {
        match self {
            WireError::Malformed { line, .. } | WireError::ProtocolViolation { line, .. } => *line,
        }
    }
}

/// What a Bob did in one round, as reported at the end of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BobRecord {
    pub round_id: u64,
    pub action: BobAction,
    pub outcome: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    Qudit {
        round_id: u64,
        link: Link,
        direction: Direction,
        state: StateVector,
    },
    Lost {
        round_id: u64,
        link: Link,
        direction: Direction,
    },
    BasisDisclosure {
        n_rounds: u64,
        s1_rounds: Vec<u64>,
        lost_rounds: Vec<u64>,
    },
    ActionDisclosure {
        link: Link,
        measured: Vec<u64>,
    },
    Cipher(Option<CipherMessage>),
    Report {
        link: Link,
        records: Vec<BobRecord>,
        decoded: Option<TritString>,
    },
}

fn join_ids(ids: &[u64]) -> String {
    let mut out = String::new();
    for (i, id) in ids.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{id}").expect("write to string");
    }
    out
}

impl WireMessage {
    pub fn tag(&self) -> &'static str {
        match self {
            WireMessage::Qudit { .. } => "QUDIT",
            WireMessage::Lost { .. } => "LOST",
            WireMessage::BasisDisclosure { .. } => "BASIS_DISCLOSURE",
            WireMessage::ActionDisclosure { .. } => "ACTION_DISCLOSURE",
            WireMessage::Cipher(_) => "CIPHER",
            WireMessage::Report { .. } => "REPORT",
        }
    }

    /// Serializes to a single line without the trailing newline.
    pub fn to_line(&self) -> String {
        let mut out = String::from(self.tag());
        match self {
            WireMessage::Qudit {
                round_id,
                link,
                direction,
                state,
            } => {
                write!(out, " {round_id} {link} {direction} {}", state.dim()).unwrap();
                for z in state.amps() {
                    write!(out, " {:.16e},{:.16e}", z.re, z.im).unwrap();
                }
            }
            WireMessage::Lost {
                round_id,
                link,
                direction,
            } => write!(out, " {round_id} {link} {direction}").unwrap(),
            WireMessage::BasisDisclosure {
                n_rounds,
                s1_rounds,
                lost_rounds,
            } => write!(
                out,
                " n={n_rounds} s1={} lost={}",
                join_ids(s1_rounds),
                join_ids(lost_rounds)
            )
            .unwrap(),
            WireMessage::ActionDisclosure { link, measured } => {
                write!(out, " link={link} measured={}", join_ids(measured)).unwrap()
            }
            WireMessage::Cipher(None) => out.push_str(" none"),
            WireMessage::Cipher(Some(c)) => write!(
                out,
                " text={} rounds={}",
                c.ciphertext,
                join_ids(&c.key_round_ids)
            )
            .unwrap(),
            WireMessage::Report {
                link,
                records,
                decoded,
            } => {
                write!(out, " link={link} records=").unwrap();
                for (i, r) in records.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    let action = match r.action {
                        BobAction::Measure => "M",
                        BobAction::Reflect => "R",
                    };
                    write!(out, "{}:{action}", r.round_id).unwrap();
                    if let Some(k) = r.outcome {
                        write!(out, "{k}").unwrap();
                    }
                }
                if let Some(d) = decoded {
                    write!(out, " decoded={d}").unwrap();
                }
            }
        }
        out
    }

    /// Parses one line. `line_no` is reported in errors.
    pub fn parse(line: &str, line_no: usize) -> Result<Self, WireError> {
        Parser::new(line, line_no).message()
    }
}

struct Parser<'a> {
    fields: Vec<&'a str>,
    pos: std::cell::Cell<usize>,
    line_no: usize,
}

impl<'a> Parser<'a> {
    fn new(line: &'a str, line_no: usize) -> Self {
        Self {
            fields: line.split_ascii_whitespace().collect(),
            pos: std::cell::Cell::new(0),
            line_no,
        }
    }

    fn malformed(&self, reason: impl Into<String>) -> WireError {
        WireError::Malformed {
            line: self.line_no,
            reason: reason.into(),
        }
    }

    fn next(&self, what: &str) -> Result<&'a str, WireError> {
        let f = self
            .fields
            .get(self.pos.get())
            .copied()
            .ok_or_else(|| self.malformed(format!("missing {what}")))?;
        self.pos.set(self.pos.get() + 1);
        Ok(f)
    }

    fn finish(&self) -> Result<(), WireError> {
        let pos = self.pos.get();
        if pos == self.fields.len() {
            Ok(())
        } else {
            Err(self.malformed(format!("unexpected field {:?}", self.fields[pos])))
        }
    }

    fn number<T: std::str::FromStr>(&self, s: &str, what: &str) -> Result<T, WireError> {
        s.parse()
            .map_err(|_| self.malformed(format!("bad {what} {s:?}")))
    }

    fn keyed(&self, key: &str) -> Result<&'a str, WireError> {
        let f = self.next(key)?;
        f.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
            .ok_or_else(|| self.malformed(format!("expected {key}=..., got {f:?}")))
    }

    fn ids(&self, s: &str) -> Result<Vec<u64>, WireError> {
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|x| self.number(x, "round id")).collect()
    }

    fn link(&self, s: &str) -> Result<Link, WireError> {
        s.parse().map_err(|_| self.malformed(format!("bad link {s:?}")))
    }

    fn direction(&self, s: &str) -> Result<Direction, WireError> {
        match s.parse() {
            Ok(Direction::Both) | Err(_) => Err(self.malformed(format!("bad direction {s:?}"))),
            Ok(d) => Ok(d),
        }
    }

    fn trits(&self, s: &str) -> Result<TritString, WireError> {
        s.parse().map_err(|e| self.malformed(format!("{e}")))
    }

    fn message(self) -> Result<WireMessage, WireError> {
        let tag = self.next("type tag")?;
        let msg = match tag {
            "QUDIT" => {
                let round_id = self.number(self.next("round id")?, "round id")?;
                let link = self.link(self.next("link")?)?;
                let direction = self.direction(self.next("direction")?)?;
                let dim: usize = self.number(self.next("dimension")?, "dimension")?;
                let mut amps = Vec::with_capacity(dim);
                while self.pos.get() < self.fields.len() {
                    let pair = self.next("amplitude")?;
                    let (re, im) = pair
                        .split_once(',')
                        .ok_or_else(|| self.malformed(format!("bad amplitude {pair:?}")))?;
                    amps.push(Complex64::new(
                        self.number(re, "real part")?,
                        self.number(im, "imaginary part")?,
                    ));
                }
                if amps.len() != dim {
                    return Err(self.malformed(format!(
                        "dimension {dim} but {} amplitudes",
                        amps.len()
                    )));
                }
                let violation = |reason: String| WireError::ProtocolViolation {
                    line: self.line_no,
                    reason,
                };
                if dim != link.dim() {
                    return Err(violation(format!("dimension {dim} on link {link}")));
                }
                let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if !norm.is_finite() || (norm - 1.0).abs() > WIRE_NORM_TOLERANCE {
                    return Err(violation(format!("state norm {norm} is not 1")));
                }
                let state = StateVector::with_tolerance(amps, 4.0 * WIRE_NORM_TOLERANCE)
                    .map_err(|e| violation(e.to_string()))?;
                WireMessage::Qudit {
                    round_id,
                    link,
                    direction,
                    state,
                }
            }
            "LOST" => {
                let round_id = self.number(self.next("round id")?, "round id")?;
                let link = self.link(self.next("link")?)?;
                let direction = self.direction(self.next("direction")?)?;
                WireMessage::Lost {
                    round_id,
                    link,
                    direction,
                }
            }
            "BASIS_DISCLOSURE" => {
                let n_rounds = self.number(self.keyed("n")?, "round count")?;
                let s1_rounds = self.ids(self.keyed("s1")?)?;
                let lost_rounds = self.ids(self.keyed("lost")?)?;
                WireMessage::BasisDisclosure {
                    n_rounds,
                    s1_rounds,
                    lost_rounds,
                }
            }
            "ACTION_DISCLOSURE" => {
                let link = self.link(self.keyed("link")?)?;
                let measured = self.ids(self.keyed("measured")?)?;
                WireMessage::ActionDisclosure { link, measured }
            }
            "CIPHER" => {
                if self.fields.get(1) == Some(&"none") {
                    self.pos.set(self.pos.get() + 1);
                    WireMessage::Cipher(None)
                } else {
                    let ciphertext = self.trits(self.keyed("text")?)?;
                    let key_round_ids = self.ids(self.keyed("rounds")?)?;
                    if ciphertext.len() != key_round_ids.len() {
                        return Err(self.malformed("ciphertext and round list lengths differ"));
                    }
                    WireMessage::Cipher(Some(CipherMessage {
                        ciphertext,
                        key_round_ids,
                    }))
                }
            }
            "REPORT" => {
                let link = self.link(self.keyed("link")?)?;
                let raw = self.keyed("records")?;
                let mut records = Vec::new();
                if !raw.is_empty() {
                    for item in raw.split(',') {
                        let (id, rest) = item
                            .split_once(':')
                            .ok_or_else(|| self.malformed(format!("bad record {item:?}")))?;
                        let round_id = self.number(id, "round id")?;
                        let (action, outcome) = match rest {
                            "R" => (BobAction::Reflect, None),
                            "M" => (BobAction::Measure, None),
                            _ => match rest.strip_prefix('M') {
                                Some(k) => (BobAction::Measure, Some(self.number(k, "outcome")?)),
                                None => return Err(self.malformed(format!("bad record {item:?}"))),
                            },
                        };
                        records.push(BobRecord {
                            round_id,
                            action,
                            outcome,
                        });
                    }
                }
                let decoded = if self.pos.get() < self.fields.len() {
                    Some(self.trits(self.keyed("decoded")?)?)
                } else {
                    None
                };
                WireMessage::Report {
                    link,
                    records,
                    decoded,
                }
            }
            other => return Err(self.malformed(format!("unknown type tag {other:?}"))),
        };
        self.finish()?;
        Ok(msg)
    }
}

/// Parses a whole multi-line document, numbering lines from 1.
pub fn parse_lines(text: &str) -> Result<Vec<WireMessage>, WireError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| WireMessage::parse(l, i + 1))
        .collect()
}
