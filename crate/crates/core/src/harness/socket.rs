//! Three-process execution over TCP.
//!
//! Each Bob runs [`serve_participant`] and waits for Alice. Alice runs
//! [`connect_and_run`], which also hosts the simulated channels (both links
//! terminate at her process). Per link the session is:
//!
//! 1. for every round, Alice sends `QUDIT`/`LOST` forward and Bob answers
//!    `QUDIT`/`LOST` backward (Alice pipelines a small window of rounds);
//! 2. Alice sends `BASIS_DISCLOSURE`, Bob answers `ACTION_DISCLOSURE`;
//! 3. Alice relays the other Bob's `ACTION_DISCLOSURE`;
//! 4. Alice sends `CIPHER` (or `CIPHER none`);
//! 5. Bob closes with `REPORT`: his private records, so the harness can
//!    assemble the full transcript, and the decoded message for Bob₁.
//!
//! Every party derives its randomness from the shared seed and its own
//! stream id, so the session reproduces the in-process run exactly.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use super::wire::{BobRecord, WireMessage};
use super::{finalize, Delivery, HarnessError, Protocol, RunConfig, RunOutcome};
use crate::channel::{Direction, EveLog, Link};
use crate::messaging::{self, KeyLedger};
use crate::qudit::{BasisSet, StateVector};
use crate::roles::{
    self, alice_prepare, alice_remeasure_one, bob_receive, BobAction, PreparationRecord,
    RoundRecord, Transcript,
};
use crate::rng::{RngStream, StreamId};
use crate::sift;
use crate::trit::TritString;

/// Rounds in flight per link before Alice waits for replies.
const WINDOW: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BobRole {
    Bob1,
    Bob2,
}

impl BobRole {
    pub fn link(self) -> Link {
        match self {
            BobRole::Bob1 => Link::ToBob1,
            BobRole::Bob2 => Link::ToBob2,
        }
    }

    fn stream(self) -> StreamId {
        match self {
            BobRole::Bob1 => StreamId::Bob1,
            BobRole::Bob2 => StreamId::Bob2,
        }
    }
}

impl std::str::FromStr for BobRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bob1" => Ok(BobRole::Bob1),
            "bob2" => Ok(BobRole::Bob2),
            _ => Err(format!("unknown role {s:?} (expected bob1 or bob2)")),
        }
    }
}

struct Peer {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    line_no: usize,
    name: String,
}

impl Peer {
    fn new(stream: TcpStream, name: impl Into<String>) -> Result<Self, HarnessError> {
        stream.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
            line_no: 0,
            name: name.into(),
        })
    }

    fn send(&mut self, msg: &WireMessage) -> Result<(), HarnessError> {
        let mut line = msg.to_line();
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .map_err(|e| HarnessError::ConnectionLost(format!("{}: {e}", self.name)))
    }

    fn flush(&mut self) -> Result<(), HarnessError> {
        self.writer
            .flush()
            .map_err(|e| HarnessError::ConnectionLost(format!("{}: {e}", self.name)))
    }

    fn recv(&mut self) -> Result<WireMessage, HarnessError> {
        let mut line = String::new();
        let n = self
            .reader
            .read_line(&mut line)
            .map_err(|e| HarnessError::ConnectionLost(format!("{}: {e}", self.name)))?;
        if n == 0 {
            return Err(HarnessError::ConnectionLost(format!(
                "{} closed the connection",
                self.name
            )));
        }
        self.line_no += 1;
        Ok(WireMessage::parse(line.trim_end(), self.line_no)?)
    }
}

fn unexpected(who: &str, msg: &WireMessage) -> HarnessError {
    HarnessError::Protocol(format!("{who}: unexpected {} message", msg.tag()))
}

/// What a Bob process ends up knowing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BobSummary {
    pub records: Vec<BobRecord>,
    /// Bob₁'s layer-1 key over the key rounds.
    pub layer1_key: Option<TritString>,
    pub decoded: Option<TritString>,
}

/// Binds `addr` and serves a single session.
pub fn serve_participant(role: BobRole, addr: &str, seed: u64) -> Result<BobSummary, HarnessError> {
    serve_on(TcpListener::bind(addr)?, role, seed)
}

/// Serves a single session on an already bound listener.
pub fn serve_on(listener: TcpListener, role: BobRole, seed: u64) -> Result<BobSummary, HarnessError> {
    let (stream, _) = listener.accept()?;
    let mut alice = Peer::new(stream, "alice")?;
    let link = role.link();
    let who = format!("{link}");
    let mut records: Vec<BobRecord> = Vec::new();

    // quantum phase
    let disclosure = loop {
        let msg = alice.recv()?;
        let (round_id, incoming) = match msg {
            WireMessage::Qudit {
                round_id,
                link: l,
                direction: Direction::Forward,
                state,
            } if l == link => (round_id, Some(state)),
            WireMessage::Lost {
                round_id,
                link: l,
                direction: Direction::Forward,
            } if l == link => (round_id, None),
            WireMessage::BasisDisclosure { .. } => break msg,
            other => return Err(unexpected(&who, &other)),
        };
        if round_id != records.len() as u64 {
            return Err(HarnessError::Protocol(format!(
                "{who}: expected round {}, got {round_id}",
                records.len()
            )));
        }
        let mut rng = RngStream::for_round(seed, role.stream(), round_id);
        let (action, outcome, back) = bob_receive(None, incoming, &mut rng)?;
        records.push(BobRecord {
            round_id,
            action,
            outcome,
        });
        let reply = match back {
            Some(state) => WireMessage::Qudit {
                round_id,
                link,
                direction: Direction::Backward,
                state,
            },
            None => WireMessage::Lost {
                round_id,
                link,
                direction: Direction::Backward,
            },
        };
        alice.send(&reply)?;
        alice.flush()?;
    };

    // public discussion
    let WireMessage::BasisDisclosure {
        n_rounds,
        s1_rounds,
        lost_rounds,
    } = disclosure
    else {
        unreachable!()
    };
    if n_rounds != records.len() as u64 {
        return Err(HarnessError::Protocol(format!(
            "{who}: {n_rounds} rounds disclosed, {} played",
            records.len()
        )));
    }
    let mine: Vec<u64> = records
        .iter()
        .filter(|r| r.action == BobAction::Measure)
        .map(|r| r.round_id)
        .collect();
    alice.send(&WireMessage::ActionDisclosure {
        link,
        measured: mine.clone(),
    })?;
    alice.flush()?;
    let other = match alice.recv()? {
        WireMessage::ActionDisclosure { link: l, measured } if l != link => measured,
        other => return Err(unexpected(&who, &other)),
    };

    // key rounds: S1, both measured, not lost
    let s1: BTreeSet<u64> = s1_rounds.into_iter().collect();
    let lost: BTreeSet<u64> = lost_rounds.into_iter().collect();
    let other: BTreeSet<u64> = other.into_iter().collect();
    let key_rounds: Vec<u64> = mine
        .iter()
        .copied()
        .filter(|id| s1.contains(id) && other.contains(id) && !lost.contains(id))
        .collect();

    let cipher = match alice.recv()? {
        WireMessage::Cipher(c) => c,
        other => return Err(unexpected(&who, &other)),
    };

    let mut layer1_key = None;
    let mut decoded = None;
    if role == BobRole::Bob1 {
        let key = key_rounds
            .iter()
            .map(|&id| {
                let outcome = records[id as usize].outcome.ok_or_else(|| {
                    HarnessError::Protocol(format!("{who}: key round {id} without outcome"))
                })?;
                Ok(sift::split_trits(outcome)?.high)
            })
            .collect::<Result<Vec<u8>, HarnessError>>()?;
        let key = TritString::new(key).expect("high trits are trits");
        if let Some(c) = &cipher {
            let mut ledger = KeyLedger::new(key_rounds.clone(), key.clone());
            decoded = Some(messaging::receive(c, &mut ledger)?);
        }
        layer1_key = Some(key);
    }

    alice.send(&WireMessage::Report {
        link,
        records: records.clone(),
        decoded: decoded.clone(),
    })?;
    alice.flush()?;
    Ok(BobSummary {
        records,
        layer1_key,
        decoded,
    })
}

fn connect_with_retry(addr: &str, name: &str) -> Result<Peer, HarnessError> {
    let deadline = Instant::now() + Duration::from_secs(10);
    let addrs: Vec<_> = addr
        .to_socket_addrs()
        .map_err(|e| HarnessError::InvalidConfig(format!("address {addr:?}: {e}")))?
        .collect();
    loop {
        match TcpStream::connect(&addrs[..]) {
            Ok(s) => return Peer::new(s, name),
            Err(e) if Instant::now() < deadline => {
                let _ = e;
                thread::sleep(Duration::from_millis(50));
            }
            Err(e) => return Err(HarnessError::ConnectionLost(format!("{name} at {addr}: {e}"))),
        }
    }
}

/// Alice's private record of a round while Bobs' data is still pending.
struct AliceRound {
    prep: PreparationRecord,
    rng: RngStream,
    remeasure: [Option<u8>; 2],
    lost: bool,
}

/// Runs Alice against two Bob processes and assembles the full outcome.
pub fn connect_and_run(
    config: &RunConfig,
    bob1_addr: &str,
    bob2_addr: &str,
) -> Result<RunOutcome, HarnessError> {
    config.validate()?;
    let mut peers = [
        connect_with_retry(bob1_addr, "bob1")?,
        connect_with_retry(bob2_addr, "bob2")?,
    ];
    let seed = config.seed;
    let channels = &config.channels;
    let mut eve = EveLog::default();
    let mut rounds: Vec<AliceRound> = Vec::with_capacity(config.n_rounds as usize);

    let mut start = 0u64;
    while start < config.n_rounds {
        let end = (start + WINDOW).min(config.n_rounds);
        for round_id in start..end {
            let mut rng = RngStream::for_round(seed, StreamId::Alice, round_id);
            let (prep, s9, s3) = alice_prepare(&mut rng)?;
            let mut lost = false;
            for (i, (link, state)) in [(Link::ToBob1, s9), (Link::ToBob2, s3)].into_iter().enumerate() {
                let msg = match channels.transmit(seed, round_id, link, Direction::Forward, state, &mut eve)? {
                    Some(state) => WireMessage::Qudit {
                        round_id,
                        link,
                        direction: Direction::Forward,
                        state,
                    },
                    None => {
                        lost = true;
                        WireMessage::Lost {
                            round_id,
                            link,
                            direction: Direction::Forward,
                        }
                    }
                };
                peers[i].send(&msg)?;
            }
            rounds.push(AliceRound {
                prep,
                rng,
                remeasure: [None, None],
                lost,
            });
        }
        for p in peers.iter_mut() {
            p.flush()?;
        }
        for round_id in start..end {
            let mut returned: [Option<StateVector>; 2] = [None, None];
            for (i, link) in Link::ALL.into_iter().enumerate() {
                let who = link.to_string();
                returned[i] = match peers[i].recv()? {
                    WireMessage::Qudit {
                        round_id: r,
                        link: l,
                        direction: Direction::Backward,
                        state,
                    } if r == round_id && l == link => {
                        channels.transmit(seed, round_id, link, Direction::Backward, state, &mut eve)?
                    }
                    WireMessage::Lost {
                        round_id: r,
                        link: l,
                        direction: Direction::Backward,
                    } if r == round_id && l == link => None,
                    other => return Err(unexpected(&who, &other)),
                };
            }
            let round = &mut rounds[round_id as usize];
            for (i, state) in returned.iter().enumerate() {
                match state {
                    Some(s) => {
                        round.remeasure[i] = Some(alice_remeasure_one(s, &round.prep, &mut round.rng)?)
                    }
                    None => round.lost = true,
                }
            }
        }
        start = end;
    }

    // public discussion
    let s1_rounds: Vec<u64> = (0..config.n_rounds)
        .filter(|&i| rounds[i as usize].prep.basis == BasisSet::S1)
        .collect();
    let lost_rounds: Vec<u64> = (0..config.n_rounds)
        .filter(|&i| rounds[i as usize].lost)
        .collect();
    let basis = WireMessage::BasisDisclosure {
        n_rounds: config.n_rounds,
        s1_rounds,
        lost_rounds,
    };
    let mut measured: [Vec<u64>; 2] = [Vec::new(), Vec::new()];
    for (i, link) in Link::ALL.into_iter().enumerate() {
        peers[i].send(&basis)?;
        peers[i].flush()?;
        measured[i] = match peers[i].recv()? {
            WireMessage::ActionDisclosure { link: l, measured } if l == link => measured,
            other => return Err(unexpected(link.as_str(), &other)),
        };
    }
    for (i, link) in Link::ALL.into_iter().enumerate() {
        let other = 1 - i;
        peers[i].send(&WireMessage::ActionDisclosure {
            link: Link::ALL[other],
            measured: measured[other].clone(),
        })?;
        peers[i].flush()?;
        let _ = link;
    }

    // provisional transcript: public actions, Bob outcomes still unknown
    let sets: [BTreeSet<u64>; 2] = [
        measured[0].iter().copied().collect(),
        measured[1].iter().copied().collect(),
    ];
    let action = |i: usize, id: u64| {
        if sets[i].contains(&id) {
            BobAction::Measure
        } else {
            BobAction::Reflect
        }
    };
    let mut records: Vec<RoundRecord> = rounds
        .iter()
        .enumerate()
        .map(|(id, r)| RoundRecord {
            round_id: id as u64,
            prep: r.prep,
            action1: action(0, id as u64),
            action2: action(1, id as u64),
            bob1_outcome: None,
            bob2_outcome: None,
            alice_remeasure1: r.remeasure[0],
            alice_remeasure2: r.remeasure[1],
            alice_remeasure_basis: r.prep.basis,
            lost: r.lost,
        })
        .collect();
    let digest = config.digest();
    let provisional = Transcript::new(records.clone(), digest.clone());
    let disclosure = roles::disclose(&provisional)?;
    let sifted = sift::sift(&provisional, &disclosure)?;
    let test = sift::eavesdrop_test(&provisional, &sifted.check_rounds, config.abort_threshold)?;

    let mut cipher = None;
    if config.protocol == Protocol::Tlsqsc && !test.abort {
        let message = config.message.as_ref().map(|m| m.trits()).unwrap_or_default();
        let key: TritString = sifted
            .key_rounds
            .iter()
            .map(|&id| records[id as usize].prep.a / 3)
            .collect();
        let mut ledger = KeyLedger::new(sifted.key_rounds.clone(), key);
        cipher = Some(messaging::send(&message, &mut ledger)?);
    }
    for p in peers.iter_mut() {
        p.send(&WireMessage::Cipher(cipher.clone()))?;
        p.flush()?;
    }

    // private reports complete the transcript
    let mut decoded = None;
    for (i, link) in Link::ALL.into_iter().enumerate() {
        let who = link.to_string();
        let (reported, dec) = match peers[i].recv()? {
            WireMessage::Report {
                link: l,
                records,
                decoded,
            } if l == link => (records, decoded),
            other => return Err(unexpected(&who, &other)),
        };
        if reported.len() != records.len() {
            return Err(HarnessError::Protocol(format!(
                "{who} reported {} rounds, expected {}",
                reported.len(),
                records.len()
            )));
        }
        for (rec, rep) in records.iter_mut().zip(&reported) {
            let action = match link {
                Link::ToBob1 => rec.action1,
                Link::ToBob2 => rec.action2,
            };
            if rep.round_id != rec.round_id || rep.action != action {
                return Err(HarnessError::Protocol(format!(
                    "{who} report disagrees with disclosure at round {}",
                    rec.round_id
                )));
            }
            match link {
                Link::ToBob1 => rec.bob1_outcome = rep.outcome,
                Link::ToBob2 => rec.bob2_outcome = rep.outcome,
            }
        }
        if link == Link::ToBob1 {
            decoded = dec;
        }
    }

    // match the in-process logging order: round, then forward before backward
    eve.entries.sort_by_key(|e| {
        (
            e.round_id,
            matches!(e.direction, Direction::Backward),
            e.link,
        )
    });
    finalize(
        config,
        Transcript::new(records, digest),
        eve,
        Delivery { cipher, decoded },
    )
}
