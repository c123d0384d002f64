//! Participant state machines and the per-round transcript.
//!
//! Alice is the quantum party: she prepares S1/S2 states and remeasures what
//! comes back in the basis she prepared. Bob₁ and Bob₂ are classical: each
//! either measures in the computational basis and returns the post-measurement
//! state, or reflects the carrier untouched. Bob code never sees any other
//! basis.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, ChannelPlan, Direction, EveLog, Link};
use crate::qudit::{
    self, BasisSet, LocalBasis, QuditError, StateVector, BASIS_SIZE, DIM_BOB1, DIM_BOB2,
};
use crate::rng::{RngStream, StreamId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoleError {
    #[error("classical party cannot handle dimension {0}")]
    BobDimension(usize),
    #[error("Alice expected dimensions (9, 3), got ({0}, {1})")]
    AliceDimensions(usize, usize),
    #[error("transcript is incomplete: expected round {expected}, found {found:?}")]
    IncompleteTranscript { expected: u64, found: Option<u64> },
    #[error(transparent)]
    Qudit(#[from] QuditError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Alice's private choice for one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreparationRecord {
    pub basis: BasisSet,
    /// Quantum number of the first subsystem, `0..9`.
    pub a: u8,
}

impl PreparationRecord {
    pub fn new(basis: BasisSet, a: u8) -> Result<Self, RoleError> {
        if usize::from(a) >= BASIS_SIZE {
            return Err(QuditError::IndexOutOfRange {
                index: a.into(),
                bound: BASIS_SIZE,
            }
            .into());
        }
        Ok(Self { basis, a })
    }

    /// Expected Alice outcomes in an undisturbed round.
    pub fn expected_outcomes(&self) -> (u8, u8) {
        (self.a, self.a % 3)
    }

    pub fn states(&self) -> Result<(StateVector, StateVector), RoleError> {
        Ok(qudit::prepare(
            self.basis,
            self.a.into(),
            qudit::FourierSign::Positive,
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BobAction {
    Measure,
    Reflect,
}

impl BobAction {
    pub const ALL: [BobAction; 2] = [BobAction::Measure, BobAction::Reflect];
}

/// Public classification of a round: Alice's basis and both Bob actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Category {
    pub basis: BasisSet,
    pub action1: BobAction,
    pub action2: BobAction,
}

impl Category {
    /// All eight categories in a fixed order.
    pub fn all() -> Vec<Category> {
        let mut out = Vec::with_capacity(8);
        for basis in BasisSet::ALL {
            for action1 in BobAction::ALL {
                for action2 in BobAction::ALL {
                    out.push(Category {
                        basis,
                        action1,
                        action2,
                    });
                }
            }
        }
        out
    }

    pub fn label(&self) -> String {
        let a = |x: BobAction| match x {
            BobAction::Measure => "M",
            BobAction::Reflect => "R",
        };
        format!("{}-{}{}", self.basis, a(self.action1), a(self.action2))
    }
}

/// Everything that happened in one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_id: u64,
    pub prep: PreparationRecord,
    pub action1: BobAction,
    pub action2: BobAction,
    /// Present iff Bob₁ measured and the carrier reached him.
    pub bob1_outcome: Option<u8>,
    pub bob2_outcome: Option<u8>,
    /// `None` if the subsystem was lost before returning to Alice.
    pub alice_remeasure1: Option<u8>,
    pub alice_remeasure2: Option<u8>,
    pub alice_remeasure_basis: BasisSet,
    /// A carrier was lost on some pass; publicly flagged.
    pub lost: bool,
}

impl RoundRecord {
    pub fn category(&self) -> Category {
        Category {
            basis: self.prep.basis,
            action1: self.action1,
            action2: self.action2,
        }
    }

    pub fn action(&self, link: Link) -> BobAction {
        match link {
            Link::ToBob1 => self.action1,
            Link::ToBob2 => self.action2,
        }
    }
}

/// Ordered list of rounds with a digest of the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub rounds: Vec<RoundRecord>,
    pub config_digest: String,
}

impl Transcript {
    pub fn new(rounds: Vec<RoundRecord>, config_digest: impl Into<String>) -> Self {
        Self {
            rounds,
            config_digest: config_digest.into(),
        }
    }

    /// Checks that round ids run contiguously from zero.
    pub fn validate(&self) -> Result<(), RoleError> {
        for (expected, r) in self.rounds.iter().enumerate() {
            if r.round_id != expected as u64 {
                return Err(RoleError::IncompleteTranscript {
                    expected: expected as u64,
                    found: Some(r.round_id),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn get(&self, round_id: u64) -> Option<&RoundRecord> {
        self.rounds
            .get(usize::try_from(round_id).ok()?)
            .filter(|r| r.round_id == round_id)
    }
}

/// Alice picks a basis and an index uniformly: two draws.
pub fn alice_prepare(
    rng: &mut RngStream,
) -> Result<(PreparationRecord, StateVector, StateVector), RoleError> {
    let basis = if rng.coin() { BasisSet::S1 } else { BasisSet::S2 };
    let a = rng.index(BASIS_SIZE) as u8;
    let prep = PreparationRecord { basis, a };
    let (s9, s3) = prep.states()?;
    Ok((prep, s9, s3))
}

/// What a classical party sends back.
#[derive(Debug, Clone, PartialEq)]
pub struct BobStep {
    pub action: BobAction,
    pub outcome: Option<u8>,
    pub state: StateVector,
}

/// A classical party's move with a random action choice.
pub fn bob_step(incoming: StateVector, rng: &mut RngStream) -> Result<BobStep, RoleError> {
    let action = if rng.coin() {
        BobAction::Measure
    } else {
        BobAction::Reflect
    };
    bob_step_with(action, incoming, rng)
}

/// A classical party's move with a given action.
pub fn bob_step_with(
    action: BobAction,
    incoming: StateVector,
    rng: &mut RngStream,
) -> Result<BobStep, RoleError> {
    if incoming.dim() != DIM_BOB1 && incoming.dim() != DIM_BOB2 {
        return Err(RoleError::BobDimension(incoming.dim()));
    }
    match action {
        BobAction::Reflect => Ok(BobStep {
            action,
            outcome: None,
            state: incoming,
        }),
        BobAction::Measure => {
            let out = qudit::measure(&incoming, LocalBasis::Computational, rng)?;
            Ok(BobStep {
                action,
                outcome: Some(out.index as u8),
                state: out.post_state,
            })
        }
    }
}

/// Alice measures each returned subsystem in the basis she prepared.
pub fn alice_remeasure(
    returned1: &StateVector,
    returned2: &StateVector,
    prep: &PreparationRecord,
    rng: &mut RngStream,
) -> Result<(u8, u8), RoleError> {
    if returned1.dim() != DIM_BOB1 || returned2.dim() != DIM_BOB2 {
        return Err(RoleError::AliceDimensions(returned1.dim(), returned2.dim()));
    }
    let basis = prep.basis.local();
    let first = qudit::measure(returned1, basis, rng)?.index as u8;
    let second = qudit::measure(returned2, basis, rng)?.index as u8;
    Ok((first, second))
}

/// Alice's measurement of a single returned subsystem, one draw.
pub fn alice_remeasure_one(
    returned: &StateVector,
    prep: &PreparationRecord,
    rng: &mut RngStream,
) -> Result<u8, RoleError> {
    Ok(qudit::measure(returned, prep.basis.local(), rng)?.index as u8)
}

/// Per-round random streams for the three parties.
#[derive(Debug, Clone)]
pub struct RoundStreams {
    pub seed: u64,
    pub alice: RngStream,
    pub bob1: RngStream,
    pub bob2: RngStream,
}

impl RoundStreams {
    pub fn new(seed: u64, round_id: u64) -> Self {
        Self {
            seed,
            alice: RngStream::for_round(seed, StreamId::Alice, round_id),
            bob1: RngStream::for_round(seed, StreamId::Bob1, round_id),
            bob2: RngStream::for_round(seed, StreamId::Bob2, round_id),
        }
    }
}

/// Forced choices for one round; `None` fields are drawn at random.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundChoices {
    pub prep: Option<PreparationRecord>,
    pub action1: Option<BobAction>,
    pub action2: Option<BobAction>,
}

impl RoundChoices {
    pub fn forced(prep: PreparationRecord, action1: BobAction, action2: BobAction) -> Self {
        Self {
            prep: Some(prep),
            action1: Some(action1),
            action2: Some(action2),
        }
    }
}

/// Forced-choice hooks for a whole run, indexed by round id.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub rounds: Vec<RoundChoices>,
}

impl Overrides {
    pub fn choices(&self, round_id: u64) -> RoundChoices {
        usize::try_from(round_id)
            .ok()
            .and_then(|i| self.rounds.get(i).copied())
            .unwrap_or_default()
    }
}

fn bob_move(
    forced: Option<BobAction>,
    incoming: StateVector,
    rng: &mut RngStream,
) -> Result<BobStep, RoleError> {
    match forced {
        Some(action) => bob_step_with(action, incoming, rng),
        None => bob_step(incoming, rng),
    }
}

/// Bob's side of one link when the carrier may have been lost on the way in.
/// The action is drawn either way so the choice does not depend on loss.
pub fn bob_receive(
    forced: Option<BobAction>,
    incoming: Option<StateVector>,
    rng: &mut RngStream,
) -> Result<(BobAction, Option<u8>, Option<StateVector>), RoleError> {
    match incoming {
        Some(state) => {
            let step = bob_move(forced, state, rng)?;
            Ok((step.action, step.outcome, Some(step.state)))
        }
        None => {
            let drawn = rng.coin();
            let action = forced.unwrap_or(if drawn {
                BobAction::Measure
            } else {
                BobAction::Reflect
            });
            Ok((action, None, None))
        }
    }
}

/// One full round: prepare, forward channel, Bob, backward channel, remeasure.
pub fn run_round(
    round_id: u64,
    streams: &mut RoundStreams,
    channel: &ChannelPlan,
    choices: RoundChoices,
    eve: &mut EveLog,
) -> Result<RoundRecord, RoleError> {
    let (prep, s9, s3) = match choices.prep {
        Some(prep) => {
            let (s9, s3) = prep.states()?;
            (prep, s9, s3)
        }
        None => alice_prepare(&mut streams.alice)?,
    };
    let seed = streams.seed;

    let fwd1 = channel.transmit(seed, round_id, Link::ToBob1, Direction::Forward, s9, eve)?;
    let fwd2 = channel.transmit(seed, round_id, Link::ToBob2, Direction::Forward, s3, eve)?;

    let (action1, bob1_outcome, back1) = bob_receive(choices.action1, fwd1, &mut streams.bob1)?;
    let (action2, bob2_outcome, back2) = bob_receive(choices.action2, fwd2, &mut streams.bob2)?;

    let ret1 = match back1 {
        Some(s) => channel.transmit(seed, round_id, Link::ToBob1, Direction::Backward, s, eve)?,
        None => None,
    };
    let ret2 = match back2 {
        Some(s) => channel.transmit(seed, round_id, Link::ToBob2, Direction::Backward, s, eve)?,
        None => None,
    };

    let alice_remeasure1 = match &ret1 {
        Some(s) => Some(alice_remeasure_one(s, &prep, &mut streams.alice)?),
        None => None,
    };
    let alice_remeasure2 = match &ret2 {
        Some(s) => Some(alice_remeasure_one(s, &prep, &mut streams.alice)?),
        None => None,
    };

    Ok(RoundRecord {
        round_id,
        prep,
        action1,
        action2,
        bob1_outcome,
        bob2_outcome,
        alice_remeasure1,
        alice_remeasure2,
        alice_remeasure_basis: prep.basis,
        lost: ret1.is_none() || ret2.is_none(),
    })
}

/// Runs `n_rounds` rounds in order.
pub fn simulate(
    n_rounds: u64,
    seed: u64,
    channel: &ChannelPlan,
    overrides: &Overrides,
    config_digest: &str,
) -> Result<(Transcript, EveLog), RoleError> {
    let mut eve = EveLog::default();
    let mut rounds = Vec::with_capacity(n_rounds as usize);
    for round_id in 0..n_rounds {
        let mut streams = RoundStreams::new(seed, round_id);
        rounds.push(run_round(
            round_id,
            &mut streams,
            channel,
            overrides.choices(round_id),
            &mut eve,
        )?);
    }
    Ok((Transcript::new(rounds, config_digest), eve))
}

/// The public announcements after all rounds: which rounds used S1, which
/// rounds each Bob measured, and which rounds were lost. No outcomes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisclosureSet {
    pub n_rounds: u64,
    pub s1_rounds: BTreeSet<u64>,
    pub bob1_measured: BTreeSet<u64>,
    pub bob2_measured: BTreeSet<u64>,
    pub lost_rounds: BTreeSet<u64>,
}

impl DisclosureSet {
    pub fn measured(&self, link: Link) -> &BTreeSet<u64> {
        match link {
            Link::ToBob1 => &self.bob1_measured,
            Link::ToBob2 => &self.bob2_measured,
        }
    }

    /// Category of a round as seen from the public record.
    pub fn category(&self, round_id: u64) -> Category {
        let action = |set: &BTreeSet<u64>| {
            if set.contains(&round_id) {
                BobAction::Measure
            } else {
                BobAction::Reflect
            }
        };
        Category {
            basis: if self.s1_rounds.contains(&round_id) {
                BasisSet::S1
            } else {
                BasisSet::S2
            },
            action1: action(&self.bob1_measured),
            action2: action(&self.bob2_measured),
        }
    }
}

pub fn disclose(transcript: &Transcript) -> Result<DisclosureSet, RoleError> {
    transcript.validate()?;
    let mut out = DisclosureSet {
        n_rounds: transcript.len() as u64,
        ..Default::default()
    };
    for r in &transcript.rounds {
        if r.prep.basis == BasisSet::S1 {
            out.s1_rounds.insert(r.round_id);
        }
        if r.action1 == BobAction::Measure {
            out.bob1_measured.insert(r.round_id);
        }
        if r.action2 == BobAction::Measure {
            out.bob2_measured.insert(r.round_id);
        }
        if r.lost {
            out.lost_rounds.insert(r.round_id);
        }
    }
    Ok(out)
}
