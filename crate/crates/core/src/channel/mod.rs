//! Channel models for the two Alice↔Bob links.
//!
//! A [`ChannelPlan`] is an ordered stack of [`ChannelModel`]s. On each pass
//! (link, direction) the matching models are applied in stack order. Every
//! stack element draws from its own random stream, so inserting or removing
//! one element never shifts the draws of another party.

mod oracle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qudit::{self, LocalBasis, QuditError, StateVector, DIM_BOB1, DIM_BOB2};
use crate::rng::{RngStream, StreamId};

pub use oracle::{
    detection_probability_oracle, detection_probability_oracle_signed, CategoryMismatch,
    DetectionTable, MismatchProbabilities,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("state of dimension {got} sent on {link} (expects {expected})")]
    DimensionMismatch {
        link: Link,
        expected: usize,
        got: usize,
    },
    #[error("channel kind {0} is not supported by exact enumeration")]
    Unsupported(String),
    #[error("cannot parse channel strategy {0:?}")]
    Parse(String),
    #[error(transparent)]
    Qudit(#[from] QuditError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    /// Alice↔Bob₁, carries the 9-level subsystem.
    ToBob1,
    /// Alice↔Bob₂, carries the 3-level subsystem.
    ToBob2,
}

impl Link {
    pub const ALL: [Link; 2] = [Link::ToBob1, Link::ToBob2];

    pub fn dim(self) -> usize {
        match self {
            Link::ToBob1 => DIM_BOB1,
            Link::ToBob2 => DIM_BOB2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Link::ToBob1 => "bob1",
            Link::ToBob2 => "bob2",
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Link {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bob1" | "tobob1" | "to_bob1" => Ok(Link::ToBob1),
            "bob2" | "tobob2" | "to_bob2" => Ok(Link::ToBob2),
            _ => Err(ChannelError::Parse(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Alice → Bob.
    Forward,
    /// Bob → Alice.
    Backward,
    Both,
}

impl Direction {
    /// Whether a model configured with `self` acts on a `pass`.
    pub fn covers(self, pass: Direction) -> bool {
        self == Direction::Both || self == pass
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Backward => "bwd",
            Direction::Both => "both",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fwd" | "forward" => Ok(Direction::Forward),
            "bwd" | "backward" => Ok(Direction::Backward),
            "both" => Ok(Direction::Both),
            _ => Err(ChannelError::Parse(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelKind {
    Identity,
    Loss { p_loss: f64 },
    Depolarize { p_dep: f64 },
    InterceptResend { basis: LocalBasis },
}

impl ChannelKind {
    fn name(&self) -> String {
        match self {
            ChannelKind::Identity => "identity".into(),
            ChannelKind::Loss { p_loss } => format!("loss({p_loss})"),
            ChannelKind::Depolarize { p_dep } => format!("depolarize({p_dep})"),
            ChannelKind::InterceptResend { basis } => format!("intercept_resend({basis:?})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub link: Link,
    pub direction: Direction,
    #[serde(flatten)]
    pub kind: ChannelKind,
}

impl ChannelModel {
    pub fn new(link: Link, direction: Direction, kind: ChannelKind) -> Result<Self, ChannelError> {
        let model = Self {
            link,
            direction,
            kind,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn intercept(link: Link, direction: Direction, basis: LocalBasis) -> Self {
        Self {
            link,
            direction,
            kind: ChannelKind::InterceptResend { basis },
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        match self.kind {
            ChannelKind::Loss { p_loss: p } | ChannelKind::Depolarize { p_dep: p } => {
                if (0.0..=1.0).contains(&p) {
                    Ok(())
                } else {
                    Err(ChannelError::InvalidProbability(p))
                }
            }
            _ => Ok(()),
        }
    }
}

/// What came out of one channel element.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelOutput {
    /// `None` when the carrier was lost.
    pub state: Option<StateVector>,
    /// Eve's measurement result, for intercept-resend elements only.
    pub eve_outcome: Option<usize>,
}

/// Applies a single channel element to a state.
pub fn apply(
    channel: &ChannelModel,
    state: StateVector,
    rng: &mut RngStream,
) -> Result<ChannelOutput, ChannelError> {
    let expected = channel.link.dim();
    if state.dim() != expected {
        return Err(ChannelError::DimensionMismatch {
            link: channel.link,
            expected,
            got: state.dim(),
        });
    }
    let out = match channel.kind {
        ChannelKind::Identity => ChannelOutput {
            state: Some(state),
            eve_outcome: None,
        },
        ChannelKind::Loss { p_loss } => ChannelOutput {
            state: (!rng.bernoulli(p_loss)).then_some(state),
            eve_outcome: None,
        },
        ChannelKind::Depolarize { p_dep } => {
            let state = if rng.bernoulli(p_dep) {
                StateVector::basis(expected, rng.index(expected))?
            } else {
                state
            };
            ChannelOutput {
                state: Some(state),
                eve_outcome: None,
            }
        }
        ChannelKind::InterceptResend { basis } => {
            let outcome = qudit::measure(&state, basis, rng)?;
            ChannelOutput {
                state: Some(outcome.post_state),
                eve_outcome: Some(outcome.index),
            }
        }
    };
    Ok(out)
}

/// One intercept-resend observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EveEntry {
    pub round_id: u64,
    pub link: Link,
    pub direction: Direction,
    pub eve_outcome: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EveLog {
    pub entries: Vec<EveEntry>,
}

/// Ordered stack of channel elements covering both links.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelPlan {
    models: Vec<ChannelModel>,
}

impl ChannelPlan {
    /// Both links noiseless.
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(models: Vec<ChannelModel>) -> Result<Self, ChannelError> {
        for m in &models {
            m.validate()?;
        }
        Ok(Self { models })
    }

    pub fn models(&self) -> &[ChannelModel] {
        &self.models
    }

    pub fn push(&mut self, model: ChannelModel) -> Result<(), ChannelError> {
        model.validate()?;
        self.models.push(model);
        Ok(())
    }

    pub fn extend(&mut self, other: ChannelPlan) {
        self.models.extend(other.models);
    }

    /// Models acting on `link` during `pass`, with their stack index.
    pub fn pass(
        &self,
        link: Link,
        pass: Direction,
    ) -> impl Iterator<Item = (usize, &ChannelModel)> + '_ {
        self.models
            .iter()
            .enumerate()
            .filter(move |(_, m)| m.link == link && m.direction.covers(pass))
    }

    /// Runs one pass of `link` in round `round_id`. Returns `None` if the
    /// carrier was lost along the way.
    pub fn transmit(
        &self,
        seed: u64,
        round_id: u64,
        link: Link,
        pass: Direction,
        state: StateVector,
        log: &mut EveLog,
    ) -> Result<Option<StateVector>, ChannelError> {
        let mut current = state;
        for (index, model) in self.pass(link, pass) {
            let mut rng = RngStream::for_round(
                seed,
                StreamId::Channel {
                    index: index as u16,
                    link,
                    direction: pass,
                },
                round_id,
            );
            let out = apply(model, current, &mut rng)?;
            if let Some(eve_outcome) = out.eve_outcome {
                log.entries.push(EveEntry {
                    round_id,
                    link,
                    direction: pass,
                    eve_outcome,
                });
            }
            match out.state {
                Some(s) => current = s,
                None => return Ok(None),
            }
        }
        Ok(Some(current))
    }
}

/// Parses an eavesdropper strategy string.
///
/// Grammar: `none`, or a comma-separated list of `target[:direction]:basis`
/// where `target` is `bob1`, `bob2` or `both`, `direction` is `fwd`, `bwd` or
/// `both` (default `fwd`) and `basis` is `computational`/`z` or `fourier`/`f`.
pub fn parse_eve_strategy(spec: &str) -> Result<ChannelPlan, ChannelError> {
    let spec = spec.trim();
    if spec.is_empty() || spec.eq_ignore_ascii_case("none") {
        return Ok(ChannelPlan::identity());
    }
    let mut models = Vec::new();
    for item in spec.split(',') {
        let parts: Vec<&str> = item.trim().split(':').collect();
        let (target, direction, basis) = match parts.as_slice() {
            [t, b] => (*t, Direction::Forward, *b),
            [t, d, b] => (*t, d.parse()?, *b),
            _ => return Err(ChannelError::Parse(item.to_string())),
        };
        let basis = match basis.to_ascii_lowercase().as_str() {
            "computational" | "z" => LocalBasis::Computational,
            "fourier" | "f" => LocalBasis::Fourier,
            _ => return Err(ChannelError::Parse(item.to_string())),
        };
        let links: Vec<Link> = if target.eq_ignore_ascii_case("both") {
            Link::ALL.to_vec()
        } else {
            vec![target.parse()?]
        };
        for link in links {
            models.push(ChannelModel::intercept(link, direction, basis));
        }
    }
    ChannelPlan::new(models)
}
