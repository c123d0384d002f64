//! Exact detection probabilities by exhaustive branch enumeration.
//!
//! For every preparation in a basis, every Bob action pair, and every
//! measurement branch along the way (Eve, Bob, Eve again on the way back),
//! the branch weights are multiplied out and Alice's final outcome
//! distribution is accumulated. Only deterministic-structure channels
//! (identity, intercept-resend) are supported.

use serde::{Deserialize, Serialize};

use super::{ChannelError, ChannelKind, ChannelPlan, Direction, Link};
use crate::qudit::{
    self, BasisSet, FourierSign, LocalBasis, StateVector, BASIS_SIZE, DIM_BOB1, DIM_BOB2,
};
use crate::roles::{BobAction, Category};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MismatchProbabilities {
    /// Alice's 9-level outcome differs from `a`.
    pub subsystem1: f64,
    /// Alice's 3-level outcome differs from `a mod 3`.
    pub subsystem2: f64,
    /// Either of the above.
    pub either: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryMismatch {
    pub category: Category,
    pub probabilities: MismatchProbabilities,
}

/// Mismatch probabilities for all eight categories, preparation index
/// averaged uniformly within the basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionTable {
    pub entries: Vec<CategoryMismatch>,
}

impl DetectionTable {
    pub fn get(&self, category: Category) -> MismatchProbabilities {
        self.entries
            .iter()
            .find(|e| e.category == category)
            .map(|e| e.probabilities)
            .expect("table covers all categories")
    }
}

type Branches = Vec<(f64, StateVector)>;

fn split(
    branches: Branches,
    basis: LocalBasis,
    sign: FourierSign,
) -> Result<Branches, ChannelError> {
    let mut out = Vec::new();
    for (weight, state) in branches {
        let probs = qudit::outcome_probabilities(&state, basis, sign);
        for (k, p) in probs.into_iter().enumerate() {
            if p > 1e-15 {
                out.push((
                    weight * p,
                    StateVector::basis_vector(state.dim(), basis, k, sign)?,
                ));
            }
        }
    }
    Ok(out)
}

fn through_channel(
    plan: &ChannelPlan,
    link: Link,
    pass: Direction,
    mut branches: Branches,
    sign: FourierSign,
) -> Result<Branches, ChannelError> {
    for (_, model) in plan.pass(link, pass) {
        branches = match model.kind {
            ChannelKind::Identity => branches,
            ChannelKind::InterceptResend { basis } => split(branches, basis, sign)?,
            other => return Err(ChannelError::Unsupported(other.name())),
        };
    }
    Ok(branches)
}

/// Alice's outcome distribution for one subsystem.
fn outcome_distribution(
    plan: &ChannelPlan,
    link: Link,
    basis: BasisSet,
    prepared: StateVector,
    action: BobAction,
    sign: FourierSign,
) -> Result<Vec<f64>, ChannelError> {
    let mut branches = through_channel(plan, link, Direction::Forward, vec![(1.0, prepared)], sign)?;
    if action == BobAction::Measure {
        branches = split(branches, LocalBasis::Computational, sign)?;
    }
    let branches = through_channel(plan, link, Direction::Backward, branches, sign)?;
    let mut dist = vec![0.0; link.dim()];
    for (weight, state) in branches {
        for (k, p) in qudit::outcome_probabilities(&state, basis.local(), sign)
            .into_iter()
            .enumerate()
        {
            dist[k] += weight * p;
        }
    }
    Ok(dist)
}

/// Exact per-category mismatch probabilities under the default Fourier
/// convention.
pub fn detection_probability_oracle(plan: &ChannelPlan) -> Result<DetectionTable, ChannelError> {
    detection_probability_oracle_signed(plan, FourierSign::Positive)
}

pub fn detection_probability_oracle_signed(
    plan: &ChannelPlan,
    sign: FourierSign,
) -> Result<DetectionTable, ChannelError> {
    for m in plan.models() {
        if !matches!(
            m.kind,
            ChannelKind::Identity | ChannelKind::InterceptResend { .. }
        ) {
            return Err(ChannelError::Unsupported(m.kind.name()));
        }
    }
    let mut entries = Vec::with_capacity(8);
    for category in Category::all() {
        let mut sub1 = 0.0;
        let mut sub2 = 0.0;
        let mut either = 0.0;
        for a in 0..BASIS_SIZE {
            let (s9, s3) = qudit::prepare(category.basis, a, sign)?;
            let d1 = outcome_distribution(plan, Link::ToBob1, category.basis, s9, category.action1, sign)?;
            let d2 = outcome_distribution(plan, Link::ToBob2, category.basis, s3, category.action2, sign)?;
            debug_assert_eq!((d1.len(), d2.len()), (DIM_BOB1, DIM_BOB2));
            let weight = 1.0 / BASIS_SIZE as f64;
            for (o1, p1) in d1.iter().enumerate() {
                for (o2, p2) in d2.iter().enumerate() {
                    let m1 = o1 != a;
                    let m2 = o2 != a % 3;
                    let p = weight * p1 * p2;
                    if m1 {
                        sub1 += p;
                    }
                    if m2 {
                        sub2 += p;
                    }
                    if m1 || m2 {
                        either += p;
                    }
                }
            }
        }
        entries.push(CategoryMismatch {
            category,
            probabilities: MismatchProbabilities {
                subsystem1: sub1,
                subsystem2: sub2,
                either,
            },
        });
    }
    Ok(DetectionTable { entries })
}
