//! Public discussion and key extraction.
//!
//! Rounds where both Bobs reflected are check rounds: Alice compares her
//! remeasurement with what she prepared. Rounds where Alice used S1 and both
//! Bobs measured are key rounds. Every other round, and every lost round, is
//! discarded.
//!
//! Key rule: each 9-level outcome `x` splits as `x = 3·high + low`. The high
//! trits of Alice and Bob₁ form the layer-1 key; the low trits of Alice and
//! Bob₁ together with Bob₂'s qutrit outcome form the layer-2 key.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qudit::BasisSet;
use crate::roles::{BobAction, Category, DisclosureSet, RoleError, Transcript};
use crate::stats;
use crate::trit::TritString;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SiftError {
    #[error("disclosure does not match the transcript: {0}")]
    InconsistentDisclosure(String),
    #[error("value {0} cannot be split into two trits")]
    OutOfRange(u8),
    #[error("key round {round_id} has no outcome for {party}")]
    MissingOutcome { round_id: u64, party: &'static str },
    #[error("round {0} is not in the transcript")]
    UnknownRound(u64),
    #[error(transparent)]
    Role(#[from] RoleError),
}

/// Partition of all round ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiftedSets {
    pub check_rounds: Vec<u64>,
    pub key_rounds: Vec<u64>,
    pub discarded: Vec<u64>,
}

/// Partitions rounds using only the public disclosure, after checking that
/// the disclosure agrees with the transcript.
pub fn sift(transcript: &Transcript, disclosure: &DisclosureSet) -> Result<SiftedSets, SiftError> {
    let expected = crate::roles::disclose(transcript)?;
    if expected.n_rounds != disclosure.n_rounds {
        return Err(SiftError::InconsistentDisclosure(format!(
            "{} rounds disclosed, {} in transcript",
            disclosure.n_rounds, expected.n_rounds
        )));
    }
    let checks: [(&str, &BTreeSet<u64>, &BTreeSet<u64>); 4] = [
        ("S1 rounds", &expected.s1_rounds, &disclosure.s1_rounds),
        ("Bob1 measurements", &expected.bob1_measured, &disclosure.bob1_measured),
        ("Bob2 measurements", &expected.bob2_measured, &disclosure.bob2_measured),
        ("lost rounds", &expected.lost_rounds, &disclosure.lost_rounds),
    ];
    for (what, truth, claimed) in checks {
        if truth != claimed {
            return Err(SiftError::InconsistentDisclosure(format!("{what} differ")));
        }
    }

    let mut out = SiftedSets::default();
    for round_id in 0..disclosure.n_rounds {
        if disclosure.lost_rounds.contains(&round_id) {
            out.discarded.push(round_id);
            continue;
        }
        let c = disclosure.category(round_id);
        match (c.basis, c.action1, c.action2) {
            (_, BobAction::Reflect, BobAction::Reflect) => out.check_rounds.push(round_id),
            (BasisSet::S1, BobAction::Measure, BobAction::Measure) => {
                out.key_rounds.push(round_id)
            }
            _ => out.discarded.push(round_id),
        }
    }
    Ok(out)
}

/// Fraction of check rounds in which Alice's outcome on each subsystem
/// differed from her preparation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SubsystemRates {
    pub subsystem1: f64,
    pub subsystem2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EavesdropTest {
    pub mismatch: SubsystemRates,
    pub check_rounds: usize,
    /// No check rounds were available.
    pub inconclusive: bool,
    pub abort: bool,
    pub threshold: f64,
}

pub fn eavesdrop_test(
    transcript: &Transcript,
    check_rounds: &[u64],
    threshold: f64,
) -> Result<EavesdropTest, SiftError> {
    if check_rounds.is_empty() {
        return Ok(EavesdropTest {
            mismatch: SubsystemRates::default(),
            check_rounds: 0,
            inconclusive: true,
            abort: true,
            threshold,
        });
    }
    let mut m1 = 0usize;
    let mut m2 = 0usize;
    for &id in check_rounds {
        let r = transcript.get(id).ok_or(SiftError::UnknownRound(id))?;
        let (e1, e2) = r.prep.expected_outcomes();
        if r.alice_remeasure1 != Some(e1) {
            m1 += 1;
        }
        if r.alice_remeasure2 != Some(e2) {
            m2 += 1;
        }
    }
    let mismatch = SubsystemRates {
        subsystem1: stats::fraction(m1, check_rounds.len()),
        subsystem2: stats::fraction(m2, check_rounds.len()),
    };
    Ok(EavesdropTest {
        mismatch,
        check_rounds: check_rounds.len(),
        inconclusive: false,
        abort: mismatch.subsystem1 > threshold || mismatch.subsystem2 > threshold,
        threshold,
    })
}

/// A 9-level value written as two base-3 digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TritPair {
    pub high: u8,
    pub low: u8,
}

impl TritPair {
    pub fn value(self) -> u8 {
        3 * self.high + self.low
    }
}

pub fn split_trits(a: u8) -> Result<TritPair, SiftError> {
    if a > 8 {
        return Err(SiftError::OutOfRange(a));
    }
    Ok(TritPair {
        high: a / 3,
        low: a % 3,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer1Keys {
    pub alice: TritString,
    pub bob1: TritString,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer2Keys {
    pub alice: TritString,
    pub bob1: TritString,
    pub bob2: TritString,
}

/// Sifted keys of both layers, aligned with `round_ids`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyMaterial {
    pub round_ids: Vec<u64>,
    pub layer1: Layer1Keys,
    pub layer2: Layer2Keys,
}

impl KeyMaterial {
    pub fn len(&self) -> usize {
        self.round_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.round_ids.is_empty()
    }
}

pub fn extract_keys(transcript: &Transcript, key_rounds: &[u64]) -> Result<KeyMaterial, SiftError> {
    let mut keys = KeyMaterial::default();
    for &id in key_rounds {
        let r = transcript.get(id).ok_or(SiftError::UnknownRound(id))?;
        let b1 = r.bob1_outcome.ok_or(SiftError::MissingOutcome {
            round_id: id,
            party: "Bob1",
        })?;
        let b2 = r.bob2_outcome.ok_or(SiftError::MissingOutcome {
            round_id: id,
            party: "Bob2",
        })?;
        let alice = split_trits(r.prep.a)?;
        let bob1 = split_trits(b1)?;
        if b2 > 2 {
            return Err(SiftError::OutOfRange(b2));
        }
        keys.round_ids.push(id);
        keys.layer1.alice.push(alice.high);
        keys.layer1.bob1.push(bob1.high);
        keys.layer2.alice.push(alice.low);
        keys.layer2.bob1.push(bob1.low);
        keys.layer2.bob2.push(b2);
    }
    Ok(keys)
}

/// Empirical outcome statistics of one public category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub label: String,
    pub category: Category,
    /// Non-lost rounds in this category.
    pub rounds: u64,
    pub mismatch_subsystem1: u64,
    pub mismatch_subsystem2: u64,
    pub mismatch_either: u64,
}

impl CategoryStats {
    pub fn rate_subsystem1(&self) -> f64 {
        stats::fraction(self.mismatch_subsystem1 as usize, self.rounds as usize)
    }

    pub fn rate_subsystem2(&self) -> f64 {
        stats::fraction(self.mismatch_subsystem2 as usize, self.rounds as usize)
    }

    pub fn rate_either(&self) -> f64 {
        stats::fraction(self.mismatch_either as usize, self.rounds as usize)
    }
}

/// Alice's mismatch counts in every category, lost rounds excluded.
pub fn category_stats(transcript: &Transcript) -> Vec<CategoryStats> {
    let mut table: Vec<CategoryStats> = Category::all()
        .into_iter()
        .map(|category| CategoryStats {
            label: category.label(),
            category,
            rounds: 0,
            mismatch_subsystem1: 0,
            mismatch_subsystem2: 0,
            mismatch_either: 0,
        })
        .collect();
    for r in transcript.rounds.iter().filter(|r| !r.lost) {
        let entry = table
            .iter_mut()
            .find(|e| e.category == r.category())
            .expect("all categories present");
        let (e1, e2) = r.prep.expected_outcomes();
        let m1 = r.alice_remeasure1 != Some(e1);
        let m2 = r.alice_remeasure2 != Some(e2);
        entry.rounds += 1;
        entry.mismatch_subsystem1 += u64::from(m1);
        entry.mismatch_subsystem2 += u64::from(m2);
        entry.mismatch_either += u64::from(m1 || m2);
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiftFractions {
    pub check: f64,
    pub key: f64,
    pub discarded: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer2Qber {
    /// Alice's low trit vs Bob₁'s low trit.
    pub bob1: f64,
    /// Alice's low trit vs Bob₂'s outcome.
    pub bob2: f64,
    /// Either Bob disagrees with Alice.
    pub combined: f64,
}

/// Outcome of the TLSQSC messaging step, when it ran.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageSummary {
    pub length: usize,
    pub ciphertext_emitted: bool,
    pub delivered_exactly: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_digest: String,
    pub n_rounds: u64,
    pub lost_rounds: u64,
    pub check_rounds: u64,
    pub key_rounds: u64,
    pub sift_fractions: SiftFractions,
    pub check_mismatch_rate: SubsystemRates,
    pub check_inconclusive: bool,
    pub categories: Vec<CategoryStats>,
    pub layer1_qber: f64,
    pub layer2_qber: Layer2Qber,
    pub sifted_rate_bits_per_layer: f64,
    pub layer1_entropy_bits: f64,
    pub layer2_entropy_bits: f64,
    /// Empirical `I(layer-1 key ; Bob₂ outcomes)` over key rounds, bits.
    pub independence_stat: f64,
    pub abort: bool,
    pub threshold: f64,
    pub message: Option<MessageSummary>,
}

/// Bits carried by one sifted symbol of a layer: a uniform trit.
pub fn sifted_rate_bits_per_layer() -> f64 {
    3f64.log2()
}

fn mismatch_fraction(a: &TritString, b: &TritString) -> f64 {
    let n = a.len().min(b.len());
    let bad = a.iter().zip(b.iter()).filter(|(x, y)| x != y).count();
    stats::fraction(bad, n)
}

pub fn report(
    transcript: &Transcript,
    sifted: &SiftedSets,
    keys: &KeyMaterial,
    test: &EavesdropTest,
) -> RunReport {
    let n = transcript.len();
    let lost = transcript.rounds.iter().filter(|r| r.lost).count();
    let l2 = &keys.layer2;
    let combined_bad = (0..keys.len())
        .filter(|&i| {
            let a = l2.alice.as_slice()[i];
            l2.bob1.as_slice()[i] != a || l2.bob2.as_slice()[i] != a
        })
        .count();
    RunReport {
        config_digest: transcript.config_digest.clone(),
        n_rounds: n as u64,
        lost_rounds: lost as u64,
        check_rounds: sifted.check_rounds.len() as u64,
        key_rounds: sifted.key_rounds.len() as u64,
        sift_fractions: SiftFractions {
            check: stats::fraction(sifted.check_rounds.len(), n),
            key: stats::fraction(sifted.key_rounds.len(), n),
            discarded: stats::fraction(sifted.discarded.len(), n),
        },
        check_mismatch_rate: test.mismatch,
        check_inconclusive: test.inconclusive,
        categories: category_stats(transcript),
        layer1_qber: mismatch_fraction(&keys.layer1.alice, &keys.layer1.bob1),
        layer2_qber: Layer2Qber {
            bob1: mismatch_fraction(&l2.alice, &l2.bob1),
            bob2: mismatch_fraction(&l2.alice, &l2.bob2),
            combined: stats::fraction(combined_bad, keys.len()),
        },
        sifted_rate_bits_per_layer: sifted_rate_bits_per_layer(),
        layer1_entropy_bits: stats::entropy_bits(keys.layer1.alice.as_slice(), 3),
        layer2_entropy_bits: stats::entropy_bits(l2.alice.as_slice(), 3),
        independence_stat: stats::mutual_information_bits(
            keys.layer1.alice.as_slice(),
            l2.bob2.as_slice(),
            3,
            3,
        ),
        abort: test.abort,
        threshold: test.threshold,
        message: None,
    }
}
