//! Direct messaging in layer 1 with a trit-wise one-time pad.
//!
//! Each message trit consumes one layer-1 key symbol: `m = M + k (mod 3)`,
//! and Bob₁ recovers `M = m + (3 - k) (mod 3)`. The layer-2 key is left
//! untouched for the group.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sift::{EavesdropTest, KeyMaterial, Layer2Keys};
use crate::trit::{TritError, TritString};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MessagingError {
    #[error("message needs {needed} key trits, only {available} available")]
    KeyExhausted { needed: usize, available: usize },
    #[error("ciphertext has {ciphertext} trits, key has {key}")]
    LengthMismatch { ciphertext: usize, key: usize },
    #[error("key symbol from round {0} was already used")]
    KeyReuse(u64),
    #[error("session aborted: eavesdropping test failed")]
    Aborted,
    #[error("text codec: {0}")]
    Codec(String),
    #[error(transparent)]
    Trit(#[from] TritError),
}

fn add3(x: u8, y: u8) -> u8 {
    (x + y) % 3
}

/// Additive inverse modulo 3.
fn inverse3(k: u8) -> u8 {
    (3 - k) % 3
}

/// Pads `message` with the first `message.len()` trits of `key`.
pub fn encode(message: &TritString, key: &TritString) -> Result<TritString, MessagingError> {
    if message.len() > key.len() {
        return Err(MessagingError::KeyExhausted {
            needed: message.len(),
            available: key.len(),
        });
    }
    Ok(message.iter().zip(key.iter()).map(|(m, k)| add3(m, k)).collect())
}

pub fn decode(ciphertext: &TritString, key: &TritString) -> Result<TritString, MessagingError> {
    if ciphertext.len() != key.len() {
        return Err(MessagingError::LengthMismatch {
            ciphertext: ciphertext.len(),
            key: key.len(),
        });
    }
    Ok(ciphertext
        .iter()
        .zip(key.iter())
        .map(|(c, k)| add3(c, inverse3(k)))
        .collect())
}

/// Public ciphertext plus the key rounds it consumed, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CipherMessage {
    pub ciphertext: TritString,
    pub key_round_ids: Vec<u64>,
}

/// Single-owner record of which key rounds have been spent.
#[derive(Debug, Clone)]
pub struct KeyLedger {
    round_ids: Vec<u64>,
    key: TritString,
    used: BTreeSet<u64>,
}

impl KeyLedger {
    pub fn new(round_ids: Vec<u64>, key: TritString) -> Self {
        debug_assert_eq!(round_ids.len(), key.len());
        Self {
            round_ids,
            key,
            used: BTreeSet::new(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.round_ids.len() - self.used.len()
    }

    /// Marks `ids` as spent and returns the matching key trits.
    pub fn consume(&mut self, ids: &[u64]) -> Result<TritString, MessagingError> {
        let mut out = Vec::with_capacity(ids.len());
        let mut batch = BTreeSet::new();
        for &id in ids {
            if self.used.contains(&id) || !batch.insert(id) {
                return Err(MessagingError::KeyReuse(id));
            }
            let pos = self
                .round_ids
                .iter()
                .position(|&r| r == id)
                .ok_or(MessagingError::KeyExhausted {
                    needed: ids.len(),
                    available: self.remaining(),
                })?;
            out.push(self.key.as_slice()[pos]);
        }
        self.used.extend(batch);
        Ok(TritString::new(out)?)
    }

    /// Takes the next `n` unused key rounds in order.
    pub fn take(&mut self, n: usize) -> Result<(Vec<u64>, TritString), MessagingError> {
        let ids: Vec<u64> = self
            .round_ids
            .iter()
            .copied()
            .filter(|id| !self.used.contains(id))
            .take(n)
            .collect();
        if ids.len() < n {
            return Err(MessagingError::KeyExhausted {
                needed: n,
                available: ids.len(),
            });
        }
        let key = self.consume(&ids)?;
        Ok((ids, key))
    }
}

/// Alice's side: encrypt with her layer-1 key.
pub fn send(message: &TritString, ledger: &mut KeyLedger) -> Result<CipherMessage, MessagingError> {
    let (key_round_ids, key) = ledger.take(message.len())?;
    Ok(CipherMessage {
        ciphertext: encode(message, &key)?,
        key_round_ids,
    })
}

/// Bob₁'s side: decrypt with his layer-1 key.
pub fn receive(cipher: &CipherMessage, ledger: &mut KeyLedger) -> Result<TritString, MessagingError> {
    if cipher.ciphertext.len() != cipher.key_round_ids.len() {
        return Err(MessagingError::LengthMismatch {
            ciphertext: cipher.ciphertext.len(),
            key: cipher.key_round_ids.len(),
        });
    }
    let key = ledger.consume(&cipher.key_round_ids)?;
    decode(&cipher.ciphertext, &key)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TlsqscOutcome {
    pub cipher: CipherMessage,
    pub decoded: TritString,
    pub layer2: Layer2Keys,
}

/// Runs the messaging step on top of a completed, non-aborted key session.
pub fn run_tlsqsc(
    message: &TritString,
    keys: &KeyMaterial,
    test: &EavesdropTest,
) -> Result<TlsqscOutcome, MessagingError> {
    if test.abort {
        return Err(MessagingError::Aborted);
    }
    if message.len() > keys.len() {
        return Err(MessagingError::KeyExhausted {
            needed: message.len(),
            available: keys.len(),
        });
    }
    let mut alice = KeyLedger::new(keys.round_ids.clone(), keys.layer1.alice.clone());
    let mut bob1 = KeyLedger::new(keys.round_ids.clone(), keys.layer1.bob1.clone());
    let cipher = send(message, &mut alice)?;
    let decoded = receive(&cipher, &mut bob1)?;
    Ok(TlsqscOutcome {
        cipher,
        decoded,
        layer2: keys.layer2.clone(),
    })
}

/// Trits per byte in the text codec (3⁶ = 729 ≥ 256).
pub const TRITS_PER_BYTE: usize = 6;

/// Encodes bytes as base-3, six trits per byte, most significant first.
pub fn text_to_trits(text: &[u8]) -> TritString {
    let mut out = Vec::with_capacity(text.len() * TRITS_PER_BYTE);
    for &byte in text {
        let mut digits = [0u8; TRITS_PER_BYTE];
        let mut v = byte;
        for d in digits.iter_mut().rev() {
            *d = v % 3;
            v /= 3;
        }
        out.extend_from_slice(&digits);
    }
    TritString::new(out).expect("digits are trits")
}

pub fn trits_to_text(trits: &TritString) -> Result<Vec<u8>, MessagingError> {
    if !trits.len().is_multiple_of(TRITS_PER_BYTE) {
        return Err(MessagingError::Codec(format!(
            "length {} is not a multiple of {TRITS_PER_BYTE}",
            trits.len()
        )));
    }
    trits
        .as_slice()
        .chunks(TRITS_PER_BYTE)
        .map(|chunk| {
            let v = chunk.iter().fold(0u16, |acc, &t| acc * 3 + u16::from(t));
            u8::try_from(v).map_err(|_| MessagingError::Codec(format!("value {v} exceeds a byte")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sift::{Layer1Keys, SubsystemRates};
    use proptest::prelude::*;

    fn t(s: &str) -> TritString {
        s.parse().unwrap()
    }

    fn passing_test() -> EavesdropTest {
        EavesdropTest {
            mismatch: SubsystemRates::default(),
            check_rounds: 10,
            inconclusive: false,
            abort: false,
            threshold: 0.0,
        }
    }

    #[test]
    fn encode_examples() {
        assert_eq!(encode(&t("2"), &t("2")).unwrap(), t("1"));
        assert_eq!(encode(&t("012"), &t("000")).unwrap(), t("012"));
        assert_eq!(encode(&t("1"), &t("2")).unwrap(), t("0"));
        assert_eq!(
            encode(&t("0120"), &t("12")),
            Err(MessagingError::KeyExhausted {
                needed: 4,
                available: 2
            })
        );
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode(&t("1"), &t("2")).unwrap(), t("2"));
        assert_eq!(decode(&t("2101"), &t("0000")).unwrap(), t("2101"));
        assert!(matches!(
            decode(&t("21"), &t("0")),
            Err(MessagingError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn exhaustive_single_trit_roundtrip() {
        for m in 0..3u8 {
            for k in 0..3u8 {
                let msg = TritString::new(vec![m]).unwrap();
                let key = TritString::new(vec![k]).unwrap();
                assert_eq!(decode(&encode(&msg, &key).unwrap(), &key).unwrap(), msg);
            }
        }
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(pairs in prop::collection::vec((0u8..3, 0u8..3), 0..64)) {
            let msg: TritString = pairs.iter().map(|p| p.0).collect();
            let key: TritString = pairs.iter().map(|p| p.1).collect();
            prop_assert_eq!(decode(&encode(&msg, &key)?, &key)?, msg);
        }

        #[test]
        fn text_codec_roundtrip(bytes in prop::collection::vec(any::<u8>(), 0..40)) {
            let trits = text_to_trits(&bytes);
            prop_assert_eq!(trits.len(), bytes.len() * TRITS_PER_BYTE);
            prop_assert_eq!(trits_to_text(&trits)?, bytes);
        }
    }

    #[test]
    fn text_codec_layout() {
        // 'A' = 65 = 0·243 + 2·81 + 1·27 + 0·9 + 0·3 + 2
        assert_eq!(text_to_trits(b"A").to_string(), "002102");
        assert!(trits_to_text(&t("00210")).is_err());
        assert!(trits_to_text(&t("222222")).is_err());
    }

    #[test]
    fn ledger_forbids_reuse() {
        let mut ledger = KeyLedger::new(vec![3, 8, 11], t("120"));
        assert_eq!(ledger.consume(&[8]).unwrap(), t("2"));
        assert_eq!(ledger.consume(&[8]), Err(MessagingError::KeyReuse(8)));
        assert_eq!(ledger.consume(&[3, 3]), Err(MessagingError::KeyReuse(3)));
        let (ids, key) = ledger.take(2).unwrap();
        assert_eq!(ids, vec![3, 11]);
        assert_eq!(key, t("10"));
        assert_eq!(ledger.remaining(), 0);
        assert!(ledger.take(1).is_err());
    }

    #[test]
    fn tlsqsc_delivers_with_agreeing_keys() {
        let keys = KeyMaterial {
            round_ids: vec![1, 4, 6, 9, 12, 20],
            layer1: Layer1Keys {
                alice: t("201122"),
                bob1: t("201122"),
            },
            layer2: Layer2Keys::default(),
        };
        let msg = t("012210");
        let out = run_tlsqsc(&msg, &keys, &passing_test()).unwrap();
        assert_eq!(out.decoded, msg);
        assert_eq!(out.cipher.key_round_ids, keys.round_ids);
        assert_eq!(out.cipher.ciphertext, t("210002"));
    }

    #[test]
    fn tlsqsc_refuses_aborted_or_short_sessions() {
        let keys = KeyMaterial {
            round_ids: vec![0],
            layer1: Layer1Keys {
                alice: t("1"),
                bob1: t("1"),
            },
            layer2: Layer2Keys::default(),
        };
        let mut aborted = passing_test();
        aborted.abort = true;
        assert_eq!(run_tlsqsc(&t("1"), &keys, &aborted), Err(MessagingError::Aborted));
        assert!(matches!(
            run_tlsqsc(&t("11"), &keys, &passing_test()),
            Err(MessagingError::KeyExhausted { .. })
        ));
    }
}
