//! Base-3 symbol strings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("symbol {symbol:?} at position {position} is not a trit")]
pub struct TritError {
    pub position: usize,
    pub symbol: String,
}

/// Ordered sequence of values in `{0, 1, 2}`.
///
/// Displays and serializes as a digit string, e.g. `"0212"`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TritString(Vec<u8>);

impl TritString {
    pub fn new(trits: Vec<u8>) -> Result<Self, TritError> {
        if let Some((position, t)) = trits.iter().enumerate().find(|(_, &t)| t > 2) {
            return Err(TritError {
                position,
                symbol: t.to_string(),
            });
        }
        Ok(Self(trits))
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        self.0.iter().copied()
    }

    /// First `n` trits.
    pub fn prefix(&self, n: usize) -> TritString {
        TritString(self.0[..n.min(self.0.len())].to_vec())
    }

    pub(crate) fn push(&mut self, t: u8) {
        debug_assert!(t < 3);
        self.0.push(t);
    }
}

impl FromStr for TritString {
    type Err = TritError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .enumerate()
            .map(|(position, c)| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                '2' => Ok(2),
                other => Err(TritError {
                    position,
                    symbol: other.to_string(),
                }),
            })
            .collect::<Result<Vec<u8>, _>>()
            .map(TritString)
    }
}

impl fmt::Display for TritString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.0 {
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl TryFrom<Vec<u8>> for TritString {
    type Error = TritError;

    fn try_from(v: Vec<u8>) -> Result<Self, Self::Error> {
        TritString::new(v)
    }
}

impl FromIterator<u8> for TritString {
    /// Panics on a value outside `0..3`.
    fn from_iter<I: IntoIterator<Item = u8>>(iter: I) -> Self {
        TritString::new(iter.into_iter().collect()).expect("trit out of range")
    }
}

impl Serialize for TritString {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TritString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
