//! Label vocabulary shared by every track: action units, categorical
//! emotions and valence/arousal.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const AU_COUNT: usize = 12;
pub const CE_COUNT: usize = 7;
pub const VA_DIM: usize = 2;

/// FACS codes of the twelve action units, in label-vector order.
pub const DEFAULT_AU_CODES: [u32; AU_COUNT] = [1, 2, 4, 6, 7, 10, 12, 15, 23, 24, 25, 26];

/// Presence bits of the twelve action units.
pub type AuBits = [bool; AU_COUNT];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Emotion {
    Neutral = 0,
    Anger = 1,
    Disgust = 2,
    Fear = 3,
    Happiness = 4,
    Sadness = 5,
    Surprise = 6,
}

impl Emotion {
    pub const ALL: [Emotion; CE_COUNT] = [
        Emotion::Neutral,
        Emotion::Anger,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Happiness,
        Emotion::Sadness,
        Emotion::Surprise,
    ];

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::Validation(format!("emotion class {index} out of range 0..7")))
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Neutral => "neutral",
            Emotion::Anger => "anger",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
            Emotion::Happiness => "happiness",
            Emotion::Sadness => "sadness",
            Emotion::Surprise => "surprise",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Valence and arousal, each in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Va {
    pub valence: f64,
    pub arousal: f64,
}

impl Va {
    pub fn new(valence: f64, arousal: f64) -> Result<Self> {
        for (what, v) in [("valence", valence), ("arousal", arousal)] {
            if !v.is_finite() || !(-1.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!("{what} {v} outside [-1, 1]")));
            }
        }
        Ok(Self { valence, arousal })
    }

    pub fn as_array(self) -> [f64; VA_DIM] {
        [self.valence, self.arousal]
    }
}

/// Partially present labels of one sample. Each `Some` realises the presence
/// flag of its track in the masked total loss.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelSet {
    pub au: Option<AuBits>,
    pub ce: Option<Emotion>,
    pub va: Option<Va>,
}

impl LabelSet {
    pub fn is_empty(&self) -> bool {
        self.au.is_none() && self.ce.is_none() && self.va.is_none()
    }
}

/// Text form of AU bits: twelve `0`/`1` characters.
pub fn format_au(bits: &AuBits) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn parse_au(s: &str) -> Result<AuBits> {
    let chars: Vec<char> = s.chars().collect();
    if chars.len() != AU_COUNT {
        return Err(Error::Validation(format!(
            "AU field `{s}` must have {AU_COUNT} characters"
        )));
    }
    let mut bits = [false; AU_COUNT];
    for (b, c) in bits.iter_mut().zip(chars) {
        *b = match c {
            '0' => false,
            '1' => true,
            other => {
                return Err(Error::Validation(format!(
                    "AU field has non-binary character `{other}`"
                )))
            }
        };
    }
    Ok(bits)
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let idx: usize = s
            .parse()
            .map_err(|_| Error::Validation(format!("emotion class `{s}` is not a digit 0-6")))?;
        Emotion::from_index(idx)
    }
}
