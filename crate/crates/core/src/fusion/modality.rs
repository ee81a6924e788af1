use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::FusionError;

/// Declaration order is the canonical order A < V < T.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Audio,
    Visual,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Audio, Modality::Visual, Modality::Text];

    pub fn letter(self) -> char {
        match self {
            Modality::Audio => 'A',
            Modality::Visual => 'V',
            Modality::Text => 'T',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(Modality::Audio),
            'V' => Some(Modality::Visual),
            'T' => Some(Modality::Text),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Visual => "visual",
            Modality::Text => "text",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Non-empty subset of {A, V, T}, always iterated in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModalitySet(u8);

impl ModalitySet {
    pub fn from_modalities(ms: impl IntoIterator<Item = Modality>) -> Result<Self, FusionError> {
        let bits = ms.into_iter().fold(0u8, |acc, m| acc | m.bit());
        if bits == 0 {
            return Err(FusionError::EmptySet);
        }
        Ok(Self(bits))
    }

    pub fn single(m: Modality) -> Self {
        Self(m.bit())
    }

    pub fn all() -> Self {
        Self(0b111)
    }

    pub fn contains(self, m: Modality) -> bool {
        self.0 & m.bit() != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Modality> {
        Modality::ALL.into_iter().filter(move |m| self.contains(*m))
    }

    pub fn singleton(self) -> Option<Modality> {
        (self.len() == 1).then(|| self.iter().next().expect("one member"))
    }

    /// `A+V+T` style label.
    pub fn label(self) -> String {
        self.iter().map(|m| m.letter().to_string()).collect::<Vec<_>>().join("+")
    }

    /// Accepts `A+V+T` style labels in any member order, and `T-Only`.
    pub fn parse(s: &str) -> Result<Self, FusionError> {
        let bad = || FusionError::BadLabel(s.to_string());
        let core = s.trim();
        let core = core.strip_suffix("-Only").or_else(|| core.strip_suffix("-only")).unwrap_or(core);
        let mut bits = 0u8;
        for part in core.split('+') {
            let mut chars = part.trim().chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(bad());
            };
            let m = Modality::from_letter(c).ok_or_else(bad)?;
            if bits & m.bit() != 0 {
                return Err(bad());
            }
            bits |= m.bit();
        }
        Ok(Self(bits))
    }

    /// The seven subsets in report row order: pairs and the full set, then
    /// the single modalities.
    pub fn report_order() -> [ModalitySet; 7] {
        use Modality::{Audio as A, Text as T, Visual as V};
        let s = |ms: &[Modality]| Self::from_modalities(ms.iter().copied()).expect("non-empty");
        [s(&[A, V]), s(&[V, T]), s(&[A, T]), s(&[A, V, T]), s(&[T]), s(&[A]), s(&[V])]
    }
}

impl fmt::Display for ModalitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl Serialize for ModalitySet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for ModalitySet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}
