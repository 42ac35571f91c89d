//! The fixed 41-symbol phoneme inventory: 39 ARPAbet monophones plus `SIL`
//! and `UNK`. Indices are positions in [`SYMBOLS`] and never change.

use crate::error::{Error, Result};

pub const SYMBOLS: [&str; 41] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH",
    "IH", "IY", "JH", "K", "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH",
    "UW", "V", "W", "Y", "Z", "ZH", "SIL", "UNK",
];

pub const SIZE: usize = SYMBOLS.len();

pub const SIL: usize = 39;
pub const UNK: usize = 40;

/// Phones produced without vocal-fold vibration (plus silence/unknown).
const UNVOICED: [&str; 9] = ["CH", "F", "HH", "K", "P", "S", "SH", "T", "TH"];

pub fn index_of(symbol: &str) -> Result<usize> {
    SYMBOLS
        .iter()
        .position(|s| *s == symbol)
        .ok_or_else(|| Error::UnknownPhone(symbol.to_string()))
}

pub fn symbol(index: usize) -> Result<&'static str> {
    SYMBOLS.get(index).copied().ok_or(Error::PhoneIndex(index))
}

pub fn indices<S: AsRef<str>>(symbols: &[S]) -> Result<Vec<usize>> {
    symbols.iter().map(|s| index_of(s.as_ref())).collect()
}

/// Splits a whitespace-separated phone string and validates every symbol.
pub fn parse_sequence(text: &str) -> Result<Vec<String>> {
    let phones: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    for p in &phones {
        index_of(p)?;
    }
    Ok(phones)
}

pub fn is_vowel(index: usize) -> bool {
    SYMBOLS
        .get(index)
        .is_some_and(|s| matches!(s.as_bytes()[0], b'A' | b'E' | b'I' | b'O' | b'U'))
}

pub fn is_voiced(index: usize) -> bool {
    index < SIL && !UNVOICED.contains(&SYMBOLS[index])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn inventory_is_a_bijection() {
        let unique: HashSet<_> = SYMBOLS.iter().collect();
        assert_eq!(unique.len(), 41);
        for (i, s) in SYMBOLS.iter().enumerate() {
            assert_eq!(index_of(s).unwrap(), i);
            assert_eq!(symbol(i).unwrap(), *s);
        }
        assert_eq!(SYMBOLS[SIL], "SIL");
        assert_eq!(SYMBOLS[UNK], "UNK");
    }

    #[test]
    fn unknown_symbol_rejected() {
        assert!(matches!(index_of("ZZ"), Err(Error::UnknownPhone(_))));
        assert!(parse_sequence("HH AH ZZ").is_err());
        assert!(symbol(41).is_err());
    }

    #[test]
    fn voicing_classes() {
        assert!(is_voiced(index_of("AA").unwrap()));
        assert!(is_voiced(index_of("Z").unwrap()));
        assert!(!is_voiced(index_of("S").unwrap()));
        assert!(!is_voiced(SIL));
        assert!(is_vowel(index_of("OY").unwrap()));
        assert!(!is_vowel(index_of("V").unwrap()));
    }
}
