//! Synthetic vocabularies.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use guidedec::Vocabulary;

pub const EOS: &str = "</s>";

/// Bytes that exercise the JSON backends: structure, literals, digits,
/// escapes, whitespace, every letter of the schema keys used in tests and
/// the two bytes of "é".
pub const JSON_ALPHABET: &[u8] = b"{}[]\":, \n\\0123456789-.eE+tuflsnrabcdikmop_";

/// Multi-byte tokens that show up in real vocabularies for JSON output.
pub const JSON_WORDS: &[&str] = &[
    "{\"",
    "\":",
    "\",",
    "\"]",
    "\"}",
    "[\"",
    "true",
    "false",
    "null",
    "response",
    "\"response\"",
    "document",
    "_ids",
    "\"document_ids\":",
    "12",
    "0.",
    "e-",
    "\\u00e9",
    "\\u",
    "\\\"",
    " \"",
    "\n  ",
    "}]",
    "ok",
];

/// `size` tokens (eos last): every byte of `alphabet` alone, then as many
/// of `words` as fit, then distinct random strings of 2 to 4 alphabet bytes.
pub fn synthetic_vocab(seed: u64, size: usize, alphabet: &[u8], words: &[&str]) -> Vocabulary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tokens: Vec<Vec<u8>> = alphabet.iter().map(|&b| vec![b]).collect();
    assert!(
        tokens.len() < size,
        "vocabulary size {size} too small for the alphabet"
    );
    for w in words {
        if tokens.len() == size - 1 {
            break;
        }
        if !tokens.iter().any(|t| t == w.as_bytes()) {
            tokens.push(w.as_bytes().to_vec());
        }
    }
    let mut attempts = 0;
    while tokens.len() < size - 1 && attempts < 100_000 {
        attempts += 1;
        let len = rng.gen_range(2..=4);
        let t: Vec<u8> = (0..len)
            .map(|_| *alphabet.choose(&mut rng).unwrap())
            .collect();
        if !tokens.contains(&t) {
            tokens.push(t);
        }
    }
    tokens.push(EOS.as_bytes().to_vec());
    let eos = tokens.len() as u32 - 1;
    Vocabulary::new(tokens, eos).expect("synthetic vocabularies are well formed")
}

/// JSON-oriented vocabulary including the raw bytes of "é" as separate
/// tokens, so multi-byte characters can be split across tokens.
pub fn json_vocab(seed: u64, size: usize) -> Vocabulary {
    let mut alphabet = JSON_ALPHABET.to_vec();
    alphabet.extend("é".as_bytes());
    synthetic_vocab(seed, size, &alphabet, JSON_WORDS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_eos() {
        for size in [64, 128, 256] {
            let v = json_vocab(3, size);
            assert_eq!(v.len(), size);
            assert_eq!(v.token(v.eos_id()), Some(EOS.as_bytes()));
        }
        let v = synthetic_vocab(1, 20, b"ab", &[]);
        assert_eq!(v.len(), 20);
    }

    #[test]
    fn deterministic() {
        assert_eq!(json_vocab(9, 100).to_json(), json_vocab(9, 100).to_json());
        assert_ne!(json_vocab(9, 100).to_json(), json_vocab(10, 100).to_json());
    }
}
