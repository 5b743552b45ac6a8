//! Random regexes and grammars for differential tests.

use rand::seq::SliceRandom;
use rand::Rng;

use guidedec::grammar::{Grammar, Rule, Symbol};

/// Random pattern over `alphabet` (alphanumeric bytes) using literals,
/// classes, `.`, alternation, grouping and all quantifiers.
pub fn random_regex(rng: &mut impl Rng, alphabet: &[u8]) -> String {
    regex_node(rng, alphabet, 3)
}

fn atom(rng: &mut impl Rng, alphabet: &[u8]) -> String {
    match rng.gen_range(0..10) {
        0 => ".".into(),
        1 | 2 => {
            let k = rng.gen_range(1..=alphabet.len().min(3));
            let mut set: Vec<u8> = alphabet.choose_multiple(rng, k).copied().collect();
            set.sort_unstable();
            let body: String = set.iter().map(|&b| b as char).collect();
            if rng.gen_bool(0.2) {
                format!("[^{body}]")
            } else {
                format!("[{body}]")
            }
        }
        _ => (*alphabet.choose(rng).unwrap() as char).to_string(),
    }
}

fn regex_node(rng: &mut impl Rng, alphabet: &[u8], depth: u32) -> String {
    let n = rng.gen_range(1..=3);
    let mut parts = Vec::new();
    for _ in 0..n {
        let mut piece = if depth > 0 && rng.gen_bool(0.3) {
            let k = rng.gen_range(1..=3);
            let alts: Vec<String> = (0..k)
                .map(|_| regex_node(rng, alphabet, depth - 1))
                .collect();
            format!("({})", alts.join("|"))
        } else {
            atom(rng, alphabet)
        };
        match rng.gen_range(0..8) {
            0 => piece.push('*'),
            1 => piece.push('+'),
            2 => piece.push('?'),
            3 => {
                let m = rng.gen_range(0..3);
                let extra = rng.gen_range(0..3);
                piece.push_str(&format!("{{{},{}}}", m, m + extra));
            }
            _ => {}
        }
        parts.push(piece);
    }
    parts.concat()
}

/// Random grammar over the bytes `a`, `b`, `c` with up to four rules.
///
/// Every rule has a terminal-only alternative, so all rules are productive.
/// A reference to the same or an earlier rule is only placed after a
/// non-empty literal, so there is no left recursion; references to later
/// rules may appear anywhere.
pub fn random_grammar(rng: &mut impl Rng) -> Grammar {
    let n = rng.gen_range(1..=4);
    let name = |i: usize| {
        if i == 0 {
            "start".to_string()
        } else {
            format!("r{i}")
        }
    };
    let lits: [&[u8]; 5] = [b"a", b"b", b"c", b"ab", b"ca"];
    let pats = ["[ab]", "c*", "a|bc", "b?"];
    let terminal = |rng: &mut dyn rand::RngCore| -> Symbol {
        if rng.gen_bool(0.7) {
            Symbol::Literal(lits.choose(rng).unwrap().to_vec())
        } else {
            Symbol::Pattern(pats.choose(rng).unwrap().to_string())
        }
    };
    let rules = (0..n)
        .map(|i| {
            let mut alts = vec![(0..rng.gen_range(0..=2))
                .map(|_| terminal(rng))
                .collect::<Vec<_>>()];
            for _ in 0..rng.gen_range(0..=2) {
                let mut alt = Vec::new();
                let mut guarded = false;
                for _ in 0..rng.gen_range(1..=3) {
                    let r = rng.gen_range(0..n);
                    if rng.gen_bool(0.5) && (r > i || guarded) {
                        alt.push(Symbol::Rule(name(r)));
                    } else {
                        let t = terminal(rng);
                        guarded |= matches!(t, Symbol::Literal(_));
                        alt.push(t);
                    }
                }
                alts.push(alt);
            }
            Rule {
                name: name(i),
                alts,
            }
        })
        .collect();
    Grammar::new(rules, "start").expect("generated grammars are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::earley::GrammarOracle;
    use crate::regex_oracle::RegexOracle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn regexes_compile_in_both_engines() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let p = random_regex(&mut rng, b"abc01");
            RegexOracle::new(&p).unwrap();
            guidedec::regex_fsm::compile_regex(&p).unwrap();
        }
    }

    #[test]
    fn grammars_are_valid_and_recognizable() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let g = random_grammar(&mut rng);
            GrammarOracle::new(&g).unwrap();
        }
    }
}
