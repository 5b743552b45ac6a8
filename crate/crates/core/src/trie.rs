//! Byte trie over the text tokens of a vocabulary.
//!
//! Tokens are laid out in depth-first order so the tokens below any node form
//! a contiguous slice; a walk that dies at a node can hand the whole subtree
//! to the caller in one go.

use crate::vocab::{TokenId, Vocabulary};

#[derive(Debug, Clone)]
struct Node {
    children: Vec<(u8, u32)>,
    /// Tokens whose bytes end exactly at this node.
    here: (u32, u32),
    /// Tokens at this node or anywhere below it.
    subtree: (u32, u32),
}

#[derive(Debug, Clone)]
pub struct TokenTrie {
    nodes: Vec<Node>,
    order: Vec<TokenId>,
}

struct Building {
    children: std::collections::BTreeMap<u8, usize>,
    tokens: Vec<TokenId>,
}

impl TokenTrie {
    pub fn new(vocab: &Vocabulary) -> Self {
        let mut build = vec![Building {
            children: Default::default(),
            tokens: Vec::new(),
        }];
        for (id, bytes) in vocab.text_tokens() {
            let mut at = 0;
            for &b in bytes {
                at = match build[at].children.get(&b) {
                    Some(&n) => n,
                    None => {
                        build.push(Building {
                            children: Default::default(),
                            tokens: Vec::new(),
                        });
                        let n = build.len() - 1;
                        build[at].children.insert(b, n);
                        n
                    }
                };
            }
            build[at].tokens.push(id);
        }

        let mut nodes = vec![
            Node {
                children: Vec::new(),
                here: (0, 0),
                subtree: (0, 0),
            };
            build.len()
        ];
        let mut order = Vec::new();
        // Iterative post-order so deep tries do not blow the call stack.
        let mut stack: Vec<(usize, bool)> = vec![(0, false)];
        while let Some((n, done)) = stack.pop() {
            if done {
                nodes[n].subtree.1 = order.len() as u32;
                continue;
            }
            let start = order.len() as u32;
            order.extend_from_slice(&build[n].tokens);
            nodes[n].here = (start, order.len() as u32);
            nodes[n].subtree.0 = start;
            nodes[n].children = build[n]
                .children
                .iter()
                .map(|(&b, &c)| (b, c as u32))
                .collect();
            stack.push((n, true));
            for &(_, c) in nodes[n].children.iter().rev() {
                stack.push((c as usize, false));
            }
        }
        Self { nodes, order }
    }

    fn here(&self, n: usize) -> &[TokenId] {
        let (a, b) = self.nodes[n].here;
        &self.order[a as usize..b as usize]
    }

    fn subtree(&self, n: usize) -> &[TokenId] {
        let (a, b) = self.nodes[n].subtree;
        &self.order[a as usize..b as usize]
    }

    /// Depth-first walk from `init`. `step` advances the caller's state over
    /// one byte, returning `None` when the byte is rejected. `accept` is
    /// called for every token whose bytes all step successfully, together
    /// with the state after its last byte.
    pub fn walk<S: Clone>(
        &self,
        init: S,
        mut step: impl FnMut(&S, u8) -> Option<S>,
        mut accept: impl FnMut(TokenId, &S),
    ) {
        self.walk_with_rejects(init, |s, b| step(s, b), |id, s| accept(id, s), |_, _| {});
    }

    /// Like [`walk`](Self::walk) but also reports each rejected subtree
    /// together with the state it was rejected from.
    pub fn walk_with_rejects<S: Clone>(
        &self,
        init: S,
        mut step: impl FnMut(&S, u8) -> Option<S>,
        mut accept: impl FnMut(TokenId, &S),
        mut reject: impl FnMut(&[TokenId], &S),
    ) {
        let mut stack: Vec<(usize, S)> = vec![(0, init)];
        while let Some((n, state)) = stack.pop() {
            for &(b, c) in &self.nodes[n].children {
                let c = c as usize;
                match step(&state, b) {
                    Some(next) => {
                        for &id in self.here(c) {
                            accept(id, &next);
                        }
                        if !self.nodes[c].children.is_empty() {
                            stack.push((c, next));
                        }
                    }
                    None => reject(self.subtree(c), &state),
                }
            }
        }
    }

    /// Longest token that is a prefix of `text`, with its byte length.
    pub fn longest_prefix(&self, text: &[u8]) -> Option<(TokenId, usize)> {
        let mut best = None;
        let mut at = 0usize;
        for (i, &b) in text.iter().enumerate() {
            let next = self.nodes[at]
                .children
                .binary_search_by_key(&b, |(cb, _)| *cb)
                .ok()
                .map(|k| self.nodes[at].children[k].1 as usize);
            match next {
                Some(n) => {
                    at = n;
                    if let Some(&id) = self.here(at).first() {
                        best = Some((id, i + 1));
                    }
                }
                None => break,
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn walk_reports_every_token_once() {
        let v = Vocabulary::from_strs(&["a", "ab", "abc", "b", "ba", "</s>", "c"], 5).unwrap();
        let trie = TokenTrie::new(&v);
        let mut seen = Vec::new();
        trie.walk((), |_, _| Some(()), |id, _| seen.push(id));
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3, 4, 6]);
    }

    #[test]
    fn rejected_subtrees_cover_the_rest() {
        let v = Vocabulary::from_strs(&["a", "ab", "abc", "b", "ba", "</s>"], 5).unwrap();
        let trie = TokenTrie::new(&v);
        let mut ok = Vec::new();
        let mut bad = Vec::new();
        trie.walk_with_rejects(
            0usize,
            |depth, b| {
                (b == b'a' || *depth > 0)
                    .then_some(depth + 1)
                    .filter(|d| *d < 3)
            },
            |id, _| ok.push(id),
            |ids, _| bad.extend_from_slice(ids),
        );
        ok.sort();
        bad.sort();
        assert_eq!(ok, vec![0, 1]);
        assert_eq!(bad, vec![2, 3, 4]);
    }

    #[test]
    fn longest_prefix_prefers_longer_tokens() {
        let v = Vocabulary::from_strs(&["a", "ab", "abc", "</s>"], 3).unwrap();
        let trie = TokenTrie::new(&v);
        assert_eq!(trie.longest_prefix(b"abx"), Some((1, 2)));
        assert_eq!(trie.longest_prefix(b"x"), None);
    }
}
