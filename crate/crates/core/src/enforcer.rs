//! Byte-level JSON format enforcer.
//!
//! The state is a small parser over the schema: a stack of open objects and
//! arrays plus the position inside the current token. Masks are recomputed
//! at every step by folding each token's bytes through [`FormatEnforcer::char_advance`];
//! nothing is precomputed per state, though recent masks are memoised.

use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};

use lru::LruCache;

use crate::constraint::{ConstraintError, Guide};
use crate::grammar::schema::{encode_key, SchemaNode};
use crate::trie::TokenTrie;
use crate::vocab::{TokenId, TokenMask, Vocabulary};

pub const DEFAULT_ENFORCER_MEMO: usize = 256;

#[derive(Debug, Clone)]
enum Node {
    Object(Vec<(Vec<u8>, u32)>),
    Array(u32),
    String,
    Number,
    Boolean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Frame {
    Object { node: u32, idx: u32 },
    Array { item: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Num {
    Minus,
    Zero,
    Int,
    Dot,
    Frac,
    E,
    ESign,
    Exp,
}

impl Num {
    fn next(self, b: u8) -> Option<Num> {
        use Num::*;
        let digit = b.is_ascii_digit();
        Some(match (self, b) {
            (Minus, b'0') => Zero,
            (Minus, _) if digit => Int,
            (Zero | Int, b'.') => Dot,
            (Zero | Int | Frac, b'e' | b'E') => E,
            (Int, _) if digit => Int,
            (Dot | Frac, _) if digit => Frac,
            (E, b'+' | b'-') => ESign,
            (E | ESign | Exp, _) if digit => Exp,
            _ => return None,
        })
    }

    fn accepting(self) -> bool {
        matches!(self, Num::Zero | Num::Int | Num::Frac | Num::Exp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Str {
    Plain,
    Escape,
    /// `left` hex digits still due; `low` restricts the next digit to 0-7
    /// (after a leading D, to keep out surrogates).
    Hex {
        left: u8,
        low: bool,
    },
    Utf8 {
        need: u8,
        lo: u8,
        hi: u8,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Mode {
    Start,
    Value(u32),
    ObjAfterOpen,
    ObjBeforeKey,
    ObjKey(u32),
    ObjAfterKey,
    ObjAfterValue,
    ArrAfterOpen,
    ArrAfterValue,
    Str(Str),
    Num(Num),
    Lit { word: u8, pos: u8 },
    Done,
}

const WORDS: [&[u8]; 2] = [b"true", b"false"];

fn is_ws(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r')
}

/// Parser position of a [`FormatEnforcer`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EnforcerState {
    frames: Vec<Frame>,
    mode: Mode,
    finished: bool,
}

impl EnforcerState {
    pub fn depth(&self) -> usize {
        self.frames.len()
    }
}

pub struct FormatEnforcer {
    vocab: Arc<Vocabulary>,
    nodes: Vec<Node>,
    root: u32,
    trie: TokenTrie,
    memo: Option<Mutex<LruCache<EnforcerState, Arc<TokenMask>>>>,
    empty: Arc<TokenMask>,
}

impl std::fmt::Debug for FormatEnforcer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FormatEnforcer")
            .field("nodes", &self.nodes)
            .field("memo", &self.memo.is_some())
            .finish()
    }
}

fn lower(nodes: &mut Vec<Node>, s: &SchemaNode) -> u32 {
    let node = match s {
        SchemaNode::String => Node::String,
        SchemaNode::Number => Node::Number,
        SchemaNode::Boolean => Node::Boolean,
        SchemaNode::Array(item) => Node::Array(lower(nodes, item)),
        SchemaNode::Object(props) => Node::Object(
            props
                .iter()
                .map(|(k, v)| (encode_key(k).into_bytes(), lower(nodes, v)))
                .collect(),
        ),
    };
    nodes.push(node);
    (nodes.len() - 1) as u32
}

impl FormatEnforcer {
    pub fn new(schema: &SchemaNode, vocab: Arc<Vocabulary>) -> Self {
        Self::with_memo(schema, vocab, DEFAULT_ENFORCER_MEMO)
    }

    /// `memo` is the number of recent state masks kept; 0 disables.
    pub fn with_memo(schema: &SchemaNode, vocab: Arc<Vocabulary>, memo: usize) -> Self {
        let mut nodes = Vec::new();
        let root = lower(&mut nodes, schema);
        Self {
            trie: TokenTrie::new(&vocab),
            empty: Arc::new(TokenMask::empty(vocab.len())),
            memo: NonZeroUsize::new(memo).map(|n| Mutex::new(LruCache::new(n))),
            vocab,
            nodes,
            root,
        }
    }

    /// The state after `b`, or `None` when no conforming document has the
    /// extended prefix.
    pub fn char_advance(&self, state: &EnforcerState, b: u8) -> Option<EnforcerState> {
        if state.finished {
            return None;
        }
        let mut s = state.clone();
        self.step(&mut s, b).then_some(s)
    }

    /// True when the bytes so far form a complete document.
    pub fn can_end(&self, state: &EnforcerState) -> bool {
        !state.finished
            && match state.mode {
                Mode::Done => true,
                Mode::Num(n) => state.frames.is_empty() && n.accepting(),
                _ => false,
            }
    }

    fn complete(&self, st: &mut EnforcerState) {
        st.mode = match st.frames.last() {
            None => Mode::Done,
            Some(Frame::Object { .. }) => Mode::ObjAfterValue,
            Some(Frame::Array { .. }) => Mode::ArrAfterValue,
        };
    }

    fn begin_value(&self, st: &mut EnforcerState, node: u32, b: u8) -> bool {
        st.mode = match (&self.nodes[node as usize], b) {
            (Node::Object(_), b'{') => {
                st.frames.push(Frame::Object { node, idx: 0 });
                Mode::ObjAfterOpen
            }
            (Node::Array(item), b'[') => {
                st.frames.push(Frame::Array { item: *item });
                Mode::ArrAfterOpen
            }
            (Node::String, b'"') => Mode::Str(Str::Plain),
            (Node::Number, b'-') => Mode::Num(Num::Minus),
            (Node::Number, b'0') => Mode::Num(Num::Zero),
            (Node::Number, b'1'..=b'9') => Mode::Num(Num::Int),
            (Node::Boolean, b't') => Mode::Lit { word: 0, pos: 1 },
            (Node::Boolean, b'f') => Mode::Lit { word: 1, pos: 1 },
            _ => return false,
        };
        true
    }

    fn object(&self, st: &EnforcerState) -> (&[(Vec<u8>, u32)], u32) {
        match st.frames.last() {
            Some(&Frame::Object { node, idx }) => match &self.nodes[node as usize] {
                Node::Object(props) => (props, idx),
                _ => unreachable!("object frame on a non-object node"),
            },
            _ => unreachable!("object mode without an object frame"),
        }
    }

    fn step(&self, st: &mut EnforcerState, b: u8) -> bool {
        loop {
            match st.mode {
                Mode::Start => return self.begin_value(st, self.root, b),
                Mode::Value(n) => return is_ws(b) || self.begin_value(st, n, b),
                Mode::ObjAfterOpen | Mode::ObjBeforeKey => {
                    if is_ws(b) {
                        return true;
                    }
                    let (props, _) = self.object(st);
                    if props.is_empty() {
                        if b == b'}' {
                            st.frames.pop();
                            self.complete(st);
                            return true;
                        }
                        return false;
                    }
                    if b == b'"' {
                        st.mode = Mode::ObjKey(1);
                        return true;
                    }
                    return false;
                }
                Mode::ObjKey(pos) => {
                    let (props, idx) = self.object(st);
                    let key = &props[idx as usize].0;
                    if key[pos as usize] != b {
                        return false;
                    }
                    st.mode = if pos as usize + 1 == key.len() {
                        Mode::ObjAfterKey
                    } else {
                        Mode::ObjKey(pos + 1)
                    };
                    return true;
                }
                Mode::ObjAfterKey => {
                    if is_ws(b) {
                        return true;
                    }
                    if b != b':' {
                        return false;
                    }
                    let (props, idx) = self.object(st);
                    st.mode = Mode::Value(props[idx as usize].1);
                    return true;
                }
                Mode::ObjAfterValue => {
                    if is_ws(b) {
                        return true;
                    }
                    let (props, idx) = self.object(st);
                    let last = idx as usize + 1 == props.len();
                    match b {
                        b',' if !last => {
                            if let Some(Frame::Object { idx, .. }) = st.frames.last_mut() {
                                *idx += 1;
                            }
                            st.mode = Mode::ObjBeforeKey;
                            return true;
                        }
                        b'}' if last => {
                            st.frames.pop();
                            self.complete(st);
                            return true;
                        }
                        _ => return false,
                    }
                }
                Mode::ArrAfterOpen | Mode::ArrAfterValue => {
                    if is_ws(b) {
                        return true;
                    }
                    let Some(&Frame::Array { item }) = st.frames.last() else {
                        unreachable!("array mode without an array frame")
                    };
                    match b {
                        b']' => {
                            st.frames.pop();
                            self.complete(st);
                            return true;
                        }
                        b',' if st.mode == Mode::ArrAfterValue => {
                            st.mode = Mode::Value(item);
                            // A value must follow the comma; whitespace is
                            // fine but `]` is not.
                            return true;
                        }
                        _ if st.mode == Mode::ArrAfterOpen => {
                            return self.begin_value(st, item, b);
                        }
                        _ => return false,
                    }
                }
                Mode::Str(s) => {
                    let next = match (s, b) {
                        (Str::Plain, b'"') => {
                            self.complete(st);
                            return true;
                        }
                        (Str::Plain, b'\\') => Str::Escape,
                        (Str::Plain, 0x00..=0x1f) => return false,
                        (Str::Plain, 0x20..=0x7f) => Str::Plain,
                        (Str::Plain, 0xc2..=0xdf) => Str::Utf8 {
                            need: 1,
                            lo: 0x80,
                            hi: 0xbf,
                        },
                        (Str::Plain, 0xe0) => Str::Utf8 {
                            need: 2,
                            lo: 0xa0,
                            hi: 0xbf,
                        },
                        (Str::Plain, 0xe1..=0xec | 0xee..=0xef) => Str::Utf8 {
                            need: 2,
                            lo: 0x80,
                            hi: 0xbf,
                        },
                        (Str::Plain, 0xed) => Str::Utf8 {
                            need: 2,
                            lo: 0x80,
                            hi: 0x9f,
                        },
                        (Str::Plain, 0xf0) => Str::Utf8 {
                            need: 3,
                            lo: 0x90,
                            hi: 0xbf,
                        },
                        (Str::Plain, 0xf1..=0xf3) => Str::Utf8 {
                            need: 3,
                            lo: 0x80,
                            hi: 0xbf,
                        },
                        (Str::Plain, 0xf4) => Str::Utf8 {
                            need: 3,
                            lo: 0x80,
                            hi: 0x8f,
                        },
                        (Str::Plain, _) => return false,
                        (Str::Escape, b'"' | b'\\' | b'n' | b't') => Str::Plain,
                        (Str::Escape, b'u') => Str::Hex {
                            left: 4,
                            low: false,
                        },
                        (Str::Escape, _) => return false,
                        (Str::Hex { left: 4, .. }, b'd' | b'D') => Str::Hex { left: 3, low: true },
                        (Str::Hex { low: true, .. }, b'0'..=b'7') => Str::Hex {
                            left: 2,
                            low: false,
                        },
                        (Str::Hex { low: true, .. }, _) => return false,
                        (Str::Hex { left, .. }, _) if b.is_ascii_hexdigit() => {
                            if left == 1 {
                                Str::Plain
                            } else {
                                Str::Hex {
                                    left: left - 1,
                                    low: false,
                                }
                            }
                        }
                        (Str::Hex { .. }, _) => return false,
                        (Str::Utf8 { need, lo, hi }, _) if (lo..=hi).contains(&b) => {
                            if need == 1 {
                                Str::Plain
                            } else {
                                Str::Utf8 {
                                    need: need - 1,
                                    lo: 0x80,
                                    hi: 0xbf,
                                }
                            }
                        }
                        (Str::Utf8 { .. }, _) => return false,
                    };
                    st.mode = Mode::Str(next);
                    return true;
                }
                Mode::Num(n) => match n.next(b) {
                    Some(m) => {
                        st.mode = Mode::Num(m);
                        return true;
                    }
                    None if n.accepting() => {
                        // The number ended; the byte belongs to what follows.
                        self.complete(st);
                        continue;
                    }
                    None => return false,
                },
                Mode::Lit { word, pos } => {
                    let w = WORDS[word as usize];
                    if w[pos as usize] != b {
                        return false;
                    }
                    if pos as usize + 1 == w.len() {
                        self.complete(st);
                    } else {
                        st.mode = Mode::Lit { word, pos: pos + 1 };
                    }
                    return true;
                }
                Mode::Done => return false,
            }
        }
    }

    fn compute_mask(&self, state: &EnforcerState) -> TokenMask {
        let mut mask = TokenMask::empty(self.vocab.len());
        self.trie.walk(
            state.clone(),
            |s, b| self.char_advance(s, b),
            |id, _| mask.set(id),
        );
        if self.can_end(state) {
            mask.set(self.vocab.eos_id());
        }
        mask
    }
}

impl Guide for FormatEnforcer {
    type State = EnforcerState;

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn start(&self) -> EnforcerState {
        EnforcerState {
            frames: Vec::new(),
            mode: Mode::Start,
            finished: false,
        }
    }

    fn mask(&self, state: &EnforcerState) -> Result<Arc<TokenMask>, ConstraintError> {
        if state.finished {
            return Ok(self.empty.clone());
        }
        if let Some(memo) = &self.memo {
            if let Some(m) = memo.lock().unwrap_or_else(|e| e.into_inner()).get(state) {
                return Ok(m.clone());
            }
        }
        let m = Arc::new(self.compute_mask(state));
        if let Some(memo) = &self.memo {
            memo.lock()
                .unwrap_or_else(|e| e.into_inner())
                .put(state.clone(), m.clone());
        }
        Ok(m)
    }

    fn advance(
        &self,
        state: &EnforcerState,
        token: TokenId,
    ) -> Result<EnforcerState, ConstraintError> {
        if state.finished {
            return Err(ConstraintError::Finished);
        }
        let bytes = self
            .vocab
            .token(token)
            .ok_or(ConstraintError::UnknownToken(token))?;
        if token == self.vocab.eos_id() {
            if !self.can_end(state) {
                return Err(ConstraintError::IllegalToken { token });
            }
            let mut done = state.clone();
            done.finished = true;
            return Ok(done);
        }
        if bytes.is_empty() {
            return Err(ConstraintError::IllegalToken { token });
        }
        let mut s = state.clone();
        for &b in bytes {
            if !self.step(&mut s, b) {
                return Err(ConstraintError::IllegalToken { token });
            }
        }
        Ok(s)
    }

    fn is_finished(&self, state: &EnforcerState) -> bool {
        state.finished
    }
}
