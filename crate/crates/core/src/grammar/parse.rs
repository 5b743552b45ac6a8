use super::{Grammar, GrammarError, Production, Rule, Symbol};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Colon,
    Pipe,
    Semi,
    LParen,
    RParen,
    Star,
    Plus,
    Question,
    Str(Vec<u8>),
    Regex(String),
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
}

impl Lexer<'_> {
    fn err(&self, msg: impl Into<String>) -> GrammarError {
        GrammarError::Syntax {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn tokens(mut self) -> Result<Vec<(Tok, usize)>, GrammarError> {
        let mut out = Vec::new();
        while let Some(&c) = self.src.get(self.pos) {
            let line = self.line;
            match c {
                b'\n' => {
                    self.line += 1;
                    self.pos += 1;
                }
                b' ' | b'\t' | b'\r' => self.pos += 1,
                b'#' => {
                    while self.src.get(self.pos).is_some_and(|&c| c != b'\n') {
                        self.pos += 1;
                    }
                }
                b':' => {
                    self.pos += 1;
                    // Accept `::=` as a synonym for `:`.
                    if self.src[self.pos..].starts_with(b":=") {
                        self.pos += 2;
                    }
                    out.push((Tok::Colon, line));
                }
                b'|' => {
                    self.pos += 1;
                    out.push((Tok::Pipe, line));
                }
                b';' => {
                    self.pos += 1;
                    out.push((Tok::Semi, line));
                }
                b'(' => {
                    self.pos += 1;
                    out.push((Tok::LParen, line));
                }
                b')' => {
                    self.pos += 1;
                    out.push((Tok::RParen, line));
                }
                b'*' => {
                    self.pos += 1;
                    out.push((Tok::Star, line));
                }
                b'+' => {
                    self.pos += 1;
                    out.push((Tok::Plus, line));
                }
                b'?' => {
                    self.pos += 1;
                    out.push((Tok::Question, line));
                }
                b'"' => {
                    let s = self.string()?;
                    out.push((Tok::Str(s), line));
                }
                b'/' => {
                    let r = self.regex()?;
                    out.push((Tok::Regex(r), line));
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    let start = self.pos;
                    while self
                        .src
                        .get(self.pos)
                        .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
                    {
                        self.pos += 1;
                    }
                    let name = String::from_utf8(self.src[start..self.pos].to_vec()).unwrap();
                    out.push((Tok::Ident(name), line));
                }
                c => return Err(self.err(format!("unexpected character {:?}", c as char))),
            }
        }
        Ok(out)
    }

    fn hex(&mut self, n: usize) -> Result<u32, GrammarError> {
        let digits = self
            .src
            .get(self.pos..self.pos + n)
            .ok_or_else(|| self.err("truncated escape"))?;
        let s = std::str::from_utf8(digits).map_err(|_| self.err("bad hex escape"))?;
        let v = u32::from_str_radix(s, 16).map_err(|_| self.err("bad hex escape"))?;
        self.pos += n;
        Ok(v)
    }

    fn string(&mut self) -> Result<Vec<u8>, GrammarError> {
        self.pos += 1;
        let mut out = Vec::new();
        loop {
            let c = *self
                .src
                .get(self.pos)
                .ok_or_else(|| self.err("unterminated string literal"))?;
            self.pos += 1;
            match c {
                b'"' => return Ok(out),
                b'\n' => return Err(self.err("newline in string literal")),
                b'\\' => {
                    let e = *self
                        .src
                        .get(self.pos)
                        .ok_or_else(|| self.err("unterminated string literal"))?;
                    self.pos += 1;
                    match e {
                        b'"' => out.push(b'"'),
                        b'\\' => out.push(b'\\'),
                        b'/' => out.push(b'/'),
                        b'n' => out.push(b'\n'),
                        b't' => out.push(b'\t'),
                        b'r' => out.push(b'\r'),
                        b'b' => out.push(0x08),
                        b'f' => out.push(0x0c),
                        b'x' => out.push(self.hex(2)? as u8),
                        b'u' => {
                            let v = self.hex(4)?;
                            let ch = char::from_u32(v)
                                .ok_or_else(|| self.err("\\u escape is not a scalar value"))?;
                            let mut buf = [0u8; 4];
                            out.extend_from_slice(ch.encode_utf8(&mut buf).as_bytes());
                        }
                        other => {
                            return Err(self.err(format!("unknown escape \\{}", other as char)))
                        }
                    }
                }
                c => out.push(c),
            }
        }
    }

    fn regex(&mut self) -> Result<String, GrammarError> {
        self.pos += 1;
        let mut out = Vec::new();
        loop {
            let c = *self
                .src
                .get(self.pos)
                .ok_or_else(|| self.err("unterminated regex terminal"))?;
            self.pos += 1;
            match c {
                b'/' => break,
                b'\n' => return Err(self.err("newline in regex terminal")),
                b'\\' if self.src.get(self.pos) == Some(&b'/') => {
                    out.push(b'/');
                    self.pos += 1;
                }
                b'\\' => {
                    out.push(b'\\');
                    if let Some(&n) = self.src.get(self.pos) {
                        if n == b'\n' {
                            return Err(self.err("newline in regex terminal"));
                        }
                        out.push(n);
                        self.pos += 1;
                    }
                }
                c => out.push(c),
            }
        }
        if out.is_empty() {
            return Err(self.err("empty regex terminal"));
        }
        String::from_utf8(out).map_err(|_| self.err("regex terminal is not UTF-8"))
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    rules: Vec<Rule>,
    aux_counter: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn line(&self) -> usize {
        self.toks
            .get(self.pos)
            .or(self.toks.last())
            .map_or(1, |(_, l)| *l)
    }

    fn err(&self, msg: impl Into<String>) -> GrammarError {
        GrammarError::Syntax {
            line: self.line(),
            msg: msg.into(),
        }
    }

    fn at_rule_start(&self) -> bool {
        matches!(
            (self.toks.get(self.pos), self.toks.get(self.pos + 1)),
            (Some((Tok::Ident(_), _)), Some((Tok::Colon, _)))
        )
    }

    fn grammar(&mut self) -> Result<(), GrammarError> {
        while self.pos < self.toks.len() {
            if self.peek() == Some(&Tok::Semi) {
                self.pos += 1;
                continue;
            }
            let Some(Tok::Ident(name)) = self.peek().cloned() else {
                return Err(self.err("expected a rule name"));
            };
            self.pos += 1;
            if self.peek() != Some(&Tok::Colon) {
                return Err(self.err(format!("expected ':' after rule name `{name}`")));
            }
            self.pos += 1;
            // Reserve the slot so rules keep definition order ahead of the
            // auxiliary rules created while parsing the body.
            let slot = self.rules.len();
            self.rules.push(Rule {
                name: name.clone(),
                alts: Vec::new(),
            });
            let alts = self.alternatives(&name, true)?;
            self.rules[slot].alts = alts;
        }
        Ok(())
    }

    fn alternatives(&mut self, owner: &str, top: bool) -> Result<Vec<Production>, GrammarError> {
        let mut alts = vec![self.sequence(owner, top)?];
        while self.peek() == Some(&Tok::Pipe) {
            self.pos += 1;
            alts.push(self.sequence(owner, top)?);
        }
        Ok(alts)
    }

    fn sequence(&mut self, owner: &str, top: bool) -> Result<Production, GrammarError> {
        let mut items = Vec::new();
        let mut saw_any = false;
        loop {
            if top && self.at_rule_start() {
                break;
            }
            match self.peek() {
                None | Some(Tok::Pipe) | Some(Tok::Semi) | Some(Tok::RParen) => break,
                _ => {}
            }
            saw_any = true;
            let item = self.postfix(owner)?;
            if !matches!(&item, Symbol::Literal(b) if b.is_empty()) {
                items.push(item);
            }
        }
        if !saw_any {
            return Err(self.err(format!(
                "empty alternative in `{owner}`; write \"\" for an epsilon production"
            )));
        }
        Ok(items)
    }

    fn aux_name(&mut self, owner: &str, kind: &str) -> String {
        self.aux_counter += 1;
        format!("{owner}__{kind}{}", self.aux_counter)
    }

    fn add_aux(&mut self, name: String, alts: Vec<Production>) -> Symbol {
        self.rules.push(Rule {
            name: name.clone(),
            alts,
        });
        Symbol::Rule(name)
    }

    fn postfix(&mut self, owner: &str) -> Result<Symbol, GrammarError> {
        let mut sym = self.primary(owner)?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    let name = self.aux_name(owner, "rep");
                    sym = self.add_aux(name.clone(), vec![vec![sym, Symbol::Rule(name)], vec![]]);
                }
                Some(Tok::Plus) => {
                    self.pos += 1;
                    let rep = self.aux_name(owner, "rep");
                    let rep_sym = self.add_aux(
                        rep.clone(),
                        vec![vec![sym.clone(), Symbol::Rule(rep)], vec![]],
                    );
                    let name = self.aux_name(owner, "plus");
                    sym = self.add_aux(name, vec![vec![sym, rep_sym]]);
                }
                Some(Tok::Question) => {
                    self.pos += 1;
                    let name = self.aux_name(owner, "opt");
                    sym = self.add_aux(name, vec![vec![sym], vec![]]);
                }
                _ => return Ok(sym),
            }
        }
    }

    fn primary(&mut self, owner: &str) -> Result<Symbol, GrammarError> {
        let tok = self
            .peek()
            .cloned()
            .ok_or_else(|| self.err("unexpected end of grammar"))?;
        self.pos += 1;
        match tok {
            Tok::Ident(n) => Ok(Symbol::Rule(n)),
            Tok::Str(b) => Ok(Symbol::Literal(b)),
            Tok::Regex(r) => Ok(Symbol::Pattern(r)),
            Tok::LParen => {
                let alts = self.alternatives(owner, false)?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.err("expected ')'"));
                }
                self.pos += 1;
                let name = self.aux_name(owner, "grp");
                Ok(self.add_aux(name, alts))
            }
            other => Err(self.err(format!("unexpected {other:?}"))),
        }
    }
}

/// Parses and validates grammar text.
pub fn parse_grammar(text: &str) -> Result<Grammar, GrammarError> {
    let toks = Lexer {
        src: text.as_bytes(),
        pos: 0,
        line: 1,
    }
    .tokens()?;
    let mut p = Parser {
        toks,
        pos: 0,
        rules: Vec::new(),
        aux_counter: 0,
    };
    p.grammar()?;
    if p.rules.is_empty() {
        return Err(GrammarError::Syntax {
            line: 1,
            msg: "grammar has no rules".into(),
        });
    }
    let start = if p.rules.iter().any(|r| r.name == "start") {
        "start".to_string()
    } else {
        p.rules[0].name.clone()
    };
    Grammar::new(p.rules, start)
}
