//! Parser for the supported regex subset.

use super::RegexError;

pub(crate) const MAX_SCALAR: u32 = 0x10FFFF;
const SURROGATES: (u32, u32) = (0xD800, 0xDFFF);
pub(crate) const MAX_REPEAT: u32 = 1000;

/// Set of Unicode scalar values as sorted, disjoint, non-adjacent ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct CharClass(pub Vec<(u32, u32)>);

impl CharClass {
    pub fn single(c: u32) -> Self {
        Self(vec![(c, c)])
    }

    pub fn from_ranges(mut ranges: Vec<(u32, u32)>) -> Self {
        ranges.sort_unstable();
        let mut out: Vec<(u32, u32)> = Vec::with_capacity(ranges.len());
        for (lo, hi) in ranges {
            match out.last_mut() {
                Some(last) if lo <= last.1.saturating_add(1) => last.1 = last.1.max(hi),
                _ => out.push((lo, hi)),
            }
        }
        let mut cls = Self(out);
        cls.remove_surrogates();
        cls
    }

    fn remove_surrogates(&mut self) {
        let mut out = Vec::with_capacity(self.0.len() + 1);
        for &(lo, hi) in &self.0 {
            if hi < SURROGATES.0 || lo > SURROGATES.1 {
                out.push((lo, hi));
                continue;
            }
            if lo < SURROGATES.0 {
                out.push((lo, SURROGATES.0 - 1));
            }
            if hi > SURROGATES.1 {
                out.push((SURROGATES.1 + 1, hi));
            }
        }
        self.0 = out;
    }

    pub fn negate(&self) -> Self {
        let mut out = Vec::new();
        let mut next = 0u32;
        for &(lo, hi) in &self.0 {
            if lo > next {
                out.push((next, lo - 1));
            }
            next = hi + 1;
        }
        if next <= MAX_SCALAR {
            out.push((next, MAX_SCALAR));
        }
        Self::from_ranges(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Ast {
    Empty,
    Class(CharClass),
    Concat(Vec<Ast>),
    Alt(Vec<Ast>),
    Repeat {
        inner: Box<Ast>,
        min: u32,
        max: Option<u32>,
    },
}

fn digit_class() -> CharClass {
    CharClass::from_ranges(vec![(b'0' as u32, b'9' as u32)])
}

fn word_class() -> CharClass {
    CharClass::from_ranges(vec![
        (b'0' as u32, b'9' as u32),
        (b'A' as u32, b'Z' as u32),
        (b'_' as u32, b'_' as u32),
        (b'a' as u32, b'z' as u32),
    ])
}

fn space_class() -> CharClass {
    CharClass::from_ranges(vec![(0x09, 0x0D), (0x20, 0x20)])
}

pub(crate) fn any_but_newline() -> CharClass {
    CharClass::single(b'\n' as u32).negate()
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    src: &'a str,
}

pub(crate) fn parse(pattern: &str) -> Result<Ast, RegexError> {
    let mut p = Parser {
        chars: pattern.chars().collect(),
        pos: 0,
        src: pattern,
    };
    if p.peek() == Some('^') {
        p.pos += 1;
    }
    let ast = p.alternation(0)?;
    if p.pos < p.chars.len() {
        // Only an unmatched ')' can stop the top-level alternation early.
        return Err(p.syntax("unmatched ')'"));
    }
    Ok(ast)
}

impl Parser<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        Some(c)
    }

    fn syntax(&self, msg: &str) -> RegexError {
        RegexError::Syntax {
            pos: self.pos,
            msg: format!("{msg} in {:?}", self.src),
        }
    }

    fn unsupported(&self, what: &str) -> RegexError {
        RegexError::UnsupportedFeature {
            feature: what.to_string(),
            pos: self.pos,
        }
    }

    fn at_trailing_dollar(&self) -> bool {
        self.peek() == Some('$') && self.pos + 1 == self.chars.len()
    }

    fn alternation(&mut self, depth: usize) -> Result<Ast, RegexError> {
        if depth > 200 {
            return Err(self.syntax("nesting too deep"));
        }
        let mut alts = vec![self.concat(depth)?];
        while self.peek() == Some('|') {
            self.pos += 1;
            alts.push(self.concat(depth)?);
        }
        Ok(if alts.len() == 1 {
            alts.pop().unwrap()
        } else {
            Ast::Alt(alts)
        })
    }

    fn concat(&mut self, depth: usize) -> Result<Ast, RegexError> {
        let mut items = Vec::new();
        while let Some(c) = self.peek() {
            if c == '|' || c == ')' {
                break;
            }
            if self.at_trailing_dollar() {
                self.pos += 1;
                break;
            }
            let atom = self.atom(depth)?;
            let atom = self.repetition(atom)?;
            items.push(atom);
        }
        Ok(match items.len() {
            0 => Ast::Empty,
            1 => items.pop().unwrap(),
            _ => Ast::Concat(items),
        })
    }

    fn repetition(&mut self, atom: Ast) -> Result<Ast, RegexError> {
        let (min, max) = match self.peek() {
            Some('*') => (0, None),
            Some('+') => (1, None),
            Some('?') => (0, Some(1)),
            Some('{') => self.counted()?,
            _ => return Ok(atom),
        };
        self.pos += 1;
        match self.peek() {
            Some('?') => return Err(self.unsupported("lazy quantifier")),
            Some('+') => return Err(self.unsupported("possessive quantifier")),
            Some('*') | Some('{') => return Err(self.syntax("repetition of a repetition")),
            _ => {}
        }
        Ok(Ast::Repeat {
            inner: Box::new(atom),
            min,
            max,
        })
    }

    /// Parses `{m}`, `{m,}` or `{m,n}` leaving `pos` on the closing brace.
    fn counted(&mut self) -> Result<(u32, Option<u32>), RegexError> {
        let start = self.pos;
        self.pos += 1;
        let min = self.number()?;
        let Some(min) = min else {
            self.pos = start;
            return Err(self.syntax("malformed counted repetition"));
        };
        let max = if self.peek() == Some(',') {
            self.pos += 1;
            self.number()?
        } else {
            Some(min)
        };
        let open_ended = self.chars[self.pos - 1] == ',';
        if self.peek() != Some('}') {
            self.pos = start;
            return Err(self.syntax("malformed counted repetition"));
        }
        let max = if open_ended { None } else { max };
        if let Some(m) = max {
            if m < min {
                return Err(self.syntax("repetition bounds out of order"));
            }
        }
        if min > MAX_REPEAT || max.is_some_and(|m| m > MAX_REPEAT) {
            return Err(self.unsupported("repetition count above 1000"));
        }
        Ok((min, max))
    }

    fn number(&mut self) -> Result<Option<u32>, RegexError> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Ok(None);
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse::<u32>()
            .map(Some)
            .map_err(|_| self.syntax("repetition count too large"))
    }

    fn atom(&mut self, depth: usize) -> Result<Ast, RegexError> {
        let c = self.bump().ok_or_else(|| self.syntax("unexpected end"))?;
        match c {
            '(' => self.group(depth),
            '[' => Ok(Ast::Class(self.class()?)),
            '.' => Ok(Ast::Class(any_but_newline())),
            '\\' => match self.escape(false)? {
                Escaped::Char(c) => Ok(Ast::Class(CharClass::single(c))),
                Escaped::Class(cls) => Ok(Ast::Class(cls)),
            },
            '^' | '$' => {
                self.pos -= 1;
                Err(self.unsupported("anchor inside pattern"))
            }
            '*' | '+' | '?' => {
                self.pos -= 1;
                Err(self.syntax("repetition operator with nothing to repeat"))
            }
            '{' => {
                self.pos -= 1;
                Err(self.syntax("counted repetition with nothing to repeat"))
            }
            c => Ok(Ast::Class(CharClass::single(c as u32))),
        }
    }

    fn group(&mut self, depth: usize) -> Result<Ast, RegexError> {
        if self.peek() == Some('?') {
            match (self.peek_at(1), self.peek_at(2)) {
                (Some(':'), _) => self.pos += 2,
                (Some('='), _) | (Some('!'), _) => return Err(self.unsupported("lookaround")),
                (Some('<'), Some('=')) | (Some('<'), Some('!')) => {
                    return Err(self.unsupported("lookaround"))
                }
                (Some('<'), _) | (Some('P'), Some('<')) => {
                    // Named group: captures are irrelevant to the language.
                    while let Some(c) = self.bump() {
                        if c == '>' {
                            break;
                        }
                    }
                    if self.chars.get(self.pos - 1) != Some(&'>') {
                        return Err(self.syntax("unterminated group name"));
                    }
                }
                _ => return Err(self.unsupported("inline flags")),
            }
        }
        let inner = self.alternation(depth + 1)?;
        if self.bump() != Some(')') {
            return Err(self.syntax("unclosed group"));
        }
        Ok(inner)
    }

    fn class(&mut self) -> Result<CharClass, RegexError> {
        let negated = if self.peek() == Some('^') {
            self.pos += 1;
            true
        } else {
            false
        };
        let mut ranges = Vec::new();
        let mut first = true;
        loop {
            let c = self
                .bump()
                .ok_or_else(|| self.syntax("unclosed character class"))?;
            let lo = match c {
                ']' if !first => break,
                '[' => {
                    self.pos -= 1;
                    return Err(self.unsupported("nested character class"));
                }
                '\\' => match self.escape(true)? {
                    Escaped::Char(c) => c,
                    Escaped::Class(cls) => {
                        ranges.extend(cls.0);
                        first = false;
                        continue;
                    }
                },
                c => c as u32,
            };
            first = false;
            if self.peek() == Some('-') && self.peek_at(1).is_some_and(|c| c != ']') {
                self.pos += 1;
                let hi = match self.bump() {
                    Some('\\') => match self.escape(true)? {
                        Escaped::Char(c) => c,
                        Escaped::Class(_) => return Err(self.syntax("class escape as range bound")),
                    },
                    Some('[') => return Err(self.unsupported("nested character class")),
                    Some(c) => c as u32,
                    None => return Err(self.syntax("unclosed character class")),
                };
                if hi < lo {
                    return Err(self.syntax("character range out of order"));
                }
                ranges.push((lo, hi));
            } else {
                ranges.push((lo, lo));
            }
        }
        let cls = CharClass::from_ranges(ranges);
        Ok(if negated { cls.negate() } else { cls })
    }

    fn escape(&mut self, in_class: bool) -> Result<Escaped, RegexError> {
        let c = self
            .bump()
            .ok_or_else(|| self.syntax("trailing backslash"))?;
        Ok(match c {
            'd' => Escaped::Class(digit_class()),
            'D' => Escaped::Class(digit_class().negate()),
            'w' => Escaped::Class(word_class()),
            'W' => Escaped::Class(word_class().negate()),
            's' => Escaped::Class(space_class()),
            'S' => Escaped::Class(space_class().negate()),
            'n' => Escaped::Char(b'\n' as u32),
            't' => Escaped::Char(b'\t' as u32),
            'r' => Escaped::Char(b'\r' as u32),
            'f' => Escaped::Char(0x0C),
            'v' => Escaped::Char(0x0B),
            'a' => Escaped::Char(0x07),
            'x' => Escaped::Char(self.hex_escape(2)?),
            'u' => Escaped::Char(self.hex_escape(4)?),
            '1'..='9' => return Err(self.unsupported("backreference")),
            'k' => return Err(self.unsupported("backreference")),
            'b' | 'B' | 'A' | 'z' | 'Z' | 'G' if !in_class => {
                return Err(self.unsupported("assertion"))
            }
            'p' | 'P' => return Err(self.unsupported("unicode property class")),
            c if c.is_ascii() && !c.is_ascii_alphanumeric() => Escaped::Char(c as u32),
            _ => {
                self.pos -= 1;
                return Err(self.syntax("unknown escape"));
            }
        })
    }

    /// `\xHH`, `\uHHHH` or the braced `\x{...}` form.
    fn hex_escape(&mut self, width: usize) -> Result<u32, RegexError> {
        let digits: String = if self.peek() == Some('{') {
            self.pos += 1;
            let mut s = String::new();
            loop {
                match self.bump() {
                    Some('}') => break,
                    Some(c) if c.is_ascii_hexdigit() && s.len() < 8 => s.push(c),
                    _ => return Err(self.syntax("malformed hex escape")),
                }
            }
            s
        } else {
            let mut s = String::new();
            for _ in 0..width {
                match self.bump() {
                    Some(c) if c.is_ascii_hexdigit() => s.push(c),
                    _ => return Err(self.syntax("malformed hex escape")),
                }
            }
            s
        };
        let v =
            u32::from_str_radix(&digits, 16).map_err(|_| self.syntax("malformed hex escape"))?;
        if v > MAX_SCALAR || (SURROGATES.0..=SURROGATES.1).contains(&v) {
            return Err(self.syntax("escape is not a Unicode scalar value"));
        }
        Ok(v)
    }
}

enum Escaped {
    Char(u32),
    Class(CharClass),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negation_skips_surrogates() {
        let cls = CharClass::single('a' as u32).negate();
        assert_eq!(cls.0, vec![(0, 0x60), (0x62, 0xD7FF), (0xE000, MAX_SCALAR)]);
    }

    #[test]
    fn rejects_advanced_features() {
        for p in [
            "(?=x)", "(?!x)", "(?<=x)a", r"(a)\1", "a*?", "(?i)a", r"\bx", "a^b",
        ] {
            assert!(
                matches!(parse(p), Err(RegexError::UnsupportedFeature { .. })),
                "{p}"
            );
        }
        for p in ["(a", "a)", "[a", "*", "a{3,2}", r"\q", "a{x}"] {
            assert!(matches!(parse(p), Err(RegexError::Syntax { .. })), "{p}");
        }
    }

    #[test]
    fn edge_anchors_are_accepted() {
        assert_eq!(parse("^a$").unwrap(), parse("a").unwrap());
    }
}
