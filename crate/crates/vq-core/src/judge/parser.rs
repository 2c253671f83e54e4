//! Recursive-descent parser for arithmetic-literal answers.
//!
//! Grammar (informal):
//!   expr   := term (('+'|'-') term)*
//!   term   := factor (mulop? factor)*        mulop: '*' '/' \cdot \times \div
//!   factor := ('+'|'-')* power
//!   power  := atom ('^' factor)?
//!   atom   := number | \pi | \frac{expr}{expr} | \sqrt[expr]?{expr}
//!           | '(' expr ')' | '{' expr '}'
//!
//! A trailing percent sign divides by 100; trailing unit words, degree signs,
//! and `\text{...}` / `\mathrm{...}` wrappers are stripped. Single letters
//! A-E (bare, parenthesized, or with a trailing ')') are multiple-choice
//! letters. Anything unparseable degrades to normalized text; the function
//! is total.

use super::MathValue;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Percent,
    Pi,
    Frac,
    Sqrt,
    /// Unit-like word, from bare letters or a \text/\mathrm wrapper.
    Word(String),
}

fn lex(input: &str) -> Option<Vec<Tok>> {
    let chars: Vec<char> = input.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ch if ch.is_whitespace() => i += 1,
            '$' => i += 1, // math-mode delimiters are decoration
            '+' => {
                toks.push(Tok::Plus);
                i += 1;
            }
            '-' | '\u{2212}' => {
                toks.push(Tok::Minus);
                i += 1;
            }
            '*' | '\u{00d7}' | '\u{22c5}' => {
                toks.push(Tok::Star);
                i += 1;
            }
            '/' | '\u{00f7}' => {
                toks.push(Tok::Slash);
                i += 1;
            }
            '^' => {
                toks.push(Tok::Caret);
                i += 1;
            }
            '(' => {
                toks.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                toks.push(Tok::RParen);
                i += 1;
            }
            '{' => {
                toks.push(Tok::LBrace);
                i += 1;
            }
            '}' => {
                toks.push(Tok::RBrace);
                i += 1;
            }
            '[' => {
                toks.push(Tok::LBracket);
                i += 1;
            }
            ']' => {
                toks.push(Tok::RBracket);
                i += 1;
            }
            '%' => {
                toks.push(Tok::Percent);
                i += 1;
            }
            '\u{00b0}' => {
                toks.push(Tok::Word("deg".into()));
                i += 1;
            }
            '\u{03c0}' => {
                toks.push(Tok::Pi);
                i += 1;
            }
            '.' | '0'..='9' => {
                let mut num = String::new();
                while i < chars.len() {
                    let d = chars[i];
                    if d.is_ascii_digit() || d == '.' {
                        num.push(d);
                        i += 1;
                    } else if d == ','
                        && chars.len() > i + 3
                        && chars[i + 1..=i + 3].iter().all(|x| x.is_ascii_digit())
                        && chars.get(i + 4).map_or(true, |x| !x.is_ascii_digit())
                    {
                        // thousands separator
                        i += 1;
                    } else {
                        break;
                    }
                }
                toks.push(Tok::Num(num.parse().ok()?));
            }
            '\\' => {
                let mut j = i + 1;
                let mut name = String::new();
                while j < chars.len() && chars[j].is_ascii_alphabetic() {
                    name.push(chars[j]);
                    j += 1;
                }
                if name.is_empty() {
                    // escaped symbol, e.g. \% or \,
                    match chars.get(j) {
                        Some('%') => toks.push(Tok::Percent),
                        Some('{') => toks.push(Tok::LBrace),
                        Some('}') => toks.push(Tok::RBrace),
                        Some(',') | Some(';') | Some('!') | Some(':') => {}
                        _ => return None,
                    }
                    i = j + 1;
                    continue;
                }
                i = j;
                match name.as_str() {
                    "frac" | "dfrac" | "tfrac" => toks.push(Tok::Frac),
                    "sqrt" => toks.push(Tok::Sqrt),
                    "pi" => toks.push(Tok::Pi),
                    "cdot" | "times" => toks.push(Tok::Star),
                    "div" => toks.push(Tok::Slash),
                    "left" | "right" | "quad" | "qquad" => {}
                    "degree" | "circ" => toks.push(Tok::Word("deg".into())),
                    "text" | "mathrm" | "textrm" | "mbox" => {
                        // capture {...} content as a unit word
                        while i < chars.len() && chars[i].is_whitespace() {
                            i += 1;
                        }
                        if chars.get(i) != Some(&'{') {
                            return None;
                        }
                        i += 1;
                        let mut content = String::new();
                        while i < chars.len() && chars[i] != '}' {
                            content.push(chars[i]);
                            i += 1;
                        }
                        if chars.get(i) != Some(&'}') {
                            return None;
                        }
                        i += 1;
                        let trimmed = content.trim();
                        if !trimmed.is_empty() {
                            toks.push(Tok::Word(trimmed.to_string()));
                        }
                    }
                    _ => return None,
                }
            }
            ch if ch.is_alphabetic() => {
                let mut word = String::new();
                while i < chars.len() && chars[i].is_alphabetic() {
                    word.push(chars[i]);
                    i += 1;
                }
                toks.push(Tok::Word(word));
            }
            _ => return None,
        }
    }
    Some(toks)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok) -> Option<()> {
        if self.next()? == tok {
            Some(())
        } else {
            None
        }
    }

    fn expr(&mut self) -> Option<f64> {
        let mut value = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    value += self.term()?;
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    value -= self.term()?;
                }
                _ => return Some(value),
            }
        }
    }

    fn starts_factor(&self) -> bool {
        matches!(
            self.peek(),
            Some(Tok::Num(_)) | Some(Tok::Pi) | Some(Tok::Frac) | Some(Tok::Sqrt)
                | Some(Tok::LParen) | Some(Tok::LBrace)
        )
    }

    fn term(&mut self) -> Option<f64> {
        let mut value = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    value *= self.factor()?;
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    value /= self.factor()?;
                }
                // implicit multiplication, e.g. "2\pi" or "3\sqrt{2}"
                _ if self.starts_factor() => value *= self.factor()?,
                _ => return Some(value),
            }
        }
    }

    fn factor(&mut self) -> Option<f64> {
        let mut sign = 1.0;
        loop {
            match self.peek() {
                Some(Tok::Minus) => {
                    sign = -sign;
                    self.pos += 1;
                }
                Some(Tok::Plus) => self.pos += 1,
                _ => break,
            }
        }
        Some(sign * self.power()?)
    }

    fn power(&mut self) -> Option<f64> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let exp = self.factor()?;
            Some(base.powf(exp))
        } else {
            Some(base)
        }
    }

    fn group(&mut self) -> Option<f64> {
        // brace-delimited expression, or a single following atom (\frac12)
        if self.peek() == Some(&Tok::LBrace) {
            self.pos += 1;
            let v = self.expr()?;
            self.expect(Tok::RBrace)?;
            Some(v)
        } else {
            self.atom()
        }
    }

    fn atom(&mut self) -> Option<f64> {
        match self.next()? {
            Tok::Num(v) => Some(v),
            Tok::Pi => Some(std::f64::consts::PI),
            Tok::Frac => {
                let num = self.group()?;
                let den = self.group()?;
                Some(num / den)
            }
            Tok::Sqrt => {
                let degree = if self.peek() == Some(&Tok::LBracket) {
                    self.pos += 1;
                    let d = self.expr()?;
                    self.expect(Tok::RBracket)?;
                    d
                } else {
                    2.0
                };
                let radicand = self.group()?;
                Some(radicand.powf(1.0 / degree))
            }
            Tok::LParen => {
                let v = self.expr()?;
                self.expect(Tok::RParen)?;
                Some(v)
            }
            Tok::LBrace => {
                let v = self.expr()?;
                self.expect(Tok::RBrace)?;
                Some(v)
            }
            _ => None,
        }
    }

    /// Consumes trailing percent/unit decoration; returns the percent count.
    fn trailing(&mut self) -> Option<u32> {
        let mut percents = 0;
        while let Some(tok) = self.peek() {
            match tok {
                Tok::Percent => {
                    percents += 1;
                    self.pos += 1;
                }
                Tok::Word(_) => {
                    self.pos += 1;
                    // allow a unit exponent like cm^2
                    if self.peek() == Some(&Tok::Caret) {
                        self.pos += 1;
                        match self.next() {
                            Some(Tok::Num(_)) => {}
                            _ => return None,
                        }
                    }
                }
                _ => return None,
            }
        }
        if percents <= 1 {
            Some(percents)
        } else {
            None
        }
    }
}

fn try_choice(s: &str) -> Option<char> {
    let t = s.trim();
    let t = t.strip_suffix(')').unwrap_or(t);
    let t = t.strip_prefix('(').unwrap_or(t);
    let mut chars = t.trim().chars();
    let c = chars.next()?;
    if chars.next().is_some() {
        return None;
    }
    let upper = c.to_ascii_uppercase();
    if ('A'..='E').contains(&upper) {
        Some(upper)
    } else {
        None
    }
}

fn normalize_text(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Parses an answer string into its canonical value. Total: anything outside
/// the arithmetic grammar becomes normalized text.
pub fn parse_math(expr: &str) -> MathValue {
    let trimmed = expr.trim().trim_matches('$').trim();
    if let Some(letter) = try_choice(trimmed) {
        return MathValue::Choice(letter);
    }
    if let Some(toks) = lex(trimmed) {
        if !toks.is_empty() {
            let mut parser = Parser { toks, pos: 0 };
            if let Some(value) = parser.expr() {
                if let Some(percents) = parser.trailing() {
                    let value = if percents == 1 { value / 100.0 } else { value };
                    if value.is_finite() {
                        return MathValue::Number(value);
                    }
                }
            }
        }
    }
    MathValue::Text(normalize_text(expr))
}
