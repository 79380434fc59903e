use crate::error::{GammError, Result};

use super::{Family, ModelSpec, SmoothKind, SmoothTerm};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Tilde,
    Plus,
    LParen,
    RParen,
    Comma,
    Equals,
    Other(char),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(s) => format!("number `{s}`"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::Tilde => "`~`".into(),
            Tok::Plus => "`+`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Equals => "`=`".into(),
            Tok::Other(c) => format!("`{c}`"),
            Tok::Eof => "end of input".into(),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = text[i..].chars().next().expect("in bounds");
        let start = i;
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        let tok = match c {
            '~' => Tok::Tilde,
            '+' => Tok::Plus,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            ',' => Tok::Comma,
            '=' => Tok::Equals,
            '"' => {
                let rest = &text[i + 1..];
                let end = rest.find('"').ok_or_else(|| GammError::Syntax {
                    offset: start,
                    expected: vec!["closing `\"`".into()],
                    found: "end of input".into(),
                })?;
                i += end + 2;
                out.push((start, Tok::Str(rest[..end].to_string())));
                continue;
            }
            c if c.is_ascii_digit() => {
                let len = text[i..]
                    .find(|ch: char| !(ch.is_ascii_digit() || ch == '.'))
                    .unwrap_or(text.len() - i);
                i += len;
                out.push((start, Tok::Number(text[start..i].to_string())));
                continue;
            }
            c if c.is_alphabetic() || c == '_' || c == '.' => {
                let len = text[i..]
                    .find(|ch: char| !(ch.is_alphanumeric() || ch == '_' || ch == '.'))
                    .unwrap_or(text.len() - i);
                i += len;
                out.push((start, Tok::Ident(text[start..i].to_string())));
                continue;
            }
            other => Tok::Other(other),
        };
        i += c.len_utf8();
        out.push((start, tok));
    }
    out.push((text.len(), Tok::Eof));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> (usize, Tok) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &[&str]) -> Result<T> {
        Err(GammError::Syntax {
            offset: self.offset(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        })
    }

    fn expect(&mut self, tok: Tok, name: &str) -> Result<usize> {
        if *self.peek() == tok {
            Ok(self.bump().0)
        } else {
            self.error(&[name])
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek() {
            Tok::Ident(_) => match self.bump().1 {
                Tok::Ident(s) => Ok(s),
                _ => unreachable!(),
            },
            _ => self.error(&["identifier"]),
        }
    }

    fn formula(&mut self) -> Result<ModelSpec> {
        let response = self.ident()?;
        self.expect(Tok::Tilde, "`~`")?;
        let mut parametric = Vec::new();
        let mut smooths = Vec::new();
        let mut intercept_only = false;
        loop {
            let at = self.offset();
            match self.peek().clone() {
                Tok::Number(n) if n == "1" => {
                    self.bump();
                    intercept_only = true;
                }
                Tok::Ident(name) => {
                    self.bump();
                    if *self.peek() == Tok::LParen {
                        let kind = match name.as_str() {
                            "s" => false,
                            "te" => true,
                            other => {
                                return Err(GammError::Semantic(format!(
                                    "unsupported function `{other}(...)` at byte {at}; only s() and te() are allowed"
                                )))
                            }
                        };
                        smooths.push(self.smooth(kind, at)?);
                    } else {
                        parametric.push(name);
                    }
                }
                _ => return self.error(&["identifier", "`s(`", "`te(`", "`1`"]),
            }
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                }
                Tok::Eof => break,
                _ => return self.error(&["`+`", "end of input"]),
            }
        }
        if intercept_only && !(parametric.is_empty() && smooths.is_empty()) {
            return Err(GammError::Semantic(
                "the intercept literal `1` may only appear alone".into(),
            ));
        }
        let spec = ModelSpec {
            response,
            parametric_terms: parametric,
            smooth_terms: smooths,
            rho: 0.0,
            ar_start_column: None,
            family: Family::Gaussian,
        };
        spec.check_invariants()?;
        Ok(spec)
    }

    fn smooth(&mut self, tensor: bool, at: usize) -> Result<SmoothTerm> {
        self.expect(Tok::LParen, "`(`")?;
        let mut covariates = Vec::new();
        let mut by = None;
        let mut bs: Option<String> = None;
        let mut k = None;
        let mut m = None;
        let mut seen_option = false;
        loop {
            let name_at = self.offset();
            let name = self.ident()?;
            if *self.peek() == Tok::Equals {
                self.bump();
                seen_option = true;
                let value_at = self.offset();
                let (_, value) = self.bump();
                let dup = |opt: &str| {
                    Err(GammError::Semantic(format!(
                        "option `{opt}` given twice at byte {name_at}"
                    )))
                };
                match (name.as_str(), value) {
                    ("by", Tok::Ident(v)) => {
                        if by.replace(v).is_some() {
                            return dup("by");
                        }
                    }
                    ("bs", Tok::Str(v)) => {
                        if !matches!(v.as_str(), "fs" | "re") {
                            return Err(GammError::Semantic(format!(
                                "unknown basis code bs=\"{v}\" at byte {value_at}; expected \"fs\" or \"re\""
                            )));
                        }
                        if bs.replace(v).is_some() {
                            return dup("bs");
                        }
                    }
                    ("k", Tok::Number(v)) => {
                        let parsed = v.parse::<usize>().map_err(|_| GammError::Syntax {
                            offset: value_at,
                            expected: vec!["integer".into()],
                            found: format!("number `{v}`"),
                        })?;
                        if k.replace(parsed).is_some() {
                            return dup("k");
                        }
                    }
                    ("m", Tok::Number(v)) => {
                        let parsed = v.parse::<u32>().map_err(|_| GammError::Syntax {
                            offset: value_at,
                            expected: vec!["integer".into()],
                            found: format!("number `{v}`"),
                        })?;
                        if m.replace(parsed).is_some() {
                            return dup("m");
                        }
                    }
                    ("by", t) | ("bs", t) | ("k", t) | ("m", t) => {
                        let expected = match name.as_str() {
                            "by" => "factor name",
                            "bs" => "quoted basis code",
                            _ => "integer",
                        };
                        return Err(GammError::Syntax {
                            offset: value_at,
                            expected: vec![expected.into()],
                            found: t.describe(),
                        });
                    }
                    (other, _) => {
                        return Err(GammError::Semantic(format!(
                            "unknown smooth option `{other}` at byte {name_at}"
                        )))
                    }
                }
            } else {
                if seen_option {
                    return Err(GammError::Semantic(format!(
                        "covariate `{name}` at byte {name_at} follows keyword options"
                    )));
                }
                covariates.push(name);
            }
            match self.peek() {
                Tok::Comma => {
                    self.bump();
                }
                Tok::RParen => {
                    self.bump();
                    break;
                }
                _ => return self.error(&["`,`", "`)`"]),
            }
        }
        let kind = match (tensor, bs.as_deref()) {
            (true, None) => SmoothKind::Tensor,
            (true, Some(code)) => {
                return Err(GammError::Semantic(format!(
                    "te() at byte {at} does not accept bs=\"{code}\""
                )))
            }
            (false, None) => SmoothKind::Tprs,
            (false, Some("fs")) => SmoothKind::FactorSmooth,
            (false, Some(_)) => SmoothKind::RandomEffect,
        };
        SmoothTerm::new(kind, covariates, by, k, m)
    }
}

/// Parses a model formula. Whitespace is insignificant; term order is kept.
pub fn parse_formula(text: &str) -> Result<ModelSpec> {
    if text.trim().is_empty() {
        return Err(GammError::Syntax {
            offset: 0,
            expected: vec!["identifier".into()],
            found: "end of input".into(),
        });
    }
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    p.formula()
}
