//! Skill text format: lexer, recursive-descent parser and canonical printer.
//!
//! ```text
//! skill NAME {
//!     uses ROLE: "spec.json";
//!     phase NAME budget=INT [grasp=ROLE.LABEL] {
//!         Kind(role.label, ...[, theta][, key=value...]);
//!         ...
//!     }
//! }
//! ```
//!
//! `#` starts a comment running to end of line.

use super::{
    ControllerSpec, LiftedSkill, Overrides, RoleUse, SkillError, SkillPhase, ThetaValue,
    MAX_PRIORITIES,
};
use crate::controllers::{Binding, ControllerClass, ControllerKind, GRIPPER_ROLE};
use std::collections::BTreeSet;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    Sym(char),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, expected: &str) -> SkillError {
    SkillError::SyntaxError {
        line,
        col,
        expected: expected.to_string(),
    }
}

fn lex(text: &str) -> Result<Vec<Token>, SkillError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                let ch = chars[i];
                advance(&mut i, &mut line, &mut col, ch);
            }
            continue;
        }
        let (tl, tc) = (line, col);
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                let ch = chars[i];
                s.push(ch);
                advance(&mut i, &mut line, &mut col, ch);
            }
            out.push(Token { tok: Tok::Ident(s), line: tl, col: tc });
        } else if c.is_ascii_digit() || c == '-' || c == '+' {
            let mut s = String::new();
            let take = |s: &mut String, i: &mut usize, line: &mut usize, col: &mut usize| {
                s.push(chars[*i]);
                advance(i, line, col, chars[*i]);
            };
            if c == '-' || c == '+' {
                take(&mut s, &mut i, &mut line, &mut col);
            }
            let digits = |s: &mut String, i: &mut usize, line: &mut usize, col: &mut usize| {
                let start = *i;
                while *i < chars.len() && chars[*i].is_ascii_digit() {
                    take(s, i, line, col);
                }
                *i > start
            };
            if !digits(&mut s, &mut i, &mut line, &mut col) {
                return Err(syntax(line, col, "digit"));
            }
            if i < chars.len() && chars[i] == '.' {
                take(&mut s, &mut i, &mut line, &mut col);
                if !digits(&mut s, &mut i, &mut line, &mut col) {
                    return Err(syntax(line, col, "digit after decimal point"));
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                take(&mut s, &mut i, &mut line, &mut col);
                if i < chars.len() && (chars[i] == '-' || chars[i] == '+') {
                    take(&mut s, &mut i, &mut line, &mut col);
                }
                if !digits(&mut s, &mut i, &mut line, &mut col) {
                    return Err(syntax(line, col, "exponent digits"));
                }
            }
            let x: f64 = s.parse().map_err(|_| syntax(tl, tc, "number"))?;
            out.push(Token { tok: Tok::Number(x), line: tl, col: tc });
        } else if c == '"' {
            advance(&mut i, &mut line, &mut col, c);
            let mut s = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(syntax(line, col, "closing `\"`")),
                    Some('"') => {
                        advance(&mut i, &mut line, &mut col, '"');
                        break;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        advance(&mut i, &mut line, &mut col, ch);
                    }
                }
            }
            out.push(Token { tok: Tok::Str(s), line: tl, col: tc });
        } else if "{}()[];:,.=".contains(c) {
            advance(&mut i, &mut line, &mut col, c);
            out.push(Token { tok: Tok::Sym(c), line: tl, col: tc });
        } else {
            return Err(syntax(line, col, "a token"));
        }
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

/// One argument inside a controller call, before classification.
enum Arg {
    Binding(Binding),
    Theta(ThetaValue),
    Keyword(String, f64),
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> SkillError {
        let t = self.peek();
        syntax(t.line, t.col, expected)
    }

    fn at_sym(&self, c: char) -> bool {
        self.peek().tok == Tok::Sym(c)
    }

    fn sym(&mut self, c: char) -> Result<(), SkillError> {
        if self.at_sym(c) {
            self.next();
            Ok(())
        } else {
            Err(self.error(&format!("`{c}`")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, SkillError> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => Err(self.error(what)),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), SkillError> {
        match &self.peek().tok {
            Tok::Ident(s) if s == kw => {
                self.next();
                Ok(())
            }
            _ => Err(self.error(&format!("`{kw}`"))),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn number(&mut self) -> Result<f64, SkillError> {
        match self.peek().tok {
            Tok::Number(x) => {
                self.next();
                Ok(x)
            }
            _ => Err(self.error("number")),
        }
    }

    fn binding(&mut self) -> Result<Binding, SkillError> {
        let role = self.ident("role name")?;
        self.sym('.')?;
        let label = self.ident("label")?;
        Ok(Binding { role, label })
    }

    fn vector(&mut self) -> Result<[f64; 3], SkillError> {
        self.sym('[')?;
        let x = self.number()?;
        self.sym(',')?;
        let y = self.number()?;
        self.sym(',')?;
        let z = self.number()?;
        self.sym(']')?;
        Ok([x, y, z])
    }

    fn theta(&mut self) -> Result<ThetaValue, SkillError> {
        match self.peek().tok {
            Tok::Number(x) => {
                self.next();
                Ok(ThetaValue::Scalar(x))
            }
            Tok::Sym('[') => {
                let nested = self.toks.get(self.pos + 1).map(|t| &t.tok) == Some(&Tok::Sym('['));
                if !nested {
                    return Ok(ThetaValue::Vector(self.vector()?));
                }
                self.sym('[')?;
                let mut list = vec![self.vector()?];
                while self.at_sym(',') {
                    self.next();
                    list.push(self.vector()?);
                }
                self.sym(']')?;
                Ok(ThetaValue::List(list))
            }
            _ => Err(self.error("theta value")),
        }
    }

    fn arg(&mut self) -> Result<Arg, SkillError> {
        let is_ident = matches!(self.peek().tok, Tok::Ident(_));
        let next = self.toks.get(self.pos + 1).map(|t| t.tok.clone());
        if is_ident && next == Some(Tok::Sym('=')) {
            let key = self.ident("keyword")?;
            self.next();
            if key == "theta" {
                return Ok(Arg::Theta(self.theta()?));
            }
            return Ok(Arg::Keyword(key, self.number()?));
        }
        if is_ident {
            return Ok(Arg::Binding(self.binding()?));
        }
        Ok(Arg::Theta(self.theta()?))
    }

    fn controller(&mut self, roles: &BTreeSet<String>) -> Result<ControllerSpec, SkillError> {
        let start = self.peek().clone();
        let name = self.ident("controller kind")?;
        let kind = ControllerKind::from_name(&name).ok_or(SkillError::UnknownControllerKind {
            name,
            line: start.line,
            col: start.col,
        })?;
        self.sym('(')?;
        let mut bindings = Vec::new();
        let mut theta = None;
        let mut overrides = Overrides::default();
        let slots = kind.binding_slots().len();
        if !self.at_sym(')') {
            loop {
                let at = self.peek().clone();
                let here = |e: &str| syntax(at.line, at.col, e);
                match self.arg()? {
                    Arg::Binding(b) => {
                        if theta.is_some() || overrides != Overrides::default() {
                            return Err(here("theta or keyword argument"));
                        }
                        if bindings.len() == slots {
                            return Err(here(&format!("at most {slots} bindings for {kind}")));
                        }
                        if b.role != GRIPPER_ROLE && !roles.contains(&b.role) {
                            return Err(SkillError::UnboundSymbol(b.to_string()));
                        }
                        bindings.push(b);
                    }
                    Arg::Theta(t) => {
                        if theta.is_some() || overrides != Overrides::default() {
                            return Err(here("keyword argument"));
                        }
                        if bindings.len() < slots {
                            return Err(here(&format!("{slots} bindings for {kind}")));
                        }
                        let fits = matches!(
                            (kind, &t),
                            (ControllerKind::PosAlign, ThetaValue::Vector(_))
                                | (ControllerKind::AxisAlign, ThetaValue::Vector(_))
                                | (ControllerKind::PosWaypoint, ThetaValue::List(_))
                                | (ControllerKind::ForceAlign, ThetaValue::Scalar(_))
                        );
                        if !fits {
                            return Err(here(theta_shape(kind)));
                        }
                        theta = Some(t);
                    }
                    Arg::Keyword(key, value) => {
                        if bindings.len() < slots {
                            return Err(here(&format!("{slots} bindings for {kind}")));
                        }
                        let slot = overrides
                            .slot(&key)
                            .ok_or_else(|| here("one of kp, kr, kf, v_max, w_max, done_tol, theta"))?;
                        if slot.is_some() {
                            return Err(SkillError::DuplicateLabel(key));
                        }
                        *slot = Some(value);
                    }
                }
                if self.at_sym(',') {
                    self.next();
                } else {
                    break;
                }
            }
        }
        if bindings.len() < slots {
            return Err(self.error(&format!("{slots} bindings for {kind}")));
        }
        if theta.is_none()
            && matches!(kind, ControllerKind::PosWaypoint | ControllerKind::ForceAlign)
        {
            return Err(self.error(theta_shape(kind)));
        }
        self.sym(')')?;
        Ok(ControllerSpec {
            kind,
            bindings,
            theta,
            overrides,
        })
    }

    fn phase(&mut self, roles: &BTreeSet<String>) -> Result<SkillPhase, SkillError> {
        self.keyword("phase")?;
        let name = self.ident("phase name")?;
        self.keyword("budget")?;
        self.sym('=')?;
        let budget = match self.peek().tok {
            Tok::Number(x) if x >= 0.0 && x.fract() == 0.0 && x <= u64::MAX as f64 => {
                self.next();
                x as u64
            }
            _ => return Err(self.error("non-negative integer budget")),
        };
        let mut grasp = None;
        if self.at_keyword("grasp") {
            self.next();
            self.sym('=')?;
            let b = self.binding()?;
            if !roles.contains(&b.role) {
                return Err(SkillError::UnboundSymbol(b.to_string()));
            }
            grasp = Some(b);
        }
        self.sym('{')?;
        if self.at_sym('}') {
            return Err(self.error("controller"));
        }
        let mut phase = SkillPhase {
            name,
            budget,
            grasp,
            translational: Vec::new(),
            rotational: Vec::new(),
        };
        loop {
            let c = self.controller(roles)?;
            let (list, class) = match c.kind.class() {
                ControllerClass::Translational => (&mut phase.translational, "translational"),
                ControllerClass::Rotational => (&mut phase.rotational, "rotational"),
            };
            if list.len() == MAX_PRIORITIES {
                return Err(SkillError::PriorityOverflow {
                    phase: phase.name.clone(),
                    class: class.into(),
                });
            }
            list.push(c);
            if self.at_sym(';') {
                self.next();
                if self.at_sym('}') {
                    break;
                }
            } else {
                break;
            }
        }
        self.sym('}')?;
        Ok(phase)
    }

    fn skill(&mut self) -> Result<LiftedSkill, SkillError> {
        self.keyword("skill")?;
        let name = self.ident("skill name")?;
        self.sym('{')?;
        let mut uses = Vec::new();
        let mut roles = BTreeSet::new();
        while self.at_keyword("uses") {
            self.next();
            let role = self.ident("role name")?;
            self.sym(':')?;
            let spec = match &self.peek().tok {
                Tok::Str(s) => s.clone(),
                _ => return Err(self.error("quoted spec path")),
            };
            self.next();
            self.sym(';')?;
            if role == GRIPPER_ROLE || !roles.insert(role.clone()) {
                return Err(SkillError::DuplicateLabel(role));
            }
            uses.push(RoleUse { role, spec });
        }
        let mut phases: Vec<SkillPhase> = Vec::new();
        while !self.at_sym('}') {
            let p = self.phase(&roles)?;
            if phases.iter().any(|q| q.name == p.name) {
                return Err(SkillError::DuplicateLabel(p.name));
            }
            phases.push(p);
        }
        if phases.is_empty() {
            return Err(self.error("`phase`"));
        }
        self.sym('}')?;
        if self.peek().tok != Tok::Eof {
            return Err(self.error("end of input"));
        }
        Ok(LiftedSkill { name, uses, phases })
    }
}

fn theta_shape(kind: ControllerKind) -> &'static str {
    match kind {
        ControllerKind::PosAlign => "offset vector [x, y, z]",
        ControllerKind::AxisAlign => "Euler vector [rx, ry, rz]",
        ControllerKind::PosWaypoint => "waypoint list [[x, y, z], ...]",
        ControllerKind::ForceAlign => "scalar force",
    }
}

pub fn parse_skill(text: &str) -> Result<LiftedSkill, SkillError> {
    let toks = lex(text)?;
    Parser { toks, pos: 0 }.skill()
}

impl LiftedSkill {
    pub fn from_canonical_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn vec3(v: &[f64; 3]) -> String {
    format!("[{}, {}, {}]", v[0], v[1], v[2])
}

fn print_controller(c: &ControllerSpec) -> String {
    let mut args: Vec<String> = c.bindings.iter().map(|b| b.to_string()).collect();
    match &c.theta {
        None => {}
        Some(ThetaValue::Scalar(x)) => args.push(x.to_string()),
        Some(ThetaValue::Vector(v)) => args.push(vec3(v)),
        Some(ThetaValue::List(l)) => {
            let items: Vec<String> = l.iter().map(vec3).collect();
            args.push(format!("[{}]", items.join(", ")));
        }
    }
    for key in Overrides::KEYS {
        if let Some(x) = c.overrides.get(key) {
            args.push(format!("{key}={x}"));
        }
    }
    format!("{}({})", c.kind, args.join(", "))
}

/// Canonical text; parsing it yields the same skill.
pub fn print_skill(skill: &LiftedSkill) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "skill {} {{", skill.name);
    for u in &skill.uses {
        let _ = writeln!(s, "    uses {}: \"{}\";", u.role, u.spec);
    }
    for p in &skill.phases {
        let _ = write!(s, "    phase {} budget={}", p.name, p.budget);
        if let Some(g) = &p.grasp {
            let _ = write!(s, " grasp={g}");
        }
        s.push_str(" {\n");
        for c in p.controllers() {
            let _ = writeln!(s, "        {};", print_controller(c));
        }
        s.push_str("    }\n");
    }
    s.push_str("}\n");
    s
}
