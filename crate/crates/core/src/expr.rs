//! Arithmetic expressions for user-defined drivers, coefficients and terminal
//! values.
//!
//! Grammar (`^` binds tightest and is right-associative):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Names: `t`, `y1..yk`, `ynorm`, `z` (Frobenius norm), `z1..z{k·d}` (row-major),
//! `b1..bd`, `absb`, `supb`, `intb(q)` (running `∫|B|^q`), and in terminal
//! expressions `cum_a`, `cum_mu`. Functions: `sin cos exp log abs sqrt min
//! max pow ind`, where `ind(x) = 1` if `x >= 0` else `0`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::generators::{Assumption, GeneratorSpec, GrowthBound, Process, SublinearForm, TerminalCtx, TerminalFn};
use crate::timepaths::{norm, AuxDef, AuxKind, NodeState};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Var {
    T,
    Y(usize),
    YNorm,
    ZNorm,
    Z(usize),
    B(usize),
    AbsB,
    SupB,
    Aux(usize),
    CumA,
    CumMu,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
    Sqrt,
    Min,
    Max,
    Pow,
    Ind,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// Values an expression may read.
pub struct Env<'a> {
    pub st: &'a NodeState<'a>,
    pub y: &'a [f64],
    pub z: &'a [f64],
    pub cum_a: f64,
    pub cum_mu: f64,
    pub x: f64,
}

/// Where an expression is used; controls which names resolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Driver,
    Coefficient,
    Terminal,
    /// Single real argument `x` (growth functions).
    Scalar,
}

/// Name resolution state shared by all expressions of one generator.
pub struct Compiler {
    pub k: usize,
    pub d: usize,
    pub aux: Vec<AuxDef>,
}

/// A compiled expression.
#[derive(Debug, Clone)]
pub struct Expr {
    root: Node,
    uses_z: bool,
}

impl Expr {
    pub fn eval(&self, env: &Env) -> f64 {
        eval(&self.root, env)
    }

    pub fn uses_z(&self) -> bool {
        self.uses_z
    }
}

fn eval(n: &Node, e: &Env) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::Var(v) => match *v {
            Var::T => e.st.t,
            Var::Y(i) => e.y[i],
            Var::YNorm => norm(e.y),
            Var::ZNorm => norm(e.z),
            Var::Z(i) => e.z[i],
            Var::B(i) => e.st.b[i],
            Var::AbsB => e.st.abs_b,
            Var::SupB => e.st.sup_abs_b,
            Var::Aux(i) => e.st.aux[i],
            Var::CumA => e.cum_a,
            Var::CumMu => e.cum_mu,
            Var::X => e.x,
        },
        Node::Neg(a) => -eval(a, e),
        Node::Bin(op, a, b) => {
            let (x, y) = (eval(a, e), eval(b, e));
            match op {
                '+' => x + y,
                '-' => x - y,
                '*' => x * y,
                '/' => x / y,
                '^' => pow(x, y),
                _ => unreachable!("parser only emits + - * / ^"),
            }
        }
        Node::Call(f, args) => {
            let a = |i: usize| eval(&args[i], e);
            match f {
                Func::Sin => a(0).sin(),
                Func::Cos => a(0).cos(),
                Func::Exp => a(0).exp(),
                Func::Log => a(0).ln(),
                Func::Abs => a(0).abs(),
                Func::Sqrt => a(0).sqrt(),
                Func::Min => a(0).min(a(1)),
                Func::Max => a(0).max(a(1)),
                Func::Pow => pow(a(0), a(1)),
                Func::Ind => {
                    if a(0) >= 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
            }
        }
    }
}

fn pow(x: f64, y: f64) -> f64 {
    if y.fract() == 0.0 && y.abs() <= 64.0 {
        x.powi(y as i32)
    } else {
        x.powf(y)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn err(src: &str, msg: impl std::fmt::Display) -> LabError {
    LabError::Expr(format!("{msg} in '{src}'"))
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let cs: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < cs.len() && (cs[i].is_ascii_digit() || cs[i] == '.') {
                i += 1;
            }
            if i < cs.len() && (cs[i] == 'e' || cs[i] == 'E') {
                let save = i;
                i += 1;
                if i < cs.len() && (cs[i] == '+' || cs[i] == '-') {
                    i += 1;
                }
                if i < cs.len() && cs[i].is_ascii_digit() {
                    while i < cs.len() && cs[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let s: String = cs[start..i].iter().collect();
            let v = s.parse::<f64>().map_err(|_| err(src, format!("bad number '{s}'")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < cs.len() && (cs[i].is_ascii_alphanumeric() || cs[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(cs[start..i].iter().collect()));
        } else if "+-*/^(),".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(err(src, format!("unexpected character '{c}'")));
        }
    }
    Ok(out)
}

struct Parser<'s, 'c> {
    src: &'s str,
    toks: Vec<Tok>,
    pos: usize,
    comp: &'c mut Compiler,
    scope: Scope,
    uses_z: bool,
}

impl Parser<'_, '_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Op(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(err(self.src, format!("expected '{c}'")))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Bin('+', Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Bin('-', Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Bin('*', Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Bin('/', Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Node::Bin('^', Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.toks.get(self.pos).cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Node::Num(v))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.eat('(') {
                    let mut args = vec![self.expr()?];
                    while self.eat(',') {
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    self.call(&name, args)
                } else {
                    self.var(&name).map(Node::Var)
                }
            }
            Some(t) => Err(err(self.src, format!("unexpected token {t:?}"))),
            None => Err(err(self.src, "unexpected end of expression")),
        }
    }

    fn call(&mut self, name: &str, args: Vec<Node>) -> Result<Node> {
        if name == "intb" {
            let q = match args.as_slice() {
                [Node::Num(q)] => *q,
                [Node::Neg(inner)] if matches!(**inner, Node::Num(_)) => {
                    return Err(err(self.src, "intb exponent must be nonnegative"))
                }
                _ => return Err(err(self.src, "intb takes one numeric literal")),
            };
            if q < 0.0 {
                return Err(err(self.src, "intb exponent must be nonnegative"));
            }
            if self.scope == Scope::Scalar {
                return Err(err(self.src, "intb is not available here"));
            }
            let aux_name = format!("intb({q})");
            let idx = match self.comp.aux.iter().position(|a| a.name == aux_name) {
                Some(i) => i,
                None => {
                    self.comp.aux.push(AuxDef::new(
                        aux_name,
                        AuxKind::RunningIntegral,
                        Arc::new(move |s: &NodeState| pow(s.abs_b, q)),
                    ));
                    self.comp.aux.len() - 1
                }
            };
            return Ok(Node::Var(Var::Aux(idx)));
        }
        let (f, arity) = match name {
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "exp" => (Func::Exp, 1),
            "log" => (Func::Log, 1),
            "abs" => (Func::Abs, 1),
            "sqrt" => (Func::Sqrt, 1),
            "ind" => (Func::Ind, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            "pow" => (Func::Pow, 2),
            _ => return Err(err(self.src, format!("unknown function '{name}'"))),
        };
        if args.len() != arity {
            return Err(err(self.src, format!("{name} takes {arity} argument(s), got {}", args.len())));
        }
        Ok(Node::Call(f, args))
    }

    fn var(&mut self, name: &str) -> Result<Var> {
        let k = self.comp.k;
        let d = self.comp.d;
        let indexed = |prefix: &str, n: usize| -> Option<std::result::Result<usize, ()>> {
            let rest = name.strip_prefix(prefix)?;
            let i: usize = rest.parse().ok()?;
            Some(if i >= 1 && i <= n { Ok(i - 1) } else { Err(()) })
        };
        let yz = matches!(self.scope, Scope::Driver);
        let path = !matches!(self.scope, Scope::Scalar);
        let v = match name {
            "x" if self.scope == Scope::Scalar => Var::X,
            "t" if path => Var::T,
            "absb" if path => Var::AbsB,
            "supb" if path => Var::SupB,
            "ynorm" if yz => Var::YNorm,
            "z" if yz => {
                self.uses_z = true;
                Var::ZNorm
            }
            "cum_a" if self.scope == Scope::Terminal => Var::CumA,
            "cum_mu" if self.scope == Scope::Terminal => Var::CumMu,
            _ => {
                if let (true, Some(r)) = (yz, indexed("y", k)) {
                    Var::Y(r.map_err(|_| err(self.src, format!("{name} out of range 1..={k}")))?)
                } else if let (true, Some(r)) = (yz, indexed("z", k * d)) {
                    self.uses_z = true;
                    Var::Z(r.map_err(|_| err(self.src, format!("{name} out of range 1..={}", k * d)))?)
                } else if let (true, Some(r)) = (path, indexed("b", d)) {
                    Var::B(r.map_err(|_| err(self.src, format!("{name} out of range 1..={d}")))?)
                } else {
                    return Err(err(self.src, format!("unknown or unavailable name '{name}'")));
                }
            }
        };
        Ok(v)
    }
}

impl Compiler {
    pub fn new(k: usize, d: usize) -> Self {
        Self { k, d, aux: Vec::new() }
    }

    pub fn compile(&mut self, src: &str, scope: Scope) -> Result<Expr> {
        let toks = lex(src)?;
        let mut p = Parser { src, toks, pos: 0, comp: self, scope, uses_z: false };
        let root = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(err(src, "trailing input"));
        }
        let uses_z = p.uses_z;
        Ok(Expr { root, uses_z })
    }
}

/// JSON description of a user-defined generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExprGenerator {
    #[serde(default = "default_name")]
    pub name: String,
    pub k: usize,
    pub d: usize,
    /// One expression per component of `g`.
    pub driver: Vec<String>,
    /// One expression per component of `ξ`.
    pub terminal: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<String>,
    #[serde(default)]
    pub declared: Vec<Assumption>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default)]
    pub sublinear_form: SublinearForm,
    /// Growth bound `μ̃` (path expression) and `φ` (expression in `x`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_tilde: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
}

fn default_name() -> String {
    "user".into()
}

impl ExprGenerator {
    /// Compiles into a generator spec and a terminal function.
    pub fn build(&self) -> Result<(GeneratorSpec, TerminalFn)> {
        let (k, d) = (self.k, self.d);
        if k == 0 || d == 0 {
            return Err(LabError::Config("expression generator needs k, d >= 1".into()));
        }
        if self.driver.len() != k || self.terminal.len() != k {
            return Err(LabError::Config(format!(
                "expression generator needs {k} driver and terminal components, got {} and {}",
                self.driver.len(),
                self.terminal.len()
            )));
        }
        let mut c = Compiler::new(k, d);
        let drv: Vec<Expr> = self.driver.iter().map(|s| c.compile(s, Scope::Driver)).collect::<Result<_>>()?;
        let term: Vec<Expr> = self.terminal.iter().map(|s| c.compile(s, Scope::Terminal)).collect::<Result<_>>()?;
        let mut coefs = Vec::new();
        for (p, src) in [
            (Process::Mu, &self.mu),
            (Process::Nu, &self.nu),
            (Process::Gamma, &self.gamma),
            (Process::G1, &self.g1),
            (Process::G2, &self.g2),
            (Process::Alpha, &self.alpha),
        ] {
            if let Some(s) = src {
                coefs.push((p, c.compile(s, Scope::Coefficient)?));
            }
        }
        let growth = match (&self.mu_tilde, &self.phi) {
            (Some(m), Some(f)) => Some((c.compile(m, Scope::Coefficient)?, c.compile(f, Scope::Scalar)?)),
            (None, None) => None,
            _ => return Err(LabError::Config("mu_tilde and phi must be given together".into())),
        };
        let z_dependent = drv.iter().any(Expr::uses_z);
        let drv = Arc::new(drv);
        let mut gen = GeneratorSpec::new(
            self.name.clone(),
            k,
            d,
            z_dependent,
            Arc::new(move |st: &NodeState, y: &[f64], z: &[f64], out: &mut [f64]| {
                let env = Env { st, y, z, cum_a: 0.0, cum_mu: 0.0, x: 0.0 };
                for (o, e) in out.iter_mut().zip(drv.iter()) {
                    *o = e.eval(&env);
                }
            }),
        );
        for (p, e) in coefs {
            gen = gen.with_coefficient(p, Arc::new(move |st: &NodeState| coef_eval(&e, st)));
        }
        if let Some((m, f)) = growth {
            gen.growth = Some(GrowthBound {
                mu_tilde: Arc::new(move |st: &NodeState| coef_eval(&m, st)),
                phi: Arc::new(move |x: f64| scalar_eval(&f, x)),
            });
        }
        gen.aux = c.aux;
        gen.declared = self.declared.clone();
        gen.l = self.l;
        gen.sublinear_form = self.sublinear_form;
        gen.description = self.driver.join("; ");
        let term = Arc::new(term);
        let terminal: TerminalFn = Arc::new(move |ctx: &TerminalCtx, out: &mut [f64]| {
            let env = Env { st: &ctx.state, y: &[], z: &[], cum_a: ctx.cum_a, cum_mu: ctx.cum_beta_mu, x: 0.0 };
            for (o, e) in out.iter_mut().zip(term.iter()) {
                *o = e.eval(&env);
            }
        });
        gen.validate(None)?;
        Ok((gen, terminal))
    }
}

fn coef_eval(e: &Expr, st: &NodeState) -> f64 {
    e.eval(&Env { st, y: &[], z: &[], cum_a: 0.0, cum_mu: 0.0, x: 0.0 })
}

fn scalar_eval(e: &Expr, x: f64) -> f64 {
    let st = NodeState { path: 0, node: 0, t: 0.0, b: &[], abs_b: 0.0, sup_abs_b: 0.0, aux: &[] };
    e.eval(&Env { st: &st, y: &[], z: &[], cum_a: 0.0, cum_mu: 0.0, x })
}
