//! Experiment configuration files.
//!
//! A configuration is a plain-text file of `key = value` lines; `#` starts
//! a comment and blank lines are ignored. Keys may appear at most once and
//! unknown keys are rejected, so typos fail loudly before any computation
//! starts. The full schema:
//!
//! | key | value | meaning |
//! |-----|-------|---------|
//! | `data` | path | input dataset CSV; when absent, commands simulate from this config |
//! | `family` | `variance` \| `smoothness` | which local parameter is estimated |
//! | `field` | expression | the spatially varying parameter: sigma(t) (a standard deviation) for `variance`, nu(t) for `smoothness` |
//! | `sigma2`, `nu`, `rho` | number | stationary base parameters (the non-varying ones) |
//! | `bounds` | `lo,hi` | override the family's parameter bounds |
//! | `locations` | `even` \| `uniform` | sampling design (`even` is 1-d, `uniform` is 2-d) |
//! | `n` | integer | number of observations |
//! | `domain` | `a,b` or `x0,x1,y0,y1` | observation window |
//! | `weights` | `k2` \| `k4` \| `k6` \| `k8` \| `hard` \| `constrained` | local likelihood weights |
//! | `boundary_correction` | `true` \| `false` | widen the bandwidth near the domain boundary |
//! | `max_neighbors` | integer | cap on the neighborhood size per target |
//! | `lambda` | number | fixed bandwidth for `estimate` |
//! | `lambda_grid` | `auto` \| `auto,N` \| `lo,hi,N` | candidate bandwidths (log-spaced) |
//! | `replicates` | integer | calibration replicates for the selectors (default 50) |
//! | `theta_grid` | integer | candidate count for grid-search families (default 32) |
//! | `grid` | `n` or `nx,ny` | estimation grid nodes (default 64 / 8x8) |
//! | `oracle` | `true` \| `false` | also compute the oracle profile (needs `field`) |
//! | `seed` | integer | random seed (the `--seed` flag overrides it) |
//! | `out` | path | output directory (the `--out` flag overrides it) |
//! | `risk_mode` | `curves` \| `heatmap` | Bayes-risk output shape |
//! | `target` | number | Taylor expansion point t0 for the risk |
//! | `prior` | `c0,var,terms` | polynomial prior: value at t0, N(0, var) coefficients, Taylor order |
//! | `kernels` | list | kernels for `risk_mode = curves` |
//! | `kernel_a`, `kernel_b` | kernel | the pair compared by `risk_mode = heatmap` |
//! | `nu_grid`, `rho_grid` | `lo,hi,N` | heat-map axes (evenly spaced) |
//!
//! Expressions use a small grammar: decimal numbers, the constant `pi`,
//! the coordinates `t`/`x` (first axis) and `y` (second axis), `+ - * /`,
//! unary minus, `sin(...)`, `cos(...)`, and parentheses. For example
//! `2*sin(t/0.015) + 2.8` or `1.5 + 0.9*cos(pi*x)*cos(pi*y)`.
//!
//! Named presets [`fig1`..`fig6`](preset) bundle the reference experiment
//! setups used throughout the examples and the acceptance suite; `--config
//! fig4` loads the preset unless a file of that name exists.

use crate::bandwidth::{default_lambda_grid, DEFAULT_LAMBDA_POINTS};
use crate::bayesrisk::PriorSpec;
use crate::covariance::{MaternParams, NonstatModel};
use crate::data::{Dataset, Location, ParamField};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::numeric::log_space;
use crate::simulate::LocationSpec;
use crate::wll::{LocalModelFamily, WeightScheme};
use std::path::{Path, PathBuf};

/// A parsed symbolic expression over one or two coordinates.
#[derive(Debug, Clone)]
pub enum Expr {
    Num(f64),
    /// Coordinate index: 0 for `t`/`x`, 1 for `y`.
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '/' => {
                out.push(Token::Slash);
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len() && matches!(bytes[i] as char, '0'..='9' | '.') {
                    i += 1;
                }
                // Scientific notation: 1.5e-2.
                if i < bytes.len() && matches!(bytes[i] as char, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && matches!(bytes[j] as char, '+' | '-') {
                        j += 1;
                    }
                    if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let lit = &src[start..i];
                let v: f64 = lit.parse().map_err(|_| {
                    Error::Config(format!("invalid number `{lit}` in expression `{src}`"))
                })?;
                out.push(Token::Num(v));
            }
            'a'..='z' | 'A'..='Z' => {
                let start = i;
                while i < bytes.len() && (bytes[i] as char).is_ascii_alphabetic() {
                    i += 1;
                }
                out.push(Token::Ident(src[start..i].to_ascii_lowercase()));
            }
            other => {
                return Err(Error::Config(format!(
                    "unexpected character `{other}` in expression `{src}`"
                )))
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    src: &'a str,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, what: &str) -> Error {
        Error::Config(format!("{what} in expression `{}`", self.src))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op) = self.peek() {
            match op {
                Token::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Token::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        while let Some(op) = self.peek() {
            match op {
                Token::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Token::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.bump() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::LParen) => {
                let inner = self.expr()?;
                match self.bump() {
                    Some(Token::RParen) => Ok(inner),
                    _ => Err(self.err("missing `)`")),
                }
            }
            Some(Token::Ident(name)) => match name.as_str() {
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                "t" | "x" => Ok(Expr::Var(0)),
                "y" => Ok(Expr::Var(1)),
                "sin" | "cos" => {
                    if !matches!(self.bump(), Some(Token::LParen)) {
                        return Err(self.err(&format!("`{name}` needs parentheses")));
                    }
                    let inner = Box::new(self.expr()?);
                    if !matches!(self.bump(), Some(Token::RParen)) {
                        return Err(self.err("missing `)`"));
                    }
                    Ok(if name == "sin" {
                        Expr::Sin(inner)
                    } else {
                        Expr::Cos(inner)
                    })
                }
                other => Err(self.err(&format!("unknown symbol `{other}`"))),
            },
            _ => Err(self.err("unexpected end")),
        }
    }
}

impl Expr {
    /// Parse an expression from the configuration grammar.
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        if tokens.is_empty() {
            return Err(Error::Config("empty expression".into()));
        }
        let mut p = Parser {
            tokens: &tokens,
            pos: 0,
            src,
        };
        let e = p.expr()?;
        if p.pos != tokens.len() {
            return Err(Error::Config(format!(
                "trailing input after position {} in expression `{src}`",
                p.pos
            )));
        }
        Ok(e)
    }

    /// Evaluate at a location. The caller must have checked
    /// [`dim_required`](Expr::dim_required) against the location dimension.
    pub fn eval(&self, t: &Location) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => t.coords()[*i],
            Expr::Neg(e) => -e.eval(t),
            Expr::Add(a, b) => a.eval(t) + b.eval(t),
            Expr::Sub(a, b) => a.eval(t) - b.eval(t),
            Expr::Mul(a, b) => a.eval(t) * b.eval(t),
            Expr::Div(a, b) => a.eval(t) / b.eval(t),
            Expr::Sin(e) => e.eval(t).sin(),
            Expr::Cos(e) => e.eval(t).cos(),
        }
    }

    /// Smallest location dimension this expression can be evaluated on.
    pub fn dim_required(&self) -> usize {
        match self {
            Expr::Num(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(e) | Expr::Sin(e) | Expr::Cos(e) => e.dim_required(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.dim_required().max(b.dim_required())
            }
        }
    }

    /// The expression as a parameter field.
    pub fn to_field(&self) -> ParamField {
        let e = self.clone();
        ParamField::from_fn(move |t: &Location| e.eval(t))
    }
}

/// Which local parameter family a configuration works with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Variance,
    Smoothness,
}

/// Sampling design kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocationsKind {
    Even,
    Uniform,
}

/// Weight constructions nameable in a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightsKind {
    K2,
    K4,
    K6,
    K8,
    Hard,
    Constrained,
}

impl WeightsKind {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "k2" => Ok(WeightsKind::K2),
            "k4" => Ok(WeightsKind::K4),
            "k6" => Ok(WeightsKind::K6),
            "k8" => Ok(WeightsKind::K8),
            "hard" => Ok(WeightsKind::Hard),
            "constrained" => Ok(WeightsKind::Constrained),
            other => Err(Error::Config(format!(
                "unknown weights `{other}` (expected k2/k4/k6/k8/hard/constrained)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WeightsKind::K2 => "k2",
            WeightsKind::K4 => "k4",
            WeightsKind::K6 => "k6",
            WeightsKind::K8 => "k8",
            WeightsKind::Hard => "hard",
            WeightsKind::Constrained => "constrained",
        }
    }

    /// The kernel behind this name; `constrained` is not a kernel.
    pub fn kernel_spec(self) -> Result<KernelSpec> {
        let order = match self {
            WeightsKind::K2 => 1,
            WeightsKind::K4 => 2,
            WeightsKind::K6 => 3,
            WeightsKind::K8 => 4,
            WeightsKind::Hard => return Ok(KernelSpec::HardThreshold),
            WeightsKind::Constrained => {
                return Err(Error::Config(
                    "constrained weights are not a kernel; pick k2/k4/k6/k8/hard".into(),
                ))
            }
        };
        KernelSpec::higher_order(order)
    }

    pub fn scheme(self) -> Result<WeightScheme> {
        if self == WeightsKind::Constrained {
            Ok(WeightScheme::Constrained)
        } else {
            Ok(WeightScheme::Kernel(self.kernel_spec()?))
        }
    }
}

/// Candidate bandwidth grids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaGrid {
    /// Geometry-derived default grid.
    Auto { points: usize },
    /// Explicit log-spaced range.
    LogRange { lo: f64, hi: f64, points: usize },
}

impl LambdaGrid {
    /// Concrete bandwidths for a dataset.
    pub fn resolve(&self, data: &Dataset) -> Result<Vec<f64>> {
        match *self {
            LambdaGrid::Auto { points } => default_lambda_grid(data, points),
            LambdaGrid::LogRange { lo, hi, points } => log_space(lo, hi, points),
        }
    }
}

/// Bayes-risk output shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskMode {
    Curves,
    Heatmap,
}

/// A fully parsed and schema-checked experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub family: Family,
    pub field: Option<Expr>,
    pub sigma2: Option<f64>,
    pub nu: Option<f64>,
    pub rho: Option<f64>,
    pub bounds: Option<(f64, f64)>,
    pub locations: LocationsKind,
    pub n: Option<usize>,
    pub domain: Option<Vec<(f64, f64)>>,
    pub weights: WeightsKind,
    pub boundary_correction: bool,
    pub max_neighbors: Option<usize>,
    pub lambda: Option<f64>,
    pub lambda_grid: LambdaGrid,
    pub replicates: usize,
    pub theta_grid: usize,
    pub grid: Option<Vec<usize>>,
    pub oracle: bool,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub risk_mode: RiskMode,
    pub target: Option<f64>,
    pub prior: Option<(f64, f64, usize)>,
    pub kernels: Option<Vec<WeightsKind>>,
    pub kernel_a: Option<WeightsKind>,
    pub kernel_b: Option<WeightsKind>,
    pub nu_grid: Option<(f64, f64, usize)>,
    pub rho_grid: Option<(f64, f64, usize)>,
    /// Verbatim configuration text, echoed into provenance sidecars.
    text: String,
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not a nonnegative integer")))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse()
        .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not a nonnegative integer")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Config(format!(
            "key `{key}`: `{other}` is not `true` or `false`"
        ))),
    }
}

fn split_numbers(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|p| parse_f64(key, p.trim()))
        .collect()
}

/// `lo,hi,count` triple.
fn parse_range(key: &str, v: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "key `{key}`: expected `lo,hi,count`, got `{v}`"
        )));
    }
    Ok((
        parse_f64(key, parts[0])?,
        parse_f64(key, parts[1])?,
        parse_usize(key, parts[2])?,
    ))
}

impl ExperimentConfig {
    /// Parse a configuration from its text form.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig {
            data: None,
            family: Family::Variance,
            field: None,
            sigma2: None,
            nu: None,
            rho: None,
            bounds: None,
            locations: LocationsKind::Even,
            n: None,
            domain: None,
            weights: WeightsKind::K6,
            boundary_correction: false,
            max_neighbors: None,
            lambda: None,
            lambda_grid: LambdaGrid::Auto {
                points: DEFAULT_LAMBDA_POINTS,
            },
            replicates: 50,
            theta_grid: 32,
            grid: None,
            oracle: false,
            seed: 0,
            out: None,
            risk_mode: RiskMode::Curves,
            target: None,
            prior: None,
            kernels: None,
            kernel_a: None,
            kernel_b: None,
            nu_grid: None,
            rho_grid: None,
            text: text.to_string(),
        };
        let mut seen: Vec<String> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                ))
            })?;
            let key = key.trim();
            let value = value.trim();
            if value.is_empty() {
                return Err(Error::Config(format!("key `{key}` has an empty value")));
            }
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config(format!("duplicate key `{key}`")));
            }
            seen.push(key.to_string());
            match key {
                "data" => cfg.data = Some(PathBuf::from(value)),
                "family" => {
                    cfg.family = match value {
                        "variance" => Family::Variance,
                        "smoothness" => Family::Smoothness,
                        other => {
                            return Err(Error::Config(format!(
                                "key `family`: `{other}` is not `variance` or `smoothness`"
                            )))
                        }
                    }
                }
                "field" => cfg.field = Some(Expr::parse(value)?),
                "sigma2" => cfg.sigma2 = Some(parse_f64(key, value)?),
                "nu" => cfg.nu = Some(parse_f64(key, value)?),
                "rho" => cfg.rho = Some(parse_f64(key, value)?),
                "bounds" => {
                    let v = split_numbers(key, value)?;
                    if v.len() != 2 {
                        return Err(Error::Config("key `bounds`: expected `lo,hi`".into()));
                    }
                    cfg.bounds = Some((v[0], v[1]));
                }
                "locations" => {
                    cfg.locations = match value {
                        "even" => LocationsKind::Even,
                        "uniform" => LocationsKind::Uniform,
                        other => {
                            return Err(Error::Config(format!(
                                "key `locations`: `{other}` is not `even` or `uniform`"
                            )))
                        }
                    }
                }
                "n" => cfg.n = Some(parse_usize(key, value)?),
                "domain" => {
                    let v = split_numbers(key, value)?;
                    cfg.domain = match v.len() {
                        2 => Some(vec![(v[0], v[1])]),
                        4 => Some(vec![(v[0], v[1]), (v[2], v[3])]),
                        _ => {
                            return Err(Error::Config(
                                "key `domain`: expected `a,b` or `x0,x1,y0,y1`".into(),
                            ))
                        }
                    };
                }
                "weights" => cfg.weights = WeightsKind::parse(value)?,
                "boundary_correction" => cfg.boundary_correction = parse_bool(key, value)?,
                "max_neighbors" => cfg.max_neighbors = Some(parse_usize(key, value)?),
                "lambda" => cfg.lambda = Some(parse_f64(key, value)?),
                "lambda_grid" => {
                    cfg.lambda_grid = if value == "auto" {
                        LambdaGrid::Auto {
                            points: DEFAULT_LAMBDA_POINTS,
                        }
                    } else if let Some(rest) = value.strip_prefix("auto,") {
                        LambdaGrid::Auto {
                            points: parse_usize(key, rest.trim())?,
                        }
                    } else {
                        let (lo, hi, points) = parse_range(key, value)?;
                        LambdaGrid::LogRange { lo, hi, points }
                    }
                }
                "replicates" => cfg.replicates = parse_usize(key, value)?,
                "theta_grid" => cfg.theta_grid = parse_usize(key, value)?,
                "grid" => {
                    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                    if parts.is_empty() || parts.len() > 2 {
                        return Err(Error::Config(
                            "key `grid`: expected `n` or `nx,ny`".into(),
                        ));
                    }
                    let mut counts = Vec::new();
                    for p in parts {
                        counts.push(parse_usize(key, p)?);
                    }
                    cfg.grid = Some(counts);
                }
                "oracle" => cfg.oracle = parse_bool(key, value)?,
                "seed" => cfg.seed = parse_u64(key, value)?,
                "out" => cfg.out = Some(PathBuf::from(value)),
                "risk_mode" => {
                    cfg.risk_mode = match value {
                        "curves" => RiskMode::Curves,
                        "heatmap" => RiskMode::Heatmap,
                        other => {
                            return Err(Error::Config(format!(
                                "key `risk_mode`: `{other}` is not `curves` or `heatmap`"
                            )))
                        }
                    }
                }
                "target" => cfg.target = Some(parse_f64(key, value)?),
                "prior" => {
                    let (c0, var, terms) = parse_range(key, value)?;
                    cfg.prior = Some((c0, var, terms as usize));
                }
                "kernels" => {
                    let mut list = Vec::new();
                    for p in value.split(',') {
                        list.push(WeightsKind::parse(p.trim())?);
                    }
                    cfg.kernels = Some(list);
                }
                "kernel_a" => cfg.kernel_a = Some(WeightsKind::parse(value)?),
                "kernel_b" => cfg.kernel_b = Some(WeightsKind::parse(value)?),
                "nu_grid" => cfg.nu_grid = Some(parse_range(key, value)?),
                "rho_grid" => cfg.rho_grid = Some(parse_range(key, value)?),
                other => {
                    return Err(Error::Config(format!(
                        "unknown configuration key `{other}`"
                    )))
                }
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    /// Cross-key consistency checks that do not need a dataset.
    fn check(&self) -> Result<()> {
        if let Some(d) = &self.domain {
            for &(a, b) in d {
                if !(b > a) || !a.is_finite() || !b.is_finite() {
                    return Err(Error::Config(format!(
                        "key `domain`: degenerate extent [{a}, {b}]"
                    )));
                }
            }
            if let Some(f) = &self.field {
                if f.dim_required() > d.len() {
                    return Err(Error::Config(
                        "key `field`: the expression uses `y` but the domain is one-dimensional"
                            .into(),
                    ));
                }
            }
        }
        if let Some((lo, hi)) = self.bounds {
            if !(hi > lo) || !(lo > 0.0) {
                return Err(Error::Config(format!(
                    "key `bounds`: need 0 < lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        if let Some((_, var, terms)) = self.prior {
            if !(var > 0.0) || terms == 0 {
                return Err(Error::Config(
                    "key `prior`: need a positive variance and at least one Taylor term".into(),
                ));
            }
        }
        Ok(())
    }

    /// Read a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Resolve a `--config` argument: an existing file wins, otherwise a
    /// preset name is looked up.
    pub fn resolve(arg: &str) -> Result<Self> {
        let path = Path::new(arg);
        if path.exists() {
            return Self::load(path);
        }
        match preset(arg) {
            Some(text) => Self::parse(text),
            None => Err(Error::Config(format!(
                "`{arg}` is neither a readable file nor a preset ({})",
                PRESET_NAMES.join(", ")
            ))),
        }
    }

    /// The verbatim configuration text.
    pub fn text(&self) -> &str {
        &self.text
    }

    fn require_f64(&self, v: Option<f64>, key: &str) -> Result<f64> {
        v.ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    /// The local model family this configuration estimates.
    pub fn family_def(&self) -> Result<LocalModelFamily> {
        let fam = match self.family {
            Family::Variance => {
                let nu = self.require_f64(self.nu, "nu")?;
                let rho = self.require_f64(self.rho, "rho")?;
                LocalModelFamily::variance_scale(MaternParams::new(1.0, nu, rho)?)
            }
            Family::Smoothness => {
                let sigma2 = self.sigma2.unwrap_or(1.0);
                let rho = self.require_f64(self.rho, "rho")?;
                LocalModelFamily::matern_smoothness(sigma2, rho)
            }
        };
        match self.bounds {
            Some((lo, hi)) => fam.with_bounds(lo, hi),
            None => Ok(fam),
        }
    }

    /// The true nonstationary model implied by `field` (used by `simulate`
    /// and by the oracle selector).
    pub fn truth_model(&self) -> Result<NonstatModel> {
        let field = self
            .field
            .as_ref()
            .ok_or_else(|| Error::Config("missing required key `field`".into()))?;
        match self.family {
            Family::Variance => {
                let nu = self.require_f64(self.nu, "nu")?;
                let rho = self.require_f64(self.rho, "rho")?;
                Ok(NonstatModel::ReparamK {
                    sigma: field.to_field(),
                    nu: ParamField::constant(nu),
                    rho: ParamField::constant(rho),
                })
            }
            Family::Smoothness => Ok(NonstatModel::SmoothnessOnly {
                sigma2: self.sigma2.unwrap_or(1.0),
                rho: self.require_f64(self.rho, "rho")?,
                nu: field.to_field(),
            }),
        }
    }

    /// The sampling design.
    pub fn location_spec(&self) -> Result<LocationSpec> {
        let n = self
            .n
            .ok_or_else(|| Error::Config("missing required key `n`".into()))?;
        let domain = self
            .domain
            .as_ref()
            .ok_or_else(|| Error::Config("missing required key `domain`".into()))?;
        match (self.locations, domain.len()) {
            (LocationsKind::Even, 1) => Ok(LocationSpec::Even1d {
                n,
                interval: domain[0],
            }),
            (LocationsKind::Uniform, 2) => Ok(LocationSpec::Uniform2d {
                n,
                bounds: [domain[0], domain[1]],
            }),
            (LocationsKind::Even, _) => Err(Error::Config(
                "`locations = even` needs a one-dimensional domain".into(),
            )),
            (LocationsKind::Uniform, _) => Err(Error::Config(
                "`locations = uniform` needs a two-dimensional domain".into(),
            )),
        }
    }

    pub fn weight_scheme(&self) -> Result<WeightScheme> {
        self.weights.scheme()
    }

    /// Selector settings, with the effective seed supplied by the caller
    /// (the CLI `--seed` flag overrides the config's).
    pub fn selector_config(&self, seed: u64) -> Result<crate::bandwidth::SelectorConfig> {
        let mut sc = crate::bandwidth::SelectorConfig::new(self.weight_scheme()?, seed);
        sc.boundary_corrected = self.boundary_correction;
        sc.max_neighbors = self.max_neighbors;
        sc.replicates = self.replicates;
        sc.theta_grid = self.theta_grid;
        Ok(sc)
    }

    /// The polynomial prior for Bayes-risk commands.
    pub fn prior_spec(&self) -> Result<PriorSpec> {
        let (c0, var, terms) = self
            .prior
            .ok_or_else(|| Error::Config("missing required key `prior`".into()))?;
        PriorSpec::gaussian(c0, vec![var; terms])
    }
}

/// Names of the built-in presets, in order.
pub const PRESET_NAMES: [&str; 6] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6"];

/// Look up a built-in preset by name.
///
/// The presets are the bundled reference experiments: `fig1` simulates and
/// estimates a variance-modulated field, `fig2`/`fig3` evaluate exact Bayes
/// risk (kernel heat map and risk-versus-bandwidth curves), `fig4`/`fig5`
/// run the bandwidth selectors against the oracle on rough and smooth
/// fields, and `fig6` estimates a two-dimensional smoothness surface (at a
/// reduced size so it runs on a desk machine).
pub fn preset(name: &str) -> Option<&'static str> {
    match name {
        "fig1" => Some(
            "# Variance-modulated field: sigma(t) W(t) on [0, 0.1].\n\
             family = variance\n\
             field = 2*sin(t/0.015) + 2.8\n\
             sigma2 = 1\n\
             nu = 0.8\n\
             rho = 0.2\n\
             locations = even\n\
             n = 200\n\
             domain = 0,0.1\n\
             weights = k6\n\
             lambda = 0.01\n\
             lambda_grid = auto\n\
             grid = 64\n\
             oracle = true\n\
             seed = 1\n",
        ),
        "fig2" => Some(
            "# Exact Bayes risk: percent improvement of K6 over hard\n\
             # thresholding, each at its own risk-minimizing bandwidth.\n\
             family = variance\n\
             locations = even\n\
             n = 100\n\
             domain = 0,1\n\
             risk_mode = heatmap\n\
             target = 0.5\n\
             prior = 2,4,4\n\
             kernel_a = k6\n\
             kernel_b = hard\n\
             nu_grid = 0.5,2,3\n\
             rho_grid = 0.4,1.2,3\n\
             lambda_grid = 0.01,0.5,40\n\
             seed = 2\n",
        ),
        "fig3" => Some(
            "# Exact Bayes risk against bandwidth for five kernels.\n\
             family = variance\n\
             sigma2 = 1\n\
             nu = 0.8\n\
             rho = 0.8\n\
             locations = even\n\
             n = 150\n\
             domain = 0,1\n\
             risk_mode = curves\n\
             target = 0.5\n\
             prior = 2,4,4\n\
             kernels = k2,k4,k6,k8,hard\n\
             lambda_grid = 0.01,0.6,60\n\
             seed = 3\n",
        ),
        "fig4" => Some(
            "# Bandwidth selection on a rough variance-modulated field.\n\
             family = variance\n\
             field = 2*sin(t/0.015) + 2.8\n\
             sigma2 = 1\n\
             nu = 0.5\n\
             rho = 0.5\n\
             locations = even\n\
             n = 1000\n\
             domain = 0,0.1\n\
             weights = k6\n\
             lambda_grid = auto\n\
             replicates = 50\n\
             grid = 64\n\
             oracle = true\n\
             seed = 4\n",
        ),
        "fig5" => Some(
            "# Same selection experiment on a smoother field (nu = 1).\n\
             family = variance\n\
             field = 2*sin(t/0.015) + 2.8\n\
             sigma2 = 1\n\
             nu = 1\n\
             rho = 0.5\n\
             locations = even\n\
             n = 1000\n\
             domain = 0,0.1\n\
             weights = k6\n\
             lambda_grid = auto\n\
             replicates = 50\n\
             grid = 64\n\
             oracle = true\n\
             seed = 5\n",
        ),
        "fig6" => Some(
            "# Two-dimensional smoothness surface (reduced size: 800\n\
             # observations, 150-neighbor cap, 8x8 estimation grid).\n\
             family = smoothness\n\
             field = 1.5 + 0.9*cos(pi*(x+y)/2)\n\
             sigma2 = 1\n\
             rho = 0.5\n\
             bounds = 0.5,2.5\n\
             locations = uniform\n\
             n = 800\n\
             domain = 0,1,0,1\n\
             weights = constrained\n\
             boundary_correction = true\n\
             max_neighbors = 150\n\
             lambda_grid = auto,12\n\
             replicates = 50\n\
             theta_grid = 32\n\
             grid = 8,8\n\
             oracle = true\n\
             seed = 6\n",
        ),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn expressions_parse_and_evaluate() {
        let e = Expr::parse("2*sin(t/0.015) + 2.8").unwrap();
        assert_eq!(e.dim_required(), 1);
        let t = Location::new_1d(0.0377);
        assert_relative_eq!(
            e.eval(&t),
            2.0 * (0.0377f64 / 0.015).sin() + 2.8,
            max_relative = 1e-15
        );

        let e = Expr::parse("1.5 + 0.9*cos(pi*x)*cos(pi*y)").unwrap();
        assert_eq!(e.dim_required(), 2);
        let p = Location::new_2d(0.3, 0.7);
        assert_relative_eq!(
            e.eval(&p),
            1.5 + 0.9
                * (std::f64::consts::PI * 0.3).cos()
                * (std::f64::consts::PI * 0.7).cos(),
            max_relative = 1e-15
        );

        // Precedence and unary minus.
        let t = Location::new_1d(2.0);
        assert_eq!(Expr::parse("1+2*3").unwrap().eval(&t), 7.0);
        assert_eq!(Expr::parse("(1+2)*3").unwrap().eval(&t), 9.0);
        assert_eq!(Expr::parse("-t*t").unwrap().eval(&t), -4.0);
        assert_eq!(Expr::parse("6/3/2").unwrap().eval(&t), 1.0);
        assert_eq!(Expr::parse("1 - 2 - 3").unwrap().eval(&t), -4.0);
        assert_eq!(Expr::parse("1.5e-2").unwrap().eval(&t), 0.015);

        // The field wrapper evaluates identically.
        let e = Expr::parse("t*t + 1").unwrap();
        assert_eq!(e.to_field().eval(&t), 5.0);
    }

    #[test]
    fn expression_errors() {
        assert!(Expr::parse("").is_err());
        assert!(Expr::parse("2 +").is_err());
        assert!(Expr::parse("sin t").is_err());
        assert!(Expr::parse("(1+2").is_err());
        assert!(Expr::parse("1+2)").is_err());
        assert!(Expr::parse("foo(1)").is_err());
        assert!(Expr::parse("1 $ 2").is_err());
        assert!(Expr::parse("1..5").is_err());
    }

    #[test]
    fn config_parses_a_full_file() {
        let text = "\
# comment
family = smoothness
field = 1 + x*y
sigma2 = 1.5
rho = 0.5
bounds = 0.5,2.5
locations = uniform
n = 80
domain = 0,1,0,2
weights = constrained
boundary_correction = true
max_neighbors = 40
lambda_grid = 0.1,0.9,7
replicates = 12
theta_grid = 9
grid = 4,5
oracle = true
seed = 42
out = results
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.family, Family::Smoothness);
        assert_eq!(cfg.n, Some(80));
        assert_eq!(cfg.domain.as_deref(), Some(&[(0.0, 1.0), (0.0, 2.0)][..]));
        assert_eq!(cfg.weights, WeightsKind::Constrained);
        assert!(cfg.boundary_correction);
        assert_eq!(cfg.max_neighbors, Some(40));
        assert_eq!(
            cfg.lambda_grid,
            LambdaGrid::LogRange {
                lo: 0.1,
                hi: 0.9,
                points: 7
            }
        );
        assert_eq!(cfg.replicates, 12);
        assert_eq!(cfg.grid.as_deref(), Some(&[4usize, 5][..]));
        assert!(cfg.oracle);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.out.as_deref(), Some(Path::new("results")));
        assert_eq!(cfg.text(), text);

        let fam = cfg.family_def().unwrap();
        assert_eq!(fam.bounds(), (0.5, 2.5));
        let sc = cfg.selector_config(7).unwrap();
        assert_eq!(sc.replicates, 12);
        assert_eq!(sc.theta_grid, 9);
        assert_eq!(sc.seed, 7);
        assert!(sc.boundary_corrected);
        let spec = cfg.location_spec().unwrap();
        assert!(matches!(spec, LocationSpec::Uniform2d { n: 80, .. }));
        let truth = cfg.truth_model().unwrap();
        assert!(matches!(truth, NonstatModel::SmoothnessOnly { .. }));
    }

    #[test]
    fn config_rejects_unknown_duplicate_and_malformed_keys() {
        assert!(matches!(
            ExperimentConfig::parse("bandwidth = 3\n").unwrap_err(),
            Error::Config(m) if m.contains("unknown configuration key `bandwidth`")
        ));
        assert!(matches!(
            ExperimentConfig::parse("seed = 1\nseed = 2\n").unwrap_err(),
            Error::Config(m) if m.contains("duplicate key `seed`")
        ));
        assert!(ExperimentConfig::parse("seed\n").is_err());
        assert!(ExperimentConfig::parse("seed =\n").is_err());
        assert!(ExperimentConfig::parse("n = -3\n").is_err());
        assert!(ExperimentConfig::parse("weights = k5\n").is_err());
        assert!(ExperimentConfig::parse("domain = 1,0\n").is_err());
        assert!(ExperimentConfig::parse("domain = 0,1,2\n").is_err());
        assert!(ExperimentConfig::parse("bounds = 0,1\n").is_err());
        assert!(ExperimentConfig::parse("prior = 2,0,4\n").is_err());
        // A 2-d field over a 1-d domain is caught at parse time.
        assert!(ExperimentConfig::parse("field = x*y\ndomain = 0,1\n").is_err());
    }

    #[test]
    fn weights_kinds_map_to_schemes() {
        assert!(matches!(
            WeightsKind::K6.kernel_spec().unwrap(),
            KernelSpec::HigherOrder(3)
        ));
        assert!(matches!(
            WeightsKind::Hard.kernel_spec().unwrap(),
            KernelSpec::HardThreshold
        ));
        assert!(WeightsKind::Constrained.kernel_spec().is_err());
        assert!(matches!(
            WeightsKind::Constrained.scheme().unwrap(),
            WeightScheme::Constrained
        ));
        assert_eq!(WeightsKind::parse("k8").unwrap(), WeightsKind::K8);
        assert_eq!(WeightsKind::K8.name(), "k8");
    }

    #[test]
    fn presets_parse_and_are_self_consistent() {
        for name in PRESET_NAMES {
            let text = preset(name).unwrap();
            let cfg = ExperimentConfig::parse(text)
                .unwrap_or_else(|e| panic!("preset {name}: {e}"));
            cfg.location_spec()
                .unwrap_or_else(|e| panic!("preset {name} locations: {e}"));
            match name {
                "fig2" | "fig3" => {
                    cfg.prior_spec()
                        .unwrap_or_else(|e| panic!("preset {name} prior: {e}"));
                    assert!(cfg.target.is_some());
                    if name == "fig2" {
                        assert_eq!(cfg.risk_mode, RiskMode::Heatmap);
                        assert!(cfg.kernel_a.is_some() && cfg.kernel_b.is_some());
                        assert!(cfg.nu_grid.is_some() && cfg.rho_grid.is_some());
                    } else {
                        assert_eq!(cfg.risk_mode, RiskMode::Curves);
                        assert!(cfg.kernels.as_ref().is_some_and(|k| k.len() == 5));
                    }
                }
                _ => {
                    cfg.family_def()
                        .unwrap_or_else(|e| panic!("preset {name} family: {e}"));
                    cfg.truth_model()
                        .unwrap_or_else(|e| panic!("preset {name} truth: {e}"));
                }
            }
        }
        assert!(preset("fig7").is_none());

        // fig6 is the two-dimensional reduced experiment.
        let fig6 = ExperimentConfig::parse(preset("fig6").unwrap()).unwrap();
        assert_eq!(fig6.family, Family::Smoothness);
        assert_eq!(fig6.max_neighbors, Some(150));
        assert_eq!(fig6.n, Some(800));
        assert_eq!(fig6.grid.as_deref(), Some(&[8usize, 8][..]));
        let truth = fig6.truth_model().unwrap();
        // nu(0.5, 0.5) = 1.5 + 0.9 cos(pi/2)^2 = 1.5 at the center.
        if let NonstatModel::SmoothnessOnly { nu, .. } = truth {
            assert_relative_eq!(
                nu.eval(&Location::new_2d(0.0, 0.0)),
                2.4,
                max_relative = 1e-12
            );
            assert_relative_eq!(
                nu.eval(&Location::new_2d(1.0, 0.0)),
                0.6,
                max_relative = 1e-12
            );
        } else {
            panic!("fig6 truth should vary the smoothness");
        }
    }

    #[test]
    fn resolve_prefers_files_and_falls_back_to_presets() {
        let cfg = ExperimentConfig::resolve("fig1").unwrap();
        assert_eq!(cfg.n, Some(200));
        assert!(matches!(
            ExperimentConfig::resolve("no-such-config").unwrap_err(),
            Error::Config(m) if m.contains("preset")
        ));
        let dir = std::env::temp_dir().join("locfield-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("fig1");
        std::fs::write(&path, "family = variance\nnu = 0.7\nrho = 0.3\n").unwrap();
        let on_disk = ExperimentConfig::resolve(path.to_str().unwrap()).unwrap();
        assert_eq!(on_disk.nu, Some(0.7));
        std::fs::remove_file(&path).unwrap();
    }
}
