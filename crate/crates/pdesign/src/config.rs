//! Flat `key = value` run configuration.
//!
//! One assignment per line, `#` starts a comment, unknown or duplicate keys
//! are errors. Required keys: `alpha`, `beta`, `p`, `kappa`, `domain`, `h`,
//! `f`. Everything else has defaults. `domain` takes one of
//!
//! ```text
//!     domain = rectangle x0 x1 y0 y1
//!     domain = disk cx cy R
//!     domain = polygon x0 y0 x1 y1 x2 y2 ...
//! ```
//!
//! and `f` one of `const <v>` or `expr <expression of x and y>`.

use crate::expr::LoadSpec;
use crate::geometry::{DomainShape, DomainSpec};
use crate::state_solver::SolveConfig;
use crate::{Error, Result};
use std::collections::BTreeSet;

/// Fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: DomainSpec,
    pub alpha: f64,
    pub beta: f64,
    pub p: f64,
    pub kappa: f64,
    pub load: LoadSpec,
    pub newton_tol: f64,
    pub max_iter: usize,
    pub armijo_c: f64,
    pub hessian_floor: f64,
    pub eps_schedule: Vec<f64>,
    pub restarts: usize,
    pub refine_levels: usize,
    pub laminate_delta: Vec<f64>,
    pub laminate_epsilon: Vec<f64>,
    pub seed: u64,
    pub threads: usize,
    pub log_iterations: bool,
    pub write_restart_fluxes: bool,
}

impl RunConfig {
    pub fn solver_config(&self) -> SolveConfig {
        SolveConfig {
            newton_tol: self.newton_tol,
            max_iter: self.max_iter,
            armijo_c: self.armijo_c,
            hessian_floor: self.hessian_floor,
            eps_schedule: self.eps_schedule.clone(),
            threads: self.threads,
            keep_log: self.log_iterations,
            ..SolveConfig::default()
        }
    }

    /// Resolved key/value pairs in canonical form, embedded into every
    /// summary for provenance.
    pub fn resolved_pairs(&self) -> Vec<(String, String)> {
        let fmt_list = |xs: &[f64]| {
            xs.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
        };
        let domain = match &self.domain.shape {
            DomainShape::Rectangle { x0, x1, y0, y1 } => {
                format!("rectangle {x0:?} {x1:?} {y0:?} {y1:?}")
            }
            DomainShape::Disk { cx, cy, r } => format!("disk {cx:?} {cy:?} {r:?}"),
            DomainShape::Polygon { vertices } => {
                let mut s = String::from("polygon");
                for v in vertices {
                    s.push_str(&format!(" {:?} {:?}", v[0], v[1]));
                }
                s
            }
        };
        vec![
            ("alpha".into(), format!("{:?}", self.alpha)),
            ("armijo_c".into(), format!("{:?}", self.armijo_c)),
            ("beta".into(), format!("{:?}", self.beta)),
            ("domain".into(), domain),
            ("eps_schedule".into(), fmt_list(&self.eps_schedule)),
            ("f".into(), self.load.display()),
            ("h".into(), format!("{:?}", self.domain.target_h)),
            ("hessian_floor".into(), format!("{:?}", self.hessian_floor)),
            ("kappa".into(), format!("{:?}", self.kappa)),
            ("laminate_delta".into(), fmt_list(&self.laminate_delta)),
            ("laminate_epsilon".into(), fmt_list(&self.laminate_epsilon)),
            ("log_iterations".into(), self.log_iterations.to_string()),
            ("max_iter".into(), self.max_iter.to_string()),
            ("newton_tol".into(), format!("{:?}", self.newton_tol)),
            ("p".into(), format!("{:?}", self.p)),
            ("refine_levels".into(), self.refine_levels.to_string()),
            ("restarts".into(), self.restarts.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("threads".into(), self.threads.to_string()),
            ("write_restart_fluxes".into(), self.write_restart_fluxes.to_string()),
        ]
    }
}

fn config_err(key: &str, message: impl Into<String>) -> Error {
    Error::Config { key: key.to_string(), message: message.into() }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>().map_err(|_| config_err(key, format!("expected a number, got `{v}`")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>().map_err(|_| config_err(key, format!("expected a count, got `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(config_err(key, format!("expected true/false, got `{v}`"))),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    let xs: Result<Vec<f64>> = v.split_whitespace().map(|t| parse_f64(key, t)).collect();
    let xs = xs?;
    if xs.is_empty() {
        return Err(config_err(key, "expected at least one number"));
    }
    Ok(xs)
}

/// Parses and validates a configuration. Unknown keys fail closed; every
/// constraint violation names the offending key.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    const KNOWN: &[&str] = &[
        "alpha",
        "armijo_c",
        "beta",
        "domain",
        "eps_schedule",
        "f",
        "h",
        "hessian_floor",
        "kappa",
        "laminate_delta",
        "laminate_epsilon",
        "log_iterations",
        "max_iter",
        "newton_tol",
        "p",
        "refine_levels",
        "restarts",
        "seed",
        "threads",
        "write_restart_fluxes",
    ];

    let mut seen = BTreeSet::new();
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            config_err("<line>", format!("line {}: expected `key = value`, got `{line}`", lineno + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        if !KNOWN.contains(&key) {
            return Err(config_err(key, "unknown key"));
        }
        if !seen.insert(key.to_string()) {
            return Err(config_err(key, "duplicate key"));
        }
        pairs.push((key.to_string(), value.to_string()));
    }
    let get = |k: &str| pairs.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
    let require = |k: &str| get(k).ok_or_else(|| config_err(k, "missing required key"));

    let alpha = parse_f64("alpha", require("alpha")?)?;
    let beta = parse_f64("beta", require("beta")?)?;
    let p = parse_f64("p", require("p")?)?;
    let kappa = parse_f64("kappa", require("kappa")?)?;
    let h = parse_f64("h", require("h")?)?;

    if !(alpha > 0.0) {
        return Err(config_err("alpha", format!("must be > 0, got {alpha}")));
    }
    if !(alpha < beta) {
        return Err(config_err("alpha", format!("must satisfy alpha < beta, got {alpha} >= {beta}")));
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(config_err("p", format!("must lie in (1, inf), got {p}")));
    }
    if !(kappa > 0.0) {
        return Err(config_err("kappa", format!("must be > 0, got {kappa}")));
    }
    if !(h > 0.0) {
        return Err(config_err("h", format!("must be > 0, got {h}")));
    }

    let domain_str = require("domain")?;
    let mut tokens = domain_str.split_whitespace();
    let shape = tokens.next().unwrap_or("");
    let nums: Result<Vec<f64>> = tokens.map(|t| parse_f64("domain", t)).collect();
    let nums = nums?;
    let domain = match (shape, nums.len()) {
        ("rectangle", 4) => DomainSpec::rectangle(nums[0], nums[1], nums[2], nums[3], h),
        ("disk", 3) => DomainSpec::disk(nums[0], nums[1], nums[2], h),
        ("polygon", n) if n >= 6 && n % 2 == 0 => {
            let vertices = nums.chunks(2).map(|c| [c[0], c[1]]).collect();
            DomainSpec::polygon(vertices, h)
        }
        _ => Err(Error::InvalidDomain(format!(
            "expected `rectangle x0 x1 y0 y1`, `disk cx cy R` or `polygon x y ...`, got `{domain_str}`"
        ))),
    }
    .map_err(|e| config_err("domain", e.to_string()))?;

    let f_str = require("f")?;
    let load = match f_str.split_once(char::is_whitespace) {
        Some(("const", v)) => LoadSpec::Const(parse_f64("f", v.trim())?),
        Some(("expr", e)) => LoadSpec::Expr(e.trim().to_string()),
        _ => return Err(config_err("f", format!("expected `const <v>` or `expr <...>`, got `{f_str}`"))),
    };
    let _ = load.compile()?; // validate now, fail closed

    let defaults = SolveConfig::default();
    let newton_tol = match get("newton_tol") {
        Some(v) => parse_f64("newton_tol", v)?,
        None => defaults.newton_tol,
    };
    if !(newton_tol > 0.0) {
        return Err(config_err("newton_tol", "must be > 0"));
    }
    let max_iter = match get("max_iter") {
        Some(v) => parse_usize("max_iter", v)?,
        None => defaults.max_iter,
    };
    if max_iter == 0 {
        return Err(config_err("max_iter", "must be >= 1"));
    }
    let armijo_c = match get("armijo_c") {
        Some(v) => parse_f64("armijo_c", v)?,
        None => defaults.armijo_c,
    };
    if !(armijo_c > 0.0 && armijo_c < 1.0) {
        return Err(config_err("armijo_c", "must lie in (0, 1)"));
    }
    let hessian_floor = match get("hessian_floor") {
        Some(v) => parse_f64("hessian_floor", v)?,
        None => defaults.hessian_floor,
    };
    if !(hessian_floor >= 0.0) {
        return Err(config_err("hessian_floor", "must be >= 0"));
    }
    let eps_schedule = match get("eps_schedule") {
        Some(v) => {
            let xs = parse_list("eps_schedule", v)?;
            for pair in xs.windows(2) {
                if pair[1] >= pair[0] {
                    return Err(config_err("eps_schedule", "must be strictly decreasing"));
                }
            }
            if xs.iter().any(|&e| e < 0.0 || e >= 1.0) {
                return Err(config_err("eps_schedule", "entries must lie in [0, 1)"));
            }
            xs
        }
        None => defaults.eps_schedule.clone(),
    };
    let restarts = match get("restarts") {
        Some(v) => parse_usize("restarts", v)?,
        None => 3,
    };
    let refine_levels = match get("refine_levels") {
        Some(v) => {
            let n = parse_usize("refine_levels", v)?;
            if n == 0 {
                return Err(config_err("refine_levels", "must be >= 1"));
            }
            n
        }
        None => 3,
    };
    let laminate_delta = match get("laminate_delta") {
        Some(v) => parse_list("laminate_delta", v)?,
        None => vec![0.25],
    };
    let laminate_epsilon = match get("laminate_epsilon") {
        Some(v) => parse_list("laminate_epsilon", v)?,
        None => vec![0.05, 0.025],
    };
    for (key, list) in [("laminate_delta", &laminate_delta), ("laminate_epsilon", &laminate_epsilon)] {
        if list.iter().any(|&v| v <= 0.0) {
            return Err(config_err(key, "entries must be > 0"));
        }
    }
    let seed = match get("seed") {
        Some(v) => v.parse::<u64>().map_err(|_| config_err("seed", "expected an unsigned integer"))?,
        None => 0,
    };
    let threads = match get("threads") {
        Some(v) => {
            let n = parse_usize("threads", v)?;
            if n == 0 {
                return Err(config_err("threads", "must be >= 1"));
            }
            n
        }
        None => 1,
    };
    let log_iterations = match get("log_iterations") {
        Some(v) => parse_bool("log_iterations", v)?,
        None => false,
    };
    let write_restart_fluxes = match get("write_restart_fluxes") {
        Some(v) => parse_bool("write_restart_fluxes", v)?,
        None => false,
    };

    Ok(RunConfig {
        domain,
        alpha,
        beta,
        p,
        kappa,
        load,
        newton_tol,
        max_iter,
        armijo_c,
        hessian_floor,
        eps_schedule,
        restarts,
        refine_levels,
        laminate_delta,
        laminate_epsilon,
        seed,
        threads,
        log_iterations,
        write_restart_fluxes,
    })
}
