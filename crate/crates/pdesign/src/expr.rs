//! Load specifications: constants or expressions over x and y.

use crate::{Error, Result};

/// A load as configured: `const <v>` or `expr <expression>`.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadSpec {
    Const(f64),
    Expr(String),
}

impl LoadSpec {
    /// The constant value, if this load is constant.
    pub fn as_const(&self) -> Option<f64> {
        match self {
            LoadSpec::Const(v) => Some(*v),
            LoadSpec::Expr(_) => None,
        }
    }

    /// Compiles to a function of (x, y). Expression syntax is the usual
    /// arithmetic with `x`, `y`, `pi`, `e` and the standard functions
    /// (sin, cos, exp, sqrt, abs, ...).
    pub fn compile(&self) -> Result<Box<dyn Fn(f64, f64) -> f64>> {
        match self {
            LoadSpec::Const(v) => {
                let v = *v;
                Ok(Box::new(move |_, _| v))
            }
            LoadSpec::Expr(text) => {
                let expr: meval::Expr = text.parse().map_err(|e| Error::Config {
                    key: "f".into(),
                    message: format!("cannot parse expression `{text}`: {e}"),
                })?;
                let func = expr.bind2("x", "y").map_err(|e| Error::Config {
                    key: "f".into(),
                    message: format!("expression `{text}` must use only x and y: {e}"),
                })?;
                Ok(Box::new(func))
            }
        }
    }

    /// Canonical config-file form.
    pub fn display(&self) -> String {
        match self {
            LoadSpec::Const(v) => format!("const {v:?}"),
            LoadSpec::Expr(text) => format!("expr {text}"),
        }
    }
}
