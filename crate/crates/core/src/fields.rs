//! Space–time data fields: constants, parsed expressions in `t, x, y`, or
//! Rust closures.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Point;

thread_local! {
    static BUILTINS: meval::Context<'static> = meval::Context::new();
}

/// A parsed arithmetic expression in the variables `t`, `x`, `y`, with the
/// usual functions (`sin`, `exp`, `sqrt`, …) and constants `pi`, `e`.
#[derive(Clone)]
pub struct Expression {
    source: String,
    expr: meval::Expr,
}

impl Expression {
    pub fn parse(source: &str) -> Result<Self> {
        let expr: meval::Expr =
            source.parse().map_err(|e| Error::invalid(format!("cannot parse expression `{source}`: {e}")))?;
        let parsed = Self { source: source.trim().to_string(), expr };
        // Unknown variables and functions only surface on evaluation.
        parsed.try_eval(0.0, [0.5, 0.5])?;
        Ok(parsed)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn try_eval(&self, t: f64, x: Point) -> Result<f64> {
        BUILTINS
            .with(|ctx| self.expr.eval_with_context((("t", t), (("x", x[0]), (("y", x[1]), ctx)))))
            .map_err(|e| Error::invalid(format!("cannot evaluate `{}`: {e}", self.source)))
    }

    /// Evaluates at `(t, x)`; evaluation errors were excluded at parse time,
    /// domain errors give NaN.
    pub fn eval(&self, t: f64, x: Point) -> f64 {
        self.try_eval(t, x).unwrap_or(f64::NAN)
    }
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression({:?})", self.source)
    }
}

pub type ScalarFn = Arc<dyn Fn(f64, Point) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum ScalarField {
    Constant(f64),
    Expr(Expression),
    Func(ScalarFn),
}

impl ScalarField {
    pub fn func(f: impl Fn(f64, Point) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField::Func(Arc::new(f))
    }

    pub fn eval(&self, t: f64, x: Point) -> f64 {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Expr(e) => e.eval(t, x),
            ScalarField::Func(f) => f(t, x),
        }
    }

    /// Parses a number as a constant, anything else as an expression.
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().parse::<f64>() {
            Ok(v) => Ok(ScalarField::Constant(v)),
            Err(_) => Ok(ScalarField::Expr(Expression::parse(text)?)),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ScalarField::Constant(c) => format!("{c}"),
            ScalarField::Expr(e) => e.source().to_string(),
            ScalarField::Func(_) => "<function>".into(),
        }
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField({})", self.describe())
    }
}

impl serde::Serialize for ScalarField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ScalarField::Constant(c) => s.serialize_f64(*c),
            _ => s.serialize_str(&self.describe()),
        }
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct VectorField(pub ScalarField, pub ScalarField);

impl VectorField {
    pub fn zero() -> Self {
        VectorField(ScalarField::Constant(0.0), ScalarField::Constant(0.0))
    }

    pub fn func(f: impl Fn(f64, Point) -> Point + Send + Sync + 'static) -> Self {
        let f = Arc::new(f);
        let g = f.clone();
        VectorField(ScalarField::func(move |t, x| f(t, x)[0]), ScalarField::func(move |t, x| g(t, x)[1]))
    }

    pub fn eval(&self, t: f64, x: Point) -> Point {
        [self.0.eval(t, x), self.1.eval(t, x)]
    }

    pub fn is_zero(&self) -> bool {
        matches!((&self.0, &self.1), (ScalarField::Constant(a), ScalarField::Constant(b)) if *a == 0.0 && *b == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expressions_evaluate() {
        let e = Expression::parse("1 + 0.9*sin(pi*x)*sin(pi*y)").unwrap();
        assert!((e.eval(0.0, [0.5, 0.5]) - 1.9).abs() < 1e-15);
        let e = Expression::parse("t*x - y^2").unwrap();
        assert_eq!(e.eval(2.0, [3.0, 1.0]), 5.0);
    }

    #[test]
    fn bad_expressions_are_rejected() {
        assert!(Expression::parse("sin(").is_err());
        assert!(Expression::parse("z + 1").is_err());
        assert!(Expression::parse("foo(x)").is_err());
    }

    #[test]
    fn fields_are_thread_safe() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<ScalarField>();
        let f = ScalarField::parse("x + y").unwrap();
        let handles: Vec<_> = (0..4)
            .map(|i| {
                let f = f.clone();
                std::thread::spawn(move || f.eval(0.0, [i as f64, 1.0]))
            })
            .collect();
        let v: Vec<f64> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert_eq!(v, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn constants_and_closures() {
        assert!(matches!(ScalarField::parse(" 2.5 ").unwrap(), ScalarField::Constant(c) if c == 2.5));
        let v = VectorField::func(|t, x| [t + x[0], x[1]]);
        assert_eq!(v.eval(1.0, [2.0, 3.0]), [3.0, 3.0]);
        assert!(VectorField::zero().is_zero() && !v.is_zero());
        assert_eq!(serde_json::to_string(&ScalarField::parse("x").unwrap()).unwrap(), "\"x\"");
    }
}
