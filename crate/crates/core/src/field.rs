//! Velocity fields `a : R^n -> R^n` driving the characteristic flow.

use crate::coefficients::expr::{Bindings, Expr};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub trait VectorField<S: Real>: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `a(x)` into `out`.
    fn eval(&self, x: &[S], out: &mut [S]) -> Result<()>;

    fn value(&self, x: &[S]) -> Result<Vec<S>> {
        let mut out = vec![S::zero(); self.dim()];
        self.eval(x, &mut out)?;
        Ok(out)
    }

    fn speed(&self, x: &[S]) -> Result<S> {
        Ok(crate::scalar::norm(&self.value(x)?))
    }
}

/// Spatially uniform velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantField<S> {
    pub velocity: Vec<S>,
}

impl<S: Real> ConstantField<S> {
    pub fn new(velocity: Vec<S>) -> Self {
        ConstantField { velocity }
    }
}

impl<S: Real> VectorField<S> for ConstantField<S> {
    fn dim(&self) -> usize {
        self.velocity.len()
    }

    fn eval(&self, _x: &[S], out: &mut [S]) -> Result<()> {
        out.copy_from_slice(&self.velocity);
        Ok(())
    }
}

/// Velocity given by a closure.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<S: Real, F> VectorField<S> for FnField<F>
where
    F: Fn(&[S], &mut [S]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[S], out: &mut [S]) -> Result<()> {
        (self.f)(x, out);
        Ok(())
    }
}

/// Velocity with one expression per component, in the variables `x1..xn`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprField {
    components: Vec<Expr>,
}

impl ExprField {
    pub fn new(components: Vec<Expr>) -> Self {
        ExprField { components }
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }
}

impl<S: Real> VectorField<S> for ExprField {
    fn dim(&self) -> usize {
        self.components.len()
    }

    fn eval(&self, x: &[S], out: &mut [S]) -> Result<()> {
        let b = Bindings::x(x);
        for (k, (e, o)) in self.components.iter().zip(out.iter_mut()).enumerate() {
            *o = e.eval(&b).map_err(|source| Error::Expression {
                context: format!("velocity component {} at {:?}", k + 1, x),
                source,
            })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expression_field_matches_closure() {
        let e = ExprField::new(vec![Expr::parse("-x2").unwrap(), Expr::parse("x1").unwrap()]);
        let c = FnField::new(2, |x: &[f64], out: &mut [f64]| {
            out[0] = -x[1];
            out[1] = x[0];
        });
        let x = [0.3, -0.7];
        assert_eq!(e.value(&x).unwrap(), c.value(&x).unwrap());
        assert!((VectorField::<f64>::speed(&e, &x).unwrap() - (0.58f64).sqrt()).abs() < 1e-15);
    }
}
