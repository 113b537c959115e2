//! Dense-KKT primal-dual interior-point solver for second-order cone programs.
//!
//! Problems are stated in the standard form
//!
//! ```text
//! minimize    c^T x
//! subject to  A x = b
//!             G x + s = h,   s in K
//! ```
//!
//! where `K` is a product of nonnegative orthants and second-order cones
//! `{(t, u) : t >= ||u||_2}`. The solver uses Nesterov-Todd scaling with a
//! Mehrotra predictor-corrector step and an infeasible start; it is meant for
//! strictly feasible problems with a bounded optimal set.

mod cones;
mod ipm;

pub use ipm::solve;

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::scalar::Real;

/// One block of the cone `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    Nonnegative(usize),
    /// `(t, u)` with `t >= ||u||`; the dimension includes `t`.
    SecondOrder(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Nonnegative(d) | Cone::SecondOrder(d) => d,
        }
    }

    /// Contribution to the barrier degree.
    pub fn degree(&self) -> usize {
        match *self {
            Cone::Nonnegative(d) => d,
            Cone::SecondOrder(_) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem<T> {
    pub c: Vec<T>,
    pub a: CsrMatrix<T>,
    pub b: Vec<T>,
    pub g: CsrMatrix<T>,
    pub h: Vec<T>,
    pub cones: Vec<Cone>,
}

impl<T: Real> Problem<T> {
    pub fn new(
        c: Vec<T>,
        a: CsrMatrix<T>,
        b: Vec<T>,
        g: CsrMatrix<T>,
        h: Vec<T>,
        cones: Vec<Cone>,
    ) -> Result<Self> {
        let n = c.len();
        let check = |expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::Dimension { expected, actual })
            }
        };
        check(n, a.cols())?;
        check(n, g.cols())?;
        check(a.rows(), b.len())?;
        check(g.rows(), h.len())?;
        check(g.rows(), cones.iter().map(Cone::dim).sum())?;
        if cones.iter().any(|k| k.dim() == 0) {
            return Err(Error::Domain("zero-dimensional cone".into()));
        }
        Ok(Self { c, a, b, g, h, cones })
    }

    pub fn num_variables(&self) -> usize {
        self.c.len()
    }

    pub fn num_equalities(&self) -> usize {
        self.b.len()
    }

    pub fn cone_dim(&self) -> usize {
        self.h.len()
    }

    pub fn degree(&self) -> usize {
        self.cones.iter().map(Cone::degree).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings<T> {
    pub max_iterations: usize,
    /// Relative primal and dual residual tolerance.
    pub feasibility_tolerance: T,
    pub absolute_gap_tolerance: T,
    pub relative_gap_tolerance: T,
    /// Looser tolerance accepted as `NearOptimal` when the solver stalls.
    pub reduced_tolerance: T,
    /// Fraction of the step to the cone boundary.
    pub step_fraction: T,
}

impl<T: Real> Default for Settings<T> {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            feasibility_tolerance: T::tolerance(1e-10),
            absolute_gap_tolerance: T::tolerance(1e-10),
            relative_gap_tolerance: T::tolerance(1e-10),
            reduced_tolerance: T::tolerance(1e-6),
            step_fraction: T::lit(0.99),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    NearOptimal,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub x: Vec<T>,
    /// Equality multipliers.
    pub y: Vec<T>,
    /// Cone multipliers.
    pub z: Vec<T>,
    /// Cone slacks, `s = h - G x`.
    pub s: Vec<T>,
    pub status: Status,
    pub iterations: usize,
    pub primal_objective: T,
    pub dual_objective: T,
    pub primal_residual: T,
    pub dual_residual: T,
    pub gap: T,
}
