//! A minimal finite-domain integer solver over interval domains.
//!
//! The solver knows exactly one constraint class, the product inequality
//! `c * U <= d * V` between two variables, which is all cardinality mediation
//! needs: the subset condition `m*[a,b] ⊆ n*[x,y]` and the intersection
//! condition each decompose into two such inequalities. Propagation is
//! bounds consistency iterated to fixpoint; search is depth-first labeling
//! in declaration order, trying values ascending, so solutions appear in
//! lexicographic order and the first one uses the fewest invocations.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Proof that the constraint set admits no assignment. A normal search
/// outcome, not a failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("constraints admit no assignment")]
pub struct Inconsistent;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("malformed interval [{lo}, {hi}]")]
    MalformedInterval { lo: u64, hi: u64 },
    #[error("search limits must be at least 1")]
    ZeroLimit,
}

/// A contiguous integer domain `[lo, hi]`, nonempty, with `lo >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Domain {
    pub lo: u64,
    pub hi: u64,
}

impl Domain {
    pub fn singleton(&self) -> Option<u64> {
        (self.lo == self.hi).then_some(self.lo)
    }

    pub fn size(&self) -> u64 {
        self.hi - self.lo + 1
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lo == self.hi {
            write!(f, "{{{}}}", self.lo)
        } else {
            write!(f, "[{}, {}]", self.lo, self.hi)
        }
    }
}

/// Handle to a variable within its problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarId(usize);

/// The constraint `left_coeff * left <= right_coeff * right`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ProductInequality {
    left_coeff: u64,
    left: usize,
    right_coeff: u64,
    right: usize,
}

/// A constraint problem: variables with interval domains plus product
/// inequalities. Build it up, then call [`Problem::propagate`] or iterate
/// [`Problem::solutions`].
#[derive(Debug, Clone, Default)]
pub struct Problem {
    names: Vec<String>,
    domains: Vec<Domain>,
    constraints: Vec<ProductInequality>,
}

impl Problem {
    pub fn new() -> Self {
        Problem::default()
    }

    /// Declare a variable with domain `[lo, hi]`; `lo >= 1` and `lo <= hi`.
    pub fn add_var(&mut self, name: impl Into<String>, lo: u64, hi: u64) -> Result<VarId, SolveError> {
        if lo < 1 {
            return Err(SolveError::ZeroLimit);
        }
        if lo > hi {
            return Err(SolveError::MalformedInterval { lo, hi });
        }
        self.names.push(name.into());
        self.domains.push(Domain { lo, hi });
        Ok(VarId(self.domains.len() - 1))
    }

    /// Post `left_coeff * left <= right_coeff * right`.
    pub fn add_le(&mut self, left_coeff: u64, left: VarId, right_coeff: u64, right: VarId) {
        self.constraints.push(ProductInequality {
            left_coeff,
            left: left.0,
            right_coeff,
            right: right.0,
        });
    }

    pub fn num_vars(&self) -> usize {
        self.domains.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Current (pre-propagation) domains in declaration order.
    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    /// Run bounds-consistency propagation to fixpoint on a copy of the
    /// domains. `Err(Inconsistent)` iff some domain empties.
    pub fn propagate(&self) -> Result<Vec<Domain>, Inconsistent> {
        let mut domains = self.domains.clone();
        self.propagate_into(&mut domains)?;
        Ok(domains)
    }

    /// Propagation over caller-held domains; used by labeling (and the
    /// planner's search) to revise a trail copy. For `c*U <= d*V` the
    /// revisions are `V.lo = max(V.lo, ceil(c*U.lo / d))` and
    /// `U.hi = min(U.hi, floor(d*V.hi / c))`, iterated until nothing
    /// changes. Arithmetic runs in u128 so coefficient products cannot wrap.
    pub(crate) fn propagate_into(&self, domains: &mut [Domain]) -> Result<(), Inconsistent> {
        loop {
            let mut changed = false;
            for c in &self.constraints {
                if c.left_coeff == 0 {
                    continue;
                }
                if c.right_coeff == 0 {
                    // c*U >= c > 0 can never be <= 0.
                    return Err(Inconsistent);
                }
                let (lc, rc) = (c.left_coeff as u128, c.right_coeff as u128);

                // Bounds are re-read at each revision: a constraint may name
                // the same variable on both sides.
                let min_right = (lc * domains[c.left].lo as u128).div_ceil(rc);
                if min_right > domains[c.right].hi as u128 {
                    return Err(Inconsistent);
                }
                if min_right > domains[c.right].lo as u128 {
                    domains[c.right].lo = min_right as u64;
                    changed = true;
                }

                let max_left = (rc * domains[c.right].hi as u128) / lc;
                if max_left < domains[c.left].lo as u128 {
                    return Err(Inconsistent);
                }
                if max_left < domains[c.left].hi as u128 {
                    domains[c.left].hi = max_left as u64;
                    changed = true;
                }
            }
            if !changed {
                return Ok(());
            }
        }
    }

    /// All solutions, lazily, in lexicographic order of the variables as
    /// declared (values ascending).
    pub fn solutions(&self) -> Solutions<'_> {
        let names: Arc<[String]> = self.names.clone().into();
        let mut stack = Vec::new();
        let mut exhausted = false;
        match self.propagate() {
            Err(Inconsistent) => exhausted = true,
            Ok(domains) => {
                if self.domains.is_empty() {
                    // Zero variables: the empty assignment is the one solution.
                } else {
                    let first = domains[0].lo as u128;
                    stack.push(Frame {
                        domains,
                        next: first,
                    });
                }
            }
        }
        Solutions {
            problem: self,
            names,
            stack,
            exhausted,
            empty_pending: self.domains.is_empty() && !exhausted,
        }
    }

    /// First solution in lexicographic order, if any.
    pub fn first_solution(&self) -> Option<Assignment> {
        self.solutions().next()
    }
}

/// One solution: every variable fixed, all constraints satisfied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    names: Arc<[String]>,
    values: Vec<u64>,
}

impl Assignment {
    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<u64> {
        let idx = self.names.iter().position(|n| n == name)?;
        Some(self.values[idx])
    }
}

struct Frame {
    /// Propagated domains with all shallower variables fixed.
    domains: Vec<Domain>,
    /// Next value to try for the variable at this depth. u128 so stepping
    /// past u64::MAX terminates cleanly.
    next: u128,
}

/// Depth-first labeling iterator; see [`Problem::solutions`].
pub struct Solutions<'a> {
    problem: &'a Problem,
    names: Arc<[String]>,
    stack: Vec<Frame>,
    exhausted: bool,
    empty_pending: bool,
}

impl Iterator for Solutions<'_> {
    type Item = Assignment;

    fn next(&mut self) -> Option<Assignment> {
        if self.exhausted {
            return None;
        }
        if self.empty_pending {
            self.empty_pending = false;
            self.exhausted = true;
            return Some(Assignment {
                names: self.names.clone(),
                values: Vec::new(),
            });
        }
        let nvars = self.problem.num_vars();
        while !self.stack.is_empty() {
            let depth = self.stack.len() - 1;
            let frame = self.stack.last_mut().expect("stack nonempty");
            let value = frame.next;
            if value > frame.domains[depth].hi as u128 {
                self.stack.pop();
                continue;
            }
            frame.next = value + 1;
            let value = value as u64;

            let mut domains = frame.domains.clone();
            domains[depth] = Domain { lo: value, hi: value };
            if self.problem.propagate_into(&mut domains).is_err() {
                continue;
            }
            if depth + 1 == nvars {
                // Every variable is a singleton here, so propagation success
                // means all constraints hold exactly.
                return Some(Assignment {
                    names: self.names.clone(),
                    values: domains.iter().map(|d| d.lo).collect(),
                });
            }
            let first = domains[depth + 1].lo as u128;
            self.stack.push(Frame {
                domains,
                next: first,
            });
        }
        self.exhausted = true;
        None
    }
}

/// Smallest `(m, n)` in lexicographic order with `m*[a,b] ⊆ n*[x,y]`,
/// i.e. `n*x <= m*a` and `m*b <= n*y`, within `1 <= m <= mmax`,
/// `1 <= n <= nmax`. `None` when no such pair exists.
pub fn basic_mediation(
    a: u64,
    b: u64,
    x: u64,
    y: u64,
    mmax: u64,
    nmax: u64,
) -> Result<Option<(u64, u64)>, SolveError> {
    let (problem, m, n) = mediation_problem(a, b, x, y, mmax, nmax)?;
    let mut problem = problem;
    problem.add_le(x, n, a, m); // n*x <= m*a
    problem.add_le(b, m, y, n); // m*b <= n*y
    Ok(problem.first_solution().map(|s| (s.values()[0], s.values()[1])))
}

/// Smallest `(m, n)` in lexicographic order with
/// `m*[a,b] ∩ n*[x,y] ≠ ∅`, i.e. `n*x <= m*b` and `m*a <= n*y`.
pub fn probable_mediation(
    a: u64,
    b: u64,
    x: u64,
    y: u64,
    mmax: u64,
    nmax: u64,
) -> Result<Option<(u64, u64)>, SolveError> {
    let (problem, m, n) = mediation_problem(a, b, x, y, mmax, nmax)?;
    let mut problem = problem;
    problem.add_le(x, n, b, m); // n*x <= m*b
    problem.add_le(a, m, y, n); // m*a <= n*y
    Ok(problem.first_solution().map(|s| (s.values()[0], s.values()[1])))
}

fn mediation_problem(
    a: u64,
    b: u64,
    x: u64,
    y: u64,
    mmax: u64,
    nmax: u64,
) -> Result<(Problem, VarId, VarId), SolveError> {
    if a > b {
        return Err(SolveError::MalformedInterval { lo: a, hi: b });
    }
    if x > y {
        return Err(SolveError::MalformedInterval { lo: x, hi: y });
    }
    if mmax < 1 || nmax < 1 {
        return Err(SolveError::ZeroLimit);
    }
    let mut problem = Problem::new();
    let m = problem.add_var("M", 1, mmax)?;
    let n = problem.add_var("N", 1, nmax)?;
    Ok((problem, m, n))
}
