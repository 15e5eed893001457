//! Which XDD sequences stateless Add/Skip/Replace switches can realise, and
//! the action probability array (APA) that realises them.
//!
//! A sequence is feasible iff for every `2 <= i <= K` and `1 <= d <= i-1`
//!
//! ```text
//! q_{i-1}(d) >= q_i(d) + q_i(d+1)
//! ```
//!
//! which, multiplied through by `C(i-1, d)`, is checked here in mu-space as
//! `mu_{i-1}(d) >= mu_i(d) (i-d)/i + mu_i(d+1) (d+1)/i`. The APA entry for a
//! codeword of degree `d` arriving at switch `i` is
//! `p_A = q_i(d+1)/q_{i-1}(d)`, `p_S = q_i(d)/q_{i-1}(d)`, `p_R = 1 - p_A - p_S`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::xdd::{add_ratio, mu_to_q, skip_ratio, Xdd, XddSequence};

/// Largest diameter [`exact_induced_sequence`] will enumerate (`3^11` action vectors).
pub const MAX_ENUMERATION_DIAMETER: usize = 12;

/// One violated inequality. For [`check_feasible`] the sides are
/// `lhs = q_{i-1}(d)` and `rhs = q_i(d) + q_i(d+1)`; for
/// [`check_invariant_feasible`] they are `mu(d)` and `(d+1)/d * mu(d+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation<T> {
    pub hop: usize,
    pub degree: usize,
    pub lhs: T,
    pub rhs: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport<T> {
    pub feasible: bool,
    pub violations: Vec<Violation<T>>,
}

impl<T: Scalar> FeasibilityReport<T> {
    fn from_violations(violations: Vec<Violation<T>>) -> Self {
        Self {
            feasible: violations.is_empty(),
            violations,
        }
    }

    pub fn to_f64(&self) -> FeasibilityReport<f64> {
        FeasibilityReport {
            feasible: self.feasible,
            violations: self
                .violations
                .iter()
                .map(|v| Violation {
                    hop: v.hop,
                    degree: v.degree,
                    lhs: v.lhs.to_f64(),
                    rhs: v.rhs.to_f64(),
                })
                .collect(),
        }
    }
}

impl fmt::Display for FeasibilityReport<f64> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.feasible {
            return writeln!(f, "feasible");
        }
        writeln!(f, "infeasible: {} violation(s)", self.violations.len())?;
        for v in &self.violations {
            writeln!(
                f,
                "  i={} d={} lhs={:.17e} rhs={:.17e}",
                v.hop, v.degree, v.lhs, v.rhs
            )?;
        }
        Ok(())
    }
}

/// Checks every hop-to-hop inequality of a sequence.
pub fn check_feasible<T: Scalar>(seq: &XddSequence<T>) -> FeasibilityReport<T> {
    let tol = T::slack_tolerance();
    let mut violations = Vec::new();
    for i in 2..=seq.diameter() {
        let prev = seq.hop(i - 1);
        let cur = seq.hop(i);
        for d in 1..i {
            let need = cur.mass(d).clone() * T::ratio(i - d, i)
                + cur.mass(d + 1).clone() * T::ratio(d + 1, i);
            if prev.mass(d).clone() - need < -tol.clone() {
                violations.push(q_space_violation(prev, cur, i, d));
            }
        }
    }
    FeasibilityReport::from_violations(violations)
}

fn q_space_violation<T: Scalar>(prev: &Xdd<T>, cur: &Xdd<T>, i: usize, d: usize) -> Violation<T> {
    let q = |x: &Xdd<T>, d| mu_to_q(x, d).expect("degree in range");
    Violation {
        hop: i,
        degree: d,
        lhs: q(prev, d),
        rhs: q(cur, d) + q(cur, d + 1),
    }
}

/// Feasibility of the invariant sequence generated by `mu_K`:
/// `mu(d) >= (d+1)/d * mu(d+1)` for `d = 1..=K-2`.
pub fn check_invariant_feasible<T: Scalar>(mu: &Xdd<T>) -> FeasibilityReport<T> {
    let tol = T::slack_tolerance();
    let k = mu.k();
    let mut violations = Vec::new();
    for d in 1..k.saturating_sub(1) {
        let rhs = mu.mass(d + 1).clone() * T::ratio(d + 1, d);
        if mu.mass(d).clone() - rhs.clone() < -tol.clone() {
            violations.push(Violation {
                hop: k,
                degree: d,
                lhs: mu.mass(d).clone(),
                rhs,
            });
        }
    }
    FeasibilityReport::from_violations(violations)
}

/// The three switch actions. Discriminants are the on-disk AVST codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    Skip = 0,
    Add = 1,
    Replace = 2,
}

impl Action {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Action::Skip),
            1 => Some(Action::Add),
            2 => Some(Action::Replace),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Action::Skip => 'S',
            Action::Add => 'A',
            Action::Replace => 'R',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionProbs<T> {
    pub add: T,
    pub skip: T,
    pub replace: T,
}

impl<T: Scalar> ActionProbs<T> {
    pub fn replace_only() -> Self {
        Self {
            add: T::zero(),
            skip: T::zero(),
            replace: T::one(),
        }
    }

    pub fn of(&self, action: Action) -> &T {
        match action {
            Action::Add => &self.add,
            Action::Skip => &self.skip,
            Action::Replace => &self.replace,
        }
    }
}

impl ActionProbs<f64> {
    /// Realised action for a uniform draw `nu`: Add on `[0, pA)`, Replace on
    /// `[pA, pA + pR)`, Skip otherwise. Encoders and the decoder's replay both
    /// go through here so the two can never disagree.
    #[inline]
    pub fn choose(&self, nu: f64) -> Action {
        if nu < self.add {
            Action::Add
        } else if nu < self.add + self.replace {
            Action::Replace
        } else {
            Action::Skip
        }
    }
}

/// An APA cell. `Unreachable` marks `(i, d)` with `mu_{i-1}(d) = 0`: no
/// codeword of degree `d` ever reaches switch `i`, so no probabilities exist.
#[derive(Debug, Clone, PartialEq)]
pub enum ApaEntry<T> {
    Reachable(ActionProbs<T>),
    Unreachable,
}

/// Action probability array. Hop 1 has the single entry for the empty
/// codeword (degree 0), always Replace; hop `i >= 2` has entries for
/// `d = 1..=i-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Apa<T> {
    rows: Vec<Vec<ApaEntry<T>>>,
}

impl<T: Scalar> Apa<T> {
    /// Builds from raw rows, checking shape and that each triple is a
    /// distribution within the scalar's tolerance.
    pub fn from_rows(rows: Vec<Vec<ApaEntry<T>>>) -> Result<Self> {
        Self::from_rows_with_tolerance(rows, &T::sum_tolerance())
    }

    pub fn from_rows_with_tolerance(rows: Vec<Vec<ApaEntry<T>>>, tol: &T) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::MalformedSequence("APA has no hops".into()));
        }
        let tol = tol.clone();
        for (idx, row) in rows.iter().enumerate() {
            let i = idx + 1;
            let want = if i == 1 { 1 } else { i - 1 };
            if row.len() != want {
                return Err(Error::MalformedSequence(format!(
                    "APA hop {i} has {} entries, expected {want}",
                    row.len()
                )));
            }
            for entry in row {
                if let ApaEntry::Reachable(p) = entry {
                    let parts = [&p.add, &p.skip, &p.replace];
                    let sum = parts.iter().fold(T::zero(), |a, b| a + (*b).clone());
                    if parts.iter().any(|x| **x < -tol.clone())
                        || (sum - T::one()).abs() > tol
                    {
                        return Err(Error::MalformedSequence(format!(
                            "APA hop {i} has a triple that is not a distribution"
                        )));
                    }
                }
            }
        }
        match &rows[0][0] {
            ApaEntry::Reachable(p) if *p == ActionProbs::replace_only() => {}
            _ => {
                return Err(Error::MalformedSequence(
                    "hop 1 must always replace".into(),
                ))
            }
        }
        Ok(Self { rows })
    }

    pub fn diameter(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<ApaEntry<T>>] {
        &self.rows
    }

    /// Raw cell for switch `i` seeing degree `d` (`d = 0` only at `i = 1`).
    pub fn cell(&self, i: usize, d: usize) -> Result<&ApaEntry<T>> {
        if i == 0 || i > self.rows.len() {
            return Err(Error::range("hop", i, 1, self.rows.len()));
        }
        let idx = if i == 1 {
            if d != 0 {
                return Err(Error::range("degree", d, 0, 0));
            }
            0
        } else {
            if d == 0 || d >= i {
                return Err(Error::range("degree", d, 1, i - 1));
            }
            d - 1
        };
        Ok(&self.rows[i - 1][idx])
    }

    /// Probabilities for switch `i` seeing degree `d`; consulting an
    /// unreachable cell is a protocol invariant violation.
    pub fn entry(&self, i: usize, d: usize) -> Result<&ActionProbs<T>> {
        match self.cell(i, d)? {
            ApaEntry::Reachable(p) => Ok(p),
            ApaEntry::Unreachable => Err(Error::UnreachableState { hop: i, degree: d }),
        }
    }

    pub fn convert<U: Scalar>(&self) -> Apa<U> {
        let conv = |p: &ActionProbs<T>| ActionProbs {
            add: U::from_f64(p.add.to_f64()),
            skip: U::from_f64(p.skip.to_f64()),
            replace: U::from_f64(p.replace.to_f64()),
        };
        Apa {
            rows: self
                .rows
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|e| match e {
                            ApaEntry::Reachable(p) => ApaEntry::Reachable(conv(p)),
                            ApaEntry::Unreachable => ApaEntry::Unreachable,
                        })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn to_f64(&self) -> Apa<f64> {
        self.convert()
    }
}

/// Derives the APA realising a feasible sequence.
pub fn derive_apa<T: Scalar>(seq: &XddSequence<T>) -> Result<Apa<T>> {
    let report = check_feasible(seq);
    if !report.feasible {
        return Err(Error::Infeasible(Box::new(report.to_f64())));
    }
    let tol = T::slack_tolerance();
    let mut rows = Vec::with_capacity(seq.diameter());
    rows.push(vec![ApaEntry::Reachable(ActionProbs::replace_only())]);
    for i in 2..=seq.diameter() {
        let prev = seq.hop(i - 1);
        let cur = seq.hop(i);
        let mut row = Vec::with_capacity(i - 1);
        for d in 1..i {
            let denom = prev.mass(d);
            if denom.is_zero() {
                if *cur.mass(d) > tol || *cur.mass(d + 1) > tol {
                    return Err(Error::Consistency(format!(
                        "mu_{}({d}) = 0 but hop {i} needs mass from it",
                        i - 1
                    )));
                }
                row.push(ApaEntry::Unreachable);
                continue;
            }
            let mut add = add_ratio(cur.mass(d + 1), denom, i, d).clamp_nonneg();
            let mut skip = skip_ratio(cur.mass(d), denom, i, d).clamp_nonneg();
            let total = add.clone() + skip.clone();
            // On a facet p_R is zero in exact arithmetic; rounding may leave
            // a sliver that would lead packets into unreachable states.
            let replace = if total > T::one() || T::one() - total.clone() < T::sum_tolerance() {
                add = add / total.clone();
                skip = skip / total;
                T::zero()
            } else {
                T::one() - total
            };
            row.push(ApaEntry::Reachable(ActionProbs { add, skip, replace }));
        }
        rows.push(row);
    }
    Ok(Apa { rows })
}

/// Exact probability of every XOR-set after each hop, obtained by walking
/// all `3^(K-1)` action vectors. `result[i-1][mask]` is the probability that
/// the codeword leaving switch `i` is the XOR over the hops in `mask` (bit
/// `j-1` set for hop `j`).
///
/// Zero-probability prefixes are not expanded, so unreachable APA cells are
/// never consulted.
pub fn exact_set_distribution<T: Scalar>(apa: &Apa<T>, diameter: usize) -> Result<Vec<Vec<T>>> {
    let max = MAX_ENUMERATION_DIAMETER.min(apa.diameter());
    if diameter == 0 || diameter > max {
        return Err(Error::range("K", diameter, 1, max));
    }
    let mut dist: Vec<Vec<T>> = (1..=diameter).map(|i| vec![T::zero(); 1 << i]).collect();
    // Hop 1 always replaces the empty codeword.
    walk(apa, diameter, 1, 0b1, 1, T::one(), &mut dist)?;
    Ok(dist)
}

fn walk<T: Scalar>(
    apa: &Apa<T>,
    diameter: usize,
    hop: usize,
    mask: u32,
    degree: usize,
    prob: T,
    dist: &mut [Vec<T>],
) -> Result<()> {
    let slot = &mut dist[hop - 1][mask as usize];
    *slot = slot.clone() + prob.clone();
    if hop == diameter {
        return Ok(());
    }
    let next = hop + 1;
    let probs = apa.entry(next, degree)?;
    let bit = 1u32 << hop;
    for (action, m, d) in [
        (Action::Add, mask | bit, degree + 1),
        (Action::Skip, mask, degree),
        (Action::Replace, bit, 1),
    ] {
        let p = prob.clone() * probs.of(action).clone();
        if !p.is_zero() {
            walk(apa, diameter, next, m, d, p, dist)?;
        }
    }
    Ok(())
}

/// The XDD sequence an APA induces on paths of length `1..=diameter`,
/// verifying along the way that same-size XOR-sets are equiprobable.
pub fn exact_induced_sequence<T: Scalar>(apa: &Apa<T>, diameter: usize) -> Result<XddSequence<T>> {
    let dist = exact_set_distribution(apa, diameter)?;
    let tol = T::uniformity_tolerance();
    let mut rows = Vec::with_capacity(diameter);
    for (idx, sets) in dist.iter().enumerate() {
        let i = idx + 1;
        let mut lo: Vec<Option<T>> = vec![None; i + 1];
        let mut hi: Vec<Option<T>> = vec![None; i + 1];
        let mut mass = vec![T::zero(); i];
        if !sets[0].is_zero() {
            return Err(Error::Consistency(format!("empty codeword after hop {i}")));
        }
        for (mask, p) in sets.iter().enumerate().skip(1) {
            let d = mask.count_ones() as usize;
            mass[d - 1] = mass[d - 1].clone() + p.clone();
            if lo[d].as_ref().is_none_or(|l| p < l) {
                lo[d] = Some(p.clone());
            }
            if hi[d].as_ref().is_none_or(|h| p > h) {
                hi[d] = Some(p.clone());
            }
        }
        for d in 1..=i {
            let spread = hi[d].clone().unwrap() - lo[d].clone().unwrap();
            if spread > tol {
                return Err(Error::Uniformity {
                    hop: i,
                    degree: d,
                    spread: spread.to_f64(),
                });
            }
        }
        rows.push(Xdd::with_tolerance(mass, &T::sum_tolerance())?);
    }
    XddSequence::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{ideal_soliton_sequence, shifted_soliton, shifted_soliton_sequence};
    use crate::scalar::{exact, Exact};

    fn triple(a: Exact, s: Exact, r: Exact) -> ActionProbs<Exact> {
        ActionProbs {
            add: a,
            skip: s,
            replace: r,
        }
    }

    #[test]
    fn shifted_soliton_three_is_feasible() {
        let seq = shifted_soliton_sequence::<Exact>(3).unwrap();
        assert!(check_feasible(&seq).feasible);
        // q_2(1) = 1/4 against q_3(1) + q_3(2) = 1/6 + 1/18 = 2/9.
        let tables = seq.to_q_tables();
        assert_eq!(tables[1][0], exact(1, 4));
        assert_eq!(tables[2][0].clone() + tables[2][1].clone(), exact(2, 9));
    }

    #[test]
    fn ideal_soliton_three_violation_is_exact() {
        let seq = ideal_soliton_sequence::<Exact>(3).unwrap();
        let report = check_feasible(&seq);
        assert!(!report.feasible);
        assert_eq!(
            report.violations,
            vec![Violation {
                hop: 3,
                degree: 1,
                lhs: exact(1, 4),
                rhs: exact(5, 18)
            }]
        );
        assert!(matches!(derive_apa(&seq), Err(Error::Infeasible(_))));
    }

    #[test]
    fn single_hop_has_no_constraints() {
        let seq = XddSequence::from_masses(vec![vec![1.0]]).unwrap();
        let report = check_feasible(&seq);
        assert!(report.feasible && report.violations.is_empty());
        let apa = derive_apa(&seq).unwrap();
        assert_eq!(apa.diameter(), 1);
        assert_eq!(apa.entry(1, 0).unwrap(), &ActionProbs::replace_only());
        assert!(apa.entry(2, 1).is_err());
    }

    #[test]
    fn invariant_feasibility_examples() {
        let ss = shifted_soliton::<Exact>(40).unwrap();
        assert!(check_invariant_feasible(&ss).feasible);

        let bad = Xdd::new(vec![0.2_f64, 0.8, 0.0]).unwrap();
        let report = check_invariant_feasible(&bad);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].degree, 1);
        assert!((report.violations[0].rhs - 1.6).abs() < 1e-15);

        let two = Xdd::new(vec![0.1, 0.9]).unwrap();
        assert!(check_invariant_feasible(&two).feasible);
    }

    #[test]
    fn apa_examples_exact() {
        let apa = derive_apa(&shifted_soliton_sequence::<Exact>(3).unwrap()).unwrap();
        assert_eq!(apa.entry(1, 0).unwrap(), &ActionProbs::replace_only());
        assert_eq!(
            apa.entry(2, 1).unwrap(),
            &triple(exact(1, 2), exact(1, 4), exact(1, 4))
        );
        assert_eq!(
            apa.entry(3, 1).unwrap(),
            &triple(exact(2, 9), exact(2, 3), exact(1, 9))
        );
        assert_eq!(
            apa.entry(3, 2).unwrap(),
            &triple(exact(2, 3), exact(1, 9), exact(2, 9))
        );

        let two = XddSequence::from_masses(vec![
            vec![exact(1, 1)],
            vec![exact(1, 2), exact(1, 2)],
        ])
        .unwrap();
        let apa = derive_apa(&two).unwrap();
        assert_eq!(
            apa.entry(2, 1).unwrap(),
            &triple(exact(1, 2), exact(1, 4), exact(1, 4))
        );
    }

    #[test]
    fn apa_triples_are_distributions() {
        let apa = derive_apa(&shifted_soliton_sequence::<f64>(80).unwrap()).unwrap();
        for row in apa.rows() {
            for e in row {
                let ApaEntry::Reachable(p) = e else { continue };
                assert!(p.add >= 0.0 && p.skip >= 0.0 && p.replace >= 0.0);
                assert!((p.add + p.skip + p.replace - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn unreachable_cells_are_sentinels() {
        // mu_2 puts nothing on degree 2, so a degree-2 codeword never reaches hop 3.
        let seq = XddSequence::from_masses(vec![
            vec![exact(1, 1)],
            vec![exact(1, 1), exact(0, 1)],
            vec![exact(1, 1), exact(0, 1), exact(0, 1)],
        ])
        .unwrap();
        let apa = derive_apa(&seq).unwrap();
        assert_eq!(apa.cell(3, 2).unwrap(), &ApaEntry::Unreachable);
        assert!(matches!(
            apa.entry(3, 2),
            Err(Error::UnreachableState { hop: 3, degree: 2 })
        ));
        // Pure reservoir sampling: replace with probability 1/i.
        assert_eq!(
            apa.entry(3, 1).unwrap(),
            &triple(exact(0, 1), exact(2, 3), exact(1, 3))
        );
        assert_eq!(exact_induced_sequence(&apa, 3).unwrap(), seq);
    }

    #[test]
    fn enumeration_reproduces_shifted_soliton_exactly() {
        let seq = shifted_soliton_sequence::<Exact>(3).unwrap();
        let apa = derive_apa(&seq).unwrap();
        assert_eq!(exact_induced_sequence(&apa, 3).unwrap(), seq);

        let seq = shifted_soliton_sequence::<Exact>(7).unwrap();
        let apa = derive_apa(&seq).unwrap();
        assert_eq!(exact_induced_sequence(&apa, 7).unwrap(), seq);
    }

    #[test]
    fn enumeration_hop_one_only() {
        let apa = Apa::<f64>::from_rows(vec![vec![ApaEntry::Reachable(
            ActionProbs::replace_only(),
        )]])
        .unwrap();
        let seq = exact_induced_sequence(&apa, 1).unwrap();
        assert_eq!(seq.hop(1).masses(), &[1.0]);
        assert!(exact_induced_sequence(&apa, 2).is_err());
    }

    #[test]
    fn enumeration_detects_non_uniform_apa() {
        // Never replaces at hop 2, so {2} alone is unreachable while {1} is not.
        let rows = vec![
            vec![ApaEntry::Reachable(ActionProbs::replace_only())],
            vec![ApaEntry::Reachable(triple(exact(1, 2), exact(1, 2), exact(0, 1)))],
            vec![
                ApaEntry::Reachable(triple(exact(0, 1), exact(1, 1), exact(0, 1))),
                ApaEntry::Reachable(triple(exact(0, 1), exact(1, 1), exact(0, 1))),
            ],
        ];
        let apa = Apa::from_rows(rows).unwrap();
        assert!(matches!(
            exact_induced_sequence(&apa, 3),
            Err(Error::Uniformity { hop: 2, .. })
        ));
    }

    #[test]
    fn malformed_apa_rows_rejected() {
        let rows = vec![vec![ApaEntry::Reachable(ActionProbs {
            add: 0.5,
            skip: 0.0,
            replace: 0.5,
        })]];
        assert!(Apa::from_rows(rows).is_err());
        let rows = vec![
            vec![ApaEntry::Reachable(ActionProbs::replace_only())],
            vec![ApaEntry::Reachable(ActionProbs {
                add: 0.7,
                skip: 0.7,
                replace: 0.0,
            })],
        ];
        assert!(Apa::from_rows(rows).is_err());
    }

    #[test]
    fn choose_follows_add_replace_skip_order() {
        let p = ActionProbs {
            add: 2.0 / 9.0,
            skip: 2.0 / 3.0,
            replace: 1.0 / 9.0,
        };
        assert_eq!(p.choose(0.1), Action::Add);
        assert_eq!(p.choose(0.3), Action::Replace);
        assert_eq!(p.choose(0.95), Action::Skip);
        assert_eq!(p.choose(2.0 / 9.0), Action::Replace);
    }
}
