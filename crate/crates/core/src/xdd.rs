//! XOR degree distributions and XDD sequences.
//!
//! Degrees are 1-based throughout: `Xdd::mass(d)` is the probability that a
//! codeword is the XOR of exactly `d` distinct message blocks, `1 <= d <= k`.
//!
//! Under the uniformity condition every size-`d` subset of `[k]` is equally
//! likely, each with probability `q_k(d) = mu_k(d) / C(k, d)`. Those `q`
//! values underflow quickly, so the feasibility and APA code never forms them;
//! it uses the cancelled ratios [`add_ratio`] and [`skip_ratio`] instead.

use std::fmt;


use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One problem found by [`validate_xdd`].
#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    Empty,
    NotFinite { degree: usize },
    Negative { degree: usize, mass: f64 },
    AboveOne { degree: usize, mass: f64 },
    Sum { sum: f64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::Empty => write!(f, "no degrees"),
            ValidationIssue::NotFinite { degree } => write!(f, "mass at d={degree} is not finite"),
            ValidationIssue::Negative { degree, mass } => {
                write!(f, "negative mass {mass} at d={degree}")
            }
            ValidationIssue::AboveOne { degree, mass } => {
                write!(f, "mass {mass} above one at d={degree}")
            }
            ValidationIssue::Sum { sum } => write!(f, "masses sum to {sum}"),
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "valid");
        }
        for (n, issue) in self.issues.iter().enumerate() {
            if n > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// Checks `mass` against the distribution invariants with the scalar's
/// construction tolerance.
pub fn validate_xdd<T: Scalar>(mass: &[T]) -> ValidationReport {
    validate_with_tolerance(mass, &T::sum_tolerance())
}

pub fn validate_with_tolerance<T: Scalar>(mass: &[T], tol: &T) -> ValidationReport {
    let mut issues = Vec::new();
    if mass.is_empty() {
        issues.push(ValidationIssue::Empty);
        return ValidationReport { issues };
    }
    let one = T::one();
    let mut sum = T::zero();
    for (idx, m) in mass.iter().enumerate() {
        let degree = idx + 1;
        let as_f64 = m.to_f64();
        if !T::EXACT && !as_f64.is_finite() {
            issues.push(ValidationIssue::NotFinite { degree });
            continue;
        }
        if *m < -tol.clone() {
            issues.push(ValidationIssue::Negative {
                degree,
                mass: as_f64,
            });
        } else if *m > one.clone() + tol.clone() {
            issues.push(ValidationIssue::AboveOne {
                degree,
                mass: as_f64,
            });
        }
        sum = sum + m.clone();
    }
    if (sum.clone() - one).abs() > *tol {
        issues.push(ValidationIssue::Sum { sum: sum.to_f64() });
    }
    ValidationReport { issues }
}

/// Probability mass function over XOR degrees `1..=k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Xdd<T> {
    mass: Vec<T>,
}

impl<T: Scalar> Xdd<T> {
    /// Validates with the scalar's construction tolerance.
    pub fn new(mass: Vec<T>) -> Result<Self> {
        Self::with_tolerance(mass, &T::sum_tolerance())
    }

    pub fn with_tolerance(mass: Vec<T>, tol: &T) -> Result<Self> {
        let report = validate_with_tolerance(&mass, tol);
        if report.is_valid() {
            Ok(Self { mass })
        } else {
            Err(Error::Validation(report))
        }
    }

    /// All mass on degree `d`.
    pub fn point(k: usize, d: usize) -> Result<Self> {
        if d == 0 || d > k {
            return Err(Error::range("degree", d, 1, k.max(1)));
        }
        let mut mass = vec![T::zero(); k];
        mass[d - 1] = T::one();
        Ok(Self { mass })
    }

    /// Block size (path length) this distribution is defined for.
    pub fn k(&self) -> usize {
        self.mass.len()
    }

    /// `mu(d)`, 1-based. Panics when `d` is out of `1..=k`.
    pub fn mass(&self, d: usize) -> &T {
        &self.mass[d - 1]
    }

    pub fn masses(&self) -> &[T] {
        &self.mass
    }

    pub fn into_masses(self) -> Vec<T> {
        self.mass
    }

    /// Probability of one specific size-`d` XOR-set.
    pub fn q(&self, d: usize) -> Result<T> {
        mu_to_q(self, d)
    }

    pub fn convert<U: Scalar>(&self) -> Xdd<U> {
        Xdd {
            mass: self.mass.iter().map(|m| U::from_f64(m.to_f64())).collect(),
        }
    }

    pub fn to_f64(&self) -> Xdd<f64> {
        self.convert()
    }

    pub fn mean_degree(&self) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .map(|(i, m)| (i + 1) as f64 * m.to_f64())
            .sum()
    }
}

/// `mu(d) / C(k, d)`.
pub fn mu_to_q<T: Scalar>(xdd: &Xdd<T>, d: usize) -> Result<T> {
    let k = xdd.k();
    if d == 0 || d > k {
        return Err(Error::range("degree", d, 1, k));
    }
    if T::EXACT {
        return Ok(xdd.mass(d).clone() / T::binomial(k, d));
    }
    // Float path: divide in log space so C(k, d) never materialises.
    let m = xdd.mass(d).to_f64();
    if m == 0.0 {
        return Ok(T::zero());
    }
    let ln_c = crate::binomial::binomial_log(k as u64, d as u64)?;
    Ok(T::from_f64(m.signum() * (m.abs().ln() - ln_c).exp()))
}

/// `q_i(d+1) / q_{i-1}(d)` from mu-values: `mu_i(d+1) / mu_{i-1}(d) * (d+1) / i`.
///
/// Callers pass the numerator and denominator masses; the combinatorial
/// factor comes from `C(i-1, d) / C(i, d+1) = (d+1) / i`.
pub fn add_ratio<T: Scalar>(mu_i_next: &T, mu_prev: &T, i: usize, d: usize) -> T {
    mu_i_next.clone() * T::ratio(d + 1, i) / mu_prev.clone()
}

/// `q_i(d) / q_{i-1}(d)` from mu-values: `mu_i(d) / mu_{i-1}(d) * (i-d) / i`.
pub fn skip_ratio<T: Scalar>(mu_i: &T, mu_prev: &T, i: usize, d: usize) -> T {
    mu_i.clone() * T::ratio(i - d, i) / mu_prev.clone()
}

/// The per-path-length XDDs `mu_1, ..., mu_K` of a distributed code.
#[derive(Debug, Clone, PartialEq)]
pub struct XddSequence<T> {
    xdds: Vec<Xdd<T>>,
}

impl<T: Scalar> XddSequence<T> {
    pub fn new(xdds: Vec<Xdd<T>>) -> Result<Self> {
        if xdds.is_empty() {
            return Err(Error::MalformedSequence("empty sequence".into()));
        }
        for (idx, x) in xdds.iter().enumerate() {
            if x.k() != idx + 1 {
                return Err(Error::MalformedSequence(format!(
                    "entry {} has block size {}, expected {}",
                    idx + 1,
                    x.k(),
                    idx + 1
                )));
            }
        }
        Ok(Self { xdds })
    }

    /// Validates every row with the scalar's construction tolerance.
    pub fn from_masses(rows: Vec<Vec<T>>) -> Result<Self> {
        Self::from_masses_with_tolerance(rows, &T::sum_tolerance())
    }

    pub fn from_masses_with_tolerance(rows: Vec<Vec<T>>, tol: &T) -> Result<Self> {
        let xdds = rows
            .into_iter()
            .map(|r| Xdd::with_tolerance(r, tol))
            .collect::<Result<Vec<_>>>()?;
        Self::new(xdds)
    }

    /// Builds from per-hop `q` tables (`tables[i-1][d-1] = q_i(d)`).
    pub fn from_q_tables(tables: &[Vec<T>]) -> Result<Self> {
        let rows = tables
            .iter()
            .enumerate()
            .map(|(idx, row)| {
                let i = idx + 1;
                if row.len() != i {
                    return Err(Error::MalformedSequence(format!(
                        "q table for hop {i} has {} entries",
                        row.len()
                    )));
                }
                Ok(row
                    .iter()
                    .enumerate()
                    .map(|(j, q)| q.clone() * T::binomial(i, j + 1))
                    .collect())
            })
            .collect::<Result<Vec<Vec<T>>>>()?;
        Self::from_masses(rows)
    }

    pub fn to_q_tables(&self) -> Vec<Vec<T>> {
        self.xdds
            .iter()
            .map(|x| (1..=x.k()).map(|d| mu_to_q(x, d).expect("d in range")).collect())
            .collect()
    }

    /// Network diameter `K`.
    pub fn diameter(&self) -> usize {
        self.xdds.len()
    }

    /// `mu_i`, 1-based. Panics when `i` is out of `1..=K`.
    pub fn hop(&self, i: usize) -> &Xdd<T> {
        &self.xdds[i - 1]
    }

    /// `mu_K`.
    pub fn last(&self) -> &Xdd<T> {
        self.xdds.last().expect("non-empty")
    }

    pub fn xdds(&self) -> &[Xdd<T>] {
        &self.xdds
    }

    pub fn iter(&self) -> impl Iterator<Item = &Xdd<T>> {
        self.xdds.iter()
    }

    pub fn convert<U: Scalar>(&self) -> XddSequence<U> {
        XddSequence {
            xdds: self.xdds.iter().map(Xdd::convert).collect(),
        }
    }

    pub fn to_f64(&self) -> XddSequence<f64> {
        self.convert()
    }

    /// Largest elementwise `|a - b|`, or `None` when diameters differ.
    pub fn max_abs_diff(&self, other: &Self) -> Option<f64> {
        if self.diameter() != other.diameter() {
            return None;
        }
        let mut worst = 0.0f64;
        for (a, b) in self.xdds.iter().zip(&other.xdds) {
            for (x, y) in a.masses().iter().zip(b.masses()) {
                worst = worst.max((x.clone() - y.clone()).abs().to_f64());
            }
        }
        Some(worst)
    }
}
