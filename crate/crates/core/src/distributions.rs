//! Named degree distributions and the baseline XDD sequences built from them.


use crate::binomial::binomial_log;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::xdd::{Xdd, XddSequence};

fn require_positive(what: &'static str, k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::range(what, 0, 1, usize::MAX))
    } else {
        Ok(())
    }
}

/// `mu_k(d) = 1 / (d (d+1))` for `d < k` and `mu_k(k) = 1 / k`.
///
/// The masses telescope: `sum_{d<k} 1/(d(d+1)) = 1 - 1/k`, so the row sums to
/// one exactly in rational arithmetic.
pub fn shifted_soliton<T: Scalar>(k: usize) -> Result<Xdd<T>> {
    require_positive("k", k)?;
    let mut mass: Vec<T> = (1..k).map(|d| T::ratio(1, d * (d + 1))).collect();
    mass.push(T::ratio(1, k));
    Xdd::new(mass)
}

pub fn shifted_soliton_sequence<T: Scalar>(diameter: usize) -> Result<XddSequence<T>> {
    require_positive("K", diameter)?;
    XddSequence::new(
        (1..=diameter)
            .map(shifted_soliton)
            .collect::<Result<Vec<_>>>()?,
    )
}

/// Ideal Soliton: `rho(1) = 1/k`, `rho(d) = 1 / (d (d-1))` for `2 <= d <= k`.
pub fn ideal_soliton<T: Scalar>(k: usize) -> Result<Xdd<T>> {
    require_positive("k", k)?;
    let mut mass = Vec::with_capacity(k);
    mass.push(T::ratio(1, k));
    mass.extend((2..=k).map(|d| T::ratio(1, d * (d - 1))));
    Xdd::new(mass)
}

/// Ideal Soliton truncated at every path length `1..=K`. Not feasible for
/// `K >= 3`; kept as the canonical counterexample.
pub fn ideal_soliton_sequence<T: Scalar>(diameter: usize) -> Result<XddSequence<T>> {
    require_positive("K", diameter)?;
    XddSequence::new(
        (1..=diameter)
            .map(ideal_soliton)
            .collect::<Result<Vec<_>>>()?,
    )
}

pub const ROBUST_SOLITON_C: f64 = 0.1;
pub const ROBUST_SOLITON_DELTA: f64 = 0.5;

/// Robust Soliton with shape `c` and failure probability `delta`.
///
/// `R = c ln(k/delta) sqrt(k)`; `tau(d) = R/(d k)` below the spike at
/// `m = floor(k/R)` (clamped to `1..=k`), `tau(m) = R ln(R/delta) / k`, and
/// the result is `(rho + tau)` normalised. A negative spike weight (possible
/// when `R < delta`) is dropped.
pub fn robust_soliton(k: usize, c: f64, delta: f64) -> Result<Xdd<f64>> {
    require_positive("k", k)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Parameter {
            what: "c",
            value: c,
            reason: "must be positive",
        });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Parameter {
            what: "delta",
            value: delta,
            reason: "must lie in (0, 1)",
        });
    }
    if k == 1 {
        return Xdd::new(vec![1.0]);
    }
    let kf = k as f64;
    let ripple = c * (kf / delta).ln() * kf.sqrt();
    let spike = ((kf / ripple).floor() as usize).clamp(1, k);
    let mut weights: Vec<f64> = ideal_soliton::<f64>(k)?.into_masses();
    for d in 1..spike {
        weights[d - 1] += ripple / (d as f64 * kf);
    }
    weights[spike - 1] += (ripple * (ripple / delta).ln() / kf).max(0.0);
    let total: f64 = weights.iter().sum();
    Xdd::new(weights.into_iter().map(|w| w / total).collect())
}

/// Parameters of the PINT baseline: with probability `alpha` a packet carries
/// one reservoir-sampled switch ID, otherwise each switch XORs its ID in with
/// probability `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PintParams<T> {
    pub alpha: T,
    pub p: T,
}

impl<T: Scalar> PintParams<T> {
    pub fn new(alpha: T, p: T) -> Result<Self> {
        if alpha < T::zero() || alpha > T::one() {
            return Err(Error::Parameter {
                what: "alpha",
                value: alpha.to_f64(),
                reason: "must lie in [0, 1]",
            });
        }
        if p <= T::zero() || p >= T::one() {
            return Err(Error::Parameter {
                what: "p",
                value: p.to_f64(),
                reason: "must lie in (0, 1)",
            });
        }
        Ok(Self { alpha, p })
    }

    pub fn to_f64(&self) -> PintParams<f64> {
        PintParams {
            alpha: self.alpha.to_f64(),
            p: self.p.to_f64(),
        }
    }
}

/// `Binomial(k, p)` including the empty codeword at index 0.
pub fn binomial_pmf<T: Scalar>(k: usize, p: &T) -> Vec<T> {
    if T::EXACT {
        let q = T::one() - p.clone();
        return (0..=k)
            .map(|d| T::binomial(k, d) * num_traits::pow(p.clone(), d) * num_traits::pow(q.clone(), k - d))
            .collect();
    }
    let pf = p.to_f64();
    let (lp, lq) = (pf.ln(), (-pf).ln_1p());
    (0..=k)
        .map(|d| {
            let lc = binomial_log(k as u64, d as u64).expect("d <= k");
            T::from_f64((lc + d as f64 * lp + (k - d) as f64 * lq).exp())
        })
        .collect()
}

/// PINT's delivered XDD at path length `k`, conditioned on a nonempty
/// codeword: `alpha * delta_1 + (1 - alpha) * Binomial(k, p | d >= 1)`.
pub fn pint_xdd<T: Scalar>(k: usize, params: &PintParams<T>) -> Result<Xdd<T>> {
    require_positive("k", k)?;
    let pmf = binomial_pmf(k, &params.p);
    let nonempty = T::one() - pmf[0].clone();
    let rest = T::one() - params.alpha.clone();
    let mut mass: Vec<T> = pmf[1..]
        .iter()
        .map(|m| rest.clone() * m.clone() / nonempty.clone())
        .collect();
    mass[0] = mass[0].clone() + params.alpha.clone();
    Xdd::new(mass)
}

pub fn pint_sequence<T: Scalar>(diameter: usize, params: &PintParams<T>) -> Result<XddSequence<T>> {
    require_positive("K", diameter)?;
    XddSequence::new(
        (1..=diameter)
            .map(|k| pint_xdd(k, params))
            .collect::<Result<Vec<_>>>()?,
    )
}

/// Expands `mu_K` into the invariant sequence it parameterises:
/// `mu_i(d) = mu_K(d)` for `d < i`, with the tail `1 - sum_{d<i} mu_K(d)` on `d = i`.
pub fn expand_invariant<T: Scalar>(mu_k: &Xdd<T>) -> Result<XddSequence<T>> {
    let diameter = mu_k.k();
    let tol = T::sum_tolerance();
    let mut rows = Vec::with_capacity(diameter);
    let mut head = T::zero();
    for i in 1..=diameter {
        let tail = T::one() - head.clone();
        if tail < -tol.clone() {
            return Err(Error::NegativeTail {
                length: i,
                tail: tail.to_f64(),
            });
        }
        let mut row: Vec<T> = mu_k.masses()[..i - 1].to_vec();
        row.push(tail.clamp_nonneg());
        rows.push(Xdd::new(row)?);
        head = head + mu_k.mass(i).clone();
    }
    XddSequence::new(rows)
}

/// `true` when `mu_i(d)` does not depend on `i` for `d < i`, within `tol`.
pub fn is_invariant<T: Scalar>(seq: &XddSequence<T>, tol: &T) -> bool {
    let last = seq.last();
    seq.iter().all(|x| {
        (1..x.k()).all(|d| (x.mass(d).clone() - last.mass(d).clone()).abs() <= *tol)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{exact, Exact};
    use num_traits::One;

    #[test]
    fn shifted_soliton_examples() {
        let s3 = shifted_soliton_sequence::<Exact>(3).unwrap();
        assert_eq!(s3.hop(3).masses(), &[exact(1, 2), exact(1, 6), exact(1, 3)]);
        assert_eq!(s3.hop(1).masses(), &[exact(1, 1)]);
        let s4 = shifted_soliton::<Exact>(4).unwrap();
        assert_eq!(
            s4.masses(),
            &[exact(1, 2), exact(1, 6), exact(1, 12), exact(1, 4)]
        );
        assert!(matches!(shifted_soliton_sequence::<f64>(0), Err(Error::Range { .. })));
    }

    #[test]
    fn shifted_soliton_sums_exactly() {
        for k in 1..=200 {
            let x = shifted_soliton::<Exact>(k).unwrap();
            let s: Exact = x.masses().iter().cloned().sum();
            assert_eq!(s, Exact::one());
        }
    }

    #[test]
    fn ideal_soliton_examples() {
        assert_eq!(
            ideal_soliton::<Exact>(3).unwrap().masses(),
            &[exact(1, 3), exact(1, 2), exact(1, 6)]
        );
        assert_eq!(ideal_soliton::<Exact>(1).unwrap().masses(), &[exact(1, 1)]);
        assert_eq!(
            ideal_soliton::<Exact>(2).unwrap().masses(),
            &[exact(1, 2), exact(1, 2)]
        );
        assert!(ideal_soliton::<f64>(0).is_err());
    }

    /// Luby's formulas evaluated independently (offline) at k=10, c=0.1,
    /// delta=0.5: R = 0.947337..., spike at floor(10/R) = 10.
    #[test]
    fn robust_soliton_reference_table() {
        let want = [
            0.14657736705026445,
            0.4120072829333094,
            0.1492201888413999,
            0.080552308352515,
            0.051896713370598035,
            0.03697469448645804,
            0.02810827147084576,
            0.02235453515995183,
            0.018377229668598373,
            0.0539314086660594,
        ];
        let got = robust_soliton(10, 0.1, 0.5).unwrap();
        for (d, (g, w)) in got.masses().iter().zip(want).enumerate() {
            assert!((g - w).abs() < 1e-14, "d={}: {g} vs {w}", d + 1);
        }
        let mode = got
            .masses()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0
            + 1;
        assert_eq!(mode, 2);
    }

    #[test]
    fn robust_soliton_edges() {
        assert_eq!(robust_soliton(1, 0.1, 0.5).unwrap().masses(), &[1.0]);
        for k in 1..300 {
            assert!(robust_soliton(k, 0.1, 0.5).is_ok(), "k={k}");
            assert!(robust_soliton(k, 0.03, 0.05).is_ok(), "k={k}");
        }
        assert!(robust_soliton(10, 0.0, 0.5).is_err());
        assert!(robust_soliton(10, 0.1, 1.0).is_err());
    }

    #[test]
    fn pint_examples() {
        let params = PintParams::new(exact(1, 3), exact(1, 4)).unwrap();
        let s = pint_sequence(1, &params).unwrap();
        assert_eq!(s.hop(1).masses(), &[exact(1, 1)]);

        let pure_reservoir = PintParams::new(exact(1, 1), exact(1, 2)).unwrap();
        let s = pint_sequence(2, &pure_reservoir).unwrap();
        assert_eq!(s.hop(2).masses(), &[exact(1, 1), exact(0, 1)]);

        let pure_binomial = PintParams::new(exact(0, 1), exact(1, 2)).unwrap();
        let s = pint_sequence(2, &pure_binomial).unwrap();
        assert_eq!(s.hop(2).masses(), &[exact(2, 3), exact(1, 3)]);

        assert!(PintParams::new(1.5, 0.5).is_err());
        assert!(PintParams::new(0.5, 1.0).is_err());
    }

    #[test]
    fn pint_is_valid_for_large_k() {
        for &(alpha, p) in &[(0.0, 0.01), (0.3, 0.05), (0.9, 0.5), (0.0, 0.99)] {
            let params = PintParams::new(alpha, p).unwrap();
            let s = pint_sequence(300, &params).unwrap();
            assert_eq!(s.diameter(), 300);
        }
    }

    #[test]
    fn expand_invariant_examples() {
        let mu3 = shifted_soliton::<Exact>(3).unwrap();
        let seq = expand_invariant(&mu3).unwrap();
        assert_eq!(seq, shifted_soliton_sequence::<Exact>(3).unwrap());
        assert_eq!(seq.hop(2).masses(), &[exact(1, 2), exact(1, 2)]);

        let one = Xdd::<f64>::new(vec![1.0]).unwrap();
        assert_eq!(expand_invariant(&one).unwrap().diameter(), 1);
    }

    #[test]
    fn expand_invariant_matches_shifted_soliton_in_floats() {
        for k in [1, 2, 5, 36, 59, 236] {
            let seq = shifted_soliton_sequence::<f64>(k).unwrap();
            let expanded = expand_invariant(seq.last()).unwrap();
            assert!(seq.max_abs_diff(&expanded).unwrap() <= 1e-12);
            assert!(is_invariant(&expanded, &1e-15));
        }
        assert!(!is_invariant(&ideal_soliton_sequence::<f64>(4).unwrap(), &1e-9));
    }
}
