//! Code search.
//!
//! HRS walks backwards from a chosen `mu_K`, picking each predecessor
//! `mu_{i-1}` among random points of the feasible region by Monte-Carlo
//! decoding cost. QPS restricts itself to invariant sequences (fully given
//! by `mu_K`) and minimises a mean-field estimate of the decoding cost.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::binomial::LnBinomialTable;
use crate::distributions::{expand_invariant, robust_soliton, shifted_soliton, ROBUST_SOLITON_C, ROBUST_SOLITON_DELTA};
use crate::error::{Error, Result};
use crate::evaluation::{derive_seed, lt_mean_used};
use crate::feasibility::check_feasible;
use crate::scalar::Scalar;
use crate::xdd::{mu_to_q, Xdd, XddSequence};

/// Floor on `mu(1)` during QPS; the objective is undefined at zero.
pub const MU1_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub candidates_per_hop: usize,
    pub trials_per_candidate: usize,
    pub restarts: usize,
    pub seed: u64,
    pub second_order: bool,
    /// Projected-gradient iterations per QPS restart.
    pub max_iterations: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            candidates_per_hop: 1000,
            trials_per_candidate: 2000,
            restarts: 8,
            seed: 0,
            second_order: false,
            max_iterations: 3000,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("candidates_per_hop", self.candidates_per_hop),
            ("trials_per_candidate", self.trials_per_candidate),
            ("restarts", self.restarts),
            ("max_iterations", self.max_iterations),
        ] {
            if v == 0 {
                return Err(Error::range(what, 0, 1, usize::MAX));
            }
        }
        Ok(())
    }
}

/// Per-rank quantities of the mean-field decoding model (index `j-1`).
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldTerms {
    pub k: usize,
    pub p_rel: Vec<f64>,
    pub p_suc: Vec<f64>,
    pub t: Vec<f64>,
    pub s: Vec<f64>,
}

/// Precomputed coefficients of the mean-field objective for one `K`:
/// `P^rel_j = sum_d rel[j][d] mu(d)`, `P^suc_j = sum_d suc[j][d] mu(d)` with
///
/// ```text
/// rel[j][d] = (K-j+1) C(j-2, d-2) / C(K, d)
/// suc[j][d] = (K-j+1) C(j-1, d-1) / C(K, d)
/// ```
#[derive(Debug, Clone)]
pub struct MeanFieldModel {
    k: usize,
    rel: Vec<f64>,
    suc: Vec<f64>,
}

impl MeanFieldModel {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::range("K", 0, 1, usize::MAX));
        }
        let ln = LnBinomialTable::new(k);
        let mut rel = vec![0.0; k * k];
        let mut suc = vec![0.0; k * k];
        for j in 1..=k {
            let w = ((k - j + 1) as f64).ln();
            for d in 1..=j {
                suc[(j - 1) * k + d - 1] = (w + ln.get(j - 1, d - 1) - ln.get(k, d)).exp();
                if d >= 2 {
                    rel[(j - 1) * k + d - 1] = (w + ln.get(j - 2, d - 2) - ln.get(k, d)).exp();
                }
            }
        }
        Ok(Self { k, rel, suc })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn check(&self, mu: &[f64]) -> Result<()> {
        if mu.len() != self.k {
            return Err(Error::range("XDD length", mu.len(), self.k, self.k));
        }
        if mu[0] <= 0.0 {
            return Err(Error::NoDegreeOneMass);
        }
        Ok(())
    }

    #[inline]
    fn dot(row: &[f64], mu: &[f64], j: usize) -> f64 {
        row[..j].iter().zip(&mu[..j]).map(|(a, b)| a * b).sum()
    }

    /// `sum_j t_j` and the per-rank terms.
    pub fn evaluate(&self, mu: &[f64], second_order: bool) -> Result<(f64, MeanFieldTerms)> {
        self.check(mu)?;
        let k = self.k;
        let mut terms = MeanFieldTerms {
            k,
            p_rel: Vec::with_capacity(k),
            p_suc: Vec::with_capacity(k),
            t: Vec::with_capacity(k),
            s: Vec::with_capacity(k),
        };
        let mut s = 0.0;
        for j in 1..=k {
            let rel = Self::dot(&self.rel[(j - 1) * k..j * k], mu, j);
            let suc = Self::dot(&self.suc[(j - 1) * k..j * k], mu, j);
            let x = s * rel;
            let released = if second_order {
                x - 0.5 * x * x / (k - j + 1) as f64
            } else {
                x
            };
            let t = if suc > 0.0 { (1.0 - released).max(0.0) / suc } else { 0.0 };
            if suc <= 0.0 && released < 1.0 {
                return Err(Error::NoDegreeOneMass);
            }
            terms.p_rel.push(rel);
            terms.p_suc.push(suc);
            terms.s.push(s);
            terms.t.push(t);
            s += t;
        }
        Ok((s, terms))
    }

    /// Objective and its gradient with respect to `mu`.
    pub fn value_and_gradient(&self, mu: &[f64], second_order: bool) -> Result<(f64, Vec<f64>)> {
        let (total, terms) = self.evaluate(mu, second_order)?;
        let k = self.k;
        let mut grad = vec![0.0; k];
        // Reverse sweep; `acc` collects d total / d S_j' for j' > j.
        let mut acc = 0.0;
        for j in (1..=k).rev() {
            let tbar = 1.0 + acc;
            let (rel, suc, s, t) = (terms.p_rel[j - 1], terms.p_suc[j - 1], terms.s[j - 1], terms.t[j - 1]);
            if t > 0.0 {
                let x = s * rel;
                let nbar = tbar / suc;
                let sucbar = -tbar * t / suc;
                let xbar = if second_order {
                    -nbar * (1.0 - x / (k - j + 1) as f64)
                } else {
                    -nbar
                };
                let sbar = xbar * rel;
                let relbar = xbar * s;
                let row = (j - 1) * k;
                for d in 0..j {
                    grad[d] += relbar * self.rel[row + d] + sucbar * self.suc[row + d];
                }
                acc += sbar;
            }
        }
        Ok((total, grad))
    }
}

/// Mean-field estimate of the codewords needed at path length `K`.
pub fn mean_field_objective(mu: &Xdd<f64>, second_order: bool) -> Result<(f64, MeanFieldTerms)> {
    MeanFieldModel::new(mu.k())?.evaluate(mu.masses(), second_order)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    /// QPS: restart index. HRS: predecessor length `i-1`.
    pub stage: usize,
    /// QPS: iteration. HRS: candidate index.
    pub step: usize,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub sequence: XddSequence<f64>,
    /// QPS: mean-field value at `mu_K`. HRS: best Monte-Carlo score at the
    /// last searched hop (NaN when no hop needed a search).
    pub objective: f64,
    pub trace: Vec<TraceRow>,
}

pub fn write_trace_csv<W: std::io::Write>(trace: &[TraceRow], header: &str, mut w: W) -> Result<()> {
    writeln!(w, "{header}")?;
    for r in trace {
        writeln!(w, "{},{},{:.12e}", r.stage, r.step, r.objective)?;
    }
    Ok(())
}

fn harmonic(k: usize) -> Vec<f64> {
    let mut h = Vec::with_capacity(k);
    let mut acc = 0.0;
    for m in 1..=k {
        acc += 1.0 / m as f64;
        h.push(acc);
    }
    h
}

// The invariant polytope {simplex, d mu(d) >= (d+1) mu(d+1) for d <= K-2}
// is the image of the standard simplex under
//   mu(d) = (1/d) sum_{m=d}^{K-1} y_m / H_m  (d < K),   mu(K) = y_K,
// whose vertices are the truncated harmonic distributions and delta_K.

fn y_to_mu(y: &[f64], h: &[f64]) -> Vec<f64> {
    let k = y.len();
    let mut mu = vec![0.0; k];
    mu[k - 1] = y[k - 1];
    let mut acc = 0.0;
    for d in (1..k).rev() {
        acc += y[d - 1] / h[d - 1];
        mu[d - 1] = acc / d as f64;
    }
    mu
}

fn mu_to_y(mu: &[f64], h: &[f64]) -> Vec<f64> {
    let k = mu.len();
    let mut y = vec![0.0; k];
    y[k - 1] = mu[k - 1];
    for m in 1..k {
        let next = if m + 1 < k { (m + 1) as f64 * mu[m] } else { 0.0 };
        y[m - 1] = (h[m - 1] * (m as f64 * mu[m - 1] - next)).max(0.0);
    }
    let s: f64 = y.iter().sum();
    y.iter().map(|v| v / s).collect()
}

fn grad_mu_to_y(g_mu: &[f64], h: &[f64]) -> Vec<f64> {
    let k = g_mu.len();
    let mut g = vec![0.0; k];
    g[k - 1] = g_mu[k - 1];
    let mut acc = 0.0;
    for m in 1..k {
        acc += g_mu[m - 1] / m as f64;
        g[m - 1] = acc / h[m - 1];
    }
    g
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

fn enforce_mu1_floor(y: &mut [f64], h: &[f64]) {
    let k = y.len();
    if k == 1 {
        return;
    }
    let mu1: f64 = (0..k - 1).map(|m| y[m] / h[m]).sum();
    if mu1 < MU1_FLOOR {
        let theta = (MU1_FLOOR - mu1) / (1.0 - mu1);
        for v in y.iter_mut() {
            *v *= 1.0 - theta;
        }
        y[0] += theta;
    }
}

struct QpsProblem<'a> {
    model: &'a MeanFieldModel,
    h: Vec<f64>,
    second_order: bool,
}

impl QpsProblem<'_> {
    fn value(&self, y: &[f64]) -> Result<f64> {
        Ok(self.model.evaluate(&y_to_mu(y, &self.h), self.second_order)?.0)
    }

    fn value_and_gradient(&self, y: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (f, g) = self.model.value_and_gradient(&y_to_mu(y, &self.h), self.second_order)?;
        Ok((f, grad_mu_to_y(&g, &self.h)))
    }

    /// Projected gradient with Armijo backtracking from `y`.
    fn descend(&self, mut y: Vec<f64>, max_iterations: usize, stage: usize, trace: &mut Vec<TraceRow>) -> Result<(Vec<f64>, f64)> {
        enforce_mu1_floor(&mut y, &self.h);
        let (mut f, mut g) = self.value_and_gradient(&y)?;
        trace.push(TraceRow { stage, step: 0, objective: f });
        let gmax = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut eta = if gmax > 0.0 { 0.1 / gmax } else { 1.0 };
        let mut stall = 0;
        for it in 1..=max_iterations {
            let mut accepted = None;
            for _ in 0..60 {
                let step: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - eta * b).collect();
                let mut cand = project_simplex(&step);
                enforce_mu1_floor(&mut cand, &self.h);
                let decrease: f64 = g.iter().zip(cand.iter().zip(&y)).map(|(gi, (c, yi))| gi * (c - yi)).sum();
                if decrease >= 0.0 {
                    eta *= 0.5;
                    continue;
                }
                let fc = self.value(&cand)?;
                if fc <= f + 1e-4 * decrease {
                    accepted = Some((cand, fc));
                    break;
                }
                eta *= 0.5;
            }
            let Some((cand, fc)) = accepted else { break };
            if f - fc <= 1e-12 * f.abs().max(1.0) {
                stall += 1;
            } else {
                stall = 0;
            }
            y = cand;
            (f, g) = self.value_and_gradient(&y)?;
            trace.push(TraceRow { stage, step: it, objective: f });
            if stall >= 25 {
                break;
            }
            eta *= 2.0;
        }
        Ok((y, f))
    }
}

fn qps_starts(k: usize, restarts: usize, h: &[f64], seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut starts = vec![mu_to_y(shifted_soliton::<f64>(k)?.masses(), h)];
    starts.push(vec![1.0 / k as f64; k]);
    let r = 1.0 - 4.0 / (k as f64 + 4.0);
    let geo: Vec<f64> = (0..k).map(|m| r.powi(m as i32)).collect();
    let s: f64 = geo.iter().sum();
    starts.push(geo.iter().map(|v| v / s).collect());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x9B5, k as u64));
    while starts.len() < restarts {
        starts.push(dirichlet(k, &mut rng));
    }
    starts.truncate(restarts.max(1));
    Ok(starts)
}

fn dirichlet<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

/// Best invariant code under the mean-field objective.
pub fn qps_search(k: usize, config: &SearchConfig) -> Result<SearchOutcome> {
    config.validate()?;
    if k == 0 {
        return Err(Error::range("K", 0, 1, usize::MAX));
    }
    let model = MeanFieldModel::new(k)?;
    if k == 1 {
        let sequence = XddSequence::from_masses(vec![vec![1.0]])?;
        return Ok(SearchOutcome {
            sequence,
            objective: 1.0,
            trace: vec![TraceRow { stage: 0, step: 0, objective: 1.0 }],
        });
    }
    let problem = QpsProblem {
        model: &model,
        h: harmonic(k),
        second_order: config.second_order,
    };
    let starts = qps_starts(k, config.restarts, &problem.h, config.seed)?;
    let runs: Vec<(Vec<f64>, f64, Vec<TraceRow>)> = starts
        .into_par_iter()
        .enumerate()
        .map(|(r, y0)| {
            let mut trace = Vec::new();
            let (y, f) = problem.descend(y0, config.max_iterations, r, &mut trace)?;
            Ok((y, f, trace))
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(&Vec<f64>, f64)> = None;
    for (y, f, _) in &runs {
        if best.is_none_or(|(_, bf)| *f < bf) {
            best = Some((y, *f));
        }
    }
    let (y, objective) = best.expect("at least one restart");
    let mut mu = y_to_mu(y, &problem.h);
    let s: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|v| *v /= s);
    let sequence = expand_invariant(&Xdd::new(mu)?)?;
    ensure_feasible(&sequence)?;
    let trace = runs.into_iter().flat_map(|(_, _, t)| t).collect();
    Ok(SearchOutcome {
        sequence,
        objective,
        trace,
    })
}

fn ensure_feasible(seq: &XddSequence<f64>) -> Result<()> {
    let report = check_feasible(seq);
    if report.feasible {
        Ok(())
    } else {
        Err(Error::Consistency(format!(
            "search produced an infeasible sequence ({} violations)",
            report.violations.len()
        )))
    }
}

/// `mu_{i-1}` with the minimal mass the feasibility inequality forces, `mu_i(d)(i-d)/i +
/// mu_i(d+1)(d+1)/i`, and the slack budget `mu_i(1)/i` left to distribute.
pub fn predecessor_base<T: Scalar>(mu_i: &Xdd<T>) -> Result<(Vec<T>, T)> {
    let i = mu_i.k();
    if i < 2 {
        return Err(Error::range("path length", i, 2, usize::MAX));
    }
    let base = (1..i)
        .map(|d| {
            mu_i.mass(d).clone() * T::ratio(i - d, i) + mu_i.mass(d + 1).clone() * T::ratio(d + 1, i)
        })
        .collect();
    Ok((base, mu_i.mass(1).clone() * T::ratio(1, i)))
}

/// Feasible predecessor of `mu_i` spending the slack budget in proportion
/// to `weights` (nonnegative, not all zero, length `i-1`).
pub fn predecessor<T: Scalar>(mu_i: &Xdd<T>, weights: &[f64]) -> Result<Xdd<T>> {
    let (base, budget) = predecessor_base(mu_i)?;
    if weights.len() != base.len() || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Config("slack weights must be nonnegative, one per degree".into()));
    }
    let w: Vec<T> = weights.iter().map(|&x| T::from_f64(x)).collect();
    let total = w.iter().fold(T::zero(), |a, b| a + b.clone());
    if total.is_zero() {
        return Err(Error::Config("slack weights sum to zero".into()));
    }
    let mass = base
        .into_iter()
        .zip(w)
        .map(|(b, wd)| b + budget.clone() * wd / total.clone())
        .collect();
    Xdd::new(mass)
}

/// Random feasible sequence: Dirichlet `mu_K`, then Dirichlet slack
/// splits hop by hop.
pub fn random_feasible_sequence<T: Scalar, R: Rng>(k: usize, rng: &mut R) -> Result<XddSequence<T>> {
    if k == 0 {
        return Err(Error::range("K", 0, 1, usize::MAX));
    }
    let w: Vec<T> = dirichlet(k, rng).into_iter().map(T::from_f64).collect();
    let total = w.iter().fold(T::zero(), |a, b| a + b.clone());
    let mut cur = Xdd::new(w.into_iter().map(|x| x / total.clone()).collect())?;
    let mut rev = vec![cur.clone()];
    for i in (2..=k).rev() {
        cur = predecessor(&cur, &dirichlet(i - 1, rng))?;
        rev.push(cur.clone());
    }
    rev.reverse();
    XddSequence::new(rev)
}

/// `1 - sum_d C(i-1, d) (q_i(d) + q_i(d+1))`, the slack left after the
/// forced part of `mu_{i-1}`; `None` at `i = 1`.
pub fn verify_slack_budget<T: Scalar>(mu_i: &Xdd<T>) -> Result<Option<T>> {
    let i = mu_i.k();
    if i == 1 {
        return Ok(None);
    }
    let mut used = T::zero();
    for d in 1..i {
        used = used + T::binomial(i - 1, d) * (mu_to_q(mu_i, d)? + mu_to_q(mu_i, d + 1)?);
    }
    Ok(Some(T::one() - used))
}

/// Greedy reversed search from `mu_k` (Robust Soliton by default).
pub fn hrs_search(k: usize, config: &SearchConfig, mu_k: Option<Xdd<f64>>) -> Result<SearchOutcome> {
    config.validate()?;
    let mu_k = match mu_k {
        Some(m) => m,
        None => robust_soliton(k, ROBUST_SOLITON_C, ROBUST_SOLITON_DELTA)?,
    };
    if mu_k.k() != k {
        return Err(Error::range("mu_K length", mu_k.k(), k, k));
    }
    let mut cur = mu_k;
    let mut rev = vec![cur.clone()];
    let mut trace = Vec::new();
    let mut objective = f64::NAN;
    for i in (2..=k).rev() {
        if i == 2 {
            cur = Xdd::new(vec![1.0])?;
            rev.push(cur.clone());
            break;
        }
        let crn = derive_seed(config.seed, i as u64, u64::MAX);
        let mut scored: Vec<(Xdd<f64>, f64)> = (0..config.candidates_per_hop)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, i as u64, c as u64));
                let cand = predecessor(&cur, &dirichlet(i - 1, &mut rng))?;
                let score = lt_mean_used(cand.masses(), config.trials_per_candidate, crn)?;
                Ok((cand, score))
            })
            .collect::<Result<_>>()?;
        let mut best = 0;
        for (c, (_, score)) in scored.iter().enumerate() {
            trace.push(TraceRow {
                stage: i - 1,
                step: c,
                objective: *score,
            });
            if *score < scored[best].1 {
                best = c;
            }
        }
        objective = scored[best].1;
        cur = scored.swap_remove(best).0;
        rev.push(cur.clone());
    }
    rev.reverse();
    let sequence = XddSequence::new(rev)?;
    ensure_feasible(&sequence)?;
    Ok(SearchOutcome {
        sequence,
        objective,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{is_invariant, shifted_soliton_sequence};
    use crate::feasibility::{derive_apa, exact_induced_sequence};
    use crate::scalar::{exact, Exact};
    use proptest::prelude::*;

    #[test]
    fn spot_values() {
        let f = |m: Vec<f64>| mean_field_objective(&Xdd::new(m).unwrap(), false).unwrap();
        let (total, _) = f(vec![1.0]);
        assert!((total - 1.0).abs() < 1e-12);

        let (total, t) = f(vec![0.5, 0.5]);
        assert!((total - 2.0).abs() < 1e-12);
        assert!((t.p_suc[0] - 0.5).abs() < 1e-12);
        assert!((t.t[0] - 2.0).abs() < 1e-12);
        assert!((t.p_rel[1] - 0.5).abs() < 1e-12);
        assert!((t.p_suc[1] - 0.75).abs() < 1e-12);
        assert!(t.t[1].abs() < 1e-12);

        let (total, t) = f(vec![1.0, 0.0]);
        assert!((total - 3.0).abs() < 1e-12);
        assert!((t.t[1] - 2.0).abs() < 1e-12);
        assert_eq!(t.p_rel[1], 0.0);
    }

    #[test]
    fn zero_degree_one_mass_is_rejected() {
        let mu = Xdd::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(mean_field_objective(&mu, false), Err(Error::NoDegreeOneMass)));
    }

    #[test]
    fn objective_is_bit_reproducible() {
        let mu = shifted_soliton::<f64>(40).unwrap();
        let a = mean_field_objective(&mu, true).unwrap();
        let b = mean_field_objective(&mu, true).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn terms_are_probabilities() {
        for k in [3, 17, 59] {
            let (_, t) = mean_field_objective(&shifted_soliton::<f64>(k).unwrap(), false).unwrap();
            assert!(t.p_rel.iter().chain(&t.p_suc).all(|p| (0.0..=1.0 + 1e-9).contains(p)));
            assert!(t.t.iter().all(|v| *v >= 0.0));
        }
    }

    fn fd_check(mu: &[f64], second_order: bool) {
        let model = MeanFieldModel::new(mu.len()).unwrap();
        let (_, g) = model.value_and_gradient(mu, second_order).unwrap();
        for d in 0..mu.len() {
            let h = 1e-6;
            let mut a = mu.to_vec();
            let mut b = mu.to_vec();
            a[d] += h;
            b[d] -= h;
            let fd = (model.evaluate(&a, second_order).unwrap().0 - model.evaluate(&b, second_order).unwrap().0) / (2.0 * h);
            assert!((fd - g[d]).abs() <= 1e-5 * fd.abs().max(1.0), "d={} fd={fd} g={}", d + 1, g[d]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // (1/2, 1/2) sits on the clamp kink t_2 = 0; use a point off it.
        fd_check(&[0.7, 0.3], false);
        fd_check(&[0.7, 0.3], true);
        for k in [3, 5, 12, 30] {
            let mu = shifted_soliton::<f64>(k).unwrap();
            fd_check(mu.masses(), false);
            fd_check(mu.masses(), true);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for k in [4, 9, 20] {
            let mu = dirichlet(k, &mut rng);
            fd_check(&mu, false);
            fd_check(&mu, true);
        }
    }

    #[test]
    fn reparameterization_round_trip() {
        let k = 25;
        let h = harmonic(k);
        let ss = shifted_soliton::<f64>(k).unwrap();
        let y = mu_to_y(ss.masses(), &h);
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let back = y_to_mu(&y, &h);
        for (a, b) in back.iter().zip(ss.masses()) {
            assert!((a - b).abs() < 1e-14);
        }
        // Vertices are truncated harmonic distributions.
        let mut e = vec![0.0; k];
        e[2] = 1.0;
        let mu = y_to_mu(&e, &h);
        let h3 = 1.0 + 0.5 + 1.0 / 3.0;
        assert!((mu[0] - 1.0 / h3).abs() < 1e-15 && (mu[2] - 1.0 / (3.0 * h3)).abs() < 1e-15);
        assert_eq!(mu[3], 0.0);
    }

    #[test]
    fn chain_rule_matches_finite_differences_in_y() {
        let k = 10;
        let model = MeanFieldModel::new(k).unwrap();
        let p = QpsProblem { model: &model, h: harmonic(k), second_order: false };
        let y = vec![0.1; k];
        let (_, g) = p.value_and_gradient(&y).unwrap();
        for m in 0..k {
            let mut a = y.clone();
            let mut b = y.clone();
            a[m] += 1e-6;
            b[m] -= 1e-6;
            let fd = (p.value(&a).unwrap() - p.value(&b).unwrap()) / 2e-6;
            assert!((fd - g[m]).abs() < 1e-5 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn simplex_projection() {
        assert_eq!(project_simplex(&[0.2, 0.8]), vec![0.2, 0.8]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.5, 0.5, 0.5]);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn qps_small_cases() {
        let cfg = SearchConfig { restarts: 4, max_iterations: 500, ..SearchConfig::default() };
        let one = qps_search(1, &cfg).unwrap();
        assert_eq!(one.sequence.hop(1).masses(), &[1.0]);

        for k in [2, 5, 12] {
            let out = qps_search(k, &cfg).unwrap();
            assert!(check_feasible(&out.sequence).feasible);
            assert!(is_invariant(&out.sequence, &1e-12));
            let ss = mean_field_objective(&shifted_soliton::<f64>(k).unwrap(), false).unwrap().0;
            assert!(out.objective <= ss + 1e-12, "K={k}: {} > {ss}", out.objective);
            assert!(*out.sequence.last().mass(1) >= MU1_FLOOR);
        }
    }

    #[test]
    fn slack_budget_examples() {
        let two = Xdd::new(vec![exact(1, 2), exact(1, 2)]).unwrap();
        assert_eq!(verify_slack_budget(&two).unwrap(), Some(exact(1, 4)));
        let ss = shifted_soliton::<Exact>(3).unwrap();
        assert_eq!(verify_slack_budget(&ss).unwrap(), Some(exact(1, 6)));
        assert_eq!(verify_slack_budget(&Xdd::new(vec![exact(1, 1)]).unwrap()).unwrap(), None);

        // At i = 2 the only predecessor is (1).
        let p = predecessor(&two, &[3.0]).unwrap();
        assert_eq!(p.masses(), &[exact(1, 1)]);
    }

    #[test]
    fn random_sequences_round_trip_through_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for k in 1..=5 {
            let seq = random_feasible_sequence::<Exact, _>(k, &mut rng).unwrap();
            assert!(check_feasible(&seq).feasible);
            let apa = derive_apa(&seq).unwrap();
            assert_eq!(exact_induced_sequence(&apa, k).unwrap(), seq);
        }
    }

    #[test]
    fn hrs_small_cases() {
        let cfg = SearchConfig {
            candidates_per_hop: 8,
            trials_per_candidate: 50,
            ..SearchConfig::default()
        };
        let one = hrs_search(1, &cfg, None).unwrap();
        assert_eq!(one.sequence.diameter(), 1);
        let two = hrs_search(2, &cfg, Some(Xdd::new(vec![0.5, 0.5]).unwrap())).unwrap();
        assert_eq!(two.sequence.hop(1).masses(), &[1.0]);
        let out = hrs_search(10, &cfg, None).unwrap();
        assert!(check_feasible(&out.sequence).feasible);
        assert_eq!(out.sequence.last(), &robust_soliton(10, 0.1, 0.5).unwrap());
        let again = hrs_search(10, &cfg, None).unwrap();
        assert_eq!(again.sequence, out.sequence);
        assert!(hrs_search(10, &cfg, Some(shifted_soliton(9).unwrap())).is_err());
    }

    #[test]
    fn shifted_soliton_slack_is_nonnegative_and_exhausts_budget() {
        let seq = shifted_soliton_sequence::<Exact>(8).unwrap();
        for i in 2..=8 {
            let (base, budget) = predecessor_base(seq.hop(i)).unwrap();
            let mut spent = Exact::from_usize(0);
            for (d, b) in base.iter().enumerate() {
                let slack = seq.hop(i - 1).mass(d + 1).clone() - b.clone();
                assert!(slack >= Exact::from_usize(0));
                spent = spent + slack;
            }
            assert_eq!(spent, budget);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn slack_budget_is_q_one(k in 2usize..=30, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w: Vec<Exact> = dirichlet(k, &mut rng).into_iter().map(Exact::from_f64).collect();
            let s = w.iter().fold(Exact::from_usize(0), |a, b| a + b);
            let mu = Xdd::new(w.into_iter().map(|x| x / s.clone()).collect()).unwrap();
            let budget = verify_slack_budget(&mu).unwrap().unwrap();
            prop_assert_eq!(budget.clone(), mu_to_q(&mu, 1).unwrap());
            prop_assert_eq!(budget, predecessor_base(&mu).unwrap().1);
        }
    }
}
