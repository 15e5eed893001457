//! Monte-Carlo coding-efficiency harness.
//!
//! A trial builds one path of `k` switches with random IDs, streams fresh
//! packets through it, replays each delivered codeword's XOR-set and peels
//! until every ID is known. The statistic is the number of codewords used.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::decoder::{replay_xor_set, PeelingState};
use crate::distributions::PintParams;
use crate::error::{Error, Result};
use crate::feasibility::derive_apa;
use crate::protocol::{generate_avst, mix64, GlobalHash, HopSet, PintConfig, Scheme, SwitchId};
use crate::xdd::XddSequence;

/// Trials stop after `CAP_FACTOR * k` codewords.
pub const CAP_FACTOR: usize = 200;

/// Order-independent per-trial seed.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    mix64(seed ^ mix64(a.wrapping_add(0x9E37_79B9_7F4A_7C15) ^ mix64(b.wrapping_mul(0xA076_1D64_78BD_642F))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialResult {
    pub k: usize,
    /// Codewords consumed; the cap when not completed.
    pub used: usize,
    pub completed: bool,
}

fn distinct_ids(k: usize, rng: &mut ChaCha8Rng) -> Vec<SwitchId> {
    let mut ids: Vec<SwitchId> = Vec::with_capacity(k);
    while ids.len() < k {
        let id = SwitchId::new(rng.random_range(1..=u32::MAX as u64)).expect("nonzero");
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    ids
}

/// One coding instance on a path of length `k`.
pub fn run_instance(k: usize, scheme: &Scheme, seed: u64) -> Result<TrialResult> {
    if k == 0 || k > scheme.diameter() {
        return Err(Error::range("k", k, 1, scheme.diameter()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gh = GlobalHash::new(rng.random());
    let ids = distinct_ids(k, &mut rng);
    let mut state = PeelingState::new(k)?;
    let cap = CAP_FACTOR * k;
    let mut used = 0;
    // Bounds the loop when empty codewords are not counted.
    let mut draws = 0;
    while !state.is_complete() && used < cap && draws < 64 * cap {
        draws += 1;
        let pid = rng.random();
        let pkt = scheme.encode_path(&ids, pid, &gh)?;
        let set = replay_xor_set(pid, k, scheme, &gh)?;
        if set.is_empty() {
            if scheme.counts_empty() {
                used += 1;
            }
            continue;
        }
        used += 1;
        state.insert(set, pkt.codeword)?;
    }
    let completed = state.is_complete();
    if completed {
        for (h, id) in ids.iter().enumerate() {
            if state.resolved(h + 1) != Some(id.get()) {
                return Err(Error::WrongDecode { hop: h + 1 });
            }
        }
    }
    Ok(TrialResult {
        k,
        used: if completed { used } else { cap },
        completed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub k: usize,
    pub trials: usize,
    pub mean: f64,
    pub stderr: f64,
    pub q99: f64,
    pub incomplete_rate: f64,
}

impl CurvePoint {
    pub fn from_trials(k: usize, results: &[TrialResult]) -> Self {
        let n = results.len();
        let mut used: Vec<usize> = results.iter().map(|r| r.used).collect();
        let mean = used.iter().sum::<usize>() as f64 / n as f64;
        let var = if n > 1 {
            used.iter().map(|&u| (u as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        used.sort_unstable();
        let q = ((0.99 * n as f64).ceil() as usize).clamp(1, n);
        Self {
            k,
            trials: n,
            mean,
            stderr: (var / n as f64).sqrt(),
            q99: used[q - 1] as f64,
            incomplete_rate: results.iter().filter(|r| !r.completed).count() as f64 / n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyCurve {
    pub scheme: String,
    pub diameter: usize,
    pub points: Vec<CurvePoint>,
}

impl EfficiencyCurve {
    pub fn at(&self, k: usize) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.k == k)
    }
}

/// Runs `trials` instances at path length `k`. Trial `t` uses
/// `derive_seed(seed, k, t)`, so schemes evaluated with the same seed share
/// ID draws and packet streams.
pub fn run_trials(scheme: &Scheme, k: usize, trials: usize, seed: u64) -> Result<Vec<TrialResult>> {
    if trials == 0 {
        return Err(Error::range("trials", 0, 1, usize::MAX));
    }
    (0..trials)
        .into_par_iter()
        .map(|t| run_instance(k, scheme, derive_seed(seed, k as u64, t as u64)))
        .collect()
}

pub fn evaluate_point(scheme: &Scheme, k: usize, trials: usize, seed: u64) -> Result<CurvePoint> {
    Ok(CurvePoint::from_trials(k, &run_trials(scheme, k, trials, seed)?))
}

/// Statistics at each path length in `ks`.
pub fn efficiency_curve(scheme: &Scheme, ks: &[usize], trials: usize, seed: u64) -> Result<EfficiencyCurve> {
    let points = ks
        .iter()
        .map(|&k| evaluate_point(scheme, k, trials, seed))
        .collect::<Result<_>>()?;
    Ok(EfficiencyCurve {
        scheme: scheme.label(),
        diameter: scheme.diameter(),
        points,
    })
}

/// `1..=K`.
pub fn all_lengths(k: usize) -> Vec<usize> {
    (1..=k).collect()
}

/// RECIPE-d against RECIPE-t at each table size, all on one APA.
pub fn compare_t_vs_d(
    seq: &XddSequence<f64>,
    ks: &[usize],
    table_sizes: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<EfficiencyCurve>> {
    let apa = derive_apa(seq)?;
    let mut curves = Vec::with_capacity(1 + table_sizes.len());
    for &l in table_sizes {
        let avst = generate_avst(&apa, l, derive_seed(seed, l as u64, u64::MAX))?;
        curves.push(efficiency_curve(&Scheme::recipe_t(avst), ks, trials, seed)?);
    }
    curves.insert(0, efficiency_curve(&Scheme::recipe_d(apa), ks, trials, seed)?);
    Ok(curves)
}

pub const CSV_HEADER: &str = "scheme,K,k,trials,mean,stderr,q99,incomplete_rate";

pub fn write_csv<W: Write>(curves: &[EfficiencyCurve], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for c in curves {
        for p in &c.points {
            writeln!(
                w,
                "{},{},{},{},{:.6},{:.6},{},{:.6}",
                csv_field(&c.scheme),
                c.diameter,
                p.k,
                p.trials,
                p.mean,
                p.stderr,
                p.q99,
                p.incomplete_rate
            )?;
        }
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PintTuning {
    pub params: PintParams<f64>,
    pub mean: f64,
    /// `(alpha, p, mean)` for every grid point.
    pub grid: Vec<(f64, f64, f64)>,
}

/// PINT grid: `alpha` in `{0, 0.05, ..., 1}`, `p` in `{1/K, ..., 10/K}`
/// (values `>= 1` dropped).
pub fn pint_grid(diameter: usize) -> Vec<(f64, f64)> {
    let mut grid = Vec::new();
    for a in 0..=20 {
        for j in 1..=10 {
            let p = j as f64 / diameter as f64;
            if p < 1.0 {
                grid.push((a as f64 / 20.0, p));
            }
        }
    }
    grid
}

/// Grid point minimising mean codewords at path length `k`.
pub fn tune_pint(diameter: usize, k: usize, trials: usize, seed: u64) -> Result<PintTuning> {
    let mut grid = Vec::new();
    let mut best: Option<(PintParams<f64>, f64)> = None;
    for (alpha, p) in pint_grid(diameter) {
        let params = PintParams::new(alpha, p)?;
        let mean = evaluate_point(&Scheme::Pint(PintConfig::new(params.clone())), k, trials, seed)?.mean;
        grid.push((alpha, p, mean));
        if best.as_ref().is_none_or(|(_, m)| mean < *m) {
            best = Some((params, mean));
        }
    }
    let (params, mean) = best.ok_or_else(|| Error::Config("empty PINT grid".into()))?;
    Ok(PintTuning { params, mean, grid })
}

/// Degree histogram after every hop: `counts[i-1][d]` packets carried
/// degree `d` after switch `i`.
pub fn hop_degree_histograms(scheme: &Scheme, k: usize, packets: usize, seed: u64) -> Result<Vec<Vec<u64>>> {
    if k == 0 || k > scheme.diameter() {
        return Err(Error::range("k", k, 1, scheme.diameter()));
    }
    let chunks = 64usize;
    let partial: Vec<Vec<Vec<u64>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, c as u64, 0));
            let gh = GlobalHash::new(derive_seed(seed, u64::MAX, 0));
            let ids = distinct_ids(k, &mut rng);
            let mut counts: Vec<Vec<u64>> = (1..=k).map(|i| vec![0; i + 1]).collect();
            let n = packets / chunks + usize::from(c < packets % chunks);
            for _ in 0..n {
                let mut pkt = crate::protocol::Packet::new(rng.random());
                for (i, id) in ids.iter().enumerate() {
                    pkt = scheme.step(&pkt, *id, &gh)?;
                    counts[i][pkt.degree] += 1;
                }
            }
            Ok(counts)
        })
        .collect::<Result<_>>()?;
    let mut total: Vec<Vec<u64>> = (1..=k).map(|i| vec![0; i + 1]).collect();
    for part in partial {
        for (t, p) in total.iter_mut().zip(part) {
            for (a, b) in t.iter_mut().zip(p) {
                *a += b;
            }
        }
    }
    Ok(total)
}

/// Centralized LT code with XDD `mu`: each codeword XORs a uniformly random
/// `d`-subset, `d ~ mu`. Returns codewords used (the cap if undecoded).
pub fn centralized_lt_trial(cdf: &[f64], rng: &mut ChaCha8Rng, state: &mut PeelingState) -> usize {
    let k = cdf.len();
    let cap = CAP_FACTOR * k;
    let mut used = 0;
    let mut members = Vec::with_capacity(k);
    while !state.is_complete() && used < cap {
        used += 1;
        let u: f64 = rng.random();
        let d = cdf.partition_point(|&c| c <= u).min(k - 1) + 1;
        // Floyd's subset sampling.
        members.clear();
        let mut set = HopSet::default();
        for j in (k - d + 1)..=k {
            let t = rng.random_range(1..=j);
            let pick = if set.contains(t) { j } else { t };
            set.insert(pick);
            members.push(pick);
        }
        let value = members.iter().fold(0u64, |a, &h| a ^ h as u64);
        state.insert(set, value).expect("consistent by construction");
    }
    if state.is_complete() {
        used
    } else {
        cap
    }
}

/// Cumulative distribution of an XDD, last entry forced to 1.
pub fn xdd_cdf(mu: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = mu
        .iter()
        .map(|m| {
            acc += m;
            acc
        })
        .collect();
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    cdf
}

/// Mean codewords for a centralized LT code, trial `t` seeded by
/// `derive_seed(seed, k, t)` (common random numbers across calls).
pub fn lt_mean_used(mu: &[f64], trials: usize, seed: u64) -> Result<f64> {
    let k = mu.len();
    if trials == 0 {
        return Err(Error::range("trials", 0, 1, usize::MAX));
    }
    let cdf = xdd_cdf(mu);
    let total: usize = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64, t as u64));
            let mut state = PeelingState::new(k).expect("k checked by caller");
            centralized_lt_trial(&cdf, &mut rng, &mut state)
        })
        .sum();
    Ok(total as f64 / trials as f64)
}
