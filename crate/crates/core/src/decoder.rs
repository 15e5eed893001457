//! Destination side: replay the switches' decisions to recover each
//! codeword's XOR-set, then peel.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::protocol::{GlobalHash, HopSet, Scheme, MAX_PATH};
use crate::feasibility::Action;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceivedCodeword {
    pub packet_id: u64,
    pub path_length: usize,
    pub codeword: u64,
    pub xor_set: HopSet,
}

impl ReceivedCodeword {
    /// Reconstructs the XOR-set by replay.
    pub fn replay(
        packet_id: u64,
        path_length: usize,
        codeword: u64,
        scheme: &Scheme,
        gh: &GlobalHash,
    ) -> Result<Self> {
        Ok(Self {
            packet_id,
            path_length,
            codeword,
            xor_set: replay_xor_set(packet_id, path_length, scheme, gh)?,
        })
    }
}

/// Hops whose IDs are XOR-ed into the codeword of `packet_id` after `k` hops.
pub fn replay_xor_set(packet_id: u64, k: usize, scheme: &Scheme, gh: &GlobalHash) -> Result<HopSet> {
    if k == 0 || k > scheme.diameter() {
        return Err(Error::range("k", k, 1, scheme.diameter()));
    }
    let mut set = HopSet::default();
    let mut degree = 0;
    for i in 1..=k {
        match scheme.action(i, degree, packet_id, gh)? {
            Action::Add => {
                set.insert(i);
                degree += 1;
            }
            Action::Replace => {
                set = HopSet::singleton(i);
                degree = 1;
            }
            Action::Skip => {}
        }
    }
    Ok(set)
}

#[derive(Debug, Clone)]
struct Pending {
    set: HopSet,
    value: u64,
    unresolved: usize,
    live: bool,
}

/// Incremental peeling decoder for one path.
#[derive(Debug, Clone)]
pub struct PeelingState {
    k: usize,
    resolved: Vec<Option<u64>>,
    resolved_count: usize,
    pending: Vec<Pending>,
    by_hop: Vec<Vec<u32>>,
    queue: Vec<usize>,
    newly: Vec<usize>,
}

impl PeelingState {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 || k > MAX_PATH {
            return Err(Error::range("k", k, 1, MAX_PATH));
        }
        Ok(Self {
            k,
            resolved: vec![None; k + 1],
            resolved_count: 0,
            pending: Vec::new(),
            by_hop: vec![Vec::new(); k + 1],
            queue: Vec::new(),
            newly: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_complete(&self) -> bool {
        self.resolved_count == self.k
    }

    pub fn resolved_count(&self) -> usize {
        self.resolved_count
    }

    pub fn resolved(&self, hop: usize) -> Option<u64> {
        self.resolved.get(hop).copied().flatten()
    }

    /// `ids[h-1]` for hop `h`.
    pub fn ids(&self) -> Vec<Option<u64>> {
        self.resolved[1..].to_vec()
    }

    /// Codewords still waiting on two or more unknowns.
    pub fn pending_count(&self) -> usize {
        self.pending.iter().filter(|p| p.live).count()
    }

    /// Hops resolved by the last [`PeelingState::insert`], in resolution order.
    pub fn newly_resolved(&self) -> &[usize] {
        &self.newly
    }

    /// Adds one codeword and peels as far as possible. Returns how many hops
    /// became resolved.
    pub fn insert(&mut self, set: HopSet, value: u64) -> Result<usize> {
        self.newly.clear();
        let mut rest = set;
        let received = value;
        let mut value = value;
        let mut unresolved = 0;
        let mut last = 0;
        for h in set.iter() {
            if h > self.k {
                return Err(Error::range("hop", h, 1, self.k));
            }
            if let Some(id) = self.resolved[h] {
                value ^= id;
                rest.remove(h);
            } else {
                unresolved += 1;
                last = h;
            }
        }
        match unresolved {
            0 if value != 0 => {
                return Err(Error::Corruption {
                    hop: set.first().unwrap_or(0),
                    first: received ^ value,
                    second: received,
                })
            }
            0 => {}
            1 => self.resolve(last, value)?,
            n => {
                let idx = self.pending.len() as u32;
                for h in rest.iter() {
                    self.by_hop[h].push(idx);
                }
                self.pending.push(Pending {
                    set: rest,
                    value,
                    unresolved: n,
                    live: true,
                });
            }
        }
        self.cascade()?;
        Ok(self.newly.len())
    }

    fn resolve(&mut self, hop: usize, id: u64) -> Result<()> {
        match self.resolved[hop] {
            Some(old) if old != id => Err(Error::Corruption {
                hop,
                first: old,
                second: id,
            }),
            Some(_) => Ok(()),
            None => {
                self.resolved[hop] = Some(id);
                self.resolved_count += 1;
                self.newly.push(hop);
                self.queue.push(hop);
                Ok(())
            }
        }
    }

    fn cascade(&mut self) -> Result<()> {
        while let Some(h) = self.queue.pop() {
            let id = self.resolved[h].expect("queued hops are resolved");
            let list = std::mem::take(&mut self.by_hop[h]);
            for &idx in &list {
                let p = &mut self.pending[idx as usize];
                if !p.live {
                    continue;
                }
                p.value ^= id;
                p.set.remove(h);
                p.unresolved -= 1;
                if p.unresolved == 1 {
                    p.live = false;
                    let (last, v) = (p.set.first().expect("one member left"), p.value);
                    self.resolve(last, v)?;
                }
            }
        }
        Ok(())
    }
}

/// Inserts a codeword; returns the hops it (transitively) resolved.
pub fn peel_insert(state: &mut PeelingState, cw: &ReceivedCodeword) -> Result<Vec<usize>> {
    if cw.path_length != state.k {
        return Err(Error::range("path length", cw.path_length, state.k, state.k));
    }
    state.insert(cw.xor_set, cw.codeword)?;
    Ok(state.newly_resolved().to_vec())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeOutcome {
    /// `ids[h-1]` for hop `h`; `None` where unresolved.
    pub ids: Vec<Option<u64>>,
    /// Codewords consumed, counting empty ones.
    pub used: usize,
    pub complete: bool,
}

/// Feeds codewords in order until every hop is known or the stream ends.
pub fn decode_stream<I>(codewords: I, k: usize) -> Result<DecodeOutcome>
where
    I: IntoIterator<Item = ReceivedCodeword>,
{
    let mut state = PeelingState::new(k)?;
    let mut used = 0;
    for cw in codewords {
        if state.is_complete() {
            break;
        }
        used += 1;
        peel_insert(&mut state, &cw)?;
    }
    Ok(DecodeOutcome {
        ids: state.ids(),
        used,
        complete: state.is_complete(),
    })
}

/// Exact expected number of codewords the peeling decoder consumes when each
/// codeword's XOR-set is drawn i.i.d. with `set_probs[mask]` (bit `h-1` for
/// hop `h`; mask 0 is the empty codeword). Solves the absorbing Markov chain
/// over decoder states; `k <= 4`.
pub fn markov_expected_used<T: Scalar>(k: usize, set_probs: &[T]) -> Result<T> {
    if k == 0 || k > 4 {
        return Err(Error::range("k", k, 1, 4));
    }
    if set_probs.len() != 1 << k {
        return Err(Error::Format("need one probability per subset".into()));
    }
    let mut memo = HashMap::new();
    expected_from(k, set_probs, MaskState::default(), &mut memo)
}

/// Resolved hops plus the reduced pending sets (duplicates are irrelevant).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
struct MaskState {
    resolved: u32,
    pending: BTreeSet<u32>,
}

impl MaskState {
    fn absorb(&self, mask: u32) -> Self {
        let mut s = self.clone();
        s.pending.insert(mask);
        loop {
            let reduced: BTreeSet<u32> = s
                .pending
                .iter()
                .map(|m| m & !s.resolved)
                .filter(|m| *m != 0)
                .collect();
            let singles: u32 = reduced
                .iter()
                .filter(|m| m.count_ones() == 1)
                .fold(0, |a, m| a | m);
            s.pending = reduced.into_iter().filter(|m| m.count_ones() > 1).collect();
            if singles == 0 {
                return s;
            }
            s.resolved |= singles;
        }
    }
}

fn expected_from<T: Scalar>(
    k: usize,
    probs: &[T],
    state: MaskState,
    memo: &mut HashMap<MaskState, T>,
) -> Result<T> {
    let full = (1u32 << k) - 1;
    if state.resolved == full {
        return Ok(T::zero());
    }
    if let Some(v) = memo.get(&state) {
        return Ok(v.clone());
    }
    // E[s] = (1 + sum_{s' != s} P(s') E[s']) / (1 - P(stay)).
    let mut stay = T::zero();
    let mut acc = T::one();
    for (mask, p) in probs.iter().enumerate() {
        if p.is_zero() {
            continue;
        }
        let next = state.absorb(mask as u32);
        if next == state {
            stay = stay + p.clone();
        } else {
            acc = acc + p.clone() * expected_from(k, probs, next, memo)?;
        }
    }
    if stay >= T::one() {
        return Err(Error::Consistency("decoder can never complete".into()));
    }
    let e = acc / (T::one() - stay);
    memo.insert(state, e.clone());
    Ok(e)
}

/// Subset probabilities of a uniform-set code with XDD `mu` on `k` hops.
pub fn uniform_set_probs<T: Scalar>(mu: &[T]) -> Vec<T> {
    let k = mu.len();
    (0..1usize << k)
        .map(|m| {
            let d = m.count_ones() as usize;
            if d == 0 {
                T::zero()
            } else {
                mu[d - 1].clone() / T::binomial(k, d)
            }
        })
        .collect()
}
