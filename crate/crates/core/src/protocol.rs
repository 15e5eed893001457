//! Stateless per-hop encoders.
//!
//! Every switch decision is a pure function of the packet header, the
//! switch's ID, the shared artifacts (APA, AVST or PINT parameters) and a
//! network-wide hash key. Nothing else is consulted, so the destination can
//! replay each decision exactly.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::distributions::PintParams;
use crate::error::{Error, Result};
use crate::feasibility::{Action, Apa, ApaEntry};

/// Longest path the simulator and decoder handle.
pub const MAX_PATH: usize = 256;

/// Default AVST row count.
pub const DEFAULT_AVST_ROWS: usize = 30_000;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const ROW_DOMAIN: u64 = 0x5851_F42D_4C95_7F2D;
const PINT_DOMAIN: u64 = 0xD1B5_4A32_D192_ED03;

#[inline]
pub(crate) fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[inline]
fn to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Keyed hash shared by every switch and the destination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlobalHash {
    seed: u64,
}

impl GlobalHash {
    pub const fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `h(i, pkt)`: uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&self, hop: u64, packet_id: u64) -> f64 {
        to_unit(mix64(self.seed ^ packet_id ^ hop.wrapping_mul(GOLDEN_GAMMA)))
    }

    /// `g(pkt)`: the AVST row for a packet. Independent of the hop, so all
    /// switches on a path agree.
    #[inline]
    pub fn row(&self, packet_id: u64, rows: usize) -> usize {
        let u = GlobalHash::new(self.seed ^ ROW_DOMAIN).uniform(0, packet_id);
        ((u * rows as f64) as usize).min(rows - 1)
    }

    /// Per-packet draw choosing the PINT component.
    #[inline]
    pub fn pint_branch(&self, packet_id: u64) -> f64 {
        GlobalHash::new(self.seed ^ PINT_DOMAIN).uniform(0, packet_id)
    }
}

pub fn hash_uniform(gh: &GlobalHash, hop: u64, packet_id: u64) -> f64 {
    gh.uniform(hop, packet_id)
}

/// Row index in `[0, rows)`; `rows` must be positive.
pub fn row_select(gh: &GlobalHash, packet_id: u64, rows: usize) -> Result<usize> {
    if rows == 0 {
        return Err(Error::range("L", 0, 1, usize::MAX));
    }
    Ok(gh.row(packet_id, rows))
}

/// A switch ID. Zero is reserved for the empty codeword.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SwitchId(u64);

impl SwitchId {
    pub fn new(id: u64) -> Result<Self> {
        if id == 0 {
            return Err(Error::Parameter {
                what: "switch id",
                value: 0.0,
                reason: "zero is reserved for the empty codeword",
            });
        }
        Ok(Self(id))
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

/// Header fields a switch reads and writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub packet_id: u64,
    pub hop_count: usize,
    pub codeword: u64,
    /// XOR degree; carried on the wire only by RECIPE-d.
    pub degree: usize,
}

impl Packet {
    pub fn new(packet_id: u64) -> Self {
        Self {
            packet_id,
            hop_count: 0,
            codeword: 0,
            degree: 0,
        }
    }

    fn apply(mut self, action: Action, id: SwitchId) -> Self {
        match action {
            Action::Add => {
                self.codeword ^= id.0;
                self.degree += 1;
            }
            Action::Replace => {
                self.codeword = id.0;
                self.degree = 1;
            }
            Action::Skip => {}
        }
        self.hop_count += 1;
        self
    }
}

/// Bits the RECIPE-d degree field needs for diameter `k`: six, or enough to
/// hold `k` itself.
pub fn degree_field_bits(k: usize) -> u32 {
    (usize::BITS - k.leading_zeros()).max(6)
}

/// Subset of hops `1..=MAX_PATH`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct HopSet([u64; MAX_PATH / 64]);

impl HopSet {
    pub fn singleton(hop: usize) -> Self {
        let mut s = Self::default();
        s.insert(hop);
        s
    }

    #[inline]
    pub fn insert(&mut self, hop: usize) {
        let b = hop - 1;
        self.0[b / 64] |= 1 << (b % 64);
    }

    #[inline]
    pub fn remove(&mut self, hop: usize) {
        let b = hop - 1;
        self.0[b / 64] &= !(1 << (b % 64));
    }

    #[inline]
    pub fn toggle(&mut self, hop: usize) {
        let b = hop - 1;
        self.0[b / 64] ^= 1 << (b % 64);
    }

    #[inline]
    pub fn contains(&self, hop: usize) -> bool {
        let b = hop - 1;
        self.0[b / 64] >> (b % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.0.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(|&w| w == 0)
    }

    /// Any member, or `None` for the empty set.
    pub fn first(&self) -> Option<usize> {
        self.0
            .iter()
            .enumerate()
            .find(|(_, &w)| w != 0)
            .map(|(i, w)| i * 64 + w.trailing_zeros() as usize + 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().flat_map(|(i, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(i * 64 + b + 1)
            })
        })
    }

    /// Low 64 hops as a bitmask (bit `h-1` for hop `h`).
    pub fn low_mask(&self) -> u64 {
        self.0[0]
    }
}

impl FromIterator<usize> for HopSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = Self::default();
        for h in iter {
            s.insert(h);
        }
        s
    }
}

/// Action vector sample table for RECIPE-t.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Avst {
    k: usize,
    rows: usize,
    seed: u64,
    apa_digest: [u8; 32],
    actions: Vec<Action>,
}

const AVST_MAGIC: &[u8; 4] = b"AVST";
const AVST_VERSION: u32 = 1;
const AVST_HEADER: usize = 4 + 4 + 4 + 4 + 8 + 32;

impl Avst {
    /// Builds a table from explicit rows (all of length `K`).
    pub fn from_rows(rows: Vec<Vec<Action>>, seed: u64, apa_digest: [u8; 32]) -> Result<Self> {
        let Some(k) = rows.first().map(Vec::len) else {
            return Err(Error::range("L", 0, 1, usize::MAX));
        };
        if k == 0 || k > MAX_PATH {
            return Err(Error::range("K", k, 1, MAX_PATH));
        }
        let n = rows.len();
        let mut actions = Vec::with_capacity(n * k);
        for row in rows {
            if row.len() != k {
                return Err(Error::Format("AVST rows differ in length".into()));
            }
            if row[0] != Action::Replace {
                return Err(Error::Format("AVST row does not start with Replace".into()));
            }
            actions.extend(row);
        }
        Ok(Self {
            k,
            rows: n,
            seed,
            apa_digest,
            actions,
        })
    }

    pub fn diameter(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn apa_digest(&self) -> &[u8; 32] {
        &self.apa_digest
    }

    #[inline]
    pub fn row(&self, l: usize) -> &[Action] {
        &self.actions[l * self.k..(l + 1) * self.k]
    }

    /// Errors unless this table was generated from `apa`.
    pub fn verify_apa(&self, apa: &Apa<f64>) -> Result<()> {
        if apa_digest(apa) != self.apa_digest {
            return Err(Error::Config("AVST was generated from a different APA".into()));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = Vec::with_capacity(AVST_HEADER);
        header.extend_from_slice(AVST_MAGIC);
        header.extend_from_slice(&AVST_VERSION.to_le_bytes());
        header.extend_from_slice(&(self.k as u32).to_le_bytes());
        header.extend_from_slice(&(self.rows as u32).to_le_bytes());
        header.extend_from_slice(&self.seed.to_le_bytes());
        header.extend_from_slice(&self.apa_digest);
        w.write_all(&header)?;
        let mut packed = vec![0u8; self.actions.len().div_ceil(4)];
        for (n, a) in self.actions.iter().enumerate() {
            packed[n / 4] |= (*a as u8) << (2 * (n % 4));
        }
        w.write_all(&packed)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec");
        out
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        if buf.len() < AVST_HEADER || &buf[..4] != AVST_MAGIC {
            return Err(Error::Format("not an AVST file".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != AVST_VERSION {
            return Err(Error::Format(format!("unsupported AVST version {version}")));
        }
        let k = u32_at(8) as usize;
        let rows = u32_at(12) as usize;
        let seed = u64::from_le_bytes(buf[16..24].try_into().unwrap());
        let apa_digest: [u8; 32] = buf[24..56].try_into().unwrap();
        let body = &buf[AVST_HEADER..];
        let n = k * rows;
        if body.len() != n.div_ceil(4) {
            return Err(Error::Format(format!(
                "AVST body is {} bytes, expected {}",
                body.len(),
                n.div_ceil(4)
            )));
        }
        let mut actions = Vec::with_capacity(n);
        for i in 0..n {
            let code = (body[i / 4] >> (2 * (i % 4))) & 3;
            actions.push(
                Action::from_code(code)
                    .ok_or_else(|| Error::Format("reserved AVST action code".into()))?,
            );
        }
        let rows_vec = actions.chunks(k.max(1)).map(<[Action]>::to_vec).collect();
        Self::from_rows(rows_vec, seed, apa_digest)
    }
}

/// SHA-256 over the APA's exact binary contents.
pub fn apa_digest(apa: &Apa<f64>) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((apa.diameter() as u64).to_le_bytes());
    for row in apa.rows() {
        for e in row {
            match e {
                ApaEntry::Reachable(p) => {
                    h.update([1u8]);
                    for x in [p.add, p.skip, p.replace] {
                        h.update(x.to_le_bytes());
                    }
                }
                ApaEntry::Unreachable => h.update([0u8]),
            }
        }
    }
    h.finalize().into()
}

/// Simulates RECIPE-d down a full-length path `rows` times.
pub fn generate_avst(apa: &Apa<f64>, rows: usize, seed: u64) -> Result<Avst> {
    if rows == 0 {
        return Err(Error::range("L", 0, 1, usize::MAX));
    }
    let k = apa.diameter();
    if k > MAX_PATH {
        return Err(Error::range("K", k, 1, MAX_PATH));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut actions = Vec::with_capacity(rows * k);
    for _ in 0..rows {
        let mut d = 0;
        for i in 1..=k {
            let a = apa.entry(i, d)?.choose(rng.random::<f64>());
            d = match a {
                Action::Add => d + 1,
                Action::Replace => 1,
                Action::Skip => d,
            };
            actions.push(a);
        }
    }
    Ok(Avst {
        k,
        rows,
        seed,
        apa_digest: apa_digest(apa),
        actions,
    })
}

/// PINT baseline: per packet, reservoir sampling with probability `alpha`,
/// otherwise every switch XORs its ID with probability `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PintConfig {
    pub params: PintParams<f64>,
    /// Whether empty codewords (all switches skipped) count as received.
    pub count_empty: bool,
}

impl PintConfig {
    pub fn new(params: PintParams<f64>) -> Self {
        Self {
            params,
            count_empty: true,
        }
    }

    pub fn conditioned(params: PintParams<f64>) -> Self {
        Self {
            params,
            count_empty: false,
        }
    }
}

/// Encoder family plus its shared artifacts.
#[derive(Debug, Clone)]
pub enum Scheme {
    RecipeD(Arc<Apa<f64>>),
    RecipeT(Arc<Avst>),
    Pint(PintConfig),
}

impl Scheme {
    pub fn recipe_d(apa: Apa<f64>) -> Self {
        Scheme::RecipeD(Arc::new(apa))
    }

    pub fn recipe_t(avst: Avst) -> Self {
        Scheme::RecipeT(Arc::new(avst))
    }

    pub fn pint(params: PintParams<f64>) -> Self {
        Scheme::Pint(PintConfig::new(params))
    }

    /// Longest supported path.
    pub fn diameter(&self) -> usize {
        match self {
            Scheme::RecipeD(apa) => apa.diameter(),
            Scheme::RecipeT(avst) => avst.diameter(),
            Scheme::Pint(_) => MAX_PATH,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Scheme::RecipeD(_) => "recipe-d".into(),
            Scheme::RecipeT(avst) => format!("recipe-t(L={})", avst.len()),
            Scheme::Pint(c) => format!("pint(alpha={},p={})", c.params.alpha, c.params.p),
        }
    }

    pub fn counts_empty(&self) -> bool {
        match self {
            Scheme::Pint(c) => c.count_empty,
            _ => true,
        }
    }

    /// Action switch `hop` takes on a packet whose codeword has degree `degree`.
    #[inline]
    pub fn action(&self, hop: usize, degree: usize, packet_id: u64, gh: &GlobalHash) -> Result<Action> {
        let k = self.diameter();
        if hop == 0 || hop > k {
            return Err(Error::range("hop", hop, 1, k));
        }
        Ok(match self {
            Scheme::RecipeD(apa) => apa
                .entry(hop, degree)?
                .choose(gh.uniform(hop as u64, packet_id)),
            Scheme::RecipeT(avst) => avst.row(gh.row(packet_id, avst.len()))[hop - 1],
            Scheme::Pint(c) => {
                let nu = gh.uniform(hop as u64, packet_id);
                if gh.pint_branch(packet_id) < c.params.alpha {
                    if nu * (hop as f64) < 1.0 {
                        Action::Replace
                    } else {
                        Action::Skip
                    }
                } else if nu < c.params.p {
                    Action::Add
                } else {
                    Action::Skip
                }
            }
        })
    }

    /// One switch traversal.
    pub fn step(&self, pkt: &Packet, id: SwitchId, gh: &GlobalHash) -> Result<Packet> {
        let action = self.action(pkt.hop_count + 1, pkt.degree, pkt.packet_id, gh)?;
        let out = pkt.apply(action, id);
        if let Scheme::RecipeD(apa) = self {
            let bits = degree_field_bits(apa.diameter());
            if out.degree >> bits != 0 {
                return Err(Error::Consistency(format!(
                    "degree {} overflows a {bits}-bit field",
                    out.degree
                )));
            }
        }
        Ok(out)
    }

    /// Sends a fresh packet down `ids` (hop 1 first).
    pub fn encode_path(&self, ids: &[SwitchId], packet_id: u64, gh: &GlobalHash) -> Result<Packet> {
        let mut pkt = Packet::new(packet_id);
        for id in ids {
            pkt = self.step(&pkt, *id, gh)?;
        }
        Ok(pkt)
    }

    /// As [`Scheme::encode_path`], also returning the action at every hop.
    pub fn encode_path_traced(
        &self,
        ids: &[SwitchId],
        packet_id: u64,
        gh: &GlobalHash,
    ) -> Result<(Packet, Vec<Action>)> {
        let mut pkt = Packet::new(packet_id);
        let mut trace = Vec::with_capacity(ids.len());
        for id in ids {
            let a = self.action(pkt.hop_count + 1, pkt.degree, pkt.packet_id, gh)?;
            trace.push(a);
            pkt = self.step(&pkt, *id, gh)?;
        }
        Ok((pkt, trace))
    }
}

/// One RECIPE-d hop against an APA.
pub fn step_recipe_d(pkt: &Packet, id: SwitchId, apa: &Apa<f64>, gh: &GlobalHash) -> Result<Packet> {
    let i = pkt.hop_count + 1;
    if i > apa.diameter() {
        return Err(Error::range("hop", i, 1, apa.diameter()));
    }
    let action = apa.entry(i, pkt.degree)?.choose(gh.uniform(i as u64, pkt.packet_id));
    let out = pkt.apply(action, id);
    if out.degree >> degree_field_bits(apa.diameter()) != 0 {
        return Err(Error::Consistency("degree field overflow".into()));
    }
    Ok(out)
}

/// Table lookup step; the degree field is neither read nor meaningful.
pub fn step_recipe_t(pkt: &Packet, id: SwitchId, avst: &Avst, gh: &GlobalHash) -> Result<Packet> {
    let i = pkt.hop_count + 1;
    if i > avst.diameter() {
        return Err(Error::range("hop", i, 1, avst.diameter()));
    }
    let action = avst.row(gh.row(pkt.packet_id, avst.len()))[i - 1];
    Ok(pkt.apply(action, id))
}
