//! Binary chain checkpoints.
//!
//! Layout: the magic bytes, a format version byte, then sections. Each
//! section is a four-byte tag, a little-endian `u64` payload length and the
//! payload. Reals are stored as their bit patterns, so a resumed chain
//! continues exactly as if it had never stopped.

use std::path::Path;

use rand::SeedableRng;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::model::{AssociationMatrix, HmmParams, LatentStateMatrix, ValidatedContext, NUM_STATES};
use crate::sampler::{AcceptanceStats, Chain, ChainState, ChainTrace, Model, StateStats};
use crate::ChainRng;

pub const MAGIC: &[u8; 8] = b"CNVACKPT";
pub const FORMAT_VERSION: u8 = 1;

const META: &[u8; 4] = b"META";
const RNG: &[u8; 4] = b"RNG_";
const STATE: &[u8; 4] = b"STAT";
const OCCUPANCY: &[u8; 4] = b"OCCU";
const TRACE: &[u8; 4] = b"TRAC";

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }
    fn u64s(&mut self, v: impl IntoIterator<Item = u64>) {
        let v: Vec<u64> = v.into_iter().collect();
        self.u64(v.len() as u64);
        v.into_iter().for_each(|x| self.u64(x));
    }
    fn f64s(&mut self, v: impl IntoIterator<Item = f64>) {
        self.u64s(v.into_iter().map(f64::to_bits));
    }
    fn section(&mut self, tag: &[u8; 4], body: Writer) {
        self.0.extend_from_slice(tag);
        self.bytes(&body.0);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn fail(&self, msg: &str) -> Error {
        Error::Checkpoint(format!("{} section: {msg}", self.what))
    }
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if self.buf.len() < k {
            return Err(self.fail("truncated"));
        }
        let (head, tail) = self.buf.split_at(k);
        self.buf = tail;
        Ok(head)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("eight bytes"),
        ))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn len(&mut self) -> Result<usize> {
        let k = self.u64()?;
        usize::try_from(k)
            .ok()
            .filter(|&k| k <= self.buf.len())
            .ok_or_else(|| self.fail("length out of range"))
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let k = self.len()?;
        self.take(k)
    }
    fn string(&mut self) -> Result<String> {
        let b = self.bytes()?;
        String::from_utf8(b.to_vec()).map_err(|_| self.fail("invalid text"))
    }
    fn u64s(&mut self) -> Result<Vec<u64>> {
        let k = self.u64()? as usize;
        if k > self.buf.len() / 8 {
            return Err(self.fail("length out of range"));
        }
        (0..k).map(|_| self.u64()).collect()
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        Ok(self.u64s()?.into_iter().map(f64::from_bits).collect())
    }
    fn finish(&self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(self.fail("trailing bytes"))
        }
    }
}

fn chunks<const K: usize>(flat: &[u64]) -> Vec<[u64; K]> {
    flat.chunks_exact(K)
        .map(|c| c.try_into().expect("chunk size"))
        .collect()
}

fn chunks_f64<const K: usize>(flat: &[f64]) -> Vec<[f64; K]> {
    flat.chunks_exact(K)
        .map(|c| c.try_into().expect("chunk size"))
        .collect()
}

/// Identity of the run a checkpoint belongs to.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub data_hash: String,
    pub iteration: u64,
}

/// Writes `chain` to `path`.
pub fn save(path: &Path, chain: &Chain, config_hash: &str, data_hash: &str) -> Result<()> {
    let st = &chain.state;
    let mut out = Writer::default();
    out.0.extend_from_slice(MAGIC);
    out.0.push(FORMAT_VERSION);

    let mut meta = Writer::default();
    meta.bytes(config_hash.as_bytes());
    meta.bytes(data_hash.as_bytes());
    meta.u64(st.iteration);
    out.section(META, meta);

    let mut rng = Writer::default();
    rng.bytes(&chain.rng.get_seed());
    rng.u64(chain.rng.get_stream());
    rng.bytes(&chain.rng.get_word_pos().to_le_bytes());
    out.section(RNG, rng);

    let mut s = Writer::default();
    s.u64(st.xi.n_samples() as u64);
    s.u64(st.r.n_genes() as u64);
    s.u64(st.r.n_probes() as u64);
    s.bytes(st.r.as_slice());
    s.bytes(st.xi.as_slice());
    let hmm = &st.hmm;
    s.f64s(hmm.transition.iter().flatten().copied());
    s.f64s(hmm.means.iter().copied());
    s.f64s(hmm.sds.iter().copied());
    s.f64s(hmm.stationary.iter().copied());
    s.f64s(st.gene_loglik.iter().copied());
    for stat in &st.stats {
        s.u64(stat.count);
        s.f64(stat.sum);
        s.f64(stat.sum_sq);
    }
    out.section(STATE, s);

    let occ = &st.occupancy;
    let mut o = Writer::default();
    o.u64(occ.position);
    o.u64s(occ.r_since.iter().copied());
    o.u64s(occ.r_counts.iter().copied());
    o.u64s(occ.xi_since.iter().copied());
    o.u64s(occ.xi_counts.iter().flatten().copied());
    out.section(OCCUPANCY, o);

    let tr = &chain.trace;
    let mut t = Writer::default();
    t.u64(tr.retained);
    t.u64s(tr.iterations.iter().copied());
    t.u64s(tr.r_size.iter().copied());
    t.u64s(tr.occupancy.iter().flatten().copied());
    t.f64s(tr.log_posterior.iter().copied());
    t.f64s(tr.means.iter().flatten().copied());
    t.f64s(tr.sds.iter().flatten().copied());
    t.f64s(tr.transitions.iter().flatten().flatten().copied());
    let acceptance = serde_json::to_vec(&tr.acceptance)
        .map_err(|e| Error::Checkpoint(format!("acceptance counters: {e}")))?;
    t.bytes(&acceptance);
    out.section(TRACE, t);

    write_atomic(path, &out.0)
}

/// A checkpoint read from disk, not yet attached to a model.
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    sections: Vec<([u8; 4], Vec<u8>)>,
}

impl Checkpoint {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::parse(&bytes)
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 1 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = bytes[MAGIC.len()];
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let mut r = Reader {
            buf: &bytes[MAGIC.len() + 1..],
            what: "header",
        };
        let mut sections = Vec::new();
        while !r.buf.is_empty() {
            let tag: [u8; 4] = r.take(4)?.try_into().expect("four bytes");
            sections.push((tag, r.bytes()?.to_vec()));
        }
        let mut ck = Checkpoint {
            meta: CheckpointMeta {
                config_hash: String::new(),
                data_hash: String::new(),
                iteration: 0,
            },
            sections,
        };
        let mut m = ck.section(META, "META")?;
        let meta = CheckpointMeta {
            config_hash: m.string()?,
            data_hash: m.string()?,
            iteration: m.u64()?,
        };
        m.finish()?;
        ck.meta = meta;
        Ok(ck)
    }

    fn section(&self, tag: &[u8; 4], what: &'static str) -> Result<Reader<'_>> {
        self.sections
            .iter()
            .find(|(t, _)| t == tag)
            .map(|(_, b)| Reader { buf: b, what })
            .ok_or_else(|| Error::Checkpoint(format!("missing {what} section")))
    }

    /// Rebuilds the chain on `ctx`, which must describe the same data and settings.
    pub fn restore(&self, ctx: ValidatedContext) -> Result<Chain> {
        let model = Model::new(ctx)?;
        let (n, g_total, m_total) = (model.n_samples(), model.n_genes(), model.n_probes());

        let mut r = self.section(RNG, "RNG")?;
        let seed: [u8; 32] = r
            .bytes()?
            .try_into()
            .map_err(|_| r.fail("seed must be 32 bytes"))?;
        let stream = r.u64()?;
        let word_pos: [u8; 16] = r
            .bytes()?
            .try_into()
            .map_err(|_| r.fail("word position must be 16 bytes"))?;
        r.finish()?;
        let mut rng = ChainRng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(u128::from_le_bytes(word_pos));

        let mut s = self.section(STATE, "STAT")?;
        let dims = (s.u64()? as usize, s.u64()? as usize, s.u64()? as usize);
        if dims != (n, g_total, m_total) {
            return Err(Error::Checkpoint(format!(
                "checkpoint is for n={}, G={}, M={}; data have n={n}, G={g_total}, M={m_total}",
                dims.0, dims.1, dims.2
            )));
        }
        let r_bits = s.bytes()?;
        let xi_bits = s.bytes()?;
        if r_bits.len() != g_total * m_total || xi_bits.len() != n * m_total {
            return Err(s.fail("matrix sizes disagree with dimensions"));
        }
        let assoc = AssociationMatrix::from_rows(
            &r_bits
                .chunks(m_total)
                .map(<[u8]>::to_vec)
                .collect::<Vec<_>>(),
        )?;
        // States are stored probe-major.
        let xi = LatentStateMatrix::from_fn(n, m_total, |i, m| xi_bits[m * n + i])?;
        let transition = s.f64s()?;
        let means = s.f64s()?;
        let sds = s.f64s()?;
        let stationary = s.f64s()?;
        if transition.len() != NUM_STATES * NUM_STATES
            || [&means, &sds, &stationary]
                .iter()
                .any(|v| v.len() != NUM_STATES)
        {
            return Err(s.fail("HMM parameter sizes"));
        }
        let hmm = HmmParams {
            transition: chunks_f64::<NUM_STATES>(&transition)
                .try_into()
                .expect("four rows"),
            means: means.try_into().expect("four"),
            sds: sds.try_into().expect("four"),
            stationary: stationary.try_into().expect("four"),
        };
        let gene_loglik = s.f64s()?;
        if gene_loglik.len() != g_total {
            return Err(s.fail("likelihood cache size"));
        }
        let mut stats = [StateStats::default(); NUM_STATES];
        for stat in &mut stats {
            *stat = StateStats {
                count: s.u64()?,
                sum: s.f64()?,
                sum_sq: s.f64()?,
            };
        }
        s.finish()?;

        let mut state = ChainState::new(&model, xi, assoc, hmm)?;
        state.iteration = self.meta.iteration;
        state.gene_loglik = gene_loglik;
        state.stats = stats;

        let mut o = self.section(OCCUPANCY, "OCCU")?;
        let occ = &mut state.occupancy;
        occ.position = o.u64()?;
        occ.r_since = o.u64s()?;
        occ.r_counts = o.u64s()?;
        occ.xi_since = o.u64s()?;
        occ.xi_counts = chunks::<NUM_STATES>(&o.u64s()?);
        o.finish()?;
        if occ.r_since.len() != g_total * m_total
            || occ.r_counts.len() != g_total * m_total
            || occ.xi_since.len() != n * m_total
            || occ.xi_counts.len() != n * m_total
        {
            return Err(o.fail("counter sizes disagree with dimensions"));
        }

        let mut t = self.section(TRACE, "TRAC")?;
        let mut trace = ChainTrace::empty(n, g_total, m_total);
        trace.retained = t.u64()?;
        trace.iterations = t.u64s()?;
        trace.r_size = t.u64s()?;
        trace.occupancy = chunks::<NUM_STATES>(&t.u64s()?);
        trace.log_posterior = t.f64s()?;
        trace.means = chunks_f64::<NUM_STATES>(&t.f64s()?);
        trace.sds = chunks_f64::<NUM_STATES>(&t.f64s()?);
        trace.transitions = chunks_f64::<{ NUM_STATES * NUM_STATES }>(&t.f64s()?)
            .into_iter()
            .map(|flat| std::array::from_fn(|h| std::array::from_fn(|j| flat[h * NUM_STATES + j])))
            .collect();
        trace.acceptance = serde_json::from_slice::<AcceptanceStats>(t.bytes()?)
            .map_err(|e| t.fail(&format!("acceptance counters: {e}")))?;
        t.finish()?;
        let k = trace.retained as usize;
        if [
            trace.iterations.len(),
            trace.r_size.len(),
            trace.occupancy.len(),
            trace.log_posterior.len(),
            trace.means.len(),
            trace.sds.len(),
            trace.transitions.len(),
        ]
        .iter()
        .any(|&len| len != k)
        {
            return Err(Error::Checkpoint("trace series lengths disagree".into()));
        }

        Ok(Chain::from_parts(model, state, rng, trace))
    }
}
