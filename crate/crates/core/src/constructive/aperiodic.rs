//! Exhaustive aperiodicity certificates.
//!
//! A dataset is aperiodic when it does not contain the zero tensor and no
//! element equals a nontrivial circular shift (spatial, and optionally
//! along the channel axis) of any element, itself included.

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{MultiTensor, TranslationVector};
use std::collections::HashMap;
use std::fmt;

/// Which shifts count as translations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftScope {
    Spatial,
    /// Spatial shifts combined with every circular channel shift.
    SpatialAndChannel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Aperiodic,
    Periodic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Witness {
    ZeroElement {
        index: usize,
    },
    /// `T^(shift, channel_shift)(dataset[source]) == dataset[target]`.
    Coincidence {
        source: usize,
        target: usize,
        shift: TranslationVector,
        channel_shift: usize,
    },
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::ZeroElement { index } => write!(f, "element {index} is the zero tensor"),
            Witness::Coincidence {
                source,
                target,
                shift,
                channel_shift,
            } => write!(
                f,
                "element {source} shifted by {:?} (channel shift {channel_shift}) equals element {target}",
                shift.offsets()
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AperiodicityCertificate {
    /// FNV-1a digest of the dataset contents, hex.
    pub dataset_id: String,
    pub scope: ShiftScope,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
}

impl AperiodicityCertificate {
    pub fn is_aperiodic(&self) -> bool {
        self.verdict == Verdict::Aperiodic
    }

    /// Turns a periodic verdict into a precondition error.
    pub fn require(&self) -> Result<()> {
        match &self.witness {
            None => Ok(()),
            Some(w) => Err(Error::Precondition(format!(
                "dataset is not aperiodic: {w}"
            ))),
        }
    }
}

pub fn dataset_digest(elements: &[MultiTensor]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    for e in elements {
        for &d in e.shape().dims() {
            eat(&(d as u64).to_le_bytes());
        }
        eat(&(e.channels() as u64).to_le_bytes());
        for v in e.as_slice() {
            eat(&v.to_bits().to_le_bytes());
        }
    }
    format!("{h:016x}")
}

/// Exhaustive check over every ordered pair and every shift in `scope`.
///
/// Pairs whose value multisets differ are skipped, since a shift only
/// permutes values.
pub fn check_aperiodic(
    elements: &[MultiTensor],
    scope: ShiftScope,
) -> Result<AperiodicityCertificate> {
    let first = elements
        .first()
        .ok_or_else(|| Error::Input("aperiodicity of an empty dataset is undefined".into()))?;
    for (i, e) in elements.iter().enumerate() {
        if e.shape() != first.shape() || e.channels() != first.channels() {
            return Err(Error::Shape(format!(
                "element {i} has layout {}x{}, expected {}x{}",
                e.channels(),
                e.shape(),
                first.channels(),
                first.shape()
            )));
        }
    }
    let dataset_id = dataset_digest(elements);
    let done = |witness: Option<Witness>| AperiodicityCertificate {
        dataset_id: dataset_id.clone(),
        scope,
        verdict: if witness.is_some() {
            Verdict::Periodic
        } else {
            Verdict::Aperiodic
        },
        witness,
    };

    if let Some(index) = elements
        .iter()
        .position(|e| e.as_slice().iter().all(|&v| v == 0.0))
    {
        return Ok(done(Some(Witness::ZeroElement { index })));
    }

    let mut groups: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
    for (i, e) in elements.iter().enumerate() {
        let mut key: Vec<u64> = e.as_slice().iter().map(|v| canonical_bits(*v)).collect();
        key.sort_unstable();
        groups.entry(key).or_default().push(i);
    }
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for members in groups.values() {
        for (a, &s) in members.iter().enumerate() {
            for &t in &members[a..] {
                pairs.push((s, t));
            }
        }
    }
    pairs.sort_unstable();

    let shape = first.shape();
    let channel_shifts = match scope {
        ShiftScope::Spatial => 1,
        ShiftScope::SpatialAndChannel => first.channels(),
    };
    let shifts = TranslationVector::all(shape);
    let witness = par::find_first(pairs.len(), |pi| {
        let (s, t) = pairs[pi];
        let (zs, zt) = (&elements[s], &elements[t]);
        for c in 0..channel_shifts {
            let shifted_c = if c == 0 {
                zs.clone()
            } else {
                zs.shift_channels(c as i64)
            };
            for m in &shifts {
                if s == t && c == 0 && m.offsets().iter().all(|&v| v == 0) {
                    continue;
                }
                let table = shape.shifted_gather(&m.neg().0);
                if shifted_equals(&shifted_c, zt, &table) {
                    return Some(Witness::Coincidence {
                        source: s,
                        target: t,
                        shift: m.clone(),
                        channel_shift: c,
                    });
                }
            }
        }
        None
    });
    Ok(done(witness))
}

fn canonical_bits(v: f64) -> u64 {
    // -0.0 and 0.0 compare equal, so they must share a key
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

fn shifted_equals(src: &MultiTensor, dst: &MultiTensor, table: &[usize]) -> bool {
    (0..src.channels()).all(|r| {
        let (a, b) = (src.channel(r), dst.channel(r));
        table.iter().zip(b).all(|(&j, &v)| a[j] == v)
    })
}
