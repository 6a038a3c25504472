//! Permutation sampling, the 1-based modulo convention and synchronized
//! shuffling.
//!
//! Public index semantics are 1-based: a [`Permutation`] of length `n` maps
//! `{1, …, n}` onto itself. Storage is 0-based.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Stream tag for the server draw of the machine permutation `π`.
const SERVER_STREAM: u64 = u64::MAX;
/// Offset separating i.i.d. index streams from permutation streams.
const IID_STREAM_BASE: u64 = 1 << 40;

/// `a mod b` with results in `{1, …, b}`: `a - ⌊(a-1)/b⌋·b`.
///
/// Multiples of `b` map to `b` rather than 0.
pub fn mod_index(a: i64, b: i64) -> Result<i64> {
    if b <= 0 {
        return Err(Error::invalid(format!("mod_index: modulus must be positive, got {b}")));
    }
    Ok(a - (a - 1).div_euclid(b) * b)
}

/// A bijection on `{1, …, n}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    zero_based: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation { zero_based: (0..n).collect() }
    }

    /// Builds a permutation from 1-based images, rejecting non-bijections.
    pub fn from_one_based(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        let mut zero_based = Vec::with_capacity(n);
        for &v in &images {
            if v == 0 || v > n || seen[v - 1] {
                return Err(Error::invalid(format!(
                    "{images:?} is not a permutation of 1..={n}"
                )));
            }
            seen[v - 1] = true;
            zero_based.push(v - 1);
        }
        Ok(Permutation { zero_based })
    }

    pub(crate) fn from_zero_based_unchecked(zero_based: Vec<usize>) -> Self {
        debug_assert!(Self::is_bijection(&zero_based));
        Permutation { zero_based }
    }

    fn is_bijection(zero_based: &[usize]) -> bool {
        let mut seen = vec![false; zero_based.len()];
        zero_based.iter().all(|&v| {
            v < seen.len() && !std::mem::replace(&mut seen[v], true)
        })
    }

    pub fn len(&self) -> usize {
        self.zero_based.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zero_based.is_empty()
    }

    /// Image of the 1-based position `i` (also 1-based).
    ///
    /// # Panics
    /// If `i` is outside `1..=len`.
    pub fn at(&self, i: usize) -> usize {
        self.zero_based[i - 1] + 1
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.zero_based.iter().map(|&v| v + 1).collect()
    }

    /// Component indices in visiting order, 0-based.
    pub fn as_zero_based(&self) -> &[usize] {
        &self.zero_based
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(images: Vec<usize>) -> Result<Self> {
        Permutation::from_one_based(images)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.to_one_based()
    }
}

/// Per-machine component orderings for one epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationSet {
    pub per_machine: Vec<Permutation>,
    /// 1-based epoch this set belongs to.
    pub epoch_index: usize,
}

impl PermutationSet {
    /// Validates that there are `machines` permutations, each of length `components`.
    pub fn new(per_machine: Vec<Permutation>, epoch_index: usize) -> Result<Self> {
        if per_machine.is_empty() {
            return Err(Error::invalid("a permutation set needs at least one machine"));
        }
        let n = per_machine[0].len();
        if n == 0 || per_machine.iter().any(|p| p.len() != n) {
            return Err(Error::invalid("all machine permutations must share one nonzero length"));
        }
        Ok(PermutationSet { per_machine, epoch_index })
    }

    pub fn machines(&self) -> usize {
        self.per_machine.len()
    }

    pub fn components(&self) -> usize {
        self.per_machine[0].len()
    }
}

/// Uniform permutation of `{1, …, n}` by Fisher–Yates.
pub fn sample_uniform_permutation<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Permutation> {
    if n == 0 {
        return Err(Error::invalid("cannot sample a permutation of an empty set"));
    }
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(rng);
    Ok(Permutation::from_zero_based_unchecked(v))
}

/// Shifted copies of one server permutation:
/// `σ^m(i) = σ(mod_index(i + (N/M)·π(m), N))`.
pub fn sync_shuf_permutations(sigma: &Permutation, pi: &Permutation) -> Result<PermutationSet> {
    let n = sigma.len();
    let m = pi.len();
    if n == 0 || m == 0 {
        return Err(Error::invalid("sync_shuf_permutations: empty permutation"));
    }
    if !n.is_multiple_of(m) {
        return Err(Error::invalid(format!(
            "synchronized shuffling requires M to divide N (M = {m}, N = {n})"
        )));
    }
    let shift = n / m;
    let per_machine = (1..=m)
        .map(|machine| {
            let offset = shift * pi.at(machine);
            let images = (1..=n)
                .map(|i| {
                    let pos = mod_index((i + offset) as i64, n as i64).expect("n > 0") as usize;
                    sigma.at(pos) - 1
                })
                .collect();
            Permutation::from_zero_based_unchecked(images)
        })
        .collect();
    Ok(PermutationSet { per_machine, epoch_index: 1 })
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator keyed by `(seed, epoch, stream)`.
///
/// Substreams do not depend on the order in which they are requested.
pub fn substream(seed: u64, epoch: u64, stream: u64) -> ChaCha8Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    let mut mix = splitmix64(&mut state) ^ epoch.rotate_left(17);
    mix = splitmix64(&mut mix) ^ stream.rotate_left(41);
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut mix).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Generator for machine `machine` (0-based) in epoch `epoch`.
pub fn machine_stream(seed: u64, epoch: usize, machine: usize) -> ChaCha8Rng {
    substream(seed, epoch as u64, machine as u64)
}

/// Generator for with-replacement index draws of machine `machine` in epoch `epoch`.
pub fn iid_stream(seed: u64, epoch: usize, machine: usize) -> ChaCha8Rng {
    substream(seed, epoch as u64, IID_STREAM_BASE + machine as u64)
}

/// The permutations used in epoch `epoch` (1-based).
///
/// Without synchronization machine `m` shuffles with its own substream. With
/// synchronization the server permutation `σ` is drawn from machine 0's
/// substream and `π` from a dedicated server stream, so that `M = 1` yields
/// exactly the unsynchronized permutation.
pub fn epoch_permutations(
    seed: u64,
    epoch: usize,
    machines: usize,
    components: usize,
    sync_shuf: bool,
) -> Result<PermutationSet> {
    if machines == 0 {
        return Err(Error::invalid("need at least one machine"));
    }
    let mut set = if sync_shuf {
        let sigma = sample_uniform_permutation(components, &mut machine_stream(seed, epoch, 0))?;
        let mut server = substream(seed, epoch as u64, SERVER_STREAM);
        let pi = sample_uniform_permutation(machines, &mut server)?;
        sync_shuf_permutations(&sigma, &pi)?
    } else {
        let per_machine = (0..machines)
            .map(|m| sample_uniform_permutation(components, &mut machine_stream(seed, epoch, m)))
            .collect::<Result<Vec<_>>>()?;
        PermutationSet::new(per_machine, epoch)?
    };
    set.epoch_index = epoch;
    Ok(set)
}
