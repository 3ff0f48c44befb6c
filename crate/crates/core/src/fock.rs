//! Occupation-number (Fock) states over `M` modes holding `N` bosons.
//!
//! States are indexed densely in colexicographic order of their occupation
//! vectors: the last mode is the most significant digit. Equivalently, a
//! state is the sorted multiset of mode indices `c_1 <= ... <= c_N` and its
//! rank is `sum_k C(c_k + k - 1, k)` (the combinatorial number system for
//! multisets). The all-in-mode-0 state has rank 0 and the all-in-last-mode
//! state has rank `D - 1`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest particle number representable by the byte-sized occupation storage.
pub const MAX_PARTICLES: usize = u8::MAX as usize;
/// Largest mode count addressable by byte-sized mode indices.
pub const MAX_MODES: usize = u8::MAX as usize + 1;

/// Binomial coefficient `C(n, k)` with overflow detection.
pub fn binomial(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) is always exact
        acc = acc.checked_mul(u128::from(n - i))? / u128::from(i + 1);
        if acc > u128::from(u64::MAX) {
            return None;
        }
    }
    u64::try_from(acc).ok()
}

/// Number of ways to place `particles` bosons in `modes` modes, `C(M+N-1, N)`.
pub fn hilbert_dim(modes: usize, particles: usize) -> Result<u64> {
    if modes == 0 || particles == 0 {
        return Err(invalid("modes and particles must both be positive"));
    }
    let n = (modes as u64)
        .checked_add(particles as u64 - 1)
        .ok_or_else(|| Error::Overflow(format!("hilbert_dim({modes}, {particles})")))?;
    binomial(n, particles as u64)
        .ok_or_else(|| Error::Overflow(format!("hilbert_dim({modes}, {particles})")))
}

/// An occupation-number vector: particles per mode.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FockState(Vec<u8>);

impl FockState {
    pub fn new(occupations: Vec<u8>) -> Self {
        FockState(occupations)
    }

    /// Builds a state from wider integers, rejecting occupations above 255.
    pub fn from_counts(occupations: &[u32]) -> Result<Self> {
        occupations
            .iter()
            .map(|&o| u8::try_from(o).map_err(|_| invalid(format!("occupation {o} exceeds 255"))))
            .collect::<Result<Vec<_>>>()
            .map(FockState)
    }

    /// One particle in each of the first `particles` modes, `|1,..,1,0,..,0>`.
    pub fn single_occupancy(modes: usize, particles: usize) -> Result<Self> {
        if particles > modes {
            return Err(invalid(format!(
                "cannot place {particles} single particles in {modes} modes"
            )));
        }
        let mut occ = vec![0u8; modes];
        occ[..particles].fill(1);
        Ok(FockState(occ))
    }

    pub fn occupations(&self) -> &[u8] {
        &self.0
    }

    pub fn modes(&self) -> usize {
        self.0.len()
    }

    pub fn particles(&self) -> usize {
        self.0.iter().map(|&o| o as usize).sum()
    }

    /// Sorted mode indices, one entry per particle.
    pub fn mode_list(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.particles());
        for (mode, &occ) in self.0.iter().enumerate() {
            out.extend(std::iter::repeat_n(mode, occ as usize));
        }
        out
    }

    /// Inverse of [`FockState::mode_list`].
    pub fn from_mode_list(modes: usize, list: &[usize]) -> Result<Self> {
        let mut occ = vec![0u8; modes];
        for &m in list {
            let slot = occ
                .get_mut(m)
                .ok_or_else(|| invalid(format!("mode index {m} out of range for {modes} modes")))?;
            *slot = slot
                .checked_add(1)
                .ok_or_else(|| invalid("occupation exceeds 255"))?;
        }
        Ok(FockState(occ))
    }

    /// Product of occupation factorials, `prod_i n_i!`.
    pub fn factorial_product(&self) -> f64 {
        self.0
            .iter()
            .map(|&o| (1..=o as u32).map(f64::from).product::<f64>())
            .product()
    }
}

impl fmt::Debug for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for (i, o) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{o}")?;
        }
        write!(f, ">")
    }
}

/// L1 distance between two occupation vectors of the same shape.
///
/// Always even when the particle totals agree.
pub fn l1_distance(a: &FockState, b: &FockState) -> Result<u32> {
    if a.modes() != b.modes() {
        return Err(Error::ShapeMismatch(format!(
            "states have {} and {} modes",
            a.modes(),
            b.modes()
        )));
    }
    if a.particles() != b.particles() {
        return Err(Error::ShapeMismatch(format!(
            "states hold {} and {} particles",
            a.particles(),
            b.particles()
        )));
    }
    Ok(l1_unchecked(a.occupations(), b.occupations()))
}

pub(crate) fn l1_unchecked(a: &[u8], b: &[u8]) -> u32 {
    a.iter().zip(b).map(|(&x, &y)| u32::from(x.abs_diff(y))).sum()
}

/// L1 distance between two equal-size sorted mode multisets:
/// `2 * (N - |A ∩ B|)`.
pub(crate) fn l1_sorted_modes(a: &[u8], b: &[u8]) -> u32 {
    debug_assert_eq!(a.len(), b.len());
    let (mut i, mut j, mut common) = (0, 0, 0u32);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    2 * (a.len() as u32 - common)
}

/// Mode count, particle count and Hilbert-space dimension of a problem,
/// with a cached binomial table for ranking.
#[derive(Clone)]
pub struct ProblemShape {
    modes: usize,
    particles: usize,
    dim: u64,
    // table[(k - 1) * modes + c] = C(c + k - 1, k), k in 1..=N, c in 0..M
    table: Arc<[u64]>,
}

impl ProblemShape {
    pub fn new(modes: usize, particles: usize) -> Result<Self> {
        let dim = hilbert_dim(modes, particles)?;
        if particles > MAX_PARTICLES || modes > MAX_MODES {
            return Err(invalid(format!(
                "at most {MAX_PARTICLES} particles in {MAX_MODES} modes are supported, \
                 got {particles} in {modes}"
            )));
        }
        let mut table = Vec::with_capacity(modes * particles);
        for k in 1..=particles as u64 {
            for c in 0..modes as u64 {
                // every entry is <= D - 1, so no overflow once D fits
                table.push(binomial(c + k - 1, k).expect("bounded by the dimension"));
            }
        }
        Ok(ProblemShape {
            modes,
            particles,
            dim,
            table: table.into(),
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn dim(&self) -> u64 {
        self.dim
    }

    fn coeff(&self, k: usize, c: usize) -> u64 {
        self.table[(k - 1) * self.modes + c]
    }

    /// Checks that `state` belongs to this shape.
    pub fn validate(&self, state: &FockState) -> Result<()> {
        if state.modes() != self.modes {
            return Err(Error::ShapeMismatch(format!(
                "state has {} modes, expected {}",
                state.modes(),
                self.modes
            )));
        }
        if state.particles() != self.particles {
            return Err(Error::ShapeMismatch(format!(
                "state holds {} particles, expected {}",
                state.particles(),
                self.particles
            )));
        }
        Ok(())
    }

    /// Colex rank of a state in `[0, D)`.
    pub fn rank(&self, state: &FockState) -> Result<u64> {
        self.validate(state)?;
        let mut rank = 0u64;
        let mut k = 0usize;
        for (mode, &occ) in state.occupations().iter().enumerate() {
            for _ in 0..occ {
                k += 1;
                rank += self.coeff(k, mode);
            }
        }
        Ok(rank)
    }

    /// Rank of a sorted mode multiset (no validation beyond debug asserts).
    pub(crate) fn rank_sorted_modes(&self, modes: &[u8]) -> u64 {
        debug_assert_eq!(modes.len(), self.particles);
        modes
            .iter()
            .enumerate()
            .map(|(i, &c)| self.coeff(i + 1, c as usize))
            .sum()
    }

    /// State with the given rank.
    pub fn unrank(&self, rank: u64) -> Result<FockState> {
        let mut modes = vec![0u8; self.particles];
        self.unrank_sorted_modes(rank, &mut modes)?;
        let mut occ = vec![0u8; self.modes];
        for &m in &modes {
            occ[m as usize] += 1;
        }
        Ok(FockState(occ))
    }

    /// Writes the sorted mode multiset of `rank` into `out` (length `N`).
    pub(crate) fn unrank_sorted_modes(&self, rank: u64, out: &mut [u8]) -> Result<()> {
        if rank >= self.dim {
            return Err(Error::RankOutOfRange {
                rank,
                dim: self.dim,
            });
        }
        let mut rest = rank;
        let mut c = self.modes - 1;
        for k in (1..=self.particles).rev() {
            while self.coeff(k, c) > rest {
                c -= 1;
            }
            rest -= self.coeff(k, c);
            out[k - 1] = c as u8;
        }
        debug_assert_eq!(rest, 0);
        Ok(())
    }

    /// Iterator over all states in rank order.
    pub fn states(&self) -> impl Iterator<Item = FockState> + '_ {
        (0..self.dim).map(move |r| self.unrank(r).expect("rank in range"))
    }
}

impl fmt::Debug for ProblemShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemShape")
            .field("modes", &self.modes)
            .field("particles", &self.particles)
            .field("dim", &self.dim)
            .finish()
    }
}

impl PartialEq for ProblemShape {
    fn eq(&self, other: &Self) -> bool {
        self.modes == other.modes && self.particles == other.particles
    }
}

impl Eq for ProblemShape {}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Every occupation vector of length `m` summing to `n`, built recursively
    /// without reference to the ranking code.
    fn enumerate(m: usize, n: usize) -> Vec<Vec<u8>> {
        if m == 1 {
            return vec![vec![n as u8]];
        }
        let mut out = Vec::new();
        for first in 0..=n {
            for mut rest in enumerate(m - 1, n - first) {
                rest.insert(0, first as u8);
                out.push(rest);
            }
        }
        out
    }

    fn colex_key(v: &[u8]) -> Vec<u8> {
        v.iter().rev().copied().collect()
    }

    #[test]
    fn reference_dimensions() {
        assert_eq!(hilbert_dim(40, 5).unwrap(), 1_086_008);
        assert_eq!(hilbert_dim(12, 12).unwrap(), 1_352_078);
        assert_eq!(hilbert_dim(1, 7).unwrap(), 1);
    }

    #[test]
    fn dim_matches_enumeration() {
        for m in 1..=8 {
            for n in 1..=8 {
                assert_eq!(hilbert_dim(m, n).unwrap(), enumerate(m, n).len() as u64);
            }
        }
    }

    #[test]
    fn overflow_is_reported() {
        assert!(matches!(hilbert_dim(1000, 500), Err(Error::Overflow(_))));
        assert!(matches!(hilbert_dim(usize::MAX, 2), Err(Error::Overflow(_))));
        assert!(hilbert_dim(0, 3).is_err());
        assert!(hilbert_dim(3, 0).is_err());
    }

    #[test]
    fn rank_anchors() {
        let shape = ProblemShape::new(5, 3).unwrap();
        let first = FockState::new(vec![3, 0, 0, 0, 0]);
        let last = FockState::new(vec![0, 0, 0, 0, 3]);
        assert_eq!(shape.rank(&first).unwrap(), 0);
        assert_eq!(shape.rank(&last).unwrap(), shape.dim() - 1);
        let two = ProblemShape::new(2, 2).unwrap();
        assert_eq!(two.unrank(0).unwrap().occupations(), &[2, 0]);
    }

    #[test]
    fn three_three_has_ten_states() {
        let shape = ProblemShape::new(3, 3).unwrap();
        let mut states: Vec<_> = shape.states().collect();
        states.dedup();
        assert_eq!(states.len(), 10);
    }

    #[test]
    fn rank_follows_colex_enumeration() {
        for (m, n) in [(3, 3), (4, 2), (5, 4), (8, 8)] {
            let shape = ProblemShape::new(m, n).unwrap();
            let mut all = enumerate(m, n);
            all.sort_by_key(|v| colex_key(v));
            for (expected, occ) in all.into_iter().enumerate() {
                let state = FockState::new(occ);
                assert_eq!(shape.rank(&state).unwrap(), expected as u64);
                assert_eq!(shape.unrank(expected as u64).unwrap(), state);
            }
        }
    }

    #[test]
    fn rank_rejects_bad_states() {
        let shape = ProblemShape::new(3, 2).unwrap();
        assert!(shape.rank(&FockState::new(vec![1, 1])).is_err());
        assert!(shape.rank(&FockState::new(vec![1, 1, 1])).is_err());
        assert!(matches!(
            shape.unrank(shape.dim()),
            Err(Error::RankOutOfRange { .. })
        ));
    }

    #[test]
    fn l1_examples() {
        let a = FockState::new(vec![1, 1, 0]);
        let b = FockState::new(vec![0, 1, 1]);
        assert_eq!(l1_distance(&a, &b).unwrap(), 2);
        assert_eq!(l1_distance(&a, &a).unwrap(), 0);
        let c = FockState::new(vec![3, 0, 0]);
        let d = FockState::new(vec![0, 0, 3]);
        assert_eq!(l1_distance(&c, &d).unwrap(), 6);
        assert!(l1_distance(&a, &c).is_err());
        assert!(l1_distance(&a, &FockState::new(vec![1, 1])).is_err());
    }

    #[test]
    fn mode_list_round_trip() {
        let s = FockState::new(vec![0, 2, 1, 0, 3]);
        assert_eq!(s.mode_list(), vec![1, 1, 2, 4, 4, 4]);
        assert_eq!(FockState::from_mode_list(5, &s.mode_list()).unwrap(), s);
        assert_eq!(s.factorial_product(), 2.0 * 6.0);
    }

    proptest! {
        #[test]
        fn rank_unrank_round_trip_12_12(k in 0u64..1_352_078) {
            let shape = ProblemShape::new(12, 12).unwrap();
            let s = shape.unrank(k).unwrap();
            prop_assert_eq!(shape.rank(&s).unwrap(), k);
        }

        #[test]
        fn l1_metric_properties(ka in 0u64..2002, kb in 0u64..2002, kc in 0u64..2002) {
            let shape = ProblemShape::new(6, 9).unwrap();
            let (a, b, c) = (shape.unrank(ka).unwrap(), shape.unrank(kb).unwrap(), shape.unrank(kc).unwrap());
            let ab = l1_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, l1_distance(&b, &a).unwrap());
            prop_assert_eq!(ab % 2, 0);
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(ab <= l1_distance(&a, &c).unwrap() + l1_distance(&c, &b).unwrap());
            let ma: Vec<u8> = a.mode_list().iter().map(|&x| x as u8).collect();
            let mb: Vec<u8> = b.mode_list().iter().map(|&x| x as u8).collect();
            prop_assert_eq!(l1_sorted_modes(&ma, &mb), ab);
        }
    }
}
