//! Exact output distributions over the rank-indexed Fock basis.
//!
//! For input `S` and output `T`, the bosonic probability is
//! `|perm(U_{T,S})|^2 / (prod s_i! prod t_j!)`, where `U_{T,S}` takes row `j`
//! of `U` `t_j` times and column `i` `s_i` times. Distinguishable particles
//! replace the amplitude permanent with the permanent of `|U_ij|^2`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{FockState, ProblemShape};
use crate::interferometer::{Interferometer, Provenance};
use crate::permanent::{ryser_row_major, PermScalar};

/// Normalization tolerance for exact tables.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Which sampler a table describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Boson,
    Distinguishable,
    Uniform,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionSource {
    pub kind: SamplerKind,
    pub input: Option<FockState>,
    pub unitary: Option<Provenance>,
}

impl DistributionSource {
    fn unknown() -> Self {
        DistributionSource {
            kind: SamplerKind::Unknown,
            input: None,
            unitary: None,
        }
    }
}

/// Dense probability table indexed by state rank.
#[derive(Clone, Debug)]
pub struct OutcomeDistribution {
    shape: ProblemShape,
    probs: Vec<f64>,
    source: DistributionSource,
}

impl OutcomeDistribution {
    /// Validates length, sign and normalization (within `1e-9`).
    pub fn new(shape: ProblemShape, probs: Vec<f64>, source: DistributionSource) -> Result<Self> {
        if probs.len() as u64 != shape.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{} probabilities for dimension {}",
                probs.len(),
                shape.dim()
            )));
        }
        if probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(invalid("probabilities must be finite and nonnegative"));
        }
        let sum = probs.iter().sum::<f64>();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized { sum });
        }
        Ok(OutcomeDistribution {
            shape,
            probs,
            source,
        })
    }

    pub fn shape(&self) -> &ProblemShape {
        &self.shape
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn source(&self) -> &DistributionSource {
        &self.source
    }

    pub fn prob(&self, state: &FockState) -> Result<f64> {
        Ok(self.probs[self.shape.rank(state)? as usize])
    }

    /// Writes the `BSD1` binary table: magic, `u32` M, `u32` N, `u64` D,
    /// D little-endian doubles, then the 64-bit FNV-1a hash of the doubles.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(BSD_MAGIC)?;
        w.write_all(&(self.shape.modes() as u32).to_le_bytes())?;
        w.write_all(&(self.shape.particles() as u32).to_le_bytes())?;
        w.write_all(&self.shape.dim().to_le_bytes())?;
        let mut hash = Fnv1a::new();
        for p in &self.probs {
            let bytes = p.to_le_bytes();
            hash.update(&bytes);
            w.write_all(&bytes)?;
        }
        w.write_all(&hash.finish().to_le_bytes())?;
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> std::result::Result<Self, String> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| e.to_string())?;
        if &magic != BSD_MAGIC {
            return Err("bad magic bytes".into());
        }
        let mut u32buf = [0u8; 4];
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u32buf).map_err(|e| e.to_string())?;
        let m = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u32buf).map_err(|e| e.to_string())?;
        let n = u32::from_le_bytes(u32buf) as usize;
        r.read_exact(&mut u64buf).map_err(|e| e.to_string())?;
        let d = u64::from_le_bytes(u64buf);
        let shape = ProblemShape::new(m, n).map_err(|e| e.to_string())?;
        if shape.dim() != d {
            return Err(format!("header dimension {d} disagrees with C(M+N-1, N) = {}", shape.dim()));
        }
        let mut probs = Vec::with_capacity(d as usize);
        let mut hash = Fnv1a::new();
        for _ in 0..d {
            r.read_exact(&mut u64buf).map_err(|e| e.to_string())?;
            hash.update(&u64buf);
            probs.push(f64::from_le_bytes(u64buf));
        }
        r.read_exact(&mut u64buf).map_err(|e| e.to_string())?;
        if u64::from_le_bytes(u64buf) != hash.finish() {
            return Err("checksum mismatch".into());
        }
        OutcomeDistribution::new(shape, probs, DistributionSource::unknown())
            .map_err(|e| e.to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_binary(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let r = BufReader::new(File::open(path)?);
        OutcomeDistribution::read_binary(r).map_err(|reason| Error::Format {
            path: path.to_path_buf(),
            reason,
        })
    }

    /// Replaces the provenance, e.g. after loading from disk.
    pub fn with_source(mut self, source: DistributionSource) -> Self {
        self.source = source;
        self
    }
}

pub const BSD_MAGIC: &[u8; 4] = b"BSD1";

/// 64-bit FNV-1a.
#[derive(Clone, Copy, Debug)]
pub struct Fnv1a(u64);

impl Fnv1a {
    pub const fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv1a {
    fn default() -> Self {
        Self::new()
    }
}

fn check_input(u: &Interferometer, input: &FockState) -> Result<ProblemShape> {
    if input.modes() != u.modes() {
        return Err(Error::ShapeMismatch(format!(
            "input state has {} modes, interferometer has {}",
            input.modes(),
            u.modes()
        )));
    }
    if input.particles() == 0 {
        return Err(invalid("input state holds no particles"));
    }
    ProblemShape::new(u.modes(), input.particles())
}

/// Evaluates `entry(rank, scratch)` for every rank. Each entry depends on its
/// rank alone, so the table is identical however the range is split.
fn tabulate<T, F>(dim: u64, init: impl Fn() -> T + Sync + Send, entry: F) -> Vec<f64>
where
    F: Fn(u64, &mut T) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..dim).into_par_iter().map_init(init, |s, r| entry(r, s)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut scratch = init();
        (0..dim).map(|r| entry(r, &mut scratch)).collect()
    }
}

struct PermScratch<T> {
    outputs: Vec<u8>,
    matrix: Vec<T>,
    row_sums: Vec<T>,
}

impl<T: PermScalar> PermScratch<T> {
    fn new(n: usize) -> Self {
        PermScratch {
            outputs: vec![0; n],
            matrix: vec![T::zero(); n * n],
            row_sums: vec![T::zero(); n],
        }
    }
}

fn occupation_factorials(modes: &[u8]) -> f64 {
    // sorted multiset: runs of equal entries
    let mut prod = 1.0;
    let mut run = 1.0;
    for w in modes.windows(2) {
        if w[0] == w[1] {
            run += 1.0;
            prod *= run;
        } else {
            run = 1.0;
        }
    }
    prod
}

/// Bosonic output table `P^Q` for input `input` through `u`.
pub fn boson_distribution(u: &Interferometer, input: &FockState) -> Result<OutcomeDistribution> {
    let shape = check_input(u, input)?;
    let n = shape.particles();
    let in_modes = input.mode_list();
    let s_fact = input.factorial_product();
    let mat = u.unitary();
    let probs = tabulate(
        shape.dim(),
        || PermScratch::<Complex64>::new(n),
        |rank, s| {
            shape
                .unrank_sorted_modes(rank, &mut s.outputs)
                .expect("rank in range");
            for (r, &out) in s.outputs.iter().enumerate() {
                for (c, &inp) in in_modes.iter().enumerate() {
                    s.matrix[r * n + c] = mat[(out as usize, inp)];
                }
            }
            let perm = ryser_row_major(&s.matrix, n, &mut s.row_sums);
            perm.norm_sqr() / (s_fact * occupation_factorials(&s.outputs))
        },
    );
    OutcomeDistribution::new(
        shape,
        probs,
        DistributionSource {
            kind: SamplerKind::Boson,
            input: Some(input.clone()),
            unitary: Some(u.provenance().clone()),
        },
    )
}

/// Distinguishable-particle table `P^C`; inputs must be single-occupancy.
pub fn distinguishable_distribution(
    u: &Interferometer,
    input: &FockState,
) -> Result<OutcomeDistribution> {
    let shape = check_input(u, input)?;
    if input.occupations().iter().any(|&o| o > 1) {
        return Err(Error::Unsupported(
            "distinguishable table needs at most one particle per input mode".into(),
        ));
    }
    let n = shape.particles();
    let in_modes = input.mode_list();
    let weights = u.unitary().map(|z| z.norm_sqr());
    let probs = tabulate(
        shape.dim(),
        || PermScratch::<f64>::new(n),
        |rank, s| {
            shape
                .unrank_sorted_modes(rank, &mut s.outputs)
                .expect("rank in range");
            for (r, &out) in s.outputs.iter().enumerate() {
                for (c, &inp) in in_modes.iter().enumerate() {
                    s.matrix[r * n + c] = weights[(out as usize, inp)];
                }
            }
            // Ryser on a nonnegative matrix can dip a few ulps below zero
            let perm = ryser_row_major(&s.matrix, n, &mut s.row_sums).max(0.0);
            perm / occupation_factorials(&s.outputs)
        },
    );
    OutcomeDistribution::new(
        shape,
        probs,
        DistributionSource {
            kind: SamplerKind::Distinguishable,
            input: Some(input.clone()),
            unitary: Some(u.provenance().clone()),
        },
    )
}

/// Flat table `1/D`.
pub fn uniform_distribution(modes: usize, particles: usize) -> Result<OutcomeDistribution> {
    let shape = ProblemShape::new(modes, particles)?;
    let d = shape.dim();
    let dim = usize::try_from(d).map_err(|_| Error::Overflow("table size".into()))?;
    OutcomeDistribution::new(
        shape,
        vec![1.0 / d as f64; dim],
        DistributionSource {
            kind: SamplerKind::Uniform,
            input: None,
            unitary: None,
        },
    )
}

/// Bhattacharyya coefficient `sum_k sqrt(p_k q_k)` of two tables.
pub fn fidelity(p: &OutcomeDistribution, q: &OutcomeDistribution) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::ShapeMismatch("fidelity of tables with different shapes".into()));
    }
    fidelity_dense(p.probs(), q.probs())
}

/// [`fidelity`] on raw probability vectors, each normalized within `1e-6`.
pub fn fidelity_dense(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} entries", p.len(), q.len())));
    }
    for v in [p, q] {
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::NotNormalized { sum });
        }
    }
    Ok(p.iter()
        .zip(q)
        .map(|(a, b)| (a * b).sqrt())
        .sum::<f64>()
        .min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interferometer::haar_unitary;
    use crate::CMatrix;
    use std::collections::HashMap;

    fn beamsplitter() -> Interferometer {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let u = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(h, 0.0),
                Complex64::new(h, 0.0),
                Complex64::new(h, 0.0),
                Complex64::new(-h, 0.0),
            ],
        );
        Interferometer::new(u, Provenance::External("50:50".into())).unwrap()
    }

    fn identity(m: usize) -> Interferometer {
        Interferometer::new(CMatrix::identity(m, m), Provenance::External("id".into())).unwrap()
    }

    /// Amplitudes `<T| U_hat |S>` by expanding `prod_i (sum_j U_ji a_j^dag)^{s_i}`
    /// over all `M^N` output-mode sequences: the second-quantized route, with
    /// no permanents involved.
    pub(crate) fn many_body_amplitudes(u: &CMatrix, input: &FockState) -> HashMap<Vec<u8>, Complex64> {
        let m = u.nrows();
        let ins = input.mode_list();
        let n = ins.len();
        let mut coeffs: HashMap<Vec<u8>, Complex64> = HashMap::new();
        let total = m.pow(n as u32);
        for code in 0..total {
            let mut c = code;
            let mut occ = vec![0u8; m];
            let mut amp = Complex64::new(1.0, 0.0);
            for &i in &ins {
                let j = c % m;
                c /= m;
                occ[j] += 1;
                amp *= u[(j, i)];
            }
            *coeffs.entry(occ).or_default() += amp;
        }
        // (a^dag)^t |0> = sqrt(t!) |t>, and the input is normalized by 1/sqrt(prod s!)
        let s_norm = input.factorial_product().sqrt();
        coeffs
            .into_iter()
            .map(|(occ, c)| {
                let t_norm = FockState::new(occ.clone()).factorial_product().sqrt();
                (occ, c * t_norm / s_norm)
            })
            .collect()
    }

    #[test]
    fn hong_ou_mandel() {
        let bs = beamsplitter();
        let input = FockState::new(vec![1, 1]);
        let q = boson_distribution(&bs, &input).unwrap();
        assert!(q.prob(&FockState::new(vec![1, 1])).unwrap().abs() < 1e-12);
        assert!((q.prob(&FockState::new(vec![2, 0])).unwrap() - 0.5).abs() < 1e-12);
        assert!((q.prob(&FockState::new(vec![0, 2])).unwrap() - 0.5).abs() < 1e-12);
        let c = distinguishable_distribution(&bs, &input).unwrap();
        assert!((c.prob(&FockState::new(vec![2, 0])).unwrap() - 0.25).abs() < 1e-12);
        assert!((c.prob(&FockState::new(vec![1, 1])).unwrap() - 0.5).abs() < 1e-12);
        assert!((c.prob(&FockState::new(vec![0, 2])).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn identity_gives_point_mass() {
        let input = FockState::new(vec![0, 2, 1, 0]);
        let q = boson_distribution(&identity(4), &input).unwrap();
        let k = q.shape().rank(&input).unwrap() as usize;
        for (i, p) in q.probs().iter().enumerate() {
            assert!((p - if i == k { 1.0 } else { 0.0 }).abs() < 1e-12);
        }
        let single = FockState::new(vec![1, 0, 1, 1]);
        let c = distinguishable_distribution(&identity(4), &single).unwrap();
        assert!((c.prob(&single).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_second_quantized_expansion() {
        let u = haar_unitary(6, 21).unwrap();
        for input in [
            FockState::new(vec![1, 1, 1, 0, 0, 0]),
            FockState::new(vec![2, 0, 1, 0, 0, 0]),
        ] {
            let q = boson_distribution(&u, &input).unwrap();
            let amps = many_body_amplitudes(u.unitary(), &input);
            assert_eq!(amps.len() as u64, q.shape().dim());
            for (occ, amp) in amps {
                let p = q.prob(&FockState::new(occ)).unwrap();
                assert!((p - amp.norm_sqr()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn normalization_and_permutation_covariance() {
        let u = haar_unitary(7, 2).unwrap();
        let input = FockState::single_occupancy(7, 4).unwrap();
        let q = boson_distribution(&u, &input).unwrap();
        let c = distinguishable_distribution(&u, &input).unwrap();
        assert!((q.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((c.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((fidelity(&q, &q).unwrap() - 1.0).abs() < 1e-9);

        let perm = [3, 0, 6, 1, 5, 2, 4];
        let relabeled = boson_distribution(&u.permute_outputs(&perm).unwrap(), &input).unwrap();
        for state in q.shape().states() {
            let mut moved = vec![0u8; 7];
            for (j, &o) in state.occupations().iter().enumerate() {
                moved[perm[j]] = o;
            }
            let a = q.prob(&state).unwrap();
            let b = relabeled.prob(&FockState::new(moved)).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn distinguishable_matches_independent_particles() {
        use rand::{Rng, SeedableRng};
        let u = haar_unitary(6, 13).unwrap();
        let input = FockState::single_occupancy(6, 3).unwrap();
        let c = distinguishable_distribution(&u, &input).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let shots = 10_000_000u64;
        let mut freq: HashMap<Vec<u8>, u64> = HashMap::new();
        for _ in 0..shots {
            let mut occ = vec![0u8; 6];
            for i in 0..3 {
                let x: f64 = rng.random();
                let mut acc = 0.0;
                let mut j = 5;
                for k in 0..6 {
                    acc += u.unitary()[(k, i)].norm_sqr();
                    if x < acc {
                        j = k;
                        break;
                    }
                }
                occ[j] += 1;
            }
            *freq.entry(occ).or_default() += 1;
        }
        for state in c.shape().states() {
            let p = c.prob(&state).unwrap();
            let observed = freq.get(state.occupations()).copied().unwrap_or(0) as f64 / shots as f64;
            let se = (p * (1.0 - p) / shots as f64).sqrt();
            assert!((observed - p).abs() <= 4.0 * se.max(1e-12), "{state:?}");
        }
    }

    #[test]
    fn distinguishable_rejects_collision_input() {
        let u = haar_unitary(3, 1).unwrap();
        assert!(matches!(
            distinguishable_distribution(&u, &FockState::new(vec![2, 0, 0])),
            Err(Error::Unsupported(_))
        ));
        assert!(boson_distribution(&u, &FockState::new(vec![1, 0])).is_err());
    }

    #[test]
    fn uniform_table() {
        let u = uniform_distribution(2, 1).unwrap();
        assert_eq!(u.probs(), &[0.5, 0.5]);
        let big = uniform_distribution(40, 5).unwrap();
        assert_eq!(big.probs().len(), 1_086_008);
        assert!(big.probs().iter().all(|&p| p == 1.0 / 1_086_008.0));
        assert!((big.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fidelity_extremes() {
        assert_eq!(fidelity_dense(&[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.3, 0.7]).unwrap(), 0.0);
        assert!((fidelity_dense(&[0.2, 0.8], &[0.2, 0.8]).unwrap() - 1.0).abs() < 1e-15);
        assert!(fidelity_dense(&[0.2, 0.7], &[0.2, 0.8]).is_err());
        assert!(fidelity_dense(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn binary_round_trip_and_corruption() {
        let u = haar_unitary(5, 3).unwrap();
        let q = boson_distribution(&u, &FockState::single_occupancy(5, 3).unwrap()).unwrap();
        let mut buf = Vec::new();
        q.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"BSD1");
        assert_eq!(buf.len(), 4 + 4 + 4 + 8 + 8 * 35 + 8);
        let back = OutcomeDistribution::read_binary(&buf[..]).unwrap();
        assert_eq!(back.probs(), q.probs());
        let mut bad = buf.clone();
        bad[30] ^= 1;
        assert!(OutcomeDistribution::read_binary(&bad[..]).is_err());
        let mut magic = buf.clone();
        magic[0] = b'X';
        assert!(OutcomeDistribution::read_binary(&magic[..]).is_err());
    }

    #[test]
    fn fnv_reference_vectors() {
        let mut h = Fnv1a::new();
        assert_eq!(h.finish(), 0xcbf29ce484222325);
        h.update(b"a");
        assert_eq!(h.finish(), 0xaf63dc4c8601ec8c);
        let mut h = Fnv1a::new();
        h.update(b"foobar");
        assert_eq!(h.finish(), 0x85944171f73967e8);
    }
}
