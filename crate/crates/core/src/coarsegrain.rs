//! Bubble partitions of the Fock space and coarse-graining through them.
//!
//! A partition is grown greedily from one sample: the most frequent unclaimed
//! observed state becomes a center and claims every unclaimed state within an
//! L1 radius of it. States that no radius reaches go to the nearest center.
//! Bubbles left with too few construction events are merged into their nearest
//! neighbour so every bin of the final partition holds at least `min_count`.
//!
//! Membership is computed on demand from centers and radii; only the ordered
//! list of bubbles and the merge log are stored.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distributions::{Fnv1a, OutcomeDistribution};
use crate::error::{invalid, Error, Result};
use crate::fock::{l1_sorted_modes, FockState, ProblemShape};
use crate::sampling::SampleSet;

/// Per-bin masses over a specific partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseDistribution<T> {
    partition_id: u64,
    masses: Vec<T>,
}

pub type CoarseCounts = CoarseDistribution<u64>;
pub type CoarseProbabilities = CoarseDistribution<f64>;

impl<T> CoarseDistribution<T> {
    pub fn new(partition_id: u64, masses: Vec<T>) -> Self {
        CoarseDistribution {
            partition_id,
            masses,
        }
    }

    pub fn partition_id(&self) -> u64 {
        self.partition_id
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }
}

impl CoarseCounts {
    pub fn total(&self) -> u64 {
        self.masses.iter().sum()
    }

    /// Empirical bin frequencies.
    pub fn frequencies(&self) -> CoarseProbabilities {
        let total = self.total().max(1) as f64;
        CoarseDistribution::new(
            self.partition_id,
            self.masses.iter().map(|&c| c as f64 / total).collect(),
        )
    }
}

impl CoarseProbabilities {
    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// How the claim radius evolves while bubbles are grown.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RadiusSchedule {
    /// Start at `start`; after each bubble, widen by `step` (capped at `2N`)
    /// when the mean count per bubble falls below a trigger level.
    ///
    /// The mean runs over the bubbles built since the last widening, or over
    /// all bubbles when `reset_on_widen` is off. The trigger is
    /// `N_m / target`, or is tuned to hit the target when `calibrate` is set.
    Adaptive {
        start: u32,
        step: u32,
        #[serde(default = "yes")]
        reset_on_widen: bool,
        #[serde(default = "yes")]
        calibrate: bool,
    },
    Fixed { radius: u32 },
}

impl RadiusSchedule {
    /// Running mean over all bubbles against `N_m / target`, with no tuning.
    pub const fn nominal() -> Self {
        RadiusSchedule::Adaptive {
            start: 2,
            step: 2,
            reset_on_widen: false,
            calibrate: false,
        }
    }
}

impl Default for RadiusSchedule {
    fn default() -> Self {
        RadiusSchedule::Adaptive {
            start: 2,
            step: 2,
            reset_on_widen: true,
            calibrate: true,
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleParams {
    pub target_bubbles: usize,
    #[serde(default = "default_min_count")]
    pub min_count: u64,
    #[serde(default)]
    pub schedule: RadiusSchedule,
    /// Label of the sample the partition was grown from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub construction_sample: Option<String>,
}

fn default_min_count() -> u64 {
    10
}

impl BubbleParams {
    pub fn new(target_bubbles: usize) -> Self {
        BubbleParams {
            target_bubbles,
            min_count: default_min_count(),
            schedule: RadiusSchedule::default(),
            construction_sample: None,
        }
    }

    pub fn with_min_count(mut self, min_count: u64) -> Self {
        self.min_count = min_count;
        self
    }

    pub fn with_schedule(mut self, schedule: RadiusSchedule) -> Self {
        self.schedule = schedule;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bubble {
    pub center_rank: u64,
    pub radius: u32,
}

#[derive(Clone, Debug)]
pub struct BubblePartition {
    shape: ProblemShape,
    bubbles: Vec<Bubble>,
    centers: Vec<Vec<u8>>,
    merges: Vec<(usize, usize)>,
    // raw bubble index -> final bin
    labels: Vec<usize>,
    bins: usize,
    params: BubbleParams,
    id: u64,
}

#[derive(Serialize, Deserialize)]
struct PartitionFile {
    m: usize,
    n: usize,
    bubbles: Vec<Bubble>,
    merges: Vec<[usize; 2]>,
    params: BubbleParams,
}

/// Grows a partition from `sample`, then merges under-populated bubbles.
///
/// With the adaptive schedule and `calibrate` set, the count level that
/// triggers a wider radius is searched (bisection in log scale) so that the
/// final number of bins lands as close as possible to the target.
pub fn build_bubbles(sample: &SampleSet, params: &BubbleParams) -> Result<BubblePartition> {
    if sample.total() == 0 {
        return Err(invalid("cannot build bubbles from an empty sample"));
    }
    if params.target_bubbles < 2 {
        return Err(invalid("target bubble count must be at least 2"));
    }
    let shape = sample.shape().clone();
    let mut grower = Grower::new(sample)?;
    grower.min_count = params.min_count;
    let n_m = sample.total() as f64;
    let target = params.target_bubbles;
    let nominal = n_m / target as f64;

    let grown = match params.schedule {
        RadiusSchedule::Fixed { radius } => grower.grow(radius, 0, false, 0.0),
        RadiusSchedule::Adaptive {
            start,
            step,
            reset_on_widen,
            calibrate,
        } => {
            let grow = |trigger: f64| grower.grow(start, step, reset_on_widen, trigger);
            let mut best = grow(nominal);
            if calibrate {
                let score = |g: &Grown| {
                    let bins = g.bubbles.len() - g.merges.len();
                    (bins.abs_diff(target), bins)
                };
                let (mut lo, mut hi) = (0.0f64, n_m.ln());
                for _ in 0..CALIBRATION_STEPS {
                    if score(&best).0 == 0 {
                        break;
                    }
                    let mid = 0.5 * (lo + hi);
                    let g = grow(mid.exp());
                    // a lower trigger keeps radii small for longer and yields more bins
                    if score(&g).1 > target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if score(&g).0 < score(&best).0 {
                        best = g;
                    }
                }
            }
            best
        }
    };
    if grown.bubbles.len() < 2 {
        return Err(Error::DegeneratePartition(format!(
            "sample grouped into {} bubble before merging",
            grown.bubbles.len()
        )));
    }
    BubblePartition::assemble(shape, grown.bubbles, grown.centers, grown.merges, params.clone())
}

const CALIBRATION_STEPS: usize = 14;

struct Grown {
    bubbles: Vec<Bubble>,
    centers: Vec<Vec<u8>>,
    merges: Vec<(usize, usize)>,
}

/// Observed states sorted by descending count (ascending rank on ties).
struct Grower {
    n: usize,
    min_count: u64,
    observed: Vec<(u64, u64)>,
    modes: Vec<u8>,
}

impl Grower {
    fn new(sample: &SampleSet) -> Result<Self> {
        let shape = sample.shape();
        let n = shape.particles();
        let mut observed: Vec<(u64, u64)> = sample.iter().collect();
        observed.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut modes = vec![0u8; observed.len() * n];
        for (k, &(rank, _)) in observed.iter().enumerate() {
            shape.unrank_sorted_modes(rank, &mut modes[k * n..(k + 1) * n])?;
        }
        Ok(Grower {
            n,
            min_count: 0,
            observed,
            modes,
        })
    }

    fn state(&self, k: usize) -> &[u8] {
        &self.modes[k * self.n..(k + 1) * self.n]
    }

    /// Greedy growth. After each bubble the radius widens by `step` if the
    /// mean count of the bubbles built at the current radius (or of all
    /// bubbles, without `reset`) is below `trigger`.
    fn grow(&self, start: u32, step: u32, reset: bool, trigger: f64) -> Grown {
        let cap = 2 * self.n as u32;
        let mut radius = start.min(cap);
        let mut live: Vec<usize> = (0..self.observed.len()).collect();
        let mut bubbles = Vec::new();
        let mut centers = Vec::new();
        let mut counts = Vec::new();
        let (mut window_total, mut window_len) = (0u64, 0u64);
        while let Some(&first) = live.first() {
            let center = self.state(first);
            let mut count = 0u64;
            // L1 distances are even, so `<= r` equals "strictly smaller than r + 2"
            live.retain(|&k| {
                let inside = l1_sorted_modes(center, self.state(k)) <= radius;
                if inside {
                    count += self.observed[k].1;
                }
                !inside
            });
            bubbles.push(Bubble {
                center_rank: self.observed[first].0,
                radius,
            });
            centers.push(center.to_vec());
            counts.push(count);
            window_total += count;
            window_len += 1;
            if step > 0 && (window_total as f64 / window_len as f64) < trigger {
                radius = (radius + step).min(cap);
                if reset {
                    (window_total, window_len) = (0, 0);
                }
            }
        }
        let merges = plan_merges(&centers, counts, self.min_count);
        Grown {
            bubbles,
            centers,
            merges,
        }
    }
}

/// Repeatedly folds the smallest under-filled bubble (latest on ties) into the
/// active bubble with the nearest center (earliest on ties).
fn plan_merges(centers: &[Vec<u8>], mut counts: Vec<u64>, min_count: u64) -> Vec<(usize, usize)> {
    let mut active: Vec<bool> = vec![true; counts.len()];
    let mut remaining = counts.len();
    let mut merges = Vec::new();
    while remaining > 1 {
        let victim = (0..counts.len())
            .filter(|&b| active[b] && counts[b] < min_count)
            .min_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)));
        let Some(from) = victim else { break };
        let to = (0..counts.len())
            .filter(|&b| active[b] && b != from)
            .min_by_key(|&b| (l1_sorted_modes(&centers[from], &centers[b]), b))
            .expect("at least two active bubbles");
        active[from] = false;
        counts[to] += counts[from];
        remaining -= 1;
        merges.push((from, to));
    }
    merges
}

impl BubblePartition {
    fn assemble(
        shape: ProblemShape,
        bubbles: Vec<Bubble>,
        centers: Vec<Vec<u8>>,
        merges: Vec<(usize, usize)>,
        params: BubbleParams,
    ) -> Result<Self> {
        let raw = bubbles.len();
        let mut parent: Vec<usize> = (0..raw).collect();
        for &(from, to) in &merges {
            if from >= raw || to >= raw || from == to || parent[from] != from || parent[to] != to {
                return Err(invalid(format!("invalid merge [{from}, {to}]")));
            }
            parent[from] = to;
        }
        let root = |mut b: usize| {
            while parent[b] != b {
                b = parent[b];
            }
            b
        };
        let mut bin_of_root = vec![usize::MAX; raw];
        let mut bins = 0;
        for b in 0..raw {
            if parent[b] == b {
                bin_of_root[b] = bins;
                bins += 1;
            }
        }
        if bins < 2 {
            return Err(Error::DegeneratePartition(format!(
                "{bins} bubble left after merging"
            )));
        }
        let labels = (0..raw).map(|b| bin_of_root[root(b)]).collect();

        let mut hash = Fnv1a::new();
        for v in [shape.modes() as u64, shape.particles() as u64] {
            hash.update(&v.to_le_bytes());
        }
        for b in &bubbles {
            hash.update(&b.center_rank.to_le_bytes());
            hash.update(&b.radius.to_le_bytes());
        }
        for &(from, to) in &merges {
            hash.update(&(from as u64).to_le_bytes());
            hash.update(&(to as u64).to_le_bytes());
        }
        Ok(BubblePartition {
            shape,
            bubbles,
            centers,
            merges,
            labels,
            bins,
            params,
            id: hash.finish(),
        })
    }

    /// Rebuilds a partition from its stored description, checking the
    /// construction invariants: even nondecreasing radii and every center
    /// outside all earlier bubbles.
    pub fn from_parts(
        shape: ProblemShape,
        bubbles: Vec<Bubble>,
        merges: Vec<(usize, usize)>,
        params: BubbleParams,
    ) -> Result<Self> {
        let n = shape.particles();
        let mut centers: Vec<Vec<u8>> = Vec::with_capacity(bubbles.len());
        for (k, b) in bubbles.iter().enumerate() {
            if b.radius % 2 != 0 {
                return Err(invalid(format!("bubble {k} has odd radius {}", b.radius)));
            }
            if k > 0 && b.radius < bubbles[k - 1].radius {
                return Err(invalid(format!("bubble {k} shrinks the radius")));
            }
            let mut v = vec![0u8; n];
            shape.unrank_sorted_modes(b.center_rank, &mut v)?;
            for (j, c) in centers.iter().enumerate() {
                if l1_sorted_modes(c, &v) <= bubbles[j].radius {
                    return Err(invalid(format!("center {k} lies inside bubble {j}")));
                }
            }
            centers.push(v);
        }
        if bubbles.len() < 2 {
            return Err(Error::DegeneratePartition("fewer than two bubbles".into()));
        }
        Self::assemble(shape, bubbles, centers, merges, params)
    }

    pub fn shape(&self) -> &ProblemShape {
        &self.shape
    }

    /// Number of bins after merging.
    pub fn len(&self) -> usize {
        self.bins
    }

    pub fn is_empty(&self) -> bool {
        self.bins == 0
    }

    pub fn bubbles(&self) -> &[Bubble] {
        &self.bubbles
    }

    pub fn merges(&self) -> &[(usize, usize)] {
        &self.merges
    }

    pub fn params(&self) -> &BubbleParams {
        &self.params
    }

    /// Fingerprint of the structure; coarse distributions carry it.
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Final bin of raw bubble `b`.
    pub fn bin_of_bubble(&self, b: usize) -> usize {
        self.labels[b]
    }

    pub fn center(&self, b: usize) -> Result<FockState> {
        self.shape.unrank(self.bubbles[b].center_rank)
    }

    fn raw_bubble(&self, modes: &[u8]) -> usize {
        let mut nearest = (u32::MAX, 0);
        for (b, (c, bubble)) in self.centers.iter().zip(&self.bubbles).enumerate() {
            let d = l1_sorted_modes(c, modes);
            if d <= bubble.radius {
                return b;
            }
            if d < nearest.0 {
                nearest = (d, b);
            }
        }
        nearest.1
    }

    /// Final bin of a state.
    pub fn assign_state(&self, state: &FockState) -> Result<usize> {
        self.shape.validate(state)?;
        let modes: Vec<u8> = state.mode_list().into_iter().map(|m| m as u8).collect();
        Ok(self.labels[self.raw_bubble(&modes)])
    }

    pub fn assign_rank(&self, rank: u64) -> Result<usize> {
        let mut modes = vec![0u8; self.shape.particles()];
        self.shape.unrank_sorted_modes(rank, &mut modes)?;
        Ok(self.labels[self.raw_bubble(&modes)])
    }

    /// Bin of every rank, in rank order.
    pub fn label_table(&self) -> Vec<usize> {
        let n = self.shape.particles();
        let chunk = |start: u64, end: u64| {
            let mut modes = vec![0u8; n];
            (start..end)
                .map(|r| {
                    self.shape
                        .unrank_sorted_modes(r, &mut modes)
                        .expect("rank in range");
                    self.labels[self.raw_bubble(&modes)]
                })
                .collect::<Vec<_>>()
        };
        chunked(self.shape.dim(), chunk).into_iter().flatten().collect()
    }

    pub fn coarse_grain_sample(&self, sample: &SampleSet) -> Result<CoarseCounts> {
        if sample.shape() != &self.shape {
            return Err(Error::ShapeMismatch("sample and partition shapes differ".into()));
        }
        let mut masses = vec![0u64; self.bins];
        let mut modes = vec![0u8; self.shape.particles()];
        for (rank, count) in sample.iter() {
            self.shape.unrank_sorted_modes(rank, &mut modes)?;
            masses[self.labels[self.raw_bubble(&modes)]] += count;
        }
        Ok(CoarseDistribution::new(self.id, masses))
    }

    /// Coarse-grains an exact table. Partial sums are formed over fixed rank
    /// chunks and added in chunk order, so the result is reproducible.
    pub fn coarse_grain_table(&self, dist: &OutcomeDistribution) -> Result<CoarseProbabilities> {
        if dist.shape() != &self.shape {
            return Err(Error::ShapeMismatch("table and partition shapes differ".into()));
        }
        let n = self.shape.particles();
        let probs = dist.probs();
        let partials = chunked(self.shape.dim(), |start, end| {
            let mut modes = vec![0u8; n];
            let mut acc = vec![0.0f64; self.bins];
            for r in start..end {
                self.shape
                    .unrank_sorted_modes(r, &mut modes)
                    .expect("rank in range");
                acc[self.labels[self.raw_bubble(&modes)]] += probs[r as usize];
            }
            acc
        });
        let mut masses = vec![0.0; self.bins];
        for part in partials {
            for (m, p) in masses.iter_mut().zip(part) {
                *m += p;
            }
        }
        Ok(CoarseDistribution::new(self.id, masses))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = PartitionFile {
            m: self.shape.modes(),
            n: self.shape.particles(),
            bubbles: self.bubbles.clone(),
            merges: self.merges.iter().map(|&(a, b)| [a, b]).collect(),
            params: self.params.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PartitionFile = serde_json::from_str(text)?;
        let shape = ProblemShape::new(file.m, file.n)?;
        let merges = file.merges.into_iter().map(|[a, b]| (a, b)).collect();
        Self::from_parts(shape, file.bubbles, merges, file.params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Io(_) => e,
            other => Error::Format {
                path: path.to_path_buf(),
                reason: other.to_string(),
            },
        })
    }
}

const CHUNK: u64 = 1 << 14;

/// Maps `f` over fixed-size rank chunks, returning results in chunk order.
fn chunked<T: Send>(dim: u64, f: impl Fn(u64, u64) -> T + Sync + Send) -> Vec<T> {
    let chunks = dim.div_ceil(CHUNK);
    let run = |c: u64| f(c * CHUNK, ((c + 1) * CHUNK).min(dim));
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..chunks).into_par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..chunks).map(run).collect()
    }
}
