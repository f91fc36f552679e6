//! Quantized phase alignment.
//!
//! Two problems live here. The per-element problem picks one angle per antenna
//! from the `2^q`-point grid to maximize `|Σ_ν h_ν* e^{jφ_ν}|`; it is solved
//! exactly and serves as the reference. The blockwise problem splits the array
//! into two index sets whose angles come from the coarser `2^(q-1)`-point block
//! grids; [`greedy_bpr_phases`] solves it with the two-loop greedy selection.

use std::f64::consts::TAU;

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beamformer::{build_bpr_atb, xi, BeamformingMatrix, GoldenVariant};
use crate::channel::C64;
use crate::error::{check_len, Error, Result};

/// Largest array handled by the exhaustive per-element search.
pub const EXHAUSTIVE_MAX_ANTENNAS: usize = 16;
/// Largest `q` handled by the blockwise enumeration.
pub const BLOCK_EXHAUSTIVE_MAX_Q: u32 = 3;

const TIE_TOL: f64 = 1e-12;

/// Angles `2π·b/denominator` for a list of integer indices `b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub denominator: u32,
    pub indices: Vec<u32>,
}

impl PhaseGrid {
    /// Per-element grid: b ∈ {0, …, 2^q − 1} over 2^q.
    pub fn element(q: u32) -> Self {
        let n = 1u32 << q;
        Self {
            denominator: n,
            indices: (0..n).collect(),
        }
    }

    /// First block grid: b₁ ∈ {0, …, 2^(q−1) − 1} over 2^(q−1).
    pub fn block_first(q: u32) -> Self {
        let half = 1u32 << (q - 1);
        Self {
            denominator: half,
            indices: (0..half).collect(),
        }
    }

    /// Second block grid: b₂ ∈ {2^(q−1), …, 2^q − 1} over 2^(q−1).
    pub fn block_second(q: u32) -> Self {
        let half = 1u32 << (q - 1);
        Self {
            denominator: half,
            indices: (half..2 * half).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Angles reduced into [0, 2π). The reduction is done on the integer index
    /// so equal angles compare equal.
    pub fn angles(&self) -> Vec<f64> {
        self.indices
            .iter()
            .map(|&b| TAU * (b % self.denominator) as f64 / self.denominator as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exhaustive,
    BlockExhaustive,
    GreedyAlg1,
    FixedZero,
    RandomBaseline,
}

/// Chosen angles for the two index sets and the alignment gain they achieve.
///
/// Antenna `s1[k]` is rotated by `phi1[k]`, antenna `s2[k]` by `phi2[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSelection {
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub s1: Vec<usize>,
    pub s2: Vec<usize>,
    pub gain: f64,
    pub method: Method,
    /// Objective evaluations spent by the search.
    pub evaluations: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl PhaseSelection {
    /// Rotation applied to each antenna.
    pub fn element_phases(&self) -> Vec<f64> {
        let n = self.s1.len() + self.s2.len();
        let mut out = vec![0.0; n];
        for (&i, &p) in self.s1.iter().zip(&self.phi1) {
            out[i] = p;
        }
        for (&i, &p) in self.s2.iter().zip(&self.phi2) {
            out[i] = p;
        }
        out
    }

    pub fn recompute_gain(&self, h: &DVector<C64>) -> f64 {
        blockwise_gain(h, &self.s1, &self.phi1, &self.s2, &self.phi2)
    }

    /// BPR beamformer carrying these block rotations on its diagonals.
    pub fn beamformer(&self, q: u32, variant: GoldenVariant) -> Result<BeamformingMatrix> {
        build_bpr_atb(q, variant, &self.phi1, &self.phi2)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// `|Σ_ν h_ν* e^{jφ_ν1} e^{jφ_ν2}|` where members of the first set carry no
/// second-block rotation and vice versa.
pub fn blockwise_gain(
    h: &DVector<C64>,
    s1: &[usize],
    phi1: &[f64],
    s2: &[usize],
    phi2: &[f64],
) -> f64 {
    let unit = C64::new(1.0, 0.0);
    let first: C64 = s1
        .iter()
        .zip(phi1)
        .map(|(&i, &p)| h[i].conj() * C64::from_polar(1.0, p) * unit)
        .sum();
    let second: C64 = s2
        .iter()
        .zip(phi2)
        .map(|(&i, &p)| h[i].conj() * unit * C64::from_polar(1.0, p))
        .sum();
    (first + second).norm()
}

/// `|Σ_ν h_ν* e^{jφ_ν}|` for one angle per antenna.
pub fn element_gain(h: &DVector<C64>, phases: &[f64]) -> f64 {
    h.iter()
        .zip(phases)
        .map(|(z, &p)| z.conj() * C64::from_polar(1.0, p))
        .sum::<C64>()
        .norm()
}

fn check_dims(h: &DVector<C64>, q: u32) -> Result<usize> {
    if q == 0 || q > 16 {
        return Err(Error::invalid("q", format!("must be in 1..=16, got {q}")));
    }
    let n = 1usize << q;
    check_len("channel length", n, h.len())?;
    Ok(n)
}

fn split_selection(phases: &[f64], method: Method, gain: f64, evaluations: u64) -> PhaseSelection {
    let half = phases.len() / 2;
    PhaseSelection {
        phi1: phases[..half].to_vec(),
        phi2: phases[half..].to_vec(),
        s1: (0..half).collect(),
        s2: (half..phases.len()).collect(),
        gain,
        method,
        evaluations,
        seed: None,
    }
}

/// Best assignment of grid indices for a target direction `psi`: every element
/// takes the grid angle whose rotated term points closest to `psi`.
fn assignment_toward(h: &DVector<C64>, psi: f64, grid_size: usize) -> Vec<usize> {
    let step = TAU / grid_size as f64;
    h.iter()
        .map(|z| {
            if *z == C64::new(0.0, 0.0) {
                return 0;
            }
            // h* e^{jφ} points along φ − arg h.
            let target = (psi + z.arg()).rem_euclid(TAU);
            ((target / step).round() as usize) % grid_size
        })
        .collect()
}

/// Exact optimum of the per-element problem over the `2^q`-point grid.
///
/// For `q ≤ 2` all `(2^q)^(2^q)` assignments are enumerated. Above that, the
/// optimum is found by sweeping the direction of the sum: at the optimum every
/// element is the best projection onto the sum's direction, and that
/// assignment only changes at `N·G` breakpoints, so checking one direction
/// per arc between breakpoints is exhaustive.
pub fn exhaustive_phase_oracle(h: &DVector<C64>, q: u32) -> Result<PhaseSelection> {
    let n = check_dims(h, q)?;
    if n > EXHAUSTIVE_MAX_ANTENNAS {
        return Err(Error::SizeGuard {
            size: n,
            limit: EXHAUSTIVE_MAX_ANTENNAS,
        });
    }
    let angles = PhaseGrid::element(q).angles();
    let g = angles.len();
    if q <= 2 {
        let (best, gain, evals) = enumerate_assignments(h, &angles);
        let phases: Vec<f64> = best.iter().map(|&b| angles[b]).collect();
        return Ok(split_selection(&phases, Method::Exhaustive, gain, evals));
    }

    let step = TAU / g as f64;
    let mut breaks: Vec<f64> = h
        .iter()
        .flat_map(|z| {
            let arg = z.arg();
            (0..g).map(move |b| ((b as f64 + 0.5) * step - arg).rem_euclid(TAU))
        })
        .collect();
    breaks.sort_by(f64::total_cmp);
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut evals = 0u64;
    for i in 0..breaks.len() {
        let lo = breaks[i];
        let hi = if i + 1 < breaks.len() {
            breaks[i + 1]
        } else {
            breaks[0] + TAU
        };
        let assign = assignment_toward(h, 0.5 * (lo + hi), g);
        let phases: Vec<f64> = assign.iter().map(|&b| angles[b]).collect();
        let gain = element_gain(h, &phases);
        evals += 1;
        if best.as_ref().is_none_or(|(_, b)| gain > b + TIE_TOL) {
            best = Some((assign, gain));
        }
    }
    let (assign, gain) = best.expect("at least one arc");
    // A common grid rotation leaves the gain unchanged; pin element 0 to
    // index 0 so the result matches full enumeration's first maximum.
    let shift = g - assign[0];
    let phases: Vec<f64> = assign.iter().map(|&b| angles[(b + shift) % g]).collect();
    Ok(split_selection(&phases, Method::Exhaustive, gain, evals))
}

/// Odometer enumeration of every grid assignment; first maximum wins.
fn enumerate_assignments(h: &DVector<C64>, angles: &[f64]) -> (Vec<usize>, f64, u64) {
    let n = h.len();
    let g = angles.len();
    let rot: Vec<C64> = angles.iter().map(|&p| C64::from_polar(1.0, p)).collect();
    let mut idx = vec![0usize; n];
    let mut best = (idx.clone(), f64::NEG_INFINITY);
    let mut evals = 0u64;
    loop {
        let s: C64 = idx
            .iter()
            .enumerate()
            .map(|(i, &b)| h[i].conj() * rot[b])
            .sum();
        let gain = s.norm();
        evals += 1;
        if gain > best.1 + TIE_TOL {
            best = (idx.clone(), gain);
        }
        // Last element varies fastest.
        let mut pos = n;
        loop {
            if pos == 0 {
                return (best.0, best.1, evals);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < g {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Enumerate every combination of block-grid angles with the first half of
/// the antennas in the first set and the second half in the second set.
///
/// Both block grids reduce to the same angle set on the circle, so the
/// split into sets does not change the attainable optimum.
pub fn block_exhaustive_phases(h: &DVector<C64>, q: u32) -> Result<PhaseSelection> {
    let n = check_dims(h, q)?;
    if q > BLOCK_EXHAUSTIVE_MAX_Q {
        return Err(Error::SizeGuard {
            size: n,
            limit: 1 << BLOCK_EXHAUSTIVE_MAX_Q,
        });
    }
    let half = n / 2;
    let a1 = PhaseGrid::block_first(q).angles();
    let a2 = PhaseGrid::block_second(q).angles();
    let s1: Vec<usize> = (0..half).collect();
    let s2: Vec<usize> = (half..n).collect();
    let g = a1.len();
    let mut idx = vec![0usize; n];
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut evals = 0u64;
    'outer: loop {
        let phi1: Vec<f64> = idx[..half].iter().map(|&b| a1[b]).collect();
        let phi2: Vec<f64> = idx[half..].iter().map(|&b| a2[b]).collect();
        let gain = blockwise_gain(h, &s1, &phi1, &s2, &phi2);
        evals += 1;
        if best.as_ref().is_none_or(|(_, b)| gain > b + TIE_TOL) {
            best = Some((idx.clone(), gain));
        }
        let mut pos = n;
        loop {
            if pos == 0 {
                break 'outer;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < g {
                break;
            }
            idx[pos] = 0;
        }
    }
    let (idx, gain) = best.expect("nonempty enumeration");
    Ok(PhaseSelection {
        phi1: idx[..half].iter().map(|&b| a1[b]).collect(),
        phi2: idx[half..].iter().map(|&b| a2[b]).collect(),
        s1,
        s2,
        gain,
        method: Method::BlockExhaustive,
        evaluations: evals,
        seed: None,
    })
}

struct GreedyPick {
    index: usize,
    angle: f64,
    value: f64,
}

/// One greedy fill: `slots` times, scan every (remaining candidate, grid
/// angle) pair and keep the one maximizing `|acc + h_ν* e^{jφ}|`.
/// Candidates are scanned in ascending index order and angles in grid order,
/// so ties go to the lowest index, then the lowest grid position.
fn greedy_fill(
    h: &DVector<C64>,
    candidates: &mut Vec<usize>,
    acc: &mut C64,
    angles: &[f64],
    slots: usize,
    evaluations: &mut u64,
) -> (Vec<usize>, Vec<f64>) {
    let rot: Vec<C64> = angles.iter().map(|&p| C64::from_polar(1.0, p)).collect();
    let mut chosen = Vec::with_capacity(slots);
    let mut phases = Vec::with_capacity(slots);
    for _ in 0..slots {
        let mut best: Option<GreedyPick> = None;
        for &nu in candidates.iter() {
            for (&angle, &r) in angles.iter().zip(&rot) {
                *evaluations += 1;
                let value = (*acc + h[nu].conj() * r).norm();
                if best.as_ref().is_none_or(|b| value > b.value + TIE_TOL) {
                    best = Some(GreedyPick {
                        index: nu,
                        angle,
                        value,
                    });
                }
            }
        }
        let pick = best.expect("candidate set is never empty inside a fill");
        *acc += h[pick.index].conj() * C64::from_polar(1.0, pick.angle);
        candidates.retain(|&c| c != pick.index);
        chosen.push(pick.index);
        phases.push(pick.angle);
    }
    (chosen, phases)
}

/// Two-loop greedy block phase selection.
///
/// Loop one fills the first index set from the first block grid while the
/// second-block rotation is held at zero; loop two fills the second set from
/// the second block grid on top of the accumulated first-set sum.
pub fn greedy_bpr_phases(h: &DVector<C64>, q: u32) -> Result<PhaseSelection> {
    let n = check_dims(h, q)?;
    let half = n / 2;
    let mut candidates: Vec<usize> = (0..n).collect();
    let mut acc = C64::new(0.0, 0.0);
    let mut evaluations = 0u64;
    let (s1, phi1) = greedy_fill(
        h,
        &mut candidates,
        &mut acc,
        &PhaseGrid::block_first(q).angles(),
        half,
        &mut evaluations,
    );
    let (s2, phi2) = greedy_fill(
        h,
        &mut candidates,
        &mut acc,
        &PhaseGrid::block_second(q).angles(),
        half,
        &mut evaluations,
    );
    let gain = blockwise_gain(h, &s1, &phi1, &s2, &phi2);
    Ok(PhaseSelection {
        phi1,
        phi2,
        s1,
        s2,
        gain,
        method: Method::GreedyAlg1,
        evaluations,
        seed: None,
    })
}

/// Uniformly random block-grid angles on the canonical split.
pub fn random_block_phases<R: Rng + ?Sized>(
    h: &DVector<C64>,
    q: u32,
    rng: &mut R,
) -> Result<PhaseSelection> {
    let n = check_dims(h, q)?;
    let half = n / 2;
    let a1 = PhaseGrid::block_first(q).angles();
    let a2 = PhaseGrid::block_second(q).angles();
    let phi1: Vec<f64> = (0..half)
        .map(|_| a1[rng.random_range(0..a1.len())])
        .collect();
    let phi2: Vec<f64> = (0..half)
        .map(|_| a2[rng.random_range(0..a2.len())])
        .collect();
    let s1: Vec<usize> = (0..half).collect();
    let s2: Vec<usize> = (half..n).collect();
    let gain = blockwise_gain(h, &s1, &phi1, &s2, &phi2);
    Ok(PhaseSelection {
        phi1,
        phi2,
        s1,
        s2,
        gain,
        method: Method::RandomBaseline,
        evaluations: 1,
        seed: None,
    })
}

pub fn zero_phases(h: &DVector<C64>, q: u32) -> Result<PhaseSelection> {
    let n = check_dims(h, q)?;
    let zeros = vec![0.0; n];
    Ok(split_selection(
        &zeros,
        Method::FixedZero,
        element_gain(h, &zeros),
        1,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub q: u32,
    /// Objective evaluations counted inside the greedy search.
    pub evaluations: u64,
    /// 2^q · ξ(q, √5), the scale quoted for the greedy search.
    pub quoted_scale: f64,
    /// G · N(N+1)/2 with N = 2^q and G = 2^(q−1): every step scans all
    /// remaining candidates against every block-grid angle.
    pub scan_count: u64,
}

/// Instrumented greedy runs for each `q` in `qs` (at most 8).
pub fn complexity_probe(qs: std::ops::RangeInclusive<u32>) -> Result<Vec<ComplexityRow>> {
    qs.map(|q| {
        if q == 0 || q > 8 {
            return Err(Error::invalid(
                "q",
                format!("probe supports 1..=8, got {q}"),
            ));
        }
        let n = 1usize << q;
        let h = crate::channel::sample_rayleigh_channel(n, u64::from(q))?.h;
        let sel = greedy_bpr_phases(&h, q)?;
        let grid = (n / 2) as u64;
        Ok(ComplexityRow {
            q,
            evaluations: sel.evaluations,
            quoted_scale: n as f64 * xi(q, 5f64.sqrt()),
            scan_count: grid * (n as u64 * (n as u64 + 1) / 2),
        })
    })
    .collect()
}
