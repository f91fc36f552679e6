//! Experiment runner: configuration, seeded sweeps and run-directory output.
//!
//! Every random draw is keyed by `(root seed, trial index, purpose)`, so a
//! trial sees the same channel, bits and noise under every scheme, SNR point
//! and normalization mode, and results do not depend on thread scheduling.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    beamspace_pattern, db_to_linear, mgf_ber_bpsk, mgf_ber_mpsk, mgf_ber_mqam, spectral_efficiency,
    union_bound_ber, wilson_interval, write_curve_csv, CurveRow, MpskForm, PairBudget, Z95,
};
use crate::beamformer::{build, build_bpr_atb, kappa, BeamformingMatrix, Scheme};
use crate::channel::{
    complex_normal, sample_mmwave_channel, sample_rayleigh_channel, SteeringConfig, C64,
};
use crate::error::{Error, Result};
use crate::phase_opt::greedy_bpr_phases;
use crate::rng::{derive_seed, substream, Purpose};
use crate::stbc::{
    alamouti_combine, alamouti_row, effective_gamma0, Constellation, NormalizationMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Mmwave,
    Rayleigh,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Mmwave => "mmwave",
            ChannelKind::Rayleigh => "rayleigh",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mmwave" => Ok(ChannelKind::Mmwave),
            "rayleigh" => Ok(ChannelKind::Rayleigh),
            other => Err(Error::invalid(
                "channel",
                format!("unknown channel kind {other:?}"),
            )),
        }
    }
}

fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_t: usize,
    pub n_rf: usize,
    pub n_r: usize,
    /// Number of propagation paths L.
    pub n_paths: usize,
    pub carrier_frequency_hz: f64,
    pub spacing_over_wavelength: f64,
    pub modulation: usize,
    pub schemes: Vec<Scheme>,
    pub channel: ChannelKind,
    pub norm_modes: Vec<NormalizationMode>,
    pub table1_q: Vec<u32>,
    pub fig1_points: usize,
    pub fig2_snr_grid_db: Vec<f64>,
    pub fig2_realizations: u64,
    pub snr_grid_db: Vec<f64>,
    pub min_trials: u64,
    pub max_trials: u64,
    pub target_errors: u64,
    pub block_size: u64,
    pub union_bound_realizations: u64,
    pub union_bound_pairs: usize,
    /// Debug switch: transmit without noise.
    pub noiseless: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            n_t: 4,
            n_rf: 2,
            n_r: 1,
            n_paths: 3,
            carrier_frequency_hz: 60e9,
            spacing_over_wavelength: 0.5,
            modulation: 64,
            schemes: Scheme::ALL.to_vec(),
            channel: ChannelKind::Mmwave,
            norm_modes: vec![NormalizationMode::Eq1, NormalizationMode::Eq10],
            table1_q: vec![1, 2, 3, 4],
            fig1_points: 721,
            fig2_snr_grid_db: grid(-10.0, 30.0, 5.0),
            fig2_realizations: 10_000,
            snr_grid_db: grid(0.0, 40.0, 2.0),
            min_trials: 100_000,
            max_trials: 10_000_000,
            target_errors: 100,
            block_size: 10_000,
            union_bound_realizations: 200,
            union_bound_pairs: 4_000,
            noiseless: false,
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

fn check_grid(name: &'static str, g: &[f64]) -> Result<()> {
    if g.is_empty() {
        return Err(Error::invalid(name, "must not be empty"));
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(name, "values must be finite"));
    }
    if g.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(name, "must be strictly increasing"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn q(&self) -> u32 {
        self.n_t.trailing_zeros()
    }

    pub fn steering(&self) -> SteeringConfig {
        SteeringConfig {
            carrier_frequency_hz: self.carrier_frequency_hz,
            spacing_over_wavelength: self.spacing_over_wavelength,
        }
    }

    /// The L in √(P·N_t/L). Rayleigh entries already have unit variance, so
    /// they use 1 and both channel kinds deliver the same average power.
    pub fn path_factor(&self) -> f64 {
        match self.channel {
            ChannelKind::Mmwave => self.n_paths as f64,
            ChannelKind::Rayleigh => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t < 2 || !self.n_t.is_power_of_two() || self.q() > crate::beamformer::MAX_Q {
            return Err(Error::invalid(
                "n_t",
                format!("must be a power of two in 2..=4096, got {}", self.n_t),
            ));
        }
        if self.n_rf != self.n_t / 2 {
            return Err(Error::invalid(
                "n_rf",
                format!("must equal n_t/2 = {}, got {}", self.n_t / 2, self.n_rf),
            ));
        }
        if self.n_r != 1 {
            return Err(Error::invalid(
                "n_r",
                "only a single receive antenna is modeled",
            ));
        }
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths", "must be at least 1"));
        }
        self.steering().validate()?;
        if !matches!(self.modulation, 2 | 4 | 16 | 64) {
            return Err(Error::invalid(
                "modulation",
                format!("must be 2, 4, 16 or 64, got {}", self.modulation),
            ));
        }
        if self.schemes.is_empty() {
            return Err(Error::invalid("schemes", "must not be empty"));
        }
        if self.norm_modes.is_empty() {
            return Err(Error::invalid("norm_modes", "must not be empty"));
        }
        if self
            .table1_q
            .iter()
            .any(|&q| q == 0 || q > crate::beamformer::MAX_Q)
        {
            return Err(Error::invalid("table1_q", "entries must be in 1..=12"));
        }
        if self.fig1_points < 361 {
            return Err(Error::invalid("fig1_points", "must be at least 361"));
        }
        check_grid("fig2_snr_grid_db", &self.fig2_snr_grid_db)?;
        check_grid("snr_grid_db", &self.snr_grid_db)?;
        if self.fig2_realizations == 0 {
            return Err(Error::invalid("fig2_realizations", "must be at least 1"));
        }
        if self.min_trials == 0 || self.max_trials < self.min_trials {
            return Err(Error::invalid("trials", "need 1 ≤ min_trials ≤ max_trials"));
        }
        if self.block_size == 0 {
            return Err(Error::invalid("block_size", "must be at least 1"));
        }
        if self.union_bound_pairs == 0 {
            return Err(Error::invalid("union_bound_pairs", "must be at least 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn content_hash(&self) -> Result<String> {
        let json = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&json)))
    }
}

fn map_indices<T, F>(range: std::ops::Range<u64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        range.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        range.map(f).collect()
    }
}

fn draw_channel(cfg: &ExperimentConfig, trial: u64) -> Result<DVector<C64>> {
    let seed = derive_seed(cfg.seed, trial, Purpose::Channel);
    Ok(match cfg.channel {
        ChannelKind::Mmwave => {
            sample_mmwave_channel(cfg.n_paths, cfg.n_t, &cfg.steering(), seed)?.h
        }
        ChannelKind::Rayleigh => sample_rayleigh_channel(cfg.n_t, seed)?.h,
    })
}

/// The beamformer a scheme uses on channel `h`: fixed for the baselines,
/// greedy-rotated per realization for BPR.
pub fn beamformer_for(scheme: Scheme, q: u32, h: &DVector<C64>) -> Result<BeamformingMatrix> {
    match scheme {
        Scheme::BprAtb(v) => {
            let sel = greedy_bpr_phases(h, q)?;
            build_bpr_atb(q, v, &sel.phi1, &sel.phi2)
        }
        other => build(other, q),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub scheme: String,
    pub q: u32,
    pub kappa: f64,
    pub measured_kappa_min: f64,
    pub measured_kappa_max: f64,
}

/// κ per scheme with the entry power measured from the built matrix.
pub fn run_table1(qs: &[u32], schemes: &[Scheme]) -> Result<Vec<Table1Row>> {
    let mut rows = Vec::new();
    for &q in qs {
        for &scheme in schemes {
            let bf = build(scheme, q)?;
            let (lo, hi) =
                bf.f.iter()
                    .map(|z| z.norm_sqr())
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
                        (a.min(p), b.max(p))
                    });
            rows.push(Table1Row {
                scheme: scheme.name().to_string(),
                q,
                kappa: kappa(scheme, q)?,
                measured_kappa_min: lo,
                measured_kappa_max: hi,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1Row {
    pub scheme: String,
    pub column: usize,
    pub theta_rad: f64,
    pub gain: f64,
    pub spread_3db_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig1Summary {
    pub scheme: String,
    pub column: usize,
    pub peak_theta_rad: f64,
    pub peak_gain: f64,
    pub spread_3db_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig1Result {
    #[serde(skip)]
    pub rows: Vec<Fig1Row>,
    pub summary: Vec<Fig1Summary>,
}

/// Beamspace patterns on a uniform grid over [−π/2, π/2]. BPR columns use the
/// greedy rotation for the channel of trial 0.
pub fn run_fig1(cfg: &ExperimentConfig) -> Result<Fig1Result> {
    cfg.validate()?;
    let n = cfg.fig1_points;
    let theta: Vec<f64> = (0..n)
        .map(|i| -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / (n - 1) as f64)
        .collect();
    let h = draw_channel(cfg, 0)?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &scheme in &cfg.schemes {
        let bf = beamformer_for(scheme, cfg.q(), &h)?;
        let p = beamspace_pattern(&bf.f, &theta, &cfg.steering())?;
        for (k, gains) in p.gains.iter().enumerate() {
            for (&t, &g) in theta.iter().zip(gains) {
                rows.push(Fig1Row {
                    scheme: scheme.name().to_string(),
                    column: k,
                    theta_rad: t,
                    gain: g,
                    spread_3db_rad: p.spread_3db[k],
                });
            }
            summary.push(Fig1Summary {
                scheme: scheme.name().to_string(),
                column: k,
                peak_theta_rad: p.peak_theta[k],
                peak_gain: p.peak_gain[k],
                spread_3db_rad: p.spread_3db[k],
            });
        }
    }
    Ok(Fig1Result { rows, summary })
}

/// Per-realization spectral efficiencies for one (scheme, mode, SNR) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SeSamples {
    pub scheme: Scheme,
    pub mode: NormalizationMode,
    pub gamma0_db: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedStat {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl PairedStat {
    pub fn from_differences(d: &[f64]) -> Self {
        let n = d.len();
        let mean = d.iter().sum::<f64>() / n as f64;
        let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
        Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            n,
        }
    }

    /// Mean in units of its standard error.
    pub fn z(&self) -> f64 {
        self.mean / self.std_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig2Result {
    pub rows: Vec<CurveRow>,
    #[serde(skip)]
    pub samples: Vec<SeSamples>,
}

impl Fig2Result {
    pub fn samples_for(
        &self,
        scheme: Scheme,
        mode: NormalizationMode,
        gamma0_db: f64,
    ) -> Option<&[f64]> {
        self.samples
            .iter()
            .find(|s| s.scheme == scheme && s.mode == mode && s.gamma0_db == gamma0_db)
            .map(|s| s.values.as_slice())
    }

    /// Realization-paired difference a − b.
    pub fn paired(
        &self,
        a: Scheme,
        b: Scheme,
        mode: NormalizationMode,
        gamma0_db: f64,
    ) -> Option<PairedStat> {
        let x = self.samples_for(a, mode, gamma0_db)?;
        let y = self.samples_for(b, mode, gamma0_db)?;
        let d: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
        Some(PairedStat::from_differences(&d))
    }

    /// Mean of a − b over `blocks` disjoint, consecutive realization blocks.
    pub fn block_means(
        &self,
        a: Scheme,
        b: Scheme,
        mode: NormalizationMode,
        gamma0_db: f64,
        blocks: usize,
    ) -> Option<Vec<f64>> {
        let x = self.samples_for(a, mode, gamma0_db)?;
        let y = self.samples_for(b, mode, gamma0_db)?;
        let size = x.len() / blocks;
        if size == 0 {
            return None;
        }
        Some(
            (0..blocks)
                .map(|k| {
                    let r = k * size..(k + 1) * size;
                    x[r.clone()]
                        .iter()
                        .zip(&y[r])
                        .map(|(p, q)| p - q)
                        .sum::<f64>()
                        / size as f64
                })
                .collect(),
        )
    }
}

pub fn se_metric(mode: NormalizationMode) -> String {
    format!("se_{}", mode.name())
}

/// SNR multiplying h^H F F^H h: Eq1 carries the N_t/L array factor of the
/// signal model, Eq10 applies γ₀ directly.
pub fn se_snr(cfg: &ExperimentConfig, mode: NormalizationMode, gamma0: f64) -> f64 {
    match mode {
        NormalizationMode::Eq1 => gamma0 * cfg.n_t as f64 / cfg.path_factor(),
        NormalizationMode::Eq10 => gamma0,
    }
}

/// Average spectral efficiency over `fig2_realizations` channels.
pub fn run_fig2(cfg: &ExperimentConfig) -> Result<Fig2Result> {
    cfg.validate()?;
    let q = cfg.q();
    let gammas: Vec<f64> = cfg
        .fig2_snr_grid_db
        .iter()
        .map(|&d| db_to_linear(d))
        .collect();
    let n_cells = cfg.schemes.len() * cfg.norm_modes.len() * gammas.len();
    let per_trial: Vec<Result<Vec<f64>>> = map_indices(0..cfg.fig2_realizations, |t| {
        let h = draw_channel(cfg, t)?;
        let mut out = Vec::with_capacity(n_cells);
        for &scheme in &cfg.schemes {
            let bf = beamformer_for(scheme, q, &h)?;
            for &mode in &cfg.norm_modes {
                for &g in &gammas {
                    out.push(spectral_efficiency(&h, &bf.f, se_snr(cfg, mode, g))?);
                }
            }
        }
        Ok(out)
    });
    let per_trial: Vec<Vec<f64>> = per_trial.into_iter().collect::<Result<_>>()?;
    let n = per_trial.len();
    let mut rows = Vec::new();
    let mut samples = Vec::new();
    let mut cell = 0;
    for &scheme in &cfg.schemes {
        for &mode in &cfg.norm_modes {
            for (i, &db) in cfg.fig2_snr_grid_db.iter().enumerate() {
                let values: Vec<f64> = per_trial.iter().map(|v| v[cell]).collect();
                let mean = values.iter().sum::<f64>() / n as f64;
                let var =
                    values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
                let half = Z95 * (var / n as f64).sqrt();
                rows.push(CurveRow::sampled(
                    scheme.name(),
                    cfg.modulation,
                    &se_metric(mode),
                    db,
                    mean,
                    half,
                    n as u64,
                ));
                samples.push(SeSamples {
                    scheme,
                    mode,
                    gamma0_db: cfg.fig2_snr_grid_db[i],
                    values,
                });
                cell += 1;
            }
        }
    }
    Ok(Fig2Result { rows, samples })
}

/// Bit errors, bits and codeword trials at one (mode, scheme, SNR) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BerPoint {
    pub scheme: String,
    pub mode: NormalizationMode,
    pub gamma0_db: f64,
    pub trials: u64,
    pub bit_errors: u64,
    pub bits: u64,
    pub ber: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityFlag {
    pub scheme: String,
    pub mode: NormalizationMode,
    pub from_db: f64,
    pub to_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub mode: NormalizationMode,
    pub scheme: String,
    pub reference: String,
    pub target_ber: f64,
    /// SNR the reference needs minus what the scheme needs, in dB.
    pub gap_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig3Result {
    #[serde(skip)]
    pub rows: Vec<CurveRow>,
    pub points: Vec<BerPoint>,
    pub flags: Vec<MonotonicityFlag>,
    pub gaps: Vec<GapReport>,
}

impl Fig3Result {
    pub fn curve(&self, scheme: Scheme, mode: NormalizationMode) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.scheme == scheme.name() && p.mode == mode)
            .map(|p| (p.gamma0_db, p.ber))
            .collect()
    }

    pub fn gap(&self, mode: NormalizationMode, scheme: Scheme, reference: Scheme) -> Option<f64> {
        self.gaps
            .iter()
            .find(|g| {
                g.mode == mode && g.scheme == scheme.name() && g.reference == reference.name()
            })
            .and_then(|g| g.gap_db)
    }
}

pub const GAP_TARGET_BER: f64 = 1e-2;

/// SNR at which a BER curve first falls through `target`, by linear
/// interpolation of log₁₀(BER) against SNR in dB. Points with zero BER are
/// skipped.
pub fn crossing_db(curve: &[(f64, f64)], target: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = curve.iter().copied().filter(|p| p.1 > 0.0).collect();
    let lt = target.log10();
    for w in pts.windows(2) {
        let (x0, y0) = (w[0].0, w[0].1.log10());
        let (x1, y1) = (w[1].0, w[1].1.log10());
        if y0 >= lt && y1 <= lt {
            if y0 == y1 {
                return Some(x0);
            }
            return Some(x0 + (lt - y0) * (x1 - x0) / (y1 - y0));
        }
    }
    None
}

/// Horizontal distance `crossing(reference) − crossing(curve)` at `target`.
pub fn horizontal_gap_db(
    curve: &[(f64, f64)],
    reference: &[(f64, f64)],
    target: f64,
) -> Option<f64> {
    Some(crossing_db(reference, target)? - crossing_db(curve, target)?)
}

/// Adjacent points whose BER rises by more than the two intervals allow.
pub fn monotonicity_flags(points: &[BerPoint]) -> Vec<MonotonicityFlag> {
    points
        .windows(2)
        .filter(|w| {
            w[0].scheme == w[1].scheme && w[0].mode == w[1].mode && w[1].ci_low > w[0].ci_high
        })
        .map(|w| MonotonicityFlag {
            scheme: w[0].scheme.clone(),
            mode: w[0].mode,
            from_db: w[0].gamma0_db,
            to_db: w[1].gamma0_db,
        })
        .collect()
}

/// What one codeword trial needs at every cell: the unit-power equivalent
/// channel per scheme, the transmitted labels and the unit-variance noise.
struct TrialDraw {
    h_eq: Vec<[C64; 2]>,
    labels: [u32; 2],
    noise: [C64; 2],
}

fn unit_equivalent(
    scheme: Scheme,
    q: u32,
    h: &DVector<C64>,
    fixed: Option<&DMatrix<C64>>,
) -> Result<[C64; 2]> {
    let v = match fixed {
        Some(f) => f.ad_mul(h),
        None => beamformer_for(scheme, q, h)?.unit_power().ad_mul(h),
    };
    Ok([v[0], v[1]])
}

fn draw_trial(
    cfg: &ExperimentConfig,
    fixed: &[Option<DMatrix<C64>>],
    trial: u64,
) -> Result<TrialDraw> {
    let h = draw_channel(cfg, trial)?;
    let h_eq = cfg
        .schemes
        .iter()
        .zip(fixed)
        .map(|(&s, f)| unit_equivalent(s, cfg.q(), &h, f.as_ref()))
        .collect::<Result<_>>()?;
    let m = cfg.modulation as u32;
    let mut bits = substream(cfg.seed, trial, Purpose::Bits);
    let labels = [bits.random_range(0..m), bits.random_range(0..m)];
    let noise = if cfg.noiseless {
        [C64::new(0.0, 0.0); 2]
    } else {
        let mut z = substream(cfg.seed, trial, Purpose::Noise);
        [complex_normal(&mut z), complex_normal(&mut z)]
    };
    Ok(TrialDraw {
        h_eq,
        labels,
        noise,
    })
}

struct Cell {
    scheme_idx: usize,
    mode: NormalizationMode,
    gamma0_db: f64,
    amplitude: f64,
    trials: u64,
    errors: u64,
    done: bool,
}

/// Monte Carlo BER of beamformed Alamouti codewords, together with the
/// channel-averaged union bound and the MGF reference at every cell.
///
/// Each cell runs whole blocks of trials until it has at least `min_trials`
/// trials and `target_errors` bit errors, or reaches `max_trials`.
pub fn run_fig3(cfg: &ExperimentConfig) -> Result<Fig3Result> {
    cfg.validate()?;
    if cfg.n_rf != crate::stbc::T_SLOTS {
        return Err(Error::invalid(
            "n_t",
            format!(
                "Alamouti needs two RF chains (n_t = 4), got n_rf = {}",
                cfg.n_rf
            ),
        ));
    }
    let q = cfg.q();
    let cst = Constellation::new(cfg.modulation)?;
    let kappas: Vec<f64> = cfg
        .schemes
        .iter()
        .map(|&s| kappa(s, q))
        .collect::<Result<_>>()?;
    let fixed: Vec<Option<DMatrix<C64>>> = cfg
        .schemes
        .iter()
        .map(|&s| {
            Ok(if s.is_bpr() {
                None
            } else {
                Some(build(s, q)?.unit_power())
            })
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for &mode in &cfg.norm_modes {
        for (si, &k) in kappas.iter().enumerate() {
            for &db in &cfg.snr_grid_db {
                let g = effective_gamma0(mode, db_to_linear(db), cfg.n_t, cfg.path_factor());
                cells.push(Cell {
                    scheme_idx: si,
                    mode,
                    gamma0_db: db,
                    amplitude: (g * k).sqrt(),
                    trials: 0,
                    errors: 0,
                    done: false,
                });
            }
        }
    }

    let mut next = 0u64;
    while cells.iter().any(|c| !c.done) {
        let end = (next + cfg.block_size).min(cfg.max_trials);
        let draws: Vec<TrialDraw> = map_indices(next..end, |t| draw_trial(cfg, &fixed, t))
            .into_iter()
            .collect::<Result<_>>()?;
        for cell in cells.iter_mut().filter(|c| !c.done) {
            let mut errors = 0u64;
            for d in &draws {
                let h = d.h_eq[cell.scheme_idx];
                let (s1, s2) = (cst.point(d.labels[0]), cst.point(d.labels[1]));
                let h = [h[0] * cell.amplitude, h[1] * cell.amplitude];
                let row = alamouti_row(h, s1, s2);
                let y = [row[0] + d.noise[0], row[1] + d.noise[1]];
                let decided = match alamouti_combine(&y, h) {
                    Some([e1, e2]) => [cst.demap(e1), cst.demap(e2)],
                    None => [0, 0],
                };
                errors += ((decided[0] ^ d.labels[0]).count_ones()
                    + (decided[1] ^ d.labels[1]).count_ones()) as u64;
            }
            cell.trials += draws.len() as u64;
            cell.errors += errors;
            cell.done = (cell.trials >= cfg.min_trials && cell.errors >= cfg.target_errors)
                || cell.trials >= cfg.max_trials;
        }
        next = end;
    }

    let bits_per_trial = 2 * cst.bits_per_symbol() as u64;
    let mut points = Vec::new();
    let mut rows = Vec::new();
    for c in &cells {
        let scheme = cfg.schemes[c.scheme_idx];
        let bits = c.trials * bits_per_trial;
        let (lo, hi) = wilson_interval(c.errors, bits, Z95);
        let ber = c.errors as f64 / bits as f64;
        rows.push(CurveRow::sampled(
            scheme.name(),
            cfg.modulation,
            &format!("ber_mc_{}", c.mode.name()),
            c.gamma0_db,
            ber,
            (hi - lo) / 2.0,
            c.trials,
        ));
        points.push(BerPoint {
            scheme: scheme.name().to_string(),
            mode: c.mode,
            gamma0_db: c.gamma0_db,
            trials: c.trials,
            bit_errors: c.errors,
            bits,
            ber,
            ci_low: lo,
            ci_high: hi,
        });
    }

    rows.extend(union_bound_rows(cfg, &cst, &kappas, &fixed)?);
    rows.extend(mgf_rows(cfg, &kappas)?);

    let mut gaps = Vec::new();
    let real = Scheme::BprAtb(crate::beamformer::GoldenVariant::Real);
    for &mode in &cfg.norm_modes {
        let curve_of = |s: Scheme| -> Vec<(f64, f64)> {
            points
                .iter()
                .filter(|p| p.scheme == s.name() && p.mode == mode)
                .map(|p| (p.gamma0_db, p.ber))
                .collect()
        };
        if cfg.schemes.contains(&real) && cfg.schemes.contains(&Scheme::DftAtb) {
            gaps.push(GapReport {
                mode,
                scheme: real.name().to_string(),
                reference: Scheme::DftAtb.name().to_string(),
                target_ber: GAP_TARGET_BER,
                gap_db: horizontal_gap_db(
                    &curve_of(real),
                    &curve_of(Scheme::DftAtb),
                    GAP_TARGET_BER,
                ),
            });
        }
    }
    let flags = monotonicity_flags(&points);
    Ok(Fig3Result {
        rows,
        points,
        flags,
        gaps,
    })
}

/// Union bound averaged over the first `union_bound_realizations` trial
/// channels, with the same γ₀ scaling as the simulation.
fn union_bound_rows(
    cfg: &ExperimentConfig,
    cst: &Constellation,
    kappas: &[f64],
    fixed: &[Option<DMatrix<C64>>],
) -> Result<Vec<CurveRow>> {
    let n = cfg.union_bound_realizations;
    if n == 0 {
        return Ok(Vec::new());
    }
    let draws: Vec<TrialDraw> = map_indices(0..n, |t| draw_trial(cfg, fixed, t))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &mode in &cfg.norm_modes {
        for (si, (&scheme, &k)) in cfg.schemes.iter().zip(kappas).enumerate() {
            for &db in &cfg.snr_grid_db {
                let g = effective_gamma0(mode, db_to_linear(db), cfg.n_t, cfg.path_factor());
                let values: Vec<Result<f64>> = map_indices(0..n, |t| {
                    let h = &draws[t as usize].h_eq[si];
                    let budget = PairBudget {
                        max_pairs: cfg.union_bound_pairs,
                        seed: derive_seed(cfg.seed, t, Purpose::Pairs),
                    };
                    Ok(union_bound_ber(&DVector::from_vec(h.to_vec()), cst, g, k, budget)?.value)
                });
                let mut sum = 0.0;
                for v in values {
                    sum += v?;
                }
                rows.push(CurveRow::analytic(
                    scheme.name(),
                    cfg.modulation,
                    &format!("union_bound_{}", mode.name()),
                    db,
                    sum / n as f64,
                ));
            }
        }
    }
    Ok(rows)
}

/// Rayleigh-fading MGF reference with γ̄ = κγ₀/2 at the mode's effective γ₀.
fn mgf_rows(cfg: &ExperimentConfig, kappas: &[f64]) -> Result<Vec<CurveRow>> {
    let mut rows = Vec::new();
    for &mode in &cfg.norm_modes {
        for (&scheme, &k) in cfg.schemes.iter().zip(kappas) {
            for &db in &cfg.snr_grid_db {
                let g = effective_gamma0(mode, db_to_linear(db), cfg.n_t, cfg.path_factor());
                let gamma_bar = k * g / 2.0;
                let v = match cfg.modulation {
                    2 => mgf_ber_bpsk(gamma_bar)?,
                    8 => mgf_ber_mpsk(gamma_bar, 8, MpskForm::Standard)?,
                    m => mgf_ber_mqam(gamma_bar, m)?,
                };
                rows.push(CurveRow::analytic(
                    scheme.name(),
                    cfg.modulation,
                    &format!("mgf_{}", mode.name()),
                    db,
                    v,
                ));
            }
        }
    }
    Ok(rows)
}

/// BPSK over flat Rayleigh fading with conditional error Q(√(γ̄|h|²)).
///
/// Returns `(bit errors, trials)`; trial `t` draws its fading, bit and noise
/// from the counter-keyed streams of `seed`.
pub fn simulate_bpsk_rayleigh(gamma_bar: f64, trials: u64, seed: u64) -> Result<(u64, u64)> {
    if gamma_bar.is_nan() || gamma_bar <= 0.0 {
        return Err(Error::invalid("gamma_bar", "must be positive"));
    }
    let sigma = (2.0 / gamma_bar).sqrt();
    let errs = map_indices(0..trials, |t| {
        let h = complex_normal(&mut substream(seed, t, Purpose::Channel));
        let bit = substream(seed, t, Purpose::Bits).random_range(0..2u8);
        let x = if bit == 0 { 1.0 } else { -1.0 };
        let z = complex_normal(&mut substream(seed, t, Purpose::Noise)) * sigma;
        let y = h * x + z;
        let decided = u8::from((h.conj() * y).re < 0.0);
        u64::from(decided != bit)
    });
    Ok((errs.iter().sum(), trials))
}

/// Alamouti over a fixed unit-power equivalent channel: y = a·h_eq^H·S + z,
/// z ~ CN(0, 1), a = √(γ₀κ). Returns `(bit errors, bits)`.
pub fn simulate_alamouti_fixed_channel(
    h_eq: [C64; 2],
    gamma0: f64,
    kappa: f64,
    constellation: &Constellation,
    trials: u64,
    seed: u64,
) -> Result<(u64, u64)> {
    if !(gamma0 >= 0.0 && kappa > 0.0) {
        return Err(Error::invalid("gamma0", "need γ₀ ≥ 0 and κ > 0"));
    }
    let a = (gamma0 * kappa).sqrt();
    let h = [h_eq[0] * a, h_eq[1] * a];
    let m = constellation.order() as u32;
    let errs = map_indices(0..trials, |t| {
        let mut b = substream(seed, t, Purpose::Bits);
        let labels = [b.random_range(0..m), b.random_range(0..m)];
        let mut z = substream(seed, t, Purpose::Noise);
        let row = alamouti_row(
            h,
            constellation.point(labels[0]),
            constellation.point(labels[1]),
        );
        let y = [
            row[0] + complex_normal(&mut z),
            row[1] + complex_normal(&mut z),
        ];
        match alamouti_combine(&y, h) {
            Some([e1, e2]) => {
                ((constellation.demap(e1) ^ labels[0]).count_ones()
                    + (constellation.demap(e2) ^ labels[1]).count_ones()) as u64
            }
            None => (labels[0].count_ones() + labels[1].count_ones()) as u64,
        }
    });
    Ok((
        errs.iter().sum(),
        trials * 2 * constellation.bits_per_symbol() as u64,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verb {
    Table1,
    Fig1,
    Fig2,
    Fig3,
    All,
}

impl Verb {
    pub fn name(self) -> &'static str {
        match self {
            Verb::Table1 => "table1",
            Verb::Fig1 => "fig1",
            Verb::Fig2 => "fig2",
            Verb::Fig3 => "fig3",
            Verb::All => "all",
        }
    }

    fn includes(self, other: Verb) -> bool {
        self == Verb::All || self == other
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub verb: Verb,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub table1: Option<Vec<Table1Row>>,
    pub fig1: Option<Fig1Result>,
    pub fig2: Option<Fig2Result>,
    pub fig3: Option<Fig3Result>,
    pub wall_clock_seconds: f64,
}

pub fn run(verb: Verb, cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let start = Instant::now();
    let table1 = if verb.includes(Verb::Table1) {
        Some(run_table1(&cfg.table1_q, &cfg.schemes)?)
    } else {
        None
    };
    let fig1 = if verb.includes(Verb::Fig1) {
        Some(run_fig1(cfg)?)
    } else {
        None
    };
    let fig2 = if verb.includes(Verb::Fig2) {
        Some(run_fig2(cfg)?)
    } else {
        None
    };
    let fig3 = if verb.includes(Verb::Fig3) {
        Some(run_fig3(cfg)?)
    } else {
        None
    };
    Ok(SweepResult {
        verb,
        config: cfg.clone(),
        config_hash: cfg.content_hash()?,
        table1,
        fig1,
        fig2,
        fig3,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub verb: Verb,
    pub config_hash: String,
    /// SHA-256 of every emitted file except this manifest.
    pub files: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
    pub crate_version: String,
    pub fig1_summary: Option<Vec<Fig1Summary>>,
    pub fig3_gaps: Option<Vec<GapReport>>,
    pub fig3_monotonicity_flags: Option<Vec<MonotonicityFlag>>,
    pub kappa: BTreeMap<String, f64>,
}

/// Write `config.json`, the CSVs the verb produced and `manifest.json`.
pub fn write_run(result: &SweepResult, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut names = vec!["config.json".to_string()];
    fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(&result.config)?,
    )?;
    if let Some(t) = &result.table1 {
        write_rows(t, &dir.join("table1.csv"))?;
        names.push("table1.csv".into());
    }
    if let Some(f) = &result.fig1 {
        write_rows(&f.rows, &dir.join("fig1.csv"))?;
        names.push("fig1.csv".into());
    }
    if let Some(f) = &result.fig2 {
        write_curve_csv(&f.rows, fs::File::create(dir.join("fig2.csv"))?)?;
        names.push("fig2.csv".into());
    }
    if let Some(f) = &result.fig3 {
        write_curve_csv(&f.rows, fs::File::create(dir.join("fig3.csv"))?)?;
        names.push("fig3.csv".into());
    }
    let mut files = BTreeMap::new();
    for n in names {
        files.insert(
            n.clone(),
            hex::encode(Sha256::digest(fs::read(dir.join(&n))?)),
        );
    }
    let mut kappas = BTreeMap::new();
    for &s in &result.config.schemes {
        kappas.insert(s.name().to_string(), kappa(s, result.config.q())?);
    }
    let manifest = Manifest {
        verb: result.verb,
        config_hash: result.config_hash.clone(),
        files,
        wall_clock_seconds: result.wall_clock_seconds,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        fig1_summary: result.fig1.as_ref().map(|f| f.summary.clone()),
        fig3_gaps: result.fig3.as_ref().map(|f| f.gaps.clone()),
        fig3_monotonicity_flags: result.fig3.as_ref().map(|f| f.flags.clone()),
        kappa: kappas,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}
