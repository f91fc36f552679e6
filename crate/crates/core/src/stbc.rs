//! Gray-mapped constellations, 2×2 Alamouti coding over an analog beamformer,
//! the noisy MISO link, and linear combining detection.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beamformer::BeamformingMatrix;
use crate::channel::{complex_normal, C64};
use crate::error::{check_len, Error, Result};
use crate::rng::rng_from_seed;

/// Time slots per Alamouti block, equal to the number of RF chains.
pub const T_SLOTS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    bits_per_symbol: usize,
    /// `points[label]` is the symbol carrying `label`'s bits.
    points: Vec<C64>,
    /// Levels per axis for square QAM; 0 for BPSK.
    side: usize,
    scale: f64,
}

fn gray(i: u32) -> u32 {
    i ^ (i >> 1)
}

fn inverse_gray(mut g: u32) -> u32 {
    let mut i = g;
    while g > 0 {
        g >>= 1;
        i ^= g;
    }
    i
}

impl Constellation {
    /// BPSK (`order == 2`) or square Gray-mapped QAM (4, 16, 64), normalized to
    /// unit average energy.
    pub fn new(order: usize) -> Result<Self> {
        match order {
            2 => Ok(Self {
                order,
                bits_per_symbol: 1,
                points: vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)],
                side: 0,
                scale: 1.0,
            }),
            4 | 16 | 64 => {
                let k = order.trailing_zeros() as usize;
                let half = k / 2;
                let side = 1usize << half;
                let scale = 1.0 / (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
                let level = |idx: u32| (2 * idx as i64 - side as i64 + 1) as f64 * scale;
                let mask = (1u32 << half) - 1;
                let points = (0..order as u32)
                    .map(|label| {
                        let i = inverse_gray(label >> half);
                        let q = inverse_gray(label & mask);
                        C64::new(level(i), level(q))
                    })
                    .collect();
                Ok(Self {
                    order,
                    bits_per_symbol: k,
                    points,
                    side,
                    scale,
                })
            }
            other => Err(Error::invalid(
                "modulation",
                format!("order must be 2, 4, 16 or 64, got {other}"),
            )),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn point(&self, label: u32) -> C64 {
        self.points[label as usize]
    }

    pub fn label_of_bits(&self, bits: &[u8]) -> Result<u32> {
        check_len("symbol bits", self.bits_per_symbol, bits.len())?;
        bits.iter().try_fold(0u32, |acc, &b| match b {
            0 | 1 => Ok((acc << 1) | u32::from(b)),
            _ => Err(Error::invalid(
                "bits",
                format!("bit value {b} is not 0 or 1"),
            )),
        })
    }

    pub fn bits_of_label(&self, label: u32) -> Vec<u8> {
        (0..self.bits_per_symbol)
            .rev()
            .map(|i| ((label >> i) & 1) as u8)
            .collect()
    }

    pub fn map_bits(&self, bits: &[u8]) -> Result<C64> {
        Ok(self.point(self.label_of_bits(bits)?))
    }

    /// Label of the nearest constellation point. Square QAM is sliced per axis,
    /// which is the same as a nearest-point search on the grid.
    pub fn demap(&self, symbol: C64) -> u32 {
        if self.side == 0 {
            return u32::from(symbol.re < 0.0);
        }
        let half = self.bits_per_symbol / 2;
        let slice = |x: f64| {
            let idx = ((x / self.scale + self.side as f64 - 1.0) / 2.0).round();
            idx.clamp(0.0, self.side as f64 - 1.0) as u32
        };
        (gray(slice(symbol.re)) << half) | gray(slice(symbol.im))
    }

    pub fn demap_bits(&self, symbol: C64) -> Vec<u8> {
        self.bits_of_label(self.demap(symbol))
    }
}

/// `[[s₁, −s₂*], [s₂, s₁*]]`
pub fn alamouti_matrix(s1: C64, s2: C64) -> Matrix2<C64> {
    Matrix2::new(s1, -s2.conj(), s2, s1.conj())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlamoutiCodeword {
    pub s: Matrix2<C64>,
    pub labels: [u32; 2],
    pub source_bits: Vec<u8>,
}

impl AlamoutiCodeword {
    pub fn from_labels(labels: [u32; 2], constellation: &Constellation) -> Self {
        let s1 = constellation.point(labels[0]);
        let s2 = constellation.point(labels[1]);
        let mut source_bits = constellation.bits_of_label(labels[0]);
        source_bits.extend(constellation.bits_of_label(labels[1]));
        Self {
            s: alamouti_matrix(s1, s2),
            labels,
            source_bits,
        }
    }

    pub fn from_bits(bits: &[u8], constellation: &Constellation) -> Result<Self> {
        let k = constellation.bits_per_symbol();
        check_len("codeword bits", 2 * k, bits.len())?;
        let l1 = constellation.label_of_bits(&bits[..k])?;
        let l2 = constellation.label_of_bits(&bits[k..])?;
        Ok(Self::from_labels([l1, l2], constellation))
    }

    pub fn symbols(&self) -> (C64, C64) {
        (self.s[(0, 0)], self.s[(1, 0)])
    }
}

/// Every codeword of the constellation; index `k = label₁·M + label₂`.
pub fn codebook(constellation: &Constellation) -> Vec<AlamoutiCodeword> {
    let m = constellation.order() as u32;
    (0..m)
        .flat_map(|a| (0..m).map(move |b| [a, b]))
        .map(|labels| AlamoutiCodeword::from_labels(labels, constellation))
        .collect()
}

/// Hamming distance between the bit labels of two codewords.
pub fn label_distance(a: &AlamoutiCodeword, b: &AlamoutiCodeword) -> u32 {
    (a.labels[0] ^ b.labels[0]).count_ones() + (a.labels[1] ^ b.labels[1]).count_ones()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMatrix {
    pub e: Matrix2<C64>,
    pub pair: (usize, usize),
}

impl ErrorMatrix {
    pub fn between(book: &[AlamoutiCodeword], k: usize, l: usize) -> Self {
        Self {
            e: book[k].s - book[l].s,
            pair: (k, l),
        }
    }

    /// The scalar `a` in E·E^H = a·I.
    pub fn a(&self) -> f64 {
        (self.e * self.e.adjoint())[(0, 0)].re
    }
}

/// How transmit power enters the link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationMode {
    /// y = √(P·N_t/L)·h^H·F·S + z with the beamformer's own entry power κ.
    Eq1,
    /// y = h^H·√(γ₀κ)·F̃·S + z with F̃ the unit-power beamformer.
    Eq10,
}

impl NormalizationMode {
    pub fn name(self) -> &'static str {
        match self {
            NormalizationMode::Eq1 => "eq1",
            NormalizationMode::Eq10 => "eq10",
        }
    }
}

impl fmt::Display for NormalizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NormalizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "eq1" => Ok(NormalizationMode::Eq1),
            "eq10" => Ok(NormalizationMode::Eq10),
            other => Err(Error::invalid(
                "norm",
                format!("expected eq1 or eq10, got `{other}`"),
            )),
        }
    }
}

/// Transmit precoder and the two scalar gains of one link configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkScaling {
    pub mode: NormalizationMode,
    pub precoder: DMatrix<C64>,
    /// Multiplies F·S at the transmitter.
    pub tx_amplitude: f64,
    /// Multiplies h^H·X at the receiver.
    pub rx_gain: f64,
}

impl LinkScaling {
    /// `path_factor` is the L in √(P·N_t/L); it is ignored in `Eq10` mode.
    pub fn new(
        mode: NormalizationMode,
        bf: &BeamformingMatrix,
        gamma0: f64,
        path_factor: f64,
    ) -> Self {
        let n_t = bf.n_antennas() as f64;
        match mode {
            NormalizationMode::Eq1 => Self {
                mode,
                precoder: bf.f.clone(),
                tx_amplitude: 1.0,
                rx_gain: (gamma0 * n_t / path_factor).sqrt(),
            },
            NormalizationMode::Eq10 => Self {
                mode,
                precoder: bf.unit_power(),
                tx_amplitude: (gamma0 * bf.kappa).sqrt(),
                rx_gain: 1.0,
            },
        }
    }

    /// Channel seen by the code: y = h_eff^H·S + z.
    pub fn effective_channel(&self, h: &DVector<C64>) -> Result<DVector<C64>> {
        check_len("channel length", self.precoder.nrows(), h.len())?;
        Ok(self.precoder.ad_mul(h) * C64::new(self.tx_amplitude * self.rx_gain, 0.0))
    }
}

/// γ₀ seen by a unit-power beamformer, so the effective channel equals
/// `√(γ_eff·κ)·F̃^H h` in both modes.
pub fn effective_gamma0(mode: NormalizationMode, gamma0: f64, n_t: usize, path_factor: f64) -> f64 {
    match mode {
        NormalizationMode::Eq1 => gamma0 * (n_t * n_t) as f64 / path_factor,
        NormalizationMode::Eq10 => gamma0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub codeword: AlamoutiCodeword,
    pub x: DMatrix<C64>,
}

/// X = amplitude·F·S.
pub fn encode_alamouti(
    bits: &[u8],
    constellation: &Constellation,
    precoder: &DMatrix<C64>,
    amplitude: f64,
) -> Result<Transmission> {
    check_len("precoder columns", T_SLOTS, precoder.ncols())?;
    let codeword = AlamoutiCodeword::from_bits(bits, constellation)?;
    let x = precode(precoder, &codeword.s, amplitude);
    Ok(Transmission { codeword, x })
}

pub fn precode(precoder: &DMatrix<C64>, s: &Matrix2<C64>, amplitude: f64) -> DMatrix<C64> {
    let s = DMatrix::from_column_slice(2, 2, s.as_slice());
    precoder * s * C64::new(amplitude, 0.0)
}

/// y = gain·h^H·X + z, z ~ CN(0, σ²) per slot.
pub fn transmit_receive_with<R: Rng + ?Sized>(
    x: &DMatrix<C64>,
    h: &DVector<C64>,
    gain: f64,
    sigma2: f64,
    rng: &mut R,
) -> Result<[C64; T_SLOTS]> {
    check_len("channel length", x.nrows(), h.len())?;
    check_len("time slots", T_SLOTS, x.ncols())?;
    let sigma = sigma2.sqrt();
    let row = x.ad_mul(h);
    let mut y = [C64::new(0.0, 0.0); T_SLOTS];
    for (t, yt) in y.iter_mut().enumerate() {
        let noise = if sigma2 > 0.0 {
            complex_normal(rng) * sigma
        } else {
            C64::new(0.0, 0.0)
        };
        *yt = row[t].conj() * gain + noise;
    }
    Ok(y)
}

pub fn transmit_receive(
    x: &DMatrix<C64>,
    h: &DVector<C64>,
    gain: f64,
    sigma2: f64,
    noise_seed: u64,
) -> Result<[C64; T_SLOTS]> {
    transmit_receive_with(x, h, gain, sigma2, &mut rng_from_seed(noise_seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub labels: [u32; 2],
    pub bits: Vec<u8>,
    /// The channel was all-zero; labels default to the first point.
    pub degenerate: bool,
}

/// Alamouti combining for y = h_eq^H·S + z followed by nearest-point slicing.
///
/// With w = h_eq^H: ŝ₁ = (h₁·y₁ + h₂*·y₂*)/‖h‖², ŝ₂ = (h₂·y₁ − h₁*·y₂*)/‖h‖².
pub fn decode_alamouti(
    y: &[C64; T_SLOTS],
    h_eq: &DVector<C64>,
    constellation: &Constellation,
) -> Result<Decoded> {
    check_len("equivalent channel", T_SLOTS, h_eq.len())?;
    let combined = alamouti_combine(y, [h_eq[0], h_eq[1]]);
    let labels = match combined {
        Some([s1, s2]) => [constellation.demap(s1), constellation.demap(s2)],
        None => [0, 0],
    };
    let mut bits = constellation.bits_of_label(labels[0]);
    bits.extend(constellation.bits_of_label(labels[1]));
    Ok(Decoded {
        labels,
        bits,
        degenerate: combined.is_none(),
    })
}

/// Noiseless received row `h_eq^H·S` for the codeword built from `s1, s2`.
pub fn alamouti_row(h_eq: [C64; 2], s1: C64, s2: C64) -> [C64; T_SLOTS] {
    let (h1, h2) = (h_eq[0].conj(), h_eq[1].conj());
    [h1 * s1 + h2 * s2, -h1 * s2.conj() + h2 * s1.conj()]
}

/// Linear combining estimates of `(s₁, s₂)`; `None` for an all-zero channel.
pub fn alamouti_combine(y: &[C64; T_SLOTS], h_eq: [C64; 2]) -> Option<[C64; 2]> {
    let [h1, h2] = h_eq;
    let energy = h1.norm_sqr() + h2.norm_sqr();
    if energy == 0.0 {
        return None;
    }
    Some([
        (h1 * y[0] + h2.conj() * y[1].conj()) / energy,
        (h2 * y[0] - h1.conj() * y[1].conj()) / energy,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamformer::{build, build_dft_atb, GoldenVariant, Scheme};
    use crate::channel::{sample_mmwave_channel, sample_rayleigh_channel, SteeringConfig};
    use proptest::prelude::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn row_helper_matches_matrix_product() {
        let cst = Constellation::new(16).unwrap();
        let mut rng = rng_from_seed(8);
        for _ in 0..200 {
            let h_eq = [complex_normal(&mut rng), complex_normal(&mut rng)];
            let labels = [rng.random_range(0..16), rng.random_range(0..16)];
            let cw = AlamoutiCodeword::from_labels(labels, &cst);
            let (s1, s2) = cw.symbols();
            let s = DMatrix::from_column_slice(2, 2, cw.s.as_slice());
            let row = s.ad_mul(&DVector::from_vec(h_eq.to_vec()));
            let fast = alamouti_row(h_eq, s1, s2);
            for t in 0..2 {
                assert!((fast[t] - row[t].conj()).norm() < 1e-14);
            }
            let est = alamouti_combine(&fast, h_eq).unwrap();
            assert!((est[0] - s1).norm() < 1e-12 && (est[1] - s2).norm() < 1e-12);
        }
        assert!(alamouti_combine(&[c(1.0, 0.0); 2], [c(0.0, 0.0); 2]).is_none());
    }

    #[test]
    fn bpsk_mapping() {
        let bpsk = Constellation::new(2).unwrap();
        assert_eq!(bpsk.map_bits(&[0]).unwrap(), c(1.0, 0.0));
        assert_eq!(bpsk.map_bits(&[1]).unwrap(), c(-1.0, 0.0));
        assert_eq!(bpsk.demap(c(0.3, 5.0)), 0);
        assert_eq!(bpsk.demap(c(-0.3, 5.0)), 1);
    }

    #[test]
    fn qpsk_points_have_unit_energy() {
        let qam = Constellation::new(4).unwrap();
        for p in qam.points() {
            assert!((p.norm_sqr() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn unit_average_energy_and_gray_neighbors() {
        for m in [2usize, 4, 16, 64] {
            let cst = Constellation::new(m).unwrap();
            let avg = cst.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / m as f64;
            assert!((avg - 1.0).abs() < 1e-12, "M={m} avg {avg}");
            // Nearest neighbours differ in exactly one bit.
            let dmin = cst
                .points()
                .iter()
                .enumerate()
                .flat_map(|(i, a)| cst.points()[i + 1..].iter().map(move |b| (a - b).norm()))
                .fold(f64::INFINITY, f64::min);
            for (i, a) in cst.points().iter().enumerate() {
                for (j, b) in cst.points().iter().enumerate().skip(i + 1) {
                    if ((a - b).norm() - dmin).abs() < 1e-9 {
                        assert_eq!((i ^ j).count_ones(), 1, "M={m} labels {i} {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn map_rejects_bad_bits() {
        let qam = Constellation::new(16).unwrap();
        assert!(qam.map_bits(&[0, 1, 1]).is_err());
        assert!(qam.map_bits(&[0, 1, 2, 0]).is_err());
        assert!(Constellation::new(8).is_err());
    }

    #[test]
    fn demap_picks_nearest_point() {
        let cst = Constellation::new(64).unwrap();
        let mut rng = rng_from_seed(5);
        for _ in 0..2000 {
            let z = c(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            let nearest = (0..64u32)
                .min_by(|&a, &b| {
                    (cst.point(a) - z)
                        .norm()
                        .total_cmp(&(cst.point(b) - z).norm())
                })
                .unwrap();
            assert_eq!(cst.demap(z), nearest);
        }
    }

    #[test]
    fn identity_like_codeword() {
        let s = alamouti_matrix(c(1.0, 0.0), c(0.0, 0.0));
        assert_eq!(s, Matrix2::identity());
    }

    #[test]
    fn alamouti_determinant_and_orthogonality() {
        let mut rng = rng_from_seed(17);
        for _ in 0..1000 {
            let s1 = complex_normal(&mut rng);
            let s2 = complex_normal(&mut rng);
            let s = alamouti_matrix(s1, s2);
            let energy = s1.norm_sqr() + s2.norm_sqr();
            assert!((s.determinant() - c(energy, 0.0)).norm() < 1e-12);
            let gram = s * s.adjoint();
            assert!((gram - Matrix2::identity() * c(energy, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn error_matrices_are_scaled_identities() {
        let cst = Constellation::new(4).unwrap();
        let book = codebook(&cst);
        assert_eq!(book.len(), 16);
        for k in 0..book.len() {
            for l in 0..book.len() {
                if k == l {
                    continue;
                }
                let e = ErrorMatrix::between(&book, k, l);
                let gram = e.e * e.e.adjoint();
                assert!((gram - Matrix2::identity() * c(e.a(), 0.0)).norm() < 1e-10);
                assert!(e.a() > 0.0);
            }
        }
    }

    #[test]
    fn encode_checks_precoder_width() {
        let cst = Constellation::new(4).unwrap();
        let wide = build_dft_atb(3).unwrap();
        assert!(encode_alamouti(&[0, 1, 1, 0], &cst, &wide.f, 1.0).is_err());
        let ok = build_dft_atb(2).unwrap();
        let tx = encode_alamouti(&[0, 1, 1, 0], &cst, &ok.f, 2.0).unwrap();
        assert_eq!(tx.x.shape(), (4, 2));
        assert_eq!(tx.codeword.source_bits, vec![0, 1, 1, 0]);
    }

    #[test]
    fn precoded_power_follows_scaling() {
        // ‖√(γ₀κ)·F̃·S‖² = γ₀κ·‖S‖² for orthonormal F̃ columns.
        let cst = Constellation::new(16).unwrap();
        let bf = build_dft_atb(2).unwrap();
        let (gamma0, kappa) = (7.0, bf.kappa);
        let amp = (gamma0 * kappa).sqrt();
        for cw in codebook(&cst).iter().step_by(7) {
            let x = precode(&bf.unit_power(), &cw.s, amp);
            let expected = gamma0 * kappa * cw.s.norm_squared();
            assert!((x.norm_squared() - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn noiseless_pick_off() {
        let x = DMatrix::from_fn(4, 2, |r, t| c(r as f64 + 1.0, t as f64 - 0.5));
        let mut h = DVector::zeros(4);
        h[0] = c(1.0, 0.0);
        let y = transmit_receive(&x, &h, 3.0, 0.0, 1).unwrap();
        assert_eq!(y[0], x[(0, 0)] * 3.0);
        assert_eq!(y[1], x[(0, 1)] * 3.0);
    }

    #[test]
    fn zero_signal_is_pure_noise() {
        let x = DMatrix::zeros(4, 2);
        let h = sample_rayleigh_channel(4, 3).unwrap().h;
        let y = transmit_receive(&x, &h, 5.0, 2.0, 77).unwrap();
        let mut rng = rng_from_seed(77);
        let z0 = complex_normal(&mut rng) * 2f64.sqrt();
        let z1 = complex_normal(&mut rng) * 2f64.sqrt();
        assert_eq!(y, [z0, z1]);
    }

    #[test]
    fn noise_variance() {
        let x = DMatrix::from_element(2, 2, c(0.5, -0.25));
        let h = DVector::from_element(2, c(1.0, 1.0));
        let signal = x.ad_mul(&h)[0].conj();
        let sigma2 = 0.7;
        let n = 1_000_000;
        let mut rng = rng_from_seed(9);
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..n / 2 {
            let y = transmit_receive_with(&x, &h, 1.0, sigma2, &mut rng).unwrap();
            let p = (y[0] - signal).norm_sqr();
            acc += p;
            acc2 += p * p;
        }
        let m = n as f64 / 2.0;
        let mean = acc / m;
        let sd = ((acc2 / m - mean * mean) / m).sqrt();
        assert!((mean - sigma2).abs() < 3.0 * sd, "{mean} ± {sd}");
    }

    #[test]
    fn zero_channel_is_flagged() {
        let cst = Constellation::new(4).unwrap();
        let d = decode_alamouti(&[c(1.0, 1.0), c(0.0, 1.0)], &DVector::zeros(2), &cst).unwrap();
        assert!(d.degenerate);
        assert_eq!(d.labels, [0, 0]);
    }

    /// Joint ML over every codeword, for comparison with combining.
    fn joint_ml(y: &[C64; 2], h_eq: &DVector<C64>, book: &[AlamoutiCodeword]) -> [u32; 2] {
        let metric = |cw: &AlamoutiCodeword| {
            let s = DMatrix::from_column_slice(2, 2, cw.s.as_slice());
            let r = s.ad_mul(h_eq);
            (y[0] - r[0].conj()).norm_sqr() + (y[1] - r[1].conj()).norm_sqr()
        };
        book.iter()
            .min_by(|a, b| metric(a).total_cmp(&metric(b)))
            .unwrap()
            .labels
    }

    #[test]
    fn combining_matches_joint_ml_qpsk() {
        let cst = Constellation::new(4).unwrap();
        let book = codebook(&cst);
        let cfg = SteeringConfig::default();
        for trial in 0..1000u64 {
            let h = sample_mmwave_channel(3, 4, &cfg, trial).unwrap().h;
            let bf = build(Scheme::BprAtb(GoldenVariant::Real), 2).unwrap();
            let link = LinkScaling::new(NormalizationMode::Eq10, &bf, 2.0, 3.0);
            let h_eq = link.effective_channel(&h).unwrap();
            let cw = &book[(trial as usize * 7) % 16];
            let x = precode(&link.precoder, &cw.s, link.tx_amplitude);
            let y = transmit_receive(&x, &h, link.rx_gain, 1.0, 10_000 + trial).unwrap();
            let d = decode_alamouti(&y, &h_eq, &cst).unwrap();
            assert_eq!(d.labels, joint_ml(&y, &h_eq, &book), "trial {trial}");
        }
    }

    #[test]
    fn huge_noise_gives_coin_flips() {
        let cst = Constellation::new(4).unwrap();
        let bf = build_dft_atb(2).unwrap();
        let mut errors = 0u64;
        let trials = 20_000u64;
        for t in 0..trials {
            let h = sample_rayleigh_channel(4, t).unwrap().h;
            let link = LinkScaling::new(NormalizationMode::Eq10, &bf, 1.0, 1.0);
            let bits: Vec<u8> = (0..4).map(|i| ((t >> i) & 1) as u8).collect();
            let tx = encode_alamouti(&bits, &cst, &link.precoder, link.tx_amplitude).unwrap();
            let y = transmit_receive(&tx.x, &h, link.rx_gain, 1e12, t + 99).unwrap();
            let d = decode_alamouti(&y, &link.effective_channel(&h).unwrap(), &cst).unwrap();
            errors += d.bits.iter().zip(&bits).filter(|(a, b)| a != b).count() as u64;
        }
        let n = (trials * 4) as f64;
        let ber = errors as f64 / n;
        assert!((ber - 0.5).abs() < 3.0 * (0.25 / n).sqrt(), "ber {ber}");
    }

    #[test]
    fn both_modes_share_the_effective_channel_form() {
        // √(P·N_t/L)·F = √(γ_eff·κ)·F̃ with γ_eff = P·N_t²/L.
        let h = sample_rayleigh_channel(4, 8).unwrap().h;
        for scheme in Scheme::ALL {
            let bf = build(scheme, 2).unwrap();
            let (p, l) = (13.0, 3.0);
            let eq1 = LinkScaling::new(NormalizationMode::Eq1, &bf, p, l);
            let geff = effective_gamma0(NormalizationMode::Eq1, p, 4, l);
            let eq10 = LinkScaling::new(NormalizationMode::Eq10, &bf, geff, l);
            let a = eq1.effective_channel(&h).unwrap();
            let b = eq10.effective_channel(&h).unwrap();
            assert!((a - b).norm() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn noiseless_round_trip(
            seed in 0u64..1_000_000,
            m in prop::sample::select(vec![2usize, 4, 16, 64]),
            scheme in prop::sample::select(Scheme::ALL.to_vec()),
            eq1 in any::<bool>(),
        ) {
            let cst = Constellation::new(m).unwrap();
            let mut rng = rng_from_seed(seed);
            let bits: Vec<u8> = (0..2 * cst.bits_per_symbol()).map(|_| rng.random_range(0..2u8)).collect();
            let h = sample_mmwave_channel(3, 4, &SteeringConfig::default(), seed).unwrap().h;
            let bf = build(scheme, 2).unwrap();
            let mode = if eq1 { NormalizationMode::Eq1 } else { NormalizationMode::Eq10 };
            let link = LinkScaling::new(mode, &bf, 10.0, 3.0);
            let h_eq = link.effective_channel(&h).unwrap();
            prop_assume!(h_eq.norm() > 1e-9);
            let tx = encode_alamouti(&bits, &cst, &link.precoder, link.tx_amplitude).unwrap();
            let y = transmit_receive(&tx.x, &h, link.rx_gain, 0.0, seed).unwrap();
            let d = decode_alamouti(&y, &h_eq, &cst).unwrap();
            prop_assert_eq!(d.bits, bits);
        }

        #[test]
        fn map_demap_round_trip(label in 0u32..64, m in prop::sample::select(vec![2usize, 4, 16, 64])) {
            let cst = Constellation::new(m).unwrap();
            let label = label % m as u32;
            let bits = cst.bits_of_label(label);
            prop_assert_eq!(cst.demap_bits(cst.map_bits(&bits).unwrap()), bits);
        }
    }
}
