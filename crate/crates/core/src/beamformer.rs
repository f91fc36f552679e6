//! Analog transmit beamformers: DFT and Hadamard baselines and the blockwise
//! phase-rotated Golden-Hadamard construction.
//!
//! Every matrix here is `2^q × 2^(q-1)` with constant-modulus entries; the
//! squared modulus of an entry is the power factor κ.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::C64;
use crate::error::{check_len, Error, Result};

/// Largest `q` accepted by the constructors (N_t = 2^q antennas).
pub const MAX_Q: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GoldenVariant {
    /// g = (1+√5)/2 with geometric root n = √5.
    Real,
    /// g = (j+√3)/2 with geometric root n = √3.
    Complex,
}

impl GoldenVariant {
    pub fn g(self) -> C64 {
        match self {
            GoldenVariant::Real => C64::new((1.0 + 5f64.sqrt()) / 2.0, 0.0),
            GoldenVariant::Complex => C64::new(3f64.sqrt() / 2.0, 0.5),
        }
    }

    pub fn n_root(self) -> f64 {
        match self {
            GoldenVariant::Real => 5f64.sqrt(),
            GoldenVariant::Complex => 3f64.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Scheme {
    DftAtb,
    HadamardAtb,
    BprAtb(GoldenVariant),
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::DftAtb,
        Scheme::HadamardAtb,
        Scheme::BprAtb(GoldenVariant::Real),
        Scheme::BprAtb(GoldenVariant::Complex),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::DftAtb => "dft",
            Scheme::HadamardAtb => "hadamard",
            Scheme::BprAtb(GoldenVariant::Real) => "bpr-real",
            Scheme::BprAtb(GoldenVariant::Complex) => "bpr-complex",
        }
    }

    pub fn is_bpr(self) -> bool {
        matches!(self, Scheme::BprAtb(_))
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dft" | "dft-atb" => Ok(Scheme::DftAtb),
            "hadamard" | "ha" | "hadamard-atb" => Ok(Scheme::HadamardAtb),
            "bpr-real" | "bpr" | "bpr-atb-real" => Ok(Scheme::BprAtb(GoldenVariant::Real)),
            "bpr-complex" | "bpr-atb-complex" => Ok(Scheme::BprAtb(GoldenVariant::Complex)),
            other => Err(Error::invalid(
                "scheme",
                format!("unknown scheme `{other}`"),
            )),
        }
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> String {
        s.name().to_string()
    }
}

impl TryFrom<String> for Scheme {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

fn check_q(q: u32) -> Result<()> {
    if q == 0 || q > MAX_Q {
        return Err(Error::invalid(
            "q",
            format!("must be in 1..={MAX_Q}, got {q}"),
        ));
    }
    Ok(())
}

/// ξ = n{(1+n)^q − (1−n)^q}/2^q.
pub fn xi(q: u32, n_root: f64) -> f64 {
    let q = q as i32;
    n_root * ((1.0 + n_root).powi(q) - (1.0 - n_root).powi(q)) / 2f64.powi(q)
}

/// Power factor κ = |F_ij|² of the scheme's beamformer with `2^q` antennas.
pub fn kappa(scheme: Scheme, q: u32) -> Result<f64> {
    check_q(q)?;
    Ok(match scheme {
        Scheme::DftAtb | Scheme::HadamardAtb => 1.0 / 2f64.powi(q as i32),
        Scheme::BprAtb(v) => v.g().norm_sqr() / xi(q, v.n_root()),
    })
}

/// ±1 Sylvester–Hadamard matrix; `order` must be a power of two.
pub fn sylvester_hadamard(order: usize) -> DMatrix<f64> {
    assert!(
        order.is_power_of_two(),
        "Hadamard order must be a power of two"
    );
    let mut h = DMatrix::from_element(1, 1, 1.0);
    while h.nrows() < order {
        let n = h.nrows();
        let mut next = DMatrix::zeros(2 * n, 2 * n);
        next.view_mut((0, 0), (n, n)).copy_from(&h);
        next.view_mut((0, n), (n, n)).copy_from(&h);
        next.view_mut((n, 0), (n, n)).copy_from(&h);
        next.view_mut((n, n), (n, n)).copy_from(&(-&h));
        h = next;
    }
    h
}

/// Diagonal phase rotations of the two blocks, in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseBlocks {
    pub phi1: Vec<f64>,
    pub phi2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingMatrix {
    pub scheme: Scheme,
    pub q: u32,
    pub f: DMatrix<C64>,
    /// Normalizer ξ; only meaningful for the BPR construction.
    pub xi: Option<f64>,
    pub kappa: f64,
    pub phase_blocks: Option<PhaseBlocks>,
}

impl BeamformingMatrix {
    pub fn n_antennas(&self) -> usize {
        self.f.nrows()
    }

    pub fn n_streams(&self) -> usize {
        self.f.ncols()
    }

    /// h_eq = F^H h.
    pub fn equivalent_channel(&self, h: &DVector<C64>) -> Result<DVector<C64>> {
        check_len("channel length", self.n_antennas(), h.len())?;
        Ok(self.f.ad_mul(h))
    }

    /// F rescaled so every entry has modulus 1/√N_t, i.e. F / √(κ·N_t).
    pub fn unit_power(&self) -> DMatrix<C64> {
        let s = (self.kappa * self.n_antennas() as f64).sqrt();
        self.f.map(|z| z / s)
    }

    /// Row-major entries as `row,col,re,im`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "col", "re", "im"])?;
        for r in 0..self.f.nrows() {
            for c in 0..self.f.ncols() {
                let z = self.f[(r, c)];
                w.write_record(&[
                    r.to_string(),
                    c.to_string(),
                    format!("{:.17e}", z.re),
                    format!("{:.17e}", z.im),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn metadata(&self) -> BeamformerMetadata {
        BeamformerMetadata {
            scheme: self.scheme,
            q: self.q,
            rows: self.f.nrows(),
            cols: self.f.ncols(),
            kappa: self.kappa,
            xi: self.xi,
            column_selection: "first 2^(q-1) columns",
            phase_blocks: self.phase_blocks.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BeamformerMetadata {
    pub scheme: Scheme,
    pub q: u32,
    pub rows: usize,
    pub cols: usize,
    pub kappa: f64,
    pub xi: Option<f64>,
    pub column_selection: &'static str,
    pub phase_blocks: Option<PhaseBlocks>,
}

/// First `2^(q-1)` columns of the unitary `2^q`-point DFT matrix.
pub fn build_dft_atb(q: u32) -> Result<BeamformingMatrix> {
    check_q(q)?;
    let n = 1usize << q;
    let scale = 1.0 / (n as f64).sqrt();
    let f = DMatrix::from_fn(n, n / 2, |m, k| {
        let angle = -2.0 * std::f64::consts::PI * ((m * k) % n) as f64 / n as f64;
        C64::from_polar(scale, angle)
    });
    Ok(BeamformingMatrix {
        scheme: Scheme::DftAtb,
        q,
        f,
        xi: None,
        kappa: kappa(Scheme::DftAtb, q)?,
        phase_blocks: None,
    })
}

/// First `2^(q-1)` columns of the Sylvester–Hadamard matrix scaled by 1/√(2^q).
pub fn build_hadamard_atb(q: u32) -> Result<BeamformingMatrix> {
    check_q(q)?;
    let n = 1usize << q;
    let h = sylvester_hadamard(n);
    let scale = 1.0 / (n as f64).sqrt();
    let f = DMatrix::from_fn(n, n / 2, |m, k| C64::new(h[(m, k)] * scale, 0.0));
    Ok(BeamformingMatrix {
        scheme: Scheme::HadamardAtb,
        q,
        f,
        xi: None,
        kappa: kappa(Scheme::HadamardAtb, q)?,
        phase_blocks: None,
    })
}

/// The full `2^q × 2^q` rotated Golden-Hadamard matrix
/// `g/√ξ · [[W·A, W·B], [W·B, −W·A]]`.
pub fn golden_hadamard_full(
    q: u32,
    variant: GoldenVariant,
    phi1: &[f64],
    phi2: &[f64],
) -> Result<DMatrix<C64>> {
    check_q(q)?;
    let half = 1usize << (q - 1);
    check_len("phi1", half, phi1.len())?;
    check_len("phi2", half, phi2.len())?;
    let w = sylvester_hadamard(half).map(|x| C64::new(x, 0.0));
    let a = DMatrix::from_diagonal(&DVector::from_iterator(
        half,
        phi1.iter().map(|&p| C64::from_polar(1.0, p)),
    ));
    let b = DMatrix::from_diagonal(&DVector::from_iterator(
        half,
        phi2.iter().map(|&p| C64::from_polar(1.0, p)),
    ));
    let wa = &w * &a;
    let wb = &w * &b;
    let mut full = DMatrix::zeros(2 * half, 2 * half);
    full.view_mut((0, 0), (half, half)).copy_from(&wa);
    full.view_mut((0, half), (half, half)).copy_from(&wb);
    full.view_mut((half, 0), (half, half)).copy_from(&wb);
    full.view_mut((half, half), (half, half)).copy_from(&(-wa));
    let scale = variant.g() / xi(q, variant.n_root()).sqrt();
    Ok(full * scale)
}

/// BPR beamformer: the first `2^(q-1)` columns of [`golden_hadamard_full`],
/// i.e. `g/√ξ · [W·A; W·B]`.
pub fn build_bpr_atb(
    q: u32,
    variant: GoldenVariant,
    phi1: &[f64],
    phi2: &[f64],
) -> Result<BeamformingMatrix> {
    let full = golden_hadamard_full(q, variant, phi1, phi2)?;
    let half = 1usize << (q - 1);
    let f = full.columns(0, half).into_owned();
    Ok(BeamformingMatrix {
        scheme: Scheme::BprAtb(variant),
        q,
        f,
        xi: Some(xi(q, variant.n_root())),
        kappa: kappa(Scheme::BprAtb(variant), q)?,
        phase_blocks: Some(PhaseBlocks {
            phi1: phi1.to_vec(),
            phi2: phi2.to_vec(),
        }),
    })
}

/// Build a baseline, or a BPR matrix with all-zero rotations.
pub fn build(scheme: Scheme, q: u32) -> Result<BeamformingMatrix> {
    match scheme {
        Scheme::DftAtb => build_dft_atb(q),
        Scheme::HadamardAtb => build_hadamard_atb(q),
        Scheme::BprAtb(v) => {
            check_q(q)?;
            let zeros = vec![0.0; 1 << (q - 1)];
            build_bpr_atb(q, v, &zeros, &zeros)
        }
    }
}
