//! Narrow-band MISO channels: the sparse geometric mmWave model and an i.i.d.
//! Rayleigh baseline. Both are generated deterministically from a seed.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Complex, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::rng::rng_from_seed;

pub type C64 = Complex<f64>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Uniform linear array geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringConfig {
    pub carrier_frequency_hz: f64,
    /// Element spacing d expressed in wavelengths (d/λ).
    pub spacing_over_wavelength: f64,
}

impl Default for SteeringConfig {
    fn default() -> Self {
        Self {
            carrier_frequency_hz: 60e9,
            spacing_over_wavelength: 0.5,
        }
    }
}

impl SteeringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_frequency_hz.is_finite() && self.carrier_frequency_hz > 0.0) {
            return Err(Error::invalid("carrier_frequency_hz", "must be positive"));
        }
        if !(self.spacing_over_wavelength.is_finite() && self.spacing_over_wavelength > 0.0) {
            return Err(Error::invalid(
                "spacing_over_wavelength",
                "must be positive",
            ));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    pub fn spacing(&self) -> f64 {
        self.spacing_over_wavelength * self.wavelength()
    }
}

/// Complex gains and departure angles of the propagation paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    gains: Vec<C64>,
    angles: Vec<f64>,
}

impl PathSet {
    pub fn new(gains: Vec<C64>, angles: Vec<f64>) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::invalid("paths", "need at least one path"));
        }
        check_len("path angles", gains.len(), angles.len())?;
        if let Some(bad) = angles
            .iter()
            .find(|a| !(a.is_finite() && (-FRAC_PI_2..=FRAC_PI_2).contains(*a)))
        {
            return Err(Error::invalid(
                "angles",
                format!("{bad} outside [-pi/2, pi/2]"),
            ));
        }
        Ok(Self { gains, angles })
    }

    pub fn gains(&self) -> &[C64] {
        &self.gains
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    /// h = Σ_l α_l a(θ_l).
    pub fn synthesize(&self, n_antennas: usize, cfg: &SteeringConfig) -> Result<DVector<C64>> {
        let mut h = DVector::zeros(n_antennas);
        for (&alpha, &theta) in self.gains.iter().zip(&self.angles) {
            h += steering_vector(theta, n_antennas, cfg)? * alpha;
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ChannelOrigin {
    MmWaveGeometric(PathSet),
    RayleighIid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: DVector<C64>,
    pub origin: ChannelOrigin,
    pub seed: u64,
}

impl ChannelRealization {
    pub fn n_antennas(&self) -> usize {
        self.h.len()
    }

    pub fn paths(&self) -> Option<&PathSet> {
        match &self.origin {
            ChannelOrigin::MmWaveGeometric(p) => Some(p),
            ChannelOrigin::RayleighIid => None,
        }
    }
}

/// ULA response toward `theta`: element m is exp(j·2π·(d/λ)·m·sin θ).
pub fn steering_vector(
    theta: f64,
    n_antennas: usize,
    cfg: &SteeringConfig,
) -> Result<DVector<C64>> {
    if !theta.is_finite() {
        return Err(Error::invalid("theta", "must be finite"));
    }
    if n_antennas == 0 {
        return Err(Error::invalid("n_antennas", "must be at least 1"));
    }
    let step = 2.0 * PI * cfg.spacing_over_wavelength * theta.sin();
    Ok(DVector::from_iterator(
        n_antennas,
        (0..n_antennas).map(|m| C64::from_polar(1.0, step * m as f64)),
    ))
}

/// One CN(0, 1) draw.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn sample_paths<R: Rng + ?Sized>(n_paths: usize, rng: &mut R) -> Result<PathSet> {
    if n_paths == 0 {
        return Err(Error::invalid("n_paths", "must be at least 1"));
    }
    let mut gains = Vec::with_capacity(n_paths);
    let mut angles = Vec::with_capacity(n_paths);
    for _ in 0..n_paths {
        gains.push(complex_normal(rng));
        angles.push(rng.random_range(-FRAC_PI_2..=FRAC_PI_2));
    }
    PathSet::new(gains, angles)
}

/// Draw a sparse geometric channel with `n_paths` CN(0,1) gains and angles
/// uniform on [−π/2, π/2].
pub fn sample_mmwave_channel(
    n_paths: usize,
    n_antennas: usize,
    cfg: &SteeringConfig,
    seed: u64,
) -> Result<ChannelRealization> {
    cfg.validate()?;
    let mut rng = rng_from_seed(seed);
    let paths = sample_paths(n_paths, &mut rng)?;
    let h = paths.synthesize(n_antennas, cfg)?;
    Ok(ChannelRealization {
        h,
        origin: ChannelOrigin::MmWaveGeometric(paths),
        seed,
    })
}

/// Build a geometric channel from explicit paths.
pub fn mmwave_channel_from_paths(
    paths: PathSet,
    n_antennas: usize,
    cfg: &SteeringConfig,
    seed: u64,
) -> Result<ChannelRealization> {
    let h = paths.synthesize(n_antennas, cfg)?;
    Ok(ChannelRealization {
        h,
        origin: ChannelOrigin::MmWaveGeometric(paths),
        seed,
    })
}

pub fn sample_rayleigh_channel(n_antennas: usize, seed: u64) -> Result<ChannelRealization> {
    if n_antennas == 0 {
        return Err(Error::invalid("n_antennas", "must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let h = DVector::from_iterator(
        n_antennas,
        (0..n_antennas).map(|_| complex_normal(&mut rng)),
    );
    Ok(ChannelRealization {
        h,
        origin: ChannelOrigin::RayleighIid,
        seed,
    })
}
