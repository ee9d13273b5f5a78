use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layout::NetworkLayout;
use crate::error::{Error, Result};
use crate::seed::rng_from;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Distances below this are evaluated as if they were exactly this long.
pub const MIN_DISTANCE: f64 = 1.0;

/// Radio parameters shared by every link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// dBm/Hz
    pub noise_psd: f64,
    /// Hz
    pub bandwidth: f64,
    /// Hz
    pub carrier_freq: f64,
    /// meters, used for both ends of a link
    pub antenna_height: f64,
    /// dBm
    pub tx_power: f64,
    /// dB, zero disables shadowing
    pub shadowing_std: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            noise_psd: -169.0,
            bandwidth: 5e6,
            carrier_freq: 2.4e9,
            antenna_height: 1.5,
            tx_power: 40.0,
            shadowing_std: 0.0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.carrier_freq > 0.0 && self.antenna_height > 0.0) {
            return Err(Error::Config(
                "bandwidth, carrier frequency and antenna height must be positive".into(),
            ));
        }
        if !(self.shadowing_std >= 0.0) || !self.noise_psd.is_finite() || !self.tx_power.is_finite() {
            return Err(Error::Config("invalid noise, power or shadowing parameters".into()));
        }
        Ok(())
    }

    pub fn with_shadowing(&self, std_db: f64) -> Self {
        Self { shadowing_std: std_db, ..self.clone() }
    }

    /// Noise power over the full band in watts.
    pub fn noise_power(&self) -> f64 {
        10f64.powf((self.noise_psd - 30.0) / 10.0) * self.bandwidth
    }

    pub fn tx_power_watts(&self) -> f64 {
        10f64.powf((self.tx_power - 30.0) / 10.0)
    }

    /// Median line-of-sight path loss in dB at distance `d` meters: the
    /// midpoint between the lower and upper two-slope bounds around the
    /// breakpoint distance.
    pub fn path_loss_db(&self, d: f64) -> f64 {
        let d = d.max(MIN_DISTANCE);
        let wavelength = SPEED_OF_LIGHT / self.carrier_freq;
        let h = self.antenna_height;
        let breakpoint = 4.0 * h * h / wavelength;
        let basic = (20.0 * (wavelength * wavelength / (8.0 * std::f64::consts::PI * h * h)).log10()).abs();
        let slope = if d <= breakpoint { 20.0 } else { 40.0 };
        basic + 6.0 + slope * (d / breakpoint).log10()
    }

    /// Linear power gain (no shadowing) at distance `d`.
    pub fn path_gain(&self, d: f64) -> f64 {
        10f64.powf(-self.path_loss_db(d) / 10.0)
    }
}

/// Link gains and constants needed to evaluate rates for one layout.
///
/// `gain` is row-major: entry `(k, l)` is the power gain from transmitter `k`
/// to receiver `l`, so the diagonal holds the direct links.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub num_links: usize,
    pub gain: Vec<f64>,
    pub noise_power: f64,
    pub tx_power: f64,
    pub bandwidth: f64,
    pub weights: Vec<f64>,
}

impl ChannelMatrix {
    /// Builds a matrix from explicit gains, mostly useful for hand-made instances.
    pub fn from_gains(num_links: usize, gain: Vec<f64>, noise_power: f64, tx_power: f64, bandwidth: f64) -> Result<Self> {
        if gain.len() != num_links * num_links {
            return Err(Error::Shape(format!(
                "gain matrix has {} entries, expected {}",
                gain.len(),
                num_links * num_links
            )));
        }
        if gain.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::Input("gains must be positive and finite".into()));
        }
        Ok(Self {
            num_links,
            gain,
            noise_power,
            tx_power,
            bandwidth,
            weights: vec![1.0; num_links],
        })
    }

    #[inline]
    pub fn gain(&self, from_tx: usize, to_rx: usize) -> f64 {
        self.gain[from_tx * self.num_links + to_rx]
    }

    #[inline]
    pub fn direct(&self, l: usize) -> f64 {
        self.gain[l * self.num_links + l]
    }

    /// Relabels links so that new link `i` is old link `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.num_links;
        let mut gain = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                gain[i * n + j] = self.gain(perm[i], perm[j]);
            }
        }
        Self {
            gain,
            weights: perm.iter().map(|&p| self.weights[p]).collect(),
            ..self.clone()
        }
    }
}

/// Evaluates every transmitter-to-receiver gain of `layout`.
///
/// With a positive shadowing deviation each directed link receives an
/// independent log-normal factor drawn from a generator seeded by `seed`.
pub fn compute_channel(layout: &NetworkLayout, cfg: &ChannelConfig, seed: u64) -> Result<ChannelMatrix> {
    cfg.validate()?;
    let n = layout.num_pairs();
    let mut gain = Vec::with_capacity(n * n);
    for k in 0..n {
        for l in 0..n {
            gain.push(cfg.path_gain(layout.cross_distance(k, l)));
        }
    }
    if cfg.shadowing_std > 0.0 {
        let normal = Normal::new(0.0, cfg.shadowing_std)
            .map_err(|e| Error::Config(format!("shadowing distribution: {e}")))?;
        let mut rng = rng_from(seed);
        for g in gain.iter_mut() {
            *g *= 10f64.powf(normal.sample(&mut rng) / 10.0);
        }
    }
    Ok(ChannelMatrix {
        num_links: n,
        gain,
        noise_power: cfg.noise_power(),
        tx_power: cfg.tx_power_watts(),
        bandwidth: cfg.bandwidth,
        weights: layout.weights.clone(),
    })
}

/// Channel for a layout using the layout's own channel seed.
pub fn layout_channel(layout: &NetworkLayout, cfg: &ChannelConfig) -> Result<ChannelMatrix> {
    compute_channel(layout, cfg, layout.channel_seed())
}
