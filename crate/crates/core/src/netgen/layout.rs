use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from, stream};

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Deployment parameters for one family of layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub num_pairs: usize,
    pub area: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub seed: u64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            num_pairs: 50,
            area: 500.0,
            d_min: 2.0,
            d_max: 65.0,
            seed: 0,
        }
    }
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_pairs == 0 {
            return Err(Error::Config("number of pairs must be at least 1".into()));
        }
        let finite = self.area.is_finite() && self.d_min.is_finite() && self.d_max.is_finite();
        if !finite || !(0.0 < self.d_min && self.d_min <= self.d_max && self.d_max <= self.area) {
            return Err(Error::Config(format!(
                "need 0 < d_min <= d_max <= d_area, got d_min={}, d_max={}, d_area={}",
                self.d_min, self.d_max, self.area
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Transmitter/receiver placement of a single D2D deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkLayout {
    pub tx: Vec<Point>,
    pub rx: Vec<Point>,
    pub config: LayoutConfig,
    pub weights: Vec<f64>,
}

impl NetworkLayout {
    /// Builds a layout from explicit coordinates, checking the pair-distance bounds.
    pub fn from_positions(config: LayoutConfig, tx: Vec<Point>, rx: Vec<Point>) -> Result<Self> {
        config.validate()?;
        if tx.len() != config.num_pairs || rx.len() != config.num_pairs {
            return Err(Error::Input(format!(
                "expected {} transmitters and receivers, got {} and {}",
                config.num_pairs,
                tx.len(),
                rx.len()
            )));
        }
        // Stored coordinates are rounded to f64, so allow a hair of slack.
        let slack = 1e-9 * config.d_max.max(1.0);
        for (l, (t, r)) in tx.iter().zip(&rx).enumerate() {
            let d = t.dist(r);
            if !(d >= config.d_min - slack && d <= config.d_max + slack) {
                return Err(Error::Input(format!(
                    "pair {l} has length {d} outside [{}, {}]",
                    config.d_min, config.d_max
                )));
            }
        }
        let weights = vec![1.0; config.num_pairs];
        Ok(Self { tx, rx, config, weights })
    }

    pub fn num_pairs(&self) -> usize {
        self.tx.len()
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Length of the direct link of pair `l`.
    pub fn pair_distance(&self, l: usize) -> f64 {
        self.tx[l].dist(&self.rx[l])
    }

    /// Distance from transmitter `k` to receiver `l`.
    pub fn cross_distance(&self, k: usize, l: usize) -> f64 {
        self.tx[k].dist(&self.rx[l])
    }

    /// Relabels pairs so that new pair `i` is old pair `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            tx: perm.iter().map(|&p| self.tx[p]).collect(),
            rx: perm.iter().map(|&p| self.rx[p]).collect(),
            config: self.config.clone(),
            weights: perm.iter().map(|&p| self.weights[p]).collect(),
        }
    }

    /// Seed of the channel realisation that belongs to this layout.
    pub fn channel_seed(&self) -> u64 {
        derive_seed(self.config.seed, stream::CHANNEL)
    }
}

/// Draws a layout: transmitters uniform on the square, receivers at a uniform
/// distance in `[d_min, d_max]` and uniform bearing around their transmitter.
pub fn generate_layout(config: &LayoutConfig) -> Result<NetworkLayout> {
    config.validate()?;
    let mut rng = rng_from(derive_seed(config.seed, stream::LAYOUT));
    let n = config.num_pairs;
    let mut tx = Vec::with_capacity(n);
    let mut rx = Vec::with_capacity(n);
    for _ in 0..n {
        let t = Point::new(config.area * rng.random::<f64>(), config.area * rng.random::<f64>());
        let d = config.d_min + (config.d_max - config.d_min) * rng.random::<f64>();
        let angle = std::f64::consts::TAU * rng.random::<f64>();
        tx.push(t);
        rx.push(Point::new(t.x + d * angle.cos(), t.y + d * angle.sin()));
    }
    Ok(NetworkLayout {
        tx,
        rx,
        config: config.clone(),
        weights: vec![1.0; n],
    })
}

/// Generates `count` layouts whose seeds are derived from `base.seed`.
pub fn generate_layouts(base: &LayoutConfig, count: usize) -> Result<Vec<NetworkLayout>> {
    base.validate()?;
    (0..count)
        .map(|i| generate_layout(&base.with_seed(derive_seed(base.seed, 1_000 + i as u64))))
        .collect()
}
