//! Activation lookup tables: `q` sampled `(y, z)` points with nearest-`y` lookup.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ActivationKind;

/// Distance from the asymptote below which a saturating function counts as flat.
const SATURATION_TOLERANCE: f64 = 1e-4;
const LOW_PERCENTILE: f64 = 0.001;
const HIGH_PERCENTILE: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationLut {
    pub kind: ActivationKind,
    /// Ascending sample points; `y[0]` is A and the last entry is B.
    y: Vec<f64>,
    z: Vec<f64>,
}

impl ActivationLut {
    /// Table over explicit points, outputs computed from `kind`.
    pub fn from_points(kind: ActivationKind, mut y: Vec<f64>) -> Result<Self> {
        check_kind(kind)?;
        if y.is_empty() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("activation table needs finite points".into()));
        }
        y.sort_by(f64::total_cmp);
        y.dedup();
        let z = y.iter().map(|&v| kind.eval(v)).collect();
        Ok(Self { kind, y, z })
    }

    pub(crate) fn from_parts(kind: ActivationKind, y: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        if y.is_empty() || y.len() != z.len() || y.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("activation table points must be strictly ascending".into()));
        }
        Ok(Self { kind, y, z })
    }

    pub fn points(&self) -> &[f64] {
        &self.y
    }

    pub fn outputs(&self) -> &[f64] {
        &self.z
    }

    /// Number of stored rows (after merging coincident points).
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn lower(&self) -> f64 {
        self.y[0]
    }

    pub fn upper(&self) -> f64 {
        self.y[self.y.len() - 1]
    }

    /// Row whose point is nearest to `y`, lower row on ties.
    pub fn row(&self, y: f64) -> usize {
        let p = &self.y;
        let hi = p.partition_point(|&v| v < y);
        if hi == 0 {
            0
        } else if hi == p.len() || y - p[hi - 1] <= p[hi] - y {
            hi - 1
        } else {
            hi
        }
    }

    pub fn lookup(&self, y: f64) -> f64 {
        self.z[self.row(y)]
    }

    /// Rounds every point and output to multiples of `2^-frac_bits`, merging points that collide.
    pub fn quantized(&self, frac_bits: u32) -> Self {
        let mut y: Vec<f64> = Vec::with_capacity(self.y.len());
        let mut z = Vec::with_capacity(self.y.len());
        for (&a, &b) in self.y.iter().zip(&self.z) {
            let a = round_to_grid(a, frac_bits);
            if y.last() != Some(&a) {
                y.push(a);
                z.push(round_to_grid(b, frac_bits));
            }
        }
        Self { kind: self.kind, y, z }
    }
}

fn check_kind(kind: ActivationKind) -> Result<()> {
    if kind == ActivationKind::Softmax {
        return Err(Error::InvalidConfig("softmax is not elementwise and has no lookup table".into()));
    }
    Ok(())
}

pub(crate) fn round_to_grid(v: f64, frac_bits: u32) -> f64 {
    let s = (frac_bits as f64).exp2();
    (v * s).round() / s
}

/// Pre-activation values outside which the function is flat.
fn saturation_bounds(kind: ActivationKind) -> (f64, f64) {
    let t = SATURATION_TOLERANCE;
    match kind {
        // sigmoid(y) < t  <=>  y < ln(t / (1 - t)); symmetric above.
        ActivationKind::Sigmoid => {
            let y = (t / (1.0 - t)).ln();
            (y, -y)
        }
        // 1 - |softsign(y)| = 1 / (1 + |y|) < t  <=>  |y| > 1/t - 1.
        ActivationKind::Softsign => {
            let y = 1.0 / t - 1.0;
            (-y, y)
        }
        ActivationKind::Relu => (0.0, f64::INFINITY),
        _ => (f64::NEG_INFINITY, f64::INFINITY),
    }
}

/// Builds a `q`-row table for `kind` from observed pre-activations.
///
/// A and B are the 0.1th and 99.9th percentiles, pulled in to where the function stops
/// changing by more than 1e-4. The remaining points sit at equally spaced quantiles of the
/// observations inside `[A, B]`, so dense regions get more rows.
pub fn quantize_activation(kind: ActivationKind, q: usize, observed: &[f64]) -> Result<ActivationLut> {
    check_kind(kind)?;
    if q < 2 {
        return Err(Error::InvalidConfig(format!("activation table needs q >= 2, got {q}")));
    }
    let mut sorted: Vec<f64> = observed.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return Err(Error::InvalidConfig("no finite pre-activations to build an activation table".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let (sat_lo, sat_hi) = saturation_bounds(kind);
    let a = percentile(&sorted, LOW_PERCENTILE).max(sat_lo);
    let b = percentile(&sorted, HIGH_PERCENTILE).min(sat_hi).max(a);
    let lo = sorted.partition_point(|&v| v < a);
    let hi = sorted.partition_point(|&v| v <= b);
    let inside = &sorted[lo..hi];
    let mut points = Vec::with_capacity(q);
    points.push(a);
    if !inside.is_empty() {
        for i in 1..q - 1 {
            points.push(percentile(inside, i as f64 / (q - 1) as f64));
        }
    } else {
        // Nothing observed inside the window: fall back to uniform spacing.
        for i in 1..q - 1 {
            points.push(a + (b - a) * i as f64 / (q - 1) as f64);
        }
    }
    points.push(b);
    ActivationLut::from_points(kind, points)
}

/// Linear-interpolated percentile of sorted data, `p` in [0, 1].
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + (sorted[i + 1] - sorted[i]) * frac
    } else {
        sorted[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_zero_and_clamp() {
        let lut = ActivationLut::from_points(ActivationKind::Sigmoid, vec![-2.0, 0.0, 2.0]).unwrap();
        assert_eq!(lut.lookup(0.0), 0.5);
        assert_eq!(lut.lookup(-100.0), crate::nn::layers::sigmoid(-2.0));
        assert_eq!(lut.lookup(1.0), 0.5);
        assert_eq!(lut.row(1.0), 1);
    }

    #[test]
    fn sigmoid_bounds_are_clamped_to_saturation() {
        let obs: Vec<f64> = (-3000..=3000).map(|i| i as f64 * 0.01).collect();
        let lut = quantize_activation(ActivationKind::Sigmoid, 64, &obs).unwrap();
        assert!((lut.lower() + 9.21).abs() < 0.01, "{}", lut.lower());
        assert!((lut.upper() - 9.21).abs() < 0.01);
        assert_eq!(lut.len(), 64);
        assert!(lut.outputs().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn relu_starts_at_zero() {
        let obs: Vec<f64> = (-500..500).map(|i| i as f64 * 0.01).collect();
        let lut = quantize_activation(ActivationKind::Relu, 16, &obs).unwrap();
        assert_eq!(lut.lower(), 0.0);
        assert_eq!(lut.lookup(-3.0), 0.0);
        let b = lut.upper();
        assert!((b - 4.99).abs() < 0.01, "{b}");
    }

    #[test]
    fn constant_input_gives_single_row() {
        let lut = quantize_activation(ActivationKind::Sigmoid, 8, &[0.25; 100]).unwrap();
        assert_eq!(lut.len(), 1);
        assert_eq!(lut.lookup(7.0), crate::nn::layers::sigmoid(0.25));
    }

    #[test]
    fn dense_regions_get_more_points() {
        let mut obs: Vec<f64> = (0..900).map(|i| i as f64 * 0.001).collect();
        obs.extend((0..100).map(|i| 1.0 + i as f64 * 0.09));
        let lut = quantize_activation(ActivationKind::Softsign, 32, &obs).unwrap();
        let below_one = lut.points().iter().filter(|&&y| y < 1.0).count();
        assert!(below_one > 24, "{below_one}");
    }

    #[test]
    fn rejects_softmax_and_tiny_q() {
        assert!(quantize_activation(ActivationKind::Softmax, 8, &[1.0]).is_err());
        assert!(quantize_activation(ActivationKind::Relu, 1, &[1.0]).is_err());
    }

    #[test]
    fn quantized_points_lie_on_grid() {
        let lut = ActivationLut::from_points(ActivationKind::Sigmoid, vec![-1.0 / 3.0, 0.1, 0.1 + 1e-9]).unwrap();
        let fixed = lut.quantized(16);
        assert_eq!(fixed.len(), 2);
        for v in fixed.points().iter().chain(fixed.outputs()) {
            assert_eq!((v * 65536.0).fract(), 0.0);
        }
    }
}
