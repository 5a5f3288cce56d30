//! Batched layer kernels shared by inference and training.
//!
//! Every kernel takes a flat batch (`batch * item_len` values, row-major items)
//! and returns a flat batch. Convolution is stride 1 with no padding; pooling
//! windows do not overlap.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    Sigmoid,
    Softsign,
    Softmax,
    None,
}

impl ActivationKind {
    /// Elementwise value. Softmax is not elementwise and is handled per row by [`apply_activation`].
    pub fn eval(self, y: f64) -> f64 {
        match self {
            ActivationKind::Relu => y.max(0.0),
            ActivationKind::Sigmoid => sigmoid(y),
            ActivationKind::Softsign => y / (1.0 + y.abs()),
            ActivationKind::None | ActivationKind::Softmax => y,
        }
    }

    /// Derivative with respect to the pre-activation, given both sides of the function.
    fn derivative(self, y: f64, z: f64) -> f64 {
        match self {
            ActivationKind::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Sigmoid => z * (1.0 - z),
            ActivationKind::Softsign => {
                let d = 1.0 + y.abs();
                1.0 / (d * d)
            }
            ActivationKind::None | ActivationKind::Softmax => 1.0,
        }
    }

    /// Limits at -inf and +inf for functions that saturate on both sides.
    pub fn saturation_limits(self) -> Option<(f64, f64)> {
        match self {
            ActivationKind::Sigmoid => Some((0.0, 1.0)),
            ActivationKind::Softsign => Some((-1.0, 1.0)),
            _ => None,
        }
    }

    pub fn is_monotone(self) -> bool {
        !matches!(self, ActivationKind::Softmax)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    Max,
    Min,
    Avg,
}

pub fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

/// Applies the activation to each row of `width` values.
pub fn apply_activation(kind: ActivationKind, pre: &[f64], width: usize) -> Vec<f64> {
    match kind {
        ActivationKind::Softmax => {
            let mut out = pre.to_vec();
            for row in out.chunks_mut(width) {
                softmax_in_place(row);
            }
            out
        }
        _ => pre.iter().map(|&y| kind.eval(y)).collect(),
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Multiplies the incoming gradient by the activation derivative (not valid for softmax,
/// whose gradient is folded into the loss).
pub fn activation_backward(kind: ActivationKind, pre: &[f64], post: &[f64], grad: &mut [f64]) {
    if matches!(kind, ActivationKind::None | ActivationKind::Softmax) {
        return;
    }
    for ((g, &y), &z) in grad.iter_mut().zip(pre).zip(post) {
        *g *= kind.derivative(y, z);
    }
}

pub fn dense_forward(x: &[f64], batch: usize, fan_in: usize, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let out = bias.len();
    let x = ArrayView2::from_shape((batch, fan_in), x).expect("dense input shape");
    let w = ArrayView2::from_shape((out, fan_in), weight).expect("dense weight shape");
    let mut y = x.dot(&w.t());
    let b = ArrayView1::from(bias);
    y += &b;
    y.iter().copied().collect()
}

/// Returns (weight gradient, bias gradient, input gradient), summed over the batch.
pub fn dense_backward(
    x: &[f64],
    grad_out: &[f64],
    batch: usize,
    fan_in: usize,
    weight: &[f64],
    need_input_grad: bool,
) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
    let out = weight.len() / fan_in;
    let x = ArrayView2::from_shape((batch, fan_in), x).expect("dense input shape");
    let g = ArrayView2::from_shape((batch, out), grad_out).expect("dense grad shape");
    let w = ArrayView2::from_shape((out, fan_in), weight).expect("dense weight shape");
    let dw = g.t().dot(&x);
    let db: Array1<f64> = g.sum_axis(ndarray::Axis(0));
    let dx = need_input_grad.then(|| g.dot(&w).iter().copied().collect());
    (dw.iter().copied().collect(), db.to_vec(), dx)
}

#[derive(Debug, Clone, Copy)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        self.in_h + 1 - self.kernel
    }

    pub fn out_w(&self) -> usize {
        self.in_w + 1 - self.kernel
    }

    pub fn in_len(&self) -> usize {
        self.in_channels * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_channels * self.out_h() * self.out_w()
    }

    /// Weights feeding one output channel: `in_channels * kernel * kernel`.
    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// Calls `f(weight_offset_in_channel_slice, input_offset)` for each edge of output (oy, ox).
    #[inline]
    pub fn for_each_edge(&self, oy: usize, ox: usize, mut f: impl FnMut(usize, usize)) {
        let k = self.kernel;
        for c in 0..self.in_channels {
            for ky in 0..k {
                let row = (c * self.in_h + oy + ky) * self.in_w + ox;
                let wrow = (c * k + ky) * k;
                for kx in 0..k {
                    f(wrow + kx, row + kx);
                }
            }
        }
    }
}

pub fn conv_forward(x: &[f64], batch: usize, g: &ConvGeometry, weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let (oh, ow, fan_in) = (g.out_h(), g.out_w(), g.fan_in());
    let mut out = vec![0.0; batch * g.out_len()];
    for b in 0..batch {
        let xi = &x[b * g.in_len()..(b + 1) * g.in_len()];
        let yo = &mut out[b * g.out_len()..(b + 1) * g.out_len()];
        for m in 0..g.out_channels {
            let wm = &weight[m * fan_in..(m + 1) * fan_in];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias[m];
                    g.for_each_edge(oy, ox, |wi, xi_off| acc += wm[wi] * xi[xi_off]);
                    yo[(m * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

pub fn conv_backward(
    x: &[f64],
    grad_out: &[f64],
    batch: usize,
    g: &ConvGeometry,
    weight: &[f64],
    need_input_grad: bool,
) -> (Vec<f64>, Vec<f64>, Option<Vec<f64>>) {
    let (oh, ow, fan_in) = (g.out_h(), g.out_w(), g.fan_in());
    let mut dw = vec![0.0; weight.len()];
    let mut db = vec![0.0; g.out_channels];
    let mut dx = need_input_grad.then(|| vec![0.0; x.len()]);
    for b in 0..batch {
        let xi = &x[b * g.in_len()..(b + 1) * g.in_len()];
        let go = &grad_out[b * g.out_len()..(b + 1) * g.out_len()];
        for m in 0..g.out_channels {
            let wm = &weight[m * fan_in..(m + 1) * fan_in];
            let dwm = &mut dw[m * fan_in..(m + 1) * fan_in];
            for oy in 0..oh {
                for ox in 0..ow {
                    let d = go[(m * oh + oy) * ow + ox];
                    if d == 0.0 {
                        continue;
                    }
                    db[m] += d;
                    g.for_each_edge(oy, ox, |wi, xo| dwm[wi] += d * xi[xo]);
                    if let Some(dx) = dx.as_mut() {
                        let dxi = &mut dx[b * g.in_len()..(b + 1) * g.in_len()];
                        g.for_each_edge(oy, ox, |wi, xo| dxi[xo] += d * wm[wi]);
                    }
                }
            }
        }
    }
    (dw, db, dx)
}

#[derive(Debug, Clone, Copy)]
pub struct PoolGeometry {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub window: usize,
}

impl PoolGeometry {
    pub fn out_h(&self) -> usize {
        self.in_h / self.window
    }

    pub fn out_w(&self) -> usize {
        self.in_w / self.window
    }

    pub fn in_len(&self) -> usize {
        self.channels * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.channels * self.out_h() * self.out_w()
    }

    /// Input offsets (within one item) covered by output cell `out_index`, row-major.
    pub fn window_offsets(&self, out_index: usize) -> impl Iterator<Item = usize> + '_ {
        let (oh, ow) = (self.out_h(), self.out_w());
        let c = out_index / (oh * ow);
        let oy = (out_index / ow) % oh;
        let ox = out_index % ow;
        let p = self.window;
        (0..p).flat_map(move |dy| {
            (0..p).map(move |dx| (c * self.in_h + oy * p + dy) * self.in_w + ox * p + dx)
        })
    }
}

/// Pools each window. Returns outputs and, for max/min, the winning input offset per output.
pub fn pool_forward(x: &[f64], batch: usize, g: &PoolGeometry, mode: PoolMode) -> (Vec<f64>, Vec<usize>) {
    let mut out = Vec::with_capacity(batch * g.out_len());
    let mut arg = Vec::with_capacity(batch * g.out_len());
    let n = (g.window * g.window) as f64;
    for b in 0..batch {
        let xi = &x[b * g.in_len()..(b + 1) * g.in_len()];
        for o in 0..g.out_len() {
            let mut offsets = g.window_offsets(o);
            let first = offsets.next().expect("non-empty window");
            match mode {
                PoolMode::Avg => {
                    let sum: f64 = xi[first] + offsets.map(|i| xi[i]).sum::<f64>();
                    out.push(sum / n);
                    arg.push(first);
                }
                PoolMode::Max | PoolMode::Min => {
                    let mut best = first;
                    for i in offsets {
                        let better = match mode {
                            PoolMode::Max => xi[i] > xi[best],
                            _ => xi[i] < xi[best],
                        };
                        if better {
                            best = i;
                        }
                    }
                    out.push(xi[best]);
                    arg.push(best);
                }
            }
        }
    }
    (out, arg)
}

pub fn pool_backward(grad_out: &[f64], arg: &[usize], batch: usize, g: &PoolGeometry, mode: PoolMode) -> Vec<f64> {
    let mut dx = vec![0.0; batch * g.in_len()];
    let n = (g.window * g.window) as f64;
    for b in 0..batch {
        let dxi = &mut dx[b * g.in_len()..(b + 1) * g.in_len()];
        for o in 0..g.out_len() {
            let d = grad_out[b * g.out_len() + o];
            match mode {
                PoolMode::Avg => {
                    for i in g.window_offsets(o) {
                        dxi[i] += d / n;
                    }
                }
                _ => dxi[arg[b * g.out_len() + o]] += d,
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_pool_two_by_two() {
        let g = PoolGeometry {
            channels: 1,
            in_h: 2,
            in_w: 2,
            window: 2,
        };
        let (out, _) = pool_forward(&[1.0, 5.0, 2.0, 3.0], 1, &g, PoolMode::Max);
        assert_eq!(out, vec![5.0]);
        let (out, _) = pool_forward(&[1.0, 5.0, 2.0, 3.0], 1, &g, PoolMode::Min);
        assert_eq!(out, vec![1.0]);
        let (out, _) = pool_forward(&[1.0, 5.0, 2.0, 3.0], 1, &g, PoolMode::Avg);
        assert_eq!(out, vec![2.75]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let z = apply_activation(ActivationKind::Softmax, &[1.0, 2.0, 3.0, -50.0, 0.0, 700.0], 3);
        for row in z.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_matches_hand_computation() {
        // 1 channel 3x3 input, 2x2 kernel of ones, bias 0.5 -> 2x2 window sums + 0.5.
        let g = ConvGeometry {
            in_channels: 1,
            in_h: 3,
            in_w: 3,
            out_channels: 1,
            kernel: 2,
        };
        let x: Vec<f64> = (1..=9).map(f64::from).collect();
        let y = conv_forward(&x, 1, &g, &[1.0; 4], &[0.5]);
        assert_eq!(y, vec![12.5, 16.5, 24.5, 28.5]);
    }

    #[test]
    fn conv_gradient_matches_finite_differences() {
        let g = ConvGeometry {
            in_channels: 2,
            in_h: 4,
            in_w: 3,
            out_channels: 2,
            kernel: 2,
        };
        let x: Vec<f64> = (0..g.in_len()).map(|i| ((i * 7) % 11) as f64 / 10.0 - 0.4).collect();
        let w: Vec<f64> = (0..2 * g.fan_in()).map(|i| ((i * 5) % 13) as f64 / 13.0 - 0.5).collect();
        let b = vec![0.1, -0.2];
        // loss = sum(y^2)/2, so dL/dy = y
        let loss = |w: &[f64], x: &[f64]| conv_forward(x, 1, &g, w, &b).iter().map(|v| v * v / 2.0).sum::<f64>();
        let y = conv_forward(&x, 1, &g, &w, &b);
        let (dw, _, dx) = conv_backward(&x, &y, 1, &g, &w, true);
        let h = 1e-6;
        for i in 0..w.len() {
            let mut wp = w.clone();
            wp[i] += h;
            let mut wm = w.clone();
            wm[i] -= h;
            let fd = (loss(&wp, &x) - loss(&wm, &x)) / (2.0 * h);
            assert!((fd - dw[i]).abs() < 1e-6, "dw[{i}]: {fd} vs {}", dw[i]);
        }
        let dx = dx.unwrap();
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (loss(&w, &xp) - loss(&w, &xm)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-6, "dx[{i}]");
        }
    }
}
