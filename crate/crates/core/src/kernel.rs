//! Dense forward/backward passes for the rectified MLP.
//!
//! Everything is row-oriented: one input row at a time, with the inner loops
//! running across the units of a layer. The loops are plain Rust; on x86-64
//! an AVX2 copy of the same code is selected at runtime. Vectorizing across
//! units never reorders any per-unit sum, so both copies agree bit for bit.

use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub offset: usize,
}

impl Layer {
    pub fn weights(&self) -> Range<usize> {
        self.offset..self.offset + self.inputs * self.outputs
    }

    pub fn bias(&self) -> Range<usize> {
        let start = self.offset + self.inputs * self.outputs;
        start..start + self.outputs
    }
}

/// Scratch buffers reused across epochs.
#[derive(Debug, Default)]
pub(crate) struct Workspace {
    rows: usize,
    /// Transposed weights per layer, `inputs × outputs`.
    wt: Vec<Vec<f64>>,
    /// Pre-activations per layer, `rows × outputs`.
    z: Vec<Vec<f64>>,
    /// Rectified activations per hidden layer, `rows × outputs`.
    act: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
    gwt: Vec<f64>,
}

impl Workspace {
    pub fn new(layers: &[Layer], rows: usize) -> Self {
        let widest = layers
            .iter()
            .map(|l| l.outputs.max(l.inputs))
            .max()
            .unwrap_or(1);
        let big = layers
            .iter()
            .map(|l| l.inputs * l.outputs)
            .max()
            .unwrap_or(1);
        Self {
            rows,
            wt: layers
                .iter()
                .map(|l| vec![0.0; l.inputs * l.outputs])
                .collect(),
            z: layers.iter().map(|l| vec![0.0; rows * l.outputs]).collect(),
            act: layers[..layers.len() - 1]
                .iter()
                .map(|l| vec![0.0; rows * l.outputs])
                .collect(),
            delta: vec![0.0; rows * widest],
            delta_prev: vec![0.0; rows * widest],
            gwt: vec![0.0; big],
        }
    }

    /// Output scores of the last forward pass.
    pub fn scores(&self) -> &[f64] {
        self.z.last().expect("output layer")
    }
}

#[inline(always)]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline(always)]
fn forward_body(layers: &[Layer], theta: &[f64], x: &[f64], ws: &mut Workspace) {
    let n = ws.rows;
    let last = layers.len() - 1;
    for (k, layer) in layers.iter().enumerate() {
        let (nin, nout) = (layer.inputs, layer.outputs);
        let w = &theta[layer.weights()];
        let b = &theta[layer.bias()];
        let wt = &mut ws.wt[k];
        for o in 0..nout {
            for i in 0..nin {
                wt[i * nout + o] = w[o * nin + i];
            }
        }
        let (before, rest) = ws.act.split_at_mut(k.min(last));
        let input: &[f64] = if k == 0 { x } else { &before[k - 1] };
        let z = &mut ws.z[k];
        for r in 0..n {
            let zrow = &mut z[r * nout..(r + 1) * nout];
            zrow.copy_from_slice(b);
            let inrow = &input[r * nin..(r + 1) * nin];
            for (i, &s) in inrow.iter().enumerate() {
                if s != 0.0 {
                    axpy(s, &wt[i * nout..(i + 1) * nout], zrow);
                }
            }
        }
        if k < last {
            for (a, &zv) in rest[0].iter_mut().zip(z.iter()) {
                *a = zv.max(0.0);
            }
        }
    }
}

/// `grad[θ] = Σ_r c_r ∂h(x_r)/∂θ`, using activations from the preceding
/// forward pass. The rectifier derivative at zero is zero.
#[inline(always)]
fn backward_body(
    layers: &[Layer],
    theta: &[f64],
    x: &[f64],
    c: &[f64],
    ws: &mut Workspace,
    grad: &mut [f64],
) {
    let n = ws.rows;
    ws.delta[..n].copy_from_slice(c);
    for k in (0..layers.len()).rev() {
        let layer = layers[k];
        let (nin, nout) = (layer.inputs, layer.outputs);
        let input: &[f64] = if k == 0 { x } else { &ws.act[k - 1] };
        let delta = &ws.delta[..n * nout];

        let gwt = &mut ws.gwt[..nin * nout];
        gwt.iter_mut().for_each(|g| *g = 0.0);
        let gb = &mut grad[layer.bias()];
        gb.iter_mut().for_each(|g| *g = 0.0);
        for r in 0..n {
            let drow = &delta[r * nout..(r + 1) * nout];
            axpy(1.0, drow, gb);
            let inrow = &input[r * nin..(r + 1) * nin];
            for (i, &s) in inrow.iter().enumerate() {
                if s != 0.0 {
                    axpy(s, drow, &mut gwt[i * nout..(i + 1) * nout]);
                }
            }
        }
        let gw = &mut grad[layer.weights()];
        for o in 0..nout {
            for i in 0..nin {
                gw[o * nin + i] = gwt[i * nout + o];
            }
        }

        if k > 0 {
            let w = &theta[layer.weights()];
            let prev = &mut ws.delta_prev[..n * nin];
            prev.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..n {
                let prow = &mut prev[r * nin..(r + 1) * nin];
                for o in 0..nout {
                    let d = delta[r * nout + o];
                    if d != 0.0 {
                        axpy(d, &w[o * nin..(o + 1) * nin], prow);
                    }
                }
            }
            for (p, &zv) in prev.iter_mut().zip(&ws.z[k - 1]) {
                if zv <= 0.0 {
                    *p = 0.0;
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
fn forward_avx2(layers: &[Layer], theta: &[f64], x: &[f64], ws: &mut Workspace) {
    forward_body(layers, theta, x, ws)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
fn backward_avx2(
    layers: &[Layer],
    theta: &[f64],
    x: &[f64],
    c: &[f64],
    ws: &mut Workspace,
    grad: &mut [f64],
) {
    backward_body(layers, theta, x, c, ws, grad)
}

/// Forward pass over `ws.rows()` row-major inputs.
pub(crate) fn forward(layers: &[Layer], theta: &[f64], x: &[f64], ws: &mut Workspace) {
    debug_assert_eq!(x.len(), ws.rows * layers[0].inputs);
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the running CPU supports AVX2.
        unsafe { forward_avx2(layers, theta, x, ws) };
        return;
    }
    forward_body(layers, theta, x, ws)
}

pub(crate) fn backward(
    layers: &[Layer],
    theta: &[f64],
    x: &[f64],
    c: &[f64],
    ws: &mut Workspace,
    grad: &mut [f64],
) {
    debug_assert_eq!(c.len(), ws.rows);
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the running CPU supports AVX2.
        unsafe { backward_avx2(layers, theta, x, c, ws, grad) };
        return;
    }
    backward_body(layers, theta, x, c, ws, grad)
}
