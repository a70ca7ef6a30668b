//! Stacked GRU with a linear head, forward and backward passes.
//!
//! Gate layout along the `3H` axis is `[update | reset | candidate]`, with the
//! reset gate applied to the recurrent candidate term after its bias.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureDescriptor {
    pub input_width: usize,
    pub hidden_width: usize,
    pub layers: usize,
    pub output_width: usize,
}

impl ArchitectureDescriptor {
    pub fn new(hidden_width: usize, layers: usize) -> Self {
        Self {
            input_width: super::INPUT_WIDTH,
            hidden_width,
            layers,
            output_width: super::OUTPUT_WIDTH,
        }
    }

    pub fn parameter_count(&self) -> usize {
        let h = self.hidden_width;
        let mut n = 0;
        for l in 0..self.layers {
            let input = if l == 0 { self.input_width } else { h };
            n += input * 3 * h + h * 3 * h + 6 * h;
        }
        n + h * self.output_width + self.output_width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GruLayer {
    pub w: Array2<f32>,
    pub u: Array2<f32>,
    pub bx: Array1<f32>,
    pub bh: Array1<f32>,
}

pub(crate) struct StepCache {
    x: Array2<f32>,
    h_prev: Array2<f32>,
    z: Array2<f32>,
    r: Array2<f32>,
    n: Array2<f32>,
    ghn: Array2<f32>,
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

impl GruLayer {
    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w: Array2::zeros((input, 3 * hidden)),
            u: Array2::zeros((hidden, 3 * hidden)),
            bx: Array1::zeros(3 * hidden),
            bh: Array1::zeros(3 * hidden),
        }
    }

    fn random<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let k = 1.0 / (hidden as f32).sqrt();
        let mut layer = Self::zeros(input, hidden);
        for v in layer
            .w
            .iter_mut()
            .chain(layer.u.iter_mut())
            .chain(layer.bx.iter_mut())
            .chain(layer.bh.iter_mut())
        {
            *v = rng.random_range(-k..k);
        }
        layer
    }

    fn hidden(&self) -> usize {
        self.u.nrows()
    }

    fn step(&self, x: &Array2<f32>, h_prev: &Array2<f32>) -> (Array2<f32>, StepCache) {
        let hd = self.hidden();
        let mut gx = x.dot(&self.w);
        gx += &self.bx;
        let mut gh = h_prev.dot(&self.u);
        gh += &self.bh;
        let b = x.nrows();
        let mut z = Array2::zeros((b, hd));
        let mut r = Array2::zeros((b, hd));
        let mut n = Array2::zeros((b, hd));
        let mut h = Array2::zeros((b, hd));
        for i in 0..b {
            for j in 0..hd {
                let zz = sigmoid(gx[[i, j]] + gh[[i, j]]);
                let rr = sigmoid(gx[[i, hd + j]] + gh[[i, hd + j]]);
                let nn = (gx[[i, 2 * hd + j]] + rr * gh[[i, 2 * hd + j]]).tanh();
                z[[i, j]] = zz;
                r[[i, j]] = rr;
                n[[i, j]] = nn;
                h[[i, j]] = (1.0 - zz) * nn + zz * h_prev[[i, j]];
            }
        }
        let ghn = gh.slice(s![.., 2 * hd..]).to_owned();
        let cache = StepCache {
            x: x.clone(),
            h_prev: h_prev.clone(),
            z,
            r,
            n,
            ghn,
        };
        (h, cache)
    }

    /// Returns `(dL/dx, dL/dh_prev)` and accumulates parameter gradients.
    fn step_backward(
        &self,
        c: &StepCache,
        dh: &Array2<f32>,
        grads: &mut GruLayer,
    ) -> (Array2<f32>, Array2<f32>) {
        let hd = self.hidden();
        let b = dh.nrows();
        let mut dgx = Array2::zeros((b, 3 * hd));
        let mut dgh = Array2::zeros((b, 3 * hd));
        let mut dh_prev = Array2::zeros((b, hd));
        for i in 0..b {
            for j in 0..hd {
                let g = dh[[i, j]];
                let (z, r, n) = (c.z[[i, j]], c.r[[i, j]], c.n[[i, j]]);
                let dn = g * (1.0 - z);
                let dz = g * (c.h_prev[[i, j]] - n);
                dh_prev[[i, j]] = g * z;
                let da_n = dn * (1.0 - n * n);
                let dr = da_n * c.ghn[[i, j]];
                let da_r = dr * r * (1.0 - r);
                let da_z = dz * z * (1.0 - z);
                dgx[[i, j]] = da_z;
                dgx[[i, hd + j]] = da_r;
                dgx[[i, 2 * hd + j]] = da_n;
                dgh[[i, j]] = da_z;
                dgh[[i, hd + j]] = da_r;
                dgh[[i, 2 * hd + j]] = da_n * r;
            }
        }
        general_mat_mul(1.0, &c.x.t(), &dgx, 1.0, &mut grads.w);
        general_mat_mul(1.0, &c.h_prev.t(), &dgh, 1.0, &mut grads.u);
        grads.bx += &dgx.sum_axis(Axis(0));
        grads.bh += &dgh.sum_axis(Axis(0));
        let dx = dgx.dot(&self.w.t());
        general_mat_mul(1.0, &dgh, &self.u.t(), 1.0, &mut dh_prev);
        (dx, dh_prev)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GruNetwork {
    pub descriptor: ArchitectureDescriptor,
    pub layers: Vec<GruLayer>,
    pub head_w: Array2<f32>,
    pub head_b: Array1<f32>,
}

/// Activations kept for backpropagation through time.
pub(crate) struct ForwardTrace {
    caches: Vec<Vec<StepCache>>,
    tops: Vec<Array2<f32>>,
    pub outputs: Vec<Array2<f32>>,
}

impl GruNetwork {
    pub fn zeros(descriptor: ArchitectureDescriptor) -> Self {
        let h = descriptor.hidden_width;
        let layers = (0..descriptor.layers)
            .map(|l| {
                let input = if l == 0 { descriptor.input_width } else { h };
                GruLayer::zeros(input, h)
            })
            .collect();
        Self {
            descriptor,
            layers,
            head_w: Array2::zeros((h, descriptor.output_width)),
            head_b: Array1::zeros(descriptor.output_width),
        }
    }

    pub fn random<R: Rng>(descriptor: ArchitectureDescriptor, rng: &mut R) -> Self {
        let h = descriptor.hidden_width;
        let layers = (0..descriptor.layers)
            .map(|l| {
                let input = if l == 0 { descriptor.input_width } else { h };
                GruLayer::random(input, h, rng)
            })
            .collect();
        let k = 1.0 / (h as f32).sqrt();
        let mut net = Self {
            descriptor,
            layers,
            head_w: Array2::zeros((h, descriptor.output_width)),
            head_b: Array1::zeros(descriptor.output_width),
        };
        for v in net.head_w.iter_mut().chain(net.head_b.iter_mut()) {
            *v = rng.random_range(-k..k);
        }
        net
    }

    /// Parameter buffers in serialization order.
    pub fn parameters(&self) -> Vec<&[f32]> {
        let mut out: Vec<&[f32]> = Vec::new();
        for l in &self.layers {
            out.push(l.w.as_slice().expect("standard layout"));
            out.push(l.u.as_slice().expect("standard layout"));
            out.push(l.bx.as_slice().expect("standard layout"));
            out.push(l.bh.as_slice().expect("standard layout"));
        }
        out.push(self.head_w.as_slice().expect("standard layout"));
        out.push(self.head_b.as_slice().expect("standard layout"));
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f32]> {
        let mut out: Vec<&mut [f32]> = Vec::new();
        for l in &mut self.layers {
            out.push(l.w.as_slice_mut().expect("standard layout"));
            out.push(l.u.as_slice_mut().expect("standard layout"));
            out.push(l.bx.as_slice_mut().expect("standard layout"));
            out.push(l.bh.as_slice_mut().expect("standard layout"));
        }
        out.push(self.head_w.as_slice_mut().expect("standard layout"));
        out.push(self.head_b.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn fill_zero(&mut self) {
        for p in self.parameters_mut() {
            p.fill(0.0);
        }
    }

    /// Runs a batch of sequences; `xs[t]` is the `(B, input)` slab at step `t`.
    pub fn forward(&self, xs: &[Array2<f32>]) -> ForwardTrace {
        let b = xs.first().map_or(0, |x| x.nrows());
        let h = self.descriptor.hidden_width;
        let mut state: Vec<Array2<f32>> = vec![Array2::zeros((b, h)); self.layers.len()];
        let mut caches: Vec<Vec<StepCache>> = (0..self.layers.len()).map(|_| Vec::new()).collect();
        let mut tops = Vec::with_capacity(xs.len());
        let mut outputs = Vec::with_capacity(xs.len());
        for x in xs {
            let mut input = x.clone();
            for (l, layer) in self.layers.iter().enumerate() {
                let (h_new, cache) = layer.step(&input, &state[l]);
                caches[l].push(cache);
                state[l] = h_new.clone();
                input = h_new;
            }
            let mut y = input.dot(&self.head_w);
            y += &self.head_b;
            tops.push(input);
            outputs.push(y);
        }
        ForwardTrace {
            caches,
            tops,
            outputs,
        }
    }

    /// Accumulates gradients into `grads` given `dL/dy_t` for every step.
    pub fn backward(&self, trace: &ForwardTrace, dys: &[Array2<f32>], grads: &mut GruNetwork) {
        let steps = dys.len();
        let b = dys.first().map_or(0, |d| d.nrows());
        let h = self.descriptor.hidden_width;
        let mut carry: Vec<Array2<f32>> = vec![Array2::zeros((b, h)); self.layers.len()];
        for t in (0..steps).rev() {
            general_mat_mul(1.0, &trace.tops[t].t(), &dys[t], 1.0, &mut grads.head_w);
            grads.head_b += &dys[t].sum_axis(Axis(0));
            let mut dh = dys[t].dot(&self.head_w.t());
            for l in (0..self.layers.len()).rev() {
                dh += &carry[l];
                let (dx, dh_prev) =
                    self.layers[l].step_backward(&trace.caches[l][t], &dh, &mut grads.layers[l]);
                carry[l] = dh_prev;
                dh = dx;
            }
        }
    }

    /// Single-sequence inference; one output row per input frame.
    pub fn predict(&self, frames: &[[f32; super::INPUT_WIDTH]]) -> Vec<[f32; 3]> {
        let h = self.descriptor.hidden_width;
        let mut state: Vec<Array2<f32>> = vec![Array2::zeros((1, h)); self.layers.len()];
        let mut out = Vec::with_capacity(frames.len());
        for f in frames {
            let mut input = Array2::from_shape_vec((1, f.len()), f.to_vec()).expect("row shape");
            for (l, layer) in self.layers.iter().enumerate() {
                let (h_new, _) = layer.step(&input, &state[l]);
                state[l] = h_new.clone();
                input = h_new;
            }
            let mut y = input.dot(&self.head_w);
            y += &self.head_b;
            out.push([y[[0, 0]], y[[0, 1]], y[[0, 2]]]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> ArchitectureDescriptor {
        ArchitectureDescriptor {
            input_width: 4,
            hidden_width: 5,
            layers: 2,
            output_width: 3,
        }
    }

    fn loss(net: &GruNetwork, xs: &[Array2<f32>], targets: &[Array2<f32>]) -> f64 {
        let trace = net.forward(xs);
        trace
            .outputs
            .iter()
            .zip(targets)
            .map(|(y, t)| (y - t).mapv(|d| f64::from(d) * f64::from(d)).sum() * 0.5)
            .sum()
    }

    // Central finite differences of the loss against the analytic gradient.
    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = GruNetwork::random(tiny(), &mut rng);
        let xs: Vec<Array2<f32>> = (0..4)
            .map(|_| Array2::from_shape_fn((2, 4), |_| rng.random_range(-1.0..1.0)))
            .collect();
        let targets: Vec<Array2<f32>> = (0..4)
            .map(|_| Array2::from_shape_fn((2, 3), |_| rng.random_range(-1.0..1.0)))
            .collect();
        let trace = net.forward(&xs);
        let dys: Vec<_> = trace.outputs.iter().zip(&targets).map(|(y, t)| y - t).collect();
        let mut grads = GruNetwork::zeros(tiny());
        net.backward(&trace, &dys, &mut grads);

        let analytic: Vec<f32> = grads.parameters().concat();
        let n = analytic.len();
        assert_eq!(n, tiny().parameter_count());
        let eps = 1e-2f32;
        let mut worst = 0.0f64;
        for idx in (0..n).step_by(7) {
            let mut plus = net.clone();
            let mut minus = net.clone();
            set_param(&mut plus, idx, eps);
            set_param(&mut minus, idx, -eps);
            let numeric = (loss(&plus, &xs, &targets) - loss(&minus, &xs, &targets)) / (2.0 * f64::from(eps));
            let err = (numeric - f64::from(analytic[idx])).abs() / (1e-3 + numeric.abs());
            worst = worst.max(err);
        }
        assert!(worst < 2e-2, "worst relative gradient error {worst}");
    }

    fn set_param(net: &mut GruNetwork, mut idx: usize, delta: f32) {
        for p in net.parameters_mut() {
            if idx < p.len() {
                p[idx] += delta;
                return;
            }
            idx -= p.len();
        }
    }

    #[test]
    fn predict_matches_batched_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = ArchitectureDescriptor::new(8, 2);
        let net = GruNetwork::random(d, &mut rng);
        let frames: Vec<[f32; 45]> = (0..6)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
            .collect();
        let single = net.predict(&frames);
        let xs: Vec<_> = frames
            .iter()
            .map(|f| Array2::from_shape_vec((1, 45), f.to_vec()).unwrap())
            .collect();
        let batched = net.forward(&xs).outputs;
        for (a, b) in single.iter().zip(&batched) {
            for c in 0..3 {
                assert!((a[c] - b[[0, c]]).abs() < 1e-6);
            }
        }
    }
}
