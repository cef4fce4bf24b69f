//! Fully connected tanh network over a flat parameter vector.
//!
//! Layout per layer: weights `W` of shape `(in, out)` stored row-major, then
//! the bias of length `out`. Hidden layers use `tanh`, the output is linear.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
}

/// Activations kept from a forward pass: `layers[0]` is the input batch,
/// `layers[i]` the post-activation output of layer `i`.
#[derive(Debug, Clone)]
pub struct Cache {
    layers: Vec<Array2<f64>>,
}

impl Cache {
    pub fn output(&self) -> &Array2<f64> {
        self.layers.last().expect("cache always holds the input")
    }
}

impl Mlp {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&n| n == 0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Mlp { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn layer_offsets(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.sizes.windows(2).map(move |w| {
            let start = offset;
            offset += w[0] * w[1] + w[1];
            (start, w[0], w[1])
        })
    }

    fn views<'a>(&self, params: &'a [f64]) -> Vec<(ArrayView2<'a, f64>, ArrayView1<'a, f64>)> {
        self.layer_offsets()
            .map(|(off, i, o)| {
                let w = ArrayView2::from_shape((i, o), &params[off..off + i * o]).unwrap();
                let b = ArrayView1::from(&params[off + i * o..off + i * o + o]);
                (w, b)
            })
            .collect()
    }

    /// Orthogonal initialization: each weight matrix has orthonormal rows or
    /// columns scaled by `gain`; the last layer uses `output_gain`. Biases
    /// start at zero.
    pub fn init(&self, rng: &mut impl Rng, gain: f64, output_gain: f64) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count()];
        let n_layers = self.sizes.len() - 1;
        for (l, (off, i, o)) in self.layer_offsets().enumerate() {
            let g = if l + 1 == n_layers { output_gain } else { gain };
            let q = orthogonal(rng, i, o);
            for (k, v) in q.iter().enumerate() {
                params[off + k] = g * v;
            }
        }
        params
    }

    pub fn forward(&self, params: &[f64], input: ArrayView2<f64>) -> Cache {
        debug_assert_eq!(params.len(), self.param_count());
        let views = self.views(params);
        let mut layers = Vec::with_capacity(views.len() + 1);
        layers.push(input.to_owned());
        let last = views.len() - 1;
        for (l, (w, b)) in views.iter().enumerate() {
            let mut h = layers[l].dot(w);
            h += b;
            if l != last {
                h.mapv_inplace(f64::tanh);
            }
            layers.push(h);
        }
        Cache { layers }
    }

    /// Reverse pass: gradient of `Σ grad_out ⊙ output` with respect to the
    /// parameters.
    pub fn backward(&self, params: &[f64], cache: &Cache, grad_out: ArrayView2<f64>) -> Vec<f64> {
        let views = self.views(params);
        let mut grad = vec![0.0; self.param_count()];
        let offsets: Vec<_> = self.layer_offsets().collect();
        let mut delta = grad_out.to_owned();
        for l in (0..views.len()).rev() {
            let (off, i, o) = offsets[l];
            let x = &cache.layers[l];
            let gw = x.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            for (dst, v) in grad[off..off + i * o].iter_mut().zip(gw.iter()) {
                *dst = *v;
            }
            for (dst, v) in grad[off + i * o..off + i * o + o].iter_mut().zip(gb.iter()) {
                *dst = *v;
            }
            if l > 0 {
                let mut d = delta.dot(&views[l].0.t());
                d.zip_mut_with(x, |d, &a| *d *= 1.0 - a * a);
                delta = d;
            }
        }
        grad
    }

    /// Forward-mode directional derivative of the output along parameter
    /// direction `v`.
    pub fn jvp(&self, params: &[f64], cache: &Cache, v: &[f64]) -> Array2<f64> {
        let views = self.views(params);
        let dviews = self.views(v);
        let n = cache.layers[0].nrows();
        let mut dx = Array2::<f64>::zeros((n, self.sizes[0]));
        let last = views.len() - 1;
        for l in 0..views.len() {
            let (w, _) = &views[l];
            let (dw, db) = &dviews[l];
            let mut dh = dx.dot(w) + cache.layers[l].dot(dw);
            dh += db;
            if l != last {
                dh.zip_mut_with(&cache.layers[l + 1], |d, &a| *d *= 1.0 - a * a);
            }
            dx = dh;
        }
        dx
    }

    /// Single-row convenience forward.
    pub fn predict_one(&self, params: &[f64], input: &[f64]) -> Array1<f64> {
        let x = ArrayView2::from_shape((1, input.len()), input).unwrap();
        self.forward(params, x).output().slice(s![0, ..]).to_owned()
    }
}

/// A matrix of shape `(rows, cols)` whose shorter dimension is orthonormal.
fn orthogonal(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let mut a = Array2::<f64>::from_shape_fn((tall, short), |_| rng.sample(StandardNormal));
    // modified Gram-Schmidt on the columns
    for j in 0..short {
        for k in 0..j {
            let proj = a.column(j).dot(&a.column(k));
            let ck = a.column(k).to_owned();
            a.column_mut(j).scaled_add(-proj, &ck);
        }
        let norm = a.column(j).dot(&a.column(j)).sqrt();
        if norm > 1e-12 {
            a.column_mut(j).mapv_inplace(|x| x / norm);
        }
    }
    if rows >= cols {
        a
    } else {
        a.reversed_axes().as_standard_layout().to_owned()
    }
}
