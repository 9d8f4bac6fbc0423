use ndarray::{Array1, Array2, Axis, NdFloat};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Dense layer `y = x·W + b` with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: NdFloat> Linear<F> {
    /// Fan-in scaled normal weights (std = sqrt(2 / fan_in)), zero bias.
    pub fn kaiming<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Self {
            weight: normal_matrix(fan_in, fan_out, (2.0 / fan_in as f64).sqrt(), rng),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }
}

pub(crate) fn normal_matrix<F: NdFloat, R: Rng>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Array2<F> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_simple_fn((rows, cols), || F::from(dist.sample(rng)).unwrap())
}

/// Feed-forward stack with ReLU (and optional dropout) between layers; the
/// last layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    pub layers: Vec<Linear<F>>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct MlpCache<F> {
    /// Input of each layer.
    inputs: Vec<Array2<F>>,
    /// Pre-activation output of each hidden layer.
    pre: Vec<Array2<F>>,
    /// Scaled dropout mask applied after each hidden activation.
    masks: Vec<Option<Array2<F>>>,
}

impl<F: NdFloat> Mlp<F> {
    pub fn new<R: Rng>(input: usize, sizes: &[usize], rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(sizes.len());
        let mut fan_in = input;
        for &s in sizes {
            layers.push(Linear::kaiming(fan_in, s, rng));
            fan_in = s;
        }
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Linear::zeros(l.fan_in(), l.fan_out()))
                .collect(),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Linear::fan_out)
    }

    /// Forward pass over a batch of rows. `dropout` enables training-mode
    /// inverted dropout with the given rate.
    pub fn forward<R: Rng>(&self, x: Array2<F>, mut dropout: Option<(f64, &mut R)>) -> (Array2<F>, MlpCache<F>) {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::new(),
            masks: Vec::new(),
        };
        let last = self.layers.len().saturating_sub(1);
        let mut a = x;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight);
            z += &layer.bias;
            cache.inputs.push(a);
            if l == last {
                a = z;
            } else {
                let mut h = z.mapv(|v| v.max(F::zero()));
                cache.pre.push(z);
                let mask = match dropout.as_mut() {
                    Some((rate, rng)) if *rate > 0.0 => {
                        let keep = F::from(1.0 / (1.0 - *rate)).unwrap();
                        let m = Array2::from_shape_simple_fn(h.raw_dim(), || {
                            if rng.random::<f64>() < *rate {
                                F::zero()
                            } else {
                                keep
                            }
                        });
                        h *= &m;
                        Some(m)
                    }
                    _ => None,
                };
                cache.masks.push(mask);
                a = h;
            }
        }
        (a, cache)
    }

    /// Accumulates parameter gradients into `grads`; returns the gradient
    /// with respect to the input.
    pub fn backward(&self, cache: &MlpCache<F>, grad_out: Array2<F>, grads: &mut Mlp<F>) -> Array2<F> {
        let mut g = grad_out;
        for l in (0..self.layers.len()).rev() {
            if l + 1 < self.layers.len() {
                // through dropout and ReLU of hidden layer l
                if let Some(mask) = &cache.masks[l] {
                    g *= mask;
                }
                ndarray::Zip::from(&mut g)
                    .and(&cache.pre[l])
                    .for_each(|gv, &z| {
                        if z <= F::zero() {
                            *gv = F::zero();
                        }
                    });
            }
            let layer = &self.layers[l];
            let input = &cache.inputs[l];
            grads.layers[l].weight += &input.t().dot(&g);
            grads.layers[l].bias += &g.sum_axis(Axis(0));
            g = g.dot(&layer.weight.t());
        }
        g
    }
}
