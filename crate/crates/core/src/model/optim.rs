use ndarray::{ArrayD, ArrayViewD, ArrayViewMutD, NdFloat, Zip};

use crate::error::{Error, Result};

/// AdamW with decoupled weight decay and bias-corrected moments.
///
/// One step: `θ ← θ·(1 − lr·λ) − lr · m̂ / (√v̂ + ε)`.
#[derive(Debug, Clone)]
pub struct AdamW<F> {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<ArrayD<F>>,
    v: Vec<ArrayD<F>>,
}

impl<F: NdFloat> AdamW<F> {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: Vec<ArrayViewMutD<'_, F>>, grads: Vec<ArrayViewD<'_, F>>) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::invalid("parameter and gradient block counts differ"));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| ArrayD::zeros(p.raw_dim())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::invalid("optimizer state does not match parameter blocks"));
        }
        self.t += 1;
        let c = |x: f64| F::from(x).unwrap();
        let (b1, b2) = (c(self.beta1), c(self.beta2));
        let bias1 = c(1.0 - self.beta1.powi(self.t));
        let bias2 = c(1.0 - self.beta2.powi(self.t));
        let lr = c(self.lr);
        let decay = c(1.0 - self.lr * self.weight_decay);
        let eps = c(self.eps);
        let one = F::one();

        for (((mut p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::invalid(format!(
                    "shape mismatch: param {:?} grad {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            Zip::from(&mut p).and(&g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p = *p * decay - lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
        Ok(())
    }
}
