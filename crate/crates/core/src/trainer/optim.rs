use crate::latentfield::{FieldGrads, LatentField};

/// Per-parameter adaptive step with bias-corrected first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub density_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: u64,
    m: FieldGrads,
    v: FieldGrads,
}

impl Adam {
    pub fn new(field: &LatentField, lr: f64, density_lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            density_lr,
            beta1,
            beta2,
            eps,
            steps: 0,
            m: FieldGrads::zeros_like(field),
            v: FieldGrads::zeros_like(field),
        }
    }

    pub fn step(&mut self, field: &mut LatentField, g: &FieldGrads) {
        self.steps += 1;
        let c1 = 1.0 - self.beta1.powi(self.steps as i32);
        let c2 = 1.0 - self.beta2.powi(self.steps as i32);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let update = |lr: f64, p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        };
        update(self.density_lr, &mut field.density, &mut self.m.density, &mut self.v.density, &g.density);
        update(self.lr, &mut field.features, &mut self.m.features, &mut self.v.features, &g.features);
    }
}
