use super::Params;

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    pub fn new(params: &Params, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut Params, grad: &Params) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::EncoderConfig;

    fn params() -> Params {
        let cfg = EncoderConfig {
            d_model: 4,
            n_layers: 1,
            n_heads: 1,
            d_ff: 4,
            ..EncoderConfig::default()
        };
        Params::init(&cfg, [1, 1, 1, 1, 1, 1], 4, 3)
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut p = params();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.tensors_mut().into_iter().for_each(|t| t.fill(1.0));
        let mut opt = Adam::new(&p, 0.0);
        opt.step(&mut p, &g);
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = params();
        let before = p.head.l2.b[[0, 0]];
        let mut g = p.zeros_like();
        g.head.l2.b[[0, 0]] = 3.0;
        let mut opt = Adam::new(&p, 0.01);
        opt.step(&mut p, &g);
        assert!((before - p.head.l2.b[[0, 0]] - 0.01).abs() < 1e-9);
    }
}
