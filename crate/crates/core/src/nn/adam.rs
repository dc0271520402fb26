use super::{Gradients, Network};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates, laid out like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam with bias correction. Weight decay is added to weight gradients
/// (not biases) before the moment update.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    pub state: AdamState,
}

fn param_slices(net: &mut Network) -> impl Iterator<Item = (&mut [f64], bool)> {
    net.layers
        .iter_mut()
        .flat_map(|l| [(l.weight.data_mut(), true), (l.bias.as_mut_slice(), false)])
}

impl Adam {
    pub fn new(net: &Network, lr: f64, weight_decay: f64) -> Self {
        let n = net.n_params();
        Self {
            lr,
            weight_decay,
            state: AdamState {
                step: 0,
                m: vec![0.0; n],
                v: vec![0.0; n],
            },
        }
    }

    pub fn step(&mut self, net: &mut Network, grads: &Gradients) {
        self.state.step += 1;
        let t = self.state.step as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        let grad_slices = grads
            .iter()
            .flat_map(|g| [g.weight.data(), g.bias.as_slice()]);
        let mut offset = 0;
        let (lr, wd) = (self.lr, self.weight_decay);
        let AdamState { m, v, .. } = &mut self.state;
        for ((params, is_weight), g) in param_slices(net).zip(grad_slices) {
            let decay = if is_weight { wd } else { 0.0 };
            for (p, &gi) in params.iter_mut().zip(g) {
                let gi = gi + decay * *p;
                let (mi, vi) = (&mut m[offset], &mut v[offset]);
                *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
                *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
                offset += 1;
            }
        }
    }
}
