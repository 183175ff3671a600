//! Adam with one step counter per parameter group.

use crate::network::{Group, NetworkParameters};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Adam {
    learning_rate: f64,
    first: NetworkParameters,
    second: NetworkParameters,
    steps_encoder: u32,
    steps_decoder: u32,
}

impl Adam {
    pub fn new(params: &NetworkParameters, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            first: params.zeros_like(),
            second: params.zeros_like(),
            steps_encoder: 0,
            steps_decoder: 0,
        }
    }

    /// Updates the tensors of `group` from `grad`.
    pub fn step(&mut self, params: &mut NetworkParameters, grad: &NetworkParameters, group: Group) {
        let t = match group {
            Group::Encoder => {
                self.steps_encoder += 1;
                self.steps_encoder
            }
            Group::Decoder => {
                self.steps_decoder += 1;
                self.steps_decoder
            }
        };
        let correction1 = 1.0 - BETA1.powi(t as i32);
        let correction2 = 1.0 - BETA2.powi(t as i32);
        let lr = self.learning_rate;
        let grads = grad.tensors();
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(self.first.tensors_mut())
            .zip(self.second.tensors_mut())
            .zip(grads.iter());
        for ((((g, p), (_, m)), (_, v)), gr) in tensors {
            if g != group {
                continue;
            }
            for (((p, m), v), &dg) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(gr.data) {
                *m = BETA1 * *m + (1.0 - BETA1) * dg;
                *v = BETA2 * *v + (1.0 - BETA2) * dg * dg;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *p -= lr * m_hat / (v_hat.sqrt() + EPS);
            }
        }
    }
}

/// Rescales the group's gradient so its L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_group(grad: &mut NetworkParameters, group: Group, max_norm: f64) -> f64 {
    let norm = grad.squared_norm(group).sqrt();
    if norm > max_norm {
        grad.scale_group(group, max_norm / norm);
    }
    norm
}
