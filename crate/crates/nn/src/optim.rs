use crate::model::Model;
use crate::scalar::Real;
use crate::tensor::Tensor;

pub const BASE_LR: f64 = 1e-4;
pub const EPOCH_DECAY: f64 = 0.9;

/// Learning rate for a zero-based epoch: exponential per-epoch decay composed
/// multiplicatively with the plateau reduction factor.
pub fn effective_lr(base_lr: f64, decay: f64, epoch: usize, plateau_factor: f64) -> f64 {
    base_lr * decay.powi(epoch as i32) * plateau_factor
}

/// Adam moments for every trainable tensor, in parameter declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(shapes: &[&[usize]]) -> Self {
        AdamState {
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn for_model(model: &Model<T>) -> Self {
        let params = model.params();
        let shapes: Vec<&[usize]> = params.iter().map(|p| p.shape()).collect();
        Self::new(&shapes)
    }

    /// One bias-corrected Adam update over `(param, grad)` pairs.
    pub fn step(&mut self, pairs: Vec<(&mut Tensor<T>, &Tensor<T>)>, lr: f64) {
        assert_eq!(pairs.len(), self.m.len(), "adam: parameter count changed");
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - self.beta1), T::lit(1.0 - self.beta2));
        let step_size = T::lit(lr / bc1);
        let inv_bc2 = T::lit(1.0 / bc2);
        let eps = T::lit(self.epsilon);
        for ((param, grad), (m, v)) in pairs.into_iter().zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            assert_eq!(param.shape(), grad.shape(), "adam: grad shape");
            assert_eq!(param.shape(), m.shape(), "adam: moment shape");
            for (((p, g), mi), vi) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + one_b1 * *g;
                *vi = b2 * *vi + one_b2 * *g * *g;
                *p -= step_size * *mi / ((*vi * inv_bc2).sqrt() + eps);
            }
        }
    }

    pub fn step_model(&mut self, model: &mut Model<T>, lr: f64) {
        self.step(model.param_grad_pairs(), lr);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Tensor::from_vec(&[3], vec![0.5f64, -1.0, 2.0]).unwrap();
        let before = p.clone();
        let g = Tensor::zeros(&[3]);
        let mut adam = AdamState::<f64>::new(&[&[3]]);
        for _ in 0..10 {
            adam.step(vec![(&mut p, &g)], 1e-2);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn minimizes_scalar_quadratic() {
        let mut w = Tensor::from_vec(&[1], vec![1.0f64]).unwrap();
        let mut adam = AdamState::<f64>::new(&[&[1]]);
        let mut reached = None;
        for step in 0..2000 {
            let g = Tensor::from_vec(&[1], vec![2.0 * w.data()[0]]).unwrap();
            adam.step(vec![(&mut w, &g)], 1e-2);
            if w.data()[0].abs() < 1e-3 {
                reached = Some(step);
                break;
            }
        }
        assert!(reached.is_some(), "w = {}", w.data()[0]);
    }

    #[test]
    fn decay_arithmetic() {
        assert!((effective_lr(BASE_LR, EPOCH_DECAY, 2, 1.0) - 8.1e-5).abs() < 1e-18);
        assert_eq!(effective_lr(BASE_LR, EPOCH_DECAY, 0, 1.0), BASE_LR);
        assert!((effective_lr(BASE_LR, EPOCH_DECAY, 1, 0.5) - 4.5e-5).abs() < 1e-18);
    }
}
