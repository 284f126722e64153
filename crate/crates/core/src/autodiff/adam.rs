use crate::error::{Error, Result};

use super::Tensor;

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, params: &[Tensor]) -> Result<Self> {
        Self::with_betas(lr, 0.9, 0.999, 1e-8, params)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64, params: &[Tensor]) -> Result<Self> {
        if lr.is_nan() || lr <= 0.0 {
            return Err(Error::InvalidParameter(format!("learning rate {lr} must be positive")));
        }
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(Error::InvalidParameter("betas must lie in [0, 1)".into()));
        }
        Ok(Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            first: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second: params.iter().map(|p| vec![0.0; p.len()]).collect(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[&Tensor]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam tracks {} tensors, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "param {:?} vs grad {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (k, (x, &gk)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut params = vec![Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap()];
        let before = params.clone();
        let mut adam = AdamState::new(1e-3, &params).unwrap();
        let zero = Tensor::zeros(vec![3]);
        for _ in 0..5 {
            adam.step(&mut params, &[&zero]).unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut params = vec![Tensor::scalar(0.0)];
        let mut adam = AdamState::new(1e-3, &params).unwrap();
        adam.step(&mut params, &[&Tensor::scalar(1.0)]).unwrap();
        assert!((params[0].item() + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn two_steps_match_hand_recurrence() {
        let (lr, b1, b2, eps, g) = (0.01, 0.9, 0.999, 1e-8, 0.37);
        let mut params = vec![Tensor::scalar(1.0)];
        let mut adam = AdamState::with_betas(lr, b1, b2, eps, &params).unwrap();
        let grad = Tensor::scalar(g);
        adam.step(&mut params, &[&grad]).unwrap();
        adam.step(&mut params, &[&grad]).unwrap();

        let mut theta = 1.0;
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - f64::powi(b1, t));
            let vh = v / (1.0 - f64::powi(b2, t));
            theta -= lr * mh / (vh.sqrt() + eps);
        }
        assert!((params[0].item() - theta).abs() < 1e-12);
        assert_eq!(adam.step_count(), 2);
    }

    #[test]
    fn rejects_mismatches() {
        let mut params = vec![Tensor::zeros(vec![2])];
        assert!(AdamState::new(0.0, &params).is_err());
        let mut adam = AdamState::new(1e-3, &params).unwrap();
        assert!(adam.step(&mut params, &[&Tensor::zeros(vec![3])]).is_err());
        assert!(adam.step(&mut params, &[]).is_err());
    }
}
