use serde::{Deserialize, Serialize};

use crate::policy::Mat;

/// Adam with an L2 penalty added to the gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [Mat], grads: &[Mat]) {
        assert_eq!(params.len(), grads.len(), "one gradient per tensor");
        if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.shape() != p.shape()) {
            self.m = params.iter().map(|p| Mat::zeros(p.rows, p.cols)).collect();
            self.v = self.m.clone();
            self.t = 0;
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.data.len() {
                let gi = g.data[i] + self.weight_decay * p.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Learning rate after `epoch` epochs: `base · factor^k`, `k` the number of
/// milestones already reached.
pub fn lr_at(base: f64, factor: f64, milestones: &[usize], epoch: usize) -> f64 {
    let passed = milestones.iter().filter(|&&m| epoch >= m).count();
    base * factor.powi(passed as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_counts_passed_milestones() {
        let ms = [175, 195];
        assert_eq!(lr_at(1e-4, 0.1, &ms, 0), 1e-4);
        assert_eq!(lr_at(1e-4, 0.1, &ms, 175), 1e-4 * 0.1);
        assert_eq!(lr_at(1e-4, 0.1, &ms, 199), 1e-4 * 0.1f64.powi(2));
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut p = vec![Mat::row_vec(vec![3.0, -2.0])];
        let mut adam = Adam::new(0.1, 0.0);
        for _ in 0..500 {
            let g = vec![p[0].map(|x| 2.0 * x)];
            adam.step(&mut p, &g);
        }
        assert!(p[0].data.iter().all(|x| x.abs() < 1e-2));
    }
}
