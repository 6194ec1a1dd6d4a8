//! Central finite-difference verification of analytic gradients.
//!
//! A check takes a model and a scalar loss closure, runs the model's own
//! backward once to collect analytic gradients, then perturbs every
//! parameter component by `±step` and compares. The loss closure must be a
//! pure function of the parameters (fixed inputs, fixed sampling noise).

use super::param::Parameterized;

pub const FD_STEP: f64 = 1e-5;

/// Worst relative error observed for one parameter tensor.
#[derive(Debug, Clone)]
pub struct TensorReport {
    pub name: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct CheckReport {
    pub tensors: Vec<TensorReport>,
    pub tolerance: f64,
}

impl CheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() <= self.tolerance
    }
}

fn rel_error(a: f64, n: f64) -> f64 {
    let denom = a.abs().max(n.abs()).max(1e-4);
    (a - n).abs() / denom
}

/// Compares the analytic gradients already accumulated in `model` (by one
/// forward+backward of the caller's choosing) against central differences
/// of `loss`.
pub fn check_gradients<M, F>(model: &mut M, mut loss: F, tolerance: f64) -> CheckReport
where
    M: Parameterized,
    F: FnMut(&M) -> f64,
{
    // Snapshot analytic grads in visit order.
    let mut analytic: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    model.visit(&mut |name, p| {
        names.push(name.to_string());
        analytic.push(p.grad.data().to_vec());
    });

    let mut reports = Vec::with_capacity(names.len());
    for (ti, name) in names.iter().enumerate() {
        let len = analytic[ti].len();
        let mut max_rel = 0.0f64;
        for ci in 0..len {
            let orig = read_component(model, ti, ci);
            write_component(model, ti, ci, orig + FD_STEP);
            let up = loss(model);
            write_component(model, ti, ci, orig - FD_STEP);
            let down = loss(model);
            write_component(model, ti, ci, orig);
            let numeric = (up - down) / (2.0 * FD_STEP);
            max_rel = max_rel.max(rel_error(analytic[ti][ci], numeric));
        }
        reports.push(TensorReport {
            name: name.clone(),
            max_rel_error: max_rel,
        });
    }
    CheckReport {
        tensors: reports,
        tolerance,
    }
}

fn read_component<M: Parameterized>(model: &M, tensor_idx: usize, comp_idx: usize) -> f64 {
    let mut out = 0.0;
    let mut i = 0;
    model.visit(&mut |_, p| {
        if i == tensor_idx {
            out = p.value.data()[comp_idx];
        }
        i += 1;
    });
    out
}

fn write_component<M: Parameterized>(model: &mut M, tensor_idx: usize, comp_idx: usize, v: f64) {
    let mut i = 0;
    model.visit_mut(&mut |_, p| {
        if i == tensor_idx {
            p.value.data_mut()[comp_idx] = v;
        }
        i += 1;
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::dense::Dense;
    use crate::neural::param::Parameterized;
    use crate::tensor::Tensor2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_block_passes_fd_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut d = Dense::new("fc", 3, 2, &mut rng);
        let mut x = Tensor2::zeros(2, 3);
        for v in x.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        // scalar loss head: weighted sum of squared outputs
        let w: Vec<f64> = (0..4).map(|_| rng.gen_range(0.5..1.5)).collect();
        let loss = |m: &Dense| {
            let (y, _) = m.forward(&x).unwrap();
            y.data()
                .iter()
                .zip(&w)
                .map(|(v, c)| c * v * v)
                .sum::<f64>()
        };
        d.zero_grads();
        let (y, cache) = d.forward(&x).unwrap();
        let mut dy = Tensor2::zeros(2, 2);
        for (i, (v, c)) in y.data().iter().zip(&w).enumerate() {
            dy.data_mut()[i] = 2.0 * c * v;
        }
        d.backward(&cache, &dy);
        let report = check_gradients(&mut d, loss, 1e-6);
        assert!(report.passed(), "max rel err {}", report.max_rel_error());
    }
}
