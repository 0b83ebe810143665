//! No-U-Turn sampler with multinomial trajectory sampling and the generalized
//! U-turn criterion, for a diagonal Euclidean metric.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::log_sum_exp;

/// A differentiable log density.
pub trait LogDensity {
    fn dim(&self) -> usize;
    /// Log density at `x`; the gradient is written to `grad`. Non-finite
    /// values mark points outside the support.
    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

#[derive(Clone, Debug)]
struct Point {
    q: Vec<f64>,
    p: Vec<f64>,
    logp: f64,
    grad: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TransitionStats {
    /// Mean Metropolis acceptance probability over the trajectory.
    pub accept_stat: f64,
    pub tree_depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
    pub energy: f64,
    pub step_size: f64,
}

/// Kernel settings. `max_depth = 0` is treated as a single doubling, i.e. one
/// leapfrog step with a multinomial choice between start and end point.
#[derive(Clone, Debug)]
pub struct Nuts {
    pub step_size: f64,
    pub inv_mass: Vec<f64>,
    pub max_depth: usize,
    pub max_delta_h: f64,
}

struct Tree<'a, T: LogDensity> {
    target: &'a T,
    nuts: &'a Nuts,
    h0: f64,
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

fn sum(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

impl Nuts {
    pub fn new(dim: usize, step_size: f64, max_depth: usize, max_delta_h: f64) -> Self {
        Self {
            step_size,
            inv_mass: vec![1.0; dim],
            max_depth,
            max_delta_h,
        }
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_mass).map(|(p, m)| p * p * m).sum::<f64>()
    }

    fn hamiltonian(&self, z: &Point) -> f64 {
        let h = -z.logp + self.kinetic(&z.p);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_mass).map(|(p, m)| p * m).collect()
    }

    fn sample_momentum<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.inv_mass
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(rng);
                z / m.sqrt()
            })
            .collect()
    }

    fn leapfrog<T: LogDensity>(&self, target: &T, z: &mut Point, eps: f64) {
        for i in 0..z.q.len() {
            z.p[i] += 0.5 * eps * z.grad[i];
        }
        for i in 0..z.q.len() {
            z.q[i] += eps * self.inv_mass[i] * z.p[i];
        }
        z.logp = target.logp_grad(&z.q, &mut z.grad);
        if !z.logp.is_finite() || z.grad.iter().any(|g| !g.is_finite()) {
            z.logp = f64::NEG_INFINITY;
            return;
        }
        for i in 0..z.q.len() {
            z.p[i] += 0.5 * eps * z.grad[i];
        }
    }

    /// One NUTS transition from `q` (with log density `logp` and gradient
    /// `grad`). Returns the new position, its log density and gradient.
    pub fn transition<T: LogDensity, R: Rng + ?Sized>(
        &self,
        target: &T,
        q: &[f64],
        logp: f64,
        grad: &[f64],
        rng: &mut R,
    ) -> (Vec<f64>, f64, Vec<f64>, TransitionStats) {
        let p0 = self.sample_momentum(rng);
        let z0 = Point {
            q: q.to_vec(),
            p: p0,
            logp,
            grad: grad.to_vec(),
        };
        let h0 = self.hamiltonian(&z0);
        let mut tree = Tree {
            target,
            nuts: self,
            h0,
            n_leapfrog: 0,
            sum_metro_prob: 0.0,
            divergent: false,
        };

        let mut z_fwd = z0.clone();
        let mut z_bck = z0.clone();
        let mut z_sample = z0.clone();
        let mut z_propose = z0.clone();

        let ps0 = self.p_sharp(&z0.p);
        let mut p_fwd_fwd = z0.p.clone();
        let mut p_sharp_fwd_fwd = ps0.clone();
        let mut p_fwd_bck = z0.p.clone();
        let mut p_sharp_fwd_bck = ps0.clone();
        let mut p_bck_fwd = z0.p.clone();
        let mut p_sharp_bck_fwd = ps0.clone();
        let mut p_bck_bck = z0.p.clone();
        let mut p_sharp_bck_bck = ps0;

        let mut rho = z0.p.clone();
        let mut log_sum_weight = 0.0;
        let mut depth = 0;
        let max_depth = self.max_depth.max(1);
        let dim = q.len();

        while depth < max_depth {
            let mut rho_fwd = vec![0.0; dim];
            let mut rho_bck = vec![0.0; dim];
            let mut log_sum_weight_subtree = f64::NEG_INFINITY;
            let valid = if rng.random::<f64>() > 0.5 {
                rho_bck.copy_from_slice(&rho);
                p_bck_fwd.clone_from(&p_fwd_bck);
                p_sharp_bck_fwd.clone_from(&p_sharp_fwd_bck);
                let mut z = z_fwd.clone();
                let ok = tree.build(
                    depth,
                    &mut z,
                    &mut z_propose,
                    &mut p_sharp_fwd_bck,
                    &mut p_sharp_fwd_fwd,
                    &mut rho_fwd,
                    &mut p_fwd_bck,
                    &mut p_fwd_fwd,
                    1.0,
                    &mut log_sum_weight_subtree,
                    rng,
                );
                z_fwd = z;
                ok
            } else {
                rho_fwd.copy_from_slice(&rho);
                p_fwd_bck.clone_from(&p_bck_fwd);
                p_sharp_fwd_bck.clone_from(&p_sharp_bck_fwd);
                let mut z = z_bck.clone();
                let ok = tree.build(
                    depth,
                    &mut z,
                    &mut z_propose,
                    &mut p_sharp_bck_fwd,
                    &mut p_sharp_bck_bck,
                    &mut rho_bck,
                    &mut p_bck_fwd,
                    &mut p_bck_bck,
                    -1.0,
                    &mut log_sum_weight_subtree,
                    rng,
                );
                z_bck = z;
                ok
            };
            if !valid {
                break;
            }
            depth += 1;
            if log_sum_weight_subtree > log_sum_weight {
                z_sample = z_propose.clone();
            } else {
                let accept = (log_sum_weight_subtree - log_sum_weight).exp();
                if rng.random::<f64>() < accept {
                    z_sample = z_propose.clone();
                }
            }
            log_sum_weight = log_sum_exp(&[log_sum_weight, log_sum_weight_subtree]);

            rho = sum(&rho_bck, &rho_fwd);
            let mut persist = criterion(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
            let rho_ext = sum(&rho_bck, &p_fwd_bck);
            persist &= criterion(&p_sharp_bck_bck, &p_sharp_fwd_bck, &rho_ext);
            let rho_ext = sum(&rho_fwd, &p_bck_fwd);
            persist &= criterion(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &rho_ext);
            if !persist {
                break;
            }
        }

        let accept_stat = if tree.n_leapfrog > 0 {
            tree.sum_metro_prob / tree.n_leapfrog as f64
        } else {
            0.0
        };
        let energy = self.hamiltonian(&z_sample);
        let stats = TransitionStats {
            accept_stat,
            tree_depth: depth,
            n_leapfrog: tree.n_leapfrog,
            divergent: tree.divergent,
            energy,
            step_size: self.step_size,
        };
        (z_sample.q, z_sample.logp, z_sample.grad, stats)
    }

    /// Heuristic initial step size: double or halve until the acceptance
    /// probability of one leapfrog step crosses 0.8.
    pub fn find_reasonable_step_size<T: LogDensity, R: Rng + ?Sized>(
        &mut self,
        target: &T,
        q: &[f64],
        logp: f64,
        grad: &[f64],
        rng: &mut R,
    ) {
        let start = Point {
            q: q.to_vec(),
            p: vec![0.0; q.len()],
            logp,
            grad: grad.to_vec(),
        };
        let threshold = 0.8f64.ln();
        let mut direction = 0.0;
        for _ in 0..100 {
            let mut z = start.clone();
            z.p = self.sample_momentum(rng);
            let h0 = self.hamiltonian(&z);
            self.leapfrog(target, &mut z, self.step_size);
            let delta = h0 - self.hamiltonian(&z);
            if direction == 0.0 {
                direction = if delta > threshold { 1.0 } else { -1.0 };
            } else if (direction > 0.0 && !(delta > threshold)) || (direction < 0.0 && !(delta < threshold)) {
                break;
            }
            self.step_size = if direction > 0.0 {
                2.0 * self.step_size
            } else {
                0.5 * self.step_size
            };
            if self.step_size > 1e7 || self.step_size < 1e-12 {
                break;
            }
        }
        self.step_size = self.step_size.clamp(1e-12, 1e7);
    }
}

fn criterion(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

impl<T: LogDensity> Tree<'_, T> {
    #[allow(clippy::too_many_arguments)]
    fn build<R: Rng + ?Sized>(
        &mut self,
        depth: usize,
        z: &mut Point,
        z_propose: &mut Point,
        p_sharp_beg: &mut Vec<f64>,
        p_sharp_end: &mut Vec<f64>,
        rho: &mut [f64],
        p_beg: &mut Vec<f64>,
        p_end: &mut Vec<f64>,
        sign: f64,
        log_sum_weight: &mut f64,
        rng: &mut R,
    ) -> bool {
        if depth == 0 {
            self.nuts.leapfrog(self.target, z, sign * self.nuts.step_size);
            self.n_leapfrog += 1;
            let h = self.nuts.hamiltonian(z);
            if h - self.h0 > self.nuts.max_delta_h {
                self.divergent = true;
            }
            let w = self.h0 - h;
            *log_sum_weight = log_sum_exp(&[*log_sum_weight, w]);
            self.sum_metro_prob += if w > 0.0 { 1.0 } else { w.exp() };
            z_propose.clone_from(z);
            *p_sharp_beg = self.nuts.p_sharp(&z.p);
            p_sharp_end.clone_from(p_sharp_beg);
            add_into(rho, &z.p);
            p_beg.clone_from(&z.p);
            p_end.clone_from(p_beg);
            return !self.divergent;
        }
        let dim = z.q.len();

        // left subtree
        let mut p_sharp_init_end = vec![0.0; dim];
        let mut p_init_end = vec![0.0; dim];
        let mut rho_init = vec![0.0; dim];
        let mut lsw_init = f64::NEG_INFINITY;
        let ok = self.build(
            depth - 1,
            z,
            z_propose,
            p_sharp_beg,
            &mut p_sharp_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            sign,
            &mut lsw_init,
            rng,
        );
        if !ok {
            return false;
        }

        // right subtree
        let mut z_propose_final = z.clone();
        let mut p_sharp_final_beg = vec![0.0; dim];
        let mut p_final_beg = vec![0.0; dim];
        let mut rho_final = vec![0.0; dim];
        let mut lsw_final = f64::NEG_INFINITY;
        let ok = self.build(
            depth - 1,
            z,
            &mut z_propose_final,
            &mut p_sharp_final_beg,
            p_sharp_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            sign,
            &mut lsw_final,
            rng,
        );
        if !ok {
            return false;
        }

        let lsw_subtree = log_sum_exp(&[lsw_init, lsw_final]);
        *log_sum_weight = log_sum_exp(&[*log_sum_weight, lsw_subtree]);
        if lsw_final > lsw_subtree {
            *z_propose = z_propose_final;
        } else {
            let accept = (lsw_final - lsw_subtree).exp();
            if rng.random::<f64>() < accept {
                *z_propose = z_propose_final;
            }
        }

        let rho_subtree = sum(&rho_init, &rho_final);
        add_into(rho, &rho_subtree);
        let mut persist = criterion(p_sharp_beg, p_sharp_end, &rho_subtree);
        let rho_ext = sum(&rho_init, &p_final_beg);
        persist &= criterion(p_sharp_beg, &p_sharp_final_beg, &rho_ext);
        let rho_ext = sum(&rho_final, &p_init_end);
        persist &= criterion(&p_sharp_init_end, p_sharp_end, &rho_ext);
        persist
    }
}
