//! Warmup adaptation of the NUTS step size and diagonal metric.

use rand::Rng;

use super::nuts::{LogDensity, Nuts, TransitionStats};

/// Nesterov dual averaging of `log(step size)`.
#[derive(Clone, Debug)]
pub struct DualAveraging {
    pub delta: f64,
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            mu: (10.0f64).ln(),
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
        }
    }

    pub fn restart(&mut self, step_size: f64) {
        self.mu = (10.0 * step_size).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    /// Feeds one acceptance statistic; returns the next step size.
    pub fn learn(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let a = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - a);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let x_eta = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    /// Averaged step size used after warmup.
    pub fn final_step_size(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Running mean and variance (Welford).
#[derive(Clone, Debug)]
pub struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.n += 1;
        for i in 0..x.len() {
            let d = x[i] - self.mean[i];
            self.mean[i] += d / self.n as f64;
            self.m2[i] += d * (x[i] - self.mean[i]);
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Sample variance shrunk toward `1e-3`.
    pub fn regularized_variance(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|m| {
                let var = if self.n > 1 { m / (n - 1.0) } else { 1.0 };
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }

    pub fn reset(&mut self) {
        self.n = 0;
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        self.m2.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Expanding-window schedule: an initial fast buffer, slow windows doubling in
/// length, and a terminal fast buffer.
#[derive(Clone, Debug)]
pub struct WindowSchedule {
    warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_window: usize,
    enabled: bool,
}

impl WindowSchedule {
    pub fn new(warmup: usize) -> Self {
        let (mut init, mut term, mut base) = (75, 50, 25);
        let enabled = warmup >= 20;
        if enabled && init + term + base > warmup {
            init = (0.15 * warmup as f64) as usize;
            term = (0.1 * warmup as f64) as usize;
            base = warmup - (init + term);
        }
        Self {
            warmup,
            init_buffer: init,
            term_buffer: term,
            window_size: base,
            next_window: init + base - 1,
            enabled,
        }
    }

    pub fn in_window(&self, it: usize) -> bool {
        self.enabled && it >= self.init_buffer && it + self.term_buffer < self.warmup && it != self.warmup
    }

    pub fn end_of_window(&self, it: usize) -> bool {
        self.enabled && it == self.next_window && it != self.warmup
    }

    fn advance(&mut self, it: usize) {
        if self.next_window + self.term_buffer + 1 == self.warmup {
            return;
        }
        self.window_size *= 2;
        self.next_window = it + self.window_size;
        if self.next_window + 1 != self.warmup {
            let boundary = self.next_window + 2 * self.window_size;
            if boundary + self.term_buffer >= self.warmup {
                self.next_window = self.warmup - self.term_buffer - 1;
            }
        }
    }
}

/// NUTS kernel with step size and metric adapted over the first `warmup`
/// calls to [`AdaptiveNuts::step`].
#[derive(Clone, Debug)]
pub struct AdaptiveNuts {
    pub kernel: Nuts,
    dual: DualAveraging,
    schedule: WindowSchedule,
    welford: Welford,
    warmup: usize,
    iteration: usize,
}

impl AdaptiveNuts {
    pub fn new(dim: usize, warmup: usize, target_accept: f64, max_depth: usize, max_delta_h: f64) -> Self {
        Self {
            kernel: Nuts::new(dim, 1.0, max_depth, max_delta_h),
            dual: DualAveraging::new(target_accept),
            schedule: WindowSchedule::new(warmup),
            welford: Welford::new(dim),
            warmup,
            iteration: 0,
        }
    }

    pub fn step_size(&self) -> f64 {
        self.kernel.step_size
    }

    pub fn inv_mass(&self) -> &[f64] {
        &self.kernel.inv_mass
    }

    /// Picks a starting step size at `q`.
    pub fn initialize<T: LogDensity, R: Rng + ?Sized>(&mut self, target: &T, q: &[f64], rng: &mut R) {
        let mut grad = vec![0.0; q.len()];
        let logp = target.logp_grad(q, &mut grad);
        self.kernel.find_reasonable_step_size(target, q, logp, &grad, rng);
        self.dual.restart(self.kernel.step_size);
    }

    pub fn step<T: LogDensity, R: Rng + ?Sized>(
        &mut self,
        target: &T,
        q: &[f64],
        logp: f64,
        grad: &[f64],
        rng: &mut R,
    ) -> (Vec<f64>, f64, Vec<f64>, TransitionStats) {
        let (q, logp, grad, stats) = self.kernel.transition(target, q, logp, grad, rng);
        let it = self.iteration;
        self.iteration += 1;
        if it < self.warmup {
            self.kernel.step_size = self.dual.learn(stats.accept_stat);
            if self.schedule.in_window(it) {
                self.welford.add(&q);
            }
            if self.schedule.end_of_window(it) {
                self.kernel.inv_mass = self.welford.regularized_variance();
                self.welford.reset();
                self.schedule.advance(it);
                self.kernel.find_reasonable_step_size(target, &q, logp, &grad, rng);
                self.dual.restart(self.kernel.step_size);
            }
            if it + 1 == self.warmup {
                self.kernel.step_size = self.dual.final_step_size();
            }
        }
        (q, logp, grad, stats)
    }
}
