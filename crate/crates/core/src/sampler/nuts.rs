//! Multinomial No-U-Turn sampler with a diagonal metric, the generalized
//! U-turn criterion and Stan-style warm-up (dual averaging plus windowed
//! variance estimation).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::LogDensity;

/// Energy error beyond which a trajectory is declared divergent.
pub const MAX_DELTA_H: f64 = 1000.0;

#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    /// Gradient of the log density at `q`.
    pub g: Vec<f64>,
    pub lp: f64,
}

impl PhasePoint {
    pub fn at<M: LogDensity + ?Sized>(model: &M, q: Vec<f64>) -> Self {
        let n = q.len();
        let mut g = vec![0.0; n];
        let lp = model.log_density_grad(&q, &mut g);
        Self {
            q,
            p: vec![0.0; n],
            g,
            lp: if lp.is_finite() { lp } else { f64::NEG_INFINITY },
        }
    }

    pub fn is_valid(&self) -> bool {
        self.lp.is_finite() && self.g.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionStats {
    pub accept_stat: f64,
    pub step_size: f64,
    pub tree_depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
    pub energy: f64,
    pub lp: f64,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

fn criterion(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

pub struct Nuts<'a, M: LogDensity + ?Sized> {
    model: &'a M,
    pub inv_metric: Vec<f64>,
    pub step_size: f64,
    pub max_depth: usize,
    pub rng: ChaCha8Rng,
    n_leapfrog: usize,
    divergent: bool,
    sum_metro_prob: f64,
}

impl<'a, M: LogDensity + ?Sized> Nuts<'a, M> {
    pub fn new(model: &'a M, max_depth: usize, rng: ChaCha8Rng) -> Self {
        Self {
            inv_metric: vec![1.0; model.dim()],
            model,
            step_size: 1.0,
            max_depth,
            rng,
            n_leapfrog: 0,
            divergent: false,
            sum_metro_prob: 0.0,
        }
    }

    fn hamiltonian(&self, z: &PhasePoint) -> f64 {
        let k: f64 = 0.5
            * z.p
                .iter()
                .zip(&self.inv_metric)
                .map(|(p, m)| p * p * m)
                .sum::<f64>();
        let h = -z.lp + k;
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_metric).map(|(p, m)| p * m).collect()
    }

    fn sample_momentum(&mut self, z: &mut PhasePoint) {
        for (p, m) in z.p.iter_mut().zip(&self.inv_metric) {
            let n: f64 = self.rng.sample(StandardNormal);
            *p = n / m.sqrt();
        }
    }

    fn leapfrog(&self, z: &mut PhasePoint, eps: f64) {
        for (p, g) in z.p.iter_mut().zip(&z.g) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        let lp = self.model.log_density_grad(&z.q, &mut z.g);
        z.lp = if lp.is_finite() { lp } else { f64::NEG_INFINITY };
        for (p, g) in z.p.iter_mut().zip(&z.g) {
            *p += 0.5 * eps * g;
        }
    }

    /// Doubles the step size until the one-step acceptance crosses 0.8, then
    /// stops (halving instead if it starts below).
    pub fn init_step_size(&mut self, z: &PhasePoint) {
        if self.step_size == 0.0 || self.step_size > 1e7 {
            return;
        }
        let log_target = 0.8f64.ln();
        let one_step = |s: &mut Self| {
            let mut w = z.clone();
            s.sample_momentum(&mut w);
            let h0 = s.hamiltonian(&w);
            s.leapfrog(&mut w, s.step_size);
            let h = s.hamiltonian(&w);
            h0 - h
        };
        let delta = one_step(self);
        let direction = if delta > log_target { 1 } else { -1 };
        loop {
            let delta = one_step(self);
            if direction == 1 && !(delta > log_target) {
                break;
            }
            if direction == -1 && !(delta < log_target) {
                break;
            }
            self.step_size = if direction == 1 {
                2.0 * self.step_size
            } else {
                0.5 * self.step_size
            };
            if self.step_size > 1e7 || self.step_size == 0.0 {
                log::warn!("step size search left the usable range ({})", self.step_size);
                self.step_size = self.step_size.clamp(1e-12, 1e7);
                break;
            }
        }
    }

    /// One NUTS transition from `current`.
    pub fn transition(&mut self, current: &PhasePoint) -> (PhasePoint, TransitionStats) {
        let mut z = current.clone();
        self.sample_momentum(&mut z);
        let mut z_fwd = z.clone();
        let mut z_bck = z.clone();
        let mut z_sample = z.clone();
        let mut z_propose = z.clone();

        let p0 = z.p.clone();
        let ps0 = self.p_sharp(&z.p);
        let (mut p_fwd_fwd, mut p_fwd_bck, mut p_bck_fwd, mut p_bck_bck) =
            (p0.clone(), p0.clone(), p0.clone(), p0.clone());
        let (mut ps_fwd_fwd, mut ps_fwd_bck, mut ps_bck_fwd, mut ps_bck_bck) =
            (ps0.clone(), ps0.clone(), ps0.clone(), ps0);
        let mut rho = p0;
        let mut log_sum_weight = 0.0;
        let h0 = self.hamiltonian(&z);
        self.n_leapfrog = 0;
        self.sum_metro_prob = 0.0;
        self.divergent = false;
        let n = z.q.len();
        let mut depth = 0;

        while depth < self.max_depth {
            let mut rho_fwd = vec![0.0; n];
            let mut rho_bck = vec![0.0; n];
            let mut lsw_subtree = f64::NEG_INFINITY;
            let valid = if self.rng.random::<f64>() > 0.5 {
                rho_bck.copy_from_slice(&rho);
                p_bck_fwd.clone_from(&p_fwd_bck);
                ps_bck_fwd.clone_from(&ps_fwd_bck);
                z.clone_from(&z_fwd);
                let v = self.build_tree(
                    depth,
                    &mut z,
                    &mut z_propose,
                    &mut ps_fwd_bck,
                    &mut ps_fwd_fwd,
                    &mut rho_fwd,
                    &mut p_fwd_bck,
                    &mut p_fwd_fwd,
                    h0,
                    1.0,
                    &mut lsw_subtree,
                );
                z_fwd.clone_from(&z);
                v
            } else {
                rho_fwd.copy_from_slice(&rho);
                p_fwd_bck.clone_from(&p_bck_fwd);
                ps_fwd_bck.clone_from(&ps_bck_fwd);
                z.clone_from(&z_bck);
                let v = self.build_tree(
                    depth,
                    &mut z,
                    &mut z_propose,
                    &mut ps_bck_fwd,
                    &mut ps_bck_bck,
                    &mut rho_bck,
                    &mut p_bck_fwd,
                    &mut p_bck_bck,
                    h0,
                    -1.0,
                    &mut lsw_subtree,
                );
                z_bck.clone_from(&z);
                v
            };
            if !valid {
                break;
            }
            depth += 1;
            if lsw_subtree > log_sum_weight {
                z_sample.clone_from(&z_propose);
            } else {
                let accept = (lsw_subtree - log_sum_weight).exp();
                if self.rng.random::<f64>() < accept {
                    z_sample.clone_from(&z_propose);
                }
            }
            log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

            for i in 0..n {
                rho[i] = rho_bck[i] + rho_fwd[i];
            }
            let mut persist = criterion(&ps_bck_bck, &ps_fwd_fwd, &rho);
            let mut ext = rho_bck.clone();
            add_into(&mut ext, &p_fwd_bck);
            persist &= criterion(&ps_bck_bck, &ps_fwd_bck, &ext);
            let mut ext = rho_fwd.clone();
            add_into(&mut ext, &p_bck_fwd);
            persist &= criterion(&ps_bck_fwd, &ps_fwd_fwd, &ext);
            if !persist {
                break;
            }
        }

        let stats = TransitionStats {
            accept_stat: if self.n_leapfrog > 0 {
                self.sum_metro_prob / self.n_leapfrog as f64
            } else {
                0.0
            },
            step_size: self.step_size,
            tree_depth: depth,
            n_leapfrog: self.n_leapfrog,
            divergent: self.divergent,
            energy: self.hamiltonian(&z_sample),
            lp: z_sample.lp,
        };
        (z_sample, stats)
    }

    #[allow(clippy::too_many_arguments)]
    fn build_tree(
        &mut self,
        depth: usize,
        z: &mut PhasePoint,
        z_propose: &mut PhasePoint,
        ps_beg: &mut Vec<f64>,
        ps_end: &mut Vec<f64>,
        rho: &mut [f64],
        p_beg: &mut Vec<f64>,
        p_end: &mut Vec<f64>,
        h0: f64,
        sign: f64,
        log_sum_weight: &mut f64,
    ) -> bool {
        if depth == 0 {
            self.leapfrog(z, sign * self.step_size);
            self.n_leapfrog += 1;
            let h = self.hamiltonian(z);
            if h - h0 > MAX_DELTA_H {
                self.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, h0 - h);
            self.sum_metro_prob += if h0 - h > 0.0 { 1.0 } else { (h0 - h).exp() };
            z_propose.clone_from(z);
            *ps_beg = self.p_sharp(&z.p);
            ps_end.clone_from(ps_beg);
            add_into(rho, &z.p);
            p_beg.clone_from(&z.p);
            p_end.clone_from(p_beg);
            return !self.divergent;
        }
        let n = z.q.len();

        let mut lsw_init = f64::NEG_INFINITY;
        let mut p_init_end = vec![0.0; n];
        let mut ps_init_end = vec![0.0; n];
        let mut rho_init = vec![0.0; n];
        if !self.build_tree(
            depth - 1,
            z,
            z_propose,
            ps_beg,
            &mut ps_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            h0,
            sign,
            &mut lsw_init,
        ) {
            return false;
        }

        let mut z_propose_final = z.clone();
        let mut lsw_final = f64::NEG_INFINITY;
        let mut p_final_beg = vec![0.0; n];
        let mut ps_final_beg = vec![0.0; n];
        let mut rho_final = vec![0.0; n];
        if !self.build_tree(
            depth - 1,
            z,
            &mut z_propose_final,
            &mut ps_final_beg,
            ps_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            h0,
            sign,
            &mut lsw_final,
        ) {
            return false;
        }

        let lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree {
            z_propose.clone_from(&z_propose_final);
        } else {
            let accept = (lsw_final - lsw_subtree).exp();
            if self.rng.random::<f64>() < accept {
                z_propose.clone_from(&z_propose_final);
            }
        }

        let mut rho_subtree = rho_init.clone();
        add_into(&mut rho_subtree, &rho_final);
        add_into(rho, &rho_subtree);

        let mut persist = criterion(ps_beg, ps_end, &rho_subtree);
        let mut ext = rho_init;
        add_into(&mut ext, &p_final_beg);
        persist &= criterion(ps_beg, &ps_final_beg, &ext);
        let mut ext = rho_final;
        add_into(&mut ext, &p_init_end);
        persist &= criterion(&ps_init_end, ps_end, &ext);
        persist
    }
}

/// Nesterov dual averaging of the log step size.
#[derive(Debug, Clone)]
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
            mu: 0.0,
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

    pub fn final_step_size(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Warm-up schedule: an initial fast interval, doubling slow windows for the
/// metric, and a terminal fast interval.
#[derive(Debug, Clone)]
pub struct WindowSchedule {
    pub num_warmup: usize,
    pub init_buffer: usize,
    pub term_buffer: usize,
    pub base_window: usize,
    counter: usize,
    window_size: usize,
    next_window: usize,
}

impl WindowSchedule {
    pub fn new(num_warmup: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut base_window) = (75, 50, 25);
        if num_warmup >= 20 && init_buffer + base_window + term_buffer > num_warmup {
            init_buffer = (0.15 * num_warmup as f64) as usize;
            term_buffer = (0.1 * num_warmup as f64) as usize;
            base_window = num_warmup - (init_buffer + term_buffer);
        }
        Self {
            num_warmup,
            init_buffer,
            term_buffer,
            base_window,
            counter: 0,
            window_size: base_window,
            next_window: (init_buffer + base_window).saturating_sub(1),
        }
    }

    pub fn enabled(&self) -> bool {
        self.num_warmup >= 20
    }

    fn in_window(&self) -> bool {
        self.counter >= self.init_buffer
            && self.counter < self.num_warmup - self.term_buffer
            && self.counter != self.num_warmup
    }

    fn window_end(&self) -> bool {
        self.counter == self.next_window && self.counter != self.num_warmup
    }

    fn compute_next_window(&mut self) {
        let last = self.num_warmup - self.term_buffer - 1;
        if self.next_window == last {
            return;
        }
        self.window_size *= 2;
        self.next_window = self.counter + self.window_size;
        if self.next_window != last {
            let boundary = self.next_window + 2 * self.window_size;
            if boundary >= self.num_warmup - self.term_buffer {
                self.next_window = last;
            }
        }
    }
}

/// Windowed diagonal metric estimation.
#[derive(Debug, Clone)]
pub struct VarianceAdapter {
    pub schedule: WindowSchedule,
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl VarianceAdapter {
    pub fn new(dim: usize, num_warmup: usize) -> Self {
        Self {
            schedule: WindowSchedule::new(num_warmup),
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    /// Returns true when a window closed and `inv_metric` was replaced.
    pub fn learn(&mut self, inv_metric: &mut [f64], q: &[f64]) -> bool {
        if !self.schedule.enabled() {
            return false;
        }
        if self.schedule.in_window() {
            self.n += 1;
            let nf = self.n as f64;
            for i in 0..q.len() {
                let d = q[i] - self.mean[i];
                self.mean[i] += d / nf;
                self.m2[i] += d * (q[i] - self.mean[i]);
            }
        }
        if self.schedule.window_end() {
            self.schedule.compute_next_window();
            let nf = self.n as f64;
            for i in 0..q.len() {
                let var = self.m2[i] / (nf - 1.0);
                inv_metric[i] = (nf / (nf + 5.0)) * var + 1e-3 * (5.0 / (nf + 5.0));
            }
            self.n = 0;
            self.mean.iter_mut().for_each(|v| *v = 0.0);
            self.m2.iter_mut().for_each(|v| *v = 0.0);
            self.schedule.counter += 1;
            return true;
        }
        self.schedule.counter += 1;
        false
    }
}
