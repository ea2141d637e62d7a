//! Positions of every model symbol inside the flat unconstrained vector.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::ingest::Sex;

/// Coordinates owned by one sex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SexBlock {
    pub sex: Sex,
    /// Coordinates of the `s_α` coefficients: the coefficients themselves,
    /// or whitened ones when the smooth is non-centred.
    pub beta_alpha: Range<usize>,
    pub beta_beta: Range<usize>,
    /// `log σ_A`, `log σ_B` for `s_α` then for `s_β`. With shared scales the
    /// `s_β` entries point at the `s_α` ones.
    pub log_sigma_alpha: [usize; 2],
    pub log_sigma_beta: [usize; 2],
    pub z_gamma: Range<usize>,
    pub log_sigma_gamma: usize,
    pub beta_old0: usize,
    /// Raw coordinates mapped to `β₁, β₂, β₃`.
    pub old_raw: [usize; 3],
    pub infant: [usize; 2],
    pub log_phi: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterLayout {
    pub blocks: Vec<SexBlock>,
    pub z_kappa: Vec<Range<usize>>,
    pub log_sigma_kappa: Vec<usize>,
    pub logit_rho: Option<usize>,
    pub log_psi: usize,
    pub shared_smooth_scales: bool,
    /// Whether `s_α`, `s_β` are sampled through whitened coordinates.
    pub noncentred: [bool; 2],
    names: Vec<String>,
}

struct Cursor {
    pos: usize,
    names: Vec<String>,
    prefix: String,
}

impl Cursor {
    fn one(&mut self, name: &str) -> usize {
        self.names.push(format!("{}{name}", self.prefix));
        self.pos += 1;
        self.pos - 1
    }

    fn many(&mut self, name: &str, n: usize) -> Range<usize> {
        let start = self.pos;
        for i in 0..n {
            self.names.push(format!("{}{name}[{i}]", self.prefix));
        }
        self.pos += n;
        start..self.pos
    }
}

impl ParameterLayout {
    /// One block per sex in `sexes`; a single sex gives the single-sex layout,
    /// two give the joint layout with correlated period innovations.
    pub fn new(
        sexes: &[Sex],
        n_smooth: usize,
        n_gamma_free: usize,
        n_kappa_free: usize,
        shared_smooth_scales: bool,
        noncentred: [bool; 2],
    ) -> Self {
        assert!(matches!(sexes.len(), 1 | 2));
        let joint = sexes.len() == 2;
        let mut cur = Cursor {
            pos: 0,
            names: Vec::new(),
            prefix: String::new(),
        };
        let mut blocks = Vec::new();
        for &sex in sexes {
            cur.prefix = if joint { format!("{sex}.") } else { String::new() };
            let beta_alpha = cur.many(if noncentred[0] { "z_alpha" } else { "beta_alpha" }, n_smooth);
            let beta_beta = cur.many(if noncentred[1] { "z_beta" } else { "beta_beta" }, n_smooth);
            let (log_sigma_alpha, log_sigma_beta) = if shared_smooth_scales {
                let s = [cur.one("log_sigma_a"), cur.one("log_sigma_b")];
                (s, s)
            } else {
                (
                    [cur.one("log_sigma_a_alpha"), cur.one("log_sigma_b_alpha")],
                    [cur.one("log_sigma_a_beta"), cur.one("log_sigma_b_beta")],
                )
            };
            let z_gamma = cur.many("z_gamma", n_gamma_free);
            let log_sigma_gamma = cur.one("log_sigma_gamma");
            let beta_old0 = cur.one("beta_old0");
            let old_raw = [cur.one("r_old1"), cur.one("r_old2"), cur.one("r_old3")];
            let infant = [cur.one("infant_intercept"), cur.one("infant_slope")];
            let log_phi = cur.one("log_phi");
            blocks.push(SexBlock {
                sex,
                beta_alpha,
                beta_beta,
                log_sigma_alpha,
                log_sigma_beta,
                z_gamma,
                log_sigma_gamma,
                beta_old0,
                old_raw,
                infant,
                log_phi,
            });
        }
        let mut z_kappa = Vec::new();
        for &sex in sexes {
            cur.prefix = if joint { format!("{sex}.") } else { String::new() };
            z_kappa.push(cur.many("z_kappa", n_kappa_free));
        }
        let mut log_sigma_kappa = Vec::new();
        for &sex in sexes {
            cur.prefix = if joint { format!("{sex}.") } else { String::new() };
            log_sigma_kappa.push(cur.one("log_sigma_kappa"));
        }
        cur.prefix.clear();
        let logit_rho = joint.then(|| cur.one("logit_rho"));
        let log_psi = cur.one("log_psi");
        Self {
            blocks,
            z_kappa,
            log_sigma_kappa,
            logit_rho,
            log_psi,
            shared_smooth_scales,
            noncentred,
            names: cur.names,
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    /// Stable parameter names, in vector order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn n_sexes(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_joint(&self) -> bool {
        self.blocks.len() == 2
    }

    /// Distinct smoothing-scale coordinates of one block.
    pub fn smooth_scale_indices(&self, block: usize) -> Vec<usize> {
        let b = &self.blocks[block];
        let mut v = b.log_sigma_alpha.to_vec();
        if !self.shared_smooth_scales {
            v.extend(b.log_sigma_beta);
        }
        v
    }
}

/// Named read-only views onto a sampler vector.
#[derive(Debug, Clone, Copy)]
pub struct ParameterState<'a> {
    pub layout: &'a ParameterLayout,
    pub values: &'a [f64],
}

impl<'a> ParameterState<'a> {
    pub fn new(layout: &'a ParameterLayout, values: &'a [f64]) -> Self {
        assert_eq!(values.len(), layout.dim(), "state length");
        Self { layout, values }
    }

    /// Raw `s_α` coordinates; see `MortalityModel::smooth_coef` for the
    /// coefficients.
    pub fn beta_alpha(&self, s: usize) -> &'a [f64] {
        &self.values[self.layout.blocks[s].beta_alpha.clone()]
    }

    pub fn beta_beta(&self, s: usize) -> &'a [f64] {
        &self.values[self.layout.blocks[s].beta_beta.clone()]
    }

    pub fn z_gamma(&self, s: usize) -> &'a [f64] {
        &self.values[self.layout.blocks[s].z_gamma.clone()]
    }

    pub fn z_kappa(&self, s: usize) -> &'a [f64] {
        &self.values[self.layout.z_kappa[s].clone()]
    }

    pub fn sigma_alpha(&self, s: usize) -> (f64, f64) {
        let [a, b] = self.layout.blocks[s].log_sigma_alpha;
        (self.values[a].exp(), self.values[b].exp())
    }

    pub fn sigma_beta(&self, s: usize) -> (f64, f64) {
        let [a, b] = self.layout.blocks[s].log_sigma_beta;
        (self.values[a].exp(), self.values[b].exp())
    }

    pub fn sigma_gamma(&self, s: usize) -> f64 {
        self.values[self.layout.blocks[s].log_sigma_gamma].exp()
    }

    pub fn sigma_kappa(&self, s: usize) -> f64 {
        self.values[self.layout.log_sigma_kappa[s]].exp()
    }

    pub fn beta_old0(&self, s: usize) -> f64 {
        self.values[self.layout.blocks[s].beta_old0]
    }

    pub fn old_raw(&self, s: usize) -> [f64; 3] {
        self.layout.blocks[s].old_raw.map(|i| self.values[i])
    }

    pub fn infant(&self, s: usize) -> (f64, f64) {
        let [a, b] = self.layout.blocks[s].infant;
        (self.values[a], self.values[b])
    }

    pub fn phi(&self, s: usize) -> f64 {
        self.values[self.layout.blocks[s].log_phi].exp()
    }

    pub fn log_psi(&self) -> f64 {
        self.values[self.layout.log_psi]
    }

    /// Cross-sex correlation of the period innovations, on `(0, 1)`.
    pub fn rho(&self) -> Option<f64> {
        self.layout.logit_rho.map(|i| logistic(self.values[i]))
    }
}

pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn views_partition_the_vector() {
        for (sexes, shared) in [
            (vec![Sex::Female], false),
            (vec![Sex::Male], true),
            (vec![Sex::Female, Sex::Male], false),
        ] {
            let l = ParameterLayout::new(&sexes, 7, 5, 4, shared, [false, shared]);
            let mut hit = vec![0usize; l.dim()];
            let mut mark = |r: Range<usize>| r.for_each(|i| hit[i] += 1);
            for (k, b) in l.blocks.iter().enumerate() {
                mark(b.beta_alpha.clone());
                mark(b.beta_beta.clone());
                for i in l.smooth_scale_indices(k) {
                    mark(i..i + 1);
                }
                mark(b.z_gamma.clone());
                for i in [b.log_sigma_gamma, b.beta_old0, b.log_phi]
                    .into_iter()
                    .chain(b.old_raw)
                    .chain(b.infant)
                {
                    mark(i..i + 1);
                }
            }
            for r in &l.z_kappa {
                mark(r.clone());
            }
            for &i in l.log_sigma_kappa.iter().chain(&l.logit_rho).chain([&l.log_psi]) {
                mark(i..i + 1);
            }
            assert!(hit.iter().all(|&h| h == 1), "{hit:?}");
            let unique: std::collections::HashSet<_> = l.names().iter().collect();
            assert_eq!(unique.len(), l.dim());
        }
    }

    #[test]
    fn joint_names_are_prefixed() {
        let l = ParameterLayout::new(&[Sex::Female, Sex::Male], 3, 2, 2, false, [false, true]);
        assert_eq!(l.names()[0], "female.beta_alpha[0]");
        assert_eq!(l.names()[3], "female.z_beta[0]");
        assert!(l.index_of("male.log_sigma_kappa").is_some());
        assert_eq!(l.names().last().unwrap(), "log_psi");
        assert_eq!(l.index_of("logit_rho"), l.logit_rho);
    }
}
