use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};

/// One weighted diagonal Gaussian, with its normalizer cached.
#[derive(Debug, Clone, PartialEq)]
struct Component {
    weight: f64,
    mean: Vec<f64>,
    var: Vec<f64>,
    inv_var: Vec<f64>,
    /// `ln w - 0.5 * sum_d ln(2 pi var_d)`
    log_norm: f64,
}

impl Component {
    fn new(weight: f64, mean: Vec<f64>, var: Vec<f64>) -> Self {
        let inv_var = var.iter().map(|v| 1.0 / v).collect();
        let log_det: f64 = var.iter().map(|v| (2.0 * PI * v).ln()).sum();
        Self {
            log_norm: weight.ln() - 0.5 * log_det,
            weight,
            mean,
            var,
            inv_var,
        }
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let mut maha = 0.0;
        for ((xi, mi), iv) in x.iter().zip(&self.mean).zip(&self.inv_var) {
            let d = xi - mi;
            maha += d * d * iv;
        }
        self.log_norm - 0.5 * maha
    }
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Gmm {
    dim: usize,
    components: Vec<Component>,
}

impl Gmm {
    /// Validates and assembles a mixture: weights in `[0, 1]` summing to 1
    /// within 1e-9, strictly positive variances, all values finite.
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || variances.len() != k {
            return Err(Error::InvalidInput(format!(
                "mixture needs matching weights/means/variances, got {}/{}/{}",
                k,
                means.len(),
                variances.len()
            )));
        }
        let dim = means[0].len();
        if dim == 0 {
            return Err(Error::InvalidInput(
                "mixture dimension must be positive".into(),
            ));
        }
        for (m, v) in means.iter().zip(&variances) {
            if m.len() != dim || v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: if m.len() != dim { m.len() } else { v.len() },
                });
            }
            if m.iter().any(|x| !x.is_finite()) || v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return Err(Error::InvalidInput(
                    "means must be finite and variances finite and positive".into(),
                ));
            }
        }
        if weights
            .iter()
            .any(|w| !(w.is_finite() && (0.0..=1.0).contains(w)))
        {
            return Err(Error::InvalidInput("weights must lie in [0, 1]".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "weights sum to {total}, not 1"
            )));
        }
        let components = weights
            .into_iter()
            .zip(means)
            .zip(variances)
            .map(|((w, m), v)| Component::new(w, m, v))
            .collect();
        Ok(Self { dim, components })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.components.iter().map(|c| c.weight)
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.components[k].mean
    }

    pub fn variance(&self, k: usize) -> &[f64] {
        &self.components[k].var
    }

    /// `ln sum_k w_k N(x; mu_k, diag var_k)` via log-sum-exp. Always finite
    /// for finite `x` of the right dimension.
    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut best = f64::NEG_INFINITY;
        let mut terms = [0.0f64; 16];
        let mut spill = Vec::new();
        let buf: &mut [f64] = if self.components.len() <= terms.len() {
            &mut terms[..self.components.len()]
        } else {
            spill.resize(self.components.len(), 0.0);
            &mut spill
        };
        for (t, c) in buf.iter_mut().zip(&self.components) {
            *t = c.log_density(x);
            best = best.max(*t);
        }
        if !best.is_finite() {
            return -f64::MAX;
        }
        let sum: f64 = buf.iter().map(|t| (t - best).exp()).sum();
        let ll = best + sum.ln();
        if ll.is_finite() {
            ll
        } else {
            -f64::MAX
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    pub components: usize,
    pub max_iters: usize,
    pub variance_floor: f64,
    /// Stop once the total log-likelihood improves by less than this per frame.
    pub tolerance_per_frame: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            components: 4,
            max_iters: 50,
            variance_floor: 1e-4,
            tolerance_per_frame: 1e-6,
        }
    }
}

/// Result of one EM run.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub gmm: Gmm,
    /// Total data log-likelihood at the k-means initialization and after
    /// every EM iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

const DEAD_COMPONENT: f64 = 1e-12;

/// Fits a `cfg.components`-component mixture to row-major `data` by
/// k-means-seeded EM. `label` names the data in errors.
pub fn fit_em<R: Rng>(
    data: &[f64],
    dim: usize,
    cfg: &EmConfig,
    rng: &mut R,
    label: &str,
) -> Result<EmFit> {
    let n = data.len() / dim;
    let k = cfg.components;
    if k == 0 || n < k {
        return Err(Error::InsufficientData {
            phone: label.to_string(),
            frames: n,
            needed: k.max(1),
        });
    }
    let rows: Vec<&[f64]> = data.chunks_exact(dim).collect();

    let (centroids, labels) = kmeans(&rows, k, rng);
    let global_var = moments(&rows, &vec![1.0; n]).1;
    let fallback: Vec<(Vec<f64>, Vec<f64>)> = centroids
        .into_iter()
        .map(|c| (c, floor_vec(global_var.clone(), cfg.variance_floor)))
        .collect();
    let mut resp = vec![0.0; n * k];
    for (i, &l) in labels.iter().enumerate() {
        resp[i * k + l] = 1.0;
    }
    let mut gmm = m_step(&rows, &resp, k, cfg.variance_floor, &fallback)?;
    let mut ll = e_step(&gmm, &rows, &mut resp);
    if !ll.is_finite() {
        return Err(Error::NonFinite {
            phone: label.to_string(),
            iteration: 0,
        });
    }
    let mut trace = vec![ll];
    let mut iterations = 0;

    for iter in 1..=cfg.max_iters {
        let prev: Vec<(Vec<f64>, Vec<f64>)> = gmm
            .components
            .iter()
            .map(|c| (c.mean.clone(), c.var.clone()))
            .collect();
        let next =
            m_step(&rows, &resp, k, cfg.variance_floor, &prev).map_err(|_| Error::NonFinite {
                phone: label.to_string(),
                iteration: iter,
            })?;
        let next_ll = e_step(&next, &rows, &mut resp);
        if !next_ll.is_finite() {
            return Err(Error::NonFinite {
                phone: label.to_string(),
                iteration: iter,
            });
        }
        trace.push(next_ll);
        iterations = iter;
        let gain = next_ll - ll;
        gmm = next;
        ll = next_ll;
        if gain < cfg.tolerance_per_frame * n as f64 {
            break;
        }
    }
    Ok(EmFit {
        gmm,
        trace,
        iterations,
    })
}

/// Fills `resp` with posteriors and returns the total log-likelihood.
fn e_step(gmm: &Gmm, rows: &[&[f64]], resp: &mut [f64]) -> f64 {
    let k = gmm.components.len();
    let mut total = 0.0;
    for (i, x) in rows.iter().enumerate() {
        let r = &mut resp[i * k..(i + 1) * k];
        let mut best = f64::NEG_INFINITY;
        for (slot, c) in r.iter_mut().zip(&gmm.components) {
            *slot = c.log_density(x);
            best = best.max(*slot);
        }
        let mut sum = 0.0;
        for slot in r.iter_mut() {
            *slot = (*slot - best).exp();
            sum += *slot;
        }
        for slot in r.iter_mut() {
            *slot /= sum;
        }
        total += best + sum.ln();
    }
    total
}

fn m_step(
    rows: &[&[f64]],
    resp: &[f64],
    k: usize,
    floor: f64,
    fallback: &[(Vec<f64>, Vec<f64>)],
) -> Result<Gmm> {
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut vars = Vec::with_capacity(k);
    for (j, (fallback_mean, fallback_var)) in fallback.iter().enumerate().take(k) {
        let r: Vec<f64> = resp.iter().skip(j).step_by(k).copied().collect();
        let nk: f64 = r.iter().sum();
        weights.push(nk);
        if nk < DEAD_COMPONENT {
            means.push(fallback_mean.clone());
            vars.push(fallback_var.clone());
        } else {
            let (m, v) = moments(rows, &r);
            means.push(m);
            vars.push(floor_vec(v, floor));
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Gmm::new(weights, means, vars)
}

/// Weighted mean and (maximum-likelihood) variance of `rows`.
fn moments(rows: &[&[f64]], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dim = rows[0].len();
    let mut total = 0.0;
    let mut mean = vec![0.0; dim];
    for (x, &w) in rows.iter().zip(weights) {
        total += w;
        for d in 0..dim {
            mean[d] += w * x[d];
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let mut var = vec![0.0; dim];
    for (x, &w) in rows.iter().zip(weights) {
        for d in 0..dim {
            let diff = x[d] - mean[d];
            var[d] += w * diff * diff;
        }
    }
    var.iter_mut().for_each(|v| *v /= total);
    (mean, var)
}

fn floor_vec(mut v: Vec<f64>, floor: f64) -> Vec<f64> {
    v.iter_mut().for_each(|x| *x = x.max(floor));
    v
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations. Empty clusters keep
/// their previous centroid.
fn kmeans<R: Rng>(rows: &[&[f64]], k: usize, rng: &mut R) -> (Vec<Vec<f64>>, Vec<usize>) {
    let n = rows.len();
    let mut centroids = vec![rows[rng.random_range(0..n)].to_vec()];
    let mut dist: Vec<f64> = rows.iter().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, d) in dist.iter().enumerate() {
                if target < *d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centroids.push(rows[pick].to_vec());
        for (d, x) in dist.iter_mut().zip(rows) {
            *d = d.min(sq_dist(x, centroids.last().unwrap()));
        }
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..25 {
        let mut changed = false;
        for (l, x) in labels.iter_mut().zip(rows) {
            let (j, _) = nearest(x, &centroids);
            changed |= *l != j;
            *l = j;
        }
        if !changed {
            break;
        }
        let dim = rows[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&l, x) in labels.iter().zip(rows) {
            counts[l] += 1;
            for d in 0..dim {
                sums[l][d] += x[d];
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    (centroids, labels)
}
