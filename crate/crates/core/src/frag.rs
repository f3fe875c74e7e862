//! Multidimensional resource fragmentation metrics.
//!
//! Per node, residual resources are aggregated over hop-distance rings
//! (neighbor connectivity) and exact-length path sets (path connectivity),
//! mapped through `f = 1 / (eta + 1)` into per-dimension fragment values in
//! `(0, 1]`, then weighted by global per-dimension utilization and geometric
//! ring weights into a per-node level and the network maximum.
//!
//! Everything here is a pure function over an immutable utilization
//! snapshot, so what-if evaluations can run on cloned states.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::state::Utilization;
use crate::topology::{KhopCache, Network, NodeId};

/// Parameters of the weighted fragmentation level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FragParams<T = f64> {
    /// Maximum receptive field K (rings 0..=K are aggregated).
    pub max_field: usize,
    /// Ring weight ratio q in (0, 1]; ring k carries weight q^k.
    pub ring_ratio: T,
}

impl<T: Scalar> Default for FragParams<T> {
    fn default() -> Self {
        FragParams { max_field: 2, ring_ratio: T::from_f64_lossy(0.5) }
    }
}

/// Residual connectivity of one node at one receptive field: node-resource
/// residuals (length R1) spliced with path connectivity (length R2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityVector<T = f64> {
    pub node: NodeId,
    pub field: usize,
    pub entries: Vec<T>,
}

/// Full per-slot fragmentation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FragmentationReport<T = f64> {
    pub slot: usize,
    /// `fragments[n][k][i]` = fragment value of node n, ring k, dimension i.
    pub fragments: Vec<Vec<Vec<T>>>,
    /// Global per-dimension utilization weights (length R1 + R2).
    pub alpha: Vec<T>,
    /// Ring weights q^k for k = 0..=K.
    pub beta: Vec<T>,
    /// Per-node overall levels.
    pub node_levels: Vec<T>,
    /// Network maximum of the node levels.
    pub max_level: T,
    /// True when every alpha weight is zero (empty network); levels are then
    /// fixed at 1 by convention.
    pub vacuous: bool,
}

/// The six load metrics compared in the correlation study. Utilization is
/// expressed as a ratio of capacity per element so dimensions are
/// comparable; "Avr" averages the per-dimension statistic over all R1 + R2
/// dimensions and "Max" takes its maximum. The Frag pair aggregates the
/// weighted per-node fragmentation levels instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadMetrics<T = f64> {
    pub avr_max_util: T,
    pub avr_var: T,
    pub avr_frag: T,
    pub max_max_util: T,
    pub max_var: T,
    pub max_frag: T,
}

impl<T: Scalar> LoadMetrics<T> {
    pub fn by_name(&self) -> [(&'static str, T); 6] {
        [
            ("avr_max_util", self.avr_max_util),
            ("avr_var", self.avr_var),
            ("avr_frag", self.avr_frag),
            ("max_max_util", self.max_max_util),
            ("max_var", self.max_var),
            ("max_frag", self.max_frag),
        ]
    }
}

fn clamped_residual<T: Scalar>(cap: T, used: T) -> T {
    // Utilization can drift past capacity between migration passes; negative
    // connectivity would push f out of (0, 1], so residuals floor at zero.
    (cap - used).max(T::zero())
}

/// Mean over the k-hop path set of the per-path minimum residual, per link
/// dimension. `k = 0` and empty path sets yield the zero vector.
pub fn path_connectivity<T: Scalar>(
    util: &Utilization<T>,
    net: &Network<T>,
    khop: &KhopCache,
    n: NodeId,
    k: usize,
) -> Vec<T> {
    let r2 = net.link_dims();
    let mut out = vec![T::zero(); r2];
    if k == 0 || r2 == 0 {
        return out;
    }
    let paths = khop.paths(n, k);
    if paths.is_empty() {
        return out;
    }
    for links in paths {
        for i in 0..r2 {
            let min_residual = links
                .iter()
                .map(|&e| clamped_residual(net.link(e).capacity[i], util.link[e][i]))
                .fold(T::infinity(), T::min);
            out[i] += min_residual;
        }
    }
    let count = T::from_usize(paths.len()).unwrap();
    for x in &mut out {
        *x /= count;
    }
    out
}

/// Mean residual capacity vector over the k-hop neighbor ring. `k = 0`
/// yields the node's own residual; an empty ring yields the zero vector.
pub fn neighbor_connectivity<T: Scalar>(
    util: &Utilization<T>,
    net: &Network<T>,
    khop: &KhopCache,
    n: NodeId,
    k: usize,
) -> Vec<T> {
    let r1 = net.node_dims();
    let residual = |b: NodeId, i: usize| clamped_residual(net.node(b).capacity[i], util.node[b][i]);
    if k == 0 {
        return (0..r1).map(|i| residual(n, i)).collect();
    }
    let ring = khop.ring(n, k);
    let mut out = vec![T::zero(); r1];
    if ring.is_empty() {
        return out;
    }
    for &b in ring {
        for (i, x) in out.iter_mut().enumerate() {
            *x += residual(b, i);
        }
    }
    let count = T::from_usize(ring.len()).unwrap();
    for x in &mut out {
        *x /= count;
    }
    out
}

/// Splices neighbor and path connectivity into the ring's connectivity
/// vector (length R1 + R2).
pub fn connectivity_vector<T: Scalar>(
    util: &Utilization<T>,
    net: &Network<T>,
    khop: &KhopCache,
    n: NodeId,
    k: usize,
) -> ConnectivityVector<T> {
    let mut entries = neighbor_connectivity(util, net, khop, n, k);
    entries.extend(path_connectivity(util, net, khop, n, k));
    ConnectivityVector { node: n, field: k, entries }
}

/// `f = 1 / (eta + 1)` elementwise; 1 exactly at zero connectivity.
pub fn fragment_values<T: Scalar>(connectivity: &[T]) -> Vec<T> {
    connectivity.iter().map(|&eta| T::one() / (eta + T::one())).collect()
}

/// Global per-dimension utilization weights: network-wide used/capacity for
/// node dimensions (i < R1) then link dimensions, clamped into [0, 1].
pub fn resource_weights<T: Scalar>(util: &Utilization<T>, net: &Network<T>) -> Vec<T> {
    let r1 = net.node_dims();
    let r2 = net.link_dims();
    let mut out = Vec::with_capacity(r1 + r2);
    for i in 0..r1 {
        let used: T = (0..net.node_count()).map(|n| util.node[n][i]).sum();
        let cap: T = (0..net.node_count()).map(|n| net.node(n).capacity[i]).sum();
        out.push((used / cap).min(T::one()));
    }
    for i in 0..r2 {
        let used: T = (0..net.link_count()).map(|e| util.link[e][i]).sum();
        let cap: T = (0..net.link_count()).map(|e| net.link(e).capacity[i]).sum();
        out.push((used / cap).min(T::one()));
    }
    out
}

/// Weighted fragmentation level of one node: alpha-weighted mean of the
/// ring's fragment values, then a q^k-weighted mean over rings. Returns the
/// level and whether it is vacuous (all-zero alpha on an empty network, by
/// convention level 1).
pub fn node_fragmentation_level<T: Scalar>(
    util: &Utilization<T>,
    net: &Network<T>,
    khop: &KhopCache,
    params: &FragParams<T>,
    alpha: &[T],
    n: NodeId,
) -> (T, bool) {
    let alpha_sum: T = alpha.iter().copied().sum();
    if alpha_sum == T::zero() {
        return (T::one(), true);
    }
    let mut level_num = T::zero();
    let mut level_den = T::zero();
    let mut beta = T::one();
    for k in 0..=params.max_field {
        let conn = connectivity_vector(util, net, khop, n, k);
        let mut ring_num = T::zero();
        for (i, &eta) in conn.entries.iter().enumerate() {
            ring_num += alpha[i] * (T::one() / (eta + T::one()));
        }
        let ring_level = ring_num / alpha_sum;
        level_num += beta * ring_level;
        level_den += beta;
        beta *= params.ring_ratio;
    }
    (level_num / level_den, false)
}

/// Maximum over nodes of the weighted fragmentation level.
pub fn max_weighted_fragmentation<T: Scalar>(
    util: &Utilization<T>,
    net: &Network<T>,
    khop: &KhopCache,
    params: &FragParams<T>,
) -> T {
    let alpha = resource_weights(util, net);
    (0..net.node_count())
        .map(|n| node_fragmentation_level(util, net, khop, params, &alpha, n).0)
        .fold(T::neg_infinity(), T::max)
}

/// Builds the full per-node, per-ring, per-dimension report.
pub fn fragmentation_report<T: Scalar>(
    util: &Utilization<T>,
    net: &Network<T>,
    khop: &KhopCache,
    params: &FragParams<T>,
    slot: usize,
) -> FragmentationReport<T> {
    let alpha = resource_weights(util, net);
    let vacuous = alpha.iter().all(|&a| a == T::zero());
    let beta: Vec<T> = (0..=params.max_field)
        .map(|k| params.ring_ratio.powi(k as i32))
        .collect();
    let mut fragments = Vec::with_capacity(net.node_count());
    let mut node_levels = Vec::with_capacity(net.node_count());
    for n in 0..net.node_count() {
        let mut rings = Vec::with_capacity(params.max_field + 1);
        for k in 0..=params.max_field {
            let conn = connectivity_vector(util, net, khop, n, k);
            rings.push(fragment_values(&conn.entries));
        }
        fragments.push(rings);
        node_levels.push(node_fragmentation_level(util, net, khop, params, &alpha, n).0);
    }
    let max_level = node_levels.iter().copied().fold(T::neg_infinity(), T::max);
    FragmentationReport { slot, fragments, alpha, beta, node_levels, max_level, vacuous }
}

/// Computes the six load metrics of the correlation study.
pub fn load_metric_suite<T: Scalar>(
    util: &Utilization<T>,
    net: &Network<T>,
    khop: &KhopCache,
    params: &FragParams<T>,
) -> LoadMetrics<T> {
    let r1 = net.node_dims();
    let r2 = net.link_dims();
    let dims = r1 + r2;
    let mut max_util = Vec::with_capacity(dims);
    let mut var = Vec::with_capacity(dims);
    for i in 0..r1 {
        let ratios: Vec<T> = (0..net.node_count())
            .map(|n| util.node[n][i] / net.node(n).capacity[i])
            .collect();
        max_util.push(ratios.iter().copied().fold(T::neg_infinity(), T::max));
        var.push(population_variance(&ratios));
    }
    for i in 0..r2 {
        let ratios: Vec<T> = (0..net.link_count())
            .map(|e| util.link[e][i] / net.link(e).capacity[i])
            .collect();
        max_util.push(ratios.iter().copied().fold(T::neg_infinity(), T::max));
        var.push(population_variance(&ratios));
    }

    let alpha = resource_weights(util, net);
    let levels: Vec<T> = (0..net.node_count())
        .map(|n| node_fragmentation_level(util, net, khop, params, &alpha, n).0)
        .collect();
    let n_nodes = T::from_usize(levels.len()).unwrap();
    let n_dims = T::from_usize(dims).unwrap();
    LoadMetrics {
        avr_max_util: max_util.iter().copied().sum::<T>() / n_dims,
        avr_var: var.iter().copied().sum::<T>() / n_dims,
        avr_frag: levels.iter().copied().sum::<T>() / n_nodes,
        max_max_util: max_util.into_iter().fold(T::neg_infinity(), T::max),
        max_var: var.into_iter().fold(T::neg_infinity(), T::max),
        max_frag: levels.into_iter().fold(T::neg_infinity(), T::max),
    }
}

fn population_variance<T: Scalar>(xs: &[T]) -> T {
    let n = T::from_usize(xs.len()).unwrap();
    let mean = xs.iter().copied().sum::<T>() / n;
    xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n
}

// --- Correlation coefficients -------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationMethod {
    Pearson,
    Spearman,
    KendallTauB,
    Distance,
}

impl CorrelationMethod {
    pub const ALL: [CorrelationMethod; 4] = [
        CorrelationMethod::Pearson,
        CorrelationMethod::Spearman,
        CorrelationMethod::KendallTauB,
        CorrelationMethod::Distance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorrelationMethod::Pearson => "pearson",
            CorrelationMethod::Spearman => "spearman",
            CorrelationMethod::KendallTauB => "kendall-tau-b",
            CorrelationMethod::Distance => "distance",
        }
    }
}

#[derive(Debug, Error)]
pub enum CorrelationError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("correlation needs at least 3 samples, got {0}")]
    TooShort(usize),
    #[error("correlation undefined: series has zero variance")]
    ZeroVariance,
}

/// Correlation coefficient of two equal-length series.
pub fn correlate<T: Scalar>(
    x: &[T],
    y: &[T],
    method: CorrelationMethod,
) -> Result<T, CorrelationError> {
    if x.len() != y.len() {
        return Err(CorrelationError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(CorrelationError::TooShort(x.len()));
    }
    match method {
        CorrelationMethod::Pearson => pearson(x, y),
        CorrelationMethod::Spearman => pearson(&ranks(x), &ranks(y)),
        CorrelationMethod::KendallTauB => kendall_tau_b(x, y),
        CorrelationMethod::Distance => distance_correlation(x, y),
    }
}

fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T, CorrelationError> {
    let n = T::from_usize(x.len()).unwrap();
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let mut sxx = T::zero();
    let mut syy = T::zero();
    let mut sxy = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(CorrelationError::ZeroVariance);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Average ranks with ties (1-based).
fn ranks<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut out = vec![T::zero(); xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = T::from_usize(i + j + 2).unwrap() / T::from_f64_lossy(2.0);
        for &idx in &order[i..=j] {
            out[idx] = avg;
        }
        i = j + 1;
    }
    out
}

fn kendall_tau_b<T: Scalar>(x: &[T], y: &[T]) -> Result<T, CorrelationError> {
    let n = x.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    let mut ties_x = 0i64;
    let mut ties_y = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = x[i].partial_cmp(&x[j]).unwrap();
            let dy = y[i].partial_cmp(&y[j]).unwrap();
            use std::cmp::Ordering::*;
            match (dx, dy) {
                (Equal, Equal) => {}
                (Equal, _) => ties_x += 1,
                (_, Equal) => ties_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom_x = n0 - count_tie_pairs(x);
    let denom_y = n0 - count_tie_pairs(y);
    if denom_x == 0 || denom_y == 0 {
        return Err(CorrelationError::ZeroVariance);
    }
    let _ = (ties_x, ties_y);
    let denom = ((denom_x as f64) * (denom_y as f64)).sqrt();
    Ok(T::from_f64_lossy((concordant - discordant) as f64 / denom))
}

fn count_tie_pairs<T: Scalar>(xs: &[T]) -> i64 {
    let mut sorted: Vec<T> = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut pairs = 0i64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let run = (j - i + 1) as i64;
        pairs += run * (run - 1) / 2;
        i = j + 1;
    }
    pairs
}

/// Distance correlation (non-negative; 0 iff independence in the limit).
fn distance_correlation<T: Scalar>(x: &[T], y: &[T]) -> Result<T, CorrelationError> {
    let n = x.len();
    let a = centered_distance_matrix(x);
    let b = centered_distance_matrix(y);
    let nf = T::from_usize(n * n).unwrap();
    let mut dcov = T::zero();
    let mut dvar_x = T::zero();
    let mut dvar_y = T::zero();
    for i in 0..n {
        for j in 0..n {
            dcov += a[i][j] * b[i][j];
            dvar_x += a[i][j] * a[i][j];
            dvar_y += b[i][j] * b[i][j];
        }
    }
    dcov /= nf;
    dvar_x /= nf;
    dvar_y /= nf;
    if dvar_x == T::zero() || dvar_y == T::zero() {
        return Err(CorrelationError::ZeroVariance);
    }
    Ok((dcov / (dvar_x * dvar_y).sqrt()).max(T::zero()).sqrt())
}

fn centered_distance_matrix<T: Scalar>(xs: &[T]) -> Vec<Vec<T>> {
    let n = xs.len();
    let nf = T::from_usize(n).unwrap();
    let mut d = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            d[i][j] = (xs[i] - xs[j]).abs();
        }
    }
    let row_means: Vec<T> = d.iter().map(|r| r.iter().copied().sum::<T>() / nf).collect();
    let grand = row_means.iter().copied().sum::<T>() / nf;
    for i in 0..n {
        for j in 0..n {
            d[i][j] = d[i][j] - row_means[i] - row_means[j] + grand;
        }
    }
    d
}
