//! Multi-hop graph attention model: input tensor construction, three
//! edge-aware attention layers over the 1-, 2- and 3-hop graphs with
//! residual connections, a three-layer linear head, hand-derived gradients,
//! Adam training and checkpointing.
//!
//! The model maps a network state plus one migration candidate VNF to a
//! per-node prediction of the post-migration maximum weighted fragmentation
//! level; lower predictions mark better destinations.

mod checkpoint;
pub mod dataset;
mod layer;
mod tensor;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use dataset::{read_dataset, write_dataset, DatasetRecord};
pub use layer::{GatCache, GatLayerParams};
pub use tensor::Mat;
pub use train::{train, Adam, EpochStats, TrainConfig, TrainLog};

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::state::{LinkKey, NetworkState, VnfKey};
use crate::topology::{derive_multi_hop_graph, MultiHopGraph, Network};

/// How the VNF's adjacent link demand is aggregated into the edge tensor.
/// The summed form is the default; the mean form exists for sensitivity
/// checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeDemandMode {
    #[default]
    Sum,
    Average,
}

/// Node feature tensor: row i is the candidate VNF's demand as a ratio of
/// node i's capacities, spliced with node i's utilization ratios
/// (`|N| x 2 R1`).
pub fn build_node_features<T: Scalar>(
    state: &NetworkState<T>,
    net: &Network<T>,
    vnf: VnfKey,
) -> Mat<T> {
    let r1 = net.node_dims();
    let demand = state.vnf_demand(vnf);
    let mut out = Mat::zeros(net.node_count(), 2 * r1);
    for n in 0..net.node_count() {
        let cap = &net.node(n).capacity;
        let row = out.row_mut(n);
        for i in 0..r1 {
            row[i] = demand[i] / cap[i];
            row[r1 + i] = state.node_utilization(n, i) / cap[i];
        }
    }
    out
}

/// Edge feature tensor (`2|E| x 2 R2`): per directed edge, the VNF's
/// aggregate adjacent-link demand and the edge utilization, both as capacity
/// ratios. Each undirected edge contributes two identical rows (rows 2e and
/// 2e + 1), matching the directed-edge convention of the attention layer.
pub fn build_edge_features_mode<T: Scalar>(
    state: &NetworkState<T>,
    net: &Network<T>,
    vnf: VnfKey,
    mode: EdgeDemandMode,
) -> Mat<T> {
    let r2 = net.link_dims();
    let sfc = state.sfc(vnf.sfc).expect("vnf belongs to an active sfc");
    let mut link_demand = vec![T::zero(); r2];
    let mut adjacent = 0usize;
    for l in sfc.upstream_links(vnf.vnf).chain(sfc.downstream_links(vnf.vnf)) {
        let d = state.link_demand(LinkKey { sfc: vnf.sfc, link: l.id });
        for i in 0..r2 {
            link_demand[i] += d[i];
        }
        adjacent += 1;
    }
    if mode == EdgeDemandMode::Average && adjacent > 0 {
        let count = T::from_usize(adjacent).unwrap();
        for d in &mut link_demand {
            *d /= count;
        }
    }
    let mut out = Mat::zeros(2 * net.link_count(), 2 * r2);
    for e in 0..net.link_count() {
        let cap = &net.link(e).capacity;
        for dir in 0..2 {
            let row = out.row_mut(2 * e + dir);
            for i in 0..r2 {
                row[i] = link_demand[i] / cap[i];
                row[r2 + i] = state.link_utilization(e, i) / cap[i];
            }
        }
    }
    out
}

/// Edge feature tensor with the default summed demand aggregation.
pub fn build_edge_features<T: Scalar>(
    state: &NetworkState<T>,
    net: &Network<T>,
    vnf: VnfKey,
) -> Mat<T> {
    build_edge_features_mode(state, net, vnf, EdgeDemandMode::Sum)
}

/// Maps directed node pairs to rows of the edge feature tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<(usize, usize, usize)>", into = "Vec<(usize, usize, usize)>")]
pub struct EdgeIndex {
    pairs: BTreeMap<(usize, usize), usize>,
}

impl From<Vec<(usize, usize, usize)>> for EdgeIndex {
    fn from(entries: Vec<(usize, usize, usize)>) -> Self {
        EdgeIndex { pairs: entries.into_iter().map(|(u, v, row)| ((u, v), row)).collect() }
    }
}

impl From<EdgeIndex> for Vec<(usize, usize, usize)> {
    fn from(index: EdgeIndex) -> Self {
        index.pairs.into_iter().map(|((u, v), row)| (u, v, row)).collect()
    }
}

impl EdgeIndex {
    pub fn build<T: Scalar>(net: &Network<T>) -> Self {
        let mut pairs = BTreeMap::new();
        for link in net.links() {
            let (u, v) = link.endpoints;
            pairs.insert((u, v), 2 * link.id);
            pairs.insert((v, u), 2 * link.id + 1);
        }
        EdgeIndex { pairs }
    }

    pub fn row(&self, i: usize, j: usize) -> Option<usize> {
        self.pairs.get(&(i, j)).copied()
    }
}

struct EdgeView<'a, T> {
    index: &'a EdgeIndex,
    mat: &'a Mat<T>,
}

impl<'a, T: Scalar> layer::EdgeLookup<T> for EdgeView<'a, T> {
    fn edge_row(&self, i: usize, j: usize) -> Option<&[T]> {
        self.index.row(i, j).map(|r| self.mat.row(r))
    }
}

/// Ablation switches; the full model leaves all off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ablation {
    /// Replace attention by uniform neighborhood averaging.
    pub no_gat: bool,
    /// Drop the residual connections.
    pub no_residual: bool,
    /// Feed every layer the base graph instead of the multi-hop graphs.
    pub no_multi_hop: bool,
}

impl Ablation {
    pub const NONE: Ablation = Ablation { no_gat: false, no_residual: false, no_multi_hop: false };

    pub fn parse(name: &str) -> Option<Ablation> {
        match name {
            "none" | "full" => Some(Ablation::NONE),
            "no-gat" => Some(Ablation { no_gat: true, ..Ablation::NONE }),
            "no-resnet" | "no-residual" => Some(Ablation { no_residual: true, ..Ablation::NONE }),
            "no-mhg" | "no-multi-hop" => Some(Ablation { no_multi_hop: true, ..Ablation::NONE }),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match (self.no_gat, self.no_residual, self.no_multi_hop) {
            (true, _, _) => "no-gat",
            (false, true, _) => "no-resnet",
            (false, false, true) => "no-mhg",
            _ => "full",
        }
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelHyper<T = f64> {
    pub heads: usize,
    pub head_dim: usize,
    /// Widths of the first two linear layers; the third outputs one value.
    pub lin_hidden: (usize, usize),
    pub leak: T,
}

impl<T: Scalar> Default for ModelHyper<T> {
    fn default() -> Self {
        ModelHyper { heads: 4, head_dim: 8, lin_hidden: (32, 16), leak: T::from_f64_lossy(0.2) }
    }
}

/// One dense layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear<T = f64> {
    pub w: Mat<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    fn zeros_like(&self) -> Linear<T> {
        Linear { w: Mat::zeros(self.w.rows, self.w.cols), b: vec![T::zero(); self.b.len()] }
    }
}

/// All trainable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T = f64> {
    pub gat: Vec<GatLayerParams<T>>,
    pub lin: Vec<Linear<T>>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros_like(&self) -> ModelParams<T> {
        ModelParams {
            gat: self.gat.iter().map(|g| g.zeros_like()).collect(),
            lin: self.lin.iter().map(|l| l.zeros_like()).collect(),
        }
    }

    fn visit(&self, f: &mut impl FnMut(T)) {
        for g in &self.gat {
            for w in &g.w {
                for &v in &w.data {
                    f(v);
                }
            }
            for a in &g.a {
                for &v in a {
                    f(v);
                }
            }
            for a2 in &g.a2 {
                for &v in a2 {
                    f(v);
                }
            }
        }
        for l in &self.lin {
            for &v in &l.w.data {
                f(v);
            }
            for &v in &l.b {
                f(v);
            }
        }
    }

    fn visit_mut(&mut self, f: &mut impl FnMut(&mut T)) {
        for g in &mut self.gat {
            for w in &mut g.w {
                for v in &mut w.data {
                    f(v);
                }
            }
            for a in &mut g.a {
                for v in a {
                    f(v);
                }
            }
            for a2 in &mut g.a2 {
                for v in a2 {
                    f(v);
                }
            }
        }
        for l in &mut self.lin {
            for v in &mut l.w.data {
                f(v);
            }
            for v in &mut l.b {
                f(v);
            }
        }
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        self.visit(&mut |v| out.push(v));
        out
    }

    pub fn load_flat(&mut self, flat: &[T]) {
        let mut it = flat.iter();
        self.visit_mut(&mut |v| *v = *it.next().expect("flat parameter length matches"));
        assert!(it.next().is_none(), "flat parameter length matches");
    }

    pub fn count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }
}

/// The assembled model. The derived multi-hop graphs and the edge index are
/// carried alongside the parameters so a checkpoint is self-contained.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MhgatModel<T = f64> {
    pub hyper: ModelHyper<T>,
    pub ablation: Ablation,
    pub params: ModelParams<T>,
    pub graphs: Vec<MultiHopGraph>,
    pub edge_index: EdgeIndex,
    /// Structural hash of the topology the model was built for.
    pub topology_hash: String,
}

/// Intermediate activations exposed for the ablation tap tests.
pub struct ForwardTaps<T> {
    pub o1: Mat<T>,
    pub o2: Mat<T>,
    pub o2_res: Mat<T>,
    pub o3: Mat<T>,
    pub o3_res: Mat<T>,
    pub out: Vec<T>,
}

struct ForwardCache<T> {
    o1: Mat<T>,
    o2_res: Mat<T>,
    g1: GatCache<T>,
    g2: GatCache<T>,
    g3: GatCache<T>,
    /// Per linear layer: input and pre-activation rows.
    lin_in: Vec<Mat<T>>,
    lin_pre: Vec<Mat<T>>,
    out: Vec<T>,
}

fn xavier<T: Scalar>(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> T {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    T::from_f64_lossy(rng.gen_range(-bound..=bound))
}

impl<T: Scalar> MhgatModel<T> {
    /// Builds a model for a topology with seeded Xavier-uniform weights. The
    /// receptive field K fixes the layer count at K + 1 = 3.
    pub fn new(net: &Network<T>, hyper: ModelHyper<T>, ablation: Ablation, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let in_dim = 2 * net.node_dims();
        let edge_dim = 2 * net.link_dims();
        let width = hyper.heads * hyper.head_dim;

        let mut gat = Vec::with_capacity(3);
        for layer_idx in 0..3 {
            let (li, le) = if layer_idx == 0 { (in_dim, edge_dim) } else { (width, 0) };
            let mut w = Vec::new();
            let mut a = Vec::new();
            let mut a2 = Vec::new();
            for _ in 0..hyper.heads {
                let mut wm = Mat::zeros(hyper.head_dim, li);
                for v in &mut wm.data {
                    *v = xavier(&mut rng, li, hyper.head_dim);
                }
                w.push(wm);
                a.push((0..2 * hyper.head_dim).map(|_| xavier(&mut rng, 2 * hyper.head_dim, 1)).collect());
                a2.push((0..le).map(|_| xavier(&mut rng, le.max(1), 1)).collect());
            }
            gat.push(GatLayerParams {
                in_dim: li,
                head_dim: hyper.head_dim,
                heads: hyper.heads,
                edge_dim: le,
                leak: hyper.leak,
                w,
                a,
                a2,
            });
        }

        let dims = [(width, hyper.lin_hidden.0), (hyper.lin_hidden.0, hyper.lin_hidden.1), (hyper.lin_hidden.1, 1)];
        let mut lin = Vec::with_capacity(3);
        for (idx, &(fi, fo)) in dims.iter().enumerate() {
            let mut w = Mat::zeros(fo, fi);
            for v in &mut w.data {
                *v = xavier(&mut rng, fi, fo);
            }
            // The final rectifier starts alive near the label scale.
            let bias = if idx == 2 { T::from_f64_lossy(0.5) } else { T::zero() };
            lin.push(Linear { w, b: vec![bias; fo] });
        }

        MhgatModel {
            hyper,
            ablation,
            params: ModelParams { gat, lin },
            graphs: (1..=3).map(|k| derive_multi_hop_graph(net, k)).collect(),
            edge_index: EdgeIndex::build(net),
            topology_hash: net.structural_hash(),
        }
    }

    /// Errors unless the model was built for this topology.
    pub fn verify_topology(&self, net: &Network<T>) -> Result<(), CheckpointError> {
        let hash = net.structural_hash();
        if hash != self.topology_hash {
            return Err(CheckpointError::TopologyMismatch {
                expected: self.topology_hash.clone(),
                got: hash,
            });
        }
        Ok(())
    }

    fn graph_for(&self, layer_idx: usize) -> &MultiHopGraph {
        if self.ablation.no_multi_hop {
            &self.graphs[0]
        } else {
            &self.graphs[layer_idx]
        }
    }

    fn forward_cached(&self, x: &Mat<T>, e: &Mat<T>) -> ForwardCache<T> {
        let uniform = self.ablation.no_gat;
        let edges = EdgeView { index: &self.edge_index, mat: e };
        let (o1, g1) = self.params.gat[0].forward(x, Some(&edges), self.graph_for(0), uniform);
        let (o2, g2) = self.params.gat[1].forward(&o1, None, self.graph_for(1), uniform);
        let mut o2_res = o2;
        if !self.ablation.no_residual {
            o2_res.add_assign(&o1);
        }
        let (o3, g3) = self.params.gat[2].forward(&o2_res, None, self.graph_for(2), uniform);
        let mut o3_res = o3;
        if !self.ablation.no_residual {
            o3_res.add_assign(&o1);
        }

        let n = x.rows;
        let mut lin_in = Vec::with_capacity(3);
        let mut lin_pre = Vec::with_capacity(3);
        let mut current = o3_res.clone();
        for lin in &self.params.lin {
            let mut pre = Mat::zeros(n, lin.b.len());
            for i in 0..n {
                lin.w.mul_vec(current.row(i), pre.row_mut(i));
                for (p, &b) in pre.row_mut(i).iter_mut().zip(&lin.b) {
                    *p += b;
                }
            }
            lin_in.push(current);
            let mut act = pre.clone();
            for v in &mut act.data {
                *v = v.max(T::zero());
            }
            lin_pre.push(pre);
            current = act;
        }
        let out = (0..n).map(|i| current.get(i, 0)).collect();
        ForwardCache { o1, o2_res, g1, g2, g3, lin_in, lin_pre, out }
    }

    /// Per-node predictions (length |N|, nonnegative).
    pub fn forward(&self, x: &Mat<T>, e: &Mat<T>) -> Vec<T> {
        self.forward_cached(x, e).out
    }

    /// Forward pass exposing every intermediate, for tests.
    pub fn forward_taps(&self, x: &Mat<T>, e: &Mat<T>) -> ForwardTaps<T> {
        let uniform = self.ablation.no_gat;
        let edges = EdgeView { index: &self.edge_index, mat: e };
        let (o1, _) = self.params.gat[0].forward(x, Some(&edges), self.graph_for(0), uniform);
        let (o2, _) = self.params.gat[1].forward(&o1, None, self.graph_for(1), uniform);
        let mut o2_res = o2.clone();
        if !self.ablation.no_residual {
            o2_res.add_assign(&o1);
        }
        let (o3, _) = self.params.gat[2].forward(&o2_res, None, self.graph_for(2), uniform);
        let mut o3_res = o3.clone();
        if !self.ablation.no_residual {
            o3_res.add_assign(&o1);
        }
        let cache = self.forward_cached(x, e);
        ForwardTaps { o1, o2, o2_res, o3, o3_res, out: cache.out }
    }

    /// Mean squared error of the model over records.
    pub fn mse(&self, records: &[DatasetRecord<T>]) -> T {
        let mut sum = T::zero();
        let mut count = 0usize;
        for r in records {
            let out = self.forward(&r.x, &r.e);
            for (o, l) in out.iter().zip(&r.labels) {
                let d = *o - *l;
                sum += d * d;
            }
            count += r.labels.len();
        }
        sum / T::from_usize(count.max(1)).unwrap()
    }

    /// MSE over a batch plus gradients for every parameter, flattened in
    /// canonical order.
    pub fn loss_and_grads(&self, batch: &[&DatasetRecord<T>]) -> (T, Vec<T>) {
        let mut grads = self.params.zeros_like();
        let mut loss = T::zero();
        let total = batch.iter().map(|r| r.labels.len()).sum::<usize>().max(1);
        let scale = T::one() / T::from_usize(total).unwrap();
        let uniform = self.ablation.no_gat;

        for record in batch {
            let cache = self.forward_cached(&record.x, &record.e);
            let n = record.x.rows;
            // d(mse)/d(out_i) = 2 (out_i - label_i) / total.
            let mut d_out = vec![T::zero(); n];
            for i in 0..n {
                let diff = cache.out[i] - record.labels[i];
                loss += diff * diff * scale;
                d_out[i] = T::from_f64_lossy(2.0) * diff * scale;
            }

            // Linear head backward (ReLU after every layer).
            let mut d_cur = Mat::zeros(n, 1);
            for i in 0..n {
                d_cur.set(i, 0, d_out[i]);
            }
            for (idx, lin) in self.params.lin.iter().enumerate().rev() {
                let pre = &cache.lin_pre[idx];
                let input = &cache.lin_in[idx];
                let g = &mut grads.lin[idx];
                let mut d_in = Mat::zeros(n, lin.w.cols);
                for i in 0..n {
                    for r in 0..lin.w.rows {
                        let mut dv = d_cur.get(i, r);
                        if pre.get(i, r) <= T::zero() {
                            dv = T::zero();
                        }
                        if dv == T::zero() {
                            continue;
                        }
                        g.b[r] += dv;
                        let grow = g.w.row_mut(r);
                        let irow = input.row(i);
                        for (gv, &xv) in grow.iter_mut().zip(irow) {
                            *gv += dv * xv;
                        }
                        let wrow = lin.w.row(r);
                        let drow = d_in.row_mut(i);
                        for (ov, &wv) in drow.iter_mut().zip(wrow) {
                            *ov += dv * wv;
                        }
                    }
                }
                d_cur = d_in;
            }

            // d_cur now holds d(o3_res).
            let mut d_o1 = Mat::zeros(n, cache.o1.cols);
            if !self.ablation.no_residual {
                d_o1.add_assign(&d_cur);
            }
            let (g3, d_o2_res) = self.params.gat[2].backward(
                &cache.o2_res,
                None,
                self.graph_for(2),
                uniform,
                &cache.g3,
                &d_cur,
            );
            accumulate_gat(&mut grads.gat[2], &g3);

            if !self.ablation.no_residual {
                d_o1.add_assign(&d_o2_res);
            }
            let (g2, d_o1_from_l2) = self.params.gat[1].backward(
                &cache.o1,
                None,
                self.graph_for(1),
                uniform,
                &cache.g2,
                &d_o2_res,
            );
            accumulate_gat(&mut grads.gat[1], &g2);
            d_o1.add_assign(&d_o1_from_l2);

            let edges = EdgeView { index: &self.edge_index, mat: &record.e };
            let (g1, _) = self.params.gat[0].backward(
                &record.x,
                Some(&edges),
                self.graph_for(0),
                uniform,
                &cache.g1,
                &d_o1,
            );
            accumulate_gat(&mut grads.gat[0], &g1);
        }
        (loss, grads.flatten())
    }
}

fn accumulate_gat<T: Scalar>(into: &mut GatLayerParams<T>, from: &GatLayerParams<T>) {
    for (a, b) in into.w.iter_mut().zip(&from.w) {
        a.add_assign(b);
    }
    for (a, b) in into.a.iter_mut().zip(&from.a) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += *y;
        }
    }
    for (a, b) in into.a2.iter_mut().zip(&from.a2) {
        for (x, y) in a.iter_mut().zip(b) {
            *x += *y;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::NetworkState;
    use crate::topology::{LinkSpec, NodeSpec};
    use crate::workload::{DemandTrace, SfcRequest, Vnf, VnfLink};

    fn small_net() -> Network<f64> {
        Network::new(
            "square",
            (0..4).map(|id| NodeSpec { id, capacity: vec![32.0, 64.0] }).collect(),
            vec![
                LinkSpec { id: 0, endpoints: (0, 1), capacity: vec![5.0], delay_ms: 1.0 },
                LinkSpec { id: 1, endpoints: (1, 2), capacity: vec![5.0], delay_ms: 2.0 },
                LinkSpec { id: 2, endpoints: (2, 3), capacity: vec![5.0], delay_ms: 1.0 },
                LinkSpec { id: 3, endpoints: (3, 0), capacity: vec![5.0], delay_ms: 2.0 },
            ],
        )
        .unwrap()
    }

    fn state_with_chain(net: &Network<f64>) -> (NetworkState<f64>, VnfKey) {
        let mut st = NetworkState::new(net);
        let sfc = SfcRequest {
            id: 0,
            arrival_slot: 0,
            lifetime_slots: 50,
            latency_limit_ms: 40.0,
            vnfs: (0..2)
                .map(|i| Vnf {
                    id: i,
                    demand: DemandTrace::constant(vec![16.0, 32.0]),
                    processing_delay_ms: 2.0,
                })
                .collect(),
            vnf_links: vec![VnfLink {
                id: 0,
                source: 0,
                dest: 1,
                demand: DemandTrace::constant(vec![0.2]),
                deadline_ms: 40.0,
            }],
        };
        st.force_place(sfc, &[0, 1], &[vec![0]]);
        (st, VnfKey { sfc: 0, vnf: 1 })
    }

    #[test]
    fn node_features_layout() {
        let net = small_net();
        let (st, v) = state_with_chain(&net);
        let x = build_node_features(&st, &net, v);
        assert_eq!((x.rows, x.cols), (4, 4));
        // Every row starts with the demand ratios against that node's caps.
        for n in 0..4 {
            assert_eq!(x.get(n, 0), 16.0 / 32.0);
            assert_eq!(x.get(n, 1), 32.0 / 64.0);
        }
        assert_eq!(x.get(0, 2), 0.5); // node 0 hosts the 16 GHz head
        assert_eq!(x.get(2, 2), 0.0); // empty node
    }

    #[test]
    fn node_features_heterogeneous_denominators() {
        let net = Network::new(
            "hetero",
            vec![
                NodeSpec { id: 0, capacity: vec![32.0, 64.0] },
                NodeSpec { id: 1, capacity: vec![16.0, 32.0] },
            ],
            vec![LinkSpec { id: 0, endpoints: (0, 1), capacity: vec![5.0], delay_ms: 1.0 }],
        )
        .unwrap();
        let mut st = NetworkState::new(&net);
        let sfc = SfcRequest {
            id: 0,
            arrival_slot: 0,
            lifetime_slots: 5,
            latency_limit_ms: 30.0,
            vnfs: vec![Vnf {
                id: 0,
                demand: DemandTrace::constant(vec![8.0, 8.0]),
                processing_delay_ms: 1.0,
            }],
            vnf_links: vec![],
        };
        st.force_place(sfc, &[0], &[]);
        let x = build_node_features(&st, &net, VnfKey { sfc: 0, vnf: 0 });
        assert_eq!(x.get(0, 0), 0.25);
        assert_eq!(x.get(1, 0), 0.5);
    }

    #[test]
    fn edge_features_pair_rows_and_demand() {
        let net = small_net();
        let (st, v) = state_with_chain(&net);
        let e = build_edge_features(&st, &net, v);
        assert_eq!((e.rows, e.cols), (8, 2));
        for link in 0..4 {
            assert_eq!(e.row(2 * link), e.row(2 * link + 1));
        }
        // v has a single upstream link of 0.2 MBps on 5 MBps capacity.
        assert_eq!(e.get(0, 0), 0.2 / 5.0);
        // Link 0 carries the flow: utilization ratio column.
        assert_eq!(e.get(0, 1), 0.2 / 5.0);
        assert_eq!(e.get(2, 1), 0.0);

        // A VNF with no adjacent links has zero demand columns.
        let mut st2 = NetworkState::new(&net);
        let sfc = SfcRequest {
            id: 1,
            arrival_slot: 0,
            lifetime_slots: 5,
            latency_limit_ms: 30.0,
            vnfs: vec![Vnf {
                id: 0,
                demand: DemandTrace::constant(vec![1.0, 1.0]),
                processing_delay_ms: 1.0,
            }],
            vnf_links: vec![],
        };
        st2.force_place(sfc, &[0], &[]);
        let e2 = build_edge_features(&st2, &net, VnfKey { sfc: 1, vnf: 0 });
        assert_eq!(e2.get(0, 0), 0.0);
    }

    #[test]
    fn average_mode_divides_by_adjacent_count() {
        let net = small_net();
        let mut st = NetworkState::new(&net);
        let sfc = SfcRequest {
            id: 0,
            arrival_slot: 0,
            lifetime_slots: 5,
            latency_limit_ms: 30.0,
            vnfs: (0..3)
                .map(|i| Vnf {
                    id: i,
                    demand: DemandTrace::constant(vec![1.0, 1.0]),
                    processing_delay_ms: 1.0,
                })
                .collect(),
            vnf_links: vec![
                VnfLink {
                    id: 0,
                    source: 0,
                    dest: 1,
                    demand: DemandTrace::constant(vec![0.2]),
                    deadline_ms: 30.0,
                },
                VnfLink {
                    id: 1,
                    source: 1,
                    dest: 2,
                    demand: DemandTrace::constant(vec![0.4]),
                    deadline_ms: 30.0,
                },
            ],
        };
        st.force_place(sfc, &[0, 1, 2], &[vec![0], vec![1]]);
        let v = VnfKey { sfc: 0, vnf: 1 };
        let sum = build_edge_features_mode(&st, &net, v, EdgeDemandMode::Sum);
        let avg = build_edge_features_mode(&st, &net, v, EdgeDemandMode::Average);
        assert_eq!(sum.get(0, 0), (0.2 + 0.4) / 5.0);
        assert_eq!(avg.get(0, 0), (0.2 + 0.4) / 2.0 / 5.0);
    }

    #[test]
    fn zero_weight_model_outputs_zero() {
        let net = small_net();
        let (st, v) = state_with_chain(&net);
        let mut model = MhgatModel::<f64>::new(&net, ModelHyper::default(), Ablation::NONE, 1);
        let zeros = vec![0.0; model.params.count()];
        model.params.load_flat(&zeros);
        let x = build_node_features(&st, &net, v);
        let e = build_edge_features(&st, &net, v);
        let out = model.forward(&x, &e);
        assert_eq!(out, vec![0.0; 4]);
    }

    #[test]
    fn output_shape_and_nonnegativity_on_nsfnet() {
        let net: Network<f64> = Network::nsfnet();
        let mut st = NetworkState::new(&net);
        let sfc = SfcRequest {
            id: 0,
            arrival_slot: 0,
            lifetime_slots: 5,
            latency_limit_ms: 30.0,
            vnfs: vec![Vnf {
                id: 0,
                demand: DemandTrace::constant(vec![4.0, 8.0]),
                processing_delay_ms: 1.0,
            }],
            vnf_links: vec![],
        };
        st.force_place(sfc, &[3], &[]);
        let model = MhgatModel::<f64>::new(&net, ModelHyper::default(), Ablation::NONE, 7);
        let x = build_node_features(&st, &net, VnfKey { sfc: 0, vnf: 0 });
        let e = build_edge_features(&st, &net, VnfKey { sfc: 0, vnf: 0 });
        let out = model.forward(&x, &e);
        assert_eq!(out.len(), 14);
        assert!(out.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn residual_identity_with_zeroed_later_layers() {
        let net = small_net();
        let (st, v) = state_with_chain(&net);
        let mut model = MhgatModel::<f64>::new(&net, ModelHyper::default(), Ablation::NONE, 3);
        for layer in &mut model.params.gat[1..] {
            for w in &mut layer.w {
                w.data.iter_mut().for_each(|v| *v = 0.0);
            }
            for a in &mut layer.a {
                a.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let x = build_node_features(&st, &net, v);
        let e = build_edge_features(&st, &net, v);
        let taps = model.forward_taps(&x, &e);
        // elu(0) = 0, so layers 2 and 3 emit zeros and the residual path
        // carries the first layer's features verbatim.
        assert_eq!(taps.o3_res, taps.o1);
    }

    #[test]
    fn ablation_flags_change_only_their_path() {
        let net = small_net();
        let (st, v) = state_with_chain(&net);
        let x = build_node_features(&st, &net, v);
        let e = build_edge_features(&st, &net, v);

        let full = MhgatModel::<f64>::new(&net, ModelHyper::default(), Ablation::NONE, 5);
        let mut no_res = full.clone();
        no_res.ablation.no_residual = true;
        let t_full = full.forward_taps(&x, &e);
        let t_nores = no_res.forward_taps(&x, &e);
        // Same raw layer outputs up to the first residual merge.
        assert_eq!(t_full.o1, t_nores.o1);
        assert_eq!(t_full.o2, t_nores.o2);
        assert_eq!(t_nores.o2_res, t_nores.o2);
        assert_ne!(t_full.o2_res, t_full.o2);

        let mut no_mhg = full.clone();
        no_mhg.ablation.no_multi_hop = true;
        let t_nomhg = no_mhg.forward_taps(&x, &e);
        assert_eq!(t_full.o1, t_nomhg.o1); // layer 1 always uses the base graph
        assert_ne!(t_full.o2, t_nomhg.o2); // layer 2 graph differs
    }

    #[test]
    fn params_flatten_roundtrip() {
        let net = small_net();
        let model = MhgatModel::<f64>::new(&net, ModelHyper::default(), Ablation::NONE, 11);
        let flat = model.params.flatten();
        assert_eq!(flat.len(), model.params.count());
        let mut other = model.clone();
        let zeros = vec![0.0; flat.len()];
        other.params.load_flat(&zeros);
        assert_ne!(other.params, model.params);
        other.params.load_flat(&flat);
        assert_eq!(other.params, model.params);
    }
}
