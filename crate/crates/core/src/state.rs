//! Dynamic placement state: which VNF runs on which node, which VNF link is
//! routed over which path, the resulting per-node and per-link utilizations,
//! overload detection and the deploy/release/migrate transitions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::topology::{LinkId, Network, NodeId, PathTable};
use crate::workload::SfcRequest;

/// Global identity of a VNF: owning SFC plus index within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VnfKey {
    pub sfc: u64,
    pub vnf: usize,
}

/// Global identity of a VNF link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkKey {
    pub sfc: u64,
    pub link: usize,
}

/// Physical route of a VNF link: a link sequence, empty when the endpoints
/// are co-located.
pub type Route = Vec<LinkId>;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("sfc {0} is already active")]
    DuplicateSfc(u64),
    #[error("vnf {0:?} is not placed")]
    UnknownVnf(String),
    #[error("migration source mismatch: expected host {expected}, action says {got}")]
    SourceMismatch { expected: NodeId, got: NodeId },
    #[error("migration destination {dest} infeasible for vnf: {reason}")]
    InfeasibleDestination { dest: NodeId, reason: String },
}

/// Per-node and per-link utilization vectors at one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utilization<T = f64> {
    pub node: Vec<Vec<T>>,
    pub link: Vec<Vec<T>>,
}

impl<T: Scalar> Utilization<T> {
    pub fn zeros(net: &Network<T>) -> Self {
        Utilization {
            node: vec![vec![T::zero(); net.node_dims()]; net.node_count()],
            link: vec![vec![T::zero(); net.link_dims()]; net.link_count()],
        }
    }
}

/// Overloaded elements, each tagged with its worst resource dimension
/// (argmax of utilization ratio, ties to the lowest dimension).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OverloadSet {
    pub nodes: Vec<(NodeId, usize)>,
    pub links: Vec<(LinkId, usize)>,
}

impl OverloadSet {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.links.is_empty()
    }
}

/// An accepted placement of one SFC.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Placement {
    /// VNF index -> host node.
    pub hosts: Vec<NodeId>,
    /// VNF-link index -> route.
    pub routes: Vec<Route>,
}

/// A single VNF move with the rerouted paths of every adjacent VNF link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MigrationAction {
    pub vnf: VnfKey,
    pub source: NodeId,
    pub dest: NodeId,
    /// New route per adjacent link, in ascending link-key order.
    pub new_routes: Vec<(LinkKey, Route)>,
}

/// Dynamic state of the network at a slot: active SFCs, placements, routes
/// and a utilization snapshot kept in sync incrementally.
#[derive(Debug, Clone)]
pub struct NetworkState<T = f64> {
    clock: usize,
    active: BTreeMap<u64, SfcRequest<T>>,
    placement: BTreeMap<VnfKey, NodeId>,
    routes: BTreeMap<LinkKey, Route>,
    node_vnfs: Vec<BTreeSet<VnfKey>>,
    link_flows: Vec<BTreeSet<LinkKey>>,
    util: Utilization<T>,
}

/// Exported snapshot, consumed by the fragmentation analyzer and reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateSnapshot<T = f64> {
    pub slot: usize,
    pub node_util: Vec<Vec<T>>,
    pub link_util: Vec<Vec<T>>,
    pub placements: Vec<(VnfKey, NodeId)>,
    pub active_sfcs: Vec<u64>,
}

impl<T: Scalar> NetworkState<T> {
    pub fn new(net: &Network<T>) -> Self {
        NetworkState {
            clock: 0,
            active: BTreeMap::new(),
            placement: BTreeMap::new(),
            routes: BTreeMap::new(),
            node_vnfs: vec![BTreeSet::new(); net.node_count()],
            link_flows: vec![BTreeSet::new(); net.link_count()],
            util: Utilization::zeros(net),
        }
    }

    pub fn clock(&self) -> usize {
        self.clock
    }

    pub fn active_sfcs(&self) -> impl Iterator<Item = &SfcRequest<T>> {
        self.active.values()
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    pub fn sfc(&self, id: u64) -> Option<&SfcRequest<T>> {
        self.active.get(&id)
    }

    pub fn host_of(&self, vnf: VnfKey) -> Option<NodeId> {
        self.placement.get(&vnf).copied()
    }

    pub fn route_of(&self, link: LinkKey) -> Option<&Route> {
        self.routes.get(&link)
    }

    pub fn vnfs_on(&self, node: NodeId) -> &BTreeSet<VnfKey> {
        &self.node_vnfs[node]
    }

    pub fn flows_on(&self, link: LinkId) -> &BTreeSet<LinkKey> {
        &self.link_flows[link]
    }

    /// Demand vector of a placed VNF at the current slot.
    pub fn vnf_demand(&self, key: VnfKey) -> &[T] {
        let sfc = &self.active[&key.sfc];
        sfc.vnfs[key.vnf].demand.at(self.clock - sfc.arrival_slot)
    }

    /// Demand vector of a routed VNF link at the current slot.
    pub fn link_demand(&self, key: LinkKey) -> &[T] {
        let sfc = &self.active[&key.sfc];
        sfc.vnf_links[key.link].demand.at(self.clock - sfc.arrival_slot)
    }

    /// Current utilization snapshot.
    pub fn utilization(&self) -> &Utilization<T> {
        &self.util
    }

    /// Utilization of resource `i` on node `n` (sum of hosted VNF demands).
    pub fn node_utilization(&self, n: NodeId, i: usize) -> T {
        self.util.node[n][i]
    }

    /// Utilization of resource `i` on link `e` (sum of routed link demands).
    pub fn link_utilization(&self, e: LinkId, i: usize) -> T {
        self.util.link[e][i]
    }

    /// Advances the clock and recomputes the utilization snapshot from the
    /// demand traces (demands are re-read every slot).
    pub fn advance_to(&mut self, net: &Network<T>, t: usize) {
        debug_assert!(t >= self.clock);
        self.clock = t;
        self.util = self.recompute_utilization(net);
    }

    fn recompute_utilization(&self, net: &Network<T>) -> Utilization<T> {
        let mut util = Utilization::zeros(net);
        for (&key, &node) in &self.placement {
            let d = self.vnf_demand(key);
            for (i, &x) in d.iter().enumerate() {
                util.node[node][i] += x;
            }
        }
        for (&key, route) in &self.routes {
            let d = self.link_demand(key);
            for &e in route {
                for (i, &x) in d.iter().enumerate() {
                    util.link[e][i] += x;
                }
            }
        }
        util
    }

    fn add_vnf_util(&mut self, key: VnfKey, node: NodeId, sign: T) {
        let d: Vec<T> = self.vnf_demand(key).to_vec();
        for (i, x) in d.into_iter().enumerate() {
            self.util.node[node][i] += sign * x;
        }
    }

    fn add_route_util(&mut self, key: LinkKey, route: &[LinkId], sign: T) {
        let d: Vec<T> = self.link_demand(key).to_vec();
        for &e in route {
            for (i, &x) in d.iter().enumerate() {
                self.util.link[e][i] += sign * x;
            }
        }
    }

    /// Registers an accepted SFC with its placement. Caller (the deployment
    /// search) has already validated feasibility.
    pub fn commit_sfc(
        &mut self,
        sfc: SfcRequest<T>,
        placement: &Placement,
    ) -> Result<(), StateError> {
        if self.active.contains_key(&sfc.id) {
            return Err(StateError::DuplicateSfc(sfc.id));
        }
        let id = sfc.id;
        self.active.insert(id, sfc);
        let sfc = &self.active[&id];
        let n_vnfs = sfc.vnfs.len();
        let n_links = sfc.vnf_links.len();
        for v in 0..n_vnfs {
            let key = VnfKey { sfc: id, vnf: v };
            let host = placement.hosts[v];
            self.placement.insert(key, host);
            self.node_vnfs[host].insert(key);
            self.add_vnf_util(key, host, T::one());
        }
        for l in 0..n_links {
            let key = LinkKey { sfc: id, link: l };
            let route = placement.routes[l].clone();
            for &e in &route {
                self.link_flows[e].insert(key);
            }
            self.add_route_util(key, &route, T::one());
            self.routes.insert(key, route);
        }
        Ok(())
    }

    /// Places one VNF directly, used by tests and benchmark scenario setup.
    pub fn force_place(&mut self, sfc: SfcRequest<T>, hosts: &[NodeId], routes: &[Route]) {
        let placement = Placement { hosts: hosts.to_vec(), routes: routes.to_vec() };
        self.commit_sfc(sfc, &placement).expect("force_place on fresh sfc");
    }

    /// Removes every SFC whose lifetime has elapsed (`arrival + lifetime <= t`).
    /// Returns the number released.
    pub fn release_expired(&mut self, t: usize) -> usize {
        let expired: Vec<u64> = self
            .active
            .values()
            .filter(|s| s.expiry_slot() <= t)
            .map(|s| s.id)
            .collect();
        for id in &expired {
            self.remove_sfc(*id);
        }
        expired.len()
    }

    fn remove_sfc(&mut self, id: u64) {
        let sfc = &self.active[&id];
        let n_vnfs = sfc.vnfs.len();
        let n_links = sfc.vnf_links.len();
        for l in 0..n_links {
            let key = LinkKey { sfc: id, link: l };
            if let Some(route) = self.routes.get(&key).cloned() {
                self.add_route_util(key, &route, -T::one());
                for e in route {
                    self.link_flows[e].remove(&key);
                }
                self.routes.remove(&key);
            }
        }
        for v in 0..n_vnfs {
            let key = VnfKey { sfc: id, vnf: v };
            if let Some(host) = self.placement.get(&key).copied() {
                self.add_vnf_util(key, host, -T::one());
                self.node_vnfs[host].remove(&key);
                self.placement.remove(&key);
            }
        }
        self.active.remove(&id);
    }

    /// Applies a validated migration: moves the VNF and swaps the adjacent
    /// routes. The caller validates feasibility first (see
    /// [`crate::migration`]); this only checks structural consistency.
    pub fn apply_migration(&mut self, action: &MigrationAction) -> Result<(), StateError> {
        let host = self
            .placement
            .get(&action.vnf)
            .copied()
            .ok_or_else(|| StateError::UnknownVnf(format!("{:?}", action.vnf)))?;
        if host != action.source {
            return Err(StateError::SourceMismatch { expected: host, got: action.source });
        }
        // Move the VNF.
        self.add_vnf_util(action.vnf, action.source, -T::one());
        self.node_vnfs[action.source].remove(&action.vnf);
        self.placement.insert(action.vnf, action.dest);
        self.node_vnfs[action.dest].insert(action.vnf);
        self.add_vnf_util(action.vnf, action.dest, T::one());
        // Swap routes.
        for (key, new_route) in &action.new_routes {
            self.reroute(*key, new_route.clone());
        }
        Ok(())
    }

    /// Replaces the route of one VNF link.
    pub fn reroute(&mut self, key: LinkKey, new_route: Route) {
        if let Some(old) = self.routes.get(&key).cloned() {
            self.add_route_util(key, &old, -T::one());
            for e in old {
                self.link_flows[e].remove(&key);
            }
        }
        for &e in &new_route {
            self.link_flows[e].insert(key);
        }
        self.add_route_util(key, &new_route, T::one());
        self.routes.insert(key, new_route);
    }

    /// Elements whose utilization strictly exceeds `rho * capacity` in any
    /// dimension, tagged with the worst dimension.
    pub fn detect_overloads(&self, net: &Network<T>, rho: T) -> OverloadSet {
        let mut set = OverloadSet::default();
        for n in 0..net.node_count() {
            let cap = &net.node(n).capacity;
            let u = &self.util.node[n];
            if (0..cap.len()).any(|i| u[i] > rho * cap[i]) {
                set.nodes.push((n, worst_dim(u, cap)));
            }
        }
        for e in 0..net.link_count() {
            let cap = &net.link(e).capacity;
            let u = &self.util.link[e];
            if (0..cap.len()).any(|i| u[i] > rho * cap[i]) {
                set.links.push((e, worst_dim(u, cap)));
            }
        }
        set
    }

    pub fn snapshot(&self) -> StateSnapshot<T> {
        StateSnapshot {
            slot: self.clock,
            node_util: self.util.node.clone(),
            link_util: self.util.link.clone(),
            placements: self.placement.iter().map(|(&k, &n)| (k, n)).collect(),
            active_sfcs: self.active.keys().copied().collect(),
        }
    }

    /// Verifies that the per-node/per-link sets mirror the placement and
    /// route maps exactly and that the incremental utilization matches a
    /// recomputation within `tol`. Used by tests after every mutation kind.
    pub fn check_consistency(&self, net: &Network<T>, tol: T) -> Result<(), String> {
        let mut node_vnfs = vec![BTreeSet::new(); net.node_count()];
        for (&key, &node) in &self.placement {
            node_vnfs[node].insert(key);
        }
        if node_vnfs != self.node_vnfs {
            return Err("node VNF sets diverge from placement map".into());
        }
        let mut link_flows = vec![BTreeSet::new(); net.link_count()];
        for (&key, route) in &self.routes {
            for &e in route {
                link_flows[e].insert(key);
            }
        }
        if link_flows != self.link_flows {
            return Err("link flow sets diverge from route map".into());
        }
        for (&key, route) in &self.routes {
            let sfc = &self.active[&key.sfc];
            let link = &sfc.vnf_links[key.link];
            let src = self.placement[&VnfKey { sfc: key.sfc, vnf: link.source }];
            let dst = self.placement[&VnfKey { sfc: key.sfc, vnf: link.dest }];
            if route.is_empty() {
                if src != dst {
                    return Err(format!("empty route for non-co-located link {key:?}"));
                }
            } else if !route_connects(net, route, src, dst) {
                return Err(format!("route of {key:?} does not connect hosts {src}->{dst}"));
            }
        }
        let fresh = self.recompute_utilization(net);
        for (a, b) in self.util.node.iter().flatten().zip(fresh.node.iter().flatten()) {
            if (*a - *b).abs() > tol {
                return Err(format!("node utilization drift: {a} vs {b}"));
            }
        }
        for (a, b) in self.util.link.iter().flatten().zip(fresh.link.iter().flatten()) {
            if (*a - *b).abs() > tol {
                return Err(format!("link utilization drift: {a} vs {b}"));
            }
        }
        Ok(())
    }
}

/// True when `route` is a contiguous path from `src` to `dst`.
pub fn route_connects<T: Scalar>(net: &Network<T>, route: &[LinkId], src: NodeId, dst: NodeId) -> bool {
    let mut at = src;
    for &l in route {
        let (u, v) = net.link(l).endpoints;
        at = if u == at {
            v
        } else if v == at {
            u
        } else {
            return false;
        };
    }
    at == dst
}

fn worst_dim<T: Scalar>(util: &[T], cap: &[T]) -> usize {
    let mut best = 0;
    let mut best_ratio = T::neg_infinity();
    for i in 0..cap.len() {
        let ratio = util[i] / cap[i];
        if ratio > best_ratio {
            best_ratio = ratio;
            best = i;
        }
    }
    best
}


pub use deploy::{deploy_sfc, DeployOutcome};

mod deploy {
    //! SFC deployment: a backtracking search over host choices (ordered by
    //! post-placement load) and route choices (ordered by delay), bounded by
    //! an exploration budget. The first solution found matches the plain
    //! load-aware first-fit whenever that succeeds; backtracking only kicks
    //! in when the first descent dead-ends, which keeps acceptance exact on
    //! small instances.

    use super::*;
    use crate::migration::select_path;

    /// Result of a deployment attempt.
    #[derive(Debug, Clone)]
    pub enum DeployOutcome {
        Accepted(Placement),
        Rejected,
    }

    const DEPLOY_BUDGET: usize = 5_000;

    struct Search<'a, T> {
        net: &'a Network<T>,
        table: &'a PathTable<T>,
        sfc: &'a SfcRequest<T>,
        rho: T,
        /// Scratch utilization including tentative placements.
        node_util: Vec<Vec<T>>,
        link_util: Vec<Vec<T>>,
        hosts: Vec<Option<NodeId>>,
        routes: Vec<Option<Route>>,
        budget: usize,
    }

    impl<'a, T: Scalar> Search<'a, T> {
        fn demand(&self, vnf: usize) -> &[T] {
            self.sfc.vnfs[vnf].demand.at(0)
        }

        fn node_fits(&self, node: NodeId, vnf: usize) -> bool {
            let cap = &self.net.node(node).capacity;
            let d = self.demand(vnf);
            (0..cap.len()).all(|i| self.node_util[node][i] + d[i] <= self.rho * cap[i])
        }

        /// Candidate hosts ordered by post-placement max utilization ratio,
        /// ties by node id.
        fn candidates(&self, vnf: usize) -> Vec<NodeId> {
            let d = self.demand(vnf);
            let mut scored: Vec<(T, NodeId)> = (0..self.net.node_count())
                .filter(|&n| self.node_fits(n, vnf))
                .map(|n| {
                    let cap = &self.net.node(n).capacity;
                    let mut worst = T::zero();
                    for i in 0..cap.len() {
                        let r = (self.node_util[n][i] + d[i]) / cap[i];
                        if r > worst {
                            worst = r;
                        }
                    }
                    (worst, n)
                })
                .collect();
            scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            scored.into_iter().map(|(_, n)| n).collect()
        }

        fn place(&mut self, vnf: usize, node: NodeId, sign: T) {
            let d: Vec<T> = self.demand(vnf).to_vec();
            for (i, x) in d.into_iter().enumerate() {
                self.node_util[node][i] += sign * x;
            }
        }

        fn route_links_then_recurse(&mut self, vnf: usize, link_pos: usize, links: &[usize]) -> bool {
            if self.budget == 0 {
                return false;
            }
            if link_pos == links.len() {
                return self.assign(vnf + 1);
            }
            let lid = links[link_pos];
            let link = &self.sfc.vnf_links[lid];
            let src = self.hosts[link.source].unwrap();
            let dst = self.hosts[link.dest].unwrap();
            let demand = link.demand.at(0).to_vec();
            let proc = self.sfc.vnfs[link.dest].processing_delay_ms;

            if src == dst {
                self.routes[lid] = Some(Vec::new());
                if self.route_links_then_recurse(vnf, link_pos + 1, links) {
                    return true;
                }
                self.routes[lid] = None;
                return false;
            }
            // Try each stored path in delay order.
            let n_paths = self.table.paths(src, dst).len();
            for pi in 0..n_paths {
                self.budget = self.budget.saturating_sub(1);
                if self.budget == 0 {
                    return false;
                }
                let cand = &self.table.paths(src, dst)[pi];
                let feasible = select_path::path_feasible(
                    self.net,
                    &self.link_util,
                    &cand.path.links,
                    cand.delay,
                    &demand,
                    link.deadline_ms,
                    proc,
                    self.rho,
                    None,
                );
                if !feasible {
                    continue;
                }
                let route = cand.path.links.clone();
                for &e in &route {
                    for (i, &x) in demand.iter().enumerate() {
                        self.link_util[e][i] += x;
                    }
                }
                self.routes[lid] = Some(route.clone());
                if self.route_links_then_recurse(vnf, link_pos + 1, links) {
                    return true;
                }
                self.routes[lid] = None;
                for &e in &route {
                    for (i, &x) in demand.iter().enumerate() {
                        self.link_util[e][i] -= x;
                    }
                }
            }
            false
        }

        fn assign(&mut self, vnf: usize) -> bool {
            if vnf == self.sfc.vnfs.len() {
                return true;
            }
            // Links whose endpoints are both placed once `vnf` is placed.
            let ready_links: Vec<usize> = self
                .sfc
                .vnf_links
                .iter()
                .enumerate()
                .filter(|(_, l)| {
                    (l.dest == vnf && l.source < vnf) || (l.source == vnf && l.dest < vnf)
                })
                .map(|(i, _)| i)
                .collect();
            for node in self.candidates(vnf) {
                self.budget = self.budget.saturating_sub(1);
                if self.budget == 0 {
                    return false;
                }
                self.place(vnf, node, T::one());
                self.hosts[vnf] = Some(node);
                if self.route_links_then_recurse(vnf, 0, &ready_links) {
                    return true;
                }
                self.hosts[vnf] = None;
                self.place(vnf, node, -T::one());
            }
            false
        }
    }

    /// Attempts to place every VNF and route every VNF link of `sfc` under
    /// the threshold and deadline constraints at the current slot. On
    /// acceptance the state is mutated; on rejection it is untouched.
    pub fn deploy_sfc<T: Scalar>(
        state: &mut NetworkState<T>,
        net: &Network<T>,
        table: &PathTable<T>,
        sfc: SfcRequest<T>,
        rho: T,
    ) -> Result<DeployOutcome, StateError> {
        if state.active.contains_key(&sfc.id) {
            return Err(StateError::DuplicateSfc(sfc.id));
        }
        // Quick reject: some VNF fits nowhere even on an empty candidate.
        for vnf in 0..sfc.vnfs.len() {
            let d = sfc.vnfs[vnf].demand.at(0);
            let fits_somewhere = (0..net.node_count()).any(|n| {
                let cap = &net.node(n).capacity;
                (0..cap.len()).all(|i| state.util.node[n][i] + d[i] <= rho * cap[i])
            });
            if !fits_somewhere {
                return Ok(DeployOutcome::Rejected);
            }
        }
        let mut search = Search {
            net,
            table,
            sfc: &sfc,
            rho,
            node_util: state.util.node.clone(),
            link_util: state.util.link.clone(),
            hosts: vec![None; sfc.vnfs.len()],
            routes: vec![None; sfc.vnf_links.len()],
            budget: DEPLOY_BUDGET,
        };
        if search.assign(0) {
            let placement = Placement {
                hosts: search.hosts.iter().map(|h| h.unwrap()).collect(),
                routes: search.routes.iter().map(|r| r.clone().unwrap()).collect(),
            };
            state.commit_sfc(sfc, &placement)?;
            Ok(DeployOutcome::Accepted(placement))
        } else {
            Ok(DeployOutcome::Rejected)
        }
    }
}
