use std::collections::HashMap;
use std::sync::RwLock;

use rand::RngCore;

use super::pvm::{compute_priors, solve_threshold, Threshold};
use super::{eligible_mask, Allocation, Mechanism};
use crate::dist::{DistProfile, TimeDist};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Node {
    members: u64,
    children: Option<(usize, usize)>,
}

/// Recursive binary split of the platforms.
#[derive(Debug, Clone)]
pub struct TreeLayout {
    nodes: Vec<Node>,
}

impl TreeLayout {
    /// Halves of sizes `ceil(k/2)` / `floor(k/2)`, lower indices to the left.
    pub fn balanced(n: usize) -> Result<Self> {
        Self::from_order(&(0..n).collect::<Vec<_>>())
    }

    /// Balanced split of `order`, a permutation of `0..n`.
    pub fn from_order(order: &[usize]) -> Result<Self> {
        let n = order.len();
        if n < 2 || n > 63 {
            return Err(Error::InvalidArgument(format!("tree needs 2..=63 platforms, got {n}")));
        }
        let mut seen = vec![false; n];
        for &i in order {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument("tree order must be a permutation".into()));
            }
        }
        let mut nodes = Vec::with_capacity(2 * n);
        build(order, &mut nodes);
        Ok(Self { nodes })
    }

    pub fn n(&self) -> usize {
        self.nodes[0].members.count_ones() as usize
    }

    /// Number of levels below the root (`ceil(log2 n)` for balanced layouts).
    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], k: usize) -> usize {
            match nodes[k].children {
                None => 0,
                Some((l, r)) => 1 + go(nodes, l).max(go(nodes, r)),
            }
        }
        go(&self.nodes, 0)
    }
}

fn build(order: &[usize], nodes: &mut Vec<Node>) -> usize {
    let members = order.iter().fold(0u64, |m, &i| m | (1 << i));
    let idx = nodes.len();
    nodes.push(Node { members, children: None });
    if order.len() > 1 {
        let split = order.len().div_ceil(2);
        let l = build(&order[..split], nodes);
        let r = build(&order[split..], nodes);
        nodes[idx].children = Some((l, r));
    }
    idx
}

enum Store {
    Frozen(HashMap<(usize, u8, u64), Threshold>),
    Lazy(RwLock<HashMap<(usize, u8, u64), Threshold>>),
}

/// Tree mechanism: at each internal node the two halves validate each other
/// PVM-style, and credit flows down to the leaves.
///
/// A side is entered when the largest eligible report on the opposite side is
/// below the side's threshold, which is set so that under truthful play the
/// entry probability is the side's share of the node's prior mass. A side
/// whose opponent has no eligible report is entered with weight equal to that
/// share. A leaf pays the accumulated weight if its report is eligible.
pub struct TreeMechanism {
    profile: DistProfile,
    priors: Vec<f64>,
    layout: TreeLayout,
    /// prior mass of each node
    mass: Vec<f64>,
    store: Store,
}

impl std::fmt::Debug for TreeMechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TreeMechanism")
            .field("n", &self.profile.n())
            .field("depth", &self.layout.depth())
            .finish()
    }
}

impl TreeMechanism {
    pub fn new(profile: &DistProfile) -> Result<Self> {
        Self::with_layout(profile, TreeLayout::balanced(profile.n())?)
    }

    pub fn with_layout(profile: &DistProfile, layout: TreeLayout) -> Result<Self> {
        if layout.n() != profile.n() {
            return Err(Error::InvalidArgument("layout size does not match profile".into()));
        }
        let priors = compute_priors(profile)?;
        let mass = layout
            .nodes
            .iter()
            .map(|nd| members(nd.members).map(|i| priors[i]).sum())
            .collect();
        let mut tree = Self {
            profile: profile.clone(),
            priors,
            layout,
            mass,
            store: Store::Lazy(RwLock::new(HashMap::new())),
        };
        if profile.n() <= super::pvm::DENSE_LIMIT {
            let mut all = HashMap::new();
            for (k, nd) in tree.layout.nodes.iter().enumerate() {
                let Some((l, r)) = nd.children else { continue };
                for (side, opp) in [(0u8, r), (1u8, l)] {
                    let opp_members = tree.layout.nodes[opp].members;
                    for sub in submasks(opp_members) {
                        all.insert((k, side, sub), tree.solve(k, side, sub));
                    }
                }
            }
            tree.store = Store::Frozen(all);
        }
        Ok(tree)
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn layout(&self) -> &TreeLayout {
        &self.layout
    }

    /// Share of node `k`'s mass carried by `child`. At the root the node mass
    /// is one by construction, so the share is the child's mass itself.
    fn share(&self, k: usize, child: usize) -> f64 {
        if k == 0 {
            return self.mass[child];
        }
        if self.mass[k] > 0.0 {
            self.mass[child] / self.mass[k]
        } else {
            0.0
        }
    }

    fn solve(&self, k: usize, side: u8, opp_eligible: u64) -> Threshold {
        let (l, r) = self.layout.nodes[k].children.unwrap();
        let target = self.share(k, if side == 0 { l } else { r });
        let peers: Vec<&TimeDist> = members(opp_eligible).map(|j| self.profile.dist(j)).collect();
        solve_threshold(&peers, target)
    }

    fn threshold(&self, k: usize, side: u8, opp_eligible: u64) -> Threshold {
        match &self.store {
            Store::Frozen(m) => m[&(k, side, opp_eligible)],
            Store::Lazy(cache) => {
                if let Some(t) = cache.read().unwrap().get(&(k, side, opp_eligible)) {
                    return *t;
                }
                let t = self.solve(k, side, opp_eligible);
                cache.write().unwrap().insert((k, side, opp_eligible), t);
                t
            }
        }
    }

    fn visit(&self, k: usize, weight: f64, eligible: u64, reports: &[f64], credits: &mut [f64]) {
        let nd = &self.layout.nodes[k];
        let Some((l, r)) = nd.children else {
            let i = nd.members.trailing_zeros() as usize;
            if eligible & (1 << i) != 0 {
                credits[i] = weight;
            }
            return;
        };
        let le = eligible & self.layout.nodes[l].members;
        let re = eligible & self.layout.nodes[r].members;
        match (le != 0, re != 0) {
            (false, false) => {}
            (true, false) => self.visit(l, weight * self.share(k, l), eligible, reports, credits),
            (false, true) => self.visit(r, weight * self.share(k, r), eligible, reports, credits),
            (true, true) => {
                let max_over = |m: u64| members(m).map(|j| reports[j]).fold(f64::NEG_INFINITY, f64::max);
                let go_left = self.threshold(k, 0, re).credit(max_over(re));
                if go_left > 0.0 {
                    self.visit(l, weight * go_left, eligible, reports, credits);
                }
                let go_right = self.threshold(k, 1, le).credit(max_over(le));
                if go_right > 0.0 {
                    self.visit(r, weight * go_right, eligible, reports, credits);
                }
            }
        }
    }
}

fn members(mask: u64) -> impl Iterator<Item = usize> {
    (0..64).filter(move |&j| mask & (1u64 << j) != 0)
}

/// Non-empty submasks of `mask`.
fn submasks(mask: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut s = mask;
    while s != 0 {
        out.push(s);
        s = (s - 1) & mask;
    }
    out
}

pub fn tree_allocate(reports: &[f64], tree: &TreeMechanism) -> Result<Allocation> {
    if reports.len() != tree.profile.n() {
        return Err(Error::InvalidArgument("report count does not match tree".into()));
    }
    let mut credits = vec![0.0; reports.len()];
    tree.visit(0, 1.0, eligible_mask(reports), reports, &mut credits);
    Ok(Allocation { credits, tie_break_seed: None })
}

impl Mechanism for TreeMechanism {
    fn name(&self) -> &str {
        "Tree"
    }

    fn allocate_into(&self, reports: &[f64], _rng: &mut dyn RngCore, credits: &mut [f64]) -> Option<u64> {
        credits.iter_mut().for_each(|c| *c = 0.0);
        self.visit(0, 1.0, eligible_mask(reports), reports, credits);
        None
    }
}
