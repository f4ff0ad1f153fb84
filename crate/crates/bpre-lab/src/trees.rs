//! Ordered rooted trees and trests (trees with a distinguished stem).
//!
//! Covers pruning, leftmost-stem extraction, the size-biased LPP trest
//! (stem individuals reproduce by q~(y) = y q(y)/m, the stem child is
//! uniform among the stem parent's children), the survival-conditioned
//! Geiger trest built from quenched suffix survival probabilities, an exact
//! small-case enumeration oracle for the conditional trest law, and the
//! total-variation coupling bound between the LPP and Geiger sibling-pair
//! laws.

use std::collections::BTreeMap;

use rand::Rng;

use crate::bpre::{survival_profile, QuenchedEnvironment};
use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;
use crate::sampler;
use crate::util::{one_minus_pow_one_minus, NeumaierSum};

/// Hard cap on materialized nodes per tree and on enumerated states.
const TREE_NODE_BUDGET: usize = 10_000_000;

/// Arena-backed ordered rooted tree; node 0 is the root, children are
/// stored contiguously per node in birth order.
#[derive(Clone, Debug, Default)]
pub struct OrderedTree {
    children: Vec<Vec<u32>>,
    parent: Vec<u32>,
    depth: Vec<u32>,
}

impl OrderedTree {
    pub fn new_root() -> Self {
        OrderedTree {
            children: vec![Vec::new()],
            parent: vec![u32::MAX],
            depth: vec![0],
        }
    }

    pub fn add_child(&mut self, parent: u32) -> u32 {
        let id = self.children.len() as u32;
        self.children.push(Vec::new());
        self.parent.push(parent);
        self.depth.push(self.depth[parent as usize] + 1);
        self.children[parent as usize].push(id);
        id
    }

    pub fn n_nodes(&self) -> usize {
        self.children.len()
    }

    pub fn children(&self, node: u32) -> &[u32] {
        &self.children[node as usize]
    }

    pub fn parent(&self, node: u32) -> Option<u32> {
        if node == 0 {
            None
        } else {
            Some(self.parent[node as usize])
        }
    }

    pub fn depth(&self, node: u32) -> usize {
        self.depth[node as usize] as usize
    }

    pub fn height(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0) as usize
    }

    pub fn nodes_at_generation(&self, g: usize) -> Vec<u32> {
        (0..self.n_nodes() as u32)
            .filter(|id| self.depth(*id) == g)
            .collect()
    }

    pub fn count_at_generation(&self, g: usize) -> u64 {
        self.depth.iter().filter(|d| **d as usize == g).count() as u64
    }

    /// Removes all nodes of generation greater than n.
    pub fn prune(&self, n: usize) -> Result<OrderedTree> {
        if self.height() < n {
            return Err(Error::HeightTooSmall {
                height: self.height(),
                requested: n,
            });
        }
        let mut out = OrderedTree::new_root();
        let mut map = vec![u32::MAX; self.n_nodes()];
        map[0] = 0;
        // arena ids are in creation order, parents precede children
        for id in 1..self.n_nodes() as u32 {
            if self.depth(id) <= n {
                let p = map[self.parent[id as usize] as usize];
                map[id as usize] = out.add_child(p);
            }
        }
        Ok(out)
    }

    /// The Neveu code of a node: child indices (0-based) along the path
    /// from the root.
    pub fn neveu(&self, node: u32) -> Vec<u32> {
        let mut path = Vec::new();
        let mut cur = node;
        while let Some(p) = self.parent(cur) {
            let pos = self.children[p as usize]
                .iter()
                .position(|c| *c == cur)
                .expect("child listed under its parent") as u32;
            path.push(pos);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Preorder offspring counts; a canonical key that uniquely codes the
    /// ordered tree.
    pub fn canonical_key(&self) -> Vec<u32> {
        let mut key = Vec::with_capacity(self.n_nodes());
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let kids = &self.children[id as usize];
            key.push(kids.len() as u32);
            for c in kids.iter().rev() {
                stack.push(*c);
            }
        }
        key
    }

    fn to_json_nested(&self, node: u32) -> serde_json::Value {
        serde_json::Value::Array(
            self.children[node as usize]
                .iter()
                .map(|c| self.to_json_nested(*c))
                .collect(),
        )
    }
}

/// A tree with a stem: a root-descending node path k_0..k_n.
#[derive(Clone, Debug)]
pub struct Trest {
    pub tree: OrderedTree,
    pub stem: Vec<u32>,
}

impl Trest {
    /// Declared height n (stem has n+1 nodes).
    pub fn height(&self) -> usize {
        self.stem.len() - 1
    }

    /// Checks the structural invariants: the stem starts at the root and
    /// descends parent to child.
    pub fn is_well_formed(&self) -> bool {
        if self.stem.is_empty() || self.stem[0] != 0 {
            return false;
        }
        self.stem
            .windows(2)
            .all(|w| self.tree.parent(w[1]) == Some(w[0]))
    }

    /// Prunes tree and stem at height m.
    pub fn prune(&self, m: usize) -> Result<Trest> {
        if self.height() < m {
            return Err(Error::HeightTooSmall {
                height: self.height(),
                requested: m,
            });
        }
        Ok(Trest {
            tree: self.tree.prune(m)?,
            stem: self.stem[..=m].to_vec(),
        })
    }

    /// Canonical key: tree preorder counts plus the stem's child-index path.
    pub fn key(&self) -> TrestKey {
        TrestKey {
            tree: self.tree.canonical_key(),
            stem: self.tree.neveu(*self.stem.last().unwrap()),
        }
    }

    /// JSON debug form: nested child arrays plus the stem index path.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "tree": self.tree.to_json_nested(0),
            "stem": self.tree.neveu(*self.stem.last().unwrap()),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrestKey {
    pub tree: Vec<u32>,
    pub stem: Vec<u32>,
}

/// The unique trest <t>_n: the tree pruned at n together with the
/// lexicographically smallest root-to-generation-n path through nodes that
/// still have descendants at generation n.
pub fn leftmost_stem(tree: &OrderedTree, n: usize) -> Result<Trest> {
    let pruned = tree.prune(n)?;
    // reach[id]: node has a descendant at generation n within the pruning
    let m = pruned.n_nodes();
    let mut reach = vec![false; m];
    for id in (0..m as u32).rev() {
        if pruned.depth(id) == n {
            reach[id as usize] = true;
        } else {
            reach[id as usize] = pruned.children(id).iter().any(|c| reach[*c as usize]);
        }
    }
    if !reach[0] {
        return Err(Error::HeightTooSmall {
            height: 0,
            requested: n,
        });
    }
    let mut stem = vec![0u32];
    let mut cur = 0u32;
    for _ in 0..n {
        let next = pruned
            .children(cur)
            .iter()
            .copied()
            .find(|c| reach[*c as usize])
            .expect("reachable node has a reachable child");
        stem.push(next);
        cur = next;
    }
    Ok(Trest { tree: pruned, stem })
}

/// Generation totals of an LPP trest (stem included) plus the branch
/// decomposition: decomp[j][i] counts generation-j individuals other than
/// the stem node descending from stem node i but not from stem node i+1.
#[derive(Clone, Debug)]
pub struct LppDecomp {
    pub z: Vec<u64>,
    pub decomp: Vec<Vec<u64>>,
}

impl LppDecomp {
    /// Z~_n = 1 + sum_i Z~_n^i, structurally.
    pub fn identity_holds(&self) -> bool {
        self.z
            .iter()
            .enumerate()
            .all(|(j, z)| *z == 1 + self.decomp[j].iter().sum::<u64>())
    }
}

/// Simulates the LPP trest of height n = env.len(), materializing the tree.
pub fn simulate_lpp_trest<R: Rng + ?Sized>(
    env: &QuenchedEnvironment,
    rng: &mut R,
) -> Result<(Trest, LppDecomp)> {
    let n = env.len();
    let mut tree = OrderedTree::new_root();
    let mut stem = vec![0u32];
    // branch[id] = index i of the stem node this non-stem line branched from
    let mut branch: Vec<usize> = vec![usize::MAX];
    let mut z = vec![1u64];
    let mut decomp: Vec<Vec<u64>> = vec![Vec::new()];
    let mut frontier: Vec<u32> = vec![0];
    for i in 1..=n {
        let q = env.q(i);
        let biased = q.size_bias();
        let mut next = Vec::new();
        let mut counts = vec![0u64; i];
        for &node in &frontier {
            let is_stem = node == stem[i - 1];
            let y = if is_stem {
                biased.sample(rng)
            } else {
                q.sample(rng)
            };
            let stem_pos = if is_stem {
                debug_assert!(y >= 1);
                rng.random_range(0..y)
            } else {
                u64::MAX
            };
            for pos in 0..y {
                let child = tree.add_child(node);
                if is_stem && pos == stem_pos {
                    stem.push(child);
                    branch.push(usize::MAX);
                } else {
                    let b = if is_stem {
                        i - 1
                    } else {
                        branch[node as usize]
                    };
                    branch.push(b);
                    counts[b] += 1;
                }
                next.push(child);
            }
            if tree.n_nodes() > TREE_NODE_BUDGET {
                return Err(Error::EnumerationBudget(
                    "LPP tree exceeded the node budget".into(),
                ));
            }
        }
        z.push(next.len() as u64);
        decomp.push(counts);
        frontier = next;
    }
    Ok((Trest { tree, stem }, LppDecomp { z, decomp }))
}

/// Counts-only LPP simulation: one convolution step per generation for the
/// non-stem mass plus one size-biased draw for the stem. `biased[k]` must be
/// the size-biased law of `dists[k]`.
pub fn simulate_lpp_totals<R: Rng + ?Sized>(
    dists: &[&OffspringDistribution],
    biased: &[&OffspringDistribution],
    rng: &mut R,
) -> Vec<u64> {
    let n = dists.len();
    let mut z = Vec::with_capacity(n + 1);
    z.push(1u64);
    let mut others = 0u64;
    for k in 0..n {
        others = sampler::offspring_sum(dists[k], others, rng);
        others += biased[k].sample(rng) - 1;
        z.push(others + 1);
    }
    z
}

/// Samples the Geiger sibling pair (R_i, L_i) with
/// P(r, l) = q_i(r+l+1) s_i (1-s_i)^l / s_{i-1}.
pub(crate) fn sample_geiger_pair<R: Rng + ?Sized>(
    q: &OffspringDistribution,
    s_prev: f64,
    s_cur: f64,
    rng: &mut R,
) -> Result<(u64, u64)> {
    if s_prev <= 0.0 {
        return Err(Error::ImpossibleConditioning(format!(
            "survival probability {s_prev} at the stem parent"
        )));
    }
    let d = 1.0 - s_cur;
    let cutoff = q.support_cutoff(1e-14).max(1);
    // total child count y first: mass q(y) (1 - d^y), normalizer s_prev
    let mut u = rng.random::<f64>() * s_prev;
    let mut y = 0u64;
    for cand in 1..=cutoff {
        let mass = q.pmf(cand) * one_minus_pow_one_minus(s_cur, cand);
        if u < mass {
            y = cand;
            break;
        }
        u -= mass;
        y = cand;
    }
    // left count l in 0..y with mass s (1-s)^l
    let total_l = one_minus_pow_one_minus(s_cur, y);
    let mut u2 = rng.random::<f64>() * total_l;
    let mut l = 0u64;
    let mut mass = s_cur;
    loop {
        if u2 < mass || l + 1 >= y {
            break;
        }
        u2 -= mass;
        mass *= d;
        l += 1;
    }
    Ok((y - 1 - l, l))
}

/// Grows an unconditioned branching subtree below `root` (sitting at
/// absolute generation `gen`) through generations gen+1..=n.
fn grow_unconditioned<R: Rng + ?Sized>(
    tree: &mut OrderedTree,
    root: u32,
    gen: usize,
    env: &QuenchedEnvironment,
    n: usize,
    rng: &mut R,
) -> Result<()> {
    let mut frontier = vec![root];
    for k in gen..n {
        let q = env.q(k + 1);
        let mut next = Vec::new();
        for &node in &frontier {
            let y = q.sample(rng);
            for _ in 0..y {
                next.push(tree.add_child(node));
            }
        }
        if tree.n_nodes() > TREE_NODE_BUDGET {
            return Err(Error::EnumerationBudget(
                "Geiger subtree exceeded the node budget".into(),
            ));
        }
        frontier = next;
    }
    Ok(())
}

/// Grows a subtree conditioned to be extinct by generation n. An individual
/// at absolute generation k reproduces by the extinction tilting
/// q'(y) = q_{k+1}(y) d_{k+1}^y / d_k, where d_k is the quenched
/// extinction-by-n probability from one generation-k individual.
fn grow_conditioned_extinct<R: Rng + ?Sized>(
    tree: &mut OrderedTree,
    root: u32,
    gen: usize,
    env: &QuenchedEnvironment,
    n: usize,
    extinct: &[f64],
    rng: &mut R,
) -> Result<()> {
    let mut frontier = vec![root];
    for k in gen..n {
        let q = env.q(k + 1);
        let d_k = extinct[k];
        let d_next = extinct[k + 1];
        if d_k <= 0.0 {
            return Err(Error::ImpossibleConditioning(format!(
                "extinction probability 0 at generation {k}"
            )));
        }
        let cutoff = q.support_cutoff(1e-14);
        let mut next = Vec::new();
        for &node in &frontier {
            let mut u = rng.random::<f64>() * d_k;
            let mut y = 0u64;
            let mut d_pow = 1.0;
            for cand in 0..=cutoff {
                let mass = q.pmf(cand) * d_pow;
                if u < mass {
                    y = cand;
                    break;
                }
                u -= mass;
                d_pow *= d_next;
                y = cand;
            }
            for _ in 0..y {
                next.push(tree.add_child(node));
            }
        }
        if tree.n_nodes() > TREE_NODE_BUDGET {
            return Err(Error::EnumerationBudget(
                "conditioned subtree exceeded the node budget".into(),
            ));
        }
        frontier = next;
    }
    Ok(())
}

/// Simulates the Geiger trest of height n = env.len(): the exact law of the
/// branching tree conditioned on Z_n > 0, stem included. Left siblings carry
/// subtrees conditioned to die before the horizon, right siblings carry
/// unconditioned subtrees; generation n+1 is never materialized.
pub fn simulate_geiger_trest<R: Rng + ?Sized>(
    env: &QuenchedEnvironment,
    rng: &mut R,
) -> Result<Trest> {
    let n = env.len();
    let s = survival_profile(env)?;
    let extinct: Vec<f64> = s.iter().map(|v| 1.0 - v).collect();
    let mut tree = OrderedTree::new_root();
    let mut stem = vec![0u32];
    for i in 1..=n {
        let parent = stem[i - 1];
        let (r, l) = sample_geiger_pair(env.q(i), s[i - 1], s[i], rng)?;
        // children order: l conditioned-to-die on the left, the stem child,
        // r unconditioned on the right
        for _ in 0..l {
            let c = tree.add_child(parent);
            grow_conditioned_extinct(&mut tree, c, i, env, n, &extinct, rng)?;
        }
        let k = tree.add_child(parent);
        stem.push(k);
        for _ in 0..r {
            let c = tree.add_child(parent);
            grow_unconditioned(&mut tree, c, i, env, n, rng)?;
        }
    }
    Ok(Trest { tree, stem })
}

/// Counts-only sampler for populations conditioned on survival to the
/// horizon, built from the Geiger construction: generation sizes of the
/// conditioned tree are the stem plus unconditioned right-sibling lines
/// plus extinction-tilted left-sibling lines. Exact in law, so conditioned
/// estimators can carry the bounded weight e^{-S_n} P(Z_n > 0 | env)
/// instead of the heavy-tailed survivor weight.
pub struct GeigerSampler<'a> {
    dists: Vec<&'a OffspringDistribution>,
    survival: Vec<f64>,
    cutoffs: Vec<u64>,
}

impl<'a> GeigerSampler<'a> {
    pub fn new(dists: Vec<&'a OffspringDistribution>) -> Result<Self> {
        let n = dists.len();
        let mut survival = vec![0.0; n + 1];
        survival[n] = 1.0;
        for i in (0..n).rev() {
            survival[i] = dists[i].pgf_survival_complement(survival[i + 1])?;
        }
        if survival[0] <= 0.0 {
            return Err(Error::ImpossibleConditioning(
                "survival to the horizon has probability zero".into(),
            ));
        }
        let cutoffs = dists.iter().map(|d| d.support_cutoff(1e-14)).collect();
        Ok(GeigerSampler {
            dists,
            survival,
            cutoffs,
        })
    }

    pub fn survival(&self) -> f64 {
        self.survival[0]
    }

    /// One exact draw from L(Z_n | env, Z_n > 0). Left siblings are extinct
    /// by n, so only the stem and the unconditioned right lines contribute.
    pub fn conditional_z_n<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u64> {
        let n = self.dists.len();
        let mut pool = 0u64;
        for i in 1..=n {
            pool = sampler::offspring_sum(self.dists[i - 1], pool, rng);
            let (r, _l) =
                sample_geiger_pair(self.dists[i - 1], self.survival[i - 1], self.survival[i], rng)?;
            pool += r;
            if pool > crate::bpre::POPULATION_CAP {
                return Err(Error::PopulationCap {
                    cap: crate::bpre::POPULATION_CAP,
                    generation: i,
                    partial: Vec::new(),
                });
            }
        }
        Ok(pool + 1)
    }

    /// One exact draw from L(Z_0..Z_n | env, Z_n > 0): the full conditioned
    /// trajectory. Dying left lines are evolved per individual under the
    /// extinction tilting q'(y) = q_{k+1}(y) d_{k+1}^y / d_k.
    pub fn conditional_trajectory<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<u64>> {
        let n = self.dists.len();
        let mut counts = Vec::with_capacity(n + 1);
        counts.push(1u64);
        let mut alive = 0u64; // unconditioned right lines, current generation
        let mut dying = 0u64; // extinction-tilted left lines
        for i in 1..=n {
            alive = sampler::offspring_sum(self.dists[i - 1], alive, rng);
            dying = self.step_dying(dying, i - 1, rng);
            let (r, l) =
                sample_geiger_pair(self.dists[i - 1], self.survival[i - 1], self.survival[i], rng)?;
            alive += r;
            dying += l;
            if alive.saturating_add(dying) > crate::bpre::POPULATION_CAP {
                return Err(Error::PopulationCap {
                    cap: crate::bpre::POPULATION_CAP,
                    generation: i,
                    partial: counts,
                });
            }
            counts.push(1 + alive + dying);
        }
        debug_assert_eq!(dying, 0, "left lines must be extinct at the horizon");
        Ok(counts)
    }

    /// Advances `count` dying individuals from generation k to k+1 under the
    /// extinction-tilted offspring law.
    fn step_dying<R: Rng + ?Sized>(&self, count: u64, k: usize, rng: &mut R) -> u64 {
        if count == 0 {
            return 0;
        }
        let q = self.dists[k];
        let d_k = 1.0 - self.survival[k];
        let d_next = 1.0 - self.survival[k + 1];
        let cutoff = self.cutoffs[k];
        let mut total = 0u64;
        for _ in 0..count {
            let mut u = rng.random::<f64>() * d_k;
            let mut d_pow = 1.0;
            let mut y = 0u64;
            for cand in 0..=cutoff {
                let mass = q.pmf(cand) * d_pow;
                if u < mass {
                    y = cand;
                    break;
                }
                u -= mass;
                d_pow *= d_next;
                y = cand;
            }
            total += y;
        }
        total
    }
}

/// Exact conditional law of the leftmost-stem trest <T>_n given Z_n > 0,
/// by exhaustive enumeration of trees with finite-support offspring laws.
/// Returns the trest masses (summing to 1) and P(Z_n > 0).
pub struct ConditionedTrestLaw {
    pub masses: BTreeMap<TrestKey, f64>,
    pub survival: f64,
}

pub fn enumerate_conditioned_trest_law(
    env: &QuenchedEnvironment,
    n: usize,
) -> Result<ConditionedTrestLaw> {
    if n > env.len() {
        return Err(Error::IndexOutOfRange(format!(
            "horizon {n} exceeds environment length {}",
            env.len()
        )));
    }
    let supports: Vec<u64> = env
        .dists()
        .iter()
        .map(|d| {
            d.finite_support_max().ok_or_else(|| {
                Error::EnumerationBudget(
                    "trest enumeration needs finite-support offspring laws".into(),
                )
            })
        })
        .collect::<Result<_>>()?;
    let mut masses: BTreeMap<TrestKey, f64> = BTreeMap::new();
    let mut survival = NeumaierSum::new();
    let mut visited = 0usize;
    let mut tree = OrderedTree::new_root();
    enumerate_rec(
        env,
        &supports,
        n,
        0,
        &mut vec![0u32],
        &mut tree,
        1.0,
        &mut masses,
        &mut survival,
        &mut visited,
    )?;
    let total = survival.value();
    let mut out = masses;
    for v in out.values_mut() {
        *v /= total;
    }
    Ok(ConditionedTrestLaw {
        masses: out,
        survival: total,
    })
}

#[allow(clippy::too_many_arguments)]
fn enumerate_rec(
    env: &QuenchedEnvironment,
    supports: &[u64],
    n: usize,
    gen: usize,
    frontier: &mut Vec<u32>,
    tree: &mut OrderedTree,
    mass: f64,
    masses: &mut BTreeMap<TrestKey, f64>,
    survival: &mut NeumaierSum,
    visited: &mut usize,
) -> Result<()> {
    *visited += 1;
    if *visited > TREE_NODE_BUDGET {
        return Err(Error::EnumerationBudget(format!(
            "trest enumeration exceeded {TREE_NODE_BUDGET} states"
        )));
    }
    if gen == n {
        if !frontier.is_empty() {
            survival.add(mass);
            let trest = leftmost_stem(tree, n)?;
            *masses.entry(trest.key()).or_insert(0.0) += mass;
        }
        return Ok(());
    }
    if frontier.is_empty() {
        return Ok(());
    }
    let q = env.q(gen + 1);
    let max_y = supports[gen];
    // assign each frontier node an offspring count in 0..=max_y
    let m = frontier.len();
    let mut counts = vec![0u64; m];
    loop {
        let mut p = mass;
        for &c in &counts {
            p *= q.pmf(c);
        }
        if p > 0.0 {
            let checkpoint = tree.n_nodes();
            let mut next = Vec::new();
            for (node_idx, &c) in counts.iter().enumerate() {
                for _ in 0..c {
                    next.push(tree.add_child(frontier[node_idx]));
                }
            }
            enumerate_rec(
                env, supports, n, gen + 1, &mut next, tree, p, masses, survival, visited,
            )?;
            // roll the arena back to reuse it along the enumeration
            tree.children.truncate(checkpoint);
            tree.parent.truncate(checkpoint);
            tree.depth.truncate(checkpoint);
            for kids in tree.children.iter_mut() {
                kids.retain(|c| (*c as usize) < checkpoint);
            }
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == m {
                return Ok(());
            }
            counts[pos] += 1;
            if counts[pos] <= max_y {
                break;
            }
            counts[pos] = 0;
            pos += 1;
        }
    }
}

/// Exact total-variation distance between the LPP sibling-pair law
/// q_i(r+l+1) e^{-X_i} and the Geiger pair law, together with the coupling
/// bound eta_i e^{S_n - S_{i-1}} / 2.
pub struct TvCouplingCheck {
    pub tv: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn tv_coupling_bound_check(
    env: &QuenchedEnvironment,
    n: usize,
    i: usize,
) -> Result<TvCouplingCheck> {
    if i < 1 || i > n || n > env.len() {
        return Err(Error::IndexOutOfRange(format!(
            "tv check needs 1 <= i <= n <= {}, got i={i} n={n}",
            env.len()
        )));
    }
    let s = survival_profile(&QuenchedEnvironment::new(env.dists()[..n].to_vec()))?;
    let q = env.q(i);
    let x_i = env.walk().s(i) - env.walk().s(i - 1);
    let inv_m = (-x_i).exp();
    let s_prev = s[i - 1];
    let s_cur = s[i];
    let d = 1.0 - s_cur;
    let cutoff = q.support_cutoff(1e-14).max(1);
    let mut diff = NeumaierSum::new();
    for y in 1..=cutoff {
        let base = q.pmf(y);
        if base <= 0.0 {
            continue;
        }
        let mut d_pow = 1.0;
        for l in 0..y {
            let lpp = base * inv_m;
            let geiger = base * s_cur * d_pow / s_prev;
            diff.add((lpp - geiger).abs());
            d_pow *= d;
        }
    }
    let tv = 0.5 * diff.value();
    let bound = 0.5 * env.eta(i) * (env.walk().s(n) - env.walk().s(i - 1)).exp();
    Ok(TvCouplingCheck {
        tv,
        bound,
        holds: tv <= bound + 1e-12,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpre::tests::critical_geometric_env;
    use crate::estimate::MeanAcc;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path_tree(len: usize) -> OrderedTree {
        let mut t = OrderedTree::new_root();
        let mut cur = 0;
        for _ in 0..len {
            cur = t.add_child(cur);
        }
        t
    }

    fn complete_binary(height: usize) -> OrderedTree {
        let mut t = OrderedTree::new_root();
        let mut frontier = vec![0u32];
        for _ in 0..height {
            let mut next = Vec::new();
            for &n in &frontier {
                next.push(t.add_child(n));
                next.push(t.add_child(n));
            }
            frontier = next;
        }
        t
    }

    #[test]
    fn prune_examples() {
        let t = path_tree(5);
        let same = t.prune(5).unwrap();
        assert_eq!(same.canonical_key(), t.canonical_key());
        let p = t.prune(2).unwrap();
        assert_eq!(p.n_nodes(), 3);
        assert_eq!(p.height(), 2);
        assert!(t.prune(6).is_err());

        // node count equals nodes of generation <= n
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mut t = OrderedTree::new_root();
            let mut frontier = vec![0u32];
            for _ in 0..4 {
                let mut next = Vec::new();
                for &nd in &frontier {
                    for _ in 0..rng.random_range(0..3u32) {
                        next.push(t.add_child(nd));
                    }
                }
                frontier = next;
            }
            let n = 2.min(t.height());
            let pruned = t.prune(n).unwrap();
            let expect: usize = (0..=n).map(|g| t.count_at_generation(g) as usize).sum();
            assert_eq!(pruned.n_nodes(), expect);
        }
    }

    #[test]
    fn leftmost_stem_examples() {
        // a path has its unique stem
        let t = path_tree(4);
        let trest = leftmost_stem(&t, 4).unwrap();
        assert!(trest.is_well_formed());
        assert_eq!(trest.key().stem, vec![0, 0, 0, 0]);

        // complete binary: all-leftmost path
        let t = complete_binary(2);
        let trest = leftmost_stem(&t, 2).unwrap();
        assert_eq!(trest.key().stem, vec![0, 0]);

        // first child dies at generation 1, second survives to 2:
        // the stem must route through child 2
        let mut t = OrderedTree::new_root();
        let _dead = t.add_child(0);
        let alive = t.add_child(0);
        let gc = t.add_child(alive);
        let _ggc = t.add_child(gc);
        let trest = leftmost_stem(&t, 2).unwrap();
        assert_eq!(trest.key().stem, vec![1, 0]);
        // exhaustive path search oracle: the chosen stem is the lexicographic
        // minimum among all root-to-generation-2 paths
        let pruned = t.prune(2).unwrap();
        let mut all_paths: Vec<Vec<u32>> = Vec::new();
        for leaf in pruned.nodes_at_generation(2) {
            all_paths.push(pruned.neveu(leaf));
        }
        all_paths.sort();
        assert_eq!(trest.key().stem, all_paths[0]);
    }

    #[test]
    fn trest_prune_and_json() {
        let t = complete_binary(3);
        let trest = leftmost_stem(&t, 3).unwrap();
        let p = trest.prune(1).unwrap();
        assert!(p.is_well_formed());
        assert_eq!(p.height(), 1);
        let v = trest.to_json();
        assert!(v.get("tree").is_some() && v.get("stem").is_some());
    }

    #[test]
    fn lpp_trest_binary_env() {
        // size-biased binary is the point mass at 2: the stem parent always
        // has exactly two children
        let env = QuenchedEnvironment::new(vec![
            OffspringDistribution::binary(0.6).unwrap();
            6
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let (trest, counts) = simulate_lpp_trest(&env, &mut rng).unwrap();
            assert!(trest.is_well_formed());
            assert_eq!(trest.height(), 6);
            for i in 0..6 {
                assert_eq!(trest.tree.children(trest.stem[i]).len(), 2);
            }
            assert!(counts.identity_holds());
        }
    }

    #[test]
    fn lpp_branch_means_match_formula() {
        // E[Z~_n^i | env] = eta_{i+1} e^{S_n - S_i}
        let env = QuenchedEnvironment::new(vec![
            OffspringDistribution::geometric(0.55).unwrap(),
            OffspringDistribution::binary(0.7).unwrap(),
            OffspringDistribution::geometric(0.45).unwrap(),
            OffspringDistribution::poisson(0.9).unwrap(),
        ]);
        let n = env.len();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let reps = 200_000;
        let mut accs: Vec<MeanAcc> = (0..n).map(|_| MeanAcc::new()).collect();
        for _ in 0..reps {
            let (_, counts) = simulate_lpp_trest(&env, &mut rng).unwrap();
            assert!(counts.identity_holds());
            for i in 0..n {
                accs[i].push(counts.decomp[n][i] as f64);
            }
        }
        for i in 0..n {
            let expect = env.eta(i + 1) * (env.walk().s(n) - env.walk().s(i)).exp();
            let diff = (accs[i].mean() - expect).abs();
            assert!(
                diff < 3.0 * accs[i].stderr(),
                "i={i}: mean={} expect={expect} se={}",
                accs[i].mean(),
                accs[i].stderr()
            );
        }
    }

    #[test]
    fn lpp_totals_match_decomposed_simulation_in_mean() {
        let env = QuenchedEnvironment::new(vec![
            OffspringDistribution::geometric(0.5).unwrap();
            8
        ]);
        let dists: Vec<&OffspringDistribution> = env.dists().iter().collect();
        let biased: Vec<OffspringDistribution> =
            env.dists().iter().map(|d| d.size_bias()).collect();
        let biased_refs: Vec<&OffspringDistribution> = biased.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut fast = MeanAcc::new();
        let mut full = MeanAcc::new();
        for _ in 0..60_000 {
            fast.push(simulate_lpp_totals(&dists, &biased_refs, &mut rng)[8] as f64);
        }
        for _ in 0..60_000 {
            let (_, c) = simulate_lpp_trest(&env, &mut rng).unwrap();
            full.push(c.z[8] as f64);
        }
        let se = (fast.stderr().powi(2) + full.stderr().powi(2)).sqrt();
        assert!((fast.mean() - full.mean()).abs() < 3.0 * se);
        // critical geometric: E[Z~_n] = 1 + sum eta e^{0} = 1 + 2n
        let expect = 1.0 + 2.0 * 8.0;
        assert!((fast.mean() - expect).abs() < 3.0 * fast.stderr());
    }

    #[test]
    fn geiger_pair_law_normalizes_and_degenerate_case() {
        // marginal sums: sum_{r,l} P(R=r, L=l) = 1 for each i
        let env = QuenchedEnvironment::new(vec![
            OffspringDistribution::finite_table(vec![0.25, 0.35, 0.25, 0.15]).unwrap(),
            OffspringDistribution::binary(0.55).unwrap(),
            OffspringDistribution::geometric(0.5).unwrap(),
        ]);
        let s = survival_profile(&env).unwrap();
        for i in 1..=3usize {
            let q = env.q(i);
            let mut total = 0.0;
            for y in 1..=q.support_cutoff(1e-14) {
                let mut d_pow = 1.0;
                for _l in 0..y {
                    total += q.pmf(y) * s[i] * d_pow / s[i - 1];
                    d_pow *= 1.0 - s[i];
                }
            }
            assert!((total - 1.0).abs() < 1e-10, "i={i}: {total}");
        }

        // n = 1 binary: (R_1, L_1) = (1, 0) almost surely
        let env = QuenchedEnvironment::new(vec![OffspringDistribution::binary(0.4).unwrap()]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let trest = simulate_geiger_trest(&env, &mut rng).unwrap();
            assert!(trest.is_well_formed());
            let kids = trest.tree.children(0);
            assert_eq!(kids.len(), 2);
            // stem is the left child, the sibling sits to its right
            assert_eq!(kids[0], trest.stem[1]);
        }
    }

    #[test]
    fn enumeration_oracle_small_cases() {
        // deterministic doubling: a single surviving tree
        let env = QuenchedEnvironment::new(vec![
            OffspringDistribution::binary(1.0).unwrap();
            2
        ]);
        let law = enumerate_conditioned_trest_law(&env, 2).unwrap();
        assert_eq!(law.masses.len(), 1);
        assert!((law.survival - 1.0).abs() < 1e-12);

        // n = 1 binary: point mass on the two-child tree
        let env = QuenchedEnvironment::new(vec![OffspringDistribution::binary(0.3).unwrap()]);
        let law = enumerate_conditioned_trest_law(&env, 1).unwrap();
        assert_eq!(law.masses.len(), 1);
        assert!((law.masses.values().next().unwrap() - 1.0).abs() < 1e-12);
        assert!((law.survival - 0.3).abs() < 1e-12);

        // n = 2 binary(p): three surviving shapes with hand masses
        let p = 0.7;
        let env = QuenchedEnvironment::new(vec![
            OffspringDistribution::binary(p).unwrap();
            2
        ]);
        let law = enumerate_conditioned_trest_law(&env, 2).unwrap();
        assert_eq!(law.masses.len(), 3);
        let mut got: Vec<f64> = law.masses.values().copied().collect();
        got.sort_by(f64::total_cmp);
        let mut expect = vec![
            (1.0 - p) / (2.0 - p),
            (1.0 - p) / (2.0 - p),
            p / (2.0 - p),
        ];
        expect.sort_by(f64::total_cmp);
        for (g, e) in got.iter().zip(expect.iter()) {
            assert!((g - e).abs() < 1e-12, "{got:?} vs {expect:?}");
        }
        let total: f64 = law.masses.values().sum();
        assert!((total - 1.0).abs() < 1e-10);
        // the enumerated survival matches the recursion
        let s = crate::bpre::survival_quenched(&env, 2).unwrap();
        assert!((law.survival - s).abs() < 1e-12);
    }

    #[test]
    fn geiger_law_matches_enumeration_at_small_scale() {
        let env = QuenchedEnvironment::new(vec![
            OffspringDistribution::finite_table(vec![0.3, 0.4, 0.3]).unwrap(),
            OffspringDistribution::binary(0.6).unwrap(),
        ]);
        let exact = enumerate_conditioned_trest_law(&env, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n_samples = 40_000u64;
        let mut counts: BTreeMap<TrestKey, u64> = BTreeMap::new();
        for _ in 0..n_samples {
            let trest = simulate_geiger_trest(&env, &mut rng).unwrap();
            // compare through the same functional: the leftmost-stem trest
            let canon = leftmost_stem(&trest.tree, 2).unwrap();
            *counts.entry(canon.key()).or_insert(0) += 1;
        }
        let mut tv = 0.0;
        let mut keys: Vec<TrestKey> = exact.masses.keys().cloned().collect();
        keys.extend(counts.keys().cloned());
        keys.sort();
        keys.dedup();
        for k in keys {
            let e = exact.masses.get(&k).copied().unwrap_or(0.0);
            let o = counts.get(&k).copied().unwrap_or(0) as f64 / n_samples as f64;
            tv += (e - o).abs();
        }
        tv *= 0.5;
        assert!(tv <= 0.03, "tv={tv}");
    }

    #[test]
    fn tv_coupling_bound_examples() {
        // certain-survival suffix: the Geiger pair is the point mass (1,0)
        // while the LPP pair is uniform on {(1,0),(0,1)}, so TV = 1/2; the
        // bound is eta/2 * e^{S_4 - S_1} = 0.5 * 8 / 2 = 2
        let env = QuenchedEnvironment::new(vec![
            OffspringDistribution::binary(1.0).unwrap();
            4
        ]);
        let c = tv_coupling_bound_check(&env, 4, 2).unwrap();
        assert!((c.tv - 0.5).abs() < 1e-14);
        assert!((c.bound - 2.0).abs() < 1e-12);
        assert!(c.holds);

        // critical flat environment
        let env = critical_geometric_env(4);
        let c = tv_coupling_bound_check(&env, 4, 2).unwrap();
        assert!(c.holds);
        assert!(c.tv > 0.0 && c.bound >= c.tv);

        // subcritical environment: bound decreases as n - i grows
        let env = QuenchedEnvironment::new(vec![
            OffspringDistribution::binary(0.35).unwrap();
            8
        ]);
        let bounds: Vec<f64> = (1..=8)
            .map(|i| tv_coupling_bound_check(&env, 8, i).unwrap().bound)
            .collect();
        for w in bounds.windows(2) {
            assert!(w[0] <= w[1] + 1e-15, "{bounds:?}");
        }
        for i in 1..=8 {
            assert!(tv_coupling_bound_check(&env, 8, i).unwrap().holds);
        }
    }

    #[test]
    fn geiger_conditional_counts_match_rejection_conditioning() {
        // oracle: plain simulation kept only on survival
        let env = QuenchedEnvironment::new(vec![
            OffspringDistribution::geometric(0.55).unwrap(),
            OffspringDistribution::binary(0.6).unwrap(),
            OffspringDistribution::geometric(0.5).unwrap(),
            OffspringDistribution::finite_table(vec![0.3, 0.4, 0.3]).unwrap(),
            OffspringDistribution::geometric(0.6).unwrap(),
        ]);
        let n = env.len();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let reps = 120_000;
        let mut rejected: Vec<Vec<u64>> = Vec::new();
        while rejected.len() < reps {
            let t = crate::bpre::simulate_quenched(&env, 1, &mut rng).unwrap();
            if t.survived() {
                rejected.push(t.counts().to_vec());
            }
        }
        let dists: Vec<&OffspringDistribution> = env.dists().iter().collect();
        let sampler = GeigerSampler::new(dists).unwrap();
        assert!(
            (sampler.survival() - crate::bpre::survival_quenched(&env, n).unwrap()).abs() < 1e-12
        );
        let geiger: Vec<Vec<u64>> = (0..reps)
            .map(|_| sampler.conditional_trajectory(&mut rng).unwrap())
            .collect();
        // per-generation means agree within CLT bands
        for k in 1..=n {
            let mut a = MeanAcc::new();
            let mut b = MeanAcc::new();
            for t in &rejected {
                a.push(t[k] as f64);
            }
            for t in &geiger {
                b.push(t[k] as f64);
            }
            let se = (a.stderr().powi(2) + b.stderr().powi(2)).sqrt();
            assert!(
                (a.mean() - b.mean()).abs() < 4.0 * se,
                "k={k}: {} vs {}",
                a.mean(),
                b.mean()
            );
        }
        // the terminal distribution matches in total variation
        let dist_a = crate::estimate::EmpiricalDistribution::from_weighted(
            rejected.iter().map(|t| (t[n], 1.0)),
            reps as u64,
        );
        let dist_b = crate::estimate::EmpiricalDistribution::from_weighted(
            geiger.iter().map(|t| (t[n], 1.0)),
            reps as u64,
        );
        let tv = dist_a.tv_distance(&dist_b);
        assert!(tv < 0.02, "tv={tv}");
        // the z-only sampler agrees with the trajectory sampler's terminal law
        let z_only: Vec<u64> = (0..reps)
            .map(|_| sampler.conditional_z_n(&mut rng).unwrap())
            .collect();
        let dist_c = crate::estimate::EmpiricalDistribution::from_weighted(
            z_only.iter().map(|z| (*z, 1.0)),
            reps as u64,
        );
        let tv_c = dist_b.tv_distance(&dist_c);
        assert!(tv_c < 0.02, "tv={tv_c}");
        // trajectories never die before the horizon
        for t in &geiger {
            assert!(t.iter().all(|z| *z > 0));
        }
    }

    #[test]
    fn deterministic_lpp_limit_value() {
        // Binary(1.0)-only environment: e^{-S_n} Z~_n = 1 exactly for all n
        let env = QuenchedEnvironment::new(vec![
            OffspringDistribution::binary(1.0).unwrap();
            10
        ]);
        let dists: Vec<&OffspringDistribution> = env.dists().iter().collect();
        let biased: Vec<OffspringDistribution> =
            env.dists().iter().map(|d| d.size_bias()).collect();
        let biased_refs: Vec<&OffspringDistribution> = biased.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = simulate_lpp_totals(&dists, &biased_refs, &mut rng);
        for (k, zk) in z.iter().enumerate() {
            let norm = *zk as f64 * (-env.walk().s(k)).exp();
            assert!((norm - 1.0).abs() < 1e-12, "k={k}: {norm}");
        }
    }
}
