//! Random regular edge sets, rigidity-matrix rank checks, the randomized
//! equilibrium-stress test for global rigidity, and closure of edge sets
//! under a permutation group.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::par::Exec;
use crate::rng;

/// Restarts allowed when pairing stubs into a simple regular graph.
pub const PAIRING_RETRY_LIMIT: usize = 10_000;

/// Regeneration attempts per pool entry before giving up.
pub const POOL_ATTEMPTS: usize = 100;

/// Relative cutoff for numerical rank.
pub const RANK_RTOL: f64 = 1e-10;

/// Undirected simple graph on `0..n` with edges stored as sorted `(i, j)`, `i < j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EdgeSet {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl EdgeSet {
    /// Normalizes orientation and rejects self-loops, duplicates and
    /// out-of-range indices.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::EdgeOutOfRange(a, b, n));
            }
            if a == b {
                return Err(Error::InvalidParameter(format!("self-loop at {a}")));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidParameter(format!("duplicate edge ({a}, {b})")));
            }
        }
        Ok(Self {
            n,
            edges: set.into_iter().collect(),
        })
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Self { n, edges }
    }

    pub fn cycle(n: usize) -> Self {
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n))).expect("valid cycle")
    }

    pub fn path(n: usize) -> Self {
        Self::new(n, (1..n).map(|i| (i - 1, i))).expect("valid path")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }
}

/// A graph together with a placement of its nodes.
#[derive(Clone, Debug)]
pub struct Framework {
    edges: EdgeSet,
    placement: PointCloud,
}

impl Framework {
    pub fn new(edges: EdgeSet, placement: PointCloud) -> Result<Self> {
        if edges.n() != placement.n() {
            return Err(Error::DimensionMismatch {
                expected: edges.n(),
                got: placement.n(),
            });
        }
        Ok(Self { edges, placement })
    }

    /// Nodes at i.i.d. standard normal coordinates.
    pub fn generic(edges: EdgeSet, d: usize, seed: u64) -> Result<Self> {
        let mut r = rng::seeded(seed);
        let placement = PointCloud::gaussian(edges.n(), d, &mut r)?;
        Self::new(edges, placement)
    }

    pub fn edges(&self) -> &EdgeSet {
        &self.edges
    }

    pub fn placement(&self) -> &PointCloud {
        &self.placement
    }
}

/// Random simple `k`-regular graph on `n` nodes.
///
/// Stubs are paired at random; pairs that would form a self-loop or repeat
/// an edge are set aside and re-paired among themselves. A round is
/// abandoned when no valid pair remains among the leftover stubs.
pub fn random_k_regular(n: usize, k: usize, seed: u64) -> Result<EdgeSet> {
    if !(n * k).is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("n·k = {} is odd", n * k)));
    }
    if k >= n {
        return Err(Error::InvalidParameter(format!("degree {k} must be below n = {n}")));
    }
    let mut r = rng::seeded(seed);
    for _ in 0..PAIRING_RETRY_LIMIT {
        if let Some(edges) = try_pairing(n, k, &mut r) {
            return EdgeSet::new(n, edges);
        }
    }
    Err(Error::BudgetExhausted(PAIRING_RETRY_LIMIT))
}

fn try_pairing(n: usize, k: usize, r: &mut rng::Rng) -> Option<BTreeSet<(usize, usize)>> {
    let mut edges = BTreeSet::new();
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, k)).collect();
    while !stubs.is_empty() {
        let mut leftover: BTreeMap<usize, usize> = BTreeMap::new();
        stubs.shuffle(r);
        for pair in stubs.chunks_exact(2) {
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if a != b && edges.insert((a, b)) {
                continue;
            }
            *leftover.entry(a).or_default() += 1;
            *leftover.entry(b).or_default() += 1;
        }
        let nodes: Vec<usize> = leftover.keys().copied().collect();
        let pairable = nodes.iter().enumerate().any(|(x, &a)| {
            nodes[x + 1..].iter().any(|&b| !edges.contains(&(a, b)))
        });
        if !leftover.is_empty() && !pairable {
            return None;
        }
        stubs = leftover
            .into_iter()
            .flat_map(|(v, c)| std::iter::repeat_n(v, c))
            .collect();
    }
    Some(edges)
}

/// Linearized edge-length map: row `(i, j)` holds `p_i − p_j` in node `i`'s
/// block and `p_j − p_i` in node `j`'s block.
pub fn rigidity_matrix(fw: &Framework) -> DMatrix<f64> {
    let p = fw.placement();
    let d = p.d();
    let mut m = DMatrix::zeros(fw.edges().len(), p.n() * d);
    for (row, &(i, j)) in fw.edges().edges().iter().enumerate() {
        for a in 0..d {
            let diff = p.row(i)[a] - p.row(j)[a];
            m[(row, i * d + a)] = diff;
            m[(row, j * d + a)] = -diff;
        }
    }
    m
}

fn rank_threshold(singular_values: &DVector<f64>, max_dim: usize) -> f64 {
    singular_values.amax() * max_dim as f64 * RANK_RTOL
}

pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let tol = rank_threshold(&sv, m.nrows().max(m.ncols()));
    sv.iter().filter(|&&s| s > tol).count()
}

fn check_dimension(d: usize) -> Result<()> {
    if !(1..=3).contains(&d) {
        return Err(Error::UnsupportedDimension(d));
    }
    Ok(())
}

/// Infinitesimal rigidity at a seeded generic placement.
pub fn is_rigid(edges: &EdgeSet, d: usize, seed: u64) -> Result<bool> {
    check_dimension(d)?;
    let n = edges.n();
    if n <= d {
        return Err(Error::Degenerate(format!("rigidity needs n > d (n = {n}, d = {d})")));
    }
    let fw = Framework::generic(edges.clone(), d, seed)?;
    Ok(numerical_rank(&rigidity_matrix(&fw)) == rigid_rank(n, d))
}

fn rigid_rank(n: usize, d: usize) -> usize {
    n * d - d * (d + 1) / 2
}

/// Randomized certificate of global rigidity: rigid at a generic placement,
/// and a random equilibrium stress whose stress matrix has rank `n − d − 1`.
/// `false` means "not certified".
pub fn is_globally_rigid(edges: &EdgeSet, d: usize, seed: u64) -> Result<bool> {
    check_dimension(d)?;
    let n = edges.n();
    if n < d + 2 {
        return Err(Error::Degenerate(format!(
            "global rigidity test needs n ≥ d + 2 (n = {n}, d = {d})"
        )));
    }
    let fw = Framework::generic(edges.clone(), d, seed)?;
    let r = rigidity_matrix(&fw);
    let m = r.nrows();
    let cols = r.ncols();

    // Pad to a square matrix so the SVD returns a full left basis.
    let size = m.max(cols);
    let mut padded = DMatrix::zeros(size, size);
    padded.view_mut((0, 0), (m, cols)).copy_from(&r);
    let svd = padded.svd(true, false);
    let sv = &svd.singular_values;
    let tol = rank_threshold(sv, m.max(cols));
    let rank = sv.iter().filter(|&&s| s > tol).count();
    if rank != rigid_rank(n, d) {
        return Ok(false);
    }
    let u = svd.u.expect("requested U");
    let null: Vec<usize> = (0..size).filter(|&k| sv[k] <= tol).collect();

    let mut rr = rng::stream(seed, 1);
    let mut stress = DVector::<f64>::zeros(m);
    for &k in &null {
        let c: f64 = StandardNormal.sample(&mut rr);
        stress.axpy(c, &u.view((0, k), (m, 1)).column(0), 1.0);
    }
    if stress.amax() == 0.0 {
        return Ok(false);
    }

    let mut omega = DMatrix::<f64>::zeros(n, n);
    for (e, &(i, j)) in edges.edges().iter().enumerate() {
        let w = stress[e];
        omega[(i, j)] -= w;
        omega[(j, i)] -= w;
        omega[(i, i)] += w;
        omega[(j, j)] += w;
    }
    Ok(numerical_rank(&omega) == n - d - 1)
}

/// A permutation group given by generators, with the induced node orbits.
#[derive(Clone, Debug)]
pub struct OrbitAction {
    n: usize,
    generators: Vec<Vec<usize>>,
    orbits: Vec<Vec<usize>>,
}

impl OrbitAction {
    pub fn new(n: usize, generators: Vec<Vec<usize>>) -> Result<Self> {
        for g in &generators {
            if g.len() != n {
                return Err(Error::InvalidPermutation(format!(
                    "length {} on {n} nodes",
                    g.len()
                )));
            }
            let mut seen = vec![false; n];
            for &x in g {
                if x >= n || std::mem::replace(&mut seen[x], true) {
                    return Err(Error::InvalidPermutation(format!("{g:?} is not a bijection")));
                }
            }
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut root = x;
            while p[root] != root {
                root = p[root];
            }
            let mut cur = x;
            while p[cur] != root {
                cur = std::mem::replace(&mut p[cur], root);
            }
            root
        }
        for g in &generators {
            for (x, &gx) in g.iter().enumerate() {
                let (a, b) = (find(&mut parent, x), find(&mut parent, gx));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for x in 0..n {
            let root = find(&mut parent, x);
            groups.entry(root).or_default().push(x);
        }
        Ok(Self {
            n,
            generators,
            orbits: groups.into_values().collect(),
        })
    }

    pub fn trivial(n: usize) -> Self {
        Self::new(n, Vec::new()).expect("trivial group")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn generators(&self) -> &[Vec<usize>] {
        &self.generators
    }

    pub fn orbits(&self) -> &[Vec<usize>] {
        &self.orbits
    }
}

/// Closes `edges` under the group: the support of `Σ_g g·A·g⁻¹`.
pub fn symmetrize_edges(edges: &EdgeSet, action: &OrbitAction) -> Result<EdgeSet> {
    if action.n() != edges.n() {
        return Err(Error::InvalidPermutation(format!(
            "action on {} nodes applied to a graph on {}",
            action.n(),
            edges.n()
        )));
    }
    let mut closed: BTreeSet<(usize, usize)> = edges.edges().iter().copied().collect();
    let mut queue: VecDeque<(usize, usize)> = closed.iter().copied().collect();
    while let Some((i, j)) = queue.pop_front() {
        for g in action.generators() {
            let (a, b) = (g[i], g[j]);
            let image = (a.min(b), a.max(b));
            if closed.insert(image) {
                queue.push_back(image);
            }
        }
    }
    Ok(EdgeSet {
        n: edges.n(),
        edges: closed.into_iter().collect(),
    })
}

/// Degree used for sparse-loss pools in `d` dimensions: `2d`, bumped by one
/// when `n·2d` is odd.
pub fn pool_degree(n: usize, d: usize) -> usize {
    let k = 2 * d;
    if (n * k).is_multiple_of(2) {
        k
    } else {
        k + 1
    }
}

/// `pool_size` random regular edge sets that each pass [`is_rigid`].
pub fn edge_pool(n: usize, d: usize, pool_size: usize, seed: u64, exec: Exec) -> Result<Vec<EdgeSet>> {
    check_dimension(d)?;
    let k = pool_degree(n, d);
    exec.try_map(pool_size, |slot| {
        for attempt in 0..POOL_ATTEMPTS {
            let s = rng::derive(rng::derive(seed, slot as u64), attempt as u64);
            let edges = random_k_regular(n, k, s)?;
            if is_rigid(&edges, d, rng::derive(s, 0xA11CE))? {
                return Ok(edges);
            }
        }
        Err(Error::BudgetExhausted(POOL_ATTEMPTS))
    })
}

/// Infinitesimal motions of a placement: `d` translations and
/// `d(d−1)/2` rotations, each flattened to an `n·d` vector.
pub fn rigid_motion_fields(placement: &PointCloud) -> Vec<DVector<f64>> {
    let (n, d) = (placement.n(), placement.d());
    let mut fields = Vec::new();
    for a in 0..d {
        fields.push(DVector::from_fn(n * d, |k, _| if k % d == a { 1.0 } else { 0.0 }));
    }
    for a in 0..d {
        for b in a + 1..d {
            let mut v = DVector::zeros(n * d);
            for (i, p) in placement.rows().enumerate() {
                v[i * d + a] = -p[b];
                v[i * d + b] = p[a];
            }
            fields.push(v);
        }
    }
    fields
}
