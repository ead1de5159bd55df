//! Oracles shared by the integration tests. Nothing here calls the code it
//! checks, apart from feature encoding and environment construction.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use confounding::environment::{make_default_ground_truth, CategoricalSpec, GroundTruth};
use confounding::features::FeatureSpec;
use confounding::scenarios::Interaction;

pub const FIXTURE_SEEDS: std::ops::Range<u64> = 0..50;

pub fn fixture(seed: u64) -> GroundTruth {
    make_default_ground_truth(CategoricalSpec::default(), seed, 0.02).expect("fixture seed reaches the gap")
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Newton-Raphson logistic regression on the dense one-hot design,
/// restricted to `columns`. Returns coefficients for those columns.
pub fn newton_fit(records: &[Interaction], fs: &FeatureSpec, columns: &[usize]) -> Vec<f64> {
    // aggregate identical design rows: column -> (n, successes)
    let mut groups: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for r in records {
        let x = fs.encode_dense(&r.cell()).unwrap();
        let col = x.iter().position(|&v| v == 1.0).unwrap();
        let e = groups.entry(col).or_default();
        e.0 += 1.0;
        e.1 += f64::from(u8::from(r.c));
    }
    let k = columns.len();
    let pos: BTreeMap<usize, usize> = columns.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let rows: Vec<(usize, f64, f64)> = groups
        .iter()
        .filter_map(|(c, &(n, y))| pos.get(c).map(|&i| (i, n, y)))
        .collect();
    let mut beta = vec![0.0; k];
    for _ in 0..200 {
        let mut grad = vec![0.0; k];
        let mut hess = vec![vec![0.0; k]; k];
        for &(i, n, y) in &rows {
            // design row is the unit vector e_i
            let x: Vec<f64> = (0..k).map(|j| f64::from(u8::from(j == i))).collect();
            let eta: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let p = sigmoid(eta);
            for a in 0..k {
                grad[a] += (y - n * p) * x[a];
                for b in 0..k {
                    hess[a][b] += n * p * (1.0 - p) * x[a] * x[b];
                }
            }
        }
        let step = solve(hess, grad);
        let mut size: f64 = 0.0;
        for (b, s) in beta.iter_mut().zip(&step) {
            *b += s;
            size = size.max(s.abs());
        }
        if size < 1e-13 {
            break;
        }
    }
    beta
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[row][c] -= f * a[col][c];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// DAG on nodes `0..n` given as an edge list with every edge `i -> j`
/// having `i < j` in some topological order.
#[derive(Debug, Clone)]
pub struct SmallDag {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl SmallDag {
    pub fn names(&self) -> Vec<String> {
        (0..self.n).map(|i| format!("v{i}")).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s: String = self.names().iter().map(|n| format!("{n}\n")).collect();
        for &(a, b) in &self.edges {
            s.push_str(&format!("v{a} -> v{b}\n"));
        }
        s
    }

    fn parents(&self, v: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.1 == v).map(|e| e.0).collect()
    }

    /// Exact joint table of binary variables with random conditional tables,
    /// indexed by the bitmask of node values.
    pub fn joint(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let order = self.topo();
        let cpts: Vec<Vec<f64>> = (0..self.n)
            .map(|v| {
                let np = self.parents(v).len();
                (0..1usize << np).map(|_| rng.random_range(0.1..0.9)).collect()
            })
            .collect();
        let mut p = vec![0.0; 1 << self.n];
        for (assign, slot) in p.iter_mut().enumerate() {
            let mut prob = 1.0;
            for &v in &order {
                let ps = self.parents(v);
                let idx = ps
                    .iter()
                    .enumerate()
                    .fold(0, |acc, (k, &q)| acc | ((assign >> q & 1) << k));
                let p1 = cpts[v][idx];
                prob *= if assign >> v & 1 == 1 { p1 } else { 1.0 - p1 };
            }
            *slot = prob;
        }
        p
    }

    fn topo(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut done = vec![false; self.n];
        while out.len() < self.n {
            for v in 0..self.n {
                if !done[v] && self.parents(v).iter().all(|&p| done[p]) {
                    done[v] = true;
                    out.push(v);
                }
            }
        }
        out
    }
}

/// Every labelled DAG on `n` nodes.
pub fn all_dags(n: usize) -> Vec<SmallDag> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let mut out = Vec::new();
    // each unordered pair: absent, a->b, or b->a; keep the acyclic ones
    let total = 3usize.pow(pairs.len() as u32);
    for mut code in 0..total {
        let mut edges = Vec::new();
        for &(a, b) in &pairs {
            match code % 3 {
                1 => edges.push((a, b)),
                2 => edges.push((b, a)),
                _ => {}
            }
            code /= 3;
        }
        let g = SmallDag { n, edges };
        if is_acyclic(&g) {
            out.push(g);
        }
    }
    out
}

/// Random DAG: random order, each forward pair present with probability `p`.
pub fn random_dag(n: usize, p: f64, rng: &mut ChaCha8Rng) -> SmallDag {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((order[i], order[j]));
            }
        }
    }
    SmallDag { n, edges }
}

fn is_acyclic(g: &SmallDag) -> bool {
    let mut indeg = vec![0; g.n];
    for &(_, b) in &g.edges {
        indeg[b] += 1;
    }
    let mut stack: Vec<usize> = (0..g.n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = stack.pop() {
        seen += 1;
        for &(a, b) in &g.edges {
            if a == v {
                indeg[b] -= 1;
                if indeg[b] == 0 {
                    stack.push(b);
                }
            }
        }
    }
    seen == g.n
}

fn marginal(p: &[f64], keep: &BTreeSet<usize>) -> BTreeMap<usize, f64> {
    let mask: usize = keep.iter().map(|&v| 1 << v).sum();
    let mut m = BTreeMap::new();
    for (assign, &q) in p.iter().enumerate() {
        *m.entry(assign & mask).or_insert(0.0) += q;
    }
    m
}

/// `xs ⊥ ys | zs` in the exact joint table, up to `tol`.
pub fn independent(p: &[f64], xs: &BTreeSet<usize>, ys: &BTreeSet<usize>, zs: &BTreeSet<usize>, tol: f64) -> bool {
    let xyz: BTreeSet<usize> = xs.iter().chain(ys).chain(zs).copied().collect();
    let xz: BTreeSet<usize> = xs.iter().chain(zs).copied().collect();
    let yz: BTreeSet<usize> = ys.iter().chain(zs).copied().collect();
    let (p_xyz, p_xz, p_yz, p_z) = (marginal(p, &xyz), marginal(p, &xz), marginal(p, &yz), marginal(p, zs));
    let mask = |s: &BTreeSet<usize>| -> usize { s.iter().map(|&v| 1usize << v).sum() };
    let (mxz, myz, mz) = (mask(&xz), mask(&yz), mask(zs));
    p_xyz.iter().all(|(&a, &pxyz)| {
        let lhs = pxyz * p_z[&(a & mz)];
        let rhs = p_xz[&(a & mxz)] * p_yz[&(a & myz)];
        (lhs - rhs).abs() <= tol
    })
}

/// All subsets of `items`.
pub fn subsets(items: &[usize]) -> Vec<BTreeSet<usize>> {
    (0..1usize << items.len())
        .map(|m| items.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).map(|(_, &v)| v).collect())
        .collect()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
