//! Small named DAGs with d-separation and backdoor queries.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use crate::error::{Error, Result};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    names: Vec<String>,
    index: HashMap<String, NodeId>,
    parents: Vec<Vec<NodeId>>,
    children: Vec<Vec<NodeId>>,
}

impl Dag {
    /// Builds a DAG from an edge list; nodes are created on first mention in
    /// `nodes` or in an edge.
    pub fn new<S: AsRef<str>>(nodes: &[S], edges: &[(S, S)]) -> Result<Self> {
        let mut g = Dag {
            names: Vec::new(),
            index: HashMap::new(),
            parents: Vec::new(),
            children: Vec::new(),
        };
        for n in nodes {
            g.intern(n.as_ref());
        }
        for (from, to) in edges {
            let (f, t) = (g.intern(from.as_ref()), g.intern(to.as_ref()));
            g.add_edge(f, t);
        }
        g.check_acyclic()?;
        Ok(g)
    }

    /// Parses `from -> to` lines. `#` starts a comment; a line holding a
    /// single name declares an isolated node.
    pub fn parse(text: &str) -> Result<Self> {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            match line.split_once("->") {
                Some((from, to)) => {
                    let (from, to) = (from.trim(), to.trim());
                    if !valid_name(from) || !valid_name(to) {
                        return Err(err(&format!("bad edge `{line}`")));
                    }
                    if from == to {
                        return Err(err(&format!("self loop on `{from}`")));
                    }
                    edges.push((from.to_string(), to.to_string()));
                }
                None if valid_name(line) => nodes.push(line.to_string()),
                None => return Err(err(&format!("expected `name -> name`, got `{line}`"))),
            }
        }
        Dag::new(&nodes, &edges)
    }

    fn intern(&mut self, name: &str) -> NodeId {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        self.parents.push(Vec::new());
        self.children.push(Vec::new());
        i
    }

    fn add_edge(&mut self, from: NodeId, to: NodeId) {
        if !self.children[from].contains(&to) {
            self.children[from].push(to);
            self.parents[to].push(from);
        }
    }

    fn check_acyclic(&self) -> Result<()> {
        // Kahn's algorithm; whatever is left over lies on a cycle
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: VecDeque<NodeId> = (0..self.len()).filter(|&v| indeg[v] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop_front() {
            seen += 1;
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if seen == self.len() {
            Ok(())
        } else {
            let v = (0..self.len()).find(|&v| indeg[v] > 0).unwrap_or(0);
            Err(Error::Cyclic(self.names[v].clone()))
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, v: NodeId) -> &str {
        &self.names[v]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn ids<S: AsRef<str>>(&self, names: &[S]) -> Result<BTreeSet<NodeId>> {
        names.iter().map(|n| self.id(n.as_ref())).collect()
    }

    pub fn parents(&self, v: NodeId) -> &[NodeId] {
        &self.parents[v]
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v]
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId) -> bool {
        self.children[from].contains(&to)
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.len()).flat_map(move |v| self.children[v].iter().map(move |&c| (v, c)))
    }

    /// Strict descendants of `v`.
    pub fn descendants(&self, v: NodeId) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        let mut stack = self.children[v].clone();
        while let Some(u) = stack.pop() {
            if out.insert(u) {
                stack.extend(&self.children[u]);
            }
        }
        out
    }

    /// `zs` together with all of their ancestors.
    fn ancestral_closure(&self, zs: &BTreeSet<NodeId>) -> Vec<bool> {
        let mut anc = vec![false; self.len()];
        let mut stack: Vec<NodeId> = zs.iter().copied().collect();
        while let Some(u) = stack.pop() {
            if !anc[u] {
                anc[u] = true;
                stack.extend(&self.parents[u]);
            }
        }
        anc
    }

    /// Nodes reachable from `xs` along paths that are active given `zs`
    /// (the "reachable" procedure of Bayes-ball).
    pub fn d_connected_from(&self, xs: &BTreeSet<NodeId>, zs: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
        let anc_z = self.ancestral_closure(zs);
        // visited[v][dir]: dir 0 = arrived from a child (moving up),
        // dir 1 = arrived from a parent (moving down)
        let mut visited = vec![[false; 2]; self.len()];
        let mut reachable = BTreeSet::new();
        let mut queue: VecDeque<(NodeId, usize)> = xs.iter().map(|&x| (x, 0)).collect();
        while let Some((v, dir)) = queue.pop_front() {
            if visited[v][dir] {
                continue;
            }
            visited[v][dir] = true;
            if !zs.contains(&v) {
                reachable.insert(v);
            }
            let observed = zs.contains(&v);
            if dir == 0 && !observed {
                queue.extend(self.parents[v].iter().map(|&p| (p, 0)));
                queue.extend(self.children[v].iter().map(|&c| (c, 1)));
            } else if dir == 1 {
                if !observed {
                    queue.extend(self.children[v].iter().map(|&c| (c, 1)));
                }
                if anc_z[v] {
                    // v is a collider on this trail, opened by an observed
                    // descendant (or by itself)
                    queue.extend(self.parents[v].iter().map(|&p| (p, 0)));
                }
            }
        }
        reachable
    }

    /// `xs ⊥ ys | zs` in the graph.
    pub fn d_separated(
        &self,
        xs: &BTreeSet<NodeId>,
        ys: &BTreeSet<NodeId>,
        zs: &BTreeSet<NodeId>,
    ) -> Result<bool> {
        if !xs.is_disjoint(ys) || !xs.is_disjoint(zs) || !ys.is_disjoint(zs) {
            return Err(Error::InvalidParameter("d-separation sets must be disjoint".into()));
        }
        let r = self.d_connected_from(xs, zs);
        Ok(ys.iter().all(|y| !r.contains(y)))
    }

    /// Name-based convenience wrapper for [`d_separated`](Self::d_separated).
    pub fn d_separated_by_name<S: AsRef<str>>(&self, xs: &[S], ys: &[S], zs: &[S]) -> Result<bool> {
        self.d_separated(&self.ids(xs)?, &self.ids(ys)?, &self.ids(zs)?)
    }

    /// All simple paths between `from` and `to`, ignoring edge direction.
    pub fn paths(&self, from: NodeId, to: NodeId) -> Vec<Path> {
        let mut out = Vec::new();
        let mut nodes = vec![from];
        let mut forward = Vec::new();
        let mut on_path = vec![false; self.len()];
        on_path[from] = true;
        self.extend_paths(to, &mut nodes, &mut forward, &mut on_path, &mut out);
        out
    }

    fn extend_paths(
        &self,
        to: NodeId,
        nodes: &mut Vec<NodeId>,
        forward: &mut Vec<bool>,
        on_path: &mut [bool],
        out: &mut Vec<Path>,
    ) {
        let v = *nodes.last().expect("path is never empty");
        if v == to {
            out.push(Path {
                nodes: nodes.clone(),
                forward: forward.clone(),
            });
            return;
        }
        let steps = self.children[v]
            .iter()
            .map(|&c| (c, true))
            .chain(self.parents[v].iter().map(|&p| (p, false)));
        for (u, fwd) in steps.collect::<Vec<_>>() {
            if on_path[u] {
                continue;
            }
            on_path[u] = true;
            nodes.push(u);
            forward.push(fwd);
            self.extend_paths(to, nodes, forward, on_path, out);
            nodes.pop();
            forward.pop();
            on_path[u] = false;
        }
    }

    /// First node that blocks `path` given `zs`, or `None` if the path is open.
    pub fn blocker(&self, path: &Path, zs: &BTreeSet<NodeId>) -> Option<NodeId> {
        for i in 1..path.nodes.len() - 1 {
            let m = path.nodes[i];
            let into_from_left = path.forward[i - 1];
            let into_from_right = !path.forward[i];
            if into_from_left && into_from_right {
                let opened = zs.contains(&m) || self.descendants(m).iter().any(|d| zs.contains(d));
                if !opened {
                    return Some(m);
                }
            } else if zs.contains(&m) {
                return Some(m);
            }
        }
        None
    }

    /// Paths from `treatment` to `outcome` whose first edge points into the
    /// treatment.
    pub fn backdoor_paths(&self, treatment: NodeId, outcome: NodeId) -> Vec<Path> {
        self.paths(treatment, outcome)
            .into_iter()
            .filter(|p| !p.forward[0])
            .collect()
    }

    pub fn backdoor_check(
        &self,
        treatment: NodeId,
        outcome: NodeId,
        zs: &BTreeSet<NodeId>,
    ) -> Result<BackdoorVerdict> {
        if treatment == outcome {
            return Err(Error::InvalidParameter("treatment and outcome coincide".into()));
        }
        if zs.contains(&treatment) || zs.contains(&outcome) {
            return Err(Error::InvalidParameter(
                "adjustment set may not contain the treatment or the outcome".into(),
            ));
        }
        let desc = self.descendants(treatment);
        let descendants_in_set: Vec<NodeId> = zs.iter().copied().filter(|z| desc.contains(z)).collect();
        let mut blocked = Vec::new();
        let mut open = Vec::new();
        for p in self.backdoor_paths(treatment, outcome) {
            match self.blocker(&p, zs) {
                Some(b) => blocked.push((p, b)),
                None => open.push(p),
            }
        }
        Ok(BackdoorVerdict {
            admissible: descendants_in_set.is_empty() && open.is_empty(),
            descendants_in_set,
            open,
            blocked,
        })
    }

    /// Backdoor criterion: no member of `zs` descends from `treatment`, and
    /// `zs` blocks every path into `treatment` that ends at `outcome`.
    pub fn backdoor_admissible(
        &self,
        treatment: NodeId,
        outcome: NodeId,
        zs: &BTreeSet<NodeId>,
    ) -> Result<bool> {
        if treatment == outcome {
            return Err(Error::InvalidParameter("treatment and outcome coincide".into()));
        }
        let desc = self.descendants(treatment);
        if zs.iter().any(|z| desc.contains(z)) {
            return Ok(false);
        }
        // backdoor paths are exactly the paths of the graph without the
        // treatment's outgoing edges
        let pruned = self.without_outgoing(treatment);
        let t = BTreeSet::from([treatment]);
        let y = BTreeSet::from([outcome]);
        pruned.d_separated(&t, &y, zs)
    }

    pub fn backdoor_admissible_by_name<S: AsRef<str>>(
        &self,
        treatment: &str,
        outcome: &str,
        zs: &[S],
    ) -> Result<bool> {
        self.backdoor_admissible(self.id(treatment)?, self.id(outcome)?, &self.ids(zs)?)
    }

    fn without_outgoing(&self, v: NodeId) -> Dag {
        let mut g = self.clone();
        for &c in &self.children[v] {
            g.parents[c].retain(|&p| p != v);
        }
        g.children[v].clear();
        g
    }

    pub fn render(&self, path: &Path) -> String {
        let mut s = self.names[path.nodes[0]].clone();
        for (i, &fwd) in path.forward.iter().enumerate() {
            s.push_str(if fwd { " -> " } else { " <- " });
            s.push_str(&self.names[path.nodes[i + 1]]);
        }
        s
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '\'' || c == '.')
}

impl fmt::Display for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (a, b) in self.edges() {
            writeln!(f, "{} -> {}", self.names[a], self.names[b])?;
        }
        Ok(())
    }
}

/// Undirected simple path with edge orientations. `forward[i]` is true when
/// the edge between `nodes[i]` and `nodes[i + 1]` points to `nodes[i + 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub forward: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackdoorVerdict {
    pub admissible: bool,
    pub descendants_in_set: Vec<NodeId>,
    /// Backdoor paths left open by the adjustment set.
    pub open: Vec<Path>,
    /// Backdoor paths closed, each with the node that closes it.
    pub blocked: Vec<(Path, NodeId)>,
}

/// The recommender graph: `x1 -> a`, `x1 -> c`, `x2 -> c`, `a -> c`,
/// `x1 -> x2`, plus `x2 -> a` when the policy personalises on `x2`.
pub fn recommender_graph(x2_to_a: bool) -> Dag {
    let mut edges = vec![("x1", "a"), ("x1", "c"), ("x2", "c"), ("a", "c"), ("x1", "x2")];
    if x2_to_a {
        edges.push(("x2", "a"));
    }
    Dag::new(&["x1", "x2", "a", "c"], &edges).expect("acyclic by construction")
}

/// The modular click/sale graph: `x'` and `x''` both drive the action, the
/// click and the sale.
pub fn click_sale_graph() -> Dag {
    Dag::new(
        &["x'", "x''", "a", "c", "s"],
        &[
            ("x'", "c"),
            ("x'", "s"),
            ("x'", "x''"),
            ("x''", "c"),
            ("x''", "s"),
            ("a", "c"),
            ("a", "s"),
            ("x'", "a"),
            ("x''", "a"),
        ],
    )
    .expect("acyclic by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recommender_graph_verdicts() {
        let base = recommender_graph(false);
        assert!(base.d_separated_by_name(&["x2"], &["a"], &["x1"]).unwrap());
        assert!(base.backdoor_admissible_by_name("a", "c", &["x1"]).unwrap());

        let dashed = recommender_graph(true);
        assert!(!dashed.d_separated_by_name(&["x2"], &["a"], &["x1"]).unwrap());
        assert!(!dashed.backdoor_admissible_by_name("a", "c", &["x1"]).unwrap());
        assert!(dashed.backdoor_admissible_by_name("a", "c", &["x1", "x2"]).unwrap());
    }

    #[test]
    fn textbook_cases() {
        let chain = Dag::parse("a -> b\nb -> c").unwrap();
        assert!(chain.d_separated_by_name(&["a"], &["c"], &["b"]).unwrap());
        assert!(!chain.d_separated_by_name::<&str>(&["a"], &["c"], &[]).unwrap());

        let collider = Dag::parse("a -> b\nc -> b\nb -> d").unwrap();
        assert!(collider.d_separated_by_name::<&str>(&["a"], &["c"], &[]).unwrap());
        assert!(!collider.d_separated_by_name(&["a"], &["c"], &["b"]).unwrap());
        // observing a descendant of the collider also opens it
        assert!(!collider.d_separated_by_name(&["a"], &["c"], &["d"]).unwrap());

        let fork = Dag::parse("b -> a\nb -> c").unwrap();
        assert!(fork.d_separated_by_name(&["a"], &["c"], &["b"]).unwrap());
    }

    #[test]
    fn descendant_in_adjustment_set_is_rejected() {
        let g = Dag::parse("z -> t\nz -> y\nt -> m\nm -> y").unwrap();
        assert!(g.backdoor_admissible_by_name("t", "y", &["z"]).unwrap());
        assert!(!g.backdoor_admissible_by_name("t", "y", &["z", "m"]).unwrap());
        let v = g
            .backdoor_check(g.id("t").unwrap(), g.id("y").unwrap(), &g.ids(&["z", "m"]).unwrap())
            .unwrap();
        assert!(!v.admissible);
        assert_eq!(v.descendants_in_set, vec![g.id("m").unwrap()]);
    }

    #[test]
    fn witness_names_the_open_path() {
        let g = recommender_graph(true);
        let (a, c) = (g.id("a").unwrap(), g.id("c").unwrap());
        let v = g.backdoor_check(a, c, &g.ids(&["x1"]).unwrap()).unwrap();
        assert!(!v.admissible);
        let open: Vec<String> = v.open.iter().map(|p| g.render(p)).collect();
        assert_eq!(open, vec!["a <- x2 -> c"]);

        let base = recommender_graph(false);
        let v = base
            .backdoor_check(base.id("a").unwrap(), base.id("c").unwrap(), &base.ids(&["x1"]).unwrap())
            .unwrap();
        assert!(v.admissible);
        let mut blocked: Vec<String> = v.blocked.iter().map(|(p, _)| base.render(p)).collect();
        blocked.sort();
        assert_eq!(blocked, vec!["a <- x1 -> c", "a <- x1 -> x2 -> c"]);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(Dag::parse("a -> b\nb -> a"), Err(Error::Cyclic(_))));
        assert!(matches!(Dag::parse("a -> a"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(Dag::parse("a => b"), Err(Error::Parse { .. })));
        let g = Dag::parse("# comment\n\nx1 -> a   # trailing\nlonely\n").unwrap();
        assert_eq!(g.len(), 3);
        assert!(g.id("lonely").is_ok());
        assert!(matches!(g.id("nope"), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn overlapping_sets_rejected() {
        let g = recommender_graph(false);
        assert!(g.d_separated_by_name(&["a"], &["a"], &["x1"]).is_err());
    }

    #[test]
    fn click_sale_graph_confounds_each_submodel() {
        let g = click_sale_graph();
        // a click model that only sees x'' leaves x' as an open backdoor
        assert!(!g.backdoor_admissible_by_name("a", "c", &["x''"]).unwrap());
        assert!(!g.backdoor_admissible_by_name("a", "s", &["x'"]).unwrap());
        assert!(g.backdoor_admissible_by_name("a", "c", &["x'", "x''"]).unwrap());
    }

    #[test]
    fn path_check_agrees_with_reachability() {
        let g = Dag::parse("u -> t\nu -> w\nw -> y\nt -> y\nv -> t\nv -> y\nt -> k").unwrap();
        let (t, y) = (g.id("t").unwrap(), g.id("y").unwrap());
        let others: Vec<NodeId> = (0..g.len()).filter(|&v| v != t && v != y).collect();
        for mask in 0..(1u32 << others.len()) {
            let zs: BTreeSet<NodeId> = others
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &v)| v)
                .collect();
            let fast = g.backdoor_admissible(t, y, &zs).unwrap();
            let slow = g.backdoor_check(t, y, &zs).unwrap().admissible;
            assert_eq!(fast, slow, "zs = {zs:?}");
        }
    }
}
