//! Causal DAGs over named variables: construction, simple-path enumeration,
//! d-separation and the backdoor criterion.
//!
//! Everything here is exact and exhaustive. Path search enumerates every
//! simple undirected path, which is exponential in the worst case but fine
//! for the small graphs (a dozen nodes or so) this crate works with.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("cycle detected through node `{0}`")]
    CycleDetected(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("query endpoints must differ, got `{0}` twice")]
    SameEndpoints(String),
    #[error("conditioning set contains query endpoint `{0}`")]
    OverlappingQuery(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// A validated directed acyclic graph.
///
/// Nodes are stored in lexicographic order, which is also the order used for
/// every listing this type produces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalDag {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl CausalDag {
    /// Builds a DAG from declared nodes and `(parent, child)` edges.
    pub fn build<N, E, A, B>(nodes: N, edges: E) -> Result<Self>
    where
        N: IntoIterator,
        N::Item: AsRef<str>,
        E: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut index = BTreeMap::new();
        for name in nodes {
            let name = name.as_ref().to_string();
            if index.insert(name.clone(), 0).is_some() {
                return Err(GraphError::DuplicateNode(name));
            }
        }
        let names: Vec<String> = index.keys().cloned().collect();
        for (i, name) in names.iter().enumerate() {
            index.insert(name.clone(), i);
        }

        let n = names.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for (a, b) in edges {
            let (a, b) = (a.as_ref(), b.as_ref());
            let pa = *index.get(a).ok_or_else(|| GraphError::UnknownNode(a.to_string()))?;
            let ch = *index.get(b).ok_or_else(|| GraphError::UnknownNode(b.to_string()))?;
            if pa == ch {
                return Err(GraphError::CycleDetected(a.to_string()));
            }
            if !seen.insert((pa, ch)) {
                return Err(GraphError::DuplicateEdge(a.to_string(), b.to_string()));
            }
            parents[ch].push(pa);
            children[pa].push(ch);
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }

        let dag = CausalDag { names, index, parents, children };
        dag.topological_indices()?;
        Ok(dag)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn nodes(&self) -> &[String] {
        &self.names
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| GraphError::UnknownNode(name.to_string()))
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    /// All edges as `(parent, child)`, sorted.
    pub fn edges(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (p, kids) in self.children.iter().enumerate() {
            for &c in kids {
                out.push((self.names[p].clone(), self.names[c].clone()));
            }
        }
        out
    }

    pub fn parents(&self, name: &str) -> Result<Vec<&str>> {
        let i = self.index_of(name)?;
        Ok(self.parents[i].iter().map(|&p| self.names[p].as_str()).collect())
    }

    pub fn children(&self, name: &str) -> Result<Vec<&str>> {
        let i = self.index_of(name)?;
        Ok(self.children[i].iter().map(|&c| self.names[c].as_str()).collect())
    }

    pub(crate) fn parent_indices(&self, idx: usize) -> &[usize] {
        &self.parents[idx]
    }

    /// Topological order; ties broken lexicographically.
    pub fn topological_order(&self) -> Vec<&str> {
        self.topological_indices()
            .expect("validated at construction")
            .into_iter()
            .map(|i| self.names[i].as_str())
            .collect()
    }

    pub(crate) fn topological_indices(&self) -> Result<Vec<usize>> {
        let n = self.names.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &c in &self.children[i] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|&i| indeg[i] > 0).unwrap_or(0);
            return Err(GraphError::CycleDetected(self.names[stuck].clone()));
        }
        Ok(order)
    }

    /// Strict descendants of `name` (the node itself is excluded).
    pub fn descendants(&self, name: &str) -> Result<BTreeSet<String>> {
        let i = self.index_of(name)?;
        Ok(self
            .descendant_mask(i)
            .iter()
            .enumerate()
            .filter(|(j, &d)| d && *j != i)
            .map(|(j, _)| self.names[j].clone())
            .collect())
    }

    /// Membership mask of `idx` together with all of its descendants.
    fn descendant_mask(&self, idx: usize) -> Vec<bool> {
        let mut mask = vec![false; self.names.len()];
        let mut stack = vec![idx];
        mask[idx] = true;
        while let Some(v) = stack.pop() {
            for &c in &self.children[v] {
                if !mask[c] {
                    mask[c] = true;
                    stack.push(c);
                }
            }
        }
        mask
    }

    /// The same graph with every arrow into `name` deleted.
    pub fn without_incoming(&self, name: &str) -> Result<CausalDag> {
        let t = self.index_of(name)?;
        let mut out = self.clone();
        for &p in &self.parents[t] {
            out.children[p].retain(|&c| c != t);
        }
        out.parents[t].clear();
        Ok(out)
    }

    /// Every simple undirected path from `x` to `y`, in lexicographic DFS order.
    pub fn enumerate_paths(&self, x: &str, y: &str) -> Result<Vec<Path>> {
        let xi = self.index_of(x)?;
        let yi = self.index_of(y)?;
        if xi == yi {
            return Err(GraphError::SameEndpoints(x.to_string()));
        }
        Ok(self
            .raw_paths(xi, yi)
            .into_iter()
            .map(|p| self.to_path(&p))
            .collect())
    }

    fn neighbours(&self, v: usize) -> Vec<(usize, Arrow)> {
        let mut out: Vec<(usize, Arrow)> = self.children[v]
            .iter()
            .map(|&c| (c, Arrow::Forward))
            .chain(self.parents[v].iter().map(|&p| (p, Arrow::Backward)))
            .collect();
        out.sort_unstable_by_key(|&(n, _)| n);
        out
    }

    fn raw_paths(&self, from: usize, to: usize) -> Vec<RawPath> {
        let adjacency: Vec<Vec<(usize, Arrow)>> =
            (0..self.names.len()).map(|v| self.neighbours(v)).collect();
        let mut out = Vec::new();
        let mut on_path = vec![false; self.names.len()];
        let mut current = RawPath { nodes: vec![from], arrows: Vec::new() };
        on_path[from] = true;
        dfs(&adjacency, to, &mut on_path, &mut current, &mut out);
        out
    }

    fn to_path(&self, raw: &RawPath) -> Path {
        Path {
            nodes: raw.nodes.iter().map(|&i| self.names[i].clone()).collect(),
            arrows: raw.arrows.clone(),
        }
    }

    fn resolve_set<S: AsRef<str>>(&self, z: &[S]) -> Result<Vec<bool>> {
        let mut mask = vec![false; self.names.len()];
        for name in z {
            mask[self.index_of(name.as_ref())?] = true;
        }
        Ok(mask)
    }

    /// Mask of nodes that are in `z` or have a descendant in `z`.
    fn ancestors_of_set(&self, z: &[bool]) -> Vec<bool> {
        let mut mask = z.to_vec();
        let mut stack: Vec<usize> = (0..z.len()).filter(|&i| z[i]).collect();
        while let Some(v) = stack.pop() {
            for &p in &self.parents[v] {
                if !mask[p] {
                    mask[p] = true;
                    stack.push(p);
                }
            }
        }
        mask
    }

    fn raw_blocked(&self, path: &RawPath, z: &[bool], opens_collider: &[bool]) -> bool {
        (1..path.nodes.len() - 1).any(|k| {
            let node = path.nodes[k];
            match role_at(&path.arrows, k) {
                Role::Chain | Role::Fork => z[node],
                Role::Collider => !opens_collider[node],
            }
        })
    }

    /// Whether `path` is blocked by the conditioning set `z`.
    pub fn is_blocked<S: AsRef<str>>(&self, path: &Path, z: &[S]) -> Result<bool> {
        let raw = RawPath {
            nodes: path
                .nodes
                .iter()
                .map(|n| self.index_of(n))
                .collect::<Result<_>>()?,
            arrows: path.arrows.clone(),
        };
        let zmask = self.resolve_set(z)?;
        let opens = self.ancestors_of_set(&zmask);
        Ok(self.raw_blocked(&raw, &zmask, &opens))
    }

    /// d-separation by exhaustive path blocking.
    pub fn is_d_separated(&self, q: &SeparationQuery) -> Result<bool> {
        let xi = self.index_of(&q.x)?;
        let yi = self.index_of(&q.y)?;
        if xi == yi {
            return Err(GraphError::SameEndpoints(q.x.clone()));
        }
        let z: Vec<&str> = q.z.iter().map(String::as_str).collect();
        let zmask = self.resolve_set(&z)?;
        if zmask[xi] {
            return Err(GraphError::OverlappingQuery(q.x.clone()));
        }
        if zmask[yi] {
            return Err(GraphError::OverlappingQuery(q.y.clone()));
        }
        let opens = self.ancestors_of_set(&zmask);
        Ok(self
            .raw_paths(xi, yi)
            .iter()
            .all(|p| self.raw_blocked(p, &zmask, &opens)))
    }

    /// Shorthand for [`CausalDag::is_d_separated`].
    pub fn d_separated<S: AsRef<str>>(&self, x: &str, y: &str, z: &[S]) -> Result<bool> {
        self.is_d_separated(&SeparationQuery::new(x, y, z))
    }

    /// Paths from `treatment` to `outcome` whose first arrow points into `treatment`.
    pub fn backdoor_paths(&self, treatment: &str, outcome: &str) -> Result<Vec<Path>> {
        Ok(self
            .enumerate_paths(treatment, outcome)?
            .into_iter()
            .filter(|p| p.arrows.first() == Some(&Arrow::Backward))
            .collect())
    }

    /// The backdoor criterion: no member of `z` descends from `treatment`, and
    /// `z` blocks every backdoor path.
    pub fn satisfies_backdoor<S: AsRef<str>>(
        &self,
        treatment: &str,
        outcome: &str,
        z: &[S],
    ) -> Result<bool> {
        let ti = self.index_of(treatment)?;
        let oi = self.index_of(outcome)?;
        if ti == oi {
            return Err(GraphError::SameEndpoints(treatment.to_string()));
        }
        let zmask = self.resolve_set(z)?;
        if zmask[ti] {
            return Err(GraphError::OverlappingQuery(treatment.to_string()));
        }
        if zmask[oi] {
            return Err(GraphError::OverlappingQuery(outcome.to_string()));
        }
        let desc = self.descendant_mask(ti);
        if (0..zmask.len()).any(|i| i != ti && zmask[i] && desc[i]) {
            return Ok(false);
        }
        let opens = self.ancestors_of_set(&zmask);
        Ok(self
            .raw_paths(ti, oi)
            .iter()
            .filter(|p| p.arrows.first() == Some(&Arrow::Backward))
            .all(|p| self.raw_blocked(p, &zmask, &opens)))
    }

    /// Every subset of the remaining nodes that satisfies the backdoor
    /// criterion for `(treatment, outcome)`. Exponential; meant for small graphs.
    pub fn backdoor_sets(&self, treatment: &str, outcome: &str) -> Result<Vec<Vec<String>>> {
        let candidates: Vec<&String> = self
            .names
            .iter()
            .filter(|n| n.as_str() != treatment && n.as_str() != outcome)
            .collect();
        let mut out = Vec::new();
        for bits in 0u64..(1u64 << candidates.len()) {
            let z: Vec<String> = candidates
                .iter()
                .enumerate()
                .filter(|(i, _)| bits >> i & 1 == 1)
                .map(|(_, n)| (*n).clone())
                .collect();
            if self.satisfies_backdoor(treatment, outcome, &z)? {
                out.push(z);
            }
        }
        out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        Ok(out)
    }
}

fn dfs(
    adjacency: &[Vec<(usize, Arrow)>],
    target: usize,
    on_path: &mut [bool],
    current: &mut RawPath,
    out: &mut Vec<RawPath>,
) {
    let v = *current.nodes.last().expect("path is never empty");
    if v == target {
        out.push(current.clone());
        return;
    }
    for &(next, arrow) in &adjacency[v] {
        if on_path[next] {
            continue;
        }
        on_path[next] = true;
        current.nodes.push(next);
        current.arrows.push(arrow);
        dfs(adjacency, target, on_path, current, out);
        current.nodes.pop();
        current.arrows.pop();
        on_path[next] = false;
    }
}

#[derive(Debug, Clone)]
struct RawPath {
    nodes: Vec<usize>,
    arrows: Vec<Arrow>,
}

/// Direction of one step of a path relative to the direction of traversal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arrow {
    /// `nodes[k] -> nodes[k + 1]`
    Forward,
    /// `nodes[k] <- nodes[k + 1]`
    Backward,
}

/// Structural role of an interior path node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Chain,
    Fork,
    Collider,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Chain => "chain",
            Role::Fork => "fork",
            Role::Collider => "collider",
        })
    }
}

fn role_at(arrows: &[Arrow], k: usize) -> Role {
    match (arrows[k - 1], arrows[k]) {
        (Arrow::Forward, Arrow::Backward) => Role::Collider,
        (Arrow::Backward, Arrow::Forward) => Role::Fork,
        _ => Role::Chain,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path {
    pub nodes: Vec<String>,
    pub arrows: Vec<Arrow>,
}

impl Path {
    /// Roles of the interior nodes, `nodes[1..len-1]`.
    pub fn roles(&self) -> Vec<(&str, Role)> {
        (1..self.nodes.len().saturating_sub(1))
            .map(|k| (self.nodes[k].as_str(), role_at(&self.arrows, k)))
            .collect()
    }

    pub fn colliders(&self) -> Vec<&str> {
        self.roles()
            .into_iter()
            .filter(|(_, r)| *r == Role::Collider)
            .map(|(n, _)| n)
            .collect()
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, node) in self.nodes.iter().enumerate() {
            if k > 0 {
                f.write_str(match self.arrows[k - 1] {
                    Arrow::Forward => " -> ",
                    Arrow::Backward => " <- ",
                })?;
            }
            f.write_str(node)?;
        }
        Ok(())
    }
}

/// `x ⟂ y | z` as a question about a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeparationQuery {
    pub x: String,
    pub y: String,
    pub z: BTreeSet<String>,
}

impl SeparationQuery {
    pub fn new<S: AsRef<str>>(x: &str, y: &str, z: &[S]) -> Self {
        SeparationQuery {
            x: x.to_string(),
            y: y.to_string(),
            z: z.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }

    pub fn swapped(&self) -> Self {
        SeparationQuery { x: self.y.clone(), y: self.x.clone(), z: self.z.clone() }
    }
}

/// One line of the edge-list text format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum GraphLine {
    Node(String),
    Edge(String, String),
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '\'' || c == '.')
}

/// Parses a `node NAME` or `parent -> child` line; `None` when the line is neither.
pub(crate) fn parse_graph_line(line: &str, lineno: usize) -> Option<Result<GraphLine>> {
    let err = |message: String| GraphError::Parse { line: lineno, message };
    if let Some(rest) = line.strip_prefix("node ") {
        let name = rest.trim();
        return Some(if valid_name(name) {
            Ok(GraphLine::Node(name.to_string()))
        } else {
            Err(err(format!("invalid node name `{name}`")))
        });
    }
    if line.contains("->") {
        let parts: Vec<&str> = line.split("->").map(str::trim).collect();
        if parts.len() != 2 || !valid_name(parts[0]) || !valid_name(parts[1]) {
            return Some(Err(err(format!("malformed edge `{line}`"))));
        }
        return Some(Ok(GraphLine::Edge(parts[0].to_string(), parts[1].to_string())));
    }
    None
}

pub(crate) fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

/// Assembles a DAG from parsed lines; edge endpoints are declared implicitly.
pub(crate) fn dag_from_lines(lines: &[(usize, GraphLine)]) -> Result<CausalDag> {
    let mut nodes = BTreeSet::new();
    let mut edges = Vec::new();
    for (lineno, l) in lines {
        match l {
            GraphLine::Node(n) => {
                nodes.insert(n.clone());
            }
            GraphLine::Edge(a, b) => {
                nodes.insert(a.clone());
                nodes.insert(b.clone());
                if edges.iter().any(|(x, y)| x == a && y == b) {
                    return Err(GraphError::Parse {
                        line: *lineno,
                        message: format!("duplicate edge {a} -> {b}"),
                    });
                }
                edges.push((a.clone(), b.clone()));
            }
        }
    }
    CausalDag::build(nodes, edges)
}

/// Parses the edge-list text format: one `parent -> child` per line, optional
/// `node NAME` declarations, `#` comments.
pub fn parse_dag(text: &str) -> Result<CausalDag> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        match parse_graph_line(line, i + 1) {
            Some(parsed) => lines.push((i + 1, parsed?)),
            None => {
                return Err(GraphError::Parse {
                    line: i + 1,
                    message: format!("expected `node NAME` or `parent -> child`, got `{line}`"),
                })
            }
        }
    }
    dag_from_lines(&lines)
}
