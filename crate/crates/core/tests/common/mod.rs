//! Independent oracles shared by the property and acceptance suites.
#![allow(dead_code)]

use cpsw_core::graph::CausalDag;
use cpsw_core::scm::DiscreteScm;
use rand::Rng;

/// A discrete model held as plain arrays; probabilities come from brute-force
/// enumeration of the factorization, never from the library's tables.
#[derive(Debug, Clone)]
pub struct Model {
    pub names: Vec<String>,
    /// Parent indices in ascending order (names sort the same way).
    pub parents: Vec<Vec<usize>>,
    pub cards: Vec<usize>,
    /// `cpts[v][row][value]`, rows mixed-radix over parents, first most significant.
    pub cpts: Vec<Vec<Vec<f64>>>,
}

impl Model {
    /// Random DAG over `n` binary variables `V0..`, edges only from lower to
    /// higher index, with CPT entries bounded away from zero.
    pub fn random<R: Rng>(rng: &mut R, n: usize, edge_p: f64) -> Self {
        let names: Vec<String> = (0..n).map(|i| format!("V{i}")).collect();
        let parents: Vec<Vec<usize>> = (0..n).map(|j| (0..j).filter(|_| rng.gen::<f64>() < edge_p).collect()).collect();
        let cards = vec![2; n];
        let cpts = parents
            .iter()
            .map(|pa| {
                (0..1usize << pa.len())
                    .map(|_| {
                        let p = rng.gen_range(0.05..0.95);
                        vec![p, 1.0 - p]
                    })
                    .collect()
            })
            .collect();
        Model { names, parents, cards, cpts }
    }

    pub fn from_scm(scm: &DiscreteScm) -> Self {
        let g = scm.graph();
        let names: Vec<String> = g.nodes().to_vec();
        let parents = names
            .iter()
            .map(|n| g.parents(n).unwrap().iter().map(|p| g.index_of(p).unwrap()).collect())
            .collect();
        let cards = names.iter().map(|n| scm.domain(n).unwrap().len()).collect();
        let cpts = names.iter().map(|n| scm.cpt(n).unwrap().rows().to_vec()).collect();
        Model { names, parents, cards, cpts }
    }

    pub fn edges(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (c, pa) in self.parents.iter().enumerate() {
            for &p in pa {
                out.push((self.names[p].clone(), self.names[c].clone()));
            }
        }
        out
    }

    pub fn dag(&self) -> CausalDag {
        CausalDag::build(&self.names, self.edges()).unwrap()
    }

    pub fn scm(&self) -> DiscreteScm {
        let mut b = DiscreteScm::builder(self.dag());
        for (v, name) in self.names.iter().enumerate() {
            let pa: Vec<&str> = self.parents[v].iter().map(|&p| self.names[p].as_str()).collect();
            b = b.cpt(name, &pa, self.cpts[v].clone());
        }
        b.build().unwrap()
    }

    pub fn index(&self, name: &str) -> usize {
        self.names.iter().position(|n| n == name).unwrap()
    }

    fn configs(&self) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for &k in &self.cards {
            out = out.into_iter().flat_map(|c| (0..k).map(move |v| [c.clone(), vec![v]].concat())).collect();
        }
        out
    }

    /// Product of the factors, with `do` replacing the intervened variable's
    /// factor by an indicator.
    fn weight(&self, x: &[usize], intervention: Option<(usize, usize)>) -> f64 {
        let mut w = 1.0;
        for v in 0..self.names.len() {
            if let Some((t, val)) = intervention {
                if t == v {
                    if x[v] != val {
                        return 0.0;
                    }
                    continue;
                }
            }
            let row = self.parents[v].iter().fold(0, |r, &p| r * self.cards[p] + x[p]);
            w *= self.cpts[v][row][x[v]];
        }
        w
    }

    /// `P(event | given)` in the model, or in its mutilation under `do`.
    pub fn prob(&self, event: &[(usize, usize)], given: &[(usize, usize)], intervention: Option<(usize, usize)>) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for x in self.configs() {
            if !given.iter().all(|&(v, val)| x[v] == val) {
                continue;
            }
            let w = self.weight(&x, intervention);
            den += w;
            if event.iter().all(|&(v, val)| x[v] == val) {
                num += w;
            }
        }
        num / den
    }

    /// Descendants of `v`, including `v`.
    pub fn descendants(&self, v: usize) -> Vec<bool> {
        let n = self.names.len();
        let mut seen = vec![false; n];
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            if !seen[u] {
                seen[u] = true;
                stack.extend((0..n).filter(|&c| self.parents[c].contains(&u)));
            }
        }
        seen
    }

    /// d-separation through the moral graph of the ancestral set of
    /// `{x, y} ∪ z`, with `z` removed.
    pub fn dsep_moral(&self, x: usize, y: usize, z: &[usize], cut_outgoing: Option<usize>) -> bool {
        let n = self.names.len();
        let parents: Vec<Vec<usize>> = (0..n)
            .map(|c| self.parents[c].iter().copied().filter(|&p| Some(p) != cut_outgoing).collect())
            .collect();
        let mut anc = vec![false; n];
        let mut stack: Vec<usize> = [x, y].iter().chain(z).copied().collect();
        while let Some(u) = stack.pop() {
            if !anc[u] {
                anc[u] = true;
                stack.extend(&parents[u]);
            }
        }
        let mut adj = vec![vec![false; n]; n];
        for c in (0..n).filter(|&c| anc[c]) {
            for &p in &parents[c] {
                adj[p][c] = true;
                adj[c][p] = true;
            }
            for &a in &parents[c] {
                for &b in &parents[c] {
                    if a != b {
                        adj[a][b] = true;
                    }
                }
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![x];
        while let Some(u) = stack.pop() {
            if u == y {
                return false;
            }
            if seen[u] || z.contains(&u) {
                continue;
            }
            seen[u] = true;
            stack.extend((0..n).filter(|&w| anc[w] && adj[u][w]));
        }
        true
    }

    /// Backdoor criterion: no descendant of `x` in `z`, and `z` separates `x`
    /// from `y` once `x`'s outgoing edges are cut.
    pub fn is_backdoor(&self, x: usize, y: usize, z: &[usize]) -> bool {
        let desc = self.descendants(x);
        z.iter().all(|&v| !desc[v]) && self.dsep_moral(x, y, z, Some(x))
    }
}

/// Every subset of `items`.
pub fn subsets(items: &[usize]) -> Vec<Vec<usize>> {
    (0..1usize << items.len())
        .map(|mask| items.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &v)| v).collect())
        .collect()
}
