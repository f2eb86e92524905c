use std::collections::BTreeSet;

use super::{Result, ScmError};

/// A partial assignment of values (domain indices) to named variables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment(Vec<(String, usize)>);

impl Assignment {
    pub fn new<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, usize)>,
        S: AsRef<str>,
    {
        Assignment(pairs.into_iter().map(|(k, v)| (k.as_ref().to_string(), v)).collect())
    }

    pub fn empty() -> Self {
        Assignment(Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn pairs(&self) -> &[(String, usize)] {
        &self.0
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(k, _)| k.as_str())
    }

    pub fn get(&self, var: &str) -> Option<usize> {
        self.0.iter().find(|(k, _)| k == var).map(|&(_, v)| v)
    }

    /// Union of two assignments; `None` when they disagree on a shared variable.
    pub fn merged(&self, other: &Assignment) -> Option<Assignment> {
        let mut out = self.0.clone();
        for (k, v) in &other.0 {
            match self.get(k) {
                Some(existing) if existing != *v => return None,
                Some(_) => {}
                None => out.push((k.clone(), *v)),
            }
        }
        Some(Assignment(out))
    }
}

/// Dense probability table over the cartesian product of variable domains.
/// The last variable varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    vars: Vec<String>,
    labels: Vec<Vec<String>>,
    strides: Vec<usize>,
    probs: Vec<f64>,
}

impl JointTable {
    pub(crate) fn from_parts(vars: Vec<String>, labels: Vec<Vec<String>>, probs: Vec<f64>) -> Self {
        let mut strides = vec![1usize; vars.len()];
        for v in (0..vars.len().saturating_sub(1)).rev() {
            strides[v] = strides[v + 1] * labels[v + 1].len();
        }
        debug_assert_eq!(probs.len(), labels.iter().map(Vec::len).product::<usize>());
        JointTable { vars, labels, strides, probs }
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn labels(&self, var: &str) -> Result<&[String]> {
        Ok(&self.labels[self.index_of(var)?])
    }

    pub fn cardinality(&self, var: &str) -> Result<usize> {
        Ok(self.labels[self.index_of(var)?].len())
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn index_of(&self, var: &str) -> Result<usize> {
        self.vars
            .iter()
            .position(|v| v == var)
            .ok_or_else(|| ScmError::UnknownVariable(var.to_string()))
    }

    fn value_at(&self, cell: usize, var: usize) -> usize {
        (cell / self.strides[var]) % self.labels[var].len()
    }

    fn resolve(&self, a: &Assignment) -> Result<Vec<(usize, usize)>> {
        a.pairs()
            .iter()
            .map(|(k, v)| {
                let i = self.index_of(k)?;
                if *v >= self.labels[i].len() {
                    return Err(ScmError::ValueOutOfDomain { var: k.clone(), value: v.to_string() });
                }
                Ok((i, *v))
            })
            .collect()
    }

    /// Parses `A=1, B=red` against this table's value labels (or raw indices).
    pub fn parse_assignment(&self, text: &str) -> Result<Assignment> {
        let mut pairs = Vec::new();
        for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| ScmError::Parse {
                line: 0,
                message: format!("expected VAR=VALUE, got `{part}`"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            let i = self.index_of(k)?;
            let idx = self.labels[i]
                .iter()
                .position(|l| l == v)
                .ok_or_else(|| ScmError::ValueOutOfDomain { var: k.to_string(), value: v.to_string() })?;
            pairs.push((k.to_string(), idx));
        }
        Ok(Assignment(pairs))
    }

    /// Total probability of the cells consistent with `a`.
    pub fn prob(&self, a: &Assignment) -> Result<f64> {
        let fixed = self.resolve(a)?;
        Ok(self
            .probs
            .iter()
            .enumerate()
            .filter(|(cell, _)| fixed.iter().all(|&(v, x)| self.value_at(*cell, v) == x))
            .map(|(_, p)| p)
            .sum())
    }

    /// `P(outcome | given)`.
    pub fn query(&self, outcome: &Assignment, given: &Assignment) -> Result<f64> {
        let denom = self.prob(given)?;
        if denom <= 0.0 {
            return Err(ScmError::ZeroConditioningEvent);
        }
        let joint = match outcome.merged(given) {
            Some(both) => self.prob(&both)?,
            None => 0.0,
        };
        Ok(joint / denom)
    }

    /// Marginal over `keep`, in the order given.
    pub fn marginal<S: AsRef<str>>(&self, keep: &[S]) -> Result<JointTable> {
        let idx: Vec<usize> = keep
            .iter()
            .map(|k| self.index_of(k.as_ref()))
            .collect::<Result<_>>()?;
        let mut seen = BTreeSet::new();
        for &i in &idx {
            if !seen.insert(i) {
                return Err(ScmError::OverlappingSets(self.vars[i].clone()));
            }
        }
        let labels: Vec<Vec<String>> = idx.iter().map(|&i| self.labels[i].clone()).collect();
        let size: usize = labels.iter().map(Vec::len).product();
        let mut out = JointTable::from_parts(
            idx.iter().map(|&i| self.vars[i].clone()).collect(),
            labels,
            vec![0.0; size],
        );
        for (cell, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let target: usize = idx
                .iter()
                .enumerate()
                .map(|(k, &i)| self.value_at(cell, i) * out.strides[k])
                .sum();
            out.probs[target] += p;
        }
        Ok(out)
    }

    /// Conditional distribution given `a`, over the variables `a` leaves free.
    pub fn condition(&self, a: &Assignment) -> Result<JointTable> {
        let fixed = self.resolve(a)?;
        let mass = self.prob(a)?;
        if mass <= 0.0 {
            return Err(ScmError::ZeroConditioningEvent);
        }
        let free: Vec<&String> = self
            .vars
            .iter()
            .enumerate()
            .filter(|(i, _)| !fixed.iter().any(|&(f, _)| f == *i))
            .map(|(_, v)| v)
            .collect();
        let restricted = JointTable {
            probs: self
                .probs
                .iter()
                .enumerate()
                .map(|(cell, &p)| {
                    if fixed.iter().all(|&(v, x)| self.value_at(cell, v) == x) {
                        p / mass
                    } else {
                        0.0
                    }
                })
                .collect(),
            ..self.clone()
        };
        restricted.marginal(&free)
    }

    /// Dense array over `(a, b, c)` configurations for the independence helpers.
    fn triple<A: AsRef<str>, B: AsRef<str>, C: AsRef<str>>(
        &self,
        a: &[A],
        b: &[B],
        c: &[C],
    ) -> Result<(JointTable, usize, usize, usize)> {
        let a: Vec<&str> = a.iter().map(AsRef::as_ref).collect();
        let b: Vec<&str> = b.iter().map(AsRef::as_ref).collect();
        let c: Vec<&str> = c.iter().map(AsRef::as_ref).collect();
        let all: Vec<&str> = a.iter().chain(&b).chain(&c).copied().collect();
        let m = self.marginal(&all)?;
        let size = |set: &[&str]| -> Result<usize> { set.iter().map(|s| self.cardinality(s)).product() };
        Ok((m, size(&a)?, size(&b)?, size(&c)?))
    }

    /// `max |P(a,b|c) - P(a|c) P(b|c)|` over all cells with `P(c) > 0`.
    pub fn max_dependence<A: AsRef<str>, B: AsRef<str>, C: AsRef<str>>(&self, a: &[A], b: &[B], c: &[C]) -> Result<f64> {
        let (m, na, nb, nc) = self.triple(a, b, c)?;
        let p = |i: usize, j: usize, k: usize| m.probs[(i * nb + j) * nc + k];
        let mut worst = 0.0f64;
        for k in 0..nc {
            let pc: f64 = (0..na).flat_map(|i| (0..nb).map(move |j| (i, j))).map(|(i, j)| p(i, j, k)).sum();
            if pc <= 0.0 {
                continue;
            }
            for i in 0..na {
                let pa: f64 = (0..nb).map(|j| p(i, j, k)).sum::<f64>() / pc;
                for j in 0..nb {
                    let pb: f64 = (0..na).map(|ii| p(ii, j, k)).sum::<f64>() / pc;
                    worst = worst.max((p(i, j, k) / pc - pa * pb).abs());
                }
            }
        }
        Ok(worst)
    }

    /// Conditional independence by thresholding [`JointTable::max_dependence`].
    pub fn independent<A: AsRef<str>, B: AsRef<str>, C: AsRef<str>>(&self, a: &[A], b: &[B], c: &[C], tol: f64) -> Result<bool> {
        Ok(self.max_dependence(a, b, c)? <= tol)
    }

    /// Conditional mutual information `I(a; b | c)` in nats.
    pub fn mutual_information<A: AsRef<str>, B: AsRef<str>, C: AsRef<str>>(&self, a: &[A], b: &[B], c: &[C]) -> Result<f64> {
        let (m, na, nb, nc) = self.triple(a, b, c)?;
        let p = |i: usize, j: usize, k: usize| m.probs[(i * nb + j) * nc + k];
        let mut mi = 0.0;
        for k in 0..nc {
            let pc: f64 = (0..na).flat_map(|i| (0..nb).map(move |j| (i, j))).map(|(i, j)| p(i, j, k)).sum();
            if pc <= 0.0 {
                continue;
            }
            for i in 0..na {
                let pac: f64 = (0..nb).map(|j| p(i, j, k)).sum();
                for j in 0..nb {
                    let pabc = p(i, j, k);
                    if pabc <= 0.0 {
                        continue;
                    }
                    let pbc: f64 = (0..na).map(|ii| p(ii, j, k)).sum();
                    mi += pabc * (pabc * pc / (pac * pbc)).ln();
                }
            }
        }
        Ok(mi.max(0.0))
    }

    /// Iterates every full assignment of `vars` (in table order of `vars`).
    pub(crate) fn configurations<S: AsRef<str>>(&self, vars: &[S]) -> Result<Vec<Assignment>> {
        let cards: Vec<usize> = vars
            .iter()
            .map(|v| self.cardinality(v.as_ref()))
            .collect::<Result<_>>()?;
        let total: usize = cards.iter().product();
        let mut out = Vec::with_capacity(total);
        let mut cur = vec![0usize; vars.len()];
        for _ in 0..total {
            out.push(Assignment::new(vars.iter().map(|v| v.as_ref()).zip(cur.iter().copied())));
            for k in (0..cur.len()).rev() {
                cur[k] += 1;
                if cur[k] < cards[k] {
                    break;
                }
                cur[k] = 0;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::fixtures;

    #[test]
    fn unconditional_query_is_marginal() {
        let jt = fixtures::fork_latent().joint().unwrap();
        let y1 = Assignment::new([("Y", 1)]);
        let direct = jt.query(&y1, &Assignment::empty()).unwrap();
        let marg = jt.marginal(&["Y"]).unwrap();
        assert!((direct - marg.probs()[1]).abs() < 1e-15);
        assert!((jt.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_mass_conditioning_fails() {
        let labels = vec![vec!["0".to_string(), "1".to_string()]; 2];
        let jt = JointTable::from_parts(vec!["A".into(), "B".into()], labels, vec![0.5, 0.5, 0.0, 0.0]);
        assert_eq!(
            jt.query(&Assignment::new([("B", 0)]), &Assignment::new([("A", 1)])),
            Err(ScmError::ZeroConditioningEvent)
        );
    }

    #[test]
    fn conditioning_renormalises() {
        let jt = fixtures::fork_latent().joint().unwrap();
        let given = Assignment::new([("S", 1)]);
        let cond = jt.condition(&given).unwrap();
        assert!((cond.total_mass() - 1.0).abs() < 1e-12);
        assert_eq!(cond.vars(), ["C", "L", "X", "Y"]);
        let a = jt.query(&Assignment::new([("Y", 1), ("C", 0)]), &given).unwrap();
        let b = cond.prob(&Assignment::new([("Y", 1), ("C", 0)])).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn collider_dependence_given_common_effect() {
        let jt = fixtures::collider_embedding().joint().unwrap();
        assert!(!jt.independent(&["S"], &["Y"], &[] as &[&str], 1e-9).unwrap());
        assert!(jt.independent(&["S"], &["Y"], &["C"], 1e-9).unwrap());
        assert!(!jt.independent(&["S"], &["Y"], &["C", "E"], 1e-9).unwrap());
        let e = Assignment::new([("E", 1)]);
        let mut found = false;
        for s in 0..2 {
            for y in 0..2 {
                let with_s = jt
                    .query(&Assignment::new([("Y", y)]), &Assignment::new([("S", s), ("E", 1)]))
                    .unwrap();
                let without = jt.query(&Assignment::new([("Y", y)]), &e).unwrap();
                found |= (with_s - without).abs() > 1e-3;
            }
        }
        assert!(found);
    }

    #[test]
    fn mutual_information_matches_dependence() {
        let jt = fixtures::fork_latent().joint().unwrap();
        assert!(jt.mutual_information(&["C"], &["L"], &[] as &[&str]).unwrap() < 1e-12);
        assert!(jt.mutual_information(&["C"], &["Y"], &[] as &[&str]).unwrap() > 1e-3);
    }

    #[test]
    fn parses_labelled_assignments() {
        let jt = fixtures::collider_embedding().joint().unwrap();
        let a = jt.parse_assignment("Y=1, E=1").unwrap();
        assert_eq!(a, Assignment::new([("Y", 1), ("E", 1)]));
        assert!(jt.parse_assignment("Y=7").is_err());
        assert!(jt.parse_assignment("Y").is_err());
    }
}
