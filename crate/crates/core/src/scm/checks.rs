//! Identification and confounding checks evaluated on exact tables.

use std::collections::BTreeSet;

use super::{Assignment, DiscreteScm, Intervention, JointTable, Result, ScmError};
use crate::graph::CausalDag;

/// Threshold for every equality/independence test on enumerated tables.
pub const INDEPENDENCE_TOL: f64 = 1e-9;

fn describe(a: &Assignment) -> String {
    a.pairs()
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Backdoor adjustment `sum_z P(outcome | treatment, z) P(z)`.
pub fn adjustment_estimate<S: AsRef<str>>(
    jt: &JointTable,
    treatment: &Assignment,
    outcome: &Assignment,
    z: &[S],
) -> Result<f64> {
    for v in z {
        let v = v.as_ref();
        if treatment.get(v).is_some() || outcome.get(v).is_some() {
            return Err(ScmError::OverlappingSets(v.to_string()));
        }
    }
    if z.is_empty() {
        return jt.query(outcome, treatment);
    }
    let mut total = 0.0;
    for stratum in jt.configurations(z)? {
        let pz = jt.prob(&stratum)?;
        if pz <= 0.0 {
            continue;
        }
        let given = treatment
            .merged(&stratum)
            .expect("disjoint variable sets");
        if jt.prob(&given)? <= 0.0 {
            return Err(ScmError::PositivityViolation(describe(&stratum)));
        }
        total += jt.query(outcome, &given)? * pz;
    }
    Ok(total)
}

fn check_partition<S: AsRef<str>>(g: &CausalDag, x: &str, y: &str, t1: &[S], t2: &[S]) -> Result<()> {
    let desc = g.descendants(x)?;
    let mut seen = BTreeSet::new();
    for v in t1.iter().chain(t2) {
        let v = v.as_ref();
        if v == x || v == y || !seen.insert(v.to_string()) {
            return Err(ScmError::OverlappingSets(v.to_string()));
        }
        if desc.contains(v) {
            return Err(ScmError::DescendantInT(v.to_string()));
        }
    }
    Ok(())
}

/// Statistical non-confounding for a given partition `(t1, t2)` of variables
/// unaffected by `x`:
/// (1) `P(x) = P(x | t1)` and (2) `P(y | t1, x) = P(y | t1, t2, x)`.
pub fn check_nonconfounding_statistical<S: AsRef<str>>(
    jt: &JointTable,
    g: &CausalDag,
    x: &str,
    y: &str,
    t1: &[S],
    t2: &[S],
) -> Result<bool> {
    check_partition(g, x, y, t1, t2)?;

    let xs = jt.configurations(&[x])?;
    let ys = jt.configurations(&[y])?;
    for s1 in jt.configurations(t1)? {
        if jt.prob(&s1)? <= 0.0 {
            continue;
        }
        for xv in &xs {
            let marginal = jt.prob(xv)?;
            let conditional = jt.query(xv, &s1)?;
            if (marginal - conditional).abs() > INDEPENDENCE_TOL {
                return Ok(false);
            }
        }
    }

    for s1 in jt.configurations(t1)? {
        for xv in &xs {
            let base = s1.merged(xv).expect("disjoint");
            if jt.prob(&base)? <= 0.0 {
                continue;
            }
            for s2 in jt.configurations(t2)? {
                let full = base.merged(&s2).expect("disjoint");
                if jt.prob(&full)? <= 0.0 {
                    continue;
                }
                for yv in &ys {
                    let coarse = jt.query(yv, &base)?;
                    let fine = jt.query(yv, &full)?;
                    if (coarse - fine).abs() > INDEPENDENCE_TOL {
                        return Ok(false);
                    }
                }
            }
        }
    }
    Ok(true)
}

/// All `(t1, t2)` partitions of the non-descendants of `x` present in `jt`
/// (excluding `x` and `y`) under which the statistical check passes.
pub fn nonconfounding_partitions(
    jt: &JointTable,
    g: &CausalDag,
    x: &str,
    y: &str,
) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    let desc = g.descendants(x)?;
    let pool: Vec<&String> = jt
        .vars()
        .iter()
        .filter(|v| v.as_str() != x && v.as_str() != y && g.contains(v) && !desc.contains(*v))
        .collect();
    let mut out = Vec::new();
    for bits in 0u64..(1u64 << pool.len()) {
        let (mut t1, mut t2) = (Vec::new(), Vec::new());
        for (i, v) in pool.iter().enumerate() {
            if bits >> i & 1 == 1 {
                t1.push((*v).clone());
            } else {
                t2.push((*v).clone());
            }
        }
        if check_nonconfounding_statistical(jt, g, x, y, &t1, &t2)? {
            out.push((t1, t2));
        }
    }
    Ok(out)
}

/// Causal non-confounding: `P(y | do(x)) = P(y | x)` for every value pair with `P(x) > 0`.
pub fn check_nonconfounding_causal(scm: &DiscreteScm, x: &str, y: &str) -> Result<bool> {
    let jt = scm.joint()?;
    let nx = jt.cardinality(x)?;
    let ny = jt.cardinality(y)?;
    for xv in 0..nx {
        let given = Assignment::new([(x, xv)]);
        if jt.prob(&given)? <= 0.0 {
            continue;
        }
        let mutilated = scm.intervene(&Intervention::new(x, xv))?.joint()?;
        for yv in 0..ny {
            let outcome = Assignment::new([(y, yv)]);
            let observed = jt.query(&outcome, &given)?;
            let interventional = mutilated.prob(&outcome)?;
            if (observed - interventional).abs() > INDEPENDENCE_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Variables and conditioning sets satisfying both clauses of the
/// spurious-correlation definition for a pair `(s, y)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    /// Dependent on `s` but independent of `y`, given `s1`.
    pub z1: String,
    pub s1: Vec<String>,
    /// Dependent on `y` but independent of `s`, given `s2`.
    pub z2: String,
    pub s2: Vec<String>,
}

fn clause(jt: &JointTable, z: &str, dependent_on: &str, independent_of: &str, given: &[String]) -> Result<bool> {
    Ok(!jt.independent(&[z], &[dependent_on], given, INDEPENDENCE_TOL)?
        && jt.independent(&[z], &[independent_of], given, INDEPENDENCE_TOL)?)
}

/// Checks a proposed witness against the table.
pub fn is_spurious_witness(jt: &JointTable, s: &str, y: &str, w: &Witness) -> Result<bool> {
    let ok = |z: &str, set: &[String]| z != s && z != y && !set.iter().any(|v| v == z || v == s || v == y);
    if !ok(&w.z1, &w.s1) || !ok(&w.z2, &w.s2) {
        return Ok(false);
    }
    Ok(clause(jt, &w.z1, s, y, &w.s1)? && clause(jt, &w.z2, y, s, &w.s2)?)
}

fn subsets(pool: &[&String]) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = (0u64..(1u64 << pool.len()))
        .map(|bits| {
            pool.iter()
                .enumerate()
                .filter(|(i, _)| bits >> i & 1 == 1)
                .map(|(_, v)| (*v).clone())
                .collect()
        })
        .collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

/// Searches single variables `z` and conditioning sets of the graph's other
/// nodes for a spurious-correlation witness between `s` and `y`. Candidates are
/// tried in lexicographic order of `z`, then by conditioning-set size.
pub fn spurious_correlation_witness(
    jt: &JointTable,
    g: &CausalDag,
    s: &str,
    y: &str,
) -> Result<Option<Witness>> {
    if s == y {
        return Err(ScmError::OverlappingSets(s.to_string()));
    }
    jt.index_of(s)?;
    jt.index_of(y)?;
    let others: Vec<&String> = g
        .nodes()
        .iter()
        .filter(|v| v.as_str() != s && v.as_str() != y && jt.vars().contains(v))
        .collect();

    // the pair itself must be dependent in some context
    if !subsets(&others)
        .iter()
        .any(|c| !jt.independent(&[s], &[y], c, INDEPENDENCE_TOL).unwrap_or(true))
    {
        return Ok(None);
    }

    let search = |dep: &str, indep: &str| -> Result<Option<(String, Vec<String>)>> {
        for z in &others {
            let rest: Vec<&String> = others.iter().copied().filter(|v| v != z).collect();
            for set in subsets(&rest) {
                if clause(jt, z, dep, indep, &set)? {
                    return Ok(Some(((*z).clone(), set)));
                }
            }
        }
        Ok(None)
    };
    let Some((z1, s1)) = search(s, y)? else { return Ok(None) };
    let Some((z2, s2)) = search(y, s)? else { return Ok(None) };
    Ok(Some(Witness { z1, s1, z2, s2 }))
}

/// One candidate adjustment set scored against the interventional truth.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentGap {
    pub set: Vec<String>,
    pub backdoor: bool,
    /// `(x, y, adjusted, P(y | do(x)))` per value pair, as domain indices.
    pub cells: Vec<(usize, usize, f64, f64)>,
    pub max_gap: f64,
}

/// Scores every subset of the non-descendants of `x` (other than the
/// conditioned variables) as an adjustment set for `P(y | do(x))`. Sets that
/// violate positivity are skipped. With a non-empty `given`, both sides are
/// computed within that conditioning context.
pub fn adjustment_gaps(scm: &DiscreteScm, given: &Assignment, x: &str, y: &str) -> Result<Vec<AdjustmentGap>> {
    let g = scm.graph();
    let full = scm.joint()?;
    let jt = if given.is_empty() { full } else { full.condition(given)? };
    let desc = g.descendants(x)?;
    let pool: Vec<&String> = g
        .nodes()
        .iter()
        .filter(|v| v.as_str() != x && v.as_str() != y && !desc.contains(*v) && given.get(v).is_none())
        .collect();
    let (nx, ny) = (jt.cardinality(x)?, jt.cardinality(y)?);
    let mut truth = vec![vec![0.0; ny]; nx];
    for (xv, row) in truth.iter_mut().enumerate() {
        let m = scm.intervene(&Intervention::new(x, xv))?.joint()?;
        let m = if given.is_empty() { m } else { m.condition(given)? };
        for (yv, t) in row.iter_mut().enumerate() {
            *t = m.prob(&Assignment::new([(y, yv)]))?;
        }
    }
    let mut out = Vec::new();
    'sets: for set in subsets(&pool) {
        let mut cells = Vec::with_capacity(nx * ny);
        for (xv, row) in truth.iter().enumerate() {
            for (yv, &t) in row.iter().enumerate() {
                let est = adjustment_estimate(&jt, &Assignment::new([(x, xv)]), &Assignment::new([(y, yv)]), &set);
                match est {
                    Ok(a) => cells.push((xv, yv, a, t)),
                    Err(ScmError::PositivityViolation(_)) => continue 'sets,
                    Err(e) => return Err(e),
                }
            }
        }
        let max_gap = cells.iter().map(|c| (c.2 - c.3).abs()).fold(0.0, f64::max);
        let backdoor = g.satisfies_backdoor(x, y, &set)?;
        out.push(AdjustmentGap { set, backdoor, cells, max_gap });
    }
    Ok(out)
}
