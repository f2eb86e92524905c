//! Text format for discrete SCMs.
//!
//! ```text
//! # graph block, same syntax as the edge-list format
//! X -> C
//! node U
//! # optional value labels; undeclared variables are binary `0 1`
//! domain S : red green
//! # one row per parent configuration (first listed parent most significant),
//! # rows separated by `;`
//! cpt X : 0.5 0.5
//! cpt C | X : 0.8 0.2 ; 0.3 0.7
//! # conditioning context carried alongside the model
//! given E = 1
//! ```

use super::{Assignment, DiscreteScm, Result, ScmError};
use crate::graph::{dag_from_lines, parse_graph_line, strip_comment};

/// A parsed model file: the SCM plus any `given` conditioning context.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmFile {
    pub scm: DiscreteScm,
    pub given: Assignment,
}

struct CptLine {
    line: usize,
    var: String,
    parents: Vec<String>,
    rows: Vec<Vec<f64>>,
}

pub fn parse_scm(text: &str) -> Result<ScmFile> {
    let mut graph_lines = Vec::new();
    let mut domains: Vec<(usize, String, Vec<String>)> = Vec::new();
    let mut cpts: Vec<CptLine> = Vec::new();
    let mut given_raw: Vec<(usize, String, String)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let err = |message: String| ScmError::Parse { line: lineno, message };
        if let Some(rest) = line.strip_prefix("domain ") {
            let (name, labels) = rest
                .split_once(':')
                .ok_or_else(|| err("expected `domain NAME : v1 v2 ...`".into()))?;
            let labels: Vec<String> = labels.split_whitespace().map(str::to_string).collect();
            if labels.is_empty() {
                return Err(err("empty domain".into()));
            }
            domains.push((lineno, name.trim().to_string(), labels));
        } else if let Some(rest) = line.strip_prefix("cpt ") {
            let (head, body) = rest
                .split_once(':')
                .ok_or_else(|| err("expected `cpt NAME | PARENTS : rows`".into()))?;
            let (var, parents) = match head.split_once('|') {
                Some((v, p)) => (v.trim(), p.split_whitespace().map(str::to_string).collect()),
                None => (head.trim(), Vec::new()),
            };
            let mut rows = Vec::new();
            for row in body.split(';') {
                let vals: std::result::Result<Vec<f64>, _> =
                    row.split_whitespace().map(str::parse::<f64>).collect();
                let vals = vals.map_err(|e| err(format!("bad probability in `{}`: {e}", row.trim())))?;
                if vals.is_empty() {
                    return Err(err("empty CPT row".into()));
                }
                rows.push(vals);
            }
            cpts.push(CptLine { line: lineno, var: var.to_string(), parents, rows });
        } else if let Some(rest) = line.strip_prefix("given ") {
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| err("expected `given NAME = VALUE`".into()))?;
            given_raw.push((lineno, k.trim().to_string(), v.trim().to_string()));
        } else {
            match parse_graph_line(line, lineno) {
                Some(parsed) => graph_lines.push((lineno, parsed?)),
                None => return Err(err(format!("unrecognised line `{line}`"))),
            }
        }
    }

    let mut all_lines = graph_lines;
    for (lineno, name, _) in &domains {
        all_lines.push((*lineno, crate::graph::GraphLine::Node(name.clone())));
    }
    for c in &cpts {
        all_lines.push((c.line, crate::graph::GraphLine::Node(c.var.clone())));
    }
    let dag = dag_from_lines(&all_lines)?;

    let mut builder = DiscreteScm::builder(dag);
    for (_, name, labels) in &domains {
        builder = builder.domain(name, labels);
    }
    for c in &cpts {
        let parents: Vec<&str> = c.parents.iter().map(String::as_str).collect();
        builder = builder.cpt(&c.var, &parents, c.rows.clone());
    }
    let scm = builder.build().map_err(|e| {
        let var = match &e {
            ScmError::BadCpt { var, .. } | ScmError::ParentMismatch { var, .. } => Some(var.as_str()),
            _ => None,
        };
        match var.and_then(|v| cpts.iter().find(|c| c.var == v)) {
            Some(c) => ScmError::Parse { line: c.line, message: e.to_string() },
            None => e,
        }
    })?;

    let mut given = Vec::new();
    for (lineno, k, v) in given_raw {
        let idx = scm.value_index(&k, &v).map_err(|e| ScmError::Parse { line: lineno, message: e.to_string() })?;
        given.push((k, idx));
    }
    Ok(ScmFile { scm, given: Assignment::new(given) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphError;

    #[test]
    fn parses_labelled_model() {
        let text = "X -> C\ndomain C : lo hi\ncpt X : 0.5 0.5\ncpt C | X : 0.8 0.2 ; 0.3 0.7\ngiven C = hi\n";
        let f = parse_scm(text).unwrap();
        assert_eq!(f.scm.domain("C").unwrap(), ["lo", "hi"]);
        assert_eq!(f.given, Assignment::new([("C", 1)]));
        let jt = f.scm.joint().unwrap();
        assert!((jt.prob(&Assignment::new([("C", 1)])).unwrap() - 0.45).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_scm("X -> C\ncpt X : 0.5 0.5\ncpt C | X : 0.8 0.3 ; 0.3 0.7\n").unwrap_err();
        assert!(matches!(e, ScmError::Parse { line: 3, .. }), "{e}");
        let e = parse_scm("X -> C\ncpt X : 0.5 abc\n").unwrap_err();
        assert!(matches!(e, ScmError::Parse { line: 2, .. }), "{e}");
        let e = parse_scm("X => C\n").unwrap_err();
        assert!(matches!(e, ScmError::Parse { line: 1, .. }), "{e}");
        let e = parse_scm("X -> C -> D\n").unwrap_err();
        assert!(matches!(e, ScmError::Graph(GraphError::Parse { line: 1, .. })), "{e}");
        let e = parse_scm("X -> C\ncpt X : 0.5 0.5\ncpt C | X : 1 0 ; 0 1\ngiven C = 7\n").unwrap_err();
        assert!(matches!(e, ScmError::Parse { line: 4, .. }), "{e}");
    }
}
