//! Named demonstration models shipped with the crate (see `fixtures/*.scm`).

use super::{parse_scm, DiscreteScm, ScmFile};

pub const FORK_LATENT: &str = include_str!("../../fixtures/fork_latent.scm");
pub const COLLIDER_EMBEDDING: &str = include_str!("../../fixtures/collider_embedding.scm");
pub const COVARIATE_FORK: &str = include_str!("../../fixtures/covariate_fork.scm");
pub const COVARIATE_COLLIDER: &str = include_str!("../../fixtures/covariate_collider.scm");
pub const ZC_FORK: &str = include_str!("../../fixtures/zc_fork.scm");
pub const ZC_COLLIDER: &str = include_str!("../../fixtures/zc_collider.scm");
pub const CONFOUNDED_PAIR: &str = include_str!("../../fixtures/confounded_pair.scm");

/// `(name, source)` for every shipped fixture.
pub const ALL: &[(&str, &str)] = &[
    ("fork_latent", FORK_LATENT),
    ("collider_embedding", COLLIDER_EMBEDDING),
    ("covariate_fork", COVARIATE_FORK),
    ("covariate_collider", COVARIATE_COLLIDER),
    ("zc_fork", ZC_FORK),
    ("zc_collider", ZC_COLLIDER),
    ("confounded_pair", CONFOUNDED_PAIR),
];

pub fn by_name(name: &str) -> Option<ScmFile> {
    ALL.iter()
        .find(|(n, _)| *n == name)
        .map(|(_, src)| parse_scm(src).expect("shipped fixture parses"))
}

fn load(src: &str) -> ScmFile {
    parse_scm(src).expect("shipped fixture parses")
}

/// `X -> C, X -> S, L -> S, L -> Y, C -> Y`.
pub fn fork_latent() -> DiscreteScm {
    load(FORK_LATENT).scm
}

/// Collider model with embedding `E = f(C, S, Y)`; the file carries `given E = 1`.
pub fn collider_embedding_file() -> ScmFile {
    load(COLLIDER_EMBEDDING)
}

pub fn collider_embedding() -> DiscreteScm {
    collider_embedding_file().scm
}

/// `T -> C, T -> Z, L -> Z, L -> Y, C -> Y`: adjusting `Z` is biased, adjusting `T` is not.
pub fn covariate_fork() -> DiscreteScm {
    load(COVARIATE_FORK).scm
}

pub fn covariate_collider_file() -> ScmFile {
    load(COVARIATE_COLLIDER)
}

pub fn confounded_pair() -> DiscreteScm {
    load(CONFOUNDED_PAIR).scm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_fixture_parses_and_normalises() {
        for (name, src) in ALL {
            let f = parse_scm(src).unwrap_or_else(|e| panic!("{name}: {e}"));
            let jt = f.scm.joint().unwrap();
            assert!((jt.total_mass() - 1.0).abs() < 1e-12, "{name}");
            assert!(by_name(name).is_some());
        }
        assert!(by_name("nope").is_none());
    }
}
