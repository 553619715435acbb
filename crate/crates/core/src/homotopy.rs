//! Homotopy groups of products from a small catalog.
//!
//! `pi_m(M x F) = pi_m(M) + pi_m(F)`. At `m = 1` a sum involving a
//! nonabelian factor stands for the direct product.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Highest level tabulated.
pub const M_MAX: u32 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomotopyError {
    #[error("manifold `{0}` is not in the catalog")]
    UnknownManifold(String),
    #[error("level {level} is outside 1..={max}")]
    LevelOutOfRange { level: u32, max: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupExpr {
    Trivial,
    FreeAbelian {
        rank: u32,
    },
    /// `Z/k`; `k = 0` means `Z`.
    Cyclic {
        order: u64,
    },
    DirectSum {
        terms: Vec<GroupExpr>,
    },
    NamedNonabelian {
        token: String,
    },
}

impl GroupExpr {
    pub fn z() -> Self {
        GroupExpr::FreeAbelian { rank: 1 }
    }

    pub fn free(rank: u32) -> Self {
        GroupExpr::FreeAbelian { rank }
    }

    pub fn cyclic(order: u64) -> Self {
        GroupExpr::Cyclic { order }
    }

    pub fn named(token: &str) -> Self {
        GroupExpr::NamedNonabelian {
            token: token.to_string(),
        }
    }

    pub fn sum(terms: Vec<GroupExpr>) -> Self {
        GroupExpr::DirectSum { terms }
    }

    pub fn is_trivial(&self) -> bool {
        normalize(self) == GroupExpr::Trivial
    }
}

/// Prime-power factors of `k >= 2`.
fn primary_parts(mut k: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= k {
        if k.is_multiple_of(p) {
            let mut q = 1;
            while k.is_multiple_of(p) {
                k /= p;
                q *= p;
            }
            out.push(q);
        }
        p += 1;
    }
    if k > 1 {
        out.push(k);
    }
    out
}

fn collect(g: &GroupExpr, rank: &mut u32, torsion: &mut Vec<u64>, named: &mut Vec<String>) {
    match g {
        GroupExpr::Trivial => {}
        GroupExpr::FreeAbelian { rank: r } => *rank += r,
        GroupExpr::Cyclic { order: 0 } => *rank += 1,
        GroupExpr::Cyclic { order: 1 } => {}
        GroupExpr::Cyclic { order } => torsion.extend(primary_parts(*order)),
        GroupExpr::DirectSum { terms } => {
            for t in terms {
                collect(t, rank, torsion, named);
            }
        }
        GroupExpr::NamedNonabelian { token } => named.push(token.clone()),
    }
}

/// Flattens sums, drops trivial factors, merges free ranks and splits
/// cyclic factors into prime powers, in a fixed order.
pub fn normalize(g: &GroupExpr) -> GroupExpr {
    let mut rank = 0;
    let mut torsion = Vec::new();
    let mut named = Vec::new();
    collect(g, &mut rank, &mut torsion, &mut named);
    torsion.sort_unstable();
    named.sort();
    let mut terms = Vec::new();
    if rank > 0 {
        terms.push(GroupExpr::FreeAbelian { rank });
    }
    terms.extend(torsion.into_iter().map(|order| GroupExpr::Cyclic { order }));
    terms.extend(
        named
            .into_iter()
            .map(|token| GroupExpr::NamedNonabelian { token }),
    );
    match terms.len() {
        0 => GroupExpr::Trivial,
        1 => terms.pop().expect("one term"),
        _ => GroupExpr::DirectSum { terms },
    }
}

impl fmt::Display for GroupExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupExpr::Trivial => write!(f, "0"),
            GroupExpr::FreeAbelian { rank: 0 } => write!(f, "0"),
            GroupExpr::FreeAbelian { rank: 1 } => write!(f, "Z"),
            GroupExpr::FreeAbelian { rank } => write!(f, "Z^{rank}"),
            GroupExpr::Cyclic { order: 0 } => write!(f, "Z"),
            GroupExpr::Cyclic { order } => write!(f, "Z/{order}"),
            GroupExpr::NamedNonabelian { token } => write!(f, "{token}"),
            GroupExpr::DirectSum { terms } => {
                for (i, t) in terms.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{t}")?;
                }
                Ok(())
            }
        }
    }
}

/// `pi_1..pi_4` of one catalog factor.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomotopyEntry {
    pub id: String,
    pub groups: Vec<GroupExpr>,
    pub source: &'static str,
}

const STANDARD: &str = "standard tables (Hatcher, Algebraic Topology, 4.1-4.2; Toda)";

fn entry(id: &str, groups: [GroupExpr; 4], source: &'static str) -> HomotopyEntry {
    HomotopyEntry {
        id: id.to_string(),
        groups: groups.to_vec(),
        source,
    }
}

/// Catalog factors, not including products or `R^n`.
pub fn catalog() -> Vec<HomotopyEntry> {
    use GroupExpr::Trivial as O;
    let z = GroupExpr::z;
    vec![
        entry("point", [O, O, O, O], "contractible"),
        entry("I", [O, O, O, O], "contractible"),
        entry("S1", [z(), O, O, O], "universal cover is R"),
        entry("S2", [O, z(), z(), GroupExpr::cyclic(2)], STANDARD),
        entry("S3", [O, O, z(), GroupExpr::cyclic(2)], STANDARD),
        entry(
            "T2",
            [GroupExpr::free(2), O, O, O],
            "universal cover is R^2",
        ),
        entry(
            "RP2",
            [GroupExpr::cyclic(2), z(), z(), GroupExpr::cyclic(2)],
            "double cover by S2",
        ),
        entry(
            "RP3",
            [GroupExpr::cyclic(2), O, z(), GroupExpr::cyclic(2)],
            "double cover by S3",
        ),
        entry(
            "S1vS1",
            [GroupExpr::named("F2"), O, O, O],
            "universal cover is a tree",
        ),
    ]
}

/// Every id accepted by [`lookup`] apart from `R<n>` and products.
pub fn catalog_ids() -> Vec<String> {
    let mut ids: Vec<String> = catalog().into_iter().map(|e| e.id).collect();
    ids.extend((1..=4).map(|n| format!("R{n}")));
    ids
}

fn lookup_factor(id: &str) -> Option<Vec<GroupExpr>> {
    let euclidean = id == "R"
        || id
            .strip_prefix('R')
            .and_then(|d| d.parse::<u32>().ok())
            .is_some()
        || id.starts_with("R^") && id[2..].parse::<u32>().is_ok();
    if euclidean {
        return Some(vec![GroupExpr::Trivial; M_MAX as usize]);
    }
    catalog().into_iter().find(|e| e.id == id).map(|e| e.groups)
}

/// `pi_m` of a catalog id; `A x B` ids are products.
pub fn lookup(id: &str, m: u32) -> Result<GroupExpr, HomotopyError> {
    if m == 0 || m > M_MAX {
        return Err(HomotopyError::LevelOutOfRange {
            level: m,
            max: M_MAX,
        });
    }
    let factors: Vec<&str> = id.split('x').map(str::trim).collect();
    let mut terms = Vec::new();
    for f in &factors {
        let table =
            lookup_factor(f).ok_or_else(|| HomotopyError::UnknownManifold(id.to_string()))?;
        terms.push(table[(m - 1) as usize].clone());
    }
    Ok(normalize(&GroupExpr::sum(terms)))
}

/// `pi_m(M x F)`.
pub fn split_product(m_id: &str, f_id: &str, m: u32) -> Result<GroupExpr, HomotopyError> {
    let a = lookup(m_id, m)?;
    let b = lookup(f_id, m)?;
    Ok(normalize(&GroupExpr::sum(vec![a, b])))
}
