use serde::{Deserialize, Serialize};

use super::{TreeDataset, UlamHarrisId};
use crate::error::{Error, Result};

/// Ancestor-closed observed subtree whose generation sizes grow like 2^(rho m).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationScheme {
    pub depth: u32,
    pub rho: f64,
    /// Breadth-first sorted members, root first.
    members: Vec<UlamHarrisId>,
    /// Tightest constants with c1 2^(rho m) <= count_m <= c2 2^(rho m).
    pub c1: f64,
    pub c2: f64,
}

impl ObservationScheme {
    pub fn members(&self) -> &[UlamHarrisId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, u: UlamHarrisId) -> bool {
        self.members.binary_search(&u).is_ok()
    }

    pub fn generation_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.depth as usize + 1];
        for u in &self.members {
            counts[u.generation() as usize] += 1;
        }
        counts
    }
}

/// Deterministic rho-regular scheme: generation m keeps round(2^(rho m))
/// nodes, taking every first child of the kept parents and then second
/// children of the lexicographically smallest parents.
pub fn subsample_incomplete_tree(depth: u32, rho: f64) -> Result<ObservationScheme> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Parameter(format!("regularity exponent must lie in [0, 1], got {rho}")));
    }
    if depth > 30 {
        return Err(Error::Parameter(format!("depth {depth} too large")));
    }
    let mut members = vec![UlamHarrisId::ROOT];
    let mut current = vec![UlamHarrisId::ROOT];
    let (mut c1, mut c2) = (f64::INFINITY, 0.0f64);
    for m in 1..=depth {
        let scale = (rho * m as f64).exp2();
        let target = (scale.round() as usize).clamp(current.len(), 2 * current.len());
        let mut next: Vec<UlamHarrisId> = current.iter().map(|u| u.child(0)).collect();
        next.extend(current.iter().take(target - current.len()).map(|u| u.child(1)));
        next.sort();
        c1 = c1.min(next.len() as f64 / scale);
        c2 = c2.max(next.len() as f64 / scale);
        members.extend_from_slice(&next);
        current = next;
    }
    if depth == 0 {
        c1 = 1.0;
        c2 = 1.0;
    }
    Ok(ObservationScheme { depth, rho, members, c1, c2 })
}

/// (parent trait, child trait) for every non-root member, breadth-first.
pub fn extract_pairs(tree: &TreeDataset, scheme: &ObservationScheme) -> Result<Vec<(f64, f64)>> {
    let mut pairs = Vec::with_capacity(scheme.len().saturating_sub(1));
    for &u in scheme.members().iter().filter(|u| !u.is_root()) {
        let missing = |v: UlamHarrisId| Error::Consistency(format!("scheme node {v:?} missing from the tree"));
        let child = tree.node(u).ok_or_else(|| missing(u))?;
        let p = u.parent().unwrap();
        let parent = tree.node(p).ok_or_else(|| missing(p))?;
        pairs.push((parent.trait_at_birth, child.trait_at_birth));
    }
    Ok(pairs)
}
