use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LifetimeSampler, ModelSpec, UlamHarrisId, MAX_GENERATION};
use crate::error::{Error, Result};
use crate::seed::stream;

/// Per-node record of a simulated or loaded genealogy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub birth_time: f64,
    pub trait_at_birth: f64,
    /// Absent for nodes that were not followed until division.
    pub lifetime: Option<f64>,
    /// Trait at division; the children share it as theta x and (1 - theta) x.
    pub division_trait: Option<f64>,
    pub theta: Option<f64>,
}

impl NodeRecord {
    fn newborn(birth_time: f64, trait_at_birth: f64) -> Self {
        Self { birth_time, trait_at_birth, lifetime: None, division_trait: None, theta: None }
    }
}

/// Nodes stored in breadth-first (heap) order up to `max_generation`;
/// missing nodes are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeDataset {
    max_generation: u32,
    nodes: Vec<Option<NodeRecord>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TreeOptions {
    /// Also draw lifetimes for the last generation (they have no children).
    pub leaf_lifetimes: bool,
}

fn generation_range(g: u32) -> std::ops::Range<usize> {
    ((1usize << g) - 1)..((1usize << (g + 1)) - 1)
}

/// Breadth-first generation of the full tree down to generation `depth`.
///
/// Each node draws from its own stream derived from (seed, node), so the
/// result does not depend on scheduling.
pub fn generate_tree(
    spec: &ModelSpec,
    x0: f64,
    depth: u32,
    dt: f64,
    seed: u64,
    options: TreeOptions,
) -> Result<TreeDataset> {
    if depth > 40 {
        return Err(Error::Parameter(format!("depth {depth} would not fit in memory")));
    }
    if !spec.diffusion.domain.contains(x0) {
        return Err(Error::Domain(format!("root trait {x0} outside {:?}", spec.diffusion.domain)));
    }
    let sampler = LifetimeSampler::new(spec, dt)?;
    let total = (1usize << (depth + 1)) - 1;
    let mut nodes: Vec<Option<NodeRecord>> = vec![None; total];
    nodes[0] = Some(NodeRecord::newborn(0.0, x0));
    for g in 0..=depth {
        if g == depth && !options.leaf_lifetimes {
            break;
        }
        let range = generation_range(g);
        let draws: Vec<(f64, f64, Option<f64>)> = nodes[range.clone()]
            .par_iter()
            .enumerate()
            .map(|(k, rec)| {
                let h = range.start + k;
                let rec = rec.expect("parents are generated before children");
                let mut rng = stream(seed, &[h as u64]);
                let d = sampler.sample(rec.trait_at_birth, &mut rng)?;
                let theta = (g < depth).then(|| spec.fragmentation.sample(&mut rng));
                Ok((d.lifetime, d.trait_at_division, theta))
            })
            .collect::<Result<_>>()?;
        for (k, (lifetime, division, theta)) in draws.into_iter().enumerate() {
            let h = range.start + k;
            let rec = nodes[h].as_mut().unwrap();
            rec.lifetime = Some(lifetime);
            rec.division_trait = Some(division);
            if let Some(theta) = theta {
                rec.theta = Some(theta);
                let birth = rec.birth_time + lifetime;
                nodes[2 * h + 1] = Some(NodeRecord::newborn(birth, theta * division));
                nodes[2 * h + 2] = Some(NodeRecord::newborn(birth, (1.0 - theta) * division));
            }
        }
    }
    Ok(TreeDataset { max_generation: depth, nodes })
}

const HEADER: [&str; 5] = ["id", "birth_time", "trait_at_birth", "lifetime", "theta"];

impl TreeDataset {
    /// Builds a dataset from explicit records; children must come with their parent.
    pub fn from_records(records: Vec<(UlamHarrisId, NodeRecord)>) -> Result<Self> {
        let max_generation = records.iter().map(|(u, _)| u.generation()).max().unwrap_or(0);
        if max_generation > 30 {
            return Err(Error::Data(format!("generation {max_generation} too deep for dense storage")));
        }
        let mut nodes = vec![None; (1usize << (max_generation + 1)) - 1];
        for (u, r) in records {
            let slot = &mut nodes[u.heap_index()];
            if slot.is_some() {
                return Err(Error::Data(format!("duplicate node {u:?}")));
            }
            *slot = Some(r);
        }
        let mut tree = Self { max_generation, nodes };
        for h in 1..tree.nodes.len() {
            if tree.nodes[h].is_some() && tree.nodes[(h - 1) / 2].is_none() {
                return Err(Error::Consistency(format!(
                    "node {} has no parent",
                    UlamHarrisId::from_heap_index(h)
                )));
            }
        }
        tree.fill_division_traits();
        Ok(tree)
    }

    fn fill_division_traits(&mut self) {
        for h in 0..self.nodes.len() {
            let (c0, c1) = (2 * h + 1, 2 * h + 2);
            if c1 >= self.nodes.len() {
                break;
            }
            if let (Some(a), Some(b)) = (self.nodes[c0], self.nodes[c1]) {
                if let Some(rec) = self.nodes[h].as_mut() {
                    if rec.division_trait.is_none() {
                        rec.division_trait = Some(a.trait_at_birth + b.trait_at_birth);
                    }
                }
            }
        }
    }

    pub fn max_generation(&self) -> u32 {
        self.max_generation
    }

    pub fn node(&self, u: UlamHarrisId) -> Option<&NodeRecord> {
        self.nodes.get(u.heap_index()).and_then(|r| r.as_ref())
    }

    pub fn root(&self) -> Option<&NodeRecord> {
        self.nodes.first().and_then(|r| r.as_ref())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().filter(|r| r.is_some()).count()
    }

    /// Every node of generations 0..=max_generation is present.
    pub fn is_complete(&self) -> bool {
        self.nodes.iter().all(|r| r.is_some())
    }

    /// Present nodes in breadth-first order.
    pub fn iter(&self) -> impl Iterator<Item = (UlamHarrisId, &NodeRecord)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(h, r)| r.as_ref().map(|r| (UlamHarrisId::from_heap_index(h), r)))
    }

    /// Nodes whose two children are both present.
    pub fn internal_nodes(&self) -> impl Iterator<Item = (UlamHarrisId, &NodeRecord, &NodeRecord, &NodeRecord)> {
        self.iter().filter_map(move |(u, r)| {
            if u.generation() >= self.max_generation {
                return None;
            }
            Some((u, r, self.node(u.child(0))?, self.node(u.child(1))?))
        })
    }

    /// Traits at birth of every present node, breadth-first.
    pub fn traits(&self) -> Vec<f64> {
        self.iter().map(|(_, r)| r.trait_at_birth).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(HEADER).map_err(io)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (u, r) in self.iter() {
            w.write_record([
                u.to_string(),
                r.birth_time.to_string(),
                r.trait_at_birth.to_string(),
                opt(r.lifetime),
                opt(r.theta),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the tree CSV; row numbers in errors count the header as row 1.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = rd
            .headers()
            .map_err(|e| Error::Parse { row: 1, message: e.to_string() })?
            .clone();
        let names: Vec<&str> = header.iter().collect();
        if names != HEADER {
            return Err(Error::Parse { row: 1, message: format!("expected header {HEADER:?}, found {names:?}") });
        }
        let mut records = Vec::new();
        for (i, row) in rd.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::Parse { row: line, message: e.to_string() })?;
            let field = |k: usize| row.get(k).unwrap_or("").trim();
            let num = |k: usize| -> Result<f64> {
                field(k).parse::<f64>().map_err(|e| Error::Parse {
                    row: line,
                    message: format!("column {}: {e}", HEADER[k]),
                })
            };
            let opt = |k: usize| -> Result<Option<f64>> {
                if field(k).is_empty() {
                    Ok(None)
                } else {
                    num(k).map(Some)
                }
            };
            let id: UlamHarrisId = field(0)
                .parse()
                .map_err(|e: Error| Error::Parse { row: line, message: e.to_string() })?;
            if id.generation() > MAX_GENERATION {
                return Err(Error::Parse { row: line, message: "label too long".into() });
            }
            let rec = NodeRecord {
                birth_time: num(1)?,
                trait_at_birth: num(2)?,
                lifetime: opt(3)?,
                division_trait: None,
                theta: opt(4)?,
            };
            records.push((id, rec));
        }
        if records.is_empty() {
            return Err(Error::Data("tree file has no nodes".into()));
        }
        Self::from_records(records)
    }
}

/// theta_u = X_u0 / (X_u0 + X_u1) for every internal node, breadth-first.
pub fn recover_fragmentation_fractions(tree: &TreeDataset) -> Result<Vec<(UlamHarrisId, f64)>> {
    let mut out = Vec::new();
    for (u, _, c0, c1) in tree.internal_nodes() {
        let s = c0.trait_at_birth + c1.trait_at_birth;
        if s == 0.0 {
            return Err(Error::DegenerateNode(u.to_string()));
        }
        out.push((u, c0.trait_at_birth / s));
    }
    if out.is_empty() {
        return Err(Error::Data("tree has no internal node".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching_sim::{DivisionRate, Fragmentation};
    use crate::sde_flow::DiffusionSpec;

    fn model() -> ModelSpec {
        ModelSpec::new(
            DiffusionSpec::reflected_brownian(0.0, 1.0, 1.0),
            DivisionRate::constant(2.0),
            Fragmentation::uniform(0.1),
        )
    }

    #[test]
    fn depth_zero_is_a_single_root() {
        let t = generate_tree(&model(), 0.5, 0, 1e-3, 1, TreeOptions::default()).unwrap();
        assert_eq!(t.node_count(), 1);
        assert!(t.root().unwrap().theta.is_none());
        assert_eq!(t.internal_nodes().count(), 0);
    }

    #[test]
    fn node_count_and_conservation() {
        let t = generate_tree(&model(), 0.5, 6, 1e-3, 2, TreeOptions::default()).unwrap();
        assert_eq!(t.node_count(), 127);
        assert!(t.is_complete());
        for (_, r, c0, c1) in t.internal_nodes() {
            let x = r.division_trait.unwrap();
            assert!((c0.trait_at_birth + c1.trait_at_birth - x).abs() <= 4.0 * f64::EPSILON * x.abs());
            assert_eq!(c0.birth_time, r.birth_time + r.lifetime.unwrap());
        }
    }

    #[test]
    fn csv_round_trip() {
        let t = generate_tree(&model(), 0.5, 4, 1e-3, 3, TreeOptions { leaf_lifetimes: true }).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = TreeDataset::read_csv(&buf[..]).unwrap();
        assert_eq!(back.node_count(), t.node_count());
        for ((u, a), (v, b)) in t.iter().zip(back.iter()) {
            assert_eq!(u, v);
            assert_eq!(a.trait_at_birth, b.trait_at_birth);
            assert_eq!(a.lifetime, b.lifetime);
            assert_eq!(a.theta, b.theta);
        }
    }

    #[test]
    fn csv_errors_carry_row_numbers() {
        let text = "id,birth_time,trait_at_birth,lifetime,theta\n,0,0.5,1,0.3\n0,1,abc,,\n";
        match TreeDataset::read_csv(text.as_bytes()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("unexpected {other:?}"),
        }
        let bad_header = "id,birth,trait\n";
        assert!(matches!(TreeDataset::read_csv(bad_header.as_bytes()), Err(Error::Parse { row: 1, .. })));
    }

    #[test]
    fn orphan_nodes_are_rejected() {
        let rec = NodeRecord::newborn(0.0, 1.0);
        let recs = vec![(UlamHarrisId::ROOT, rec), ("01".parse().unwrap(), rec)];
        assert!(matches!(TreeDataset::from_records(recs), Err(Error::Consistency(_))));
    }

    #[test]
    fn degenerate_node_is_reported() {
        let rec = |x| NodeRecord::newborn(0.0, x);
        let recs = vec![
            (UlamHarrisId::ROOT, rec(1.0)),
            ("0".parse().unwrap(), rec(0.0)),
            ("1".parse().unwrap(), rec(0.0)),
        ];
        let t = TreeDataset::from_records(recs).unwrap();
        assert!(matches!(recover_fragmentation_fractions(&t), Err(Error::DegenerateNode(_))));
    }

    #[test]
    fn direct_ratio() {
        let rec = |x| NodeRecord::newborn(0.0, x);
        let recs = vec![
            (UlamHarrisId::ROOT, rec(1.0)),
            ("0".parse().unwrap(), rec(0.3)),
            ("1".parse().unwrap(), rec(0.7)),
        ];
        let t = TreeDataset::from_records(recs).unwrap();
        let f = recover_fragmentation_fractions(&t).unwrap();
        assert!((f[0].1 - 0.3).abs() < 1e-15);
    }
}
