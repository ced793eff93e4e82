use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

/// One node's slice of a split: indices into the parent dataset (sentences for
/// text, examples for images) and an estimate of its size on the device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shard {
    pub node_id: usize,
    pub indices: Vec<usize>,
    #[serde(default)]
    pub bytes: u64,
}

/// Disjoint uniform-random index sets of `per_node` items for each of
/// `nodes` nodes.
pub fn shard_indices(len: usize, nodes: usize, per_node: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    if nodes == 0 || per_node == 0 {
        return Err(Error::Config("node count and shard size must be positive".into()));
    }
    let need = nodes.checked_mul(per_node).ok_or_else(|| Error::Config("shard request overflows".into()))?;
    if need > len {
        return Err(Error::Input(format!("{nodes} shards of {per_node} need {need} items, only {len} available")));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    Ok(order[..need].chunks(per_node).map(<[usize]>::to_vec).collect())
}

/// Like [`shard_indices`], attaching node ids and a per-shard byte estimate.
pub fn shard<F>(len: usize, nodes: usize, per_node: usize, rng: &mut Rng, size_of: F) -> Result<Vec<Shard>>
where
    F: Fn(&[usize]) -> u64,
{
    Ok(shard_indices(len, nodes, per_node, rng)?
        .into_iter()
        .enumerate()
        .map(|(node_id, indices)| {
            let bytes = size_of(&indices);
            Shard { node_id, indices, bytes }
        })
        .collect())
}

pub fn write_manifest(shards: &[Shard], path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(shards)?)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<Shard>> {
    let shards: Vec<Shard> = serde_json::from_slice(&std::fs::read(path)?)?;
    let mut seen = std::collections::HashSet::new();
    for s in &shards {
        if let Some(dup) = s.indices.iter().find(|&&i| !seen.insert(i)) {
            return Err(Error::Input(format!("index {dup} appears in more than one shard")));
        }
    }
    Ok(shards)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use std::collections::HashSet;

    #[test]
    fn exhaustive_partition() {
        let shards = shard_indices(55_000, 110, 500, &mut seeded(1)).unwrap();
        assert_eq!(shards.len(), 110);
        let all: HashSet<usize> = shards.iter().flatten().copied().collect();
        assert_eq!(all.len(), 55_000);
        assert!(shards.iter().all(|s| s.len() == 500));
    }

    #[test]
    fn single_node_is_a_sample() {
        let s = shard_indices(1000, 1, 37, &mut seeded(2)).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].iter().collect::<HashSet<_>>().len(), 37);
        assert_eq!(s, shard_indices(1000, 1, 37, &mut seeded(2)).unwrap());
    }

    #[test]
    fn insufficient_data() {
        assert!(matches!(shard_indices(10, 3, 4, &mut seeded(0)), Err(Error::Input(_))));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shards.json");
        let shards = shard(100, 4, 10, &mut seeded(3), |ix| ix.len() as u64 * 7).unwrap();
        write_manifest(&shards, &path).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), shards);
        let mut bad = shards.clone();
        bad[1].indices[0] = bad[0].indices[0];
        write_manifest(&bad, &path).unwrap();
        assert!(read_manifest(&path).is_err());
    }

    proptest::proptest! {
        #[test]
        fn shards_never_overlap(len in 1usize..400, nodes in 1usize..12, per in 1usize..40, seed: u64) {
            match shard_indices(len, nodes, per, &mut seeded(seed)) {
                Ok(s) => {
                    let flat: Vec<usize> = s.iter().flatten().copied().collect();
                    let set: HashSet<usize> = flat.iter().copied().collect();
                    proptest::prop_assert_eq!(set.len(), nodes * per);
                    proptest::prop_assert_eq!(flat.len(), nodes * per);
                }
                Err(_) => proptest::prop_assert!(nodes * per > len),
            }
        }
    }
}
