//! Synthetic hierarchical temporal graphs for desk-scale experiments.
//!
//! The generator grows a directed tree over time: at every timestamp a
//! few fresh entities attach under random existing nodes, and all edges
//! created so far stay valid in later snapshots. The pair projection of
//! every snapshot is a tree, so the Krackhardt score is 1 throughout,
//! and facts repeat across time, which makes the process learnable from
//! history.

use crate::graphdata::Quadruple;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Tree-growth quadruples over `num_timestamps` snapshots. Entity 0 is
/// the root; entities 1.. attach in order, spread evenly across
/// timestamps; edges persist once created.
pub fn tree_growth(
    num_entities: usize,
    num_relations: u32,
    num_timestamps: usize,
    seed: u64,
) -> Vec<Quadruple> {
    assert!(num_entities >= 2 && num_relations >= 1 && num_timestamps >= 1);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let total_children = num_entities - 1;
    let per_step = total_children.div_ceil(num_timestamps);
    // (parent, relation, child), in creation order
    let mut edges: Vec<(u32, u32, u32)> = Vec::with_capacity(total_children);
    let mut quads = Vec::new();
    let mut next_child = 1u32;
    for t in 0..num_timestamps as u32 {
        for _ in 0..per_step {
            if (next_child as usize) >= num_entities {
                break;
            }
            let parent = rng.gen_range(0..next_child);
            let rel = rng.gen_range(0..num_relations);
            edges.push((parent, rel, next_child));
            next_child += 1;
        }
        for &(s, r, o) in &edges {
            quads.push(Quadruple { s, r, o, t });
        }
    }
    quads
}

/// The default desk-scale instance: 50 entities, 4 relations, 30
/// timestamps.
pub fn default_hierarchy(seed: u64) -> Vec<Quadruple> {
    tree_growth(50, 4, 30, seed)
}
