use serde::{Deserialize, Serialize};

/// An anchor with its positive and all of its negatives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negatives: Vec<usize>,
}

/// Picks one triplet group per anchor from its pruned neighbor list: the
/// farthest same-label neighbor is the positive, every differently labeled
/// neighbor is a negative. Anchors lacking either contribute nothing.
pub fn select_triplets(neighbors: &[Vec<(usize, f64)>], labels: &[usize]) -> Vec<Triplet> {
    let mut out = Vec::new();
    for (anchor, list) in neighbors.iter().enumerate() {
        let own = labels[anchor];
        let mut positive: Option<(usize, f64)> = None;
        let mut negatives = Vec::new();
        for &(j, d) in list {
            if j == anchor {
                continue;
            }
            if labels[j] == own {
                // farthest wins; on equal distance the smaller index is kept
                let better = match positive {
                    None => true,
                    Some((pj, pd)) => d > pd || (d == pd && j < pj),
                };
                if better {
                    positive = Some((j, d));
                }
            } else {
                negatives.push(j);
            }
        }
        if let (Some((p, _)), false) = (positive, negatives.is_empty()) {
            out.push(Triplet { anchor, positive: p, negatives });
        }
    }
    out
}
