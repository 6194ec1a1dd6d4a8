//! Early-stage temporal filtering.

use super::tree::PropagationTree;

/// Keeps the root plus every node whose time offset is within `delta_min`
/// and whose ancestors are all retained; descendants of removed nodes are
/// removed so the result stays a tree.
pub fn early_stage_filter(tree: &PropagationTree, delta_min: f64) -> PropagationTree {
    let parents = tree.parent_indices();
    let n = tree.node_count();
    let mut keep = vec![false; n];
    keep[0] = true;
    // posts are topologically ordered, so parents are decided first
    for i in 1..n {
        let p = parents[i].expect("non-root node must have a parent");
        keep[i] = keep[p] && tree.posts[i].time_offset_min <= delta_min;
    }
    let kept: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
    let mut new_index = vec![usize::MAX; n];
    for (ni, &oi) in kept.iter().enumerate() {
        new_index[oi] = ni;
    }
    let posts = kept.iter().map(|&i| tree.posts[i].clone()).collect();
    let edges = tree
        .edges
        .iter()
        .filter(|&&(u, v)| keep[u] && keep[v])
        .map(|&(u, v)| (new_index[u], new_index[v]))
        .collect();
    let features = if tree.features.rows() == n {
        tree.features.gather_rows(&kept)
    } else {
        crate::tensor::Tensor2::zeros(0, 0)
    };
    PropagationTree {
        event_id: tree.event_id.clone(),
        label: tree.label,
        posts,
        edges,
        features,
    }
}

/// The `q`-quantile of non-root time offsets across the dataset, used to
/// pick early-stage thresholds.
pub fn time_quantile(trees: &[PropagationTree], q: f64) -> f64 {
    let mut offsets: Vec<f64> = trees
        .iter()
        .flat_map(|t| t.posts.iter().skip(1).map(|p| p.time_offset_min))
        .collect();
    if offsets.is_empty() {
        return 0.0;
    }
    offsets.sort_by(f64::total_cmp);
    let pos = ((offsets.len() - 1) as f64 * q.clamp(0.0, 1.0)).round() as usize;
    offsets[pos]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tree::Post;

    fn chain() -> PropagationTree {
        // r(0) -> a(30) -> b(10)
        PropagationTree::from_posts(
            "e",
            0,
            vec![
                Post {
                    id: "r".into(),
                    parent_id: None,
                    time_offset_min: 0.0,
                    raw_text: String::new(),
                    tokens: vec![],
                },
                Post {
                    id: "a".into(),
                    parent_id: Some("r".into()),
                    time_offset_min: 30.0,
                    raw_text: String::new(),
                    tokens: vec![],
                },
                Post {
                    id: "b".into(),
                    parent_id: Some("a".into()),
                    time_offset_min: 10.0,
                    raw_text: String::new(),
                    tokens: vec![],
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn delta_zero_keeps_only_root() {
        let t = early_stage_filter(&chain(), 0.0);
        assert_eq!(t.node_count(), 1);
        assert_eq!(t.posts[0].id, "r");
        t.validate().unwrap();
    }

    #[test]
    fn delta_beyond_max_keeps_everything() {
        let orig = chain();
        let t = early_stage_filter(&orig, 1000.0);
        assert_eq!(t, orig);
    }

    #[test]
    fn removed_ancestor_removes_descendants() {
        // a is cut at delta=20, so b goes too despite its offset of 10
        let t = early_stage_filter(&chain(), 20.0);
        assert_eq!(t.node_count(), 1);
    }

    #[test]
    fn filter_is_monotone_in_delta() {
        let tree = chain();
        let small = early_stage_filter(&tree, 10.0);
        let large = early_stage_filter(&tree, 40.0);
        let ids =
            |t: &PropagationTree| t.posts.iter().map(|p| p.id.clone()).collect::<Vec<_>>();
        for id in ids(&small) {
            assert!(ids(&large).contains(&id));
        }
    }
}
