//! Dyadic splitting of a path into 2^L left-translated segments.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::walk::WalkPath;

#[derive(Debug, Clone)]
pub struct DyadicSplit {
    /// Consecutive sub-paths, each left-translated so it starts at the
    /// identity. Step lists are unchanged by the translation.
    pub segments: Vec<WalkPath>,
    /// Position indices of the segment boundaries, length 2^L + 1;
    /// segment j covers original positions boundaries[j]..=boundaries[j+1].
    pub boundaries: Vec<usize>,
}

/// Split indices for 2^levels windows produced by recursive halving, so the
/// level-l boundaries are a subset of the level-(l+1) boundaries. Each halving
/// puts the longer piece first; leaf step counts are n/2^levels rounded either
/// way.
pub fn dyadic_boundaries(n: usize, levels: u32) -> Result<Vec<usize>> {
    if levels >= 63 || (1usize << levels) > n {
        return Err(Error::TooManyLevels { levels, len: n });
    }
    let mut bounds = vec![0usize, n];
    for _ in 0..levels {
        let mut next = Vec::with_capacity(bounds.len() * 2 - 1);
        for w in bounds.windows(2) {
            next.push(w[0]);
            next.push(w[0] + (w[1] - w[0] + 1) / 2);
        }
        next.push(n);
        bounds = next;
    }
    Ok(bounds)
}

/// Splits the path into 2^levels consecutive windows whose step counts
/// differ by at most one. Each segment is translated by the inverse of its
/// starting position.
pub fn dyadic_segments(path: &WalkPath, levels: u32) -> Result<DyadicSplit> {
    let n = path.len();
    let boundaries = dyadic_boundaries(n, levels)?;
    let group = &path.group;

    let mut segments = Vec::with_capacity(boundaries.len() - 1);
    for w in boundaries.windows(2) {
        let (start, end) = (w[0], w[1]);
        let shift = group.inverse(&path.positions[start]);
        let positions: Vec<_> = path.positions[start..=end]
            .iter()
            .map(|p| group.multiply(&shift, p))
            .collect();
        debug_assert!(group.is_identity(&positions[0]));
        segments.push(WalkPath {
            group: Arc::clone(group),
            steps: path.steps[start..end].to_vec(),
            positions,
            seed: path.seed,
            stream_id: path.stream_id,
        });
    }
    Ok(DyadicSplit { segments, boundaries })
}
