use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::space::{Configuration, SearchSpace};
use crate::util::rng;

/// Index rows of a Latin hypercube over lists of `sizes[d]` candidates.
///
/// Dimension `d` is cut into `n` equal strata of the index range. With
/// `n <= k` every sample takes a random index inside its own (disjoint,
/// non-empty) stratum `[i k / n, (i + 1) k / n)`, so no index repeats; with `n > k` the strata map onto indices in order and each
/// index is hit at most `ceil(n / k)` times. Stratum order is shuffled per
/// dimension.
pub fn lhs_indices(sizes: &[usize], n: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("LHS needs at least one sample".into()));
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidArgument("every LHS dimension needs a candidate".into()));
    }
    let mut rng = rng(seed);
    let mut rows = vec![Vec::with_capacity(sizes.len()); n];
    for &k in sizes {
        let mut column: Vec<usize> = (0..n)
            .map(|i| {
                if n <= k {
                    rng.random_range(i * k / n..(i + 1) * k / n)
                } else {
                    i * k / n
                }
            })
            .collect();
        column.shuffle(&mut rng);
        for (row, idx) in rows.iter_mut().zip(column) {
            row.push(idx);
        }
    }
    Ok(rows)
}

/// `n` Latin hypercube points of the tiny space.
pub fn lhs_sample(space: &SearchSpace, n: usize, seed: u64) -> Result<Vec<Configuration>> {
    let sizes: Vec<usize> = space.tiny_choices().iter().map(Vec::len).collect();
    lhs_indices(&sizes, n, seed)?
        .iter()
        .map(|row| space.tiny_point(row))
        .collect()
}
