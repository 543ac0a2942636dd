use crate::error::{Error, Result};
use crate::numeric::RngState;

/// One cross-validation fold, as record indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Seeded shuffle of `0..n` cut into `k` folds whose sizes differ by at most
/// one. Fold `i` is validation, the rest is training. Index lists are sorted.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Validation(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::Validation(format!("k = {k} exceeds {n} records")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    RngState::new(seed).shuffle(&mut order);

    let (base, extra) = (n / k, n % k);
    let mut parts = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        let mut part = order[start..start + size].to_vec();
        part.sort_unstable();
        parts.push(part);
        start += size;
    }

    Ok((0..k)
        .map(|i| {
            let mut train: Vec<usize> = parts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .flat_map(|(_, p)| p.iter().copied())
                .collect();
            train.sort_unstable();
            Fold {
                train,
                validation: parts[i].clone(),
            }
        })
        .collect())
}

/// Seeded `(train, holdout)` split with `round(n · fraction)` held out.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Validation(format!("holdout fraction {fraction} not in [0, 1)")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    RngState::new(seed).shuffle(&mut order);
    let held = ((n as f64) * fraction).round() as usize;
    let mut holdout = order[..held].to_vec();
    let mut train = order[held..].to_vec();
    holdout.sort_unstable();
    train.sort_unstable();
    Ok((train, holdout))
}

/// Mini-batches of `0..n` for one epoch, shuffled with `seed ^ epoch`. The
/// last batch may be short.
pub fn batch_iter(
    n: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<impl Iterator<Item = Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Validation("batch size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    RngState::new(seed ^ epoch).shuffle(&mut order);
    let batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    Ok(batches.into_iter())
}
