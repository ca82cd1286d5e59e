use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::perlm::PerLMInstance;
use crate::seed::{self, stream};

/// Index batches over `instances` for one epoch. The order is a shuffle
/// drawn from `(seed, BATCH_ORDER, epoch)`; the last batch may be short.
pub fn make_batches(
    instances: &[PerLMInstance],
    batch_size: usize,
    max_len: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Vec<usize>>> {
    if instances.is_empty() {
        return Err(Error::Config("no training instances".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    if let Some(i) = instances.iter().position(|x| x.len() != max_len) {
        return Err(Error::Data(format!(
            "instance {i} has length {}, expected {max_len}",
            instances[i].len()
        )));
    }
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.shuffle(&mut seed::rng(seed, &[stream::BATCH_ORDER, epoch]));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Number of batches per epoch.
pub fn batches_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}
