use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::corpus::{check_disjoint, DurationWindow, SegmentRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketSize {
    pub window: DurationWindow,
    pub batch_size: usize,
}

/// Ten-second buckets up to one minute: 16, then 8 up to 40 s, then 4.
pub fn default_bucket_sizes() -> Vec<BucketSize> {
    [(0.0, 10.0, 16), (10.0, 20.0, 8), (20.0, 30.0, 8), (30.0, 40.0, 8), (40.0, 50.0, 4), (50.0, 60.0, 4)]
        .into_iter()
        .map(|(lo, hi, batch_size)| BucketSize { window: DurationWindow { lo_sec: lo, hi_sec: hi }, batch_size })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BatchSchedule {
    /// Record indices of each batch, in schedule order.
    pub batches: Vec<Vec<usize>>,
    /// Bucket index of each batch.
    pub bucket_of: Vec<usize>,
    /// Records outside every window.
    pub rejects: Vec<usize>,
}

/// Groups records by duration window, shuffles each group with `seed`, cuts
/// it into batches of the window's size (the last one may be short), and
/// interleaves the groups so that each advances in proportion to its size.
pub fn bucket_batches(records: &[SegmentRecord], sizes: &[BucketSize], seed: u64) -> Result<BatchSchedule, ModelError> {
    let windows: Vec<DurationWindow> = sizes.iter().map(|b| b.window).collect();
    check_disjoint(&windows).map_err(|e| ModelError::Config(e.to_string()))?;
    if let Some(b) = sizes.iter().find(|b| b.batch_size == 0) {
        return Err(ModelError::Config(format!("batch size for window {} must be >= 1", b.window)));
    }
    let mut groups = vec![Vec::new(); sizes.len()];
    let mut rejects = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match windows.iter().position(|w| w.contains(r.duration_sec)) {
            Some(w) => groups[w].push(i),
            None => rejects.push(i),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_bucket: Vec<Vec<Vec<usize>>> = groups
        .into_iter()
        .zip(sizes)
        .map(|(mut g, b)| {
            g.shuffle(&mut rng);
            g.chunks(b.batch_size).map(<[usize]>::to_vec).collect()
        })
        .collect();

    let mut next = vec![0usize; per_bucket.len()];
    let total: usize = per_bucket.iter().map(Vec::len).sum();
    let mut schedule = BatchSchedule { rejects, ..Default::default() };
    for _ in 0..total {
        let pick = (0..per_bucket.len())
            .filter(|&w| next[w] < per_bucket[w].len())
            .min_by(|&a, &b| {
                let fa = (next[a] as f64 + 0.5) / per_bucket[a].len() as f64;
                let fb = (next[b] as f64 + 0.5) / per_bucket[b].len() as f64;
                fa.total_cmp(&fb).then(a.cmp(&b))
            })
            .expect("batches remain");
        schedule.batches.push(per_bucket[pick][next[pick]].clone());
        schedule.bucket_of.push(pick);
        next[pick] += 1;
    }
    Ok(schedule)
}
