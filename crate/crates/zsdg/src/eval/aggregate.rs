//! Multi-seed aggregation: mean and sample standard deviation.

use crate::error::{Error, Result};

/// Mean ± sample std (ddof = 1) over seeds; std is reported as 0 when only
/// one seed is present.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct AggregateCell {
    pub mean: f64,
    pub std: f64,
    pub n_seeds: usize,
}

pub fn aggregate(values: &[f64]) -> Result<AggregateCell> {
    if values.is_empty() {
        return Err(Error::stats("cannot aggregate an empty group"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n as f64 - 1.0)).sqrt()
    };
    Ok(AggregateCell {
        mean,
        std,
        n_seeds: n,
    })
}
