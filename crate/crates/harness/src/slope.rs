//! Ordinary least squares on (log T, log gap) for rate-shape summaries.

use crate::error::{HarnessError, Result};

/// Fits log(gap) = slope·log(T) + intercept. Points with nonpositive gaps
/// are excluded with a warning; fewer than three usable points is an error.
pub fn fit_rate_slope(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(t, gap)| {
            if *gap > 0.0 {
                true
            } else {
                eprintln!("warning: excluding nonpositive gap {gap} at T={t} from the rate fit");
                false
            }
        })
        .map(|&(t, gap)| (t.ln(), gap.ln()))
        .collect();
    if usable.len() < 3 {
        return Err(HarnessError::Config(format!(
            "rate fit needs at least 3 usable points, got {}",
            usable.len()
        )));
    }
    let n = usable.len() as f64;
    let mean_x = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    if sxx == 0.0 {
        return Err(HarnessError::Config(
            "rate fit needs at least two distinct horizons".into(),
        ));
    }
    let sxy: f64 = usable.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    Ok((slope, mean_y - slope * mean_x))
}
