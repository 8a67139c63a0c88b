//! Stationary-mean estimation over the embedded chain, the scaling
//! functional `F`, transience diagnostics, and lingering statistics.

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::model::{CycleRecord, Epoch, ModelParams};

pub const DEFAULT_BATCHES: usize = 30;

/// Burn-in default: the first fifth of the epochs.
pub fn default_burn_in(n_epochs: usize) -> usize {
    n_epochs / 5
}

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("trajectory is not transient: hits zero in the trailing window")]
    NotTransient,
}

/// Time-average estimate with a batch-means confidence interval.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EstimatorResult {
    pub mean: f64,
    /// Half-width of the 95% batch-means interval.
    pub ci_half_width: f64,
    pub n_epochs: usize,
    pub burn_in: usize,
}

/// Time-average of a per-epoch series after burn-in, with a 95% CI from
/// non-overlapping batch means (Student-t on the batch count).
pub fn stationary_mean(
    values: &[f64],
    burn_in: usize,
    n_batches: usize,
) -> Result<EstimatorResult, EstimatorError> {
    if n_batches < 10 {
        return Err(EstimatorError::InvalidArgument(format!(
            "need at least 10 batches, got {n_batches}"
        )));
    }
    if values.len() <= burn_in {
        return Err(EstimatorError::InsufficientData(format!(
            "{} epochs with burn-in {burn_in}",
            values.len()
        )));
    }
    let post = &values[burn_in..];
    if post.len() < n_batches {
        return Err(EstimatorError::InsufficientData(format!(
            "{} post-burn-in epochs for {n_batches} batches",
            post.len()
        )));
    }
    let (mean, se) = batch_stats(post, n_batches);
    let t = StudentsT::new(0.0, 1.0, (n_batches - 1) as f64)
        .expect("valid dof")
        .inverse_cdf(0.975);
    Ok(EstimatorResult {
        mean,
        ci_half_width: t * se,
        n_epochs: values.len(),
        burn_in,
    })
}

/// Mean and its batch-means standard error over `n_batches` equal batches
/// (a tail remainder shorter than one batch is dropped).
fn batch_stats(values: &[f64], n_batches: usize) -> (f64, f64) {
    let batch_len = values.len() / n_batches;
    let used = &values[..batch_len * n_batches];
    let mean = used.iter().sum::<f64>() / used.len() as f64;
    let var = used
        .chunks_exact(batch_len)
        .map(|b| {
            let bm = b.iter().sum::<f64>() / batch_len as f64;
            (bm - mean).powi(2)
        })
        .sum::<f64>()
        / (n_batches - 1) as f64;
    (mean, (var / n_batches as f64).sqrt())
}

/// Scaling functional `F = log(mean) / log(1/(1-rho))`.
pub fn scaling_f(mean: f64, rho: f64) -> Result<f64, EstimatorError> {
    if !(mean > 0.0) {
        return Err(EstimatorError::InvalidArgument(format!(
            "mean must be positive, got {mean}"
        )));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(EstimatorError::InvalidArgument(format!(
            "rho must lie in (0, 1), got {rho}"
        )));
    }
    Ok(mean.ln() / (1.0 / (1.0 - rho)).ln())
}

/// Geometric-mean growth ratio `|Q(k+1)|/|Q(k)|` over the trailing half of
/// the trajectory. Errors out if the window touches zero, which signals a
/// stable rather than transient run.
pub fn growth_rate(trajectory: &[f64]) -> Result<f64, EstimatorError> {
    if trajectory.len() < 4 {
        return Err(EstimatorError::InsufficientData(format!(
            "{} epochs",
            trajectory.len()
        )));
    }
    let start = trajectory.len() / 2;
    let window = &trajectory[start..];
    if window.iter().any(|&v| v <= 0.0) {
        return Err(EstimatorError::NotTransient);
    }
    let m = (window.len() - 1) as f64;
    Ok(((window[window.len() - 1].ln() - window[0].ln()) / m).exp())
}

/// Sample means of the switching-time decomposition.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct LingeringStats {
    pub mean_t_star: f64,
    pub mean_tau_max: f64,
    /// `E[T* - tau_max]`: slack between the last queue emptying and the switch.
    pub mean_gap_t_star_tau_max: f64,
    /// `E[T* - tau_(1)]`: how long the first-emptied queue waits for the switch.
    pub mean_gap_t_star_tau_min: f64,
    /// Idle slots of the first-emptied queue over total slots.
    pub idle_fraction: f64,
}

pub fn lingering_stats(records: &[CycleRecord]) -> Result<LingeringStats, EstimatorError> {
    if records.is_empty() {
        return Err(EstimatorError::InsufficientData("empty cycle stream".into()));
    }
    let n = records.len() as f64;
    let mean_t_star = records.iter().map(|r| r.t_star as f64).sum::<f64>() / n;

    let mut n_max = 0usize;
    let mut sum_tau_max = 0.0;
    let mut sum_gap_max = 0.0;
    for r in records {
        if let Some(tm) = r.tau_max {
            n_max += 1;
            sum_tau_max += tm as f64;
            sum_gap_max += (r.t_star - tm) as f64;
        }
    }

    let mut n_min = 0usize;
    let mut sum_gap_min = 0.0;
    let mut idle_first = 0u64;
    let mut total_slots = 0u64;
    for r in records {
        total_slots += r.t_star;
        if let Some(tmin) = r.tau_min() {
            n_min += 1;
            sum_gap_min += (r.t_star - tmin) as f64;
        }
        if let Some(q) = r.first_emptied() {
            idle_first += r.idle_slots[q];
        }
    }

    let div = |s: f64, n: usize| if n > 0 { s / n as f64 } else { f64::NAN };
    Ok(LingeringStats {
        mean_t_star,
        mean_tau_max: div(sum_tau_max, n_max),
        mean_gap_t_star_tau_max: div(sum_gap_max, n_max),
        mean_gap_t_star_tau_min: div(sum_gap_min, n_min),
        idle_fraction: if total_slots > 0 {
            idle_first as f64 / total_slots as f64
        } else {
            0.0
        },
    })
}

/// Two sides of the stationarity identity `E(A_1(0)) = E(xi) E(T*)` for the
/// random-capture regime, with a batch-means z-score on the paired per-epoch
/// differences.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct StationarityCheck {
    /// Mean per-queue active backlog at the switch epochs.
    pub lhs: f64,
    /// `E(xi)` times the mean switching time.
    pub rhs: f64,
    pub z_score: f64,
}

pub fn check_stationarity_identity(
    epochs: &[Epoch],
    params: &ModelParams,
    burn_in: usize,
    n_batches: usize,
) -> Result<StationarityCheck, EstimatorError> {
    if !params.beta.is_infinite() {
        return Err(EstimatorError::InvalidArgument(
            "identity only holds in the random-capture regime (beta = inf)".into(),
        ));
    }
    if epochs.len() <= burn_in {
        return Err(EstimatorError::InsufficientData(format!(
            "{} epochs with burn-in {burn_in}",
            epochs.len()
        )));
    }
    let mean_xi = params.xi.mean();
    let r = params.r as f64;
    // Pair the state entering each cycle with that cycle's switching time.
    // At stationarity the two series share a mean; the pairing kills most of
    // the variance since T* is driven by the state it starts from.
    let mut lhs_vals = Vec::with_capacity(epochs.len() - burn_in);
    let mut rhs_vals = Vec::with_capacity(epochs.len() - burn_in);
    for w in epochs[burn_in.saturating_sub(1)..].windows(2) {
        let state = &w[0].state;
        let rec = &w[1].record;
        lhs_vals.push(state.active.iter().sum::<u64>() as f64 / r);
        rhs_vals.push(mean_xi * rec.t_star as f64);
    }
    if lhs_vals.len() < n_batches {
        return Err(EstimatorError::InsufficientData(format!(
            "{} paired epochs for {n_batches} batches",
            lhs_vals.len()
        )));
    }
    let diffs: Vec<f64> = lhs_vals
        .iter()
        .zip(&rhs_vals)
        .map(|(l, r)| l - r)
        .collect();
    let (dbar, se) = batch_stats(&diffs, n_batches);
    let z = if dbar == 0.0 && se == 0.0 {
        0.0
    } else {
        dbar / se.max(f64::MIN_POSITIVE)
    };
    let lhs = lhs_vals.iter().sum::<f64>() / lhs_vals.len() as f64;
    let rhs = rhs_vals.iter().sum::<f64>() / rhs_vals.len() as f64;
    Ok(StationarityCheck {
        lhs,
        rhs,
        z_score: z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_stream_mean_exact_ci_zero() {
        let values = vec![42.0; 600];
        let r = stationary_mean(&values, 100, 30).unwrap();
        assert_eq!(r.mean, 42.0);
        assert_eq!(r.ci_half_width, 0.0);
        assert_eq!(r.n_epochs, 600);
    }

    #[test]
    fn stationary_mean_guards() {
        assert!(stationary_mean(&[1.0; 20], 0, 5).is_err());
        assert!(stationary_mean(&[1.0; 20], 20, 10).is_err());
        assert!(stationary_mean(&[1.0; 25], 20, 10).is_err());
    }

    #[test]
    fn ci_coverage_on_iid_stream() {
        // ~95% of 200 seeded iid runs should cover the true mean.
        use crate::dist::DistributionSpec;
        use crate::rng::RngStream;
        let spec = DistributionSpec::Geometric { p: 0.4 };
        let d = spec.compile().unwrap();
        let truth = spec.mean();
        let mut covered = 0;
        for seed in 0..200u64 {
            let mut rng = RngStream::new(seed, 99);
            let xs: Vec<f64> = (0..3000).map(|_| d.sample(&mut rng) as f64).collect();
            let r = stationary_mean(&xs, 0, 30).unwrap();
            if (r.mean - truth).abs() <= r.ci_half_width {
                covered += 1;
            }
        }
        // Binomial(200, 0.95) has sd ~ 3; accept a generous band.
        assert!(
            (180..=200).contains(&covered),
            "coverage {covered}/200 outside expected band"
        );
    }

    #[test]
    fn scaling_f_values() {
        assert_relative_eq!(
            scaling_f(4700.0, 0.99).unwrap(),
            1.836,
            max_relative = 1e-3
        );
        for rho in [0.5, 0.9, 0.99] {
            assert_relative_eq!(
                scaling_f(1.0 / (1.0 - rho), rho).unwrap(),
                1.0,
                max_relative = 1e-12
            );
        }
        assert_relative_eq!(scaling_f(100.0, 0.9).unwrap(), 2.0, max_relative = 1e-12);
        assert!(scaling_f(0.0, 0.5).is_err());
        assert!(scaling_f(10.0, 1.0).is_err());
    }

    #[test]
    fn growth_rate_exact_geometric() {
        let g = 1.02f64;
        let traj: Vec<f64> = (0..200).map(|k| 5.0 * g.powi(k)).collect();
        assert_relative_eq!(growth_rate(&traj).unwrap(), g, max_relative = 1e-12);
    }

    #[test]
    fn growth_rate_rejects_zeros() {
        let mut traj: Vec<f64> = (0..100).map(|k| k as f64).collect();
        traj[80] = 0.0;
        assert!(matches!(
            growth_rate(&traj),
            Err(EstimatorError::NotTransient)
        ));
    }
}
