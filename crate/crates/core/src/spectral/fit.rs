use crate::error::{Error, Result};

/// Least-squares fit of `ln value = ln C - rate * t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub constant: f64,
    pub rate: f64,
    pub rms_residual: f64,
}

impl DecayFit {
    /// Sentinel for a series that is identically zero.
    pub const VANISHING: DecayFit = DecayFit { constant: 0.0, rate: f64::INFINITY, rms_residual: 0.0 };

    pub fn is_vanishing(&self) -> bool {
        self.rate == f64::INFINITY
    }
}

/// Fits `value ~ C exp(-rate t)` to `(t, value)` pairs with positive values.
pub fn fit_decay(series: &[(f64, f64)]) -> Result<DecayFit> {
    if let Some((t, v)) = series.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidSeries(format!("value {v} at t = {t} is not positive")));
    }
    let logs: Vec<(f64, f64)> = series.iter().map(|&(t, v)| (t, v.ln())).collect();
    fit_log_decay(&logs)
}

/// Same as [`fit_decay`] on `(t, ln value)` pairs.
pub fn fit_log_decay(series: &[(f64, f64)]) -> Result<DecayFit> {
    if series.len() < 3 {
        return Err(Error::InvalidSeries(format!("need at least 3 points, got {}", series.len())));
    }
    if series.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidSeries("non-finite point".into()));
    }
    let m = series.len() as f64;
    let t_mean = series.iter().map(|p| p.0).sum::<f64>() / m;
    let y_mean = series.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = series.iter().map(|(t, _)| (t - t_mean).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidSeries("all points share the same t".into()));
    }
    let sxy: f64 = series.iter().map(|(t, y)| (t - t_mean) * (y - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let sse: f64 = series.iter().map(|(t, y)| (y - intercept - slope * t).powi(2)).sum();
    Ok(DecayFit { constant: intercept.exp(), rate: -slope, rms_residual: (sse / m).sqrt() })
}

/// Asymptotic decay of a log-series over the second half of its time range.
///
/// Entries equal to `-inf` (exact zeros) are dropped; a series with fewer
/// than three nonzero points is reported as [`DecayFit::VANISHING`].
pub fn tail_decay(log_series: &[(usize, f64)]) -> DecayFit {
    let finite: Vec<(f64, f64)> =
        log_series.iter().filter(|(_, y)| y.is_finite()).map(|&(t, y)| (t as f64, y)).collect();
    if finite.len() < 3 {
        return DecayFit::VANISHING;
    }
    let (first, last) = match (log_series.first(), log_series.last()) {
        (Some(a), Some(b)) => (a.0 as f64, b.0 as f64),
        _ => return DecayFit::VANISHING,
    };
    let mid = 0.5 * (first + last);
    let tail: Vec<(f64, f64)> = finite.iter().copied().filter(|(t, _)| *t >= mid).collect();
    let points = if tail.len() >= 3 { tail } else { finite };
    fit_log_decay(&points).unwrap_or(DecayFit::VANISHING)
}
