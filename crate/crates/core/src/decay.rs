//! Exponential-rate fits of the relative entropy.

use serde::{Deserialize, Serialize};

use crate::entropy::DiagnosticsRow;
use crate::error::{Error, Result};

/// Values of `E_rel` below this are treated as round-off.
pub const FIT_FLOOR: f64 = 1e-10;
/// Minimum number of rows inside the fit window.
pub const MIN_FIT_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Decay rate: minus the slope of `ln E_rel` against `t`.
    pub k: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub n_points: usize,
    /// `log10` of the ratio between the largest and smallest fitted `E_rel`.
    pub decades: f64,
}

/// Least-squares fit of `ln E_rel = c - K t`.
///
/// The window skips the first row and keeps rows with
/// `E_rel ∈ [1e-10, E_rel(first)/10]`.
pub fn fit_decay_rate(rows: &[DiagnosticsRow]) -> Result<DecayFit> {
    let Some(first) = rows.first() else {
        return Err(Error::WindowTooShort {
            usable: 0,
            needed: MIN_FIT_ROWS,
        });
    };
    let ceiling = first.e_rel / 10.0;
    let points: Vec<(f64, f64)> = rows[1..]
        .iter()
        .filter(|r| r.e_rel >= FIT_FLOOR && r.e_rel <= ceiling)
        .map(|r| (r.t, r.e_rel.ln()))
        .collect();
    if points.len() < MIN_FIT_ROWS {
        return Err(Error::WindowTooShort {
            usable: points.len(),
            needed: MIN_FIT_ROWS,
        });
    }

    let n = points.len() as f64;
    let (mt, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in &points {
        let (dt, dy) = (t - mt, y - my);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    let slope = sty / stt;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (sty * sty / (stt * syy)).clamp(0.0, 1.0)
    };
    let (y_lo, y_hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, y)| {
            (a.min(*y), b.max(*y))
        });
    Ok(DecayFit {
        k: -slope,
        r2,
        window: (points[0].0, points[points.len() - 1].0),
        n_points: points.len(),
        decades: (y_hi - y_lo) / std::f64::consts::LN_10,
    })
}
