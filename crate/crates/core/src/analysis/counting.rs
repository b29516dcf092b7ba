use serde::Serialize;

use crate::error::{Error, Result};
use crate::solver::Spectrum;

/// `N(x) = #{λ ≤ x}`, counted with multiplicity.
pub fn counting_function(spec: &Spectrum, x: f64) -> usize {
    spec.eigenvalues().partition_point(|&l| l <= x)
}

/// Straight-line least-squares fit `y ≈ intercept + slope·x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub sse: f64,
    pub points: usize,
    /// The abscissae have no spread, so the slope is reported as 0.
    pub degenerate: bool,
}

fn fit_line(points: &[(f64, f64)]) -> LineFit {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let degenerate = !(sxx > 1e-12 * n);
    let slope = if degenerate { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let sse = points
        .iter()
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    LineFit {
        slope,
        intercept,
        sse,
        points: points.len(),
        degenerate,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeOptions {
    /// Leading eigenvalues dropped before fitting.
    pub burn_in: usize,
    /// Fewer points than this in either regime is an error.
    pub min_points: usize,
}

impl Default for SlopeOptions {
    fn default() -> Self {
        Self {
            burn_in: 20,
            min_points: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegimeSlopes {
    pub threshold: f64,
    pub low: LineFit,
    pub high: LineFit,
}

impl RegimeSlopes {
    pub fn degenerate(&self) -> bool {
        self.low.degenerate || self.high.degenerate
    }
}

/// Points `(log λ_j, log j)` of the counting function at its jumps, skipping
/// nonpositive eigenvalues and the first `burn_in` pairs.
fn loglog_points(spec: &Spectrum, burn_in: usize) -> Vec<(f64, f64, f64)> {
    let values = spec.eigenvalues();
    values
        .iter()
        .enumerate()
        .skip(burn_in)
        .filter(|(_, &l)| l > 0.0)
        .map(|(i, &l)| {
            // At a repeated eigenvalue the counting function has already
            // jumped to the last copy.
            let count = counting_function(spec, l);
            debug_assert!(count > i);
            (l, l.ln(), (count as f64).ln())
        })
        .collect()
}

/// Least-squares slopes of `log N(λ)` against `log λ` below and above `threshold`.
pub fn loglog_slopes(spec: &Spectrum, threshold: f64) -> Result<RegimeSlopes> {
    loglog_slopes_with(spec, threshold, &SlopeOptions::default())
}

pub fn loglog_slopes_with(spec: &Spectrum, threshold: f64, opts: &SlopeOptions) -> Result<RegimeSlopes> {
    let points = loglog_points(spec, opts.burn_in);
    let (low, high): (Vec<_>, Vec<_>) = points.iter().partition(|(l, _, _)| *l <= threshold);
    let xy = |p: Vec<&(f64, f64, f64)>| p.iter().map(|(_, x, y)| (*x, *y)).collect::<Vec<_>>();
    let (low, high) = (xy(low), xy(high));
    for (name, regime) in [("low", &low), ("high", &high)] {
        if regime.len() < opts.min_points {
            return Err(Error::Argument(format!(
                "{name} regime has {} points, need at least {}",
                regime.len(),
                opts.min_points
            )));
        }
    }
    Ok(RegimeSlopes {
        threshold,
        low: fit_line(&low),
        high: fit_line(&high),
    })
}

/// Breakpoint of the best two-segment least-squares fit of `log N` vs `log λ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KinkFit {
    /// Last eigenvalue assigned to the low segment.
    pub lambda: f64,
    /// Its 1-based index in the spectrum.
    pub index: usize,
    pub low_slope: f64,
    pub high_slope: f64,
    pub sse: f64,
}

/// Regime change estimated from both ends.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeReport {
    /// Largest Dirichlet eigenvalue.
    pub lambda_star: f64,
    /// Its 1-based index (the Dirichlet dimension for full solves).
    pub dirichlet_index: usize,
    /// 1-based index of the full-operator eigenvalue nearest `lambda_star`.
    pub index_star: usize,
    pub nearest_eigenvalue: f64,
    pub kink: Option<KinkFit>,
    /// True when no full-operator eigenvalues lie above `lambda_star`, or
    /// too few points remain on one side for a two-segment fit.
    pub kink_degenerate: bool,
}

/// Locates the regime change of `spec_full` using the top of `spec_dirichlet`.
pub fn regime_threshold(spec_full: &Spectrum, spec_dirichlet: &Spectrum) -> Result<RegimeReport> {
    regime_threshold_with(spec_full, spec_dirichlet, &SlopeOptions::default())
}

pub fn regime_threshold_with(spec_full: &Spectrum, spec_dirichlet: &Spectrum, opts: &SlopeOptions) -> Result<RegimeReport> {
    let (Some(&lambda_star), false) = (spec_dirichlet.eigenvalues().last(), spec_full.is_empty()) else {
        return Err(Error::Argument("regime threshold needs two nonempty spectra".into()));
    };
    let values = spec_full.eigenvalues();
    let nearest = values
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - lambda_star).abs().total_cmp(&(b.1 - lambda_star).abs()))
        .map(|(i, _)| i)
        .expect("nonempty");

    let kink = kink_fit(spec_full, opts);
    let above = values.iter().filter(|&&l| l > lambda_star).count();
    Ok(RegimeReport {
        lambda_star,
        dirichlet_index: spec_dirichlet.len(),
        index_star: nearest + 1,
        nearest_eigenvalue: values[nearest],
        kink_degenerate: kink.is_none() || above < opts.min_points,
        kink,
    })
}

fn kink_fit(spec: &Spectrum, opts: &SlopeOptions) -> Option<KinkFit> {
    let points = loglog_points(spec, opts.burn_in);
    let m = opts.min_points.max(2);
    if points.len() < 2 * m {
        return None;
    }
    // Prefix sums give each one-sided fit in O(1).
    let mut prefix = vec![[0.0f64; 5]; points.len() + 1];
    for (i, &(_, x, y)) in points.iter().enumerate() {
        let p = prefix[i];
        prefix[i + 1] = [p[0] + 1.0, p[1] + x, p[2] + y, p[3] + x * x, p[4] + x * y];
    }
    let syy: Vec<f64> = points
        .iter()
        .scan(0.0, |acc, &(_, _, y)| {
            *acc += y * y;
            Some(*acc)
        })
        .collect();
    let segment = |lo: usize, hi: usize| -> Option<(f64, f64)> {
        let s: Vec<f64> = (0..5).map(|k| prefix[hi][k] - prefix[lo][k]).collect();
        let yy = syy[hi - 1] - if lo == 0 { 0.0 } else { syy[lo - 1] };
        let (n, sx, sy, sxx, sxy) = (s[0], s[1], s[2], s[3], s[4]);
        let vxx = sxx - sx * sx / n;
        if vxx <= 1e-12 * n {
            return None;
        }
        let vxy = sxy - sx * sy / n;
        let vyy = yy - sy * sy / n;
        let slope = vxy / vxx;
        Some((slope, (vyy - slope * vxy).max(0.0)))
    };

    let mut best: Option<(usize, f64, f64, f64)> = None;
    for split in m..=points.len() - m {
        let (Some((ls, le)), Some((hs, he))) = (segment(0, split), segment(split, points.len())) else {
            continue;
        };
        if best.is_none_or(|b| le + he < b.3) {
            best = Some((split, ls, hs, le + he));
        }
    }
    best.map(|(split, low_slope, high_slope, sse)| {
        let (lambda, _, _) = points[split - 1];
        KinkFit {
            lambda,
            index: spec.eigenvalues().partition_point(|&l| l < lambda) + 1,
            low_slope,
            high_slope,
            sse,
        }
    })
}

/// Run of numerically equal consecutive eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MultiplicityGroup {
    /// 1-based index of the first member.
    pub first: usize,
    pub size: usize,
    pub eigenvalue: f64,
}

/// Clusters consecutive eigenvalues with `|λ_{i+1} − λ_i| ≤ rel_tol·max(1, λ_i)`.
pub fn multiplicity_groups(spec: &Spectrum, rel_tol: f64) -> Result<Vec<MultiplicityGroup>> {
    if !(rel_tol > 0.0) {
        return Err(Error::Argument(format!("relative tolerance must be positive, got {rel_tol}")));
    }
    let values = spec.eigenvalues();
    let mut groups: Vec<MultiplicityGroup> = Vec::new();
    let mut sum = 0.0;
    for (i, &l) in values.iter().enumerate() {
        let joins = i > 0 && (l - values[i - 1]).abs() <= rel_tol * values[i - 1].abs().max(1.0);
        match groups.last_mut() {
            Some(g) if joins => {
                g.size += 1;
                sum += l;
                g.eigenvalue = sum / g.size as f64;
            }
            _ => {
                groups.push(MultiplicityGroup {
                    first: i + 1,
                    size: 1,
                    eigenvalue: l,
                });
                sum = l;
            }
        }
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::OperatorKind;

    fn synthetic(values: &[f64]) -> Spectrum {
        let n = values.len();
        let pairs = values
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let mut v = vec![0.0; n];
                v[i] = 1.0;
                (l, v)
            })
            .collect();
        Spectrum::from_pairs(OperatorKind::Full, 0, vec![1.0; n], (0..n).collect(), pairs).unwrap()
    }

    #[test]
    fn counting_is_right_continuous() {
        let s = synthetic(&[0.0, 1.0, 1.0, 2.0]);
        assert_eq!(counting_function(&s, -0.5), 0);
        assert_eq!(counting_function(&s, 0.0), 1);
        assert_eq!(counting_function(&s, 0.999), 1);
        assert_eq!(counting_function(&s, 1.0), 3);
        assert_eq!(counting_function(&s, f64::INFINITY), 4);
    }

    #[test]
    fn power_law_slopes() {
        // N(λ) = j at λ_j = j², so log N = ½ log λ everywhere; add a
        // second regime with λ_j = j for the low part.
        let mut values: Vec<f64> = (1..=100).map(|j| j as f64).collect();
        values.extend((101..=200).map(|j| 100.0 * (j as f64 / 100.0).powi(4)));
        let s = synthetic(&values);
        let fit = loglog_slopes_with(&s, 100.0, &SlopeOptions { burn_in: 0, min_points: 10 }).unwrap();
        assert!((fit.low.slope - 1.0).abs() < 1e-12);
        assert!((fit.high.slope - 0.25).abs() < 0.02, "{}", fit.high.slope);
        assert!(!fit.degenerate());
    }

    #[test]
    fn flat_spectrum_is_degenerate() {
        let mut values = vec![1.0; 30];
        values.extend(vec![2.0; 30]);
        let fit = loglog_slopes_with(&synthetic(&values), 1.5, &SlopeOptions { burn_in: 0, min_points: 10 }).unwrap();
        assert!(fit.degenerate());
        assert_eq!(fit.low.slope, 0.0);
    }

    #[test]
    fn slopes_need_points_on_both_sides() {
        let s = synthetic(&(1..=50).map(|j| j as f64).collect::<Vec<_>>());
        assert!(loglog_slopes(&s, 1e9).is_err());
    }

    #[test]
    fn identical_spectra_flag_the_kink() {
        let s = synthetic(&(1..=80).map(|j| (j * j) as f64).collect::<Vec<_>>());
        let r = regime_threshold(&s, &s).unwrap();
        assert_eq!(r.lambda_star, 6400.0);
        assert_eq!(r.index_star, 80);
        assert!(r.kink_degenerate);
    }

    #[test]
    fn kink_found_at_slope_change() {
        let mut values: Vec<f64> = (1..=200).map(|j| j as f64).collect();
        values.extend((201..=400).map(|j| 200.0 * (j as f64 / 200.0).powi(4)));
        let s = synthetic(&values);
        let kink = kink_fit(&s, &SlopeOptions { burn_in: 0, min_points: 10 }).unwrap();
        assert!((kink.index as i64 - 200).abs() <= 2, "{kink:?}");
    }

    #[test]
    fn groups() {
        let s = synthetic(&[0.0, 15.1, 15.1 * (1.0 + 1e-9), 48.0, 49.0]);
        let g = multiplicity_groups(&s, 1e-6).unwrap();
        let sizes: Vec<usize> = g.iter().map(|g| g.size).collect();
        assert_eq!(sizes, vec![1, 2, 1, 1]);
        assert_eq!(g[1].first, 2);
        assert!(multiplicity_groups(&s, 0.0).is_err());
    }
}
