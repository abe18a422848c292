use serde::{Deserialize, Serialize};

use super::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitFamily {
    /// `a0 + a1 x + a2 x²`, coefficients `[a0, a1, a2]`.
    Poly2,
    /// `a - b ln(x - c)`, coefficients `[a, b, c]`.
    Invlog,
    /// `intercept + slope x`, coefficients `[intercept, slope]`.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitModel {
    pub family: FitFamily,
    pub coefficients: Vec<f64>,
    /// `[x_min, x_max]` of the data the model was fitted on; `None` for
    /// reference models whose data range is not known.
    pub domain: Option<(f64, f64)>,
    pub rms_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub value: f64,
    pub extrapolated: bool,
}

impl FitModel {
    pub fn new(family: FitFamily, coefficients: Vec<f64>) -> Self {
        FitModel {
            family,
            coefficients,
            domain: None,
            rms_residual: 0.0,
        }
    }

    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn slope(&self) -> f64 {
        self.coefficients[1]
    }

    /// Model value without any domain checks.
    pub fn eval(&self, x: f64) -> f64 {
        let c = &self.coefficients;
        match self.family {
            FitFamily::Poly2 => c[0] + c[1] * x + c[2] * x * x,
            FitFamily::Invlog => c[0] - c[1] * (x - c[2]).ln(),
            FitFamily::Linear => c[0] + c[1] * x,
        }
    }

    pub fn is_extrapolation(&self, x: f64) -> bool {
        self.domain.is_none_or(|(lo, hi)| x < lo || x > hi)
    }

    /// Predicts at `x`. Outside the domain the result is flagged; a
    /// quadratic is refused there if it is decreasing at `x`, since a
    /// response time that falls as the trie grows is an artifact of the fit.
    pub fn predict(&self, x: f64) -> Result<Prediction, BenchError> {
        let extrapolated = self.is_extrapolation(x);
        match self.family {
            FitFamily::Invlog if x <= self.coefficients[2] => {
                return Err(BenchError::InvalidDomain(format!(
                    "x = {x} must exceed c = {}",
                    self.coefficients[2]
                )))
            }
            FitFamily::Poly2
                if extrapolated && self.coefficients[1] + 2.0 * self.coefficients[2] * x < 0.0 =>
            {
                return Err(BenchError::ExtrapolationRefused { x })
            }
            _ => {}
        }
        Ok(Prediction {
            value: self.eval(x),
            extrapolated,
        })
    }

    fn with_data(mut self, xs: &[f64], ys: &[f64]) -> Self {
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.domain = Some((lo, hi));
        self.rms_residual = rms(&self, xs, ys);
        self
    }
}

fn rms(model: &FitModel, xs: &[f64], ys: &[f64]) -> f64 {
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (y - model.eval(x)).powi(2))
        .sum();
    (sse / xs.len() as f64).sqrt()
}

/// Fit report file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub family: FitFamily,
    pub coefficients: Vec<f64>,
    pub domain: Option<(f64, f64)>,
    pub rms_residual: f64,
    pub n_samples: usize,
    pub n_outliers_removed: usize,
}

impl FitReport {
    pub fn new(model: &FitModel, n_samples: usize, n_outliers_removed: usize) -> Self {
        FitReport {
            family: model.family,
            coefficients: model.coefficients.clone(),
            domain: model.domain,
            rms_residual: model.rms_residual,
            n_samples,
            n_outliers_removed,
        }
    }
}

fn check_inputs(xs: &[f64], ys: &[f64], distinct_needed: usize) -> Result<(), BenchError> {
    if xs.len() != ys.len() {
        return Err(BenchError::InvalidArgument(format!(
            "{} x values but {} y values",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(BenchError::InvalidArgument("non-finite sample".into()));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < distinct_needed {
        return Err(BenchError::DegenerateFit(format!(
            "need {distinct_needed} distinct x values, got {}",
            sorted.len()
        )));
    }
    Ok(())
}

/// Ordinary least squares line on mean-centred x.
pub fn fit_linear(xs: &[f64], ys: &[f64]) -> Result<FitModel, BenchError> {
    check_inputs(xs, ys, 2)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let model = FitModel::new(FitFamily::Linear, vec![my - slope * mx, slope]);
    Ok(model.with_data(xs, ys))
}

/// Least-squares quadratic. The design matrix is built on
/// `t = (x - mean) / scale` and solved by modified Gram-Schmidt QR, then
/// mapped back to coefficients in `x`.
pub fn fit_poly2(xs: &[f64], ys: &[f64]) -> Result<FitModel, BenchError> {
    check_inputs(xs, ys, 3)?;
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let scale = xs.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
    let t: Vec<f64> = xs.iter().map(|x| (x - mean) / scale).collect();
    let mut q: Vec<Vec<f64>> = vec![vec![1.0; n], t.clone(), t.iter().map(|v| v * v).collect()];
    let mut r = [[0.0f64; 3]; 3];
    for j in 0..3 {
        for i in 0..j {
            let dot: f64 = q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum();
            r[i][j] = dot;
            let qi = q[i].clone();
            for (v, u) in q[j].iter_mut().zip(&qi) {
                *v -= dot * u;
            }
        }
        let norm = q[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 * (n as f64).sqrt() {
            return Err(BenchError::DegenerateFit(
                "design matrix is rank deficient".into(),
            ));
        }
        r[j][j] = norm;
        for v in &mut q[j] {
            *v /= norm;
        }
    }
    let qty: Vec<f64> = (0..3)
        .map(|i| q[i].iter().zip(ys).map(|(a, b)| a * b).sum())
        .collect();
    let mut b = [0.0f64; 3];
    for i in (0..3).rev() {
        let tail: f64 = (i + 1..3).map(|k| r[i][k] * b[k]).sum();
        b[i] = (qty[i] - tail) / r[i][i];
    }
    let (s, m) = (scale, mean);
    let a2 = b[2] / (s * s);
    let a1 = b[1] / s - 2.0 * b[2] * m / (s * s);
    let a0 = b[0] - b[1] * m / s + b[2] * m * m / (s * s);
    Ok(FitModel::new(FitFamily::Poly2, vec![a0, a1, a2]).with_data(xs, ys))
}

/// [`fit_invlog_with`] at a grid step of 0.01.
pub fn fit_invlog(xs: &[f64], ys: &[f64]) -> Result<FitModel, BenchError> {
    fit_invlog_with(xs, ys, 0.01)
}

/// Fits `a - b ln(x - c)`: for each `c = k * step` below `min(x)` the model
/// is linear in `(a, b)`; the candidate with the smallest RMS residual wins.
pub fn fit_invlog_with(xs: &[f64], ys: &[f64], step: f64) -> Result<FitModel, BenchError> {
    check_inputs(xs, ys, 2)?;
    if step.is_nan() || step <= 0.0 {
        return Err(BenchError::InvalidArgument(format!(
            "grid step {step} must be positive"
        )));
    }
    let min_x = xs.iter().copied().fold(f64::INFINITY, f64::min);
    if min_x <= step {
        return Err(BenchError::InvalidDomain(format!(
            "min x = {min_x} leaves no grid point for c in (0, min x) at step {step}"
        )));
    }
    let mut best: Option<FitModel> = None;
    let mut k = 1u64;
    loop {
        let c = k as f64 * step;
        if c >= min_x {
            break;
        }
        k += 1;
        if xs.iter().any(|&x| x <= c) {
            continue;
        }
        let u: Vec<f64> = xs.iter().map(|x| (x - c).ln()).collect();
        let Ok(line) = fit_linear(&u, ys) else {
            continue;
        };
        let model = FitModel::new(FitFamily::Invlog, vec![line.intercept(), -line.slope(), c]);
        let err = rms(&model, xs, ys);
        if best.as_ref().is_none_or(|b| err < b.rms_residual) {
            best = Some(FitModel {
                rms_residual: err,
                ..model
            });
        }
    }
    best.map(|m| m.with_data(xs, ys))
        .ok_or_else(|| BenchError::DegenerateFit("no grid candidate produced a fit".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn poly2_exact_recovery() {
        let xs: Vec<f64> = (0..=10).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 + 3.0 * x + 0.5 * x * x).collect();
        let m = fit_poly2(&xs, &ys).unwrap();
        for (got, want) in m.coefficients.iter().zip([2.0, 3.0, 0.5]) {
            assert!(rel(*got, want) < 1e-9, "{got} vs {want}");
        }
        assert!(m.rms_residual < 1e-9);
        assert_eq!(m.domain, Some((0.0, 10.0)));
    }

    #[test]
    fn poly2_needs_three_x() {
        assert!(matches!(
            fit_poly2(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(BenchError::DegenerateFit(_))
        ));
    }

    #[test]
    fn linear_exact_and_flat() {
        let xs: Vec<f64> = (0..50).map(|i| f64::from(i) * 37.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 8.96 + 0.015 * x).collect();
        let m = fit_linear(&xs, &ys).unwrap();
        assert!(rel(m.intercept(), 8.96) < 1e-9);
        assert!(rel(m.slope(), 0.015) < 1e-9);
        let flat = fit_linear(&xs, &vec![4.0; xs.len()]).unwrap();
        assert_eq!(flat.slope(), 0.0);
        assert!(fit_linear(&[3.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn invlog_recovers_synthetic() {
        let xs: Vec<f64> = (6..=200).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 100.0 - 20.0 * (x - 5.0).ln()).collect();
        let m = fit_invlog(&xs, &ys).unwrap();
        for (got, want) in m.coefficients.iter().zip([100.0, 20.0, 5.0]) {
            assert!(rel(*got, want) < 0.01, "{got} vs {want}");
        }
    }

    #[test]
    fn invlog_domain_rules() {
        assert!(matches!(
            fit_invlog(&[0.005, 1.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(BenchError::InvalidDomain(_))
        ));
        let m = FitModel::new(FitFamily::Invlog, vec![1.0, 1.0, 5.0]);
        assert!(m.predict(5.0).is_err());
        assert!(m.predict(6.0).is_ok());
    }

    #[test]
    fn poly2_guard_refuses_decreasing_extrapolation() {
        let mut m = FitModel::new(FitFamily::Poly2, vec![0.0, 2.0, -1.0]);
        m.domain = Some((0.0, 2.0));
        // Inside the domain the decreasing part is allowed, just not flagged.
        assert!(!m.predict(1.5).unwrap().extrapolated);
        assert!(matches!(
            m.predict(3.0),
            Err(BenchError::ExtrapolationRefused { .. })
        ));
        let up = FitModel {
            coefficients: vec![0.0, 1.0, 1.0],
            ..m
        };
        assert!(up.predict(3.0).unwrap().extrapolated);
    }
}
