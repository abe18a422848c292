use serde::{Deserialize, Serialize};

use super::fit::{FitFamily, FitModel};
use super::BenchError;

/// Published models, kept as references. Wall-clock coefficients depend on
/// the machine they were measured on.
pub mod reference {
    use super::{FitFamily, FitModel};

    /// Cumulative trie processing time (ms) against total pairs `N`.
    pub fn novel_rctp() -> FitModel {
        FitModel::new(
            FitFamily::Poly2,
            vec![1.318_556_48e3, 4.444_123_52e-2, -3.707_019_91e-7],
        )
    }

    /// Average per-pair processing time (ms) against pairs per cycle `n`.
    pub fn legacy_rctp() -> FitModel {
        FitModel::new(FitFamily::Invlog, vec![123.78, 18.99, 9.99])
    }

    /// Per-pair proof retrieval time (ms) against total pairs `N`.
    pub fn novel_rpr() -> FitModel {
        FitModel::new(FitFamily::Linear, vec![8.96, 0.015])
    }

    /// Bundle retrieval time (ms) against the cycle difference, with the
    /// slope growing in the cycle difference.
    pub fn legacy_rpr() -> FitModel {
        FitModel::new(FitFamily::Linear, vec![2328.04, 2.34])
    }

    /// The same model as printed with a negative slope.
    pub fn legacy_rpr_negative_slope() -> FitModel {
        FitModel::new(FitFamily::Linear, vec![2328.04, -2.34])
    }
}

fn require_linear(model: &FitModel, what: &str) -> Result<(), BenchError> {
    if model.family != FitFamily::Linear {
        return Err(BenchError::InvalidArgument(format!(
            "{what} model must be linear, got {:?}",
            model.family
        )));
    }
    Ok(())
}

/// Per-pair retrieval time for a cycle of `lambda * t_c` new pairs on top
/// of `history` earlier cycles in the period.
pub fn predict_rpr_novel(
    lambda: f64,
    t_c: f64,
    history: &[f64],
    model: &FitModel,
) -> Result<f64, BenchError> {
    require_linear(model, "novel retrieval")?;
    let n_total = lambda * t_c + history.iter().sum::<f64>();
    Ok(model.eval(n_total))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lambda: f64,
    #[serde(rename = "T_p")]
    pub t_p: f64,
    #[serde(rename = "R_pr_ms")]
    pub r_pr_ms: f64,
}

/// Predicted retrieval time over `lambdas × t_ps`, each evaluated at
/// `N = lambda * T_p / m`.
pub fn rpr_grid(
    lambdas: &[f64],
    t_ps: &[f64],
    m: u64,
    model: &FitModel,
) -> Result<Vec<GridPoint>, BenchError> {
    require_linear(model, "retrieval")?;
    if m == 0 {
        return Err(BenchError::InvalidArgument("m must be at least 1".into()));
    }
    let mut grid = Vec::with_capacity(lambdas.len() * t_ps.len());
    for &lambda in lambdas {
        for &t_p in t_ps {
            grid.push(GridPoint {
                lambda,
                t_p,
                r_pr_ms: model.eval(lambda * t_p / m as f64),
            });
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Legacy,
    Novel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossover {
    pub n: f64,
    pub delta_c_star: f64,
    pub winner_below: System,
    pub winner_above: System,
    pub note: Option<String>,
}

/// Cycle difference at which the legacy bundle time
/// `L0 + L1·ΔC` meets the novel time `N0 + N1·n·ΔC`.
pub fn crossover(legacy: &FitModel, novel: &FitModel, n: f64) -> Result<Crossover, BenchError> {
    require_linear(legacy, "legacy")?;
    require_linear(novel, "novel")?;
    let denom = novel.slope() * n - legacy.slope();
    if denom.abs() <= f64::EPSILON * (novel.slope() * n).abs().max(legacy.slope().abs()).max(1.0) {
        return Err(BenchError::NoCrossover);
    }
    let star = (legacy.intercept() - novel.intercept()) / denom;
    let gap = |dc: f64| {
        (novel.intercept() + novel.slope() * n * dc) - (legacy.intercept() + legacy.slope() * dc)
    };
    let faster = |dc: f64| {
        if gap(dc) < 0.0 {
            System::Novel
        } else {
            System::Legacy
        }
    };
    let winner_below = faster(star - 1.0);
    let winner_above = faster(star + 1.0);
    let note = (star < 1.0).then(|| {
        let name = match winner_above {
            System::Legacy => "legacy",
            System::Novel => "novel",
        };
        format!("{name} always faster in-domain (delta_C >= 1)")
    });
    Ok(Crossover {
        n,
        delta_c_star: star,
        winner_below,
        winner_above,
        note,
    })
}

/// Any subset of the model parameters; [`param_model`] fills in the rest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamInputs {
    pub n: Option<f64>,
    pub big_n: Option<f64>,
    pub lambda: Option<f64>,
    pub t_c: Option<f64>,
    pub t_p: Option<f64>,
    pub m: Option<u64>,
    pub delta_c: Option<u64>,
    /// Pair counts of earlier cycles in the period.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: Option<f64>,
    pub t_c: Option<f64>,
    pub t_p: Option<f64>,
    pub m: Option<u64>,
    pub n: f64,
    pub big_n: f64,
    pub delta_c: Option<u64>,
    /// `ceil(log2 N)`, 0 for `N <= 1`.
    pub depth: u32,
}

fn agree(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn settle(name: &str, given: Option<f64>, derived: Option<f64>) -> Result<Option<f64>, BenchError> {
    match (given, derived) {
        (Some(g), Some(d)) if !agree(g, d) => Err(BenchError::InconsistentParams(format!(
            "{name} given as {g} but the other inputs imply {d}"
        ))),
        (Some(g), _) => Ok(Some(g)),
        (None, d) => Ok(d),
    }
}

/// Completes the parameter set from `n = λ·T_c`, `T_p = m·T_c`,
/// `N = n + Σ history`.
pub fn param_model(inputs: &ParamInputs) -> Result<ModelParams, BenchError> {
    let p = inputs;
    for (name, v) in [
        ("n", p.n),
        ("N", p.big_n),
        ("lambda", p.lambda),
        ("T_c", p.t_c),
        ("T_p", p.t_p),
    ] {
        if v.is_some_and(|v| !(v >= 0.0 && v.is_finite())) {
            return Err(BenchError::InvalidArgument(format!(
                "{name} must be finite and non-negative"
            )));
        }
    }
    let m = p.m.map(|m| m as f64);
    let t_c = settle(
        "T_c",
        p.t_c,
        p.t_p.zip(m).filter(|&(_, m)| m > 0.0).map(|(tp, m)| tp / m),
    )?;
    let t_p = settle("T_p", p.t_p, m.zip(t_c).map(|(m, tc)| m * tc))?;
    let m = match (p.m, t_p.zip(t_c)) {
        (Some(m), _) => Some(m),
        (None, Some((tp, tc))) if tc > 0.0 => {
            let ratio = tp / tc;
            if !agree(ratio, ratio.round()) {
                return Err(BenchError::InconsistentParams(format!(
                    "T_p / T_c = {ratio} is not a whole number of cycles"
                )));
            }
            Some(ratio.round() as u64)
        }
        _ => None,
    };
    let t_c = t_c.or_else(|| {
        t_p.zip(m)
            .filter(|&(_, m)| m > 0)
            .map(|(tp, m)| tp / m as f64)
    });
    let history: f64 = p.history.iter().sum();
    let lambda = settle(
        "lambda",
        p.lambda,
        p.n.zip(t_c)
            .filter(|&(_, tc)| tc > 0.0)
            .map(|(n, tc)| n / tc),
    )?;
    let n = settle("n", p.n, lambda.zip(t_c).map(|(l, tc)| l * tc))?;
    let n = settle("n", n, p.big_n.map(|big| big - history))?.ok_or_else(|| {
        BenchError::InconsistentParams("need n, N, or both lambda and T_c".into())
    })?;
    if n < 0.0 {
        return Err(BenchError::InconsistentParams(format!(
            "N is smaller than the history sum {history}"
        )));
    }
    let big_n = n + history;
    let depth = if big_n <= 1.0 {
        0
    } else {
        big_n.log2().ceil() as u32
    };
    Ok(ModelParams {
        lambda,
        t_c,
        t_p,
        m,
        n,
        big_n,
        delta_c: p.delta_c,
        depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predictions_from_reference_model() {
        let model = reference::novel_rpr();
        assert!((predict_rpr_novel(1000.0, 1.0, &[], &model).unwrap() - 23.96).abs() < 1e-9);
        assert_eq!(predict_rpr_novel(0.0, 1.0, &[], &model).unwrap(), 8.96);
        let h = predict_rpr_novel(100.0, 1.0, &[100.0, 100.0], &model).unwrap();
        assert!((h - (8.96 + 0.015 * 300.0)).abs() < 1e-12);
        assert!(predict_rpr_novel(1.0, 1.0, &[], &reference::novel_rctp()).is_err());
    }

    #[test]
    fn grid_substitution_and_linearity() {
        let model = reference::novel_rpr();
        let g = rpr_grid(&[250.0, 500.0, 1000.0], &[10.0], 10, &model).unwrap();
        assert_eq!(g[0].lambda, 250.0);
        assert_eq!(g[2].lambda, 1000.0);
        assert!((g[0].r_pr_ms - model.eval(250.0)).abs() < 1e-12);
        let lift = |p: &GridPoint| p.r_pr_ms - model.intercept();
        assert!((lift(&g[1]) - 2.0 * lift(&g[0])).abs() < 1e-9);
        assert!(rpr_grid(&[1.0], &[1.0], 0, &model).is_err());
    }

    #[test]
    fn paper_crossover() {
        let c = crossover(&reference::legacy_rpr(), &reference::novel_rpr(), 1000.0).unwrap();
        let hand = (2328.04 - 8.96) / (15.0 - 2.34);
        assert!((c.delta_c_star - hand).abs() < 1e-6);
        assert!((c.delta_c_star - 183.18).abs() < 0.01);
        assert_eq!(c.winner_below, System::Novel);
        assert_eq!(c.winner_above, System::Legacy);
        assert!(c.note.is_none());
    }

    #[test]
    fn parallel_and_always_faster_cases() {
        let legacy = FitModel::new(FitFamily::Linear, vec![100.0, 3.0]);
        let novel = FitModel::new(FitFamily::Linear, vec![10.0, 0.003]);
        assert!(matches!(
            crossover(&legacy, &novel, 1000.0),
            Err(BenchError::NoCrossover)
        ));

        let legacy = FitModel::new(FitFamily::Linear, vec![5.0, 1.0]);
        let novel = FitModel::new(FitFamily::Linear, vec![50.0, 0.01]);
        let c = crossover(&legacy, &novel, 1000.0).unwrap();
        assert!(c.delta_c_star < 0.0);
        assert_eq!(c.winner_above, System::Legacy);
        assert!(c.note.unwrap().starts_with("legacy always faster"));
    }

    #[test]
    fn parameter_completion() {
        let d = |n: f64| {
            param_model(&ParamInputs {
                n: Some(n),
                ..ParamInputs::default()
            })
            .unwrap()
            .depth
        };
        assert_eq!(d(1024.0), 10);
        assert_eq!(d(1.0), 0);
        assert_eq!(d(1025.0), 11);

        let p = param_model(&ParamInputs {
            lambda: Some(500.0),
            t_c: Some(2.0),
            m: Some(10),
            ..ParamInputs::default()
        })
        .unwrap();
        assert_eq!(p.n, 1000.0);
        assert_eq!(p.t_p, Some(20.0));
        assert_eq!(p.big_n, 1000.0);

        let p = param_model(&ParamInputs {
            big_n: Some(300.0),
            history: vec![100.0, 100.0],
            ..ParamInputs::default()
        })
        .unwrap();
        assert_eq!(p.n, 100.0);

        let bad = param_model(&ParamInputs {
            n: Some(10.0),
            lambda: Some(500.0),
            t_c: Some(2.0),
            ..ParamInputs::default()
        });
        assert!(matches!(bad, Err(BenchError::InconsistentParams(_))));
        assert!(param_model(&ParamInputs::default()).is_err());
    }
}
