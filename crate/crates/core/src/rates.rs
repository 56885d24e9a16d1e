//! Accuracy and cost rate models.
//!
//! A rate model is a bound `c·r(n)` on either the accuracy gap `1 - ρ²(n)` of a
//! trainable low-fidelity model (decreasing in the number of training samples `n`)
//! or on its evaluation cost `w(n)` (increasing in `n`). Two families are supported:
//! algebraic (`n^{∓e}`) and exponential (`e^{∓e·n}`).

use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Values of exactly zero in an accuracy pilot series are replaced by this before the
/// log transform.
pub const ZERO_GAP_CLAMP: f64 = 1e-16;

#[derive(Debug, Error, PartialEq)]
pub enum RateError {
    #[error("rate argument must be positive, got n = {0}")]
    Domain(f64),
    #[error("derivative order must be 1 or 2, got {0}")]
    Order(u8),
    #[error("pilot series needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("pilot value at point {index} is not positive ({value})")]
    NonPositiveValue { index: usize, value: f64 },
    #[error("pilot n values must be strictly increasing and positive (point {index})")]
    NotIncreasing { index: usize },
    #[error("fitted {family} rate has non-positive exponent {exponent}; data do not match the {role} role")]
    WrongDirection {
        family: Family,
        role: Role,
        exponent: f64,
    },
    #[error("invalid rate model: {0}")]
    Invalid(String),
    #[error("pilot csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Algebraic,
    Exponential,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Algebraic => write!(f, "algebraic"),
            Family::Exponential => write!(f, "exponential"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Bound on `1 - ρ²(n)`; decreasing.
    Accuracy,
    /// Bound on `w(n)`; increasing.
    Cost,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Accuracy => write!(f, "accuracy"),
            Role::Cost => write!(f, "cost"),
        }
    }
}

/// `scale · r(n)` with `r` one of `n^{-e}`, `e^{-e n}` (accuracy) or `n^{e}`, `e^{e n}` (cost).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    pub family: Family,
    pub role: Role,
    pub scale: f64,
    pub exponent: f64,
}

impl RateModel {
    pub fn new(family: Family, role: Role, scale: f64, exponent: f64) -> Self {
        Self {
            family,
            role,
            scale,
            exponent,
        }
    }

    pub fn algebraic_accuracy(scale: f64, alpha: f64) -> Self {
        Self::new(Family::Algebraic, Role::Accuracy, scale, alpha)
    }

    pub fn exponential_accuracy(scale: f64, alpha: f64) -> Self {
        Self::new(Family::Exponential, Role::Accuracy, scale, alpha)
    }

    pub fn algebraic_cost(scale: f64, beta: f64) -> Self {
        Self::new(Family::Algebraic, Role::Cost, scale, beta)
    }

    pub fn exponential_cost(scale: f64, beta: f64) -> Self {
        Self::new(Family::Exponential, Role::Cost, scale, beta)
    }

    /// Signed exponent: negative for accuracy (decay), positive for cost (growth).
    fn signed_exponent(&self) -> f64 {
        match self.role {
            Role::Accuracy => -self.exponent,
            Role::Cost => self.exponent,
        }
    }

    /// `c·r(n)`.
    pub fn eval(&self, n: f64) -> Result<f64, RateError> {
        check_domain(n)?;
        Ok(self.eval_unchecked(n))
    }

    /// `c·r(n)` without the domain check. `n` must be positive.
    pub fn eval_unchecked(&self, n: f64) -> f64 {
        let s = self.signed_exponent();
        match self.family {
            Family::Algebraic => self.scale * n.powf(s),
            Family::Exponential => self.scale * (s * n).exp(),
        }
    }

    /// Exact first (`order = 1`) or second (`order = 2`) derivative of [`RateModel::eval`].
    pub fn deriv(&self, n: f64, order: u8) -> Result<f64, RateError> {
        check_domain(n)?;
        match order {
            1 => Ok(self.deriv1_unchecked(n)),
            2 => Ok(self.deriv2_unchecked(n)),
            other => Err(RateError::Order(other)),
        }
    }

    pub fn deriv1_unchecked(&self, n: f64) -> f64 {
        let s = self.signed_exponent();
        match self.family {
            Family::Algebraic => self.scale * s * n.powf(s - 1.0),
            Family::Exponential => self.scale * s * (s * n).exp(),
        }
    }

    pub fn deriv2_unchecked(&self, n: f64) -> f64 {
        let s = self.signed_exponent();
        match self.family {
            Family::Algebraic => self.scale * s * (s - 1.0) * n.powf(s - 2.0),
            Family::Exponential => self.scale * s * s * (s * n).exp(),
        }
    }

    /// Checks positivity of the parameters; monotonicity in the direction required by
    /// the role then follows from the family.
    pub fn validate(&self) -> Result<(), String> {
        if !self.scale.is_finite() || self.scale <= 0.0 {
            return Err("scale must be positive".to_string());
        }
        if !self.exponent.is_finite() || self.exponent <= 0.0 {
            return Err("exponent must be positive".to_string());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("rate model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, RateError> {
        let model: Self = serde_json::from_str(s).map_err(|e| RateError::Invalid(e.to_string()))?;
        model.validate().map_err(RateError::Invalid)?;
        Ok(model)
    }
}

fn check_domain(n: f64) -> Result<(), RateError> {
    if n > 0.0 && n.is_finite() {
        Ok(())
    } else {
        Err(RateError::Domain(n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    /// Pilot values measure `1 - ρ²(n)`.
    AccuracyGap,
    /// Pilot values measure `w(n)`.
    Cost,
}

impl ValueKind {
    pub fn role(self) -> Role {
        match self {
            ValueKind::AccuracyGap => Role::Accuracy,
            ValueKind::Cost => Role::Cost,
        }
    }
}

/// Measured `(n, value)` pairs from pilot runs.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSeries {
    points: Vec<(f64, f64)>,
    kind: ValueKind,
}

impl PilotSeries {
    /// Validates the series. Accuracy gaps of exactly zero are accepted here and clamped
    /// during fitting; negative values are always rejected, as are zero costs.
    pub fn new(points: Vec<(f64, f64)>, kind: ValueKind) -> Result<Self, RateError> {
        if points.len() < 3 {
            return Err(RateError::TooFewPoints(points.len()));
        }
        let mut prev = 0.0;
        for (index, &(n, value)) in points.iter().enumerate() {
            if !(n > prev) || !n.is_finite() {
                return Err(RateError::NotIncreasing { index });
            }
            prev = n;
            let ok = match kind {
                ValueKind::AccuracyGap => value >= 0.0,
                ValueKind::Cost => value > 0.0,
            };
            if !ok || !value.is_finite() {
                return Err(RateError::NonPositiveValue { index, value });
            }
        }
        Ok(Self { points, kind })
    }

    /// Samples `model` exactly at the given `n`.
    pub fn from_model(model: &RateModel, ns: &[f64]) -> Result<Self, RateError> {
        let kind = match model.role {
            Role::Accuracy => ValueKind::AccuracyGap,
            Role::Cost => ValueKind::Cost,
        };
        let points = ns
            .iter()
            .map(|&n| model.eval(n).map(|v| (n, v)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(points, kind)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    /// Reads a CSV with header `n,value`.
    pub fn read_csv<R: Read>(reader: R, kind: ValueKind) -> Result<Self, RateError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| RateError::Csv(e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "n" || &headers[1] != "value" {
            return Err(RateError::Csv(format!(
                "line 1: expected header `n,value`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut points = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| RateError::Csv(format!("line {line}: {e}")))?;
            if record.len() != 2 {
                return Err(RateError::Csv(format!(
                    "line {line}: expected 2 fields, found {}",
                    record.len()
                )));
            }
            let parse = |field: &str| {
                field
                    .parse::<f64>()
                    .map_err(|_| RateError::Csv(format!("line {line}: cannot parse `{field}` as a number")))
            };
            points.push((parse(&record[0])?, parse(&record[1])?));
        }
        Self::new(points, kind)
    }

    pub fn read_csv_path(path: &Path, kind: ValueKind) -> Result<Self, RateError> {
        let file = std::fs::File::open(path)
            .map_err(|e| RateError::Csv(format!("{}: {e}", path.display())))?;
        Self::read_csv(file, kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyChoice {
    Algebraic,
    Exponential,
    Auto,
}

/// Result of [`fit_rate`]. Goodness of fit is measured in the transformed (log) coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub model: RateModel,
    pub r_squared: f64,
    pub residual_norm: f64,
    /// `(algebraic R², exponential R²)` when both families were fitted.
    pub candidates: Option<(f64, f64)>,
    pub warnings: Vec<String>,
}

struct LineFit {
    intercept: f64,
    slope: f64,
    r_squared: f64,
    residual_norm: f64,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    LineFit {
        intercept,
        slope,
        r_squared,
        residual_norm: ss_res.sqrt(),
    }
}

fn fit_family(
    ns: &[f64],
    log_values: &[f64],
    family: Family,
    role: Role,
) -> Result<(RateModel, LineFit), RateError> {
    let xs: Vec<f64> = match family {
        Family::Algebraic => ns.iter().map(|n| n.ln()).collect(),
        Family::Exponential => ns.to_vec(),
    };
    let line = least_squares(&xs, log_values);
    let exponent = match role {
        Role::Accuracy => -line.slope,
        Role::Cost => line.slope,
    };
    if !(exponent > 0.0) {
        return Err(RateError::WrongDirection {
            family,
            role,
            exponent,
        });
    }
    let model = RateModel::new(family, role, line.intercept.exp(), exponent);
    Ok((model, line))
}

/// Ordinary least squares in log coordinates: `log v` against `log n` (algebraic) or
/// against `n` (exponential). `Auto` fits both and keeps the larger R², preferring
/// algebraic on ties.
pub fn fit_rate(series: &PilotSeries, family: FamilyChoice) -> Result<FitReport, RateError> {
    let role = series.kind.role();
    let mut warnings = Vec::new();
    let ns: Vec<f64> = series.points.iter().map(|p| p.0).collect();
    let log_values: Vec<f64> = series
        .points
        .iter()
        .map(|&(n, v)| {
            if v == 0.0 {
                let msg = format!("accuracy gap at n = {n} is exactly 0; clamped to {ZERO_GAP_CLAMP:e}");
                log::warn!("{msg}");
                warnings.push(msg);
                ZERO_GAP_CLAMP.ln()
            } else {
                v.ln()
            }
        })
        .collect();

    let report = |(model, line): (RateModel, LineFit), candidates, warnings| FitReport {
        model,
        r_squared: line.r_squared,
        residual_norm: line.residual_norm,
        candidates,
        warnings,
    };

    match family {
        FamilyChoice::Algebraic => Ok(report(
            fit_family(&ns, &log_values, Family::Algebraic, role)?,
            None,
            warnings,
        )),
        FamilyChoice::Exponential => Ok(report(
            fit_family(&ns, &log_values, Family::Exponential, role)?,
            None,
            warnings,
        )),
        FamilyChoice::Auto => {
            let alg = fit_family(&ns, &log_values, Family::Algebraic, role);
            let exp = fit_family(&ns, &log_values, Family::Exponential, role);
            match (alg, exp) {
                (Ok(a), Ok(e)) => {
                    let scores = Some((a.1.r_squared, e.1.r_squared));
                    if e.1.r_squared > a.1.r_squared {
                        Ok(report(e, scores, warnings))
                    } else {
                        Ok(report(a, scores, warnings))
                    }
                }
                (Ok(a), Err(_)) => Ok(report(a, None, warnings)),
                (Err(_), Ok(e)) => Ok(report(e, None, warnings)),
                (Err(err), Err(_)) => Err(err),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn central_diff(f: impl Fn(f64) -> f64, n: f64, h: f64) -> f64 {
        (f(n + h) - f(n - h)) / (2.0 * h)
    }

    #[test]
    fn eval_examples() {
        let rb = RateModel::exponential_accuracy(0.6312, 0.5754);
        let v = rb.eval(18.0).unwrap();
        assert!((v - 2.0061e-5).abs() / 2.0061e-5 < 1e-3, "{v}");

        assert_eq!(RateModel::algebraic_cost(1.0, 1.0).eval(7.0).unwrap(), 7.0);

        // 0.3361 * 100^-0.8617 evaluated with 30-digit arithmetic (mpmath)
        let sg = RateModel::algebraic_accuracy(0.3361, 0.8617);
        assert_relative_eq!(sg.eval(100.0).unwrap(), 6.354_311_668_915_042e-3, max_relative = 1e-14);
    }

    #[test]
    fn domain_errors() {
        let m = RateModel::algebraic_cost(1.0, 1.0);
        assert_eq!(m.eval(0.0), Err(RateError::Domain(0.0)));
        assert_eq!(m.eval(-1.0), Err(RateError::Domain(-1.0)));
        assert!(matches!(m.deriv(-2.0, 1), Err(RateError::Domain(_))));
        assert_eq!(m.deriv(1.0, 3), Err(RateError::Order(3)));
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(RateModel::algebraic_cost(1.0, 2.0).deriv(3.0, 2).unwrap(), 2.0);

        let rb = RateModel::exponential_accuracy(0.6312, 0.5754);
        let d1 = rb.deriv(10.0, 1).unwrap();
        let fd = central_diff(|n| rb.eval(n).unwrap(), 10.0, 1e-5);
        assert_relative_eq!(d1, fd, max_relative = 1e-6);
        assert_relative_eq!(d1, -0.6312 * 0.5754 * (-5.754f64).exp(), max_relative = 1e-14);

        let dnn = RateModel::algebraic_accuracy(0.1399, 0.2180);
        let d2 = dnn.deriv(50.0, 2).unwrap();
        let fd2 = central_diff(|n| dnn.deriv(n, 1).unwrap(), 50.0, 1e-4);
        assert_relative_eq!(d2, fd2, max_relative = 1e-6);
        assert_relative_eq!(d2, 0.1399 * 0.2180 * 1.2180 * 50f64.powf(-2.2180), max_relative = 1e-12);
    }

    #[test]
    fn validate_examples() {
        assert!(RateModel::algebraic_accuracy(1.0, 0.5).validate().is_ok());
        assert_eq!(
            RateModel::algebraic_cost(-1.0, 1.0).validate(),
            Err("scale must be positive".to_string())
        );
        assert!(RateModel::exponential_cost(1.0, 0.05).validate().is_ok());
        assert!(RateModel::exponential_cost(1.0, 0.0).validate().is_err());
    }

    #[test]
    fn fit_exact_algebraic_cost() {
        let truth = RateModel::algebraic_cost(2.0, 1.5);
        let series = PilotSeries::from_model(&truth, &[10.0, 20.0, 40.0, 80.0]).unwrap();
        let fit = fit_rate(&series, FamilyChoice::Algebraic).unwrap();
        assert_relative_eq!(fit.model.scale, 2.0, max_relative = 1e-10);
        assert_relative_eq!(fit.model.exponent, 1.5, max_relative = 1e-10);
        assert!(fit.r_squared > 1.0 - 1e-12);
        assert!(fit.residual_norm < 1e-10);
    }

    #[test]
    fn fit_noisy_accuracy_recovers_exponent() {
        let truth = RateModel::algebraic_accuracy(0.7309, 0.4053);
        let ns: Vec<f64> = (1..=10).map(|i| (i * 20) as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let points = ns
                .iter()
                .map(|&n| {
                    let noise = 1.0 + 0.01 * (2.0 * rng.gen::<f64>() - 1.0) * 3f64.sqrt();
                    (n, truth.eval(n).unwrap() * noise)
                })
                .collect();
            let series = PilotSeries::new(points, ValueKind::AccuracyGap).unwrap();
            let fit = fit_rate(&series, FamilyChoice::Algebraic).unwrap();
            assert!((fit.model.exponent - 0.4053).abs() < 0.05, "{}", fit.model.exponent);
        }
    }

    #[test]
    fn auto_picks_exponential_for_exponential_decay() {
        let ns: Vec<f64> = (2..=20).map(f64::from).collect();
        let series =
            PilotSeries::from_model(&RateModel::exponential_accuracy(1.0, 0.5), &ns).unwrap();
        let fit = fit_rate(&series, FamilyChoice::Auto).unwrap();
        assert_eq!(fit.model.family, Family::Exponential);
        let (alg, exp) = fit.candidates.unwrap();
        assert!(exp > alg);
    }

    #[test]
    fn auto_keeps_algebraic_for_power_law() {
        let ns = [1.0, 2.0, 4.0];
        let series = PilotSeries::from_model(&RateModel::algebraic_cost(1.0, 1.0), &ns).unwrap();
        let fit = fit_rate(&series, FamilyChoice::Auto).unwrap();
        assert_eq!(fit.model.family, Family::Algebraic);
    }

    #[test]
    fn fit_errors() {
        assert_eq!(
            PilotSeries::new(vec![(1.0, 1.0), (2.0, 2.0)], ValueKind::Cost),
            Err(RateError::TooFewPoints(2))
        );
        assert!(matches!(
            PilotSeries::new(vec![(1.0, 1.0), (2.0, -2.0), (3.0, 1.0)], ValueKind::AccuracyGap),
            Err(RateError::NonPositiveValue { index: 1, .. })
        ));
        assert!(matches!(
            PilotSeries::new(vec![(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)], ValueKind::Cost),
            Err(RateError::NonPositiveValue { index: 1, .. })
        ));
        assert!(matches!(
            PilotSeries::new(vec![(1.0, 1.0), (1.0, 2.0), (3.0, 1.0)], ValueKind::Cost),
            Err(RateError::NotIncreasing { index: 1 })
        ));
        // decreasing cost data cannot be a cost rate
        let s = PilotSeries::new(vec![(1.0, 3.0), (2.0, 2.0), (3.0, 1.0)], ValueKind::Cost).unwrap();
        assert!(matches!(
            fit_rate(&s, FamilyChoice::Algebraic),
            Err(RateError::WrongDirection { .. })
        ));
    }

    #[test]
    fn zero_accuracy_gap_is_clamped_with_warning() {
        let s = PilotSeries::new(
            vec![(1.0, 0.1), (2.0, 0.01), (3.0, 0.001), (4.0, 0.0)],
            ValueKind::AccuracyGap,
        )
        .unwrap();
        let fit = fit_rate(&s, FamilyChoice::Exponential).unwrap();
        assert_eq!(fit.warnings.len(), 1);
        assert!(fit.model.exponent > 0.0);
    }

    #[test]
    fn csv_parsing() {
        let data = "n,value\n10,20\n20,40\n40,80\n";
        let s = PilotSeries::read_csv(data.as_bytes(), ValueKind::Cost).unwrap();
        assert_eq!(s.points().len(), 3);

        let bad = "n,value\n10,20\n20,abc\n40,80\n";
        let err = PilotSeries::read_csv(bad.as_bytes(), ValueKind::Cost).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");

        let bad_header = "x,y\n1,2\n";
        assert!(PilotSeries::read_csv(bad_header.as_bytes(), ValueKind::Cost).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = RateModel::exponential_accuracy(0.6312, 0.5754);
        let s = m.to_json();
        assert!(s.contains("\"family\":\"exponential\""));
        assert!(s.contains("\"role\":\"accuracy\""));
        assert_eq!(RateModel::from_json(&s).unwrap(), m);
        assert!(RateModel::from_json(r#"{"family":"algebraic","role":"cost","scale":-1,"exponent":1}"#).is_err());
    }

    fn any_model() -> impl Strategy<Value = RateModel> {
        (
            prop_oneof![Just(Family::Algebraic), Just(Family::Exponential)],
            prop_oneof![Just(Role::Accuracy), Just(Role::Cost)],
            1e-6f64..10.0,
            0.01f64..3.0,
        )
            .prop_map(|(f, r, c, e)| RateModel::new(f, r, c, e))
    }

    proptest! {
        #[test]
        fn sign_invariants(model in any_model(), n in 1.0f64..1e5) {
            let v = model.eval(n).unwrap();
            let d1 = model.deriv(n, 1).unwrap();
            // exponential rates under/overflow far out; only check representable values
            prop_assume!(v.is_finite() && v > 0.0 && d1.is_finite() && d1 != 0.0);
            match model.role {
                Role::Accuracy => prop_assert!(d1 < 0.0),
                Role::Cost => prop_assert!(d1 > 0.0),
            }
        }

        #[test]
        fn derivatives_match_finite_differences(model in any_model(), n in 1.0f64..1e5) {
            let model = RateModel { exponent: model.exponent.min(20.0 / n.max(1.0)).max(1e-3), ..model };
            let h = 1e-5 * n.max(1.0);
            let f = |x: f64| model.eval_unchecked(x);
            let g = |x: f64| model.deriv1_unchecked(x);
            let d1 = model.deriv(n, 1).unwrap();
            let d2 = model.deriv(n, 2).unwrap();
            prop_assume!(f(n).is_normal() && d1.is_normal() && d2.is_normal());
            prop_assert!((central_diff(f, n, h) - d1).abs() <= 1e-5 * d1.abs());
            prop_assert!((central_diff(g, n, h) - d2).abs() <= 1e-5 * d2.abs());
        }

        #[test]
        fn fit_recovers_noiseless_parameters(model in any_model()) {
            let model = RateModel { exponent: model.exponent.min(1.0), ..model };
            let family = match model.family { Family::Algebraic => FamilyChoice::Algebraic, Family::Exponential => FamilyChoice::Exponential };
            let ns = [1.0, 2.0, 3.0, 5.0, 8.0, 13.0, 21.0];
            let series = PilotSeries::from_model(&model, &ns).unwrap();
            let fit = fit_rate(&series, family).unwrap();
            prop_assert!((fit.model.scale - model.scale).abs() <= 1e-8 * model.scale);
            prop_assert!((fit.model.exponent - model.exponent).abs() <= 1e-8 * model.exponent);
        }

        #[test]
        fn second_derivative_signs(c in 1e-6f64..10.0, e in 0.01f64..3.0, n in 1.0f64..1e4) {
            prop_assert!(RateModel::algebraic_accuracy(c, e).deriv(n, 2).unwrap() > 0.0);
            let ea = RateModel::exponential_accuracy(c, e.min(0.05)).deriv(n, 2).unwrap();
            prop_assert!(ea >= 0.0);
            let cost = RateModel::algebraic_cost(c, e).deriv(n, 2).unwrap();
            if e > 1.0 { prop_assert!(cost > 0.0) } else if e < 1.0 { prop_assert!(cost < 0.0) }
        }
    }
}
