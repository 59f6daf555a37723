//! Machine-readable run reports.

use crate::system::{Mode, ValidationReport};
use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA: &str = "rgds-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub method: String,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64, method: impl Into<String>) -> Self {
        Self {
            value,
            stderr,
            method: method.into(),
        }
    }

    pub fn exact(value: f64, method: impl Into<String>) -> Self {
        Self::new(value, 0.0, method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleEstimate {
    pub eps: f64,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorObject {
    pub kind: String,
    pub message: String,
}

/// Parameters the run actually used, after defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eps_schedule: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vertex: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionReport {
    pub schema: String,
    pub command: String,
    pub spec_path: Option<String>,
    pub seed: u64,
    pub mode: Mode,
    pub parameters: Parameters,
    pub timestamp: Option<String>,
    /// 1-variable almost-sure dimension (Hausdorff, packing and box).
    pub s_b: Option<Estimate>,
    /// Lower-bound diagnostics, one per scale.
    #[serde(default)]
    pub s_h_eps: Vec<ScaleEstimate>,
    /// 1-variable dimension from the separated-images formulas.
    pub s_o: Option<Estimate>,
    /// Monte Carlo cross-check of `s_o`.
    pub s_o_lyapunov: Option<Estimate>,
    /// ∞-variable dimension.
    pub s_h: Option<Estimate>,
    pub assouad_lower: Option<Estimate>,
    pub assouad_value: Option<Estimate>,
    pub validation: Option<ValidationReport>,
    /// Command-specific output.
    pub details: Option<serde_json::Value>,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub error: Option<ErrorObject>,
}

impl DimensionReport {
    pub fn new(command: &str, spec_path: Option<String>, seed: u64, mode: Mode) -> Self {
        Self {
            schema: REPORT_SCHEMA.into(),
            command: command.into(),
            spec_path,
            seed,
            mode,
            parameters: Parameters::default(),
            timestamp: None,
            s_b: None,
            s_h_eps: Vec::new(),
            s_o: None,
            s_o_lyapunov: None,
            s_h: None,
            assouad_lower: None,
            assouad_value: None,
            validation: None,
            details: None,
            warnings: Vec::new(),
            error: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Parses and checks the schema tag and the invariants.
    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        let r: Self = serde_json::from_str(text).map_err(|e| ReportError::Parse(e.to_string()))?;
        if r.schema != REPORT_SCHEMA {
            return Err(ReportError::Schema(r.schema));
        }
        let bad = r.check_invariants();
        if !bad.is_empty() {
            return Err(ReportError::Invariant(bad.join("; ")));
        }
        Ok(r)
    }

    /// Cross-field consistency checks. Returns the violated ones.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(b) = &self.s_b {
            for h in &self.s_h_eps {
                if h.value > b.value + 2.0 * (b.stderr + h.stderr) + 1e-9 {
                    out.push(format!(
                        "s_H at eps={} is {} > s_B {} + 2 stderr",
                        h.eps, h.value, b.value
                    ));
                }
            }
            if let Some(a) = &self.assouad_lower {
                if b.value > a.value + 2.0 * (a.stderr + b.stderr) + 0.01 {
                    out.push(format!(
                        "s_B {} exceeds the Assouad lower bound {}",
                        b.value, a.value
                    ));
                }
            }
        }
        if let (Some(o), Some(h)) = (&self.s_o, &self.s_h) {
            if o.value > h.value + 2.0 * (o.stderr + h.stderr) + 1e-9 {
                out.push(format!(
                    "1-variable s_O {} exceeds ∞-variable s_h {}",
                    o.value, h.value
                ));
            }
        }
        for (name, e) in [
            ("s_b", &self.s_b),
            ("s_o", &self.s_o),
            ("s_h", &self.s_h),
            ("assouad_lower", &self.assouad_lower),
            ("assouad_value", &self.assouad_value),
        ] {
            if let Some(e) = e {
                if !e.value.is_finite() || e.stderr < 0.0 {
                    out.push(format!("{name} is not a finite estimate"));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("report does not parse: {0}")]
    Parse(String),
    #[error("unknown report schema {0}")]
    Schema(String),
    #[error("report invariants violated: {0}")]
    Invariant(String),
}

/// Seconds since the Unix epoch, as `unix:<secs>`.
pub fn timestamp_now() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    format!("unix:{secs}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DimensionReport {
        let mut r = DimensionReport::new("dim1var", Some("a.json".into()), 7, Mode::OneVar);
        r.parameters.k = Some(2000);
        r.s_b = Some(Estimate::new(0.7211, 0.001, "increments"));
        r.s_h_eps = vec![ScaleEstimate {
            eps: 0.25,
            value: 0.7205,
            stderr: 0.0002,
        }];
        r.s_o = Some(Estimate::exact(0.721057, "closed form"));
        r.s_h = Some(Estimate::exact(0.724952, "perron"));
        r.assouad_lower = Some(Estimate::exact(0.7925, "jsr"));
        r
    }

    #[test]
    fn round_trip() {
        let r = sample();
        let back = DimensionReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn invariants_catch_inconsistency() {
        assert!(sample().check_invariants().is_empty());
        let mut r = sample();
        r.s_o = Some(Estimate::exact(0.8, "x"));
        assert_eq!(r.check_invariants().len(), 1);
        let mut r = sample();
        r.assouad_lower = Some(Estimate::exact(0.5, "x"));
        assert_eq!(r.check_invariants().len(), 1);
        let mut r = sample();
        r.s_h_eps[0].value = 0.9;
        assert!(matches!(
            DimensionReport::from_json(&r.to_json()),
            Err(ReportError::Invariant(_))
        ));
    }

    #[test]
    fn rejects_unknown_fields_and_schema() {
        let mut v: serde_json::Value = serde_json::from_str(&sample().to_json()).unwrap();
        v["schema"] = "other".into();
        assert!(matches!(
            DimensionReport::from_json(&v.to_string()),
            Err(ReportError::Schema(_))
        ));
        v["schema"] = REPORT_SCHEMA.into();
        v["surprise"] = 1.into();
        assert!(matches!(
            DimensionReport::from_json(&v.to_string()),
            Err(ReportError::Parse(_))
        ));
    }
}
