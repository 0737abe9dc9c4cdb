//! One record per verified identity or inequality, serialised as a JSON line.

use serde::Serialize;
use serde_json::value::RawValue;
use serde_json::Value;

/// Version of the JSON-lines report layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    /// Passes when `|lhs - rhs| <= tol`.
    Equality,
    /// Passes when `lhs >= rhs - tol`.
    Inequality,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub identity: String,
    /// Plain statement of what is being checked.
    pub anchor: String,
    pub kind: CheckKind,
    pub lhs: f64,
    pub rhs: f64,
    pub tol: f64,
    pub pass: bool,
    pub witness: Option<Value>,
}

impl VerificationReport {
    pub fn equality(identity: impl Into<String>, anchor: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        let pass = (lhs - rhs).abs() <= tol;
        Self {
            identity: identity.into(),
            anchor: anchor.into(),
            kind: CheckKind::Equality,
            lhs,
            rhs,
            tol,
            pass,
            witness: None,
        }
    }

    pub fn inequality(identity: impl Into<String>, anchor: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        let pass = lhs >= rhs - tol;
        Self {
            identity: identity.into(),
            anchor: anchor.into(),
            kind: CheckKind::Inequality,
            lhs,
            rhs,
            tol,
            pass,
            witness: None,
        }
    }

    /// A check that could not be evaluated at all.
    pub fn failure(identity: impl Into<String>, anchor: impl Into<String>, reason: impl std::fmt::Display) -> Self {
        let mut r = Self::equality(identity, anchor, f64::NAN, f64::NAN, 0.0);
        r.pass = false;
        r.witness = Some(serde_json::json!({ "error": reason.to_string() }));
        r
    }

    pub fn with_witness(mut self, witness: Value) -> Self {
        self.witness = Some(witness);
        self
    }

    /// Compact JSON with every number printed to 17 significant digits.
    pub fn to_json_line(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            v: u32,
            identity: &'a str,
            anchor: &'a str,
            kind: CheckKind,
            lhs: Box<RawValue>,
            rhs: Box<RawValue>,
            tol: Box<RawValue>,
            pass: bool,
            #[serde(skip_serializing_if = "Option::is_none")]
            witness: Option<&'a Value>,
        }
        let line = Line {
            v: REPORT_SCHEMA_VERSION,
            identity: &self.identity,
            anchor: &self.anchor,
            kind: self.kind,
            lhs: raw_f64(self.lhs),
            rhs: raw_f64(self.rhs),
            tol: raw_f64(self.tol),
            pass: self.pass,
            witness: self.witness.as_ref(),
        };
        serde_json::to_string(&line).expect("report serialisation")
    }
}

/// `x` with 17 significant digits, or `null` when not finite.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

pub fn raw_f64(x: f64) -> Box<RawValue> {
    RawValue::from_string(format_f64(x)).expect("valid JSON number")
}

/// JSON schema for one report line.
pub fn report_schema() -> Value {
    serde_json::json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "VerificationReport",
        "version": REPORT_SCHEMA_VERSION,
        "type": "object",
        "required": ["v", "identity", "anchor", "kind", "lhs", "rhs", "tol", "pass"],
        "properties": {
            "v": { "const": REPORT_SCHEMA_VERSION },
            "identity": { "type": "string" },
            "anchor": { "type": "string" },
            "kind": { "enum": ["equality", "inequality"] },
            "lhs": { "type": ["number", "null"] },
            "rhs": { "type": ["number", "null"] },
            "tol": { "type": ["number", "null"] },
            "pass": { "type": "boolean" },
            "witness": {}
        }
    })
}
