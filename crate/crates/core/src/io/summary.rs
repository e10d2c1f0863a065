use std::io::Write;

use serde::{Deserialize, Serialize};

use super::parse_err;
use crate::error::Result;
use crate::experiment::{SimulateSummary, SurveyAggregate};
use crate::lyapunov::Verdict;
use crate::model::SystemParams;

pub const SUMMARY_SCHEMA: &str = "hardball-summary/1";

/// The single summary record of a run. Only the section of the command that
/// produced it is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub schema: String,
    pub command: String,
    pub seed: u64,
    pub params: SystemParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sufficiency: Option<SurveyAggregate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovSummary {
    pub verdict: Verdict,
    pub tol_zero: f64,
    pub lambda_max: f64,
    pub collisions: usize,
}

impl Summary {
    pub fn new(command: &str, seed: u64, params: SystemParams) -> Self {
        Self {
            schema: SUMMARY_SCHEMA.to_string(),
            command: command.to_string(),
            seed,
            params,
            simulate: None,
            sufficiency: None,
            lyapunov: None,
        }
    }
}

pub fn write_summary<W: Write>(mut w: W, summary: &Summary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary).expect("summary serializes");
    writeln!(w, "{text}")?;
    Ok(())
}

pub fn parse_summary(text: &str) -> Result<Summary> {
    let s: Summary = serde_json::from_str(text).map_err(|e| parse_err(e.line(), e.to_string()))?;
    if s.schema != SUMMARY_SCHEMA {
        return Err(parse_err(1, format!("unknown schema `{}`", s.schema)));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut s = Summary::new("simulate", 4, SystemParams::equal_masses(2, 2, 1.0, 0.15));
        s.simulate = Some(SimulateSummary {
            events: 3,
            final_time: 0.1 + 0.2,
            energy: 0.5,
            energy_drift: 1e-17,
            momentum_norm: 0.0,
            max_contact_residue: 3e-13,
        });
        let mut buf = Vec::new();
        write_summary(&mut buf, &s).unwrap();
        assert_eq!(parse_summary(std::str::from_utf8(&buf).unwrap()).unwrap(), s);
        let other = String::from_utf8(buf).unwrap().replace(SUMMARY_SCHEMA, "hardball-summary/0");
        assert!(parse_summary(&other).is_err());
    }
}
