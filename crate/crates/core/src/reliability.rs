//! Node availability and the production round-up of analytical GPU counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const A100_AVAIL_RSC1_FAST: f64 = 0.9989;
pub const A100_AVAIL_RSC1_SLOW: f64 = 0.9871;
pub const H100_AVAIL_5PCT: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AvailabilityModel {
    pub failures_per_node_day: f64,
    pub mttr_days: f64,
    pub availability: f64,
}

impl AvailabilityModel {
    pub fn new(failures_per_node_day: f64, mttr_days: f64) -> Result<Self> {
        Ok(Self {
            failures_per_node_day,
            mttr_days,
            availability: availability(failures_per_node_day, mttr_days)?,
        })
    }
}

/// `A = 1 / (1 + r_f * MTTR)`.
pub fn availability(failures_per_node_day: f64, mttr_days: f64) -> Result<f64> {
    if !(failures_per_node_day >= 0.0 && mttr_days >= 0.0)
        || !failures_per_node_day.is_finite()
        || !mttr_days.is_finite()
    {
        return Err(Error::InvalidArgument(format!(
            "failure rate and MTTR must be finite and >= 0, got {failures_per_node_day}, {mttr_days}"
        )));
    }
    Ok(1.0 / (1.0 + failures_per_node_day * mttr_days))
}

/// `ceil(n / A)`.
pub fn production_count(n_analytical: u32, availability: f64) -> Result<u32> {
    if !(availability > 0.0 && availability <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "availability must be in (0, 1], got {availability}"
        )));
    }
    // guard against n / A landing a hair above an integer through rounding
    let raw = n_analytical as f64 / availability;
    let r = raw.round();
    let n = if (raw - r).abs() < 1e-9 { r } else { raw.ceil() };
    Ok(n as u32)
}

pub fn builtin_availability_constants() -> [(&'static str, f64); 3] {
    [
        ("A100_AVAIL_RSC1_FAST", A100_AVAIL_RSC1_FAST),
        ("A100_AVAIL_RSC1_SLOW", A100_AVAIL_RSC1_SLOW),
        ("H100_AVAIL_5PCT", H100_AVAIL_5PCT),
    ]
}

pub fn lookup_constant(name: &str) -> Result<f64> {
    builtin_availability_constants()
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::UnknownConstant(name.to_string()))
}

/// Scenario-file form: a named constant or a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeAvail {
    Value(f64),
    Named(String),
}

impl NodeAvail {
    pub fn resolve(&self) -> Result<f64> {
        let a = match self {
            Self::Value(v) => *v,
            Self::Named(n) => lookup_constant(n)?,
        };
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "node availability must be in (0, 1], got {a}"
            )));
        }
        Ok(a)
    }
}
