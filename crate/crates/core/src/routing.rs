//! Request routers: length threshold, compress-and-route, random, and model tag.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::LengthSample;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Request {
    pub id: u64,
    pub arrival_time: f64,
    pub lengths: LengthSample,
    pub model_tag: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RouteDecision {
    pub pool_index: usize,
    /// Lengths after compression; equal to the request's lengths otherwise.
    pub effective: LengthSample,
}

pub const DEFAULT_GAMMA: f64 = 2.0;

/// Short pool iff the total budget is at most `b_short`.
pub fn route_length(req: &Request, b_short: u64) -> RouteDecision {
    let pool_index = usize::from(req.lengths.total() > b_short);
    RouteDecision {
        pool_index,
        effective: req.lengths,
    }
}

/// Compresses requests in the band `(b_short, gamma * b_short]` down to
/// `b_short` tokens and sends them short. The prompt shrinks first; output
/// tokens are cut only once the prompt is down to one token.
pub fn route_compress(req: &Request, b_short: u64, gamma: f64) -> Result<RouteDecision> {
    if !(gamma > 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must exceed 1, got {gamma}")));
    }
    if b_short < 2 {
        return Err(Error::InvalidArgument("b_short must be >= 2".into()));
    }
    let total = req.lengths.total();
    if total <= b_short {
        return Ok(route_length(req, b_short));
    }
    if total as f64 > gamma * b_short as f64 {
        return Ok(RouteDecision {
            pool_index: 1,
            effective: req.lengths,
        });
    }
    Ok(RouteDecision {
        pool_index: 0,
        effective: compress(req.lengths, b_short),
    })
}

fn compress(lengths: LengthSample, target: u64) -> LengthSample {
    let excess = lengths.total().saturating_sub(target);
    let l_in = lengths.l_in.saturating_sub(excess).max(1);
    let remaining = excess - (lengths.l_in - l_in);
    let l_out = lengths.l_out.saturating_sub(remaining).max(1);
    LengthSample { l_in, l_out }
}

/// Draws a pool with probability proportional to `weights`.
pub fn route_random<R: Rng + ?Sized>(
    req: &Request,
    weights: &[f64],
    rng: &mut R,
) -> Result<RouteDecision> {
    let pool_index = weighted_pick(weights, rng)?;
    Ok(RouteDecision {
        pool_index,
        effective: req.lengths,
    })
}

fn validate_weights(weights: &[f64]) -> Result<f64> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Routing("weights must be finite and >= 0".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Routing("all routing weights are zero".into()));
    }
    Ok(total)
}

fn weighted_pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    let total = validate_weights(weights)?;
    if weights.len() == 1 {
        return Ok(0);
    }
    let mut x = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            if x < *w {
                return Ok(i);
            }
            x -= w;
            last = i;
        }
    }
    Ok(last)
}

pub fn route_model(req: &Request, tag_to_pool: &BTreeMap<String, usize>) -> Result<RouteDecision> {
    let tag = req
        .model_tag
        .as_deref()
        .ok_or_else(|| Error::Routing(format!("request {} has no model tag", req.id)))?;
    let pool_index = *tag_to_pool
        .get(tag)
        .ok_or_else(|| Error::Routing(format!("model tag {tag:?} is not mapped to a pool")))?;
    Ok(RouteDecision {
        pool_index,
        effective: req.lengths,
    })
}

/// Router selection as it appears in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RouterConfig {
    /// `b_short` defaults to the first pool's context bound.
    Length {
        #[serde(default)]
        b_short: Option<u64>,
    },
    Compress {
        #[serde(default)]
        b_short: Option<u64>,
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    /// Capacity-weighted unless `uniform` or explicit `weights` are given.
    Random {
        #[serde(default)]
        weights: Option<Vec<f64>>,
        #[serde(default)]
        uniform: bool,
    },
    Model { tags: BTreeMap<String, usize> },
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

impl Default for RouterConfig {
    fn default() -> Self {
        Self::Length { b_short: None }
    }
}

impl RouterConfig {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Length { .. } => "length",
            Self::Compress { .. } => "compress",
            Self::Random { .. } => "random",
            Self::Model { .. } => "model",
        }
    }
}

/// What a router needs to know about each pool.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolView {
    pub context_bound: u64,
    pub slots: u64,
}

/// A router bound to a concrete fleet.
#[derive(Debug, Clone)]
pub enum Router {
    Single,
    Length { b_short: u64 },
    Compress { b_short: u64, gamma: f64 },
    Random { weights: Vec<f64>, contexts: Vec<u64> },
    Model { tags: BTreeMap<String, usize> },
}

impl Router {
    pub fn bind(config: &RouterConfig, pools: &[PoolView]) -> Result<Self> {
        if pools.is_empty() {
            return Err(Error::InvalidFleet("fleet has no pools".into()));
        }
        let default_b = pools[0].context_bound;
        let two_pools = |kind: &str| {
            if pools.len() > 2 {
                Err(Error::InvalidFleet(format!(
                    "{kind} routing needs one or two pools, got {}",
                    pools.len()
                )))
            } else {
                Ok(())
            }
        };
        match config {
            RouterConfig::Length { b_short } => {
                two_pools("length")?;
                if pools.len() == 1 {
                    return Ok(Self::Single);
                }
                Ok(Self::Length {
                    b_short: b_short.unwrap_or(default_b),
                })
            }
            RouterConfig::Compress { b_short, gamma } => {
                two_pools("compress")?;
                if pools.len() == 1 {
                    return Ok(Self::Single);
                }
                let b_short = b_short.unwrap_or(default_b);
                let probe = Request {
                    id: 0,
                    arrival_time: 0.0,
                    lengths: LengthSample { l_in: 1, l_out: 1 },
                    model_tag: None,
                };
                route_compress(&probe, b_short, *gamma)?;
                Ok(Self::Compress {
                    b_short,
                    gamma: *gamma,
                })
            }
            RouterConfig::Random { weights, uniform } => {
                let weights = match (weights, uniform) {
                    (Some(w), _) => {
                        if w.len() != pools.len() {
                            return Err(Error::InvalidFleet(format!(
                                "{} routing weights for {} pools",
                                w.len(),
                                pools.len()
                            )));
                        }
                        w.clone()
                    }
                    (None, true) => vec![1.0; pools.len()],
                    (None, false) => pools.iter().map(|p| p.slots as f64).collect(),
                };
                validate_weights(&weights)?;
                Ok(Self::Random {
                    weights,
                    contexts: pools.iter().map(|p| p.context_bound).collect(),
                })
            }
            RouterConfig::Model { tags } => {
                if let Some((tag, &i)) = tags.iter().find(|(_, &i)| i >= pools.len()) {
                    return Err(Error::InvalidFleet(format!(
                        "model tag {tag:?} maps to pool {i}, fleet has {}",
                        pools.len()
                    )));
                }
                Ok(Self::Model { tags: tags.clone() })
            }
        }
    }

    /// Routes one request. The random router only draws among pools whose
    /// context bound admits the request, falling back to all pools when none
    /// does.
    pub fn route<R: Rng + ?Sized>(&self, req: &Request, rng: &mut R) -> Result<RouteDecision> {
        match self {
            Self::Single => Ok(RouteDecision {
                pool_index: 0,
                effective: req.lengths,
            }),
            Self::Length { b_short } => Ok(route_length(req, *b_short)),
            Self::Compress { b_short, gamma } => route_compress(req, *b_short, *gamma),
            Self::Random { weights, contexts } => {
                let total = req.lengths.total();
                let eligible: Vec<f64> = weights
                    .iter()
                    .zip(contexts)
                    .map(|(&w, &b)| if b >= total { w } else { 0.0 })
                    .collect();
                if eligible.iter().any(|&w| w > 0.0) {
                    route_random(req, &eligible, rng)
                } else {
                    route_random(req, weights, rng)
                }
            }
            Self::Model { tags } => route_model(req, tags),
        }
    }
}
