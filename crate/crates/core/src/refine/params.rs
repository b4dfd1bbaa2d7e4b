use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which backbone channels receive the structure-aware gain map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelScope {
    /// Every channel is multiplied by the gain map.
    #[default]
    All,
    /// Only channels `0..C/2`, as in FreeU's reference code.
    FirstHalf,
}

/// The five inference-time gains plus the degenerate-range guard.
///
/// `s1`/`s2` scale skip-connection high frequencies in decoder blocks 0 and 1,
/// `b1`/`b2` scale backbone high frequencies in the same blocks, and `m` is the
/// shared backbone structure gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineParams {
    pub s1: f64,
    pub s2: f64,
    pub b1: f64,
    pub b2: f64,
    pub m: f64,
    pub eps: f64,
    pub scope: ChannelScope,
}

pub const DEFAULT_EPS: f64 = 1e-8;

impl Default for RefineParams {
    fn default() -> Self {
        Self::identity()
    }
}

impl RefineParams {
    pub fn new(s1: f64, s2: f64, b1: f64, b2: f64, m: f64) -> Result<Self> {
        let p = Self {
            s1,
            s2,
            b1,
            b2,
            m,
            eps: DEFAULT_EPS,
            scope: ChannelScope::All,
        };
        p.validate()?;
        Ok(p)
    }

    pub const fn identity() -> Self {
        Self {
            s1: 1.0,
            s2: 1.0,
            b1: 1.0,
            b2: 1.0,
            m: 1.0,
            eps: DEFAULT_EPS,
            scope: ChannelScope::All,
        }
    }

    /// Tango row: s1=1.2 s2=1.2 b1=0.8 b2=0.1 m=1.4.
    pub const fn tango() -> Self {
        Self::preset(1.2, 1.2, 0.8, 0.1, 1.4)
    }

    /// MusTango row: s1=1.4 s2=1.2 b1=0.8 b2=0.6 m=1.1.
    pub const fn mustango() -> Self {
        Self::preset(1.4, 1.2, 0.8, 0.6, 1.1)
    }

    /// Tango2 row: s1=1.4 s2=1.2 b1=0.5 b2=0.1 m=2.5.
    pub const fn tango2() -> Self {
        Self::preset(1.4, 1.2, 0.5, 0.1, 2.5)
    }

    const fn preset(s1: f64, s2: f64, b1: f64, b2: f64, m: f64) -> Self {
        Self {
            s1,
            s2,
            b1,
            b2,
            m,
            eps: DEFAULT_EPS,
            scope: ChannelScope::All,
        }
    }

    /// Looks up a named preset: `identity`, `tango`, `mustango` or `tango2`.
    pub fn from_preset(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(Self::identity()),
            "tango" => Ok(Self::tango()),
            "mustango" => Ok(Self::mustango()),
            "tango2" => Ok(Self::tango2()),
            other => Err(Error::InvalidParam(format!("unknown preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("s1", self.s1),
            ("s2", self.s2),
            ("b1", self.b1),
            ("b2", self.b2),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParam(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if !(self.m.is_finite() && self.m >= 1.0) {
            return Err(Error::InvalidParam(format!(
                "m must be finite and >= 1, got {}",
                self.m
            )));
        }
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "eps must be finite and >= 0, got {}",
                self.eps
            )));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.s1 == 1.0 && self.s2 == 1.0 && self.b1 == 1.0 && self.b2 == 1.0 && self.m == 1.0
    }

    /// Gains `(s, b)` for a decoder block, or `None` past the hooked blocks.
    pub fn block_gains(&self, block_index: usize) -> Option<(f64, f64)> {
        match block_index {
            0 => Some((self.s1, self.b1)),
            1 => Some((self.s2, self.b2)),
            _ => None,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.s1, self.s2, self.b1, self.b2, self.m]
    }
}

impl fmt::Display for RefineParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "s1={} s2={} b1={} b2={} m={}",
            self.s1, self.s2, self.b1, self.b2, self.m
        )
    }
}

/// Parses the flat `s1=… s2=… b1=… b2=… m=…` form. Pairs may be separated by
/// whitespace, commas or newlines; missing keys default to the identity value.
/// `eps=` and `scope=all|half` are also accepted.
impl FromStr for RefineParams {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = Self::identity();
        for token in s
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
        {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::InvalidParam(format!("expected key=value, got {token:?}")))?;
            if key == "scope" {
                p.scope = match value {
                    "all" => ChannelScope::All,
                    "half" => ChannelScope::FirstHalf,
                    _ => return Err(Error::InvalidParam(format!("unknown scope {value:?}"))),
                };
                continue;
            }
            let v: f64 = value
                .parse()
                .map_err(|_| Error::InvalidParam(format!("{key}: not a number: {value:?}")))?;
            match key {
                "s1" => p.s1 = v,
                "s2" => p.s2 = v,
                "b1" => p.b1 = v,
                "b2" => p.b2 = v,
                "m" => p.m = v,
                "eps" => p.eps = v,
                _ => return Err(Error::InvalidParam(format!("unknown key {key:?}"))),
            }
        }
        p.validate()?;
        Ok(p)
    }
}
