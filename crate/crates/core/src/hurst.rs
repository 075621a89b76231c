use crate::error::{Error, Result};

/// Roughness regime of a fractional Brownian motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `H < 1/2`: negatively correlated increments.
    Rough,
    /// `H = 1/2`: standard Brownian motion.
    Standard,
    /// `H > 1/2`: positively correlated increments.
    Smooth,
}

/// A validated Hurst exponent `H` in the open interval `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HurstParam {
    h: f64,
    regime: Regime,
}

impl HurstParam {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::InvalidHurst(h));
        }
        let regime = if h == 0.5 {
            Regime::Standard
        } else if h < 0.5 {
            Regime::Rough
        } else {
            Regime::Smooth
        };
        Ok(Self { h, regime })
    }

    /// Brownian motion, `H = 1/2`.
    pub fn brownian() -> Self {
        Self {
            h: 0.5,
            regime: Regime::Standard,
        }
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.h
    }

    #[inline]
    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// `H - 1/2`, the exponent shift that appears throughout the kernel.
    #[inline]
    pub fn offset(&self) -> f64 {
        self.h - 0.5
    }
}

impl TryFrom<f64> for HurstParam {
    type Error = Error;

    fn try_from(h: f64) -> Result<Self> {
        Self::new(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_boundary_and_nan() {
        for h in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(HurstParam::new(h).is_err(), "{h}");
        }
    }

    #[test]
    fn regime_tracks_value() {
        assert_eq!(HurstParam::new(0.3).unwrap().regime(), Regime::Rough);
        assert_eq!(HurstParam::new(0.5).unwrap().regime(), Regime::Standard);
        assert_eq!(HurstParam::new(0.7).unwrap().regime(), Regime::Smooth);
        assert_eq!(HurstParam::brownian(), HurstParam::new(0.5).unwrap());
    }
}
