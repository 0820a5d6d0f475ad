use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameter record shared by the classical, noisy-classical and quantum tiers.
///
/// All rates are in units of the linear pumping rate's time scale; the
/// coupling enters through `eps`, the mean-field density `q` and the
/// dissipation (revival) parameter `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    pub omega: f64,
    pub k1: f64,
    pub k2: f64,
    pub eps: f64,
    pub q: f64,
    pub gamma: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::weak_regime()
    }
}

impl SystemParams {
    /// Weak quantum regime: omega = 2, k1 = 1, k2 = 0.2, uncoupled.
    pub fn weak_regime() -> Self {
        Self { omega: 2.0, k1: 1.0, k2: 0.2, eps: 0.0, q: 0.2, gamma: 1.0 }
    }

    /// Deep quantum regime: omega = 2, k1 = 1, k2 = 3, q = 0.6, uncoupled.
    pub fn deep_regime() -> Self {
        Self { omega: 2.0, k1: 1.0, k2: 3.0, eps: 0.0, q: 0.6, gamma: 1.0 }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    /// Sets the coupling through the ratio eps / k1.
    pub fn with_eps_over_k1(mut self, ratio: f64) -> Self {
        self.eps = ratio * self.k1;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_q(mut self, q: f64) -> Self {
        self.q = q;
        self
    }

    pub fn with_k2(mut self, k2: f64) -> Self {
        self.k2 = k2;
        self
    }

    pub fn eps_over_k1(&self) -> f64 {
        self.eps / self.k1
    }

    /// k2 > k1 marks the deep quantum regime.
    pub fn is_deep_regime(&self) -> bool {
        self.k2 > self.k1
    }

    /// Checks k1 > 0, k2 > 0, eps >= 0, 0 <= q <= 1, 0 < gamma <= 1.
    pub fn validate(&self) -> Result<()> {
        let finite = [self.omega, self.k1, self.k2, self.eps, self.q, self.gamma]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("all parameters must be finite".into()));
        }
        if self.k1 <= 0.0 {
            return Err(Error::InvalidParams(format!("k1 must be > 0 (got {})", self.k1)));
        }
        if self.k2 <= 0.0 {
            return Err(Error::InvalidParams(format!("k2 must be > 0 (got {})", self.k2)));
        }
        if self.eps < 0.0 {
            return Err(Error::InvalidParams(format!("eps must be >= 0 (got {})", self.eps)));
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(Error::InvalidParams(format!("q must lie in [0, 1] (got {})", self.q)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "gamma must lie in (0, 1] (got {})",
                self.gamma
            )));
        }
        Ok(())
    }
}
