//! Theoretical bandwidth, threshold and penalty rates for user-supplied constants.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateInputs {
    pub n: usize,
    pub p: usize,
    /// Moment order, `q > 2`.
    pub q: f64,
    /// Decay exponent of the dependence-adjusted norm, `A > 0`.
    pub a: f64,
    /// Aggregated dependence-adjusted norm `M_{X,q}`.
    pub m_xq: f64,
    /// Maximal dependence-adjusted norm `N_X`.
    pub n_x: f64,
    /// L1 bound on the precision matrices.
    pub kappa_p: f64,
    /// Lipschitz constant of the covariance path.
    pub l: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for RateInputs {
    fn default() -> Self {
        Self {
            n: 1000,
            p: 50,
            q: 4.0,
            a: 1.0,
            m_xq: 1.0,
            n_x: 1.0,
            kappa_p: 1.0,
            l: 1.0,
            c0: 1.0,
            c1: 1.0,
            c2: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateTarget {
    HDiamond,
    BSharp,
    BStar,
    NuTheory,
    USharp,
    UStar,
    LambdaSharp,
    LambdaStar,
}

impl RateTarget {
    pub const ALL: [RateTarget; 8] = [
        RateTarget::HDiamond,
        RateTarget::BSharp,
        RateTarget::BStar,
        RateTarget::NuTheory,
        RateTarget::USharp,
        RateTarget::UStar,
        RateTarget::LambdaSharp,
        RateTarget::LambdaStar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RateTarget::HDiamond => "h_diamond",
            RateTarget::BSharp => "b_sharp",
            RateTarget::BStar => "b_star",
            RateTarget::NuTheory => "nu_theory",
            RateTarget::USharp => "u_sharp",
            RateTarget::UStar => "u_star",
            RateTarget::LambdaSharp => "lambda_sharp",
            RateTarget::LambdaStar => "lambda_star",
        }
    }
}

impl FromStr for RateTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown rate target {s:?}")))
    }
}

impl RateInputs {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("m_xq", self.m_xq),
            ("n_x", self.n_x),
            ("kappa_p", self.kappa_p),
        ];
        if !(self.q > 2.0) {
            return Err(Error::InvalidArgument(format!(
                "q must exceed 2, got {}",
                self.q
            )));
        }
        if !(self.a > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "A must be positive, got {}",
                self.a
            )));
        }
        if self.n < 2 || self.p < 2 {
            return Err(Error::InvalidArgument("n and p must be at least 2".into()));
        }
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.l >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "L must be nonnegative, got {}",
                self.l
            )));
        }
        Ok(())
    }

    /// `n`, `n (log n)^{1 + 2q}` or `n^{q/2 - A q}` depending on the dependence regime.
    pub fn varpi(&self, n: f64) -> f64 {
        let boundary = 0.5 - 1.0 / self.q;
        if (self.a - boundary).abs() <= 1e-12 {
            n * n.ln().powf(1.0 + 2.0 * self.q)
        } else if self.a > boundary {
            n
        } else {
            n.powf(self.q / 2.0 - self.a * self.q)
        }
    }

    /// `J_{q,A}(n, p) = M_{X,q} (p varpi(n))^{1/q}`.
    pub fn j(&self) -> f64 {
        self.m_xq * (self.p as f64 * self.varpi(self.n as f64)).powf(1.0 / self.q)
    }

    fn bandwidth(&self, root: f64) -> f64 {
        let n = self.n as f64;
        let logp = (self.p as f64).ln();
        self.c1 * (self.j() / n).powf(1.0 / root)
            + self.c2 * self.n_x.powf(1.0 / root) * n.powf(-0.5 / root) * logp.powf(0.5 / root)
    }

    pub fn b_sharp(&self) -> f64 {
        self.bandwidth(3.0)
    }

    pub fn b_star(&self) -> f64 {
        self.bandwidth(2.0)
    }
}

pub fn rate_calculator(inputs: &RateInputs, target: RateTarget) -> Result<f64> {
    inputs.validate()?;
    let k = inputs.kappa_p;
    Ok(match target {
        RateTarget::HDiamond | RateTarget::BSharp => inputs.b_sharp(),
        RateTarget::BStar => inputs.b_star(),
        RateTarget::NuTheory => (1.0 + inputs.l) * inputs.b_sharp().powi(2),
        RateTarget::USharp => inputs.c0 * k * k * inputs.b_sharp().powi(2),
        RateTarget::UStar => inputs.c0 * k * k * inputs.b_star(),
        RateTarget::LambdaSharp => inputs.c1 * k * inputs.b_sharp().powi(2),
        RateTarget::LambdaStar => inputs.c1 * k * inputs.b_star(),
    })
}
