/// Panels of the composite Simpson rule behind every beta CDF.
pub const SIMPSON_PANELS: usize = 256;

const BISECTION_TOL: f64 = 1e-10;

/// Beta density with a tabulated CDF (composite Simpson over
/// [`SIMPSON_PANELS`] equal panels) and bisection inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaTable {
    pub alpha: f64,
    pub beta: f64,
    log_norm: f64,
    /// Unnormalized cumulative integral at each panel edge.
    cumulative: Vec<f64>,
}

impl BetaTable {
    pub fn new(alpha: f64, beta: f64) -> Self {
        assert!(alpha > 0.0 && beta > 0.0, "beta parameters must be positive");
        let log_norm = libm::lgamma(alpha + beta) - libm::lgamma(alpha) - libm::lgamma(beta);
        let mut table = Self {
            alpha,
            beta,
            log_norm,
            cumulative: Vec::with_capacity(SIMPSON_PANELS + 1),
        };
        let h = 1.0 / SIMPSON_PANELS as f64;
        let mut acc = 0.0;
        table.cumulative.push(0.0);
        for k in 0..SIMPSON_PANELS {
            acc += table.simpson(k as f64 * h, (k + 1) as f64 * h);
            table.cumulative.push(acc);
        }
        table
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let term = |v: f64, e: f64| {
            if e == 0.0 {
                0.0
            } else if v == 0.0 {
                f64::NEG_INFINITY
            } else {
                e * v.ln()
            }
        };
        let log = self.log_norm + term(x, self.alpha - 1.0) + term(1.0 - x, self.beta - 1.0);
        log.exp()
    }

    fn simpson(&self, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (self.pdf(a) + 4.0 * self.pdf(0.5 * (a + b)) + self.pdf(b))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let total = self.cumulative[SIMPSON_PANELS];
        let pos = x * SIMPSON_PANELS as f64;
        let k = (pos.floor() as usize).min(SIMPSON_PANELS - 1);
        let a = k as f64 / SIMPSON_PANELS as f64;
        ((self.cumulative[k] + self.simpson(a, x)) / total).clamp(0.0, 1.0)
    }

    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let total = self.cumulative[SIMPSON_PANELS];
        let target = u.clamp(0.0, 1.0) * total;
        // Locate the panel from the table, then bisect inside it.
        let k = self
            .cumulative
            .partition_point(|&c| c < target)
            .clamp(1, SIMPSON_PANELS)
            - 1;
        let (mut lo, mut hi) = (
            k as f64 / SIMPSON_PANELS as f64,
            (k + 1) as f64 / SIMPSON_PANELS as f64,
        );
        let u = u.clamp(0.0, 1.0);
        while hi - lo > BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Distribution of the deviation fraction on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Deviation {
    Uniform,
    Beta(BetaTable),
    /// Equal-width slices with the given probability masses.
    Piecewise(Vec<f64>),
}

impl Deviation {
    pub fn piecewise(masses: Vec<f64>) -> Self {
        let total: f64 = masses.iter().sum();
        Deviation::Piecewise(masses.into_iter().map(|m| m / total).collect())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Deviation::Uniform => {
                if (0.0..=1.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            Deviation::Beta(b) => b.pdf(x),
            Deviation::Piecewise(m) => {
                if !(0.0..=1.0).contains(&x) {
                    return 0.0;
                }
                let n = m.len();
                let i = ((x * n as f64) as usize).min(n - 1);
                m[i] * n as f64
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            Deviation::Uniform => x,
            Deviation::Beta(b) => b.cdf(x),
            Deviation::Piecewise(m) => {
                let n = m.len();
                let pos = x * n as f64;
                let i = (pos.floor() as usize).min(n - 1);
                m[..i].iter().sum::<f64>() + m[i] * (pos - i as f64)
            }
        }
    }

    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match self {
            Deviation::Uniform => u,
            Deviation::Beta(b) => b.inverse_cdf(u),
            Deviation::Piecewise(m) => {
                let n = m.len();
                let mut acc = 0.0;
                for (i, &mass) in m.iter().enumerate() {
                    if u <= acc + mass || i == n - 1 {
                        let frac = if mass > 0.0 { (u - acc) / mass } else { 0.0 };
                        return ((i as f64 + frac.clamp(0.0, 1.0)) / n as f64).min(1.0);
                    }
                    acc += mass;
                }
                1.0
            }
        }
    }
}
