//! Idealized cost model for a fragment (KEM) calculation split into `m`
//! equally sized single kernels of `μ` basis functions each, with a method
//! whose cost grows as `M^α` in the number of basis functions `M = mμ`.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostQuery {
    pub m: u64,
    pub mu: u64,
    pub alpha: f64,
}

impl CostQuery {
    pub fn new(m: u64, mu: u64, alpha: f64) -> Result<Self> {
        check_domain(m, alpha)?;
        if mu == 0 {
            return Err(Error::invalid("mu must be positive"));
        }
        Ok(Self { m, mu, alpha })
    }

    pub fn full_basis(&self) -> u64 {
        self.m * self.mu
    }
}

fn check_domain(m: u64, alpha: f64) -> Result<()> {
    if m < 2 {
        return Err(Error::invalid(format!("m must be at least 2, got {m}")));
    }
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be >= 1, got {alpha}")));
    }
    Ok(())
}

/// `t_rel = (2^{α−1}(m − 1) + 1) / m^{α−1}`; independent of μ.
pub fn relative_time(m: u64, alpha: f64) -> Result<f64> {
    check_domain(m, alpha)?;
    let m = m as f64;
    Ok((2f64.powf(alpha - 1.0) * (m - 1.0) + 1.0) / m.powf(alpha - 1.0))
}

/// Ratio of the fragment cost to the direct cost, `(mμ^α + ((m² − m)/2)(2μ)^α) / M^α`.
pub fn relative_time_general(q: &CostQuery) -> Result<f64> {
    check_domain(q.m, q.alpha)?;
    Ok(kem_absolute_cost(q)? / absolute_cost(q.full_basis(), q.alpha)?)
}

/// Direct cost `M^α`.
pub fn absolute_cost(full_basis: u64, alpha: f64) -> Result<f64> {
    if full_basis == 0 {
        return Err(Error::invalid("basis size must be positive"));
    }
    Ok((full_basis as f64).powf(alpha))
}

/// `mμ^α + ((m² − m)/2)(2μ)^α`.
pub fn kem_absolute_cost(q: &CostQuery) -> Result<f64> {
    check_domain(q.m, q.alpha)?;
    let m = q.m as f64;
    let mu = q.mu as f64;
    let doubles = (m * m - m) / 2.0;
    Ok(m * mu.powf(q.alpha) + doubles * (2.0 * mu).powf(q.alpha))
}

/// Fragment cost spread perfectly over `workers` processors.
pub fn kem_parallel_cost(q: &CostQuery, workers: u64) -> Result<f64> {
    if workers == 0 {
        return Err(Error::invalid("workers must be positive"));
    }
    Ok(kem_absolute_cost(q)? / workers as f64)
}

/// Rounds to `digits` significant figures.
pub fn round_significant(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let exp = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits - 1 - exp);
    (x * scale).round() / scale
}

/// `relative_time` over a grid; rows follow `m_values`, columns `alpha_values`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTable {
    pub m_values: Vec<u64>,
    pub alpha_values: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

pub const TABLE_M: [u64; 8] = [3, 6, 12, 24, 48, 96, 192, 384];
pub const TABLE_ALPHA: [f64; 3] = [3.0, 4.0, 5.0];

pub fn table_sweep(m_values: &[u64], alpha_values: &[f64]) -> Result<CostTable> {
    let mut ms = m_values.to_vec();
    ms.sort_unstable();
    ms.dedup();
    let mut alphas = alpha_values.to_vec();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let values = ms
        .iter()
        .map(|&m| {
            alphas
                .iter()
                .map(|&a| relative_time(m, a))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CostTable {
        m_values: ms,
        alpha_values: alphas,
        values,
    })
}

impl CostTable {
    pub fn get(&self, m: u64, alpha: f64) -> Option<f64> {
        let i = self.m_values.iter().position(|&x| x == m)?;
        let j = self.alpha_values.iter().position(|&x| x == alpha)?;
        Some(self.values[i][j])
    }

    /// `m,alpha=a1,alpha=a2,...` then one row per `m`. With `significant`
    /// set, values are rounded and printed in scientific notation.
    pub fn to_csv(&self, significant: Option<i32>) -> String {
        let mut out = String::from("m");
        for a in &self.alpha_values {
            let _ = write!(out, ",alpha={a}");
        }
        out.push('\n');
        for (m, row) in self.m_values.iter().zip(&self.values) {
            let _ = write!(out, "{m}");
            for v in row {
                match significant {
                    Some(d) => {
                        let prec = (d - 1).max(0) as usize;
                        let _ = write!(out, ",{:.*e}", prec, round_significant(*v, d));
                    }
                    None => {
                        let _ = write!(out, ",{v:e}");
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    /// Long-form `alpha,m,t_rel` rows, one curve per `α`.
    pub fn to_plot_csv(&self) -> String {
        let mut out = String::from("alpha,m,t_rel\n");
        for (j, a) in self.alpha_values.iter().enumerate() {
            for (i, m) in self.m_values.iter().enumerate() {
                let _ = writeln!(out, "{a},{m},{:e}", self.values[i][j]);
            }
        }
        out
    }
}
