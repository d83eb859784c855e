//! Normal and chi-square quantiles, empirical quantiles.
//!
//! Inverses are computed here from a rational/Wilson-Hilferty start and
//! polished with Newton steps against the exact CDF. The normal CDF uses
//! `libm::erfc`; the chi-square CDF uses the regularized gamma function
//! from `statrs`.

use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("probability must lie in (0, 1), got {p}")))
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile: Acklam's rational approximation plus one Halley step.
pub fn normal_quantile(p: f64) -> Result<f64> {
    check_probability(p)?;
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    Ok(x - u / (1.0 + 0.5 * x * u))
}

pub fn chi_square_cdf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(0.5 * dof, 0.5 * x)
    }
}

fn chi_square_pdf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = 0.5 * dof;
    ((k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

/// Chi-square quantile with `dof` degrees of freedom.
///
/// Starts from the Wilson-Hilferty cube approximation and runs safeguarded
/// Newton iterations (bisection whenever a step leaves the bracket) until the
/// relative step is below `1e-14`.
pub fn chi_square_quantile(p: f64, dof: f64) -> Result<f64> {
    check_probability(p)?;
    if !(dof > 0.0 && dof.is_finite()) {
        return Err(Error::InvalidArgument(format!("degrees of freedom must be positive, got {dof}")));
    }
    let z = normal_quantile(p)?;
    let h = 2.0 / (9.0 * dof);
    let wh = dof * (1.0 - h + z * h.sqrt()).powi(3);
    let (mut lo, mut hi) = (0.0f64, dof.max(1.0));
    while chi_square_cdf(hi, dof) < p {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = if wh > lo && wh < hi { wh } else { 0.5 * (lo + hi) };
    for _ in 0..200 {
        let f = chi_square_cdf(x, dof) - p;
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = chi_square_pdf(x, dof);
        let mut next = if slope > 0.0 { x - f / slope } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= 1e-14 * x.max(1e-300) || hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(x)
}

/// 1-based order-statistic index of the type-1 (left-continuous inverse)
/// empirical `p`-quantile among `count` values.
pub fn type1_rank(p: f64, count: usize) -> usize {
    // the 1e-9 slack absorbs representation error in p * count (e.g. 0.07 * 100)
    ((p * count as f64 - 1e-9).ceil() as usize).clamp(1, count.max(1))
}

/// Type-1 empirical quantile: the smallest sample value `v` whose empirical
/// CDF reaches `p`.
pub fn empirical_quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientReplicates {
            needed: 1,
            available: 0,
        });
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!("quantile level must lie in (0, 1], got {p}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[type1_rank(p, sorted.len()) - 1])
}
