//! Exact binomial confidence intervals and run-count bounds.

/// Lanczos approximation of ln Γ(x), x > 0. Good to ~1e-13 here.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection.
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (x + i as f64 + 1.0);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "shape parameters must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (a * x.ln() + b * (1.0 - x).ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b))
        .exp();
    // The continued fraction converges fast for x below (a+1)/(a+b+2);
    // above it, evaluate the mirrored fraction (same front term, since the
    // beta function is symmetric).
    if x < (a + 1.0) / (a + b + 2.0) {
        (front / a) * beta_cf(a, b, x)
    } else {
        1.0 - (front / b) * beta_cf(b, a, 1.0 - x)
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-14;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Quantile of the Beta(a, b) distribution by bisection on `inc_beta`.
/// Bisection is slow but unconditionally robust; interval bounds are
/// computed a handful of times per estimate.
pub fn beta_inv(a: f64, b: f64, p: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p));
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if inc_beta(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Clopper-Pearson interval for k successes in n trials at the given
/// confidence level. Exact: guaranteed coverage at least the nominal level,
/// valid arbitrarily close to 0 and 1.
pub fn clopper_pearson(k: u64, n: u64, confidence: f64) -> (f64, f64) {
    assert!(n > 0, "need at least one trial");
    assert!(k <= n);
    assert!(confidence > 0.0 && confidence < 1.0, "confidence must lie in (0,1)");
    let alpha = 1.0 - confidence;
    let (k_f, n_f) = (k as f64, n as f64);
    let lo = if k == 0 { 0.0 } else { beta_inv(k_f, n_f - k_f + 1.0, alpha / 2.0) };
    let hi = if k == n {
        1.0
    } else {
        beta_inv(k_f + 1.0, n_f - k_f, 1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// Okamoto/Hoeffding run count: N = ceil(ln(2/delta) / (2 eps^2)) guarantees
/// P(|p_hat - p| > eps) <= delta.
pub fn okamoto_runs(eps: f64, delta: f64) -> u64 {
    assert!(eps > 0.0 && eps < 1.0, "eps must lie in (0,1)");
    assert!(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
    ((2.0 / delta).ln() / (2.0 * eps * eps)).ceil() as u64
}
