//! Exponential integral, used as an independent check of the single-link
//! ergodic rate: for X ~ Exp(1), `E[ln(1 + rho X)] = e^{1/rho} E1(1/rho)`.

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `E1(x)` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 is only defined here for positive arguments");
    if x <= 1.0 {
        e1_series(x)
    } else {
        (-x).exp() * scaled_e1_continued_fraction(x)
    }
}

/// `e^x E1(x)` for `x > 0`, without overflow/underflow at either end.
pub fn scaled_exp_integral_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 is only defined here for positive arguments");
    if x <= 1.0 {
        x.exp() * e1_series(x)
    } else {
        scaled_e1_continued_fraction(x)
    }
}

fn e1_series(x: f64) -> f64 {
    // E1(x) = -gamma - ln x - sum_{n>=1} (-x)^n / (n n!)
    let mut sum = 0.0;
    let mut term = 1.0;
    for n in 1..200 {
        term *= -x / n as f64;
        let contribution = term / n as f64;
        sum += contribution;
        if contribution.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

fn scaled_e1_continued_fraction(x: f64) -> f64 {
    // modified Lentz on 1/(x+1- 1/(x+3- 4/(x+5- ...)))
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let a = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        let delta = c * d;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}
