//! Bounded-denominator rational approximation by continued fractions.

/// A positive fraction `num/den` in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub fn lcm(a: u64, b: u64) -> Option<u64> {
    if a == 0 || b == 0 {
        return Some(0);
    }
    (a / gcd(a, b)).checked_mul(b)
}

/// Smallest-denominator fraction `p/q` with `q <= denom_bound` and
/// `|p/q - x| <= rel_tol·|x|`, searched over convergents and
/// semiconvergents of the continued fraction of `x`. Only positive finite
/// `x` are handled.
pub fn rationalize(x: f64, denom_bound: u64, rel_tol: f64) -> Option<Fraction> {
    if !(x.is_finite() && x > 0.0) || denom_bound == 0 {
        return None;
    }
    let tol = rel_tol * x;
    let accept = |p: u64, q: u64| q <= denom_bound && (p as f64 / q as f64 - x).abs() <= tol;

    // h_{-1}/k_{-1} = 1/0, h_{-2}/k_{-2} = 0/1
    let (mut h_prev, mut k_prev) = (0u64, 1u64);
    let (mut h, mut k) = (1u64, 0u64);
    let mut rem = x;

    for _ in 0..64 {
        let a = rem.floor();
        if a > u64::MAX as f64 / 2.0 {
            return None;
        }
        let a = a as u64;

        // semiconvergents (h_prev + t·h)/(k_prev + t·k) for t < a, in
        // increasing denominator order; the half-way one only qualifies
        // when it beats the previous convergent, so just test each.
        if k > 0 {
            for t in a.div_ceil(2).max(1)..a {
                let p = h_prev.checked_add(t.checked_mul(h)?)?;
                let q = k_prev.checked_add(t.checked_mul(k)?)?;
                if q > denom_bound {
                    break;
                }
                if accept(p, q) {
                    return Some(reduced(p, q));
                }
            }
        }

        let p = a.checked_mul(h)?.checked_add(h_prev)?;
        let q = a.checked_mul(k)?.checked_add(k_prev)?;
        if q > denom_bound {
            return None;
        }
        if accept(p, q) {
            return Some(reduced(p, q));
        }
        (h_prev, k_prev, h, k) = (h, k, p, q);

        let frac = rem - a as f64;
        if frac <= 0.0 {
            return None;
        }
        rem = 1.0 / frac;
    }
    None
}

fn reduced(p: u64, q: u64) -> Fraction {
    let g = gcd(p, q).max(1);
    Fraction {
        num: p / g,
        den: q / g,
    }
}
