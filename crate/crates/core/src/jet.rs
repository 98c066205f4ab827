//! Second-order forward-mode derivatives of scalar functions of one variable.

use std::ops::{Add, Mul, Neg, Sub};

/// Value together with its first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    pub const ZERO: Jet = Jet { v: 0.0, d1: 0.0, d2: 0.0 };

    pub fn constant(v: f64) -> Self {
        Jet { v, d1: 0.0, d2: 0.0 }
    }

    /// The independent variable evaluated at `v`.
    pub fn variable(v: f64) -> Self {
        Jet { v, d1: 1.0, d2: 0.0 }
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        Jet {
            v: e,
            d1: e * self.d1,
            d2: e * (self.d2 + self.d1 * self.d1),
        }
    }

    pub fn powi(self, n: i32) -> Self {
        match n {
            0 => return Jet::constant(1.0),
            1 => return self,
            _ => {}
        }
        let nf = n as f64;
        let pm2 = self.v.powi(n - 2);
        let pm1 = self.v.powi(n - 1);
        Jet {
            v: pm1 * self.v,
            d1: nf * pm1 * self.d1,
            d2: nf * (nf - 1.0) * pm2 * self.d1 * self.d1 + nf * pm1 * self.d2,
        }
    }

    pub fn recip(self) -> Self {
        let inv = 1.0 / self.v;
        Jet {
            v: inv,
            d1: -self.d1 * inv * inv,
            d2: (2.0 * self.d1 * self.d1 * inv - self.d2) * inv * inv,
        }
    }

    pub fn scale(self, s: f64) -> Self {
        Jet {
            v: self.v * s,
            d1: self.d1 * s,
            d2: self.d2 * s,
        }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            d1: self.d1 + o.d1,
            d2: self.d2 + o.d2,
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet {
            v: self.v - o.v,
            d1: self.d1 - o.d1,
            d2: self.d2 - o.d2,
        }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            d1: self.d1 * o.v + self.v * o.d1,
            d2: self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        self.scale(s)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, s: f64) -> Jet {
        Jet { v: self.v + s, ..self }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> (f64, f64) {
        let h = 1e-4;
        let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
        let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        (d1, d2)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let x0 = 0.7;
        let jf = |x: Jet| (x * x.scale(-1.3)).exp() * x.powi(3) + (x + 2.0).recip();
        let sf = |x: f64| (-1.3 * x * x).exp() * x.powi(3) + 1.0 / (x + 2.0);
        let j = jf(Jet::variable(x0));
        let (d1, d2) = fd(sf, x0);
        assert!((j.v - sf(x0)).abs() < 1e-15);
        assert!((j.d1 - d1).abs() < 1e-7);
        assert!((j.d2 - d2).abs() < 1e-5);
    }

    #[test]
    fn powi_handles_low_orders() {
        let x = Jet::variable(2.0);
        assert_eq!(x.powi(0), Jet::constant(1.0));
        assert_eq!(x.powi(1), x);
        let x2 = x.powi(2);
        assert_eq!((x2.v, x2.d1, x2.d2), (4.0, 4.0, 2.0));
    }
}
