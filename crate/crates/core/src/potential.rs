//! Interatomic energy models: the smooth Cu embedded-atom potential and two
//! Morse pair potentials that differ only in the smoothness of their cutoff.

use crate::error::{Error, Result};
use crate::jet::Jet;

/// An embedded-atom style energy `E = 1/2 sum V(r_ij) + sum F(rho_i)`.
///
/// Pair potentials report a zero density and a zero embedding function.
/// Every radial function must vanish identically for `r >= cutoff()`.
pub trait Potential: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &str;

    fn cutoff(&self) -> f64;

    /// Pair term `V(r)` with its first two derivatives, `r > 0`.
    fn pair(&self, r: f64) -> Jet;

    /// Electron density contribution `rho(r)`, `r > 0`.
    fn density(&self, r: f64) -> Jet;

    /// Embedding energy `F(rho_bar)`.
    fn embed(&self, rho_bar: f64) -> Jet;

    fn has_embedding(&self) -> bool {
        true
    }

    /// Mass in amu used by molecular dynamics.
    fn mass(&self) -> f64;
}

/// Cutoff function: `x^4 / (1 + x^4)` for `x < 0`, zero otherwise.
pub fn psi_cutoff(x: f64) -> f64 {
    psi_jet(Jet::constant(x)).v
}

fn psi_jet(x: Jet) -> Jet {
    if x.v >= 0.0 {
        return Jet::ZERO;
    }
    let x4 = x.powi(4);
    x4 * (x4 + 1.0).recip()
}

/// Morse function `exp(-2 alpha (r - r0)) - 2 exp(-alpha (r - r0))`.
pub fn morse(r: f64, r0: f64, alpha: f64) -> f64 {
    morse_jet(Jet::variable(r), r0, alpha).v
}

fn morse_jet(r: Jet, r0: f64, alpha: f64) -> Jet {
    let e = ((r + -r0) * -alpha).exp();
    e * e - e * 2.0
}

/// Fitted parameters of the Cu embedded-atom potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EamCuParameters {
    pub r_c: f64,
    pub h: f64,
    pub e1: f64,
    pub e2: f64,
    pub r0_1: f64,
    pub r0_2: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub delta: f64,
    pub r_s: [f64; 3],
    pub s: [f64; 3],
    pub a: f64,
    pub r0_3: f64,
    pub r0_4: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub f0: f64,
    pub f2: f64,
    pub q: [f64; 4],
    pub q_big1: f64,
    pub q_big2: f64,
}

impl Default for EamCuParameters {
    fn default() -> Self {
        EamCuParameters {
            r_c: 5.50679,
            h: 0.50037,
            e1: 2.01458e2,
            e2: 6.59228e-3,
            r0_1: 0.83591,
            r0_2: 4.46867,
            alpha1: 2.97758,
            alpha2: 1.54927,
            delta: 0.86225e-2,
            r_s: [2.24, 1.8, 1.2],
            s: [4.0, 40.0, 1.15e3],
            a: 3.80362,
            r0_3: -2.19885,
            r0_4: -2.61984e2,
            beta1: 0.17394,
            beta2: 5.35661e2,
            f0: -2.28235,
            f2: 1.35535,
            q: [-1.27775, -0.86074, 1.78804, 2.97571],
            q_big1: 0.4,
            q_big2: 0.3,
        }
    }
}

impl EamCuParameters {
    fn cutoff_factor(&self, r: Jet) -> Jet {
        psi_jet((r + -self.r_c) * (1.0 / self.h))
    }

    fn pair_jet(&self, r: Jet) -> Jet {
        let mut v = Jet::ZERO;
        for (&rs, &sn) in self.r_s.iter().zip(self.s.iter()) {
            // Unit step: H(x) = 1 for x > 0.
            if rs - r.v > 0.0 {
                v = v - (-r + rs).powi(4) * sn;
            }
        }
        let morse = morse_jet(r, self.r0_1, self.alpha1) * self.e1
            + morse_jet(r, self.r0_2, self.alpha2) * self.e2
            + self.delta;
        v + morse * self.cutoff_factor(r)
    }

    fn density_jet(&self, r: Jet) -> Jet {
        let g1 = ((r + -self.r0_3).powi(2) * -self.beta1).exp() * self.a;
        let g2 = ((r + -self.r0_4) * -self.beta2).exp();
        (g1 + g2) * self.cutoff_factor(r)
    }

    fn embed_jet(&self, rho: Jet) -> Jet {
        let x = rho + -1.0;
        let base = Jet::constant(self.f0) + x.powi(2) * (0.5 * self.f2);
        if rho.v <= 1.0 {
            let mut f = base;
            for (n, &qn) in self.q.iter().enumerate() {
                f = f + x.powi(n as i32 + 3) * qn;
            }
            f
        } else {
            let num = base + x.powi(3) * self.q[0] + x.powi(4) * self.q_big1;
            let den = x.powi(3) * self.q_big2 + 1.0;
            num * den.recip()
        }
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("interatomic distance must be positive, got {r}")))
    }
}

/// Cu pair function `V(r)` in eV.
pub fn pair_v(r: f64, p: &EamCuParameters) -> Result<f64> {
    check_radius(r)?;
    Ok(p.pair_jet(Jet::variable(r)).v)
}

/// Cu electron density function `rho(r)`.
pub fn density_rho(r: f64, p: &EamCuParameters) -> Result<f64> {
    check_radius(r)?;
    Ok(p.density_jet(Jet::variable(r)).v)
}

/// Cu embedding function `F(rho_bar)` in eV.
pub fn embed_f(rho_bar: f64, p: &EamCuParameters) -> f64 {
    p.embed_jet(Jet::variable(rho_bar)).v
}

pub const CU_MASS_AMU: f64 = 63.546;
pub const AL_MASS_AMU: f64 = 26.9815;
pub const FE_MASS_AMU: f64 = 55.845;

/// The smooth (C^3) embedded-atom potential for copper.
#[derive(Debug, Clone, Default)]
pub struct EamCu {
    pub params: EamCuParameters,
}

impl EamCu {
    pub fn new(params: EamCuParameters) -> Self {
        EamCu { params }
    }
}

impl Potential for EamCu {
    fn name(&self) -> &str {
        "eam-cu"
    }

    fn cutoff(&self) -> f64 {
        self.params.r_c
    }

    fn pair(&self, r: f64) -> Jet {
        if r >= self.params.r_c {
            return Jet::ZERO;
        }
        self.params.pair_jet(Jet::variable(r))
    }

    fn density(&self, r: f64) -> Jet {
        if r >= self.params.r_c {
            return Jet::ZERO;
        }
        self.params.density_jet(Jet::variable(r))
    }

    fn embed(&self, rho_bar: f64) -> Jet {
        self.params.embed_jet(Jet::variable(rho_bar))
    }

    fn mass(&self) -> f64 {
        CU_MASS_AMU
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairForm {
    /// Morse times the quartic-rational cutoff `psi`; C^3 at the cutoff.
    MorseSmooth,
    /// Morse times a quintic smoothstep on `[r_c - h, r_c]`; exactly C^2 at the cutoff.
    MorseC2,
}

/// A Morse pair potential with a selectable cutoff taper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairPotential {
    pub form: PairForm,
    pub depth: f64,
    pub stiffness: f64,
    pub r0: f64,
    pub r_c: f64,
    pub h: f64,
    pub mass: f64,
}

impl PairPotential {
    /// Cu-like Morse parameters with the given taper.
    pub fn copper_like(form: PairForm) -> Self {
        PairPotential {
            form,
            depth: 0.3429,
            stiffness: 1.3588,
            r0: 2.866,
            r_c: 5.5,
            h: 0.5,
            mass: CU_MASS_AMU,
        }
    }

    fn taper(&self, r: Jet) -> Jet {
        match self.form {
            PairForm::MorseSmooth => psi_jet((r + -self.r_c) * (1.0 / self.h)),
            PairForm::MorseC2 => {
                let t = (r + -(self.r_c - self.h)) * (1.0 / self.h);
                if t.v <= 0.0 {
                    Jet::constant(1.0)
                } else if t.v >= 1.0 {
                    Jet::ZERO
                } else {
                    // 1 - 10 t^3 + 15 t^4 - 6 t^5
                    Jet::constant(1.0) - t.powi(3) * 10.0 + t.powi(4) * 15.0 - t.powi(5) * 6.0
                }
            }
        }
    }
}

impl Potential for PairPotential {
    fn name(&self) -> &str {
        match self.form {
            PairForm::MorseSmooth => "morse-smooth",
            PairForm::MorseC2 => "morse-c2",
        }
    }

    fn cutoff(&self) -> f64 {
        self.r_c
    }

    fn pair(&self, r: f64) -> Jet {
        if r >= self.r_c {
            return Jet::ZERO;
        }
        let x = Jet::variable(r);
        morse_jet(x, self.r0, self.stiffness) * self.depth * self.taper(x)
    }

    fn density(&self, _r: f64) -> Jet {
        Jet::ZERO
    }

    fn embed(&self, _rho_bar: f64) -> Jet {
        Jet::ZERO
    }

    fn has_embedding(&self) -> bool {
        false
    }

    fn mass(&self) -> f64 {
        self.mass
    }
}

/// One-sided third-derivative estimates of `f` on either side of `at`,
/// from five-point stencils with spacing `step`. Returns `(left, right)`.
pub fn one_sided_third_derivatives(f: impl Fn(f64) -> f64, at: f64, step: f64) -> (f64, f64) {
    // Second-order one-sided stencils, so a smooth function shows no O(step) jump.
    const W: [f64; 5] = [-2.5, 9.0, -12.0, 7.0, -1.5];
    let s3 = step * step * step;
    let right: f64 = W.iter().enumerate().map(|(k, w)| w * f(at + k as f64 * step)).sum::<f64>() / s3;
    let left: f64 = -W.iter().enumerate().map(|(k, w)| w * f(at - k as f64 * step)).sum::<f64>() / s3;
    (left, right)
}

/// Size of the jump in the third derivative of `f` across `at`.
pub fn third_derivative_jump(f: impl Fn(f64) -> f64, at: f64, step: f64) -> f64 {
    let (l, r) = one_sided_third_derivatives(f, at, step);
    (l - r).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn psi_values() {
        assert_eq!(psi_cutoff(1.0), 0.0);
        assert_eq!(psi_cutoff(0.0), 0.0);
        assert_eq!(psi_cutoff(-1.0), 0.5);
        assert_relative_eq!(psi_cutoff(-2.0), 16.0 / 17.0, max_relative = 1e-15);
    }

    #[test]
    fn morse_values() {
        assert_eq!(morse(2.0, 2.0, 1.5), -1.0);
        assert!(morse(1e3, 2.0, 1.5).abs() < 1e-300);
        for r in [0.5, 2.0, 7.0] {
            assert_eq!(morse(r, 2.0, 0.0), -1.0);
        }
    }

    #[test]
    fn table_defaults() {
        let p = EamCuParameters::default();
        assert_eq!(p.r_c, 5.50679);
        assert_eq!(p.f0, -2.28235);
        assert_eq!(p.s, [4.0, 40.0, 1150.0]);
        assert_eq!(p.q, [-1.27775, -0.86074, 1.78804, 2.97571]);
    }

    #[test]
    fn pair_function_cases() {
        let p = EamCuParameters::default();
        assert_eq!(pair_v(6.0, &p).unwrap(), 0.0);
        assert!(matches!(pair_v(0.0, &p), Err(Error::InvalidArgument(_))));
        assert!(matches!(density_rho(-1.0, &p), Err(Error::InvalidArgument(_))));

        // Term-by-term evaluation, independent of the jet code path.
        let psi = |r: f64| {
            let x: f64 = (r - p.r_c) / p.h;
            if x < 0.0 {
                x.powi(4) / (1.0 + x.powi(4))
            } else {
                0.0
            }
        };
        let m = |r: f64, r0: f64, a: f64| (-2.0 * a * (r - r0)).exp() - 2.0 * (-a * (r - r0)).exp();
        let outer = |r: f64| (p.e1 * m(r, p.r0_1, p.alpha1) + p.e2 * m(r, p.r0_2, p.alpha2) + p.delta) * psi(r);
        assert_relative_eq!(pair_v(3.0, &p).unwrap(), outer(3.0), max_relative = 1e-14);
        let expected = outer(2.0) - 4.0 * (2.24f64 - 2.0).powi(4);
        assert_relative_eq!(pair_v(2.0, &p).unwrap(), expected, max_relative = 1e-14);
    }

    #[test]
    fn density_cases() {
        let p = EamCuParameters::default();
        assert_eq!(density_rho(p.r_c, &p).unwrap(), 0.0);
        assert_eq!(density_rho(7.0, &p).unwrap(), 0.0);
        let r: f64 = 2.5;
        let x: f64 = (r - 5.50679) / 0.50037;
        let psi = x.powi(4) / (1.0 + x.powi(4));
        let expected = (3.80362 * (-0.17394 * (r + 2.19885).powi(2)).exp()
            + (-535.661 * (r + 261.984)).exp())
            * psi;
        assert_relative_eq!(density_rho(r, &p).unwrap(), expected, max_relative = 1e-14);
        assert!(density_rho(p.r_c - 1e-6, &p).unwrap().abs() < 1e-20);
    }

    #[test]
    fn embedding_branches() {
        let p = EamCuParameters::default();
        assert_eq!(embed_f(1.0, &p), -2.28235);
        let x: f64 = 0.2;
        let num = -2.28235 + 0.5 * 1.35535 * x * x + -1.27775 * x.powi(3) + 0.4 * x.powi(4);
        let den = 1.0 + 0.3 * x.powi(3);
        assert_relative_eq!(embed_f(1.2, &p), num / den, max_relative = 1e-14);
        // Both branches meet at rho_bar = 1.
        let right = p.embed_jet(Jet::variable(1.0 + 1e-9)).v;
        assert!((right - embed_f(1.0, &p)).abs() < 1e-12);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let eam = EamCu::default();
        let h = 1e-5;
        for r in [1.1, 1.9, 2.3, 2.55, 3.6, 4.4, 5.2] {
            let j = eam.pair(r);
            let fd = (eam.pair(r + h).v - eam.pair(r - h).v) / (2.0 * h);
            assert_relative_eq!(j.d1, fd, max_relative = 1e-6, epsilon = 1e-9);
            let fd2 = (eam.pair(r + h).d1 - eam.pair(r - h).d1) / (2.0 * h);
            assert_relative_eq!(j.d2, fd2, max_relative = 1e-6, epsilon = 1e-8);
            let d = eam.density(r);
            let fd = (eam.density(r + h).v - eam.density(r - h).v) / (2.0 * h);
            assert_relative_eq!(d.d1, fd, max_relative = 1e-6, epsilon = 1e-10);
        }
        for rho in [0.6, 0.95, 1.05, 1.4] {
            let j = eam.embed(rho);
            let fd = (eam.embed(rho + h).v - eam.embed(rho - h).v) / (2.0 * h);
            assert_relative_eq!(j.d1, fd, max_relative = 1e-6, epsilon = 1e-9);
        }
    }

    #[test]
    fn eam_cu_is_c3_at_cutoff() {
        let p = EamCuParameters::default();
        let step = 1e-5;
        let v = |r: f64| p.pair_jet(Jet::variable(r)).v;
        let rho = |r: f64| p.density_jet(Jet::variable(r)).v;
        assert!(third_derivative_jump(v, p.r_c, step) < 1e-4);
        assert!(third_derivative_jump(rho, p.r_c, step) < 1e-4);
    }

    #[test]
    fn c2_taper_has_third_derivative_jump() {
        let smooth = PairPotential::copper_like(PairForm::MorseSmooth);
        let c2 = PairPotential::copper_like(PairForm::MorseC2);
        let step = 1e-5;
        let js = third_derivative_jump(|r| smooth.pair(r).v, smooth.r_c, step);
        let jc = third_derivative_jump(|r| c2.pair(r).v, c2.r_c, step);
        assert!(js < 1e-4, "smooth jump {js}");
        assert!(jc > 1e-3, "c2 jump {jc}");
        // Value, slope and curvature still vanish at the cutoff.
        let j = c2.pair(c2.r_c - 1e-9);
        assert!(j.v.abs() < 1e-12 && j.d1.abs() < 1e-9 && j.d2.abs() < 1e-6);
    }
}
