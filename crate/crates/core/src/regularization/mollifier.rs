//! Quintic-smoothstep mollifiers: plateau exactly 1, support exactly 0,
//! first five derivatives bounded by fixed constants over the unit
//! transition (checked by dense sampling in the tests).

/// s(u) = 10 u^3 - 15 u^4 + 6 u^5, clamped outside [0, 1].
#[inline]
pub fn smoothstep5(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
    }
}

/// j-th derivative of the unit smoothstep (1 <= j <= 5); identically zero
/// outside the open transition interval.
#[inline]
pub fn smoothstep5_deriv(u: f64, j: usize) -> f64 {
    if !(0.0..=1.0).contains(&u) {
        return 0.0;
    }
    match j {
        1 => 30.0 * u * u - 60.0 * u * u * u + 30.0 * u * u * u * u,
        2 => 60.0 * u - 180.0 * u * u + 120.0 * u * u * u,
        3 => 60.0 - 360.0 * u + 360.0 * u * u,
        4 => -360.0 + 720.0 * u,
        5 => 720.0,
        _ => panic!("derivative order {j} out of range 1..=5"),
    }
}

/// Suprema of |s^(j)| on [0, 1] for j = 1..5 (1.875, 10/sqrt(3), 60, 360, 720).
pub const SMOOTHSTEP5_DERIV_SUP: [f64; 5] =
    [1.875, 5.773502691896258, 60.0, 360.0, 720.0];

/// Plateau/support mollifier: exactly 1 on [plateau_lo, plateau_hi], exactly
/// 0 outside (plateau_lo - rise, plateau_hi + fall), quintic in between.
/// One-sided shapes use infinite endpoints.
#[derive(Clone, Copy, Debug)]
pub struct MollifierSpec {
    pub plateau_lo: f64,
    pub plateau_hi: f64,
    pub rise_width: f64,
    pub fall_width: f64,
}

impl MollifierSpec {
    pub fn window(plateau_lo: f64, plateau_hi: f64, rise_width: f64, fall_width: f64) -> Self {
        assert!(plateau_lo <= plateau_hi);
        assert!(rise_width > 0.0 && fall_width > 0.0);
        MollifierSpec { plateau_lo, plateau_hi, rise_width, fall_width }
    }

    /// 1 for x <= lo, 0 for x >= hi.
    pub fn step_down(lo: f64, hi: f64) -> Self {
        assert!(hi > lo);
        MollifierSpec {
            plateau_lo: f64::NEG_INFINITY,
            plateau_hi: lo,
            rise_width: 1.0,
            fall_width: hi - lo,
        }
    }

    /// 0 for x <= lo, 1 for x >= hi.
    pub fn step_up(lo: f64, hi: f64) -> Self {
        assert!(hi > lo);
        MollifierSpec {
            plateau_lo: hi,
            plateau_hi: f64::INFINITY,
            rise_width: hi - lo,
            fall_width: 1.0,
        }
    }

    pub fn support_lo(&self) -> f64 {
        self.plateau_lo - self.rise_width
    }

    pub fn support_hi(&self) -> f64 {
        self.plateau_hi + self.fall_width
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.plateau_lo {
            smoothstep5((x - self.support_lo()) / self.rise_width)
        } else if x > self.plateau_hi {
            1.0 - smoothstep5((x - self.plateau_hi) / self.fall_width)
        } else {
            1.0
        }
    }

    /// j-th derivative (the plateau separates the two transitions, so at
    /// most one is active at any x).
    #[inline]
    pub fn deriv(&self, x: f64, j: usize) -> f64 {
        if x < self.plateau_lo {
            let u = (x - self.support_lo()) / self.rise_width;
            smoothstep5_deriv(u, j) / self.rise_width.powi(j as i32)
        } else if x > self.plateau_hi {
            let u = (x - self.plateau_hi) / self.fall_width;
            -smoothstep5_deriv(u, j) / self.fall_width.powi(j as i32)
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_and_support_exact() {
        let m = MollifierSpec::window(0.0, 1.0, 0.25, 0.5);
        assert_eq!(m.eval(0.0), 1.0);
        assert_eq!(m.eval(1.0), 1.0);
        assert_eq!(m.eval(0.5), 1.0);
        assert_eq!(m.eval(-0.25), 0.0);
        assert_eq!(m.eval(1.5), 0.0);
        assert_eq!(m.eval(-1.0), 0.0);
        let v = m.eval(-0.1);
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn step_shapes() {
        let down = MollifierSpec::step_down(2.0, 3.0);
        assert_eq!(down.eval(1.0), 1.0);
        assert_eq!(down.eval(2.0), 1.0);
        assert_eq!(down.eval(3.0), 0.0);
        let up = MollifierSpec::step_up(0.0, 1.0);
        assert_eq!(up.eval(-1.0), 0.0);
        assert_eq!(up.eval(1.0), 1.0);
        // weak monotonicity of the rising shape
        let mut prev = 0.0;
        for i in 0..=100 {
            let v = up.eval(i as f64 / 100.0);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn derivative_bounds_by_dense_sampling() {
        // values in [0,1] and |d^j| <= sup_j / width^j at 10^4 points
        let widths = [(0.25, 0.5), (1.0, 1.0), (0.003, 0.07)];
        for &(rw, fw) in &widths {
            let m = MollifierSpec::window(0.0, 1.0, rw, fw);
            let lo = m.support_lo() - 0.1;
            let hi = m.support_hi() + 0.1;
            for t in 0..10_000 {
                let x = lo + (hi - lo) * t as f64 / 9_999.0;
                let v = m.eval(x);
                assert!((0.0..=1.0).contains(&v));
                for j in 1..=5 {
                    let bound = SMOOTHSTEP5_DERIV_SUP[j - 1]
                        / rw.min(fw).powi(j as i32)
                        + 1e-9;
                    assert!(
                        m.deriv(x, j).abs() <= bound,
                        "j={j} x={x} d={}",
                        m.deriv(x, j)
                    );
                }
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let m = MollifierSpec::window(0.0, 2.0, 0.7, 0.3);
        let h = 1e-6;
        for &x in &[-0.5, -0.3, 2.1, 2.25] {
            let fd = (m.eval(x + h) - m.eval(x - h)) / (2.0 * h);
            assert!((fd - m.deriv(x, 1)).abs() < 1e-6, "x={x}");
        }
    }
}
