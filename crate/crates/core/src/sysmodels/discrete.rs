//! Bilinear discretization and transposed direct-form II state updates used
//! by the time-stepped feedback simulators.

use super::lti::LtiSystem;
use crate::poly;

/// Discrete transfer function in powers of `z^-1`, normalized so `a[0] = 1`.
#[derive(Debug, Clone)]
pub(crate) struct DiscreteTf {
    b: Vec<f64>,
    a: Vec<f64>,
}

impl DiscreteTf {
    /// Tustin map `s = (2/T) (1 - z^-1) / (1 + z^-1)`.
    pub(crate) fn bilinear(sys: &LtiSystem, dt: f64) -> Self {
        let n = sys.order();
        let c = 2.0 / dt;
        let map = |p: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; n + 1];
            for (i, &coef) in p.iter().enumerate() {
                if coef == 0.0 {
                    continue;
                }
                let mut term = vec![coef * c.powi(i as i32)];
                for _ in 0..i {
                    term = poly::mul(&term, &[1.0, -1.0]);
                }
                for _ in i..n {
                    term = poly::mul(&term, &[1.0, 1.0]);
                }
                for (o, t) in out.iter_mut().zip(&term) {
                    *o += t;
                }
            }
            out
        };
        let mut b = map(sys.num());
        let mut a = map(sys.den());
        let a0 = a[0];
        for v in b.iter_mut().chain(a.iter_mut()) {
            *v /= a0;
        }
        DiscreteTf { b, a }
    }
}

/// Running filter state.
#[derive(Debug, Clone)]
pub(crate) struct Df2t {
    tf: DiscreteTf,
    state: Vec<f64>,
}

impl Df2t {
    pub(crate) fn new(tf: DiscreteTf) -> Self {
        let n = tf.a.len() - 1;
        Df2t { tf, state: vec![0.0; n] }
    }

    /// Output is `direct() * x + offset()` for the current input `x`.
    #[inline]
    pub(crate) fn direct(&self) -> f64 {
        self.tf.b[0]
    }

    #[inline]
    pub(crate) fn offset(&self) -> f64 {
        self.state.first().copied().unwrap_or(0.0)
    }

    /// Commits input `x`, returns the output.
    #[inline]
    pub(crate) fn step(&mut self, x: f64) -> f64 {
        let y = self.tf.b[0] * x + self.offset();
        let n = self.state.len();
        for i in 0..n {
            let next = if i + 1 < n { self.state[i + 1] } else { 0.0 };
            self.state[i] = self.tf.b[i + 1] * x - self.tf.a[i + 1] * y + next;
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn bilinear_preserves_dc_gain_and_warped_response() {
        let sys = LtiSystem::second_order_lowpass(2.0 * std::f64::consts::PI * 30.0, 0.2, 1.5);
        let dt = 1.0 / 5000.0;
        let tf = DiscreteTf::bilinear(&sys, dt);
        let h = |w: f64| {
            let z1 = Complex64::from_polar(1.0, -w * dt);
            let num = poly::eval(&tf.b, z1);
            let den = poly::eval(&tf.a, z1);
            num / den
        };
        assert!((h(0.0).re - 1.5).abs() < 1e-12);
        // H(e^{jw T}) = G(j (2/T) tan(w T / 2))
        let w = 2.0 * std::f64::consts::PI * 45.0;
        let warped = 2.0 / dt * (w * dt / 2.0).tan();
        let g = sys.eval(Complex64::new(0.0, warped));
        assert!((h(w) - g).norm() < 1e-10);
    }

    #[test]
    fn step_response_settles_to_dc_gain() {
        let sys = LtiSystem::first_order_lowpass(50.0);
        let mut f = Df2t::new(DiscreteTf::bilinear(&sys, 1e-3));
        let mut y = 0.0;
        for _ in 0..2000 {
            y = f.step(2.0);
        }
        assert!((y - 2.0).abs() < 1e-12);
    }
}
