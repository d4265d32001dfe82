//! SISO state-space blocks and their exact zero-order-hold discretization.

use nalgebra::{DMatrix, DVector};

use super::rational::{is_integer_order, pade, OustaloupLadder, RationalizeOptions};
use super::{FoTransferFunction, TimeSeries};
use crate::error::{invalid, Result};

/// `x' = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub d: f64,
}

impl StateSpace {
    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    /// Static gain block.
    pub fn gain(d: f64) -> Self {
        Self {
            a: DMatrix::zeros(0, 0),
            b: DVector::zeros(0),
            c: DVector::zeros(0),
            d,
        }
    }

    /// Controllable canonical form of `num/den` (proper, descending powers).
    pub fn from_tf(num: &[f64], den: &[f64]) -> Result<Self> {
        if den.is_empty() || den[0] == 0.0 || num.len() > den.len() {
            return invalid("transfer function must be proper with nonzero leading denominator");
        }
        let n = den.len() - 1;
        let lead = den[0];
        let den: Vec<f64> = den.iter().map(|c| c / lead).collect();
        let mut padded = vec![0.0; den.len() - num.len()];
        padded.extend(num.iter().map(|c| c / lead));
        let d = padded[0];
        let rem: Vec<f64> = padded.iter().zip(&den).map(|(p, q)| p - d * q).collect();
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        for j in 0..n {
            a[(n - 1, j)] = -den[n - j];
        }
        let mut b = DVector::zeros(n);
        if n > 0 {
            b[n - 1] = 1.0;
        }
        let c = DVector::from_iterator(n, (0..n).map(|j| rem[n - j]));
        Ok(Self { a, b, c, d })
    }

    /// `self` followed by `next`.
    pub fn series(&self, next: &StateSpace) -> StateSpace {
        let (n1, n2) = (self.states(), next.states());
        let n = n1 + n2;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&next.a);
        a.view_mut((n1, 0), (n2, n1))
            .copy_from(&(&next.b * self.c.transpose()));
        let mut b = DVector::zeros(n);
        b.rows_mut(0, n1).copy_from(&self.b);
        b.rows_mut(n1, n2).copy_from(&(&next.b * self.d));
        let mut c = DVector::zeros(n);
        c.rows_mut(0, n1).copy_from(&(&self.c * next.d));
        c.rows_mut(n1, n2).copy_from(&next.c);
        StateSpace {
            a,
            b,
            c,
            d: self.d * next.d,
        }
    }

    /// Exact discretization under zero-order hold.
    pub fn discretize(&self, h: f64) -> Result<DiscreteStateSpace> {
        if !(h > 0.0 && h.is_finite()) {
            return invalid(format!("step must be positive, got {h}"));
        }
        let n = self.states();
        if n == 0 {
            return Ok(DiscreteStateSpace {
                phi: DMatrix::zeros(0, 0),
                gamma: DVector::zeros(0),
                c: DVector::zeros(0),
                d: self.d,
            });
        }
        let mut aug = DMatrix::zeros(n + 1, n + 1);
        aug.view_mut((0, 0), (n, n)).copy_from(&(&self.a * h));
        aug.view_mut((0, n), (n, 1)).copy_from(&(&self.b * h));
        let e = aug.exp();
        Ok(DiscreteStateSpace {
            phi: e.view((0, 0), (n, n)).into_owned(),
            gamma: e.view((0, n), (n, 1)).column(0).into_owned(),
            c: self.c.clone(),
            d: self.d,
        })
    }

    /// Step response with the input held at `amp` from `t = 0`.
    pub fn step_response(&self, amp: f64, h: f64, t_end: f64) -> Result<TimeSeries> {
        let sys = self.discretize(h)?;
        let n = (t_end / h).round() as usize;
        let mut x = DVector::zeros(self.states());
        let mut times = Vec::with_capacity(n + 1);
        let mut values = Vec::with_capacity(n + 1);
        for k in 0..=n {
            times.push(k as f64 * h);
            values.push(sys.advance(&mut x, amp));
        }
        Ok(TimeSeries { times, values })
    }
}

/// `x[k+1] = Φ x[k] + Γ u[k]`, `y[k] = C x[k] + D u[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStateSpace {
    pub phi: DMatrix<f64>,
    pub gamma: DVector<f64>,
    pub c: DVector<f64>,
    pub d: f64,
}

impl DiscreteStateSpace {
    pub fn states(&self) -> usize {
        self.phi.nrows()
    }

    /// Emits the output for the current state, then advances one step.
    pub fn advance(&self, x: &mut DVector<f64>, u: f64) -> f64 {
        let y = self.c.dot(x) + self.d * u;
        let mut next = self.gamma.clone() * u;
        next.gemv(1.0, &self.phi, x, 1.0);
        *x = next;
        y
    }

    /// Like [`advance`](Self::advance) but reuses `scratch` instead of allocating.
    pub fn advance_into(&self, x: &mut DVector<f64>, scratch: &mut DVector<f64>, u: f64) -> f64 {
        let y = self.c.dot(x) + self.d * u;
        scratch.copy_from(&self.gamma);
        scratch.gemv(1.0, &self.phi, x, u);
        // gemv computes scratch = 1·Φx + u·scratch = Φx + uΓ
        std::mem::swap(x, scratch);
        y
    }
}

/// State-space realization of an FOPDT element.
///
/// With `s^α ≈ s·k·N(s)/D(s)` (ladder of order `α − 1`), the element is the
/// unity-feedback closure of `1/(T k s) · D(s)/N(s)` driven by `K u`. The
/// forward path is a cascade of first-order sections followed by an
/// integrator, so `A` stays lower triangular up to one feedback column and is
/// well conditioned even with corner frequencies spread over eight decades.
/// Dead time enters as a Padé block in front.
pub fn realize(g: &FoTransferFunction, opts: &RationalizeOptions) -> Result<StateSpace> {
    g.validate()?;
    let core = if is_integer_order(g.order) {
        let t = g.time_const;
        StateSpace {
            a: DMatrix::from_element(1, 1, -1.0 / t),
            b: DVector::from_element(1, 1.0),
            c: DVector::from_element(1, g.gain / t),
            d: 0.0,
        }
    } else {
        let ladder = OustaloupLadder::new(g.order - 1.0, opts.band, opts.cells)?;
        let m = ladder.zeros.len();
        let n = m + 1;
        let integ = 1.0 / (g.time_const * ladder.gain);
        let mut a = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        for i in 0..m {
            // O^{-1} sections: (s + p)/(s + z) = 1 + (p − z)/(s + z)
            a[(i, i)] = -ladder.zeros[i];
            for j in 0..i {
                a[(i, j)] = ladder.poles[j] - ladder.zeros[j];
            }
            b[i] = 1.0;
        }
        for j in 0..m {
            a[(m, j)] = (ladder.poles[j] - ladder.zeros[j]) * integ;
        }
        b[m] = integ;
        // close the loop: e = K u − y with y = x_I
        for i in 0..n {
            a[(i, m)] -= b[i];
        }
        let mut c = DVector::zeros(n);
        c[m] = 1.0;
        StateSpace {
            a,
            b: b * g.gain,
            c,
            d: 0.0,
        }
    };
    if g.delay > 0.0 && opts.pade_order > 0 {
        let (pn, pd) = pade(g.delay, opts.pade_order);
        Ok(StateSpace::from_tf(&pn, &pd)?.series(&core))
    } else {
        Ok(core)
    }
}
