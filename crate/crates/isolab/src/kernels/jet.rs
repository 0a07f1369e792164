//! Second-order forward-mode AD scalar: value, gradient and Hessian with
//! respect to a fixed set of active variables.

/// A truncated second-order Taylor jet. `grad` has one entry per active
/// variable; `hess` is the dense symmetric matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

impl Jet2 {
    pub fn constant(value: f64, vars: usize) -> Self {
        Self { value, grad: vec![0.0; vars], hess: vec![0.0; vars * vars] }
    }

    /// Seeds variable `index` among `vars` active variables.
    pub fn variable(value: f64, index: usize, vars: usize) -> Self {
        let mut jet = Self::constant(value, vars);
        jet.grad[index] = 1.0;
        jet
    }

    pub fn vars(&self) -> usize {
        self.grad.len()
    }

    #[inline]
    pub fn hess_at(&self, i: usize, j: usize) -> f64 {
        self.hess[i * self.vars() + j]
    }

    pub fn add(&self, o: &Self) -> Self {
        debug_assert_eq!(self.vars(), o.vars());
        Self {
            value: self.value + o.value,
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| a + b).collect(),
            hess: self.hess.iter().zip(&o.hess).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        debug_assert_eq!(self.vars(), o.vars());
        Self {
            value: self.value - o.value,
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| a - b).collect(),
            hess: self.hess.iter().zip(&o.hess).map(|(a, b)| a - b).collect(),
        }
    }

    /// Product rule through second order:
    /// `(fg)'' = f''g + f'⊗g' + g'⊗f' + fg''`.
    pub fn mul(&self, o: &Self) -> Self {
        let n = self.vars();
        debug_assert_eq!(n, o.vars());
        let value = self.value * o.value;
        let mut grad = vec![0.0; n];
        for i in 0..n {
            grad[i] = self.grad[i] * o.value + self.value * o.grad[i];
        }
        let mut hess = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                hess[i * n + j] = self.hess[i * n + j] * o.value
                    + self.value * o.hess[i * n + j]
                    + self.grad[i] * o.grad[j]
                    + self.grad[j] * o.grad[i];
            }
        }
        Self { value, grad, hess }
    }

    pub fn neg(&self) -> Self {
        Self {
            value: -self.value,
            grad: self.grad.iter().map(|g| -g).collect(),
            hess: self.hess.iter().map(|h| -h).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            value: c * self.value,
            grad: self.grad.iter().map(|g| c * g).collect(),
            hess: self.hess.iter().map(|h| c * h).collect(),
        }
    }

    /// `1/f`: grad `-f'/f²`, hess `-f''/f² + 2 f'⊗f'/f³`.
    pub fn recip(&self) -> Self {
        let n = self.vars();
        let inv = 1.0 / self.value;
        let inv2 = inv * inv;
        let inv3 = inv2 * inv;
        let mut grad = vec![0.0; n];
        for i in 0..n {
            grad[i] = -self.grad[i] * inv2;
        }
        let mut hess = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                hess[i * n + j] =
                    -self.hess[i * n + j] * inv2 + 2.0 * self.grad[i] * self.grad[j] * inv3;
            }
        }
        Self { value: inv, grad, hess }
    }

    /// Integer power by repeated squaring.
    pub fn powu(&self, exp: u32) -> Self {
        let mut result = Jet2::constant(1.0, self.vars());
        let mut base = self.clone();
        let mut e = exp;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    /// Maximum Hessian asymmetry; the arithmetic keeps it at exact zero.
    pub fn hess_asymmetry(&self) -> f64 {
        let n = self.vars();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((self.hess_at(i, j) - self.hess_at(j, i)).abs());
            }
        }
        worst
    }
}

/// Arithmetic shared by `f64` and [`Jet2`], letting kernel formulas be
/// written once and evaluated at any derivative order.
pub trait Scalar: Clone {
    fn value(&self) -> f64;
    fn zero_like(&self) -> Self;
    fn one_like(&self) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn scale(&self, c: f64) -> Self;
    fn recip(&self) -> Self;

    fn powu(&self, exp: u32) -> Self {
        let mut result = self.one_like();
        let mut base = self.clone();
        let mut e = exp;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        result
    }
}

impl Scalar for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn zero_like(&self) -> Self {
        0.0
    }
    fn one_like(&self) -> Self {
        1.0
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn scale(&self, c: f64) -> Self {
        c * self
    }
    fn recip(&self) -> Self {
        1.0 / self
    }
}

impl Scalar for Jet2 {
    fn value(&self) -> f64 {
        self.value
    }
    fn zero_like(&self) -> Self {
        Jet2::constant(0.0, self.vars())
    }
    fn one_like(&self) -> Self {
        Jet2::constant(1.0, self.vars())
    }
    fn add(&self, o: &Self) -> Self {
        Jet2::add(self, o)
    }
    fn sub(&self, o: &Self) -> Self {
        Jet2::sub(self, o)
    }
    fn mul(&self, o: &Self) -> Self {
        Jet2::mul(self, o)
    }
    fn neg(&self) -> Self {
        Jet2::neg(self)
    }
    fn scale(&self, c: f64) -> Self {
        Jet2::scale(self, c)
    }
    fn recip(&self) -> Self {
        Jet2::recip(self)
    }
    fn powu(&self, exp: u32) -> Self {
        Jet2::powu(self, exp)
    }
}
