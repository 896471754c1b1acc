use std::ops::{Add, Mul, Neg, Sub};

use super::C64;

/// Unnormalized two-component complex vector.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Spinor(pub [C64; 2]);

impl Spinor {
    pub fn norm_sqr(&self) -> f64 {
        self.0[0].norm_sqr() + self.0[1].norm_sqr()
    }

    /// `self† other`.
    pub fn inner(&self, other: &Spinor) -> C64 {
        self.0[0].conj() * other.0[0] + self.0[1].conj() * other.0[1]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scale_c(self, k: C64) -> Spinor {
        Spinor([self.0[0] * k, self.0[1] * k])
    }
}

impl Add for Spinor {
    type Output = Spinor;
    fn add(self, o: Spinor) -> Spinor {
        Spinor([self.0[0] + o.0[0], self.0[1] + o.0[1]])
    }
}

impl Sub for Spinor {
    type Output = Spinor;
    fn sub(self, o: Spinor) -> Spinor {
        Spinor([self.0[0] - o.0[0], self.0[1] - o.0[1]])
    }
}

impl Mul<f64> for Spinor {
    type Output = Spinor;
    fn mul(self, k: f64) -> Spinor {
        Spinor([self.0[0] * k, self.0[1] * k])
    }
}

impl Neg for Spinor {
    type Output = Spinor;
    fn neg(self) -> Spinor {
        Spinor([-self.0[0], -self.0[1]])
    }
}

/// Row-major 2×2 complex matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[C64; 2]; 2]);

impl Mat2 {
    pub fn zero() -> Self {
        Mat2([[C64::new(0.0, 0.0); 2]; 2])
    }

    pub fn identity() -> Self {
        let (o, z) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        Mat2([[o, z], [z, o]])
    }

    pub fn apply(&self, v: &Spinor) -> Spinor {
        let m = &self.0;
        Spinor([
            m[0][0] * v.0[0] + m[0][1] * v.0[1],
            m[1][0] * v.0[0] + m[1][1] * v.0[1],
        ])
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        let mut out = [[C64::new(0.0, 0.0); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        let mut out = self.0;
        for (row, orow) in out.iter_mut().zip(&o.0) {
            for (c, oc) in row.iter_mut().zip(orow) {
                *c += oc;
            }
        }
        Mat2(out)
    }

    pub fn scale(&self, k: C64) -> Mat2 {
        let mut out = self.0;
        out.iter_mut().flatten().for_each(|c| *c *= k);
        Mat2(out)
    }

    pub fn dagger(&self) -> Mat2 {
        let m = &self.0;
        Mat2([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn approx_eq(&self, o: &Mat2, tol: f64) -> bool {
        self.0
            .iter()
            .flatten()
            .zip(o.0.iter().flatten())
            .all(|(a, b)| (a - b).norm() <= tol)
    }

    /// `|Tr(A†B)| / 2`: 1 iff the matrices agree up to a global phase
    /// (for unitaries).
    pub fn phase_overlap(&self, o: &Mat2) -> f64 {
        self.dagger().mul(o).trace().norm() / 2.0
    }

    /// Equality up to a global phase.
    pub fn eq_up_to_phase(&self, o: &Mat2, tol: f64) -> bool {
        let t = self.dagger().mul(o).trace();
        if t.norm() < 1e-12 {
            return false;
        }
        let phase = t / t.norm();
        self.scale(phase).approx_eq(o, tol)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.dagger().mul(self).approx_eq(&Mat2::identity(), tol)
    }
}
