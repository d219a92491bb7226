//! Cayley-Dickson hypercomplex numbers of dimension `2^n`.
//!
//! Multiplication follows the doubling rule
//! `(a, b)(c, d) = (ac - d*b, da + bc*)`, which yields Hamilton quaternions
//! (`ij = k`) for dimension 4 with components ordered `1, i, j, k`.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Hypercomplex {
    components: Vec<f64>,
}

impl Hypercomplex {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if !components.len().is_power_of_two() {
            return Err(Error::param(format!(
                "hypercomplex dimension {} is not a power of two",
                components.len()
            )));
        }
        Ok(Self { components })
    }

    pub fn zero(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    /// Embeds `values` and pads with zeros up to the next power of two.
    pub fn embed(values: &[f64]) -> Self {
        let dim = values.len().max(1).next_power_of_two();
        let mut components = vec![0.0; dim];
        components[..values.len()].copy_from_slice(values);
        Self { components }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn conj(&self) -> Self {
        let mut c = self.components.clone();
        c.iter_mut().skip(1).for_each(|x| *x = -*x);
        Self { components: c }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.components.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            components: self.components.iter().map(|x| x * s).collect(),
        }
    }
}

fn conj_slice(a: &[f64]) -> Vec<f64> {
    let mut c = a.to_vec();
    c.iter_mut().skip(1).for_each(|x| *x = -*x);
    c
}

/// Recursive doubling product on raw component slices of equal power-of-two length.
pub(crate) fn cd_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    debug_assert_eq!(n, b.len());
    if n == 1 {
        return vec![a[0] * b[0]];
    }
    let h = n / 2;
    let (p, q) = a.split_at(h);
    let (r, s) = b.split_at(h);
    let pr = cd_mul(p, r);
    let sq = cd_mul(&conj_slice(s), q);
    let sp = cd_mul(s, p);
    let qr = cd_mul(q, &conj_slice(r));
    let mut out = Vec::with_capacity(n);
    out.extend(pr.iter().zip(&sq).map(|(x, y)| x - y));
    out.extend(sp.iter().zip(&qr).map(|(x, y)| x + y));
    out
}

impl Mul for &Hypercomplex {
    type Output = Hypercomplex;

    fn mul(self, rhs: &Hypercomplex) -> Hypercomplex {
        assert_eq!(self.dim(), rhs.dim(), "hypercomplex dimension mismatch");
        Hypercomplex {
            components: cd_mul(&self.components, &rhs.components),
        }
    }
}

impl Add for &Hypercomplex {
    type Output = Hypercomplex;

    fn add(self, rhs: &Hypercomplex) -> Hypercomplex {
        assert_eq!(self.dim(), rhs.dim(), "hypercomplex dimension mismatch");
        Hypercomplex {
            components: self
                .components
                .iter()
                .zip(&rhs.components)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &Hypercomplex {
    type Output = Hypercomplex;

    fn sub(self, rhs: &Hypercomplex) -> Hypercomplex {
        assert_eq!(self.dim(), rhs.dim(), "hypercomplex dimension mismatch");
        Hypercomplex {
            components: self
                .components
                .iter()
                .zip(&rhs.components)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Multiplication table of the basis: `e_i e_j = sign[i][j] e_(i xor j)`.
#[derive(Debug, Clone)]
pub(crate) struct BasisTable {
    dim: usize,
    sign: Vec<f64>,
}

impl BasisTable {
    pub(crate) fn new(dim: usize) -> Self {
        assert!(dim.is_power_of_two());
        let mut sign = vec![0.0; dim * dim];
        let basis = |i: usize| {
            let mut v = vec![0.0; dim];
            v[i] = 1.0;
            v
        };
        for i in 0..dim {
            for j in 0..dim {
                let p = cd_mul(&basis(i), &basis(j));
                let k = i ^ j;
                debug_assert!(p
                    .iter()
                    .enumerate()
                    .all(|(idx, &v)| if idx == k { v.abs() == 1.0 } else { v == 0.0 }));
                sign[i * dim + j] = p[k];
            }
        }
        Self { dim, sign }
    }

    pub(crate) fn dim(&self) -> usize {
        self.dim
    }

    /// Sign of `e_i * conj(e_j)`.
    #[inline]
    pub(crate) fn sign_conj(&self, i: usize, j: usize) -> f64 {
        let s = self.sign[i * self.dim + j];
        if j == 0 {
            s
        } else {
            -s
        }
    }
}
