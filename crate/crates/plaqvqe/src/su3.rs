//! SU(3) irrep bookkeeping and the small set of invariant tensors needed for
//! Gauss-law projection on plaquette chains truncated at the 3 representation.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex;
use thiserror::Error;

use crate::scalar::{lit, Real};

/// Irrep label `(p, q)`: `p` upper and `q` lower fundamental indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Irrep {
    pub p: u32,
    pub q: u32,
}

impl Irrep {
    pub const SINGLET: Irrep = Irrep { p: 0, q: 0 };
    pub const TRIPLET: Irrep = Irrep { p: 1, q: 0 };
    pub const ANTITRIPLET: Irrep = Irrep { p: 0, q: 1 };
    pub const SEXTET: Irrep = Irrep { p: 2, q: 0 };
    pub const ANTISEXTET: Irrep = Irrep { p: 0, q: 2 };
    pub const OCTET: Irrep = Irrep { p: 1, q: 1 };

    pub const fn new(p: u32, q: u32) -> Self {
        Irrep { p, q }
    }

    /// Quadratic Casimir `(p² + q² + pq + 3p + 3q) / 3`.
    pub fn casimir<T: Real>(self) -> T {
        casimir(self)
    }

    pub fn dim(self) -> usize {
        irrep_dim(self)
    }

    pub fn conjugate(self) -> Irrep {
        cp_conjugate(self)
    }

    /// N-ality `(p − q) mod 3`.
    pub fn triality(self) -> u32 {
        (self.p + 2 * self.q) % 3
    }
}

impl fmt::Display for Irrep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.p, self.q) {
            (0, 0) => write!(f, "1"),
            (1, 0) => write!(f, "3"),
            (0, 1) => write!(f, "3b"),
            (2, 0) => write!(f, "6"),
            (0, 2) => write!(f, "6b"),
            (1, 1) => write!(f, "8"),
            (p, q) => write!(f, "({p},{q})"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Su3Error {
    #[error("unsupported irrep {0}: only 1, 3 and 3b carry tensors")]
    UnsupportedIrrep(Irrep),
    #[error("no singlet in {0} x {1} x {2}")]
    NoSinglet(Irrep, Irrep, Irrep),
    #[error("cannot parse irrep label {0:?}")]
    BadLabel(String),
}

impl FromStr for Irrep {
    type Err = Su3Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let named = match t {
            "1" => Some(Irrep::SINGLET),
            "3" => Some(Irrep::TRIPLET),
            "3b" | "3bar" | "3̄" => Some(Irrep::ANTITRIPLET),
            "6" => Some(Irrep::SEXTET),
            "6b" | "6bar" | "6̄" => Some(Irrep::ANTISEXTET),
            "8" => Some(Irrep::OCTET),
            _ => None,
        };
        if let Some(r) = named {
            return Ok(r);
        }
        let inner = t
            .strip_prefix('(')
            .and_then(|x| x.strip_suffix(')'))
            .ok_or_else(|| Su3Error::BadLabel(s.to_string()))?;
        let mut it = inner.split(',').map(|x| x.trim().parse::<u32>());
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(p)), Some(Ok(q)), None) => Ok(Irrep::new(p, q)),
            _ => Err(Su3Error::BadLabel(s.to_string())),
        }
    }
}

pub fn casimir<T: Real>(r: Irrep) -> T {
    let (p, q) = (r.p as f64, r.q as f64);
    lit::<T>(p * p + q * q + p * q + 3.0 * p + 3.0 * q) / lit(3.0)
}

pub fn irrep_dim(r: Irrep) -> usize {
    let (p, q) = (r.p as usize, r.q as usize);
    (p + 1) * (q + 1) * (p + q + 2) / 2
}

pub fn cp_conjugate(r: Irrep) -> Irrep {
    Irrep::new(r.q, r.p)
}

fn supported(r: Irrep) -> Result<(), Su3Error> {
    if r == Irrep::SINGLET || r == Irrep::TRIPLET || r == Irrep::ANTITRIPLET {
        Ok(())
    } else {
        Err(Su3Error::UnsupportedIrrep(r))
    }
}

/// Number of singlets in `r1 ⊗ r2 ⊗ r3` for legs drawn from {1, 3, 3b}.
pub fn vertex_singlet_multiplicity(r1: Irrep, r2: Irrep, r3: Irrep) -> Result<usize, Su3Error> {
    for r in [r1, r2, r3] {
        supported(r)?;
    }
    Ok(usize::from((r1.triality() + r2.triality() + r3.triality()) % 3 == 0))
}

/// Dense 3-index tensor over the component spaces of three irreps.
#[derive(Clone, Debug, PartialEq)]
pub struct CgTensor<T> {
    pub irreps: [Irrep; 3],
    pub dims: [usize; 3],
    data: Vec<T>,
}

impl<T: Real> CgTensor<T> {
    pub fn zeros(irreps: [Irrep; 3]) -> Self {
        let dims = irreps.map(irrep_dim);
        CgTensor { irreps, dims, data: vec![T::zero(); dims[0] * dims[1] * dims[2]] }
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[self.offset(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: T) {
        let o = self.offset(i, j, k);
        self.data[o] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Full contraction of the tensor with itself.
    pub fn self_contraction(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc + x * x)
    }

    /// Matrix slice `[j, k]` at fixed first index.
    pub fn slice0(&self, i: usize) -> DMatrix<T> {
        DMatrix::from_fn(self.dims[1], self.dims[2], |j, k| self.get(i, j, k))
    }
}

fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Unit-normalized invariant tensor of `r1 ⊗ r2 ⊗ r3`, first nonzero entry positive.
pub fn singlet_tensor<T: Real>(r1: Irrep, r2: Irrep, r3: Irrep) -> Result<CgTensor<T>, Su3Error> {
    if vertex_singlet_multiplicity(r1, r2, r3)? == 0 {
        return Err(Su3Error::NoSinglet(r1, r2, r3));
    }
    let irreps = [r1, r2, r3];
    let mut t = CgTensor::zeros(irreps);
    let nontrivial: Vec<usize> = (0..3).filter(|&a| irreps[a] != Irrep::SINGLET).collect();
    match nontrivial.len() {
        0 => t.set(0, 0, 0, T::one()),
        2 => {
            let w = lit::<T>(1.0 / 3f64.sqrt());
            for m in 0..3 {
                let mut idx = [0usize; 3];
                idx[nontrivial[0]] = m;
                idx[nontrivial[1]] = m;
                t.set(idx[0], idx[1], idx[2], w);
            }
        }
        3 => {
            let w = 1.0 / 6f64.sqrt();
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        t.set(i, j, k, lit(levi_civita(i, j, k) * w));
                    }
                }
            }
        }
        _ => unreachable!("a single nontrivial leg has no singlet"),
    }
    Ok(t)
}

/// Which link operator acts: `U` in the 3 or `U*` in the 3b.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Insertion {
    Fundamental,
    Conjugate,
}

impl Insertion {
    pub fn irrep(self) -> Irrep {
        match self {
            Insertion::Fundamental => Irrep::TRIPLET,
            Insertion::Conjugate => Irrep::ANTITRIPLET,
        }
    }

    pub fn flip(self) -> Insertion {
        match self {
            Insertion::Fundamental => Insertion::Conjugate,
            Insertion::Conjugate => Insertion::Fundamental,
        }
    }
}

/// Coupling of an inserted fundamental index to a link in `r`, landing in the
/// unique irrep of `{1, 3, 3b}` reachable from `r`.
///
/// Returns `(r', C)` with `C[f, a, α]`, an isometry from `r'` into `ins ⊗ r`:
/// `Σ_{f,a} C[f,a,α] C[f,a,β] = δ_{αβ}`.
pub fn link_insertion<T: Real>(ins: Insertion, r: Irrep) -> Result<(Irrep, CgTensor<T>), Su3Error> {
    supported(r)?;
    let (one, three, bar) = (Irrep::SINGLET, Irrep::TRIPLET, Irrep::ANTITRIPLET);
    let (raise, lower) = match ins {
        Insertion::Fundamental => (three, bar),
        Insertion::Conjugate => (bar, three),
    };
    let target = if r == one {
        raise
    } else if r == raise {
        lower
    } else {
        one
    };
    let mut c = CgTensor::zeros([ins.irrep(), r, target]);
    if r == one {
        for f in 0..3 {
            c.set(f, 0, f, T::one());
        }
    } else if r == raise {
        let w = 1.0 / 2f64.sqrt();
        for f in 0..3 {
            for a in 0..3 {
                for al in 0..3 {
                    c.set(f, a, al, lit(levi_civita(f, a, al) * w));
                }
            }
        }
    } else {
        let w = lit::<T>(1.0 / 3f64.sqrt());
        for f in 0..3 {
            c.set(f, f, 0, w);
        }
    }
    Ok((target, c))
}

/// Generators `T_a` (a = 1..8) in irrep `r`: `λ_a/2` for 3, `−(λ_a/2)*` for 3b, zero for 1.
pub fn generators<T: Real>(r: Irrep) -> Result<Vec<DMatrix<Complex<T>>>, Su3Error> {
    supported(r)?;
    let d = irrep_dim(r);
    if r == Irrep::SINGLET {
        return Ok(vec![DMatrix::zeros(d, d); 8]);
    }
    let z = Complex::new(T::zero(), T::zero());
    let re = |x: f64| Complex::new(lit::<T>(x), T::zero());
    let im = |x: f64| Complex::new(T::zero(), lit::<T>(x));
    let s3 = 1.0 / 3f64.sqrt();
    let mut out = Vec::with_capacity(8);
    let entries: [Vec<(usize, usize, Complex<T>)>; 8] = [
        vec![(0, 1, re(1.0)), (1, 0, re(1.0))],
        vec![(0, 1, im(-1.0)), (1, 0, im(1.0))],
        vec![(0, 0, re(1.0)), (1, 1, re(-1.0))],
        vec![(0, 2, re(1.0)), (2, 0, re(1.0))],
        vec![(0, 2, im(-1.0)), (2, 0, im(1.0))],
        vec![(1, 2, re(1.0)), (2, 1, re(1.0))],
        vec![(1, 2, im(-1.0)), (2, 1, im(1.0))],
        vec![(0, 0, re(s3)), (1, 1, re(s3)), (2, 2, re(-2.0 * s3))],
    ];
    let half = lit::<T>(0.5);
    for list in entries {
        let mut m = DMatrix::from_element(3, 3, z);
        for (i, j, v) in list {
            m[(i, j)] = v * half;
        }
        if r == Irrep::ANTITRIPLET {
            m = -m.map(|c| c.conj());
        }
        out.push(m);
    }
    Ok(out)
}
