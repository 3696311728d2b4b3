//! Scalar abstractions.
//!
//! Everything numeric in the crate is generic over [`Scalar`], which covers
//! `f32`, `f64` and their complex counterparts. Real-valued results (energies,
//! correlators, probabilities) live in the associated [`Real`] type.

use nalgebra as na;
use num_traits as nt;

pub use na::Complex;

/// Real floating point type used for energies, correlators and probabilities.
pub trait Real:
    Copy
    + Send
    + Sync
    + nt::FloatConst
    + nt::FromPrimitive
    + nt::ToPrimitive
    + na::RealField
    + std::fmt::Display
    + std::iter::Sum
    + 'static
{
    fn lit(x: f64) -> Self {
        <Self as nt::FromPrimitive>::from_f64(x).expect("literal representable")
    }

    fn to_f64_lossy(self) -> f64 {
        nt::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn infinity() -> Self;
    fn nan() -> Self;
}

impl Real for f32 {
    fn infinity() -> Self {
        f32::INFINITY
    }
    fn nan() -> Self {
        f32::NAN
    }
}

impl Real for f64 {
    fn infinity() -> Self {
        f64::INFINITY
    }
    fn nan() -> Self {
        f64::NAN
    }
}

/// Field of amplitudes and matrix elements: real or complex.
pub trait Scalar: Copy + Send + Sync + na::ComplexField<RealField = <Self as Scalar>::Real> + 'static {
    type Real: Real;

    const IS_COMPLEX: bool;

    /// Builds `re + i·im`; `None` for real types when `im` is nonzero.
    fn try_from_parts(re: Self::Real, im: Self::Real) -> Option<Self>;

    /// Like [`Scalar::try_from_parts`] but drops the imaginary part on real types.
    fn from_parts_lossy(re: Self::Real, im: Self::Real) -> Self;

    fn to_complex(self) -> Complex<Self::Real> {
        Complex::new(self.real(), self.imaginary())
    }

    fn norm_sqr(self) -> Self::Real {
        self.modulus_squared()
    }
}

macro_rules! impl_real_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            type Real = $t;
            const IS_COMPLEX: bool = false;

            fn try_from_parts(re: $t, im: $t) -> Option<Self> {
                if im == 0.0 {
                    Some(re)
                } else {
                    None
                }
            }

            fn from_parts_lossy(re: $t, _im: $t) -> Self {
                re
            }
        }
    };
}

macro_rules! impl_complex_scalar {
    ($t:ty) => {
        impl Scalar for Complex<$t> {
            type Real = $t;
            const IS_COMPLEX: bool = true;

            fn try_from_parts(re: $t, im: $t) -> Option<Self> {
                Some(Complex::new(re, im))
            }

            fn from_parts_lossy(re: $t, im: $t) -> Self {
                Complex::new(re, im)
            }
        }
    };
}

impl_real_scalar!(f32);
impl_real_scalar!(f64);
impl_complex_scalar!(f32);
impl_complex_scalar!(f64);

/// Conjugated inner product `Σ conj(a_k) b_k`.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + x.conjugate() * *y)
}

pub fn norm<T: Scalar>(a: &[T]) -> T::Real {
    let sq = a.iter().fold(T::Real::zero(), |acc, x| acc + x.norm_sqr());
    na::ComplexField::sqrt(sq)
}

/// `y += alpha * x`
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

pub fn scale<T: Scalar>(alpha: T, x: &mut [T]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

use nt::Zero;
