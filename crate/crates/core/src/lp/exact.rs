use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed, ToPrimitive, Zero};

use super::simplex::Field;

/// Exact rational scalar; every finite `f64` converts without rounding.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Rational(pub BigRational);

impl Rational {
    pub fn from_f64_exact(x: f64) -> Self {
        Rational(BigRational::from_f64(x).expect("finite input"))
    }
}

impl Field for Rational {
    fn zero() -> Self {
        Rational(BigRational::zero())
    }
    fn one() -> Self {
        Rational(BigRational::from_integer(BigInt::from(1)))
    }
    fn from_f64(x: f64) -> Self {
        Self::from_f64_exact(x)
    }
    fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
    fn add(&self, o: &Self) -> Self {
        Rational(&self.0 + &o.0)
    }
    fn sub(&self, o: &Self) -> Self {
        Rational(&self.0 - &o.0)
    }
    fn mul(&self, o: &Self) -> Self {
        Rational(&self.0 * &o.0)
    }
    fn div(&self, o: &Self) -> Self {
        Rational(&self.0 / &o.0)
    }
    fn neg(&self) -> Self {
        Rational(-&self.0)
    }
    fn is_pos(&self) -> bool {
        self.0.is_positive()
    }
    fn is_neg(&self) -> bool {
        self.0.is_negative()
    }
    fn is_exact_zero(&self) -> bool {
        self.0.is_zero()
    }
    fn lt(&self, o: &Self) -> bool {
        self.0 < o.0
    }
}
