//! Polynomial secret sharing over a prime field, and the nested aggregation
//! that turns `n` independently shared secrets into shares of their sum.

use rand_core::{CryptoRng, RngCore};
use thiserror::Error;

use crate::group::Field;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ShamirError {
    #[error("threshold must be at least 1")]
    ZeroThreshold,
    #[error("x = 0 is the secret and cannot be a share coordinate")]
    ZeroCoordinate,
    #[error("duplicate x-coordinate")]
    DuplicateCoordinate,
    #[error("share is not a member of the set")]
    NotInSet,
    #[error("empty share set")]
    Empty,
    #[error("shares have mismatched x-coordinates")]
    MismatchedCoordinates,
}

/// A point `(x, P(x))` on a sharing polynomial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Share<F> {
    pub x: F,
    pub y: F,
}

impl<F: Field> Share<F> {
    pub fn new(x: F, y: F) -> Self {
        Share { x, y }
    }

    /// `x || y`, each in canonical encoding.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.x.to_bytes();
        out.extend(self.y.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != 2 * F::BYTES {
            return None;
        }
        let (x, y) = bytes.split_at(F::BYTES);
        Some(Share {
            x: F::from_canonical_bytes(x)?,
            y: F::from_canonical_bytes(y)?,
        })
    }
}

/// `P(x) = a_0 + lambda_1 x + ... + lambda_{t-1} x^{t-1}` with `a_0` the secret.
///
/// The coefficient list always has length `t`; the leading coefficient may be
/// zero.
#[derive(Clone, PartialEq, Eq)]
pub struct SharingPolynomial<F> {
    coefficients: Vec<F>,
}

impl<F: Field> std::fmt::Debug for SharingPolynomial<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SharingPolynomial")
            .field("threshold", &self.threshold())
            .finish_non_exhaustive()
    }
}

impl<F: Field> SharingPolynomial<F> {
    /// Samples `lambda_1 .. lambda_{t-1}` uniformly from the field.
    pub fn sample<R: RngCore + CryptoRng + ?Sized>(
        secret: F,
        t: usize,
        rng: &mut R,
    ) -> Result<Self, ShamirError> {
        if t == 0 {
            return Err(ShamirError::ZeroThreshold);
        }
        let mut coefficients = Vec::with_capacity(t);
        coefficients.push(secret);
        coefficients.extend((1..t).map(|_| F::random(rng)));
        Ok(SharingPolynomial { coefficients })
    }

    /// Coefficients in ascending degree order, constant term first.
    pub fn from_coefficients(coefficients: Vec<F>) -> Result<Self, ShamirError> {
        if coefficients.is_empty() {
            return Err(ShamirError::ZeroThreshold);
        }
        Ok(SharingPolynomial { coefficients })
    }

    pub fn coefficients(&self) -> &[F] {
        &self.coefficients
    }

    pub fn threshold(&self) -> usize {
        self.coefficients.len()
    }

    pub fn secret(&self) -> F {
        self.coefficients[0]
    }

    /// Horner evaluation.
    pub fn evaluate(&self, x: F) -> F {
        self.coefficients
            .iter()
            .rev()
            .fold(F::zero(), |acc, &c| acc * x + c)
    }

    pub fn eval_share(&self, x: F) -> Result<Share<F>, ShamirError> {
        if x.is_zero() {
            return Err(ShamirError::ZeroCoordinate);
        }
        Ok(Share::new(x, self.evaluate(x)))
    }
}

/// A set of shares with pairwise distinct, nonzero x-coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareSet<F> {
    shares: Vec<Share<F>>,
    threshold: usize,
}

impl<F: Field> ShareSet<F> {
    pub fn new(shares: Vec<Share<F>>, threshold: usize) -> Result<Self, ShamirError> {
        if threshold == 0 {
            return Err(ShamirError::ZeroThreshold);
        }
        if shares.is_empty() {
            return Err(ShamirError::Empty);
        }
        check_coordinates(shares.iter().map(|s| s.x))?;
        Ok(ShareSet { shares, threshold })
    }

    pub fn shares(&self) -> &[Share<F>] {
        &self.shares
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.shares.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }

    pub fn is_quorum(&self) -> bool {
        self.shares.len() >= self.threshold
    }

    pub fn x_coordinates(&self) -> Vec<F> {
        self.shares.iter().map(|s| s.x).collect()
    }

    /// Lagrange coefficient at zero for the member at position `i`.
    pub fn lagrange_coefficient(&self, i: usize) -> Result<F, ShamirError> {
        let share = self.shares.get(i).ok_or(ShamirError::NotInSet)?;
        lagrange_coefficient(share.x, &self.x_coordinates())
    }

    pub fn interpolate_at_zero(&self) -> F {
        // Coordinates were validated on construction.
        interpolate_at_zero(&self.shares).expect("validated share set")
    }
}

fn check_coordinates<F: Field>(xs: impl Iterator<Item = F>) -> Result<(), ShamirError> {
    let mut seen: Vec<Vec<u8>> = Vec::new();
    for x in xs {
        if x.is_zero() {
            return Err(ShamirError::ZeroCoordinate);
        }
        let enc = x.to_bytes();
        if seen.contains(&enc) {
            return Err(ShamirError::DuplicateCoordinate);
        }
        seen.push(enc);
    }
    Ok(())
}

/// `l_i(C) = prod_{c != i} x_c / (x_c - x_i)` for the member `x_i` of `cohort`.
pub fn lagrange_coefficient<F: Field>(x_i: F, cohort: &[F]) -> Result<F, ShamirError> {
    if !cohort.contains(&x_i) {
        return Err(ShamirError::NotInSet);
    }
    check_coordinates(cohort.iter().copied())?;
    let mut num = F::one();
    let mut den = F::one();
    for &x_c in cohort.iter().filter(|&&x| x != x_i) {
        num = num * x_c;
        den = den * (x_c - x_i);
    }
    // Distinct coordinates make every factor of den nonzero.
    Ok(num * den.invert().expect("nonzero denominator"))
}

/// `sum_c y_c * l_c(C)`.
pub fn interpolate_at_zero<F: Field>(shares: &[Share<F>]) -> Result<F, ShamirError> {
    if shares.is_empty() {
        return Err(ShamirError::Empty);
    }
    let xs: Vec<F> = shares.iter().map(|s| s.x).collect();
    check_coordinates(xs.iter().copied())?;
    shares.iter().try_fold(F::zero(), |acc, s| {
        Ok(acc + s.y * lagrange_coefficient(s.x, &xs)?)
    })
}

/// Sums shares taken at a common x-coordinate, producing a share of the
/// sum of the underlying polynomials.
pub fn aggregate_share<F: Field>(incoming: &[Share<F>]) -> Result<Share<F>, ShamirError> {
    let first = incoming.first().ok_or(ShamirError::Empty)?;
    if incoming.iter().any(|s| s.x != first.x) {
        return Err(ShamirError::MismatchedCoordinates);
    }
    let y = incoming.iter().fold(F::zero(), |acc, s| acc + s.y);
    Ok(Share::new(first.x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Fp;
    use proptest::prelude::*;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    type F11 = Fp<11>;
    type F31 = Fp<31>;

    fn f(v: u64) -> F11 {
        Fp::new(v)
    }

    fn poly(c: &[u64]) -> SharingPolynomial<F11> {
        SharingPolynomial::from_coefficients(c.iter().map(|&v| f(v)).collect()).unwrap()
    }

    #[test]
    fn sample_polynomial_contract() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let p = SharingPolynomial::sample(f(4), 1, &mut rng).unwrap();
        assert_eq!(p.coefficients(), &[f(4)]);
        let p = SharingPolynomial::sample(f(4), 3, &mut rng).unwrap();
        assert_eq!(p.evaluate(F11::zero()), f(4));
        assert_eq!(p.threshold(), 3);
        assert_eq!(
            SharingPolynomial::<F11>::sample(f(4), 0, &mut rng),
            Err(ShamirError::ZeroThreshold)
        );

        let a = SharingPolynomial::<F31>::sample(Fp::new(9), 4, &mut ChaCha20Rng::seed_from_u64(5));
        let b = SharingPolynomial::<F31>::sample(Fp::new(9), 4, &mut ChaCha20Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn eval_share_examples() {
        let p = poly(&[5, 3]);
        assert_eq!(p.eval_share(f(1)).unwrap(), Share::new(f(1), f(8)));
        assert_eq!(p.eval_share(f(2)).unwrap(), Share::new(f(2), f(0)));
        assert_eq!(poly(&[6]).eval_share(f(9)).unwrap(), Share::new(f(9), f(6)));
        assert_eq!(p.eval_share(f(0)), Err(ShamirError::ZeroCoordinate));
    }

    #[test]
    fn lagrange_examples() {
        let xs = [f(1), f(2)];
        assert_eq!(lagrange_coefficient(f(1), &xs).unwrap(), f(2));
        assert_eq!(lagrange_coefficient(f(2), &xs).unwrap(), f(10));
        assert_eq!(lagrange_coefficient(f(7), &[f(7)]).unwrap(), f(1));
        assert_eq!(lagrange_coefficient(f(3), &xs), Err(ShamirError::NotInSet));
        assert_eq!(
            lagrange_coefficient(f(1), &[f(1), f(1)]),
            Err(ShamirError::DuplicateCoordinate)
        );
    }

    #[test]
    fn interpolation_examples() {
        let shares = [Share::new(f(1), f(8)), Share::new(f(2), f(0))];
        assert_eq!(interpolate_at_zero(&shares).unwrap(), f(5));
        assert_eq!(interpolate_at_zero(&[Share::new(f(3), f(6))]).unwrap(), f(6));
        assert_eq!(
            interpolate_at_zero(&[Share::new(f(3), f(6)), Share::new(f(3), f(1))]),
            Err(ShamirError::DuplicateCoordinate)
        );
        assert_eq!(interpolate_at_zero::<F11>(&[]), Err(ShamirError::Empty));

        let set = ShareSet::new(shares.to_vec(), 2).unwrap();
        assert_eq!(set.interpolate_at_zero(), f(5));
        assert_eq!(set.lagrange_coefficient(1).unwrap(), f(10));
        assert_eq!(set.lagrange_coefficient(2), Err(ShamirError::NotInSet));
    }

    #[test]
    fn share_set_validation() {
        assert_eq!(ShareSet::<F11>::new(vec![], 1), Err(ShamirError::Empty));
        assert_eq!(
            ShareSet::new(vec![Share::new(f(0), f(1))], 1),
            Err(ShamirError::ZeroCoordinate)
        );
        assert_eq!(
            ShareSet::new(vec![Share::new(f(1), f(1))], 0),
            Err(ShamirError::ZeroThreshold)
        );
    }

    #[test]
    fn aggregate_examples() {
        // P1 = 3 + 2x, P2 = 4 + x
        let (p1, p2) = (poly(&[3, 2]), poly(&[4, 1]));
        let at = |x: u64| {
            aggregate_share(&[p1.eval_share(f(x)).unwrap(), p2.eval_share(f(x)).unwrap()]).unwrap()
        };
        assert_eq!(at(1), Share::new(f(1), f(10)));
        assert_eq!(at(2), Share::new(f(2), f(2)));
        assert_eq!(interpolate_at_zero(&[at(1), at(2)]).unwrap(), f(7));

        let single = Share::new(f(4), f(4));
        assert_eq!(aggregate_share(&[single]).unwrap(), single);
        assert_eq!(
            aggregate_share(&[Share::new(f(1), f(1)), Share::new(f(2), f(1))]),
            Err(ShamirError::MismatchedCoordinates)
        );
    }

    /// For a single share of a degree-1 polynomial over a small field, every
    /// candidate secret is explained by exactly one polynomial.
    #[test]
    fn one_share_reveals_nothing_exhaustive() {
        const L: u64 = 31;
        for x in 1..L {
            for y in 0..L {
                for secret in 0..L {
                    let consistent = (0..L)
                        .filter(|&slope| {
                            let p = SharingPolynomial::<F31>::from_coefficients(vec![
                                Fp::new(secret),
                                Fp::new(slope),
                            ])
                            .unwrap();
                            p.evaluate(Fp::new(x)) == Fp::new(y)
                        })
                        .count();
                    assert_eq!(consistent, 1, "x={x} y={y} secret={secret}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn any_t_shares_recover_the_secret(seed in any::<u64>(), t in 1usize..5, extra in 0usize..3) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let secret = Fp::<1019>::random(&mut rng);
            let p = SharingPolynomial::sample(secret, t, &mut rng).unwrap();
            let shares: Vec<_> = (1..=(t + extra) as u64)
                .map(|x| p.eval_share(Fp::new(x)).unwrap())
                .collect();
            prop_assert_eq!(interpolate_at_zero(&shares[extra..]).unwrap(), secret);
            prop_assert_eq!(interpolate_at_zero(&shares).unwrap(), secret);
        }

        #[test]
        fn share_bytes_roundtrip(x in 1u64..1019, y in 0u64..1019) {
            let s = Share::new(Fp::<1019>::new(x), Fp::new(y));
            prop_assert_eq!(Share::from_bytes(&s.to_bytes()), Some(s));
        }
    }
}
