//! Fixed-dimension linear-algebra primitives the estimator is built from:
//! the skew map, column-major stack and Kronecker operators, soft-iron matrix
//! packing, and a matrix exponential.

use nalgebra::{DMatrix, DVector, Dim, Matrix, RawStorage, SMatrix, SVector};

use crate::{real, Error, Mat3, Real, Vec3};

/// Cross-product matrix: `skew(x) * y == x.cross(&y)`, `skew(x)^T == -skew(x)`.
pub fn skew<S: Real>(x: &Vec3<S>) -> Mat3<S> {
    let z = S::zero();
    Mat3::new(z, -x.z, x.y, x.z, z, -x.x, -x.y, x.x, z)
}

/// The 6 unique entries of the symmetric soft-iron matrix
/// `T = [a b c; b d e; c e f]`, ordered `(a, b, c, d, e, f)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SoftIronParams<S: Real = f64> {
    pub a: S,
    pub b: S,
    pub c: S,
    pub d: S,
    pub e: S,
    pub f: S,
}

impl<S: Real> SoftIronParams<S> {
    pub fn new(a: S, b: S, c: S, d: S, e: S, f: S) -> Self {
        Self { a, b, c, d, e, f }
    }

    /// Identity packing: `T = I`.
    pub fn identity() -> Self {
        let (o, z) = (S::one(), S::zero());
        Self::new(o, z, z, o, z, o)
    }

    /// Packs the parameters into the symmetric matrix `[a b c; b d e; c e f]`.
    pub fn pack(&self) -> Mat3<S> {
        Mat3::new(
            self.a, self.b, self.c, self.b, self.d, self.e, self.c, self.e, self.f,
        )
    }

    /// Extracts the 6 unique entries of a symmetric matrix (upper triangle).
    pub fn from_matrix(t: &Mat3<S>) -> Self {
        Self::new(t[(0, 0)], t[(0, 1)], t[(0, 2)], t[(1, 1)], t[(1, 2)], t[(2, 2)])
    }

    pub fn as_vector(&self) -> SVector<S, 6> {
        SVector::<S, 6>::new(self.a, self.b, self.c, self.d, self.e, self.f)
    }

    pub fn from_vector(v: &SVector<S, 6>) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    /// True when the packed matrix is symmetric positive definite.
    pub fn is_positive_definite(&self) -> bool {
        let eig = self.pack().symmetric_eigenvalues();
        eig.iter().all(|l| *l > S::zero())
    }
}

impl<S: Real> From<[S; 6]> for SoftIronParams<S> {
    fn from(v: [S; 6]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }
}

/// Column-major stack operator: element `(i, j)` of an `m x n` matrix lands at
/// index `j*m + i`, i.e. `A^s = [a11 .. am1 a12 .. am2 ..]^T`.
pub fn stack<S: Real, R: Dim, C: Dim, St: RawStorage<S, R, C>>(
    m: &Matrix<S, R, C, St>,
) -> DVector<S> {
    // nalgebra storage is column-major, so iteration order is already the
    // stack order.
    DVector::from_iterator(m.nrows() * m.ncols(), m.iter().copied())
}

/// Kronecker product: block `(i, j)` of the result equals `a[(i, j)] * b`.
pub fn kron<S, R1, C1, St1, R2, C2, St2>(
    a: &Matrix<S, R1, C1, St1>,
    b: &Matrix<S, R2, C2, St2>,
) -> DMatrix<S>
where
    S: Real,
    R1: Dim,
    C1: Dim,
    St1: RawStorage<S, R1, C1>,
    R2: Dim,
    C2: Dim,
    St2: RawStorage<S, R2, C2>,
{
    let (p, q) = a.shape();
    let (r, s) = b.shape();
    DMatrix::from_fn(p * r, q * s, |i, j| a[(i / r, j / s)] * b[(i % r, j % s)])
}

/// Constant 9x6 selection matrix `D` with `D * t_p == stack(pack(t_p))` for
/// every parameter vector; the Jacobian of the stacked soft-iron matrix with
/// respect to its unique entries.
pub fn soft_iron_stack_jacobian<S: Real>() -> SMatrix<S, 9, 6> {
    // stack([a b c; b d e; c e f]) = [a b c b d e c e f]^T
    const SELECT: [usize; 9] = [0, 1, 2, 1, 3, 4, 2, 4, 5];
    let mut d = SMatrix::<S, 9, 6>::zeros();
    for (row, &col) in SELECT.iter().enumerate() {
        d[(row, col)] = S::one();
    }
    d
}

/// Matrix exponential by scaling-and-squaring with a truncated Taylor series.
///
/// The series is summed until the term norm drops below `tol` relative to the
/// partial sum; accuracy is well under 1e-12 relative in the operating regime
/// (`||A * tau|| <= 1`). Non-finite entries are rejected.
pub fn expm<S: Real, const N: usize>(
    a: &SMatrix<S, N, N>,
    tol: S,
) -> Result<SMatrix<S, N, N>, Error> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput("expm"));
    }
    let tol = tol.max(S::default_epsilon());

    // Halve until the norm is at most 1/2, exponentiate, square back.
    let mut squarings = 0u32;
    let mut norm = a.norm();
    let half = real::<S>(0.5);
    while norm > half {
        norm *= half;
        squarings += 1;
    }
    let scale = real::<S>((0.5f64).powi(squarings as i32));
    let b = a * scale;

    let mut sum = SMatrix::<S, N, N>::identity();
    let mut term = SMatrix::<S, N, N>::identity();
    for j in 1..=40 {
        term = (term * b) * real::<S>(1.0 / j as f64);
        sum += term;
        if term.norm() <= tol * sum.norm() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Matrix2, RowVector3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(7)
    }

    fn rand_vec3(rng: &mut impl Rng) -> Vec3<f64> {
        Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    /// Componentwise cross product, independent of the skew construction.
    fn cross_oracle(x: &Vec3<f64>, y: &Vec3<f64>) -> Vec3<f64> {
        Vec3::new(
            x.y * y.z - x.z * y.y,
            x.z * y.x - x.x * y.z,
            x.x * y.y - x.y * y.x,
        )
    }

    /// Rodrigues rotation about the z axis.
    fn rot_z(theta: f64) -> Mat3<f64> {
        let (s, c) = theta.sin_cos();
        Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    #[test]
    fn skew_zero_is_zero_matrix() {
        assert_eq!(skew(&Vec3::<f64>::zeros()), Mat3::zeros());
    }

    #[test]
    fn skew_unit_z() {
        let j = skew(&Vec3::new(0.0, 0.0, 1.0));
        let expected = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(j, expected);
    }

    #[test]
    fn skew_matches_cross_product() {
        let mut rng = rng();
        for _ in 0..100 {
            let x = rand_vec3(&mut rng);
            let y = rand_vec3(&mut rng);
            assert_relative_eq!(skew(&x) * y, cross_oracle(&x, &y), epsilon = 1e-15);
            // skew(x) * x == 0
            assert!((skew(&x) * x).norm() < 1e-15);
            // antisymmetry
            assert_eq!(skew(&x).transpose(), -skew(&x));
        }
    }

    #[test]
    fn pack_identity() {
        assert_eq!(SoftIronParams::<f64>::identity().pack(), Mat3::identity());
    }

    #[test]
    fn pack_reference_parameters() {
        let tp = SoftIronParams::from([1.1, 0.1, 0.03, 0.95, 0.01, 1.2]);
        let t = tp.pack();
        let expected = Mat3::new(1.1, 0.1, 0.03, 0.1, 0.95, 0.01, 0.03, 0.01, 1.2);
        assert_eq!(t, expected);
        assert!(tp.is_positive_definite());
    }

    #[test]
    fn stack_is_column_major() {
        assert_eq!(
            stack(&Matrix2::<f64>::identity()).as_slice(),
            [1.0, 0.0, 0.0, 1.0]
        );
        // [[1, 2], [3, 4]] stacks columns first
        let m = Matrix2::new(1.0, 2.0, 3.0, 4.0);
        assert_eq!(stack(&m).as_slice(), [1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn stack_of_packed_soft_iron() {
        let tp = SoftIronParams::from([1.1, 0.1, 0.03, 0.95, 0.01, 1.2]);
        let s = stack(&tp.pack());
        // definition applied by hand: [a b c b d e c e f]
        let expected = [1.1, 0.1, 0.03, 0.1, 0.95, 0.01, 0.03, 0.01, 1.2];
        assert_eq!(s.as_slice(), expected);
    }

    #[test]
    fn kron_identity_left() {
        let b = Mat3::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0);
        let one = nalgebra::Matrix1::new(1.0);
        assert_eq!(kron(&one, &b), DMatrix::from_iterator(3, 3, b.iter().copied()));
    }

    #[test]
    fn kron_row_with_identity_blocks() {
        let a = nalgebra::RowVector2::new(1.0, 2.0);
        let k = kron(&a, &Matrix2::<f64>::identity());
        let expected = nalgebra::DMatrix::from_row_slice(
            2,
            4,
            &[1.0, 0.0, 2.0, 0.0, 0.0, 1.0, 0.0, 2.0],
        );
        assert_eq!(k, expected);
    }

    #[test]
    fn kron_vec_identity() {
        // (m^T (x) I3) * stack(T) == T * m
        let mut rng = rng();
        for _ in 0..100 {
            let m = rand_vec3(&mut rng);
            let t = Mat3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let lhs = kron(&RowVector3::new(m.x, m.y, m.z), &Mat3::<f64>::identity())
                * stack(&t);
            let rhs = t * m;
            for i in 0..3 {
                assert_relative_eq!(lhs[i], rhs[i], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn soft_iron_jacobian_selects_entries() {
        let d = soft_iron_stack_jacobian::<f64>();
        let tp = SVector::<f64, 6>::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0);
        let expected = [1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0];
        assert_eq!((d * tp).as_slice(), expected);
        // diagonal entries appear once, off-diagonals twice
        let col_sums: Vec<f64> = (0..6).map(|j| d.column(j).sum()).collect();
        assert_eq!(col_sums, [1.0, 2.0, 2.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn soft_iron_jacobian_consistent_with_stack_of_pack() {
        let d = soft_iron_stack_jacobian::<f64>();
        let mut rng = rng();
        for _ in 0..100 {
            let tp = SoftIronParams::from([
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ]);
            let via_jacobian = d * tp.as_vector();
            let via_stack = stack(&tp.pack());
            assert_eq!(via_jacobian.as_slice(), via_stack.as_slice());
        }
    }

    #[test]
    fn expm_zero_is_identity() {
        let e = expm(&Mat3::<f64>::zeros(), 1e-15).unwrap();
        assert_eq!(e, Mat3::identity());
    }

    #[test]
    fn expm_diagonal() {
        let a = Mat3::from_diagonal(&Vec3::new(0.3, -1.2, 2.0));
        let e = expm(&a, 1e-15).unwrap();
        for (i, l) in [0.3f64, -1.2, 2.0].iter().enumerate() {
            assert_relative_eq!(e[(i, i)], l.exp(), epsilon = 1e-13);
        }
    }

    #[test]
    fn expm_skew_is_rotation() {
        for theta in [0.01, 0.5, 1.3, -2.2] {
            let e = expm(&skew(&Vec3::new(0.0, 0.0, theta)), 1e-15).unwrap();
            assert_relative_eq!(e, rot_z(theta), epsilon = 1e-12);
        }
    }

    #[test]
    fn expm_inverse_identity() {
        let mut rng = rng();
        for _ in 0..100 {
            let mut a = Mat3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let n = a.norm();
            if n > 2.0 {
                a *= 2.0 / n;
            }
            let prod = expm(&a, 1e-15).unwrap() * expm(&(-a), 1e-15).unwrap();
            assert_relative_eq!(prod, Mat3::identity(), epsilon = 1e-10);
        }
    }

    #[test]
    fn expm_rejects_non_finite() {
        let mut a = Mat3::<f64>::zeros();
        a[(0, 0)] = f64::NAN;
        assert_eq!(expm(&a, 1e-15), Err(Error::NonFiniteInput("expm")));
    }

    #[test]
    fn expm_works_in_f32() {
        let e = expm(&skew(&Vec3::<f32>::new(0.0, 0.0, 0.5f32)), 1e-6).unwrap();
        assert_relative_eq!(e[(0, 0)], 0.5f32.cos(), epsilon = 1e-6);
    }

    proptest! {
        #[test]
        fn pack_is_exactly_symmetric(v in proptest::array::uniform6(-10.0f64..10.0)) {
            let t = SoftIronParams::from(v).pack();
            prop_assert_eq!(t - t.transpose(), Mat3::zeros());
        }

        #[test]
        fn skew_annihilates_its_argument(
            x in -10.0f64..10.0, y in -10.0f64..10.0, z in -10.0f64..10.0
        ) {
            let v = Vec3::new(x, y, z);
            prop_assert!((skew(&v) * v).norm() <= 1e-12 * v.norm().max(1.0));
        }
    }
}
