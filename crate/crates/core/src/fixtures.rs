//! Named benchmark systems.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::QuadraticSystem;

/// Parameters of the modified Lorenz-Stenflo system.
pub const MLS_SIGMA: f64 = 2.0;
pub const MLS_KAPPA: f64 = 0.7;
pub const MLS_BETA: f64 = 26.0;
pub const MLS_GAMMA: f64 = 1.5;

/// Sets `Q[i][(j, k)]` and its mirror so that `x^T Q_i x` gains `coef * x_j x_k`.
fn bilinear(q: &mut [DMatrix<f64>], i: usize, j: usize, k: usize, coef: f64) {
    if j == k {
        q[i][(j, j)] += coef;
    } else {
        q[i][(j, k)] += coef / 2.0;
        q[i][(k, j)] += coef / 2.0;
    }
}

/// The Lorenz system with parameters `(sigma, rho, eta)`.
pub fn lorenz(sigma: f64, rho: f64, eta: f64) -> QuadraticSystem<f64> {
    let a = DMatrix::from_row_slice(3, 3, &[-sigma, sigma, 0.0, rho, -1.0, 0.0, 0.0, 0.0, -eta]);
    let mut q = vec![DMatrix::zeros(3, 3); 3];
    bilinear(&mut q, 1, 0, 2, -1.0);
    bilinear(&mut q, 2, 0, 1, 1.0);
    QuadraticSystem::new(a, q, DVector::zeros(3)).expect("lorenz fixture is well formed")
}

/// Modified Lorenz-Stenflo system in states `(x, y, z, w)`.
pub fn mls() -> QuadraticSystem<f64> {
    let (s, k, b, g) = (MLS_SIGMA, MLS_KAPPA, MLS_BETA, MLS_GAMMA);
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        -s,   s,    0.0, g,
        b,    -1.0, 0.0, 0.0,
        0.0,  0.0,  -k,  0.0,
        -1.0, 0.0,  0.0, -s,
    ]);
    let mut q = vec![DMatrix::zeros(4, 4); 4];
    bilinear(&mut q, 1, 0, 2, -1.0);
    bilinear(&mut q, 2, 0, 1, 2.0);
    QuadraticSystem::new(a, q, DVector::zeros(4)).expect("mls fixture is well formed")
}

/// Two-state system with a globally asymptotically stable equilibrium at (0, 1/4).
pub fn academic2d() -> QuadraticSystem<f64> {
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -4.0]);
    let mut q = vec![DMatrix::zeros(2, 2); 2];
    bilinear(&mut q, 0, 0, 1, -1.0);
    bilinear(&mut q, 1, 0, 0, 1.0);
    QuadraticSystem::new(a, q, DVector::from_column_slice(&[0.0, 1.0]))
        .expect("academic fixture is well formed")
}

/// Purely linear system `x' = A x`.
pub fn linear(a: &DMatrix<f64>) -> QuadraticSystem<f64> {
    let n = a.nrows();
    QuadraticSystem::new(a.clone(), vec![DMatrix::zeros(n, n); n], DVector::zeros(n))
        .expect("square matrix")
}

/// Random system whose nonlinearity is lossless in the standard sense
/// (`y^T Q(y) = 0`) with a Hurwitz state matrix whose symmetric part is
/// negative definite. `Q(y) = W(y) y` where `W` is linear in `y` and skew.
pub fn random_lossless(n: usize, seed: u64) -> QuadraticSystem<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = || rng.random_range(-1.0..1.0);
    let skews: Vec<DMatrix<f64>> = (0..n)
        .map(|_| {
            let r = DMatrix::from_fn(n, n, |_, _| gauss());
            &r - r.transpose()
        })
        .collect();
    let q: Vec<DMatrix<f64>> = (0..n)
        .map(|i| {
            let m = DMatrix::from_fn(n, n, |j, k| skews[k][(i, j)]);
            (&m + m.transpose()) * 0.5
        })
        .collect();
    let r = DMatrix::from_fn(n, n, |_, _| gauss());
    let k = DMatrix::from_fn(n, n, |_, _| gauss());
    let a = -(&r * r.transpose()) * 0.5 - DMatrix::identity(n, n) * 0.5 + (&k - k.transpose());
    let d = DVector::from_fn(n, |_, _| 2.0 * gauss());
    QuadraticSystem::new(a, q, d).expect("constructed consistently")
}

/// Looks up a fixture by name: `lorenz`, `lorenz(s,r,e)`, `mls`, `academic2d`.
pub fn by_name(name: &str) -> Result<QuadraticSystem<f64>> {
    let name = name.trim();
    match name {
        "mls" => return Ok(mls()),
        "academic2d" => return Ok(academic2d()),
        "lorenz" => return Ok(lorenz(10.0, 28.0, 8.0 / 3.0)),
        _ => {}
    }
    if let Some(args) = name
        .strip_prefix("lorenz(")
        .and_then(|s| s.strip_suffix(')'))
    {
        let vals: Vec<f64> = args
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("bad lorenz parameters '{args}': {e}")))?;
        if let [s, r, e] = vals[..] {
            return Ok(lorenz(s, r, e));
        }
        return Err(Error::Config("lorenz takes three parameters".into()));
    }
    Err(Error::Config(format!("unknown fixture '{name}'")))
}

/// Names accepted by [`by_name`].
pub const NAMES: [&str; 3] = ["lorenz(sigma,rho,eta)", "mls", "academic2d"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_resolves() {
        assert_eq!(by_name("mls").unwrap().dim(), 4);
        assert_eq!(by_name("academic2d").unwrap().dim(), 2);
        let l = by_name("lorenz(10, 28, 2.6666666666666665)").unwrap();
        assert_eq!(l.a()[(2, 2)], -8.0 / 3.0);
        assert!(by_name("duffing").is_err());
        assert!(by_name("lorenz(1,2)").is_err());
    }

    #[test]
    fn mls_parameters_exact() {
        let s = mls();
        assert_eq!(s.a()[(0, 0)], -2.0);
        assert_eq!(s.a()[(0, 3)], 1.5);
        assert_eq!(s.a()[(1, 0)], 26.0);
        assert_eq!(s.a()[(2, 2)], -0.7);
        assert_eq!(s.a()[(3, 3)], -2.0);
    }

    #[test]
    fn random_lossless_is_energy_preserving() {
        let s = random_lossless(6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let y = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            assert!(y.dot(&s.eval_quadratic(&y)).abs() < 1e-12);
        }
        let sym = s.a() + s.a().transpose();
        assert!(crate::linalg::lambda_max(&sym) < 0.0);
    }
}
