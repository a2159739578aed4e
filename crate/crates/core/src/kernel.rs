//! Affine pairwise averaging on the complete graph `K_n`.
//!
//! When node `i` ticks it picks `j != i` uniformly and both apply
//!
//! ```text
//! x_i <- (1 - a_i) x_i + a_j x_j
//! x_j <- (1 - a_j) x_j + a_i x_i
//! ```
//!
//! with every `a_k` strictly inside `(1/3, 1/2)`. The sum is invariant and
//! `E[|x(t)|^2]` contracts at least by `1 - 8/(9(n-1))` per tick on the
//! zero-sum subspace. The perturbed variant adds `+nu` to `x_i` and `-nu`
//! to `x_j` after the update.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};

pub const ALPHA_LOW: f64 = 1.0 / 3.0;
pub const ALPHA_HIGH: f64 = 0.5;

/// Per-node affine weights, each strictly inside `(1/3, 1/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Alpha(Vec<f64>);

impl Alpha {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > ALPHA_LOW && v < ALPHA_HIGH))
        {
            return invalid(format!("alpha[{i}] = {v} outside (1/3, 1/2)"));
        }
        Ok(Self(values))
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    /// Entries drawn uniformly from the open interval.
    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        let values = (0..n)
            .map(|_| loop {
                let v = rng.random_range(ALPHA_LOW..ALPHA_HIGH);
                if v > ALPHA_LOW {
                    break v;
                }
            })
            .collect();
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffineSystem {
    pub alpha: Alpha,
    pub x: Vec<f64>,
}

impl AffineSystem {
    pub fn new(alpha: Alpha, x: Vec<f64>) -> Result<Self> {
        if alpha.len() != x.len() {
            return invalid("alpha and value vector lengths differ");
        }
        Ok(Self { alpha, x })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedSystem {
    pub alpha: Alpha,
    pub y: Vec<f64>,
    /// Bound on `|nu(t)|`.
    pub eps: f64,
}

fn check_pair(len: usize, i: usize, j: usize) -> Result<()> {
    if i == j {
        return invalid(format!("pair update needs distinct nodes, got {i} twice"));
    }
    if i >= len || j >= len {
        return invalid(format!("pair ({i}, {j}) out of range for {len} nodes"));
    }
    Ok(())
}

#[inline]
fn pair_update_unchecked(x: &mut [f64], i: usize, j: usize, alpha: &[f64]) {
    let (xi, xj) = (x[i], x[j]);
    x[i] = (1.0 - alpha[i]) * xi + alpha[j] * xj;
    x[j] = (1.0 - alpha[j]) * xj + alpha[i] * xi;
}

#[inline]
fn perturbed_update_unchecked(y: &mut [f64], i: usize, j: usize, alpha: &[f64], nu: f64) {
    pair_update_unchecked(y, i, j, alpha);
    y[i] += nu;
    y[j] -= nu;
}

pub fn affine_pair_update(x: &mut [f64], i: usize, j: usize, alpha: &Alpha) -> Result<()> {
    check_pair(x.len(), i, j)?;
    pair_update_unchecked(x, i, j, alpha.as_slice());
    Ok(())
}

pub fn perturbed_pair_update(
    y: &mut [f64],
    i: usize,
    j: usize,
    alpha: &Alpha,
    nu: f64,
) -> Result<()> {
    check_pair(y.len(), i, j)?;
    perturbed_update_unchecked(y, i, j, alpha.as_slice(), nu);
    Ok(())
}

/// `E[A^T A]` for one uniformly chosen ordered pair:
///
/// `I (1 - 1/(n-1)) + 11^T/(n(n-1)) - bb^T/(n(n-1)) + diag(b_i^2)/(n-1)`
/// with `b = 1 - 2 alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMomentMatrix(pub DMatrix<f64>);

pub fn expected_quadratic_form(alpha: &Alpha) -> Result<SecondMomentMatrix> {
    let n = alpha.len();
    if n < 2 {
        return invalid(format!("second moment needs n >= 2, got {n}"));
    }
    Ok(SecondMomentMatrix(second_moment(alpha.as_slice())))
}

fn second_moment(alpha: &[f64]) -> DMatrix<f64> {
    let n = alpha.len();
    let nf = n as f64;
    let b: Vec<f64> = alpha.iter().map(|a| 1.0 - 2.0 * a).collect();
    let pair = 1.0 / (nf * (nf - 1.0));
    DMatrix::from_fn(n, n, |r, c| {
        let mut v = pair - b[r] * b[c] * pair;
        if r == c {
            v += 1.0 - 1.0 / (nf - 1.0) + b[r] * b[r] / (nf - 1.0);
        }
        v
    })
}

/// Largest `v^T M v` over unit `v` orthogonal to the all-ones vector.
pub fn contraction_factor(alpha: &Alpha) -> Result<f64> {
    let SecondMomentMatrix(m) = expected_quadratic_form(alpha)?;
    Ok(max_on_zero_sum(&m))
}

fn max_on_zero_sum(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let proj = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let eig = SymmetricEigen::new(&proj * m * &proj);
    eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `1 - 8/(9(n-1))`
pub fn contraction_bound(n: usize) -> f64 {
    1.0 - 8.0 / (9.0 * (n as f64 - 1.0))
}

/// `(1 - 1/(2n))^t`
pub fn mean_square_bound(t: usize, n: usize) -> f64 {
    (1.0 - 1.0 / (2.0 * n as f64)).powf(t as f64)
}

/// `min(1, eps^-2 (1 - 1/(2n))^t)`
pub fn tail_bound(t: usize, n: usize, eps: f64) -> f64 {
    (mean_square_bound(t, n) / (eps * eps)).min(1.0)
}

/// `n^(a/2) ((1 - 1/(2n))^(t/2) |y0| + 8 sqrt(2) n^(3/2) eps)`
pub fn perturbed_norm_bound(t: usize, n: usize, a: f64, eps: f64, norm_y0: f64) -> f64 {
    let nf = n as f64;
    let decay = (1.0 - 1.0 / (2.0 * nf)).powf(t as f64 / 2.0);
    nf.powf(a / 2.0) * (decay * norm_y0 + 8.0 * std::f64::consts::SQRT_2 * nf.powf(1.5) * eps)
}

/// Ordered pair: `i` uniform, `j` uniform over the other `n - 1` nodes.
#[inline]
pub fn sample_pair(n: usize, rng: &mut impl Rng) -> (usize, usize) {
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

fn check_zero_sum(x0: &[f64]) -> Result<()> {
    let sum: f64 = x0.iter().sum();
    let scale: f64 = x0.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
    if sum.abs() > 1e-9 * scale {
        return invalid(format!("initial vector must sum to zero, sum = {sum}"));
    }
    Ok(())
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn check_start(x0: &[f64], alpha: &Alpha) -> Result<()> {
    if x0.len() != alpha.len() || x0.len() < 2 {
        return invalid("need at least two nodes and matching alpha");
    }
    check_zero_sum(x0)
}

/// `|x(t)|^2` for `t = 0..=ticks` under the plain affine rule.
pub fn affine_trajectory(
    x0: &[f64],
    alpha: &Alpha,
    ticks: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    check_start(x0, alpha)?;
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut out = Vec::with_capacity(ticks + 1);
    out.push(norm2(&x));
    for _ in 0..ticks {
        let (i, j) = sample_pair(n, rng);
        pair_update_unchecked(&mut x, i, j, alpha.as_slice());
        out.push(norm2(&x));
    }
    Ok(out)
}

/// `|y(t)|^2` for `t = 0..=ticks` under the perturbed rule; `noise(t)` is
/// the perturbation applied at tick `t + 1`.
pub fn perturbed_trajectory(
    y0: &[f64],
    alpha: &Alpha,
    ticks: usize,
    rng: &mut impl Rng,
    mut noise: impl FnMut(usize) -> f64,
) -> Result<Vec<f64>> {
    check_start(y0, alpha)?;
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut out = Vec::with_capacity(ticks + 1);
    out.push(norm2(&y));
    for t in 0..ticks {
        let (i, j) = sample_pair(n, rng);
        perturbed_update_unchecked(&mut y, i, j, alpha.as_slice(), noise(t));
        out.push(norm2(&y));
    }
    Ok(out)
}

/// `|x(t)|^2` for `t = 0..=ticks`. Requires a zero-sum start.
pub fn simulate_affine_gossip(
    x0: &[f64],
    alpha: &Alpha,
    ticks: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    affine_trajectory(x0, alpha, ticks, &mut trial_rng(seed, 0))
}

/// Independent stream per Monte Carlo trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x4b45_524e_0000_0000 | trial);
    rng
}

/// `e_0 - 1/n`: a unit spike re-centered to zero mean.
pub fn spike(n: usize) -> Vec<f64> {
    let mut x = vec![-1.0 / n as f64; n];
    x[0] += 1.0;
    x
}

/// Mean and standard error of a per-tick statistic over trials.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialStats {
    pub trials: usize,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
}

const CHUNKS: usize = 64;

/// Runs `trials` independent trajectories (in parallel, merged in a fixed
/// order) and aggregates `stat(t, |x(t)|^2)` per tick.
pub fn monte_carlo<F, S>(trials: usize, ticks: usize, seed: u64, run: F, stat: S) -> Result<TrialStats>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Vec<f64>> + Sync,
    S: Fn(usize, f64) -> f64 + Sync,
{
    let per_chunk = trials.div_ceil(CHUNKS).max(1);
    let partials: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut sum = vec![0.0; ticks + 1];
            let mut sum_sq = vec![0.0; ticks + 1];
            for trial in (c * per_chunk)..((c + 1) * per_chunk).min(trials) {
                let traj = run(&mut trial_rng(seed, trial as u64))?;
                for (t, &v) in traj.iter().enumerate().take(ticks + 1) {
                    let s = stat(t, v);
                    sum[t] += s;
                    sum_sq[t] += s * s;
                }
            }
            Ok((sum, sum_sq))
        })
        .collect();
    let mut sum = vec![0.0; ticks + 1];
    let mut sum_sq = vec![0.0; ticks + 1];
    for p in partials {
        let (s, q) = p?;
        for t in 0..=ticks {
            sum[t] += s[t];
            sum_sq[t] += q[t];
        }
    }
    let k = trials.max(1) as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / k).collect();
    let std_err = mean
        .iter()
        .zip(&sum_sq)
        .map(|(m, q)| {
            if trials < 2 {
                return 0.0;
            }
            let var = ((q / k - m * m) * k / (k - 1.0)).max(0.0);
            (var / k).sqrt()
        })
        .collect();
    Ok(TrialStats { trials, mean, std_err })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Average of `A^T A` over all `n(n-1)` ordered picks, with `A` built
    /// column by column from the update rule itself.
    fn enumerated_second_moment(alpha: &Alpha) -> DMatrix<f64> {
        let n = alpha.len();
        let mut acc = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mut a = DMatrix::<f64>::zeros(n, n);
                for k in 0..n {
                    let mut e = vec![0.0; n];
                    e[k] = 1.0;
                    affine_pair_update(&mut e, i, j, alpha).unwrap();
                    a.set_column(k, &nalgebra::DVector::from_vec(e));
                }
                acc += a.transpose() * &a;
            }
        }
        acc / (n * (n - 1)) as f64
    }

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).abs().max()
    }

    #[test]
    fn consensus_is_fixed() {
        let alpha = Alpha::uniform(2, 0.45).unwrap();
        let mut x = vec![1.0, 1.0];
        affine_pair_update(&mut x, 0, 1, &alpha).unwrap();
        assert_eq!(x, vec![1.0, 1.0]);
    }

    #[test]
    fn hand_evaluated_update() {
        let alpha = Alpha::uniform(3, 0.4).unwrap();
        let mut x = vec![1.0, -1.0, 0.0];
        affine_pair_update(&mut x, 0, 1, &alpha).unwrap();
        assert!((x[0] - 0.2).abs() < 1e-15 && (x[1] + 0.2).abs() < 1e-15);
        assert_eq!(x[2], 0.0);
    }

    #[test]
    fn same_index_rejected() {
        let alpha = Alpha::uniform(3, 0.4).unwrap();
        assert!(affine_pair_update(&mut [0.0; 3], 1, 1, &alpha).is_err());
        assert!(perturbed_pair_update(&mut [0.0; 3], 2, 2, &alpha, 0.1).is_err());
    }

    #[test]
    fn alpha_range_is_open() {
        assert!(Alpha::new(vec![1.0 / 3.0]).is_err());
        assert!(Alpha::new(vec![0.5]).is_err());
        assert!(Alpha::new(vec![0.6]).is_err());
        assert!(Alpha::new(vec![f64::NAN]).is_err());
        assert!(Alpha::new(vec![0.34, 0.49]).is_ok());
    }

    #[test]
    fn perturbed_examples() {
        let alpha = Alpha::uniform(2, 0.4).unwrap();
        let mut y = vec![0.0, 0.0];
        perturbed_pair_update(&mut y, 0, 1, &alpha, 1.0).unwrap();
        assert_eq!(y, vec![1.0, -1.0]);

        let mut a = vec![0.3, -0.7];
        let mut b = a.clone();
        perturbed_pair_update(&mut a, 1, 0, &alpha, 0.0).unwrap();
        affine_pair_update(&mut b, 1, 0, &alpha).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn closed_form_small_cases() {
        // alpha = 1/2 is outside the open range, so go through the raw form.
        let half = second_moment(&[0.5, 0.5]);
        assert_eq!(half, DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]));
        assert!(max_on_zero_sum(&half).abs() < 1e-15);

        let alpha = Alpha::uniform(2, 0.4).unwrap();
        let SecondMomentMatrix(m) = expected_quadratic_form(&alpha).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.52, 0.48, 0.48, 0.52]);
        assert!(max_abs_diff(&m, &want) < 1e-15);
        let v = nalgebra::DVector::from_vec(vec![1.0, -1.0]) / 2f64.sqrt();
        assert!(((v.transpose() * &m * &v)[0] - 0.04).abs() < 1e-15);
        assert!((contraction_factor(&alpha).unwrap() - 0.04).abs() < 1e-12);
    }

    #[test]
    fn requires_two_nodes() {
        assert!(expected_quadratic_form(&Alpha::uniform(1, 0.4).unwrap()).is_err());
    }

    #[test]
    fn closed_form_matches_enumeration() {
        let mut rng = trial_rng(17, 0);
        for n in 2..=6 {
            for _ in 0..20 {
                let alpha = Alpha::random(n, &mut rng);
                let SecondMomentMatrix(m) = expected_quadratic_form(&alpha).unwrap();
                let oracle = enumerated_second_moment(&alpha);
                assert!(max_abs_diff(&m, &oracle) <= 1e-12);
            }
        }
    }

    #[test]
    fn ones_action() {
        // Uniform alpha: M 1 = 1.
        let SecondMomentMatrix(m) = expected_quadratic_form(&Alpha::uniform(5, 0.42).unwrap()).unwrap();
        let ones = nalgebra::DVector::from_element(5, 1.0);
        assert!((&m * &ones - &ones).abs().max() < 1e-12);
        // General alpha: M 1 = 1 + b o (b - mean b)/(n-1), b = 1 - 2 alpha.
        let alpha = Alpha::new(vec![0.34, 0.4, 0.45, 0.49, 0.36]).unwrap();
        let SecondMomentMatrix(m) = expected_quadratic_form(&alpha).unwrap();
        let b: Vec<f64> = alpha.as_slice().iter().map(|a| 1.0 - 2.0 * a).collect();
        let mean = b.iter().sum::<f64>() / 5.0;
        let row = &m * &ones;
        for k in 0..5 {
            assert!((row[k] - (1.0 + b[k] * (b[k] - mean) / 4.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn bounds_reduce_correctly() {
        assert_eq!(tail_bound(0, 10, 1.0), 1.0);
        assert!((tail_bound(0, 10, 10.0) - 0.01).abs() < 1e-15);
        assert_eq!(perturbed_norm_bound(0, 5, 0.0, 0.0, 2.5), 2.5);
        let b = perturbed_norm_bound(40, 16, 1.0, 0.0, 3.0);
        assert!((b - 4.0 * (1.0 - 1.0 / 32.0f64).powf(20.0) * 3.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_edge_cases() {
        let alpha = Alpha::uniform(4, 0.4).unwrap();
        assert_eq!(simulate_affine_gossip(&[0.0; 4], &alpha, 50, 1).unwrap(), vec![0.0; 51]);
        let x0 = spike(4);
        let t = simulate_affine_gossip(&x0, &alpha, 0, 1).unwrap();
        assert_eq!(t, vec![norm2(&x0)]);
        assert!(simulate_affine_gossip(&[1.0, 0.0, 0.0, 0.0], &alpha, 3, 1).is_err());
    }

    #[test]
    fn zero_noise_is_bit_identical() {
        let alpha = Alpha::random(12, &mut trial_rng(3, 3));
        let x0 = spike(12);
        let plain = simulate_affine_gossip(&x0, &alpha, 500, 9).unwrap();
        let perturbed =
            perturbed_trajectory(&x0, &alpha, 500, &mut trial_rng(9, 0), |_| 0.0).unwrap();
        let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&plain), bits(&perturbed));
    }

    #[test]
    fn mean_square_is_nonincreasing() {
        let n = 16;
        let alpha = Alpha::random(n, &mut trial_rng(5, 5));
        let x0 = spike(n);
        let stats = monte_carlo(
            4000,
            200,
            77,
            |rng| affine_trajectory(&x0, &alpha, 200, rng),
            |_, v| v,
        )
        .unwrap();
        for t in 1..=200 {
            let slack = 3.0 * (stats.std_err[t] + stats.std_err[t - 1]);
            assert!(stats.mean[t] <= stats.mean[t - 1] + slack, "t = {t}");
        }
    }

    proptest! {
        #[test]
        fn updates_conserve_sum(
            x in prop::collection::vec(-1e3f64..1e3, 2..12),
            seed in any::<u64>(),
            nu in -10.0f64..10.0,
        ) {
            let n = x.len();
            let mut rng = trial_rng(seed, 1);
            let alpha = Alpha::random(n, &mut rng);
            let (i, j) = sample_pair(n, &mut rng);
            let before: f64 = x.iter().sum();
            let scale = x.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
            let mut a = x.clone();
            affine_pair_update(&mut a, i, j, &alpha).unwrap();
            prop_assert!((a.iter().sum::<f64>() - before).abs() <= 1e-12 * scale);
            let mut b = x.clone();
            perturbed_pair_update(&mut b, i, j, &alpha, nu).unwrap();
            prop_assert!((b.iter().sum::<f64>() - before).abs() <= 1e-12 * (scale + nu.abs()));
        }

        #[test]
        fn contraction_within_bound(n in 2usize..=8, seed in any::<u64>()) {
            let alpha = Alpha::random(n, &mut trial_rng(seed, 2));
            let c = contraction_factor(&alpha).unwrap();
            prop_assert!(c <= contraction_bound(n) + 1e-9);
        }
    }
}
