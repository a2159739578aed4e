//! Self-check of the affine kernel: exact identities first, then Monte Carlo
//! checks of the decay and tail bounds.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::kernel::{
    affine_pair_update, affine_trajectory, contraction_bound, contraction_factor,
    tail_bound, expected_quadratic_form, mean_square_bound, perturbed_norm_bound, monte_carlo,
    perturbed_trajectory, spike, trial_rng, Alpha,
};

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub check: String,
    pub detail: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub rows: Vec<VerifyRow>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    fn push(&mut self, check: &str, pass: bool, detail: String) {
        self.rows.push(VerifyRow { check: check.to_string(), detail, pass });
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.check.len()).max().unwrap_or(0);
        for r in &self.rows {
            let verdict = if r.pass { "PASS" } else { "FAIL" };
            writeln!(f, "{verdict}  {:width$}  {}", r.check, r.detail)?;
        }
        Ok(())
    }
}

/// `E[A^T A]` by averaging over every ordered pair, each `A` assembled
/// column by column from the pair update applied to basis vectors.
pub fn enumerated_second_moment(alpha: &Alpha) -> DMatrix<f64> {
    let n = alpha.len();
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let mut a = DMatrix::<f64>::zeros(n, n);
            for k in 0..n {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                affine_pair_update(&mut e, i, j, alpha).expect("distinct in-range pair");
                a.set_column(k, &DVector::from_vec(e));
            }
            acc += a.transpose() * &a;
        }
    }
    acc / (n * (n - 1)) as f64
}

pub const MC_NODES: usize = 32;
const ALPHAS_PER_N: usize = 20;

/// Exact rows always run; the Monte Carlo rows need `trials > 0`.
pub fn kernel_verify(trials: usize, seed: u64) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut worst_diff = 0.0f64;
    let mut worst_gap = f64::NEG_INFINITY;
    for n in 2..=6 {
        for _ in 0..ALPHAS_PER_N {
            let alpha = Alpha::random(n, &mut rng);
            let closed = expected_quadratic_form(&alpha)?.0;
            worst_diff = worst_diff.max((closed - enumerated_second_moment(&alpha)).abs().max());
            worst_gap = worst_gap.max(contraction_factor(&alpha)? - contraction_bound(n));
        }
    }
    report.push(
        "second moment closed form",
        worst_diff <= 1e-12,
        format!("n = 2..6, {ALPHAS_PER_N} alphas each, max |diff| = {worst_diff:.2e}"),
    );
    report.push(
        "contraction on zero-sum vectors",
        worst_gap <= 1e-9,
        format!("max (factor - (1 - 8/(9(n-1)))) = {worst_gap:.3e}"),
    );
    let corrupted = Alpha::new(vec![0.4, 0.6, 0.4]);
    report.push(
        "alpha outside (1/3, 1/2) rejected",
        corrupted.is_err(),
        match corrupted {
            Err(e) => e.to_string(),
            Ok(_) => "accepted".to_string(),
        },
    );
    if trials == 0 {
        return Ok(report);
    }

    let n = MC_NODES;
    let alpha = Alpha::random(n, &mut rng);
    let x0 = spike(n);
    let norm0: f64 = x0.iter().map(|v| v * v).sum();

    let ticks = 10 * n;
    let sq = monte_carlo(trials, ticks, seed, |r| affine_trajectory(&x0, &alpha, ticks, r), |_, v| {
        v / norm0
    })?;
    let worst = (0..=ticks)
        .map(|t| sq.mean[t] - mean_square_bound(t, n) - 3.0 * sq.std_err[t])
        .fold(f64::NEG_INFINITY, f64::max);
    report.push(
        "mean squared norm decay",
        worst <= 0.0,
        format!("n = {n}, {trials} trials, t <= {ticks}, max excess over bound + 3 SE = {worst:.3e}"),
    );

    let eps = 0.3;
    let tail = monte_carlo(trials, ticks, seed, |r| affine_trajectory(&x0, &alpha, ticks, r), |_, v| {
        f64::from(u8::from(v > eps * eps * norm0))
    })?;
    let worst = [n, 2 * n, 4 * n, 8 * n]
        .iter()
        .map(|&t| tail.mean[t] - tail_bound(t, n, eps) - 3.0 * tail.std_err[t])
        .fold(f64::NEG_INFINITY, f64::max);
    report.push(
        "tail probability",
        worst <= 0.0,
        format!("eps = {eps}, t in n,2n,4n,8n, max excess = {worst:.3e}"),
    );

    let (a, noise_eps, t_end) = (1.0, 1e-3, 4 * n);
    let bound = perturbed_norm_bound(t_end, n, a, noise_eps, norm0.sqrt());
    let alternating = |t: usize| if t.is_multiple_of(2) { noise_eps } else { -noise_eps };
    let exceed = monte_carlo(
        trials,
        t_end,
        seed,
        |r| perturbed_trajectory(&x0, &alpha, t_end, r, alternating),
        |_, v| f64::from(u8::from(v.sqrt() > bound)),
    )?;
    let freq = exceed.mean[t_end];
    let limit = 5.0 / 32.0 + 3.0 * exceed.std_err[t_end];
    report.push(
        "perturbed norm bound",
        freq <= limit,
        format!("a = {a}, eps = {noise_eps}, t = {t_end}, exceedance {freq:.4} vs {limit:.4}"),
    );

    let identical = (0..trials.min(256) as u64).all(|k| {
        let plain = affine_trajectory(&x0, &alpha, t_end, &mut trial_rng(seed, k));
        let zero = perturbed_trajectory(&x0, &alpha, t_end, &mut trial_rng(seed, k), |_| 0.0);
        match (plain, zero) {
            (Ok(p), Ok(z)) => p.iter().zip(&z).all(|(a, b)| a.to_bits() == b.to_bits()),
            _ => false,
        }
    });
    report.push(
        "zero noise matches plain updates",
        identical,
        format!("{} shared-seed trajectories compared bit for bit", trials.min(256)),
    );
    Ok(report)
}
