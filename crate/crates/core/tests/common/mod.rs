#![allow(dead_code)]
//! Independent oracles shared by the integration tests.

use camfmc::rates::{Family, RateModel, Role};
use camfmc::{ModelStats, TrainableSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// High-fidelity cost in seconds of the thermal-block example.
pub const TB_W0_SECONDS: f64 = 0.1150;
/// High-fidelity cost in seconds of the ASDEX example.
pub const ASDEX_W0_SECONDS: f64 = 410.9941;

pub fn rb() -> TrainableSpec {
    TrainableSpec::new(
        RateModel::exponential_accuracy(0.6312, 0.5754),
        RateModel::algebraic_cost(9.6233e-5, 1.0704),
    )
}

pub fn svr() -> TrainableSpec {
    TrainableSpec::new(
        RateModel::algebraic_accuracy(0.7309, 0.4053),
        RateModel::algebraic_cost(9.3245e-7, 0.5696),
    )
}

pub fn sg() -> TrainableSpec {
    TrainableSpec::new(
        RateModel::algebraic_accuracy(0.3361, 0.8617),
        RateModel::algebraic_cost(2.9060e-7, 1.1480),
    )
}

pub fn dnn() -> TrainableSpec {
    TrainableSpec::new(
        RateModel::algebraic_accuracy(0.1399, 0.2180),
        RateModel::algebraic_cost(3.6664e-7, 0.0501),
    )
}

/// Rate value computed from the textbook formulas, independent of `RateModel::eval`.
pub fn rate(m: &RateModel, n: f64) -> f64 {
    let r = match (m.family, m.role) {
        (Family::Algebraic, Role::Accuracy) => 1.0 / n.powf(m.exponent),
        (Family::Algebraic, Role::Cost) => n.powf(m.exponent),
        (Family::Exponential, Role::Accuracy) => 1.0 / (m.exponent * n).exp(),
        (Family::Exponential, Role::Cost) => (m.exponent * n).exp(),
    };
    m.scale * r
}

/// `(κ + w_prev c_a r_a(n) + c_c r_c(n)) / (p - n)`.
pub fn objective(kappa: f64, prev_cost: f64, p: f64, spec: &TrainableSpec, n: u64) -> f64 {
    let n = n as f64;
    (kappa + prev_cost * rate(&spec.accuracy, n) + rate(&spec.cost, n)) / (p - n)
}

/// Integer argmin over `1..=hi` by brute force, ties to the smaller `n`.
pub fn brute_argmin(kappa: f64, prev_cost: f64, p: f64, spec: &TrainableSpec, hi: u64) -> u64 {
    let mut best = (1, objective(kappa, prev_cost, p, spec, 1));
    for n in 2..=hi {
        let v = objective(kappa, prev_cost, p, spec, n);
        if v < best.1 {
            best = (n, v);
        }
    }
    best.0
}

/// Minimizes `V(m) = Σ_j a_j / m_j` with `a_j = σ0² (ρ_j² - ρ_{j+1}²)` subject to
/// `Σ w_j m_j = p` by damped Newton in `m_1..m_k`, with `m_0` eliminated by the budget.
pub fn newton_allocation(stats: &[ModelStats], p: f64) -> Vec<f64> {
    let k = stats.len() - 1;
    let v0 = stats[0].stddev.powi(2);
    let r2 = |j: usize| if j > k { 0.0 } else { stats[j].correlation.powi(2) };
    let a: Vec<f64> = (0..=k).map(|j| v0 * (r2(j) - r2(j + 1))).collect();
    let w: Vec<f64> = stats.iter().map(|s| s.cost).collect();
    if k == 0 {
        return vec![p / w[0]];
    }
    let m0_of = |m: &[f64]| (p - (1..=k).map(|j| w[j] * m[j - 1]).sum::<f64>()) / w[0];
    let value = |m: &[f64]| {
        let m0 = m0_of(m);
        if m0 <= 0.0 || m.iter().any(|&x| x <= 0.0) {
            return f64::INFINITY;
        }
        a[0] / m0 + (1..=k).map(|j| a[j] / m[j - 1]).sum::<f64>()
    };
    // start: half the budget on m_0, the rest split evenly
    let mut m: Vec<f64> = (1..=k).map(|j| p / (2.0 * k as f64 * w[j])).collect();
    for _ in 0..200 {
        let m0 = m0_of(&m);
        let g: Vec<f64> = (1..=k).map(|j| a[0] * w[j] / (w[0] * m0 * m0) - a[j] / m[j - 1].powi(2)).collect();
        let mut h = vec![vec![0.0; k]; k];
        for i in 0..k {
            for l in 0..k {
                h[i][l] = 2.0 * a[0] * w[i + 1] * w[l + 1] / (w[0] * w[0] * m0.powi(3));
            }
            h[i][i] += 2.0 * a[i + 1] / m[i].powi(3);
        }
        let step = solve(h, g.iter().map(|x| -x).collect());
        let f = value(&m);
        let mut t = 1.0;
        let mut next: Vec<f64> = m.iter().zip(&step).map(|(x, s)| x + t * s).collect();
        while value(&next) > f && t > 1e-12 {
            t *= 0.5;
            next = m.iter().zip(&step).map(|(x, s)| x + t * s).collect();
        }
        let rel = m.iter().zip(&next).map(|(x, y)| ((x - y) / x).abs()).fold(0.0, f64::max);
        m = next;
        if rel < 1e-15 {
            break;
        }
    }
    let mut out = vec![m0_of(&m)];
    out.extend(m);
    out
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Random hierarchy with `k` low-fidelity models that satisfies the ordering condition.
pub fn random_hierarchy(rng: &mut ChaCha8Rng, k: usize) -> Vec<ModelStats> {
    let sigma0 = rng.gen_range(0.1..10.0);
    let mut rho: Vec<f64> = (0..k).map(|_| rng.gen_range(0.3..0.999)).collect();
    rho.sort_by(|a, b| b.total_cmp(a));
    rho.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let r2 = |j: usize| if j == 0 { 1.0 } else if j > rho.len() { 0.0 } else { rho[j - 1] * rho[j - 1] };
    let mut out = vec![ModelStats::high_fidelity(sigma0)];
    let mut prev_w = 1.0;
    for j in 1..=rho.len() {
        let limit = prev_w * (r2(j) - r2(j + 1)) / (r2(j - 1) - r2(j));
        let w = limit * rng.gen_range(0.05..0.95);
        out.push(ModelStats::new(w, rho[j - 1], sigma0 * rng.gen_range(0.5..2.0)));
        prev_w = w;
    }
    out
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
