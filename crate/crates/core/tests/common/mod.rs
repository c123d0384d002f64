//! Shared helpers for the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::net::TcpListener;
use std::thread;

use num_complex::Complex64;
use sqkd_core::channel::{ChannelKind, ChannelPlan, Direction, Link};
use sqkd_core::harness::{self, serve_on, BobRole, RunConfig, RunOutcome, Transport};
use sqkd_core::qudit::{BasisSet, LocalBasis};
use sqkd_core::roles::{BobAction, Category};

/// `|observed - p| <= 5σ` with `σ = sqrt(p(1-p)/n)`. Exact when `p` is 0 or 1.
pub fn within_5_sigma(successes: u64, n: u64, p: f64) -> bool {
    assert!(n > 0, "no samples");
    let observed = successes as f64 / n as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    if sigma == 0.0 {
        return (observed - p).abs() < 1e-12;
    }
    (observed - p).abs() <= 5.0 * sigma
}

pub fn config(n_rounds: u64, seed: u64, channels: ChannelPlan) -> RunConfig {
    RunConfig {
        n_rounds,
        seed,
        channels,
        ..Default::default()
    }
}

/// Runs `config` over loopback sockets, with both Bobs served from threads.
pub fn run_over_sockets(config: &RunConfig) -> RunOutcome {
    let l1 = TcpListener::bind("127.0.0.1:0").unwrap();
    let l2 = TcpListener::bind("127.0.0.1:0").unwrap();
    let a1 = l1.local_addr().unwrap().to_string();
    let a2 = l2.local_addr().unwrap().to_string();
    let seed = config.seed;
    let b1 = thread::spawn(move || serve_on(l1, BobRole::Bob1, seed));
    let b2 = thread::spawn(move || serve_on(l2, BobRole::Bob2, seed));
    let mut cfg = config.clone();
    cfg.transport = Transport::Socket { bob1: a1, bob2: a2 };
    let outcome = harness::run(&cfg).expect("socket run");
    b1.join().unwrap().expect("bob1 session");
    b2.join().unwrap().expect("bob2 session");
    outcome
}

// ---------------------------------------------------------------------------
// Density-matrix oracle, written against the formulas rather than the
// library's branch enumeration.

type Matrix = Vec<Vec<Complex64>>;

fn basis_ket(dim: usize, basis: LocalBasis, k: usize) -> Vec<Complex64> {
    match basis {
        LocalBasis::Computational => (0..dim)
            .map(|j| if j == k { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
            .collect(),
        LocalBasis::Fourier => (0..dim)
            .map(|j| Complex64::from_polar(1.0 / (dim as f64).sqrt(), 2.0 * PI * (j * k) as f64 / dim as f64))
            .collect(),
    }
}

fn projector(v: &[Complex64]) -> Matrix {
    v.iter().map(|x| v.iter().map(|y| x * y.conj()).collect()).collect()
}

fn expectation(v: &[Complex64], rho: &Matrix) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, row) in rho.iter().enumerate() {
        for (j, r) in row.iter().enumerate() {
            acc += v[i].conj() * r * v[j];
        }
    }
    acc.re
}

/// `Σ_k P_k ρ P_k` for the projectors of `basis`.
fn dephase(rho: &Matrix, basis: LocalBasis) -> Matrix {
    let d = rho.len();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); d]; d];
    for k in 0..d {
        let v = basis_ket(d, basis, k);
        let p = expectation(&v, rho);
        for (i, row) in out.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x += p * v[i] * v[j].conj();
            }
        }
    }
    out
}

fn depolarize(rho: &Matrix, p: f64) -> Matrix {
    let d = rho.len();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let mixed = if i == j { 1.0 / d as f64 } else { 0.0 };
                    rho[i][j] * (1.0 - p) + mixed * p
                })
                .collect()
        })
        .collect()
}

fn apply_pass(rho: Matrix, plan: &ChannelPlan, link: Link, pass: Direction) -> Matrix {
    let mut rho = rho;
    for m in plan.models() {
        if m.link != link || !(m.direction == pass || m.direction == Direction::Both) {
            continue;
        }
        rho = match m.kind {
            ChannelKind::Identity | ChannelKind::Loss { .. } => rho,
            ChannelKind::Depolarize { p_dep } => depolarize(&rho, p_dep),
            ChannelKind::InterceptResend { basis } => dephase(&rho, basis),
        };
    }
    rho
}

/// Probability that Alice's remeasurement of one subsystem returns the
/// prepared index, given the prepared index and Bob's action on that link.
fn match_probability(plan: &ChannelPlan, link: Link, basis: LocalBasis, k: usize, action: BobAction) -> f64 {
    let d = link.dim();
    let ket = basis_ket(d, basis, k);
    let mut rho = apply_pass(projector(&ket), plan, link, Direction::Forward);
    if action == BobAction::Measure {
        rho = dephase(&rho, LocalBasis::Computational);
    }
    let rho = apply_pass(rho, plan, link, Direction::Backward);
    expectation(&ket, &rho)
}

/// `(subsystem1, subsystem2, either)` mismatch probabilities for a category,
/// averaged over Alice's nine preparations. Loss only removes rounds and
/// does not change the conditional rates.
pub fn density_matrix_mismatch(plan: &ChannelPlan, category: Category) -> (f64, f64, f64) {
    let basis = match category.basis {
        BasisSet::S1 => LocalBasis::Computational,
        BasisSet::S2 => LocalBasis::Fourier,
    };
    let (mut m1, mut m2, mut either) = (0.0, 0.0, 0.0);
    for a in 0..9 {
        let p1 = match_probability(plan, Link::ToBob1, basis, a, category.action1);
        let p2 = match_probability(plan, Link::ToBob2, basis, a % 3, category.action2);
        m1 += 1.0 - p1;
        m2 += 1.0 - p2;
        either += 1.0 - p1 * p2;
    }
    (m1 / 9.0, m2 / 9.0, either / 9.0)
}
