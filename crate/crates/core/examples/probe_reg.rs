use rayon::prelude::*;
use wignerlab::ensembles::{sample_real, EnsembleSpec};
use wignerlab::linalg::{eigvalsh, SymMatrix};
use wignerlab::regularization::{closeness_scale, finite_diff, HsRegularizer, RegParams};
use wignerlab::rng::CounterRng;

fn main() {
    // closeness: GOE N=200, delta=0.1, eps=0.02, indices {1,10,100}, 20 samples
    let n = 200;
    let params = RegParams { eps1: 0.02, ..RegParams::from_delta1(0.1, n) };
    let hs = HsRegularizer::new(n, params).unwrap();
    let spec = EnsembleSpec::goe(n, 2024);
    let results: Vec<(usize, usize, f64)> = (0..20u64).into_par_iter().flat_map_iter(|r| {
        let lam = eigvalsh(&sample_real(&spec, r).unwrap()).unwrap();
        let hs = &hs;
        [1usize, 10, 100].into_iter().map(move |i| {
            let lt = hs.lambda_tilde(&lam, i);
            let bound = closeness_scale(n, i, 0.1, 0.02);
            (r as usize, i, (lt - lam[i-1]).abs() / bound)
        }).collect::<Vec<_>>().into_iter()
    }).collect();
    let mut pass = 0; let mut by_index = [0usize; 3];
    for &(_, i, m) in &results {
        if m <= 1.0 { pass += 1; } else {
            let j = match i { 1 => 0, 10 => 1, _ => 2 };
            by_index[j] += 1;
        }
    }
    println!("closeness: {}/{} pass; failures by index (1,10,100): {:?}", pass, results.len(), by_index);
    let worst: Vec<String> = results.iter().filter(|t| t.2 > 1.0).map(|t| format!("s{} i{} m={:.2}", t.0, t.1, t.2)).collect();
    println!("  failures: {worst:?}");

    // finite differences at N=100
    let n = 100;
    let params = RegParams { eps1: 0.02, ..RegParams::from_delta1(0.1, n) };
    let hs = HsRegularizer::new(n, params).unwrap();
    let spec = EnsembleSpec::goe(n, 777);
    let m0 = sample_real(&spec, 0).unwrap();
    let rng = CounterRng::new(5150, 0);
    let trials: Vec<(usize, usize, usize)> = (0..60).map(|t| {
        let a = (rng.at(3*t) % n as u64) as usize;
        let b = (rng.at(3*t+1) % n as u64) as usize;
        let i = 1 + (rng.at(3*t+2) % n as u64) as usize;
        (a, b, i)
    }).collect();
    let margins: Vec<f64> = trials.par_iter().map(|&(a, b, i)| {
        let f = |mm: &SymMatrix| {
            let lam = eigvalsh(mm).unwrap();
            hs.lambda_tilde(&lam, i)
        };
        let d = finite_diff(f, &m0, a, b, 1, 1e-5);
        let i_hat = i.min(n + 1 - i) as f64;
        let bound = (n as f64).powf(0.12) * (n as f64).powf(-2.0/3.0) * i_hat.powf(-1.0/3.0);
        d.abs() / bound
    }).collect();
    let pass = margins.iter().filter(|&&m| m <= 1.0).count();
    println!("finite-diff: {pass}/60 pass; worst margins: {:?}",
        { let mut v = margins.clone(); v.sort_by(|a,b| b.partial_cmp(a).unwrap()); v.truncate(8); v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>() });
}
