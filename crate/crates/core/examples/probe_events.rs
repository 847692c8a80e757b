use rayon::prelude::*;
use wignerlab::ensembles::{sample_real, EnsembleSpec};
use wignerlab::linalg::eigh;
use wignerlab::regularization::{event_check, EventGrid, RegContext, RegParams};
use wignerlab::rng::{unit_sphere_vector, CounterRng};

fn main() {
    let n = 300;
    let mut params = RegParams::from_delta1(0.1, n);
    params.omega = 0.2;
    params.k = 10;
    let ctx = RegContext::new(n, params).unwrap();
    let spec = EnsembleSpec::goe(n, 12345);
    let reports: Vec<_> = (0..30u64).into_par_iter().map(|r| {
        let m = sample_real(&spec, r).unwrap();
        let s = eigh(&m).unwrap();
        let mut rng = CounterRng::new(777, r);
        let q = unit_sphere_vector(&mut rng, n);
        event_check(&ctx, &s, &q, n / 2, &[1, n / 2, n], &EventGrid::default())
    }).collect();
    let mut pass = 0;
    for (i, rep) in reports.iter().enumerate() {
        let ok = rep.all_pass();
        if ok { pass += 1; }
        println!(
            "#{i:02} iso={:.3} sc={:.3} rig={:.3} deloc={:.3} b2={:.3} b3={} b1'={:.1} -> {}",
            rep.iso_margin, rep.sc_margin, rep.rigidity_margin, rep.deloc_margin,
            rep.b2_margin, rep.b3_count, rep.b1_eps2_margin,
            if ok { "PASS" } else { "fail" }
        );
    }
    println!("all-pass rate: {pass}/30");
}
