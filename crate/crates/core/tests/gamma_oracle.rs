//! Exhaustive-subset sign agreement against a bitmask enumeration.

use fedcomm_core::data::synth_generate;
use fedcomm_core::gamma::{
    full_gradient, gamma_estimate, sign_match_rates, ProbeMode, TrialPlan, NEAR_ZERO,
};
use fedcomm_core::nn::{gradient, init_model, ModelArch};
use fedcomm_core::Batch;

fn brute_force(
    params: &fedcomm_core::ModelParams,
    ds: &fedcomm_core::Dataset,
    s: usize,
) -> Vec<f64> {
    let n = ds.len();
    let full = gradient(params, &Batch::whole(ds)).unwrap().values;
    let kept: Vec<usize> = (0..full.len())
        .filter(|&p| full[p].abs() > NEAR_ZERO)
        .collect();
    let mut hits = vec![0usize; kept.len()];
    let mut subsets = 0usize;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != s {
            continue;
        }
        subsets += 1;
        let idx: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        let g = gradient(params, &Batch::from_indices(ds, &idx).unwrap())
            .unwrap()
            .values;
        for (h, &p) in hits.iter_mut().zip(&kept) {
            if (g[p] >= 0.0) == (full[p] >= 0.0) {
                *h += 1;
            }
        }
    }
    hits.iter().map(|&h| h as f64 / subsets as f64).collect()
}

#[test]
fn all_subsets_mode_equals_enumeration() {
    for n in 2..=6 {
        let ds = synth_generate(2, 3, 3, n as u64).unwrap().head(n).unwrap();
        assert_eq!(ds.len(), n);
        for arch in [
            ModelArch::logreg(3, 2).unwrap(),
            ModelArch::mlp(3, &[4], 2).unwrap(),
        ] {
            let params = init_model(&arch, 10 + n as u64);
            let reference = full_gradient(&params, &ds).unwrap();
            for s in 1..=2.min(n) {
                let got = sign_match_rates(
                    &params,
                    &ds,
                    &reference,
                    s,
                    TrialPlan::AllSubsets,
                    ProbeMode::IidSample,
                    0,
                )
                .unwrap();
                let want = brute_force(&params, &ds, s);
                assert_eq!(got.rates, want, "n={n} s={s}");
                let summary = gamma_estimate(
                    &params,
                    &ds,
                    &[s],
                    TrialPlan::AllSubsets,
                    0,
                    ProbeMode::IidSample,
                )
                .unwrap();
                let mean = want.iter().sum::<f64>() / want.len() as f64;
                assert!((summary.gamma_mean[0] - mean).abs() < 1e-15);
            }
        }
    }
}
