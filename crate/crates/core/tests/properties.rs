mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tontine_core::bootstrap::{load_and_deflate, sample_month_indices, stationary_block_sample, BootstrapConfig};
use tontine_core::market_model::ModelParams;
use tontine_core::mortality::{build_schedule, MortalityTable};
use tontine_core::objective::{es_from_samples, pareto_filter, rockafellar_value, FrontierPoint};
use tontine_core::pide::{ControlPolicy, PolicySlice};
use tontine_core::simulator::nearest_rank;
use tontine_core::Kappa;

fn ok(c: common::Check) -> Result<(), TestCaseError> {
    c.map(|_| ()).map_err(TestCaseError::fail)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn fair_game_holds(q in 0.0f64..0.99, v in 0.0f64..1e6) {
        ok(common::fair_game(q, v))?;
    }

    #[test]
    fn group_gain_conserves_wealth(seed in any::<u64>(), n in 2usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ok(common::conservation(&common::random_pool(&mut rng, n)))?;
    }

    #[test]
    fn schedule_gains_follow_increasing_mortality(base in 0.001f64..0.05, slope in 0.0f64..0.1, m in 1usize..40) {
        let entries: Vec<(u32, f64)> = (60..=110).map(|a| (a, (base * (1.0 + slope).powi(a as i32 - 60)).min(0.9))).collect();
        let t = MortalityTable::new(entries).unwrap();
        let s = build_schedule(&t, 65, m, 1.0, 0.005).unwrap();
        prop_assert_eq!(s.gains[0], 0.0);
        prop_assert!(s.gains[1..].windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn es_is_the_rockafellar_supremum(seed in any::<u64>(), n in 20usize..400) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-500.0..1500.0)).collect();
        ok(common::rockafellar_sup(&xs, 0.05))?;
    }

    #[test]
    fn rockafellar_never_exceeds_es(seed in any::<u64>(), w in -2000.0f64..2000.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..200).map(|_| rng.random_range(-500.0..1500.0)).collect();
        let es = es_from_samples(&xs, 0.05).unwrap();
        prop_assert!(rockafellar_value(&xs, w, 0.05).unwrap() <= es + 1e-9);
    }

    #[test]
    fn percentiles_are_ordered(seed in any::<u64>(), n in 1usize..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        xs.sort_by(f64::total_cmp);
        let (a, b, c) = (nearest_rank(&xs, 0.05), nearest_rank(&xs, 0.5), nearest_rank(&xs, 0.95));
        prop_assert!(a <= b && b <= c);
    }

    #[test]
    fn pareto_frontier_is_monotone(pts in prop::collection::vec((40.0f64..80.0, -1000.0f64..2000.0), 1..40)) {
        let points: Vec<FrontierPoint> = pts.iter().map(|&(ew, es)| FrontierPoint {
            kappa: Kappa::Finite(1.0), ew_per_year: ew, ew_total: 30.0 * ew, es, median_wt: 0.0, wstar: 0.0, value: 0.0,
        }).collect();
        let f = pareto_filter(&points);
        prop_assert!(!f.is_empty());
        prop_assert!(f.windows(2).all(|w| w[1].es > w[0].es && w[1].ew_per_year < w[0].ew_per_year));
        // nothing retained is dominated by any input point
        for k in &f {
            prop_assert!(!points.iter().any(|p| p.es >= k.es && p.ew_per_year >= k.ew_per_year && (p.es > k.es || p.ew_per_year > k.ew_per_year)));
        }
    }

    #[test]
    fn bootstrap_draws_are_paired_and_wrap(seed in any::<u64>(), len in 12usize..200, block in 1.0f64..60.0, m in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = BootstrapConfig { expected_block: block, forced_start: None };
        let idx = sample_month_indices(len, &cfg, 12 * m, &mut rng).unwrap();
        prop_assert_eq!(idx.len(), 12 * m);
        prop_assert!(idx.iter().all(|&k| k < len));
        // consecutive months either continue the block circularly or start a new one
        let continued = idx.windows(2).filter(|w| w[1] == (w[0] + 1) % len).count();
        prop_assert!(continued <= idx.len() - 1);

        // paired: both series are read at the same months
        let series = tontine_core::bootstrap::ReturnSeries {
            dates: (0..len).map(|k| k.to_string()).collect(),
            stock: (0..len).map(|k| k as f64).collect(),
            bond: (0..len).map(|k| -(k as f64)).collect(),
        };
        let mut r1 = ChaCha8Rng::seed_from_u64(seed);
        let annual = stationary_block_sample(&series, &cfg, m, 1.0, &mut r1).unwrap();
        prop_assert!(annual.iter().all(|a| a.log_return_s == -a.log_return_b));
    }

    #[test]
    fn policy_files_round_trip(seed in any::<u64>(), dates in 1usize..6, knots in 2usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slices = (0..dates).map(|_| {
            let mut w = 0.01;
            let ks: Vec<f64> = (0..knots).map(|_| { w *= 1.0 + rng.random::<f64>(); w }).collect();
            PolicySlice { knots: ks, q: (0..knots).map(|_| rng.random_range(40.0..80.0)).collect(), p: (0..knots).map(|_| rng.random::<f64>()).collect() }
        }).collect();
        let pol = ControlPolicy { slices, wstar: rng.random_range(-1e3..1e3), kappa: Kappa::Finite(rng.random()), alpha: 0.05, q_min: 40.0, q_max: 80.0, fingerprint: "0011223344556677".into() };
        let mut buf = Vec::new();
        pol.write_to(&mut buf).unwrap();
        prop_assert_eq!(ControlPolicy::read_from(buf.as_slice()).unwrap(), pol);
    }
}

#[test]
fn density_normalization() {
    let p = ModelParams::default();
    common::density_normalization(p.u_s, p.eta1_s, p.eta2_s).unwrap();
    common::density_normalization(p.u_b, p.eta1_b, p.eta2_b).unwrap();
    common::density_normalization(0.5, 3.0, 9.0).unwrap();
}

#[test]
fn exponent_vanishes_at_origin() {
    common::exponent_at_origin(&ModelParams::default()).unwrap();
    common::exponent_at_origin(&ModelParams { rho_sb: -0.5, lambda_b: 0.0, ..ModelParams::default() }).unwrap();
}

#[test]
fn month_indices_are_uniform() {
    // stationarity: every month is equally likely to be drawn
    let len = 120;
    let cfg = BootstrapConfig::years(2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut counts = vec![0u64; len];
    let mut total = 0u64;
    while total < 1_000_000 {
        for k in sample_month_indices(len, &cfg, 360, &mut rng).unwrap() {
            counts[k] += 1;
            total += 1;
        }
    }
    let p = 1.0 / len as f64;
    let expect = total as f64 * p;
    // a block visits each month at most once, so counts are close to binomial
    let se = (total as f64 * p * (1.0 - p)).sqrt();
    let worst = counts.iter().map(|&c| (c as f64 - expect).abs() / se).fold(0.0, f64::max);
    assert!(worst < 3.0, "worst z {worst}");
}

#[test]
fn loader_rejects_misaligned_dates() {
    let text = "date,stock_index,bond_index,cpi\n2000-01,1,1,1\n2000-02,1,1,1\n2000-02,1,1,1\n";
    assert!(load_and_deflate(text).is_err());
}
