use hbcoop_core::channel::{read_channel_dump, write_channel_dump};
use hbcoop_core::digital::evaluate_rates;
use hbcoop_core::montecarlo::{realization_channels, run, solve_realization};
use hbcoop_core::{Architecture, Mode, Scenario};
use proptest::prelude::*;

fn small(mode: Mode, seed: u64) -> Scenario {
    Scenario {
        n_users: 2,
        n_antennas: 16,
        rf_chains: 2,
        target: 2.0,
        area_side: 60.0,
        realizations: 6,
        seed,
        mode,
        ..Scenario::table1(2)
    }
}

#[test]
fn channel_dump_round_trips() {
    let s = small(Mode::AllActive, 3);
    let set = realization_channels(&s, 1).unwrap();
    let mut buf = Vec::new();
    write_channel_dump(&mut buf, &set, 42).unwrap();
    let (back, seed) = read_channel_dump(buf.as_slice()).unwrap();
    assert_eq!(seed, 42);
    for k in 0..set.n_users() {
        for m in 0..set.n_bs() {
            assert_eq!(set.h(k, m), back.h(k, m));
        }
    }
}

#[test]
fn feasible_realizations_meet_targets_and_power_caps() {
    for arch in Architecture::ALL {
        let mut s = small(Mode::Algorithm1, 9);
        s.architecture = arch;
        if arch == Architecture::Fdp {
            s.rf_chains = s.n_antennas;
        }
        let p_max = s.stations().unwrap()[0].profile.p_max;
        for r in 0..s.realizations {
            let solved = solve_realization(&s, r).unwrap();
            let res = &solved.result;
            if !res.is_feasible() {
                continue;
            }
            let w = res.precoders.transmit(&solved.analog);
            let rates = evaluate_rates(&w, &solved.channels, &vec![s.noise_watts(); s.n_users]);
            assert!(
                rates.iter().all(|&q| q >= s.target * (1.0 - 1e-5)),
                "{arch} r{r}: {rates:?}"
            );
            assert!(res.per_bs_tx.iter().all(|&p| p <= p_max * (1.0 + 1e-6)));
        }
    }
}

#[test]
fn metrics_count_every_realization() {
    let out = run(&small(Mode::Algorithm2, 4), 2).unwrap();
    let m = &out.metrics;
    assert_eq!(out.records.len(), 6);
    assert_eq!(
        m.feasible + m.infeasible + m.numerical_failures,
        m.realizations
    );
    assert!(m.cdf_all_w.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(m.cdf_all_w.len(), 2 * m.feasible);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn exhaustive_search_never_costs_more_than_all_active(seed in 0u64..1000) {
        let a = solve_realization(&small(Mode::Algorithm1, seed), 0).unwrap().result;
        let b = solve_realization(&small(Mode::AllActive, seed), 0).unwrap().result;
        prop_assert_eq!(a.is_feasible(), b.is_feasible());
        if a.is_feasible() {
            prop_assert!(a.p_star <= b.p_star * (1.0 + 1e-6));
        }
    }
}
