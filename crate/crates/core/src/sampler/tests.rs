use nalgebra::DMatrix;
use rand::Rng;

use super::*;
use crate::likelihood::{log_emission, log_marginal_likelihood, log_state_prior};
use crate::model::{
    validate, AssociationMatrix, HmmHyper, HmmParams, LatentStateMatrix, MoveSet, ObservedData,
    RegressionHyper, SamplerConfig,
};
use crate::priors::log_prior_r;
use crate::simulate::{simulate, simulation_transition, ScenarioSpec};
use crate::{seeded_rng, ValidatedContext};

fn small_context(seed: u64, cfg: SamplerConfig, alpha: f64) -> ValidatedContext {
    let spec = ScenarioSpec {
        samples: 12,
        genes: 4,
        probes: 10,
        varied: 6,
        associations: 3,
        low_signal_count: 0,
        seed,
        ..ScenarioSpec::scaled_scenario1()
    };
    let set = simulate(&spec).unwrap();
    let hyper = RegressionHyper {
        alpha,
        e: 0.2,
        f: 0.8,
        ..RegressionHyper::default()
    };
    validate(set.data.standardized(), hyper, HmmHyper::default(), cfg).unwrap()
}

fn full_log_joint(model: &Model, state: &ChainState) -> f64 {
    let data = &model.ctx.data;
    let hyper = &model.ctx.hyper;
    let xi = state.states();
    let r = state.associations();
    let hmm = state.hmm();
    let mut total = 0.0;
    for g in 0..data.n_genes() {
        total += log_marginal_likelihood(data.y_column(g), xi, r.row(g), hyper).unwrap();
    }
    total += log_prior_r(r, xi, data.positions(), data.fragment_length(), hyper).unwrap();
    total += log_emission(data.x(), xi, &hmm.means, &hmm.sds).unwrap();
    for i in 0..xi.n_samples() {
        total += log_state_prior(&xi.row(i), &hmm.transition, &hmm.stationary);
    }
    total + state.log_prior_hmm(model)
}

#[test]
fn caches_stay_coherent() {
    for alpha in [0.5, f64::INFINITY] {
        let cfg = SamplerConfig {
            iterations: 600,
            burn_in: 100,
            p_mc: 0.9,
            seed: 7,
            ..SamplerConfig::default()
        };
        let mut chain = Chain::new(small_context(3, cfg, alpha)).unwrap();
        for k in 0..12 {
            chain.run_until(50 * (k + 1)).unwrap();
            chain.state().check_caches(chain.model()).unwrap();
            let fast = chain.state().log_posterior(chain.model());
            let full = full_log_joint(chain.model(), chain.state());
            assert!(
                (fast - full).abs() < 1e-8 * (1.0 + full.abs()),
                "{fast} vs {full}"
            );
        }
    }
}

#[test]
fn state_ratio_matches_full_joint() {
    let cfg = SamplerConfig {
        iterations: 300,
        burn_in: 0,
        seed: 2,
        ..SamplerConfig::default()
    };
    let mut chain = Chain::new(small_context(5, cfg, 0.7)).unwrap();
    chain.run_until(300).unwrap();
    let model = chain.model().clone();
    let mut state = chain.state().clone();
    // Force some selections so the outcome and prior terms are exercised.
    for (g, m) in [(0, 3), (0, 4), (1, 4), (2, 0), (3, 9)] {
        state.set_association(g, m, true);
        state.gene_loglik[g] = model.gene_loglik(g, &state.xi, &state.included[g]).unwrap();
    }
    let mut rng = seeded_rng(1);
    for _ in 0..200 {
        let i = rng.random_range(0..model.n_samples());
        let m = rng.random_range(0..model.n_probes());
        let new = rng.random_range(1..=4u8);
        if new == state.xi.get(i, m) {
            continue;
        }
        let before = full_log_joint(&model, &state);
        let ratio = state_move_ratio(&mut state, &model, i, m, new).unwrap();
        let mut moved = state.clone();
        moved.set_state(&model, i, m, new);
        for &(g, v) in &ratio.gene_loglik {
            moved.gene_loglik[g] = v;
        }
        let after = full_log_joint(&model, &moved);
        let target = ratio.total() - ratio.proposal;
        assert!((target - (after - before)).abs() < 1e-10 * (1.0 + before.abs()));
        moved.check_caches(&model).unwrap();
        if rng.random::<bool>() {
            state = moved;
        }
    }
}

#[test]
fn unselected_probe_ratio_has_no_outcome_term() {
    let cfg = SamplerConfig::default();
    let ctx = small_context(9, cfg, f64::INFINITY);
    let mut chain = Chain::new(ctx).unwrap();
    chain.run_until(0).unwrap();
    let model = chain.model().clone();
    let mut state = chain.state().clone();
    let old = state.xi.get(0, 5);
    let new = if old == 3 { 1 } else { 3 };
    let ratio = state_move_ratio(&mut state, &model, 0, 5, new).unwrap();
    assert_eq!(ratio.outcome, 0.0);
    assert_eq!(ratio.selection_prior, 0.0);
    assert!(ratio.gene_loglik.is_empty());
}

#[test]
fn retained_bookkeeping() {
    let cfg = SamplerConfig {
        iterations: 10,
        burn_in: 9,
        thin: 1,
        ..SamplerConfig::default()
    };
    let trace = run_chain(small_context(1, cfg, 30.0)).unwrap();
    assert_eq!(trace.retained, 1);
    assert_eq!(trace.iterations, vec![9]);

    let cfg = SamplerConfig {
        iterations: 400,
        burn_in: 100,
        thin: 7,
        seed: 4,
        ..SamplerConfig::default()
    };
    let trace = run_chain(small_context(1, cfg.clone(), 30.0)).unwrap();
    assert_eq!(trace.retained, cfg.retained());
    assert_eq!(trace.log_posterior.len() as u64, cfg.retained());
    assert!(trace
        .xi_counts
        .iter()
        .all(|c| c.iter().sum::<u64>() == trace.retained));
    assert!(trace.r_counts.iter().all(|&c| c <= trace.retained));
    let r_total: u64 = trace.r_counts.iter().sum();
    assert_eq!(r_total, trace.r_size.iter().sum::<u64>());
    for (k, occ) in trace.occupancy.iter().enumerate() {
        assert_eq!(occ.iter().sum::<u64>(), 12 * 10, "sample {k}");
    }
    let per_state: Vec<u64> = (0..4)
        .map(|j| trace.xi_counts.iter().map(|c| c[j]).sum())
        .collect();
    let from_series: Vec<u64> = (0..4)
        .map(|j| trace.occupancy.iter().map(|o| o[j]).sum())
        .collect();
    assert_eq!(per_state, from_series);
}

#[test]
fn same_seed_same_trace() {
    let cfg = SamplerConfig {
        iterations: 300,
        burn_in: 100,
        seed: 11,
        ..SamplerConfig::default()
    };
    let a = run_chain(small_context(2, cfg.clone(), 30.0)).unwrap();
    let b = run_chain(small_context(2, cfg.clone(), 30.0)).unwrap();
    assert_eq!(a, b);
    let c = run_chain(small_context(2, SamplerConfig { seed: 12, ..cfg }, 30.0)).unwrap();
    assert_ne!(a.log_posterior, c.log_posterior);
}

#[test]
fn stopping_and_continuing_is_seamless() {
    let cfg = SamplerConfig {
        iterations: 250,
        burn_in: 50,
        seed: 5,
        ..SamplerConfig::default()
    };
    let whole = run_chain(small_context(4, cfg.clone(), 30.0)).unwrap();
    let mut chain = Chain::new(small_context(4, cfg, 30.0)).unwrap();
    chain.run_until(120).unwrap();
    let partial = chain.trace();
    assert_eq!(partial.retained, 70);
    chain.run().unwrap();
    assert_eq!(chain.into_trace(), whole);
}

fn flat_hyper() -> HmmHyper {
    HmmHyper {
        mean_loc: [0.0; 4],
        mean_scale: [1.0; 4],
        mean_low: [f64::NEG_INFINITY; 4],
        mean_high: [f64::INFINITY; 4],
        sd_upper: [1e6; 4],
        gain_floor_from_state3: false,
        ..HmmHyper::default()
    }
}

fn tiny_model(x: &[f64], xi_rows: &[Vec<u8>], hmm_hyper: HmmHyper) -> (Model, ChainState) {
    let n = xi_rows.len();
    let m = xi_rows[0].len();
    let data = ObservedData::new(
        DMatrix::from_fn(n, 1, |i, _| i as f64),
        DMatrix::from_row_slice(n, m, x),
        (0..m).map(|k| k as f64).collect(),
        m as f64,
    )
    .unwrap();
    let ctx = validate(
        data,
        RegressionHyper::default(),
        hmm_hyper,
        SamplerConfig::default(),
    )
    .unwrap();
    let model = Model::new(ctx).unwrap();
    let hmm = HmmParams::new([[0.25; 4]; 4], [-0.5, 0.0, 0.5, 1.0], [1.0; 4]).unwrap();
    let xi = LatentStateMatrix::from_rows(xi_rows).unwrap();
    let r = AssociationMatrix::zeros(1, m);
    let state = ChainState::new(&model, xi, r, hmm).unwrap();
    (model, state)
}

#[test]
fn mean_update_matches_conjugate_example() {
    // Four log-ratios averaging 1 in state 1, sd 1, prior N(0, 1).
    let (model, mut state) = tiny_model(
        &[1.5, 0.5, 9.0, 0.0, 2.0, 9.0],
        &[vec![1, 1, 2], vec![1, 1, 2]],
        flat_hyper(),
    );
    let mut rng = seeded_rng(3);
    let draws: Vec<f64> = (0..100_000)
        .map(|_| {
            update_means(&mut state, &model, &mut rng).unwrap();
            state.hmm.means[0]
        })
        .collect();
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((mean - 0.8).abs() < 4.0 * (0.2f64 / n).sqrt());
    assert!((var - 0.2).abs() < 0.01);
    // Empty state: prior draw.
    let unused: Vec<f64> = (0..20_000)
        .map(|_| {
            update_means(&mut state, &model, &mut rng).unwrap();
            state.hmm.means[2]
        })
        .collect();
    let m3 = unused.iter().sum::<f64>() / unused.len() as f64;
    assert!(m3.abs() < 4.0 / (unused.len() as f64).sqrt());
}

#[test]
fn sd_update_matches_conjugate_example() {
    // Two state-1 log-ratios at mean +- 1: V = 2, n = 2 -> Gamma(2, 2).
    let (model, mut state) = tiny_model(
        &[-1.0, 0.0, 1.0, 0.0],
        &[vec![1, 2], vec![1, 2]],
        HmmHyper {
            precision_shape: [1.0; 4],
            precision_rate: [1.0; 4],
            ..flat_hyper()
        },
    );
    state.hmm.means[0] = 0.0;
    let mut rng = seeded_rng(8);
    let draws: Vec<f64> = (0..100_000)
        .map(|_| {
            update_sds(&mut state, &model, &mut rng).unwrap();
            state.hmm.sds[0].powi(-2)
        })
        .collect();
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let se = (0.5f64 / n).sqrt();
    assert!((mean - 1.0).abs() < 3.0 * se, "{mean}");
}

#[test]
fn sd_update_respects_floor() {
    let (model, mut state) = tiny_model(
        &[-3.0, 0.0, 3.0, 0.0],
        &[vec![1, 2], vec![1, 2]],
        HmmHyper {
            sd_upper: [0.41; 4],
            ..flat_hyper()
        },
    );
    let mut rng = seeded_rng(2);
    for _ in 0..1000 {
        update_sds(&mut state, &model, &mut rng).unwrap();
        assert!(state.hmm.sds.iter().all(|&s| s <= 0.41));
    }
}

#[test]
fn transition_update_tracks_conjugate_mean() {
    let n = 20;
    let mut rng = seeded_rng(6);
    let a = simulation_transition();
    let rows: Vec<Vec<u8>> = (0..n)
        .map(|_| {
            let first = draw_state(&mut rng, &[0.25; 4]);
            vec![first, draw_state(&mut rng, &a[usize::from(first - 1)])]
        })
        .collect();
    let x: Vec<f64> = vec![0.0; 2 * n];
    let (model, mut state) = tiny_model(&x, &rows, HmmHyper::default());
    let counts = state.transitions[1];
    let conjugate = (1.0 + counts[1] as f64) / (4.0 + counts.iter().sum::<u64>() as f64);
    let mut stats = AcceptanceStats::default();
    let mut total = 0.0;
    let sweeps = 20_000;
    for _ in 0..sweeps {
        update_transitions(&mut state, &model, &mut rng, &mut stats).unwrap();
        total += state.hmm.transition[1][1];
    }
    assert!((total / sweeps as f64 - conjugate).abs() < 0.05);
    assert!(stats.transition_accepted > 0);
    let pi = state.hmm.stationary;
    let next: Vec<f64> = (0..4)
        .map(|j| (0..4).map(|h| pi[h] * state.hmm.transition[h][j]).sum())
        .collect();
    assert!(next.iter().zip(pi).all(|(a, b)| (a - b).abs() < 1e-10));
}

#[test]
fn full_mask_blocks_association_moves() {
    let n = 6;
    let data = ObservedData::new(
        DMatrix::from_fn(n, 2, |i, g| (i * (g + 1)) as f64),
        DMatrix::zeros(n, 5),
        (0..5).map(|k| k as f64).collect(),
        10.0,
    )
    .unwrap();
    let cfg = SamplerConfig {
        iterations: 200,
        burn_in: 0,
        p_mc: 0.9,
        moves: MoveSet {
            associations: true,
            ..MoveSet {
                associations: false,
                states: false,
                emission_means: false,
                emission_sds: false,
                transitions: false,
            }
        },
        ..SamplerConfig::default()
    };
    let ctx = validate(data, RegressionHyper::default(), HmmHyper::default(), cfg).unwrap();
    let mut chain = Chain::new(ctx).unwrap();
    chain.run().unwrap();
    assert_eq!(chain.state().associations().count_ones(), 0);
    let st = chain.acceptance();
    assert_eq!(st.add_proposed + st.delete_proposed + st.swap_proposed, 0);
    assert!(st.association_noop > 0);
}

#[test]
fn strong_signal_is_selected() {
    let n = 40;
    let mut rng = seeded_rng(21);
    let states: Vec<u8> = (0..n).map(|_| rng.random_range(1..=4)).collect();
    let x = DMatrix::from_fn(n, 3, |i, m| {
        if m == 1 {
            f64::from(states[i]) * 0.5 - 1.0
        } else {
            0.0
        }
    });
    let y = DMatrix::from_fn(n, 1, |i, _| {
        5.0 * f64::from(states[i]) + 0.01 * rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    let data = ObservedData::new(y, x, vec![0.0, 1.0, 2.0], 10.0)
        .unwrap()
        .standardized();
    let cfg = SamplerConfig {
        iterations: 2500,
        burn_in: 500,
        moves: MoveSet {
            associations: true,
            states: false,
            emission_means: false,
            emission_sds: false,
            transitions: false,
        },
        ..SamplerConfig::default()
    };
    let ctx = validate(data, RegressionHyper::default(), HmmHyper::default(), cfg).unwrap();
    let xi = LatentStateMatrix::from_fn(n, 3, |i, m| if m == 1 { states[i] } else { 2 }).unwrap();
    let hmm = HmmParams::new(
        simulation_transition(),
        [-0.65, 0.0, 0.65, 1.5],
        [0.1, 0.1, 0.1, 0.2],
    )
    .unwrap();
    let mut chain = Chain::from_values(ctx, xi, AssociationMatrix::zeros(1, 3), hmm).unwrap();
    chain.run().unwrap();
    let trace = chain.into_trace();
    let ppi = trace.r_counts[1] as f64 / trace.retained as f64;
    assert!(ppi > 0.95, "PPI {ppi}");
}
