//! Round trips, bounds and channel statistics over random inputs.

use irslab::channel::{
    draw_channels, path_loss_linear, rician_weights, steering_vector, ArrayDims, ChannelParams, ComplexMatrix,
    DeploymentParams, Geometry,
};
use irslab::env::{project_power, update_energy, IrsAction, IrsConfig};
use irslab::mdp::{DiscreteActionSpace, GlobalState, LocalBsState, LocalIrsState};
use irslab::nn::{Checkpoint, MlpShape, Mlp, Activation};
use irslab::rng::{complex_gaussian, stream};
use num_complex::Complex64;
use proptest::prelude::*;

fn irs_action() -> impl Strategy<Value = IrsAction> {
    (1u32..=5, 1usize..=6).prop_flat_map(|(b, n)| {
        (
            proptest::collection::vec(0u32..(1 << b), n),
            proptest::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(phase_levels, status)| IrsAction {
                resolution: b,
                phase_levels,
                status,
            })
    })
}

proptest! {
    #[test]
    fn action_index_round_trips(a in irs_action()) {
        let space = DiscreteActionSpace::new(a.resolution, a.phase_levels.len()).unwrap();
        let index = space.encode(&a).unwrap();
        prop_assert!(index < space.cardinality().unwrap());
        prop_assert_eq!(space.decode(index).unwrap(), a);
    }

    #[test]
    fn flat_state_round_trips(
        l in 1usize..4,
        k in 1usize..5,
        values in proptest::collection::vec(-1e3f64..1e3, 64),
    ) {
        let mut it = values.iter().copied().cycle();
        let state = GlobalState {
            irs: (0..l)
                .map(|_| LocalIrsState {
                    weighted_flags: (0..k).map(|_| it.next().unwrap()).collect(),
                    energy_mj: it.next().unwrap(),
                })
                .collect(),
            bs: LocalBsState { powers_mw: (0..k).map(|_| it.next().unwrap()).collect() },
        };
        let flat = state.flatten();
        prop_assert_eq!(flat.len(), GlobalState::flat_len(l, k));
        prop_assert_eq!(GlobalState::from_flat(&flat, l, k).unwrap(), state);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(seed in any::<u64>(), hidden in 1usize..12) {
        let shape = MlpShape::stack(3, &[hidden], 2, Activation::Tanh, Activation::Identity).unwrap();
        let mut net = Mlp::new(shape, &mut stream(seed, 0));
        // Awkward values must survive too.
        net.params[0] = -0.0;
        net.params[1] = f64::MIN_POSITIVE / 3.0;
        let mut ck = Checkpoint::new("maq-pg", serde_json::json!({"seed": seed}));
        ck.insert("net", &net.shape, &net.params).unwrap();
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &ck);
        let params = back.params("net", net.params.len()).unwrap();
        let bits: Vec<u64> = params.iter().map(|v| v.to_bits()).collect();
        let want: Vec<u64> = net.params.iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(bits, want);
    }

    #[test]
    fn energy_stays_in_bounds(
        energy in proptest::collection::vec(-50.0f64..100.0, 1..5),
        power in 0.0f64..500.0,
        harvest in 0.0f64..50.0,
    ) {
        let irs = IrsConfig::default();
        let n = energy.len();
        let next = update_energy(&energy, &vec![power; n], &vec![harvest; n], &irs);
        for e in next {
            prop_assert!(e >= irs.e_min_mj && e <= irs.e_max_mj);
        }
    }

    #[test]
    fn projection_lands_in_the_power_ball(
        m in 1usize..5,
        k in 1usize..5,
        scale in 1e-3f64..1e3,
        p_max in 1e-2f64..1e3,
        seed in any::<u64>(),
    ) {
        let mut rng = stream(seed, 0);
        let v = ComplexMatrix::from_vec(m, k, (0..m * k).map(|_| complex_gaussian(&mut rng) * scale).collect()).unwrap();
        let (p, scaled) = project_power(&v, p_max);
        prop_assert!(p.frobenius_sq() <= p_max * (1.0 + 1e-12));
        prop_assert_eq!(scaled, v.frobenius_sq() > p_max);
        if !scaled {
            prop_assert_eq!(p, v);
        } else {
            // Direction is preserved.
            let ratio = (v.frobenius_sq() / p.frobenius_sq()).sqrt();
            for (a, b) in v.as_slice().iter().zip(p.as_slice()) {
                prop_assert!((a - b * ratio).norm() <= 1e-9 * a.norm().max(1e-300));
            }
        }
    }
}

/// Sample mean and variance of each link's entries against the Rician and
/// Rayleigh closed forms.
#[test]
fn channel_moments_match_closed_form() {
    let params = ChannelParams::default();
    let geometry = Geometry::sample(1, 1, &DeploymentParams::default(), &mut stream(3, 0)).unwrap();
    let dims = ArrayDims {
        bs_antennas: 2,
        irs_elements: vec![2],
    };
    let draws = 20_000;
    let mut rng = stream(4, 0);
    let mut sum_ru = Complex64::new(0.0, 0.0);
    let mut sq_ru = 0.0;
    let mut sq_bu = 0.0;
    let mut sum_bu = Complex64::new(0.0, 0.0);
    for _ in 0..draws {
        let set = draw_channels(&geometry, &dims, &params, &mut rng).unwrap();
        let ru = set.irs_user[0][0][(1, 0)];
        let bu = set.bs_user[0][(0, 0)];
        sum_ru += ru;
        sq_ru += ru.norm_sqr();
        sum_bu += bu;
        sq_bu += bu.norm_sqr();
    }
    let n = draws as f64;

    let irs = geometry.irs_positions[0];
    let pl = path_loss_linear(geometry.irs_user_distance(0, 0), params.kappa_irs_user, params.pl0_db).unwrap();
    let (los, nlos) = rician_weights(params.rician_irs_user);
    let a = steering_vector(2, irs.azimuth_to(&geometry.user_positions[0]), geometry.antenna_spacing_ratio).unwrap();
    let mean = a.as_slice()[1] * los * pl;
    let var = (nlos * pl).powi(2);
    let sample_mean = sum_ru / n;
    let sample_var = sq_ru / n - sample_mean.norm_sqr();
    // Standard error of the mean is sqrt(var / n); allow five of them.
    assert!((sample_mean - mean).norm() < 5.0 * (var / n).sqrt(), "{sample_mean} vs {mean}");
    assert!((sample_var / var - 1.0).abs() < 0.05, "{sample_var} vs {var}");

    let pl_bu = path_loss_linear(geometry.bs_user_distance(0), params.kappa_bs_user, params.pl0_db).unwrap();
    assert!((sum_bu / n).norm() < 5.0 * (pl_bu * pl_bu / n).sqrt());
    assert!((sq_bu / n / (pl_bu * pl_bu) - 1.0).abs() < 0.05);
}
