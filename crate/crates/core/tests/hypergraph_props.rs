use hgin_core::hypergraph::{
    laplacian, propagation_matrix, spectral_oracle, Activation, HypergraphConfig, HypergraphLayer, IncidenceFactors,
};
use hgin_core::{ParamStore, Tape, Tensor};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn factors() -> impl Strategy<Value = IncidenceFactors> {
    (2usize..20, 1usize..6, 1usize..4).prop_flat_map(|(n, m, c)| {
        (
            prop::collection::vec(0.0f64..2.0, n * c),
            prop::collection::vec(-1.0f64..1.0, c),
            prop::collection::vec(-1.0f64..1.0, n * m),
        )
            .prop_map(move |(psi, lam, omega)| {
                IncidenceFactors::from_factors(
                    Tensor::new(&[n, c], psi).unwrap(),
                    Tensor::new(&[c], lam).unwrap(),
                    Tensor::new(&[n, m], omega).unwrap(),
                    1e-6,
                )
                .unwrap()
            })
    })
}

fn binary_incidence() -> impl Strategy<Value = Tensor> {
    (1usize..12, 1usize..6).prop_flat_map(|(n, m)| {
        prop::collection::vec(prop::bool::weighted(0.4), n * m).prop_map(move |bits| {
            let mut data: Vec<f64> = bits.into_iter().map(f64::from).collect();
            // every vertex joins edge i % m and every edge gets vertex e % n
            for i in 0..n {
                data[i * m + i % m] = 1.0;
            }
            for e in 0..m {
                data[(e % n) * m + e] = 1.0;
            }
            Tensor::new(&[n, m], data).unwrap()
        })
    })
}

fn eigenvalues(t: &Tensor) -> Vec<f64> {
    let n = t.shape()[0];
    DMatrix::from_row_slice(n, n, t.data())
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn incidence_is_nonnegative(f in factors()) {
        prop_assert!(f.h.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn propagation_spectrum_in_unit_interval(f in factors()) {
        let p = propagation_matrix(&f).unwrap();
        let n = f.nodes();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((p.at(&[i, j]) - p.at(&[j, i])).abs() < 1e-12);
            }
        }
        for ev in eigenvalues(&p) {
            prop_assert!((-1e-8..=1.0 + 1e-8).contains(&ev), "eigenvalue {}", ev);
        }
        let l = laplacian(&f).unwrap();
        prop_assert!(eigenvalues(&l).iter().all(|&e| e >= -1e-8));
    }

    #[test]
    fn vertex_permutation_equivariance(h in binary_incidence(), shift in 0usize..11) {
        let (n, m) = h.dims2().unwrap();
        let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
        let hp = Tensor::from_fn(&[n, m], |k| h.data()[perm[k / m] * m + k % m]);
        let p = propagation_matrix(&IncidenceFactors::from_incidence(h, 1e-6).unwrap()).unwrap();
        let pp = propagation_matrix(&IncidenceFactors::from_incidence(hp, 1e-6).unwrap()).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((pp.at(&[i, j]) - p.at(&[perm[i], perm[j]])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn positive_scaling_of_incidence_is_invisible(h in binary_incidence(), s in 0.1f64..10.0) {
        let scaled = h.scale(s);
        let p = propagation_matrix(&IncidenceFactors::from_incidence(h, 1e-6).unwrap()).unwrap();
        let ps = propagation_matrix(&IncidenceFactors::from_incidence(scaled, 1e-6).unwrap()).unwrap();
        prop_assert!(p.zip_map(&ps, |a, b| (a - b).abs()).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn layer_with_identity_theta_matches_oracle(h in binary_incidence(), seed in any::<u64>()) {
        let (n, m) = h.dims2().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let cfg = HypergraphConfig { channels: 2, out_channels: 2, edges: m, embed: 2, window: 3, epsilon: 1e-6 };
        let mut layer = HypergraphLayer::new(&mut store, "hg", cfg, &mut rng).unwrap();
        layer.activation = Activation::Identity;
        *store.value_mut(layer.theta) = Tensor::eye(2);
        let x = Tensor::from_fn(&[1, 1, n, 2], |i| ((i * 37 + seed as usize % 13) % 17) as f64 / 8.0 - 1.0);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let y = layer.forward_with_incidence(&mut tape, &store, xv, std::slice::from_ref(&h)).unwrap();
        let oracle = spectral_oracle(&h, &x.reshape(&[n, 2]).unwrap()).unwrap();
        let err = tape.value(y).data().iter().zip(oracle.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-10, "deviation {}", err);
    }

    #[test]
    fn learned_layer_is_finite(seed in any::<u64>(), scale in 0.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let layer = HypergraphLayer::new(&mut store, "hg", HypergraphConfig::with_defaults(4, 3, 16), &mut rng).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_fn(&[2, 4, 4, 4], |i| scale * ((i as f64) * 0.37).sin()));
        let y = layer.forward(&mut tape, &store, x).unwrap();
        prop_assert_eq!(tape.shape(y), &[2, 4, 4, 3]);
        prop_assert!(tape.value(y).is_finite());
    }
}
