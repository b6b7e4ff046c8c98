use agentgraph::baselines::{self, BaselineKind, BaselineSpec, DEFAULT_P_REWIRE};
use agentgraph::metrics::{self, DiameterOptions, Statistic};
use agentgraph::network::{DegreeMode, Network};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn undirected(n: usize, edges: Vec<(u32, u32)>) -> Network {
    Network::new(n, false, edges)
}

fn arb_network() -> impl Strategy<Value = Network> {
    (2usize..24).prop_flat_map(|n| {
        proptest::collection::vec((0..n as u32, 0..n as u32), 0..60).prop_map(move |e| undirected(n, e))
    })
}

/// Discrete power-law draws by rounding a continuous Pareto variate.
fn power_law_sample(n: usize, alpha: f64, k_min: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            ((k_min as f64 - 0.5) * (1.0 - u).powf(-1.0 / (alpha - 1.0)) + 0.5).floor() as usize
        })
        .collect()
}

#[test]
fn exponent_estimate_tightens_with_sample_size() {
    for (n, tol) in [(1_000, 0.15), (10_000, 0.08), (100_000, 0.05)] {
        for seed in 0..3 {
            let fit = metrics::fit_power_law(&power_law_sample(n, 2.5, 2, seed)).unwrap();
            assert!((fit.alpha - 2.5).abs() <= tol, "n={n} seed={seed}: alpha {}", fit.alpha);
        }
    }
}

#[test]
fn power_law_sample_passes_the_validity_gate() {
    let fit = metrics::fit_power_law(&power_law_sample(20_000, 2.5, 2, 11)).unwrap();
    assert!(fit.d_k < 0.1, "D_k {}", fit.d_k);
    assert!(fit.is_valid());
}

#[test]
fn er_mean_degree_matches_target() {
    let spec = BaselineSpec { kind: BaselineKind::ER, n: 1001, kbar: 4.0, p_rewire: DEFAULT_P_REWIRE, seed: 0 };
    let mean = (0..20u64)
        .map(|seed| metrics::mean_degree(&baselines::generate(&BaselineSpec { seed, ..spec }).unwrap()))
        .sum::<f64>()
        / 20.0;
    assert!((mean - 4.0).abs() <= 0.4, "mean degree {mean}");
}

#[test]
fn er_clustering_is_near_p() {
    for seed in 0..5 {
        let spec = BaselineSpec { kind: BaselineKind::ER, n: 4000, kbar: 8.0, p_rewire: DEFAULT_P_REWIRE, seed };
        let g = baselines::generate(&spec).unwrap();
        let p = spec.er_p();
        // Given the degrees, each neighbour pair of node i is linked with
        // probability p, so c_i ~ Binomial(C(k_i, 2), p) / C(k_i, 2).
        let n = g.node_count() as f64;
        let degrees = g.degree_sequence(DegreeMode::Total);
        let pairs: Vec<f64> = degrees.iter().filter(|&&k| k >= 2).map(|&k| (k * (k - 1) / 2) as f64).collect();
        let expected = p * pairs.len() as f64 / n;
        let sigma = (pairs.iter().map(|m| p * (1.0 - p) / m).sum::<f64>()).sqrt() / n;
        let c = metrics::avg_clustering(&g);
        assert!((c - expected).abs() <= 3.0 * sigma, "seed {seed}: c {c} expected {expected} sigma {sigma}");
    }
}

/// Exponent of the discrete power law from k = 2 closest (in KL divergence) to
/// the limiting BA(m = 2) law P(k) = 12 / (k (k+1) (k+2)): the root of
/// E_BA[ln k] = E_alpha[ln k].
fn ba_pseudo_true_alpha() -> f64 {
    const K: usize = 200_000;
    let target: f64 = (2..=K).map(|k| {
        let k = k as f64;
        12.0 * k.ln() / (k * (k + 1.0) * (k + 2.0))
    }).sum();
    let mean_ln = |a: f64| {
        let (mut z, mut zl) = (0.0, 0.0);
        for k in 2..=K {
            let w = (k as f64).powf(-a);
            z += w;
            zl += w * (k as f64).ln();
        }
        let kf = K as f64;
        let tail = kf.powf(1.0 - a) / (a - 1.0);
        z += tail;
        zl += tail * (kf.ln() + 1.0 / (a - 1.0));
        zl / z
    };
    let (mut lo, mut hi) = (1.5, 4.0);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if mean_ln(mid) > target { lo = mid } else { hi = mid }
    }
    0.5 * (lo + hi)
}

#[test]
fn ba_degree_fit_matches_limiting_law() {
    let alpha_star = ba_pseudo_true_alpha();
    for seed in 0..3 {
        let spec = BaselineSpec { kind: BaselineKind::BA, n: 10_000, kbar: 4.0, p_rewire: DEFAULT_P_REWIRE, seed };
        let degrees = baselines::generate(&spec).unwrap().degree_sequence(DegreeMode::Total);
        let fit = metrics::fit_power_law(&degrees).unwrap();
        assert!((fit.alpha - alpha_star).abs() <= 0.05, "seed {seed}: alpha {} vs {alpha_star}", fit.alpha);
        assert!(fit.is_valid());
        // Away from the curved low-degree head the exponent approaches 3.
        let tail = metrics::fit_power_law_with(&degrees, 6).unwrap();
        assert!((2.6..=3.2).contains(&tail.alpha), "seed {seed}: tail alpha {}", tail.alpha);
    }
}

#[test]
fn ws_keeps_high_clustering_at_low_rewiring() {
    let spec = BaselineSpec { kind: BaselineKind::WS, n: 1000, kbar: 2.0, p_rewire: DEFAULT_P_REWIRE, seed: 2 };
    let g = baselines::generate(&spec).unwrap();
    // Ring lattice with k = 4 has c = 0.5; light rewiring keeps most of it.
    assert!(metrics::avg_clustering(&g) > 0.3);
}

#[test]
fn cc_ratio_against_own_model_is_near_one() {
    for kind in BaselineKind::ALL {
        let spec = BaselineSpec { kind, n: 5000, kbar: 12.0, p_rewire: DEFAULT_P_REWIRE, seed: 40 };
        let g = baselines::generate(&spec).unwrap();
        let r = metrics::cc_ratio(&g, kind, 5, 100).unwrap();
        assert!((0.7..=1.3).contains(&r), "{kind}: ratio {r}");
    }
}

#[test]
fn sampled_diameter_tracks_exact_value() {
    let spec = BaselineSpec { kind: BaselineKind::BA, n: 3000, kbar: 4.0, p_rewire: DEFAULT_P_REWIRE, seed: 8 };
    let g = baselines::generate(&spec).unwrap();
    let exact = metrics::effective_diameter_with(&g, &DiameterOptions { exact_cap: usize::MAX, ..Default::default() }).unwrap();
    let sampled = metrics::effective_diameter_with(&g, &DiameterOptions { exact_cap: 0, seed: 5, ..Default::default() }).unwrap();
    assert!((exact - sampled).abs() <= 0.5, "exact {exact} sampled {sampled}");
}

#[test]
fn white_noise_has_no_strong_period() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let series: Vec<f64> = (0..256).map(|_| rng.gen::<f64>()).collect();
    let snr = metrics::snr_periodicity(&series).unwrap();
    assert!(snr < 15.0, "snr {snr}");
    let periodic: Vec<f64> = (0..256).map(|t| (t as f64 * std::f64::consts::TAU / 16.0).sin() + 0.05 * rng.gen::<f64>()).collect();
    assert!(metrics::snr_periodicity(&periodic).unwrap() > 20.0);
}

#[test]
fn singleton_sets_of_different_graphs_have_positive_mmd() {
    let path = undirected(4, vec![(0, 1), (1, 2), (2, 3)]);
    let clique = undirected(4, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
    for s in [Statistic::Degree, Statistic::Clustering, Statistic::Spectrum, Statistic::Orbit] {
        let d = metrics::mmd(std::slice::from_ref(&path), std::slice::from_ref(&clique), s);
        // A singleton pair reduces to 2 - 2k(a, b).
        let da = &metrics::descriptors(std::slice::from_ref(&path))[0];
        let db = &metrics::descriptors(std::slice::from_ref(&clique))[0];
        let k = match s {
            Statistic::Degree => metrics::kernel(s, &da.degree, &db.degree),
            Statistic::Clustering => metrics::kernel(s, &da.clustering, &db.clustering),
            Statistic::Spectrum => metrics::kernel(s, &da.spectrum, &db.spectrum),
            Statistic::Orbit => metrics::kernel(s, &da.orbit, &db.orbit),
        };
        assert!((d - (2.0 - 2.0 * k)).abs() < 1e-12, "{s:?}");
        assert!(d > 0.0, "{s:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fractions_stay_in_unit_interval(g in arb_network()) {
        let fp = metrics::friendship_paradox_fraction(&g);
        prop_assert!((0.0..=1.0).contains(&fp));
        let c = metrics::avg_clustering(&g);
        prop_assert!((0.0..=1.0).contains(&c));
        for ci in metrics::local_clustering(&g) {
            prop_assert!((0.0..=1.0).contains(&ci));
        }
        if let Ok(l) = metrics::lcc_fraction(&g) {
            prop_assert!(l > 0.0 && l <= 1.0);
        }
        if let Ok(r) = metrics::assortativity(&g) {
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&r));
        }
    }

    #[test]
    fn mmd_is_symmetric_and_zero_on_itself(a in arb_network(), b in arb_network()) {
        for s in [Statistic::Degree, Statistic::Clustering, Statistic::Orbit] {
            let ab = metrics::mmd(std::slice::from_ref(&a), std::slice::from_ref(&b), s);
            let ba = metrics::mmd(std::slice::from_ref(&b), std::slice::from_ref(&a), s);
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ab >= 0.0);
            prop_assert!(metrics::mmd(std::slice::from_ref(&a), std::slice::from_ref(&a), s).abs() < 1e-12);
        }
    }

    #[test]
    fn two_sample_ks_is_symmetric(a in proptest::collection::vec(2usize..40, 1..50), b in proptest::collection::vec(2usize..40, 1..50)) {
        let ab = metrics::d_k_cross(&a, &b, 2).unwrap();
        let ba = metrics::d_k_cross(&b, &a, 2).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(metrics::d_k_cross(&a, &a, 2).unwrap(), 0.0);
    }

    #[test]
    fn gem_stays_in_range(m in proptest::array::uniform4(0.0f64..10.0), v in 0.0f64..=1.0) {
        let g = metrics::gem(m[0], m[1], m[2], m[3], v);
        prop_assert!(g >= 0.0 && g <= 0.6 + 1e-12);
    }

    #[test]
    fn diameter_is_at_least_one_when_connected_pairs_exist(g in arb_network()) {
        match metrics::effective_diameter(&g) {
            Ok(d) => prop_assert!(d >= 1.0 - 1e-12 && d <= g.node_count() as f64),
            Err(_) => prop_assert_eq!(g.edge_count(), 0),
        }
    }
}
