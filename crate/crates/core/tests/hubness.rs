mod common;

use common::{brute_hubness, brute_knn, brute_select};
use hub_vae::distributions::DiagGaussian;
use hub_vae::hubness::{
    bad_hubness, build_knn_graph, filter_good_hubs, good_hub_scores, hubness_scores, pairwise_wasserstein,
    select_hubs, DEFAULT_LAMBDA,
};
use hub_vae::numerics::Tensor2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn points(n: usize, d: usize, grid: bool) -> impl Strategy<Value = Vec<DiagGaussian>> {
    let coord = if grid { (0i32..3).prop_map(f64::from).boxed() } else { (-3.0f64..3.0).boxed() };
    proptest::collection::vec(
        (proptest::collection::vec(coord, d), proptest::collection::vec(0.1f64..2.0, d)),
        n,
    )
    .prop_map(|v| v.into_iter().map(|(m, s)| DiagGaussian::new(m, s).unwrap()).collect())
}

fn instance() -> impl Strategy<Value = (Vec<DiagGaussian>, usize)> {
    (3usize..60, 1usize..4, any::<bool>())
        .prop_flat_map(|(n, d, grid)| (points(n, d, grid), 1..n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_and_selection_match_brute_force((post, k) in instance()) {
        let dist = pairwise_wasserstein(&post);
        let rows: Vec<Vec<f64>> = (0..post.len()).map(|i| dist.row(i).to_vec()).collect();
        let graph = build_knn_graph(&dist, k).unwrap();
        let knn = brute_knn(&rows, k);
        prop_assert_eq!(&graph.neighbors, &knn);
        let (counts, rknn) = brute_hubness(&knn);
        let records = hubness_scores(&graph);
        for r in &records {
            prop_assert_eq!(r.hubness, counts[r.index]);
            let mut got = r.rknn.clone();
            got.sort_unstable();
            prop_assert_eq!(&got, &rknn[r.index]);
        }
        let selected: Vec<usize> = select_hubs(&records, DEFAULT_LAMBDA).iter().map(|h| h.index).collect();
        prop_assert_eq!(selected, brute_select(&counts, DEFAULT_LAMBDA));
    }

    #[test]
    fn in_degrees_sum_to_n_times_k((post, k) in instance()) {
        let graph = build_knn_graph(&pairwise_wasserstein(&post), k).unwrap();
        let total: usize = hubness_scores(&graph).iter().map(|r| r.hubness).sum();
        prop_assert_eq!(total, post.len() * k);
    }

    #[test]
    fn selection_ignores_monotone_distance_transforms((post, k) in instance()) {
        let dist = pairwise_wasserstein(&post);
        let warped = dist.map(|v| (3.0 * v).exp() + v.powi(3));
        let a: Vec<usize> = select_hubs(&hubness_scores(&build_knn_graph(&dist, k).unwrap()), DEFAULT_LAMBDA)
            .iter().map(|h| h.index).collect();
        let b: Vec<usize> = select_hubs(&hubness_scores(&build_knn_graph(&warped, k).unwrap()), DEFAULT_LAMBDA)
            .iter().map(|h| h.index).collect();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn filtered_hubs_on_separated_latents_are_mostly_good() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let centers = [[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]];
    let mut post = Vec::new();
    let mut labels = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..100 {
            let mean: Vec<f64> = center.iter().map(|m| m + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
            post.push(DiagGaussian::new(mean, vec![0.05, 0.05]).unwrap());
            labels.push(c);
        }
    }
    let n = post.len();
    let samples: Vec<Vec<f64>> = post
        .iter()
        .map(|q| q.mean.iter().zip(&q.var).map(|(m, v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let k = (n as f64).sqrt().round() as usize;
    let graph = build_knn_graph(&pairwise_wasserstein(&post), k).unwrap();
    let mut hubs = select_hubs(&hubness_scores(&graph), DEFAULT_LAMBDA);
    // Gaussian observation model standing in for the decoder.
    good_hub_scores(&mut hubs, &post, 2, |h, r| {
        -0.5 * post[h].mean.iter().zip(&samples[r]).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
    })
    .unwrap();
    let pool = filter_good_hubs(&hubs, 0);
    assert!(!pool.is_empty());
    let good = pool
        .hubs
        .iter()
        .filter(|&&i| bad_hubness(hubs.iter().find(|h| h.index == i).unwrap(), &labels) < 0.5)
        .count();
    assert!(good as f64 >= 0.9 * pool.len() as f64, "{good}/{}", pool.len());
}

#[test]
fn graph_rejects_bad_k() {
    let d = Tensor2::zeros(3, 3);
    assert!(build_knn_graph(&d, 0).is_err());
    assert!(build_knn_graph(&d, 3).is_err());
}
