use dsvb::data::{window, Domain, NormalizationStats, SequenceDataset};
use dsvb::diffcore::{Graph, Tensor};
use dsvb::loss::{bce_from_logits, bce_loss};
use dsvb::vrnn::gaussian_kld_values;
use proptest::prelude::*;

fn gaussian(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(-3.0..3.0f64, n), prop::collection::vec(0.05..4.0f64, n))
}

fn dataset(rows: usize, n_y: usize, n_x: usize, vals: &[f64]) -> SequenceDataset {
    let take = |k: usize, off: usize| (0..k).map(|i| vals[(i + off) % vals.len()] * (1.0 + (i % 7) as f64)).collect();
    SequenceDataset::new(
        (0..rows).map(|i| i as f64 * 0.1).collect(),
        Tensor::matrix(rows, n_y, take(rows * n_y, 0)).unwrap(),
        Some(Tensor::matrix(rows, n_x, take(rows * n_x, 3)).unwrap()),
        Domain::Source,
        10.0,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kld_is_non_negative((mq, sq) in gaussian(4), (mp, sp) in gaussian(4)) {
        let k = gaussian_kld_values(&mq, &sq, &mp, &sp).unwrap();
        prop_assert!(k >= -1e-12);
        prop_assert!(gaussian_kld_values(&mq, &sq, &mq, &sq).unwrap().abs() < 1e-12);
    }

    #[test]
    fn normalisation_inverts(vals in prop::collection::vec(-5.0..5.0f64, 7..40), rows in 3usize..30) {
        let ds = dataset(rows, 3, 2, &vals);
        let stats = NormalizationStats::fit(&ds).unwrap();
        let states = ds.states.as_ref().unwrap();
        let back = stats.denormalize_states(&stats.normalize_states(states).unwrap()).unwrap();
        for (a, b) in back.data().iter().zip(states.data()) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn windows_tile_the_sequence(rows in 5usize..80, seq in 1usize..20, stride in 1usize..10) {
        let ds = dataset(rows, 2, 2, &[0.5, -1.0, 2.0]);
        match window(&ds, seq, stride) {
            Ok(ws) => {
                prop_assert!(rows >= seq);
                prop_assert_eq!(ws.len(), (rows - seq) / stride + 1);
                for w in &ws {
                    prop_assert_eq!(w.len(), seq);
                    prop_assert!(w.start + seq <= rows);
                    prop_assert_eq!(w.measurements.row_slice(0), ds.measurements.row_slice(w.start));
                }
            }
            Err(_) => prop_assert!(rows < seq),
        }
    }

    #[test]
    fn logit_bce_matches_probability_bce(z in prop::collection::vec(-8.0..8.0f64, 1..16), bits in any::<u16>()) {
        let labels: Vec<f64> = (0..z.len()).map(|i| ((bits >> i) & 1) as f64).collect();
        let probs: Vec<f64> = z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect();
        let a = bce_from_logits(&z, &labels);
        let b = bce_loss(&probs, &labels).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn matmul_matches_naive(m in 1usize..6, k in 1usize..6, n in 1usize..6, vals in prop::collection::vec(-2.0..2.0f64, 36)) {
        let a: Vec<f64> = (0..m * k).map(|i| vals[i % 36]).collect();
        let b: Vec<f64> = (0..k * n).map(|i| vals[(i * 5 + 1) % 36]).collect();
        let mut g = Graph::new();
        let va = g.constant(Tensor::matrix(m, k, a.clone()).unwrap());
        let vb = g.constant(Tensor::matrix(k, n, b.clone()).unwrap());
        let c = g.matmul(va, vb).unwrap();
        let got = g.value(c);
        for i in 0..m {
            for j in 0..n {
                let want: f64 = (0..k).map(|t| a[i * k + t] * b[t * n + j]).sum();
                prop_assert!((got.get(i, j) - want).abs() < 1e-12);
            }
        }
    }
}
