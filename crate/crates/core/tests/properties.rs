use bidistill::data::{MissingMask, Modality, Sample, Dataset};
use bidistill::evalkit::{auc, f1_macro, threshold_predictions};
use bidistill::model::{BdModel, ModelConfig};
use bidistill::numcore::ops::{kl_div, softmax, softmax_temp};
use bidistill::numcore::{sgd_step, DenseArray, ParamStore, RngStream, SgdConfig, SgdState};
use proptest::prelude::*;

fn pairwise_auc(scores: &[f64], labels: &[usize]) -> f64 {
    let mut twice = 0u64;
    let mut pairs = 0u64;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1;
                if si > sj {
                    twice += 2;
                } else if si == sj {
                    twice += 1;
                }
            }
        }
    }
    twice as f64 / (2 * pairs) as f64
}

/// Exact fraction with u128 parts, kept reduced.
#[derive(Clone, Copy)]
struct Frac(u128, u128);

impl Frac {
    fn new(n: u128, d: u128) -> Self {
        let g = gcd(n, d).max(1);
        Frac(n / g, d / g)
    }
    fn add(self, o: Frac) -> Frac {
        Frac::new(self.0 * o.1 + o.0 * self.1, self.1 * o.1)
    }
    fn mul(self, o: Frac) -> Frac {
        Frac::new(self.0 * o.0, self.1 * o.1)
    }
    fn div(self, o: Frac) -> Frac {
        Frac::new(self.0 * o.1, self.1 * o.0)
    }
    fn to_f64(self) -> f64 {
        self.0 as f64 / self.1 as f64
    }
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Precision and recall from the confusion matrix, F1 as their harmonic mean, all exact.
fn confusion_f1(pred: &[usize], labels: &[usize]) -> f64 {
    let mut m = [[0u128; 2]; 2];
    for (&p, &y) in pred.iter().zip(labels) {
        m[y][p] += 1;
    }
    let per_class = |c: usize| {
        let tp = m[c][c];
        let (fp, fn_) = (m[1 - c][c], m[c][1 - c]);
        if tp == 0 {
            return Frac(0, 1);
        }
        let precision = Frac::new(tp, tp + fp);
        let recall = Frac::new(tp, tp + fn_);
        Frac(2, 1).mul(precision).mul(recall).div(precision.add(recall))
    };
    per_class(0).add(per_class(1)).mul(Frac(1, 2)).to_f64()
}

/// Scores drawn from a small grid so ties are common, with both classes present.
fn scored_labels(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<usize>)> {
    (2..=max_n)
        .prop_flat_map(|n| (prop::collection::vec(0u8..12, n), prop::collection::vec(0usize..2, n)))
        .prop_map(|(s, mut y)| {
            y[0] = 0;
            y[1] = 1;
            (s.into_iter().map(|v| f64::from(v) / 11.0).collect(), y)
        })
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(z in prop::collection::vec(-30.0f64..30.0, 1..8), shift in -50.0f64..50.0) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_nonnegative_and_zero_on_self(
        a in prop::collection::vec(-5.0f64..5.0, 2..6),
        seed in any::<u64>(),
        tau in 0.5f64..4.0,
    ) {
        let mut r = RngStream::new(seed);
        let b: Vec<f64> = a.iter().map(|_| 3.0 * r.normal()).collect();
        let p = softmax_temp(&a, tau).unwrap();
        let q = softmax_temp(&b, tau).unwrap();
        prop_assert!(kl_div(&p, &q).unwrap() >= -1e-12);
        prop_assert_eq!(kl_div(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn sgd_with_zero_gradient_and_no_decay_is_identity(
        values in prop::collection::vec(-10.0f64..10.0, 1..20),
        lr in 0.0f64..1.0,
        momentum in 0.0f64..0.99,
    ) {
        let mut store = ParamStore::new();
        store.add("theta", DenseArray::row_vector(values.clone())).unwrap();
        let mut state = SgdState::new(&store, SgdConfig { lr, momentum, weight_decay: 0.0 }).unwrap();
        for _ in 0..3 {
            sgd_step(&mut store, &mut state);
        }
        prop_assert_eq!(store.iter().next().unwrap().value.as_slice(), &values[..]);
    }

    #[test]
    fn frozen_parameters_never_move(values in prop::collection::vec(-10.0f64..10.0, 1..10), g in -5.0f64..5.0) {
        let mut store = ParamStore::new();
        let id = store.add("frozen", DenseArray::row_vector(values.clone())).unwrap();
        store.set_all_trainable(false);
        store.grad_mut(id).fill(g);
        let mut state = SgdState::new(&store, SgdConfig::default()).unwrap();
        sgd_step(&mut store, &mut state);
        prop_assert_eq!(store.value(id).as_slice(), &values[..]);
        prop_assert!(store.grad(id).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn auc_matches_pairwise_oracle((scores, labels) in scored_labels(200)) {
        prop_assert_eq!(auc(&scores, &labels).unwrap(), pairwise_auc(&scores, &labels));
    }

    #[test]
    fn auc_invariant_under_increasing_transform((scores, labels) in scored_labels(80)) {
        let moved: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert_eq!(auc(&scores, &labels).unwrap(), auc(&moved, &labels).unwrap());
    }

    #[test]
    fn f1_matches_confusion_oracle((scores, labels) in scored_labels(120), thr in 0.0f64..1.0) {
        let oracle = confusion_f1(&threshold_predictions(&scores, thr), &labels);
        prop_assert_eq!(f1_macro(&scores, &labels, thr).unwrap(), oracle);
    }

    #[test]
    fn masks_are_nested_with_exact_counts(n in 1usize..120, r1 in 0.0f64..=1.0, r2 in 0.0f64..=1.0, seed in any::<u64>()) {
        let samples = (0..n)
            .map(|i| Sample::new(format!("s{i}"), i % 2, DenseArray::zeros(1, 2), Some(vec![0.0])).unwrap())
            .collect();
        let ds = Dataset::new(samples, 2, 1).unwrap();
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let a = MissingMask::draw(&ds, lo, Modality::Clinical, seed).unwrap();
        let b = MissingMask::draw(&ds, hi, Modality::Clinical, seed).unwrap();
        prop_assert_eq!(a.len(), (lo * n as f64).round() as usize);
        prop_assert!(a.masked.is_subset(&b.masked));
        let masked = a.apply(&ds);
        let absent = masked.samples.iter().filter(|s| !s.has(Modality::Clinical)).count();
        prop_assert_eq!(absent, a.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn attention_weights_form_a_distribution_and_ignore_order(t in 1usize..12, seed in any::<u64>()) {
        let cfg = ModelConfig { d_w: 4, d_c: 2, d_h: 6, attn_hidden: 5, expansion: 2, prompt_length: 4, prompt_hidden: (5, 4), proj_dim: 3, ..ModelConfig::default() };
        let m = BdModel::new(&cfg, &RngStream::new(seed)).unwrap();
        let mut r = RngStream::new(seed).substream("bag");
        let rows: Vec<Vec<f64>> = (0..t).map(|_| (0..4).map(|_| r.normal()).collect()).collect();
        let perm = r.permutation(t);
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let s = Sample::new("a", 0, DenseArray::from_rows(&rows).unwrap(), Some(vec![0.5, -0.5])).unwrap();
        let p = Sample::new("a", 0, DenseArray::from_rows(&shuffled).unwrap(), Some(vec![0.5, -0.5])).unwrap();
        let out = m.multi.forward_sample(&s).unwrap();
        let w = out.attention.clone().unwrap();
        prop_assert_eq!(w.len(), t);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|&v| v >= 0.0));
        let out_p = m.multi.forward_sample(&p).unwrap();
        prop_assert_eq!(&out.logits, &out_p.logits);
        let wp = out_p.attention.unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(wp[k], w[i]);
        }
    }
}
