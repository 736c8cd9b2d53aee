use super::*;
use crate::data::{Dataset, Modality, Presence, Sample};
use crate::numcore::DenseArray;

fn toy_cfg() -> ModelConfig {
    ModelConfig {
        d_w: 2,
        d_c: 2,
        d_h: 2,
        attn_hidden: 2,
        expansion: 1,
        prompt_length: 3,
        prompt_hidden: (4, 3),
        proj_dim: 2,
        ..ModelConfig::default()
    }
}

fn sample(id: &str, label: usize, rows: &[Vec<f64>], clinical: Vec<f64>) -> Sample {
    Sample::new(id, label, DenseArray::from_rows(rows).unwrap(), Some(clinical)).unwrap()
}

fn set(store: &mut crate::numcore::ParamStore, name: &str, values: &[f64]) {
    let id = store.id(name).unwrap_or_else(|| panic!("no param {name}"));
    store.value_mut(id).as_mut_slice().copy_from_slice(values);
}

#[test]
fn zero_parameters_give_uniform_probs() {
    let cfg = toy_cfg();
    let mut m = BdModel::new(&cfg, &RngStream::new(1)).unwrap();
    m.multi.store_mut().zero_values();
    m.single.store_mut().zero_values();
    let s = sample("a", 1, &[vec![0.3, -2.0], vec![1.0, 4.0]], vec![0.5, 0.5]);
    let out = m.multi.forward_sample(&s).unwrap();
    assert_eq!(out.logits, vec![0.0, 0.0]);
    assert_eq!(out.probs, vec![0.5, 0.5]);
    assert_eq!(m.single.forward_sample(&s).unwrap().probs, vec![0.5, 0.5]);
}

#[test]
fn patch_permutation_is_bit_identical() {
    let cfg = ModelConfig {
        d_w: 4,
        d_h: 8,
        ..toy_cfg()
    };
    let m = BdModel::new(&cfg, &RngStream::new(5)).unwrap();
    let mut r = RngStream::new(9);
    let rows: Vec<Vec<f64>> = (0..7).map(|_| (0..4).map(|_| r.normal()).collect()).collect();
    let mut rev = rows.clone();
    rev.reverse();
    rev.swap(0, 3);
    let a = sample("a", 0, &rows, vec![0.1, 0.2]);
    let b = sample("a", 0, &rev, vec![0.1, 0.2]);
    let oa = m.multi.forward_sample(&a).unwrap();
    let ob = m.multi.forward_sample(&b).unwrap();
    assert_eq!(oa.fused, ob.fused);
    assert_eq!(oa.logits, ob.logits);
    assert_eq!(m.single.forward_sample(&a).unwrap().logits, m.single.forward_sample(&b).unwrap().logits);
}

#[test]
fn multimodal_forward_matches_hand_computation() {
    let cfg = toy_cfg();
    let mut branch = MultiModalBranch::new(&cfg, &mut RngStream::new(0), false).unwrap();
    let st = branch.store_mut();
    // W is stored (fan_in, fan_out), row-major; y = xW + b.
    set(st, "adapter.0.w", &[1.0, -1.0, 0.5, 2.0]);
    set(st, "adapter.0.b", &[0.1, 0.0]);
    set(st, "attn.0.w", &[1.0, 0.0, 0.0, 1.0]);
    set(st, "attn.0.b", &[0.0, 0.0]);
    set(st, "attn.1.w", &[1.0, 0.0, 1.0, 0.0]);
    set(st, "attn.1.b", &[0.0, 0.0]);
    set(st, "attn.2.w", &[0.5, 0.0]);
    set(st, "attn.2.b", &[0.0]);
    set(st, "clin.0.w", &[1.0, 0.0, 0.0, -1.0]);
    set(st, "clin.0.b", &[0.0, 0.5]);
    set(st, "cls.w", &[1.0, -1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 1.0]);
    set(st, "cls.b", &[0.0, 0.25]);

    let x1 = [1.0, 2.0];
    let x2 = [0.0, 1.0];
    let s = sample("a", 1, &[x1.to_vec(), x2.to_vec()], vec![0.4, 0.2]);
    let out = branch.forward_sample(&s).unwrap();

    // Straight-line recomputation.
    let relu = |v: f64| v.max(0.0);
    let adapt = |x: [f64; 2]| [relu(x[0] + 0.5 * x[1] + 0.1), relu(-x[0] + 2.0 * x[1])];
    let h1 = adapt(x1); // [2.1, 3.0]
    let h2 = adapt(x2); // [0.6, 2.0]
    let score = |h: [f64; 2]| {
        let a = [relu(h[0]), relu(h[1])];
        let b = relu(a[0] + a[1]);
        0.5 * b
    };
    let (s1, s2) = (score(h1), score(h2));
    let w1 = s1.exp() / (s1.exp() + s2.exp());
    let w2 = 1.0 - w1;
    let pooled = [w1 * h1[0] + w2 * h2[0], w1 * h1[1] + w2 * h2[1]];
    let c = [relu(0.4), relu(-0.2 + 0.5)];
    let f = [pooled[0], pooled[1], c[0], c[1]];
    let z0 = f[0] + 2.0 * f[2];
    let z1 = -f[0] + f[1] + f[3] + 0.25;

    let tol = 1e-12;
    assert!((out.image_feat[0] - pooled[0]).abs() < tol && (out.image_feat[1] - pooled[1]).abs() < tol);
    assert!((out.clinical_feat[0] - c[0]).abs() < tol && (out.clinical_feat[1] - c[1]).abs() < tol);
    assert!((out.logits[0] - z0).abs() < tol && (out.logits[1] - z1).abs() < tol);
    let att = out.attention.unwrap();
    assert!((att[0] - w1).abs() < tol && (att[1] - w2).abs() < tol);
    assert!((out.probs.iter().sum::<f64>() - 1.0).abs() < 1e-15);
}

#[test]
fn prompt_feature_is_shared_and_sized() {
    let cfg = ModelConfig::default();
    let m = BdModel::new(&cfg, &RngStream::new(2)).unwrap();
    let st = m.single.store();
    let shape = |n: &str| st.value(st.id(n).unwrap()).shape();
    assert_eq!(shape("prompt"), (1, 50));
    assert_eq!(shape("prompt_map.0.w"), (50, 100));
    assert_eq!(shape("prompt_map.1.w"), (100, 50));
    assert_eq!(shape("prompt_map.2.w"), (50, cfg.expansion * cfg.d_c));
    let mut r = RngStream::new(3);
    let mk = |id: &str, r: &mut RngStream| {
        let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..32).map(|_| r.normal()).collect()).collect();
        sample(id, 0, &rows, vec![0.0; 5])
    };
    let a = m.single.forward_sample(&mk("a", &mut r)).unwrap();
    let b = m.single.forward_sample(&mk("b", &mut r)).unwrap();
    assert_eq!(a.clinical_feat, b.clinical_feat);
    assert_ne!(a.image_feat, b.image_feat);
    assert_eq!(a.clinical_feat.len(), cfg.clinical_dim());
}

fn toy_set(n: usize, seed: u64) -> Dataset {
    let mut r = RngStream::new(seed);
    let samples = (0..n)
        .map(|i| {
            let rows: Vec<Vec<f64>> = (0..1 + i % 3).map(|_| vec![r.normal(), r.normal()]).collect();
            sample(&format!("s{i}"), i % 2, &rows, vec![r.normal(), r.normal()])
        })
        .collect();
    Dataset::new(samples, 2, 2).unwrap()
}

#[test]
fn routing_follows_presence() {
    let m = BdModel::new(&toy_cfg(), &RngStream::new(4)).unwrap();
    let ds = toy_set(6, 1);
    for s in &ds.samples {
        assert_eq!(m.predict(s).unwrap(), m.multi.forward_sample(s).unwrap().probs);
        let mut missing = s.clone();
        missing.presence.clinical = false;
        assert_eq!(m.predict(&missing).unwrap(), m.single.forward_sample(&missing).unwrap().probs);
        assert_eq!(m.predict(&missing).unwrap(), SingleOnly(&m.single).predict(s).unwrap());
        let mut none = s.clone();
        none.presence = Presence {
            image: false,
            clinical: false,
        };
        assert!(matches!(m.predict(&none), Err(Error::Unroutable(_))));
    }
}

#[test]
fn image_missing_variant() {
    let cfg = ModelConfig {
        missing_role: Modality::Image,
        ..toy_cfg()
    };
    assert!(build_wsi_missing_variant(&toy_cfg(), &mut RngStream::new(0)).is_err());
    let single = build_wsi_missing_variant(&cfg, &mut RngStream::new(0)).unwrap();
    assert_eq!(single.prompt_path().out_dim(), cfg.d_h);
    assert!(single.store().id("adapter.0.w").is_none());
    let m = BdModel::new(&cfg, &RngStream::new(0)).unwrap();
    let s = &toy_set(2, 3).samples[0];
    assert_eq!(m.predict(s).unwrap(), m.multi.forward_sample(s).unwrap().probs);
    let mut no_img = s.clone();
    no_img.presence.image = false;
    let out = m.single.forward_sample(&no_img).unwrap();
    assert_eq!(out.image_feat, m.single.prompt_feature().unwrap());
    assert_eq!(m.predict(&no_img).unwrap(), out.probs);
}

#[test]
fn feature_export_rows_and_determinism() {
    let m = BdModel::new(&toy_cfg(), &RngStream::new(8)).unwrap();
    let ds = toy_set(3, 2);
    let csv = features_csv(&m.multi, &ds).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "sample_id,label,f0,f1");
    let pooled = m.multi.forward_sample(&ds.samples[1]).unwrap().image_feat;
    let fields: Vec<f64> = lines[2].split(',').skip(2).map(|v| v.parse().unwrap()).collect();
    assert_eq!(fields, pooled);
    let ck = m.to_checkpoint(serde_json::json!({}));
    let back = BdModel::from_checkpoint(&Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap()).unwrap();
    assert_eq!(features_csv(&back.multi, &ds).unwrap(), csv);
}

#[test]
fn branches_do_not_share_parameters() {
    let mut m = BdModel::new(&toy_cfg(), &RngStream::new(6)).unwrap();
    let s = &toy_set(1, 4).samples[0];
    let before = m.single.forward_sample(s).unwrap();
    for p in m.multi.store_mut().iter_mut() {
        p.value.fill(0.7);
    }
    assert_eq!(m.single.forward_sample(s).unwrap(), before);
}
