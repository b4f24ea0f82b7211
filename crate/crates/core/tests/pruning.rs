use ckan::arch::build_lenet_kan;
use ckan::data::{split, synthetic_blobs};
use ckan::eval::{apply_prune_mask, finetune_pruned, mask_lowest, prune_channels_l2};
use ckan::layers::Layer;
use ckan::model::Model;
use ckan::spline::SplineSpec;
use ckan::tensor::Tensor;
use ckan::train::{AdamConfig, FitConfig};
use ckan::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lenet_kan(seed: u64) -> Model<f32> {
    Model::init(build_lenet_kan(SplineSpec::rbf(4).unwrap(), 1.0, true).unwrap(), seed).unwrap()
}

#[test]
fn mask_matches_sort_oracle() {
    let mut r = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..200 {
        let n = r.gen_range(1..40);
        let scores: Vec<f64> = (0..n).map(|_| f64::from(r.gen_range(0..6u8))).collect();
        let p: f64 = r.gen_range(0.0..0.95);
        let drop = (p * n as f64).ceil() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
        let mut want = vec![true; n];
        order[..drop].iter().for_each(|&i| want[i] = false);
        assert_eq!(mask_lowest(&scores, p).unwrap(), want, "{scores:?} p={p}");
    }
    assert_eq!(mask_lowest(&[3.0, 1.0, 2.0, 4.0], 0.25).unwrap(), vec![true, false, true, true]);
    assert!(mask_lowest(&[1.0], 1.0).is_err());
}

#[test]
fn pruning_removes_exact_scalar_counts() {
    let mut model = lenet_kan(0);
    let total = model.effective_param_count();
    assert_eq!(total, model.param_count());
    let mask = prune_channels_l2(&model, 0.25).unwrap();
    let classifier = model.spec().classifier_index().unwrap();
    assert!(mask.layers.iter().all(|(i, _)| *i != classifier));
    let expected: usize = mask
        .layers
        .iter()
        .map(|(i, m)| m.iter().filter(|&&k| !k).count() * model.layers()[*i].spec().scalars_per_channel())
        .sum();
    apply_prune_mask(&mut model, &mask).unwrap();
    assert_eq!(model.effective_param_count() + expected, total);
    // Idempotent.
    let before = model.snapshot();
    apply_prune_mask(&mut model, &mask).unwrap();
    assert_eq!(model.snapshot(), before);
    assert_eq!(model.effective_param_count() + expected, total);
}

#[test]
fn macs_shrink_monotonically_with_ratio() {
    let mut last = usize::MAX;
    for p in [0.0, 0.1, 0.25, 0.5, 0.75] {
        let mut model = lenet_kan(1);
        let mask = prune_channels_l2(&model, p).unwrap();
        apply_prune_mask(&mut model, &mask).unwrap();
        let macs = model.mac_count(1).unwrap();
        assert!(macs <= last, "p={p}");
        last = macs;
    }
}

#[test]
fn masked_channels_stay_dead_through_finetuning() {
    let ds = synthetic_blobs(64, 10, 784, 3.0, 0).unwrap();
    let mut ds = ds;
    ds.inputs = ds.inputs.reshape([64, 1, 28, 28]).unwrap();
    let (train, val) = split(&ds, (0.75, 0.25), 0).unwrap();
    let mut model = lenet_kan(2);
    let mask = prune_channels_l2(&model, 0.25).unwrap();
    let cfg = FitConfig {
        epochs: 2,
        batch_size: 16,
        adam: AdamConfig::with_lr(1e-2),
        patience: None,
        ..FitConfig::default()
    };
    finetune_pruned(&mut model, &mask, &train, &val, &cfg).unwrap();
    assert_eq!(model.masks().iter().filter(|(i, _)| mask.layers.iter().any(|(j, _)| j == i)).count(), mask.layers.len());

    // Masked outputs are exactly zero and their parameters get zero gradient.
    let x = train.batch_inputs::<f32>(&[0, 1, 2]).unwrap();
    model.zero_grad();
    model.forward(&x, true).unwrap();
    let dy = Tensor::full([3, 10], 1.0).unwrap();
    model.backward(&dy).unwrap();
    for (li, keep) in &mask.layers {
        let layer: &dyn Layer<f32> = model.layers()[*li].as_ref();
        let out = layer.spec().out_channels().unwrap();
        for p in layer.params() {
            let per = p.value.len() / out;
            for (o, &k) in keep.iter().enumerate() {
                if !k {
                    let vals = &p.value.data()[o * per..(o + 1) * per];
                    let grads = &p.grad.data()[o * per..(o + 1) * per];
                    assert!(vals.iter().all(|&v| v == 0.0), "layer {li} {}", p.name);
                    assert!(grads.iter().all(|&v| v == 0.0), "layer {li} {}", p.name);
                }
            }
        }
    }
}

#[test]
fn pruned_channels_cannot_be_restored() {
    let mut model = lenet_kan(3);
    let mask = prune_channels_l2(&model, 0.25).unwrap();
    apply_prune_mask(&mut model, &mask).unwrap();
    let mut restore = mask.clone();
    restore.layers[0].1.iter_mut().for_each(|k| *k = true);
    assert!(matches!(apply_prune_mask(&mut model, &restore), Err(Error::Argument(_))));
    let mut bad = mask.clone();
    bad.layers[0].1.push(true);
    assert!(apply_prune_mask(&mut model, &bad).is_err());
}
