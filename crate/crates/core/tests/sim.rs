use lhst_core::sim::{generate_world, train, train_observed, Method, TrainConfig, WorldConfig};

fn noiseless() -> WorldConfig {
    WorldConfig {
        sigma: 0.0,
        ..Default::default()
    }
}

#[test]
fn seeded_runs_are_bit_identical() {
    let (w, d) = generate_world(&WorldConfig {
        n_images: 40,
        ..Default::default()
    })
    .unwrap();
    for method in Method::ALL {
        let cfg = TrainConfig {
            method,
            iters: 60,
            seed: 4,
            ..Default::default()
        };
        assert_eq!(train(&w, &d, &cfg).unwrap(), train(&w, &d, &cfg).unwrap());
    }
}

#[test]
fn results_are_well_formed() {
    let (w, d) = generate_world(&WorldConfig {
        n_images: 30,
        ..Default::default()
    })
    .unwrap();
    for iters in [0, 1, 25] {
        for method in Method::ALL {
            let r = train(&w, &d, &TrainConfig { method, iters, ..Default::default() }).unwrap();
            assert_eq!(r.trace.len(), iters);
            assert!((0.0..=1.0).contains(&r.initial_accuracy));
            assert!((0.0..=1.0).contains(&r.final_accuracy));
            assert!(r.trace.iter().all(|b| b.total.is_finite() && b.total >= 0.0));
            if iters == 0 {
                assert_eq!(r.final_accuracy, r.initial_accuracy);
            }
        }
    }
}

/// Every kept proposal of every image carries the bit of each true leaf
/// that lies under one of the image's coarse labels.
#[test]
fn expanded_labels_cover_true_leaves() {
    for objects in [1, 2] {
        let (w, d) = generate_world(&WorldConfig {
            n_images: 40,
            objects_per_image: objects,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let cfg = TrainConfig {
            iters: 80,
            threshold: 0.0,
            ..Default::default()
        };
        let mut checked = 0usize;
        train_observed(&w, &d, &cfg, |iteration, targets| {
            for (img, t) in d.weak.iter().zip(targets) {
                for &leaf in &img.true_leaves {
                    if !img.y_cls.ones().any(|c| w.is_under(leaf, c)) {
                        continue;
                    }
                    for row in t.boxes.labels.rows() {
                        assert!(row[leaf], "iteration {iteration}: leaf {leaf} missing");
                        checked += 1;
                    }
                    let (_, image) = t.image.as_ref().expect("lhst has an image term");
                    assert!(image.label.get(leaf));
                }
            }
        })
        .unwrap();
        assert!(checked > 0);
    }
}

#[test]
fn noiseless_world_reaches_perfect_accuracy() {
    let (w, d) = generate_world(&noiseless()).unwrap();
    let r = train(&w, &d, &TrainConfig { iters: 500, ..Default::default() }).unwrap();
    assert_eq!(r.final_accuracy, 1.0);
}

#[test]
fn noiseless_loss_decreases_over_every_50_iterations() {
    let (w, d) = generate_world(&noiseless()).unwrap();
    let r = train(&w, &d, &TrainConfig::default()).unwrap();
    let totals: Vec<f64> = r.trace.iter().map(|b| b.total).collect();
    for (i, pair) in totals.iter().zip(&totals[50..]).enumerate() {
        assert!(pair.1 < pair.0, "window starting at {i}: {} -> {}", pair.0, pair.1);
    }
}

/// Regression fixture for the seeded noiseless run.
#[test]
fn noiseless_trajectory_fixture() {
    let (w, d) = generate_world(&noiseless()).unwrap();
    let r = train(&w, &d, &TrainConfig { iters: 500, ..Default::default() }).unwrap();
    let pinned = [
        (0, 9.062468130350267, 0.0, 7.6660514255458905),
        (49, 3.5602105184673567, 3.536165741800401, 0.7072331483600806),
        (99, 3.6296005647420153, 2.4552202900675604, 0.491044058013512),
        (499, 3.578350011434271, 1.678462644811491, 0.3356925289622992),
    ];
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
    for (i, det, boxes, image) in pinned {
        let b = &r.trace[i];
        assert!(close(b.det_loss, det) && close(b.box_loss, boxes) && close(b.image_loss, image), "iteration {i}: {b:?}");
    }
    assert_eq!(r.initial_accuracy, 0.0);
    let first_perfect = (0..=10)
        .find(|&iters| train(&w, &d, &TrainConfig { iters, ..Default::default() }).unwrap().final_accuracy == 1.0);
    assert_eq!(first_perfect, Some(6));
}
