//! Properties that only hold for a trained shape prior. Trains the 32³
//! configuration on 200 synthetic shapes (several minutes on one core).

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shapeqa_core::preprocess::{crop_to_centroid_cube, PreprocessConfig};
use shapeqa_core::synth::{corrupt, generate_shapes, CorruptionOperator, CorruptionSpec, ShapeSpec};
use shapeqa_core::vae::{train_vae, Inference, VaeConfig, VaeModel};
use shapeqa_core::VolumetricMask;

fn line(tag: &str, name: &str, detail: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "invariant {tag} {name}: {detail}").unwrap();
    out.flush().unwrap();
}

fn fake(vae: &VaeModel<f32>, m: &VolumetricMask) -> f64 {
    vae.shape_feature(m, Inference::Deterministic).unwrap().fake_dice
}

/// Clean held-out shapes score at least 0.15 above severe corruptions.
fn separability(vae: &VaeModel<f32>, held_out: &[VolumetricMask]) -> Result<String, String> {
    let clean = held_out.iter().map(|m| fake(vae, m)).sum::<f64>() / held_out.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut scores = Vec::new();
    for (i, m) in held_out.iter().enumerate() {
        let spec = CorruptionSpec {
            operator: CorruptionOperator::ALL[i % CorruptionOperator::ALL.len()],
            severity: rng.random_range(0.5..=1.0),
            seed: rng.random(),
        };
        let r = corrupt(m, &spec).unwrap();
        // an empty prediction would score 0 and only widen the gap
        if !r.empty {
            scores.push(fake(vae, &r.mask));
        }
    }
    let bad = scores.iter().sum::<f64>() / scores.len() as f64;
    let detail = format!("clean mean fake Dice {clean:.4}, {} severe corruptions {bad:.4}, gap {:.4}", scores.len(), clean - bad);
    if clean - bad >= 0.15 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Fake Dice never rises by more than 0.02 while erosion lowers real Dice.
fn erosion_monotone(vae: &VaeModel<f32>, masks: &[VolumetricMask]) -> Result<String, String> {
    let mut failures = Vec::new();
    for (i, m) in masks.iter().enumerate() {
        let mut steps: Vec<(f64, f64)> = Vec::new();
        for k in 0..=20 {
            let spec = CorruptionSpec { operator: CorruptionOperator::Erode, severity: k as f64 / 20.0, seed: 0 };
            let r = corrupt(m, &spec).unwrap();
            if r.empty || steps.last().is_some_and(|s| r.real_dice >= s.0) {
                continue;
            }
            steps.push((r.real_dice, fake(vae, &r.mask)));
        }
        for w in steps.windows(2) {
            if w[1].1 > w[0].1 + 0.02 {
                failures.push(format!("shape {i} real {:.2}->{:.2} fake {:.3}->{:.3}", w[0].0, w[1].0, w[0].1, w[1].1));
            }
        }
    }
    let detail = format!("{} shapes, {} rising steps", masks.len(), failures.len());
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}: {}", failures.join("; ")))
    }
}

#[test]
fn trained_model_invariants() {
    let shapes = generate_shapes(&ShapeSpec { seed: 1, ..ShapeSpec::default() }, 320).unwrap();
    let (train, held_out) = shapes.split_at(200);
    let aug = PreprocessConfig::desk_scale();
    let cubes: Vec<VolumetricMask> = train.iter().map(|m| crop_to_centroid_cube(m, aug.cube_size).unwrap()).collect();
    let (vae, _) = train_vae(&cubes, &VaeConfig { seed: 2, ..VaeConfig::desk_scale() }, &aug).unwrap();

    let results = [
        ("separability", separability(&vae, held_out)),
        ("monotone erosion", erosion_monotone(&vae, &held_out[..10])),
    ];
    for (name, r) in &results {
        match r {
            Ok(d) => line("PASS", name, d),
            Err(d) => line("FAIL", name, d),
        }
    }
    let failed: Vec<&str> = results.iter().filter(|r| r.1.is_err()).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed invariants: {failed:?}");
}
