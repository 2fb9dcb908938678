use std::path::Path;

use shapeqa::checkpoint;
use shapeqa::files::{read_samples, write_samples, RegressorFile};
use shapeqa::vmsk;
use shapeqa::Error;
use shapeqa_core::regress::{FeatureMode, QualitySample, RegressorParams};
use shapeqa_core::vae::{ShapeFeature, VaeConfig, VaeModel};
use shapeqa_core::VolumetricMask;

fn sample_mask() -> VolumetricMask {
    VolumetricMask::from_fn([3, 2, 2], [0.5, 1.0, 2.5], 3, |x, y, z| ((x + y + z) % 3) as u8).unwrap()
}

#[test]
fn vmsk_layout_is_bit_exact() {
    let bytes = vmsk::encode(&sample_mask());
    let mut want = b"VMSK\x01".to_vec();
    for d in [3u32, 2, 2] {
        want.extend_from_slice(&d.to_le_bytes());
    }
    for s in [0.5f32, 1.0, 2.5] {
        want.extend_from_slice(&s.to_le_bytes());
    }
    want.extend_from_slice(&3u16.to_le_bytes());
    // x fastest
    for z in 0..2 {
        for y in 0..2 {
            for x in 0..3 {
                want.push(((x + y + z) % 3) as u8);
            }
        }
    }
    assert_eq!(bytes, want);
    assert_eq!(vmsk::decode(&bytes, Path::new("m")).unwrap(), sample_mask());
}

#[test]
fn vmsk_rejects_corrupt_files() {
    let good = vmsk::encode(&sample_mask());
    let mut magic = good.clone();
    magic[0] = b'X';
    let mut version = good.clone();
    version[4] = 2;
    let mut label = good.clone();
    *label.last_mut().unwrap() = 3;
    let truncated = good[..good.len() - 1].to_vec();
    for bad in [magic, version, label, truncated, good[..10].to_vec()] {
        assert!(matches!(vmsk::decode(&bad, Path::new("m")), Err(Error::Format { .. })));
    }
}

#[test]
fn vmsk_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.vmsk");
    vmsk::write(&path, &sample_mask()).unwrap();
    assert_eq!(vmsk::read(&path).unwrap(), sample_mask());
}

fn tiny_config() -> VaeConfig {
    VaeConfig { latent_dim: 3, input_cube: 8, channel_schedule: vec![2, 4], seed: 5, ..VaeConfig::default() }
}

#[test]
fn checkpoint_round_trips_and_detects_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let model = VaeModel::<f32>::new(tiny_config()).unwrap();
    let hash = checkpoint::save(&path, &model).unwrap();
    let (back, hash2) = checkpoint::load(&path, Some(&tiny_config())).unwrap();
    assert_eq!(back, model);
    assert_eq!(hash, hash2);

    let other = VaeConfig { latent_dim: 4, ..tiny_config() };
    match checkpoint::load(&path, Some(&other)) {
        Err(Error::ConfigMismatch(keys)) => assert_eq!(keys, "latent_dim"),
        r => panic!("expected a mismatch, got {r:?}"),
    }
    let bytes = std::fs::read(&path).unwrap();
    assert!(checkpoint::decode(&bytes[..bytes.len() - 2], &path, None).is_err());
    let retagged = String::from_utf8_lossy(&bytes).replacen("CHECKPOINT 1", "CHECKPOINT 9", 1);
    assert!(checkpoint::decode(retagged.as_bytes(), &path, None).is_err());
}

#[test]
fn samples_and_regressor_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let lambda = 1.0 / 32.0;
    let samples = vec![
        QualitySample {
            case_id: "a".into(),
            feature: ShapeFeature::from_parts(vec![0.8125], 1.5, lambda),
            real_dice: 0.75,
            per_class_real_dice: vec![0.75],
            source_fold: 1,
            empty: false,
        },
        QualitySample {
            case_id: "b".into(),
            feature: ShapeFeature::empty_sentinel(1),
            real_dice: 0.0,
            per_class_real_dice: vec![0.0],
            source_fold: 2,
            empty: true,
        },
    ];
    let path = dir.path().join("s.csv");
    write_samples(&path, &samples).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("case_id,source_fold,fake_dice,kl_term,real_dice"));
    assert_eq!(read_samples(&path, lambda).unwrap(), samples);

    let file = RegressorFile {
        params: RegressorParams { a: 1.25, b: -0.125, feature_mode: FeatureMode::SValue, class_index: None },
        vae_checkpoint_hash: "abc".into(),
    };
    let path = dir.path().join("r.txt");
    let h = file.save(&path).unwrap();
    let (back, h2) = RegressorFile::load(&path).unwrap();
    assert_eq!((back, h2), (file, h));
}
