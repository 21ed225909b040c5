use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use advreg::data::*;
use advreg::evaluation::{pixel_probe, ProbeConfig};
use advreg::rng::substream;
use advreg::Error;

fn config(seed: u64, confound_strength: f64) -> GeneratorConfig {
    GeneratorConfig {
        seed,
        confound_strength,
        ..GeneratorConfig::default()
    }
}

fn assert_patient_disjoint(m: &DatasetManifest) {
    let test: BTreeSet<u32> = m.patients_with(SplitRole::Test).into_iter().collect();
    let train: BTreeSet<u32> = m.train_patients.iter().copied().collect();
    assert!(test.is_disjoint(&train));
    for s in &m.samples {
        let role = m.role(s.patient_id).unwrap();
        assert_eq!(role == SplitRole::Train, train.contains(&s.patient_id));
        assert_eq!(role == SplitRole::Test, test.contains(&s.patient_id));
    }
}

fn assert_label_balance(m: &DatasetManifest) {
    let mut per: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for s in &m.samples {
        let e = per.entry(s.patient_id).or_default();
        e.0 += usize::from(s.label);
        e.1 += 1;
    }
    for (p, (pos, n)) in per {
        let frac = pos as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.05, "patient {p}: {pos}/{n} positive");
    }
}

#[test]
fn large_scale_split() {
    let cfg = GeneratorConfig {
        height: 8,
        width: 8,
        ..GeneratorConfig::large_scale()
    };
    let ds = generate_dataset(&cfg).unwrap();
    let m = &ds.manifest;
    assert_eq!(m.samples.len(), 2600);
    assert_eq!(m.patients_with(SplitRole::Test).len(), 8);
    assert_eq!(m.train_patients.len(), 28);
    assert_eq!(ds.indices(SplitRole::Test).len(), 700);
    assert_patient_disjoint(m);
    assert_label_balance(m);

    let resplit = split_by_patient(m, 8, 5).unwrap();
    assert_eq!(resplit.train_patients.len(), 28);
    let idx: Vec<usize> = resplit.train_patients.iter().map(|&p| resplit.train_index(p).unwrap()).collect();
    assert_eq!(idx, (0..28).collect::<Vec<_>>());
    assert_patient_disjoint(&resplit);
    for s in &resplit.samples {
        if resplit.role(s.patient_id) == Some(SplitRole::Test) {
            assert_eq!(resplit.train_index(s.patient_id), None);
        }
    }
    assert!(matches!(split_by_patient(m, 36, 5), Err(Error::Config(_))));
    assert!(matches!(split_by_patient(m, 0, 5), Err(Error::Config(_))));

    let reduced = restrict_train_patients(m, 20, 1).unwrap();
    assert_eq!(reduced.train_patients.len(), 20);
    assert_eq!(reduced.patients_with(SplitRole::Test), m.patients_with(SplitRole::Test));
    assert_patient_disjoint(&reduced);
}

#[test]
fn generated_manifests_pass_integrity_checks() {
    for seed in 0..4 {
        for cfg in [
            GeneratorConfig { height: 16, width: 16, ..config(seed, 0.8) },
            GeneratorConfig {
                patients: 10,
                images: 230,
                test_patients: 3,
                test_images: None,
                height: 12,
                width: 12,
                ..config(seed, 0.3)
            },
        ] {
            let ds = generate_dataset(&cfg).unwrap();
            ds.manifest.validate().unwrap();
            assert_patient_disjoint(&ds.manifest);
            assert_label_balance(&ds.manifest);
            let mut per = BTreeMap::new();
            for s in &ds.manifest.samples {
                *per.entry(s.patient_id).or_insert(0) += 1;
            }
            assert_eq!(per.values().sum::<usize>(), cfg.images);
            assert_eq!(per.len(), cfg.patients);
        }
    }
}

#[test]
fn files_are_byte_identical_and_round_trip() {
    let cfg = GeneratorConfig {
        images: 200,
        test_images: None,
        height: 24,
        width: 24,
        ..config(11, 0.8)
    };
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ds = generate_dataset(&cfg).unwrap();
    save_dataset(&ds, &a).unwrap();
    save_dataset(&generate_dataset(&cfg).unwrap(), &b).unwrap();
    for f in [MANIFEST_FILE, IMAGES_FILE] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let loaded = load_dataset(&a).unwrap();
    assert_eq!(loaded.manifest, ds.manifest);
    assert_eq!(loaded.images.len(), ds.images.len());
    assert!(loaded.images.iter().zip(&ds.images).all(|(x, y)| x.to_bits() == y.to_bits()));
    save_dataset(&loaded, &b).unwrap();
    assert_eq!(fs::read(a.join(IMAGES_FILE)).unwrap(), fs::read(b.join(IMAGES_FILE)).unwrap());
}

#[test]
fn damaged_files_are_reported() {
    let ds = generate_dataset(&GeneratorConfig {
        images: 100,
        test_images: None,
        height: 8,
        width: 8,
        ..config(2, 0.5)
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ds");
    save_dataset(&ds, &path).unwrap();
    let blob = fs::read(path.join(IMAGES_FILE)).unwrap();

    fs::write(path.join(IMAGES_FILE), &blob[..blob.len() - 10]).unwrap();
    let err = load_dataset(&path).unwrap_err();
    assert!(matches!(err, Error::Corrupt { .. }), "{err}");

    let mut bumped = blob.clone();
    bumped[8..12].copy_from_slice(&(IMAGES_VERSION + 1).to_le_bytes());
    fs::write(path.join(IMAGES_FILE), &bumped).unwrap();
    let err = load_dataset(&path).unwrap_err();
    assert!(matches!(err, Error::Version { found: 2, expected: 1, .. }), "{err}");
    let msg = err.to_string();
    assert!(msg.contains('2') && msg.contains('1'), "{msg}");

    fs::write(path.join(IMAGES_FILE), &blob).unwrap();
    let manifest = fs::read_to_string(path.join(MANIFEST_FILE)).unwrap();
    fs::write(path.join(MANIFEST_FILE), manifest.replacen("\"version\": 1", "\"version\": 7", 1)).unwrap();
    assert!(matches!(load_dataset(&path), Err(Error::Version { found: 7, .. })));

    fs::remove_file(path.join(MANIFEST_FILE)).unwrap();
    let err = load_dataset(&path).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains(MANIFEST_FILE));
}

#[test]
fn labels_are_independent_of_patient_offsets() {
    let ds = generate_dataset(&GeneratorConfig {
        patients: 40,
        images: 2000,
        test_patients: 8,
        height: 8,
        width: 8,
        ..config(3, 1.0)
    })
    .unwrap();
    let m = &ds.manifest;
    let offset: BTreeMap<u32, f64> = m.patients.iter().map(|p| (p.patient_id, p.intensity_offset)).collect();
    let xs: Vec<f64> = m.samples.iter().map(|s| f64::from(s.label)).collect();
    let ys: Vec<f64> = m.samples.iter().map(|s| offset[&s.patient_id]).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r = cov / (vx * vy).sqrt();
    assert!(r.abs() <= 0.05, "label/offset correlation {r}");
}

#[test]
fn offset_shifts_mean_intensity() {
    let size = (64, 64);
    let base = PatientProfile::draw(5, 0, 1.0, size);
    let bright = PatientProfile {
        intensity_offset: 0.1,
        ..base.clone()
    };
    let dark = PatientProfile {
        intensity_offset: -0.1,
        ..base
    };
    let mean = |p: &PatientProfile| {
        let total: f64 = (0..100)
            .map(|k| {
                let img = render_image(p, (k % 2) as u8, size, &mut substream(5, "offset", &[k]));
                img.sum() / img.len() as f64
            })
            .sum();
        total / 100.0
    };
    let diff = mean(&bright) - mean(&dark);
    assert!((diff - 0.2).abs() <= 0.02, "mean intensity difference {diff}");
}

#[test]
fn plaque_survives_default_augmentation() {
    let size = (64, 64);
    let aug = AugConfig::default();
    let trials = 400;
    let mut kept = 0;
    for k in 0..trials {
        let profile = PatientProfile::draw(7, (k % 20) as u32, 0.8, size);
        let draws = SampleDraws::draw(&mut substream(7, "arc", &[k]), size);
        let pos = render_with(&profile, 1, size, &draws);
        let neg = render_with(&profile, 0, size, &draws);
        let arc = pos.zip_map(&neg, |a, b| a - b).unwrap();
        let moved = augment(&arc, &aug, &mut substream(7, "arc-aug", &[k])).unwrap();
        if moved.sum() >= 0.9 * arc.sum() {
            kept += 1;
        }
    }
    let rate = f64::from(kept) / f64::from(trials as u32);
    assert!(rate >= 0.95, "arc kept in {rate} of crops");
}

#[test]
fn unconfounded_pixels_do_not_identify_patients() {
    let cfg = GeneratorConfig {
        patients: 24,
        images: 4800,
        test_patients: 4,
        height: 32,
        width: 32,
        ..config(0, 0.0)
    };
    let ds = generate_dataset(&cfg).unwrap();
    let r = pixel_probe(&ds, 4, &ProbeConfig::default()).unwrap();
    assert_eq!(r.chance, 0.05);
    assert!((r.accuracy - r.chance).abs() <= 0.03, "probe accuracy {}", r.accuracy);
}

#[test]
fn confounding_makes_patients_identifiable() {
    let mut lo = 0.0;
    let mut hi = 0.0;
    for seed in 0..3 {
        for (strength, acc) in [(0.0, &mut lo), (1.0, &mut hi)] {
            let ds = generate_dataset(&GeneratorConfig {
                height: 32,
                width: 32,
                ..config(seed, strength)
            })
            .unwrap();
            *acc += pixel_probe(&ds, 4, &ProbeConfig { seed, ..ProbeConfig::default() }).unwrap().accuracy / 3.0;
        }
    }
    assert!(hi > lo, "probe accuracy {hi} at full confounding vs {lo} without");
}
