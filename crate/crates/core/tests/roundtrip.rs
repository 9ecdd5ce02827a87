use ircgan::augment::{synthesize_dataset, SynthConfig};
use ircgan::nn::{infer, train_with_validation, Checkpoint, NetSpec, NoiseSource, TrainConfig, TrainState};
use ircgan::{pnm, ImageBuffer, Mask};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pnm_round_trips(w in 1usize..40, h in 1usize..40, rgb in any::<bool>(), seed in any::<u8>()) {
        let c = if rgb { 3 } else { 1 };
        let data: Vec<u8> = (0..w * h * c).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
        let img = ImageBuffer::new(w, h, c, data).unwrap();
        let bytes = pnm::encode(&img);
        prop_assert_eq!(&bytes[..2], if rgb { b"P6" } else { b"P5" });
        prop_assert_eq!(pnm::decode(&bytes, "prop").unwrap(), img);
    }
}

#[test]
fn headers_with_comments_decode() {
    let img = pnm::decode(b"P5\n# made by hand\n2 1\n255\n\x00\xff", "c").unwrap();
    assert_eq!((img.width(), img.height(), img.get(1, 0, 0)), (2, 1, 255));
}

#[test]
fn malformed_files_are_rejected() {
    for bad in [&b"P3\n1 1\n255\n0 0 0"[..], b"P5\n2 2\n255\n\x00", b"P5\n0 1\n255\n", b"P6\n1 1\n65535\n\0\0\0\0\0\0"] {
        assert!(pnm::decode(bad, "bad").is_err());
    }
}

#[test]
fn masks_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let mask = Mask::new(5, 3, (0..15).map(|i| i % 4 == 0).collect()).unwrap();
    let path = dir.path().join("m.pgm");
    pnm::write_mask(&path, &mask).unwrap();
    assert_eq!(pnm::read_mask(&path).unwrap(), mask);
}

#[test]
fn checkpoint_restores_training_state() {
    let spec = NetSpec { disc_depth: 2, ..NetSpec::square(3, 16, 4) };
    let data = synthesize_dataset(&SynthConfig { size: 16, ..SynthConfig::default() }, 4).unwrap();
    let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
    let mut st = TrainState::new(&spec, &cfg).unwrap();
    let out = train_with_validation(&mut st, &data[..3], &data[3..], &cfg).unwrap();
    let last = out.checkpoints.last().unwrap();
    let back = Checkpoint::from_bytes(&last.to_bytes()).unwrap();
    assert_eq!(back.to_bytes(), last.to_bytes());
    assert_eq!(back.restore().unwrap().epoch, st.epoch);

    let a = infer(&st.generator, &data[0].x, &mut NoiseSource::new(0, spec.noise)).unwrap();
    let b = infer(&back.generator().unwrap(), &data[0].x, &mut NoiseSource::new(0, spec.noise)).unwrap();
    assert_eq!(a, b);

    let mut truncated = last.to_bytes();
    truncated.truncate(truncated.len() / 2);
    assert!(Checkpoint::from_bytes(&truncated).is_err());
}
