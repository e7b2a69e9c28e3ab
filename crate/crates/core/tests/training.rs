use hgin_core::io::config::RunConfig;
use hgin_core::net::{InpaintModel, NetworkConfig};
use hgin_core::train::Trainer;
use hgin_core::{Error, Tensor};

fn config(extra: &str) -> RunConfig {
    RunConfig::parse_str(&format!(
        "base_channels = 4\nimage_size = 16\nbatch_size = 2\nsynth_count = 6\nlr = 1e-3\nstages = 2@0.1-0.2,2@0.2-0.3\n{extra}"
    ))
    .unwrap()
}

#[test]
fn zero_adversarial_weight_still_updates_discriminator() {
    let mut t = Trainer::from_config(config("lambda_adv = 0")).unwrap();
    let before = t.model.disc_params.clone();
    let m = t.step().unwrap();
    assert!(m.d_loss.is_finite() && m.disc_grad_norm > 0.0);
    assert!(t.model.disc_params.iter().zip(before.iter()).any(|(a, b)| a.value != b.value));
    let expected = 6.0 * m.losses.hole + m.losses.valid + 0.05 * m.losses.perceptual + 0.1 * m.losses.edge;
    assert!((m.losses.total - expected).abs() < 1e-12);
}

#[test]
fn non_finite_loss_aborts_with_term_name() {
    let cfg = config("");
    let bad = vec![Tensor::full(&[16, 16, 3], f64::NAN); 2];
    let mut t = Trainer::new(cfg, bad).unwrap();
    match t.step() {
        Err(Error::NonFinite(msg)) => assert!(msg.contains("discriminator") || msg.contains("loss term"), "{msg}"),
        other => panic!("expected non-finite error, got {other:?}"),
    }
}

#[test]
fn short_resume_matches_uninterrupted() {
    let mut full = Trainer::from_config(config("")).unwrap();
    let all = full.run_until(6, |_, _| Ok(())).unwrap();
    let mut first = Trainer::from_config(config("")).unwrap();
    first.run_until(3, |_, _| Ok(())).unwrap();
    let ck = first.checkpoint();
    let images = Trainer::corpus(&ck.config().unwrap()).unwrap();
    let mut resumed = Trainer::from_checkpoint(&ck, images).unwrap();
    let rest = resumed.run_until(6, |_, _| Ok(())).unwrap();
    assert_eq!(&all[3..], &rest[..]);
    assert_eq!(full.checkpoint().encode(), resumed.checkpoint().encode());
}

#[test]
fn curriculum_raises_hole_ratio() {
    let mut t = Trainer::from_config(config("")).unwrap();
    let m = t.run_until(4, |_, _| Ok(())).unwrap();
    assert!(m[..2].iter().all(|s| (0.1..=0.2).contains(&s.hole_ratio)));
    assert!(m[2..].iter().all(|s| (0.2..=0.3).contains(&s.hole_ratio)));
}

#[test]
fn ablation_flags_change_architecture() {
    let with = InpaintModel::new(NetworkConfig::new(4, 16), 1).unwrap();
    let mut net = NetworkConfig::new(4, 16);
    net.hypergraph.enabled = false;
    net.disc_gated = false;
    let without = InpaintModel::new(net, 1).unwrap();
    assert!(with.gen_params.iter().any(|p| p.name.contains(".hg.")));
    assert!(!without.gen_params.iter().any(|p| p.name.contains(".hg.")));
    assert!(!without.disc_params.iter().any(|p| p.name.contains("gate")));
    let img = Tensor::full(&[1, 16, 16, 3], 0.5);
    let mask = Tensor::zeros(&[1, 16, 16, 1]);
    let (_, _, comp) = without.inpaint(&img, &mask).unwrap();
    assert_eq!(comp, img);
}
