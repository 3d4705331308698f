use oranguide_bench::{ExperimentConfig, Profile, VariantId};
use oranguide_core::srm::SrmWiring;

#[test]
fn empty_file_is_the_desk_profile() {
    let cfg = ExperimentConfig::from_toml_str("").unwrap();
    assert_eq!(cfg, ExperimentConfig::for_profile(Profile::Desk));
    assert_eq!((cfg.env.n_du, cfg.env.n_ue, cfg.env.rbs_per_du), (2, 20, 12));
    assert_eq!(cfg.sac.iterations, 5000);
    assert_eq!(cfg.sac.batch_size, 128);
    assert_eq!(cfg.sac.lr_actor, 1e-4);
    assert_eq!(cfg.env.bandwidth_hz, 20e6);
    assert_eq!(cfg.env.subcarrier_spacing_hz, 15e3);
    assert_eq!(cfg.env.rb_bandwidth_hz, 200e3);
    assert!(!cfg.is_paper_scale());
}

#[test]
fn paper_profile_is_flagged_as_large() {
    let cfg = ExperimentConfig::from_toml_str("profile = \"paper\"").unwrap();
    assert_eq!((cfg.env.n_du, cfg.env.n_ue, cfg.env.rbs_per_du), (6, 200, 100));
    assert_eq!(cfg.sac.actor_hidden, vec![600, 700, 700]);
    assert!(cfg.is_paper_scale());
}

#[test]
fn file_keys_override_the_profile() {
    let cfg = ExperimentConfig::from_toml_str(
        "profile = \"toy\"\n[sac]\niterations = 77\n[env]\ncell_radius_m = 100\n[experiment]\nseeds = [9]\n",
    )
    .unwrap();
    assert_eq!(cfg.profile, Profile::Toy);
    assert_eq!(cfg.env.n_du, 1);
    assert_eq!(cfg.env.cell_radius_m, 100.0);
    assert_eq!(cfg.sac.iterations, 77);
    assert_eq!(cfg.sac.batch_size, 128);
    assert_eq!(cfg.reward.thr, [4e6, 2e6, 0.035]);
    assert_eq!(cfg.experiment.seeds, vec![9]);
}

#[test]
fn unknown_keys_and_invalid_values_are_rejected() {
    assert!(ExperimentConfig::from_toml_str("[sac]\nlearning_rate = 1.0\n").is_err());
    assert!(ExperimentConfig::from_toml_str("bogus = 1\n").is_err());
    assert!(ExperimentConfig::from_toml_str("profile = \"huge\"\n").is_err());
    assert!(ExperimentConfig::from_toml_str("[env]\nn_du = 0\n").is_err());
    assert!(ExperimentConfig::from_toml_str("[experiment]\nseeds = []\n").is_err());
    assert!(ExperimentConfig::from_toml_str("[sac]\ngamma = 1.5\n").is_err());
    assert!(ExperimentConfig::from_toml_str("[env\n").is_err());
}

#[test]
fn resolved_config_round_trips_through_toml() {
    for p in [Profile::Desk, Profile::Paper, Profile::Toy] {
        let cfg = ExperimentConfig::for_profile(p);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }
}

#[test]
fn hash_ignores_layout_and_tracks_every_change() {
    let a = ExperimentConfig::from_toml_str("[sac]\ngamma = 0.9\nbeta = 0.1\n").unwrap();
    let b = ExperimentConfig::from_toml_str("# same\n[sac]\nbeta = 0.10\n\ngamma = 0.90\n").unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
    let base = ExperimentConfig::default();
    let mut seen = std::collections::HashSet::new();
    seen.insert(base.hash());
    let edits: Vec<Box<dyn Fn(&mut ExperimentConfig)>> = vec![
        Box::new(|c| c.env.n_ue += 1),
        Box::new(|c| c.env.tx_power_dbm += 1e-9),
        Box::new(|c| c.reward.thr[2] = 0.04),
        Box::new(|c| c.constraints.lambda_share[0] = 0.5),
        Box::new(|c| c.srm.n_learnable = 4),
        Box::new(|c| c.srm.distill = Some(false)),
        Box::new(|c| c.sac.lambda_kd = 0.0),
        Box::new(|c| c.sac.actor_hidden.push(8)),
        Box::new(|c| c.experiment.seeds.push(7)),
        Box::new(|c| c.experiment.eval_epochs = 5),
    ];
    for edit in &edits {
        let mut c = base.clone();
        edit(&mut c);
        assert!(seen.insert(c.hash()), "{:?}", c);
    }
}

#[test]
fn variants_map_to_fixed_wirings() {
    let wirings: Vec<SrmWiring> = VariantId::ALL.iter().map(|v| v.wiring()).collect();
    assert_eq!(
        wirings,
        vec![
            SrmWiring::DualPromptKd,
            SrmWiring::DomainPromptOnly,
            SrmWiring::LearnablePromptOnly,
            SrmWiring::DomainEncoderRaw,
            SrmWiring::Bypass,
        ]
    );
    for v in VariantId::ALL {
        assert_eq!(v.name().parse::<VariantId>().unwrap(), v);
        assert_eq!(serde_json::to_string(&v).unwrap(), format!("\"{}\"", v.name()));
        let cfg = ExperimentConfig::default().train_config(v, 3);
        assert_eq!((cfg.wiring, cfg.seed), (v.wiring(), 3));
    }
}
