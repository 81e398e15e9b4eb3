use super::*;

fn parse(json: &str) -> SimConfig {
    serde_json::from_str(json).unwrap()
}

fn pac_config(trials: usize) -> SimConfig {
    parse(&format!(
        r#"{{"design":"pac","p":5,"n":50,"m":20,"delta":"0.1","levels":[{{"alpha":"0.1"}}],"trials":{trials},"seed":3}}"#
    ))
}

#[test]
fn minimal_config_round_trips() {
    let c = pac_config(4);
    let back: SimConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
    assert_eq!(back, c);
    assert_eq!(c.score_model, RegressorKind::Linear);
    assert_eq!(c.methods(), vec![Method::BatchPi, Method::SplitConformal, Method::Markov]);
}

#[test]
fn unknown_key_rejected() {
    let err = serde_json::from_str::<SimConfig>(
        r#"{"design":"pac","n":5,"m":2,"levels":[{"alpha":0.1}],"trials":1,"seed":0,"bogus":1}"#,
    )
    .unwrap_err();
    assert!(err.to_string().contains("bogus"));
    let nested = serde_json::from_str::<SimConfig>(
        r#"{"design":"pac","n":5,"m":2,"levels":[{"alpha":0.1,"gama":0.1}],"trials":1,"seed":0}"#,
    )
    .unwrap_err();
    assert!(nested.to_string().contains("gama"));
}

#[test]
fn level_split_must_add_up() {
    let c = parse(
        r#"{"design":"quantile","n":20,"m":5,"delta":0.2,"levels":[{"alpha":0.1,"beta":0.05,"gamma":0.04}],"trials":1,"seed":0}"#,
    );
    assert!(matches!(c.validate(), Err(Error::InvalidLevels { .. })));
    let half = parse(
        r#"{"design":"quantile","n":20,"m":5,"delta":0.2,"levels":[{"alpha":0.1,"beta":0.05}],"trials":1,"seed":0}"#,
    );
    assert!(matches!(half.validate(), Err(Error::Config(_))));
}

#[test]
fn invalid_configs() {
    let mut c = pac_config(0);
    assert!(c.validate().is_err());
    c.trials = 1;
    c.delta = None;
    assert!(c.validate().is_err());
    let mut s = parse(r#"{"design":"selection","n":20,"m":5,"levels":[{"alpha":0.1}],"etas":[5],"trials":1,"seed":0}"#);
    assert_eq!(s.validate(), Err(Error::EtaOutOfRange { eta: 5, m: 5 }));
    s.etas = vec![1];
    s.methods = Some(vec![Method::Markov]);
    assert!(s.validate().is_err());
}

#[test]
fn deterministic_given_seed() {
    let c = pac_config(6);
    let a = run_coverage_experiment(&c).unwrap();
    let b = run_coverage_experiment(&c).unwrap();
    assert_eq!(a, b);
    let mut csv_a = Vec::new();
    let mut csv_b = Vec::new();
    write_trials_csv(&a.records, &mut csv_a).unwrap();
    write_trials_csv(&b.records, &mut csv_b).unwrap();
    assert_eq!(csv_a, csv_b);
    let header = String::from_utf8(csv_a).unwrap();
    assert!(header.starts_with("trial,method,covered,coverage_rate,width,n_accepted"));
}

#[test]
fn single_trial_report_equals_its_indicators() {
    let r = run_coverage_experiment(&pac_config(1)).unwrap();
    for s in &r.summaries {
        let rec = r.records_for(&s.method).next().unwrap();
        assert_eq!(s.trials, 1);
        assert_eq!(s.covered.unwrap().mean, f64::from(u8::from(rec.covered)));
        assert_eq!(s.coverage_rate.unwrap().mean, rec.coverage_rate.unwrap());
        assert_eq!(s.covered.unwrap().se, 0.0);
    }
}

#[test]
fn pac_trial_records_are_ordered_by_rank() {
    let r = run_coverage_experiment(&pac_config(5)).unwrap();
    assert_eq!(r.summaries.len(), 3);
    for t in 0..5 {
        let width = |label: &str| r.records.iter().find(|x| x.trial == t && x.method == label).unwrap().width.unwrap();
        // split conformal <= batch <= markov for these sizes
        assert!(width("split_conformal[delta=0.1]") <= width("batch_pi[alpha=0.1]"));
        assert!(width("batch_pi[alpha=0.1]") <= width("markov[alpha=0.1]"));
    }
}

#[test]
fn every_design_runs() {
    let configs = [
        r#"{"design":"selection","p":4,"n_train":50,"n":60,"m":10,"levels":[{"alpha":0.2}],"etas":[0,2],"trials":3,"seed":1}"#,
        r#"{"design":"counterfactual_mean","p":3,"n":30,"m":4,"levels":[{"alpha":0.1}],"trials":3,"seed":1}"#,
        r#"{"design":"counterfactual_quantiles","p":3,"n":40,"m":8,"levels":[{"alpha":0.2}],"trials":2,"seed":1}"#,
        r#"{"design":"counterfactual_mean","p":3,"n":30,"m":4,"levels":[{"alpha":0.1}],"trials":2,"seed":1,
            "propensity":{"estimated":{"n_train":100,"clip":0.05}}}"#,
        r#"{"design":"quantile","n":40,"m":10,"delta":0.2,"levels":[{"alpha":0.1,"beta":0,"gamma":0.1}],"trials":3,"seed":1}"#,
    ];
    for json in configs {
        let r = run_coverage_experiment(&parse(json)).unwrap();
        assert!(!r.summaries.is_empty());
        for s in &r.summaries {
            assert_eq!(s.errors, 0, "{}: {:?}", s.method, r.records_for(&s.method).find(|x| x.error.is_some()));
            assert!(s.trials > 0);
        }
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let c = pac_config(8);
    let a = run_coverage_experiment(&c).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| run_coverage_experiment(&c)).unwrap();
    assert_eq!(a, b);
}
