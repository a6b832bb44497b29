use proptest::prelude::*;
use tcpm_core::model::{
    has_errors, parse_model_config, to_config_json, validate_model, Equation, EstimationConfig,
    GroupBinding, IssueKind, Mode, ModelSpec,
};
use tcpm_core::{Dataset, Error};

fn spec_strategy() -> impl Strategy<Value = ModelSpec> {
    (2usize..5, prop::collection::vec(1usize..4, 5), any::<bool>(), any::<bool>()).prop_map(
        |(predictors, sizes, interact, second)| {
            let mut groups = Vec::new();
            let mut col = 0;
            for (i, size) in sizes.iter().take(predictors + 1).enumerate() {
                let cols: Vec<String> = (0..*size).map(|j| format!("v{}", col + j)).collect();
                col += size;
                groups.push(GroupBinding {
                    columns: cols,
                    ..GroupBinding::new(&format!("L{i}"), &[])
                });
            }
            let dep = format!("L{predictors}");
            let preds: Vec<String> = (0..predictors).map(|i| format!("L{i}")).collect();
            let pred_refs: Vec<&str> = preds.iter().map(String::as_str).collect();
            let mut eq = Equation::new(&dep, &pred_refs);
            if interact {
                eq = eq.with_interaction("L0", &["L1"]);
            }
            let mut equations = vec![eq];
            if second {
                equations.push(Equation::new("L1", &["L0"]));
            }
            ModelSpec { groups, equations }
        },
    )
}

fn config_strategy() -> impl Strategy<Value = EstimationConfig> {
    (
        any::<bool>(),
        0u32..6,
        0.0f64..4.0,
        any::<bool>(),
        any::<bool>(),
        1e-9f64..1e-1,
        1usize..500,
        prop::option::of(0.01f64..1.0),
    )
        .prop_map(|(lohmoller, k, alpha, skip, inter, tol, max_iter, pca)| EstimationConfig {
            mode: if lohmoller { Mode::Lohmoller } else { Mode::Tcpm },
            resultant_order_k: k,
            alpha,
            skip_external: skip,
            with_interactions: inter,
            tolerance: tol,
            max_iter,
            pca_reduce_threshold: pca,
            ..EstimationConfig::default()
        })
}

proptest! {
    #[test]
    fn config_round_trips(spec in spec_strategy(), cfg in config_strategy()) {
        let text = to_config_json(&spec, &cfg);
        let (spec2, cfg2) = parse_model_config(&text).unwrap();
        prop_assert_eq!(spec2, spec);
        prop_assert_eq!(cfg2, cfg);
    }
}

#[test]
fn unknown_fields_are_rejected_with_their_path() {
    let text = r#"{"groups":[{"name":"A","columns":["x"]},{"name":"B","columns":["y"]}],
        "equations":[{"dependent":"B","predictors":["A"]}],
        "estimation":{"tolerence":0.1}}"#;
    match parse_model_config(text) {
        Err(Error::Validation { path, .. }) => assert!(path.starts_with("estimation"), "{path}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn truncated_json_is_a_parse_error() {
    assert!(matches!(parse_model_config("{\"groups\": ["), Err(Error::Parse(_))));
}

#[test]
fn validation_against_data() {
    let (spec, cfg) = parse_model_config(
        r#"{"groups":[{"name":"A","columns":["x","k"]},{"name":"B","columns":["y","nope"]}],
            "equations":[{"dependent":"B","predictors":["A"]}]}"#,
    )
    .unwrap();
    let values = ndarray::array![[1.0, 2.0, 5.0], [2.0, 2.0, 1.0], [3.0, 2.0, 0.0]];
    let data = Dataset::new(values, vec!["x".into(), "k".into(), "y".into()]).unwrap();
    let issues = validate_model(&spec, &cfg, &data);
    assert!(has_errors(&issues));
    let kinds: Vec<IssueKind> = issues.iter().map(|i| i.kind).collect();
    assert!(kinds.contains(&IssueKind::MissingColumn));
    assert!(kinds.contains(&IssueKind::ConstantColumn));
}

#[test]
fn builtin_configs_are_clean_on_their_data() {
    for name in tcpm_core::data_io::BUNDLED_DATASETS {
        let b = tcpm_core::data_io::load_bundled_dataset(name).unwrap();
        let issues = validate_model(&b.default_model, &b.default_config, &b.dataset);
        assert!(!has_errors(&issues), "{name}: {issues:?}");
    }
}
