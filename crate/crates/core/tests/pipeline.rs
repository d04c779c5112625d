use std::path::Path;
use std::process::Command;

use vcsbf::io::{
    dataset_model, dataset_table, fit_model, predict, rspe, split, FitArtifact, FitOptions, ModelSpec, RangeMode,
    SplitSpec, Table,
};
use vcsbf::simulate::DgpSpec;

fn vcsbf(args: &[&str], dir: &Path) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_vcsbf"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "vcsbf {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn cli_fit_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let model = vcsbf(&["simulate", "--emit-data", "d.csv", "--n", "400", "--seed", "9"], p);
    std::fs::write(p.join("model.toml"), &model).unwrap();
    assert_eq!(ModelSpec::from_toml_str(&model).unwrap().d(), 3);

    let fit = vcsbf(
        &["fit", "--data", "d.csv", "--model", "model.toml", "--out", "fit.json", "--test-fraction", "0.2", "--predictions", "p.csv"],
        p,
    );
    let line = fit.lines().find(|l| l.starts_with("test RSPE")).unwrap();
    let value: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
    assert!(value < 0.5, "{fit}");
    assert_eq!(Table::read_csv(&p.join("p.csv")).unwrap().n_rows(), 80);

    let pred = vcsbf(&["predict", "--artifact", "fit.json", "--data", "d.csv", "--out", "all.csv"], p);
    assert!(pred.starts_with("RSPE"));
    let all = Table::read_csv(&p.join("all.csv")).unwrap();
    assert_eq!(all.n_rows(), 400);
    let train_rspe = rspe(&all.column("prediction").unwrap(), &all.column("actual").unwrap()).unwrap();
    assert!(train_rspe < 1.0);

    let bw = vcsbf(&["bandwidth", "--data", "d.csv", "--model", "model.toml"], p);
    assert_eq!(bw.lines().count(), 4);
}

#[test]
fn cli_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("m.toml"), "response = \"y\"\n[[terms]]\nx = \"nope\"\n").unwrap();
    std::fs::write(p.join("d.csv"), "a,y\n1,2\n2,3\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_vcsbf"))
        .args(["fit", "--data", "d.csv", "--model", "m.toml"])
        .current_dir(p)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope"));
}

#[test]
fn cli_role_enumeration_lists_twelve_models() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let data = DgpSpec::three_component().generate(300, 4);
    dataset_table(&data).unwrap().write_csv(&p.join("d.csv")).unwrap();
    std::fs::write(
        p.join("m.toml"),
        "response = \"y\"\n[[terms]]\nx = \"x1\"\n\
         [[pool]]\ncolumn = \"x2\"\n[[pool]]\ncolumn = \"z2\"\n[[pool]]\ncolumn = \"x3\"\n[[pool]]\ncolumn = \"z3\"\n",
    )
    .unwrap();
    let out = vcsbf(
        &["fit", "--data", "d.csv", "--model", "m.toml", "--test-fraction", "0.2", "--enumerate-roles"],
        p,
    );
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 12);
    let best = rows
        .iter()
        .filter_map(|l| l.split_whitespace().nth(1)?.parse::<f64>().ok().map(|v| (v, *l)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap();
    assert!(best.1.contains("m(x2)*z2") && best.1.contains("m(x3)*z3"), "{out}");
}

#[test]
fn library_pipeline_on_generated_data() {
    let data = DgpSpec::three_component().generate(500, 21);
    let table = dataset_table(&data).unwrap();
    let spec = dataset_model(&data);
    let (train, test) = split(&table, &SplitSpec::fraction(0.2, 1)).unwrap();
    let (train, test) = (table.select(&train), table.select(&test));
    let a = fit_model(&train, &spec, &FitOptions::default()).unwrap();
    let json = a.to_json().unwrap();
    let b = FitArtifact::from_json(&json).unwrap();
    let pa = predict(&a, &test, RangeMode::Clamp).unwrap();
    let pb = predict(&b, &test, RangeMode::Clamp).unwrap();
    assert_eq!(pa, pb);
    assert!(rspe(&pa, &test.column("y").unwrap()).unwrap() < 0.5);
    let train_pred = predict(&a, &train, RangeMode::Strict).unwrap();
    assert!(rspe(&train_pred, &train.column("y").unwrap()).unwrap() < 1.0);
}
