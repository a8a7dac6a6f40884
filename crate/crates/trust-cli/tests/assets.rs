//! The bundled NSL-KDD schema must parse and match the dataset's
//! headerless 43-column layout (41 features + class + difficulty, with
//! the constant num_outbound_cmds column excluded from the features).

use std::io::Write;
use trust_core::data::{load_labeled, load_schema, FeatureKind};

fn asset(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("assets")
        .join(name)
}

#[test]
fn nsl_kdd_schema_matches_the_file_layout() {
    let schema = load_schema(&asset("nsl_kdd_schema.json")).unwrap();
    assert_eq!(schema.width(), 40, "feature count");
    let qualitative: Vec<&str> = schema
        .columns
        .iter()
        .filter(|c| c.kind == FeatureKind::Qualitative)
        .map(|c| c.name.as_str())
        .collect();
    assert_eq!(qualitative, ["protocol_type", "service", "flag"]);
    assert_eq!(schema.classes, Some(2));

    let order = schema.headerless_order.as_ref().unwrap();
    assert_eq!(order.len(), 43);
    assert_eq!(order[1], "protocol_type");
    assert_eq!(order[19], "num_outbound_cmds");
    assert_eq!(order[41], "class");
    assert_eq!(order[42], "difficulty");

    // two lines in the real file's shape parse end to end
    let normal_row = "0,tcp,ftp_data,SF,491,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,2,2,\
                      0,0,0,0,1,0,0,150,25,0.17,0.03,0.17,0,0,0,0.05,0,normal,20";
    let attack_row = "0,udp,private,SF,105,146,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,255,254,\
                      0,0,0,0,1,0,0.01,255,254,1,0.01,0,0,0,0,0,0,teardrop,15";
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "{normal_row}").unwrap();
    writeln!(file, "{attack_row}").unwrap();

    let labeled = load_labeled(file.path(), &schema, None).unwrap();
    assert_eq!(labeled.n_rows(), 2);
    assert_eq!(labeled.data.width(), 40);
    assert_eq!(labeled.labels, vec![0, 1], "normal maps to 0, attacks to 1");
}
