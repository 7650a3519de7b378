// Building a feature schema from raw records and encoding samples.

use bidscape::features::{build_schema, encode, FieldDecl, FieldGroup, RawRecord};

fn record(site: &str, device: Option<&str>, hour: &str) -> RawRecord {
    let mut r = RawRecord::new();
    r.insert("site".into(), site.into());
    if let Some(d) = device {
        r.insert("device".into(), d.into());
    }
    r.insert("hour".into(), hour.into());
    r
}

pub fn run_example() -> anyhow::Result<()> {
    let fields = vec![
        FieldDecl::cat("site", FieldGroup::Publisher),
        FieldDecl::cat("device", FieldGroup::User),
        FieldDecl::num("hour", FieldGroup::Context),
    ];
    let records = vec![
        record("news", Some("phone"), "8"),
        record("sports", Some("tablet"), "20"),
        record("news", None, "14"),
    ];
    let schema = build_schema(&records, &fields)?;
    for f in &schema.categorical {
        println!("{}: {} values, embedding dim {}", f.name, f.cardinality(), f.embedding_dim);
    }
    println!("first-order width {}", schema.first_order_width());
    println!("schema fingerprint {}", &schema.fingerprint()[..16]);

    // unseen values encode to the out-of-vocabulary slot, missing ones to
    // the missing slot; numerics are min-max normalized and clamped
    let sample = encode(&record("weather", None, "30"), &schema);
    let site = &schema.categorical[0];
    assert_eq!(sample.cat_indices[0], site.oov_index);
    assert_eq!(sample.cat_indices[1], schema.categorical[1].missing_index);
    assert_eq!(sample.num_values[0], 1.0);
    println!("encoded {sample:?}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
