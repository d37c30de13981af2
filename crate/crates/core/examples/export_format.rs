//! Write an attention export in both tensor encodings and read it back.
//!
//! cargo run --example export_format

use attnqe::ingest::{parse_attention_export, write_attention_export, TensorEncoding};
use attnqe::synthetic::planted_export;
use attnqe::synthetic::PlantOptions;
use serde_json::json;

fn main() -> attnqe::Result<()> {
    let items = vec![(
        "demo".to_owned(),
        vec!["attention".to_owned(), "is".to_owned(), "here".to_owned()],
        vec![true, false, false],
    )];
    let records = planted_export(&items, &PlantOptions { layers: 1, heads: 2, ..Default::default() }, 3);
    let header = json!({ "model": "synthetic", "gradient": "d(score)/d(attention)" });

    for encoding in [TensorEncoding::Flat, TensorEncoding::Base64] {
        let text = write_attention_export(&records, encoding, Some(&header));
        let back = parse_attention_export(text.as_bytes())?;
        assert_eq!(back.records, records);
        println!("{encoding:?}: {} bytes, header {}", text.len(), back.header.unwrap());
    }
    let rec = &records[0];
    println!("tokens {:?}", rec.tokens);
    println!("word spans {:?}", rec.word_spans);
    Ok(())
}
