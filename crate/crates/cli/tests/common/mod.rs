#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use quboml::corpus::EmbeddingCorpus;
use quboml::features::RankingDataset;

pub fn write_letor(path: &Path, ds: &RankingDataset) {
    let mut s = String::new();
    for (i, row) in ds.rows().iter().enumerate() {
        write!(s, "{} qid:{}", ds.labels()[i], ds.query_ids()[i]).unwrap();
        for (j, v) in row.iter().enumerate() {
            write!(s, " {}:{}", j + 1, v).unwrap();
        }
        s.push('\n');
    }
    fs::write(path, s).unwrap();
}

pub fn write_corpus(path: &Path, c: &EmbeddingCorpus) {
    let mut s = String::new();
    for i in 0..c.len() {
        let mut rec = serde_json::json!({"id": c.ids()[i], "vector": c.vectors()[i]});
        if let Some(l) = c.labels() {
            rec["label"] = l[i].into();
        }
        s.push_str(&rec.to_string());
        s.push('\n');
    }
    fs::write(path, s).unwrap();
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}
