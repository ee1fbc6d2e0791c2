//! Synthetic lakes with planted joinable pairs.
//!
//! Each domain contributes four tables keyed by the same entity names:
//! a query, its true partner (one row per key, same region and topic), a
//! vendor table repeating every key several times, and a table from another
//! region sharing half the keys.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use contextjoin::eval::GroundTruth;
use contextjoin::ingest::{RawTable, TableMetadata};
use contextjoin::ColumnRef;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ren", "tas", "vu", "dor", "bel", "qui", "sar", "nim", "po", "fen", "gal", "hu", "jor",
    "ze", "wen", "cra", "mot", "lin", "ves", "tru", "bo", "del", "ari", "som", "kel", "nu", "pha",
];

const TOPICS: &[&str] = &[
    "school", "clinic", "library", "shelter", "park", "transit", "farm", "museum", "harbor", "college",
];

const VENDORS: &[&str] = &["liquor", "tobacco", "firearm", "pharmacy", "lottery", "fuel"];

#[derive(Debug, Clone, Copy)]
pub struct PlantedSpec {
    pub domains: usize,
    pub keys: (usize, usize),
    pub repeats: (usize, usize),
    pub seed: u64,
}

pub struct PlantedLake {
    pub tables: Vec<(RawTable, Option<TableMetadata>)>,
    pub truth: GroundTruth,
}

struct Names {
    rng: ChaCha8Rng,
    used: BTreeSet<String>,
}

impl Names {
    fn word(&mut self) -> String {
        let n = self.rng.gen_range(2..=3);
        (0..n).map(|_| *SYLLABLES.choose(&mut self.rng).unwrap()).collect()
    }

    fn fresh(&mut self, make: impl Fn(&mut Self) -> String) -> String {
        loop {
            let s = make(self);
            if self.used.insert(s.clone()) {
                return s;
            }
        }
    }

    fn entity(&mut self) -> String {
        self.fresh(|n| {
            let (a, b) = (n.word(), n.word());
            format!("{} {}", capitalize(&a), capitalize(&b))
        })
    }

    fn table_id(&mut self) -> String {
        self.fresh(|n| format!("{}_{}", n.word(), n.word()))
    }

    fn record_id(&mut self) -> String {
        let v: u128 = self.rng.gen();
        let h = format!("{v:032x}");
        format!("{}-{}-{}-{}-{}", &h[..8], &h[8..12], &h[12..16], &h[16..20], &h[20..])
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

fn table(id: &str, header: &[&str], rows: Vec<Vec<String>>, meta: serde_json::Value) -> (RawTable, Option<TableMetadata>) {
    let header: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    let metadata = TableMetadata {
        table_id: id.to_owned(),
        table_name: meta["table_name"].as_str().map(str::to_owned),
        description: meta["description"].as_str().map(str::to_owned),
        tags: meta["tags"]
            .as_array()
            .map(|t| t.iter().filter_map(|s| s.as_str().map(str::to_owned)).collect())
            .unwrap_or_default(),
        source: meta["source"].as_str().map(str::to_owned),
        column_names: header.clone(),
        column_descriptions: None,
    };
    (RawTable::new(id, header, rows), Some(metadata))
}

pub fn planted_lake(spec: PlantedSpec) -> PlantedLake {
    let mut names = Names {
        rng: ChaCha8Rng::seed_from_u64(spec.seed),
        used: BTreeSet::new(),
    };
    let mut tables = Vec::new();
    let mut truth = GroundTruth::default();

    for d in 0..spec.domains {
        let region = capitalize(&names.fresh(Names::word));
        let other_region = capitalize(&names.fresh(Names::word));
        let topic = TOPICS[d % TOPICS.len()];
        let vendor = VENDORS[names.rng.gen_range(0..VENDORS.len())];
        let n = names.rng.gen_range(spec.keys.0..=spec.keys.1);
        let keys: Vec<String> = (0..n).map(|_| names.entity()).collect();
        let lower = region.to_lowercase();

        let q_id = names.table_id();
        let mut rows: Vec<Vec<String>> = keys
            .iter()
            .map(|k| vec![k.clone(), names.record_id(), names.rng.gen_range(0..10_000_000u64).to_string()])
            .collect();
        tables.push(table(
            &q_id,
            &["Name", "Record ID", "Total"],
            rows,
            json!({
                "table_name": format!("{region} {topic} register"),
                "description": format!("Registered {topic} sites in {region} with totals"),
                "tags": [lower, topic, "register"],
                "source": format!("https://data.{lower}.gov/{topic}-register.csv"),
            }),
        ));

        let t_id = names.table_id();
        rows = keys
            .iter()
            .map(|k| vec![k.clone(), names.record_id(), names.rng.gen_range(0..10_000_000u64).to_string()])
            .collect();
        rows.shuffle(&mut names.rng);
        tables.push(table(
            &t_id,
            &["Name", "Record ID", "Funding"],
            rows,
            json!({
                "table_name": format!("{region} {topic} funding"),
                "description": format!("Annual funding awarded to each {topic} site in {region}"),
                "tags": [lower, topic, "funding"],
                "source": format!("https://data.{lower}.gov/{topic}-funding.csv"),
            }),
        ));

        let r_id = names.table_id();
        rows = Vec::new();
        for k in &keys {
            for _ in 0..names.rng.gen_range(spec.repeats.0..=spec.repeats.1) {
                rows.push(vec![k.clone(), names.record_id()]);
            }
        }
        rows.shuffle(&mut names.rng);
        tables.push(table(
            &r_id,
            &["Name", "Licence ID"],
            rows,
            json!({
                "table_name": format!("{region} {vendor} licences"),
                "description": format!("Licensed {vendor} sellers by location in {region}"),
                "tags": [lower, vendor, "licences"],
                "source": format!("https://data.{lower}.gov/{vendor}-licences.csv"),
            }),
        ));

        let c_id = names.table_id();
        let other_lower = other_region.to_lowercase();
        let mut c_keys: Vec<String> = keys.choose_multiple(&mut names.rng, n / 2).cloned().collect();
        c_keys.extend((0..n - n / 2).map(|_| names.entity()));
        rows = c_keys.into_iter().map(|k| vec![k, names.record_id()]).collect();
        rows.shuffle(&mut names.rng);
        tables.push(table(
            &c_id,
            &["Name", "Record ID"],
            rows,
            json!({
                "table_name": format!("{other_region} {topic} register"),
                "description": format!("Registered {topic} sites in {other_region}"),
                "tags": [other_lower, topic, "register"],
                "source": format!("https://data.{other_lower}.gov/{topic}-register.csv"),
            }),
        ));

        truth
            .entries
            .entry(ColumnRef::new(&q_id, "Name"))
            .or_default()
            .insert(ColumnRef::new(&t_id, "Name"));
    }
    PlantedLake { tables, truth }
}

/// Writes the lake as CSV files with `.meta.json` sidecars, plus a ground-truth CSV.
pub fn write_lake(lake: &PlantedLake, dir: &Path, truth_path: &Path) {
    fs::create_dir_all(dir).unwrap();
    for (raw, meta) in &lake.tables {
        let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", raw.table_id))).unwrap();
        w.write_record(&raw.header).unwrap();
        for row in &raw.rows {
            w.write_record(row).unwrap();
        }
        w.flush().unwrap();
        let meta = meta.as_ref().unwrap();
        let sidecar = json!({
            "table_name": meta.table_name,
            "description": meta.description,
            "tags": meta.tags,
            "source": meta.source,
        });
        fs::write(
            dir.join(format!("{}.meta.json", raw.table_id)),
            serde_json::to_string_pretty(&sidecar).unwrap(),
        )
        .unwrap();
    }
    let mut w = csv::Writer::from_path(truth_path).unwrap();
    w.write_record(["query_table", "query_column", "target_table", "target_column"]).unwrap();
    for (q, targets) in &lake.truth.entries {
        for t in targets {
            w.write_record([&q.table_id, &q.column_name, &t.table_id, &t.column_name]).unwrap();
        }
    }
    w.flush().unwrap();
}
