//! Ingests a registry document, assigns categories and keeps eligible repos.

use sorryforge::model::timestamp;
use sorryforge::registry::{categorize, filter_eligible, ingest_registry, ActivityPolicy, CategoryRules, LicenseAllowList};

fn main() {
    let doc = r#"[
      {"name": "RealAnalysisGame", "remote": "https://github.com/example/RealAnalysisGame", "license": "Apache-2.0",
       "last_update": "2025-12-01T00:00:00Z", "visibility": "public"},
      {"name": "FLT", "remote": "https://github.com/example/FLT", "license": "Apache-2.0",
       "last_update": "2026-01-10T00:00:00Z", "visibility": "public"},
      {"name": "secret", "remote": "https://github.com/example/secret", "license": "MIT",
       "last_update": "2026-01-10T00:00:00Z", "visibility": "private"},
      {"name": "nolicense", "remote": "https://github.com/example/nolicense",
       "last_update": "2026-01-10T00:00:00Z", "visibility": "public"}
    ]"#;
    let mut outcome = ingest_registry(doc).expect("valid document");
    categorize(&mut outcome.listings, &CategoryRules::default());
    println!("ingested {}, dropped {}", outcome.listings.len(), outcome.dropped);
    let now = timestamp::parse("2026-01-31T00:00:00Z").unwrap();
    let eligible = filter_eligible(&outcome.listings, &ActivityPolicy::default(), &LicenseAllowList::default(), now);
    for l in eligible {
        println!("{} -> {:?}", l.name, l.category);
    }
}
