//! Loads a database, checks every record, and prints the canonical form.

use sorryforge::db::{load_database, to_canonical_json};
use sorryforge::model::{compute_id, validate_record};

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/db/sample_records.json").into());
    let db = load_database(path.as_ref()).expect("database loads");
    for r in &db.snapshot.records {
        let ok = validate_record(r).is_empty() && compute_id(r).as_deref() == Ok(r.id.as_str());
        println!("{} {}:{} valid={ok}", &r.id[..12], r.location.path, r.location.start_line);
    }
    print!("{}", to_canonical_json(&db.snapshot));
}
