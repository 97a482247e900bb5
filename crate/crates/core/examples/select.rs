//! Draws a repository-balanced test slice from a database file.
//!
//! `cargo run --example select -- path/to/db.json 4`

use sorryforge::db::load_database;
use sorryforge::harness::select_test_slice;

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/db/abc.json").into());
    let n = args.next().map_or(4, |s| s.parse().expect("n is a number"));
    let db = load_database(path.as_ref()).expect("database loads");
    for r in select_test_slice(&db.snapshot, n).records {
        println!("{} {} {} {}", &r.id[..12], r.repo.remote, r.metadata.blame_date, r.debug_info.goal);
    }
}
