//! Finds `sorry` tokens while skipping comments, strings and identifiers.

use sorryforge::indexer::scan::scan_for_sorries;

fn main() {
    let src = "/- sorry in a block comment -/\n\
               theorem a : 1 = 1 := by sorry\n\
               def s := \"sorry\" -- sorry\n\
               theorem b : True := by\n  exact sorry\n";
    for hit in scan_for_sorries(src) {
        let s = hit.span;
        println!("{}:{} .. {}:{}", s.start_line, s.start_column, s.end_line, s.end_column);
    }
}
