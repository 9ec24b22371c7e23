//! Classic Porter stems checked against a frozen reference table produced by
//! an independent implementation of the original algorithm.

use technet::textproc::porter::stem;

#[test]
fn matches_reference_table() {
    let table = include_str!("data/porter_original.tsv");
    let mut mismatches = Vec::new();
    let mut n = 0;
    for line in table.lines().filter(|l| !l.starts_with('#')) {
        let (word, expected) = line.split_once('\t').unwrap();
        n += 1;
        let got = stem(word);
        if got != expected {
            mismatches.push(format!("{word}: got {got}, want {expected}"));
        }
    }
    assert!(n > 2000);
    assert!(
        mismatches.is_empty(),
        "{} mismatches:\n{}",
        mismatches.len(),
        mismatches.join("\n")
    );
}
