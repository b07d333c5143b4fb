//! Dataset files and exact ground truth.

use std::path::Path;

use pagegraph::dataset::{
    ground_truth, load, read_fvecs, read_ivecs, read_nvds, recall_at, synthetic, write_fvecs, write_ivecs, write_nvds,
    Dataset, SyntheticSpec,
};
use pagegraph::Error;
use proptest::prelude::*;

/// Independent fvecs reader: walks the byte stream by hand.
fn naive_fvecs(bytes: &[u8]) -> Vec<Vec<f32>> {
    let mut rows = Vec::new();
    let mut at = 0;
    while at < bytes.len() {
        let d = i32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]) as usize;
        at += 4;
        let mut row = Vec::new();
        for _ in 0..d {
            row.push(f32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]]));
            at += 4;
        }
        rows.push(row);
    }
    rows
}

fn write_raw(path: &Path, bytes: &[u8]) {
    std::fs::write(path, bytes).unwrap();
}

fn record(dim: i32, vals: &[f32]) -> Vec<u8> {
    let mut out = dim.to_le_bytes().to_vec();
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[test]
fn fvecs_round_trip_matches_a_hand_parser() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synthetic(&SyntheticSpec::new(12, 4), 0, 37, 0);
    let p = dir.path().join("a.fvecs");
    write_fvecs(&p, &ds).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    assert_eq!(bytes.len(), 37 * (4 + 12 * 4));
    assert_eq!(naive_fvecs(&bytes), ds.to_rows());
    assert_eq!(read_fvecs(&p).unwrap(), ds);
    assert_eq!(load(&p).unwrap(), ds);
}

#[test]
fn single_record_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("one.fvecs");
    write_raw(&p, &record(3, &[1.5, -2.0, 0.25]));
    let ds = read_fvecs(&p).unwrap();
    assert_eq!((ds.dim, ds.len()), (3, 1));
    assert_eq!(ds.row(0), &[1.5, -2.0, 0.25]);
}

#[test]
fn truncated_record_reports_its_offset() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.fvecs");
    let mut bytes = record(4, &[1.0, 2.0, 3.0, 4.0]);
    bytes.extend_from_slice(&record(4, &[5.0, 6.0, 7.0, 8.0])[..10]);
    write_raw(&p, &bytes);
    match read_fvecs(&p) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 20 + 4),
        other => panic!("expected a format error, got {other:?}"),
    }
    write_raw(&p, &bytes[..22]);
    match read_fvecs(&p) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 20),
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn dimension_drift_is_rejected_at_the_second_header() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.fvecs");
    let mut bytes = record(2, &[1.0, 2.0]);
    bytes.extend(record(3, &[1.0, 2.0, 3.0]));
    write_raw(&p, &bytes);
    match read_fvecs(&p) {
        Err(Error::Format { offset, msg, .. }) => {
            assert_eq!(offset, 12);
            assert!(msg.contains('2') && msg.contains('3'), "{msg}");
        }
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn empty_and_missing_files_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("e.fvecs");
    write_raw(&p, &[]);
    assert!(read_fvecs(&p).is_err());
    assert!(matches!(read_fvecs(&dir.path().join("nope.fvecs")), Err(Error::File { .. })));
}

#[test]
fn nvds_round_trip_and_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synthetic(&SyntheticSpec::new(8, 1), 0, 10, 0);
    let p = dir.path().join("x.nvds");
    write_nvds(&p, &ds).unwrap();
    assert_eq!(read_nvds(&p).unwrap(), ds);
    assert_eq!(load(&p).unwrap(), ds);
    let bytes = std::fs::read(&p).unwrap();
    write_raw(&p, &bytes[..bytes.len() - 3]);
    assert!(matches!(read_nvds(&p), Err(Error::Format { .. })));
}

#[test]
fn ivecs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.ivecs");
    let rows = vec![vec![3, 1, 4], vec![1, 5, 9], vec![2, 6, 5]];
    write_ivecs(&p, &rows).unwrap();
    assert_eq!(read_ivecs(&p).unwrap(), rows);
}

#[test]
fn ground_truth_matches_a_full_sort() {
    let spec = SyntheticSpec::new(6, 8);
    let base = synthetic(&spec, 0, 300, 0);
    let queries = synthetic(&spec, 0, 20, 1);
    let gt = ground_truth(&base, &queries, 7);
    for (qi, q) in queries.rows().enumerate() {
        let mut all: Vec<(f64, u32)> = base
            .rows()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| ((a - b) as f64).powi(2)).sum(), i as u32))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: Vec<u32> = all[..7].iter().map(|x| x.1).collect();
        assert_eq!(gt[qi], want);
    }
}

#[test]
fn ground_truth_breaks_ties_by_id() {
    let base = Dataset::new(2, vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0, 5.0, 5.0]).unwrap();
    let q = Dataset::new(2, vec![0.0, 0.0]).unwrap();
    assert_eq!(ground_truth(&base, &q, 4), vec![vec![0, 1, 2, 3]]);
}

#[test]
fn synthetic_rows_do_not_depend_on_the_batch() {
    let spec = SyntheticSpec { drift: 0.5, drift_span: 100, ..SyntheticSpec::new(10, 3) };
    let whole = synthetic(&spec, 0, 50, 0);
    let tail = synthetic(&spec, 30, 20, 0);
    assert_eq!(whole.slice(30..50), tail);
    assert_ne!(synthetic(&spec, 0, 5, 1), whole.slice(0..5));
}

proptest! {
    #[test]
    fn ground_truth_with_k_equal_n_is_a_permutation(n in 1usize..40, seed in 0u64..1000) {
        let base = synthetic(&SyntheticSpec::new(4, seed), 0, n, 0);
        let q = synthetic(&SyntheticSpec::new(4, seed), 0, 3, 1);
        for row in ground_truth(&base, &q, n) {
            let mut sorted = row.clone();
            sorted.sort_unstable();
            prop_assert_eq!(sorted, (0..n as u32).collect::<Vec<_>>());
        }
    }

    #[test]
    fn recall_counts_the_overlap(truth in proptest::collection::btree_set(0u32..50, 10), got in proptest::collection::vec(0u32..50, 10)) {
        let truth: Vec<u32> = truth.into_iter().collect();
        let want = truth.iter().filter(|t| got.contains(t)).count() as f64 / 10.0;
        prop_assert_eq!(recall_at(&got, &truth, 10), want);
    }
}
