mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{bin_path, gaussian_clusters};

fn run(args: &[&str]) -> Output {
    Command::new(bin_path()).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn write_csv(path: &Path, rows: usize, with_labels: bool) {
    let (data, labels) = gaussian_clusters(rows / 2, 2, 4, 8.0, 11);
    let mut text = String::new();
    for (i, row) in data.rows().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if with_labels {
            fields.push(labels.0[i].to_string());
        }
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

fn read_coords(path: &Path) -> Vec<f64> {
    let (emb, _) = bhsne::io::read_embedding(path, false).unwrap();
    emb.into_coords()
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["embed", "--input", "x.csv"])), 1);
    assert_eq!(code(&run(&["embed", "--input", "x.csv", "--out", "y.csv", "--dims", "4"])), 1);
    assert_eq!(code(&run(&["bench-theta", "--input", "x.csv", "--resume"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn invalid_values_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    write_csv(&input, 40, false);
    let out = dir.path().join("out.csv");
    let base = ["embed", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap()];
    for extra in [["--perplexity", "-3"], ["--theta", "-1"], ["--eta", "0"], ["--threads", "0"]] {
        let mut args = base.to_vec();
        args.extend(extra);
        let o = run(&args);
        assert_eq!(code(&o), 1, "{extra:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.csv");
    let out = out.to_str().unwrap();
    assert_eq!(code(&run(&["embed", "--input", "/nonexistent.csv", "--out", out])), 2);

    let ragged = dir.path().join("ragged.csv");
    std::fs::write(&ragged, "1,2,3\n4,5\n").unwrap();
    let o = run(&["embed", "--input", ragged.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2: expected 3 columns"));

    let nan = dir.path().join("nan.csv");
    std::fs::write(&nan, "1,2\nNaN,3\n0,1\n").unwrap();
    assert_eq!(code(&run(&["embed", "--input", nan.to_str().unwrap(), "--out", out])), 2);

    let bad_bin = dir.path().join("bad.bin");
    std::fs::write(&bad_bin, b"not a matrix").unwrap();
    assert_eq!(code(&run(&["embed", "--input", bad_bin.to_str().unwrap(), "--out", out])), 2);

    let input = dir.path().join("in.csv");
    write_csv(&input, 40, false);
    let labels = dir.path().join("labels.txt");
    std::fs::write(&labels, "0\n1\n").unwrap();
    let o = run(&["embed", "--input", input.to_str().unwrap(), "--labels", labels.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 2);
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    write_csv(&input, 40, false);
    let out = dir.path().join("out.csv");
    let o = run(&[
        "embed", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap(),
        "--perplexity", "5", "--iters", "50", "--eta", "1e305",
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("iteration"));
}

#[test]
fn exact_on_large_input_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("big.bin");
    bhsne::io::write_binary(&input, &common::uniform_matrix(20_001, 2, 3)).unwrap();
    let out = dir.path().join("out.csv");
    let o = run(&["embed", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap(), "--algorithm", "exact"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    write_csv(&input, 300, false);
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}.csv"));
        let o = run(&[
            "embed", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap(),
            "--perplexity", "10", "--iters", "300", "--seed", "7", "--threads", threads,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2], "thread count changed the result");
}

/// Short horizon: over hundreds of iterations the dynamics amplify
/// last-bit differences in summation order into visibly different layouts.
#[test]
fn zero_tradeoff_matches_exact() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    write_csv(&input, 500, false);
    let mut coords = Vec::new();
    for alg in [["--algorithm", "exact"], ["--algorithm", "bh"], ["--algorithm", "dual"]] {
        let out = dir.path().join(format!("{}.csv", alg[1]));
        let o = run(&[
            "embed", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap(),
            "--iters", "20", "--seed", "2", "--theta", "0", "--rho", "0", alg[0], alg[1],
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        coords.push(read_coords(&out));
    }
    for other in &coords[1..] {
        let diff = coords[0].iter().zip(other).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "max coordinate difference {diff}");
    }
}

#[test]
fn embed_writes_labels_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    write_csv(&input, 200, true);
    let out = dir.path().join("out.csv");
    let o = run(&[
        "embed", "--input", input.to_str().unwrap(), "--label-column", "--out", out.to_str().unwrap(),
        "--perplexity", "10", "--dims", "3", "--progress",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some(bhsne::metrics::EvalReport::CSV_HEADER));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "bh");
    assert_eq!(row[1], "200");
    assert_eq!(row[4].parse::<f64>().unwrap(), 0.0);
    assert_eq!(String::from_utf8_lossy(&o.stderr).matches("iteration ").count(), 20);

    let (emb, labels) = bhsne::io::read_embedding(&out, true).unwrap();
    assert_eq!((emb.n(), emb.dims()), (200, 3));
    assert_eq!(labels.unwrap().0[..4], [0, 0, 0, 0]);
}

#[test]
fn bench_appends_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    write_csv(&input, 120, true);
    let out = dir.path().join("bench.csv");
    let bench = |grid: &str| {
        run(&[
            "bench-dual", "--input", input.to_str().unwrap(), "--label-column", "--out", out.to_str().unwrap(),
            "--bench-grid", grid, "--iters", "100", "--perplexity", "10", "--repeats", "1", "--resume",
        ])
    };
    assert!(bench("0.5,0.25").status.success());
    let first = bhsne::bench::read_records(&out).unwrap();
    let params: Vec<(String, f64)> = first.iter().map(|r| (r.algorithm.to_string(), r.param)).collect();
    assert_eq!(params, [("exact".into(), 0.0), ("dual".into(), 0.25), ("dual".into(), 0.5)]);
    assert!(first.iter().all(|r| r.knn_error.is_some() && r.n == 120));

    assert!(bench("0.25,1.0").status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.matches(bhsne::bench::HEADER).count(), 1);
    let all = bhsne::bench::read_records(&out).unwrap();
    assert_eq!(all.len(), 4);
    assert_eq!(all[..3], first[..]);
    assert_eq!(all[3].param, 1.0);
}

#[test]
fn bench_size_uses_nested_subsets() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    write_csv(&input, 100, false);
    let o = run(&[
        "bench-size", "--input", input.to_str().unwrap(), "--bench-grid", "40,80", "--exact-cap", "40",
        "--iters", "50", "--perplexity", "5", "--repeats", "1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    let rows: Vec<_> = stdout.lines().skip(1).map(|l| bhsne::bench::BenchRecord::parse(l).unwrap()).collect();
    let shape: Vec<(String, usize)> = rows.iter().map(|r| (r.algorithm.to_string(), r.n)).collect();
    assert_eq!(shape, [("exact".into(), 40), ("bh".into(), 40), ("bh".into(), 80)]);
    assert!(rows.iter().all(|r| r.knn_error.is_none()));

    let too_big = run(&["bench-size", "--input", input.to_str().unwrap(), "--bench-grid", "500"]);
    assert_eq!(code(&too_big), 1);
}

#[test]
fn default_dual_grid_contains_quarter() {
    assert!(bhsne::bench::DEFAULT_RHO_GRID.contains(&0.25));
    assert!(bhsne::bench::DEFAULT_THETA_GRID.contains(&0.5));
}
