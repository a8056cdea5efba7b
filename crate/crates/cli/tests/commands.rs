use std::path::Path;
use std::process::{Command, Output};

use bfly_cli::format;
use bfly_cli::plan::PlanInfo;
use bfly_core::legendre::{evaluate, Parity};
use bfly_core::quadrature::build_rule;

fn bfly(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bfly"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bench_csv_is_deterministic() {
    let args = [
        "bench",
        "--n",
        "100,64",
        "--m",
        "0,9",
        "--parity",
        "even,odd",
        "--seed",
        "3",
        "--no-timing",
    ];
    let a = bfly(&args);
    let b = bfly(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,m,parity,k_max,k_avg,k_sigma,t_dir,t_fwd,t_inv,t_quad,t_comp,m_max,eps_fwd,eps_inv"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(&rows[3][..3], &["64", "9", "odd"]);
    for row in &rows {
        assert_eq!(row[7], "NA");
        let eps_fwd: f64 = row[12].parse().unwrap();
        assert!(eps_fwd <= 1e-13);
    }
    let other_seed = bfly(&["bench", "--n", "100", "--seed", "4", "--no-timing"]);
    assert_ne!(stdout(&other_seed).lines().nth(1), text.lines().nth(1));
}

#[test]
fn bench_toy_size_against_dense() {
    let o = bfly(&[
        "bench", "--n", "8", "--m", "0", "--parity", "even", "--eps", "1e-14",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert!(row[12].parse::<f64>().unwrap() <= 1e-13);
    for t in &row[6..11] {
        assert!(t.parse::<f64>().unwrap() >= 0.0);
    }
}

#[test]
fn bench_json_and_budget() {
    let o = bfly(&[
        "bench",
        "--n",
        "30",
        "--m",
        "4",
        "--output",
        "json",
        "--dense-budget",
        "100",
    ]);
    assert!(o.status.success());
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let row = &rows[0];
    assert_eq!(row["n"], 30);
    assert_eq!(row["parity"], "even");
    assert!(row["t_dir"].is_null() && row["eps_fwd"].is_null());
    assert!(row["eps_inv"].as_f64().unwrap() <= 1e-13);
}

#[test]
fn invalid_flags_are_usage_errors() {
    for args in [
        &["bench", "--n", "8,9", "--m", "1,2,3"][..],
        &["bench", "--n", "8", "--eps", "0"],
        &["bench", "--n", "8", "--block-width", "0"],
        &["bench", "--n", "8", "--parity", "both"],
        &["bench"],
    ] {
        assert_eq!(bfly(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn verify_passes_and_repeats() {
    let a = bfly(&["verify", "--seed", "7", "--cases", "20"]);
    let b = bfly(&["verify", "--seed", "7", "--cases", "20"]);
    assert!(a.status.success(), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(
        stdout(&a)
            .lines()
            .filter(|l| l.starts_with("PASS "))
            .count(),
        5
    );
}

#[test]
fn verify_detects_perturbed_weights() {
    let o = bfly(&[
        "verify",
        "--perturb",
        "1e-6",
        "--cases",
        "5",
        "--degrees",
        "10",
        "--n",
        "32",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    let fail = text.lines().find(|l| l.starts_with("FAIL")).unwrap();
    assert!(
        fail.contains("quadrature-exactness") && fail.contains("m=0 n=1 even"),
        "{fail}"
    );
}

#[test]
fn plan_build_info_apply() {
    let dir = tempfile::tempdir().unwrap();
    let plan_path = dir.path().join("p.bfly");
    let o = bfly(&[
        "plan",
        "build",
        "--n",
        "90",
        "--m",
        "5",
        "--parity",
        "odd",
        "--block-width",
        "12",
        "-o",
        path(&plan_path),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let stored = format::load(&plan_path).unwrap();
    let o = bfly(&[
        "plan",
        "info",
        "--plan",
        path(&plan_path),
        "--output",
        "json",
    ]);
    let reported: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(
        reported,
        serde_json::to_value(PlanInfo::of(&stored)).unwrap()
    );
    let o = bfly(&["plan", "info", "--plan", path(&plan_path)]);
    let text = stdout(&o);
    let values: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let expected: Vec<String> = PlanInfo::of(&stored)
        .fields()
        .into_iter()
        .map(|f| f.1)
        .collect();
    assert_eq!(values, expected);

    let fresh = bfly_cli::plan::build(&bfly_cli::args::PlanBuildArgs {
        n: 90,
        m: 5,
        parity: bfly_cli::args::ParityArg::Odd,
        build: bfly_cli::args::BuildOptions {
            eps: 1e-14,
            block_width: 12,
            cache_dir: None,
        },
        out: plan_path.clone(),
    })
    .unwrap();
    let (a, b) = (fresh.plan().stats(), stored.plan().stats());
    assert_eq!(
        (a.k_max, a.k_avg.to_bits(), a.k_sigma.to_bits()),
        (b.k_max, b.k_avg.to_bits(), b.k_sigma.to_bits())
    );
    assert_eq!(
        (a.stored_words, a.peak_words, a.levels),
        (b.stored_words, b.peak_words, b.levels)
    );

    let rule = build_rule(5, 90, Parity::Odd).unwrap();
    for j in [0usize, 17, 89] {
        let mut e = vec!["0"; 90];
        e[j] = "1";
        let input = dir.path().join("e.txt");
        std::fs::write(&input, e.join("\n")).unwrap();
        let out = dir.path().join("col.txt");
        let o = bfly(&[
            "plan",
            "apply",
            "--plan",
            path(&plan_path),
            "--input",
            path(&input),
            "-o",
            path(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let col = bfly_cli::vectors::read_vector(&out).unwrap();
        for (i, (&x, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
            let direct = w.sqrt() * evaluate(5, 5 + 2 * j as u32 + 1, x).unwrap().to_f64();
            assert!((col[i] - direct).abs() <= 1e-12, "row {i} col {j}");
        }
        let o = bfly(&[
            "plan",
            "apply",
            "--inverse",
            "--plan",
            path(&plan_path),
            "--input",
            path(&out),
        ]);
        let back = bfly_cli::vectors::parse_vector(&stdout(&o), &out).unwrap();
        assert!((back[j] - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn plan_apply_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let plan_path = dir.path().join("p.bfly");
    assert!(
        bfly(&["plan", "build", "--n", "20", "-o", path(&plan_path)])
            .status
            .success()
    );

    let short = dir.path().join("short.txt");
    std::fs::write(&short, "1\n2\n3\n").unwrap();
    let o = bfly(&[
        "plan",
        "apply",
        "--plan",
        path(&plan_path),
        "--input",
        path(&short),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dimension mismatch"), "{}", stderr(&o));

    let junk = dir.path().join("junk.txt");
    std::fs::write(&junk, "1\nx\n").unwrap();
    let o = bfly(&[
        "plan",
        "apply",
        "--plan",
        path(&plan_path),
        "--input",
        path(&junk),
    ]);
    assert!(stderr(&o).contains("junk.txt:2"), "{}", stderr(&o));

    let bytes = std::fs::read(&plan_path).unwrap();
    let cut = dir.path().join("cut.bfly");
    std::fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
    let o = bfly(&["plan", "info", "--plan", path(&cut)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("corrupt plan file at byte"),
        "{}",
        stderr(&o)
    );

    let o = bfly(&["plan", "info", "--plan", path(&dir.path().join("missing"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn quad_prints_the_rule() {
    let dir = tempfile::tempdir().unwrap();
    let o = bfly(&[
        "quad",
        "--n",
        "5",
        "--m",
        "3",
        "--parity",
        "odd",
        "--cache-dir",
        path(dir.path()),
    ]);
    assert!(o.status.success());
    let rule = build_rule(3, 5, Parity::Odd).unwrap();
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,node,weight");
    assert_eq!(lines.len(), 7);
    for (j, line) in lines[1..6].iter().enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[1].parse::<f64>().unwrap(), rule.nodes[j]);
        assert_eq!(f[2].parse::<f64>().unwrap(), rule.weights[j]);
    }
    assert!(lines[6].starts_with("center,"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    let again = bfly(&[
        "quad",
        "--n",
        "5",
        "--m",
        "3",
        "--parity",
        "odd",
        "--cache-dir",
        path(dir.path()),
    ]);
    assert_eq!(again.stdout, o.stdout);
}
