use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use relshift::eval::{load_json_lines, Regime, Scoring, Strategy};
use relshift::gold::parse_pairs;
use relshift::projection::ProjectionMatrix;
use relshift::synth::{location_token, staggered_schedule};
use relshift::w2v::{load_model, Format};
use relshift::{Corpus, EmbeddingModel};

fn relshift(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relshift")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = relshift(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    relshift(dir, args).status.code().expect("exit code")
}

const SMALL: [&str; 9] =
    ["--set", "dim=12", "--set", "min_count=5", "--set", "table_size=100000", "--format", "text", "--deterministic"];

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn args(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn small_synth(dir: &Path) {
    ok(
        dir,
        &[
            "synth",
            "--out",
            "syn",
            "--set",
            "synth.n_pairs=10",
            "--set",
            "synth.years=3",
            "--set",
            "synth.dim=10",
            "--set",
            "synth.background_sentences=200",
            "--set",
            "synth.vocab_background=40",
            "--set",
            "synth.cooccur_strength=30",
        ],
    );
}

#[test]
fn train_is_reproducible_and_counts_like_an_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_synth(dir);
    let a = with(&["train", "--corpus", "syn/corpus_1.txt", "--out", "a/model"], &SMALL);
    let b = with(&["train", "--corpus", "syn/corpus_1.txt", "--out", "b/model"], &SMALL);
    ok(dir, &args(&a));
    ok(dir, &args(&b));
    for ext in ["txt", "out.txt", "freq"] {
        let read = |d: &str| fs::read(dir.join(format!("{d}/model.{ext}"))).unwrap();
        assert_eq!(read("a"), read("b"), "{ext} differs between runs");
    }

    let model: EmbeddingModel<f32> = load_model(dir.join("a/model.txt"), Format::Text).unwrap();
    let corpus = Corpus::from_path(dir.join("syn/corpus_1.txt"), true).unwrap();
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for t in corpus.sentences().iter().flatten() {
        *counts.entry(t).or_default() += 1;
    }
    let mut want: Vec<&str> = counts.iter().filter(|(_, &c)| c >= 5).map(|(&t, _)| t).collect();
    want.sort();
    let mut got: Vec<&str> = model.tokens().iter().map(String::as_str).collect();
    got.sort();
    assert_eq!(got, want);
    let freqs = fs::read_to_string(dir.join("a/model.freq")).unwrap();
    for line in freqs.lines() {
        let (t, c) = line.split_once('\t').unwrap();
        assert_eq!(counts[t], c.parse::<u64>().unwrap());
    }
}

#[test]
fn update_expands_freezes_and_leaves_empty_input_alone() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_synth(dir);
    ok(dir, &args(&with(&["train", "--corpus", "syn/corpus_1.txt", "--out", "s/1"], &SMALL)));

    fs::write(dir.join("empty.txt"), "").unwrap();
    ok(dir, &args(&with(&["update", "--snapshot", "s/1", "--corpus", "empty.txt", "--out", "s/same"], &SMALL)));
    for ext in ["txt", "out.txt", "freq"] {
        assert_eq!(
            fs::read(dir.join(format!("s/1.{ext}"))).unwrap(),
            fs::read(dir.join(format!("s/same.{ext}"))).unwrap()
        );
    }

    let fresh: String = (0..15).map(|i| format!("newcomer loc0 w{i}\n")).collect();
    fs::write(dir.join("fresh.txt"), fresh).unwrap();
    ok(dir, &args(&with(&["update", "--snapshot", "s/1", "--corpus", "fresh.txt", "--out", "s/grown"], &SMALL)));
    ok(
        dir,
        &args(&with(
            &["update", "--snapshot", "s/1", "--corpus", "fresh.txt", "--out", "s/frozen", "--static-vocab"],
            &SMALL,
        )),
    );
    let load = |stem: &str| load_model::<f32>(dir.join(format!("s/{stem}.txt")), Format::Text).unwrap();
    let (before, grown, frozen) = (load("1"), load("grown"), load("frozen"));
    assert!(grown.contains("newcomer"));
    assert_eq!(&grown.tokens()[..before.len()], before.tokens());
    assert_eq!(frozen.tokens(), before.tokens());
}

fn write_model(path: &Path, rows: &[(&str, [f64; 2])]) {
    let mut m = EmbeddingModel::<f64>::new(2);
    for (t, v) in rows {
        m.push(*t, v, 1).unwrap();
    }
    relshift::w2v::save_model(&m, path, Format::Text).unwrap();
}

#[test]
fn project_solves_the_swap_fixture_by_hand() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // each source maps to its coordinates swapped: W = [[0, 1], [1, 0]], b = 0
    write_model(
        &dir.join("m.txt"),
        &[("a", [1.0, 0.0]), ("b", [0.0, 1.0]), ("c", [1.0, 1.0]), ("d", [2.0, 1.0]), ("e", [1.0, 2.0])],
    );
    fs::write(dir.join("gold.tsv"), "1\ta\tb\n1\tb\ta\n1\tc\tc\n1\td\te\n").unwrap();
    let out = ok(
        dir,
        &["project", "--snapshot", "m", "--gold", "gold.tsv", "--out", "p.txt", "--lambda", "0", "--format", "text"],
    );
    assert!(out.contains("on 4 pairs (0 skipped)"), "{out}");
    let p: ProjectionMatrix<f64> = ProjectionMatrix::load(dir.join("p.txt")).unwrap();
    let want = [0.0, 0.0, 0.0, 1.0, 1.0, 0.0];
    for (g, w) in p.coeffs().as_slice().iter().zip(want) {
        assert!((g - w).abs() < 1e-10, "{:?}", p.coeffs());
    }
    assert!(dir.join("p.txt.config").exists());

    // reverse direction equals forward on the swapped file
    fs::write(dir.join("swapped.tsv"), "1\tb\ta\n1\ta\tb\n1\tc\tc\n1\te\td\n").unwrap();
    ok(
        dir,
        &[
            "project",
            "--snapshot",
            "m",
            "--gold",
            "gold.tsv",
            "--out",
            "rev.txt",
            "--direction",
            "reverse",
            "--format",
            "text",
        ],
    );
    ok(dir, &["project", "--snapshot", "m", "--gold", "swapped.tsv", "--out", "fwd.txt", "--format", "text"]);
    assert_eq!(fs::read(dir.join("rev.txt")).unwrap(), fs::read(dir.join("fwd.txt")).unwrap());

    // skipped pairs are reported
    fs::write(dir.join("partial.tsv"), "1\ta\tb\n1\tb\ta\n1\tc\tc\n1\tzz\ta\n").unwrap();
    let out = ok(dir, &["project", "--snapshot", "m", "--gold", "partial.tsv", "--out", "q.txt", "--format", "text"]);
    assert!(out.contains("skipped\t1\tzz\ta\tsource-OOV"), "{out}");
}

#[test]
fn exit_codes_separate_failure_classes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_model(&dir.join("m.txt"), &[("a", [1.0, 0.0]), ("b", [0.0, 1.0])]);
    fs::write(dir.join("oov.tsv"), "1\tx\ty\n").unwrap();
    fs::write(dir.join("one.tsv"), "1\ta\tb\n").unwrap();
    let project = |gold: &str, extra: &[&str]| {
        let mut a = vec!["project", "--snapshot", "m", "--gold", gold, "--out", "p.txt", "--format", "text"];
        a.extend_from_slice(extra);
        code(dir, &a)
    };
    assert_eq!(project("one.tsv", &[]), 0);
    assert_eq!(project("oov.tsv", &[]), 4, "all-OOV gold is an empty design");
    assert_eq!(project("one.tsv", &["--lambda", "0"]), 4, "one pair at lambda 0 is rank deficient");
    assert_eq!(project("missing.tsv", &[]), 3);
    assert_eq!(project("one.tsv", &["--set", "nonsense=1"]), 2);
    assert_eq!(project("one.tsv", &["--direction", "sideways"]), 2);
    fs::write(dir.join("bad.cfg"), "lambda = 1\nwindow\n").unwrap();
    assert_eq!(project("one.tsv", &["--config", "bad.cfg"]), 2);
    assert_eq!(code(dir, &["train", "--out", "x"]), 2, "no corpus configured");
    assert_eq!(code(dir, &["train", "--corpus", "nope.txt", "--out", "x"]), 3);
}

#[test]
fn config_file_is_honored_and_resolved_config_reloads() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_synth(dir);
    fs::write(dir.join("run.cfg"), "# small model\ndim = 8\nmin_count = 5\ntable_size = 100000\nformat = text\n")
        .unwrap();
    ok(dir, &["train", "--config", "run.cfg", "--corpus", "syn/corpus_1.txt", "--out", "a/m", "--set", "epochs=2"]);
    let resolved = fs::read_to_string(dir.join("a/m.config")).unwrap();
    assert!(
        resolved.contains("dim=8\n") && resolved.contains("epochs=2\n") && resolved.contains("format=text\n"),
        "{resolved}"
    );
    let model: EmbeddingModel<f32> = load_model(dir.join("a/m.txt"), Format::Text).unwrap();
    assert_eq!(model.dim(), 8);

    // the resolved file alone reproduces the run, output path included
    fs::rename(dir.join("a/m.config"), dir.join("resolved.cfg")).unwrap();
    let first = fs::read(dir.join("a/m.txt")).unwrap();
    ok(dir, &["train", "--config", "resolved.cfg"]);
    assert_eq!(fs::read(dir.join("a/m.txt")).unwrap(), first);
}

#[test]
fn synth_follows_its_schedule_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_synth(dir);
    fs::rename(dir.join("syn"), dir.join("first")).unwrap();
    small_synth(dir);
    for f in ["corpus_1.txt", "corpus_2.txt", "corpus_3.txt", "gold.tsv"] {
        assert_eq!(fs::read(dir.join("first").join(f)).unwrap(), fs::read(dir.join("syn").join(f)).unwrap(), "{f}");
    }

    let schedule = staggered_schedule(10, 3, 5);
    let gold = parse_pairs(dir.join("syn/gold.tsv")).unwrap();
    assert_eq!(gold.len(), schedule.iter().map(Vec::len).sum::<usize>());
    for pair in 0..10 {
        let token = location_token(pair);
        let first_scheduled = schedule.iter().position(|y| y.contains(&pair)).unwrap() + 1;
        let first_seen = (1..=3)
            .find(|y| {
                fs::read_to_string(dir.join(format!("syn/corpus_{y}.txt")))
                    .unwrap()
                    .split_whitespace()
                    .any(|t| t == token)
            })
            .unwrap();
        assert_eq!(first_seen, first_scheduled, "{token}");
    }
}

#[test]
fn loo_on_noiseless_pairs_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(
        dir,
        &[
            "synth",
            "--linear",
            "--out",
            "lin",
            "--format",
            "text",
            "--set",
            "synth.dim=20",
            "--set",
            "synth.n_pairs=100",
        ],
    );
    let out = ok(
        dir,
        &[
            "evaluate",
            "--loo",
            "--snapshot",
            "lin/model",
            "--gold",
            "lin/pairs.tsv",
            "--out",
            "loo.tsv",
            "--format",
            "text",
            "--set",
            "lambda=0",
        ],
    );
    assert!(out.contains("LOO accuracy@1: 100.0"), "{out}");
    let table = fs::read_to_string(dir.join("loo.tsv")).unwrap();
    assert!(table.lines().nth(1).unwrap().starts_with("1\t100\t100\t100\t0\t0"), "{table}");
}

/// Builds every regime with train/update the way the library pipeline does
/// and returns the snapshot directory.
fn build_regimes(dir: &Path, common: &[&str], years: &[i32]) -> PathBuf {
    let snaps = dir.join("snaps");
    let corpus = |y: i32| format!("syn/corpus_{y}.txt");
    let run = |extra: Vec<String>| {
        let all: Vec<String> = extra.into_iter().chain(common.iter().map(|s| s.to_string())).collect();
        ok(dir, &args(&all));
    };
    for (i, &y) in years.iter().enumerate() {
        let year = y.to_string();
        run(vec![
            "train".into(),
            "--corpus".into(),
            corpus(y),
            "--out".into(),
            format!("snaps/separate/{y}"),
            "--year".into(),
            year.clone(),
        ]);
        let mut cum = vec!["train".to_string()];
        for &earlier in &years[..=i] {
            cum.extend(["--corpus".into(), corpus(earlier)]);
        }
        cum.extend(["--out".into(), format!("snaps/cumulative/{y}"), "--year".into(), year.clone()]);
        run(cum);
        for (regime, flag) in [("incr_static", Some("--static-vocab")), ("incr_dynamic", None)] {
            let mut cmd: Vec<String> = if i == 0 {
                vec!["train".into(), "--corpus".into(), corpus(y)]
            } else {
                vec![
                    "update".into(),
                    "--snapshot".into(),
                    format!("snaps/{regime}/{}", years[i - 1]),
                    "--corpus".into(),
                    corpus(y),
                ]
            };
            cmd.extend(["--out".into(), format!("snaps/{regime}/{y}")]);
            // the frozen model never expands, including its first year
            if let Some(f) = flag.filter(|_| i > 0) {
                cmd.push(f.into());
            }
            run(cmd);
        }
    }
    snaps
}

#[test]
fn benchmark_through_the_cli_orders_the_regimes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["synth", "--out", "syn"]);
    let common = ["--set", "dim=50", "--set", "min_count=5", "--set", "table_size=1000000", "--deterministic"];
    build_regimes(dir, &common, &[1, 2, 3, 4, 5]);
    let out = ok(
        dir,
        &[
            "evaluate",
            "--snapshots",
            "snaps",
            "--gold",
            "syn/gold.tsv",
            "--out",
            "report.jsonl",
            "--report-format",
            "jsonl",
        ],
    );
    assert!(out.starts_with("regime\t"), "{out}");
    assert!(out.contains("t-test incr_dynamic vs separate"), "{out}");

    let reports = load_json_lines(dir.join("report.jsonl")).unwrap();
    let at5: BTreeMap<Regime, f64> = reports
        .iter()
        .filter(|r| r.strategy == Strategy::Previous && r.scoring == Scoring::AllPairs)
        .map(|r| (r.regime, r.mean_at(5).unwrap()))
        .collect();
    let [sep, cum, st, dy] = Regime::ALL.map(|r| at5[&r]);
    assert!(sep + 5.0 <= cum && cum + 5.0 <= dy && st + 5.0 <= dy, "{at5:?}");

    // accuracy never falls as k grows, in any emitted row
    for r in &reports {
        for y in &r.years {
            assert!(y.score.accuracy.windows(2).all(|w| w[0] <= w[1]), "{:?}", y.score);
        }
    }
}

#[test]
fn tsv_rows_are_monotone_in_k() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_synth(dir);
    let common = ["--set", "dim=12", "--set", "min_count=5", "--set", "table_size=100000", "--deterministic"];
    build_regimes(dir, &common, &[1, 2, 3]);
    ok(
        dir,
        &[
            "evaluate",
            "--snapshots",
            "snaps",
            "--gold",
            "syn/gold.tsv",
            "--out",
            "report.tsv",
            "--set",
            "regime=incr_dynamic,separate",
        ],
    );
    let tsv = fs::read_to_string(dir.join("report.tsv")).unwrap();
    let mut series: BTreeMap<Vec<String>, Vec<(usize, f64)>> = BTreeMap::new();
    for line in tsv.lines().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        let key = f[..4].iter().map(|s| s.to_string()).collect();
        series.entry(key).or_default().push((f[4].parse().unwrap(), f[5].parse().unwrap()));
    }
    assert!(!series.is_empty());
    assert!(series.keys().all(|k| k[0] == "incr_dynamic" || k[0] == "separate"));
    for (key, mut points) in series {
        points.sort_by_key(|p| p.0);
        assert!(points.windows(2).all(|w| w[0].1 <= w[1].1), "{key:?}: {points:?}");
    }
}

#[test]
fn flat_snapshot_directories_need_one_regime() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_synth(dir);
    ok(dir, &args(&with(&["train", "--corpus", "syn/corpus_1.txt", "--out", "flat/1"], &SMALL)));
    ok(
        dir,
        &args(&with(&["update", "--snapshot", "flat/1", "--corpus", "syn/corpus_2.txt", "--out", "flat/2"], &SMALL)),
    );
    let eval = |extra: &[&str]| {
        let mut a =
            vec!["evaluate", "--snapshots", "flat", "--gold", "syn/gold.tsv", "--out", "r.tsv", "--format", "text"];
        a.extend_from_slice(extra);
        code(dir, &a)
    };
    assert_eq!(eval(&[]), 2);
    assert_eq!(eval(&["--set", "regime=incr_dynamic"]), 0);
    assert_eq!(eval(&["--set", "regime=incr_dynamic", "--set", "years=1,2,3"]), 3, "year 3 snapshot is missing");
}
